//! Banks of single-frequency reference series on the dataset timeline.
//!
//! A frequency `k / T` is evaluated with integer arithmetic on the phase
//! `(t * k) mod T`, so every column is bit-for-bit reproducible and exactly
//! periodic with period `T / gcd(k, T)`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{MfrsError, Result};
use crate::frequency::Frequency;
use crate::series;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Waveform {
    #[default]
    Sine,
    Sawtooth,
    Rectangle,
    Pulse,
}

impl Waveform {
    pub const ALL: [Waveform; 4] = [
        Waveform::Sine,
        Waveform::Sawtooth,
        Waveform::Rectangle,
        Waveform::Pulse,
    ];

    /// Value of this waveform at integer step `t` for frequency `freq`.
    pub fn eval(self, freq: Frequency, t: u64) -> f64 {
        let (k, period) = (freq.num as u128, freq.den as u128);
        let t = t as u128;
        let phase = (t * k) % period;
        match self {
            Waveform::Sine => {
                (2.0 * std::f64::consts::PI * phase as f64 / period as f64).sin()
            }
            Waveform::Sawtooth => phase as f64,
            Waveform::Rectangle => ((2 * k * t / period) % 2) as f64,
            Waveform::Pulse => {
                if phase == 0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for Waveform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Waveform::Sine => "sine",
            Waveform::Sawtooth => "sawtooth",
            Waveform::Rectangle => "rectangle",
            Waveform::Pulse => "pulse",
        })
    }
}

impl FromStr for Waveform {
    type Err = MfrsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sine" | "sin" => Ok(Waveform::Sine),
            "sawtooth" => Ok(Waveform::Sawtooth),
            "rectangle" | "square" => Ok(Waveform::Rectangle),
            "pulse" => Ok(Waveform::Pulse),
            other => Err(MfrsError::validation(format!("unknown waveform {other:?}"))),
        }
    }
}

/// `L x N` bank, one column per frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSeries {
    values: Array2<f64>,
    frequencies: Vec<Frequency>,
    waveform: Waveform,
}

impl ReferenceSeries {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// Number of reference series `N`.
    pub fn count(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn frequencies(&self) -> &[Frequency] {
        &self.frequencies
    }

    pub fn waveform(&self) -> Waveform {
        self.waveform
    }

    /// Least common multiple of the column cycle lengths: shifting a slice by
    /// this many steps leaves it unchanged.
    pub fn common_period(&self) -> u64 {
        self.frequencies
            .iter()
            .fold(1, |acc, f| crate::frequency::lcm(acc, f.cycle_len()))
    }

    /// Column headers `rs_<k>_over_<T>`.
    pub fn column_names(&self) -> Vec<String> {
        self.frequencies
            .iter()
            .map(|f| format!("rs_{}_over_{}", f.num, f.den))
            .collect()
    }

    pub fn manifest(&self) -> RsManifest {
        RsManifest {
            waveform: self.waveform,
            len: self.len(),
            frequencies: self
                .frequencies
                .iter()
                .map(|f| FrequencyEntry { num: f.num, den: f.den })
                .collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        series::write_matrix_csv(writer, &self.column_names(), self.values.view())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyEntry {
    pub num: u64,
    pub den: u64,
}

/// JSON sidecar describing a generated bank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RsManifest {
    pub waveform: Waveform,
    pub len: usize,
    pub frequencies: Vec<FrequencyEntry>,
}

impl RsManifest {
    /// Regenerates the bank this manifest describes.
    pub fn generate(&self) -> Result<ReferenceSeries> {
        let freqs = self
            .frequencies
            .iter()
            .map(|f| Frequency::new(f.num, f.den))
            .collect::<Result<Vec<_>>>()?;
        generate(&freqs, self.len, self.waveform)
    }
}

pub fn generate(frequencies: &[Frequency], len: usize, waveform: Waveform) -> Result<ReferenceSeries> {
    if len < 1 {
        return Err(MfrsError::validation("reference series length must be >= 1"));
    }
    if frequencies.is_empty() {
        return Err(MfrsError::validation("at least one frequency is required"));
    }
    for f in frequencies {
        Frequency::new(f.num, f.den)?;
    }
    let values = Array2::from_shape_fn((len, frequencies.len()), |(t, j)| {
        waveform.eval(frequencies[j], t as u64)
    });
    Ok(ReferenceSeries {
        values,
        frequencies: frequencies.to_vec(),
        waveform,
    })
}

/// Rows `[start, start + span)` of the bank as an `S x N` matrix.
pub fn slice_rs(rs: &ReferenceSeries, start: usize, span: usize) -> Result<Array2<f64>> {
    if start + span > rs.len() {
        return Err(MfrsError::range(
            start,
            format!("reference slice {start}+{span} exceeds bank length {}", rs.len()),
        ));
    }
    Ok(rs.values.slice(s![start..start + span, ..]).to_owned())
}

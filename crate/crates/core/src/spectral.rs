//! Magnitude spectrum of a channel and its conversion to the period domain.

use std::io::Write;

use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{MfrsError, Result};
use crate::frequency::Frequency;

/// `|DFT|` of a mean-removed channel at bins `1 ..= floor(L/2) - 1`.
///
/// DC and the Nyquist bin are excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumView {
    // index i holds bin i + 1
    magnitudes: Vec<f64>,
    len: usize,
}

impl SpectrumView {
    /// Length `L` of the source channel.
    pub fn source_len(&self) -> usize {
        self.len
    }

    /// Highest bin carried by the view, `floor(L/2) - 1`.
    pub fn max_bin(&self) -> usize {
        self.magnitudes.len()
    }

    /// Magnitude at bin `l`, `None` outside `1 ..= max_bin()`.
    pub fn at_bin(&self, bin: usize) -> Option<f64> {
        if bin == 0 {
            return None;
        }
        self.magnitudes.get(bin - 1).copied()
    }

    /// Magnitude at the bin nearest to `freq`; 0 when that bin is DC, Nyquist
    /// or beyond.
    pub fn at_frequency(&self, freq: Frequency) -> f64 {
        self.at_bin(freq.nearest_bin(self.len)).unwrap_or(0.0)
    }

    /// `(bin, magnitude)` pairs in bin order.
    pub fn bins(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.magnitudes.iter().enumerate().map(|(i, &m)| (i + 1, m))
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    /// Largest magnitude in the view (0 for an empty view).
    pub fn max_magnitude(&self) -> f64 {
        self.magnitudes.iter().copied().fold(0.0, f64::max)
    }

    /// Bin with the largest magnitude, ties toward the lower bin.
    pub fn argmax_bin(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (bin, m) in self.bins() {
            if best.is_none_or(|(_, b)| m > b) {
                best = Some((bin, m));
            }
        }
        best.map(|(bin, _)| bin)
    }

    /// Element-wise mean of several equal-length spectra.
    pub fn mean_of(spectra: &[SpectrumView]) -> Result<SpectrumView> {
        let first = spectra
            .first()
            .ok_or_else(|| MfrsError::validation("no spectra to average"))?;
        if spectra.iter().any(|s| s.len != first.len) {
            return Err(MfrsError::validation("spectra have different source lengths"));
        }
        let n = spectra.len() as f64;
        let magnitudes = (0..first.magnitudes.len())
            .map(|i| spectra.iter().map(|s| s.magnitudes[i]).sum::<f64>() / n)
            .collect();
        Ok(SpectrumView {
            magnitudes,
            len: first.len,
        })
    }

    /// Writes `bin,frequency,magnitude` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["bin", "frequency", "magnitude"])?;
        for (bin, m) in self.bins() {
            let f = bin as f64 / self.len as f64;
            wtr.write_record([bin.to_string(), f.to_string(), m.to_string()])?;
        }
        wtr.flush().map_err(|e| MfrsError::io("<spectrum csv>", e))?;
        Ok(())
    }
}

/// Spectrum re-indexed by integer period: `psi(T) = Phi(1/T)` for
/// `T = 1 ..= L_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodView {
    // index T holds psi(T); index 0 is unused and always 0
    psi: Vec<f64>,
}

impl PeriodView {
    /// Builds a view directly from `psi(1) ..= psi(L_p)`.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(MfrsError::validation("period view needs L_p >= 2"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(MfrsError::validation(
                "period view values must be finite and non-negative",
            ));
        }
        let mut psi = Vec::with_capacity(values.len() + 1);
        psi.push(0.0);
        psi.extend_from_slice(values);
        Ok(Self { psi })
    }

    /// The conversion length `L_p`.
    pub fn conversion_len(&self) -> usize {
        self.psi.len() - 1
    }

    /// `psi(period)`; `None` outside `1 ..= L_p`.
    pub fn at(&self, period: usize) -> Option<f64> {
        if period == 0 {
            return None;
        }
        self.psi.get(period).copied()
    }

    /// `psi(1) ..= psi(L_p)`.
    pub fn values(&self) -> &[f64] {
        &self.psi[1..]
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["period", "psi"])?;
        for (i, v) in self.values().iter().enumerate() {
            wtr.write_record([(i + 1).to_string(), v.to_string()])?;
        }
        wtr.flush().map_err(|e| MfrsError::io("<period csv>", e))?;
        Ok(())
    }
}

/// Unnormalized forward DFT magnitudes of the mean-removed channel at every
/// bin `0 .. L`.
pub fn full_magnitudes(channel: &[f64]) -> Result<Vec<f64>> {
    if let Some((t, v)) = channel.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(MfrsError::validation(format!(
            "non-finite value {v} at step {t}"
        )));
    }
    let len = channel.len();
    if len == 0 {
        return Ok(Vec::new());
    }
    let mean = channel.iter().sum::<f64>() / len as f64;
    let mut buf: Vec<Complex<f64>> = channel.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    Ok(buf.iter().map(|c| c.norm()).collect())
}

pub fn magnitude_spectrum(channel: &[f64]) -> Result<SpectrumView> {
    let len = channel.len();
    if len < 4 {
        return Err(MfrsError::validation(format!(
            "spectrum needs at least 4 samples, got {len}"
        )));
    }
    let full = full_magnitudes(channel)?;
    let max_bin = len / 2 - 1;
    Ok(SpectrumView {
        magnitudes: full[1..=max_bin].to_vec(),
        len,
    })
}

/// Default conversion length `min(5000, floor(L/4))`.
pub fn default_conversion_len(series_len: usize) -> usize {
    (series_len / 4).min(5000)
}

/// `psi(T)` reads the bin `round(L/T)`; periods whose bin falls outside the
/// view get 0, and `psi(1) = 0`.
pub fn to_period_domain(spec: &SpectrumView, conversion_len: usize) -> Result<PeriodView> {
    let len = spec.len;
    if conversion_len < 2 || 2 * conversion_len >= len {
        return Err(MfrsError::validation(format!(
            "conversion length {conversion_len} must satisfy 2 <= L_p < L/2 (L = {len})"
        )));
    }
    let mut psi = vec![0.0; conversion_len + 1];
    for (period, slot) in psi.iter_mut().enumerate().skip(2) {
        let freq = Frequency::of_period(period as u64)?;
        *slot = spec.at_frequency(freq);
    }
    Ok(PeriodView { psi })
}

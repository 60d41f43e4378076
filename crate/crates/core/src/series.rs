//! Multichannel time series, forecasting windows and chronological splits.
//!
//! Time indices are 0-based everywhere in this crate. Values are stored as an
//! `L x C` matrix (rows are time steps, columns are channels).

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{MfrsError, Result};

/// A `C`-channel, `L`-step real-valued series.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSeries {
    values: Array2<f64>,
    step_hint: Option<String>,
    channel_names: Option<Vec<String>>,
    timestamps: Option<Vec<String>>,
}

impl MultiSeries {
    /// Builds a series from an `L x C` matrix. Requires `L >= 2`, `C >= 1` and
    /// finite values.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (len, channels) = values.dim();
        if len < 2 {
            return Err(MfrsError::validation(format!(
                "series needs at least 2 time steps, got {len}"
            )));
        }
        if channels < 1 {
            return Err(MfrsError::validation("series needs at least 1 channel"));
        }
        if let Some(((t, c), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(MfrsError::validation(format!(
                "non-finite value {v} at step {t}, channel {c}"
            )));
        }
        Ok(Self {
            values,
            step_hint: None,
            channel_names: None,
            timestamps: None,
        })
    }

    /// Builds a series from per-channel columns of equal length.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let channels = columns.len();
        if channels == 0 {
            return Err(MfrsError::validation("series needs at least 1 channel"));
        }
        let len = columns[0].len();
        if let Some((c, col)) = columns.iter().enumerate().find(|(_, c)| c.len() != len) {
            return Err(MfrsError::validation(format!(
                "channel {c} has length {}, expected {len}",
                col.len()
            )));
        }
        let values = Array2::from_shape_fn((len, channels), |(t, c)| columns[c][t]);
        Self::new(values)
    }

    pub fn with_channel_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.channels() {
            return Err(MfrsError::validation(format!(
                "{} channel names for {} channels",
                names.len(),
                self.channels()
            )));
        }
        self.channel_names = Some(names);
        Ok(self)
    }

    pub fn with_step_hint(mut self, hint: impl Into<String>) -> Self {
        self.step_hint = Some(hint.into());
        self
    }

    pub fn with_timestamps(mut self, stamps: Vec<String>) -> Result<Self> {
        if stamps.len() != self.len() {
            return Err(MfrsError::validation(format!(
                "{} timestamps for {} steps",
                stamps.len(),
                self.len()
            )));
        }
        self.timestamps = Some(stamps);
        Ok(self)
    }

    /// Number of time steps `L`.
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    /// Always false; a valid series has at least two steps.
    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// Number of channels `C`.
    pub fn channels(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.values.column(c).to_vec()
    }

    pub fn step_hint(&self) -> Option<&str> {
        self.step_hint.as_deref()
    }

    pub fn channel_names(&self) -> Option<&[String]> {
        self.channel_names.as_deref()
    }

    pub fn timestamps(&self) -> Option<&[String]> {
        self.timestamps.as_deref()
    }

    /// Copies rows `[start, end)` into a new series, keeping metadata.
    pub fn rows(&self, start: usize, end: usize) -> Result<Self> {
        if end > self.len() || start >= end {
            return Err(MfrsError::range(
                end,
                format!("row range {start}..{end} of series with {} steps", self.len()),
            ));
        }
        let mut out = Self::new(self.values.slice(s![start..end, ..]).to_owned())?;
        out.step_hint = self.step_hint.clone();
        out.channel_names = self.channel_names.clone();
        out.timestamps = self.timestamps.as_ref().map(|ts| ts[start..end].to_vec());
        Ok(out)
    }

    /// Keeps only the listed channels, in the given order.
    pub fn select_channels(&self, channels: &[usize]) -> Result<Self> {
        if let Some(&bad) = channels.iter().find(|&&c| c >= self.channels()) {
            return Err(MfrsError::range(bad, format!("channel of {}", self.channels())));
        }
        let mut out = Self::new(self.values.select(Axis(1), channels))?;
        out.step_hint = self.step_hint.clone();
        out.timestamps = self.timestamps.clone();
        out.channel_names = self
            .channel_names
            .as_ref()
            .map(|names| channels.iter().map(|&c| names[c].clone()).collect());
        Ok(out)
    }

    /// Per-channel z-score using the given statistics (mean, std per channel).
    pub fn standardized(&self, stats: &[(f64, f64)]) -> Result<Self> {
        if stats.len() != self.channels() {
            return Err(MfrsError::validation("one (mean, std) pair per channel required"));
        }
        let mut values = self.values.clone();
        for (mut col, &(mean, std)) in values.axis_iter_mut(Axis(1)).zip(stats) {
            let scale = if std > 0.0 { std } else { 1.0 };
            col.mapv_inplace(|v| (v - mean) / scale);
        }
        let mut out = Self::new(values)?;
        out.step_hint = self.step_hint.clone();
        out.channel_names = self.channel_names.clone();
        out.timestamps = self.timestamps.clone();
        Ok(out)
    }

    /// Population mean and standard deviation of each channel.
    pub fn channel_stats(&self) -> Vec<(f64, f64)> {
        self.values
            .axis_iter(Axis(1))
            .map(|col| {
                let n = col.len() as f64;
                let mean = col.sum() / n;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                (mean, var.sqrt())
            })
            .collect()
    }
}

/// A forecasting window: `lookback` rows starting at `start`, followed by
/// `horizon` rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub lookback: usize,
    pub horizon: usize,
}

impl Window {
    pub fn new(start: usize, lookback: usize, horizon: usize) -> Self {
        Self {
            start,
            lookback,
            horizon,
        }
    }

    /// One past the last row touched by the window.
    pub fn end(&self) -> usize {
        self.start + self.lookback + self.horizon
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        if self.lookback < 1 {
            return Err(MfrsError::validation("window lookback must be >= 1"));
        }
        if self.horizon < 1 {
            return Err(MfrsError::validation("window horizon must be >= 1"));
        }
        if self.end() > len {
            return Err(MfrsError::range(
                self.start,
                format!(
                    "window start {} + lookback {} + horizon {} exceeds series length {len}",
                    self.start, self.lookback, self.horizon
                ),
            ));
        }
        Ok(())
    }
}

/// Number of stride-1 windows of `lookback + horizon` rows in a series of `len`.
pub fn window_count(len: usize, lookback: usize, horizon: usize) -> usize {
    (len + 1).saturating_sub(lookback + horizon)
}

/// Copies the lookback (`S x C`) and horizon (`T x C`) blocks of a window.
pub fn slice_window(series: &MultiSeries, w: Window) -> Result<(Array2<f64>, Array2<f64>)> {
    w.validate(series.len())?;
    let mid = w.start + w.lookback;
    let lookback = series.values.slice(s![w.start..mid, ..]).to_owned();
    let horizon = series.values.slice(s![mid..w.end(), ..]).to_owned();
    Ok((lookback, horizon))
}

/// Train / validation / test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.7,
            val_frac: 0.1,
            test_frac: 0.2,
        }
    }
}

impl SplitSpec {
    pub fn new(train_frac: f64, val_frac: f64, test_frac: f64) -> Result<Self> {
        let spec = Self {
            train_frac,
            val_frac,
            test_frac,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let fracs = [self.train_frac, self.val_frac, self.test_frac];
        if fracs.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(MfrsError::config(format!(
                "split fractions must lie in (0, 1), got {fracs:?}"
            )));
        }
        let sum: f64 = fracs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(MfrsError::config(format!(
                "split fractions must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }

    /// Segment lengths `(train, val, test)` for a series of `len` steps.
    /// Train and val get `floor(frac * len)`; the remainder goes to test.
    pub fn lengths(&self, len: usize) -> Result<(usize, usize, usize)> {
        self.validate()?;
        // Small epsilon so 0.7 * 100 lands on 70 rather than 69.999...
        let part = |f: f64| (f * len as f64 + 1e-9).floor() as usize;
        let train = part(self.train_frac);
        let val = part(self.val_frac);
        let test = len.saturating_sub(train + val);
        for (name, n) in [("train", train), ("val", val), ("test", test)] {
            if n < 2 {
                return Err(MfrsError::config(format!(
                    "{name} segment has length {n} (< 2) for series of {len} steps"
                )));
            }
        }
        Ok((train, val, test))
    }
}

/// Contiguous chronological segments together with their absolute row offsets.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: MultiSeries,
    pub val: MultiSeries,
    pub test: MultiSeries,
}

impl Split {
    pub fn train_origin(&self) -> usize {
        0
    }

    pub fn val_origin(&self) -> usize {
        self.train.len()
    }

    pub fn test_origin(&self) -> usize {
        self.train.len() + self.val.len()
    }
}

pub fn chronological_split(series: &MultiSeries, spec: SplitSpec) -> Result<Split> {
    let (train, val, _) = spec.lengths(series.len())?;
    Ok(Split {
        train: series.rows(0, train)?,
        val: series.rows(train, train + val)?,
        test: series.rows(train + val, series.len())?,
    })
}

fn looks_like_timestamp_header(name: &str) -> bool {
    matches!(
        name.trim().to_ascii_lowercase().as_str(),
        "date" | "time" | "timestamp" | "datetime" | "ds"
    )
}

/// Reads a series from CSV.
///
/// The first row is treated as a header when any of its cells fails to parse
/// as a number. A leading column is treated as a timestamp column when its
/// header looks like one (`date`, `time`, ...) or when its first data cell is
/// not numeric; timestamps are kept as metadata only.
pub fn read_csv<R: Read>(reader: R) -> Result<MultiSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let records: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    if records.is_empty() {
        return Err(MfrsError::validation("empty CSV input"));
    }

    let parses = |s: &str| s.parse::<f64>().is_ok();
    let first = &records[0];
    let has_header = first.iter().any(|cell| !parses(cell));
    let data_start = usize::from(has_header);
    let Some(first_data) = records.get(data_start) else {
        return Err(MfrsError::validation("CSV has a header but no data rows"));
    };

    let has_timestamp = first_data.len() > 1
        && (!parses(&first_data[0]) || (has_header && looks_like_timestamp_header(&first[0])));
    let value_start = usize::from(has_timestamp);
    let width = first_data.len();
    if width <= value_start {
        return Err(MfrsError::validation("CSV has no value columns"));
    }

    let mut columns = vec![Vec::with_capacity(records.len()); width - value_start];
    let mut stamps = Vec::new();
    for (row_idx, record) in records.iter().enumerate().skip(data_start) {
        if has_timestamp {
            stamps.push(record[0].to_string());
        }
        for (col_idx, cell) in record.iter().enumerate().skip(value_start) {
            let v: f64 = cell.parse().map_err(|_| MfrsError::Parse {
                row: row_idx + 1,
                column: col_idx + 1,
                detail: format!("cannot parse {cell:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(MfrsError::Parse {
                    row: row_idx + 1,
                    column: col_idx + 1,
                    detail: format!("non-finite value {cell:?}"),
                });
            }
            columns[col_idx - value_start].push(v);
        }
    }

    let mut series = MultiSeries::from_columns(&columns)?;
    if has_header {
        let names = first.iter().skip(value_start).map(str::to_string).collect();
        series = series.with_channel_names(names)?;
    }
    if has_timestamp {
        series = series.with_timestamps(stamps)?;
    }
    Ok(series)
}

pub fn read_csv_path(path: impl AsRef<Path>) -> Result<MultiSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| MfrsError::io(path, e))?;
    read_csv(std::io::BufReader::new(file))
}

/// Writes a matrix as CSV with the given header. Values use Rust's shortest
/// round-trip float formatting, so reading the file back is lossless.
pub fn write_matrix_csv<W: Write>(
    writer: W,
    header: &[String],
    values: ArrayView2<'_, f64>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(header)?;
    for row in values.rows() {
        wtr.write_record(row.iter().map(|v| v.to_string()))?;
    }
    wtr.flush().map_err(|e| MfrsError::io("<csv writer>", e))?;
    Ok(())
}

pub fn write_csv<W: Write>(writer: W, series: &MultiSeries) -> Result<()> {
    let header: Vec<String> = match series.channel_names() {
        Some(names) => names.to_vec(),
        None => (0..series.channels()).map(|c| format!("ch{c}")).collect(),
    };
    write_matrix_csv(writer, &header, series.values())
}

pub fn write_csv_path(path: impl AsRef<Path>, series: &MultiSeries) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| MfrsError::io(path, e))?;
    write_csv(std::io::BufWriter::new(file), series)
}

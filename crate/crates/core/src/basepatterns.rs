//! Primary and harmonic base-pattern extraction.
//!
//! Primary base-patterns are integer periods that dominate their neighbourhood
//! of the period-domain spectrum: a period `T` qualifies when `psi(T)` is the
//! largest value in `psi(1 ..= 2T)`, after which that whole prefix is zeroed.
//! Harmonic base-patterns are integer multiples `k / T` of the primaries,
//! ranked by their spectral magnitude relative to the first primary.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{MfrsError, Result};
use crate::frequency::Frequency;
use crate::series::MultiSeries;
use crate::spectral::{self, PeriodView, SpectrumView};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    /// Period-domain conversion length `L_p`; `None` picks
    /// `min(5000, floor(L/4))`.
    pub conversion_len: Option<usize>,
    /// Maximum number of harmonic base-patterns `Q`.
    pub max_harmonics: usize,
    /// Number of leading channels used for harmonic scoring; `None` = all.
    pub scoring_channels: Option<usize>,
    /// A period is only accepted as primary when its magnitude is at least
    /// this fraction of the largest value in the period view. `0.0` accepts
    /// every local winner, including round-off and noise peaks.
    pub min_relative_magnitude: f64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            conversion_len: None,
            max_harmonics: 8,
            scoring_channels: None,
            min_relative_magnitude: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub freq: Frequency,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BasePatternSet {
    primary_periods: Vec<u64>,
    harmonics: Vec<Harmonic>,
    manual_periods: Vec<u64>,
}

impl BasePatternSet {
    pub fn new(
        primary_periods: Vec<u64>,
        harmonics: Vec<Harmonic>,
        manual_periods: Vec<u64>,
    ) -> Result<Self> {
        let set = Self {
            primary_periods,
            harmonics,
            manual_periods,
        };
        set.validate()?;
        Ok(set)
    }

    /// A set consisting only of user-provided periods.
    pub fn from_manual(periods: &[u64]) -> Result<Self> {
        merge_manual(&Self::default(), periods)
    }

    fn validate(&self) -> Result<()> {
        if self.primary_periods.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MfrsError::validation("primary periods must be strictly increasing"));
        }
        if self.manual_periods.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MfrsError::validation("manual periods must be strictly increasing"));
        }
        if let Some(p) = self
            .primary_periods
            .iter()
            .chain(&self.manual_periods)
            .find(|&&p| p < 2)
        {
            return Err(MfrsError::validation(format!("period {p} is below 2")));
        }
        if self
            .harmonics
            .windows(2)
            .any(|w| w[0].score < w[1].score || (w[0].score == w[1].score && w[0].freq > w[1].freq))
        {
            return Err(MfrsError::validation("harmonics must be sorted by descending score"));
        }
        if let Some(h) = self.harmonics.iter().find(|h| h.score.is_nan() || h.score < 0.0 || h.freq.num < 2) {
            return Err(MfrsError::validation(format!(
                "invalid harmonic {} (score {})",
                h.freq, h.score
            )));
        }
        let mut all: Vec<Frequency> = self.entries().collect();
        let total = all.len();
        all.sort();
        all.dedup();
        if all.len() != total {
            return Err(MfrsError::validation("duplicate base-pattern frequencies"));
        }
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = Frequency> + '_ {
        self.primary_periods
            .iter()
            .chain(&self.manual_periods)
            .map(|&p| Frequency { num: 1, den: p })
            .chain(self.harmonics.iter().map(|h| h.freq))
    }

    pub fn primary_periods(&self) -> &[u64] {
        &self.primary_periods
    }

    pub fn harmonics(&self) -> &[Harmonic] {
        &self.harmonics
    }

    pub fn manual_periods(&self) -> &[u64] {
        &self.manual_periods
    }

    pub fn is_empty(&self) -> bool {
        self.primary_periods.is_empty() && self.harmonics.is_empty() && self.manual_periods.is_empty()
    }

    /// Longest integer period among primary and manual patterns.
    pub fn max_period(&self) -> Option<u64> {
        self.primary_periods.iter().chain(&self.manual_periods).copied().max()
    }

    /// JSON report with rationals as integer numerator / denominator.
    pub fn to_report(&self) -> BasePatternReport {
        BasePatternReport {
            primary: self.primary_periods.clone(),
            harmonics: self
                .harmonics
                .iter()
                .map(|h| HarmonicEntry {
                    num: h.freq.num,
                    den: h.freq.den,
                    score: h.score,
                })
                .collect(),
            manual: self.manual_periods.clone(),
        }
    }

    pub fn from_report(report: &BasePatternReport) -> Result<Self> {
        let harmonics = report
            .harmonics
            .iter()
            .map(|h| {
                Ok(Harmonic {
                    freq: Frequency::new(h.num, h.den)?,
                    score: h.score,
                })
            })
            .collect::<Result<_>>()?;
        Self::new(report.primary.clone(), harmonics, report.manual.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicEntry {
    pub num: u64,
    pub den: u64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasePatternReport {
    pub primary: Vec<u64>,
    pub harmonics: Vec<HarmonicEntry>,
    pub manual: Vec<u64>,
}

/// Primary base-pattern extraction. Returns the periods in ascending order.
///
/// For `T = 2 ..= L_p / 2`, `T` is taken when it is the first maximum of
/// `psi(1 ..= 2T)` on a working copy, which is then zeroed over that range.
pub fn extract_pbp(pv: &PeriodView) -> Vec<u64> {
    extract_pbp_with_residual(pv, 0.0).0
}

/// [`extract_pbp`] that ignores winners whose magnitude is below
/// `min_relative * max(psi)`.
pub fn extract_pbp_above(pv: &PeriodView, min_relative: f64) -> Vec<u64> {
    extract_pbp_with_residual(pv, min_relative).0
}

/// Extraction that also returns the exhausted working copy of psi.
pub fn extract_pbp_with_residual(pv: &PeriodView, min_relative: f64) -> (Vec<u64>, PeriodView) {
    // 1-based: psi[T] for T in 1..=L_p, psi[0] unused
    let mut psi = Vec::with_capacity(pv.conversion_len() + 1);
    psi.push(0.0);
    psi.extend_from_slice(pv.values());
    let lp = pv.conversion_len();
    let floor = min_relative * pv.values().iter().copied().fold(0.0, f64::max);

    let mut found = Vec::new();
    for period in 2..=lp / 2 {
        let window = &psi[1..=2 * period];
        if argmax_first(window) + 1 == period && psi[period] >= floor {
            found.push(period as u64);
            psi[1..=2 * period].iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let residual = PeriodView::from_values(&psi[1..]).expect("working copy keeps psi valid");
    (found, residual)
}

fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Integer periods that read the same spectrum bin are indistinguishable in
/// psi, and the extraction keeps the first (smallest) of them. This moves each
/// period to the one nearest the bin centre, `round(L / round(L / T))`.
pub fn snap_to_bins(periods: &[u64], len: usize) -> Vec<u64> {
    let mut out: Vec<u64> = periods
        .iter()
        .map(|&p| {
            let bin = (len as f64 / p as f64).round().max(1.0);
            ((len as f64 / bin).round() as u64).max(2)
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Harmonic counts `K` for each primary period, in ascending period order.
///
/// The first (shortest) period gets `floor(T_1 / 2)`; every later one gets
/// `floor(T_m / (2 T_{m-1}))`, which keeps its harmonics below half the
/// previous pattern's frequency.
pub fn harmonic_limits(primaries: &[u64]) -> Vec<u64> {
    primaries
        .iter()
        .enumerate()
        .map(|(m, &p)| if m == 0 { p / 2 } else { p / (2 * primaries[m - 1]) })
        .collect()
}

/// Every candidate harmonic `k / T_m`, `k = 2 ..= K_m`, deduplicated by value,
/// in enumeration order.
pub fn harmonic_candidates(primaries: &[u64]) -> Vec<Frequency> {
    let mut out: Vec<Frequency> = Vec::new();
    for (&period, &limit) in primaries.iter().zip(&harmonic_limits(primaries)) {
        for k in 2..=limit {
            let f = Frequency { num: k, den: period };
            if !out.contains(&f) {
                out.push(f);
            }
        }
    }
    out
}

/// Harmonic base-pattern extraction with cross-channel scoring.
///
/// Each candidate `k / T_m` accumulates `Phi_c(k / T_m) / Phi_c(1 / T_1)` over
/// the scoring channels; the top `Q` candidates by score are returned,
/// descending, ties toward the lower frequency.
pub fn extract_hbp(
    spectra: &[SpectrumView],
    primaries: &[u64],
    cfg: &ExtractionConfig,
) -> Result<Vec<Harmonic>> {
    if spectra.is_empty() {
        return Err(MfrsError::validation("harmonic extraction needs at least one spectrum"));
    }
    if primaries.is_empty() {
        return Err(MfrsError::validation(
            "harmonic extraction needs at least one primary period",
        ));
    }
    let mut sorted = primaries.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted[0] < 2 {
        return Err(MfrsError::validation("primary periods must be >= 2"));
    }

    let channels = cfg
        .scoring_channels
        .map_or(spectra.len(), |n| n.clamp(1, spectra.len()));
    let fundamental = Frequency { num: 1, den: sorted[0] };
    let primary_freqs: Vec<Frequency> = sorted.iter().map(|&p| Frequency { num: 1, den: p }).collect();

    let mut scored: Vec<Harmonic> = harmonic_candidates(&sorted)
        .into_iter()
        .filter(|f| !primary_freqs.contains(f))
        .map(|freq| Harmonic { freq, score: 0.0 })
        .collect();
    for spec in &spectra[..channels] {
        let norm = spec.at_frequency(fundamental);
        if norm <= 0.0 {
            continue;
        }
        for h in &mut scored {
            h.score += spec.at_frequency(h.freq) / norm;
        }
    }

    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.freq.cmp(&b.freq)));
    scored.truncate(cfg.max_harmonics);
    Ok(scored)
}

/// Adds user-chosen periods, skipping any whose frequency is already present.
pub fn merge_manual(set: &BasePatternSet, manual: &[u64]) -> Result<BasePatternSet> {
    if let Some(p) = manual.iter().find(|&&p| p < 2) {
        return Err(MfrsError::validation(format!(
            "manual period {p} is below 2"
        )));
    }
    let mut out = set.clone();
    for &p in manual {
        let f = Frequency { num: 1, den: p };
        if !out.entries().any(|e| e == f) {
            out.manual_periods.push(p);
        }
    }
    out.manual_periods.sort_unstable();
    out.validate()?;
    Ok(out)
}

/// All base-pattern frequencies `f_1 .. f_N`, ascending and deduplicated.
pub fn all_frequencies(set: &BasePatternSet) -> Result<Vec<Frequency>> {
    if set.is_empty() {
        return Err(MfrsError::validation("base-pattern set is empty"));
    }
    let mut by_value: BTreeMap<Frequency, ()> = BTreeMap::new();
    for f in set.entries() {
        by_value.entry(f).or_insert(());
    }
    Ok(by_value.into_keys().collect())
}

/// Base patterns of a whole series: primaries from the channel-averaged
/// spectrum, harmonics scored per channel.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub spectra: Vec<SpectrumView>,
    pub mean_spectrum: SpectrumView,
    pub period_view: PeriodView,
    pub patterns: BasePatternSet,
}

pub fn analyze(series: &MultiSeries, cfg: &ExtractionConfig) -> Result<Analysis> {
    let spectra = (0..series.channels())
        .map(|c| spectral::magnitude_spectrum(&series.channel(c)))
        .collect::<Result<Vec<_>>>()?;
    let mean_spectrum = SpectrumView::mean_of(&spectra)?;
    let lp = cfg
        .conversion_len
        .unwrap_or_else(|| spectral::default_conversion_len(series.len()));
    let period_view = spectral::to_period_domain(&mean_spectrum, lp)?;
    let primaries = snap_to_bins(
        &extract_pbp_above(&period_view, cfg.min_relative_magnitude),
        series.len(),
    );
    let harmonics = if primaries.is_empty() {
        Vec::new()
    } else {
        extract_hbp(&spectra, &primaries, cfg)?
    };
    let patterns = BasePatternSet::new(primaries, harmonics, Vec::new())?;
    Ok(Analysis {
        spectra,
        mean_spectrum,
        period_view,
        patterns,
    })
}

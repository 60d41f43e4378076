//! The end-to-end run: data, base patterns, reference series, training and
//! evaluation, driven by one JSON config.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basepatterns::{self, BasePatternReport, BasePatternSet, ExtractionConfig};
use crate::error::{MfrsError, Result};
use crate::evalharness::{
    channel_independence_test, evaluate, naive_baselines, BaselineResult, EvalReport, IndependenceReport,
    ModelForecaster,
};
use crate::forecaster::{train, Checkpoint, ForecastModel, ModelConfig, TrainConfig, TrainData, TrainReport};
use crate::refseries::{self, ReferenceSeries, Waveform};
use crate::series::{self, chronological_split, MultiSeries, SplitSpec};
use crate::synthbench::{generate_compose, ComposeData, ComposeManifest, ComposeSpec, Family, Noise, OptimalMetrics};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSource {
    pub family: Family,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub len: Option<usize>,
    #[serde(default)]
    pub channels: Option<usize>,
}

impl SynthSource {
    pub fn noise(&self) -> Result<Noise> {
        match (self.family.is_gaussian(), self.sigma, self.lambda) {
            (true, sigma, None) => Ok(Noise::Gaussian {
                mu: 0.0,
                sigma: sigma.unwrap_or(0.0),
            }),
            (false, None, Some(lambda)) => Ok(Noise::Poisson { lambda }),
            (true, _, Some(_)) => Err(MfrsError::validation(
                "gaussian families take sigma, not lambda",
            )),
            (false, _, _) => Err(MfrsError::validation(
                "poisson families need lambda (and no sigma)",
            )),
        }
    }

    pub fn spec(&self, seed: u64) -> Result<ComposeSpec> {
        let mut spec = ComposeSpec::family(self.family, self.noise()?, seed);
        if let Some(len) = self.len {
            spec = spec.with_len(len);
        }
        if let Some(c) = self.channels {
            spec = spec.with_channels(c);
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synth(SynthSource),
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    pub data: DataSource,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub split: SplitSpec,
    /// z-score every channel with training statistics before anything else.
    #[serde(default)]
    pub standardize: bool,
    #[serde(default)]
    pub extraction: ExtractionConfig,
    /// Extra periods merged into the extracted base patterns.
    #[serde(default)]
    pub manual_periods: Vec<u64>,
    /// For synthetic data, merge the generator's own periods as manual base
    /// patterns.
    #[serde(default = "yes")]
    pub use_known_periods: bool,
    #[serde(default)]
    pub waveform: Waveform,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn yes() -> bool {
    true
}

impl PipelineConfig {
    pub fn new(data: DataSource) -> Self {
        Self {
            version: CONFIG_VERSION,
            data,
            seed: 0,
            split: SplitSpec::default(),
            standardize: false,
            extraction: ExtractionConfig::default(),
            manual_periods: Vec::new(),
            use_known_periods: true,
            waveform: Waveform::Sine,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            out: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MfrsError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(MfrsError::config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if let DataSource::Csv { path } = &self.data {
            if !path.is_file() {
                return Err(MfrsError::config(format!("dataset {} does not exist", path.display())));
            }
        }
        self.split.validate()?;
        self.model.validate()?;
        self.train.validate()
    }
}

/// Loaded data plus, for synthetic sources, the generator and its optimum.
pub struct Dataset {
    pub series: MultiSeries,
    pub compose: Option<(ComposeSpec, ComposeData)>,
}

pub fn load_dataset(cfg: &PipelineConfig) -> Result<Dataset> {
    match &cfg.data {
        DataSource::Csv { path } => Ok(Dataset {
            series: series::read_csv_path(path)?,
            compose: None,
        }),
        DataSource::Synth(src) => {
            let spec = src.spec(cfg.seed)?;
            let data = generate_compose(&spec)?;
            Ok(Dataset {
                series: data.x.clone(),
                compose: Some((spec, data)),
            })
        }
    }
}

pub struct PipelineOutcome {
    pub patterns: BasePatternSet,
    pub rs: ReferenceSeries,
    pub model: ForecastModel,
    pub train_report: TrainReport,
    pub eval: EvalReport,
    pub baselines: Vec<BaselineResult>,
    pub independence: IndependenceReport,
    pub optimal: Option<OptimalMetrics>,
    pub compose: Option<(ComposeSpec, ComposeData)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineSummary {
    pub version: u32,
    pub seed: u64,
    pub base_patterns: BasePatternReport,
    pub rs_count: usize,
    pub train: TrainReport,
    pub eval: EvalReport,
    pub baselines: Vec<BaselineResult>,
    pub channel_independence: IndependenceReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub created_unix: Option<u64>,
}

/// Runs every stage in memory.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let dataset = load_dataset(cfg)?;
    let mut split = chronological_split(&dataset.series, cfg.split)?;
    if cfg.standardize {
        let stats = split.train.channel_stats();
        split.train = split.train.standardized(&stats)?;
        split.val = split.val.standardized(&stats)?;
        split.test = split.test.standardized(&stats)?;
    }

    let analysis = basepatterns::analyze(&split.train, &cfg.extraction)?;
    let mut manual = cfg.manual_periods.clone();
    if cfg.use_known_periods {
        if let Some((spec, _)) = &dataset.compose {
            manual.extend(&spec.periods);
        }
    }
    let patterns = basepatterns::merge_manual(&analysis.patterns, &manual)?;
    log::info!(
        "base patterns: primary {:?}, {} harmonics, manual {:?}",
        patterns.primary_periods(),
        patterns.harmonics().len(),
        patterns.manual_periods()
    );
    let freqs = basepatterns::all_frequencies(&patterns)?;
    let rs_len = dataset.series.len() + cfg.model.rs_lookback().saturating_sub(cfg.model.lookback);
    let rs = refseries::generate(&freqs, rs_len, cfg.waveform)?;

    let model_cfg = cfg.model.clone();
    let train_cfg = TrainConfig {
        seed: cfg.seed,
        ..cfg.train.clone()
    };
    let mut model = ForecastModel::new(model_cfg.clone(), cfg.seed)?;
    let train_report = train(
        &mut model,
        TrainData {
            train: &split.train,
            train_origin: split.train_origin(),
            val: Some((&split.val, split.val_origin())),
            rs: &rs,
        },
        &train_cfg,
    )?;

    let forecaster = ModelForecaster { model: &model, rs: &rs };
    let optimal = dataset
        .compose
        .as_ref()
        .map(|(spec, _)| crate::synthbench::optimal_metrics(&spec.noise))
        .transpose()?;
    let mut eval = evaluate(&forecaster, &split.test, split.test_origin())?;
    if let (Some(opt), false) = (optimal, cfg.standardize) {
        eval = eval.with_optimal(opt);
    }
    let baselines = naive_baselines(
        &split.test,
        split.test_origin(),
        model_cfg.lookback,
        model_cfg.horizon,
        patterns.max_period(),
    )?;
    let probe = split.test.values();
    let probe = probe.slice(ndarray::s![0..model_cfg.lookback, ..]);
    let independence = if probe.ncols() >= 2 {
        channel_independence_test(&forecaster, probe, split.test_origin())?
    } else {
        IndependenceReport {
            max_deviation: 0.0,
            passed: true,
        }
    };

    Ok(PipelineOutcome {
        patterns,
        rs,
        model,
        train_report,
        eval,
        baselines,
        independence,
        optimal,
        compose: dataset.compose,
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| MfrsError::io(path, e))
}

/// Writes every artifact of a finished run under `dir`.
pub fn write_artifacts(
    cfg: &PipelineConfig,
    outcome: &PipelineOutcome,
    dir: &Path,
    created_unix: Option<u64>,
) -> Result<PipelineSummary> {
    std::fs::create_dir_all(dir).map_err(|e| MfrsError::io(dir, e))?;
    if let Some((spec, data)) = &outcome.compose {
        let family = match &cfg.data {
            DataSource::Synth(s) => Some(s.family),
            DataSource::Csv { .. } => None,
        };
        series::write_csv_path(dir.join("X.csv"), &data.x)?;
        write_json(&dir.join("manifest.json"), &ComposeManifest::new(family, spec, data, created_unix)?)?;
    }
    write_json(&dir.join("config.json"), cfg)?;
    write_json(&dir.join("base_patterns.json"), &outcome.patterns.to_report())?;
    write_json(&dir.join("rs_manifest.json"), &outcome.rs.manifest())?;
    Checkpoint::from_model(&outcome.model).save(&dir.join("model.json"))?;
    write_json(&dir.join("train_report.json"), &outcome.train_report)?;
    write_json(&dir.join("eval.json"), &outcome.eval)?;
    let summary = PipelineSummary {
        version: CONFIG_VERSION,
        seed: cfg.seed,
        base_patterns: outcome.patterns.to_report(),
        rs_count: outcome.rs.count(),
        train: outcome.train_report.clone(),
        eval: outcome.eval.clone(),
        baselines: outcome.baselines.clone(),
        channel_independence: outcome.independence,
        created_unix,
    };
    write_json(&dir.join("pipeline_report.json"), &summary)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let cfg = PipelineConfig::from_json(
            r#"{"version":1,"data":{"synth":{"family":"compose1","sigma":1.0}},"seed":3,
                "model":{"lookback":48,"horizon":24},"train":{"epochs":2}}"#,
        )
        .unwrap();
        assert_eq!(cfg.model.lookback, 48);
        assert_eq!(cfg.model.hidden, ModelConfig::default().hidden);
        assert_eq!(cfg.train.epochs, 2);
        assert!(cfg.use_known_periods);
        assert!(PipelineConfig::from_json(r#"{"version":2,"data":{"synth":{"family":"compose1"}}}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"version":1,"data":{"csv":{"path":"/no/such.csv"}}}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"version":1,"data":{"synth":{"family":"compose1"}},"bogus":1}"#).is_err());
    }

    #[test]
    fn noise_selection() {
        let s = |family, sigma, lambda| SynthSource {
            family,
            sigma,
            lambda,
            len: None,
            channels: None,
        };
        assert!(s(Family::Compose1, Some(1.0), None).noise().is_ok());
        assert!(s(Family::Compose3, None, Some(2.0)).noise().is_ok());
        assert!(s(Family::Compose3, Some(1.0), None).noise().is_err());
        assert!(s(Family::Compose2, None, Some(1.0)).noise().is_err());
    }

    #[test]
    fn small_pipeline_runs_end_to_end() {
        let mut cfg = PipelineConfig::new(DataSource::Synth(SynthSource {
            family: Family::Compose1,
            sigma: Some(0.0),
            lambda: None,
            len: Some(2880),
            channels: Some(2),
        }));
        cfg.model = ModelConfig {
            lookback: 48,
            horizon: 24,
            hidden: 16,
            ..ModelConfig::default()
        };
        cfg.train = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let out = run_pipeline(&cfg).unwrap();
        assert!(out.independence.passed);
        assert!(out.eval.mse.is_finite());
        for p in [18, 24, 36, 72] {
            assert!(out.patterns.entries().any(|f| f.value() == 1.0 / p as f64), "{p}");
        }
        let dir = tempfile::tempdir().unwrap();
        write_artifacts(&cfg, &out, dir.path(), None).unwrap();
        for f in ["X.csv", "manifest.json", "model.json", "rs_manifest.json", "eval.json", "pipeline_report.json"] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
    }
}

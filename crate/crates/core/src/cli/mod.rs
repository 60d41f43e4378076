//! Command-line front end. Every subcommand writes fixed file names under
//! `--out`; the exit code is 0 on success, 1 for invalid input, 2 for
//! runtime or numeric failures and 64 for usage errors.

pub mod pipeline;

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use ndarray::s;

use crate::alignment;
use crate::basepatterns::{self, BasePatternReport, BasePatternSet, ExtractionConfig};
use crate::error::{MfrsError, Result};
use crate::evalharness::{evaluate, naive_baselines, plot_svg, ModelForecaster};
use crate::forecaster::{self, Checkpoint, ForecastModel, ModelConfig, OptimizerKind, TrainConfig, TrainData};
use crate::frequency::Frequency;
use crate::refseries::{self, RsManifest, Waveform};
use crate::series::{self, chronological_split, MultiSeries, SplitSpec};
use crate::synthbench::{generate_compose, ComposeManifest, Family};

use pipeline::{write_json, DataSource, PipelineConfig, SynthSource};

pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "mfrs", version, about = "Multi-frequency reference-series forecasting toolkit")]
struct Cli {
    /// Output directory for every artifact.
    #[arg(long, global = true, default_value = "mfrs-out")]
    out: PathBuf,
    /// Leave creation timestamps out of manifests.
    #[arg(long, global = true)]
    no_timestamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract primary and harmonic base patterns from a CSV series.
    Analyze(AnalyzeArgs),
    /// Generate a reference-series bank from base patterns or periods.
    RsGen(RsGenArgs),
    /// Generate a Compose synthetic dataset.
    Synth(SynthArgs),
    /// Find the time step of an observation window in the training data.
    Align(AlignArgs),
    /// Train a forecaster.
    Train(TrainArgs),
    /// Forecast from one observation window.
    Predict(PredictArgs),
    /// Evaluate a trained forecaster on the test split.
    Eval(EvalArgs),
    /// Run everything from a JSON config.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long, default_value_t = 0.7)]
    train_frac: f64,
    #[arg(long, default_value_t = 0.1)]
    val_frac: f64,
    #[arg(long, default_value_t = 0.2)]
    test_frac: f64,
}

impl SplitArgs {
    fn spec(&self) -> Result<SplitSpec> {
        SplitSpec::new(self.train_frac, self.val_frac, self.test_frac)
    }
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    input: PathBuf,
    /// Period-domain conversion length (default min(5000, L/4)).
    #[arg(long)]
    conversion_len: Option<usize>,
    #[arg(long, default_value_t = 8)]
    max_harmonics: usize,
    /// Use only the first N channels for harmonic scoring.
    #[arg(long)]
    scoring_channels: Option<usize>,
    /// Minimum primary magnitude relative to the strongest period.
    #[arg(long, default_value_t = 0.1)]
    min_relative: f64,
    /// Extra periods to add as manual base patterns.
    #[arg(long, value_delimiter = ',')]
    manual_periods: Vec<u64>,
    /// Also write spectrum.csv and period_view.csv.
    #[arg(long)]
    dump_spectrum: bool,
}

#[derive(Debug, Args)]
struct RsGenArgs {
    /// base_patterns.json from `analyze`.
    #[arg(long, conflicts_with = "periods", required_unless_present = "periods")]
    patterns: Option<PathBuf>,
    /// Periods to use directly, e.g. 24,168.
    #[arg(long, value_delimiter = ',')]
    periods: Vec<u64>,
    #[arg(long)]
    len: usize,
    #[arg(long, default_value = "sine")]
    waveform: Waveform,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    family: Family,
    #[arg(long, conflicts_with = "lambda")]
    sigma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    len: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
}

#[derive(Debug, Args)]
struct AlignArgs {
    /// Full dataset; its training split is searched.
    #[arg(long)]
    input: PathBuf,
    /// S x C observation window.
    #[arg(long)]
    observation: PathBuf,
    /// Largest base-pattern period; read from --patterns when omitted.
    #[arg(long)]
    max_period: Option<u64>,
    #[arg(long)]
    patterns: Option<PathBuf>,
    /// Channels used for scoring (default: all).
    #[arg(long, value_delimiter = ',')]
    channels: Vec<usize>,
    #[command(flatten)]
    split: SplitArgs,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long, default_value_t = 96)]
    lookback: usize,
    #[arg(long, default_value_t = 96)]
    horizon: usize,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 1)]
    blocks: usize,
    #[arg(long, default_value_t = 1)]
    heads: usize,
    /// Reference lookback P (default: same as --lookback).
    #[arg(long)]
    rs_lookback: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    input: PathBuf,
    /// base_patterns.json from `analyze`.
    #[arg(long, conflicts_with = "periods", required_unless_present = "periods")]
    patterns: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    periods: Vec<u64>,
    #[arg(long, default_value = "sine")]
    waveform: Waveform,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 5)]
    patience: usize,
    #[arg(long, default_value = "adam", value_parser = parse_optimizer)]
    optimizer: OptimizerKind,
    #[command(flatten)]
    split: SplitArgs,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// rs_manifest.json written by `train`.
    #[arg(long)]
    rs: PathBuf,
    #[arg(long)]
    observation: PathBuf,
    /// Time step of the observation's first row.
    #[arg(long, required_unless_present = "align_input")]
    xi: Option<usize>,
    /// Align against the training split of this dataset instead of --xi.
    #[arg(long, conflicts_with = "xi")]
    align_input: Option<PathBuf>,
    #[arg(long, requires = "align_input")]
    max_period: Option<u64>,
    #[command(flatten)]
    split: SplitArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    rs: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Synth manifest.json whose optimal metrics are attached.
    #[arg(long)]
    against_optimal: Option<PathBuf>,
    /// Seasonal-naive lag (usually the largest primary period).
    #[arg(long)]
    season: Option<u64>,
    /// SVG file name (under --out) plotting the first test window.
    #[arg(long)]
    plot: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    plot_channel: usize,
    #[command(flatten)]
    split: SplitArgs,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    waveform: Option<Waveform>,
}

fn parse_optimizer(s: &str) -> std::result::Result<OptimizerKind, String> {
    match s.to_ascii_lowercase().as_str() {
        "adam" => Ok(OptimizerKind::Adam),
        "sgd" => Ok(OptimizerKind::Sgd),
        other => Err(format!("unknown optimizer {other:?} (adam or sgd)")),
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    configure_threads();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Honors `MFRS_THREADS` for the global worker pool.
fn configure_threads() {
    if let Some(n) = std::env::var("MFRS_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            // a pool may already exist when running inside tests
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn timestamp(disabled: bool) -> Option<u64> {
    (!disabled).then(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    })
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| MfrsError::io(dir, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| MfrsError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_patterns(patterns: &Option<PathBuf>, periods: &[u64]) -> Result<BasePatternSet> {
    match patterns {
        Some(p) => BasePatternSet::from_report(&read_json::<BasePatternReport>(p)?),
        None => BasePatternSet::from_manual(periods),
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let out = cli.out.as_path();
    let stamp = timestamp(cli.no_timestamp);
    match cli.command {
        Command::Analyze(a) => analyze(a, out),
        Command::RsGen(a) => rs_gen(a, out),
        Command::Synth(a) => synth(a, out, stamp),
        Command::Align(a) => align(a, out),
        Command::Train(a) => train(a, out),
        Command::Predict(a) => predict(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Pipeline(a) => run_pipeline(a, out, stamp),
    }
}

fn analyze(a: AnalyzeArgs, out: &Path) -> Result<()> {
    let data = series::read_csv_path(&a.input)?;
    let cfg = ExtractionConfig {
        conversion_len: a.conversion_len,
        max_harmonics: a.max_harmonics,
        scoring_channels: a.scoring_channels,
        min_relative_magnitude: a.min_relative,
    };
    let analysis = basepatterns::analyze(&data, &cfg)?;
    let patterns = basepatterns::merge_manual(&analysis.patterns, &a.manual_periods)?;
    create_out(out)?;
    let report = patterns.to_report();
    write_json(&out.join("base_patterns.json"), &report)?;
    if a.dump_spectrum {
        let path = out.join("spectrum.csv");
        let f = File::create(&path).map_err(|e| MfrsError::io(&path, e))?;
        analysis.mean_spectrum.write_csv(BufWriter::new(f))?;
        let path = out.join("period_view.csv");
        let f = File::create(&path).map_err(|e| MfrsError::io(&path, e))?;
        analysis.period_view.write_csv(BufWriter::new(f))?;
    }
    print_json(&report)
}

fn rs_gen(a: RsGenArgs, out: &Path) -> Result<()> {
    let patterns = load_patterns(&a.patterns, &a.periods)?;
    let freqs = basepatterns::all_frequencies(&patterns)?;
    let rs = refseries::generate(&freqs, a.len, a.waveform)?;
    create_out(out)?;
    let path = out.join("rs.csv");
    let f = File::create(&path).map_err(|e| MfrsError::io(&path, e))?;
    rs.write_csv(BufWriter::new(f))?;
    write_json(&out.join("rs_manifest.json"), &rs.manifest())?;
    print_json(&rs.manifest())
}

fn synth(a: SynthArgs, out: &Path, stamp: Option<u64>) -> Result<()> {
    let src = SynthSource {
        family: a.family,
        sigma: a.sigma,
        lambda: a.lambda,
        len: a.len,
        channels: a.channels,
    };
    let spec = src.spec(a.seed)?;
    let data = generate_compose(&spec)?;
    create_out(out)?;
    series::write_csv_path(out.join("X.csv"), &data.x)?;
    series::write_csv_path(out.join("Z.csv"), &data.z)?;
    series::write_csv_path(out.join("U.csv"), &data.u)?;
    let manifest = ComposeManifest::new(Some(a.family), &spec, &data, stamp)?;
    write_json(&out.join("manifest.json"), &manifest)?;
    print_json(&manifest.optimal)
}

#[derive(serde::Serialize)]
struct AlignReport {
    xi: usize,
    absolute_xi: usize,
    score: f64,
    channels_used: Vec<usize>,
    scores: Vec<f64>,
}

fn resolve_max_period(max_period: Option<u64>, patterns: &Option<PathBuf>) -> Result<usize> {
    if let Some(m) = max_period {
        return Ok(m as usize);
    }
    let path = patterns
        .as_ref()
        .ok_or_else(|| MfrsError::validation("need --max-period or --patterns"))?;
    let set = BasePatternSet::from_report(&read_json::<BasePatternReport>(path)?)?;
    set.max_period()
        .map(|p| p as usize)
        .ok_or_else(|| MfrsError::validation("base-pattern file has no periods"))
}

fn align_observation(
    observation: &MultiSeries,
    input: &Path,
    split: SplitSpec,
    max_period: usize,
    channels: &[usize],
) -> Result<AlignReport> {
    let data = series::read_csv_path(input)?;
    let split = chronological_split(&data, split)?;
    let channels: Vec<usize> = if channels.is_empty() {
        (0..observation.channels()).collect()
    } else {
        channels.to_vec()
    };
    let (result, absolute) =
        alignment::align_to_training(observation.values(), &split.train, max_period, &channels)?;
    Ok(AlignReport {
        xi: result.xi,
        absolute_xi: split.train_origin() + absolute,
        score: result.score,
        channels_used: result.channels_used,
        scores: result.scores,
    })
}

fn align(a: AlignArgs, out: &Path) -> Result<()> {
    let obs = series::read_csv_path(&a.observation)?;
    let max_period = resolve_max_period(a.max_period, &a.patterns)?;
    let report = align_observation(&obs, &a.input, a.split.spec()?, max_period, &a.channels)?;
    create_out(out)?;
    write_json(&out.join("alignment.json"), &report)?;
    println!(
        "{}",
        serde_json::json!({"xi": report.xi, "absolute_xi": report.absolute_xi, "score": report.score})
    );
    Ok(())
}

fn train(a: TrainArgs, out: &Path) -> Result<()> {
    let data = series::read_csv_path(&a.input)?;
    let split = chronological_split(&data, a.split.spec()?)?;
    let patterns = load_patterns(&a.patterns, &a.periods)?;
    let freqs: Vec<Frequency> = basepatterns::all_frequencies(&patterns)?;
    let model_cfg = ModelConfig {
        lookback: a.model.lookback,
        horizon: a.model.horizon,
        hidden: a.model.hidden,
        blocks: a.model.blocks,
        heads: a.model.heads,
        rs_lookback: a.model.rs_lookback,
        ..ModelConfig::default()
    };
    model_cfg.validate()?;
    let rs_len = data.len() + model_cfg.rs_lookback().saturating_sub(model_cfg.lookback);
    let rs = refseries::generate(&freqs, rs_len, a.waveform)?;
    let train_cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        learning_rate: a.lr,
        seed: a.seed,
        optimizer: a.optimizer,
        patience: a.patience,
        max_windows_per_epoch: None,
    };
    let mut model = ForecastModel::new(model_cfg, a.seed)?;
    let report = forecaster::train(
        &mut model,
        TrainData {
            train: &split.train,
            train_origin: split.train_origin(),
            val: Some((&split.val, split.val_origin())),
            rs: &rs,
        },
        &train_cfg,
    )?;
    create_out(out)?;
    Checkpoint::from_model(&model).save(&out.join("model.json"))?;
    write_json(&out.join("rs_manifest.json"), &rs.manifest())?;
    write_json(&out.join("base_patterns.json"), &patterns.to_report())?;
    write_json(&out.join("train_report.json"), &report)?;
    print_json(&report)
}

fn load_model(model: &Path, rs: &Path) -> Result<(ForecastModel, refseries::ReferenceSeries)> {
    let model = Checkpoint::load(model)?.to_model()?;
    let rs = read_json::<RsManifest>(rs)?.generate()?;
    Ok((model, rs))
}

fn predict(a: PredictArgs, out: &Path) -> Result<()> {
    let (model, rs) = load_model(&a.model, &a.rs)?;
    let obs = series::read_csv_path(&a.observation)?;
    let xi = match (a.xi, &a.align_input) {
        (Some(xi), _) => xi,
        (None, Some(input)) => {
            let max_period = match a.max_period {
                Some(m) => m as usize,
                None => rs.frequencies().iter().map(|f| f.cycle_len()).max().unwrap_or(1) as usize,
            };
            let report = align_observation(&obs, input, a.split.spec()?, max_period, &[])?;
            log::info!("aligned observation at time step {}", report.absolute_xi);
            report.absolute_xi
        }
        (None, None) => return Err(MfrsError::validation("need --xi or --align-input")),
    };
    let pred = forecaster::predict(&model, obs.values(), &rs, xi)?;
    create_out(out)?;
    let header: Vec<String> = match obs.channel_names() {
        Some(names) => names.to_vec(),
        None => (0..pred.ncols()).map(|c| format!("ch{c}")).collect(),
    };
    let path = out.join("prediction.csv");
    let f = File::create(&path).map_err(|e| MfrsError::io(&path, e))?;
    series::write_matrix_csv(BufWriter::new(f), &header, pred.view())?;
    println!("{}", serde_json::json!({"xi": xi, "horizon": pred.nrows(), "channels": pred.ncols()}));
    Ok(())
}

#[derive(serde::Serialize)]
struct EvalOutput {
    #[serde(flatten)]
    report: crate::evalharness::EvalReport,
    baselines: Vec<crate::evalharness::BaselineResult>,
}

fn eval(a: EvalArgs, out: &Path) -> Result<()> {
    let (model, rs) = load_model(&a.model, &a.rs)?;
    let data = series::read_csv_path(&a.input)?;
    let split = chronological_split(&data, a.split.spec()?)?;
    let f = ModelForecaster { model: &model, rs: &rs };
    let mut report = evaluate(&f, &split.test, split.test_origin())?;
    if let Some(path) = &a.against_optimal {
        let manifest: ComposeManifest = read_json(path)?;
        report = report.with_optimal(manifest.optimal);
    }
    let cfg = model.config();
    let baselines = naive_baselines(&split.test, split.test_origin(), cfg.lookback, cfg.horizon, a.season)?;
    create_out(out)?;
    if let Some(name) = &a.plot {
        let c = a.plot_channel;
        if c >= split.test.channels() {
            return Err(MfrsError::range(c, format!("plot channel of {}", split.test.channels())));
        }
        let v = split.test.values();
        let (s_len, t_len) = (cfg.lookback, cfg.horizon);
        let pred = forecaster::predict(&model, v.slice(s![0..s_len, ..]), &rs, split.test_origin())?;
        let svg = plot_svg(
            &v.slice(s![0..s_len, c]).to_vec(),
            &v.slice(s![s_len..s_len + t_len, c]).to_vec(),
            &pred.column(c).to_vec(),
            &format!("channel {c}: lookback, target and forecast"),
        );
        let file = name.file_name().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("plot.svg"));
        let path = out.join(file);
        std::fs::write(&path, svg).map_err(|e| MfrsError::io(&path, e))?;
    }
    let output = EvalOutput { report, baselines };
    write_json(&out.join("eval.json"), &output)?;
    print_json(&output)
}

fn run_pipeline(a: PipelineArgs, out: &Path, stamp: Option<u64>) -> Result<()> {
    let mut cfg = PipelineConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = a.epochs {
        cfg.train.epochs = epochs;
    }
    if let Some(w) = a.waveform {
        cfg.waveform = w;
    }
    cfg.validate()?;
    let dir = cfg.out.clone().unwrap_or_else(|| out.to_path_buf());
    if let DataSource::Csv { path } = &cfg.data {
        log::info!("pipeline on {}", path.display());
    }
    let outcome = pipeline::run_pipeline(&cfg)?;
    let summary = pipeline::write_artifacts(&cfg, &outcome, &dir, stamp)?;
    print_json(&serde_json::json!({
        "mse": summary.eval.mse,
        "mae": summary.eval.mae,
        "gap_ratio": summary.eval.gap_ratio,
        "windows": summary.eval.windows,
        "best_epoch": summary.train.best_epoch,
        "out": dir,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> i32 {
        run(std::iter::once("mfrs").chain(args.iter().copied()))
    }

    #[test]
    fn usage_errors_exit_64() {
        assert_eq!(run_args(&["synth", "--family", "compose1", "--bogus"]), EXIT_USAGE);
        assert_eq!(run_args(&["frobnicate"]), EXIT_USAGE);
        assert_eq!(run_args(&["--help"]), 0);
    }

    #[test]
    fn validation_errors_exit_1() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(run_args(&["synth", "--family", "compose3", "--out", out]), 1);
        assert_eq!(run_args(&["synth", "--family", "compose1", "--sigma=-1", "--out", out]), 1);
    }

    #[test]
    fn missing_input_exits_2() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(run_args(&["analyze", "--input", "/no/such/file.csv", "--out", out]), 2);
    }
}

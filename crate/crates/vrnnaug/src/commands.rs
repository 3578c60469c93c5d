//! The four pipeline commands: generate, train, forecast and evaluate.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use vrnnaug_core::data::{chrono_split, shingle, InputMode, LinearGaussianSystem, Splits, Standardizer, TimeSeries};
use vrnnaug_core::metrics::{evaluate_run, MetricsReport, QuantileSummary};
use vrnnaug_core::model::{ForecastSamples, StartState, Vrnnaug};
use vrnnaug_core::optim::Termination;
use vrnnaug_core::rng::derive_seed;
use vrnnaug_core::train::{self, EpochRecord, TrainData, TrainObserver, TrainReport, TrainState};

use crate::artifacts::*;
use crate::config::{DataSource, EvalConfig, RunConfig};
use crate::csvio::{load_csv, load_motorcycle, read_columns, write_series};
use crate::error::{CliError, Result};

const INIT_TAG: u64 = 0x1417;
const FORECAST_TAG: u64 = 0xfc57;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub len: usize,
    pub input: InputMode,
}

/// Written next to a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub system: LinearGaussianSystem,
    pub initial_state: [f64; 2],
    pub seed: u64,
    pub segments: Vec<Segment>,
    pub rows: usize,
}

/// Simulates the linear-Gaussian system over consecutive input segments and
/// writes `out` (columns `u`, `y`) plus a provenance file with the same stem
/// and a `.json` extension.
pub fn generate(segments: &[Segment], seed: u64, out: &Path) -> Result<TimeSeries> {
    if segments.is_empty() || segments.iter().any(|s| s.len == 0) {
        return Err(CliError::Argument("every segment needs at least one step".into()));
    }
    let system = LinearGaussianSystem::default();
    let parts: Vec<(usize, InputMode)> = segments.iter().map(|s| (s.len, s.input)).collect();
    let series = system
        .simulate_segments(&parts, seed)
        .with_names(vec!["u".into()], vec!["y".into()])?;
    write_series(out, &series)?;
    let prov = Provenance {
        system,
        initial_state: [0.0; 2],
        seed,
        segments: segments.to_vec(),
        rows: series.len(),
    };
    write_json(&out.with_extension("json"), &prov)?;
    Ok(series)
}

pub fn load_source(src: &DataSource) -> Result<TimeSeries> {
    match src {
        DataSource::Csv {
            path,
            u_columns,
            y_columns,
        } => load_csv(path, u_columns, y_columns),
        DataSource::Motorcycle { path } => load_motorcycle(path),
    }
}

fn split(series: &TimeSeries, cfg: &RunConfig) -> Result<Splits> {
    let w = cfg.window;
    match cfg.data.split_lengths {
        Some([a, b]) => {
            let t = series.len();
            if a < w || b < w || a + b > t {
                return Err(CliError::Data(format!(
                    "split lengths {a}/{b} need at least {w} rows each within {t} rows"
                )));
            }
            Ok(Splits {
                train: series.slice(0, a, "train"),
                valid: series.slice(a, a + b, "valid"),
                test: series.slice(a + b, t, "test"),
            })
        }
        None => Ok(chrono_split(series, cfg.data.split, w)?),
    }
}

/// In-memory result of a training run.
#[derive(Debug)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub metrics: Option<MetricsReport>,
    pub run_dir: PathBuf,
}

struct RunObserver<'a> {
    start: Instant,
    verbose: bool,
    state_path: PathBuf,
    failure: &'a mut Option<CliError>,
}

impl TrainObserver for RunObserver<'_> {
    fn now(&mut self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn on_epoch(&mut self, r: &EpochRecord, state: &TrainState) -> bool {
        if self.verbose {
            eprintln!(
                "epoch {:>3}  train {:>10.4}  valid {:>10.4}  lr {:.2e}  {:.1}s",
                r.epoch, r.train_loss, r.valid_loss, r.lr, r.seconds
            );
        }
        match write_json(&self.state_path, state) {
            Ok(()) => true,
            Err(e) => {
                *self.failure = Some(e);
                false
            }
        }
    }
}

/// Prepared data for a run: splits in original units and standardized.
pub struct RunData {
    pub raw: Splits,
    pub standardizer: Standardizer,
    pub std: Splits,
}

pub fn prepare_data(cfg: &RunConfig) -> Result<RunData> {
    let source = cfg
        .data
        .source
        .as_ref()
        .ok_or_else(|| CliError::Argument("no dataset given".into()))?;
    let series = load_source(source)?;
    let raw = split(&series, cfg)?;
    let standardizer = Standardizer::fit(&raw.train).map_err(|e| CliError::from(e).context("training split"))?;
    let std = Splits {
        train: standardizer.apply(&raw.train)?,
        valid: standardizer.apply(&raw.valid)?,
        test: standardizer.apply(&raw.test)?,
    };
    Ok(RunData {
        raw,
        standardizer,
        std,
    })
}

/// Trains a model as configured, writing every artifact into
/// `cfg.output_dir`. With `resume`, training continues from the state saved
/// in that directory and epoch numbering carries on.
pub fn train(cfg: &RunConfig, resume: bool, verbose: bool) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    cfg.train.seed = cfg.seed;
    let dir = cfg.output_dir.clone();
    let data = prepare_data(&cfg)?;

    let mut model_cfg = cfg.model.clone();
    model_cfg.d_u = data.std.train.d_u;
    model_cfg.d_y = data.std.train.d_y;
    cfg.model = model_cfg.clone();
    let mut model = Vrnnaug::new(model_cfg, derive_seed(cfg.seed, &[INIT_TAG]))?;

    let train_chunks = shingle(&data.std.train, cfg.window)?;
    let valid_chunks = shingle(&data.std.valid, cfg.window)?;
    let td = TrainData {
        train: &data.std.train,
        train_chunks: &train_chunks,
        valid: &data.std.valid,
        valid_chunks: &valid_chunks,
    };

    let state_path = dir.join(STATE_FILE);
    let mut state = if resume {
        let mut s: TrainState = read_json(&state_path)?;
        if s.finished == Some(Termination::MaxEpochs) && s.epochs_done() < cfg.train.schedule.max_epochs {
            s.finished = None;
            s.report.termination = None;
        }
        s
    } else {
        TrainState::new(&model, &cfg.train)
    };
    std::fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
    write_json(&dir.join(CONFIG_FILE), &cfg)?;

    let mut failure = None;
    let mut observer = RunObserver {
        start: Instant::now(),
        verbose,
        state_path,
        failure: &mut failure,
    };
    train::train(&mut model, &td, &cfg.train, &mut state, &mut observer)
        .map_err(|e| CliError::from(e).context("training"))?;
    if let Some(e) = failure {
        return Err(e);
    }
    let report = state.report.clone();
    write_json(&dir.join(REPORT_FILE), &report)?;
    write_losses(&dir.join(LOSSES_FILE), &report)?;
    let ckpt = Checkpoint::new(
        &model,
        data.standardizer.clone(),
        data.raw.train.u_names.clone(),
        data.raw.train.y_names.clone(),
        &report,
    );
    write_json(&dir.join(CHECKPOINT_FILE), &ckpt)?;

    let metrics = if data.raw.test.is_empty() {
        None
    } else {
        Some(forecast_test(&cfg, &model, &data, &dir)?)
    };
    Ok(TrainOutcome {
        report,
        metrics,
        run_dir: dir,
    })
}

fn forecast_test(cfg: &RunConfig, model: &Vrnnaug, data: &RunData, dir: &Path) -> Result<MetricsReport> {
    let test = &data.std.test;
    let horizon = cfg.forecast.horizon.unwrap_or(test.len());
    if horizon > test.len() {
        return Err(CliError::Argument(format!(
            "forecast horizon {horizon} exceeds the {}-row test segment",
            test.len()
        )));
    }
    let history = data.std.train.concat(&data.std.valid)?;
    let warmup = cfg.forecast.warmup.min(history.len());
    let h = history.slice(history.len() - warmup, history.len(), "history");
    let start = if warmup == 0 {
        StartState::Cold
    } else {
        StartState::Warm { u: &h.u, y: &h.y }
    };
    let seed = derive_seed(cfg.seed, &[FORECAST_TAG]);
    let k = model.config().forecast_samples;
    let samples = model
        .forecast(&test.u[..horizon * test.d_u], horizon, k, seed, start)
        .map_err(|e| CliError::from(e).context("forecasting the test segment"))?;
    let samples = samples.map_dims(|d, v| data.standardizer.invert_y(d, v));
    let names = data.raw.test.y_names.clone();
    write_forecast(dir, &samples, &names, seed, warmup, &cfg.forecast.quantiles)?;

    let truth = data.raw.test.slice(0, horizon, "test");
    write_series(&dir.join(TEST_FILE), &truth)?;
    let file: ForecastFile = read_json(&dir.join(FORECAST_FILE))?;
    evaluate_samples(&file, &truth.y, &cfg.eval, dir)
}

fn write_forecast(
    dir: &Path,
    samples: &ForecastSamples,
    y_names: &[String],
    seed: u64,
    warmup: usize,
    levels: &[f64],
) -> Result<()> {
    write_json(
        &dir.join(FORECAST_FILE),
        &ForecastFile::new(samples, y_names.to_vec(), seed, warmup),
    )?;
    if samples.k() >= 2 {
        let q = QuantileSummary::new(samples, levels)?;
        write_quantiles(&dir.join(QUANTILES_FILE), &q, y_names)?;
    }
    Ok(())
}

/// Options for a stand-alone forecast.
#[derive(Clone, Debug)]
pub struct ForecastRequest {
    pub checkpoint: PathBuf,
    /// Future inputs in original units, columns named as at training.
    pub inputs: PathBuf,
    /// Optional past inputs and outputs to warm up the state on.
    pub history: Option<PathBuf>,
    /// Defaults to every row of `inputs`.
    pub horizon: Option<usize>,
    /// Defaults to the checkpoint's sample count.
    pub samples: Option<usize>,
    pub seed: u64,
    pub quantiles: Vec<f64>,
    pub out_dir: PathBuf,
}

pub fn forecast(req: &ForecastRequest) -> Result<ForecastSamples> {
    let ckpt = Checkpoint::load(&req.checkpoint)?;
    let model = ckpt.model()?;
    let st = &ckpt.standardizer;
    let inputs = read_columns(&req.inputs, &[&ckpt.u_names])?;
    let horizon = req.horizon.unwrap_or(inputs.rows);
    if horizon == 0 {
        return Err(CliError::Argument("forecast horizon must be at least 1".into()));
    }
    if horizon > inputs.rows {
        return Err(CliError::Data(format!(
            "{}: horizon {horizon} needs {horizon} input rows, the file has {} ({} short)",
            req.inputs.display(),
            inputs.rows,
            horizon - inputs.rows
        )));
    }
    let u = st.apply_u(&inputs.groups[0][..horizon * ckpt.u_names.len()]);

    let history = match &req.history {
        Some(path) => {
            let s = load_csv(path, &ckpt.u_names, &ckpt.y_names)?;
            Some(st.apply(&s)?)
        }
        None => None,
    };
    let start = history
        .as_ref()
        .map_or(StartState::Cold, |h| StartState::Warm { u: &h.u, y: &h.y });
    let k = req.samples.unwrap_or(ckpt.model.forecast_samples);
    let samples = model
        .forecast(&u, horizon, k, req.seed, start)?
        .map_dims(|d, v| st.invert_y(d, v));
    let warmup = history.as_ref().map_or(0, TimeSeries::len);
    write_forecast(&req.out_dir, &samples, &ckpt.y_names, req.seed, warmup, &req.quantiles)?;
    Ok(samples)
}

fn evaluate_samples(file: &ForecastFile, truth: &[f64], eval: &EvalConfig, dir: &Path) -> Result<MetricsReport> {
    let samples = file.to_samples()?;
    let report = evaluate_run(&samples, truth, &eval.levels, &eval.alphas, eval.per_dim_ecp)?;
    write_json(
        &dir.join(METRICS_FILE),
        &MetricsFile {
            y_names: file.y_names.clone(),
            report: report.clone(),
        },
    )?;
    write_ecp(&dir.join(ECP_FILE), &report, &file.y_names)?;
    Ok(report)
}

/// Scores a persisted forecast against observations whose output columns
/// carry the forecast's names. Both must cover the same number of steps.
pub fn evaluate(forecast: &Path, truth: &Path, eval: &EvalConfig, out_dir: &Path) -> Result<MetricsReport> {
    let file: ForecastFile = read_json(forecast)?;
    let horizon = file.samples.first().map_or(0, Vec::len);
    let obs = read_columns(truth, &[&file.y_names])?;
    if obs.rows != horizon {
        return Err(CliError::Data(format!(
            "{} has {} rows but the forecast covers {horizon} steps",
            truth.display(),
            obs.rows
        )));
    }
    evaluate_samples(&file, &obs.groups[0], eval, out_dir)
}

/// Plain-text table of a metrics report.
pub fn format_metrics(report: &MetricsReport, y_names: &[String]) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:<12}", "output");
    if let Some(d) = report.dims.first() {
        for l in &d.quantile_losses {
            let _ = write!(s, " {:>10}", format!("p{}", (l.rho * 100.0).round()));
        }
    }
    s.push('\n');
    for (d, name) in report.dims.iter().zip(y_names) {
        let _ = write!(s, "{name:<12}");
        for l in &d.quantile_losses {
            let _ = write!(s, " {:>10.4}", l.loss);
        }
        s.push('\n');
    }
    for p in &report.ecp {
        if (p.alpha * 100.0).round() as i64 % 10 == 0 {
            let _ = writeln!(s, "ecp@{:.2} {:>8.4}", p.alpha, p.coverage);
        }
    }
    s
}

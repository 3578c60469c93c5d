use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vrnnaug::artifacts::{read_json, MetricsFile, CONFIG_FILE};
use vrnnaug::commands::{self, ForecastRequest, Segment};
use vrnnaug::config::{DataSource, EvalConfig};
use vrnnaug::{CliError, Result, RunConfig};
use vrnnaug_core::data::InputMode;
use vrnnaug_core::model::Variant;

#[derive(Parser)]
#[command(version, about = "Probabilistic forecasting with a variational recurrent state-space model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the linear-Gaussian toy system into a CSV file.
    Generate(GenerateArgs),
    /// Train a model and score it on the test segment.
    Train(TrainArgs),
    /// Sample future trajectories from a checkpoint.
    Forecast(ForecastArgs),
    /// Score a forecast against observations.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output CSV; provenance goes to the same path with a .json extension.
    #[arg(long)]
    out: PathBuf,
    /// Number of steps of a single segment.
    #[arg(long, default_value_t = 2000)]
    len: usize,
    /// Input signal of a single segment: excitation or sinusoid.
    #[arg(long, default_value = "excitation", value_parser = parse_mode)]
    input: InputMode,
    /// Consecutive segments as LEN:MODE, e.g. 4000:excitation; overrides
    /// --len and --input.
    #[arg(long = "segment", value_parser = parse_segment)]
    segments: Vec<Segment>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON run configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV dataset (needs --u-columns and --y-columns).
    #[arg(long, conflicts_with = "motorcycle")]
    data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    u_columns: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    y_columns: Vec<String>,
    /// Two-column time/acceleration file.
    #[arg(long)]
    motorcycle: Option<PathBuf>,
    /// Train,valid,test fractions.
    #[arg(long, value_delimiter = ',')]
    split: Option<Vec<f64>>,
    /// Exact train,valid lengths; the rest is test.
    #[arg(long, value_delimiter = ',')]
    split_lengths: Option<Vec<usize>>,
    /// Chunk length.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    d_z: Option<usize>,
    #[arg(long)]
    gru_hidden: Option<usize>,
    /// full, v1 or v2.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Monte-Carlo trajectories per forecast.
    #[arg(long)]
    samples: Option<usize>,
    /// Steps forecast over the test segment.
    #[arg(long)]
    horizon: Option<usize>,
    /// History rows run through the model before the test forecast; 0 is a
    /// cold start.
    #[arg(long)]
    warmup: Option<usize>,
    /// Run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Continue the run saved in the run directory; its config.json is the
    /// base unless --config is given.
    #[arg(long)]
    resume: bool,
    /// No per-epoch progress.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct ForecastArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// CSV with the future inputs, columns named as at training.
    #[arg(long)]
    inputs: PathBuf,
    /// CSV of past inputs and outputs to warm up on.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// forecast.json written by train or forecast.
    #[arg(long)]
    forecast: PathBuf,
    /// CSV with the observed outputs.
    #[arg(long)]
    truth: PathBuf,
    /// Directory for metrics.json and ecp.csv; defaults to the forecast's.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also report coverage per output.
    #[arg(long)]
    per_dim_ecp: bool,
}

fn parse_mode(s: &str) -> std::result::Result<InputMode, String> {
    s.parse().map_err(|e: vrnnaug_core::Error| e.to_string())
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: vrnnaug_core::Error| e.to_string())
}

fn parse_segment(s: &str) -> std::result::Result<Segment, String> {
    let (len, mode) = s.split_once(':').ok_or("expected LEN:MODE")?;
    Ok(Segment {
        len: len.parse().map_err(|_| format!("bad segment length {len:?}"))?,
        input: parse_mode(mode)?,
    })
}

fn run_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut c = match (&a.config, a.resume, &a.out) {
        (Some(p), _, _) => RunConfig::from_file(p)?,
        (None, true, Some(dir)) => RunConfig::from_file(&dir.join(CONFIG_FILE))?,
        (None, true, None) => return Err(CliError::Argument("--resume needs --out or --config".into())),
        (None, false, _) => RunConfig::default(),
    };
    if let Some(path) = &a.data {
        c.data.source = Some(DataSource::Csv {
            path: path.clone(),
            u_columns: a.u_columns.clone(),
            y_columns: a.y_columns.clone(),
        });
    }
    if let Some(path) = &a.motorcycle {
        c.data.source = Some(DataSource::Motorcycle { path: path.clone() });
    }
    if let Some(f) = &a.split {
        let f: [f64; 3] = f[..]
            .try_into()
            .map_err(|_| CliError::Argument("--split takes three comma-separated fractions".into()))?;
        c.data.split = f;
        c.data.split_lengths = None;
    }
    if let Some(l) = &a.split_lengths {
        let l: [usize; 2] = l[..]
            .try_into()
            .map_err(|_| CliError::Argument("--split-lengths takes two comma-separated lengths".into()))?;
        c.data.split_lengths = Some(l);
    }
    macro_rules! set {
        ($field:expr, $v:expr) => {
            if let Some(v) = $v {
                $field = v;
            }
        };
    }
    set!(c.window, a.window);
    set!(c.model.d_z, a.d_z);
    set!(c.model.gru_hidden, a.gru_hidden);
    set!(c.model.variant, a.variant);
    set!(c.model.forecast_samples, a.samples);
    set!(c.seed, a.seed);
    set!(c.train.schedule.initial_lr, a.lr);
    set!(c.train.batch_size, a.batch_size);
    set!(c.train.schedule.max_epochs, a.max_epochs);
    set!(c.forecast.warmup, a.warmup);
    set!(c.output_dir, a.out.clone());
    if a.horizon.is_some() {
        c.forecast.horizon = a.horizon;
    }
    Ok(c)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => {
            let segments = if a.segments.is_empty() {
                vec![Segment { len: a.len, input: a.input }]
            } else {
                a.segments
            };
            let s = commands::generate(&segments, a.seed, &a.out)?;
            println!("wrote {} rows to {}", s.len(), a.out.display());
        }
        Command::Train(a) => {
            let cfg = run_config(&a)?;
            let out = commands::train(&cfg, a.resume, !a.quiet)?;
            let r = &out.report;
            println!(
                "{} epochs, best validation loss {:.4} at epoch {}; run directory {}",
                r.epochs.len(),
                r.best_valid_loss,
                r.best_epoch,
                out.run_dir.display()
            );
            if let Some(m) = &out.metrics {
                let names: MetricsFile = read_json(&out.run_dir.join(vrnnaug::artifacts::METRICS_FILE))?;
                print!("{}", commands::format_metrics(m, &names.y_names));
            }
        }
        Command::Forecast(a) => {
            let req = ForecastRequest {
                checkpoint: a.checkpoint,
                inputs: a.inputs,
                history: a.history,
                horizon: a.horizon,
                samples: a.samples,
                seed: a.seed,
                quantiles: vrnnaug::config::ForecastConfig::default().quantiles,
                out_dir: a.out,
            };
            let s = commands::forecast(&req)?;
            println!(
                "{} trajectories x {} steps x {} outputs written to {}",
                s.k(),
                s.horizon(),
                s.d_y(),
                req.out_dir.display()
            );
        }
        Command::Evaluate(a) => {
            let eval = EvalConfig {
                per_dim_ecp: a.per_dim_ecp,
                ..EvalConfig::default()
            };
            let dir = a
                .out
                .unwrap_or_else(|| a.forecast.parent().map(PathBuf::from).unwrap_or_default());
            let report = commands::evaluate(&a.forecast, &a.truth, &eval, &dir)?;
            let names: MetricsFile = read_json(&dir.join(vrnnaug::artifacts::METRICS_FILE))?;
            print!("{}", commands::format_metrics(&report, &names.y_names));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

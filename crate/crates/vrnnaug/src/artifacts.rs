//! Files written into run directories.

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use vrnnaug_core::data::Standardizer;
use vrnnaug_core::metrics::{MetricsReport, QuantileSummary};
use vrnnaug_core::model::{ForecastSamples, ModelConfig, Vrnnaug};
use vrnnaug_core::nn::{ParamRecord, ParamStore};
use vrnnaug_core::train::TrainReport;

use crate::csvio::{create, write_table};
use crate::error::{CliError, Result};

pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const STATE_FILE: &str = "state.json";
pub const REPORT_FILE: &str = "report.json";
pub const LOSSES_FILE: &str = "losses.csv";
pub const TEST_FILE: &str = "test.csv";
pub const FORECAST_FILE: &str = "forecast.json";
pub const QUANTILES_FILE: &str = "quantiles.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const ECP_FILE: &str = "ecp.csv";

const CHECKPOINT_FORMAT: u32 = 1;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| CliError::format(path, e))?;
    f.write_all(b"\n").map_err(CliError::io(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e))
}

/// A trained model with everything needed to forecast in original units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub model: ModelConfig,
    pub standardizer: Standardizer,
    pub u_names: Vec<String>,
    pub y_names: Vec<String>,
    pub epochs_trained: usize,
    pub best_epoch: usize,
    pub params: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn new(
        model: &Vrnnaug,
        standardizer: Standardizer,
        u_names: Vec<String>,
        y_names: Vec<String>,
        report: &TrainReport,
    ) -> Self {
        Self {
            format: CHECKPOINT_FORMAT,
            model: model.config().clone(),
            standardizer,
            u_names,
            y_names,
            epochs_trained: report.epochs.len(),
            best_epoch: report.best_epoch,
            params: model.params().to_records(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Checkpoint = read_json(path)?;
        if c.format != CHECKPOINT_FORMAT {
            return Err(CliError::format(path, format!("unsupported checkpoint format {}", c.format)));
        }
        Ok(c)
    }

    pub fn model(&self) -> Result<Vrnnaug> {
        let params = ParamStore::from_records(self.params.clone())?;
        Ok(Vrnnaug::from_params(self.model.clone(), &params)?)
    }
}

/// Raw Monte-Carlo samples in original units, `samples[k][t][d]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastFile {
    pub y_names: Vec<String>,
    pub seed: u64,
    /// Rows of history the state was warmed up on; 0 for a cold start.
    pub warmup: usize,
    pub samples: Vec<Vec<Vec<f64>>>,
}

impl ForecastFile {
    pub fn new(s: &ForecastSamples, y_names: Vec<String>, seed: u64, warmup: usize) -> Self {
        let samples = (0..s.k())
            .map(|k| (0..s.horizon()).map(|t| (0..s.d_y()).map(|d| s.get(k, t, d)).collect()).collect())
            .collect();
        Self {
            y_names,
            seed,
            warmup,
            samples,
        }
    }

    pub fn to_samples(&self) -> vrnnaug_core::Result<ForecastSamples> {
        let k = self.samples.len();
        let f = self.samples.first().map_or(0, Vec::len);
        let d = self.y_names.len();
        let mut data = Vec::with_capacity(k * f * d);
        for traj in &self.samples {
            if traj.len() != f {
                return Err(vrnnaug_core::Error::Data("trajectories differ in length".into()));
            }
            for row in traj {
                if row.len() != d {
                    return Err(vrnnaug_core::Error::Data(format!(
                        "sample row has {} values for {d} outputs",
                        row.len()
                    )));
                }
                data.extend_from_slice(row);
            }
        }
        ForecastSamples::new(k, f, d, data)
    }
}

/// `t` then, for each output, one column per level and the sample mean.
pub fn write_quantiles(path: &Path, q: &QuantileSummary, y_names: &[String]) -> Result<()> {
    let mut header = vec!["t".to_string()];
    for name in y_names {
        for &l in &q.levels {
            header.push(format!("{name}_q{:02}", (l * 100.0).round() as i64));
        }
        header.push(format!("{name}_mean"));
    }
    let rows = (0..q.horizon).map(|t| {
        let mut row = vec![t as f64];
        for d in 0..q.d_y {
            row.extend((0..q.levels.len()).map(|l| q.get(l, t, d)));
            row.push(q.mean(t, d));
        }
        row
    });
    write_table(path, &header, rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub y_names: Vec<String>,
    #[serde(flatten)]
    pub report: MetricsReport,
}

/// `alpha,coverage` plus one column per output when per-dimension coverage
/// was computed.
pub fn write_ecp(path: &Path, report: &MetricsReport, y_names: &[String]) -> Result<()> {
    let per_dim = report.ecp.first().is_some_and(|p| p.per_dim.is_some());
    let mut header = vec!["alpha".to_string(), "coverage".to_string()];
    if per_dim {
        header.extend(y_names.iter().map(|n| format!("coverage_{n}")));
    }
    let rows = report.ecp.iter().map(|p| {
        let mut row = vec![p.alpha, p.coverage];
        row.extend(p.per_dim.iter().flatten());
        row
    });
    write_table(path, &header, rows)
}

pub fn write_losses(path: &Path, report: &TrainReport) -> Result<()> {
    let header = ["epoch", "train_loss", "valid_loss", "lr"].map(String::from);
    write_table(
        path,
        &header,
        report
            .epochs
            .iter()
            .map(|e| vec![e.epoch as f64, e.train_loss, e.valid_loss, e.lr]),
    )
}

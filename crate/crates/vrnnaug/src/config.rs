//! Run configuration.
//!
//! A run is described by one JSON document. Missing fields take the
//! defaults below; the fully resolved document is written into every run
//! directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vrnnaug_core::model::ModelConfig;
use vrnnaug_core::train::TrainConfig;

use crate::error::{CliError, Result};

/// Where the series comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Csv {
        path: PathBuf,
        u_columns: Vec<String>,
        y_columns: Vec<String>,
    },
    /// Time/acceleration pairs; time is the input.
    Motorcycle { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: Option<DataSource>,
    /// Train/validation/test fractions.
    pub split: [f64; 3],
    /// Exact segment lengths; overrides `split` when set. The test segment
    /// takes whatever remains after the first two.
    pub split_lengths: Option<[usize; 2]>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: None,
            split: [0.5, 0.2, 0.3],
            split_lengths: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    /// Steps forecast over the test segment; the whole segment when unset.
    pub horizon: Option<usize>,
    /// Rows of history before the test segment run through the inference
    /// network before forecasting; 0 starts from the zero state.
    pub warmup: usize,
    /// Levels written to the quantile table.
    pub quantiles: Vec<f64>,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            horizon: None,
            warmup: 0,
            quantiles: vec![0.05, 0.5, 0.95],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub levels: Vec<f64>,
    pub alphas: Vec<f64>,
    pub per_dim_ecp: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            levels: vec![0.5, 0.9],
            alphas: vrnnaug_core::metrics::default_alpha_grid(),
            per_dim_ecp: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    /// Chunk length `W`.
    pub window: usize,
    /// `d_u` and `d_y` are taken from the data.
    pub model: ModelConfig,
    /// `train.seed` is replaced by `seed`.
    pub train: TrainConfig,
    pub forecast: ForecastConfig,
    pub eval: EvalConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            window: 64,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            forecast: ForecastConfig::default(),
            eval: EvalConfig::default(),
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        serde_json::from_str(&text).map_err(|e| CliError::format(path, e))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks everything that can be checked without reading data.
    pub fn validate(&self) -> Result<()> {
        let arg = |m: String| Err(CliError::Argument(m));
        if self.data.source.is_none() {
            return arg("no dataset given".into());
        }
        let f = self.data.split;
        if self.data.split_lengths.is_none()
            && (f.iter().any(|x| !(*x > 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9)
        {
            return arg(format!("split fractions {f:?} must be positive and sum to 1"));
        }
        if self.window == 0 {
            return arg("window must be at least 1".into());
        }
        if matches!(self.forecast.horizon, Some(0)) {
            return arg("forecast horizon must be at least 1".into());
        }
        for &q in self.forecast.quantiles.iter().chain(&self.eval.levels) {
            if !(0.0..=1.0).contains(&q) {
                return arg(format!("quantile level {q} outside [0, 1]"));
            }
        }
        for &a in &self.eval.alphas {
            if !(a > 0.0 && a < 1.0) {
                return arg(format!("coverage level {a} outside (0, 1)"));
            }
        }
        let mut model = self.model.clone();
        (model.d_u, model.d_y) = (1, 1);
        model.validate()?;
        self.train.validate()?;
        Ok(())
    }
}

//! The variational recurrent state-space model.
//!
//! At every step the inference network summarizes the histories of latent
//! samples, inputs and (lagged) outputs with three GRU streams, each followed
//! by a projection MLP. The posterior `q(z_t | ·)` is parameterized by an MLP
//! over the three summaries, and the decoder `p(y_t | ·)` by an MLP over the
//! latent sample, the current input and all three summaries. During training
//! the output stream consumes the lagged hybrid `½(y_{t-1} + ŷ_{t-1})`; when
//! forecasting it consumes the model's own samples `ŷ_{t-1}`.

mod elbo;
mod forecast;
mod gaussian;
mod step;

pub use elbo::{unbiased_elbo, Batch, ElboTerms};
pub use forecast::{ForecastSamples, PerTrajectoryNoise, StartState};
pub use gaussian::{hybrid_output, GaussVars, GaussianDiag};
pub use step::{EncoderState, StateVars, StepMode, StepOutput, Transforms};

use alloc::format;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::{mlp_hidden_width, Gru, Mlp, ParamStore};
use crate::rng;

/// Which components of the model are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Variant {
    /// Hybrid lagged outputs and recurrent summaries of all three streams.
    #[default]
    Full,
    /// Latent and input streams bypassed; the output stream reads `y_{t-1}`.
    V1,
    /// All three recurrent summaries; the output stream reads `y_{t-1}`
    /// instead of the hybrid.
    V2,
}

impl Variant {
    pub fn uses_hybrid(self) -> bool {
        self == Variant::Full
    }

    pub fn summarizes_latent_and_input(self) -> bool {
        self != Variant::V1
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::V1 => "v1",
            Variant::V2 => "v2",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "v1" => Ok(Variant::V1),
            "v2" => Ok(Variant::V2),
            other => Err(Error::InvalidArgument(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ModelConfig {
    pub d_u: usize,
    pub d_y: usize,
    pub d_z: usize,
    pub gru_hidden: usize,
    pub mlp_hidden_layers: usize,
    pub variant: Variant,
    pub forecast_samples: usize,
    pub log_var_min: f64,
    pub log_var_max: f64,
    /// Let gradients flow through the sampled `ŷ_{t-1}` inside the hybrid
    /// input instead of treating it as a constant.
    pub hybrid_gradient: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_u: 1,
            d_y: 1,
            d_z: 10,
            gru_hidden: 100,
            mlp_hidden_layers: 3,
            variant: Variant::Full,
            forecast_samples: 100,
            log_var_min: -10.0,
            log_var_max: 10.0,
            hybrid_gradient: false,
        }
    }
}

impl ModelConfig {
    pub fn new(d_u: usize, d_y: usize) -> Self {
        Self {
            d_u,
            d_y,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.d_u == 0 || self.d_y == 0 || self.d_z == 0 {
            return bad("d_u, d_y and d_z must be at least 1");
        }
        if self.gru_hidden == 0 || self.mlp_hidden_layers == 0 {
            return bad("network sizes must be positive");
        }
        if self.forecast_samples == 0 {
            return bad("forecast sample count must be at least 1");
        }
        if !(self.log_var_min < self.log_var_max) {
            return bad("log-variance bounds must satisfy min < max");
        }
        Ok(())
    }

    /// Width of the concatenated decoder input.
    pub fn decoder_input(&self) -> usize {
        2 * self.d_z + 2 * self.d_u + self.d_y
    }
}

#[derive(Clone, Debug)]
struct Networks {
    gru_z: Option<Gru>,
    gru_u: Option<Gru>,
    gru_y: Gru,
    mlp_zbar: Option<Mlp>,
    mlp_ubar: Option<Mlp>,
    mlp_ybar: Mlp,
    mlp_z: Mlp,
    mlp_y: Mlp,
}

/// Model structure plus its trainable parameters.
#[derive(Clone, Debug)]
pub struct Vrnnaug {
    config: ModelConfig,
    params: ParamStore,
    nets: Networks,
}

const INIT_STREAM: u64 = 0x1417;

impl Vrnnaug {
    /// Fresh model with seeded initialization.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(seed, &[INIT_STREAM]);
        let mut p = ParamStore::new();
        let c = &config;
        let h = c.gru_hidden;
        let layers = c.mlp_hidden_layers;
        let full = c.variant.summarizes_latent_and_input();

        let gru_z = full
            .then(|| Gru::new(&mut p, "gru_z", c.d_z, h, &mut rng))
            .transpose()?;
        let gru_u = full
            .then(|| Gru::new(&mut p, "gru_u", c.d_u, h, &mut rng))
            .transpose()?;
        let gru_y = Gru::new(&mut p, "gru_y", c.d_y, h, &mut rng)?;
        let hw = mlp_hidden_width(h);
        let mlp_zbar = full
            .then(|| Mlp::new(&mut p, "mlp_zbar", h, hw, layers, c.d_z, &mut rng))
            .transpose()?;
        let mlp_ubar = full
            .then(|| Mlp::new(&mut p, "mlp_ubar", h, hw, layers, c.d_u, &mut rng))
            .transpose()?;
        let mlp_ybar = Mlp::new(&mut p, "mlp_ybar", h, hw, layers, c.d_y, &mut rng)?;
        let zin = c.d_z + c.d_u + c.d_y;
        let mlp_z = Mlp::new(&mut p, "mlp_z", zin, mlp_hidden_width(zin), layers, 2 * c.d_z, &mut rng)?;
        let yin = c.decoder_input();
        let mlp_y = Mlp::new(&mut p, "mlp_y", yin, mlp_hidden_width(yin), layers, 2 * c.d_y, &mut rng)?;

        Ok(Self {
            config,
            params: p,
            nets: Networks {
                gru_z,
                gru_u,
                gru_y,
                mlp_zbar,
                mlp_ubar,
                mlp_ybar,
                mlp_z,
                mlp_y,
            },
        })
    }

    /// Model with the given parameters, which must match the structure
    /// implied by `config` name for name and shape for shape.
    pub fn from_params(config: ModelConfig, params: &ParamStore) -> Result<Self> {
        let mut m = Self::new(config, 0)?;
        m.params
            .copy_from(params)
            .map_err(|e| e.context("checkpoint does not match model configuration"))?;
        Ok(m)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }
}

use alloc::format;

use super::gaussian::GaussVars;
use super::{ModelConfig, Variant, Vrnnaug};
use crate::error::{Error, Result};
use crate::nn::Bound;
use crate::rng::NoiseSource;
use crate::tensor::{Graph, Tensor, Var};

/// Which lagged output feeds the output stream at the next step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepMode {
    /// Observations available: the next feed is the hybrid (or `y_t` for
    /// the ablation variants).
    Train,
    /// Free forecasting: the next feed is the sample `ŷ_t`.
    Predict,
}

/// Recurrent state carried between steps, one row per sequence in the batch.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderState {
    pub h_z: Tensor,
    pub h_u: Tensor,
    pub h_y: Tensor,
    /// Previous latent sample `ẑ_{t-1}`.
    pub z_prev: Tensor,
    /// Input of the output stream: `ẏ_{t-1}`, `y_{t-1}` or `ŷ_{t-1}`.
    pub y_feed: Tensor,
}

impl EncoderState {
    /// All-zero state.
    pub fn cold(c: &ModelConfig, batch: usize) -> Self {
        let h = c.gru_hidden;
        Self {
            h_z: Tensor::zeros(&[batch, h]),
            h_u: Tensor::zeros(&[batch, h]),
            h_y: Tensor::zeros(&[batch, h]),
            z_prev: Tensor::zeros(&[batch, c.d_z]),
            y_feed: Tensor::zeros(&[batch, c.d_y]),
        }
    }

    pub fn batch(&self) -> usize {
        self.z_prev.rows()
    }

    pub fn bind(&self, g: &mut Graph) -> StateVars {
        StateVars {
            h_z: g.constant(self.h_z.clone()),
            h_u: g.constant(self.h_u.clone()),
            h_y: g.constant(self.h_y.clone()),
            z_prev: g.constant(self.z_prev.clone()),
            y_feed: g.constant(self.y_feed.clone()),
        }
    }
}

/// Graph handles of an [`EncoderState`].
#[derive(Clone, Copy, Debug)]
pub struct StateVars {
    pub h_z: Var,
    pub h_u: Var,
    pub h_y: Var,
    pub z_prev: Var,
    pub y_feed: Var,
}

impl StateVars {
    pub fn values(&self, g: &Graph) -> EncoderState {
        EncoderState {
            h_z: g.value(self.h_z).clone(),
            h_u: g.value(self.h_u).clone(),
            h_y: g.value(self.h_y).clone(),
            z_prev: g.value(self.z_prev).clone(),
            y_feed: g.value(self.y_feed).clone(),
        }
    }
}

/// Recurrent summaries `z̄_{t-1}`, `ū_t`, `ȳ_{t-1}` and the updated hidden states.
#[derive(Clone, Copy, Debug)]
pub struct Transforms {
    pub z_bar: Var,
    pub u_bar: Var,
    pub y_bar: Var,
    pub h_z: Var,
    pub h_u: Var,
    pub h_y: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct StepOutput {
    pub transforms: Transforms,
    pub posterior: GaussVars,
    pub z_hat: Var,
    pub decoder: GaussVars,
    pub y_hat: Var,
    pub next: StateVars,
}

fn check_width(g: &Graph, v: Var, want: usize, what: &str) -> Result<()> {
    let got = g.value(v).width();
    if got != want {
        return Err(Error::Dimension(format!("{what}: expected width {want}, got {got}")));
    }
    Ok(())
}

impl Vrnnaug {
    /// Advances the three recurrent streams by one step.
    pub fn recurrent_transforms(
        &self,
        g: &mut Graph,
        p: &Bound,
        st: &StateVars,
        u_t: Var,
    ) -> Result<Transforms> {
        let c = &self.config;
        let n = &self.nets;
        check_width(g, u_t, c.d_u, "input u_t")?;
        check_width(g, st.z_prev, c.d_z, "latent state")?;
        check_width(g, st.y_feed, c.d_y, "output feed")?;
        let (z_bar, h_z, u_bar, h_u) = match (&n.gru_z, &n.gru_u, &n.mlp_zbar, &n.mlp_ubar) {
            (Some(gz), Some(gu), Some(mz), Some(mu)) => {
                let h_z = gz.step(g, p, st.h_z, st.z_prev)?;
                let z_bar = mz.forward(g, p, h_z)?;
                let h_u = gu.step(g, p, st.h_u, u_t)?;
                let u_bar = mu.forward(g, p, h_u)?;
                (z_bar, h_z, u_bar, h_u)
            }
            _ => (st.z_prev, st.h_z, u_t, st.h_u),
        };
        let h_y = n.gru_y.step(g, p, st.h_y, st.y_feed)?;
        let y_bar = n.mlp_ybar.forward(g, p, h_y)?;
        Ok(Transforms {
            z_bar,
            u_bar,
            y_bar,
            h_z,
            h_u,
            h_y,
        })
    }

    /// Parameters of `q(z_t | ·)` from the three summaries.
    pub fn posterior_params(
        &self,
        g: &mut Graph,
        p: &Bound,
        z_bar: Var,
        u_bar: Var,
        y_bar: Var,
    ) -> Result<GaussVars> {
        let c = &self.config;
        check_width(g, z_bar, c.d_z, "z_bar")?;
        check_width(g, u_bar, c.d_u, "u_bar")?;
        check_width(g, y_bar, c.d_y, "y_bar")?;
        let x = g.concat(&[z_bar, u_bar, y_bar])?;
        let raw = self.nets.mlp_z.forward(g, p, x)?;
        GaussVars::from_raw(g, raw, c.log_var_min, c.log_var_max)
    }

    /// Parameters of `p(y_t | ·)` from the densely connected decoder input.
    #[allow(clippy::too_many_arguments)]
    pub fn decoder_params(
        &self,
        g: &mut Graph,
        p: &Bound,
        z_hat: Var,
        u_t: Var,
        z_bar: Var,
        u_bar: Var,
        y_bar: Var,
    ) -> Result<GaussVars> {
        let c = &self.config;
        check_width(g, z_hat, c.d_z, "z_hat")?;
        check_width(g, u_t, c.d_u, "u_t")?;
        check_width(g, z_bar, c.d_z, "z_bar")?;
        check_width(g, u_bar, c.d_u, "u_bar")?;
        check_width(g, y_bar, c.d_y, "y_bar")?;
        let x = g.concat(&[z_hat, u_t, z_bar, u_bar, y_bar])?;
        let raw = self.nets.mlp_y.forward(g, p, x)?;
        GaussVars::from_raw(g, raw, c.log_var_min, c.log_var_max)
    }

    /// One full step: transforms, posterior, latent sample, decoder, output
    /// sample and the next state. Draws `B·d_z` then `B·d_y` normals.
    ///
    /// In [`StepMode::Train`] `y_t` must hold the observations of this step.
    pub fn step(
        &self,
        g: &mut Graph,
        p: &Bound,
        st: &StateVars,
        u_t: Var,
        y_t: Option<Var>,
        mode: StepMode,
        noise: &mut dyn NoiseSource,
    ) -> Result<StepOutput> {
        let c = &self.config;
        let batch = g.value(u_t).rows();
        let tr = self.recurrent_transforms(g, p, st, u_t)?;
        let posterior = self.posterior_params(g, p, tr.z_bar, tr.u_bar, tr.y_bar)?;
        let mut eps = Tensor::zeros(&[batch, c.d_z]);
        noise.fill_normal(eps.data_mut());
        let eps = g.constant(eps);
        let z_hat = posterior.sample(g, eps)?;
        let decoder = self.decoder_params(g, p, z_hat, u_t, tr.z_bar, tr.u_bar, tr.y_bar)?;
        let mut eps_y = Tensor::zeros(&[batch, c.d_y]);
        noise.fill_normal(eps_y.data_mut());

        let y_hat;
        let y_feed = match mode {
            StepMode::Predict => {
                y_hat = g.constant(decoder.sample_value(g, &eps_y));
                y_hat
            }
            StepMode::Train => {
                let y_t = y_t.ok_or_else(|| {
                    Error::InvalidArgument("training step needs observations".into())
                })?;
                check_width(g, y_t, c.d_y, "observation y_t")?;
                if c.hybrid_gradient && c.variant.uses_hybrid() {
                    let e = g.constant(eps_y);
                    y_hat = decoder.sample(g, e)?;
                    let s = g.add(y_t, y_hat)?;
                    g.scale(s, 0.5)?
                } else {
                    y_hat = g.constant(decoder.sample_value(g, &eps_y));
                    match c.variant {
                        Variant::Full => {
                            let s = g.add(y_t, y_hat)?;
                            g.scale(s, 0.5)?
                        }
                        Variant::V1 | Variant::V2 => y_t,
                    }
                }
            }
        };
        Ok(StepOutput {
            transforms: tr,
            posterior,
            z_hat,
            decoder,
            y_hat,
            next: StateVars {
                h_z: tr.h_z,
                h_u: tr.h_u,
                h_y: tr.h_y,
                z_prev: z_hat,
                y_feed,
            },
        })
    }
}

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::step::{EncoderState, StepMode};
use super::Vrnnaug;
use crate::error::{Error, Result};
use crate::rng::{self, Gaussian, NoiseSource, StreamRng};
use crate::tensor::{Graph, Tensor};

const FORECAST_STREAM: u64 = 0xf0ca;

/// Monte-Carlo output samples, `K × F × d_y`, trajectory-major.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ForecastSamples {
    k: usize,
    horizon: usize,
    d_y: usize,
    data: Vec<f64>,
}

impl ForecastSamples {
    pub fn new(k: usize, horizon: usize, d_y: usize, data: Vec<f64>) -> Result<Self> {
        if k == 0 || horizon == 0 || d_y == 0 {
            return Err(Error::InvalidArgument("forecast samples need K, F, d_y ≥ 1".into()));
        }
        if data.len() != k * horizon * d_y {
            return Err(Error::Dimension(format!(
                "{} values cannot fill {k}×{horizon}×{d_y} samples",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("forecast samples contain non-finite values".into()));
        }
        Ok(Self { k, horizon, d_y, data })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn d_y(&self) -> usize {
        self.d_y
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, k: usize, t: usize, d: usize) -> f64 {
        self.data[(k * self.horizon + t) * self.d_y + d]
    }

    /// The `K` samples for step `t` and output dimension `d`.
    pub fn at(&self, t: usize, d: usize) -> Vec<f64> {
        (0..self.k).map(|k| self.get(k, t, d)).collect()
    }

    /// Applies `f(d, value)` to every sample, e.g. to undo standardization.
    pub fn map_dims(&self, f: impl Fn(usize, f64) -> f64) -> Self {
        let d_y = self.d_y;
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, &v)| f(i % d_y, v))
            .collect();
        Self { data, ..*self }
    }
}

/// Where the recurrent state comes from at the first forecast step.
#[derive(Clone, Copy, Debug)]
pub enum StartState<'a> {
    /// Zero state.
    Cold,
    /// State obtained by running the inference network over a history given
    /// as row-major `(T, d_u)` and `(T, d_y)` buffers.
    Warm { u: &'a [f64], y: &'a [f64] },
}

/// Feeds row `k` of every request from trajectory `k`'s own stream, so a
/// trajectory's draws do not depend on how many trajectories run alongside.
pub struct PerTrajectoryNoise {
    streams: Vec<Gaussian<StreamRng>>,
}

impl PerTrajectoryNoise {
    pub fn new(seed: u64, k: usize) -> Self {
        Self {
            streams: (0..k as u64)
                .map(|i| Gaussian(rng::stream(seed, &[FORECAST_STREAM, i])))
                .collect(),
        }
    }
}

impl NoiseSource for PerTrajectoryNoise {
    fn fill_normal(&mut self, out: &mut [f64]) {
        let w = out.len() / self.streams.len();
        for (row, s) in out.chunks_mut(w).zip(&mut self.streams) {
            s.fill_normal(row);
        }
    }
}

fn repeat_rows(row: &[f64], k: usize) -> Tensor {
    let mut data = Vec::with_capacity(row.len() * k);
    for _ in 0..k {
        data.extend_from_slice(row);
    }
    Tensor::from_vec(&[k, row.len()], data).unwrap()
}

impl Vrnnaug {
    /// Draws `K` free-running trajectories over `horizon` steps driven by the
    /// known inputs `u_future` (row-major, at least `horizon` rows). Each
    /// trajectory has an independent stream derived from `seed`.
    pub fn forecast(
        &self,
        u_future: &[f64],
        horizon: usize,
        k: usize,
        seed: u64,
        start: StartState<'_>,
    ) -> Result<ForecastSamples> {
        let mut noise = PerTrajectoryNoise::new(seed, k.max(1));
        self.forecast_with_noise(u_future, horizon, k, start, &mut noise)
    }

    /// [`Vrnnaug::forecast`] with an explicit noise source; requests are
    /// `(K, width)` row-major.
    pub fn forecast_with_noise(
        &self,
        u_future: &[f64],
        horizon: usize,
        k: usize,
        start: StartState<'_>,
        noise: &mut dyn NoiseSource,
    ) -> Result<ForecastSamples> {
        let c = &self.config;
        if horizon == 0 || k == 0 {
            return Err(Error::InvalidArgument("forecast needs F ≥ 1 and K ≥ 1".into()));
        }
        let available = u_future.len() / c.d_u;
        if !u_future.len().is_multiple_of(c.d_u) || available < horizon {
            return Err(Error::InvalidArgument(format!(
                "forecast horizon {horizon} needs {horizon} input rows, only {available} provided"
            )));
        }

        let mut g = Graph::no_grad();
        let p = self.params.bind(&mut g);
        let mark = g.len();
        let mut state = EncoderState::cold(c, k);

        if let StartState::Warm { u, y } = start {
            let t_hist = u.len() / c.d_u;
            if u.len() % c.d_u != 0 || y.len() != t_hist * c.d_y {
                return Err(Error::Dimension("warm-start history buffers disagree".into()));
            }
            for t in 0..t_hist {
                g.truncate(mark);
                let st = state.bind(&mut g);
                let u_t = g.constant(repeat_rows(&u[t * c.d_u..(t + 1) * c.d_u], k));
                let y_t = g.constant(repeat_rows(&y[t * c.d_y..(t + 1) * c.d_y], k));
                let out = self
                    .step(&mut g, &p, &st, u_t, Some(y_t), StepMode::Train, noise)
                    .map_err(|e| e.context(format_args!("warm-start step {}", t + 1)))?;
                state = out.next.values(&g);
                if t + 1 == t_hist {
                    // the first forecast step reads the sample ŷ_T
                    state.y_feed = g.value(out.y_hat).clone();
                }
            }
        }

        let mut data = vec![0.0; k * horizon * c.d_y];
        for t in 0..horizon {
            g.truncate(mark);
            let st = state.bind(&mut g);
            let u_t = g.constant(repeat_rows(&u_future[t * c.d_u..(t + 1) * c.d_u], k));
            let out = self
                .step(&mut g, &p, &st, u_t, None, StepMode::Predict, noise)
                .map_err(|e| e.context(format_args!("forecast step {}", t + 1)))?;
            let y_hat = g.value(out.y_hat);
            for kk in 0..k {
                let dst = (kk * horizon + t) * c.d_y;
                data[dst..dst + c.d_y].copy_from_slice(y_hat.row(kk));
            }
            state = out.next.values(&g);
        }
        ForecastSamples::new(k, horizon, c.d_y, data)
    }
}

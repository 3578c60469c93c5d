//! Quantile loss and empirical coverage of sampled forecasts.
//!
//! Quantiles use linear interpolation between order statistics at the
//! 0-based rank `ρ·(K−1)`. Observations and forecasts are row-major
//! `F × d_y` buffers in whatever units the caller chose; the command line
//! evaluates in original units.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::ForecastSamples;

fn check_level(rho: f64) -> Result<()> {
    if (0.0..=1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("quantile level {rho} outside [0, 1]")))
    }
}

/// Quantile of an already sorted sample.
pub fn quantile_sorted(sorted: &[f64], rho: f64) -> Result<f64> {
    check_level(rho)?;
    let k = sorted.len();
    if k == 0 {
        return Err(Error::InvalidArgument("quantile of an empty sample".into()));
    }
    let rank = rho * (k - 1) as f64;
    let lo = rank as usize;
    let hi = (lo + 1).min(k - 1);
    let frac = rank - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

pub fn empirical_quantile(samples: &[f64], rho: f64) -> Result<f64> {
    let mut s = samples.to_vec();
    if s.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("quantile of a sample containing NaN".into()));
    }
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, rho)
}

/// Pinball penalty `P_ρ(y, ŷ)`.
pub fn pinball(y: f64, y_hat: f64, rho: f64) -> f64 {
    if y > y_hat {
        rho * (y - y_hat)
    } else {
        (1.0 - rho) * (y_hat - y)
    }
}

/// `QL_ρ = 2·Σ P_ρ(y_t, ŷ_t) / Σ |y_t|`.
pub fn quantile_loss(y: &[f64], y_hat: &[f64], rho: f64) -> Result<f64> {
    check_level(rho)?;
    if y.len() != y_hat.len() {
        return Err(Error::Dimension(format!(
            "{} observations against {} forecasts",
            y.len(),
            y_hat.len()
        )));
    }
    let denom: f64 = y.iter().map(|v| v.abs()).sum();
    if !(denom > 0.0) {
        return Err(Error::InvalidArgument(
            "quantile loss is undefined when every observation is zero".into(),
        ));
    }
    let num: f64 = y.iter().zip(y_hat).map(|(&a, &b)| pinball(a, b, rho)).sum();
    Ok(2.0 * num / denom)
}

/// Per-step, per-dimension quantiles and means of a sample set.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuantileSummary {
    pub levels: Vec<f64>,
    pub horizon: usize,
    pub d_y: usize,
    /// `levels × F × d_y`.
    pub quantiles: Vec<f64>,
    /// `F × d_y`.
    pub mean: Vec<f64>,
}

impl QuantileSummary {
    pub fn new(samples: &ForecastSamples, levels: &[f64]) -> Result<Self> {
        if samples.k() < 2 {
            return Err(Error::InvalidArgument("quantile summaries need at least two samples".into()));
        }
        for &l in levels {
            check_level(l)?;
        }
        let (f, d_y) = (samples.horizon(), samples.d_y());
        let mut quantiles = alloc::vec![0.0; levels.len() * f * d_y];
        let mut mean = Vec::with_capacity(f * d_y);
        for t in 0..f {
            for d in 0..d_y {
                let mut s = samples.at(t, d);
                s.sort_by(f64::total_cmp);
                for (l, &rho) in levels.iter().enumerate() {
                    quantiles[(l * f + t) * d_y + d] = quantile_sorted(&s, rho)?;
                }
                mean.push(s.iter().sum::<f64>() / s.len() as f64);
            }
        }
        Ok(Self {
            levels: levels.to_vec(),
            horizon: f,
            d_y,
            quantiles,
            mean,
        })
    }

    pub fn get(&self, level: usize, t: usize, d: usize) -> f64 {
        self.quantiles[(level * self.horizon + t) * self.d_y + d]
    }

    pub fn mean(&self, t: usize, d: usize) -> f64 {
        self.mean[t * self.d_y + d]
    }

    /// Quantile path of dimension `d` at level index `level`.
    pub fn path(&self, level: usize, d: usize) -> Vec<f64> {
        (0..self.horizon).map(|t| self.get(level, t, d)).collect()
    }
}

fn check_alignment(samples: &ForecastSamples, y: &[f64]) -> Result<()> {
    let want = samples.horizon() * samples.d_y();
    if y.len() != want {
        return Err(Error::Dimension(format!(
            "observations have {} values, forecasts cover {}×{}",
            y.len(),
            samples.horizon(),
            samples.d_y()
        )));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("coverage level {alpha} outside (0, 1)")))
    }
}

/// Inside-interval counts per output dimension.
fn coverage_counts(samples: &ForecastSamples, y: &[f64], alpha: f64) -> Result<Vec<usize>> {
    check_alignment(samples, y)?;
    check_alpha(alpha)?;
    let d_y = samples.d_y();
    let mut hits = alloc::vec![0; d_y];
    for t in 0..samples.horizon() {
        for (d, hit) in hits.iter_mut().enumerate() {
            let mut s = samples.at(t, d);
            s.sort_by(f64::total_cmp);
            let lo = quantile_sorted(&s, (1.0 - alpha) / 2.0)?;
            let hi = quantile_sorted(&s, (1.0 + alpha) / 2.0)?;
            let v = y[t * d_y + d];
            *hit += usize::from(lo <= v && v <= hi);
        }
    }
    Ok(hits)
}

/// Fraction of all `(t, d)` observations inside the central `α` interval.
pub fn ecp(samples: &ForecastSamples, y: &[f64], alpha: f64) -> Result<f64> {
    let hits = coverage_counts(samples, y, alpha)?;
    Ok(hits.iter().sum::<usize>() as f64 / y.len() as f64)
}

/// Coverage computed separately for each output dimension.
pub fn ecp_per_dim(samples: &ForecastSamples, y: &[f64], alpha: f64) -> Result<Vec<f64>> {
    let hits = coverage_counts(samples, y, alpha)?;
    let f = samples.horizon() as f64;
    Ok(hits.into_iter().map(|h| h as f64 / f).collect())
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LevelLoss {
    pub rho: f64,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DimMetrics {
    pub dim: usize,
    pub quantile_losses: Vec<LevelLoss>,
}

impl DimMetrics {
    pub fn loss_at(&self, rho: f64) -> Option<f64> {
        self.quantile_losses.iter().find(|l| l.rho == rho).map(|l| l.loss)
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EcpPoint {
    pub alpha: f64,
    pub coverage: f64,
    /// Present when per-dimension coverage was requested.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub per_dim: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub horizon: usize,
    pub samples: usize,
    pub dims: Vec<DimMetrics>,
    pub ecp: Vec<EcpPoint>,
}

impl MetricsReport {
    pub fn p50(&self, d: usize) -> Option<f64> {
        self.dims.get(d)?.loss_at(0.5)
    }

    pub fn p90(&self, d: usize) -> Option<f64> {
        self.dims.get(d)?.loss_at(0.9)
    }

    pub fn coverage_at(&self, alpha: f64) -> Option<f64> {
        self.ecp.iter().find(|p| p.alpha == alpha).map(|p| p.coverage)
    }
}

/// The usual ECP grid: 0.05, 0.10, ..., 0.95.
pub fn default_alpha_grid() -> Vec<f64> {
    (1..20).map(|i| i as f64 / 20.0).collect()
}

/// Quantile losses per dimension at `levels` and the coverage curve over
/// `alphas`.
pub fn evaluate_run(
    samples: &ForecastSamples,
    y: &[f64],
    levels: &[f64],
    alphas: &[f64],
    per_dim_ecp: bool,
) -> Result<MetricsReport> {
    check_alignment(samples, y)?;
    let summary = QuantileSummary::new(samples, levels)?;
    let d_y = samples.d_y();
    let mut dims = Vec::with_capacity(d_y);
    for d in 0..d_y {
        let obs: Vec<f64> = (0..samples.horizon()).map(|t| y[t * d_y + d]).collect();
        let mut quantile_losses = Vec::with_capacity(levels.len());
        for (l, &rho) in levels.iter().enumerate() {
            let loss = quantile_loss(&obs, &summary.path(l, d), rho)
                .map_err(|e| e.context(format_args!("output dimension {d}")))?;
            quantile_losses.push(LevelLoss { rho, loss });
        }
        dims.push(DimMetrics { dim: d, quantile_losses });
    }
    let mut ecp_curve = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let per = ecp_per_dim(samples, y, alpha)?;
        ecp_curve.push(EcpPoint {
            alpha,
            coverage: per.iter().sum::<f64>() / per.len() as f64,
            per_dim: per_dim_ecp.then_some(per),
        });
    }
    Ok(MetricsReport {
        horizon: samples.horizon(),
        samples: samples.k(),
        dims,
        ecp: ecp_curve,
    })
}

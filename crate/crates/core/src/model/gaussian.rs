//! Diagonal Gaussians: analytic KL to the unit Gaussian, log-density and
//! reparameterized sampling, in value form and as graph operations.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{self, HALF_LN_2PI};
use crate::tensor::{Graph, Tensor, Var};

/// Mean and log-variance of a diagonal Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianDiag {
    pub mean: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl GaussianDiag {
    pub fn new(mean: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        if mean.len() != log_var.len() {
            return Err(Error::Dimension(format!(
                "mean width {} != log-variance width {}",
                mean.len(),
                log_var.len()
            )));
        }
        Ok(Self { mean, log_var })
    }

    pub fn standard(width: usize) -> Self {
        Self {
            mean: alloc::vec![0.0; width],
            log_var: alloc::vec![0.0; width],
        }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn variance(&self) -> Vec<f64> {
        self.log_var.iter().map(|&l| math::exp(l)).collect()
    }

    /// `KL(N(μ, diag ν) || N(0, I)) = ½ Σ (ν + μ² − 1 − log ν)`.
    pub fn kl_to_unit(&self) -> f64 {
        0.5 * self
            .mean
            .iter()
            .zip(&self.log_var)
            .map(|(&m, &l)| math::exp(l) + m * m - 1.0 - l)
            .sum::<f64>()
    }

    pub fn log_likelihood(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.width() {
            return Err(Error::Dimension(format!(
                "observation width {} != distribution width {}",
                y.len(),
                self.width()
            )));
        }
        Ok(y.iter()
            .zip(&self.mean)
            .zip(&self.log_var)
            .map(|((&yi, &m), &l)| -HALF_LN_2PI - 0.5 * l - (yi - m) * (yi - m) / (2.0 * math::exp(l)))
            .sum())
    }

    /// `μ + exp(½ log ν) ∘ ε`.
    pub fn reparameterize(&self, eps: &[f64]) -> Result<Vec<f64>> {
        if eps.len() != self.width() {
            return Err(Error::Dimension(format!(
                "noise width {} != distribution width {}",
                eps.len(),
                self.width()
            )));
        }
        Ok(self
            .mean
            .iter()
            .zip(&self.log_var)
            .zip(eps)
            .map(|((&m, &l), &e)| m + math::exp(0.5 * l) * e)
            .collect())
    }
}

/// Lagged hybrid input `½ (y + ŷ)`.
pub fn hybrid_output(y: &[f64], y_hat: &[f64]) -> Result<Vec<f64>> {
    if y.len() != y_hat.len() {
        return Err(Error::Dimension(format!(
            "hybrid of widths {} and {}",
            y.len(),
            y_hat.len()
        )));
    }
    Ok(y.iter().zip(y_hat).map(|(a, b)| 0.5 * (a + b)).collect())
}

/// Graph handles of a batch of diagonal Gaussians, each `(B, width)`.
#[derive(Clone, Copy, Debug)]
pub struct GaussVars {
    pub mean: Var,
    pub log_var: Var,
}

impl GaussVars {
    /// Splits raw network output `(B, 2·width)` into mean and clamped
    /// log-variance.
    pub fn from_raw(g: &mut Graph, raw: Var, lo: f64, hi: f64) -> Result<Self> {
        let w2 = g.value(raw).width();
        if !w2.is_multiple_of(2) {
            return Err(Error::Dimension(format!("odd parameter width {w2}")));
        }
        let w = w2 / 2;
        let mean = g.slice(raw, 0, w)?;
        let lv = g.slice(raw, w, w2)?;
        let log_var = g.clamp(lv, lo, hi)?;
        Ok(Self { mean, log_var })
    }

    /// Row `r` as a value.
    pub fn row(&self, g: &Graph, r: usize) -> GaussianDiag {
        GaussianDiag {
            mean: g.value(self.mean).row(r).to_vec(),
            log_var: g.value(self.log_var).row(r).to_vec(),
        }
    }

    /// Summed KL to the unit Gaussian over all rows and dimensions.
    pub fn kl_to_unit(&self, g: &mut Graph) -> Result<Var> {
        let n = g.value(self.mean).len() as f64;
        let var = g.exp(self.log_var)?;
        let sv = g.sum(var)?;
        let m2 = g.square(self.mean)?;
        let sm = g.sum(m2)?;
        let sl = g.sum(self.log_var)?;
        let s = g.add(sv, sm)?;
        let s = g.sub(s, sl)?;
        let s = g.scale(s, 0.5)?;
        let c = g.constant(Tensor::scalar(0.5 * n));
        Ok(g.sub(s, c)?)
    }

    /// Summed Gaussian log-density of `y` over all rows and dimensions.
    pub fn log_likelihood(&self, g: &mut Graph, y: Var) -> Result<Var> {
        let n = g.value(self.mean).len() as f64;
        let d = g.sub(y, self.mean)?;
        let d2 = g.square(d)?;
        let neg = g.scale(self.log_var, -1.0)?;
        let prec = g.exp(neg)?;
        let q = g.mul(d2, prec)?;
        let q = g.sum(q)?;
        let sl = g.sum(self.log_var)?;
        let s = g.add(q, sl)?;
        let s = g.scale(s, -0.5)?;
        let c = g.constant(Tensor::scalar(n * HALF_LN_2PI));
        Ok(g.sub(s, c)?)
    }

    /// Reparameterized sample with noise `eps` of the same shape.
    pub fn sample(&self, g: &mut Graph, eps: Var) -> Result<Var> {
        let half = g.scale(self.log_var, 0.5)?;
        let std = g.exp(half)?;
        let noise = g.mul(std, eps)?;
        Ok(g.add(self.mean, noise)?)
    }

    /// Sample as a plain tensor, outside the graph.
    pub fn sample_value(&self, g: &Graph, eps: &Tensor) -> Tensor {
        let m = g.value(self.mean);
        let l = g.value(self.log_var);
        let data = m
            .data()
            .iter()
            .zip(l.data())
            .zip(eps.data())
            .map(|((&mu, &lv), &e)| mu + math::exp(0.5 * lv) * e)
            .collect();
        Tensor::from_vec(m.shape(), data).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Gaussian, NoiseSource};
    use alloc::vec;
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn reparameterize_examples() {
        let g = GaussianDiag::new(vec![0.3, -1.0], vec![0.7, 0.1]).unwrap();
        assert_eq!(g.reparameterize(&[0.0, 0.0]).unwrap(), g.mean);
        let unit = GaussianDiag::standard(2);
        assert_eq!(unit.reparameterize(&[1.5, -0.5]).unwrap(), [1.5, -0.5]);
        let g = GaussianDiag::new(vec![1.0], vec![4.0f64.ln()]).unwrap();
        assert_relative_eq!(g.reparameterize(&[0.5]).unwrap()[0], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn hybrid_examples() {
        assert_eq!(hybrid_output(&[1.0, -3.0], &[1.0, -3.0]).unwrap(), [1.0, -3.0]);
        assert_eq!(hybrid_output(&[2.0], &[0.0]).unwrap(), [1.0]);
        assert_eq!(hybrid_output(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), [0.0, 0.0]);
        assert!(hybrid_output(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn kl_examples() {
        assert_eq!(GaussianDiag::standard(4).kl_to_unit(), 0.0);
        let g = GaussianDiag::new(vec![1.0, 0.0], vec![0.0, 0.0]).unwrap();
        assert_relative_eq!(g.kl_to_unit(), 0.5);
    }

    #[test]
    fn loglik_examples() {
        let unit = GaussianDiag::standard(1);
        assert_relative_eq!(unit.log_likelihood(&[0.0]).unwrap(), -0.918_938_533_204_672_7, epsilon = 1e-15);
        assert_relative_eq!(
            unit.log_likelihood(&[1.0]).unwrap(),
            -0.5 * (2.0 * core::f64::consts::PI).ln() - 0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn density_integrates_to_one() {
        // MC over a wide uniform window: E_U[exp(loglik)] * width ≈ 1
        let d = GaussianDiag::new(vec![0.4], vec![-0.3]).unwrap();
        let mut rng = stream(13, &[]);
        let (a, b) = (-12.0, 12.0);
        let n = 200_000;
        let vals: Vec<f64> = (0..n)
            .map(|_| {
                let y: f64 = rng.random_range(a..b);
                (b - a) * d.log_likelihood(&[y]).unwrap().exp()
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 4.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn graph_forms_match_values() {
        let mut rng = stream(21, &[]);
        let mut g = Graph::new();
        let mean = Tensor::matrix(&[[0.2, -0.5, 1.0], [0.0, 0.3, -0.1]]);
        let lv = Tensor::matrix(&[[0.1, -0.4, 0.8], [0.5, 0.0, -1.0]]);
        let y = Tensor::matrix(&[[1.0, 0.0, -2.0], [0.3, 0.2, 0.1]]);
        let mut eps = Tensor::zeros(&[2, 3]);
        Gaussian(&mut rng).fill_normal(eps.data_mut());
        let gv = GaussVars {
            mean: g.constant(mean.clone()),
            log_var: g.constant(lv.clone()),
        };
        let yv = g.constant(y.clone());
        let ev = g.constant(eps.clone());
        let kl = gv.kl_to_unit(&mut g).unwrap();
        let ll = gv.log_likelihood(&mut g, yv).unwrap();
        let s = gv.sample(&mut g, ev).unwrap();
        let mut kl_ref = 0.0;
        let mut ll_ref = 0.0;
        for r in 0..2 {
            let d = GaussianDiag::new(mean.row(r).to_vec(), lv.row(r).to_vec()).unwrap();
            kl_ref += d.kl_to_unit();
            ll_ref += d.log_likelihood(y.row(r)).unwrap();
            let smp = d.reparameterize(eps.row(r)).unwrap();
            assert_eq!(g.value(s).row(r), &smp[..]);
        }
        assert_relative_eq!(g.value(kl).item(), kl_ref, epsilon = 1e-14);
        assert_relative_eq!(g.value(ll).item(), ll_ref, epsilon = 1e-14);
        assert_eq!(gv.sample_value(&g, &eps), *g.value(s));
    }
}

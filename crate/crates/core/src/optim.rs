//! Adam and the validation-gated learning-rate schedule.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::nn::ParamStore;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment buffers, step count and current learning rate.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OptimState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
    pub lr: f64,
    pub config: AdamConfig,
}

impl OptimState {
    pub fn new(params: &ParamStore, lr: f64, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, t)| alloc::vec![0.0; t.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            lr,
            config,
        }
    }

    /// One bias-corrected Adam update. Fails without touching anything if
    /// a gradient is missing, misshapen or non-finite.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Vec<f64>]) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::Dimension(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for (id, g) in params.ids().zip(grads) {
            if g.len() != params.get(id).len() {
                return Err(Error::Dimension(format!(
                    "gradient of {} has {} entries, expected {}",
                    params.name(id),
                    g.len(),
                    params.get(id).len()
                )));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient for {}", params.name(id))));
            }
        }
        let AdamConfig { beta1, beta2, eps } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - math::powi(beta1, t);
        let c2 = 1.0 - math::powi(beta2, t);
        let lr = self.lr;
        for (((theta, g), m), v) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((p, &g), m), v) in theta.data_mut().iter_mut().zip(g).zip(m).zip(v) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let mh = *m / c1;
                let vh = *v / c2;
                *p -= lr * mh / (math::sqrt(vh) + eps);
            }
        }
        Ok(())
    }
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = math::sqrt(grads.iter().flatten().map(|g| g * g).sum());
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
    norm
}

/// Learning-rate halving and termination rule.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ScheduleConfig {
    pub initial_lr: f64,
    pub min_lr: f64,
    pub check_every: usize,
    pub decay: f64,
    pub max_epochs: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            initial_lr: 1e-3,
            min_lr: 1e-6,
            check_every: 10,
            decay: 0.5,
            max_epochs: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Termination {
    MaxEpochs,
    LrBelowFloor,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LrDecision {
    Continue(f64),
    Stop { lr: f64, reason: Termination },
}

fn min_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Decision after `epoch` (1-based) completed epochs with the given
/// per-epoch validation losses. At every multiple of `check_every` the rate
/// is decayed unless the latest window improved on the best loss recorded
/// before it.
pub fn lr_schedule(epoch: usize, history: &[f64], lr: f64, cfg: &ScheduleConfig) -> LrDecision {
    let mut lr = lr;
    let w = cfg.check_every;
    if w > 0 && epoch.is_multiple_of(w) && epoch > w && history.len() >= epoch {
        let (before, window) = history[..epoch].split_at(epoch - w);
        if min_of(window) >= min_of(before) {
            lr *= cfg.decay;
        }
    }
    if lr < cfg.min_lr {
        LrDecision::Stop {
            lr,
            reason: Termination::LrBelowFloor,
        }
    } else if epoch >= cfg.max_epochs {
        LrDecision::Stop {
            lr,
            reason: Termination::MaxEpochs,
        }
    } else {
        LrDecision::Continue(lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use alloc::vec;

    fn scalar_store(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("theta", Tensor::vector(&[v])).unwrap();
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar_store(0.3);
        let mut st = OptimState::new(&p, 1e-3, AdamConfig::default());
        st.step(&mut p, &[vec![0.0]]).unwrap();
        assert_eq!(p.get(p.id("theta").unwrap()).data(), &[0.3]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar_store(0.0);
        let mut st = OptimState::new(&p, 1e-3, AdamConfig::default());
        st.step(&mut p, &[vec![1.0]]).unwrap();
        let v = p.get(p.id("theta").unwrap()).data()[0];
        assert!((v + 0.001 / (1.0 + 1e-8)).abs() < 1e-15, "{v}");
        assert!((v + 0.001).abs() < 1e-10);
    }

    #[test]
    fn non_finite_gradient_names_param() {
        let mut p = scalar_store(0.0);
        let mut st = OptimState::new(&p, 1e-3, AdamConfig::default());
        let err = st.step(&mut p, &[vec![f64::NAN]]).unwrap_err();
        assert!(err.to_string().contains("theta"));
        assert_eq!(st.step, 0);
    }

    #[test]
    fn clipping() {
        let mut g = vec![vec![3.0], vec![4.0]];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0][0] - 0.6).abs() < 1e-15 && (g[1][0] - 0.8).abs() < 1e-15);
        let mut g = vec![vec![0.1]];
        clip_grad_norm(&mut g, 1.0);
        assert_eq!(g[0][0], 0.1);
    }

    #[test]
    fn schedule_examples() {
        let cfg = ScheduleConfig::default();
        let improving: Vec<f64> = (0..30).map(|i| 10.0 - i as f64).collect();
        for e in 1..10 {
            assert_eq!(lr_schedule(e, &improving, 1e-3, &cfg), LrDecision::Continue(1e-3));
        }
        assert_eq!(lr_schedule(10, &improving, 1e-3, &cfg), LrDecision::Continue(1e-3));
        assert_eq!(lr_schedule(20, &improving, 1e-3, &cfg), LrDecision::Continue(1e-3));

        let mut stagnant = vec![5.0; 10];
        stagnant.extend(vec![6.0; 10]);
        assert_eq!(lr_schedule(20, &stagnant, 1e-3, &cfg), LrDecision::Continue(5e-4));
        // off-check epochs never decay
        assert_eq!(lr_schedule(19, &stagnant, 1e-3, &cfg), LrDecision::Continue(1e-3));
    }

    #[test]
    fn ten_halvings_stop() {
        let cfg = ScheduleConfig {
            max_epochs: 1000,
            ..ScheduleConfig::default()
        };
        let flat = vec![1.0; 200];
        let mut lr = 1e-3;
        let mut halvings = 0;
        for e in 1..=200 {
            match lr_schedule(e, &flat, lr, &cfg) {
                LrDecision::Continue(n) => {
                    halvings += usize::from(n < lr);
                    lr = n;
                }
                LrDecision::Stop { lr: n, reason } => {
                    assert_eq!(reason, Termination::LrBelowFloor);
                    assert_eq!(halvings + 1, 10);
                    assert!((n - 9.765625e-7).abs() < 1e-18);
                    assert_eq!(e, 110);
                    return;
                }
            }
        }
        panic!("schedule never stopped");
    }

    #[test]
    fn max_epochs_stop() {
        let cfg = ScheduleConfig {
            max_epochs: 3,
            ..ScheduleConfig::default()
        };
        assert_eq!(
            lr_schedule(3, &[3.0, 2.0, 1.0], 1e-3, &cfg),
            LrDecision::Stop {
                lr: 1e-3,
                reason: Termination::MaxEpochs
            }
        );
    }
}

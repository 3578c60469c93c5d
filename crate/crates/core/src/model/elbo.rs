use alloc::format;
use alloc::vec::Vec;

use super::step::{EncoderState, StepMode};
use super::Vrnnaug;
use crate::error::{Error, Result};
use crate::nn::Bound;
use crate::rng::NoiseSource;
use crate::tensor::{Graph, Tensor, Var};

/// Equal-length chunks laid out step-major: `u[t]` is `(B, d_u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub u: Vec<Tensor>,
    pub y: Vec<Tensor>,
}

impl Batch {
    pub fn new(u: Vec<Tensor>, y: Vec<Tensor>) -> Result<Self> {
        if u.is_empty() || u.len() != y.len() {
            return Err(Error::InvalidArgument(format!(
                "batch needs matching non-empty step lists, got {} and {}",
                u.len(),
                y.len()
            )));
        }
        let b = u[0].rows();
        if u.iter().chain(&y).any(|t| t.shape().len() != 2 || t.rows() != b) {
            return Err(Error::Dimension("batch steps disagree on batch size".into()));
        }
        Ok(Self { u, y })
    }

    /// One chunk given as row-major `(W, d_u)` and `(W, d_y)` buffers.
    pub fn single(u: &[f64], y: &[f64], d_u: usize, d_y: usize) -> Result<Self> {
        if d_u == 0 || d_y == 0 || !u.len().is_multiple_of(d_u) || !y.len().is_multiple_of(d_y) || u.len() / d_u != y.len() / d_y {
            return Err(Error::Dimension("chunk buffers do not share a length".into()));
        }
        let w = u.len() / d_u;
        let us = (0..w)
            .map(|t| Tensor::from_vec(&[1, d_u], u[t * d_u..(t + 1) * d_u].to_vec()).unwrap())
            .collect();
        let ys = (0..w)
            .map(|t| Tensor::from_vec(&[1, d_y], y[t * d_y..(t + 1) * d_y].to_vec()).unwrap())
            .collect();
        Self::new(us, ys)
    }

    /// Number of chunks.
    pub fn size(&self) -> usize {
        self.u[0].rows()
    }

    /// Chunk length `W`.
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// Per-step ELBO contributions, each summed over the batch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ElboTerms {
    pub log_lik: Vec<f64>,
    pub kl: Vec<f64>,
}

impl ElboTerms {
    pub fn total(&self) -> f64 {
        self.log_lik.iter().zip(&self.kl).map(|(l, k)| l - k).sum()
    }
}

/// `(J / |B|) · Σ_j L^j` for the ELBOs of the chunks in a mini-batch.
pub fn unbiased_elbo(chunk_elbos: &[f64], total_chunks: usize) -> Result<f64> {
    if chunk_elbos.is_empty() {
        return Err(Error::InvalidArgument("empty mini-batch".into()));
    }
    if total_chunks < chunk_elbos.len() {
        return Err(Error::InvalidArgument(format!(
            "mini-batch of {} exceeds the {} available chunks",
            chunk_elbos.len(),
            total_chunks
        )));
    }
    let s: f64 = chunk_elbos.iter().sum();
    Ok(total_chunks as f64 / chunk_elbos.len() as f64 * s)
}

impl Vrnnaug {
    /// Records the single-sample ELBO of a batch, summed over its chunks.
    /// Returns the total and the per-step `(log-likelihood, KL)` handles.
    pub fn elbo_graph(
        &self,
        g: &mut Graph,
        p: &Bound,
        batch: &Batch,
        noise: &mut dyn NoiseSource,
    ) -> Result<(Var, Vec<(Var, Var)>)> {
        let mut st = EncoderState::cold(&self.config, batch.size()).bind(g);
        let mut total = g.constant(Tensor::scalar(0.0));
        let mut terms = Vec::with_capacity(batch.len());
        for (t, (u, y)) in batch.u.iter().zip(&batch.y).enumerate() {
            let at = |e: Error| e.context(format_args!("time step {}", t + 1));
            let u_t = g.constant(u.clone());
            let y_t = g.constant(y.clone());
            let out = self
                .step(g, p, &st, u_t, Some(y_t), StepMode::Train, noise)
                .map_err(at)?;
            let ll = out.decoder.log_likelihood(g, y_t).map_err(at)?;
            let kl = out.posterior.kl_to_unit(g).map_err(at)?;
            let term = g.sub(ll, kl).map_err(|e| at(e.into()))?;
            total = g.add(total, term).map_err(|e| at(e.into()))?;
            terms.push((ll, kl));
            st = out.next;
        }
        Ok((total, terms))
    }

    /// ELBO of a batch (summed over chunks) without recording gradients.
    /// Only one step of intermediates is alive at a time.
    pub fn elbo(&self, batch: &Batch, noise: &mut dyn NoiseSource) -> Result<(f64, ElboTerms)> {
        let mut g = Graph::no_grad();
        let p = self.params.bind(&mut g);
        let mark = g.len();
        let mut state = EncoderState::cold(&self.config, batch.size());
        let mut terms = ElboTerms::default();
        for (t, (u, y)) in batch.u.iter().zip(&batch.y).enumerate() {
            let at = |e: Error| e.context(format_args!("time step {}", t + 1));
            g.truncate(mark);
            let st = state.bind(&mut g);
            let u_t = g.constant(u.clone());
            let y_t = g.constant(y.clone());
            let out = self
                .step(&mut g, &p, &st, u_t, Some(y_t), StepMode::Train, noise)
                .map_err(at)?;
            let ll = out.decoder.log_likelihood(&mut g, y_t).map_err(at)?;
            let kl = out.posterior.kl_to_unit(&mut g).map_err(at)?;
            terms.log_lik.push(g.value(ll).item());
            terms.kl.push(g.value(kl).item());
            state = out.next.values(&g);
        }
        Ok((terms.total(), terms))
    }

    /// ELBO of a batch and the gradient of `−scale · ELBO` for every
    /// parameter, in store order.
    pub fn neg_elbo_grad(
        &self,
        batch: &Batch,
        scale: f64,
        noise: &mut dyn NoiseSource,
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let (total, _) = self.elbo_graph(&mut g, &p, batch, noise)?;
        let value = g.value(total).item();
        let loss = g.scale(total, -scale)?;
        g.backward(loss)?;
        Ok((value, self.params.grads(&g, &p)))
    }
}

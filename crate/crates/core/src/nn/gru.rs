use alloc::format;
use alloc::string::String;
use rand::Rng;

use super::init::orthogonal;
use super::params::{Bound, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Gated recurrent unit.
///
/// ```text
/// r  = σ(x W_r + h U_r + b_r)
/// g  = σ(x W_g + h U_g + b_g)
/// c  = tanh(x W_c + (r ∘ h) U_c + b_c)
/// h' = (1 − g) ∘ h + g ∘ c
/// ```
///
/// Weights are stored for row-vector products: `w_x` is `(input, 3·hidden)`
/// holding `[W_r | W_g | W_c]`, `u_rg` is `(hidden, 2·hidden)` holding
/// `[U_r | U_g]`, `u_c` is `(hidden, hidden)` and `bias` is `3·hidden`.
#[derive(Clone, Debug)]
pub struct Gru {
    pub input: usize,
    pub hidden: usize,
    pub w_x: ParamId,
    pub u_rg: ParamId,
    pub u_c: ParamId,
    pub bias: ParamId,
}

impl Gru {
    /// Registers parameters under `prefix`. Each gate block is an
    /// independent orthogonal matrix; biases start at zero.
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut w_x = Tensor::zeros(&[input, 3 * hidden]);
        let mut u_rg = Tensor::zeros(&[hidden, 2 * hidden]);
        for gate in 0..3 {
            // (hidden, input) gate matrix, stored transposed
            let w = orthogonal(hidden, input, rng);
            for i in 0..hidden {
                for j in 0..input {
                    w_x.data_mut()[j * 3 * hidden + gate * hidden + i] = w.data()[i * input + j];
                }
            }
        }
        for gate in 0..2 {
            let u = orthogonal(hidden, hidden, rng);
            for i in 0..hidden {
                for j in 0..hidden {
                    u_rg.data_mut()[j * 2 * hidden + gate * hidden + i] = u.data()[i * hidden + j];
                }
            }
        }
        let u_c = orthogonal(hidden, hidden, rng).transpose();
        let name = |s: &str| -> String { format!("{prefix}.{s}") };
        Ok(Self {
            input,
            hidden,
            w_x: store.add(name("w_x"), w_x)?,
            u_rg: store.add(name("u_rg"), u_rg)?,
            u_c: store.add(name("u_c"), u_c)?,
            bias: store.add(name("bias"), Tensor::zeros(&[3 * hidden]))?,
        })
    }

    /// One recurrent update on a batch: `h_prev` is `(B, hidden)`, `x` is
    /// `(B, input)`.
    pub fn step(&self, g: &mut Graph, p: &Bound, h_prev: Var, x: Var) -> Result<Var> {
        let h = self.hidden;
        if g.value(x).width() != self.input || g.value(h_prev).width() != h {
            return Err(Error::Dimension(format!(
                "gru expects input {} and hidden {}, got {:?} and {:?}",
                self.input,
                h,
                g.value(x).shape(),
                g.value(h_prev).shape()
            )));
        }
        let xw = g.matmul(x, p[self.w_x])?;
        let xw = g.add(xw, p[self.bias])?;
        let hu = g.matmul(h_prev, p[self.u_rg])?;
        let xr = g.slice(xw, 0, h)?;
        let xg = g.slice(xw, h, 2 * h)?;
        let xc = g.slice(xw, 2 * h, 3 * h)?;
        let hr = g.slice(hu, 0, h)?;
        let hg = g.slice(hu, h, 2 * h)?;
        let r = g.add(xr, hr)?;
        let r = g.sigmoid(r)?;
        let gate = g.add(xg, hg)?;
        let gate = g.sigmoid(gate)?;
        let rh = g.mul(r, h_prev)?;
        let cu = g.matmul(rh, p[self.u_c])?;
        let c = g.add(xc, cu)?;
        let c = g.tanh(c)?;
        let diff = g.sub(c, h_prev)?;
        let upd = g.mul(gate, diff)?;
        Ok(g.add(h_prev, upd)?)
    }
}

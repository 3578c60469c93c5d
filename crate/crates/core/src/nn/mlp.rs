use alloc::format;
use alloc::vec::Vec;
use rand::Rng;

use super::init::glorot_uniform;
use super::params::{Bound, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Affine layer `x W + b` with `W` stored as `(input, output)`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub input: usize,
    pub output: usize,
    pub weight: ParamId,
    pub bias: ParamId,
    /// Identity shortcut around the activation; only set when widths match.
    pub skip: bool,
}

impl Linear {
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let xw = g.matmul(x, p[self.weight])?;
        Ok(g.add(xw, p[self.bias])?)
    }
}

/// Feed-forward block: ReLU hidden layers with identity skips where the
/// layer's input and output widths agree, then a linear output layer.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        hidden_layers: usize,
        output: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut widths = alloc::vec![input];
        widths.extend(core::iter::repeat_n(hidden, hidden_layers));
        widths.push(output);
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (l, pair) in widths.windows(2).enumerate() {
            let (i, o) = (pair[0], pair[1]);
            let is_hidden = l < hidden_layers;
            layers.push(Linear {
                input: i,
                output: o,
                weight: store.add(format!("{prefix}.l{l}.w"), glorot_uniform(i, o, rng))?,
                bias: store.add(format!("{prefix}.l{l}.b"), Tensor::zeros(&[o]))?,
                skip: is_hidden && i == o,
            });
        }
        Ok(Self { layers })
    }

    pub fn input(&self) -> usize {
        self.layers[0].input
    }

    pub fn output(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output)
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        if g.value(x).width() != self.input() {
            return Err(Error::Dimension(format!(
                "mlp expects width {}, got {:?}",
                self.input(),
                g.value(x).shape()
            )));
        }
        let last = self.layers.len() - 1;
        let mut h = x;
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(g, p, h)?;
            if l == last {
                return Ok(z);
            }
            let a = g.relu(z)?;
            h = if layer.skip { g.add(a, h)? } else { a };
        }
        unreachable!("an mlp has at least one layer")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use alloc::vec;
    use rand::Rng;

    fn eval(store: &ParamStore, mlp: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let xv = g.constant(Tensor::matrix(&[x]));
        let out = mlp.forward(&mut g, &p, xv).unwrap();
        g.value(out).data().to_vec()
    }

    #[test]
    fn skip_only_where_widths_match() {
        let mut s = ParamStore::new();
        let m = Mlp::new(&mut s, "m", 12, 50, 3, 20, &mut stream(0, &[])).unwrap();
        let skips: Vec<bool> = m.layers.iter().map(|l| l.skip).collect();
        assert_eq!(skips, [false, true, true, false]);
        let m = Mlp::new(&mut s, "n", 100, 100, 3, 10, &mut stream(0, &[])).unwrap();
        let skips: Vec<bool> = m.layers.iter().map(|l| l.skip).collect();
        assert_eq!(skips, [true, true, true, false]);
    }

    #[test]
    fn zero_params_give_zero() {
        let mut s = ParamStore::new();
        let m = Mlp::new(&mut s, "m", 3, 5, 3, 2, &mut stream(0, &[])).unwrap();
        s.tensors_mut()
            .iter_mut()
            .for_each(|t| t.data_mut().iter_mut().for_each(|v| *v = 0.0));
        assert_eq!(eval(&s, &m, &[1.0, -2.0, 3.0]), [0.0, 0.0]);
    }

    #[test]
    fn single_hidden_layer_identity_with_skip() {
        // hidden = relu(I x) + x, output = I hidden
        let mut s = ParamStore::new();
        let m = Mlp::new(&mut s, "m", 2, 2, 1, 2, &mut stream(0, &[])).unwrap();
        assert!(m.layers[0].skip);
        for l in &m.layers {
            *s.get_mut(l.weight) = Tensor::matrix(&[[1.0, 0.0], [0.0, 1.0]]);
        }
        // positive entries: relu(x) + x = 2x; negative entries: 0 + x = x
        assert_eq!(eval(&s, &m, &[1.5, -1.0]), [3.0, -1.0]);
        assert_eq!(eval(&s, &m, &[0.25, 2.0]), [0.5, 4.0]);
    }

    fn oracle(s: &ParamStore, m: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for (l, layer) in m.layers.iter().enumerate() {
            let w = s.get(layer.weight).data();
            let b = s.get(layer.bias).data();
            let mut z = vec![0.0; layer.output];
            for o in 0..layer.output {
                z[o] = b[o];
                for i in 0..layer.input {
                    z[o] += h[i] * w[i * layer.output + o];
                }
            }
            if l + 1 == m.layers.len() {
                return z;
            }
            let mut a: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
            if layer.skip {
                a.iter_mut().zip(&h).for_each(|(x, y)| *x += y);
            }
            h = a;
        }
        unreachable!()
    }

    #[test]
    fn matches_straight_line_oracle() {
        let mut rng = stream(8, &[]);
        for (input, hidden) in [(3, 5), (6, 6), (60, 60)] {
            let mut s = ParamStore::new();
            let m = Mlp::new(&mut s, "m", input, hidden, 3, 4, &mut rng).unwrap();
            for l in &m.layers {
                for v in s.get_mut(l.bias).data_mut() {
                    *v = rng.random_range(-0.3..0.3);
                }
            }
            let x: Vec<f64> = (0..input).map(|_| rng.random_range(-1.0..1.0)).collect();
            let got = eval(&s, &m, &x);
            let want = oracle(&s, &m, &x);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn wrong_width_rejected() {
        let mut s = ParamStore::new();
        let m = Mlp::new(&mut s, "m", 3, 5, 3, 2, &mut stream(0, &[])).unwrap();
        let mut g = Graph::new();
        let p = s.bind(&mut g);
        let x = g.constant(Tensor::zeros(&[1, 4]));
        assert!(m.forward(&mut g, &p, x).is_err());
    }
}

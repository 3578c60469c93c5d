use proptest::prelude::*;
use vrnnaug_core::nn::{Mlp, ParamStore};
use vrnnaug_core::rng::stream;
use vrnnaug_core::{Graph, Tensor, TensorError, Var};

#[derive(Clone, Copy, Debug)]
enum Kind {
    MatMul,
    Add,
    AddRow,
    Sub,
    Mul,
    Concat,
    Slice,
    Sigmoid,
    Tanh,
    Relu,
    Exp,
    Log,
    Square,
    Sum,
    Mean,
    Scale,
    Clamp,
}

const KINDS: [Kind; 17] = [
    Kind::MatMul,
    Kind::Add,
    Kind::AddRow,
    Kind::Sub,
    Kind::Mul,
    Kind::Concat,
    Kind::Slice,
    Kind::Sigmoid,
    Kind::Tanh,
    Kind::Relu,
    Kind::Exp,
    Kind::Log,
    Kind::Square,
    Kind::Sum,
    Kind::Mean,
    Kind::Scale,
    Kind::Clamp,
];

const R: usize = 2;
const C: usize = 3;

/// Scalar loss `Σ w ∘ op(a, b, v)` with a fixed random weighting `w`;
/// `a` and `b` are `(R, C)`, `v` is a bias row of width `C`.
fn build(kind: Kind, g: &mut Graph, a: Var, b: Var, v: Var, w: &[f64]) -> Result<Var, TensorError> {
    let out = match kind {
        Kind::MatMul => {
            let a2 = g.slice(a, 0, R)?;
            g.matmul(a2, b)?
        }
        Kind::Add => g.add(a, b)?,
        Kind::AddRow => g.add(a, v)?,
        Kind::Sub => g.sub(a, b)?,
        Kind::Mul => g.mul(a, b)?,
        Kind::Concat => g.concat(&[a, b, a])?,
        Kind::Slice => g.slice(a, 1, 3)?,
        Kind::Sigmoid => g.sigmoid(a)?,
        Kind::Tanh => g.tanh(a)?,
        Kind::Relu => g.relu(a)?,
        Kind::Exp => g.exp(a)?,
        Kind::Log => {
            let sq = g.square(a)?;
            let half = g.constant(Tensor::full(&[R, C], 0.5));
            let pos = g.add(sq, half)?;
            g.log(pos)?
        }
        Kind::Square => g.square(a)?,
        Kind::Sum => {
            let s = g.sum(a)?;
            return g.mul(s, s);
        }
        Kind::Mean => {
            let s = g.mean(a)?;
            let t = g.mean(b)?;
            return g.mul(s, t);
        }
        Kind::Scale => g.scale(a, -1.7)?,
        Kind::Clamp => g.clamp(a, -0.5, 0.5)?,
    };
    let shape = g.value(out).shape().to_vec();
    let n = g.value(out).len();
    let wv = g.constant(Tensor::from_vec(&shape, w[..n].to_vec()).unwrap());
    let p = g.mul(out, wv)?;
    g.sum(p)
}

struct Inputs<'a> {
    a: &'a [f64],
    b: &'a [f64],
    v: &'a [f64],
}

fn bind(g: &mut Graph, x: &Inputs, param: bool) -> [Var; 3] {
    let ts = [
        Tensor::from_vec(&[R, C], x.a.to_vec()).unwrap(),
        Tensor::from_vec(&[R, C], x.b.to_vec()).unwrap(),
        Tensor::vector(x.v),
    ];
    ts.map(|t| if param { g.param(t) } else { g.constant(t) })
}

fn eval(kind: Kind, x: &Inputs, w: &[f64]) -> f64 {
    let mut g = Graph::no_grad();
    let [a, b, v] = bind(&mut g, x, false);
    let l = build(kind, &mut g, a, b, v, w).unwrap();
    g.value(l).item()
}

fn near_kink(kind: Kind, a: &[f64]) -> bool {
    match kind {
        Kind::Relu => a.iter().any(|v| v.abs() < 1e-3),
        Kind::Clamp => a.iter().any(|v| (v.abs() - 0.5).abs() < 1e-3),
        _ => false,
    }
}

fn check(kind: Kind, x: &Inputs, w: &[f64]) -> Result<(), TestCaseError> {
    let mut g = Graph::new();
    let vars = bind(&mut g, x, true);
    let l = build(kind, &mut g, vars[0], vars[1], vars[2], w).unwrap();
    g.backward(l).unwrap();
    let h = 1e-5;
    let bufs = [x.a, x.b, x.v];
    for (which, var) in vars.iter().enumerate() {
        let n = bufs[which].len();
        let analytic = g.grad(*var).map_or(vec![0.0; n], |s| s.to_vec());
        for i in 0..n {
            let shifted = |d: f64| {
                let mut cp: Vec<Vec<f64>> = bufs.iter().map(|b| b.to_vec()).collect();
                cp[which][i] += d;
                eval(kind, &Inputs { a: &cp[0], b: &cp[1], v: &cp[2] }, w)
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            let an = analytic[i];
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
            prop_assert!(
                rel < 1e-4 || (an - fd).abs() < 1e-9,
                "{kind:?} input {which}[{i}]: {an} vs {fd}"
            );
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_op_matches_finite_differences(
        a in prop::collection::vec(-2.0f64..2.0, R * C),
        b in prop::collection::vec(-2.0f64..2.0, R * C),
        v in prop::collection::vec(-2.0f64..2.0, C),
        w in prop::collection::vec(-1.0f64..1.0, 3 * R * C),
    ) {
        let x = Inputs { a: &a, b: &b, v: &v };
        for kind in KINDS {
            if near_kink(kind, &a) {
                continue;
            }
            check(kind, &x, &w)?;
        }
    }

    #[test]
    fn identical_forward_passes_are_bit_identical(
        a in prop::collection::vec(-2.0f64..2.0, R * C),
        b in prop::collection::vec(-2.0f64..2.0, R * C),
        w in prop::collection::vec(-1.0f64..1.0, 3 * R * C),
    ) {
        let x = Inputs { a: &a, b: &b, v: &b[..C] };
        for kind in KINDS {
            prop_assert_eq!(eval(kind, &x, &w).to_bits(), eval(kind, &x, &w).to_bits());
        }
    }

    #[test]
    fn separate_losses_accumulate_additively(
        a in prop::collection::vec(-2.0f64..2.0, R * C),
        b in prop::collection::vec(-2.0f64..2.0, R * C),
        w in prop::collection::vec(-1.0f64..1.0, 3 * R * C),
    ) {
        let grads = |kinds: &[Kind]| {
            let mut g = Graph::new();
            let [av, bv, vv] = bind(&mut g, &Inputs { a: &a, b: &b, v: &b[..C] }, true);
            for &k in kinds {
                let l = build(k, &mut g, av, bv, vv, &w).unwrap();
                g.backward(l).unwrap();
            }
            g.grad(av).unwrap().to_vec()
        };
        let one = grads(&[Kind::Tanh]);
        let two = grads(&[Kind::Square]);
        let both = grads(&[Kind::Tanh, Kind::Square]);
        for i in 0..R * C {
            prop_assert!((both[i] - one[i] - two[i]).abs() < 1e-12);
        }
    }
}

fn mlp_eval(store: &ParamStore, mlp: &Mlp, x: &[f64]) -> Vec<f64> {
    let mut g = Graph::no_grad();
    let p = store.bind(&mut g);
    let xv = g.constant(Tensor::matrix(&[x]));
    let out = mlp.forward(&mut g, &p, xv).unwrap();
    g.value(out).data().to_vec()
}

#[test]
fn three_layer_mlp_gradients_match_finite_differences() {
    let mut store = ParamStore::new();
    let mut rng = stream(9, &[]);
    let mlp = Mlp::new(&mut store, "m", 4, 6, 3, 1, &mut rng).unwrap();
    // nonzero biases so every bias gradient is exercised
    for t in store.tensors_mut().iter_mut().filter(|t| t.shape().len() == 1) {
        for (i, v) in t.data_mut().iter_mut().enumerate() {
            *v = 0.1 * ((i % 5) as f64 - 2.0);
        }
    }
    let x = [0.3, -1.2, 0.8, 0.5];
    let mut g = Graph::new();
    let p = store.bind(&mut g);
    let xv = g.constant(Tensor::matrix(&[x]));
    let out = mlp.forward(&mut g, &p, xv).unwrap();
    let loss = g.sum(out).unwrap();
    g.backward(loss).unwrap();
    let grads = store.grads(&g, &p);

    let h = 1e-5;
    for k in 0..store.len() {
        for i in 0..store.tensors_mut()[k].len() {
            let orig = store.tensors_mut()[k].data()[i];
            store.tensors_mut()[k].data_mut()[i] = orig + h;
            let up = mlp_eval(&store, &mlp, &x)[0];
            store.tensors_mut()[k].data_mut()[i] = orig - h;
            let dn = mlp_eval(&store, &mlp, &x)[0];
            store.tensors_mut()[k].data_mut()[i] = orig;
            let fd = (up - dn) / (2.0 * h);
            let an = grads[k][i];
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
            assert!(rel < 1e-4 || (an - fd).abs() < 1e-9, "param {k}[{i}]: {an} vs {fd}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mlp_is_linear_within_an_activation_region(
        seed in 0u64..1000,
        x in prop::collection::vec(-1.0f64..1.0, 3),
        d in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "m", 3, 5, 3, 2, &mut stream(seed, &[])).unwrap();
        // tiny steps along a ray rarely cross a kink; second differences vanish on linear pieces
        let s = 1e-4;
        let at = |t: f64| {
            let p: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            mlp_eval(&store, &mlp, &p)
        };
        let (f0, f1, f2) = (at(0.0), at(s), at(2.0 * s));
        let same_pattern = {
            let pattern = |t: f64| {
                let p: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                activation_pattern(&store, &mlp, &p)
            };
            pattern(0.0) == pattern(s) && pattern(s) == pattern(2.0 * s)
        };
        prop_assume!(same_pattern);
        for j in 0..2 {
            prop_assert!((f2[j] - 2.0 * f1[j] + f0[j]).abs() < 1e-12);
        }
    }
}

/// Signs of every hidden pre-activation.
fn activation_pattern(store: &ParamStore, mlp: &Mlp, x: &[f64]) -> Vec<bool> {
    let mut h = x.to_vec();
    let mut signs = Vec::new();
    let last = mlp.layers.len() - 1;
    for (l, layer) in mlp.layers.iter().enumerate() {
        if l == last {
            break;
        }
        let w = store.get(layer.weight).data();
        let b = store.get(layer.bias).data();
        let z: Vec<f64> = (0..layer.output)
            .map(|j| b[j] + (0..layer.input).map(|i| h[i] * w[i * layer.output + j]).sum::<f64>())
            .collect();
        signs.extend(z.iter().map(|v| *v > 0.0));
        let mut a: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
        if layer.skip {
            a.iter_mut().zip(&h).for_each(|(a, h)| *a += h);
        }
        h = a;
    }
    signs
}

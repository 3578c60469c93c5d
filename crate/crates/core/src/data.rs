//! Series containers, chronological splitting, standardization, shingling
//! and the linear-Gaussian toy system.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::math;
use crate::model::Batch;
use crate::rng::{Gaussian, NoiseSource};
use crate::tensor::Tensor;

/// Aligned inputs `u_{1:T}` and outputs `y_{1:T}`, both row-major.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TimeSeries {
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub d_u: usize,
    pub d_y: usize,
    pub u_names: Vec<String>,
    pub y_names: Vec<String>,
    pub label: String,
}

impl TimeSeries {
    pub fn new(u: Vec<f64>, y: Vec<f64>, d_u: usize, d_y: usize) -> Result<Self> {
        if d_u == 0 || d_y == 0 {
            return Err(Error::Data("series needs at least one input and one output column".into()));
        }
        if !u.len().is_multiple_of(d_u) || !y.len().is_multiple_of(d_y) || u.len() / d_u != y.len() / d_y {
            return Err(Error::Data(format!(
                "inputs ({} values, width {d_u}) and outputs ({} values, width {d_y}) disagree on length",
                u.len(),
                y.len()
            )));
        }
        let names = |p: &str, n: usize| (0..n).map(|i| format!("{p}{i}")).collect();
        Ok(Self {
            u,
            y,
            d_u,
            d_y,
            u_names: names("u", d_u),
            y_names: names("y", d_y),
            label: String::new(),
        })
    }

    pub fn with_names(mut self, u_names: Vec<String>, y_names: Vec<String>) -> Result<Self> {
        if u_names.len() != self.d_u || y_names.len() != self.d_y {
            return Err(Error::Data("column name count does not match widths".into()));
        }
        self.u_names = u_names;
        self.y_names = y_names;
        Ok(self)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn len(&self) -> usize {
        self.u.len() / self.d_u
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn u_row(&self, t: usize) -> &[f64] {
        &self.u[t * self.d_u..(t + 1) * self.d_u]
    }

    pub fn y_row(&self, t: usize) -> &[f64] {
        &self.y[t * self.d_y..(t + 1) * self.d_y]
    }

    /// Rows `start..end` as a new series with the same names.
    pub fn slice(&self, start: usize, end: usize, label: &str) -> Self {
        Self {
            u: self.u[start * self.d_u..end * self.d_u].to_vec(),
            y: self.y[start * self.d_y..end * self.d_y].to_vec(),
            d_u: self.d_u,
            d_y: self.d_y,
            u_names: self.u_names.clone(),
            y_names: self.y_names.clone(),
            label: label.into(),
        }
    }

    /// Appends the rows of `other`, which must have the same widths.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.d_u != other.d_u || self.d_y != other.d_y {
            return Err(Error::Data("cannot join series of different widths".into()));
        }
        let mut out = self.clone();
        out.u.extend_from_slice(&other.u);
        out.y.extend_from_slice(&other.y);
        Ok(out)
    }
}

/// Train, validation and test segments.
#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: TimeSeries,
    pub valid: TimeSeries,
    pub test: TimeSeries,
}

/// Contiguous chronological split with lengths `⌊f·T⌋` for train and
/// validation and the remainder for test. Train and validation must each
/// hold at least `min_len` rows.
pub fn chrono_split(series: &TimeSeries, fractions: [f64; 3], min_len: usize) -> Result<Splits> {
    if fractions.iter().any(|&f| !(f > 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split fractions {fractions:?} must be positive and sum to 1"
        )));
    }
    let t = series.len();
    // guards against products like 0.29·100 landing just below an integer
    let n = |f: f64| math::floor(f * t as f64 + 1e-9) as usize;
    let (n_train, n_valid) = (n(fractions[0]), n(fractions[1]));
    for (name, len) in [("training", n_train), ("validation", n_valid)] {
        if len < min_len.max(1) {
            return Err(Error::Data(format!(
                "{name} segment has {len} rows, needs at least {}",
                min_len.max(1)
            )));
        }
    }
    let cut = n_train + n_valid;
    Ok(Splits {
        train: series.slice(0, n_train, "train"),
        valid: series.slice(n_train, cut, "valid"),
        test: series.slice(cut, t, "test"),
    })
}

/// Per-dimension mean and population standard deviation.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Standardizer {
    pub u_mean: Vec<f64>,
    pub u_std: Vec<f64>,
    pub y_mean: Vec<f64>,
    pub y_std: Vec<f64>,
}

fn column_stats(data: &[f64], d: usize, names: &[String], what: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = data.len() / d;
    if n == 0 {
        return Err(Error::Data(format!("cannot fit {what} statistics on an empty series")));
    }
    let mut mean = alloc::vec![0.0; d];
    let mut std = alloc::vec![0.0; d];
    for row in data.chunks(d) {
        mean.iter_mut().zip(row).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    for row in data.chunks(d) {
        for ((s, m), x) in std.iter_mut().zip(&mean).zip(row) {
            *s += (x - m) * (x - m);
        }
    }
    for (i, s) in std.iter_mut().enumerate() {
        *s = math::sqrt(*s / n as f64);
        if !(*s > 0.0) {
            let name = names.get(i).map_or("?", |s| s.as_str());
            return Err(Error::Data(format!("{what} column {name:?} has zero variance")));
        }
    }
    Ok((mean, std))
}

fn transform(data: &mut [f64], mean: &[f64], std: &[f64], f: impl Fn(f64, f64, f64) -> f64) {
    for row in data.chunks_mut(mean.len()) {
        for ((x, m), s) in row.iter_mut().zip(mean).zip(std) {
            *x = f(*x, *m, *s);
        }
    }
}

impl Standardizer {
    /// Statistics of the training split.
    pub fn fit(train: &TimeSeries) -> Result<Self> {
        let (u_mean, u_std) = column_stats(&train.u, train.d_u, &train.u_names, "input")?;
        let (y_mean, y_std) = column_stats(&train.y, train.d_y, &train.y_names, "output")?;
        Ok(Self {
            u_mean,
            u_std,
            y_mean,
            y_std,
        })
    }

    fn check(&self, s: &TimeSeries) -> Result<()> {
        if s.d_u != self.u_mean.len() || s.d_y != self.y_mean.len() {
            return Err(Error::Data(format!(
                "statistics for widths ({}, {}) applied to a ({}, {}) series",
                self.u_mean.len(),
                self.y_mean.len(),
                s.d_u,
                s.d_y
            )));
        }
        Ok(())
    }

    pub fn apply(&self, s: &TimeSeries) -> Result<TimeSeries> {
        self.check(s)?;
        let mut out = s.clone();
        transform(&mut out.u, &self.u_mean, &self.u_std, |x, m, sd| (x - m) / sd);
        transform(&mut out.y, &self.y_mean, &self.y_std, |x, m, sd| (x - m) / sd);
        Ok(out)
    }

    pub fn invert(&self, s: &TimeSeries) -> Result<TimeSeries> {
        self.check(s)?;
        let mut out = s.clone();
        transform(&mut out.u, &self.u_mean, &self.u_std, |x, m, sd| x * sd + m);
        transform(&mut out.y, &self.y_mean, &self.y_std, |x, m, sd| x * sd + m);
        Ok(out)
    }

    /// Standardized input rows.
    pub fn apply_u(&self, u: &[f64]) -> Vec<f64> {
        let mut out = u.to_vec();
        transform(&mut out, &self.u_mean, &self.u_std, |x, m, sd| (x - m) / sd);
        out
    }

    /// Output value of dimension `d` back in original units.
    pub fn invert_y(&self, d: usize, v: f64) -> f64 {
        v * self.y_std[d] + self.y_mean[d]
    }
}

/// Stride-1 windows of length `W` over a series: chunk `j` covers rows
/// `j..j + W`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkSet {
    pub window: usize,
    pub count: usize,
    pub label: String,
}

pub fn shingle(series: &TimeSeries, window: usize) -> Result<ChunkSet> {
    let t = series.len();
    if window == 0 || window > t {
        return Err(Error::Data(format!(
            "chunk length {window} does not fit a series of length {t}"
        )));
    }
    Ok(ChunkSet {
        window,
        count: t - window + 1,
        label: series.label.clone(),
    })
}

impl ChunkSet {
    /// Row range of chunk `j`.
    pub fn rows(&self, j: usize) -> core::ops::Range<usize> {
        j..j + self.window
    }

    /// Chunks `idx` of `series` stacked into a step-major batch.
    pub fn batch(&self, series: &TimeSeries, idx: &[usize]) -> Result<Batch> {
        if idx.is_empty() {
            return Err(Error::InvalidArgument("empty mini-batch".into()));
        }
        if let Some(&j) = idx.iter().find(|&&j| j >= self.count) {
            return Err(Error::InvalidArgument(format!(
                "chunk {j} out of range for {} chunks",
                self.count
            )));
        }
        let b = idx.len();
        let gather = |data: &[f64], d: usize, t: usize| {
            let mut out = Vec::with_capacity(b * d);
            for &j in idx {
                out.extend_from_slice(&data[(j + t) * d..(j + t + 1) * d]);
            }
            Tensor::from_vec(&[b, d], out).unwrap()
        };
        let u = (0..self.window).map(|t| gather(&series.u, series.d_u, t)).collect();
        let y = (0..self.window).map(|t| gather(&series.y, series.d_y, t)).collect();
        Batch::new(u, y)
    }
}

/// Input signal driving the toy system.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum InputMode {
    /// Uniform random excitation in `[−2.5, 2.5]`.
    Excitation,
    /// `u_t = sin(2tπ/10) + sin(2tπ/25)`.
    Sinusoid,
}

impl core::str::FromStr for InputMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "excitation" => Ok(Self::Excitation),
            "sinusoid" => Ok(Self::Sinusoid),
            other => Err(Error::InvalidArgument(format!("unknown input mode {other:?}"))),
        }
    }
}

/// `h_{t+1} = A h_t + B u_t + ε_h`, `y_t = C h_t + ε` with a two-dimensional
/// state and scalar input and output.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LinearGaussianSystem {
    pub a: [[f64; 2]; 2],
    pub b: [f64; 2],
    pub c: [f64; 2],
    pub process_var: f64,
    pub measurement_var: f64,
}

impl Default for LinearGaussianSystem {
    fn default() -> Self {
        Self {
            a: [[0.7, 0.8], [0.0, 0.1]],
            b: [-1.0, 0.1],
            c: [1.0, 0.0],
            process_var: 0.5,
            measurement_var: 1.0,
        }
    }
}

/// Result of a simulation together with the state after its final step.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub series: TimeSeries,
    pub final_state: [f64; 2],
}

impl LinearGaussianSystem {
    /// Input values for steps `t0..t0 + len`.
    pub fn input_signal<R: Rng>(mode: InputMode, t0: usize, len: usize, rng: &mut R) -> Vec<f64> {
        (t0..t0 + len)
            .map(|t| match mode {
                InputMode::Excitation => rng.random_range(-2.5..=2.5),
                InputMode::Sinusoid => {
                    let t = t as f64;
                    let tau = 2.0 * core::f64::consts::PI;
                    math::sin(tau * t / 10.0) + math::sin(tau * t / 25.0)
                }
            })
            .collect()
    }

    /// Runs the recursion from `h0` over the given inputs.
    pub fn simulate_inputs(&self, h0: [f64; 2], u: &[f64], noise: &mut dyn NoiseSource) -> Simulation {
        let (sp, sm) = (math::sqrt(self.process_var), math::sqrt(self.measurement_var));
        let mut h = h0;
        let mut y = Vec::with_capacity(u.len());
        let mut e = [0.0; 3];
        for &ut in u {
            noise.fill_normal(&mut e);
            y.push(self.c[0] * h[0] + self.c[1] * h[1] + sm * e[0]);
            let a = &self.a;
            h = [
                a[0][0] * h[0] + a[0][1] * h[1] + self.b[0] * ut + sp * e[1],
                a[1][0] * h[0] + a[1][1] * h[1] + self.b[1] * ut + sp * e[2],
            ];
        }
        Simulation {
            series: TimeSeries::new(u.to_vec(), y, 1, 1).unwrap(),
            final_state: h,
        }
    }

    /// `len` steps from the zero state; the input and the noise draw from
    /// separate streams of `seed`.
    pub fn simulate(&self, len: usize, mode: InputMode, seed: u64) -> TimeSeries {
        self.simulate_segments(&[(len, mode)], seed)
    }

    /// One continuous trajectory whose input switches mode between
    /// consecutive segments. Segment `i > 0` draws its input from its own
    /// stream, and the sinusoid phase restarts at every segment.
    pub fn simulate_segments(&self, segments: &[(usize, InputMode)], seed: u64) -> TimeSeries {
        let mut u = Vec::new();
        for (i, &(len, mode)) in segments.iter().enumerate() {
            let tags: &[u64] = if i == 0 { &[0x11] } else { &[0x11, i as u64] };
            u.extend(Self::input_signal(mode, 0, len, &mut crate::rng::stream(seed, tags)));
        }
        let mut noise = Gaussian(crate::rng::stream(seed, &[0x22]));
        self.simulate_inputs([0.0; 2], &u, &mut noise).series
    }
}

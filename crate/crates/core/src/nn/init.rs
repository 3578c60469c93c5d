//! Weight initializers.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::math;
use crate::tensor::Tensor;

/// Random orthogonal `rows x cols` matrix.
///
/// A standard-normal matrix is orthonormalized column by column (Gram-Schmidt
/// with a second re-orthogonalization pass), which equals the QR factor with
/// a positive `R` diagonal. For `rows >= cols` the columns are orthonormal,
/// otherwise the rows are.
pub fn orthogonal<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    assert!(rows >= 1 && cols >= 1, "orthogonal init needs positive extents");
    if rows < cols {
        return orthogonal(cols, rows, rng).transpose();
    }
    // column-major working copy: column j is a[j*rows..(j+1)*rows]
    let mut a: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    for j in 0..cols {
        let (done, rest) = a.split_at_mut(j * rows);
        let v = &mut rest[..rows];
        for _ in 0..2 {
            for i in 0..j {
                let q = &done[i * rows..(i + 1) * rows];
                let d: f64 = q.iter().zip(v.iter()).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(q).for_each(|(x, qi)| *x -= d * qi);
            }
        }
        let norm = math::sqrt(v.iter().map(|x| x * x).sum());
        v.iter_mut().for_each(|x| *x /= norm);
    }
    let mut out = vec![0.0; rows * cols];
    for j in 0..cols {
        for i in 0..rows {
            out[i * cols + j] = a[j * rows + i];
        }
    }
    Tensor::from_vec(&[rows, cols], out).unwrap()
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`, returned as `(fan_in, fan_out)`.
pub fn glorot_uniform<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let limit = math::sqrt(6.0 / (fan_in + fan_out) as f64);
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    Tensor::from_vec(&[fan_in, fan_out], data).unwrap()
}

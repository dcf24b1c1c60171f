#![allow(dead_code)]

use bsr::blocksparse::{MMVSignal, MeasurementSet};
use bsr::linop::{ConvKernel, DenseModel, LinearModel};
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Random nonnegative kernel with `taps` entries (odd), normalized to unit sum.
pub fn random_kernel(rng: &mut ChaCha8Rng, taps: usize) -> ConvKernel {
    let mut k: Vec<f64> = (0..taps).map(|_| 0.1 + rng.random::<f64>()).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    ConvKernel::new(k).unwrap()
}

pub fn random_conv_model(rng: &mut ChaCha8Rng, n_r: usize, n_meas: usize, taps: usize) -> LinearModel {
    LinearModel::conv(random_kernel(rng, taps), n_r, n_meas).unwrap()
}

pub fn random_dense_model(rng: &mut ChaCha8Rng, n_d: usize, n_r: usize, n_meas: usize) -> LinearModel {
    let scale = 1.0 / (n_d as f64).sqrt();
    let a = Array2::from_shape_simple_fn((n_d, n_r * n_meas), || scale * normal(rng));
    LinearModel::dense(DenseModel::new(a, n_r, n_meas).unwrap())
}

/// Rows active with probability `pnz`, entries standard normal.
pub fn random_block_sparse(rng: &mut ChaCha8Rng, n_r: usize, n_meas: usize, pnz: f64) -> MMVSignal {
    let mut x = Array2::zeros((n_r, n_meas));
    for mut row in x.rows_mut() {
        if rng.random::<f64>() < pnz {
            row.mapv_inplace(|_| normal(rng));
        }
    }
    MMVSignal::new(x).unwrap()
}

pub fn random_signal(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> MMVSignal {
    MMVSignal::new(Array2::from_shape_simple_fn(shape, || normal(rng))).unwrap()
}

pub fn random_data(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> MeasurementSet {
    MeasurementSet::new(Array2::from_shape_simple_fn(shape, || normal(rng))).unwrap()
}

/// `A x + sigma * noise`.
pub fn measure(rng: &mut ChaCha8Rng, model: &LinearModel, x: &MMVSignal, sigma: f64) -> MeasurementSet {
    let clean = model.apply(x).unwrap();
    let noisy = clean.values().mapv(|v| v + sigma * normal(rng));
    MeasurementSet::new(noisy).unwrap()
}

pub fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.nrows(), a.ncols(), a.as_slice().unwrap())
}

pub fn vec_of(a: &Array2<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len(), a.iter().copied())
}

pub fn frob(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `||a - b|| / ||b||`, or the plain difference norm when `b` vanishes.
pub fn rel_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let d = frob(&(a - b));
    let n = frob(b);
    if n == 0.0 {
        d
    } else {
        d / n
    }
}

/// Least-squares solution of the materialized model by SVD.
pub fn least_squares(model: &LinearModel, t: &MeasurementSet) -> Array2<f64> {
    let a = to_na(&model.materialize_dense().unwrap());
    let b = vec_of(t.values());
    let x = a.svd(true, true).solve(&b, 1e-14).unwrap();
    Array2::from_shape_vec(model.signal_shape(), x.iter().copied().collect()).unwrap()
}

//! Joint-sparsity primitives: signal containers, the l2,1 norm, the
//! regularized least-squares objective and the block soft threshold.
//!
//! A signal is an `N_r x N_meas` matrix; row `k` is block `k` across all
//! measurements. Every block operation here works on contiguous chunks of
//! `N_meas` values, which is exactly a row of a row-major signal and also a
//! block inside the batched stacks used by the network.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::linop::LinearModel;

/// Unknown block-sparse matrix: rows are positions (blocks), columns are
/// measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct MMVSignal(Array2<f64>);

/// Observed data, one column per measurement (convolution model) or a single
/// `N_d x 1` column (dense model).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet(Array2<f64>);

macro_rules! matrix_newtype {
    ($name:ident, $what:literal) => {
        impl $name {
            pub fn new(values: Array2<f64>) -> Result<Self> {
                if values.nrows() == 0 || values.ncols() == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "{} must have at least one row and column, got {:?}",
                        $what,
                        values.dim()
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument(format!("{} has non-finite entries", $what)));
                }
                Ok(Self(values.as_standard_layout().into_owned()))
            }

            pub fn zeros(rows: usize, cols: usize) -> Self {
                Self(Array2::zeros((rows.max(1), cols.max(1))))
            }

            pub(crate) fn from_raw(values: Array2<f64>) -> Self {
                debug_assert!(values.is_standard_layout());
                Self(values)
            }

            pub fn values(&self) -> &Array2<f64> {
                &self.0
            }

            pub fn view(&self) -> ArrayView2<'_, f64> {
                self.0.view()
            }

            pub fn into_inner(self) -> Array2<f64> {
                self.0
            }

            pub fn shape(&self) -> (usize, usize) {
                self.0.dim()
            }

            pub fn frobenius_sq(&self) -> f64 {
                self.0.iter().map(|v| v * v).sum()
            }
        }
    };
}

matrix_newtype!(MMVSignal, "signal");
matrix_newtype!(MeasurementSet, "measurement set");

impl MMVSignal {
    pub fn block_count(&self) -> usize {
        self.0.nrows()
    }

    pub fn block_size(&self) -> usize {
        self.0.ncols()
    }
}

fn slice_of(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("signals are kept in standard layout")
}

/// Euclidean norm of every row.
pub fn block_norms(x: &MMVSignal) -> Array1<f64> {
    chunk_norms(slice_of(&x.0), x.block_size()).into()
}

pub fn l21_norm(x: &MMVSignal) -> f64 {
    block_norms(x).sum()
}

/// `sum |apply(x) - t|^2 + lambda * ||x||_{2,1}`.
pub fn objective(model: &LinearModel, x: &MMVSignal, t: &MeasurementSet, lambda: f64) -> Result<f64> {
    let fit = model.apply(x)?;
    if fit.shape() != t.shape() {
        return Err(Error::dim("objective", format!("{:?}", fit.shape()), format!("{:?}", t.shape())));
    }
    let residual: f64 = fit.0.iter().zip(t.0.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(residual + lambda * l21_norm(x))
}

/// Block soft threshold: row `k` is scaled by `max(0, 1 - lambda / ||row k||)`.
///
/// Any finite `lambda` is accepted; a negative value rescales every nonzero
/// row by a factor above one.
pub fn block_soft_threshold(x: &MMVSignal, lambda: f64) -> MMVSignal {
    let mut out = x.0.clone();
    let block = x.block_size();
    threshold_chunks(out.as_slice_mut().unwrap(), block, lambda);
    MMVSignal(out)
}

/// Reverse-mode derivative of [`block_soft_threshold`] at `x` for the upstream
/// gradient `upstream`. Returns `(d/dx, d/dlambda)`.
pub fn block_soft_threshold_vjp(x: &MMVSignal, lambda: f64, upstream: &MMVSignal) -> Result<(MMVSignal, f64)> {
    if x.shape() != upstream.shape() {
        return Err(Error::dim(
            "block_soft_threshold_vjp",
            format!("{:?}", x.shape()),
            format!("{:?}", upstream.shape()),
        ));
    }
    let mut dx = Array2::zeros(x.shape());
    let dlambda = threshold_chunks_vjp(
        slice_of(&x.0),
        lambda,
        slice_of(&upstream.0),
        dx.as_slice_mut().unwrap(),
        x.block_size(),
    );
    Ok((MMVSignal(dx), dlambda))
}

pub(crate) fn chunk_norms(values: &[f64], block: usize) -> Vec<f64> {
    values.chunks_exact(block).map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
}

#[inline]
fn shrink_scale(norm: f64, lambda: f64) -> f64 {
    if norm > 0.0 {
        (1.0 - lambda / norm).max(0.0)
    } else {
        0.0
    }
}

/// In-place block soft threshold over consecutive chunks of `block` values.
pub(crate) fn threshold_chunks(values: &mut [f64], block: usize, lambda: f64) {
    for chunk in values.chunks_exact_mut(block) {
        let norm = chunk.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = shrink_scale(norm, lambda);
        chunk.iter_mut().for_each(|v| *v *= scale);
    }
}

/// Chunked threshold VJP. Writes `dx` and returns `dlambda`, reduced in
/// ascending chunk order.
pub(crate) fn threshold_chunks_vjp(x: &[f64], lambda: f64, upstream: &[f64], dx: &mut [f64], block: usize) -> f64 {
    let mut dlambda = 0.0;
    let chunks = x.chunks_exact(block).zip(upstream.chunks_exact(block)).zip(dx.chunks_exact_mut(block));
    for ((xc, uc), dc) in chunks {
        let norm = xc.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = shrink_scale(norm, lambda);
        if scale <= 0.0 {
            dc.iter_mut().for_each(|v| *v = 0.0);
            continue;
        }
        let xu: f64 = xc.iter().zip(uc).map(|(a, b)| a * b).sum();
        let coef = lambda * xu / (norm * norm * norm);
        for ((d, &xv), &uv) in dc.iter_mut().zip(xc).zip(uc) {
            *d = scale * uv + coef * xv;
        }
        dlambda -= xu / norm;
    }
    dlambda
}

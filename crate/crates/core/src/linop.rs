//! Linear forward models: a dense measurement matrix acting on the row-major
//! vectorization of the signal, or a 1D kernel convolved (zero padding, same
//! size) with every measurement column.

use ndarray::{Array1, Array2, ArrayView2, ArrayViewMut2};

use crate::blocksparse::{MMVSignal, MeasurementSet};
use crate::error::{Error, Result};

/// Largest `N_r * N_meas` that [`LinearModel::materialize_dense`] will build.
pub const MATERIALIZE_LIMIT: usize = 4096;

const POWER_ITERATIONS: usize = 5000;
const POWER_TOLERANCE: f64 = 1e-9;

/// Odd-length convolution kernel anchored at its middle tap.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    taps: Vec<f64>,
    /// Length units per tap; informational only.
    pub pixel_pitch: Option<f64>,
}

impl ConvKernel {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.is_empty() || taps.len() % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "kernel length must be odd and positive, got {}",
                taps.len()
            )));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("kernel has non-finite taps".into()));
        }
        Ok(Self { taps, pixel_pitch: None })
    }

    pub fn with_pitch(mut self, pitch: f64) -> Self {
        self.pixel_pitch = Some(pitch);
        self
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn half_width(&self) -> usize {
        self.taps.len() / 2
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.taps.len();
        (0..n / 2).all(|j| self.taps[j] == self.taps[n - 1 - j])
    }

    pub fn reversed(&self) -> ConvKernel {
        let mut taps = self.taps.clone();
        taps.reverse();
        ConvKernel { taps, pixel_pitch: self.pixel_pitch }
    }
}

/// Dense `N_d x (N_r * N_meas)` matrix; blocks are contiguous groups of
/// `block_size` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseModel {
    entries: Array2<f64>,
    block_count: usize,
    block_size: usize,
}

impl DenseModel {
    pub fn new(entries: Array2<f64>, block_count: usize, block_size: usize) -> Result<Self> {
        if entries.nrows() == 0 || block_count == 0 || block_size == 0 {
            return Err(Error::InvalidArgument("dense model dimensions must be positive".into()));
        }
        if entries.ncols() != block_count * block_size {
            return Err(Error::dim("dense model", block_count * block_size, entries.ncols()));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("dense model has non-finite entries".into()));
        }
        Ok(Self {
            entries: entries.as_standard_layout().into_owned(),
            block_count,
            block_size,
        })
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn block_count(&self) -> usize {
        self.block_count
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operator {
    Dense(DenseModel),
    Conv(ConvKernel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    operator: Operator,
    n_r: usize,
    n_meas: usize,
}

impl LinearModel {
    pub fn dense(model: DenseModel) -> Self {
        let (n_r, n_meas) = (model.block_count, model.block_size);
        Self {
            operator: Operator::Dense(model),
            n_r,
            n_meas,
        }
    }

    pub fn conv(kernel: ConvKernel, n_r: usize, n_meas: usize) -> Result<Self> {
        if n_r == 0 || n_meas == 0 {
            return Err(Error::InvalidArgument("signal dimensions must be positive".into()));
        }
        Ok(Self {
            operator: Operator::Conv(kernel),
            n_r,
            n_meas,
        })
    }

    pub fn operator(&self) -> &Operator {
        &self.operator
    }

    pub fn kernel(&self) -> Option<&ConvKernel> {
        match &self.operator {
            Operator::Conv(k) => Some(k),
            Operator::Dense(_) => None,
        }
    }

    pub fn signal_shape(&self) -> (usize, usize) {
        (self.n_r, self.n_meas)
    }

    pub fn data_shape(&self) -> (usize, usize) {
        match &self.operator {
            Operator::Dense(d) => (d.entries.nrows(), 1),
            Operator::Conv(_) => (self.n_r, self.n_meas),
        }
    }

    pub fn apply(&self, x: &MMVSignal) -> Result<MeasurementSet> {
        if x.shape() != self.signal_shape() {
            return Err(Error::dim(
                "apply",
                format!("{:?}", self.signal_shape()),
                format!("{:?}", x.shape()),
            ));
        }
        let out = match &self.operator {
            Operator::Dense(d) => {
                let flat = x.values().as_slice().unwrap();
                let v = d.entries.dot(&ndarray::ArrayView1::from(flat));
                v.insert_axis(ndarray::Axis(1))
            }
            Operator::Conv(k) => {
                let mut out = Array2::zeros(x.shape());
                convolve_rows(k.taps(), x.view(), out.view_mut());
                out
            }
        };
        Ok(MeasurementSet::from_raw(out))
    }

    pub fn adjoint(&self, r: &MeasurementSet) -> Result<MMVSignal> {
        if r.shape() != self.data_shape() {
            return Err(Error::dim(
                "adjoint",
                format!("{:?}", self.data_shape()),
                format!("{:?}", r.shape()),
            ));
        }
        let out = match &self.operator {
            Operator::Dense(d) => {
                let v = d.entries.t().dot(&r.values().column(0));
                v.into_shape_with_order((self.n_r, self.n_meas)).unwrap()
            }
            Operator::Conv(k) => {
                let mut out = Array2::zeros(r.shape());
                correlate_rows(k.taps(), r.view(), out.view_mut());
                out
            }
        };
        Ok(MMVSignal::from_raw(out))
    }

    /// Upper bound on the squared operator norm, i.e. the Lipschitz constant
    /// of the gradient of `0.5 * ||apply(x) - t||^2`.
    pub fn lipschitz_bound(&self) -> f64 {
        match &self.operator {
            Operator::Dense(d) => largest_eigenvalue_gram(&d.entries),
            Operator::Conv(k) => {
                // A linear convolution on n_r samples is a compression of the
                // circular one on n_r + N_k - 1 samples, so the circulant norm bounds it.
                let m = self.n_r + k.len() - 1;
                max_dft_power(k.taps(), m)
            }
        }
    }

    /// Explicit matrix acting on the row-major vectorization of the signal.
    pub fn materialize_dense(&self) -> Result<Array2<f64>> {
        let n = self.n_r * self.n_meas;
        if n > MATERIALIZE_LIMIT {
            let rows = self.data_shape().0 * self.data_shape().1;
            return Err(Error::TooLarge {
                rows,
                cols: n,
                limit: MATERIALIZE_LIMIT,
            });
        }
        match &self.operator {
            Operator::Dense(d) => Ok(d.entries.clone()),
            Operator::Conv(_) => {
                let mut out = Array2::zeros((n, n));
                for col in 0..n {
                    let mut e = Array2::zeros((self.n_r, self.n_meas));
                    e[(col / self.n_meas, col % self.n_meas)] = 1.0;
                    let y = self.apply(&MMVSignal::from_raw(e))?;
                    out.column_mut(col).assign(&ndarray::ArrayView1::from(y.values().as_slice().unwrap()));
                }
                Ok(out)
            }
        }
    }
}

fn max_dft_power(taps: &[f64], m: usize) -> f64 {
    let mut best = 0.0f64;
    for f in 0..m {
        let (mut re, mut im) = (0.0, 0.0);
        for (j, &t) in taps.iter().enumerate() {
            let phase = -2.0 * std::f64::consts::PI * ((f * j) % m) as f64 / m as f64;
            re += t * phase.cos();
            im += t * phase.sin();
        }
        best = best.max(re * re + im * im);
    }
    best
}

/// Power iteration on `A^T A` from a fixed start vector. Returns the Rayleigh
/// quotient plus the residual norm `||G v - rho v||`, so an estimate that has
/// not fully converged still errs on the high side.
fn largest_eigenvalue_gram(a: &Array2<f64>) -> f64 {
    let n = a.ncols();
    let mut v = Array1::from_iter((0..n).map(|i| 1.0 + 0.01 * ((i * 7919) % 101) as f64));
    let norm = v.dot(&v).sqrt();
    v /= norm;
    let mut bound = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let w = a.t().dot(&a.dot(&v));
        let rho = v.dot(&w);
        let r = &w - &(&v * rho);
        let residual = r.dot(&r).sqrt();
        bound = rho + residual;
        let wn = w.dot(&w).sqrt();
        if wn == 0.0 {
            return 0.0;
        }
        if residual <= POWER_TOLERANCE * rho {
            break;
        }
        v = w / wn;
    }
    bound
}

const COL_CHUNK: usize = 256;

/// Same-size zero-padded convolution along axis 0, accumulated into `out`:
/// `out[k, c] += sum_j taps[j] * x[k + h - j, c]`.
pub(crate) fn convolve_rows_acc(taps: &[f64], x: ArrayView2<f64>, mut out: ArrayViewMut2<f64>) {
    let (rows, cols) = x.dim();
    debug_assert_eq!(out.dim(), (rows, cols));
    let h = taps.len() / 2;
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let os = out.as_slice_mut().expect("standard layout");
    for c0 in (0..cols).step_by(COL_CHUNK) {
        let c1 = (c0 + COL_CHUNK).min(cols);
        for k in 0..rows {
            // source row i = k + h - j must lie in [0, rows)
            let j_lo = (k + h + 1).saturating_sub(rows);
            let j_hi = (k + h).min(taps.len() - 1);
            let dst = &mut os[k * cols + c0..k * cols + c1];
            for j in j_lo..=j_hi {
                let w = taps[j];
                if w == 0.0 {
                    continue;
                }
                let i = k + h - j;
                let src = &xs[i * cols + c0..i * cols + c1];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }
}

/// Adjoint of [`convolve_rows_acc`]: `out[k, c] += sum_j taps[j] * r[k - h + j, c]`.
pub(crate) fn correlate_rows_acc(taps: &[f64], r: ArrayView2<f64>, mut out: ArrayViewMut2<f64>) {
    let (rows, cols) = r.dim();
    debug_assert_eq!(out.dim(), (rows, cols));
    let h = taps.len() / 2;
    let r = r.as_standard_layout();
    let rs = r.as_slice().expect("standard layout");
    let os = out.as_slice_mut().expect("standard layout");
    for c0 in (0..cols).step_by(COL_CHUNK) {
        let c1 = (c0 + COL_CHUNK).min(cols);
        for k in 0..rows {
            // source row i = k - h + j must lie in [0, rows)
            let j_lo = h.saturating_sub(k);
            let j_hi = (rows + h - 1 - k).min(taps.len() - 1);
            let dst = &mut os[k * cols + c0..k * cols + c1];
            for j in j_lo..=j_hi {
                let w = taps[j];
                if w == 0.0 {
                    continue;
                }
                let i = k + j - h;
                let src = &rs[i * cols + c0..i * cols + c1];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }
}

pub(crate) fn convolve_rows(taps: &[f64], x: ArrayView2<f64>, mut out: ArrayViewMut2<f64>) {
    out.fill(0.0);
    convolve_rows_acc(taps, x, out);
}

pub(crate) fn correlate_rows(taps: &[f64], r: ArrayView2<f64>, mut out: ArrayViewMut2<f64>) {
    out.fill(0.0);
    correlate_rows_acc(taps, r, out);
}

/// Gradient of `<g, taps * x>` with respect to the taps:
/// `d[j] = sum_{k,c} g[k, c] * x[k + h - j, c]`. Summation order is fixed.
pub(crate) fn kernel_gradient(len: usize, x: ArrayView2<f64>, g: ArrayView2<f64>) -> Vec<f64> {
    let (rows, cols) = x.dim();
    let h = len / 2;
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let g = g.as_standard_layout();
    let gs = g.as_slice().expect("standard layout");
    let mut grad = vec![0.0; len];
    for (j, slot) in grad.iter_mut().enumerate() {
        let mut acc = 0.0;
        for k in 0..rows {
            let Some(i) = (k + h).checked_sub(j) else { continue };
            if i >= rows {
                continue;
            }
            let gr = &gs[k * cols..(k + 1) * cols];
            let xr = &xs[i * cols..(i + 1) * cols];
            acc += gr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
        }
        *slot = acc;
    }
    grad
}

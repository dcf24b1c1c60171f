//! The unrolled Block-ISTA network (LBISTA).
//!
//! Layer `i >= 1` computes `x_i = eta_{lambda_{i-1}}(S_{i-1} x_{i-1} + B_{i-1} y)`
//! with `x_0 = 0` inside the recursion. In tied mode every layer shares one
//! `S` and one `B`; in untied mode each layer owns its pair. The depth-0
//! output differs between modes: tied exposes the un-thresholded `B y`,
//! untied exposes zero.
//!
//! Batches are processed as *stacks*, a single row-major matrix in which
//! every contiguous run of `N_meas` values is one block:
//!
//! * convolution variant: `N_r x (N_B * N_meas)`, element `b` in columns
//!   `b*N_meas..(b+1)*N_meas`; kernels act along axis 0.
//! * dense variant: `N_B x (N_r * N_meas)` for signals and `N_B x N_d` for
//!   data, one row-major vectorized element per row; a weight matrix `M`
//!   acts as `stack * M^T`.

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::blocksparse::{threshold_chunks, MMVSignal, MeasurementSet};
use crate::error::{Error, Result};
use crate::linop::{convolve_rows_acc, correlate_rows_acc, kernel_gradient, LinearModel, Operator};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Tied,
    Untied,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tied" => Ok(Mode::Tied),
            "untied" => Ok(Mode::Untied),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Tied => "tied",
            Mode::Untied => "untied",
        })
    }
}

/// Operator-shaped trainable weight.
#[derive(Debug, Clone, PartialEq)]
pub enum Weight {
    /// Odd-length kernel applied with same-size zero-padded convolution.
    Kernel(Vec<f64>),
    /// `out_dim x in_dim` matrix.
    Matrix(Array2<f64>),
}

impl Weight {
    pub fn as_slice(&self) -> &[f64] {
        match self {
            Weight::Kernel(k) => k,
            Weight::Matrix(m) => m.as_slice().expect("standard layout"),
        }
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        match self {
            Weight::Kernel(k) => k,
            Weight::Matrix(m) => m.as_slice_mut().expect("standard layout"),
        }
    }

    pub fn len(&self) -> usize {
        self.as_slice().len()
    }

    pub fn is_empty(&self) -> bool {
        self.as_slice().is_empty()
    }

    pub fn zeros_like(&self) -> Weight {
        match self {
            Weight::Kernel(k) => Weight::Kernel(vec![0.0; k.len()]),
            Weight::Matrix(m) => Weight::Matrix(Array2::zeros(m.dim())),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        match self {
            Weight::Kernel(k) => vec![k.len()],
            Weight::Matrix(m) => vec![m.nrows(), m.ncols()],
        }
    }

    fn apply_acc(&self, input: ArrayView2<f64>, out: &mut Array2<f64>) {
        match self {
            Weight::Kernel(k) => convolve_rows_acc(k, input, out.view_mut()),
            Weight::Matrix(m) => ndarray::linalg::general_mat_mul(1.0, &input, &m.t(), 1.0, out),
        }
    }

    fn adjoint_acc(&self, upstream: ArrayView2<f64>, out: &mut Array2<f64>) {
        match self {
            Weight::Kernel(k) => correlate_rows_acc(k, upstream, out.view_mut()),
            Weight::Matrix(m) => ndarray::linalg::general_mat_mul(1.0, &upstream, m, 1.0, out),
        }
    }

    /// Gradient of `<upstream, W(input)>` with respect to the weight entries.
    fn gradient(&self, input: ArrayView2<f64>, upstream: ArrayView2<f64>) -> Weight {
        match self {
            Weight::Kernel(k) => Weight::Kernel(kernel_gradient(k.len(), input, upstream)),
            Weight::Matrix(_) => Weight::Matrix(upstream.t().dot(&input)),
        }
    }

    fn add_assign(&mut self, other: &Weight) {
        for (a, b) in self.as_mut_slice().iter_mut().zip(other.as_slice()) {
            *a += b;
        }
    }
}

/// Fixed boundary term of the convolution variant.
///
/// Composing two same-size zero-padded convolutions is not itself a
/// convolution: rows within half a kernel of either edge lose the energy
/// that the intermediate result would have carried outside the signal.
/// `S` is stored as a kernel on the full composition support and this sparse
/// term, `Toeplitz(b * phi) - B Phi` at initialization, restores the exact
/// operator `I - B Phi`. It is frozen during training.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeCorrection {
    pub entries: Vec<(usize, usize, f64)>,
}

impl EdgeCorrection {
    /// `C[i, l] = sum_{k outside [0, n_r)} b[i + hb - k] * phi[k + hp - l]`.
    pub fn between(b: &[f64], phi: &[f64], n_r: usize) -> Self {
        let (hb, hp) = ((b.len() / 2) as isize, (phi.len() / 2) as isize);
        let n = n_r as isize;
        let mut entries = Vec::new();
        for i in 0..n {
            for l in 0..n {
                let mut acc = 0.0;
                let mut touched = false;
                let k_range = (i + hb - b.len() as isize + 1).max(l + hp - phi.len() as isize + 1)..=(i + hb).min(l + hp);
                for k in k_range {
                    if (0..n).contains(&k) {
                        continue;
                    }
                    let bj = (i + hb - k) as usize;
                    let pj = (k + hp - l) as usize;
                    acc += b[bj] * phi[pj];
                    touched = true;
                }
                if touched && acc != 0.0 {
                    entries.push((i as usize, l as usize, acc));
                }
            }
        }
        Self { entries }
    }

    fn apply_acc(&self, input: ArrayView2<f64>, out: &mut Array2<f64>) {
        for &(i, l, v) in &self.entries {
            let src = input.row(l);
            out.row_mut(i).scaled_add(v, &src);
        }
    }

    fn adjoint_acc(&self, upstream: ArrayView2<f64>, out: &mut Array2<f64>) {
        for &(i, l, v) in &self.entries {
            let src = upstream.row(i);
            out.row_mut(l).scaled_add(v, &src);
        }
    }
}

/// Which forward model the network was built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum Layout {
    Conv { n_r: usize, n_meas: usize },
    Dense { n_r: usize, n_meas: usize, n_d: usize },
}

impl Layout {
    pub fn of(model: &LinearModel) -> Self {
        let (n_r, n_meas) = model.signal_shape();
        match model.operator() {
            Operator::Conv(_) => Layout::Conv { n_r, n_meas },
            Operator::Dense(d) => Layout::Dense {
                n_r,
                n_meas,
                n_d: d.entries().nrows(),
            },
        }
    }

    pub fn block_size(&self) -> usize {
        match *self {
            Layout::Conv { n_meas, .. } | Layout::Dense { n_meas, .. } => n_meas,
        }
    }

    pub fn signal_shape(&self) -> (usize, usize) {
        match *self {
            Layout::Conv { n_r, n_meas } | Layout::Dense { n_r, n_meas, .. } => (n_r, n_meas),
        }
    }

    pub fn data_shape(&self) -> (usize, usize) {
        match *self {
            Layout::Conv { n_r, n_meas } => (n_r, n_meas),
            Layout::Dense { n_d, .. } => (n_d, 1),
        }
    }

    /// Packs signals into a stack.
    pub fn stack_signals(&self, xs: &[MMVSignal]) -> Result<Array2<f64>> {
        let shape = self.signal_shape();
        let values: Vec<&Array2<f64>> = xs.iter().map(|x| x.values()).collect();
        self.stack(&values, shape)
    }

    pub fn stack_measurements(&self, ys: &[MeasurementSet]) -> Result<Array2<f64>> {
        let shape = self.data_shape();
        let values: Vec<&Array2<f64>> = ys.iter().map(|y| y.values()).collect();
        self.stack(&values, shape)
    }

    fn stack(&self, items: &[&Array2<f64>], shape: (usize, usize)) -> Result<Array2<f64>> {
        if items.is_empty() {
            return Err(Error::InvalidArgument("cannot stack an empty batch".into()));
        }
        if let Some(bad) = items.iter().find(|a| a.dim() != shape) {
            return Err(Error::dim("stack", format!("{shape:?}"), format!("{:?}", bad.dim())));
        }
        let views: Vec<ArrayView2<f64>> = items.iter().map(|a| a.view()).collect();
        Ok(match self {
            Layout::Conv { .. } => ndarray::concatenate(Axis(1), &views).unwrap().as_standard_layout().into_owned(),
            Layout::Dense { .. } => {
                let mut out = Array2::zeros((items.len(), shape.0 * shape.1));
                for (mut row, a) in out.rows_mut().into_iter().zip(items) {
                    row.assign(&ndarray::ArrayView1::from(a.as_slice().unwrap()));
                }
                out
            }
        })
    }

    pub fn batch_len(&self, stack: &Array2<f64>) -> usize {
        match self {
            Layout::Conv { n_meas, .. } => stack.ncols() / n_meas,
            Layout::Dense { .. } => stack.nrows(),
        }
    }

    /// Inverse of [`Layout::stack_signals`].
    pub fn unstack_signals(&self, stack: &Array2<f64>) -> Vec<MMVSignal> {
        let (n_r, n_meas) = self.signal_shape();
        (0..self.batch_len(stack))
            .map(|b| {
                let a = match self {
                    Layout::Conv { .. } => stack.slice(s![.., b * n_meas..(b + 1) * n_meas]).to_owned(),
                    Layout::Dense { .. } => stack.row(b).to_owned().into_shape_with_order((n_r, n_meas)).unwrap(),
                };
                MMVSignal::from_raw(a.as_standard_layout().into_owned())
            })
            .collect()
    }

    fn signal_stack_shape(&self, batch: usize) -> (usize, usize) {
        match *self {
            Layout::Conv { n_r, n_meas } => (n_r, batch * n_meas),
            Layout::Dense { n_r, n_meas, .. } => (batch, n_r * n_meas),
        }
    }

    fn check_data_stack(&self, y: &Array2<f64>) -> Result<usize> {
        let ok = match *self {
            Layout::Conv { n_r, n_meas } => y.nrows() == n_r && y.ncols() % n_meas == 0 && y.ncols() > 0,
            Layout::Dense { n_d, .. } => y.ncols() == n_d && y.nrows() > 0,
        };
        if !ok {
            return Err(Error::dim("network input", format!("{self:?}"), format!("{:?}", y.dim())));
        }
        Ok(self.batch_len(y))
    }
}

/// Trainable variables of the unrolled network plus the fixed edge term.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub mode: Mode,
    pub layout: Layout,
    /// One entry in tied mode, `K` entries in untied mode.
    pub s: Vec<Weight>,
    pub b: Vec<Weight>,
    /// Per-layer thresholds, always `K` entries.
    pub lambda: Vec<f64>,
    pub edge: Option<EdgeCorrection>,
}

impl NetworkParams {
    pub fn layers(&self) -> usize {
        self.lambda.len()
    }

    /// Index into `s`/`b` for zero-based layer `i`.
    pub fn slot(&self, layer: usize) -> usize {
        match self.mode {
            Mode::Tied => 0,
            Mode::Untied => layer,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.lambda.len();
        let expect = match self.mode {
            Mode::Tied => 1,
            Mode::Untied => k,
        };
        if k == 0 {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        if self.s.len() != expect || self.b.len() != expect {
            return Err(Error::InvalidArgument(format!(
                "{} network with {k} layers needs {expect} S/B weights, got {}/{}",
                self.mode,
                self.s.len(),
                self.b.len()
            )));
        }
        let finite = self.lambda.iter().all(|v| v.is_finite())
            && self.s.iter().chain(&self.b).all(|w| w.as_slice().iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::InvalidArgument("network parameters must be finite".into()));
        }
        let (n_r, n_meas) = self.layout.signal_shape();
        for (s, b) in self.s.iter().zip(&self.b) {
            let ok = match (self.layout, s, b) {
                (Layout::Conv { .. }, Weight::Kernel(ks), Weight::Kernel(kb)) => ks.len() % 2 == 1 && kb.len() % 2 == 1,
                (Layout::Dense { n_d, .. }, Weight::Matrix(ms), Weight::Matrix(mb)) => {
                    ms.dim() == (n_r * n_meas, n_r * n_meas) && mb.dim() == (n_r * n_meas, n_d)
                }
                _ => false,
            };
            if !ok {
                return Err(Error::InvalidArgument(format!(
                    "weight shapes {:?}/{:?} do not fit layout {:?}",
                    s.shape(),
                    b.shape(),
                    self.layout
                )));
            }
        }
        Ok(())
    }

    fn apply_s_acc(&self, layer: usize, input: ArrayView2<f64>, out: &mut Array2<f64>) {
        self.s[self.slot(layer)].apply_acc(input, out);
        if let Some(edge) = &self.edge {
            edge.apply_acc(input, out);
        }
    }

    pub(crate) fn adjoint_s_acc(&self, layer: usize, upstream: ArrayView2<f64>, out: &mut Array2<f64>) {
        self.s[self.slot(layer)].adjoint_acc(upstream, out);
        if let Some(edge) = &self.edge {
            edge.adjoint_acc(upstream, out);
        }
    }

    fn apply_b(&self, layer: usize, y: ArrayView2<f64>, batch: usize) -> Array2<f64> {
        let mut out = Array2::zeros(self.layout.signal_stack_shape(batch));
        self.b[self.slot(layer)].apply_acc(y, &mut out);
        out
    }
}

/// Builds the network that reproduces Block-ISTA with `(lambda0, gamma)`:
/// `B = 2 gamma A^T`, `S = I - B A`, every threshold `lambda0`.
pub fn init_params(model: &LinearModel, gamma: f64, lambda0: f64, layers: usize, mode: Mode) -> Result<NetworkParams> {
    if layers == 0 {
        return Err(Error::InvalidArgument("layer count must be at least 1".into()));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {gamma}")));
    }
    if !lambda0.is_finite() {
        return Err(Error::InvalidArgument("initial threshold must be finite".into()));
    }
    let l = model.lipschitz_bound();
    if gamma > 1.0 / l {
        log::warn!("step size {gamma} exceeds 1/L = {}", 1.0 / l);
    }
    let layout = Layout::of(model);
    let (s, b, edge) = match model.operator() {
        Operator::Conv(kernel) => {
            let phi = kernel.taps();
            let b: Vec<f64> = phi.iter().rev().map(|v| 2.0 * gamma * v).collect();
            let mut s: Vec<f64> = full_convolution(&b, phi).into_iter().map(|v| -v).collect();
            s[phi.len() - 1] += 1.0;
            let edge = EdgeCorrection::between(&b, phi, layout.signal_shape().0);
            (Weight::Kernel(s), Weight::Kernel(b), Some(edge))
        }
        Operator::Dense(d) => {
            let a = d.entries();
            let b = a.t().to_owned() * (2.0 * gamma);
            let n = a.ncols();
            let s = Array2::<f64>::eye(n) - b.dot(a);
            (
                Weight::Matrix(s.as_standard_layout().into_owned()),
                Weight::Matrix(b.as_standard_layout().into_owned()),
                None,
            )
        }
    };
    let copies = match mode {
        Mode::Tied => 1,
        Mode::Untied => layers,
    };
    Ok(NetworkParams {
        mode,
        layout,
        s: vec![s; copies],
        b: vec![b; copies],
        lambda: vec![lambda0; layers],
        edge,
    })
}

fn full_convolution(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Intermediates kept for the reverse sweep.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    pub depth: usize,
    pub batch: usize,
    /// Input data stack.
    pub y: Array2<f64>,
    /// `B y` per layer slot (one entry when tied).
    pub by: Vec<Array2<f64>>,
    /// Pre-threshold inputs `z_i`, layers `1..=depth`.
    pub pre: Vec<Array2<f64>>,
    /// Outputs `x_i` for `i = 0..=depth`; `outputs[0]` is the mode-specific
    /// depth-0 value.
    pub outputs: Vec<Array2<f64>>,
}

impl ForwardTape {
    pub fn output(&self) -> &Array2<f64> {
        self.outputs.last().expect("tape always holds the depth-0 output")
    }
}

/// Runs the network on a data stack, keeping every intermediate.
pub fn forward_tape_stack(params: &NetworkParams, y: &Array2<f64>, depth: usize) -> Result<ForwardTape> {
    if depth > params.layers() {
        return Err(Error::InvalidArgument(format!("depth {depth} exceeds layer count {}", params.layers())));
    }
    let batch = params.layout.check_data_stack(y)?;
    let block = params.layout.block_size();
    let shape = params.layout.signal_stack_shape(batch);

    let mut by = Vec::new();
    if params.mode == Mode::Tied {
        by.push(params.apply_b(0, y.view(), batch));
    }
    let x0 = match params.mode {
        Mode::Tied => by[0].clone(),
        Mode::Untied => Array2::zeros(shape),
    };
    let mut tape = ForwardTape {
        depth,
        batch,
        y: y.clone(),
        by,
        pre: Vec::with_capacity(depth),
        outputs: vec![x0],
    };
    for i in 1..=depth {
        let layer = i - 1;
        if params.mode == Mode::Untied {
            tape.by.push(params.apply_b(layer, y.view(), batch));
        }
        let mut z = tape.by[params.slot(layer)].clone();
        if i > 1 {
            params.apply_s_acc(layer, tape.outputs[i - 1].view(), &mut z);
        }
        let mut x = z.clone();
        threshold_chunks(x.as_slice_mut().unwrap(), block, params.lambda[layer]);
        tape.pre.push(z);
        tape.outputs.push(x);
    }
    Ok(tape)
}

/// Output stack at `depth` without keeping intermediates.
pub fn forward_stack(params: &NetworkParams, y: &Array2<f64>, depth: usize) -> Result<Array2<f64>> {
    if depth > params.layers() {
        return Err(Error::InvalidArgument(format!("depth {depth} exceeds layer count {}", params.layers())));
    }
    let batch = params.layout.check_data_stack(y)?;
    let block = params.layout.block_size();
    let tied_by = (params.mode == Mode::Tied).then(|| params.apply_b(0, y.view(), batch));
    let mut x = match &tied_by {
        Some(by) => by.clone(),
        None => Array2::zeros(params.layout.signal_stack_shape(batch)),
    };
    for i in 1..=depth {
        let layer = i - 1;
        let mut z = match &tied_by {
            Some(by) => by.clone(),
            None => params.apply_b(layer, y.view(), batch),
        };
        if i > 1 {
            params.apply_s_acc(layer, x.view(), &mut z);
        }
        threshold_chunks(z.as_slice_mut().unwrap(), block, params.lambda[layer]);
        x = z;
    }
    Ok(x)
}

/// Network output for one measurement set after `depth` layers (default: all).
pub fn forward(params: &NetworkParams, y: &MeasurementSet, depth: Option<usize>) -> Result<MMVSignal> {
    let out = forward_batch(params, std::slice::from_ref(y), depth)?;
    Ok(out.into_iter().next().unwrap())
}

pub fn forward_batch(params: &NetworkParams, ys: &[MeasurementSet], depth: Option<usize>) -> Result<Vec<MMVSignal>> {
    let stack = params.layout.stack_measurements(ys)?;
    let out = forward_stack(params, &stack, depth.unwrap_or(params.layers()))?;
    Ok(params.layout.unstack_signals(&out))
}

/// Per-layer outputs (depth 0 through K) for one measurement set, plus the tape.
pub fn forward_tape(params: &NetworkParams, y: &MeasurementSet) -> Result<(Vec<MMVSignal>, ForwardTape)> {
    let stack = params.layout.stack_measurements(std::slice::from_ref(y))?;
    let tape = forward_tape_stack(params, &stack, params.layers())?;
    let outs = tape
        .outputs
        .iter()
        .map(|o| params.layout.unstack_signals(o).into_iter().next().unwrap())
        .collect();
    Ok((outs, tape))
}

/// Weight gradient helper shared with training.
pub(crate) fn weight_gradient(w: &Weight, input: ArrayView2<f64>, upstream: ArrayView2<f64>) -> Weight {
    w.gradient(input, upstream)
}

pub(crate) fn weight_add(acc: &mut Weight, other: &Weight) {
    acc.add_assign(other)
}

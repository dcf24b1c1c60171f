//! Training of the unrolled network: the layer loss, an exact reverse sweep
//! through the forward tape, Adam, and the layer-by-layer schedule with
//! refinements.

use std::collections::BTreeMap;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::blocksparse::{threshold_chunks_vjp, MMVSignal, MeasurementSet};
use crate::error::{Error, Result};
use crate::lbista::{forward_tape_stack, init_params, weight_add, weight_gradient, ForwardTape, Mode, NetworkParams, Weight};
use crate::linop::LinearModel;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Identifies one trainable variable. `slot` is the layer for `Lambda` and
/// the weight slot (always 0 when tied) for `S` and `B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VarId {
    S(usize),
    B(usize),
    Lambda(usize),
}

/// The variable set trained at stage `stage` (`V^(stage)`); empty for stage 0.
pub fn stage_vars(params: &NetworkParams, stage: usize) -> Vec<VarId> {
    if stage == 0 {
        return Vec::new();
    }
    let layer = stage - 1;
    match params.mode {
        Mode::Tied => vec![VarId::Lambda(layer)],
        Mode::Untied => vec![VarId::S(layer), VarId::B(layer), VarId::Lambda(layer)],
    }
}

/// Every trainable variable (`V`).
pub fn all_vars(params: &NetworkParams) -> Vec<VarId> {
    let mut v: Vec<VarId> = (0..params.s.len()).map(VarId::S).collect();
    v.extend((0..params.b.len()).map(VarId::B));
    v.extend((0..params.layers()).map(VarId::Lambda));
    v
}

/// Gradients shaped like the parameters they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub s: Vec<Weight>,
    pub b: Vec<Weight>,
    pub lambda: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Self {
            s: params.s.iter().map(Weight::zeros_like).collect(),
            b: params.b.iter().map(Weight::zeros_like).collect(),
            lambda: vec![0.0; params.layers()],
        }
    }

    pub fn get(&self, id: VarId) -> &[f64] {
        match id {
            VarId::S(i) => self.s[i].as_slice(),
            VarId::B(i) => self.b[i].as_slice(),
            VarId::Lambda(i) => std::slice::from_ref(&self.lambda[i]),
        }
    }
}

fn param_slice_mut(params: &mut NetworkParams, id: VarId) -> &mut [f64] {
    match id {
        VarId::S(i) => params.s[i].as_mut_slice(),
        VarId::B(i) => params.b[i].as_mut_slice(),
        VarId::Lambda(i) => std::slice::from_mut(&mut params.lambda[i]),
    }
}

/// `0.5 * sum ||estimate - truth||^2`, averaged over batch elements.
pub fn loss(estimate: &[MMVSignal], truth: &[MMVSignal]) -> Result<f64> {
    if estimate.len() != truth.len() || estimate.is_empty() {
        return Err(Error::dim("loss batch", truth.len(), estimate.len()));
    }
    let mut total = 0.0;
    for (e, t) in estimate.iter().zip(truth) {
        if e.shape() != t.shape() {
            return Err(Error::dim("loss", format!("{:?}", t.shape()), format!("{:?}", e.shape())));
        }
        total += e.values().iter().zip(t.values()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(0.5 * total / estimate.len() as f64)
}

pub(crate) fn loss_stack(estimate: &Array2<f64>, truth: &Array2<f64>, batch: usize) -> f64 {
    let sq: f64 = estimate.iter().zip(truth.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    0.5 * sq / batch as f64
}

/// Gradients of the loss at the tape's depth for every variable.
pub fn backprop(params: &NetworkParams, tape: &ForwardTape, truth: &Array2<f64>) -> Result<Gradients> {
    backprop_selected(params, tape, truth, &all_vars(params))
}

/// Reverse sweep restricted to `vars`; gradients of other variables are left
/// at zero and layers below the lowest needed one are skipped.
pub fn backprop_selected(params: &NetworkParams, tape: &ForwardTape, truth: &Array2<f64>, vars: &[VarId]) -> Result<Gradients> {
    let out = tape.output();
    if out.dim() != truth.dim() {
        return Err(Error::dim("backprop", format!("{:?}", out.dim()), format!("{:?}", truth.dim())));
    }
    if tape.outputs.len() != tape.depth + 1 || tape.depth > params.layers() {
        return Err(Error::InvalidArgument("tape does not match these parameters".into()));
    }
    let mut grads = Gradients::zeros_like(params);
    let scale = 1.0 / tape.batch as f64;
    let mut upstream = (out - truth) * scale;
    let block = params.layout.block_size();
    let wants = |id: VarId| vars.contains(&id);
    let tied = params.mode == Mode::Tied;

    if tape.depth == 0 {
        if tied && wants(VarId::B(0)) {
            grads.b[0] = weight_gradient(&params.b[0], tape.y.view(), upstream.view());
        }
        return Ok(grads);
    }

    // Lowest 1-based layer whose variables (or whose upstream signal) is needed.
    let lowest = if tied && vars.iter().any(|v| matches!(v, VarId::S(_) | VarId::B(_))) {
        1
    } else {
        vars.iter()
            .map(|v| match *v {
                VarId::S(i) | VarId::B(i) | VarId::Lambda(i) => i + 1,
            })
            .min()
            .unwrap_or(tape.depth + 1)
    };

    let mut dz_sum: Option<Array2<f64>> = None;
    for i in (1..=tape.depth).rev() {
        if i < lowest {
            break;
        }
        let layer = i - 1;
        let slot = params.slot(layer);
        let z = &tape.pre[layer];
        let mut dz = Array2::zeros(z.dim());
        let dl = threshold_chunks_vjp(
            z.as_slice().unwrap(),
            params.lambda[layer],
            upstream.as_slice().unwrap(),
            dz.as_slice_mut().unwrap(),
            block,
        );
        grads.lambda[layer] = dl;

        if wants(VarId::B(slot)) {
            if tied {
                match dz_sum.as_mut() {
                    Some(acc) => *acc += &dz,
                    None => dz_sum = Some(dz.clone()),
                }
            } else {
                grads.b[slot] = weight_gradient(&params.b[slot], tape.y.view(), dz.view());
            }
        }
        if i > 1 {
            if wants(VarId::S(slot)) {
                let g = weight_gradient(&params.s[slot], tape.outputs[i - 1].view(), dz.view());
                weight_add(&mut grads.s[slot], &g);
            }
            if i - 1 >= lowest {
                let mut next = Array2::zeros(z.dim());
                params.adjoint_s_acc(layer, dz.view(), &mut next);
                upstream = next;
            }
        }
    }
    if let Some(acc) = dz_sum {
        grads.b[0] = weight_gradient(&params.b[0], tape.y.view(), acc.view());
    }
    Ok(grads)
}

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Bias-corrected Adam with per-variable moment accumulators.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub t: u64,
    moments: BTreeMap<VarId, Moments>,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
            t: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn first_moment(&self, id: VarId) -> Option<&[f64]> {
        self.moments.get(&id).map(|m| m.m.as_slice())
    }

    pub fn second_moment(&self, id: VarId) -> Option<&[f64]> {
        self.moments.get(&id).map(|m| m.v.as_slice())
    }

    fn update(&mut self, id: VarId, values: &mut [f64], grad: &[f64]) {
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.epsilon, self.learning_rate);
        let c1 = 1.0 - b1.powf(self.t as f64);
        let c2 = 1.0 - b2.powf(self.t as f64);
        let mom = self.moments.entry(id).or_insert_with(|| Moments {
            m: vec![0.0; values.len()],
            v: vec![0.0; values.len()],
        });
        for (((p, &g), m), v) in values.iter_mut().zip(grad).zip(mom.m.iter_mut()).zip(mom.v.iter_mut()) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let mhat = *m / c1;
            let vhat = *v / c2;
            *p -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
}

/// One Adam step on the variables in `vars`.
pub fn adam_step(state: &mut AdamState, params: &mut NetworkParams, grads: &Gradients, vars: &[VarId]) {
    state.t += 1;
    for &id in vars {
        let g = grads.get(id).to_vec();
        state.update(id, param_slice_mut(params, id), &g);
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub mode: Mode,
    /// Number of layers `K`.
    pub layers: usize,
    /// Step size used to initialize `B` and `S`; `1/L` when absent.
    #[serde(default)]
    pub gamma: Option<f64>,
    pub lambda0: f64,
    /// Adam rate `t_r`.
    pub learning_rate: f64,
    /// Refinement factors `f_m`, each in `(0, 1]`.
    pub refinements: Vec<f64>,
    /// Step budget of each while loop.
    pub max_iter: usize,
    #[serde(default)]
    pub seed: u64,
}

impl TrainConfig {
    /// Training parameters of the photothermal configuration.
    pub fn reference(mode: Mode) -> Self {
        Self {
            mode,
            layers: 6,
            gamma: Some(std::f64::consts::FRAC_1_SQRT_2),
            lambda0: 0.004,
            learning_rate: 0.001,
            refinements: vec![0.5, 0.1, 0.05],
            max_iter: match mode {
                Mode::Tied => 100_000,
                Mode::Untied => 10_000,
            },
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if let Some(f) = self.refinements.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(Error::Config(format!("refinement factors must lie in (0, 1], got {f}")));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if self.layers == 0 {
            return Err(Error::Config("layers must be at least 1".into()));
        }
        if let Some(g) = self.gamma {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::Config(format!("gamma must be positive, got {g}")));
            }
        }
        if !self.lambda0.is_finite() {
            return Err(Error::Config("lambda0 must be finite".into()));
        }
        Ok(())
    }
}

/// Training pairs: ground-truth signals and their measurements.
#[derive(Debug, Clone)]
pub struct TrainSet {
    pub x: Vec<MMVSignal>,
    pub y: Vec<MeasurementSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    /// Layer stage `i` of the schedule (`0..=K`).
    pub stage: usize,
    /// `None` for the stage's own variable set, `Some(f)` for a refinement.
    pub refinement: Option<f64>,
    pub learning_rate: f64,
    pub steps: usize,
    /// Loss before each step.
    pub losses: Vec<f64>,
    /// Loss after the last step.
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub schema_version: u32,
    pub config: TrainConfig,
    pub gamma: f64,
    pub batch_size: usize,
    pub stages: Vec<StageReport>,
    /// Loss of the full-depth network before and after training.
    pub initial_loss: f64,
    pub final_loss: f64,
    pub final_lambda: Vec<f64>,
    pub total_steps: usize,
    pub wall_seconds: f64,
}

impl TrainReport {
    pub fn loss_curve_csv(&self) -> String {
        let mut s = String::from("stage,refinement,step,loss\n");
        for st in &self.stages {
            let f = st.refinement.map(|f| f.to_string()).unwrap_or_default();
            for (i, l) in st.losses.iter().enumerate() {
                s.push_str(&format!("{},{},{},{:e}\n", st.stage, f, i, l));
            }
        }
        s
    }

    /// Every recorded loss in schedule order; used for determinism checks.
    pub fn all_losses(&self) -> Vec<f64> {
        self.stages.iter().flat_map(|s| s.losses.iter().copied().chain(std::iter::once(s.final_loss))).collect()
    }
}

struct Batch {
    y: Array2<f64>,
    x: Array2<f64>,
    n: usize,
}

fn stage_loss(params: &NetworkParams, batch: &Batch, depth: usize) -> Result<f64> {
    let tape = forward_tape_stack(params, &batch.y, depth)?;
    Ok(loss_stack(tape.output(), &batch.x, batch.n))
}

fn run_phase(
    params: &mut NetworkParams,
    batch: &Batch,
    depth: usize,
    vars: &[VarId],
    learning_rate: f64,
    max_iter: usize,
    label: &str,
) -> Result<(Vec<f64>, f64)> {
    let mut adam = AdamState::new(learning_rate);
    let mut losses = Vec::with_capacity(max_iter);
    for step in 0..max_iter {
        let tape = forward_tape_stack(params, &batch.y, depth)?;
        let l = loss_stack(tape.output(), &batch.x, batch.n);
        if !l.is_finite() {
            return Err(Error::Numerical {
                stage: format!("{label}, step {step}"),
                detail: format!("loss became {l}"),
            });
        }
        losses.push(l);
        let grads = backprop_selected(params, &tape, &batch.x, vars)?;
        adam_step(&mut adam, params, &grads, vars);
    }
    let final_loss = stage_loss(params, batch, depth)?;
    if !final_loss.is_finite() {
        return Err(Error::Numerical {
            stage: format!("{label}, after step {max_iter}"),
            detail: format!("loss became {final_loss}"),
        });
    }
    log::info!("{label}: loss {:.6e} -> {:.6e}", losses.first().copied().unwrap_or(final_loss), final_loss);
    Ok((losses, final_loss))
}

/// Layer-by-layer training: for each stage `i = 0..=K`, train `V^(i)` on
/// the depth-`i` loss (skipped when empty), then run every refinement on the
/// full variable set at rate `t_r * f`. Each loop gets its own `max_iter`
/// budget and a fresh optimizer.
pub fn train_layerwise(trainset: &TrainSet, model: &LinearModel, cfg: &TrainConfig) -> Result<(NetworkParams, TrainReport)> {
    cfg.validate()?;
    let gamma = cfg.gamma.unwrap_or_else(|| 1.0 / model.lipschitz_bound());
    let params = init_params(model, gamma, cfg.lambda0, cfg.layers, cfg.mode)?;
    train_from(params, trainset, cfg, gamma)
}

/// Same schedule as [`train_layerwise`] starting from existing parameters.
pub fn train_from(mut params: NetworkParams, trainset: &TrainSet, cfg: &TrainConfig, gamma: f64) -> Result<(NetworkParams, TrainReport)> {
    cfg.validate()?;
    params.validate()?;
    if trainset.x.len() != trainset.y.len() || trainset.x.is_empty() {
        return Err(Error::dim("training set", trainset.x.len(), trainset.y.len()));
    }
    let start = Instant::now();
    let batch = Batch {
        y: params.layout.stack_measurements(&trainset.y)?,
        x: params.layout.stack_signals(&trainset.x)?,
        n: trainset.x.len(),
    };
    let k = params.layers();
    let initial_loss = stage_loss(&params, &batch, k)?;
    let full = all_vars(&params);
    let mut stages = Vec::new();
    for stage in 0..=k {
        let own = stage_vars(&params, stage);
        if !own.is_empty() {
            let label = format!("stage {stage}");
            let (losses, final_loss) = run_phase(&mut params, &batch, stage, &own, cfg.learning_rate, cfg.max_iter, &label)?;
            stages.push(StageReport {
                stage,
                refinement: None,
                learning_rate: cfg.learning_rate,
                steps: losses.len(),
                losses,
                final_loss,
            });
        }
        for &f in &cfg.refinements {
            let lr = cfg.learning_rate * f;
            let label = format!("stage {stage} refinement {f}");
            let (losses, final_loss) = run_phase(&mut params, &batch, stage, &full, lr, cfg.max_iter, &label)?;
            stages.push(StageReport {
                stage,
                refinement: Some(f),
                learning_rate: lr,
                steps: losses.len(),
                losses,
                final_loss,
            });
        }
    }
    let final_loss = stage_loss(&params, &batch, k)?;
    let report = TrainReport {
        schema_version: 1,
        config: cfg.clone(),
        gamma,
        batch_size: batch.n,
        total_steps: stages.iter().map(|s| s.steps).sum(),
        stages,
        initial_loss,
        final_loss,
        final_lambda: params.lambda.clone(),
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((params, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lbista::Layout;
    use crate::linop::ConvKernel;
    use ndarray::array;

    fn sig(a: Array2<f64>) -> MMVSignal {
        MMVSignal::new(a).unwrap()
    }

    #[test]
    fn loss_examples() {
        let a = sig(array![[1.0, 2.0]]);
        assert_eq!(loss(&[a.clone()], &[a.clone()]).unwrap(), 0.0);
        let b = sig(array![[0.0, 1.0]]);
        assert_eq!(loss(&[a.clone()], &[b.clone()]).unwrap(), 1.0);
        // averaged over the batch
        assert_eq!(loss(&[a.clone(), a.clone()], &[b.clone(), a.clone()]).unwrap(), 0.5);
        assert!(loss(&[a.clone()], &[]).is_err());
        assert!(loss(&[a], &[sig(array![[1.0]])]).is_err());
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let model = LinearModel::conv(ConvKernel::new(vec![0.25, 0.5, 0.25]).unwrap(), 5, 2).unwrap();
        let mut p = init_params(&model, 0.5, 0.1, 2, Mode::Tied).unwrap();
        let before = p.clone();
        let mut st = AdamState::new(0.01);
        let g = Gradients::zeros_like(&p);
        adam_step(&mut st, &mut p, &g, &all_vars(&before));
        assert_eq!(p, before);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn adam_first_steps_by_hand() {
        let model = LinearModel::conv(ConvKernel::new(vec![1.0]).unwrap(), 2, 1).unwrap();
        let mut p = init_params(&model, 0.5, 0.3, 1, Mode::Tied).unwrap();
        let mut g = Gradients::zeros_like(&p);
        g.lambda[0] = 0.2;
        let mut st = AdamState::new(0.001);
        let ids = [VarId::Lambda(0)];
        adam_step(&mut st, &mut p, &g, &ids);
        // m1 = 0.02, v1 = 4e-5; mhat = 0.2, vhat = 0.04 -> step 0.001 * 0.2 / (0.2 + 1e-8)
        let step1 = 0.001 * 0.2 / (0.2 + 1e-8);
        assert!((p.lambda[0] - (0.3 - step1)).abs() < 1e-16);
        adam_step(&mut st, &mut p, &g, &ids);
        let m2 = 0.9 * 0.02 + 0.1 * 0.2;
        let v2 = 0.999 * 4e-5 + 0.001 * 0.04;
        let mhat = m2 / (1.0 - 0.81);
        let vhat = v2 / (1.0 - 0.999f64 * 0.999);
        let step2 = 0.001 * mhat / (vhat.sqrt() + 1e-8);
        assert!((p.lambda[0] - (0.3 - step1 - step2)).abs() < 1e-15);
        assert!((st.first_moment(ids[0]).unwrap()[0] - m2).abs() < 1e-12 * m2);
        assert!((st.second_moment(ids[0]).unwrap()[0] - v2).abs() < 1e-12 * v2);
    }

    #[test]
    fn dead_network_has_zero_lambda_gradient() {
        let model = LinearModel::conv(ConvKernel::new(vec![0.2, 0.6, 0.2]).unwrap(), 6, 2).unwrap();
        let p = init_params(&model, 0.5, 1e6, 3, Mode::Untied).unwrap();
        let y = Array2::from_shape_fn((6, 2), |(i, j)| (i + j) as f64 - 2.0);
        let x = Array2::from_shape_fn((6, 2), |(i, j)| (i * j) as f64);
        let tape = forward_tape_stack(&p, &y, 3).unwrap();
        let g = backprop(&p, &tape, &x).unwrap();
        assert_eq!(g.lambda, vec![0.0; 3]);
    }

    #[test]
    fn single_layer_b_gradient_is_least_squares_gradient() {
        // identity model, lambda 0: loss = 0.5 |b * y - x|^2, so dB = corr(y, b*y - x)
        let model = LinearModel::conv(ConvKernel::new(vec![0.0, 1.0, 0.0]).unwrap(), 5, 1).unwrap();
        let mut p = init_params(&model, 0.5, 0.0, 1, Mode::Tied).unwrap();
        p.b[0] = Weight::Kernel(vec![0.1, 0.7, -0.2]);
        let y = array![[1.0], [2.0], [-1.0], [0.5], [3.0]];
        let x = array![[0.0], [1.0], [0.0], [2.0], [0.0]];
        let tape = forward_tape_stack(&p, &y, 1).unwrap();
        let g = backprop(&p, &tape, &x).unwrap();
        let by = tape.by[0].clone();
        let r = &by - &x;
        let h = 1isize;
        for j in 0..3isize {
            let mut expect = 0.0;
            for k in 0..5isize {
                let i = k + h - j;
                if (0..5).contains(&i) {
                    expect += r[(k as usize, 0)] * y[(i as usize, 0)];
                }
            }
            assert!((g.b[0].as_slice()[j as usize] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn schedule_with_one_step() {
        let model = LinearModel::conv(ConvKernel::new(vec![0.25, 0.5, 0.25]).unwrap(), 6, 2).unwrap();
        let x = sig(Array2::from_shape_fn((6, 2), |(i, j)| if i == 2 { 1.0 + j as f64 } else { 0.0 }));
        let y = model.apply(&x).unwrap();
        let set = TrainSet { x: vec![x], y: vec![y] };
        let cfg = TrainConfig {
            mode: Mode::Tied,
            layers: 1,
            gamma: Some(0.5),
            lambda0: 0.1,
            learning_rate: 0.01,
            refinements: vec![],
            max_iter: 1,
            seed: 0,
        };
        let (p, report) = train_layerwise(&set, &model, &cfg).unwrap();
        assert_eq!(report.total_steps, 1);
        assert_eq!(report.stages.len(), 1);
        assert_eq!(report.stages[0].stage, 1);
        assert_ne!(p.lambda[0], 0.1);
        let init = init_params(&model, 0.5, 0.1, 1, Mode::Tied).unwrap();
        assert_eq!(p.s, init.s);
        assert_eq!(p.b, init.b);
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::reference(Mode::Tied);
        c.validate().unwrap();
        assert_eq!(c.max_iter, 100_000);
        assert_eq!(TrainConfig::reference(Mode::Untied).max_iter, 10_000);
        c.refinements = vec![1.5];
        assert!(c.validate().is_err());
        c.refinements = vec![0.5];
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn stage_variable_sets() {
        let model = LinearModel::conv(ConvKernel::new(vec![1.0]).unwrap(), 3, 1).unwrap();
        let tied = init_params(&model, 0.5, 0.1, 3, Mode::Tied).unwrap();
        assert!(stage_vars(&tied, 0).is_empty());
        assert_eq!(stage_vars(&tied, 2), vec![VarId::Lambda(1)]);
        assert_eq!(all_vars(&tied).len(), 5);
        let untied = init_params(&model, 0.5, 0.1, 3, Mode::Untied).unwrap();
        assert_eq!(stage_vars(&untied, 3), vec![VarId::S(2), VarId::B(2), VarId::Lambda(2)]);
        assert_eq!(all_vars(&untied).len(), 9);
        assert_eq!(untied.layout, Layout::Conv { n_r: 3, n_meas: 1 });
    }
}

//! Synthetic problem generation.
//!
//! Two families are supported. The Gaussian case draws a dense random matrix
//! acting on the vectorized signal. The photothermal case builds signals as
//! `x^m = I^m o a` (illumination times absorption) and blurs them with a
//! Gaussian thermal point spread function.
//!
//! Every random draw comes from its own ChaCha stream, keyed by the run seed,
//! a purpose tag and an instance index, so that changing one quantity (say,
//! the number of test instances) leaves all other draws untouched.

use std::path::Path;

use ndarray::{Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::blocksparse::{MMVSignal, MeasurementSet};
use crate::error::{Error, Result};
use crate::io;
use crate::linop::{ConvKernel, DenseModel, LinearModel};
use crate::train::TrainSet;

/// Purpose tags of the random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Matrix = 1,
    Signal = 2,
    Noise = 3,
    Defect = 4,
    Illumination = 5,
}

/// Independent generator for `(seed, purpose, index)`.
pub fn stream_rng(seed: u64, purpose: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 56) | (index & ((1 << 56) - 1)));
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianCaseConfig {
    pub n_r: usize,
    pub n_meas: usize,
    pub n_d: usize,
    /// Number of training instances.
    pub n_b: usize,
    /// Number of held-out instances.
    #[serde(default)]
    pub n_test: usize,
    pub pnz: f64,
    pub snr_db: f64,
    #[serde(default)]
    pub seed: u64,
}

impl GaussianCaseConfig {
    /// Full-size Gaussian configuration.
    pub fn reference() -> Self {
        Self {
            n_r: 32,
            n_meas: 32,
            n_d: 128,
            n_b: 150,
            n_test: 250,
            pnz: 0.1,
            snr_db: 20.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_r == 0 || self.n_meas == 0 || self.n_d == 0 || self.n_b == 0 {
            return Err(Error::Config("gaussian case: all dimensions must be at least 1".into()));
        }
        if !(self.pnz > 0.0 && self.pnz <= 1.0) {
            return Err(Error::Config(format!("gaussian case: pnz must lie in (0, 1], got {}", self.pnz)));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::Config("gaussian case: snr_db must be finite".into()));
        }
        Ok(())
    }

    /// Mean squared measurement value `PNZ * N_r * N_meas / N_d`.
    pub fn signal_power(&self) -> f64 {
        self.pnz * (self.n_r * self.n_meas) as f64 / self.n_d as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalPsfConfig {
    /// Thermal diffusivity in mm^2/s.
    pub diffusivity: f64,
    /// Time after the pulse at which the thermogram is taken, in s.
    pub evaluation_time: f64,
    /// Illumination pulse length in s.
    pub pulse_length: f64,
    /// Sum of the taps.
    #[serde(default = "one")]
    pub amplitude: f64,
    /// Taps on either side of the center.
    pub kernel_radius: usize,
}

fn one() -> f64 {
    1.0
}

impl Default for ThermalPsfConfig {
    fn default() -> Self {
        Self {
            diffusivity: 1.0,
            evaluation_time: 0.025,
            pulse_length: 0.01,
            amplitude: 1.0,
            kernel_radius: 18,
        }
    }
}

impl ThermalPsfConfig {
    pub fn effective_time(&self) -> f64 {
        self.evaluation_time + self.pulse_length / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.diffusivity) && ok(self.effective_time()) && ok(self.amplitude)) {
            return Err(Error::Config("psf: diffusivity, times and amplitude must be positive".into()));
        }
        if self.evaluation_time < 0.0 || self.pulse_length < 0.0 {
            return Err(Error::Config("psf: times must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalCaseConfig {
    pub n_r: usize,
    pub n_meas: usize,
    pub n_b: usize,
    #[serde(default)]
    pub n_test: usize,
    /// Defect width in mm.
    pub defect_width: f64,
    pub defect_pnz: f64,
    /// Absorption `[low, high]` outside and inside defects.
    pub absorption_levels: [f64; 2],
    /// Laser line width in mm.
    pub line_width: f64,
    pub illum_pnz: f64,
    pub snr_db: f64,
    /// Pixel pitch in mm.
    pub pixel_pitch: f64,
    #[serde(default)]
    pub psf: ThermalPsfConfig,
    #[serde(default)]
    pub seed: u64,
}

impl ThermalCaseConfig {
    /// Full-size photothermal configuration.
    pub fn reference() -> Self {
        Self {
            n_r: 1280,
            n_meas: 150,
            n_b: 150,
            n_test: 50,
            defect_width: 1.0,
            defect_pnz: 0.01,
            absorption_levels: [0.0, 1.0],
            line_width: 0.8,
            illum_pnz: 0.01,
            snr_db: 8.0,
            pixel_pitch: 0.05,
            psf: ThermalPsfConfig::default(),
            seed: 0,
        }
    }

    /// Scaled-down variant with the same widths, pitch and sparsities.
    pub fn desk() -> Self {
        Self {
            n_r: 256,
            n_meas: 30,
            n_b: 50,
            n_test: 50,
            ..Self::reference()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_r == 0 || self.n_meas == 0 || self.n_b == 0 {
            return Err(Error::Config("thermal case: all dimensions must be at least 1".into()));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(positive(self.defect_width) && positive(self.line_width) && positive(self.pixel_pitch)) {
            return Err(Error::Config("thermal case: widths and pixel pitch must be positive".into()));
        }
        for p in [self.defect_pnz, self.illum_pnz] {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Config(format!("thermal case: pnz must lie in (0, 1], got {p}")));
            }
        }
        if self.absorption_levels.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::Config("thermal case: absorption levels must lie in [0, 1]".into()));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::Config("thermal case: snr_db must be finite".into()));
        }
        self.psf.validate()
    }

    fn run_length(width: f64, pitch: f64) -> usize {
        ((width / pitch).round() as usize).max(1)
    }

    pub fn defect_pixels(&self) -> usize {
        Self::run_length(self.defect_width, self.pixel_pitch)
    }

    pub fn line_pixels(&self) -> usize {
        Self::run_length(self.line_width, self.pixel_pitch)
    }
}

/// Generated instances together with the operator that produced them.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: LinearModel,
    pub train: TrainSet,
    pub test: TrainSet,
    pub stats: NoiseStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseStats {
    /// Reference power used for calibration.
    pub mu2: f64,
    pub noise_variance: f64,
    /// Mean clean power over mean noise power actually drawn.
    pub realized_snr_db: f64,
}

fn noise_variance(mu2: f64, snr_db: f64) -> f64 {
    mu2 / 10f64.powf(snr_db / 10.0)
}

/// Adds seeded Gaussian noise to every clean measurement and reports the
/// realized signal-to-noise ratio.
fn add_noise(clean: Vec<Array2<f64>>, mu2: f64, snr_db: f64, seed: u64) -> Result<(Vec<MeasurementSet>, NoiseStats)> {
    let var = noise_variance(mu2, snr_db);
    let normal = Normal::new(0.0, var.sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let (mut clean_power, mut noise_power) = (0.0, 0.0);
    let mut out = Vec::with_capacity(clean.len());
    for (i, mut y) in clean.into_iter().enumerate() {
        let mut rng = stream_rng(seed, Stream::Noise, i as u64);
        for v in y.iter_mut() {
            let n: f64 = normal.sample(&mut rng);
            clean_power += *v * *v;
            noise_power += n * n;
            *v += n;
        }
        out.push(MeasurementSet::new(y)?);
    }
    let realized_snr_db = if noise_power > 0.0 {
        10.0 * (clean_power / noise_power).log10()
    } else {
        f64::INFINITY
    };
    Ok((
        out,
        NoiseStats {
            mu2,
            noise_variance: var,
            realized_snr_db,
        },
    ))
}

fn split(x: Vec<MMVSignal>, y: Vec<MeasurementSet>, n_train: usize) -> (TrainSet, TrainSet) {
    let mut x = x;
    let mut y = y;
    let x_test = x.split_off(n_train);
    let y_test = y.split_off(n_train);
    (TrainSet { x, y }, TrainSet { x: x_test, y: y_test })
}

/// Dense `N_d x (N_r N_meas)` matrix with i.i.d. `N(0, 1/N_d)` entries.
pub fn gaussian_matrix(cfg: &GaussianCaseConfig) -> Result<DenseModel> {
    let mut rng = stream_rng(cfg.seed, Stream::Matrix, 0);
    let scale = 1.0 / (cfg.n_d as f64).sqrt();
    let entries = Array2::from_shape_simple_fn((cfg.n_d, cfg.n_r * cfg.n_meas), || {
        let z: f64 = StandardNormal.sample(&mut rng);
        scale * z
    });
    DenseModel::new(entries, cfg.n_r, cfg.n_meas)
}

/// Block-sparse signal: each row is active with probability `pnz` and then
/// filled with standard normal entries.
pub fn gaussian_signal(cfg: &GaussianCaseConfig, index: u64) -> MMVSignal {
    let mut rng = stream_rng(cfg.seed, Stream::Signal, index);
    let mut x = Array2::zeros((cfg.n_r, cfg.n_meas));
    for mut row in x.rows_mut() {
        if rng.random::<f64>() < cfg.pnz {
            row.mapv_inplace(|_| -> f64 { StandardNormal.sample(&mut rng) });
        }
    }
    MMVSignal::from_raw(x)
}

/// Gaussian case: one fixed matrix, `n_b + n_test` block-sparse instances,
/// noise calibrated against `PNZ * N_r * N_meas / N_d`.
pub fn gen_gaussian_problem(cfg: &GaussianCaseConfig) -> Result<Problem> {
    cfg.validate()?;
    let model = LinearModel::dense(gaussian_matrix(cfg)?);
    let total = cfg.n_b + cfg.n_test;
    let xs: Vec<MMVSignal> = (0..total as u64).map(|i| gaussian_signal(cfg, i)).collect();
    let clean = xs
        .iter()
        .map(|x| model.apply(x).map(MeasurementSet::into_inner))
        .collect::<Result<Vec<_>>>()?;
    let (ys, stats) = add_noise(clean, cfg.signal_power(), cfg.snr_db, cfg.seed)?;
    let (train, test) = split(xs, ys, cfg.n_b);
    Ok(Problem { model, train, test, stats })
}

/// Paints runs of `run` pixels at `high` around Bernoulli(`pnz`) centers on
/// a background of `low`. Overlapping runs merge.
fn runs<R: Rng>(rng: &mut R, n: usize, pnz: f64, run: usize, low: f64, high: f64) -> Vec<f64> {
    let mut out = vec![low; n];
    let before = run / 2;
    for c in 0..n {
        if rng.random::<f64>() < pnz {
            let start = c.saturating_sub(before);
            let end = (c + run - before).min(n);
            out[start..end].iter_mut().for_each(|v| *v = high);
        }
    }
    out
}

/// Absorption profile of instance `index`.
pub fn gen_defect_pattern(cfg: &ThermalCaseConfig, index: u64) -> Vec<f64> {
    let mut rng = stream_rng(cfg.seed, Stream::Defect, index);
    let [low, high] = cfg.absorption_levels;
    runs(&mut rng, cfg.n_r, cfg.defect_pnz, cfg.defect_pixels(), low, high)
}

/// Illumination of measurement `m` of instance `index`: unit-amplitude lines.
pub fn gen_illumination(cfg: &ThermalCaseConfig, index: u64, m: usize) -> Vec<f64> {
    let mut rng = stream_rng(cfg.seed, Stream::Illumination, (index << 24) | m as u64);
    runs(&mut rng, cfg.n_r, cfg.illum_pnz, cfg.line_pixels(), 0.0, 1.0)
}

/// Gaussian surrogate of the reduced thermal point spread function:
/// `exp(-r^2 / (4 alpha t_eff))` on the pixel grid, normalized to sum to
/// `amplitude`.
pub fn thermal_psf(cfg: &ThermalPsfConfig, pixel_pitch: f64) -> Result<ConvKernel> {
    cfg.validate()?;
    if !(pixel_pitch.is_finite() && pixel_pitch > 0.0) {
        return Err(Error::Config(format!("pixel pitch must be positive, got {pixel_pitch}")));
    }
    let denom = 4.0 * cfg.diffusivity * cfg.effective_time();
    let weight = |r: usize| {
        let d = r as f64 * pixel_pitch;
        (-d * d / denom).exp()
    };
    let radius = cfg.kernel_radius;
    let mut taps: Vec<f64> = (0..=2 * radius).map(|i| weight(i.abs_diff(radius))).collect();
    let kept: f64 = taps.iter().sum();

    // untruncated mass, summed until the tail no longer matters
    let mut total = kept;
    let mut r = radius + 1;
    loop {
        let w = weight(r);
        total += 2.0 * w;
        if w < 1e-17 * total || r > radius + 1_000_000 {
            break;
        }
        r += 1;
    }
    if kept < 0.999 * total {
        log::warn!(
            "psf radius {radius} keeps only {:.4}% of the kernel mass",
            100.0 * kept / total
        );
    }
    taps.iter_mut().for_each(|t| *t *= cfg.amplitude / kept);
    Ok(ConvKernel::new(taps)?.with_pitch(pixel_pitch))
}

/// Photothermal case: a fresh absorption profile per instance, fresh lines
/// per measurement, `Y = phi * X + noise` with the reference power taken as
/// the mean squared clean measurement over every generated instance.
pub fn gen_thermal_problem(cfg: &ThermalCaseConfig) -> Result<Problem> {
    cfg.validate()?;
    let kernel = thermal_psf(&cfg.psf, cfg.pixel_pitch)?;
    let model = LinearModel::conv(kernel, cfg.n_r, cfg.n_meas)?;
    let total = cfg.n_b + cfg.n_test;
    let mut xs = Vec::with_capacity(total);
    let mut clean = Vec::with_capacity(total);
    let (mut sum_sq, mut count) = (0.0, 0usize);
    for i in 0..total as u64 {
        let a = gen_defect_pattern(cfg, i);
        let mut x = Array2::zeros((cfg.n_r, cfg.n_meas));
        for m in 0..cfg.n_meas {
            let light = gen_illumination(cfg, i, m);
            for (r, v) in x.column_mut(m).iter_mut().enumerate() {
                *v = light[r] * a[r];
            }
        }
        let x = MMVSignal::from_raw(x);
        let y = model.apply(&x)?.into_inner();
        sum_sq += y.iter().map(|v| v * v).sum::<f64>();
        count += y.len();
        xs.push(x);
        clean.push(y);
    }
    let mu2 = sum_sq / count as f64;
    if mu2 == 0.0 {
        log::warn!("all generated clean measurements are zero; noise variance is zero");
    }
    let (ys, stats) = add_noise(clean, mu2, cfg.snr_db, cfg.seed)?;
    let (train, test) = split(xs, ys, cfg.n_b);
    Ok(Problem { model, train, test, stats })
}

/// Case description stored in a dataset manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "lowercase")]
pub enum CaseConfig {
    Gaussian(GaussianCaseConfig),
    Thermal(ThermalCaseConfig),
}

impl CaseConfig {
    pub fn generate(&self) -> Result<Problem> {
        match self {
            CaseConfig::Gaussian(c) => gen_gaussian_problem(c),
            CaseConfig::Thermal(c) => gen_thermal_problem(c),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            CaseConfig::Gaussian(c) => c.seed,
            CaseConfig::Thermal(c) => c.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub config: CaseConfig,
    pub noise: NoiseStats,
    /// How the reference power `mu2` was obtained.
    pub snr_reference: String,
    pub seed_streams: Vec<String>,
    pub train_size: usize,
    pub test_size: usize,
    pub signal_shape: [usize; 2],
    pub data_shape: [usize; 2],
    pub files: DatasetFiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFiles {
    pub model: String,
    pub train_x: String,
    pub train_y: String,
    pub test_x: Option<String>,
    pub test_y: Option<String>,
}

pub const DATASET_MANIFEST: &str = "manifest.json";

/// Stacks equally shaped matrices into an `n x rows x cols` array.
pub fn stack3<'a>(items: impl IntoIterator<Item = &'a Array2<f64>>) -> Result<Array3<f64>> {
    let views: Vec<_> = items.into_iter().map(|a| a.view().insert_axis(Axis(0))).collect();
    if views.is_empty() {
        return Err(Error::InvalidArgument("cannot stack zero matrices".into()));
    }
    ndarray::concatenate(Axis(0), &views)
        .map(|a| a.as_standard_layout().into_owned())
        .map_err(|e| Error::InvalidArgument(format!("ragged matrices: {e}")))
}

pub fn unstack3(a: &Array3<f64>) -> Vec<Array2<f64>> {
    a.outer_iter().map(|m| m.to_owned()).collect()
}

/// Loaded dataset directory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub model: LinearModel,
    pub train: TrainSet,
    pub test: TrainSet,
}

fn describe_reference(cfg: &CaseConfig) -> String {
    match cfg {
        CaseConfig::Gaussian(_) => "mu2 = pnz * n_r * n_meas / n_d".into(),
        CaseConfig::Thermal(_) => "mu2 = mean squared clean measurement over all generated instances".into(),
    }
}

/// Writes `problem` with its manifest into `dir`.
pub fn write_dataset(dir: impl AsRef<Path>, cfg: &CaseConfig, problem: &Problem) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    io::ensure_dir(dir)?;
    io::save_model(dir, &problem.model)?;
    let write_set = |set: &TrainSet, prefix: &str| -> Result<Option<(String, String)>> {
        if set.x.is_empty() {
            return Ok(None);
        }
        let (fx, fy) = (format!("{prefix}_x.bsr"), format!("{prefix}_y.bsr"));
        io::write_array3(dir.join(&fx), &stack3(set.x.iter().map(MMVSignal::values))?)?;
        io::write_array3(dir.join(&fy), &stack3(set.y.iter().map(MeasurementSet::values))?)?;
        Ok(Some((fx, fy)))
    };
    let (train_x, train_y) = write_set(&problem.train, "train")?.expect("training set is never empty");
    let test = write_set(&problem.test, "test")?;
    let (sr, sc) = problem.model.signal_shape();
    let (dr, dc) = problem.model.data_shape();
    let manifest = DatasetManifest {
        schema_version: io::SCHEMA_VERSION,
        tool_version: io::TOOL_VERSION.into(),
        config: cfg.clone(),
        noise: problem.stats,
        snr_reference: describe_reference(cfg),
        seed_streams: vec![
            "chacha8(seed) with stream = purpose << 56 | index".into(),
            "purposes: 1 matrix, 2 signal, 3 noise, 4 defect, 5 illumination".into(),
            "illumination index = instance << 24 | measurement".into(),
        ],
        train_size: problem.train.x.len(),
        test_size: problem.test.x.len(),
        signal_shape: [sr, sc],
        data_shape: [dr, dc],
        files: DatasetFiles {
            model: io::MODEL_MANIFEST.into(),
            train_x,
            train_y,
            test_x: test.as_ref().map(|t| t.0.clone()),
            test_y: test.map(|t| t.1),
        },
    };
    io::write_json(dir.join(DATASET_MANIFEST), &manifest)?;
    Ok(manifest)
}

fn read_set(dir: &Path, fx: &str, fy: &str) -> Result<TrainSet> {
    let x = unstack3(&io::read_array3(dir.join(fx))?)
        .into_iter()
        .map(MMVSignal::new)
        .collect::<Result<Vec<_>>>()?;
    let y = unstack3(&io::read_array3(dir.join(fy))?)
        .into_iter()
        .map(MeasurementSet::new)
        .collect::<Result<Vec<_>>>()?;
    if x.len() != y.len() {
        return Err(Error::format(dir.join(fx), format!("{} signals but {} measurement sets", x.len(), y.len())));
    }
    Ok(TrainSet { x, y })
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let manifest: DatasetManifest = io::read_json(dir.join(DATASET_MANIFEST))?;
    let model = io::load_model(dir.join(&manifest.files.model))?;
    let train = read_set(dir, &manifest.files.train_x, &manifest.files.train_y)?;
    let test = match (&manifest.files.test_x, &manifest.files.test_y) {
        (Some(fx), Some(fy)) => read_set(dir, fx, fy)?,
        _ => TrainSet { x: vec![], y: vec![] },
    };
    Ok(Dataset {
        manifest,
        model,
        train,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_gaussian() -> GaussianCaseConfig {
        GaussianCaseConfig {
            n_r: 6,
            n_meas: 3,
            n_d: 10,
            n_b: 4,
            n_test: 2,
            pnz: 0.5,
            snr_db: 20.0,
            seed: 7,
        }
    }

    fn small_thermal() -> ThermalCaseConfig {
        ThermalCaseConfig {
            n_r: 64,
            n_meas: 4,
            n_b: 3,
            n_test: 1,
            defect_pnz: 0.05,
            illum_pnz: 0.1,
            ..ThermalCaseConfig::reference()
        }
    }

    #[test]
    fn full_activity_fills_every_row() {
        let cfg = GaussianCaseConfig { pnz: 1.0, ..small_gaussian() };
        let p = gen_gaussian_problem(&cfg).unwrap();
        for x in &p.train.x {
            assert!(x.values().rows().into_iter().all(|r| r.iter().any(|&v| v != 0.0)));
        }
    }

    #[test]
    fn inactive_rows_are_exactly_zero() {
        let p = gen_gaussian_problem(&small_gaussian()).unwrap();
        for x in p.train.x.iter().chain(&p.test.x) {
            for r in x.values().rows() {
                assert!(r.iter().all(|&v| v == 0.0) || r.iter().all(|&v| v != 0.0));
            }
        }
        assert_eq!(p.train.x.len(), 4);
        assert_eq!(p.test.x.len(), 2);
        assert_eq!(p.train.y[0].shape(), (10, 1));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_gaussian_problem(&small_gaussian()).unwrap();
        let b = gen_gaussian_problem(&small_gaussian()).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.train.y, b.train.y);
        let c = gen_gaussian_problem(&GaussianCaseConfig { seed: 8, ..small_gaussian() }).unwrap();
        assert_ne!(a.model, c.model);
    }

    #[test]
    fn test_count_does_not_disturb_training_draws() {
        let a = gen_gaussian_problem(&small_gaussian()).unwrap();
        let b = gen_gaussian_problem(&GaussianCaseConfig { n_test: 9, ..small_gaussian() }).unwrap();
        assert_eq!(a.train.x, b.train.x);
        assert_eq!(a.train.y, b.train.y);
    }

    #[test]
    fn single_defect_run_length() {
        let cfg = small_thermal();
        assert_eq!(cfg.defect_pixels(), 20);
        assert_eq!(cfg.line_pixels(), 16);
        let mut rng = stream_rng(1, Stream::Defect, 0);
        // pnz = 1 at a single pixel grid yields one run clipped to the grid
        let a = runs(&mut rng, 1, 1.0, 20, 0.0, 1.0);
        assert_eq!(a, vec![1.0]);
        // a run centered mid-grid spans exactly `run` pixels
        let mut count = 0;
        for seed in 0..200u64 {
            let mut rng = stream_rng(seed, Stream::Defect, 0);
            let a = runs(&mut rng, 100, 0.01, 20, 0.0, 1.0);
            let lit: Vec<usize> = (0..100).filter(|&i| a[i] == 1.0).collect();
            if lit.len() == 20 && lit[0] > 0 && lit[19] < 99 {
                assert_eq!(lit[19] - lit[0], 19);
                count += 1;
            }
        }
        assert!(count > 0);
    }

    #[test]
    fn patterns_use_the_two_levels() {
        let cfg = small_thermal();
        for i in 0..5 {
            assert!(gen_defect_pattern(&cfg, i).iter().all(|&v| v == 0.0 || v == 1.0));
            assert!(gen_illumination(&cfg, i, 2).iter().all(|&v| v == 0.0 || v == 1.0));
        }
        let tiny = ThermalCaseConfig { defect_pnz: 1e-300, ..cfg };
        assert!(gen_defect_pattern(&tiny, 0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn psf_properties() {
        let k = thermal_psf(&ThermalPsfConfig::default(), 0.05).unwrap();
        let taps = k.taps();
        assert_eq!(taps.len(), 37);
        assert!(k.is_symmetric());
        assert!((taps.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let center = taps.len() / 2;
        assert!(taps.iter().all(|&t| t >= 0.0 && t <= taps[center]));

        let narrow = ThermalPsfConfig {
            diffusivity: 1e-9,
            evaluation_time: 1e-9,
            pulse_length: 0.0,
            amplitude: 1.0,
            kernel_radius: 3,
        };
        let d = thermal_psf(&narrow, 0.05).unwrap();
        assert_eq!(d.taps(), &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn thermal_signals_are_masked_lines() {
        let cfg = small_thermal();
        let p = gen_thermal_problem(&cfg).unwrap();
        let a = gen_defect_pattern(&cfg, 1);
        let x = &p.train.x[1];
        for m in 0..cfg.n_meas {
            let light = gen_illumination(&cfg, 1, m);
            for r in 0..cfg.n_r {
                assert_eq!(x.values()[(r, m)], light[r] * a[r]);
            }
        }
        assert!(p.stats.noise_variance > 0.0);
        assert_eq!(p.model.signal_shape(), (64, 4));
    }

    #[test]
    fn dataset_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = CaseConfig::Gaussian(small_gaussian());
        let p = cfg.generate().unwrap();
        let m = write_dataset(dir.path(), &cfg, &p).unwrap();
        let d = read_dataset(dir.path()).unwrap();
        assert_eq!(d.manifest, m);
        assert_eq!(d.model, p.model);
        assert_eq!(d.train.x, p.train.x);
        assert_eq!(d.test.y, p.test.y);
    }
}

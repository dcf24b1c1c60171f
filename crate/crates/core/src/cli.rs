//! Command-line interface.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use ndarray::{Array1, Array2, ArrayD, Axis};
use serde::Serialize;
use serde_json::json;

use crate::bista::{bista_solve, default_gamma, SolveTrace, TraceEntry, DEFAULT_LAMBDA};
use crate::blocksparse::{objective, MMVSignal, MeasurementSet};
use crate::config::{write_run_info, BistaConfig, RunConfig};
use crate::datagen::{self, stack3, CaseConfig};
use crate::error::{Error, Result};
use crate::ingest;
use crate::io;
use crate::lbista::{forward_tape, Mode};
use crate::linop::LinearModel;
use crate::metrics::{self, ci95, Ci95, NmseCurve};
use crate::plot::{LinePlot, Series};
use crate::train::train_layerwise;

#[derive(Debug, Parser)]
#[command(name = "bsr", version, about = "Block-sparse recovery with Block-ISTA and learned LBISTA networks")]
pub struct Cli {
    /// Worker cap. Commands currently run on one thread.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Gen {
        #[arg(value_enum)]
        case: GenCase,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an LBISTA network on a dataset's training split.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        mode: Mode,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct signals from measurements.
    Solve {
        #[command(subcommand)]
        solver: Solver,
    },
    /// Reduce thermal sequences to a measurement set.
    Preprocess {
        #[arg(long)]
        sequences: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare estimates with ground truth.
    Eval {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Directory of `trace*.csv` files; may be repeated.
        #[arg(long)]
        curve: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum GenCase {
    Gaussian,
    Thermal,
}

#[derive(Debug, clap::Args)]
pub struct SolveIo {
    /// Measurement file: one set (2D) or a stack of sets (3D).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Model manifest or directory; defaults to `model.json` next to the data.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Ground-truth signals, for NMSE traces.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Solver {
    Bista {
        #[arg(long, default_value_t = DEFAULT_LAMBDA)]
        lambda: f64,
        /// Step size; `1/L` when omitted.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, default_value_t = 500)]
        iters: usize,
        #[command(flatten)]
        io: SolveIo,
    },
    Lbista {
        #[arg(long)]
        params: PathBuf,
        /// Number of layers to apply; all when omitted.
        #[arg(long)]
        depth: Option<usize>,
        #[command(flatten)]
        io: SolveIo,
    },
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        log::info!("worker cap {n}; commands run sequentially");
    }
    match cli.command {
        Command::Gen { case, config, out } => cmd_gen(case, &config, &out),
        Command::Train { data, mode, config, out } => cmd_train(&data, mode, &config, &out),
        Command::Solve { solver } => cmd_solve(solver),
        Command::Preprocess { sequences, out } => cmd_preprocess(&sequences, &out),
        Command::Eval {
            estimate,
            truth,
            curve,
            out,
        } => cmd_eval(&estimate, &truth, &curve, &out),
    }
}

fn cmd_gen(case: GenCase, config: &Path, out: &Path) -> Result<()> {
    let run = RunConfig::load(config)?;
    let case_cfg = match case {
        GenCase::Gaussian => CaseConfig::Gaussian(run.gaussian.clone().ok_or_else(|| Error::Config("missing [gaussian] table".into()))?),
        GenCase::Thermal => CaseConfig::Thermal(run.thermal.clone().ok_or_else(|| Error::Config("missing [thermal] table".into()))?),
    };
    let problem = case_cfg.generate()?;
    let manifest = datagen::write_dataset(out, &case_cfg, &problem)?;
    write_run_info(out, "gen", json!({ "config": run, "case": case_cfg }))?;
    log::info!(
        "wrote {} training and {} test instances to {}",
        manifest.train_size,
        manifest.test_size,
        out.display()
    );
    Ok(())
}

fn cmd_train(data: &Path, mode: Mode, config: &Path, out: &Path) -> Result<()> {
    let run = RunConfig::load(config)?;
    let mut cfg = run.train.clone().ok_or_else(|| Error::Config("missing [train] table".into()))?;
    cfg.mode = mode;
    let dataset = datagen::read_dataset(data)?;
    let (params, report) = train_layerwise(&dataset.train, &dataset.model, &cfg)?;
    io::ensure_dir(out)?;
    io::save_params(
        out,
        &params,
        json!({
            "dataset": data.display().to_string(),
            "dataset_config": dataset.manifest.config,
            "train": cfg,
            "gamma": report.gamma,
        }),
    )?;
    io::save_model(out.join("model"), &dataset.model)?;
    let mut stable = report.clone();
    stable.wall_seconds = 0.0;
    io::write_json(out.join("train_report.json"), &stable)?;
    io::write_text(out.join("timing.json"), &format!("{{\"wall_seconds\": {}}}\n", report.wall_seconds))?;
    io::write_text(out.join("loss_curve.csv"), &report.loss_curve_csv())?;
    let losses = report.all_losses();
    let plot = LinePlot::new("training loss", "Adam step", "loss").with(Series::indexed(format!("{mode}"), losses));
    io::write_text(out.join("loss_curve.svg"), &plot.to_svg())?;
    write_run_info(out, "train", json!({ "config": run.clone(), "train": cfg, "data": data.display().to_string() }))?;
    log::info!("loss {:.6e} -> {:.6e} in {} steps", report.initial_loss, report.final_loss, report.total_steps);
    Ok(())
}

/// Finds the model for a data file: explicit path, else `model.json` in the
/// file's directory or its parent.
fn resolve_model(data: &Path, explicit: Option<&Path>) -> Result<LinearModel> {
    if let Some(p) = explicit {
        return io::load_model(p);
    }
    let dir = data.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    for candidate in [dir.to_path_buf(), dir.join("..")] {
        if candidate.join(io::MODEL_MANIFEST).is_file() {
            return io::load_model(candidate);
        }
    }
    Err(Error::Config(format!("no --model given and no {} next to {}", io::MODEL_MANIFEST, data.display())))
}

/// Reads one matrix (2D) or a stack (3D) as a list of matrices.
fn read_instances(path: &Path) -> Result<(Vec<Array2<f64>>, bool)> {
    let a: ArrayD<f64> = io::read_matrix(path)?;
    match a.ndim() {
        2 => Ok((vec![a.into_dimensionality().unwrap()], false)),
        3 => Ok((datagen::unstack3(&a.into_dimensionality().unwrap()), true)),
        d => Err(Error::format(path, format!("expected a 2D or 3D matrix file, got {d}D"))),
    }
}

fn write_instances(path: &Path, items: &[Array2<f64>], stacked: bool) -> Result<()> {
    if stacked {
        io::write_array3(path, &stack3(items)?)
    } else {
        io::write_array2(path, &items[0])
    }
}

fn read_truth(path: Option<&Path>, count: usize) -> Result<Option<Vec<MMVSignal>>> {
    let Some(path) = path else { return Ok(None) };
    let (items, _) = read_instances(path)?;
    if items.len() != count {
        return Err(Error::dim("ground truth count", count, items.len()));
    }
    Ok(Some(items.into_iter().map(MMVSignal::new).collect::<Result<Vec<_>>>()?))
}

fn trace_name(i: usize, stacked: bool) -> String {
    if stacked {
        format!("trace_{i:04}.csv")
    } else {
        "trace.csv".into()
    }
}

fn cmd_solve(solver: Solver) -> Result<()> {
    let (io_args, label) = match &solver {
        Solver::Bista { io, .. } => (io, "bista"),
        Solver::Lbista { io, .. } => (io, "lbista"),
    };
    let (data, stacked) = read_instances(&io_args.data)?;
    let ys = data.into_iter().map(MeasurementSet::new).collect::<Result<Vec<_>>>()?;
    let truth = read_truth(io_args.truth.as_deref(), ys.len())?;
    let out = &io_args.out;
    io::ensure_dir(out)?;

    let mut estimates = Vec::with_capacity(ys.len());
    let resolved;
    match &solver {
        Solver::Bista { lambda, gamma, iters, io: sio } => {
            let model = resolve_model(&sio.data, sio.model.as_deref())?;
            let gamma = gamma.unwrap_or_else(|| default_gamma(&model));
            for (i, y) in ys.iter().enumerate() {
                let gt = truth.as_ref().map(|t| &t[i]);
                let (x, trace) = bista_solve(&model, y, *lambda, gamma, *iters, gt)?;
                io::write_text(out.join(trace_name(i, stacked)), &trace.to_csv())?;
                estimates.push(x);
            }
            resolved = json!({
                "solver": "bista",
                "bista": BistaConfig { lambda: *lambda, gamma: Some(gamma), iters: *iters },
                "lipschitz_bound": model.lipschitz_bound(),
            });
        }
        Solver::Lbista { params, depth, io: sio } => {
            let net = io::load_params(params)?;
            let model = match &sio.model {
                Some(p) => io::load_model(p)?,
                None => io::load_model(params.join("model")).or_else(|_| resolve_model(&sio.data, None))?,
            };
            let depth = depth.unwrap_or(net.layers());
            if depth > net.layers() {
                return Err(Error::InvalidArgument(format!("depth {depth} exceeds the {} trained layers", net.layers())));
            }
            for (i, y) in ys.iter().enumerate() {
                let (outputs, _) = forward_tape(&net, y)?;
                let mut trace = SolveTrace::default();
                for (d, x) in outputs.iter().enumerate().take(depth + 1) {
                    let lam = net.lambda[d.saturating_sub(1).min(net.layers() - 1)];
                    trace.entries.push(TraceEntry {
                        iteration: d,
                        objective: objective(&model, x, y, lam)?,
                        nmse_db: truth.as_ref().and_then(|t| metrics::nmse_db(x, &t[i]).ok()),
                        seconds: 0.0,
                    });
                }
                io::write_text(out.join(trace_name(i, stacked)), &trace.to_csv())?;
                estimates.push(outputs[depth].clone());
            }
            resolved = json!({
                "solver": "lbista",
                "params": params.display().to_string(),
                "mode": net.mode,
                "depth": depth,
                "lambda": net.lambda,
            });
        }
    }

    let values: Vec<Array2<f64>> = estimates.iter().map(|x| x.values().clone()).collect();
    write_instances(&out.join("estimate.bsr"), &values, stacked)?;
    let profiles: Vec<Array1<f64>> = estimates.iter().map(metrics::defect_estimate).collect();
    let profile_matrix = ndarray::stack(Axis(0), &profiles.iter().map(|p| p.view()).collect::<Vec<_>>()).unwrap();
    let csv = if stacked {
        io::to_csv(&profile_matrix.into_dyn())?
    } else {
        io::to_csv(&profiles[0].clone().into_dyn())?
    };
    io::write_text(out.join("defect_profile.csv"), &csv)?;
    let mut plot = LinePlot::new("defect estimate", "position", "normalized amplitude").with(Series::indexed(label, profiles[0].to_vec()));
    if let Some(t) = &truth {
        plot = plot.with(Series::indexed("truth", metrics::defect_estimate(&t[0]).to_vec()));
    }
    io::write_text(out.join("defect_profile.svg"), &plot.to_svg())?;
    write_run_info(
        out,
        "solve",
        json!({
            "resolved": resolved,
            "data": io_args.data.display().to_string(),
            "truth": io_args.truth.as_ref().map(|p| p.display().to_string()),
            "instances": ys.len(),
        }),
    )?;
    Ok(())
}

fn cmd_preprocess(sequences: &Path, out: &Path) -> Result<()> {
    let (set, records) = ingest::preprocess_dir(sequences)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        io::ensure_dir(parent)?;
    }
    io::write_array2(out, set.values())?;
    let mut side = out.as_os_str().to_owned();
    side.push(".json");
    io::write_json(
        PathBuf::from(side),
        &json!({
            "schema_version": io::SCHEMA_VERSION,
            "tool_version": io::TOOL_VERSION,
            "command": "preprocess",
            "selection": "largest spatial mean rise over frame 0; earliest on ties; single frames pass through",
            "sequences": sequences.display().to_string(),
            "measurements": records,
        }),
    )
}

#[derive(Debug, Serialize)]
struct InstanceEval {
    index: usize,
    /// `None` when the ground truth is identically zero.
    nmse_db: Option<String>,
    wasserstein1: Option<f64>,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    schema_version: u32,
    instances: Vec<InstanceEval>,
    mean_nmse_db: Option<String>,
    nmse_ci95: Option<Ci95>,
    mean_wasserstein1: Option<f64>,
    wasserstein_ci95: Option<Ci95>,
    skipped_zero_truth: usize,
    interval_method: &'static str,
}

/// Wasserstein distance between the estimated and true defect profiles;
/// negative excursions of the estimate are clamped.
pub fn profile_distance(estimate: &MMVSignal, truth: &MMVSignal) -> Option<f64> {
    let u = metrics::positive_part(&metrics::defect_estimate(estimate));
    let v = metrics::positive_part(&metrics::defect_estimate(truth));
    metrics::wasserstein1(u.as_slice().unwrap(), v.as_slice().unwrap()).ok()
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn cmd_eval(estimate: &Path, truth: &Path, curves: &[PathBuf], out: &Path) -> Result<()> {
    let (est, _) = read_instances(estimate)?;
    let (tru, _) = read_instances(truth)?;
    if est.len() != tru.len() {
        return Err(Error::dim("eval instance count", tru.len(), est.len()));
    }
    io::ensure_dir(out)?;
    let mut instances = Vec::new();
    let (mut nmses, mut dists, mut skipped) = (Vec::new(), Vec::new(), 0);
    let mut csv = String::from("index,nmse_db,wasserstein1\n");
    for (i, (e, t)) in est.into_iter().zip(tru).enumerate() {
        let e = MMVSignal::new(e)?;
        let t = MMVSignal::new(t)?;
        let nmse = match metrics::nmse_db(&e, &t) {
            Ok(v) => Some(v),
            Err(Error::ZeroGroundTruth) => {
                skipped += 1;
                None
            }
            Err(other) => return Err(other),
        };
        let dist = profile_distance(&e, &t);
        nmses.extend(nmse);
        dists.extend(dist);
        csv.push_str(&format!(
            "{i},{},{}\n",
            nmse.map(metrics::format_db).unwrap_or_default(),
            dist.map(|d| d.to_string()).unwrap_or_default()
        ));
        instances.push(InstanceEval {
            index: i,
            nmse_db: nmse.map(metrics::format_db),
            wasserstein1: dist,
        });
    }
    let finite: Vec<f64> = nmses.iter().copied().filter(|v| v.is_finite()).collect();
    let report = EvalReport {
        schema_version: io::SCHEMA_VERSION,
        instances,
        mean_nmse_db: mean(&nmses).map(metrics::format_db),
        nmse_ci95: ci95(&finite).ok(),
        mean_wasserstein1: mean(&dists),
        wasserstein_ci95: ci95(&dists).ok(),
        skipped_zero_truth: skipped,
        interval_method: "normal approximation, mean +- 1.96 s / sqrt(n)",
    };
    io::write_json(out.join("eval.json"), &report)?;
    io::write_text(out.join("eval.csv"), &csv)?;

    if !curves.is_empty() {
        let mut plot = LinePlot::new("NMSE over iterations", "iteration / layer", "NMSE [dB]");
        let mut summary = Vec::new();
        for dir in curves {
            let curve = curve_from_traces(dir)?;
            let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "curve".into());
            io::write_text(out.join(format!("curve_{name}.csv")), &curve.to_csv())?;
            plot = plot.with(Series::indexed(name.clone(), curve.mean.clone()).with_band(curve.lower.clone(), curve.upper.clone()));
            summary.push(json!({ "name": name, "source": dir.display().to_string(), "curve": curve }));
        }
        io::write_text(out.join("curves.svg"), &plot.to_svg())?;
        io::write_json(out.join("curves.json"), &summary)?;
    }
    write_run_info(
        out,
        "eval",
        json!({
            "estimate": estimate.display().to_string(),
            "truth": truth.display().to_string(),
            "curves": curves.iter().map(|c| c.display().to_string()).collect::<Vec<_>>(),
        }),
    )
}

/// Mean NMSE curve over all `trace*.csv` files in `dir`.
pub fn curve_from_traces(dir: &Path) -> Result<NmseCurve> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            name.starts_with("trace") && name.ends_with(".csv")
        })
        .collect();
    files.sort();
    let mut curves = Vec::new();
    for f in &files {
        let text = std::fs::read_to_string(f).map_err(|e| Error::io(f, e))?;
        let mut values = Vec::new();
        for line in text.lines().skip(1) {
            let field = line.split(',').nth(2).unwrap_or("");
            if field.is_empty() {
                values.clear();
                break;
            }
            values.push(match field {
                "-inf" => f64::NEG_INFINITY,
                s => s.parse::<f64>().map_err(|e| Error::format(f, e.to_string()))?,
            });
        }
        // instances without ground-truth NMSE and exact recoveries carry no
        // usable curve
        if !values.is_empty() && values.iter().all(|v| v.is_finite()) {
            curves.push(values);
        }
    }
    if curves.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "{} holds {} usable trace files with NMSE; need at least 2",
            dir.display(),
            curves.len()
        )));
    }
    NmseCurve::from_instances(&curves)
}

//! Command-line front end. `run` never panics on bad input: it returns
//! 0 on success, 1 for usage or parameter errors and 2 for runtime failures.

mod args;

use std::fs;
use std::io::Write;
use std::path::Path;

use clap::error::ErrorKind;
use clap::Parser;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

pub use args::{Cli, ConfigFile, GridFile, RunConfig};
use args::{
    BenchCommand, BenchShared, BoundArgs, Command, CvArgs, DataArgs, DataFormat, LossCurveArgs,
    NoiseArgs, OutlierArgs, PredictArgs, StabilityArgs, TrainArgs,
};

use crate::data::{parse_csv, parse_libsvm, standardize, stratified_split, synth_two_gaussians, Dataset};
use crate::error::{Error, Result};
use crate::eval::{self, accuracy_metrics, bound_inputs_for, bound_terms, sub_seed};
use crate::format::{fmt_f64, to_canonical_json};
use crate::kernel::KernelSpec;
use crate::loss::{loss_table, write_loss_csv, LossKind, LossParams};
use crate::model::{FitConfig, TrainedModel};
use crate::solver::cccp_train;

/// Parses `argv` (program name first) and executes the subcommand.
pub fn run<S: AsRef<str>>(argv: &[S]) -> i32 {
    let cli = match Cli::try_parse_from(argv.iter().map(|s| s.as_ref())) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 0,
                _ => 1,
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                1
            } else {
                2
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Cv(a) => cv(a),
        Command::Losscurve(a) => losscurve(a),
        Command::Bench(BenchCommand::Noise(a)) => bench_noise(a),
        Command::Bench(BenchCommand::Stability(a)) => bench_stability(a),
        Command::Bench(BenchCommand::Outlier(a)) => bench_outlier(a),
        Command::Bound(a) => bound(a),
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Writes to `path`, or to standard output when no path is given.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display())))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn load_data(args: &DataArgs, file_format: Option<DataFormat>) -> Result<Dataset> {
    let path = args
        .data
        .as_deref()
        .ok_or_else(|| Error::usage("--data is required"))?;
    let format = args.format.or(file_format).unwrap_or(DataFormat::Csv);
    if args.dim.is_some() && format != DataFormat::Libsvm {
        return Err(Error::usage("--dim only applies to --format libsvm"));
    }
    let text = read_text(path)?;
    let ds = match format {
        DataFormat::Csv => parse_csv(&text),
        DataFormat::Libsvm => parse_libsvm(&text, args.dim),
    }
    .map_err(|e| match e {
        Error::Parse { line, msg } => Error::Parse {
            line,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })?;
    Ok(ds.with_name(path.display().to_string()))
}

fn meta(command: &str, config: &impl Serialize, data: Value) -> Result<Value> {
    Ok(json!({
        "command": command,
        "config": serde_json::to_value(config).map_err(|e| Error::Format(e.to_string()))?,
        "data": data,
        "version": env!("CARGO_PKG_VERSION"),
    }))
}

fn data_source(ds: &Dataset) -> Value {
    json!({ "name": ds.name().unwrap_or("unnamed"), "n": ds.n(), "d": ds.d() })
}

fn fit_config(run: &RunConfig, kind: LossKind) -> FitConfig {
    FitConfig {
        kind,
        kernel: run.kernel,
        params: run.params,
        solver: run.solver,
    }
}

fn train(a: TrainArgs) -> Result<()> {
    let (mut run, file) = a.model.resolve(a.loss, a.standardize)?;
    let kind = run.loss.unwrap_or(LossKind::RescaledHP);
    run.loss = Some(kind);
    let raw = load_data(&a.data, file.format)?;
    let (ds, transform) = if run.standardize {
        let (ds, t) = standardize(&raw)?;
        (ds, Some(t))
    } else {
        (raw.clone(), None)
    };
    let cfg = fit_config(&run, kind);
    let (model, objectives) = if kind == LossKind::RescaledHP {
        let (m, trace) = cccp_train(&ds, &cfg.kernel, &cfg.params, &cfg.solver)?;
        (m, trace.iter().map(|s| s.objective).collect::<Vec<_>>())
    } else {
        let m = cfg.fit(&ds)?;
        let j = m.meta().final_objective;
        (m, vec![j])
    };
    let mut model = model.with_config_echo(serde_json::to_value(&run).map_err(|e| Error::Format(e.to_string()))?);
    if let Some(t) = transform {
        model = model.with_transform(t)?;
    }
    fs::write(&a.out, model.save()?)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", a.out.display()))))?;
    let preds = model.predict_all(&raw)?;
    let metrics = accuracy_metrics(&preds, raw.labels())?;
    let summary = json!({
        "meta": meta("train", &run, data_source(&raw))?,
        "model": a.out.display().to_string(),
        "support_size": model.coeffs().len(),
        "cccp_iterations": model.meta().cccp_iterations,
        "final_objective": model.meta().final_objective,
        "objectives": objectives,
        "config_digest": model.meta().config_digest,
        "train_metrics": metrics,
    });
    emit(None, &to_canonical_json(&summary)?)
}

fn label_text(y: f64) -> &'static str {
    if y > 0.0 {
        "+1"
    } else {
        "-1"
    }
}

fn predict(a: PredictArgs) -> Result<()> {
    let model = TrainedModel::load(&read_text(&a.model)?)?;
    let ds = load_data(&a.data, None)?;
    let f = model.decision_values(&ds)?;
    let mut table = String::from("index,decision,prediction\n");
    let mut preds = Vec::with_capacity(f.len());
    for (i, &v) in f.iter().enumerate() {
        let p = if v >= 0.0 { 1.0 } else { -1.0 };
        preds.push(p);
        table.push_str(&format!("{i},{},{}\n", fmt_f64(v), label_text(p)));
    }
    let m = accuracy_metrics(&preds, ds.labels())?;
    let metrics = format!(
        "n,accuracy,tp,tn,fp,fn\n{},{},{},{},{},{}\n",
        m.n,
        fmt_f64(m.accuracy),
        m.tp,
        m.tn,
        m.fp,
        m.fn_
    );
    emit(a.out.as_deref(), &table)?;
    match (&a.out, &a.metrics) {
        (_, Some(path)) => emit(Some(path), &metrics),
        (Some(_), None) => emit(None, &metrics),
        (None, None) => Ok(()),
    }
}

fn losscurve(a: LossCurveArgs) -> Result<()> {
    let file = ConfigFile::load(a.loss_args.config.as_deref())?;
    let kind = a.loss.or(file.loss).unwrap_or(LossKind::RescaledHP);
    let p = args::resolve_params(&a.loss_args, &file)?;
    let rows = loss_table(kind, &p, a.umin, a.umax, a.step)?;
    let mut buf = Vec::new();
    write_loss_csv(&rows, &mut buf)?;
    emit(a.out.as_deref(), &String::from_utf8_lossy(&buf))
}

/// One hyperparameter combination of the cv grid.
#[derive(Debug, Clone, Copy, Serialize)]
struct Cell {
    #[serde(rename = "C")]
    c: f64,
    eta: f64,
    lambda: f64,
    s: f64,
    tau: f64,
    kernel: KernelSpec,
}

fn grid_cells(kind: LossKind, run: &RunConfig, grid: &GridFile) -> Result<Vec<Cell>> {
    let p = run.params;
    let axis = |given: &Option<Vec<f64>>, default: &[f64], used: bool, base: f64| -> Vec<f64> {
        if !used {
            vec![base]
        } else {
            given.clone().unwrap_or_else(|| default.to_vec())
        }
    };
    let reads_tau = kind != LossKind::Hinge;
    let reads_s = matches!(kind, LossKind::HuberizedPinball | LossKind::RescaledHP);
    let reads_rescale = kind == LossKind::RescaledHP;
    let cs = axis(&grid.c, &args::DEFAULT_GRID_C, true, run.solver.c);
    let taus = axis(&grid.tau, &args::DEFAULT_GRID_TAU, reads_tau, p.tau());
    let ss = axis(&grid.s, &args::DEFAULT_GRID_S, reads_s, p.s());
    let lambdas = axis(&grid.lambda, &args::DEFAULT_GRID_LAMBDA, reads_rescale, p.lambda());
    let etas = axis(&grid.eta, &args::DEFAULT_GRID_ETA, reads_rescale, p.eta());
    let kernels: Vec<KernelSpec> = match run.kernel {
        KernelSpec::Linear => vec![KernelSpec::Linear],
        KernelSpec::Rbf { .. } => axis(&grid.gamma, &args::DEFAULT_GRID_GAMMA, true, 1.0)
            .into_iter()
            .map(|gamma| KernelSpec::Rbf { gamma })
            .collect(),
        KernelSpec::Polynomial {
            degree,
            coef0,
            scale,
        } => {
            let degrees = grid.degree.clone().unwrap_or_else(|| vec![degree]);
            let coefs = grid.coef0.clone().unwrap_or_else(|| vec![coef0]);
            let scales = grid.gamma.clone().unwrap_or_else(|| vec![scale]);
            let mut out = Vec::new();
            for &degree in &degrees {
                for &coef0 in &coefs {
                    for &scale in &scales {
                        out.push(KernelSpec::Polynomial {
                            degree,
                            coef0,
                            scale,
                        });
                    }
                }
            }
            out
        }
    };
    let mut cells = Vec::new();
    for &c in &cs {
        for &eta in &etas {
            for &lambda in &lambdas {
                for &s in &ss {
                    for &tau in &taus {
                        for &kernel in &kernels {
                            kernel.validate().map_err(|e| Error::usage(format!("grid: {e}")))?;
                            LossParams::new(eta, lambda, s, tau)
                                .map_err(|e| Error::usage(format!("grid: {e}")))?;
                            if !(c.is_finite() && c > 0.0) {
                                return Err(Error::usage(format!("grid: C must be > 0, got {c}")));
                            }
                            cells.push(Cell {
                                c,
                                eta,
                                lambda,
                                s,
                                tau,
                                kernel,
                            });
                        }
                    }
                }
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::usage("grid: every listed axis needs at least one value"));
    }
    Ok(cells)
}

fn cv(a: CvArgs) -> Result<()> {
    let (mut run, file) = a.model.resolve(a.loss, false)?;
    let kind = run.loss.unwrap_or(LossKind::RescaledHP);
    run.loss = Some(kind);
    if a.folds < 2 {
        return Err(Error::usage("--folds must be >= 2"));
    }
    let grid: GridFile = match &a.grid {
        Some(path) => serde_json::from_str(&read_text(path)?)
            .map_err(|e| Error::usage(format!("--grid {}: {e}", path.display())))?,
        None => GridFile::default(),
    };
    let ds = load_data(&a.data, file.format)?;
    let cells = grid_cells(kind, &run, &grid)?;
    let results: Vec<(f64, f64)> = cells
        .par_iter()
        .map(|cell| {
            let cfg = FitConfig {
                kind,
                kernel: cell.kernel,
                params: LossParams::new(cell.eta, cell.lambda, cell.s, cell.tau)?,
                solver: run.solver.with_c(cell.c),
            };
            eval::cross_validate(&ds, a.folds, run.seed, &cfg)
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, r) in results.iter().enumerate() {
        if r.0 > results[best].0 {
            best = i;
        }
    }
    let rows: Vec<Value> = cells
        .iter()
        .zip(&results)
        .enumerate()
        .map(|(i, (cell, (mean, std)))| json!({ "cell": i, "params": cell, "mean": mean, "std": std }))
        .collect();
    let report = json!({
        "meta": meta("cv", &run, data_source(&ds))?,
        "folds": a.folds,
        "rows": rows,
        "best": best,
    });
    emit(a.out.as_deref(), &to_canonical_json(&report)?)
}

/// Data for a bench run: the `--data` file, or seeded synthetic Gaussians.
fn bench_data(b: &BenchShared, run: &RunConfig, file: &ConfigFile) -> Result<(Dataset, Value)> {
    let s = &b.synth;
    if b.data.data.is_some() {
        if s.n.is_some() || s.d.is_some() || s.separation.is_some() || s.sigma.is_some() {
            return Err(Error::usage(
                "--n/--d/--separation/--sigma describe synthetic data and conflict with --data",
            ));
        }
        let ds = load_data(&b.data, file.format)?;
        let src = data_source(&ds);
        return Ok((ds, src));
    }
    let (n, d) = (s.n.unwrap_or(200), s.d.unwrap_or(2));
    let (separation, sigma) = (s.separation.unwrap_or(2.0), s.sigma.unwrap_or(1.0));
    let ds = synth_two_gaussians(n, d, separation, sigma, run.seed)?;
    let src = json!({
        "synthetic": { "n": n, "d": d, "separation": separation, "sigma": sigma, "seed": run.seed }
    });
    Ok((ds, src))
}

fn bench_configs(run: &RunConfig) -> Vec<(String, FitConfig)> {
    LossKind::ALL
        .iter()
        .map(|&k| (k.name().to_string(), fit_config(run, k)))
        .collect()
}

fn bench_prepare(b: &BenchShared) -> Result<(RunConfig, Dataset, Value)> {
    let (run, file) = b.model.resolve(None, false)?;
    if run.loss.is_some() {
        return Err(Error::usage("bench trains every loss; remove 'loss' from the config file"));
    }
    if !(b.test_fraction > 0.0 && b.test_fraction < 1.0) {
        return Err(Error::usage("--test-fraction must lie in (0, 1)"));
    }
    let (ds, src) = bench_data(b, &run, &file)?;
    Ok((run, ds, src))
}

fn bench_noise(a: NoiseArgs) -> Result<()> {
    let (run, ds, src) = bench_prepare(&a.shared)?;
    if a.rates.is_empty() {
        return Err(Error::usage("--rates needs at least one value"));
    }
    if a.repeats == 0 {
        return Err(Error::usage("--repeats must be >= 1"));
    }
    for &r in &a.rates {
        if !(0.0..=0.5).contains(&r) {
            return Err(Error::usage(format!("--rates values must lie in [0, 0.5], got {r}")));
        }
    }
    let rows = eval::noise_benchmark(
        &ds,
        &a.rates,
        a.repeats,
        run.seed,
        a.shared.test_fraction,
        &bench_configs(&run),
    )?;
    let report = json!({
        "meta": meta("bench noise", &run, src)?,
        "repeats": a.repeats,
        "test_fraction": a.shared.test_fraction,
        "rows": rows,
    });
    emit(a.shared.out.as_deref(), &to_canonical_json(&report)?)
}

fn bench_stability(a: StabilityArgs) -> Result<()> {
    let (run, ds, src) = bench_prepare(&a.shared)?;
    if a.resamples < 2 {
        return Err(Error::usage("--resamples must be >= 2"));
    }
    let (train, test) = stratified_split(&ds, a.shared.test_fraction, sub_seed(run.seed, 0, 2))?;
    let reports: Vec<Value> = bench_configs(&run)
        .iter()
        .map(|(name, cfg)| {
            let r = eval::resampling_stability(&train, &test, cfg, a.resamples, run.seed)?;
            Ok(json!({ "model": name, "runs": r.runs, "mean": r.mean, "std": r.std }))
        })
        .collect::<Result<_>>()?;
    let report = json!({
        "meta": meta("bench stability", &run, src)?,
        "resamples": a.resamples,
        "test_fraction": a.shared.test_fraction,
        "models": reports,
    });
    emit(a.shared.out.as_deref(), &to_canonical_json(&report)?)
}

fn bench_outlier(a: OutlierArgs) -> Result<()> {
    let (run, ds, src) = bench_prepare(&a.shared)?;
    if !run.kernel.is_linear() {
        return Err(Error::usage("bench outlier needs --kernel linear"));
    }
    if !(a.distance.is_finite() && a.distance >= 0.0) {
        return Err(Error::usage("--distance must be finite and >= 0"));
    }
    let (point, label) = eval::far_outlier(&ds, a.distance);
    let rhp = fit_config(&run, LossKind::RescaledHP);
    let hinge = fit_config(&run, LossKind::Hinge);
    let r = eval::outlier_shift(&ds, &point, label, &rhp, &hinge)?;
    let report = json!({
        "meta": meta("bench outlier", &run, src)?,
        "outlier": { "x": point, "label": label, "distance": a.distance },
        "models": ["rhp", "hinge"],
        "angle_rhp": r.angle_a,
        "angle_hinge": r.angle_b,
        "norm_ratio_rhp": r.norm_ratio_a,
        "norm_ratio_hinge": r.norm_ratio_b,
    });
    emit(a.shared.out.as_deref(), &to_canonical_json(&report)?)
}

fn bound(a: BoundArgs) -> Result<()> {
    let model = TrainedModel::load(&read_text(&a.model)?)?;
    let ds = load_data(&a.data, None)?;
    if !(a.gamma_scale.is_finite() && a.gamma_scale > 0.0) {
        return Err(Error::usage("--gamma-scale must be > 0"));
    }
    let inputs = bound_inputs_for(&model, &ds, a.gamma_scale, a.zeta).map_err(|e| match e {
        Error::Domain(msg) => Error::usage(format!("--zeta: {msg}")),
        other => other,
    })?;
    let terms = bound_terms(&inputs).map_err(|e| match e {
        Error::Domain(msg) => Error::usage(msg),
        other => other,
    })?;
    let config = json!({ "zeta": a.zeta, "gamma_scale": a.gamma_scale, "model": a.model.display().to_string() });
    let report = json!({
        "meta": meta("bound", &config, data_source(&ds))?,
        "inputs": inputs,
        "total": terms.total,
        "empirical": terms.empirical,
        "complexity": terms.complexity,
        "confidence": terms.confidence,
    });
    emit(a.out.as_deref(), &to_canonical_json(&report)?)
}

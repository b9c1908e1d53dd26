//! The four subcommands. Replicates run in the rayon pool; every file is
//! written afterwards from the calling thread.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use iterreg::datagen::SparseInstance;
use iterreg::diagnostics::{certified_metrics, compute_bound_constants, support_metrics};
use iterreg::experiments::{
    compare_with_lasso, completion_trace, precond_comparison, sigma_sweep, CompareOptions, Curve, LassoComparison,
};
use iterreg::baselines::LassoPathOptions;
use iterreg::linops::DenseMatrix;
use iterreg::pdsolver::{
    datadriven_sigma_or_fallback, pock_chambolle_precond, run, symmetric_steps, MetricsLog, MetricsRow,
    PrecondMode, PrecondOptions, Problem, SolverConfig, SolverState, StoppingRule, Validation,
};
use iterreg::regularizers::ProxErrorSchedule;
use iterreg::vecops::{dist, norm2};

use crate::config::{
    EpsilonSpec, ExperimentConfig, InstanceSpec, SigmaRule, SigmaSpec, StoppingSpec,
};
use crate::error::CliError;
use crate::instance::{self, Data, Design};

/// `‖ŷ_K‖ / ‖ŷ_{K/10}‖` above this flags a growing dual sequence; a
/// convergent run stays near 1 and linear growth gives about 10.
const DUAL_GROWTH_FLAG: f64 = 5.0;

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// Output directory of one replicate.
fn replicate_dir(cfg: &ExperimentConfig, seed: u64) -> PathBuf {
    if cfg.seeds.len() == 1 {
        cfg.output.clone()
    } else {
        cfg.output.join(format!("seed_{seed}"))
    }
}

fn design_only<'a>(data: &'a Data, what: &str) -> Result<&'a Design, CliError> {
    match data {
        Data::Design(d) => Ok(d),
        _ => Err(CliError::Config(format!("{what} needs a dense-design instance"))),
    }
}

fn as_sparse(d: &Design, seed: u64) -> Result<SparseInstance, CliError> {
    let x_true = d
        .x_true
        .clone()
        .ok_or_else(|| CliError::Config("this figure needs a ground-truth signal".into()))?;
    Ok(SparseInstance {
        a: d.a.clone(),
        x_true,
        b_star: d.b_star.clone().unwrap_or_else(|| d.b.clone()),
        b_delta: d.b.clone(),
        delta: d.delta,
        snr: None,
        seed,
    })
}

// ---- gen ----

pub fn gen(cfg: &ExperimentConfig, force: bool) -> Result<(), CliError> {
    if matches!(cfg.instance, InstanceSpec::Dir { .. } | InstanceSpec::Libsvm { .. }) {
        return Err(CliError::Config("gen needs a generator, not stored data".into()));
    }
    let built: Vec<Data> = cfg
        .seeds
        .par_iter()
        .map(|&s| instance::build(&cfg.instance, s))
        .collect::<Result<_, _>>()?;
    for (seed, data) in cfg.seeds.iter().zip(&built) {
        let dir = replicate_dir(cfg, *seed);
        instance::write(&dir, &cfg.instance, *seed, data, force)?;
        log::info!("wrote {}", dir.display());
    }
    Ok(())
}

// ---- solve ----

struct Solved {
    log: MetricsLog,
    summary: Value,
}

fn steps(cfg: &ExperimentConfig, p: &Problem) -> Result<(f64, f64), CliError> {
    let a_norm = p.a_norm();
    Ok(match cfg.solver.sigma {
        SigmaSpec::Rule(SigmaRule::Datadriven) => datadriven_sigma_or_fallback(p.op.as_ref(), &p.b, a_norm)?,
        SigmaSpec::Rule(SigmaRule::Symmetric) => symmetric_steps(a_norm, 0.99),
        SigmaSpec::Rule(SigmaRule::Strict) => (1.0, 1.0 / (4.0 * a_norm * a_norm)),
        SigmaSpec::Value(s) => (s, cfg.solver.tau.unwrap_or(0.99 / (s * a_norm * a_norm))),
    })
}

fn solver_config(cfg: &ExperimentConfig, p: &Problem, data: &Data, iters: usize) -> Result<SolverConfig, CliError> {
    let (sigma, tau) = steps(cfg, p)?;
    let mut c = SolverConfig::scalar(p, tau, sigma)?;
    let s = &cfg.solver;
    c.xi = s.xi;
    c.eta = s.eta;
    c.averaging = s.averaging;
    c.max_iters = iters;
    c.validation = s.validation;
    c.log_every = s.log_every;
    c.seed = s.seed;
    c.schedule = match s.epsilon {
        EpsilonSpec::Exact => ProxErrorSchedule::Exact,
        EpsilonSpec::Constant { c0 } => ProxErrorSchedule::Constant { c0 },
        EpsilonSpec::NoiseProportional { c0 } => ProxErrorSchedule::NoiseProportional { c0, delta: data.delta() },
    };
    if let Some(pc) = s.preconditioner {
        let d = design_only(data, "a diagonal preconditioner")?;
        let (sd, _) = datadriven_sigma_or_fallback(p.op.as_ref(), &p.b, p.a_norm())?;
        // Σ = (nnz/θ) Id on a dense design, so this θ reproduces the data-driven σ
        let nnz = d.a.row_nnz().into_iter().max().unwrap_or(1).max(1) as f64;
        let theta = pc.theta.unwrap_or(nnz / sd);
        let opts = PrecondOptions { mode: pc.mode, auto_scale: true, operator_norm_scaling: true };
        let (t, sg) = pock_chambolle_precond(&d.a, theta, opts)?;
        c.t = t;
        c.sigma = sg;
        c.validation = Validation::Preconditioned;
    }
    Ok(c)
}

/// Trailing `rows` rows held out from a dense design.
fn split_rows(d: &Design, rows: usize) -> Result<(Design, DenseMatrix, Vec<f64>), CliError> {
    let n = d.a.rows();
    if rows >= n {
        return Err(CliError::Config(format!("cannot hold out {rows} of {n} rows")));
    }
    let tr: Vec<usize> = (0..n - rows).collect();
    let te: Vec<usize> = (n - rows..n).collect();
    let train = Design {
        a: d.a.select_rows(&tr),
        b: d.b[..n - rows].to_vec(),
        b_star: d.b_star.as_ref().map(|b| b[..n - rows].to_vec()),
        x_true: d.x_true.clone(),
        delta: d.delta,
        // a certificate of the full system does not carry over
        cert: None,
    };
    Ok((train, d.a.select_rows(&te), d.b[n - rows..].to_vec()))
}

fn row_json(r: &MetricsRow) -> Value {
    json!({
        "k": r.k,
        "feasibility": r.feasibility,
        "lagrangian_gap": r.lagrangian_gap,
        "bregman_l1": r.bregman_l1,
        "l1_norm": r.l1_norm,
        "support_size": r.support_size,
        "f1": r.f1,
        "holdout_mse": r.holdout_mse,
        "epsilon_k": r.epsilon_k,
    })
}

fn keep_requested(cfg: &ExperimentConfig, log: &mut MetricsLog) {
    for r in &mut log.rows {
        macro_rules! mask {
            ($($f:ident),*) => {$(
                if !cfg.keeps_metric(stringify!($f)) {
                    r.$f = None;
                }
            )*};
        }
        mask!(feasibility, lagrangian_gap, bregman_l1, l1_norm, support_size, f1, holdout_mse, epsilon_k);
    }
}

fn arg_best(log: &MetricsLog, get: impl Fn(&MetricsRow) -> Option<f64>, maximize: bool) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, v) in log.series(get) {
        let better = match best {
            None => true,
            Some((_, b)) => (maximize && v > b) || (!maximize && v < b),
        };
        if better {
            best = Some((k, v));
        }
    }
    best.map(|(k, _)| k)
}

fn solve_one(cfg: &ExperimentConfig, seed: u64) -> Result<Solved, CliError> {
    let mut data = instance::build(&cfg.instance, seed)?;
    let mut holdout = None;
    if let StoppingSpec::Holdout { rows, .. } = cfg.solver.stopping {
        let (train, a_te, b_te) = split_rows(design_only(&data, "hold-out stopping")?, rows)?;
        data = Data::Design(train);
        holdout = Some((a_te, b_te));
    }
    let p = data.problem(cfg.regularizer)?;

    let stopping = match cfg.solver.stopping {
        StoppingSpec::MaxIters { iters } => StoppingRule::MaxIters(iters),
        StoppingSpec::FixedK { ctilde, delta } => StoppingRule::FixedK {
            c_tilde: ctilde,
            delta: delta.unwrap_or(data.delta()),
        },
        StoppingSpec::Holdout { max_iters, .. } => {
            let (a, b) = holdout.take().expect("split above");
            StoppingRule::Holdout { op: std::sync::Arc::new(a), b, max_iters }
        }
    };
    let horizon = stopping.horizon()?;
    let sc = solver_config(cfg, &p, &data, horizon)?;
    let averaging = sc.averaging;

    let b_ref = data.b_star().unwrap_or_else(|| p.b.clone());
    let x_true = match &data {
        Data::Design(d) => d.x_true.clone(),
        _ => None,
    };
    let mut duals: Vec<(usize, f64)> = Vec::new();
    let out = {
        let mut track = |s: &SolverState, _: &mut MetricsRow| duals.push((s.k, norm2(&s.dual_estimate(averaging))));
        match data.cert() {
            Some(cert) => {
                let mut cb = certified_metrics(&p, cert, averaging);
                run(&p, &sc, &stopping, &mut [&mut cb, &mut track])?
            }
            None => {
                let op = p.op.clone();
                let mut feas = |s: &SolverState, r: &mut MetricsRow| {
                    r.feasibility = Some(dist(&op.apply(&s.estimate(averaging)), &b_ref));
                };
                let mut sup = support_metrics(x_true.as_deref(), averaging);
                if matches!(data, Data::Design(_)) {
                    run(&p, &sc, &stopping, &mut [&mut feas, &mut sup, &mut track])?
                } else {
                    run(&p, &sc, &stopping, &mut [&mut feas, &mut track])?
                }
            }
        }
    };

    let mut log = out.log;
    keep_requested(cfg, &mut log);

    let x_hat = out.state.estimate(averaging);
    let k_final = out.state.k;
    let y_final = norm2(&out.state.dual_estimate(averaging));
    let early = duals
        .iter()
        .filter(|(k, _)| *k <= (k_final / 10).max(1))
        .next_back()
        .copied();
    let dual = early.map(|(k, y)| {
        let ratio = if y > 0.0 { y_final / y } else { f64::INFINITY };
        json!({"k_early": k, "early": y, "final": y_final, "ratio": ratio, "growing": ratio >= DUAL_GROWTH_FLAG})
    });

    let bound_constants = match data.cert() {
        Some(cert) => {
            let (zx, zy) = (vec![0.0; p.dim_x()], vec![0.0; p.dim_y()]);
            Some(compute_bound_constants(cert, &sc.t, &sc.sigma, &out.constants, &zx, &zy, sc.schedule.c0(), false)?)
        }
        None => None,
    };

    let summary = json!({
        "name": cfg.name,
        "seed": seed,
        "generator": cfg.instance.generator(),
        "regularizer": p.reg.kind(),
        "dims": {"x": p.dim_x(), "y": p.dim_y()},
        "constants": out.constants,
        "averaging": averaging,
        "stopping": {"rule": stopping_name(&cfg.solver.stopping), "iterations": horizon},
        "best_k": {
            "max_f1": arg_best(&log, |r| r.f1, true),
            "min_feasibility": arg_best(&log, |r| r.feasibility, false),
            "min_holdout_mse": out.best_k,
        },
        "final": log.last().map(row_json),
        "estimate_norm": norm2(&x_hat),
        "x_hat": (x_hat.len() <= 10).then_some(&x_hat),
        "max_epsilon": out.eps.iter().copied().fold(0.0, f64::max),
        "dual_norm": dual,
        "bound_constants": bound_constants,
    });
    Ok(Solved { log, summary })
}

fn stopping_name(s: &StoppingSpec) -> &'static str {
    match s {
        StoppingSpec::MaxIters { .. } => "max_iters",
        StoppingSpec::FixedK { .. } => "fixed_k",
        StoppingSpec::Holdout { .. } => "holdout",
    }
}

pub fn solve(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let results: Vec<Solved> = cfg
        .seeds
        .par_iter()
        .map(|&s| solve_one(cfg, s))
        .collect::<Result<_, _>>()?;
    write_json(&cfg.output.join("config.json"), cfg)?;
    for (seed, r) in cfg.seeds.iter().zip(results) {
        let dir = replicate_dir(cfg, *seed);
        let mut buf = Vec::new();
        r.log.write_csv(&mut buf)?;
        write_file(&dir.join("metrics.csv"), &buf)?;
        write_json(&dir.join("summary.json"), &r.summary)?;
        log::info!("wrote {}", dir.display());
    }
    Ok(())
}

// ---- compare ----

fn compare_options(cfg: &ExperimentConfig, seed: u64) -> CompareOptions {
    let c = &cfg.compare;
    CompareOptions {
        folds: c.folds,
        pd_iters: c.pd_iters,
        path: LassoPathOptions {
            grid_size: c.grid_size,
            lambda_min_ratio: c.lambda_min_ratio,
            folds: c.folds,
            seed,
            tol: c.path_tol,
            max_iters: c.path_max_iters,
        },
        seed,
    }
}

fn compare_one(cfg: &ExperimentConfig, seed: u64) -> Result<LassoComparison, CliError> {
    if cfg.compare.folds < 2 {
        return Err(CliError::Config("compare needs at least 2 folds".into()));
    }
    let data = instance::build(&cfg.instance, seed)?;
    let d = design_only(&data, "compare")?;
    let rows = cfg.compare.test_rows.unwrap_or(d.a.rows() / 5);
    if rows == 0 {
        return Err(CliError::Config("compare needs at least one test row".into()));
    }
    let (train, a_te, b_te) = split_rows(d, rows)?;
    Ok(compare_with_lasso(&train.a, &train.b, (&a_te, &b_te), d.x_true.as_deref(), &compare_options(cfg, seed))?)
}

fn comparison_summary(cfg: &ExperimentConfig, seed: u64, c: &LassoComparison) -> Value {
    let (pd_mse, lasso_mse) = c.test_mse;
    let best = c.lasso.best_index.unwrap_or(0);
    json!({
        "name": cfg.name,
        "seed": seed,
        "folds": cfg.compare.folds,
        "primal_dual": {
            "best_k": c.pd_cv.best_k,
            "cv_mse": c.pd_best_cv_mse(),
            "test_mse": pd_mse,
            "f1": c.f1.map(|f| f.0),
        },
        "lasso": {
            "best_lambda": c.lasso.lambdas[best],
            "cv_mse": c.lasso_best_cv_mse(),
            "test_mse": lasso_mse,
            "f1": c.f1.map(|f| f.1),
        },
        "relative_test_mse_gap": (pd_mse - lasso_mse).abs() / lasso_mse,
        "relative_cv_mse_gap": (c.pd_best_cv_mse() - c.lasso_best_cv_mse()).abs() / c.lasso_best_cv_mse(),
    })
}

pub fn compare(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let results: Vec<LassoComparison> = cfg
        .seeds
        .par_iter()
        .map(|&s| compare_one(cfg, s))
        .collect::<Result<_, _>>()?;
    write_json(&cfg.output.join("config.json"), cfg)?;
    for (seed, c) in cfg.seeds.iter().zip(&results) {
        let dir = replicate_dir(cfg, *seed);
        let mut buf = Vec::new();
        c.write_csv(&mut buf)?;
        write_file(&dir.join("comparison.csv"), &buf)?;
        write_json(&dir.join("summary.json"), &comparison_summary(cfg, *seed, c))?;
    }
    Ok(())
}

// ---- repro ----

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Figure {
    Fig3,
    Fig4,
    Fig5,
    Fig6,
}

impl Figure {
    pub fn preset(self) -> &'static str {
        match self {
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
        }
    }
}

/// Plot description consumed by the plotting tool: which columns of which
/// CSV to draw.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct CurveSpec {
    pub csv: PathBuf,
    pub x: String,
    pub y: Vec<String>,
    pub label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub output: PathBuf,
}

struct Artifact {
    name: String,
    bytes: Vec<u8>,
}

fn curve_csv(c: &Curve) -> Artifact {
    let mut s = String::from("k,f1,support_size\n");
    for r in &c.log.rows {
        let f1 = r.f1.map(|v| format!("{v:e}")).unwrap_or_default();
        let sz = r.support_size.map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{f1},{sz}\n", r.k));
    }
    Artifact { name: format!("{}.csv", c.label), bytes: s.into_bytes() }
}

fn horizon(cfg: &ExperimentConfig) -> Result<usize, CliError> {
    Ok(match cfg.solver.stopping {
        StoppingSpec::MaxIters { iters } => iters,
        StoppingSpec::Holdout { max_iters, .. } => max_iters,
        StoppingSpec::FixedK { ctilde, delta } => StoppingRule::FixedK {
            c_tilde: ctilde,
            delta: delta.ok_or_else(|| CliError::Config("fixed-k stopping needs an explicit delta here".into()))?,
        }
        .horizon()?,
    })
}

fn support_specs(arts: &[Artifact], figure: &str) -> Vec<CurveSpec> {
    arts.iter()
        .map(|a| CurveSpec {
            csv: PathBuf::from(&a.name),
            x: "k".into(),
            y: vec!["f1".into(), "support_size".into()],
            label: a.name.trim_end_matches(".csv").into(),
            log_x: false,
            log_y: false,
            output: PathBuf::from(format!("{figure}.svg")),
        })
        .collect()
}

fn repro_one(cfg: &ExperimentConfig, fig: Figure, seed: u64) -> Result<(Vec<Artifact>, Vec<CurveSpec>, Value), CliError> {
    let iters = horizon(cfg)?;
    match fig {
        Figure::Fig3 => {
            let data = instance::build(&cfg.instance, seed)?;
            let inst = as_sparse(design_only(&data, "fig3")?, seed)?;
            let curves = sigma_sweep(&inst, iters)?;
            let arts: Vec<Artifact> = curves.iter().map(curve_csv).collect();
            let best: Vec<Value> = curves
                .iter()
                .map(|c| json!({"label": c.label, "sigma": c.sigma, "tau": c.tau, "best_f1": c.best_f1()}))
                .collect();
            let specs = support_specs(&arts, "fig3");
            Ok((arts, specs, json!({"seed": seed, "curves": best})))
        }
        Figure::Fig4 => {
            let c = compare_one(cfg, seed)?;
            let mut lasso = String::from("lambda,cv_mse,support_size\n");
            let cv = c.lasso.cv_mse.as_deref().unwrap_or(&[]);
            for (j, l) in c.lasso.lambdas.iter().enumerate() {
                let s = iterreg::vecops::support_size(&c.lasso.solutions[j], 0.0);
                let m = cv.get(j).map(|v| format!("{v:e}")).unwrap_or_default();
                lasso.push_str(&format!("{l:e},{m},{s}\n"));
            }
            let mut pd = String::from("k,cv_mse\n");
            for (i, m) in c.pd_cv.mean_mse.iter().enumerate() {
                pd.push_str(&format!("{},{m:e}\n", i + 1));
            }
            let mut comp = Vec::new();
            c.write_csv(&mut comp)?;
            let specs = vec![
                CurveSpec {
                    csv: "lasso.csv".into(),
                    x: "lambda".into(),
                    y: vec!["cv_mse".into()],
                    label: "lasso".into(),
                    log_x: true,
                    log_y: false,
                    output: "fig4_lasso.svg".into(),
                },
                CurveSpec {
                    csv: "primal_dual.csv".into(),
                    x: "k".into(),
                    y: vec!["cv_mse".into()],
                    label: "primal_dual".into(),
                    log_x: false,
                    log_y: false,
                    output: "fig4_primal_dual.svg".into(),
                },
            ];
            let arts = vec![
                Artifact { name: "lasso.csv".into(), bytes: lasso.into_bytes() },
                Artifact { name: "primal_dual.csv".into(), bytes: pd.into_bytes() },
                Artifact { name: "comparison.csv".into(), bytes: comp },
            ];
            Ok((arts, specs, comparison_summary(cfg, seed, &c)))
        }
        Figure::Fig5 => {
            let data = instance::build(&cfg.instance, seed)?;
            let inst = as_sparse(design_only(&data, "fig5")?, seed)?;
            let mode = cfg.solver.preconditioner.map(|p| p.mode).unwrap_or(PrecondMode::InverseColumns);
            let cmp = precond_comparison(&inst, mode, iters)?;
            let arts = vec![curve_csv(&cmp.scalar), curve_csv(&cmp.diagonal)];
            let specs = support_specs(&arts, "fig5");
            let summary = json!({
                "seed": seed,
                "scalar_best_f1": cmp.scalar.best_f1(),
                "diagonal_best_f1": cmp.diagonal.best_f1(),
            });
            Ok((arts, specs, summary))
        }
        Figure::Fig6 => {
            let InstanceSpec::Completion { d, rank, hidden_frac, .. } = cfg.instance else {
                return Err(CliError::Config("fig6 needs a completion instance".into()));
            };
            let step = match cfg.solver.sigma {
                SigmaSpec::Value(s) => s,
                _ => return Err(CliError::Config("fig6 needs a numeric sigma (σ = τ)".into())),
            };
            let every = cfg.solver.log_every.unwrap_or(5);
            let traces: Vec<_> = cfg
                .deltas
                .par_iter()
                .map(|&delta| {
                    let inst = iterreg::datagen::completion_instance(d, rank, hidden_frac, delta, seed)?;
                    completion_trace(&inst, step, iters, every, cfg.solver.averaging)
                })
                .collect::<iterreg::Result<_>>()?;
            let mut arts = Vec::new();
            let mut specs = Vec::new();
            let mut best = Vec::new();
            for t in &traces {
                let name = format!("delta_{}.csv", t.delta);
                let mut buf = Vec::new();
                t.write_csv(&mut buf)?;
                specs.push(CurveSpec {
                    csv: name.clone().into(),
                    x: "k".into(),
                    y: vec!["dist_truth".into(), "dist_noisy".into()],
                    label: format!("δ = {}", t.delta),
                    log_x: false,
                    log_y: true,
                    output: "fig6.svg".into(),
                });
                arts.push(Artifact { name, bytes: buf });
                let (k, dk) = t.best();
                best.push(json!({"delta": t.delta, "best_k": k, "best_dist": dk, "final_dist": t.dist_truth.last()}));
            }
            Ok((arts, specs, json!({"seed": seed, "traces": best})))
        }
    }
}

pub fn repro(cfg: &ExperimentConfig, fig: Figure) -> Result<(), CliError> {
    let results: Vec<_> = cfg
        .seeds
        .par_iter()
        .map(|&s| repro_one(cfg, fig, s))
        .collect::<Result<_, _>>()?;
    write_json(&cfg.output.join("config.json"), cfg)?;
    for (seed, (arts, specs, summary)) in cfg.seeds.iter().zip(results) {
        let dir = replicate_dir(cfg, *seed);
        for a in &arts {
            write_file(&dir.join(&a.name), &a.bytes)?;
        }
        write_json(&dir.join("figures.json"), &specs)?;
        write_json(&dir.join("summary.json"), &summary)?;
        log::info!("wrote {} curves to {}", arts.len(), dir.display());
    }
    Ok(())
}

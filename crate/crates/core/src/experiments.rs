//! Reproduction drivers for the sparse-recovery, Lasso-comparison,
//! preconditioning and matrix-completion experiments. Each returns the
//! curves the command-line tool writes out.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::baselines::{lasso_path, LassoPath, LassoPathOptions};
use crate::datagen::{CompletionInstance, SparseInstance};
use crate::diagnostics::{f1_support, support_metrics, ZERO_TOL};
use crate::error::{Error, Result};
use crate::linops::{DenseMatrix, LinOp};
use crate::pdsolver::{
    cv_early_stop, datadriven_sigma, holdout_mse, kfold_row_splits, pock_chambolle_precond, run,
    CvResult, MetricsLog, MetricsRow, PrecondMode, PrecondOptions, Problem, SolverConfig,
    SolverState, StoppingRule, Validation,
};
use crate::regularizers::Regularizer;
use crate::vecops::dist;

/// One solver run: the steps used and its metrics log.
#[derive(Clone, Debug)]
pub struct Curve {
    pub label: String,
    pub sigma: f64,
    pub tau: f64,
    pub log: MetricsLog,
}

impl Curve {
    /// First iteration attaining the largest logged F1, with that score.
    pub fn best_f1(&self) -> Option<(usize, f64)> {
        self.log
            .series(|r| r.f1)
            .into_iter()
            .fold(None, |best, (k, f)| match best {
                Some((_, bf)) if bf >= f => best,
                _ => Some((k, f)),
            })
    }

    /// First logged iteration at which the support exceeds `size`.
    pub fn support_exceeds(&self, size: usize) -> Option<usize> {
        self.log
            .series(|r| r.support_size.map(|s| s as f64))
            .into_iter()
            .find(|(_, s)| *s > size as f64)
            .map(|(k, _)| k)
    }
}

/// The four dual steps compared on sparse recovery, all with
/// `στ‖A‖² = 0.99`: `σ = τ`, `σ = τ/100`, `σ = 1/‖A*b^δ‖_∞`, `σ = τ/10⁴`.
pub fn sigma_choices(op: &dyn LinOp, b: &[f64], a_norm: f64) -> Result<Vec<(String, f64, f64)>> {
    let base = 0.99f64.sqrt() / a_norm;
    let (sd, td) = datadriven_sigma(op, b, a_norm)?;
    Ok(vec![
        ("sigma_eq_tau".into(), base, base),
        ("sigma_tau_over_100".into(), base / 10.0, base * 10.0),
        ("sigma_datadriven".into(), sd, td),
        ("sigma_tau_over_10000".into(), base / 100.0, base * 100.0),
    ])
}

fn scalar_config(p: &Problem, sigma: f64, tau: f64, iters: usize) -> Result<SolverConfig> {
    let mut c = SolverConfig::scalar(p, tau, sigma)?;
    c.averaging = false;
    c.max_iters = iters;
    Ok(c)
}

fn support_run(p: &Problem, cfg: &SolverConfig, x_true: &[f64], label: &str) -> Result<Curve> {
    let mut cb = support_metrics(Some(x_true), cfg.averaging);
    let out = run(p, cfg, &StoppingRule::MaxIters(cfg.max_iters), &mut [&mut cb])?;
    Ok(Curve {
        label: label.into(),
        sigma: cfg.sigma.max(),
        tau: cfg.t.max(),
        log: out.log,
    })
}

/// ℓ1 recovery with each of [`sigma_choices`]; last iterates, F1 against
/// the ground truth and support size logged every iteration.
pub fn sigma_sweep(inst: &SparseInstance, iters: usize) -> Result<Vec<Curve>> {
    let p = inst.problem(Regularizer::L1)?;
    sigma_choices(p.op.as_ref(), &p.b, p.a_norm())?
        .into_iter()
        .map(|(label, s, t)| support_run(&p, &scalar_config(&p, s, t, iters)?, &inst.x_true, &label))
        .collect()
}

#[derive(Clone, Debug)]
pub struct PrecondComparison {
    pub scalar: Curve,
    pub diagonal: Curve,
}

/// Scalar data-driven steps against diagonal steps on the same instance.
/// The diagonal run takes `Σ = (1/θ) diag(‖A_{i:}‖₀)` with `θ` matching the
/// data-driven `σ`, `T` from `mode`, rescaled so `‖Σ^½AT^½‖² = 0.99`.
pub fn precond_comparison(inst: &SparseInstance, mode: PrecondMode, iters: usize) -> Result<PrecondComparison> {
    let p = inst.problem(Regularizer::L1)?;
    let (sd, td) = datadriven_sigma(p.op.as_ref(), &p.b, p.a_norm())?;
    let scalar = support_run(&p, &scalar_config(&p, sd, td, iters)?, &inst.x_true, "scalar")?;

    // Σ = (nnz/θ) Id on a dense design, so θ = nnz/σ reproduces σ
    let row_nnz = inst.a.row_nnz().into_iter().max().unwrap_or(1).max(1) as f64;
    let theta = row_nnz / sd;
    let opts = PrecondOptions { mode, auto_scale: true, operator_norm_scaling: true };
    let (t, sigma) = pock_chambolle_precond(&inst.a, theta, opts)?;
    let mut cfg = scalar_config(&p, sd, td, iters)?;
    cfg.t = t;
    cfg.sigma = sigma;
    cfg.validation = Validation::Preconditioned;
    let diagonal = support_run(&p, &cfg, &inst.x_true, "diagonal")?;
    Ok(PrecondComparison { scalar, diagonal })
}

/// Distances of the completion iterates to the truth `B*` and to the
/// noisy solution (approximated by the final iterate).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionTrace {
    pub delta: f64,
    pub k: Vec<usize>,
    pub dist_truth: Vec<f64>,
    pub dist_noisy: Vec<f64>,
}

impl CompletionTrace {
    /// `(k, distance)` of the closest approach to the truth.
    pub fn best(&self) -> (usize, f64) {
        self.k
            .iter()
            .zip(&self.dist_truth)
            .fold((0, f64::INFINITY), |b, (k, d)| if *d < b.1 { (*k, *d) } else { b })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,dist_truth,dist_noisy")?;
        for i in 0..self.k.len() {
            writeln!(w, "{},{:e},{:e}", self.k[i], self.dist_truth[i], self.dist_noisy[i])?;
        }
        Ok(())
    }
}

/// Nuclear-norm completion with scalar steps `σ = τ = step`, recording the
/// estimate every `every` iterations.
pub fn completion_trace(
    inst: &CompletionInstance,
    step: f64,
    iters: usize,
    every: usize,
    averaging: bool,
) -> Result<CompletionTrace> {
    if every == 0 {
        return Err(Error::config("snapshot period must be positive"));
    }
    let p = inst.problem()?;
    let mut cfg = SolverConfig::scalar(&p, step, step)?;
    cfg.averaging = averaging;
    cfg.max_iters = iters;
    cfg.log_every = Some(every);
    let truth = inst.b_star.data();
    let mut snaps: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut cb = |s: &SolverState, _: &mut MetricsRow| snaps.push((s.k, s.estimate(averaging)));
    let out = run(&p, &cfg, &StoppingRule::MaxIters(iters), &mut [&mut cb])?;
    let last = out.state.estimate(averaging);
    Ok(CompletionTrace {
        delta: inst.delta,
        k: snaps.iter().map(|(k, _)| *k).collect(),
        dist_truth: snaps.iter().map(|(_, x)| dist(x, truth)).collect(),
        dist_noisy: snaps.iter().map(|(_, x)| dist(x, &last)).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    pub folds: usize,
    /// Iterations of each cross-validated primal-dual run.
    pub pd_iters: usize,
    pub path: LassoPathOptions,
    pub seed: u64,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            folds: 4,
            pd_iters: 300,
            path: LassoPathOptions::default(),
            seed: 0,
        }
    }
}

/// Primal-dual with cross-validated early stopping against a cross-validated
/// Lasso path on the same folds.
#[derive(Clone, Debug)]
pub struct LassoComparison {
    pub pd_cv: CvResult,
    pub pd_x: Vec<f64>,
    pub lasso: LassoPath,
    pub lasso_x: Vec<f64>,
    /// Relative MSE on the test rows, primal-dual then Lasso.
    pub test_mse: (f64, f64),
    /// Support F1 against the ground truth, when known.
    pub f1: Option<(f64, f64)>,
}

impl LassoComparison {
    pub fn pd_best_cv_mse(&self) -> f64 {
        self.pd_cv.mean_mse[self.pd_cv.best_k - 1]
    }

    pub fn lasso_best_cv_mse(&self) -> f64 {
        let cv = self.lasso.cv_mse.as_ref().expect("path run with folds");
        cv[self.lasso.best_index.expect("path run with folds")]
    }

    /// One row per grid value and per primal-dual iteration:
    /// `method,param,cv_mse,support_size`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "method,param,cv_mse,support_size")?;
        let cv = self.lasso.cv_mse.as_deref().unwrap_or(&[]);
        for (j, l) in self.lasso.lambdas.iter().enumerate() {
            let s = crate::vecops::support_size(&self.lasso.solutions[j], 0.0);
            let m = cv.get(j).map(|v| format!("{v:e}")).unwrap_or_default();
            writeln!(w, "lasso,{l:e},{m},{s}")?;
        }
        for (i, m) in self.pd_cv.mean_mse.iter().enumerate() {
            writeln!(w, "primal_dual,{},{m:e},", i + 1)?;
        }
        Ok(())
    }
}

fn pd_cv_config(p: &Problem, iters: usize) -> Result<SolverConfig> {
    let (s, t) = datadriven_sigma(p.op.as_ref(), &p.b, p.a_norm())?;
    scalar_config(p, s, t, iters)
}

pub fn compare_with_lasso(
    a: &DenseMatrix,
    b: &[f64],
    test: (&DenseMatrix, &[f64]),
    x_true: Option<&[f64]>,
    opts: &CompareOptions,
) -> Result<LassoComparison> {
    if opts.folds < 2 {
        return Err(Error::config("comparison needs at least 2 folds"));
    }
    let folds = kfold_row_splits(a, b, &Regularizer::L1, opts.folds, opts.seed)?;
    let pd_cv = cv_early_stop(&folds, |p| pd_cv_config(p, opts.pd_iters), opts.pd_iters)?;
    let full = Problem::new(Arc::new(a.clone()), b.to_vec(), Regularizer::L1)?;
    let cfg = pd_cv_config(&full, pd_cv.best_k)?;
    let pd_x = run(&full, &cfg, &StoppingRule::MaxIters(pd_cv.best_k), &mut [])?
        .state
        .estimate(cfg.averaging);

    let mut path_opts = opts.path.clone();
    path_opts.folds = opts.folds;
    path_opts.seed = opts.seed;
    let lasso = lasso_path(a, b, &path_opts)?;
    let lasso_x = lasso.solutions[lasso.best_index.expect("folds ≥ 2")].clone();

    let test_mse = (
        holdout_mse(test.0, test.1, &pd_x),
        holdout_mse(test.0, test.1, &lasso_x),
    );
    let f1 = x_true.map(|t| (f1_support(&pd_x, t, ZERO_TOL), f1_support(&lasso_x, t, ZERO_TOL)));
    Ok(LassoComparison { pd_cv, pd_x, lasso, lasso_x, test_mse, f1 })
}

/// Split the rows of an instance into the leading `n_train` rows and the rest.
pub fn train_test_split(inst: &SparseInstance, n_train: usize) -> Result<((DenseMatrix, Vec<f64>), (DenseMatrix, Vec<f64>))> {
    let n = inst.a.rows();
    if n_train == 0 || n_train >= n {
        return Err(Error::config(format!("{n_train} training rows out of {n}")));
    }
    let tr: Vec<usize> = (0..n_train).collect();
    let te: Vec<usize> = (n_train..n).collect();
    Ok((
        (inst.a.select_rows(&tr), inst.b_delta[..n_train].to_vec()),
        (inst.a.select_rows(&te), inst.b_delta[n_train..].to_vec()),
    ))
}


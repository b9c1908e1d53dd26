//! The preconditioned, inexact primal-dual iteration
//!
//! ```text
//! ỹ_k     = 2 y_k − y_{k−1}
//! x_{k+1} = prox^{T, ε_{k+1}}_R (x_k − T ∇F(x_k) − T A* ỹ_k)
//! y_{k+1} = y_k + Σ (A x_{k+1} − b^δ)
//! ```
//!
//! with parameter validation, step-size builders and stopping rules.

mod cv;
mod metrics;
mod params;

use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use cv::{cv_early_stop, fold_partition, kfold_row_splits, CvResult, Fold};
pub use metrics::{MetricsLog, MetricsRow, METRICS_HEADER};
pub use params::{
    datadriven_sigma, datadriven_sigma_or_fallback, pock_chambolle_precond, precond_diagonals, scaled_operator_norm,
    symmetric_steps, validate_params, validate_preconditioned, ParamConstants, PrecondMode,
    PrecondOptions, Validation,
};

use crate::error::{Error, Result};
use crate::linops::{operator_norm, LinOp};
use crate::regularizers::{inexact_prox, DiagMetric, ProxErrorSchedule, Regularizer};
use crate::vecops::{all_finite, dot};

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// Smooth term `F` with `L`-Lipschitz gradient.
#[derive(Clone)]
pub struct SmoothTerm {
    value: Arc<ValueFn>,
    grad: Arc<GradFn>,
    lipschitz: f64,
}

impl SmoothTerm {
    pub fn new(
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        lipschitz: f64,
    ) -> Result<Self> {
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(Error::config(format!("Lipschitz constant {lipschitz}")));
        }
        Ok(SmoothTerm {
            value: Arc::new(value),
            grad: Arc::new(grad),
            lipschitz,
        })
    }

    /// `F(x) = (c/2)‖x − center‖²`.
    pub fn quadratic(c: f64, center: Vec<f64>) -> Result<Self> {
        let cc = center.clone();
        SmoothTerm::new(
            move |x| 0.5 * c * x.iter().zip(&cc).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
            move |x| x.iter().zip(&center).map(|(a, b)| c * (a - b)).collect(),
            c.abs(),
        )
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        (self.grad)(x)
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

impl std::fmt::Debug for SmoothTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmoothTerm").field("L", &self.lipschitz).finish()
    }
}

/// `min R(x) + F(x)  s.t.  Ax = b`.
#[derive(Clone)]
pub struct Problem {
    pub op: Arc<dyn LinOp>,
    pub b: Vec<f64>,
    pub reg: Regularizer,
    pub smooth: Option<SmoothTerm>,
    a_norm: f64,
}

impl Problem {
    pub fn new(op: Arc<dyn LinOp>, b: Vec<f64>, reg: Regularizer) -> Result<Self> {
        if b.len() != op.out_dim() {
            return Err(Error::dim(format!(
                "rhs has {} entries, operator maps to {}",
                b.len(),
                op.out_dim()
            )));
        }
        reg.check_len(op.in_dim())?;
        let a_norm = operator_norm(op.as_ref());
        Ok(Problem {
            op,
            b,
            reg,
            smooth: None,
            a_norm,
        })
    }

    pub fn with_smooth(mut self, f: SmoothTerm) -> Self {
        self.smooth = Some(f);
        self
    }

    /// Override the operator norm (e.g. with an exact value).
    pub fn with_norm(mut self, a_norm: f64) -> Self {
        self.a_norm = a_norm;
        self
    }

    pub fn a_norm(&self) -> f64 {
        self.a_norm
    }

    pub fn lipschitz(&self) -> f64 {
        self.smooth.as_ref().map_or(0.0, SmoothTerm::lipschitz)
    }

    pub fn dim_x(&self) -> usize {
        self.op.in_dim()
    }

    pub fn dim_y(&self) -> usize {
        self.op.out_dim()
    }

    /// `R(x) + F(x)`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.reg.value(x) + self.smooth.as_ref().map_or(0.0, |f| f.value(x))
    }
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub t: DiagMetric,
    pub sigma: DiagMetric,
    pub xi: f64,
    pub eta: f64,
    pub schedule: ProxErrorSchedule,
    /// Report averaged iterates (`x̂_k`) instead of the last iterate.
    pub averaging: bool,
    pub max_iters: usize,
    pub validation: Validation,
    /// Metrics period; `None` selects 1 up to 10³ iterations and 10 beyond.
    pub log_every: Option<usize>,
    pub seed: u64,
}

impl SolverConfig {
    /// Scalar steps `T = τ·Id`, `Σ = σ·Id` with `ξ = 1/4`, `η = 3/2`.
    pub fn scalar(problem: &Problem, tau: f64, sigma: f64) -> Result<Self> {
        Ok(SolverConfig {
            t: DiagMetric::scalar(problem.dim_x(), tau)?,
            sigma: DiagMetric::scalar(problem.dim_y(), sigma)?,
            xi: 0.25,
            eta: 1.5,
            schedule: ProxErrorSchedule::Exact,
            averaging: true,
            max_iters: 1000,
            validation: Validation::Convergence,
            log_every: None,
            seed: 0,
        })
    }

    pub fn validate(&self, problem: &Problem) -> Result<ParamConstants> {
        if self.t.len() != problem.dim_x() || self.sigma.len() != problem.dim_y() {
            return Err(Error::dim("preconditioner size differs from problem"));
        }
        self.schedule.validate()?;
        match self.validation {
            Validation::Preconditioned => {
                validate_preconditioned(problem.op.as_ref(), problem.lipschitz(), &self.t, &self.sigma, self.xi, self.eta)
            }
            v => validate_params(
                problem.a_norm(),
                problem.lipschitz(),
                &self.t,
                &self.sigma,
                self.xi,
                self.eta,
                v,
            ),
        }
    }

    pub fn logs_at(&self, k: usize) -> bool {
        let every = self
            .log_every
            .unwrap_or(if k <= 1000 { 1 } else { 10 })
            .max(1);
        k % every == 0
    }
}

/// Iterates and running sums; `k` counts completed steps.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub y_prev: Vec<f64>,
    pub k: usize,
    pub sum_x: Vec<f64>,
    pub sum_y: Vec<f64>,
    /// ε of the most recent prox evaluation.
    pub last_eps: f64,
}

impl SolverState {
    /// `x₀ = 0`, `y₋₁ = y₀ = 0`.
    pub fn zeros(problem: &Problem) -> Self {
        Self::new(vec![0.0; problem.dim_x()], vec![0.0; problem.dim_y()])
    }

    pub fn new(x0: Vec<f64>, y0: Vec<f64>) -> Self {
        SolverState {
            sum_x: vec![0.0; x0.len()],
            sum_y: vec![0.0; y0.len()],
            y_prev: y0.clone(),
            x: x0,
            y: y0,
            k: 0,
            last_eps: 0.0,
        }
    }

    /// `x̂_k = (1/k) Σ_{j=1..k} x_j`; `x₀` when `k = 0`.
    pub fn x_avg(&self) -> Vec<f64> {
        if self.k == 0 {
            return self.x.clone();
        }
        let inv = 1.0 / self.k as f64;
        self.sum_x.iter().map(|v| v * inv).collect()
    }

    pub fn y_avg(&self) -> Vec<f64> {
        if self.k == 0 {
            return self.y.clone();
        }
        let inv = 1.0 / self.k as f64;
        self.sum_y.iter().map(|v| v * inv).collect()
    }

    /// The reported primal estimate under `averaging`.
    pub fn estimate(&self, averaging: bool) -> Vec<f64> {
        if averaging {
            self.x_avg()
        } else {
            self.x.clone()
        }
    }

    pub fn dual_estimate(&self, averaging: bool) -> Vec<f64> {
        if averaging {
            self.y_avg()
        } else {
            self.y.clone()
        }
    }
}

/// `prox^Σ_{⟨b,·⟩}(w) = w − Σ b`; applied to `w = y + ΣAx` it reproduces the
/// explicit dual update.
pub fn dual_prox_update(y: &[f64], ax: &[f64], b: &[f64], sigma: &DiagMetric) -> Vec<f64> {
    let s = sigma.diag();
    let w: Vec<f64> = y.iter().zip(ax).zip(s).map(|((yi, a), si)| yi + si * a).collect();
    w.iter().zip(b).zip(s).map(|((wi, bi), si)| wi - si * bi).collect()
}

/// One step of the iteration. Consumes and returns the state.
pub fn pd_step<R: rand::Rng + ?Sized>(
    problem: &Problem,
    config: &SolverConfig,
    mut state: SolverState,
    rng: &mut R,
) -> Result<SolverState> {
    let td = config.t.diag();
    let ytil: Vec<f64> = state
        .y
        .iter()
        .zip(&state.y_prev)
        .map(|(a, b)| 2.0 * a - b)
        .collect();
    let mut v = problem.op.adjoint(&ytil);
    if let Some(f) = &problem.smooth {
        for (vi, gi) in v.iter_mut().zip(f.grad(&state.x)) {
            *vi += gi;
        }
    }
    for ((vi, xi), ti) in v.iter_mut().zip(&state.x).zip(td) {
        *vi = xi - ti * *vi;
    }
    let (x_new, eps) = inexact_prox(&problem.reg, &v, &config.t, &config.schedule, state.k + 1, rng)?;
    let ax = problem.op.apply(&x_new);
    let mut y_new = state.y.clone();
    for (((yi, a), bi), si) in y_new.iter_mut().zip(&ax).zip(&problem.b).zip(config.sigma.diag()) {
        *yi += si * (a - bi);
    }
    let k = state.k + 1;
    if !all_finite(&x_new) {
        return Err(Error::Numerical { iteration: k, what: "primal iterate".into() });
    }
    if !all_finite(&y_new) {
        return Err(Error::Numerical { iteration: k, what: "dual iterate".into() });
    }
    state.sum_x.iter_mut().zip(&x_new).for_each(|(s, v)| *s += v);
    state.sum_y.iter_mut().zip(&y_new).for_each(|(s, v)| *s += v);
    state.y_prev = std::mem::replace(&mut state.y, y_new);
    state.x = x_new;
    state.k = k;
    state.last_eps = eps;
    Ok(state)
}

/// When to stop [`run`].
#[derive(Clone)]
pub enum StoppingRule {
    MaxIters(usize),
    /// Stop at `k = ⌈C̃/δ⌉`.
    FixedK { c_tilde: f64, delta: f64 },
    /// Run `max_iters` steps, tracking hold-out MSE of the estimate; the
    /// returned `best_k` is its (first) minimizer.
    Holdout {
        op: Arc<dyn LinOp>,
        b: Vec<f64>,
        max_iters: usize,
    },
}

impl StoppingRule {
    pub fn horizon(&self) -> Result<usize> {
        match self {
            StoppingRule::MaxIters(k) => Ok(*k),
            StoppingRule::FixedK { c_tilde, delta } => fixed_k_iterations(*c_tilde, *delta),
            StoppingRule::Holdout { max_iters, .. } => Ok(*max_iters),
        }
    }
}

/// `⌈C̃/δ⌉`, at least 1.
pub fn fixed_k_iterations(c_tilde: f64, delta: f64) -> Result<usize> {
    if !(delta > 0.0) {
        return Err(Error::config("fixed-k stopping needs δ > 0"));
    }
    if !(c_tilde > 0.0 && c_tilde.is_finite()) {
        return Err(Error::config(format!("C̃ = {c_tilde} must be positive")));
    }
    let k = c_tilde / delta;
    // 1/0.01 style ratios land a hair above the integer
    let k = (k * (1.0 - 1e-12)).ceil();
    if k > usize::MAX as f64 / 2.0 {
        return Err(Error::config("fixed-k horizon too large"));
    }
    Ok((k as usize).max(1))
}

/// Metric hook invoked at every logged iteration.
pub type Callback<'a> = dyn FnMut(&SolverState, &mut MetricsRow) + 'a;

pub struct RunOutput {
    pub state: SolverState,
    pub log: MetricsLog,
    pub constants: ParamConstants,
    /// Minimizer of the hold-out MSE, when a hold-out rule was used.
    pub best_k: Option<usize>,
    /// Estimate at `best_k`.
    pub best_x: Option<Vec<f64>>,
    /// Realized prox errors, one per step.
    pub eps: Vec<f64>,
}

/// Hold-out relative MSE `‖A_ho x − b_ho‖² / ‖b_ho‖²`.
pub fn holdout_mse(op: &dyn LinOp, b: &[f64], x: &[f64]) -> f64 {
    let r: Vec<f64> = op.apply(x).iter().zip(b).map(|(a, c)| a - c).collect();
    let nb = dot(b, b);
    dot(&r, &r) / if nb > 0.0 { nb } else { 1.0 }
}

/// Iterate from `x₀ = 0, y₋₁ = y₀ = 0` until the stopping rule fires.
pub fn run(
    problem: &Problem,
    config: &SolverConfig,
    stopping: &StoppingRule,
    callbacks: &mut [&mut Callback<'_>],
) -> Result<RunOutput> {
    run_from(problem, config, stopping, SolverState::zeros(problem), callbacks)
}

pub fn run_from(
    problem: &Problem,
    config: &SolverConfig,
    stopping: &StoppingRule,
    init: SolverState,
    callbacks: &mut [&mut Callback<'_>],
) -> Result<RunOutput> {
    let constants = config.validate(problem)?;
    let horizon = stopping.horizon()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = init;
    let mut log = MetricsLog::default();
    let mut eps = Vec::with_capacity(horizon);
    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    let start = Instant::now();
    let k0 = state.k;

    while state.k - k0 < horizon {
        state = pd_step(problem, config, state, &mut rng)?;
        eps.push(state.last_eps);
        let last = state.k - k0 == horizon;

        let mut mse = None;
        if let StoppingRule::Holdout { op, b, .. } = stopping {
            let est = state.estimate(config.averaging);
            let m = holdout_mse(op.as_ref(), b, &est);
            if best.as_ref().is_none_or(|(_, bm, _)| m < *bm) {
                best = Some((state.k, m, est));
            }
            mse = Some(m);
        }

        if config.logs_at(state.k) || last {
            let mut row = MetricsRow::new(state.k);
            row.epsilon_k = Some(state.last_eps);
            row.holdout_mse = mse;
            for cb in callbacks.iter_mut() {
                cb(&state, &mut row);
            }
            row.elapsed_ms = Some(start.elapsed().as_secs_f64() * 1e3);
            log.push(row);
        }
    }

    let (best_k, best_x) = match best {
        Some((k, _, x)) => (Some(k), Some(x)),
        None => (None, None),
    };
    Ok(RunOutput {
        state,
        log,
        constants,
        best_k,
        best_x,
        eps,
    })
}

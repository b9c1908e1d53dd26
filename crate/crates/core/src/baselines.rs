//! Comparison methods: Lasso by (accelerated) proximal gradient along a
//! warm-started path, Landweber iterations and linearized Bregman.

use std::io::Write;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linops::{operator_norm, DenseMatrix, LinOp};
use crate::pdsolver::{fold_partition, holdout_mse};
use crate::regularizers::soft_threshold;
use crate::vecops::{dot, norm1, norm2, norm_inf, support_size};

pub const LASSO_PATH_HEADER: &str = "lambda,objective,support_size,cv_mse";

/// `½‖Ax − b‖² + λ‖x‖₁`.
pub fn lasso_objective(a: &dyn LinOp, b: &[f64], lambda: f64, x: &[f64]) -> f64 {
    let r: Vec<f64> = a.apply(x).iter().zip(b).map(|(u, v)| u - v).collect();
    0.5 * dot(&r, &r) + lambda * norm1(x)
}

/// Largest violation of the Lasso optimality conditions, relative to `λ`.
pub fn lasso_kkt(a: &dyn LinOp, b: &[f64], lambda: f64, x: &[f64]) -> f64 {
    let r: Vec<f64> = a.apply(x).iter().zip(b).map(|(u, v)| u - v).collect();
    kkt_from_grad(x, &a.adjoint(&r), lambda)
}

fn kkt_from_grad(x: &[f64], g: &[f64], lambda: f64) -> f64 {
    let worst = x.iter().zip(g).fold(0.0_f64, |m, (xi, gi)| {
        let v = if *xi != 0.0 {
            (gi + lambda * xi.signum()).abs()
        } else {
            (gi.abs() - lambda).max(0.0)
        };
        m.max(v)
    });
    worst / lambda
}

#[derive(Clone, Debug, PartialEq)]
pub struct LassoSolution {
    pub x: Vec<f64>,
    pub iters: usize,
    /// Relative KKT residual at `x`.
    pub kkt: f64,
    pub converged: bool,
}

fn grad_ls(a: &dyn LinOp, b: &[f64], x: &[f64]) -> Vec<f64> {
    let r: Vec<f64> = a.apply(x).iter().zip(b).map(|(u, v)| u - v).collect();
    a.adjoint(&r)
}

fn prox_step(z: &[f64], g: &[f64], step: f64, lambda: f64) -> Vec<f64> {
    z.iter()
        .zip(g)
        .map(|(zi, gi)| soft_threshold(zi - step * gi, step * lambda))
        .collect()
}

fn check_lasso(a: &dyn LinOp, b: &[f64], lambda: f64, x_init: Option<&[f64]>) -> Result<()> {
    if !(lambda > 0.0) {
        return Err(Error::config(format!("λ = {lambda} must be positive")));
    }
    if b.len() != a.out_dim() || x_init.is_some_and(|x| x.len() != a.in_dim()) {
        return Err(Error::dim("lasso data sizes"));
    }
    Ok(())
}

/// Plain proximal gradient with step `1/‖A‖²`, `iters` steps from `x_init`.
pub fn ista_lasso(a: &dyn LinOp, b: &[f64], lambda: f64, x_init: Option<&[f64]>, iters: usize) -> Result<Vec<f64>> {
    check_lasso(a, b, lambda, x_init)?;
    let step = 1.0 / operator_norm(a).powi(2);
    let mut x = x_init.map_or_else(|| vec![0.0; a.in_dim()], <[f64]>::to_vec);
    for _ in 0..iters {
        let g = grad_ls(a, b, &x);
        x = prox_step(&x, &g, step, lambda);
    }
    Ok(x)
}

/// FISTA with step `1/‖A‖²` and a momentum restart whenever the objective
/// increases. Stops once the relative KKT residual (checked every 10
/// iterations) is below `tol`; otherwise returns the best iterate seen with
/// `converged = false`.
pub fn fista_lasso(
    a: &dyn LinOp,
    b: &[f64],
    lambda: f64,
    x_init: Option<&[f64]>,
    tol: f64,
    max_iters: usize,
) -> Result<LassoSolution> {
    let a_norm = operator_norm(a);
    fista_lasso_with_norm(a, b, lambda, x_init, tol, max_iters, a_norm)
}

pub fn fista_lasso_with_norm(
    a: &dyn LinOp,
    b: &[f64],
    lambda: f64,
    x_init: Option<&[f64]>,
    tol: f64,
    max_iters: usize,
    a_norm: f64,
) -> Result<LassoSolution> {
    check_lasso(a, b, lambda, x_init)?;
    let d = a.in_dim();
    if lambda >= norm_inf(&a.adjoint(b)) {
        return Ok(LassoSolution { x: vec![0.0; d], iters: 0, kkt: 0.0, converged: true });
    }
    if a_norm == 0.0 {
        return Err(Error::DegenerateData("zero design".into()));
    }
    let step = 1.0 / (a_norm * a_norm * (1.0 + 1e-9));
    let n = b.len();
    let objective = |r: &[f64], x: &[f64]| 0.5 * dot(r, r) + lambda * norm1(x);
    let mut ax = vec![0.0; n];
    // Returns the residual at `x` and `A*` of its extrapolation with weight
    // `beta` from `r_prev`, i.e. the gradient at the next `z`, in one sweep.
    let mut sweep = |x: &[f64], r_prev: &[f64], beta: f64| {
        let mut r = vec![0.0; n];
        let mut g = vec![0.0; d];
        let mut w = |i: usize, v: f64| {
            r[i] = v - b[i];
            r[i] + beta * (r[i] - r_prev[i])
        };
        a.apply_adjoint_fused(x, &mut w, &mut ax, &mut g);
        (r, g)
    };
    let mut x = x_init.map_or_else(|| vec![0.0; d], <[f64]>::to_vec);
    let (mut rx, mut g) = sweep(&x, &vec![0.0; n], 0.0);
    let mut fx = objective(&rx, &x);
    let mut kkt = kkt_from_grad(&x, &g, lambda);
    if kkt <= tol {
        return Ok(LassoSolution { x, iters: 0, kkt, converged: true });
    }
    let mut z = x.clone();
    let mut t = 1.0_f64;
    let mut best = (fx, x.clone());
    for it in 1..=max_iters {
        let mut x_new = prox_step(&z, &g, step, lambda);
        let mut t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let mut beta = (t - 1.0) / t_new;
        let (mut r_new, mut g_new) = sweep(&x_new, &rx, beta);
        let mut f_new = objective(&r_new, &x_new);
        if f_new > fx {
            // restart from the last iterate
            x_new = prox_step(&x, &a.adjoint(&rx), step, lambda);
            t_new = 0.5 * (1.0 + 5.0_f64.sqrt());
            beta = 0.0;
            (r_new, g_new) = sweep(&x_new, &rx, 0.0);
            f_new = objective(&r_new, &x_new);
        }
        z = x_new.iter().zip(&x).map(|(xn, xo)| xn + beta * (xn - xo)).collect();
        x = x_new;
        rx = r_new;
        g = g_new;
        fx = f_new;
        t = t_new;
        if fx < best.0 {
            best = (fx, x.clone());
        }
        if it % 10 == 0 || it == max_iters {
            kkt = kkt_from_grad(&x, &a.adjoint(&rx), lambda);
            if kkt <= tol {
                return Ok(LassoSolution { x, iters: it, kkt, converged: true });
            }
        }
    }
    log::warn!("FISTA hit {max_iters} iterations at λ = {lambda:.4e} (KKT {kkt:.2e})");
    let kkt = lasso_kkt(a, b, lambda, &best.1);
    Ok(LassoSolution { x: best.1, iters: max_iters, kkt, converged: false })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoPathOptions {
    pub grid_size: usize,
    pub lambda_min_ratio: f64,
    /// Number of CV folds; 0 disables cross-validation.
    pub folds: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for LassoPathOptions {
    fn default() -> Self {
        LassoPathOptions {
            grid_size: 100,
            lambda_min_ratio: 1e-3,
            folds: 0,
            seed: 0,
            tol: 1e-6,
            max_iters: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LassoPath {
    pub lambdas: Vec<f64>,
    pub solutions: Vec<Vec<f64>>,
    pub objectives: Vec<f64>,
    pub iters: Vec<usize>,
    pub cv_mse: Option<Vec<f64>>,
    /// Index of the smallest averaged CV MSE (first on ties).
    pub best_index: Option<usize>,
}

/// `λ_max · r^{k/(G−1)}`, `k = 0..G`.
pub fn lambda_grid(lambda_max: f64, grid_size: usize, min_ratio: f64) -> Vec<f64> {
    if grid_size == 1 {
        return vec![lambda_max];
    }
    (0..grid_size)
        .map(|k| lambda_max * min_ratio.powf(k as f64 / (grid_size - 1) as f64))
        .collect()
}

fn solve_path(
    a: &dyn LinOp,
    b: &[f64],
    lambdas: &[f64],
    opts: &LassoPathOptions,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let a_norm = operator_norm(a);
    let mut sols: Vec<Vec<f64>> = Vec::with_capacity(lambdas.len());
    let mut iters = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        let init = sols.last().map(Vec::as_slice);
        let s = fista_lasso_with_norm(a, b, l, init, opts.tol, opts.max_iters, a_norm)?;
        iters.push(s.iters);
        sols.push(s.x);
    }
    Ok((sols, iters))
}

/// Warm-started Lasso path on a geometric grid from `λ_max = ‖A*b‖_∞`, with
/// optional K-fold CV (folds run in parallel, each along the same grid).
pub fn lasso_path(a: &DenseMatrix, b: &[f64], opts: &LassoPathOptions) -> Result<LassoPath> {
    if opts.grid_size == 0 || !(opts.lambda_min_ratio > 0.0 && opts.lambda_min_ratio < 1.0) {
        return Err(Error::config("grid_size ≥ 1 and 0 < λ_min_ratio < 1 required"));
    }
    if opts.folds == 1 || opts.folds > a.rows() {
        return Err(Error::config(format!("{} folds for {} rows", opts.folds, a.rows())));
    }
    let lambda_max = norm_inf(&a.adjoint(b));
    if lambda_max == 0.0 {
        return Err(Error::DegenerateData("A*b = 0, empty path".into()));
    }
    let lambdas = lambda_grid(lambda_max, opts.grid_size, opts.lambda_min_ratio);
    let (solutions, iters) = solve_path(a, b, &lambdas, opts)?;
    let objectives = lambdas
        .iter()
        .zip(&solutions)
        .map(|(l, x)| lasso_objective(a, b, *l, x))
        .collect();

    let (cv_mse, best_index) = if opts.folds >= 2 {
        let parts = fold_partition(a.rows(), opts.folds, opts.seed);
        let curves: Vec<Vec<f64>> = parts
            .par_iter()
            .map(|held| {
                let mut is_held = vec![false; a.rows()];
                held.iter().for_each(|&i| is_held[i] = true);
                let train: Vec<usize> = (0..a.rows()).filter(|&i| !is_held[i]).collect();
                let at = a.select_rows(&train);
                let bt: Vec<f64> = train.iter().map(|&i| b[i]).collect();
                let ah = a.select_rows(held);
                let bh: Vec<f64> = held.iter().map(|&i| b[i]).collect();
                let (sols, _) = solve_path(&at, &bt, &lambdas, opts)?;
                Ok(sols.iter().map(|x| holdout_mse(&ah, &bh, x)).collect())
            })
            .collect::<Result<_>>()?;
        let nf = curves.len() as f64;
        let mean: Vec<f64> = (0..lambdas.len())
            .map(|j| curves.iter().map(|c| c[j]).sum::<f64>() / nf)
            .collect();
        let best = (0..mean.len()).fold(0, |bi, j| if mean[j] < mean[bi] { j } else { bi });
        (Some(mean), Some(best))
    } else {
        (None, None)
    };

    Ok(LassoPath { lambdas, solutions, objectives, iters, cv_mse, best_index })
}

impl LassoPath {
    pub fn support_sizes(&self) -> Vec<usize> {
        self.solutions.iter().map(|x| support_size(x, 0.0)).collect()
    }

    /// Relative MSE of every path solution on `(A_ho, b_ho)`.
    pub fn holdout_curve(&self, op: &dyn LinOp, b: &[f64]) -> Vec<f64> {
        self.solutions.iter().map(|x| holdout_mse(op, b, x)).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{LASSO_PATH_HEADER}")?;
        let sizes = self.support_sizes();
        for j in 0..self.lambdas.len() {
            let cv = self
                .cv_mse
                .as_ref()
                .map(|c| format!("{:e}", c[j]))
                .unwrap_or_default();
            writeln!(w, "{:e},{:e},{},{}", self.lambdas[j], self.objectives[j], sizes[j], cv)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LandweberTrace {
    /// `x_0 ..= x_iters`.
    pub xs: Vec<Vec<f64>>,
    /// `y_0 ..= y_iters` of the dual recursion `y ← y − γ(AA*y + b)`.
    pub ys: Vec<Vec<f64>>,
}

/// Gradient descent on `½‖Ax − b‖²` from `x₀ = 0`, together with the dual
/// recursion whose iterates satisfy `x_k = −A*y_k`.
pub fn landweber(a: &dyn LinOp, b: &[f64], gamma: f64, iters: usize) -> Result<LandweberTrace> {
    let a_norm = operator_norm(a);
    if !(gamma > 0.0 && gamma * a_norm * a_norm < 2.0) {
        return Err(Error::config(format!("γ = {gamma} outside (0, 2/‖A‖²)")));
    }
    let mut x = vec![0.0; a.in_dim()];
    let mut y = vec![0.0; a.out_dim()];
    let mut xs = vec![x.clone()];
    let mut ys = vec![y.clone()];
    for _ in 0..iters {
        let g = grad_ls(a, b, &x);
        x.iter_mut().zip(&g).for_each(|(xi, gi)| *xi -= gamma * gi);
        let aay = a.apply(&a.adjoint(&y));
        y.iter_mut()
            .zip(aay.iter().zip(b))
            .for_each(|(yi, (u, bi))| *yi -= gamma * (u + bi));
        xs.push(x.clone());
        ys.push(y.clone());
    }
    Ok(LandweberTrace { xs, ys })
}

/// One linearized Bregman step for `J = ‖·‖₁ + (1/2α)‖·‖²` in subgradient
/// form: returns `(x_{k+1}, p_{k+1})` from `x_k`, `p_k ∈ ∂‖x_k‖₁` and the
/// data-fit gradient `g_k = A*(Ax_k − b)`.
pub fn linearized_bregman_step(x: &[f64], p: &[f64], g: &[f64], alpha: f64) -> (Vec<f64>, Vec<f64>) {
    let x_new: Vec<f64> = x
        .iter()
        .zip(p)
        .zip(g)
        .map(|((xi, pi), gi)| soft_threshold(xi + alpha * (pi - gi), alpha))
        .collect();
    let p_new = p
        .iter()
        .zip(g)
        .zip(x_new.iter().zip(x))
        .map(|((pi, gi), (xn, xo))| pi - gi - (xn - xo) / alpha)
        .collect();
    (x_new, p_new)
}

/// Linearized Bregman iterations `v ← v − h A*(Ax − b)`, `x = α·soft(v, 1)`
/// from zero. `step = None` selects `h = 1/(α‖A‖²)`; `h = 1` is the
/// subgradient form of [`linearized_bregman_step`]. Returns `x_1 ..= x_iters`.
pub fn linearized_bregman(
    a: &dyn LinOp,
    b: &[f64],
    alpha: f64,
    iters: usize,
    step: Option<f64>,
) -> Result<Vec<Vec<f64>>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::config(format!("α = {alpha} must be positive")));
    }
    let h = match step {
        Some(h) => h,
        None => 1.0 / (alpha * operator_norm(a).powi(2)),
    };
    let mut v = vec![0.0; a.in_dim()];
    let mut x = vec![0.0; a.in_dim()];
    let mut trace = Vec::with_capacity(iters);
    for k in 0..iters {
        let g = grad_ls(a, b, &x);
        v.iter_mut().zip(&g).for_each(|(vi, gi)| *vi -= h * gi);
        x = v.iter().map(|vi| alpha * soft_threshold(*vi, 1.0)).collect();
        let n = norm2(&x);
        if !(n <= 1e12) {
            return Err(Error::Numerical { iteration: k + 1, what: format!("‖x‖ = {n:e}") });
        }
        trace.push(x.clone());
    }
    Ok(trace)
}

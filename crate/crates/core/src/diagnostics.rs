//! Optimality measures against a known saddle point, ℓ1 extended-support
//! analysis, restricted-isometry constants and the theoretical bound
//! constants of the early-stopped iteration.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linops::DenseMatrix;
use crate::pdsolver::{MetricsRow, ParamConstants, Problem, SolverState};
use crate::regularizers::{DiagMetric, Regularizer};
use crate::vecops::{dist, dot, norm1, norm_inf, sub, support_size};

/// Default threshold of [`f1_support`] and of logged support sizes.
pub const ZERO_TOL: f64 = 1e-9;
/// Default saturation threshold of [`extended_support`].
pub const TOL_SAT: f64 = 1e-9;

/// A primal-dual solution `(x*, y*)` of the noiseless problem with data
/// `b*`, and the noise level `δ ≥ ‖b^δ − b*‖`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaddleCertificate {
    pub x_star: Vec<f64>,
    pub y_star: Vec<f64>,
    pub b_star: Vec<f64>,
    pub delta: f64,
}

impl SaddleCertificate {
    /// `−A*y* − ∇F(x*)`.
    pub fn subgradient(&self, problem: &Problem) -> Vec<f64> {
        let mut g = problem.op.adjoint(&self.y_star);
        if let Some(f) = &problem.smooth {
            for (gi, di) in g.iter_mut().zip(f.grad(&self.x_star)) {
                *gi += di;
            }
        }
        g.iter_mut().for_each(|v| *v = -*v);
        g
    }

    /// Checks `‖Ax* − b*‖ ≤ 1e−8` and the inclusion `−A*y* − ∇F(x*) ∈ ∂R(x*)`
    /// through its Fenchel gap (≤ 1e−6).
    pub fn validate(&self, problem: &Problem) -> Result<()> {
        if self.x_star.len() != problem.dim_x() || self.y_star.len() != problem.dim_y() {
            return Err(Error::dim("certificate size differs from problem"));
        }
        let res = dist(&problem.op.apply(&self.x_star), &self.b_star);
        if res > 1e-8 {
            return Err(Error::Certificate(format!("‖Ax* − b*‖ = {res:.3e}")));
        }
        let g = self.subgradient(problem);
        let fenchel = problem.reg.value(&self.x_star) + problem.reg.conjugate(&g) - dot(&g, &self.x_star);
        if !(fenchel.abs() <= 1e-6) {
            return Err(Error::Certificate(format!("Fenchel gap {fenchel:.3e}")));
        }
        Ok(())
    }
}

/// `R(x) + F(x) − R(x*) − F(x*) + ⟨y*, Ax − b*⟩`.
pub fn lagrangian_gap(problem: &Problem, cert: &SaddleCertificate, x: &[f64], _y: &[f64]) -> f64 {
    let r = sub(&problem.op.apply(x), &cert.b_star);
    problem.objective(x) - problem.objective(&cert.x_star) + dot(&cert.y_star, &r)
}

/// Bregman divergence of `R + F` at `x*` with subgradient `−A*y* − ∇F(x*)`.
pub fn bregman_divergence(problem: &Problem, cert: &SaddleCertificate, x: &[f64]) -> f64 {
    let g = cert.subgradient(problem);
    problem.objective(x) - problem.objective(&cert.x_star) - dot(&g, &sub(x, &cert.x_star))
}

/// ℓ1 Bregman divergence `‖x‖₁ − ‖x*‖₁ + ⟨A*y*, x − x*⟩`, which reduces to
/// `Σ |x_i| + (A*y*)_i x_i` at a saddle point.
pub fn bregman_l1(x: &[f64], x_star: &[f64], aty_star: &[f64]) -> Result<f64> {
    let m = norm_inf(aty_star);
    if m > 1.0 + 1e-6 {
        return Err(Error::Certificate(format!("‖A*y*‖_∞ = {m} exceeds 1")));
    }
    Ok(norm1(x) - norm1(x_star) + dot(aty_star, &sub(x, x_star)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtendedSupportReport {
    /// Saturated indices `{i : |(A*y*)_i| ≥ 1 − tol}`.
    pub gamma: Vec<usize>,
    /// Saturation gap: the largest unsaturated magnitude (0 if none).
    pub m: f64,
    pub magnitudes: Vec<f64>,
}

pub fn extended_support(aty_star: &[f64], tol_sat: f64) -> ExtendedSupportReport {
    let magnitudes: Vec<f64> = aty_star.iter().map(|v| v.abs()).collect();
    let mut gamma = Vec::new();
    let mut m = 0.0_f64;
    for (i, a) in magnitudes.iter().enumerate() {
        if *a >= 1.0 - tol_sat {
            gamma.push(i);
        } else {
            m = m.max(*a);
        }
    }
    ExtendedSupportReport { gamma, m, magnitudes }
}

/// Restricted isometry / orthogonality constants and the derived
/// `W_s`, `M_s`, `Q_s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsConstants {
    pub s: usize,
    pub theta_s: f64,
    pub theta_ss: f64,
    pub theta_s2s: f64,
    pub w_s: f64,
    pub m_s: f64,
    pub q_s: f64,
    /// `false` for sampled estimates, which are only lower bounds.
    pub exact: bool,
}

impl CsConstants {
    pub fn from_thetas(s: usize, theta_s: f64, theta_ss: f64, theta_s2s: f64, exact: bool) -> Self {
        let denom = 1.0 - theta_s - theta_s2s;
        let (m_s, w_s) = if denom > 0.0 && theta_s < 1.0 {
            let m = theta_ss / denom;
            (m, (s as f64).sqrt() / (1.0 - theta_s).sqrt() * m)
        } else {
            (f64::INFINITY, f64::INFINITY)
        };
        let q_s = if theta_s < 1.0 { 1.0 / (1.0 - theta_s).sqrt() } else { f64::INFINITY };
        CsConstants { s, theta_s, theta_ss, theta_s2s, w_s, m_s, q_s, exact }
    }

    /// `θ_s + θ_{s,s} + θ_{s,2s} < 1`.
    pub fn is_valid(&self) -> bool {
        self.theta_s + self.theta_ss + self.theta_s2s < 1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RipMode {
    /// Enumerate all supports (`d ≤ 20`, `s ≤ 3`).
    Exact,
    /// Sample supports at random; yields lower bounds.
    MonteCarlo { samples: usize },
}

fn gram(a: &DMatrix<f64>, s1: &[usize], s2: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(s1.len(), s2.len(), |i, j| a.column(s1[i]).dot(&a.column(s2[j])))
}

fn isometry_defect(a: &DMatrix<f64>, s: &[usize]) -> f64 {
    let ev = gram(a, s, s).symmetric_eigenvalues();
    ev.iter().fold(0.0_f64, |m, l| m.max((l - 1.0).abs()))
}

fn cross_norm(a: &DMatrix<f64>, s1: &[usize], s2: &[usize]) -> f64 {
    let g = gram(a, s1, s2);
    g.singular_values().iter().cloned().fold(0.0, f64::max)
}

fn combinations(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// `θ_s`, `θ_{s,s}` and `θ_{s,2s}` of the columns of `A`.
pub fn estimate_rip_constants(a: &DenseMatrix, s: usize, mode: RipMode, seed: u64) -> Result<CsConstants> {
    let d = a.cols();
    if s == 0 || 3 * s > d {
        return Err(Error::config(format!("s = {s} needs 1 ≤ 3s ≤ d = {d}")));
    }
    let am = a.to_nalgebra();
    let (mut ts, mut tss, mut ts2s) = (0.0_f64, 0.0_f64, 0.0_f64);
    match mode {
        RipMode::Exact => {
            if d > 20 || s > 3 {
                return Err(Error::config(format!(
                    "exact enumeration limited to d ≤ 20, s ≤ 3 (got d = {d}, s = {s})"
                )));
            }
            combinations(d, s, |sup| {
                ts = ts.max(isometry_defect(&am, sup));
                let rest: Vec<usize> = (0..d).filter(|j| !sup.contains(j)).collect();
                combinations(rest.len(), s, |pos| {
                    let other: Vec<usize> = pos.iter().map(|&p| rest[p]).collect();
                    tss = tss.max(cross_norm(&am, sup, &other));
                });
                combinations(rest.len(), 2 * s, |pos| {
                    let other: Vec<usize> = pos.iter().map(|&p| rest[p]).collect();
                    ts2s = ts2s.max(cross_norm(&am, sup, &other));
                });
            });
        }
        RipMode::MonteCarlo { samples } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..samples {
                let pick = sample(&mut rng, d, 3 * s).into_vec();
                let (s1, rest) = pick.split_at(s);
                ts = ts.max(isometry_defect(&am, s1));
                tss = tss.max(cross_norm(&am, s1, &rest[..s]));
                ts2s = ts2s.max(cross_norm(&am, s1, rest));
            }
        }
    }
    Ok(CsConstants::from_thetas(s, ts, tss, ts2s, mode == RipMode::Exact))
}

/// `Q_s ‖Ax − b*‖ + (1 + Q_s‖A‖)/(1 − M_s) · D`.
pub fn recovery_bound(cs: &CsConstants, a_norm: f64, feas: f64, breg: f64) -> Result<f64> {
    if !(cs.m_s < 1.0) {
        return Err(Error::Certificate(format!("M_s = {} ≥ 1", cs.m_s)));
    }
    Ok(cs.q_s * feas + (1.0 + cs.q_s * a_norm) / (1.0 - cs.m_s) * breg)
}

/// Constants of the gap and feasibility bounds; `c5..c9` are present only
/// when `ρ > 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub v0: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: Option<f64>,
    pub c6: Option<f64>,
    pub c7: Option<f64>,
    pub c8: Option<f64>,
    pub c9: Option<f64>,
}

/// `V(z) = ½‖x‖²_T + ½‖y‖²_Σ`.
pub fn lyapunov(x: &[f64], y: &[f64], t: &DiagMetric, sigma: &DiagMetric) -> f64 {
    0.5 * t.norm_sq(x) + 0.5 * sigma.norm_sq(y)
}

#[allow(clippy::too_many_arguments)]
pub fn compute_bound_constants(
    cert: &SaddleCertificate,
    t: &DiagMetric,
    sigma: &DiagMetric,
    params: &ParamConstants,
    x0: &[f64],
    y0: &[f64],
    c0: f64,
    with_feasibility: bool,
) -> Result<BoundConstants> {
    let v0 = lyapunov(&sub(x0, &cert.x_star), &sub(y0, &cert.y_star), t, sigma);
    let sm = sigma.max();
    let c1 = v0;
    let c2 = c0 + (2.0 * sm * v0).sqrt();
    let c3 = (2.0 * sm * c0).sqrt();
    let c4 = 2.0 * sm;
    let feas = if params.rho > 0.0 {
        let f = 2.0 * params.eta / params.rho;
        Some([
            f * c1,
            f * c2,
            f * c3,
            f * c4,
            params.eta * sigma.min() * (params.eta - 1.0) / params.rho,
        ])
    } else if with_feasibility {
        return Err(Error::StrictConfig(format!("ρ = {:.6e} ≤ 0", params.rho)));
    } else {
        None
    };
    Ok(BoundConstants {
        v0,
        c0,
        c1,
        c2,
        c3,
        c4,
        c5: feas.map(|f| f[0]),
        c6: feas.map(|f| f[1]),
        c7: feas.map(|f| f[2]),
        c8: feas.map(|f| f[3]),
        c9: feas.map(|f| f[4]),
    })
}

/// `(gap bound, squared-feasibility bound)` at iteration `k`; the second
/// entry is `None` when `C5..C9` are unavailable.
pub fn theoretical_bounds(c: &BoundConstants, k: usize, delta: f64) -> (f64, Option<f64>) {
    let kf = k.max(1) as f64;
    let d32k = delta.powf(1.5) * kf.sqrt();
    let d2k = delta * delta * kf;
    let gap = c.c1 / kf + c.c2 * delta + c.c3 * d32k + c.c4 * d2k;
    let feas = match (c.c5, c.c6, c.c7, c.c8, c.c9) {
        (Some(c5), Some(c6), Some(c7), Some(c8), Some(c9)) => {
            Some(c5 / kf + c6 * delta + c7 * d32k + c8 * d2k + c9 * delta * delta)
        }
        _ => None,
    };
    (gap, feas)
}

/// F1 score between the supports of `x_est` and `x_true`.
pub fn f1_support(x_est: &[f64], x_true: &[f64], zero_tol: f64) -> f64 {
    let (mut tp, mut ne, mut nt) = (0usize, 0usize, 0usize);
    for (e, t) in x_est.iter().zip(x_true) {
        let (ie, it) = (e.abs() > zero_tol, t.abs() > zero_tol);
        ne += ie as usize;
        nt += it as usize;
        tp += (ie && it) as usize;
    }
    match (ne, nt) {
        (0, 0) => 1.0,
        (0, _) | (_, 0) => 0.0,
        _ => 2.0 * tp as f64 / (ne + nt) as f64,
    }
}

/// Metric hook for certified runs: feasibility `‖Ax − b*‖`, Lagrangian gap,
/// ℓ1 Bregman divergence (for `R = ℓ1`, `F = 0`), support statistics and F1
/// against `x*`, all on the reported estimate.
pub fn certified_metrics<'a>(
    problem: &'a Problem,
    cert: &'a SaddleCertificate,
    averaging: bool,
) -> impl FnMut(&SolverState, &mut MetricsRow) + 'a {
    let aty = (problem.reg == Regularizer::L1 && problem.smooth.is_none())
        .then(|| problem.op.adjoint(&cert.y_star));
    move |state, row| {
        let x = state.estimate(averaging);
        let y = state.dual_estimate(averaging);
        row.feasibility = Some(dist(&problem.op.apply(&x), &cert.b_star));
        row.lagrangian_gap = Some(lagrangian_gap(problem, cert, &x, &y));
        if let Some(aty) = &aty {
            row.bregman_l1 = bregman_l1(&x, &cert.x_star, aty).ok();
        }
        row.l1_norm = Some(norm1(&x));
        row.support_size = Some(support_size(&x, ZERO_TOL));
        row.f1 = Some(f1_support(&x, &cert.x_star, ZERO_TOL));
    }
}

/// Metric hook for sparse recovery without a certificate.
pub fn support_metrics(
    x_true: Option<&[f64]>,
    averaging: bool,
) -> impl FnMut(&SolverState, &mut MetricsRow) + '_ {
    move |state, row| {
        let x = state.estimate(averaging);
        row.l1_norm = Some(norm1(&x));
        row.support_size = Some(support_size(&x, ZERO_TOL));
        if let Some(t) = x_true {
            row.f1 = Some(f1_support(&x, t, ZERO_TOL));
        }
    }
}

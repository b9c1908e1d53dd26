use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linops::{operator_norm, power_iteration_norm, DenseMatrix, LinOp, NORM_SEED};
use crate::regularizers::DiagMetric;
use crate::vecops::norm_inf;

/// Rounding slack on the sign tests of ω and θ.
const SIGN_TOL: f64 = 1e-12;

/// Which step-size conditions a run must satisfy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validation {
    /// Report the constants, check nothing.
    None,
    /// `ω ≥ 0`.
    Convergence,
    /// `ω ≥ 0`, `θ ≥ 0` and `ρ > 0` (needed for the feasibility bound).
    Strict,
    /// `1 − τ_M L − ‖Σ^½ A T^½‖² ≥ 0`, for non-scalar preconditioners whose
    /// extreme entries do not satisfy the scalar condition.
    Preconditioned,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamConstants {
    pub omega: f64,
    pub theta: f64,
    pub rho: f64,
    pub xi: f64,
    pub eta: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub a_norm: f64,
    pub lipschitz: f64,
}

fn check_inputs(a_norm: f64, l: f64, xi: f64, eta: f64) -> Result<()> {
    if !(a_norm >= 0.0 && a_norm.is_finite()) {
        return Err(Error::config(format!("‖A‖ = {a_norm}")));
    }
    if !(l >= 0.0 && l.is_finite()) {
        return Err(Error::config(format!("L = {l}")));
    }
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::config(format!("ξ = {xi} outside (0, 1)")));
    }
    if !(eta > 1.0 && eta.is_finite()) {
        return Err(Error::config(format!("η = {eta} must exceed 1")));
    }
    Ok(())
}

fn constants(a_norm: f64, l: f64, t: &DiagMetric, s: &DiagMetric, xi: f64, eta: f64) -> ParamConstants {
    let (tm, sm) = (t.max(), s.max());
    let a2 = a_norm * a_norm;
    ParamConstants {
        omega: 1.0 - tm * (l + sm * a2),
        theta: xi - tm * (xi * l + sm * a2),
        rho: s.min() * (eta - 1.0) - sm * xi * eta,
        xi,
        eta,
        tau_min: t.min(),
        tau_max: tm,
        sigma_min: s.min(),
        sigma_max: sm,
        a_norm,
        lipschitz: l,
    }
}

fn check_strict(c: &ParamConstants) -> Result<()> {
    if c.theta < -SIGN_TOL {
        return Err(Error::StrictConfig(format!("θ = {:.6e} < 0", c.theta)));
    }
    if c.rho <= 0.0 {
        return Err(Error::StrictConfig(format!("ρ = {:.6e} ≤ 0", c.rho)));
    }
    Ok(())
}

/// `ω = 1 − τ_M(L + σ_M‖A‖²)`, `θ = ξ − τ_M(ξL + σ_M‖A‖²)`,
/// `ρ = σ_m(η − 1) − σ_M ξ η`, checked according to `mode`.
pub fn validate_params(
    a_norm: f64,
    l: f64,
    t: &DiagMetric,
    sigma: &DiagMetric,
    xi: f64,
    eta: f64,
    mode: Validation,
) -> Result<ParamConstants> {
    check_inputs(a_norm, l, xi, eta)?;
    let c = constants(a_norm, l, t, sigma, xi, eta);
    match mode {
        Validation::None => {}
        Validation::Convergence | Validation::Preconditioned => {
            if c.omega < -SIGN_TOL {
                return Err(Error::Config(format!("ω = {:.6e} < 0", c.omega)));
            }
        }
        Validation::Strict => {
            if c.omega < -SIGN_TOL {
                return Err(Error::Config(format!("ω = {:.6e} < 0", c.omega)));
            }
            check_strict(&c)?;
        }
    }
    Ok(c)
}

/// Preconditioned check: the reported `ω` is `1 − τ_M L − ‖Σ^½ A T^½‖²`;
/// `θ` and `ρ` keep their scalar definitions and are informational.
pub fn validate_preconditioned(
    op: &dyn LinOp,
    l: f64,
    t: &DiagMetric,
    sigma: &DiagMetric,
    xi: f64,
    eta: f64,
) -> Result<ParamConstants> {
    let a_norm = operator_norm(op);
    check_inputs(a_norm, l, xi, eta)?;
    let mut c = constants(a_norm, l, t, sigma, xi, eta);
    let s = scaled_operator_norm(op, t, sigma);
    c.omega = 1.0 - t.max() * l - s * s;
    if c.omega < -SIGN_TOL {
        return Err(Error::Config(format!(
            "preconditioned ω = {:.6e} < 0 (‖Σ^½AT^½‖² = {:.6})",
            c.omega,
            s * s
        )));
    }
    Ok(c)
}

struct Sandwich<'a> {
    op: &'a dyn LinOp,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl LinOp for Sandwich<'_> {
    fn in_dim(&self) -> usize {
        self.op.in_dim()
    }
    fn out_dim(&self) -> usize {
        self.op.out_dim()
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let xs: Vec<f64> = x.iter().zip(&self.right).map(|(a, b)| a * b).collect();
        self.op.apply_into(&xs, out);
        out.iter_mut().zip(&self.left).for_each(|(o, s)| *o *= s);
    }
    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        let ys: Vec<f64> = y.iter().zip(&self.left).map(|(a, b)| a * b).collect();
        self.op.adjoint_into(&ys, out);
        out.iter_mut().zip(&self.right).for_each(|(o, s)| *o *= s);
    }
}

/// `‖Σ^½ A T^½‖` by power iteration.
pub fn scaled_operator_norm(op: &dyn LinOp, t: &DiagMetric, sigma: &DiagMetric) -> f64 {
    let s = Sandwich {
        op,
        left: sigma.diag().iter().map(|v| v.sqrt()).collect(),
        right: t.diag().iter().map(|v| v.sqrt()).collect(),
    };
    power_iteration_norm(&s, 300, NORM_SEED)
}

/// Dual step `σ = 1/‖A*b^δ‖_∞` and `τ = 0.99/(σ‖A‖²)`, so `στ‖A‖² = 0.99`.
pub fn datadriven_sigma(op: &dyn LinOp, b_delta: &[f64], a_norm: f64) -> Result<(f64, f64)> {
    let m = norm_inf(&op.adjoint(b_delta));
    if m == 0.0 || !m.is_finite() {
        return Err(Error::DegenerateData("A*b is zero".into()));
    }
    if a_norm <= 0.0 {
        return Err(Error::DegenerateData("zero operator".into()));
    }
    let sigma = 1.0 / m;
    Ok((sigma, 0.99 / (sigma * a_norm * a_norm)))
}

/// [`datadriven_sigma`], falling back to `σ = τ = 0.99/‖A‖` on degenerate data.
pub fn datadriven_sigma_or_fallback(op: &dyn LinOp, b_delta: &[f64], a_norm: f64) -> Result<(f64, f64)> {
    match datadriven_sigma(op, b_delta, a_norm) {
        Err(Error::DegenerateData(why)) if a_norm > 0.0 => {
            log::warn!("data-driven σ unavailable ({why}); using σ = τ = 0.99/‖A‖");
            Ok((0.99 / a_norm, 0.99 / a_norm))
        }
        other => other,
    }
}

/// `σ = τ = sqrt(c)/‖A‖`, so `στ‖A‖² = c`.
pub fn symmetric_steps(a_norm: f64, c: f64) -> (f64, f64) {
    let s = c.sqrt() / a_norm;
    (s, s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecondMode {
    /// `T = θ diag(‖A_{:j}‖²)`.
    ColumnNorms,
    /// `T = θ diag(1/‖A_{:j}‖²)`.
    InverseColumns,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecondOptions {
    pub mode: PrecondMode,
    /// Rescale `T` when the step condition fails instead of erroring.
    pub auto_scale: bool,
    /// Use `‖Σ^½ A T^½‖² ≤ 0.99` instead of `τ_M σ_M ‖A‖² ≤ 1`; with
    /// `auto_scale` the product is always brought to 0.99.
    pub operator_norm_scaling: bool,
}

impl Default for PrecondOptions {
    fn default() -> Self {
        PrecondOptions {
            mode: PrecondMode::ColumnNorms,
            auto_scale: false,
            operator_norm_scaling: false,
        }
    }
}

/// Unvalidated diagonals of `T` and `Σ = (1/θ) diag(‖A_{i:}‖₀)`.
pub fn precond_diagonals(a: &DenseMatrix, theta: f64, mode: PrecondMode) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::config(format!("θ = {theta} must be positive")));
    }
    let cn = a.col_norms_sq();
    if let Some(j) = cn.iter().position(|c| *c == 0.0) {
        return Err(Error::config(format!("column {j} is zero")));
    }
    let tdiag = match mode {
        PrecondMode::ColumnNorms => cn.iter().map(|c| theta * c).collect(),
        PrecondMode::InverseColumns => cn.iter().map(|c| theta / c).collect(),
    };
    // an empty row still gets a positive dual step
    let sdiag = a.row_nnz().iter().map(|&z| z.max(1) as f64 / theta).collect();
    Ok((tdiag, sdiag))
}

/// Diagonal preconditioners built by [`precond_diagonals`], checked against
/// the step condition (or rescaled, with `auto_scale`).
pub fn pock_chambolle_precond(
    a: &DenseMatrix,
    theta: f64,
    opts: PrecondOptions,
) -> Result<(DiagMetric, DiagMetric)> {
    let (tdiag, sdiag) = precond_diagonals(a, theta, opts.mode)?;
    let mut t = DiagMetric::new(tdiag)?;
    let sigma = DiagMetric::new(sdiag)?;

    if opts.operator_norm_scaling {
        let s = scaled_operator_norm(a, &t, &sigma).powi(2);
        if opts.auto_scale {
            t = t.scaled(0.99 / s)?;
        } else if s > 1.0 {
            return Err(Error::StrictConfig(format!("‖Σ^½AT^½‖² = {s:.4} > 1")));
        }
    } else {
        let a_norm = operator_norm(a);
        let prod = t.max() * sigma.max() * a_norm * a_norm;
        if prod > 1.0 {
            if opts.auto_scale {
                t = t.scaled(0.99 / prod)?;
            } else {
                return Err(Error::StrictConfig(format!(
                    "τ_M σ_M ‖A‖² = {prod:.4} > 1"
                )));
            }
        }
    }
    Ok((t, sigma))
}

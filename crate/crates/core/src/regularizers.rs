//! Convex regularizers with diagonal-metric proximal maps, conjugates and
//! ε-subdifferential certificates.
//!
//! Proximal maps are taken in the metric `‖x‖²_T = ⟨T⁻¹x, x⟩`, i.e.
//! `prox^T_R(v) = argmin_p R(p) + ½‖v − p‖²_T`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linops::DenseMatrix;
use crate::vecops::{dot, norm2, norm_inf};

/// Slack allowed on the unit-ball constraints of conjugate indicators.
pub const BALL_TOL: f64 = 1e-9;
/// Bisection budget of the certified inexact prox.
pub const INEXACT_MAX_HALVINGS: usize = 50;

/// Positive diagonal metric `T = diag(t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagMetric {
    diag: Vec<f64>,
    min: f64,
    max: f64,
}

impl DiagMetric {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::config("empty metric"));
        }
        if let Some(bad) = diag.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::config(format!("metric entry {bad} is not positive")));
        }
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = diag.iter().cloned().fold(0.0, f64::max);
        Ok(DiagMetric { diag, min, max })
    }

    pub fn scalar(n: usize, t: f64) -> Result<Self> {
        Self::new(vec![t; n])
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Smallest entry (`τ_m` / `σ_m`).
    pub fn min(&self) -> f64 {
        self.min
    }

    /// Largest entry (`τ_M` / `σ_M`).
    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.diag.iter().map(|t| t * c).collect())
    }

    /// `‖v‖²_T = Σ v_i² / t_i`.
    pub fn norm_sq(&self, v: &[f64]) -> f64 {
        v.iter().zip(&self.diag).map(|(a, t)| a * a / t).sum()
    }

    fn slice(&self, start: usize, len: usize) -> DiagMetric {
        DiagMetric::new(self.diag[start..start + len].to_vec()).expect("sub-metric of a valid metric")
    }

    fn constant_on(&self, range: std::ops::Range<usize>) -> Option<f64> {
        let first = self.diag[range.start];
        self.diag[range]
            .iter()
            .all(|t| (t - first).abs() <= 1e-12 * first)
            .then_some(first)
    }
}

/// How much prox error the inexact iteration may commit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProxErrorSchedule {
    Exact,
    /// Budget `c0` at every iteration.
    Constant { c0: f64 },
    /// Budget `c0 · δ` at every iteration.
    NoiseProportional { c0: f64, delta: f64 },
}

impl ProxErrorSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ProxErrorSchedule::Exact => true,
            ProxErrorSchedule::Constant { c0 } => c0 >= 0.0 && c0.is_finite(),
            ProxErrorSchedule::NoiseProportional { c0, delta } => {
                c0 >= 0.0 && delta >= 0.0 && (c0 * delta).is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid prox error schedule {self:?}")))
        }
    }

    /// Largest admissible ε at iteration `k`.
    pub fn budget(&self, _k: usize) -> f64 {
        match *self {
            ProxErrorSchedule::Exact => 0.0,
            ProxErrorSchedule::Constant { c0 } => c0,
            ProxErrorSchedule::NoiseProportional { c0, delta } => c0 * delta,
        }
    }

    /// The constant `C0` entering the stability bounds.
    pub fn c0(&self) -> f64 {
        match *self {
            ProxErrorSchedule::Exact => 0.0,
            ProxErrorSchedule::Constant { c0 } | ProxErrorSchedule::NoiseProportional { c0, .. } => c0,
        }
    }
}

/// Convex regularizer `R`.
#[derive(Clone, Debug, PartialEq)]
pub enum Regularizer {
    Zero,
    L1,
    /// `Σ_g ‖x_g‖₂` over consecutive groups of `group_size` entries.
    GroupL21 { group_size: usize },
    /// Nuclear norm of a `rows × cols` matrix stored row-major.
    Nuclear { rows: usize, cols: usize },
    /// Indicator of the nonnegative orthant.
    NonNeg,
    /// `½‖x‖²`.
    SqL2,
    /// Block-separable sum; each entry is `(block length, regularizer)`.
    SeparableSum(Vec<(usize, Regularizer)>),
}

impl Regularizer {
    pub fn kind(&self) -> &'static str {
        match self {
            Regularizer::Zero => "zero",
            Regularizer::L1 => "l1",
            Regularizer::GroupL21 { .. } => "group_l21",
            Regularizer::Nuclear { .. } => "nuclear",
            Regularizer::NonNeg => "nonneg_indicator",
            Regularizer::SqL2 => "sq_l2",
            Regularizer::SeparableSum(_) => "separable_sum",
        }
    }

    /// Required input length, if fixed by the regularizer itself.
    pub fn fixed_len(&self) -> Option<usize> {
        match self {
            Regularizer::Nuclear { rows, cols } => Some(rows * cols),
            Regularizer::SeparableSum(blocks) => Some(blocks.iter().map(|b| b.0).sum()),
            _ => None,
        }
    }

    pub fn check_len(&self, n: usize) -> Result<()> {
        match self {
            Regularizer::GroupL21 { group_size } if *group_size == 0 || n % group_size != 0 => {
                Err(Error::dim(format!("length {n} is not a multiple of group size {group_size}")))
            }
            Regularizer::SeparableSum(blocks) => {
                let total: usize = blocks.iter().map(|b| b.0).sum();
                if total != n {
                    return Err(Error::dim(format!("separable sum covers {total}, got {n}")));
                }
                blocks.iter().try_for_each(|(len, r)| r.check_len(*len))
            }
            _ => match self.fixed_len() {
                Some(m) if m != n => Err(Error::dim(format!("expected length {m}, got {n}"))),
                _ => Ok(()),
            },
        }
    }

    /// `R(x)`, possibly `+∞`.
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Regularizer::Zero => 0.0,
            Regularizer::L1 => x.iter().map(|v| v.abs()).sum(),
            Regularizer::GroupL21 { group_size } => x.chunks(*group_size).map(norm2).sum(),
            Regularizer::Nuclear { rows, cols } => singular_values(&as_matrix(x, *rows, *cols))
                .map(|s| s.iter().sum())
                .unwrap_or(f64::NAN),
            Regularizer::NonNeg => {
                if x.iter().all(|v| *v >= 0.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Regularizer::SqL2 => 0.5 * dot(x, x),
            Regularizer::SeparableSum(blocks) => {
                let mut off = 0;
                let mut acc = 0.0;
                for (len, r) in blocks {
                    acc += r.value(&x[off..off + len]);
                    off += len;
                }
                acc
            }
        }
    }

    /// Conjugate `R*(g)`, possibly `+∞`.
    pub fn conjugate(&self, g: &[f64]) -> f64 {
        let ball = |inside: bool| if inside { 0.0 } else { f64::INFINITY };
        match self {
            Regularizer::Zero => ball(norm_inf(g) <= BALL_TOL),
            Regularizer::L1 => ball(norm_inf(g) <= 1.0 + BALL_TOL),
            Regularizer::GroupL21 { group_size } => {
                ball(g.chunks(*group_size).all(|c| norm2(c) <= 1.0 + BALL_TOL))
            }
            Regularizer::Nuclear { rows, cols } => {
                match singular_values(&as_matrix(g, *rows, *cols)) {
                    Ok(s) => ball(s.iter().all(|v| *v <= 1.0 + BALL_TOL)),
                    Err(_) => f64::NAN,
                }
            }
            // support function of the orthant
            Regularizer::NonNeg => ball(g.iter().all(|v| *v <= BALL_TOL)),
            Regularizer::SqL2 => 0.5 * dot(g, g),
            Regularizer::SeparableSum(blocks) => {
                let mut off = 0;
                let mut acc = 0.0;
                for (len, r) in blocks {
                    acc += r.conjugate(&g[off..off + len]);
                    off += len;
                }
                acc
            }
        }
    }

    /// Exact `prox^T_R(v)`. Group and nuclear blocks need `T` constant over
    /// each block, since their prox does not separate across coordinates.
    pub fn prox_diag(&self, v: &[f64], t: &DiagMetric) -> Result<Vec<f64>> {
        if v.len() != t.len() {
            return Err(Error::dim(format!("vector {} vs metric {}", v.len(), t.len())));
        }
        self.check_len(v.len())?;
        let td = t.diag();
        match self {
            Regularizer::Zero => Ok(v.to_vec()),
            Regularizer::L1 => Ok(l1_prox_diag(v, t)),
            Regularizer::GroupL21 { group_size } => {
                let mut out = Vec::with_capacity(v.len());
                for (g, chunk) in v.chunks(*group_size).enumerate() {
                    let r = g * group_size..(g + 1) * group_size;
                    let tau = t.constant_on(r).ok_or_else(|| {
                        Error::config(format!("metric not constant on group {g}"))
                    })?;
                    out.extend(shrink_group(chunk, tau));
                }
                Ok(out)
            }
            Regularizer::Nuclear { rows, cols } => {
                let tau = t
                    .constant_on(0..v.len())
                    .ok_or_else(|| Error::config("nuclear prox needs a scalar metric"))?;
                Ok(nuclear_prox(&as_matrix(v, *rows, *cols), tau)?.into_data())
            }
            Regularizer::NonNeg => Ok(nonneg_prox(v)),
            Regularizer::SqL2 => Ok(v.iter().zip(td).map(|(a, ti)| a / (1.0 + ti)).collect()),
            Regularizer::SeparableSum(blocks) => {
                let mut out = Vec::with_capacity(v.len());
                let mut off = 0;
                for (len, r) in blocks {
                    out.extend(r.prox_diag(&v[off..off + len], &t.slice(off, *len))?);
                    off += len;
                }
                Ok(out)
            }
        }
    }

    /// A random point strictly inside `dom R*`, placed so that moving the
    /// prox output along `T(g0 − h)` keeps it inside `dom R`.
    fn draw_dual_point<R: Rng + ?Sized>(&self, g0: &[f64], rng: &mut R) -> Vec<f64> {
        let n = g0.len();
        match self {
            Regularizer::Zero => vec![0.0; n],
            Regularizer::L1 | Regularizer::SqL2 => {
                (0..n).map(|_| rng.random_range(-0.5..0.5)).collect()
            }
            Regularizer::GroupL21 { group_size } => {
                let mut h = Vec::with_capacity(n);
                for _ in 0..n / group_size {
                    let dir: Vec<f64> = (0..*group_size).map(|_| StandardNormal.sample(rng)).collect();
                    let nd = norm2(&dir).max(f64::MIN_POSITIVE);
                    let r: f64 = 0.5 * rng.random::<f64>();
                    h.extend(dir.iter().map(|d| d / nd * r));
                }
                h
            }
            Regularizer::Nuclear { rows, cols } => {
                let mut u: Vec<f64> = (0..*rows).map(|_| StandardNormal.sample(rng)).collect();
                let mut w: Vec<f64> = (0..*cols).map(|_| StandardNormal.sample(rng)).collect();
                let (nu, nw) = (norm2(&u), norm2(&w));
                u.iter_mut().for_each(|e| *e /= nu);
                w.iter_mut().for_each(|e| *e /= nw);
                let mut h = Vec::with_capacity(n);
                for ui in &u {
                    h.extend(w.iter().map(|wj| 0.5 * ui * wj));
                }
                h
            }
            Regularizer::NonNeg => g0.iter().map(|g| g - 0.5 * rng.random::<f64>()).collect(),
            Regularizer::SeparableSum(blocks) => {
                let mut h = Vec::with_capacity(n);
                let mut off = 0;
                for (len, r) in blocks {
                    h.extend(r.draw_dual_point(&g0[off..off + len], rng));
                    off += len;
                }
                h
            }
        }
    }
}

fn as_matrix(x: &[f64], rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_row_major(rows, cols, x.to_vec()).expect("length checked by caller")
}

fn singular_values(m: &DenseMatrix) -> Result<Vec<f64>> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Ok(Vec::new());
    }
    m.to_nalgebra()
        .try_svd(false, false, f64::EPSILON, svd_iter_cap(r, c))
        .map(|svd| svd.singular_values.iter().copied().collect())
        .ok_or_else(|| Error::LinAlg(format!("SVD of a {r}x{c} matrix did not converge")))
}

fn svd_iter_cap(r: usize, c: usize) -> usize {
    1000 * (r + c).max(10)
}

#[inline]
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Coordinate-wise soft-thresholding with threshold `T_ii`.
pub fn l1_prox_diag(v: &[f64], t: &DiagMetric) -> Vec<f64> {
    v.iter()
        .zip(t.diag())
        .map(|(a, ti)| soft_threshold(*a, *ti))
        .collect()
}

/// Projection onto the nonnegative orthant.
pub fn nonneg_prox(v: &[f64]) -> Vec<f64> {
    v.iter().map(|a| a.max(0.0)).collect()
}

fn shrink_group(r: &[f64], tau: f64) -> impl Iterator<Item = f64> + '_ {
    let nr = norm2(r);
    let f = if nr > 0.0 { (1.0 - tau / nr).max(0.0) } else { 0.0 };
    r.iter().map(move |a| f * a)
}

/// Row-wise group shrinkage: each row is scaled by `max(1 − τ/‖row‖, 0)`.
pub fn group_l21_prox(v: &DenseMatrix, tau: f64) -> DenseMatrix {
    let (rows, cols) = v.shape();
    let mut out = DenseMatrix::zeros(rows, cols);
    for i in 0..rows {
        for (o, s) in out.row_mut(i).iter_mut().zip(shrink_group(v.row(i), tau)) {
            *o = s;
        }
    }
    out
}

/// Singular-value soft-thresholding.
pub fn nuclear_prox(v: &DenseMatrix, tau: f64) -> Result<DenseMatrix> {
    let (r, c) = v.shape();
    if r == 0 || c == 0 {
        return Ok(v.clone());
    }
    let mut svd = v
        .to_nalgebra()
        .try_svd(true, true, f64::EPSILON, svd_iter_cap(r, c))
        .ok_or_else(|| Error::LinAlg(format!("SVD of a {r}x{c} matrix did not converge")))?;
    svd.singular_values
        .iter_mut()
        .for_each(|s| *s = (*s - tau).max(0.0));
    let m = svd
        .recompose()
        .map_err(|e| Error::LinAlg(format!("SVD recomposition: {e}")))?;
    let out = DenseMatrix::from_nalgebra(&m);
    if out.data().iter().any(|x| !x.is_finite()) {
        return Err(Error::LinAlg("non-finite singular value thresholding".into()));
    }
    Ok(out)
}

/// Smallest `ε ≥ 0` with `T⁻¹(input − output) ∈ ∂_ε R(output)`:
/// `R(out) + R*(g) − ⟨g, out⟩` clamped at zero, `+∞` outside `dom R*`.
pub fn epsilon_certificate(r: &Regularizer, input: &[f64], output: &[f64], t: &DiagMetric) -> f64 {
    let g: Vec<f64> = input
        .iter()
        .zip(output)
        .zip(t.diag())
        .map(|((a, p), ti)| (a - p) / ti)
        .collect();
    let conj = r.conjugate(&g);
    if !conj.is_finite() {
        return f64::INFINITY;
    }
    let val = r.value(output);
    if !val.is_finite() {
        return f64::INFINITY;
    }
    (val + conj - dot(&g, output)).max(0.0)
}

/// Prox with a certified error: returns a point `p'` and `ε ≤ budget` such
/// that `T⁻¹(v − p') ∈ ∂_ε R(p')`.
///
/// The exact output `p` is moved towards a random dual point `h ∈ dom R*`,
/// `p' = p + t·T(g0 − h)` with `g0 = T⁻¹(v − p)`, so the implied subgradient
/// `(1 − t)g0 + t·h` stays in `dom R*`; `t` is halved until the certificate
/// lands in `(0, budget]`.
pub fn inexact_prox<R: Rng + ?Sized>(
    reg: &Regularizer,
    v: &[f64],
    t: &DiagMetric,
    schedule: &ProxErrorSchedule,
    k: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    let p = reg.prox_diag(v, t)?;
    let budget = schedule.budget(k);
    if budget <= 0.0 {
        return Ok((p, 0.0));
    }
    let td = t.diag();
    let g0: Vec<f64> = v.iter().zip(&p).zip(td).map(|((a, b), ti)| (a - b) / ti).collect();
    let h = reg.draw_dual_point(&g0, rng);
    let dir: Vec<f64> = g0.iter().zip(&h).zip(td).map(|((g, hh), ti)| ti * (g - hh)).collect();

    let mut step = 1.0;
    let mut cand = vec![0.0; p.len()];
    for _ in 0..INEXACT_MAX_HALVINGS {
        for ((c, pi), di) in cand.iter_mut().zip(&p).zip(&dir) {
            *c = pi + step * di;
        }
        let eps = epsilon_certificate(reg, v, &cand, t);
        if eps > 0.0 && eps <= budget {
            return Ok((cand, eps));
        }
        step *= 0.5;
    }
    log::debug!("inexact prox at iteration {k}: no certified perturbation, using exact output");
    Ok((p, 0.0))
}

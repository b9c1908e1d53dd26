//! Linear operators: the measurement map `A`, its adjoint, and the
//! structured operators used by the sparse, low-rank and TV problems.
//!
//! Operators are immutable after construction and `Send + Sync`, so a single
//! operator can be shared by parallel solver runs.

mod block;
mod dense;
mod structured;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use block::{classif_reformulate, tv_reformulate, Block, BlockOp};
pub use dense::DenseMatrix;
pub use structured::{CsrMatrix, Diagonal, Grad2d, Identity, Masking, ScaledOp};

use crate::vecops::{dot, norm2};

/// Seed used whenever an operator norm has to be estimated without a hint.
pub const NORM_SEED: u64 = 0x5eed;
/// Power iterations used when no norm hint is available.
pub const NORM_ITERS: usize = 100;

/// A bounded linear map between finite-dimensional real spaces.
pub trait LinOp: Send + Sync {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;

    /// `out = A x`; `out` is overwritten.
    fn apply_into(&self, x: &[f64], out: &mut [f64]);

    /// `out = A* y`; `out` is overwritten.
    fn adjoint_into(&self, y: &[f64], out: &mut [f64]);

    /// Upper bound on the operator norm, when known analytically.
    fn norm_hint(&self) -> Option<f64> {
        None
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim()];
        self.apply_into(x, &mut out);
        out
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.in_dim()];
        self.adjoint_into(y, &mut out);
        out
    }

    /// `ax = A x` and `out = A* w` with `w_i = f(i, (Ax)_i)`. Row-stored
    /// operators override this to make a single sweep over the entries.
    fn apply_adjoint_fused(&self, x: &[f64], f: &mut dyn FnMut(usize, f64) -> f64, ax: &mut [f64], out: &mut [f64]) {
        self.apply_into(x, ax);
        let w: Vec<f64> = ax.iter().enumerate().map(|(i, v)| f(i, *v)).collect();
        self.adjoint_into(&w, out);
    }
}

/// Estimate `‖A‖ = sqrt(λ_max(A*A))` by power iteration from a seeded
/// Gaussian start. The estimate is a Rayleigh quotient, so it never exceeds
/// the true norm (up to rounding).
pub fn power_iteration_norm(op: &dyn LinOp, iters: usize, seed: u64) -> f64 {
    let n = op.in_dim();
    if n == 0 || op.out_dim() == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|e| *e /= nv);

    let mut av = vec![0.0; op.out_dim()];
    let mut w = vec![0.0; n];
    let mut est = 0.0;
    for _ in 0..iters.max(1) {
        op.apply_into(&v, &mut av);
        est = norm2(&av);
        op.adjoint_into(&av, &mut w);
        let nw = norm2(&w);
        if nw == 0.0 || !nw.is_finite() {
            // v lies in the kernel (zero operator, or an unlucky start).
            return est;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
    }
    op.apply_into(&v, &mut av);
    est.max(norm2(&av))
}

/// Operator norm: the analytic hint when available, otherwise a fixed-seed
/// power iteration.
pub fn operator_norm(op: &dyn LinOp) -> f64 {
    op.norm_hint()
        .unwrap_or_else(|| power_iteration_norm(op, NORM_ITERS, NORM_SEED))
}

/// Materialize an operator as a dense matrix by probing unit vectors.
pub fn assemble_dense(op: &dyn LinOp) -> DenseMatrix {
    let (m, n) = (op.out_dim(), op.in_dim());
    let mut mat = DenseMatrix::zeros(m, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; m];
    for j in 0..n {
        e[j] = 1.0;
        op.apply_into(&e, &mut col);
        for (i, v) in col.iter().enumerate() {
            mat.set(i, j, *v);
        }
        e[j] = 0.0;
    }
    mat
}

/// Largest relative adjoint defect `|⟨Ax, y⟩ − ⟨x, A*y⟩| / (‖Ax‖‖y‖ + 1)`
/// over `pairs` random Gaussian pairs.
pub fn adjoint_defect(op: &dyn LinOp, pairs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..pairs {
        let x: Vec<f64> = (0..op.in_dim())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let y: Vec<f64> = (0..op.out_dim())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let ax = op.apply(&x);
        let aty = op.adjoint(&y);
        let defect = (dot(&ax, &y) - dot(&x, &aty)).abs() / (norm2(&ax) * norm2(&y) + 1.0);
        worst = worst.max(defect);
    }
    worst
}

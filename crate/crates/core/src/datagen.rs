//! Synthetic instances (correlated sparse regression, certified saddle
//! points, matrix completion, ill-posed diagonal systems, an inconsistent
//! toy system), LIBSVM ingestion and instance directories.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::diagnostics::SaddleCertificate;
use crate::error::{Error, Result};
use crate::io;
use crate::linops::{CsrMatrix, DenseMatrix, Diagonal, LinOp, Masking};
use crate::pdsolver::Problem;
use crate::regularizers::Regularizer;
use crate::vecops::norm2;

/// Format version written to `meta.json`.
pub const INSTANCE_VERSION: u32 = 1;

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseInstance {
    pub a: DenseMatrix,
    pub x_true: Vec<f64>,
    pub b_star: Vec<f64>,
    pub b_delta: Vec<f64>,
    /// `‖b^δ − b*‖`.
    pub delta: f64,
    /// `None` for noiseless data.
    pub snr: Option<f64>,
    pub seed: u64,
}

impl SparseInstance {
    pub fn problem(&self, reg: Regularizer) -> Result<Problem> {
        Problem::new(Arc::new(self.a.clone()), self.b_delta.clone(), reg)
    }
}

/// Rows i.i.d.; within a row `z₁ ~ N(0,1)`, `z_j = ρ z_{j−1} + sqrt(1−ρ²) ζ_j`,
/// so columns `i, j` have correlation `ρ^{|i−j|}` and unit variance.
pub fn toeplitz_design(n: usize, d: usize, rho: f64, seed: u64) -> Result<DenseMatrix> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::config(format!("ρ = {rho} outside [0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = (1.0 - rho * rho).sqrt();
    let mut a = DenseMatrix::zeros(n, d);
    for i in 0..n {
        let row = a.row_mut(i);
        let mut prev = 0.0;
        for (j, v) in row.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            prev = if j == 0 { z } else { rho * prev + c * z };
            *v = prev;
        }
    }
    Ok(a)
}

/// Toeplitz design, `round(frac·d)` unit entries at random positions, and
/// Gaussian noise scaled so that `‖Ax̄‖/‖ε‖ = snr` (no noise for `None`).
pub fn sparse_instance(
    n: usize,
    d: usize,
    rho: f64,
    sparsity_frac: f64,
    snr: Option<f64>,
    seed: u64,
) -> Result<SparseInstance> {
    sparse_instance_with_design(toeplitz_design(n, d, rho, seed)?, sparsity_frac, snr, seed)
}

/// [`sparse_instance`] on the Toeplitz design with every column multiplied
/// by an independent `U(lo, hi)` factor.
#[allow(clippy::too_many_arguments)]
pub fn column_scaled_instance(
    n: usize,
    d: usize,
    rho: f64,
    sparsity_frac: f64,
    snr: Option<f64>,
    lo: f64,
    hi: f64,
    seed: u64,
) -> Result<SparseInstance> {
    if !(0.0 < lo && lo < hi && hi.is_finite()) {
        return Err(Error::config(format!("column scale range [{lo}, {hi})")));
    }
    let mut a = toeplitz_design(n, d, rho, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x00c0_1a5c);
    let f: Vec<f64> = (0..d).map(|_| rng.random_range(lo..hi)).collect();
    a.scale_columns(&f);
    sparse_instance_with_design(a, sparsity_frac, snr, seed)
}

/// Ground truth with `round(frac·d)` unit entries and noisy data for a given
/// design.
pub fn sparse_instance_with_design(
    a: DenseMatrix,
    sparsity_frac: f64,
    snr: Option<f64>,
    seed: u64,
) -> Result<SparseInstance> {
    if !(sparsity_frac > 0.0 && sparsity_frac <= 1.0) {
        return Err(Error::config(format!("sparsity fraction {sparsity_frac}")));
    }
    if let Some(s) = snr {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::config(format!("SNR {s} must be positive")));
        }
    }
    let (n, d) = a.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let k = ((sparsity_frac * d as f64).round() as usize).clamp(1, d);
    let mut x_true = vec![0.0; d];
    for j in sample(&mut rng, d, k) {
        x_true[j] = 1.0;
    }
    let b_star = a.apply(&x_true);
    let (b_delta, delta) = match snr {
        None => (b_star.clone(), 0.0),
        Some(s) => {
            let e = gaussian_vec(&mut rng, n);
            let scale = norm2(&b_star) / (s * norm2(&e));
            let b: Vec<f64> = b_star.iter().zip(&e).map(|(u, v)| u + scale * v).collect();
            (b, scale * norm2(&e))
        }
    };
    Ok(SparseInstance { a, x_true, b_star, b_delta, delta, snr, seed })
}

/// Add Gaussian noise of norm exactly `delta` to `b*`.
pub fn add_noise(b_star: &[f64], delta: f64, seed: u64) -> Vec<f64> {
    if delta == 0.0 {
        return b_star.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = gaussian_vec(&mut rng, b_star.len());
    let s = delta / norm2(&e);
    b_star.iter().zip(&e).map(|(u, v)| u + s * v).collect()
}

/// An ℓ1 instance with a known saddle point. Draws a Gaussian design with
/// unit-norm columns, a support `S` and signs `σ_S`, sets
/// `y* = −A_S(A_SᵀA_S)⁻¹σ_S` (so `A_Sᵀy* = −σ_S`) and accepts when
/// `‖A_{S^c}ᵀy*‖_∞ ≤ 1 − 1e−3`. Then `x*_S = σ_S·U(0.5, 1.5)`, `b* = Ax*`.
pub fn certified_instance(
    n: usize,
    d: usize,
    s: usize,
    seed: u64,
    max_tries: usize,
) -> Result<(SparseInstance, SaddleCertificate)> {
    if !(s >= 1 && s <= n && n <= d) {
        return Err(Error::config(format!("need 1 ≤ s ≤ n ≤ d, got s={s}, n={n}, d={d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..max_tries {
        let mut a = DenseMatrix::from_row_major(n, d, gaussian_vec(&mut rng, n * d))?;
        let inv: Vec<f64> = a.col_norms_sq().iter().map(|c| 1.0 / c.sqrt()).collect();
        a.scale_columns(&inv);
        if let Some(found) = try_certify(&a, s, &mut rng) {
            let (inst, cert) = package(a, found, seed);
            return Ok((inst, cert));
        }
    }
    Err(Error::Generation(format!(
        "no certified instance (n={n}, d={d}, s={s}) in {max_tries} tries"
    )))
}

/// Same acceptance rule for a fixed design: only the support and signs are
/// redrawn.
pub fn certify_design(
    a: &DenseMatrix,
    s: usize,
    seed: u64,
    max_tries: usize,
) -> Result<(SparseInstance, SaddleCertificate)> {
    let (n, d) = a.shape();
    if !(s >= 1 && s <= n && n <= d) {
        return Err(Error::config(format!("need 1 ≤ s ≤ n ≤ d, got s={s}, n={n}, d={d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..max_tries {
        if let Some(found) = try_certify(a, s, &mut rng) {
            return Ok(package(a.clone(), found, seed));
        }
    }
    Err(Error::Generation(format!("design not certifiable with s={s} in {max_tries} tries")))
}

fn try_certify(a: &DenseMatrix, s: usize, rng: &mut ChaCha8Rng) -> Option<(Vec<f64>, Vec<f64>)> {
    let d = a.cols();
    let mut support = sample(rng, d, s).into_vec();
    support.sort_unstable();
    let signs: Vec<f64> = (0..s).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();

    let a_s = a.select_cols(&support).to_nalgebra();
    let chol = (a_s.transpose() * &a_s).cholesky()?;
    let coef = chol.solve(&nalgebra::DVector::from_column_slice(&signs));
    let y: Vec<f64> = (&a_s * coef).iter().map(|v| -v).collect();

    let aty = a.adjoint(&y);
    let off = (0..d).filter(|j| !support.contains(j)).map(|j| aty[j].abs()).fold(0.0, f64::max);
    if off > 1.0 - 1e-3 {
        return None;
    }
    let mut x = vec![0.0; d];
    for (k, &j) in support.iter().enumerate() {
        x[j] = signs[k] * rng.random_range(0.5..1.5);
    }
    Some((x, y))
}

fn package(a: DenseMatrix, (x, y): (Vec<f64>, Vec<f64>), seed: u64) -> (SparseInstance, SaddleCertificate) {
    let b = a.apply(&x);
    let inst = SparseInstance {
        a,
        x_true: x.clone(),
        b_star: b.clone(),
        b_delta: b.clone(),
        delta: 0.0,
        snr: None,
        seed,
    };
    let cert = SaddleCertificate { x_star: x, y_star: y, b_star: b, delta: 0.0 };
    (inst, cert)
}

/// [`certified_instance`] with Gaussian noise of norm `delta` on the data.
pub fn noisy_certified_instance(
    n: usize,
    d: usize,
    s: usize,
    delta: f64,
    seed: u64,
    max_tries: usize,
) -> Result<(SparseInstance, SaddleCertificate)> {
    let (mut inst, mut cert) = certified_instance(n, d, s, seed, max_tries)?;
    inst.b_delta = add_noise(&inst.b_star, delta, seed.wrapping_add(0x5151));
    inst.delta = delta;
    cert.delta = delta;
    Ok((inst, cert))
}

#[derive(Clone, Debug)]
pub struct CompletionInstance {
    pub d: usize,
    pub rank: usize,
    /// `d × d` ground truth.
    pub b_star: DenseMatrix,
    pub mask: Masking,
    /// Observed noisy entries (zero where hidden), row-major `d·d`.
    pub b_delta: Vec<f64>,
    pub delta: f64,
    pub seed: u64,
}

impl CompletionInstance {
    pub fn problem(&self) -> Result<Problem> {
        Problem::new(
            Arc::new(self.mask.clone()),
            self.b_delta.clone(),
            Regularizer::Nuclear { rows: self.d, cols: self.d },
        )
    }
}

/// `B* = UVᵀ` with Gaussian `U, V ∈ R^{d×r}` scaled to Frobenius norm 20,
/// `round(hidden·d²)` entries hidden uniformly, and Gaussian noise on the
/// observed entries scaled to norm `delta`.
pub fn completion_instance(d: usize, r: usize, hidden_frac: f64, delta: f64, seed: u64) -> Result<CompletionInstance> {
    if r == 0 || r > d {
        return Err(Error::config(format!("rank {r} for dimension {d}")));
    }
    if !(0.0..1.0).contains(&hidden_frac) {
        return Err(Error::config(format!("hidden fraction {hidden_frac}")));
    }
    if !(delta >= 0.0) {
        return Err(Error::config(format!("δ = {delta}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = DMatrix::from_row_slice(d, r, &gaussian_vec(&mut rng, d * r));
    let v = DMatrix::from_row_slice(d, r, &gaussian_vec(&mut rng, d * r));
    let mut b = DenseMatrix::from_nalgebra(&(u * v.transpose()));
    let scale = 20.0 / b.frobenius_norm();
    let b_star = DenseMatrix::from_row_major(d, d, b.data().iter().map(|x| x * scale).collect())?;
    b = b_star.clone();

    let total = d * d;
    let hidden = (hidden_frac * total as f64).round() as usize;
    let mut mask = vec![true; total];
    for k in sample(&mut rng, total, hidden) {
        mask[k] = false;
    }
    let mask = Masking::from_mask(d, d, mask);
    let mut noise: Vec<f64> = gaussian_vec(&mut rng, total);
    for (e, m) in noise.iter_mut().zip(mask.mask()) {
        if !m {
            *e = 0.0;
        }
    }
    let nn = norm2(&noise);
    let s = if delta > 0.0 && nn > 0.0 { delta / nn } else { 0.0 };
    let b_delta: Vec<f64> = b
        .data()
        .iter()
        .zip(&noise)
        .zip(mask.mask())
        .map(|((x, e), m)| if *m { x + s * e } else { 0.0 })
        .collect();
    Ok(CompletionInstance { d, rank: r, b_star, mask, b_delta, delta, seed })
}

#[derive(Clone)]
pub struct IllPosedInstance {
    pub problem: Problem,
    pub a: Vec<f64>,
    pub b_star: Vec<f64>,
    /// `x*_i = 1/i`.
    pub x_star: Vec<f64>,
    /// `x^δ_i = b^δ_i / a_i`, whose norm grows with `N`.
    pub x_noisy: Vec<f64>,
    pub c: f64,
    pub delta: f64,
}

/// Truncated diagonal system `a_i = 1/i`, `b*_i = 1/i²`,
/// `b^δ_i = b*_i + C/i` with `C = δ / sqrt(Σ_{j≤N} 1/j²)`, `R = ½‖·‖²`.
pub fn illposed_diag_instance(n: usize, delta: f64) -> Result<IllPosedInstance> {
    if n == 0 {
        return Err(Error::config("N must be at least 1"));
    }
    let inv: Vec<f64> = (1..=n).map(|i| 1.0 / i as f64).collect();
    let c = delta / inv.iter().map(|v| v * v).sum::<f64>().sqrt();
    let b_star: Vec<f64> = inv.iter().map(|v| v * v).collect();
    let b_delta: Vec<f64> = inv.iter().map(|v| v * v + c * v).collect();
    let x_noisy = b_delta.iter().zip(&inv).map(|(b, a)| b / a).collect();
    let problem = Problem::new(Arc::new(Diagonal::new(inv.clone())), b_delta, Regularizer::SqL2)?
        .with_norm(1.0);
    Ok(IllPosedInstance { problem, a: inv.clone(), b_star, x_star: inv, x_noisy, c, delta })
}

/// `A = (1, 1)ᵀ`, `b = (1, 0)`, `R = ½x²`: `Ax = b` has no solution, the
/// normal equation `2x = 1` does.
pub fn unfeasible_toy() -> Problem {
    unfeasible_toy_with_rhs([1.0, 0.0])
}

pub fn unfeasible_toy_with_rhs(b: [f64; 2]) -> Problem {
    let a = DenseMatrix::from_rows(&[vec![1.0], vec![1.0]]).expect("static shape");
    Problem::new(Arc::new(a), b.to_vec(), Regularizer::SqL2).expect("static shape")
}

fn libsvm_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Parse LIBSVM text (`label idx:val ...`, 1-based ascending indices).
/// Blank lines and `#` comments are skipped.
pub fn parse_libsvm_str(text: &str) -> Result<(CsrMatrix, Vec<f64>)> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut cols = 0;
    for (n, raw) in text.lines().enumerate() {
        let lineno = n + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let lab = toks.next().unwrap_or_default();
        let label: f64 = lab
            .parse()
            .map_err(|_| libsvm_err(lineno, format!("bad label {lab:?}")))?;
        let mut row = Vec::new();
        let mut last = 0usize;
        for tok in toks {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| libsvm_err(lineno, format!("expected idx:val, got {tok:?}")))?;
            let idx: usize = i
                .parse()
                .map_err(|_| libsvm_err(lineno, format!("bad index {i:?}")))?;
            let val: f64 = v
                .parse()
                .map_err(|_| libsvm_err(lineno, format!("bad value {v:?}")))?;
            if idx == 0 {
                return Err(libsvm_err(lineno, "indices are 1-based"));
            }
            if idx <= last {
                return Err(libsvm_err(lineno, format!("index {idx} not ascending after {last}")));
            }
            last = idx;
            row.push((idx - 1, val));
        }
        cols = cols.max(last);
        rows.push(row);
        labels.push(label);
    }
    Ok((CsrMatrix::from_rows(cols, &rows)?, labels))
}

pub fn parse_libsvm(path: &Path) -> Result<(CsrMatrix, Vec<f64>)> {
    parse_libsvm_str(&fs::read_to_string(path)?)
}

/// Inverse of [`parse_libsvm_str`].
pub fn write_libsvm(m: &CsrMatrix, labels: &[f64]) -> String {
    let mut out = String::new();
    for (i, l) in labels.iter().enumerate() {
        out.push_str(&l.to_string());
        for (j, v) in m.row(i) {
            out.push_str(&format!(" {}:{}", j + 1, v));
        }
        out.push('\n');
    }
    out
}

/// Contents of `meta.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub generator: String,
    pub version: u32,
    pub delta: f64,
    pub snr: Option<f64>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
}

fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.join("meta.json").exists() && !force {
        return Err(Error::config(format!(
            "{} already holds an instance (use force to overwrite)",
            dir.display()
        )));
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_meta(dir: &Path, meta: &InstanceMeta) -> Result<()> {
    let mut text = serde_json::to_string_pretty(meta)?;
    text.push('\n');
    fs::write(dir.join("meta.json"), text)?;
    Ok(())
}

/// Write `design.csv`, `btrue.csv`, `bdelta.csv`, `xtrue.csv`, `meta.json`.
pub fn write_sparse_instance(dir: &Path, inst: &SparseInstance, meta: &InstanceMeta, force: bool) -> Result<()> {
    prepare_dir(dir, force)?;
    io::save_matrix(&dir.join("design.csv"), &inst.a)?;
    io::save_vector(&dir.join("btrue.csv"), &inst.b_star)?;
    io::save_vector(&dir.join("bdelta.csv"), &inst.b_delta)?;
    io::save_vector(&dir.join("xtrue.csv"), &inst.x_true)?;
    write_meta(dir, meta)
}

pub fn read_meta(dir: &Path) -> Result<InstanceMeta> {
    Ok(serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?)
}

pub fn read_sparse_instance(dir: &Path) -> Result<SparseInstance> {
    let meta = read_meta(dir)?;
    let a = io::load_matrix(&dir.join("design.csv"))?;
    let inst = SparseInstance {
        x_true: io::load_vector(&dir.join("xtrue.csv"))?,
        b_star: io::load_vector(&dir.join("btrue.csv"))?,
        b_delta: io::load_vector(&dir.join("bdelta.csv"))?,
        delta: meta.delta,
        snr: meta.snr,
        seed: meta.seeds.first().copied().unwrap_or(0),
        a,
    };
    if inst.b_delta.len() != inst.a.rows() || inst.x_true.len() != inst.a.cols() {
        return Err(Error::dim("instance files disagree on dimensions"));
    }
    Ok(inst)
}

/// Completion layout: `observed.csv` index pairs, `btrue.csv` and
/// `bdelta.csv` as masked `d × d` matrices, `xtrue.csv` the full `B*`.
pub fn write_completion_instance(dir: &Path, inst: &CompletionInstance, meta: &InstanceMeta, force: bool) -> Result<()> {
    prepare_dir(dir, force)?;
    let d = inst.d;
    io::save_pairs(&dir.join("observed.csv"), &inst.mask.observed())?;
    let masked = DenseMatrix::from_row_major(d, d, inst.mask.apply(inst.b_star.data()))?;
    io::save_matrix(&dir.join("btrue.csv"), &masked)?;
    io::save_matrix(&dir.join("bdelta.csv"), &DenseMatrix::from_row_major(d, d, inst.b_delta.clone())?)?;
    io::save_matrix(&dir.join("xtrue.csv"), &inst.b_star)?;
    write_meta(dir, meta)
}

pub fn read_completion_instance(dir: &Path) -> Result<CompletionInstance> {
    let meta = read_meta(dir)?;
    let b_star = io::load_matrix(&dir.join("xtrue.csv"))?;
    let d = b_star.rows();
    let mask = Masking::new(d, d, &io::load_pairs(&dir.join("observed.csv"))?)?;
    let b_delta = io::load_matrix(&dir.join("bdelta.csv"))?.into_data();
    let rank = meta.params.get("rank").and_then(Value::as_u64).unwrap_or(0) as usize;
    Ok(CompletionInstance {
        d,
        rank,
        b_star,
        mask,
        b_delta,
        delta: meta.delta,
        seed: meta.seeds.first().copied().unwrap_or(0),
    })
}

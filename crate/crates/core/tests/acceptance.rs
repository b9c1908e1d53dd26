//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. An optional argument filters criteria by
//! substring, e.g. `cargo test --test acceptance -- fig4`.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use iterreg::baselines::landweber;
use iterreg::datagen::{
    certify_design, column_scaled_instance, completion_instance,
    illposed_diag_instance, noisy_certified_instance, sparse_instance, unfeasible_toy,
    SparseInstance,
};
use iterreg::diagnostics::{
    bregman_l1, certified_metrics, compute_bound_constants, estimate_rip_constants, lagrangian_gap,
    recovery_bound, theoretical_bounds, RipMode, SaddleCertificate,
};
use iterreg::experiments::{
    compare_with_lasso, completion_trace, precond_comparison, sigma_sweep, train_test_split,
    CompareOptions,
};
use iterreg::linops::{
    adjoint_defect, assemble_dense, classif_reformulate, tv_reformulate, Block, BlockOp, CsrMatrix,
    DenseMatrix, Diagonal, Grad2d, Identity, LinOp, Masking, ScaledOp,
};
use iterreg::pdsolver::{
    pd_step, run, symmetric_steps, MetricsRow, PrecondMode, Problem, SolverConfig, SolverState,
    StoppingRule, Validation,
};
use iterreg::regularizers::{epsilon_certificate, nuclear_prox, DiagMetric, ProxErrorSchedule, Regularizer};
use iterreg::vecops::{add, dist, norm2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

type Check = fn() -> Outcome;

fn main() -> ExitCode {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let checks: [(&str, Check); 15] = [
        ("adjoint_suite", adjoint_suite),
        ("prox_suite", prox_suite),
        ("noiseless_convergence", noiseless_convergence),
        ("rate_check", rate_check),
        ("bound_domination", bound_domination),
        ("early_stopping_scaling", early_stopping_scaling),
        ("semiconvergence", semiconvergence),
        ("recovery_bound", recovery_bound_check),
        ("fig3_datadriven_sigma", fig3),
        ("fig4_lasso_comparison", fig4),
        ("fig5_preconditioning", fig5),
        ("normal_solution", normal_solution),
        ("divergence", divergence),
        ("landweber_dual_identity", landweber_identity),
        ("iteration_cost_scaling", cost_scaling),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (name, check) in checks {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let start = Instant::now();
        let o = check();
        let secs = start.elapsed().as_secs_f64();
        ran += 1;
        failed += usize::from(!o.pass);
        println!(
            "{} {name} ({secs:.1} s): {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn operators(seed: u64, r: usize, c: usize) -> Vec<(&'static str, Arc<dyn LinOp>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rv = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-2.0..2.0)).collect() };
    let dense = Arc::new(DenseMatrix::random_gaussian(r, c, seed));
    let (diag, left, right) = (rv(c), rv(r), rv(c));
    let labels: Vec<f64> = rv(r).iter().map(|v| v.signum()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    let mask = Masking::from_mask(r, c, (0..r * c).map(|_| rng.random_bool(0.5)).collect());
    let rows: Vec<Vec<(usize, f64)>> = (0..r)
        .map(|_| {
            let mut row = Vec::new();
            for j in 0..c {
                if rng.random_bool(0.3) {
                    row.push((j, rng.random_range(-1.0..1.0)));
                }
            }
            row
        })
        .collect();
    let (classif, _) = classif_reformulate(&DenseMatrix::random_gaussian(r, c, seed + 2), &labels).unwrap();
    let blur = Arc::new(DenseMatrix::random_gaussian(r * c, r * c, seed + 3));
    let (tv, _) = tv_reformulate(blur, r, c, &vec![0.0; r * c]).unwrap();
    let block = BlockOp::new(
        vec![r, c],
        vec![c, c],
        vec![
            vec![Block::Op(dense.clone()), Block::Zero],
            vec![Block::Identity(2.0), Block::Op(Arc::new(Diagonal::new(diag.clone())))],
        ],
    )
    .unwrap();
    vec![
        ("dense", dense.clone() as Arc<dyn LinOp>),
        ("identity", Arc::new(Identity::new(c))),
        ("diagonal", Arc::new(Diagonal::new(diag))),
        ("masking", Arc::new(mask)),
        ("grad2d", Arc::new(Grad2d::new(r, c))),
        ("csr", Arc::new(CsrMatrix::from_rows(c, &rows).unwrap())),
        ("scaled", Arc::new(ScaledOp::new(dense, Some(left), Some(right)).unwrap())),
        ("block", Arc::new(block)),
        ("classif", Arc::new(classif)),
        ("tv", Arc::new(tv)),
    ]
}

fn adjoint_suite() -> Outcome {
    let start = Instant::now();
    let (mut worst_adj, mut worst_block) = (0.0_f64, 0.0_f64);
    for seed in 0..10 {
        let (r, c) = (2 + seed as usize % 5, 3 + seed as usize % 4);
        for (name, op) in operators(seed, r, c) {
            worst_adj = worst_adj.max(adjoint_defect(op.as_ref(), 100, seed));
            if matches!(name, "block" | "classif") && op.in_dim() + op.out_dim() <= 64 {
                let m = assemble_dense(op.as_ref());
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let x: Vec<f64> = (0..op.in_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let y: Vec<f64> = (0..op.out_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
                worst_block = worst_block
                    .max(dist(&op.apply(&x), &m.apply(&x)))
                    .max(dist(&op.adjoint(&y), &m.adjoint(&y)));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_adj <= 1e-10 && worst_block <= 1e-12 && secs < 5.0,
        format!("adjoint defect {worst_adj:.1e} (≤ 1e-10), block vs dense {worst_block:.1e} (≤ 1e-12), {secs:.2} s (< 5 s)"),
    )
}

fn prox_suite() -> Outcome {
    let (rows, cols) = (5, 4);
    let n = rows * cols;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let regs = [
        Regularizer::L1,
        Regularizer::GroupL21 { group_size: cols },
        Regularizer::Nuclear { rows, cols },
        Regularizer::NonNeg,
        Regularizer::SqL2,
    ];
    let mut worst = 0.0_f64;
    for r in &regs {
        for _ in 0..100 {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let t = match r {
                Regularizer::GroupL21 { .. } | Regularizer::Nuclear { .. } => {
                    DiagMetric::scalar(n, rng.random_range(0.1..2.0)).unwrap()
                }
                _ => DiagMetric::new((0..n).map(|_| rng.random_range(0.1..2.0)).collect()).unwrap(),
            };
            let p = r.prox_diag(&v, &t).unwrap();
            worst = worst.max(epsilon_certificate(r, &v, &p, &t));
        }
    }
    let mut nuc = 0.0_f64;
    for _ in 0..100 {
        let tau = rng.random_range(0.1..2.0);
        let mut m = DenseMatrix::zeros(6, 6);
        let d: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
        (0..6).for_each(|i| m.set(i, i, d[i]));
        let out = nuclear_prox(&m, tau).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let want = if i == j { d[i].signum() * (d[i].abs() - tau).max(0.0) } else { 0.0 };
                nuc = nuc.max((out.get(i, j) - want).abs());
            }
        }
    }
    outcome(
        worst <= 1e-8 && nuc <= 1e-8,
        format!("worst Fenchel certificate {worst:.1e} (≤ 1e-8), nuclear vs diagonal ℓ1 {nuc:.1e} (≤ 1e-8)"),
    )
}

fn certified_problem(n: usize, d: usize, s: usize, delta: f64, seed: u64) -> (Problem, SaddleCertificate, SparseInstance) {
    let (inst, cert) = noisy_certified_instance(n, d, s, delta, seed, 10_000).unwrap();
    (inst.problem(Regularizer::L1).unwrap(), cert, inst)
}

/// `στ‖A‖² = 0.99` with `σ = τ`.
fn symmetric_config(p: &Problem, iters: usize) -> SolverConfig {
    let (s, t) = symmetric_steps(p.a_norm(), 0.99);
    let mut c = SolverConfig::scalar(p, t, s).unwrap();
    c.max_iters = iters;
    c
}

/// `σ = 1`, `τ = 1/(4‖A‖²)`: strict conditions hold with `ξ = 1/4`, `η = 3/2`.
fn strict_config(p: &Problem, iters: usize) -> SolverConfig {
    let mut c = SolverConfig::scalar(p, 1.0 / (4.0 * p.a_norm().powi(2)), 1.0).unwrap();
    c.max_iters = iters;
    c.validation = Validation::Strict;
    c
}

fn noiseless_convergence() -> Outcome {
    let iters = 50_000;
    let res: Vec<(f64, f64, f64, f64)> = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            let (p, cert, _) = certified_problem(50, 100, 5, 0.0, seed);
            let mut cfg = symmetric_config(&p, iters);
            cfg.log_every = Some(iters);
            let out = run(&p, &cfg, &StoppingRule::MaxIters(iters), &mut []).unwrap();
            let xa = out.state.x_avg();
            let xl = &out.state.x;
            (
                dist(&p.op.apply(&xa), &cert.b_star),
                dist(&xa, &cert.x_star),
                dist(&p.op.apply(xl), &cert.b_star),
                dist(xl, &cert.x_star),
            )
        })
        .collect();
    let worst = |f: fn(&(f64, f64, f64, f64)) -> f64| res.iter().map(f).fold(0.0, f64::max);
    let (feas, err) = (worst(|r| r.0), worst(|r| r.1));
    outcome(
        feas <= 1e-5 && err <= 1e-4,
        format!(
            "averaged iterates at k=5e4 over 10 instances: max feasibility {feas:.2e} (≤ 1e-5), max ‖x̂−x*‖ {err:.2e} (≤ 1e-4); last iterates reach {:.1e} / {:.1e}",
            worst(|r| r.2),
            worst(|r| r.3)
        ),
    )
}

fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Log-spaced samples of a logged series over `[lo, hi]`.
fn log_spaced(series: &[(usize, f64)], lo: usize, hi: usize, count: usize) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for i in 0..count {
        let target = (lo as f64) * (hi as f64 / lo as f64).powf(i as f64 / (count - 1) as f64);
        if let Some((k, v)) = series.iter().find(|(k, _)| *k as f64 >= target) {
            if out.last().is_none_or(|(lk, _)| *lk != *k as f64) {
                out.push((*k as f64, *v));
            }
        }
    }
    out
}

fn rate_check() -> Outcome {
    let slopes: Vec<f64> = (0..5u64)
        .into_par_iter()
        .map(|seed| {
            let (p, cert, _) = certified_problem(50, 100, 5, 0.0, seed);
            let cfg = symmetric_config(&p, 10_000);
            let mut cb = certified_metrics(&p, &cert, true);
            let out = run(&p, &cfg, &StoppingRule::MaxIters(10_000), &mut [&mut cb]).unwrap();
            let gap = out.log.series(|r| r.lagrangian_gap.map(|g| g.max(1e-300)));
            loglog_slope(&log_spaced(&gap, 100, 10_000, 40))
        })
        .collect();
    let worst = slopes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    outcome(
        worst <= -0.9,
        format!("log-log slope of the averaged Lagrangian gap over k∈[1e2,1e4] on 5 instances: {slopes:.3?} (each ≤ -0.9)"),
    )
}

fn bound_domination() -> Outcome {
    let cases: Vec<(u64, f64, f64)> = (0..3u64)
        .flat_map(|s| [0.0, 1e-2, 1e-1].into_iter().flat_map(move |d| [(s, d, 0.0), (s, d, 1.0)]))
        .collect();
    let res: Vec<(usize, usize, f64)> = cases
        .par_iter()
        .map(|&(seed, delta, c0)| {
            let (p, cert, _) = certified_problem(50, 100, 5, delta, seed);
            let mut cfg = strict_config(&p, 5000);
            if c0 > 0.0 && delta > 0.0 {
                cfg.schedule = ProxErrorSchedule::NoiseProportional { c0, delta };
            }
            let params = cfg.validate(&p).unwrap();
            let zx = vec![0.0; p.dim_x()];
            let zy = vec![0.0; p.dim_y()];
            let bc = compute_bound_constants(&cert, &cfg.t, &cfg.sigma, &params, &zx, &zy, c0, true).unwrap();
            let mut cb = certified_metrics(&p, &cert, true);
            let out = run(&p, &cfg, &StoppingRule::MaxIters(5000), &mut [&mut cb]).unwrap();
            let mut bad = 0;
            let mut tightest = 0.0_f64;
            for row in &out.log.rows {
                let (g, f) = theoretical_bounds(&bc, row.k, delta);
                let (mg, mf) = (row.lagrangian_gap.unwrap(), row.feasibility.unwrap().powi(2));
                tightest = tightest.max(mg / g).max(mf / f.unwrap());
                bad += usize::from(mg > g || mf > f.unwrap());
            }
            (bad, out.log.len(), tightest)
        })
        .collect();
    let bad: usize = res.iter().map(|r| r.0).sum();
    let rows: usize = res.iter().map(|r| r.1).sum();
    let tight = res.iter().map(|r| r.2).fold(0.0, f64::max);
    outcome(
        bad == 0,
        format!("{bad} violations in {rows} logged rows (δ ∈ {{0,1e-2,1e-1}}, C0 ∈ {{0,1}}, 3 instances); largest measured/bound ratio {tight:.3}"),
    )
}

fn early_stopping_scaling() -> Outcome {
    let deltas = [1e-1, 1e-2, 1e-3];
    let res: Vec<(f64, Vec<f64>)> = (0..3u64)
        .into_par_iter()
        .map(|seed| {
            // calibrate C̃ from the best iteration at δ = 0.1
            let (p, cert, _) = certified_problem(50, 100, 5, deltas[0], seed);
            let mut cfg = symmetric_config(&p, 5000);
            let mut d = Vec::new();
            let mut cb = |s: &SolverState, _: &mut MetricsRow| d.push((s.k, dist(&s.x_avg(), &cert.x_star)));
            run(&p, &cfg, &StoppingRule::MaxIters(5000), &mut [&mut cb]).unwrap();
            let k_best = d.iter().fold((0, f64::INFINITY), |b, x| if x.1 < b.1 { *x } else { b }).0;
            let c_tilde = k_best as f64 * deltas[0];
            let gaps = deltas
                .iter()
                .map(|&delta| {
                    let (p, cert, _) = certified_problem(50, 100, 5, delta, seed);
                    cfg.log_every = Some(usize::MAX);
                    let out = run(&p, &cfg, &StoppingRule::FixedK { c_tilde, delta }, &mut []).unwrap();
                    lagrangian_gap(&p, &cert, &out.state.x_avg(), &out.state.y_avg())
                })
                .collect();
            (c_tilde, gaps)
        })
        .collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for (c, g) in &res {
        let ratios: Vec<f64> = g.iter().zip(&deltas).map(|(gi, d)| (gi / g[0]) / (d / deltas[0])).collect();
        ok &= ratios.iter().all(|r| (1.0 / 3.0..=3.0).contains(r));
        let g: Vec<String> = g.iter().map(|v| format!("{v:.2e}")).collect();
        parts.push(format!("C̃={c:.1}: gap [{}], normalized {ratios:.2?}", g.join(", ")));
    }
    outcome(ok, format!("(gap(δ)/gap(0.1))/(δ/0.1) within [1/3, 3]; {}", parts.join("; ")))
}

fn semiconvergence() -> Outcome {
    let cert_ratios: Vec<(f64, bool)> = (0..5u64)
        .into_par_iter()
        .map(|seed| {
            let (p, cert, _) = certified_problem(20, 40, 2, 0.1, seed);
            let mut cfg = symmetric_config(&p, 20_000);
            cfg.log_every = Some(10);
            let mut d = Vec::new();
            let mut cb = |s: &SolverState, _: &mut MetricsRow| d.push(dist(&s.x_avg(), &cert.x_star));
            run(&p, &cfg, &StoppingRule::MaxIters(20_000), &mut [&mut cb]).unwrap();
            let (i, m) = d.iter().enumerate().fold((0, f64::INFINITY), |b, (i, v)| if *v < b.1 { (i, *v) } else { b });
            (m / d.last().unwrap(), i > 0 && i + 1 < d.len())
        })
        .collect();
    let inst = completion_instance(200, 5, 0.8, 0.1, 0).unwrap();
    let tr = completion_trace(&inst, 0.99, 1000, 5, false).unwrap();
    let (kb, db) = tr.best();
    let last = *tr.dist_truth.last().unwrap();
    let comp_ratio = db / last;
    let comp_interior = kb > tr.k[0] && kb < *tr.k.last().unwrap();
    let cert_ok = cert_ratios.iter().all(|(r, i)| *i && *r < 0.5);
    let ratios: Vec<f64> = cert_ratios.iter().map(|r| r.0).collect();
    outcome(
        cert_ok && comp_interior && comp_ratio < 0.5,
        format!(
            "certified (20×40, s=2, δ=0.1, averaged): min/final distance per instance {ratios:.3?}; completion (d=200, δ=0.1): best k={kb}, min/final {comp_ratio:.3} (each < 0.5, interior)"
        ),
    )
}

fn recovery_bound_check() -> Outcome {
    // search Gaussian 8×12 designs for exact constants below the threshold
    let searched = 300u64;
    let found: Vec<(u64, f64, bool)> = (0..searched)
        .into_par_iter()
        .map(|seed| {
            let mut a = DenseMatrix::random_gaussian(8, 12, seed);
            let inv: Vec<f64> = a.col_norms_sq().iter().map(|c| 1.0 / c.sqrt()).collect();
            a.scale_columns(&inv);
            let cs = estimate_rip_constants(&a, 2, RipMode::Exact, seed).unwrap();
            (seed, cs.theta_s + cs.theta_ss + cs.theta_s2s, cs.is_valid())
        })
        .collect();
    let best = found.iter().map(|f| f.1).fold(f64::INFINITY, f64::min);
    let Some(&(seed, _, _)) = found.iter().find(|f| f.2) else {
        return outcome(
            false,
            format!("no 8×12 design with θ_s+θ_s,s+θ_s,2s < 1 among {searched} unit-column Gaussian draws (smallest sum {best:.3}); bound not checkable"),
        );
    };
    let mut a = DenseMatrix::random_gaussian(8, 12, seed);
    let inv: Vec<f64> = a.col_norms_sq().iter().map(|c| 1.0 / c.sqrt()).collect();
    a.scale_columns(&inv);
    let cs = estimate_rip_constants(&a, 2, RipMode::Exact, seed).unwrap();
    let (inst, cert) = match certify_design(&a, 2, seed, 1000) {
        Ok(v) => v,
        Err(e) => return outcome(false, format!("valid design {seed} not certifiable: {e}")),
    };
    let p = inst.problem(Regularizer::L1).unwrap();
    let aty = p.op.adjoint(&cert.y_star);
    let cfg = strict_config(&p, 5000);
    let mut bad = 0;
    let mut cb = |s: &SolverState, _: &mut MetricsRow| {
        let x = s.x_avg();
        let feas = dist(&p.op.apply(&x), &cert.b_star);
        let breg = bregman_l1(&x, &cert.x_star, &aty).unwrap();
        let rhs = recovery_bound(&cs, p.a_norm(), feas, breg).unwrap();
        bad += usize::from(dist(&x, &cert.x_star) > rhs);
    };
    run(&p, &cfg, &StoppingRule::MaxIters(5000), &mut [&mut cb]).unwrap();
    outcome(bad == 0, format!("design seed {seed}: {bad} logged iterations above the recovery bound"))
}

fn fig3() -> Outcome {
    let res: Vec<(f64, Option<usize>)> = (0..5u64)
        .into_par_iter()
        .map(|seed| {
            let inst = sparse_instance(200, 500, 0.2, 0.1, Some(10.0), seed).unwrap();
            let curves = sigma_sweep(&inst, 100).unwrap();
            let dd = curves.iter().find(|c| c.label == "sigma_datadriven").unwrap();
            let f1 = dd.log.series(|r| r.f1).into_iter().filter(|(k, _)| *k <= 50).map(|(_, f)| f).fold(0.0, f64::max);
            let eq = curves.iter().find(|c| c.label == "sigma_eq_tau").unwrap();
            (f1, eq.support_exceeds(250).filter(|k| *k <= 100))
        })
        .collect();
    let f1s: Vec<f64> = res.iter().map(|r| r.0).collect();
    let dense: Vec<Option<usize>> = res.iter().map(|r| r.1).collect();
    outcome(
        f1s.iter().all(|f| *f >= 0.95) && dense.iter().all(Option::is_some),
        format!("5 seeds: data-driven best F1 within 50 iterations {f1s:.3?} (each ≥ 0.95); σ=τ support > 250 first at k = {dense:?} (≤ 100)"),
    )
}

fn fig4() -> Outcome {
    let inst = sparse_instance(1250, 2000, 0.2, 0.1, Some(5.0), 0).unwrap();
    let ((a, b), (at, bt)) = train_test_split(&inst, 1000).unwrap();
    let mut opts = CompareOptions::default();
    opts.path.max_iters = 5000;
    opts.path.tol = 1e-4;
    let cmp = compare_with_lasso(&a, &b, (&at, &bt), Some(&inst.x_true), &opts).unwrap();
    let (pd, la) = (cmp.pd_best_cv_mse(), cmp.lasso_best_cv_mse());
    let rel = (pd - la).abs() / la;
    let (f_pd, f_la) = cmp.f1.unwrap();
    outcome(
        rel <= 0.15 && (f_pd - f_la).abs() <= 0.1,
        format!(
            "best CV MSE primal-dual {pd:.4} (k={}) vs Lasso {la:.4} (λ index {}): relative gap {rel:.3} (≤ 0.15); F1 {f_pd:.3} vs {f_la:.3} (|Δ| ≤ 0.1); test MSE {:.4} vs {:.4}",
            cmp.pd_cv.best_k,
            cmp.lasso.best_index.unwrap(),
            cmp.test_mse.0,
            cmp.test_mse.1
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    v[v.len() / 2]
}

fn fig5() -> Outcome {
    let res: Vec<(f64, f64)> = (0..5u64)
        .into_par_iter()
        .map(|seed| {
            let inst = column_scaled_instance(500, 1000, 0.2, 0.1, Some(5.0), 1.0, 5.0, seed).unwrap();
            let c = precond_comparison(&inst, PrecondMode::InverseColumns, 300).unwrap();
            (c.diagonal.best_f1().unwrap().1, c.scalar.best_f1().unwrap().1)
        })
        .collect();
    let (md, ms) = (median(res.iter().map(|r| r.0).collect()), median(res.iter().map(|r| r.1).collect()));
    outcome(
        md >= ms,
        format!("median best F1 diagonal {md:.3} vs scalar {ms:.3}; per seed {res:.3?}"),
    )
}

fn normal_solution() -> Outcome {
    let p = unfeasible_toy();
    let cfg = symmetric_config(&p, 10_000);
    let mut y100 = 0.0;
    let mut cb = |s: &SolverState, _: &mut MetricsRow| {
        if s.k == 100 {
            y100 = norm2(&s.y_avg());
        }
    };
    let out = run(&p, &cfg, &StoppingRule::MaxIters(10_000), &mut [&mut cb]).unwrap();
    let x = out.state.x_avg()[0];
    let y = norm2(&out.state.y_avg());
    outcome(
        (x - 0.5).abs() <= 1e-4 && y >= 10.0 * y100,
        format!("x̂ = {x:.7} (|x̂ − 1/2| ≤ 1e-4); ‖ŷ‖ at 1e4 / at 1e2 = {:.2} (≥ 10)", y / y100),
    )
}

fn divergence() -> Outcome {
    let inst = illposed_diag_instance(10_000, 0.1).unwrap();
    let p = &inst.problem;
    let mut cfg = SolverConfig::scalar(p, 0.99, 0.99).unwrap();
    cfg.log_every = Some(1000);
    let mut at = Vec::new();
    let mut cb = |s: &SolverState, _: &mut MetricsRow| at.push((s.k, norm2(&s.x_avg())));
    run(p, &cfg, &StoppingRule::MaxIters(100_000), &mut [&mut cb]).unwrap();
    let get = |k: usize| at.iter().find(|(j, _)| *j == k).unwrap().1;
    let (n3, n5) = (get(1000), get(100_000));
    outcome(
        n5 >= 10.0 * n3,
        format!("‖x̂_k‖ = {n3:.3} at k=1e3 and {n5:.3} at k=1e5: ratio {:.2} (≥ 10); ‖x^δ‖ = {:.3}", n5 / n3, norm2(&inst.x_noisy)),
    )
}

fn landweber_identity() -> Outcome {
    let mut worst = 0.0_f64;
    for seed in 0..20 {
        let a = DenseMatrix::random_gaussian(10, 20, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = 1.0 / iterreg::linops::operator_norm(&a).powi(2);
        let tr = landweber(&a, &b, g, 1000).unwrap();
        for (x, y) in tr.xs.iter().zip(&tr.ys) {
            worst = worst.max(norm2(&add(x, &a.adjoint(y))));
        }
    }
    outcome(worst <= 1e-12, format!("max ‖x_k + A*y_k‖ over 20 systems × 1e3 steps: {worst:.1e} (≤ 1e-12)"))
}

fn cost_scaling() -> Outcome {
    let sizes = [(100usize, 200usize), (200, 400), (400, 800)];
    let mut pts = Vec::new();
    for &(n, d) in &sizes {
        let a = DenseMatrix::random_gaussian(n, d, 1);
        let b = a.apply(&vec![1.0; d]);
        let p = Problem::new(Arc::new(a), b, Regularizer::L1).unwrap();
        let cfg = symmetric_config(&p, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut state = SolverState::zeros(&p);
        for _ in 0..20 {
            state = pd_step(&p, &cfg, state, &mut rng).unwrap();
        }
        let mut times = Vec::with_capacity(300);
        for _ in 0..300 {
            let t0 = Instant::now();
            state = pd_step(&p, &cfg, state, &mut rng).unwrap();
            times.push(t0.elapsed().as_secs_f64());
        }
        pts.push(((n * d) as f64, median(times)));
    }
    // proportional fit t = c·nd decides; the affine fit is reported alongside
    let c = pts.iter().map(|(x, y)| x * y).sum::<f64>() / pts.iter().map(|(x, _)| x * x).sum::<f64>();
    let dev: Vec<f64> = pts.iter().map(|(x, y)| (y / (c * x) - 1.0).abs()).collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let slope = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / pts.iter().map(|(x, _)| (x - mx).powi(2)).sum::<f64>();
    let icpt = my - slope * mx;
    let dev_aff: Vec<f64> = pts.iter().map(|(x, y)| (y / (icpt + slope * x) - 1.0).abs()).collect();
    let ok = c > 0.0 && dev.iter().all(|d| *d <= 0.4);
    let us: Vec<String> = pts.iter().map(|(x, y)| format!("nd={x:.0}: {:.1} µs", y * 1e6)).collect();
    outcome(
        ok,
        format!(
            "median step {}; deviation from t = c·nd {dev:.3?} (≤ 0.4); affine fit {dev_aff:.3?}",
            us.join(", ")
        ),
    )
}


use iterreg::datagen::{certified_instance, noisy_certified_instance, SparseInstance};
use iterreg::diagnostics::{
    bregman_divergence, bregman_l1, certified_metrics, compute_bound_constants, extended_support,
    lagrangian_gap, theoretical_bounds, SaddleCertificate, TOL_SAT,
};
use iterreg::pdsolver::{pd_step, run, SolverConfig, SolverState, StoppingRule, Validation};
use iterreg::regularizers::{ProxErrorSchedule, Regularizer};
use iterreg::vecops::{dist, norm1};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64) -> (SparseInstance, SaddleCertificate) {
    certified_instance(20, 40, 2, seed, 1000).unwrap()
}

/// `τ = 1/(4σ‖A‖²)` with `σ = 1`: satisfies the strict conditions for
/// `ξ = 1/4`, `η = 3/2`.
fn strict_config(p: &iterreg::pdsolver::Problem, iters: usize) -> SolverConfig {
    let a2 = p.a_norm().powi(2);
    let mut c = SolverConfig::scalar(p, 1.0 / (4.0 * a2), 1.0).unwrap();
    c.max_iters = iters;
    c.validation = Validation::Strict;
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn certified_instances_are_valid(seed in any::<u64>()) {
        let (inst, cert) = instance(seed);
        let p = inst.problem(Regularizer::L1).unwrap();
        prop_assert!(cert.validate(&p).is_ok());
        let rep = extended_support(&p.op.adjoint(&cert.y_star), TOL_SAT);
        let supp: Vec<usize> = (0..40).filter(|&j| cert.x_star[j] != 0.0).collect();
        prop_assert_eq!(rep.gamma, supp);
        prop_assert!(rep.m <= 1.0 - 1e-3);
    }

    #[test]
    fn gap_is_nonnegative_and_equals_bregman(seed in any::<u64>()) {
        let (inst, cert) = instance(seed);
        let p = inst.problem(Regularizer::L1).unwrap();
        let aty = p.op.adjoint(&cert.y_star);
        let rep = extended_support(&aty, TOL_SAT);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let x: Vec<f64> = (0..40).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..20).map(|_| rng.random_range(-2.0..2.0)).collect();
            let gap = lagrangian_gap(&p, &cert, &x, &y);
            prop_assert!(gap >= -1e-10);
            prop_assert!((gap - bregman_divergence(&p, &cert, &x)).abs() <= 1e-10 * (1.0 + gap));
            let breg = bregman_l1(&x, &cert.x_star, &aty).unwrap();
            prop_assert!((gap - breg).abs() <= 1e-10 * (1.0 + gap));
            let off: f64 = (0..40).filter(|j| !rep.gamma.contains(j)).map(|j| x[j].abs()).sum();
            prop_assert!(breg >= (1.0 - rep.m) * off - 1e-10);
        }
        prop_assert!(lagrangian_gap(&p, &cert, &cert.x_star, &[0.0; 20]).abs() <= 1e-12);
    }
}

#[test]
fn gap_and_feasibility_decay_without_noise() {
    let (inst, cert) = instance(1);
    let p = inst.problem(Regularizer::L1).unwrap();
    let cfg = strict_config(&p, 500);
    let mut cb = certified_metrics(&p, &cert, true);
    let out = run(&p, &cfg, &StoppingRule::MaxIters(500), &mut [&mut cb]).unwrap();
    let feas = out.log.series(|r| r.feasibility);
    let gap = out.log.series(|r| r.lagrangian_gap);
    assert!(feas.last().unwrap().1 < 0.2 * feas[9].1);
    assert!(gap.last().unwrap().1 < 0.2 * gap[9].1);
}

#[test]
fn running_sums_match_stored_history() {
    let (inst, _) = instance(2);
    let p = inst.problem(Regularizer::L1).unwrap();
    let cfg = strict_config(&p, 1000);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut state = SolverState::zeros(&p);
    let mut xs: Vec<Vec<f64>> = Vec::new();
    for _ in 0..1000 {
        state = pd_step(&p, &cfg, state, &mut rng).unwrap();
        xs.push(state.x.clone());
    }
    let n = xs.len() as f64;
    let avg: Vec<f64> = (0..40).map(|j| xs.iter().map(|x| x[j]).sum::<f64>() / n).collect();
    assert!(dist(&avg, &state.x_avg()) <= 1e-12);
}

fn bound_violations(delta: f64, c0: f64, seed: u64) -> usize {
    let (inst, cert) = noisy_certified_instance(20, 40, 2, delta, seed, 1000).unwrap();
    let p = inst.problem(Regularizer::L1).unwrap();
    let mut cfg = strict_config(&p, 2000);
    if c0 > 0.0 && delta > 0.0 {
        cfg.schedule = ProxErrorSchedule::NoiseProportional { c0, delta };
    }
    let params = cfg.validate(&p).unwrap();
    let bc = compute_bound_constants(&cert, &cfg.t, &cfg.sigma, &params, &[0.0; 40], &[0.0; 20], c0, true).unwrap();
    let mut cb = certified_metrics(&p, &cert, true);
    let out = run(&p, &cfg, &StoppingRule::MaxIters(2000), &mut [&mut cb]).unwrap();
    let mut bad = 0;
    for row in &out.log.rows {
        let (g, f) = theoretical_bounds(&bc, row.k, delta);
        let f = f.unwrap();
        if row.lagrangian_gap.unwrap() > g || row.feasibility.unwrap().powi(2) > f {
            bad += 1;
        }
    }
    bad
}

#[test]
fn bounds_dominate_measured_quantities() {
    for delta in [0.0, 1e-2, 1e-1] {
        for c0 in [0.0, 1.0] {
            assert_eq!(bound_violations(delta, c0, 3), 0, "δ={delta} C0={c0}");
        }
    }
}

#[test]
fn inexact_prox_stays_close_to_exact_at_early_stop() {
    let delta = 1e-2;
    let (inst, cert) = noisy_certified_instance(20, 40, 2, delta, 4, 1000).unwrap();
    let p = inst.problem(Regularizer::L1).unwrap();
    let stop = StoppingRule::FixedK { c_tilde: 5.0, delta };
    let cfg = strict_config(&p, 0);
    let exact = run(&p, &cfg, &stop, &mut []).unwrap();
    let mut inexact_cfg = cfg.clone();
    inexact_cfg.schedule = ProxErrorSchedule::NoiseProportional { c0: 1.0, delta };
    let inexact = run(&p, &inexact_cfg, &stop, &mut []).unwrap();
    assert!(inexact.eps.iter().any(|e| *e > 0.0));
    assert!(inexact.eps.iter().all(|e| *e <= delta));
    let de = dist(&exact.state.x_avg(), &cert.x_star);
    let di = dist(&inexact.state.x_avg(), &cert.x_star);
    assert!(di <= 2.0 * de, "{di} vs {de}");
}

#[test]
fn noisy_iterates_semiconverge() {
    let (inst, cert) = noisy_certified_instance(20, 40, 2, 0.1, 5, 1000).unwrap();
    let p = inst.problem(Regularizer::L1).unwrap();
    let mut cfg = strict_config(&p, 20_000);
    cfg.log_every = Some(10);
    let mut d = Vec::new();
    let mut cb = |s: &SolverState, _: &mut iterreg::pdsolver::MetricsRow| d.push(dist(&s.x_avg(), &cert.x_star));
    run(&p, &cfg, &StoppingRule::MaxIters(20_000), &mut [&mut cb]).unwrap();
    let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(min < d[0].min(*d.last().unwrap()));
}

#[test]
fn zero_gap_and_feasibility_identify_the_solution() {
    // last iterates on a small instance converge to machine precision
    let (inst, cert) = certified_instance(5, 8, 1, 6, 100).unwrap();
    let p = inst.problem(Regularizer::L1).unwrap();
    let mut cfg = strict_config(&p, 0);
    cfg.averaging = false;
    cfg.log_every = Some(1000);
    let out = run(&p, &cfg, &StoppingRule::MaxIters(200_000), &mut []).unwrap();
    let x = &out.state.x;
    let feas = dist(&p.op.apply(x), &cert.b_star);
    let gap = lagrangian_gap(&p, &cert, x, &out.state.y);
    assert!(feas <= 1e-8 && gap <= 1e-10, "feas {feas:e} gap {gap:e}");
    assert!(dist(x, &cert.x_star) <= 1e-4);
    assert!(norm1(x) > 0.0);
}

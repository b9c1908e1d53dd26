use iterreg::baselines::{
    fista_lasso, ista_lasso, landweber, lasso_kkt, lasso_objective, lasso_path, linearized_bregman,
    linearized_bregman_step, LassoPathOptions,
};
use iterreg::datagen::certified_instance;
use iterreg::linops::{DenseMatrix, LinOp};
use iterreg::vecops::{add, dist, norm2, norm_inf, sub};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_system(seed: u64, n: usize, d: usize) -> (DenseMatrix, Vec<f64>) {
    let a = DenseMatrix::random_gaussian(n, d, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    let b = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    (a, b)
}

/// Minimum-norm solution `A⁺b` of an underdetermined full-row-rank system.
fn pseudo_inverse_solution(a: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let m = a.to_nalgebra();
    let pinv = m.clone().pseudo_inverse(1e-12).unwrap();
    (pinv * nalgebra::DVector::from_column_slice(b)).as_slice().to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fista_never_trails_ista(seed in any::<u64>(), frac in 0.01f64..0.9, iters in 5usize..200) {
        let (a, b) = random_system(seed, 15, 30);
        let lam = frac * norm_inf(&a.adjoint(&b));
        let ista = ista_lasso(&a, &b, lam, None, iters).unwrap();
        let fista = fista_lasso(&a, &b, lam, None, 0.0, iters).unwrap();
        let (fi, ff) = (lasso_objective(&a, &b, lam, &ista), lasso_objective(&a, &b, lam, &fista.x));
        prop_assert!(ff <= fi + 1e-8, "{ff} > {fi}");
    }

    #[test]
    fn landweber_dual_identity(seed in any::<u64>()) {
        let (a, b) = random_system(seed, 10, 20);
        let g = 1.0 / a.frobenius_norm().powi(2);
        let tr = landweber(&a, &b, g, 1000).unwrap();
        for (x, y) in tr.xs.iter().zip(&tr.ys) {
            prop_assert!(norm2(&add(x, &a.adjoint(y))) <= 1e-12);
        }
    }

    #[test]
    fn bregman_forms_agree_at_unit_step(seed in any::<u64>(), alpha in 0.1f64..1.5) {
        let (a, b) = random_system(seed, 6, 12);
        // unit operator norm keeps the unit step stable
        let n = iterreg::linops::operator_norm(&a);
        let a = DenseMatrix::from_row_major(6, 12, a.data().iter().map(|v| v / n).collect()).unwrap();
        let v_form = linearized_bregman(&a, &b, alpha, 30, Some(1.0)).unwrap();
        let (mut x, mut p) = (vec![0.0; 12], vec![0.0; 12]);
        for xv in &v_form {
            let g = a.adjoint(&sub(&a.apply(&x), &b));
            (x, p) = linearized_bregman_step(&x, &p, &g, alpha);
            prop_assert!(dist(&x, xv) <= 1e-9 * (1.0 + norm2(xv)));
        }
    }
}

#[test]
fn fista_matches_long_ista_oracle() {
    let (a, b) = random_system(11, 20, 40);
    let lam = 0.1 * norm_inf(&a.adjoint(&b));
    let oracle = ista_lasso(&a, &b, lam, None, 1_000_000).unwrap();
    let sol = fista_lasso(&a, &b, lam, None, 1e-10, 100_000).unwrap();
    assert!(sol.converged);
    assert!(dist(&sol.x, &oracle) <= 1e-6, "{}", dist(&sol.x, &oracle));
}

#[test]
fn fista_returns_zero_above_lambda_max() {
    let (a, b) = random_system(12, 10, 20);
    let lam = norm_inf(&a.adjoint(&b));
    let sol = fista_lasso(&a, &b, lam * 1.0001, None, 1e-8, 10).unwrap();
    assert!(sol.x.iter().all(|v| *v == 0.0));
}

#[test]
fn path_solutions_satisfy_optimality() {
    let (a, b) = random_system(13, 30, 60);
    let opts = LassoPathOptions { grid_size: 20, folds: 3, ..Default::default() };
    let path = lasso_path(&a, &b, &opts).unwrap();
    assert!(path.lambdas.windows(2).all(|w| w[1] < w[0]) && path.lambdas.iter().all(|l| *l > 0.0));
    for (lam, x) in path.lambdas.iter().zip(&path.solutions) {
        assert!(lasso_kkt(&a, &b, *lam, x) <= 1e-6, "λ={lam}");
    }
    let cv = path.cv_mse.as_ref().unwrap();
    assert_eq!(cv.len(), 20);
    let best = path.best_index.unwrap();
    assert!(cv.iter().all(|m| *m >= cv[best]));
}

#[test]
fn landweber_reaches_minimum_norm_solution() {
    let (a, b) = random_system(14, 10, 20);
    let g = 1.0 / iterreg::linops::operator_norm(&a).powi(2);
    let tr = landweber(&a, &b, g, 20_000).unwrap();
    let x_dag = pseudo_inverse_solution(&a, &b);
    assert!(dist(tr.xs.last().unwrap(), &x_dag) <= 1e-8);
}

#[test]
fn linearized_bregman_recovers_certified_solution_for_large_alpha() {
    let (inst, cert) = certified_instance(20, 40, 2, 17, 1000).unwrap();
    let xs = linearized_bregman(&inst.a, &inst.b_star, 50.0, 50_000, None).unwrap();
    let err = dist(xs.last().unwrap(), &cert.x_star);
    assert!(err <= 1e-2, "{err}");
}

#[test]
fn linearized_bregman_zero_data_gives_zero_trace() {
    let (a, _) = random_system(18, 5, 9);
    let xs = linearized_bregman(&a, &[0.0; 5], 3.0, 50, None).unwrap();
    assert!(xs.iter().flatten().all(|v| *v == 0.0));
}

fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let (c, d) = (hi - r * (hi - lo), lo + r * (hi - lo));
        if f(c) < f(d) {
            hi = d;
        } else {
            lo = c;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn bregman_step_matches_numeric_argmin() {
    // x' = argmin ‖x‖₁ + ‖x‖²/(2α) − ⟨P − g, x⟩ with P = p + x/α ∈ ∂J(x)
    let alpha = 0.7;
    let x = [0.4, 0.0, -1.2];
    let p = [1.0, 0.3, -1.0];
    let g = [0.5, -0.9, 0.2];
    let (x_new, _) = linearized_bregman_step(&x, &p, &g, alpha);
    for i in 0..3 {
        let c = p[i] + x[i] / alpha - g[i];
        let obj = |z: f64| z.abs() + z * z / (2.0 * alpha) - c * z;
        let z = golden_min(obj, -10.0, 10.0);
        assert!((z - x_new[i]).abs() <= 1e-6, "{i}: {z} vs {}", x_new[i]);
    }
}

#[test]
fn landweber_rejects_large_step() {
    let (a, b) = random_system(16, 4, 6);
    let n = iterreg::linops::operator_norm(&a);
    assert!(landweber(&a, &b, 2.5 / (n * n), 5).is_err());
    assert!(landweber(&a, &b, 0.0, 5).is_err());
}

use std::sync::Arc;

use iterreg::linops::{
    adjoint_defect, assemble_dense, classif_reformulate, tv_reformulate, Block, BlockOp, CsrMatrix,
    DenseMatrix, Diagonal, Grad2d, Identity, LinOp, Masking, ScaledOp,
};
use iterreg::vecops::norm2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
}

fn random_csr(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CsrMatrix {
    let rows: Vec<Vec<(usize, f64)>> = (0..rows)
        .map(|_| {
            let mut row = Vec::new();
            for j in 0..cols {
                if rng.random_bool(0.3) {
                    row.push((j, rng.random_range(-1.0..1.0)));
                }
            }
            row
        })
        .collect();
    CsrMatrix::from_rows(cols, &rows).unwrap()
}

fn random_mask(rng: &mut ChaCha8Rng, p1: usize, p2: usize) -> Masking {
    Masking::from_mask(p1, p2, (0..p1 * p2).map(|_| rng.random_bool(0.5)).collect())
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn check_matches_dense(op: &dyn LinOp, rng: &mut ChaCha8Rng) -> f64 {
    let m = assemble_dense(op);
    let x = random_vec(rng, op.in_dim());
    let y = random_vec(rng, op.out_dim());
    let scale = 1.0 + norm2(&x) + norm2(&y);
    max_abs_diff(&op.apply(&x), &m.apply(&x)).max(max_abs_diff(&op.adjoint(&y), &m.adjoint(&y))) / scale
}

/// Every operator family on random shapes.
fn operator_zoo(seed: u64, r: usize, c: usize) -> Vec<(&'static str, Arc<dyn LinOp>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dense = Arc::new(DenseMatrix::random_gaussian(r, c, seed));
    let diag = random_vec(&mut rng, c);
    let left = random_vec(&mut rng, r);
    let right = random_vec(&mut rng, c);
    let labels: Vec<f64> = (0..r).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    let (classif, _) = classif_reformulate(&DenseMatrix::random_gaussian(r, c, seed + 1), &labels).unwrap();
    let (tv, _) = tv_reformulate(
        Arc::new(DenseMatrix::random_gaussian(r * c, r * c, seed + 2)),
        r,
        c,
        &vec![0.0; r * c],
    )
    .unwrap();
    let block = BlockOp::new(
        vec![r, c],
        vec![c, c],
        vec![
            vec![Block::Op(dense.clone()), Block::Zero],
            vec![Block::Identity(-1.5), Block::Op(Arc::new(Diagonal::new(diag.clone())))],
        ],
    )
    .unwrap();
    vec![
        ("dense", dense.clone() as Arc<dyn LinOp>),
        ("identity", Arc::new(Identity::new(c))),
        ("diagonal", Arc::new(Diagonal::new(diag))),
        ("masking", Arc::new(random_mask(&mut rng, r, c))),
        ("grad2d", Arc::new(Grad2d::new(r, c))),
        ("csr", Arc::new(random_csr(&mut rng, r, c))),
        ("scaled", Arc::new(ScaledOp::new(dense, Some(left), Some(right)).unwrap())),
        ("block", Arc::new(block)),
        ("classif", Arc::new(classif)),
        ("tv", Arc::new(tv)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn adjoint_identity_holds(seed in 0u64..10_000, r in 1usize..7, c in 1usize..7) {
        for (name, op) in operator_zoo(seed, r, c) {
            let d = adjoint_defect(op.as_ref(), 100, seed);
            prop_assert!(d <= 1e-10, "{name}: defect {d:e}");
        }
    }

    #[test]
    fn operators_match_their_dense_assembly(seed in 0u64..10_000, r in 1usize..5, c in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        for (name, op) in operator_zoo(seed, r, c) {
            if op.in_dim() + op.out_dim() > 64 {
                continue;
            }
            let e = check_matches_dense(op.as_ref(), &mut rng);
            prop_assert!(e <= 1e-12, "{name}: {e:e}");
        }
    }

    #[test]
    fn masking_is_an_orthogonal_projection(seed in 0u64..10_000, r in 1usize..8, c in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_mask(&mut rng, r, c);
        let x = random_vec(&mut rng, r * c);
        let mx = m.apply(&x);
        prop_assert_eq!(m.apply(&mx), mx.clone());
        prop_assert_eq!(m.adjoint(&x), mx.clone());
        for (k, keep) in m.mask().iter().enumerate() {
            prop_assert_eq!(mx[k].to_bits(), if *keep { x[k].to_bits() } else { 0f64.to_bits() });
        }
    }

    #[test]
    fn fused_sweep_matches_apply_then_adjoint(seed in 0u64..10_000, r in 1usize..6, c in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (name, op) in operator_zoo(seed, r, c) {
            let x = random_vec(&mut rng, op.in_dim());
            let shift = random_vec(&mut rng, op.out_dim());
            let ax = op.apply(&x);
            let w: Vec<f64> = ax.iter().zip(&shift).map(|(v, s)| v * v - s).collect();
            let (mut ax_f, mut g) = (vec![0.0; op.out_dim()], vec![0.0; op.in_dim()]);
            op.apply_adjoint_fused(&x, &mut |i, v| v * v - shift[i], &mut ax_f, &mut g);
            let scale = 1.0 + norm2(&x) + norm2(&w);
            prop_assert!(max_abs_diff(&ax_f, &ax) <= 1e-12 * scale, "{name}");
            prop_assert!(max_abs_diff(&g, &op.adjoint(&w)) <= 1e-10 * scale * scale, "{name}");
        }
    }

    #[test]
    fn grad2d_annihilates_constants(r in 1usize..10, c in 1usize..10, v in -5.0f64..5.0) {
        let g = Grad2d::new(r, c);
        prop_assert!(g.apply(&vec![v; r * c]).iter().all(|d| *d == 0.0));
    }
}

#[test]
fn adjoint_suite_is_fast() {
    let start = std::time::Instant::now();
    for seed in 0..20 {
        for (_, op) in operator_zoo(seed, 6, 5) {
            assert!(adjoint_defect(op.as_ref(), 100, seed) <= 1e-10);
        }
    }
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

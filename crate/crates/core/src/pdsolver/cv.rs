use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{holdout_mse, pd_step, Problem, SolverConfig, SolverState};
use crate::error::{Error, Result};
use crate::linops::{DenseMatrix, LinOp};
use crate::regularizers::Regularizer;

/// A training problem and its held-out rows.
#[derive(Clone)]
pub struct Fold {
    pub train: Problem,
    pub heldout_op: Arc<dyn LinOp>,
    pub heldout_b: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvResult {
    /// First minimizer of the fold-averaged MSE (1-based iteration count).
    pub best_k: usize,
    /// Fold-averaged hold-out MSE; entry `k − 1` belongs to iteration `k`.
    pub mean_mse: Vec<f64>,
}

/// Shuffled partition of `0..n` into `k` held-out index sets.
pub fn fold_partition(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut parts = vec![Vec::new(); k];
    for (pos, i) in idx.into_iter().enumerate() {
        parts[pos % k].push(i);
    }
    parts
}

/// Split the rows of `(A, b)` into `n_folds` shuffled folds.
pub fn kfold_row_splits(
    a: &DenseMatrix,
    b: &[f64],
    reg: &Regularizer,
    n_folds: usize,
    seed: u64,
) -> Result<Vec<Fold>> {
    let n = a.rows();
    if n_folds < 2 || n_folds > n {
        return Err(Error::config(format!("{n_folds} folds for {n} rows")));
    }
    fold_partition(n, n_folds, seed)
        .into_iter()
        .map(|held| {
            let mut is_held = vec![false; n];
            held.iter().for_each(|&i| is_held[i] = true);
            let train: Vec<usize> = (0..n).filter(|&i| !is_held[i]).collect();
            let train_b = train.iter().map(|&i| b[i]).collect();
            let held_b = held.iter().map(|&i| b[i]).collect();
            Ok(Fold {
                train: Problem::new(Arc::new(a.select_rows(&train)), train_b, reg.clone())?,
                heldout_op: Arc::new(a.select_rows(&held)),
                heldout_b: held_b,
            })
        })
        .collect()
}

fn fold_curve(fold: &Fold, config: &SolverConfig, max_iters: usize) -> Result<Vec<f64>> {
    config.validate(&fold.train)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = SolverState::zeros(&fold.train);
    let mut curve = Vec::with_capacity(max_iters);
    for _ in 0..max_iters {
        state = pd_step(&fold.train, config, state, &mut rng)?;
        let est = state.estimate(config.averaging);
        curve.push(holdout_mse(fold.heldout_op.as_ref(), &fold.heldout_b, &est));
    }
    Ok(curve)
}

/// Early stopping by cross-validation: one run per fold (in parallel), the
/// hold-out MSE averaged across folds, and the first iteration attaining
/// the minimum. `config_for` builds the step sizes from each training set.
pub fn cv_early_stop<F>(folds: &[Fold], config_for: F, max_iters: usize) -> Result<CvResult>
where
    F: Fn(&Problem) -> Result<SolverConfig> + Sync,
{
    if folds.is_empty() {
        return Err(Error::config("no folds"));
    }
    if max_iters == 0 {
        return Err(Error::config("cross-validation needs at least one iteration"));
    }
    if let Some(i) = folds.iter().position(|f| f.heldout_b.is_empty()) {
        return Err(Error::config(format!("fold {i} has no held-out rows")));
    }
    let curves: Vec<Vec<f64>> = folds
        .par_iter()
        .map(|f| fold_curve(f, &config_for(&f.train)?, max_iters))
        .collect::<Result<_>>()?;
    let nf = curves.len() as f64;
    let mean_mse: Vec<f64> = (0..max_iters)
        .map(|k| curves.iter().map(|c| c[k]).sum::<f64>() / nf)
        .collect();
    let mut best_k = 1;
    for (k, m) in mean_mse.iter().enumerate() {
        if *m < mean_mse[best_k - 1] {
            best_k = k + 1;
        }
    }
    Ok(CvResult { best_k, mean_mse })
}

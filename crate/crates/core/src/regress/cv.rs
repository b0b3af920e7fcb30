use log::warn;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lasso::{path_on, AlphaGrid, LassoOptions, Standardized};
use super::{r2_score, RegressError, Result};

/// Fold assignments for repeated k-fold cross-validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvPlan {
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
    /// `folds[repeat][row]` is the held-out fold of `row`.
    pub folds: Vec<Vec<usize>>,
}

impl CvPlan {
    /// Repeat `r` shuffles the rows with a generator seeded by `seed + r` and
    /// deals them round-robin into `k` folds.
    pub fn new(n: usize, k: usize, repeats: usize, seed: u64) -> Result<Self> {
        if k < 2 || repeats == 0 {
            return Err(RegressError::BadPlan(format!("k = {k}, repeats = {repeats}")));
        }
        if n < k {
            return Err(RegressError::TooFewRows { n, need: k });
        }
        let folds = (0..repeats)
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rng);
                let mut fold = vec![0; n];
                for (i, &row) in perm.iter().enumerate() {
                    fold[row] = i % k;
                }
                fold
            })
            .collect();
        Ok(Self { k, repeats, seed, folds })
    }

    pub fn n(&self) -> usize {
        self.folds.first().map_or(0, Vec::len)
    }
}

/// Cross-validation table and the selected penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub alpha: f64,
    pub index: usize,
    /// Mean out-of-fold R² per grid value, over the kept repeats.
    pub mean_r2: Vec<f64>,
    /// `r2[repeat][alpha]`; `None` for dropped repeats.
    pub r2: Vec<Option<Vec<f64>>>,
    pub dropped_repeats: Vec<usize>,
}

fn rows_of(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

/// Out-of-fold predictions for every grid value, or `None` if some
/// training fold has a constant target.
fn repeat_predictions(x: &DMatrix<f64>, y: &[f64], grid: &AlphaGrid, fold: &[usize], k: usize, opts: LassoOptions) -> Result<Option<Vec<Vec<f64>>>> {
    let n = y.len();
    let mut oof = vec![vec![0.0; n]; grid.len()];
    for f in 0..k {
        let train: Vec<usize> = (0..n).filter(|&i| fold[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
        let ytr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        if ytr.iter().all(|&v| v == ytr[0]) {
            return Ok(None);
        }
        let s = Standardized::new(&rows_of(x, &train), &ytr)?;
        for (a, fit) in path_on(&s, &grid.alphas, opts).iter().enumerate() {
            for &i in &test {
                let row: Vec<f64> = x.row(i).iter().copied().collect();
                oof[a][i] = fit.predict_row(&row);
            }
        }
    }
    Ok(Some(oof))
}

/// Picks the grid value with the best mean out-of-fold R² over the repeats;
/// ties go to the larger penalty.
pub fn select_alpha(x: &DMatrix<f64>, y: &[f64], grid: &AlphaGrid, plan: &CvPlan, opts: LassoOptions) -> Result<CvResult> {
    if plan.n() != y.len() || x.nrows() != y.len() {
        return Err(RegressError::Shape(format!("plan covers {} rows, data has {}", plan.n(), y.len())));
    }
    if grid.is_empty() {
        return Err(RegressError::BadGrid { count: 0, ratio: grid.ratio });
    }
    let per_repeat: Vec<Option<Vec<f64>>> = plan
        .folds
        .par_iter()
        .map(|fold| {
            repeat_predictions(x, y, grid, fold, plan.k, opts)?
                .map(|oof| oof.iter().map(|pred| r2_score(y, pred)).collect::<Result<Vec<f64>>>())
                .transpose()
        })
        .collect::<Result<_>>()?;

    let dropped: Vec<usize> = (0..per_repeat.len()).filter(|&r| per_repeat[r].is_none()).collect();
    if !dropped.is_empty() {
        warn!("{} cross-validation repeats dropped: constant target in a training fold", dropped.len());
    }
    let kept: Vec<&Vec<f64>> = per_repeat.iter().flatten().collect();
    if kept.is_empty() {
        return Err(RegressError::AllRepeatsDropped);
    }
    let mean_r2: Vec<f64> =
        (0..grid.len()).map(|a| kept.iter().map(|r| r[a]).sum::<f64>() / kept.len() as f64).collect();
    let mut index = 0;
    for a in 1..mean_r2.len() {
        if mean_r2[a] > mean_r2[index] {
            index = a;
        }
    }
    Ok(CvResult { alpha: grid.alphas[index], index, mean_r2, r2: per_repeat, dropped_repeats: dropped })
}

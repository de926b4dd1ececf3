//! Seeded k-fold cross-validation over a hyperparameter grid.
//!
//! The caller supplies the grid and an evaluation closure; this module owns
//! fold construction, parallel scheduling, and winner selection so that every
//! grid search in the pipeline shares one deterministic procedure.

use crate::error::{Error, Result};
use crate::seeding::stream_rng;
use rand::Rng;
use rayon::prelude::*;

/// Scores for one grid cell across all folds.
#[derive(Debug, Clone, PartialEq)]
pub struct CvRow {
    /// Display label of the cell.
    pub cell: String,
    /// Validation MSE per fold, in fold order.
    pub fold_mse: Vec<f64>,
    pub mean_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    /// Index of the winning cell in the input grid.
    pub best_cell: usize,
    /// One row per cell, in grid order.
    pub table: Vec<CvRow>,
}

impl CvOutcome {
    /// CSV table: `cell,mean_mse,fold_0,...,fold_{k-1}`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let k = self.table.first().map_or(0, |r| r.fold_mse.len());
        write!(w, "cell,mean_mse")?;
        for f in 0..k {
            write!(w, ",fold_{f}")?;
        }
        writeln!(w)?;
        for row in &self.table {
            write!(w, "{},{}", row.cell, row.mean_mse)?;
            for m in &row.fold_mse {
                write!(w, ",{m}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Shuffle `0..n` with the given seed and cut it into `k` contiguous folds
/// whose sizes differ by at most one.
fn build_folds(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(seed, 0);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    (0..k)
        .map(|f| order[f * n / k..(f + 1) * n / k].to_vec())
        .collect()
}

/// Run k-fold cross-validation for every cell of `cells`.
///
/// `eval(cell, train, val)` must fit on the `train` indices and return the
/// mean squared error on the `val` indices. Evaluations run in parallel over
/// (cell, fold) pairs and are collected by index, so the outcome does not
/// depend on thread count. The winner minimizes mean MSE; exact ties go to
/// the cell with fewer parameters (per `params_of_cell`), then to the
/// earlier grid position.
pub fn kfold_cv_grid<C, P, F>(
    cells: &[C],
    n_samples: usize,
    k: usize,
    seed: u64,
    params_of_cell: P,
    eval: F,
) -> Result<CvOutcome>
where
    C: std::fmt::Display + Sync,
    P: Fn(&C) -> usize,
    F: Fn(&C, &[usize], &[usize]) -> Result<f64> + Sync,
{
    if cells.is_empty() {
        return Err(Error::InvalidParameter("empty hyperparameter grid".into()));
    }
    if k < 2 || k > n_samples {
        return Err(Error::InvalidParameter(format!(
            "fold count {k} must satisfy 2 <= k <= n_samples ({n_samples})"
        )));
    }

    let folds = build_folds(n_samples, k, seed);
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..k).map(move |f| (c, f)))
        .collect();
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(c, f)| {
            let val = &folds[f];
            let train: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, fold)| fold.iter().copied())
                .collect();
            eval(&cells[c], &train, val)
        })
        .collect::<Result<_>>()?;

    let table: Vec<CvRow> = cells
        .iter()
        .enumerate()
        .map(|(c, cell)| {
            let fold_mse = scores[c * k..(c + 1) * k].to_vec();
            let mean_mse = fold_mse.iter().sum::<f64>() / k as f64;
            CvRow {
                cell: cell.to_string(),
                fold_mse,
                mean_mse,
            }
        })
        .collect();

    let mut best = 0usize;
    for c in 1..table.len() {
        let (a, b) = (&table[c], &table[best]);
        let better = a.mean_mse < b.mean_mse
            || (a.mean_mse == b.mean_mse
                && params_of_cell(&cells[c]) < params_of_cell(&cells[best]));
        if better {
            best = c;
        }
    }
    Ok(CvOutcome {
        best_cell: best,
        table,
    })
}

//! Exhaustive grid search with k-fold cross-validation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::Metric;
use crate::error::{Error, Result};
use crate::par::{map_indexed, Execution};
use crate::Vector;

/// One grid cell: hyperparameter name to value.
pub type Cell = BTreeMap<String, f64>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvPlan {
    #[serde(default = "default_folds")]
    pub folds: usize,
    pub metric: Metric,
    #[serde(default)]
    pub grid: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
}

fn default_folds() -> usize {
    5
}

impl CvPlan {
    pub fn new(metric: Metric, seed: u64) -> Self {
        CvPlan {
            folds: 5,
            metric,
            grid: BTreeMap::new(),
            seed,
        }
    }

    pub fn with(mut self, name: &str, values: &[f64]) -> Self {
        self.grid.insert(name.to_string(), values.to_vec());
        self
    }

    /// Cartesian product of the grid in key order, last key fastest.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = vec![Cell::new()];
        for (name, values) in &self.grid {
            let mut next = Vec::with_capacity(cells.len() * values.len());
            for c in &cells {
                for &v in values {
                    let mut c = c.clone();
                    c.insert(name.clone(), v);
                    next.push(c);
                }
            }
            cells = next;
        }
        cells
    }
}

/// Fold index of every row: a seeded permutation, then position mod `folds`.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        out[i] = pos % folds;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldScore {
    pub cell: usize,
    pub fold: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CvResult {
    pub best: Cell,
    pub best_index: usize,
    pub cells: Vec<Cell>,
    /// mean fold score per cell
    pub mean_scores: Vec<f64>,
    /// in (cell, fold) order
    pub table: Vec<FoldScore>,
}

/// Selects the grid cell with the best mean fold score of `plan.metric`.
///
/// `fit` trains on the given row indices; `predict` returns predictions for
/// the held-out indices, scored against `y`. A failing cell scores as the
/// worst value of the metric. Ties go to the earliest cell in grid order.
pub fn cross_validate<M, F, P>(y: &Vector, plan: &CvPlan, exec: Execution, fit: F, predict: P) -> Result<CvResult>
where
    F: Fn(&Cell, &[usize]) -> Result<M> + Sync,
    P: Fn(&M, &[usize]) -> Result<Vector> + Sync,
{
    if plan.folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {}", plan.folds)));
    }
    let cells = plan.cells();
    if plan.grid.values().any(|v| v.is_empty()) {
        return Err(Error::Config("empty hyperparameter list".into()));
    }
    let n = y.len();
    if n < plan.folds {
        return Err(Error::DegenerateBatch(format!(
            "{n} rows cannot fill {} folds",
            plan.folds
        )));
    }
    let assign = fold_assignment(n, plan.folds, plan.seed);
    let split = |f: usize| -> (Vec<usize>, Vec<usize>) {
        (0..n).partition(|&i| assign[i] != f)
    };
    let jobs = cells.len() * plan.folds;
    let metric = plan.metric;
    let scores = map_indexed(exec, jobs, |j| {
        let (c, f) = (j / plan.folds, j % plan.folds);
        let (train, valid) = split(f);
        let run = || -> Result<f64> {
            let model = fit(&cells[c], &train)?;
            let pred = predict(&model, &valid)?;
            let truth: Vec<f64> = valid.iter().map(|&i| y[i]).collect();
            metric.eval(pred.as_slice(), &truth)
        };
        match run() {
            Ok(s) if s.is_finite() => s,
            Ok(_) => metric.worst(),
            Err(e) => {
                log::debug!("cv cell {c} fold {f} failed: {e}");
                metric.worst()
            }
        }
    });
    let table: Vec<FoldScore> = scores
        .iter()
        .enumerate()
        .map(|(j, &score)| FoldScore {
            cell: j / plan.folds,
            fold: j % plan.folds,
            score,
        })
        .collect();
    let mean_scores: Vec<f64> = (0..cells.len())
        .map(|c| {
            let s = &scores[c * plan.folds..(c + 1) * plan.folds];
            if s.iter().any(|v| !v.is_finite()) {
                metric.worst()
            } else {
                s.iter().sum::<f64>() / plan.folds as f64
            }
        })
        .collect();
    let mut best_index = 0;
    for c in 1..cells.len() {
        if metric.better(mean_scores[c], mean_scores[best_index]) {
            best_index = c;
        }
    }
    Ok(CvResult {
        best: cells[best_index].clone(),
        best_index,
        cells,
        mean_scores,
        table,
    })
}

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cutting_plane::{cutting_plane_train, mean_training_loss, TrainConfig, TrainingExample};
use crate::error::{Error, Result};
use crate::instance::{QueryInstance, WeightVector};
use crate::metrics;
use crate::model;

/// `10^-4, 10^-3, ..., 10^3`.
pub fn default_c_grid() -> Vec<f64> {
    (-4..=3).map(|e| 10f64.powi(e)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub c: f64,
    pub train_loss: f64,
    /// Mean normalized measure on the validation queries; `None` when no
    /// validation query is usable.
    pub validation_score: Option<f64>,
    pub outer_iterations: usize,
    pub truncated: bool,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub best_index: usize,
    pub weights: Vec<WeightVector>,
}

impl SweepReport {
    pub fn best(&self) -> (&SweepRow, &WeightVector) {
        (&self.rows[self.best_index], &self.weights[self.best_index])
    }
}

/// Mean normalized measure of greedy predictions, skipping degenerate
/// queries. `None` if every query is degenerate.
pub fn mean_dcem(
    w: &WeightVector,
    queries: &[QueryInstance],
    params: &crate::instance::MeasureParams,
) -> Result<Option<f64>> {
    let scores: Vec<Option<f64>> = queries
        .par_iter()
        .map(|q| {
            let y = model::predict(w, q, params.cutoff)?;
            match metrics::dcem(&y, q, params) {
                Ok(s) => Ok(Some(s)),
                Err(Error::DegenerateQuery { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let used: Vec<f64> = scores.into_iter().flatten().collect();
    if used.is_empty() {
        return Ok(None);
    }
    Ok(Some(used.iter().sum::<f64>() / used.len() as f64))
}

/// Trains once per `C` in `grid` and picks the value with the best mean
/// validation measure (first one wins ties). Without usable validation
/// queries the lowest training loss decides.
pub fn c_sweep(
    train: &[TrainingExample<'_>],
    validation: &[QueryInstance],
    grid: &[f64],
    cfg: &TrainConfig,
) -> Result<SweepReport> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut rows = Vec::with_capacity(grid.len());
    let mut weights = Vec::with_capacity(grid.len());
    for &c in grid {
        let cfg_c = TrainConfig { c, ..*cfg };
        let outcome = cutting_plane_train(train, &cfg_c)?;
        let train_loss = mean_training_loss(&outcome.weights, train, &cfg.measure)?;
        let validation_score = mean_dcem(&outcome.weights, validation, &cfg.measure)?;
        rows.push(SweepRow {
            c,
            train_loss,
            validation_score,
            outer_iterations: outcome.stats.outer_iterations,
            truncated: outcome.stats.truncated,
        });
        weights.push(outcome.weights);
    }
    let mut best_index = 0;
    for (i, row) in rows.iter().enumerate().skip(1) {
        let best = &rows[best_index];
        let better = match (row.validation_score, best.validation_score) {
            (Some(a), Some(b)) => a > b,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => row.train_loss < best.train_loss,
        };
        if better {
            best_index = i;
        }
    }
    Ok(SweepReport {
        rows,
        best_index,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spans_eight_decades() {
        let g = default_c_grid();
        assert_eq!(g.len(), 8);
        assert!((g[0] - 1e-4).abs() < 1e-18);
        assert!((g[7] - 1e3).abs() < 1e-9);
    }

    #[test]
    fn empty_grid_rejected() {
        let err = c_sweep(&[], &[], &[], &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::EmptyGrid));
    }
}

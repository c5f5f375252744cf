//! Relevance-only and maximal-marginal-relevance rankers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::greedy::{greedy_select_with, GreedyObjective};
use crate::instance::{MeasureParams, QueryInstance, Ranking};
use crate::metrics;

/// Channel used as dissimilarity for MMR unless configured otherwise.
pub const DEFAULT_MMR_CHANNEL: usize = 1;

/// Per-document score used by both baselines: the mean relevance feature.
pub fn relevance_scores(q: &QueryInstance) -> Vec<f64> {
    q.docs
        .iter()
        .map(|d| {
            let f = &d.relevance_features;
            if f.is_empty() {
                0.0
            } else {
                f.iter().sum::<f64>() / f.len() as f64
            }
        })
        .collect()
}

/// Sorts by descending score, ties to the lower index.
pub fn relevance_rank(scores: &[f64], k: usize) -> Ranking {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    Ranking::from_vec_unchecked(order)
}

struct Mmr<'a, S> {
    scores: &'a [f64],
    sim: S,
    lambda: f64,
    max_sim: Vec<f64>,
}

impl<S: Fn(usize, usize) -> f64> GreedyObjective for Mmr<'_, S> {
    fn gain(&mut self, prefix: &[usize], cand: usize) -> f64 {
        if prefix.is_empty() {
            return self.scores[cand];
        }
        self.lambda * self.scores[cand] - (1.0 - self.lambda) * self.max_sim[cand]
    }

    fn commit(&mut self, _prefix: &[usize], chosen: usize) {
        for (d, m) in self.max_sim.iter_mut().enumerate() {
            *m = m.max((self.sim)(d, chosen));
        }
    }
}

/// Greedy MMR. The first pick is the top score; each later step adds the
/// document maximizing `lambda * score - (1 - lambda) * max sim to the
/// selected ones`. Ties go to the lower index.
pub fn mmr_rank<S>(scores: &[f64], sim: S, lambda: f64, k: usize) -> Result<Ranking>
where
    S: Fn(usize, usize) -> f64,
{
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!("lambda {lambda} outside [0, 1]")));
    }
    let mut obj = Mmr {
        scores,
        sim,
        lambda,
        max_sim: vec![f64::NEG_INFINITY; scores.len()],
    };
    Ok(greedy_select_with(scores.len(), k, &mut obj))
}

fn check_channel(q: &QueryInstance, channel: usize) -> Result<()> {
    if channel >= q.diversity_dim() {
        return Err(Error::InvalidParameter(format!(
            "similarity channel {channel} out of range for {} channels",
            q.diversity_dim()
        )));
    }
    Ok(())
}

/// MMR on a query, similarity being `1 - pairwise[channel]`.
pub fn mmr_rank_query(q: &QueryInstance, lambda: f64, channel: usize, k: usize) -> Result<Ranking> {
    check_channel(q, channel)?;
    let scores = relevance_scores(q);
    mmr_rank(&scores, |i, j| 1.0 - q.pairwise.get(i, j, channel), lambda, k)
}

/// `0, 0.1, ..., 1`.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaTuning {
    pub lambda: f64,
    /// `(lambda, mean score)` for every grid point; the mean is `None` when
    /// no query was usable.
    pub grid: Vec<(f64, Option<f64>)>,
}

/// Picks the grid value with the best mean measure over `queries` (first
/// wins ties). Degenerate queries are skipped.
pub fn tune_lambda(
    queries: &[QueryInstance],
    grid: &[f64],
    channel: usize,
    params: &MeasureParams,
) -> Result<LambdaTuning> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    for q in queries {
        check_channel(q, channel)?;
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let scores: Vec<Option<f64>> = queries
            .par_iter()
            .map(|q| {
                let y = mmr_rank_query(q, lambda, channel, params.cutoff)?;
                match metrics::dcem(&y, q, params) {
                    Ok(s) => Ok(Some(s)),
                    Err(Error::DegenerateQuery { .. }) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<_>>()?;
        let used: Vec<f64> = scores.into_iter().flatten().collect();
        let mean = (!used.is_empty()).then(|| used.iter().sum::<f64>() / used.len() as f64);
        rows.push((lambda, mean));
    }
    let mut best = 0;
    for (i, &(_, m)) in rows.iter().enumerate() {
        if let Some(m) = m {
            if rows[best].1.is_none_or(|b| m > b) {
                best = i;
            }
        }
    }
    Ok(LambdaTuning {
        lambda: rows[best].0,
        grid: rows,
    })
}

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::qp::{solve_restricted_qp, Constraint, WorkingSet};
use crate::error::{Error, Result};
use crate::greedy;
use crate::instance::{MeasureParams, QueryInstance, Ranking, WeightVector};
use crate::metrics;
use crate::model::{self, dot, joint_feature_map, ScoreTable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub c: f64,
    pub epsilon: f64,
    pub max_outer_iters: usize,
    pub qp_tol: f64,
    /// Constraints whose multiplier stays zero this many consecutive
    /// re-solves are dropped.
    pub prune_after: usize,
    pub measure: MeasureParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            epsilon: 1e-3,
            max_outer_iters: 200,
            qp_tol: 1e-8,
            prune_after: 50,
            measure: MeasureParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.measure.validate()?;
        if !(self.c > 0.0) || !(self.epsilon > 0.0) || !(self.qp_tol > 0.0) {
            return Err(Error::InvalidParameter(
                "C, epsilon and qp tolerance must be positive".into(),
            ));
        }
        if self.max_outer_iters == 0 || self.prune_after == 0 {
            return Err(Error::InvalidParameter(
                "max_outer_iters and prune_after must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A query paired with its greedy target ranking.
#[derive(Debug, Clone)]
pub struct TrainingExample<'a> {
    pub query: &'a QueryInstance,
    pub target: Ranking,
    /// `Psi(x, target)` flattened.
    pub target_psi: Vec<f64>,
    /// Raw measure value of the target; the loss normalizer.
    pub ideal_raw: f64,
}

impl<'a> TrainingExample<'a> {
    pub fn new(query: &'a QueryInstance, target: Ranking, params: &MeasureParams) -> Result<Self> {
        let ideal_raw = metrics::raw_dcem(&target, &query.judgments, params)?;
        if ideal_raw <= 0.0 {
            return Err(Error::DegenerateQuery {
                query_id: query.query_id.clone(),
            });
        }
        let target_psi = joint_feature_map(query, &target)?.to_flat();
        Ok(Self {
            query,
            target,
            target_psi,
            ideal_raw,
        })
    }
}

/// Builds greedy targets for every query. Degenerate queries are skipped
/// and their ids returned.
pub fn prepare_examples<'a>(
    queries: &'a [QueryInstance],
    params: &MeasureParams,
) -> Result<(Vec<TrainingExample<'a>>, Vec<String>)> {
    let built: Vec<Result<Option<TrainingExample<'a>>>> = queries
        .par_iter()
        .map(|q| match greedy::build_target(q, params) {
            Ok(target) => TrainingExample::new(q, target, params).map(Some),
            Err(Error::DegenerateQuery { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect();
    let mut examples = Vec::with_capacity(queries.len());
    let mut skipped = Vec::new();
    for (q, b) in queries.iter().zip(built) {
        match b? {
            Some(ex) => examples.push(ex),
            None => skipped.push(q.query_id.clone()),
        }
    }
    Ok((examples, skipped))
}

/// `Delta(target, y) + w . Psi(x, y) - w . Psi(x, target)`.
pub fn hinge(
    w: &WeightVector,
    example: &TrainingExample<'_>,
    y: &Ranking,
    params: &MeasureParams,
) -> Result<f64> {
    w.check_dims(example.query.relevance_dim(), example.query.diversity_dim())?;
    let loss = metrics::dcem_loss(example.ideal_raw, y, example.query, params)?;
    let psi = joint_feature_map(example.query, y)?.to_flat();
    let flat = w.to_flat();
    Ok(loss + dot(&flat, &psi) - dot(&flat, &example.target_psi))
}

/// Mean loss of greedy predictions against the targets.
pub fn mean_training_loss(
    w: &WeightVector,
    examples: &[TrainingExample<'_>],
    params: &MeasureParams,
) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let losses: Result<Vec<f64>> = examples
        .par_iter()
        .map(|ex| {
            let y = model::predict(w, ex.query, params.cutoff)?;
            metrics::dcem_loss(ex.ideal_raw, &y, ex.query, params)
        })
        .collect();
    Ok(losses?.iter().sum::<f64>() / examples.len() as f64)
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub dual: f64,
    pub constraints: usize,
    pub added: usize,
    pub mean_loss: f64,
    pub qp_updates: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub outer_iterations: usize,
    pub constraints_added: usize,
    pub active_constraints: usize,
    pub final_objective: f64,
    pub final_slacks: Vec<f64>,
    pub iterations: Vec<IterationRecord>,
    /// Set when the outer-iteration cap stopped training before
    /// convergence.
    pub truncated: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: WeightVector,
    pub stats: TrainStats,
}

pub fn cutting_plane_train(examples: &[TrainingExample<'_>], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cutting_plane_train_with(examples, cfg, |_| {})
}

/// Cutting-plane training. Each outer iteration finds, for every example
/// in parallel under the current weights, the approximately most violated
/// ranking; those violated by more than `epsilon` beyond the example's
/// slack join its working set, then the QP is re-solved once. Training
/// stops when an iteration adds nothing. `on_iteration` receives every
/// log record as it is produced.
pub fn cutting_plane_train_with<F>(
    examples: &[TrainingExample<'_>],
    cfg: &TrainConfig,
    mut on_iteration: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&IterationRecord),
{
    cfg.validate()?;
    let Some(first) = examples.first() else {
        return Err(Error::InvalidParameter("no training examples".into()));
    };
    let rel_dim = first.query.relevance_dim();
    let div_dim = first.query.diversity_dim();
    let dim = rel_dim + div_dim;
    for ex in examples {
        if ex.target_psi.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "joint feature dimension",
                expected: dim,
                actual: ex.target_psi.len(),
            });
        }
    }
    let params = &cfg.measure;

    let mut working = WorkingSet::new(examples.len());
    let mut w_flat = vec![0.0; dim];
    let mut stats = TrainStats::default();
    let mut converged = false;

    for iteration in 1..=cfg.max_outer_iters {
        let weights = WeightVector::from_flat(&w_flat, rel_dim);
        let found: Vec<Result<(Ranking, f64, Vec<f64>, f64)>> = examples
            .par_iter()
            .map(|ex| {
                let table = ScoreTable::new(&weights, ex.query)?;
                let augmented = model::loss_augmented_with_table(
                    &table,
                    ex.query,
                    params,
                    ex.ideal_raw,
                    params.cutoff,
                    1.0,
                );
                let predicted = model::predict_with_table(&table, params.cutoff);
                let mut best: Option<(Ranking, f64, Vec<f64>, f64)> = None;
                for y_hat in [augmented, predicted] {
                    let loss = metrics::dcem_loss(ex.ideal_raw, &y_hat, ex.query, params)?;
                    let psi = joint_feature_map(ex.query, &y_hat)?.to_flat();
                    let h = loss + dot(&w_flat, &psi) - dot(&w_flat, &ex.target_psi);
                    if best.as_ref().is_none_or(|b| h > b.1) {
                        best = Some((y_hat, h, psi, loss));
                    }
                }
                Ok(best.expect("two candidates"))
            })
            .collect();

        let mut added = 0;
        for (i, res) in found.into_iter().enumerate() {
            let (y_hat, h, psi, loss) = res?;
            let xi = working.slack(i, &w_flat);
            if h > xi + cfg.epsilon {
                let constraint = Constraint::new(y_hat, psi, &examples[i].target_psi, loss);
                if working.add(i, constraint) {
                    added += 1;
                }
            }
        }
        stats.outer_iterations = iteration;
        if added == 0 {
            converged = true;
            break;
        }
        stats.constraints_added += added;

        let solution = solve_restricted_qp(&mut working, cfg.c, dim, cfg.qp_tol)?;
        w_flat.clone_from(&solution.w);
        working.prune(cfg.prune_after);

        let mean_loss =
            mean_training_loss(&WeightVector::from_flat(&w_flat, rel_dim), examples, params)?;
        let record = IterationRecord {
            iteration,
            objective: solution.primal,
            dual: solution.dual,
            constraints: working.total(),
            added,
            mean_loss,
            qp_updates: solution.iterations,
        };
        debug!(
            "iter {iteration}: objective {:.6} constraints {} added {added} mean loss {mean_loss:.4}",
            record.objective, record.constraints
        );
        on_iteration(&record);
        stats.iterations.push(record);
    }

    stats.truncated = !converged;
    stats.active_constraints = working.total();
    stats.final_slacks = (0..examples.len()).map(|i| working.slack(i, &w_flat)).collect();
    let budget = cfg.c / examples.len() as f64;
    stats.final_objective =
        0.5 * dot(&w_flat, &w_flat) + budget * stats.final_slacks.iter().sum::<f64>();
    Ok(TrainOutcome {
        weights: WeightVector::from_flat(&w_flat, rel_dim),
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{DocumentRecord, Measure, PairwiseTensor, SubtopicJudgments};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Relevance feature 0 flags relevant docs, channel 0 flags pairs with
    /// different topics; the remaining columns are noise.
    fn clean_query(rng: &mut ChaCha8Rng, id: usize, n: usize, m: usize) -> QueryInstance {
        let topic: Vec<Option<usize>> = (0..n)
            .map(|i| {
                if i == 0 || rng.random_bool(0.5) {
                    Some(if rng.random_bool(0.5) { 0 } else { rng.random_range(0..m) })
                } else {
                    None
                }
            })
            .collect();
        let docs = (0..n)
            .map(|i| {
                let flag = if topic[i].is_some() { 1.0 } else { 0.0 };
                DocumentRecord::new(format!("d{i}"), vec![flag, rng.random(), rng.random()])
            })
            .collect();
        let mut pairwise = PairwiseTensor::zeros(n, 2);
        for i in 0..n {
            for j in i + 1..n {
                let differs = topic[i] != topic[j];
                pairwise.set_symmetric(i, j, 0, if differs { 1.0 } else { 0.0 });
                pairwise.set_symmetric(i, j, 1, rng.random());
            }
        }
        let rel = (0..m)
            .map(|t| topic.iter().map(|&x| x == Some(t)).collect())
            .collect();
        QueryInstance {
            query_id: format!("q{id}"),
            docs,
            pairwise,
            judgments: SubtopicJudgments::uniform(rel),
        }
    }

    fn params(measure: Measure) -> MeasureParams {
        MeasureParams {
            cutoff: 5,
            ..MeasureParams::with_measure(measure)
        }
    }

    #[test]
    fn no_examples_is_an_error() {
        assert!(cutting_plane_train(&[], &TrainConfig::default()).is_err());
    }

    #[test]
    fn converged_run_leaves_nothing_violated() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let queries: Vec<_> = (0..12).map(|i| clean_query(&mut rng, i, 12, 3)).collect();
        for measure in Measure::ALL {
            let p = params(measure);
            let (examples, skipped) = prepare_examples(&queries, &p).unwrap();
            assert!(skipped.is_empty());
            let cfg = TrainConfig {
                c: 10.0,
                measure: p,
                ..TrainConfig::default()
            };
            let out = cutting_plane_train(&examples, &cfg).unwrap();
            assert!(!out.stats.truncated);
            let w = &out.weights;
            for (i, ex) in examples.iter().enumerate() {
                let table = ScoreTable::new(w, ex.query).unwrap();
                let y = model::loss_augmented_with_table(&table, ex.query, &p, ex.ideal_raw, p.cutoff, 1.0);
                let h = hinge(w, ex, &y, &p).unwrap();
                assert!(h <= out.stats.final_slacks[i] + cfg.epsilon + 1e-9, "{measure}: {h}");
            }
            for pair in out.stats.iterations.windows(2) {
                assert!(pair[1].iteration == pair[0].iteration + 1);
            }
        }
    }

    #[test]
    fn separable_data_is_fit_with_large_c() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let queries: Vec<_> = (0..20).map(|i| clean_query(&mut rng, i, 15, 4)).collect();
        let p = params(Measure::ErrIa);
        let (examples, _) = prepare_examples(&queries, &p).unwrap();
        let cfg = TrainConfig {
            c: 1000.0,
            measure: p,
            ..TrainConfig::default()
        };
        let out = cutting_plane_train(&examples, &cfg).unwrap();
        let loss = mean_training_loss(&out.weights, &examples, &p).unwrap();
        assert!(loss < 0.05, "loss {loss}");
        let untrained = mean_training_loss(&WeightVector::zeros(3, 2), &examples, &p).unwrap();
        assert!(untrained > loss);
    }

    #[test]
    fn callback_sees_every_record() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let queries: Vec<_> = (0..6).map(|i| clean_query(&mut rng, i, 10, 3)).collect();
        let p = params(Measure::Nrbp);
        let (examples, _) = prepare_examples(&queries, &p).unwrap();
        let cfg = TrainConfig {
            measure: p,
            ..TrainConfig::default()
        };
        let mut seen = Vec::new();
        let out = cutting_plane_train_with(&examples, &cfg, |r| seen.push(r.clone())).unwrap();
        assert_eq!(seen, out.stats.iterations);
        assert!(out.stats.final_objective >= 0.0);
    }
}

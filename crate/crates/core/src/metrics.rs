//! Cascade diversity measures (alpha-NDCG, ERR-IA, NRBP), the loss derived
//! from them, and the intent-aware auxiliary measures.
//!
//! All three cascade measures share one form:
//!
//! ```text
//! S = sum_i p_i sum_k g_i^k (1 - alpha)^{c_i^k} * disc(k)
//! ```
//!
//! where `c_i^k` counts the documents ranked above `k` that are relevant to
//! subtopic `i`, and `disc(k)` is `1/log2(k+1)` (alpha-NDCG), `1/k`
//! (ERR-IA) or `beta^(k-1)` (NRBP). Scores here are unnormalized unless the
//! function name says otherwise.

use crate::error::{Error, Result};
use crate::greedy;
use crate::instance::{Measure, MeasureParams, QueryInstance, Ranking, SubtopicJudgments};

/// Positional multiplier applied to the gain at 1-based rank `k`.
#[inline]
pub fn discount(params: &MeasureParams, k: usize) -> f64 {
    debug_assert!(k >= 1);
    match params.measure {
        Measure::AlphaNdcg => 1.0 / ((k + 1) as f64).log2(),
        Measure::ErrIa => 1.0 / k as f64,
        Measure::Nrbp => params.beta.powi(k as i32 - 1),
    }
}

/// Incremental cascade evaluation of a growing ranking.
///
/// Invariant: `counts[i]` is the number of ranked documents relevant to
/// subtopic `i`, and `len()` is the number of ranked documents.
#[derive(Debug, Clone)]
pub struct CascadeState {
    counts: Vec<u32>,
    ranked: Vec<bool>,
    len: usize,
    score: f64,
}

impl CascadeState {
    pub fn new(judgments: &SubtopicJudgments, num_docs: usize) -> Self {
        Self {
            counts: vec![0; judgments.num_subtopics()],
            ranked: vec![false; num_docs],
            len: 0,
            score: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Raw score of the documents appended so far.
    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn is_ranked(&self, doc: usize) -> bool {
        self.ranked.get(doc).copied().unwrap_or(false)
    }

    /// Gain from appending `doc` at the next position, without checks.
    #[inline]
    pub(crate) fn gain_unchecked(
        &self,
        doc: usize,
        judgments: &SubtopicJudgments,
        params: &MeasureParams,
    ) -> f64 {
        let keep = 1.0 - params.alpha;
        let mut novelty = 0.0;
        for (i, (&p, row)) in judgments.probs.iter().zip(&judgments.rel).enumerate() {
            if row[doc] {
                novelty += p * keep.powi(self.counts[i] as i32);
            }
        }
        if novelty == 0.0 {
            0.0
        } else {
            novelty * discount(params, self.len + 1)
        }
    }

    /// Increase in raw score if `doc` were appended next. O(M).
    pub fn marginal_gain(
        &self,
        doc: usize,
        judgments: &SubtopicJudgments,
        params: &MeasureParams,
    ) -> Result<f64> {
        self.check_candidate(doc)?;
        Ok(self.gain_unchecked(doc, judgments, params))
    }

    /// Appends `doc`, returning its gain.
    pub fn push(
        &mut self,
        doc: usize,
        judgments: &SubtopicJudgments,
        params: &MeasureParams,
    ) -> Result<f64> {
        self.check_candidate(doc)?;
        Ok(self.push_unchecked(doc, judgments, params))
    }

    pub(crate) fn push_unchecked(
        &mut self,
        doc: usize,
        judgments: &SubtopicJudgments,
        params: &MeasureParams,
    ) -> f64 {
        let gain = self.gain_unchecked(doc, judgments, params);
        for (i, row) in judgments.rel.iter().enumerate() {
            if row[doc] {
                self.counts[i] += 1;
            }
        }
        self.ranked[doc] = true;
        self.len += 1;
        self.score += gain;
        gain
    }

    fn check_candidate(&self, doc: usize) -> Result<()> {
        match self.ranked.get(doc) {
            None => Err(Error::InvalidRanking(format!(
                "index {doc} out of range (n={})",
                self.ranked.len()
            ))),
            Some(true) => Err(Error::InvalidRanking(format!("document {doc} already ranked"))),
            Some(false) => Ok(()),
        }
    }
}

fn num_docs(judgments: &SubtopicJudgments) -> usize {
    judgments.rel.first().map_or(0, Vec::len)
}

/// Unnormalized cascade score of `ranking`, evaluated over its first
/// `params.cutoff` positions.
pub fn raw_dcem(
    ranking: &Ranking,
    judgments: &SubtopicJudgments,
    params: &MeasureParams,
) -> Result<f64> {
    let n = num_docs(judgments);
    ranking.check(n)?;
    let mut state = CascadeState::new(judgments, n);
    for &d in ranking.iter().take(params.cutoff) {
        state.push_unchecked(d, judgments, params);
    }
    Ok(state.score())
}

/// Raw score of the greedily built ideal ranking; the normalizer `N`.
/// Zero iff no document is relevant to a subtopic with positive probability.
pub fn ideal_raw_dcem(q: &QueryInstance, params: &MeasureParams) -> f64 {
    let ideal = greedy::greedy_ideal(q, params);
    raw_dcem(&ideal, &q.judgments, params).expect("greedy ideal is a valid ranking")
}

/// Normalized measure in `[0, 1]`.
pub fn dcem(ranking: &Ranking, q: &QueryInstance, params: &MeasureParams) -> Result<f64> {
    let ideal = ideal_raw_dcem(q, params);
    if ideal <= 0.0 {
        return Err(Error::DegenerateQuery {
            query_id: q.query_id.clone(),
        });
    }
    let raw = raw_dcem(ranking, &q.judgments, params)?;
    Ok((raw / ideal).clamp(0.0, 1.0))
}

/// `1 - DCEM(ranking) / DCEM(target)`, clamped to `[0, 1]`.
pub fn dcem_loss(
    ideal_score_raw: f64,
    ranking: &Ranking,
    q: &QueryInstance,
    params: &MeasureParams,
) -> Result<f64> {
    if ideal_score_raw <= 0.0 {
        return Err(Error::DegenerateQuery {
            query_id: q.query_id.clone(),
        });
    }
    let raw = raw_dcem(ranking, &q.judgments, params)?;
    Ok((1.0 - raw / ideal_score_raw).clamp(0.0, 1.0))
}

/// Intent-aware precision: mean over subtopics of the fraction of the top
/// `cutoff` positions relevant to that subtopic.
pub fn precision_ia(ranking: &Ranking, judgments: &SubtopicJudgments, cutoff: usize) -> f64 {
    let m = judgments.num_subtopics();
    if m == 0 || cutoff == 0 {
        return 0.0;
    }
    let top = &ranking.as_slice()[..cutoff.min(ranking.len())];
    let total: usize = judgments
        .rel
        .iter()
        .map(|row| top.iter().filter(|&&d| row.get(d).copied().unwrap_or(false)).count())
        .sum();
    total as f64 / (m as f64 * cutoff as f64)
}

/// Fraction of subtopics covered by at least one of the top `cutoff` docs.
pub fn subtopic_recall(ranking: &Ranking, judgments: &SubtopicJudgments, cutoff: usize) -> f64 {
    let m = judgments.num_subtopics();
    if m == 0 {
        return 0.0;
    }
    let top = &ranking.as_slice()[..cutoff.min(ranking.len())];
    let covered = judgments
        .rel
        .iter()
        .filter(|row| top.iter().any(|&d| row.get(d).copied().unwrap_or(false)))
        .count();
    covered as f64 / m as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{DocumentRecord, PairwiseTensor};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(measure: Measure) -> MeasureParams {
        MeasureParams::with_measure(measure)
    }

    fn query(judgments: SubtopicJudgments) -> QueryInstance {
        let n = judgments.rel[0].len();
        QueryInstance {
            query_id: "q".into(),
            docs: (0..n).map(|i| DocumentRecord::new(format!("d{i}"), vec![])).collect(),
            pairwise: PairwiseTensor::zeros(n, 0),
            judgments,
        }
    }

    // Direct evaluation: count c_i^k from scratch at every position.
    fn brute_raw(ranking: &[usize], j: &SubtopicJudgments, p: &MeasureParams) -> f64 {
        let mut s = 0.0;
        for (i, row) in j.rel.iter().enumerate() {
            for (pos, &d) in ranking.iter().enumerate() {
                if !row[d] {
                    continue;
                }
                let c = ranking[..pos].iter().filter(|&&u| row[u]).count();
                let k = (pos + 1) as f64;
                let denom = match p.measure {
                    Measure::AlphaNdcg => (k + 1.0).ln() / 2f64.ln(),
                    Measure::ErrIa => k,
                    Measure::Nrbp => (1.0 / p.beta).powf(k - 1.0),
                };
                s += j.probs[i] * (1.0 - p.alpha).powf(c as f64) / denom;
            }
        }
        s
    }

    #[test]
    fn empty_ranking_scores_zero() {
        let j = SubtopicJudgments::uniform(vec![vec![true, false]]);
        for m in Measure::ALL {
            assert_eq!(raw_dcem(&Ranking::empty(), &j, &params(m)).unwrap(), 0.0);
        }
    }

    #[test]
    fn single_relevant_doc_err_ia() {
        let j = SubtopicJudgments::uniform(vec![vec![true]]);
        let r = Ranking::new(vec![0], 1).unwrap();
        assert_eq!(raw_dcem(&r, &j, &params(Measure::ErrIa)).unwrap(), 1.0);
        let q = query(j);
        assert_eq!(ideal_raw_dcem(&q, &params(Measure::ErrIa)), 1.0);
    }

    #[test]
    fn two_docs_same_subtopic_alpha_ndcg() {
        let j = SubtopicJudgments::uniform(vec![vec![true, true], vec![false, false]]);
        let r = Ranking::new(vec![0, 1], 2).unwrap();
        let got = raw_dcem(&r, &j, &params(Measure::AlphaNdcg)).unwrap();
        let expected = 0.5 * (1.0 / 2f64.log2() + 0.5 / 3f64.log2());
        assert_abs_diff_eq!(got, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(got, 0.6577, epsilon = 1e-4);
        // The ideal on this instance is the same ranking (both docs are
        // interchangeable), so the loss is 0.
        let q = query(j);
        let ideal = ideal_raw_dcem(&q, &params(Measure::AlphaNdcg));
        assert_abs_diff_eq!(ideal, expected, epsilon = 1e-15);
        let loss = dcem_loss(ideal, &r, &q, &params(Measure::AlphaNdcg)).unwrap();
        assert_abs_diff_eq!(loss, 1.0 - got / ideal, epsilon = 1e-15);
    }

    #[test]
    fn invalid_rankings_rejected() {
        let j = SubtopicJudgments::uniform(vec![vec![true, false, true]]);
        let p = params(Measure::ErrIa);
        let dup = Ranking::from_vec_unchecked(vec![0, 0]);
        assert!(matches!(raw_dcem(&dup, &j, &p), Err(Error::InvalidRanking(_))));
        let oob = Ranking::from_vec_unchecked(vec![3]);
        assert!(matches!(raw_dcem(&oob, &j, &p), Err(Error::InvalidRanking(_))));
    }

    #[test]
    fn zero_relevant_docs() {
        let q = query(SubtopicJudgments::uniform(vec![vec![false; 4]]));
        let p = params(Measure::ErrIa);
        assert_eq!(ideal_raw_dcem(&q, &p), 0.0);
        let r = Ranking::new(vec![0, 1], 4).unwrap();
        assert!(matches!(dcem(&r, &q, &p), Err(Error::DegenerateQuery { .. })));
        assert!(matches!(dcem_loss(0.0, &r, &q, &p), Err(Error::DegenerateQuery { .. })));
    }

    #[test]
    fn dcem_bounds_and_ideal() {
        let q = query(SubtopicJudgments::uniform(vec![
            vec![true, false, false, true],
            vec![false, true, false, false],
        ]));
        let p = params(Measure::ErrIa);
        let ideal = greedy::greedy_ideal(&q, &p);
        assert_eq!(dcem(&ideal, &q, &p).unwrap(), 1.0);
        let ideal_raw = ideal_raw_dcem(&q, &p);
        assert_eq!(dcem_loss(ideal_raw, &ideal, &q, &p).unwrap(), 0.0);
        let junk = Ranking::new(vec![2], 4).unwrap();
        assert_eq!(dcem(&junk, &q, &p).unwrap(), 0.0);
        assert_eq!(dcem_loss(ideal_raw, &junk, &q, &p).unwrap(), 1.0);
    }

    #[test]
    fn marginal_gain_cases() {
        let j = SubtopicJudgments::uniform(vec![vec![true, false]]);
        let p = params(Measure::ErrIa);
        let mut state = CascadeState::new(&j, 2);
        assert_eq!(state.marginal_gain(1, &j, &p).unwrap(), 0.0);
        assert_eq!(state.marginal_gain(0, &j, &p).unwrap(), 1.0);
        state.push(0, &j, &p).unwrap();
        assert!(matches!(state.marginal_gain(0, &j, &p), Err(Error::InvalidRanking(_))));
        assert!(matches!(state.marginal_gain(5, &j, &p), Err(Error::InvalidRanking(_))));
    }

    fn random_judgments(rng: &mut ChaCha8Rng, n: usize, m: usize) -> SubtopicJudgments {
        let rel: Vec<Vec<bool>> = (0..m)
            .map(|_| (0..n).map(|_| rng.random_bool(0.4)).collect())
            .collect();
        let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        SubtopicJudgments {
            probs: raw.iter().map(|x| x / total).collect(),
            rel,
        }
    }

    #[test]
    fn incremental_matches_full_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut max_diff: f64 = 0.0;
        for _ in 0..100 {
            let n = rng.random_range(1..=12);
            let m = rng.random_range(1..=5);
            let j = random_judgments(&mut rng, n, m);
            for measure in Measure::ALL {
                let p = MeasureParams {
                    measure,
                    alpha: rng.random_range(0.05..=1.0),
                    beta: rng.random_range(0.05..0.95),
                    cutoff: 20,
                };
                let mut order: Vec<usize> = (0..n).collect();
                for i in (1..n).rev() {
                    order.swap(i, rng.random_range(0..=i));
                }
                let mut state = CascadeState::new(&j, n);
                for k in 0..n {
                    let gain = state.marginal_gain(order[k], &j, &p).unwrap();
                    let before = brute_raw(&order[..k], &j, &p);
                    let after = brute_raw(&order[..=k], &j, &p);
                    max_diff = max_diff.max((gain - (after - before)).abs());
                    state.push(order[k], &j, &p).unwrap();
                    max_diff = max_diff.max((state.score() - after).abs());
                }
            }
        }
        assert!(max_diff < 1e-12, "max diff {max_diff}");
    }

    #[test]
    fn precision_ia_examples() {
        let j = SubtopicJudgments::uniform(vec![vec![true, false], vec![false, false]]);
        let r = Ranking::new(vec![0, 1], 2).unwrap();
        assert_abs_diff_eq!(precision_ia(&r, &j, 2), 0.25, epsilon = 1e-15);

        let all = SubtopicJudgments::uniform(vec![vec![true; 3], vec![true; 3]]);
        let r3 = Ranking::new(vec![2, 0, 1], 3).unwrap();
        assert_eq!(precision_ia(&r3, &all, 3), 1.0);
        let none = SubtopicJudgments::uniform(vec![vec![false; 3]]);
        assert_eq!(precision_ia(&r3, &none, 3), 0.0);
    }

    #[test]
    fn subtopic_recall_examples() {
        let j = SubtopicJudgments::uniform(vec![
            vec![true, false, false],
            vec![false, false, false],
            vec![false, false, true],
        ]);
        let r = Ranking::new(vec![0, 1, 2], 3).unwrap();
        assert_abs_diff_eq!(subtopic_recall(&r, &j, 3), 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(subtopic_recall(&Ranking::empty(), &j, 3), 0.0);
        let full = SubtopicJudgments::uniform(vec![vec![true, false], vec![false, true]]);
        assert_eq!(subtopic_recall(&Ranking::new(vec![1, 0], 2).unwrap(), &full, 2), 1.0);
    }

    #[test]
    fn nrbp_beta_limit_is_discount_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let j = random_judgments(&mut rng, 10, 3);
        let r = Ranking::new((0..10).collect(), 10).unwrap();
        let p = MeasureParams {
            measure: Measure::Nrbp,
            alpha: 0.5,
            beta: 0.999_999,
            cutoff: 20,
        };
        let got = raw_dcem(&r, &j, &p).unwrap();
        // Discount-free cascade sum: for each subtopic with r relevant docs,
        // sum_{c=0}^{r-1} (1-alpha)^c.
        let analytic: f64 = j
            .rel
            .iter()
            .zip(&j.probs)
            .map(|(row, &pi)| {
                let count = row.iter().filter(|&&g| g).count();
                pi * (0..count).map(|c| 0.5f64.powi(c as i32)).sum::<f64>()
            })
            .sum();
        assert!((got - analytic).abs() < 1e-4, "{got} vs {analytic}");
    }

    #[test]
    fn cutoff_truncates_evaluation() {
        let j = SubtopicJudgments::uniform(vec![vec![true, true, true]]);
        let r = Ranking::new(vec![0, 1, 2], 3).unwrap();
        let p = MeasureParams {
            cutoff: 1,
            ..params(Measure::ErrIa)
        };
        assert_eq!(raw_dcem(&r, &j, &p).unwrap(), 1.0);
    }
}

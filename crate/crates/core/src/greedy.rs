//! Greedy selection over a marginal-gain oracle, training-target
//! construction, and an exhaustive search used as a test oracle.
//!
//! Ties are broken by the lowest candidate index, and zero-gain candidates
//! are still appended until the ranking reaches length `k`.

use crate::error::{Error, Result};
use crate::instance::{MeasureParams, QueryInstance, Ranking};
use crate::metrics::{self, CascadeState};

/// A set function explored by [`greedy_select_with`]. `gain` is queried for
/// every unselected candidate at each step; `commit` is called once the
/// winner is chosen, before it is appended to `prefix`.
pub trait GreedyObjective {
    fn gain(&mut self, prefix: &[usize], candidate: usize) -> f64;

    fn commit(&mut self, _prefix: &[usize], _candidate: usize) {}
}

/// Adapts a plain `FnMut(prefix, candidate) -> gain` closure.
pub struct FnGain<F>(pub F);

impl<F: FnMut(&[usize], usize) -> f64> GreedyObjective for FnGain<F> {
    fn gain(&mut self, prefix: &[usize], candidate: usize) -> f64 {
        (self.0)(prefix, candidate)
    }
}

/// Builds a ranking of length `min(k, n)` by repeatedly appending the
/// candidate with the largest gain.
pub fn greedy_select<F>(n: usize, k: usize, gain: F) -> Ranking
where
    F: FnMut(&[usize], usize) -> f64,
{
    greedy_select_with(n, k, &mut FnGain(gain))
}

pub fn greedy_select_with<O: GreedyObjective + ?Sized>(n: usize, k: usize, objective: &mut O) -> Ranking {
    let len = k.min(n);
    let mut selected = vec![false; n];
    let mut prefix = Vec::with_capacity(len);
    for _ in 0..len {
        let mut best: Option<(usize, f64)> = None;
        for cand in 0..n {
            if selected[cand] {
                continue;
            }
            let mut g = objective.gain(&prefix, cand);
            if g.is_nan() {
                g = f64::NEG_INFINITY;
            }
            match best {
                Some((_, bg)) if g <= bg => {}
                _ => best = Some((cand, g)),
            }
        }
        let (winner, _) = best.expect("an unselected candidate remains");
        objective.commit(&prefix, winner);
        selected[winner] = true;
        prefix.push(winner);
    }
    Ranking::from_vec_unchecked(prefix)
}

struct CascadeObjective<'a> {
    q: &'a QueryInstance,
    params: &'a MeasureParams,
    state: CascadeState,
}

impl GreedyObjective for CascadeObjective<'_> {
    fn gain(&mut self, _prefix: &[usize], candidate: usize) -> f64 {
        self.state
            .gain_unchecked(candidate, &self.q.judgments, self.params)
    }

    fn commit(&mut self, _prefix: &[usize], candidate: usize) {
        self.state
            .push_unchecked(candidate, &self.q.judgments, self.params);
    }
}

/// Greedy ideal ranking over the true judgments, of length
/// `min(cutoff, n)`. Defined for degenerate queries too (all gains zero).
pub(crate) fn greedy_ideal(q: &QueryInstance, params: &MeasureParams) -> Ranking {
    let n = q.num_docs();
    let mut objective = CascadeObjective {
        q,
        params,
        state: CascadeState::new(&q.judgments, n),
    };
    greedy_select_with(n, params.cutoff, &mut objective)
}

/// Training target: the greedy DCEM-maximizing ranking. Degenerate
/// queries (nothing relevant) are reported so callers can skip them.
pub fn build_target(q: &QueryInstance, params: &MeasureParams) -> Result<Ranking> {
    if !q.judgments.has_relevant() {
        return Err(Error::DegenerateQuery {
            query_id: q.query_id.clone(),
        });
    }
    Ok(greedy_ideal(q, params))
}

pub const EXHAUSTIVE_MAX_DOCS: usize = 10;
pub const EXHAUSTIVE_MAX_K: usize = 5;

/// The ordered tuple of length `min(k, n)` with maximal raw score; ties go
/// to the lexicographically smallest tuple.
pub fn exhaustive_best(q: &QueryInstance, params: &MeasureParams, k: usize) -> Result<Ranking> {
    let n = q.num_docs();
    if n > EXHAUSTIVE_MAX_DOCS || k > EXHAUSTIVE_MAX_K {
        return Err(Error::SizeGuard { n, k });
    }
    let len = k.min(n).min(params.cutoff);
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut current = Vec::with_capacity(len);
    let mut used = vec![false; n];
    enumerate(n, len, &mut current, &mut used, &mut |tuple| {
        let r = Ranking::from_vec_unchecked(tuple.to_vec());
        let score = metrics::raw_dcem(&r, &q.judgments, params).expect("tuple is valid");
        if best.as_ref().is_none_or(|(_, s)| score > *s) {
            best = Some((tuple.to_vec(), score));
        }
    });
    Ok(Ranking::from_vec_unchecked(best.map(|(t, _)| t).unwrap_or_default()))
}

fn enumerate(
    n: usize,
    len: usize,
    current: &mut Vec<usize>,
    used: &mut [bool],
    visit: &mut dyn FnMut(&[usize]),
) {
    if current.len() == len {
        visit(current);
        return;
    }
    for d in 0..n {
        if used[d] {
            continue;
        }
        used[d] = true;
        current.push(d);
        enumerate(n, len, current, used, visit);
        current.pop();
        used[d] = false;
    }
}

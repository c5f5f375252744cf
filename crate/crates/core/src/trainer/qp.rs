//! Restricted n-slack structural SVM QP, solved in the dual.
//!
//! Primal over the current working sets:
//!
//! ```text
//! min_w,xi  1/2 |w|^2 + (C/n) sum_i xi_i
//! s.t.      w . diff_c >= loss_c - xi_i   for every c in W_i,  xi_i >= 0
//! ```
//!
//! Dual: maximize `sum_c a_c loss_c - 1/2 |sum_c a_c diff_c|^2` subject to
//! `a_c >= 0` and `sum_{c in W_i} a_c <= C/n` per example. Each example's
//! multipliers plus an implicit slack multiplier `C/n - sum a_c` form a
//! simplex.
//!
//! An interior point pass gets close to the optimum first; multipliers it
//! leaves near zero are snapped to zero. Pairwise (SMO-style) updates then
//! finish the job: mass moves between two members of one simplex, picking
//! the pair with the largest KKT violation, examples visited cyclically.
//! The pairwise phase alone is correct but converges slowly when many
//! examples pull on the same few weight directions.

use log::debug;

use super::ipm;
use crate::error::{Error, Result};
use crate::instance::Ranking;
use crate::model::dot;

/// One active constraint for a training example.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub ranking: Ranking,
    /// `Psi(x_i, y_hat)` flattened as `[rel | div]`.
    pub psi: Vec<f64>,
    /// `Psi(x_i, y_i) - Psi(x_i, y_hat)`.
    pub diff: Vec<f64>,
    /// `Delta(y_i, y_hat)`.
    pub loss: f64,
    /// Dual multiplier.
    pub alpha: f64,
    idle: usize,
}

impl Constraint {
    pub fn new(ranking: Ranking, psi: Vec<f64>, target_psi: &[f64], loss: f64) -> Self {
        let diff = target_psi.iter().zip(&psi).map(|(t, p)| t - p).collect();
        Self {
            ranking,
            psi,
            diff,
            loss,
            alpha: 0.0,
            idle: 0,
        }
    }

    /// Hinge value `Delta - w . diff` of this constraint under `w`.
    #[inline]
    pub fn violation(&self, w: &[f64]) -> f64 {
        self.loss - dot(w, &self.diff)
    }
}

/// Per-example sets of active constraints.
#[derive(Debug, Clone, Default)]
pub struct WorkingSet {
    sets: Vec<Vec<Constraint>>,
}

impl WorkingSet {
    pub fn new(num_examples: usize) -> Self {
        Self {
            sets: vec![Vec::new(); num_examples],
        }
    }

    pub fn num_examples(&self) -> usize {
        self.sets.len()
    }

    pub fn constraints(&self, example: usize) -> &[Constraint] {
        &self.sets[example]
    }

    pub fn total(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    pub fn contains(&self, example: usize, ranking: &Ranking) -> bool {
        self.sets[example].iter().any(|c| &c.ranking == ranking)
    }

    /// Adds a constraint unless its ranking is already present.
    pub fn add(&mut self, example: usize, constraint: Constraint) -> bool {
        if self.contains(example, &constraint.ranking) {
            return false;
        }
        self.sets[example].push(constraint);
        true
    }

    /// `xi_i = max(0, max_{c in W_i} (loss_c - w . diff_c))`.
    pub fn slack(&self, example: usize, w: &[f64]) -> f64 {
        self.sets[example]
            .iter()
            .map(|c| c.violation(w))
            .fold(0.0, f64::max)
    }

    /// Updates idle counters after a solve and drops constraints whose
    /// multiplier has been zero for `after` consecutive solves.
    pub fn prune(&mut self, after: usize) -> usize {
        let mut removed = 0;
        for set in &mut self.sets {
            for c in set.iter_mut() {
                if c.alpha == 0.0 {
                    c.idle += 1;
                } else {
                    c.idle = 0;
                }
            }
            let before = set.len();
            set.retain(|c| c.idle < after);
            removed += before - set.len();
        }
        removed
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub w: Vec<f64>,
    pub slacks: Vec<f64>,
    pub primal: f64,
    pub dual: f64,
    pub max_violation: f64,
    pub iterations: usize,
}

/// Cap on pairwise updates before giving up.
pub const DEFAULT_MAX_UPDATES: usize = 20_000_000;

/// Solves the restricted QP, warm-starting from the multipliers stored in
/// `working`. `dim` is the joint feature dimension.
pub fn solve_restricted_qp(working: &mut WorkingSet, c: f64, dim: usize, tol: f64) -> Result<QpSolution> {
    solve_restricted_qp_capped(working, c, dim, tol, DEFAULT_MAX_UPDATES)
}

/// Interior point pass followed by pairwise polishing, giving up after
/// `max_updates` pairwise steps.
pub fn solve_restricted_qp_capped(
    working: &mut WorkingSet,
    c: f64,
    dim: usize,
    tol: f64,
    max_updates: usize,
) -> Result<QpSolution> {
    let n = working.num_examples();
    if c > 0.0 && n > 0 && working.total() > 0 {
        let budget = c / n as f64;
        let res = ipm::solve(working, budget, dim, IPM_MAX_ITERS);
        if !res.converged {
            debug!("interior point pass stopped early, polishing from its iterate");
        }
        for (set, alphas) in working.sets.iter_mut().zip(res.alphas) {
            for (con, a) in set.iter_mut().zip(alphas) {
                con.alpha = if a < SNAP_TO_ZERO * budget { 0.0 } else { a };
            }
        }
    }
    solve_restricted_qp_pairwise(working, c, dim, tol, max_updates)
}

const IPM_MAX_ITERS: usize = 200;
/// Relative to `C/n`.
const SNAP_TO_ZERO: f64 = 1e-9;

/// Pairwise updates only, warm-started from the stored multipliers.
pub fn solve_restricted_qp_pairwise(
    working: &mut WorkingSet,
    c: f64,
    dim: usize,
    tol: f64,
    max_updates: usize,
) -> Result<QpSolution> {
    if !(c > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "QP needs C > 0 and tol > 0 (got C={c}, tol={tol})"
        )));
    }
    let n = working.num_examples();
    if n == 0 {
        return Ok(QpSolution {
            w: vec![0.0; dim],
            slacks: Vec::new(),
            primal: 0.0,
            dual: 0.0,
            max_violation: 0.0,
            iterations: 0,
        });
    }
    let budget = c / n as f64;

    // Project warm-start multipliers onto the feasible set and rebuild w.
    let mut slack_alpha = vec![budget; n];
    let mut w = vec![0.0; dim];
    for (i, set) in working.sets.iter_mut().enumerate() {
        for con in set.iter_mut() {
            if con.diff.len() != dim {
                return Err(Error::DimensionMismatch {
                    what: "constraint feature vector",
                    expected: dim,
                    actual: con.diff.len(),
                });
            }
            con.alpha = con.alpha.max(0.0);
        }
        let sum: f64 = set.iter().map(|c| c.alpha).sum();
        // a sliver of slack mass would be picked as a donor and then only
        // allow steps of its own size
        if sum > budget || (sum > 0.0 && budget - sum < SNAP_TO_ZERO * budget) {
            let scale = budget / sum;
            set.iter_mut().for_each(|c| c.alpha *= scale);
            slack_alpha[i] = 0.0;
        } else {
            slack_alpha[i] = budget - sum;
        }
        for con in set.iter() {
            if con.alpha > 0.0 {
                axpy(con.alpha, &con.diff, &mut w);
            }
        }
    }

    let mut updates = 0usize;
    let mut grad: Vec<f64> = Vec::new();
    let mut direction = vec![0.0; dim];
    let mut max_violation;
    loop {
        max_violation = 0.0f64;
        for i in 0..n {
            let set = &mut working.sets[i];
            if set.is_empty() {
                continue;
            }
            grad.clear();
            grad.extend(set.iter().map(|c| c.violation(&w)));
            let mut first = true;
            loop {
                let Some((up, down, viol)) = select_pair(set, &grad, slack_alpha[i]) else {
                    break;
                };
                if first {
                    max_violation = max_violation.max(viol);
                    first = false;
                }
                if viol < tol {
                    break;
                }
                if updates >= max_updates {
                    return Err(Error::QpNonConvergence {
                        iterations: updates,
                        violation: max_violation.max(viol),
                    });
                }
                updates += 1;

                // direction = diff_up - diff_down (slack member has diff 0)
                direction.iter_mut().for_each(|x| *x = 0.0);
                if let Some(u) = up {
                    axpy(1.0, &set[u].diff, &mut direction);
                }
                if let Some(d) = down {
                    axpy(-1.0, &set[d].diff, &mut direction);
                }
                let available = match down {
                    Some(d) => set[d].alpha,
                    None => slack_alpha[i],
                };
                let curvature = dot(&direction, &direction);
                let step = if curvature > 0.0 {
                    (viol / curvature).min(available)
                } else {
                    available
                };
                if step <= 0.0 {
                    break;
                }
                match up {
                    Some(u) => set[u].alpha += step,
                    None => slack_alpha[i] += step,
                }
                match down {
                    Some(d) => {
                        if step >= set[d].alpha {
                            set[d].alpha = 0.0;
                        } else {
                            set[d].alpha -= step;
                        }
                    }
                    None => {
                        if step >= slack_alpha[i] {
                            slack_alpha[i] = 0.0;
                        } else {
                            slack_alpha[i] -= step;
                        }
                    }
                }
                axpy(step, &direction, &mut w);
                for (g, con) in grad.iter_mut().zip(set.iter()) {
                    *g -= step * dot(&con.diff, &direction);
                }
            }
        }
        if max_violation < tol {
            break;
        }
    }

    // Recompute w from the multipliers to shed accumulated drift.
    let mut w_exact = vec![0.0; dim];
    for set in &working.sets {
        for con in set {
            if con.alpha > 0.0 {
                axpy(con.alpha, &con.diff, &mut w_exact);
            }
        }
    }
    let w = w_exact;
    let slacks: Vec<f64> = (0..n).map(|i| working.slack(i, &w)).collect();
    let norm2 = dot(&w, &w);
    let primal = 0.5 * norm2 + budget * slacks.iter().sum::<f64>();
    let linear: f64 = working
        .sets
        .iter()
        .flatten()
        .map(|c| c.alpha * c.loss)
        .sum();
    let dual = linear - 0.5 * norm2;
    Ok(QpSolution {
        w,
        slacks,
        primal,
        dual,
        max_violation,
        iterations: updates,
    })
}

/// Picks the most violating pair within one example's simplex. `None`
/// stands for the implicit slack member (gradient 0, diff 0). Returns
/// `(up, down, violation)`.
fn select_pair(
    set: &[Constraint],
    grad: &[f64],
    slack_alpha: f64,
) -> Option<(Option<usize>, Option<usize>, f64)> {
    // Members that can receive mass: all of them.
    let mut up: Option<usize> = None;
    let mut up_g = 0.0;
    for (k, &g) in grad.iter().enumerate() {
        if g > up_g {
            up = Some(k);
            up_g = g;
        }
    }
    // Members that can give mass: positive multiplier.
    let mut down: Option<Option<usize>> = None;
    let mut down_g = f64::INFINITY;
    if slack_alpha > 0.0 {
        down = Some(None);
        down_g = 0.0;
    }
    for (k, &g) in grad.iter().enumerate() {
        if set[k].alpha > 0.0 && g < down_g {
            down = Some(Some(k));
            down_g = g;
        }
    }
    let down = down?;
    if up == down {
        return Some((up, down, 0.0));
    }
    Some((up, down, up_g - down_g))
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

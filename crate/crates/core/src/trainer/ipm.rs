//! Primal-dual interior point method for the restricted QP.
//!
//! Variables are `x = (w, xi)`. Every constraint row is either
//! `diff_c . w + xi_i >= loss_c` or `xi_i >= 0`; their multipliers are the
//! constraint alphas and the per-example slack multipliers of the dual.
//! Newton systems are reduced to `dim x dim` by eliminating the diagonal
//! `xi` block.

use super::qp::WorkingSet;

pub(crate) struct IpmResult {
    /// Multiplier per constraint, in working-set order.
    pub alphas: Vec<Vec<f64>>,
    pub converged: bool,
}

struct Row {
    example: usize,
    /// `None` for the `xi_i >= 0` row.
    constraint: Option<usize>,
    b: f64,
}

pub(crate) fn solve(working: &WorkingSet, budget: f64, dim: usize, max_iters: usize) -> IpmResult {
    let n = working.num_examples();
    let mut rows = Vec::new();
    for i in 0..n {
        for (k, c) in working.constraints(i).iter().enumerate() {
            rows.push(Row {
                example: i,
                constraint: Some(k),
                b: c.loss,
            });
        }
        rows.push(Row {
            example: i,
            constraint: None,
            b: 0.0,
        });
    }
    let m = rows.len();
    let diff = |r: &Row| r.constraint.map(|k| &working.constraints(r.example)[k].diff[..]);

    // Strictly feasible primal start, dual chosen to zero the xi residual.
    let mut w = vec![0.0; dim];
    let mut xi: Vec<f64> = (0..n)
        .map(|i| 1.0 + working.constraints(i).iter().map(|c| c.loss).fold(0.0, f64::max))
        .collect();
    let mut lam: Vec<f64> = rows
        .iter()
        .map(|r| budget / (working.constraints(r.example).len() + 1) as f64)
        .collect();
    let ax = |w: &[f64], xi: &[f64], r: &Row| -> f64 {
        xi[r.example] + diff(r).map_or(0.0, |d| dot(d, w))
    };
    let mut s: Vec<f64> = rows.iter().map(|r| (ax(&w, &xi, r) - r.b).max(1e-2)).collect();

    let scale = budget.max(1e-300);
    let mut converged = false;
    let mut rc = vec![0.0; m];
    // (merit, multipliers) of the best iterate; late iterations can lose
    // accuracy once the residual hits its rounding floor
    let mut best = (f64::INFINITY, lam.clone());
    for _ in 0..max_iters {
        // residuals
        let rp: Vec<f64> = rows.iter().zip(&s).map(|(r, si)| ax(&w, &xi, r) - si - r.b).collect();
        let mut rd_w = w.clone();
        let mut rd_xi = vec![budget; n];
        for (r, l) in rows.iter().zip(&lam) {
            if let Some(d) = diff(r) {
                axpy(-l, d, &mut rd_w);
            }
            rd_xi[r.example] -= l;
        }
        let mu = dot(&s, &lam) / m as f64;
        let res = rp
            .iter()
            .chain(&rd_w)
            .chain(&rd_xi)
            .fold(0.0f64, |a, x| a.max(x.abs()));
        let size = w.iter().chain(&xi).fold(1.0f64, |a, x| a.max(x.abs()));
        let merit = (mu / scale).max(res / size.max(scale));
        if merit < best.0 {
            best = (merit, lam.clone());
        }
        if merit < 1e-12 {
            converged = true;
            break;
        }

        let Some(system) = Newton::build(&rows, &diff, &s, &lam, n, dim) else {
            break;
        };

        for ((c, si), li) in rc.iter_mut().zip(&s).zip(&lam) {
            *c = -si * li;
        }
        let Some(aff) = system.solve(&rows, &diff, &rc, &rp, &rd_w, &rd_xi, &s, &lam) else {
            break;
        };
        let a_aff = step_length(&s, &aff.ds, &lam, &aff.dl, 1.0);
        let mu_aff = s
            .iter()
            .zip(&aff.ds)
            .zip(lam.iter().zip(&aff.dl))
            .map(|((si, dsi), (li, dli))| (si + a_aff * dsi) * (li + a_aff * dli))
            .sum::<f64>()
            / m as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
        for k in 0..m {
            rc[k] = -s[k] * lam[k] - aff.ds[k] * aff.dl[k] + sigma * mu;
        }
        let Some(step) = system.solve(&rows, &diff, &rc, &rp, &rd_w, &rd_xi, &s, &lam) else {
            break;
        };
        let a = step_length(&s, &step.ds, &lam, &step.dl, 0.995);
        axpy(a, &step.dw, &mut w);
        axpy(a, &step.dxi, &mut xi);
        for k in 0..m {
            s[k] = (s[k] + a * step.ds[k]).max(f64::MIN_POSITIVE);
            lam[k] = (lam[k] + a * step.dl[k]).max(f64::MIN_POSITIVE);
        }
    }

    let mut alphas: Vec<Vec<f64>> = (0..n).map(|i| vec![0.0; working.constraints(i).len()]).collect();
    for (r, l) in rows.iter().zip(&best.1) {
        if let Some(k) = r.constraint {
            alphas[r.example][k] = *l;
        }
    }
    IpmResult { alphas, converged }
}

struct Step {
    dw: Vec<f64>,
    dxi: Vec<f64>,
    ds: Vec<f64>,
    dl: Vec<f64>,
}

/// Reduced normal equations `(Q + A' S^-1 L A) dx = rhs` with the `xi`
/// block eliminated.
struct Newton {
    dim: usize,
    /// Cholesky factor of the Schur complement, row-major lower triangle.
    chol: Vec<f64>,
    /// Per example: `sum_c D_c diff_c`.
    coupling: Vec<Vec<f64>>,
    /// Per example: diagonal `xi` entry.
    diag: Vec<f64>,
}

impl Newton {
    fn build<'a>(
        rows: &[Row],
        diff: &impl Fn(&Row) -> Option<&'a [f64]>,
        s: &[f64],
        lam: &[f64],
        n: usize,
        dim: usize,
    ) -> Option<Self> {
        let mut h = vec![0.0; dim * dim];
        for k in 0..dim {
            h[k * dim + k] = 1.0;
        }
        let mut coupling = vec![vec![0.0; dim]; n];
        let mut diag = vec![0.0; n];
        // per example: constraint weight total, slack-row weight
        let mut weight = vec![0.0; n];
        let mut slack_weight = vec![0.0; n];
        for (k, r) in rows.iter().enumerate() {
            let dk = lam[k] / s[k];
            diag[r.example] += dk;
            match diff(r) {
                Some(d) => {
                    weight[r.example] += dk;
                    axpy(dk, d, &mut coupling[r.example]);
                }
                None => slack_weight[r.example] += dk,
            }
        }
        // Eliminating xi_i leaves sum_c D_c (d_c - m)(d_c - m)' plus
        // (S D_xi / (S + D_xi)) m m' with m the D-weighted mean; written
        // this way every term is PSD and nothing cancels.
        let means: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                if weight[i] > 0.0 {
                    coupling[i].iter().map(|x| x / weight[i]).collect()
                } else {
                    vec![0.0; dim]
                }
            })
            .collect();
        let mut centered = vec![0.0; dim];
        for (k, r) in rows.iter().enumerate() {
            let Some(d) = diff(r) else { continue };
            let dk = lam[k] / s[k];
            let mean = &means[r.example];
            for a in 0..dim {
                centered[a] = d[a] - mean[a];
            }
            add_outer(&mut h, dim, dk, &centered);
        }
        for i in 0..n {
            if weight[i] > 0.0 {
                let f = weight[i] * slack_weight[i] / (weight[i] + slack_weight[i]);
                add_outer(&mut h, dim, f, &means[i]);
            }
        }
        let chol = cholesky(h, dim)?;
        Some(Self {
            dim,
            chol,
            coupling,
            diag,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn solve<'a>(
        &self,
        rows: &[Row],
        diff: &impl Fn(&Row) -> Option<&'a [f64]>,
        rc: &[f64],
        rp: &[f64],
        rd_w: &[f64],
        rd_xi: &[f64],
        s: &[f64],
        lam: &[f64],
    ) -> Option<Step> {
        let dim = self.dim;
        let n = self.diag.len();
        // u = S^-1 (rc - L rp); rhs = -rd + A' u
        let u: Vec<f64> = (0..rows.len()).map(|k| (rc[k] - lam[k] * rp[k]) / s[k]).collect();
        let mut rhs_w: Vec<f64> = rd_w.iter().map(|x| -x).collect();
        let mut rhs_xi: Vec<f64> = rd_xi.iter().map(|x| -x).collect();
        for (r, uk) in rows.iter().zip(&u) {
            rhs_xi[r.example] += uk;
            if let Some(d) = diff(r) {
                axpy(*uk, d, &mut rhs_w);
            }
        }
        let mut reduced = rhs_w.clone();
        for i in 0..n {
            axpy(-rhs_xi[i] / self.diag[i], &self.coupling[i], &mut reduced);
        }
        let dw = cholesky_solve(&self.chol, dim, reduced);
        if dw.iter().any(|x| !x.is_finite()) {
            return None;
        }
        let dxi: Vec<f64> = (0..n)
            .map(|i| (rhs_xi[i] - dot(&self.coupling[i], &dw)) / self.diag[i])
            .collect();
        let mut ds = Vec::with_capacity(rows.len());
        let mut dl = Vec::with_capacity(rows.len());
        for (k, r) in rows.iter().enumerate() {
            let adx = dxi[r.example] + diff(r).map_or(0.0, |d| dot(d, &dw));
            ds.push(adx + rp[k]);
            dl.push(u[k] - lam[k] / s[k] * adx);
        }
        Some(Step { dw, dxi, ds, dl })
    }
}

fn add_outer(h: &mut [f64], dim: usize, scale: f64, v: &[f64]) {
    for a in 0..dim {
        let va = scale * v[a];
        if va == 0.0 {
            continue;
        }
        for b in 0..=a {
            h[a * dim + b] += va * v[b];
        }
    }
}

fn step_length(s: &[f64], ds: &[f64], lam: &[f64], dl: &[f64], frac: f64) -> f64 {
    let mut a = 1.0f64;
    for (x, dx) in s.iter().zip(ds).chain(lam.iter().zip(dl)) {
        if *dx < 0.0 {
            a = a.min(-frac * x / dx);
        }
    }
    a.clamp(0.0, 1.0)
}

fn cholesky(mut h: Vec<f64>, dim: usize) -> Option<Vec<f64>> {
    for j in 0..dim {
        let mut d = h[j * dim + j];
        for k in 0..j {
            d -= h[j * dim + k] * h[j * dim + k];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        h[j * dim + j] = d;
        for i in j + 1..dim {
            let mut v = h[i * dim + j];
            for k in 0..j {
                v -= h[i * dim + k] * h[j * dim + k];
            }
            h[i * dim + j] = v / d;
        }
    }
    Some(h)
}

fn cholesky_solve(l: &[f64], dim: usize, mut b: Vec<f64>) -> Vec<f64> {
    for i in 0..dim {
        let mut v = b[i];
        for k in 0..i {
            v -= l[i * dim + k] * b[k];
        }
        b[i] = v / l[i * dim + i];
    }
    for i in (0..dim).rev() {
        let mut v = b[i];
        for k in i + 1..dim {
            v -= l[k * dim + i] * b[k];
        }
        b[i] = v / l[i * dim + i];
    }
    b
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_spd_system() {
        let h = vec![4.0, 0.0, 2.0, 3.0];
        let l = cholesky(h, 2).unwrap();
        let x = cholesky_solve(&l, 2, vec![2.0, 5.0]);
        // [[4, 2], [2, 3]] x = [2, 5]
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0).abs() < 1e-12);
        assert!((2.0 * x[0] + 3.0 * x[1] - 5.0).abs() < 1e-12);
        assert!(cholesky(vec![-1.0], 1).is_none());
    }
}

//! Fine–Gray working model: IPCW-weighted subdistribution partial likelihood
//! maximized by Newton iteration with step-halving.
//!
//! Risk set at a cause-1 event time `t`:
//! * every subject with `y >= t`, weight `w_j`;
//! * every subject with an observed competing event before `t`, weight
//!   `w_j * G(t) / G(y_j)`, where `G` is the censoring Kaplan–Meier of the
//!   same data under the same case weights.
//!
//! Tied event times share one denominator (Breslow).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ipcw::fit_censoring_km;
use crate::model::{dot, Dataset};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FgOptions {
    /// Convergence threshold on the max-norm of the score divided by the
    /// total cause-1 event weight.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FgOptions {
    fn default() -> Self {
        FgOptions { tol: 1e-8, max_iter: 50 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FGFit {
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    pub loglik: f64,
    pub converged: bool,
    /// Log partial likelihood at the start point and after each accepted step.
    pub loglik_path: Vec<f64>,
}

/// Relative slack when accepting a Newton step whose log-likelihood change is
/// below floating-point resolution.
const ACCEPT_SLACK: f64 = 1e-12;
const MAX_HALVINGS: usize = 40;

struct Problem {
    d: usize,
    /// Sorted by observed time, ascending.
    z: Vec<f64>,
    w: Vec<f64>,
    cause1: Vec<bool>,
    /// `1 / G(y_j)` for competing-event subjects, 0 otherwise.
    comp_inv_g: Vec<f64>,
    /// Index ranges of tied times in the sorted order.
    groups: Vec<(usize, usize)>,
    /// For each group carrying cause-1 event weight: `G(t)`; NaN otherwise.
    group_g: Vec<f64>,
    event_weight: f64,
    n_events: usize,
}

struct Eval {
    loglik: f64,
    score: Vec<f64>,
    /// Observed information, row-major `d x d`.
    info: Vec<f64>,
}

impl Problem {
    fn new(train: &Dataset, weights: &[f64]) -> Result<Problem> {
        let records = train.records();
        let n = records.len();
        let d = train.d();
        if weights.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: weights.len() });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidWeights);
        }
        let n_events = records
            .iter()
            .zip(weights)
            .filter(|(r, &w)| r.event == 1 && w > 0.0)
            .count();
        if n_events == 0 {
            return Err(Error::NoCause1Events);
        }
        let ghat = fit_censoring_km(train, weights)?;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| records[a].y.total_cmp(&records[b].y));

        let mut z = Vec::with_capacity(n * d);
        let mut w = Vec::with_capacity(n);
        let mut cause1 = Vec::with_capacity(n);
        let mut comp_inv_g = Vec::with_capacity(n);
        for &i in &order {
            let r = &records[i];
            z.extend_from_slice(&r.z);
            w.push(weights[i]);
            cause1.push(r.event == 1);
            comp_inv_g.push(if r.event >= 2 { 1.0 / ghat.left_limit(r.y) } else { 0.0 });
        }

        let mut groups = Vec::new();
        let mut group_g = Vec::new();
        let mut start = 0;
        while start < n {
            let t = records[order[start]].y;
            let mut end = start + 1;
            while end < n && records[order[end]].y == t {
                end += 1;
            }
            let has_event = (start..end).any(|k| cause1[k] && w[k] > 0.0);
            groups.push((start, end));
            group_g.push(if has_event { ghat.left_limit(t) } else { f64::NAN });
            start = end;
        }

        let event_weight = (0..n).filter(|&k| cause1[k]).map(|k| w[k]).sum();
        Ok(Problem { d, z, w, cause1, comp_inv_g, groups, group_g, event_weight, n_events })
    }

    fn row(&self, k: usize) -> &[f64] {
        &self.z[k * self.d..(k + 1) * self.d]
    }

    fn evaluate(&self, beta: &[f64], with_info: bool) -> Eval {
        let d = self.d;
        let n = self.w.len();
        let stride = 1 + d + d * d;

        let eta: Vec<f64> = (0..n).map(|k| dot(self.row(k), beta)).collect();
        let shift = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let rel: Vec<f64> = eta.iter().map(|e| (e - shift).exp()).collect();

        let accumulate = |acc: &mut [f64], k: usize, factor: f64| {
            let zk = self.row(k);
            acc[0] += factor;
            for a in 0..d {
                acc[1 + a] += factor * zk[a];
                if with_info {
                    for b in 0..=a {
                        acc[1 + d + a * d + b] += factor * zk[a] * zk[b];
                    }
                }
            }
        };

        // Competing-event sums over y_j < t, snapshotted at each event group.
        let n_event_groups = self.group_g.iter().filter(|g| !g.is_nan()).count();
        let mut comp_snap = vec![0.0; n_event_groups * stride];
        let mut comp = vec![0.0; stride];
        let mut slot = 0;
        for (gi, &(s, e)) in self.groups.iter().enumerate() {
            if !self.group_g[gi].is_nan() {
                comp_snap[slot * stride..(slot + 1) * stride].copy_from_slice(&comp);
                slot += 1;
            }
            for k in s..e {
                if self.comp_inv_g[k] > 0.0 {
                    accumulate(&mut comp, k, self.w[k] * rel[k] * self.comp_inv_g[k]);
                }
            }
        }

        let mut loglik = 0.0;
        let mut score = vec![0.0; d];
        let mut info = vec![0.0; d * d];
        let mut at_risk = vec![0.0; stride];
        let mut total = vec![0.0; stride];
        let mut zbar = vec![0.0; d];

        for (gi, &(s, e)) in self.groups.iter().enumerate().rev() {
            for k in s..e {
                accumulate(&mut at_risk, k, self.w[k] * rel[k]);
            }
            let g_t = self.group_g[gi];
            if g_t.is_nan() {
                continue;
            }
            slot -= 1;
            let snap = &comp_snap[slot * stride..(slot + 1) * stride];
            for ((t, a), c) in total.iter_mut().zip(&at_risk).zip(snap) {
                *t = a + g_t * c;
            }

            let s0 = total[0];
            let mut w_events = 0.0;
            for k in (s..e).filter(|&k| self.cause1[k] && self.w[k] > 0.0) {
                let wk = self.w[k];
                w_events += wk;
                loglik += wk * (eta[k] - shift);
                for (sc, zk) in score.iter_mut().zip(self.row(k)) {
                    *sc += wk * zk;
                }
            }
            loglik -= w_events * s0.ln();
            for a in 0..d {
                zbar[a] = total[1 + a] / s0;
                score[a] -= w_events * zbar[a];
            }
            if with_info {
                for a in 0..d {
                    for b in 0..=a {
                        let v = w_events * (total[1 + d + a * d + b] / s0 - zbar[a] * zbar[b]);
                        info[a * d + b] += v;
                    }
                }
            }
        }
        if with_info {
            for a in 0..d {
                for b in 0..a {
                    info[b * d + a] = info[a * d + b];
                }
            }
        }
        Eval { loglik, score, info }
    }

    fn gradient_norm(&self, score: &[f64]) -> f64 {
        score.iter().fold(0.0f64, |m, g| m.max(g.abs())) / self.event_weight
    }
}

/// Solve `info * x = rhs` for a symmetric positive-definite `info`.
pub(crate) fn spd_solve(info: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let d = rhs.len();
    let m = DMatrix::from_row_slice(d, d, info);
    let max_diag = (0..d).map(|i| m[(i, i)]).fold(0.0f64, f64::max);
    let chol = m.cholesky().ok_or(Error::SingularInformation)?;
    let l = chol.l_dirty();
    let min_pivot = (0..d).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if !(min_pivot > 1e-12 * max_diag) {
        return Err(Error::SingularInformation);
    }
    let x = chol.solve(&DVector::from_column_slice(rhs));
    Ok(x.iter().copied().collect())
}

/// Fit the Fine–Gray model on `train` with per-subject case weights.
///
/// Returns the best iterate with `converged = false` if the iteration budget
/// runs out.
pub fn fg_fit(train: &Dataset, pert_weights: &[f64], opts: FgOptions) -> Result<FGFit> {
    let problem = Problem::new(train, pert_weights)?;
    let d = problem.d;
    if problem.n_events < d + 1 {
        return Err(Error::TooFewEvents { found: problem.n_events, required: d + 1 });
    }
    let mut beta = vec![0.0; d];
    let mut cur = problem.evaluate(&beta, true);
    let mut path = vec![cur.loglik];
    let mut iterations = 0;
    let mut grad_norm = problem.gradient_norm(&cur.score);

    while grad_norm > opts.tol && iterations < opts.max_iter {
        let step = spd_solve(&cur.info, &cur.score)?;
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            let ev = problem.evaluate(&cand, true);
            if ev.loglik.is_finite() && ev.loglik >= cur.loglik - ACCEPT_SLACK * cur.loglik.abs() {
                accepted = Some((cand, ev));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, ev)) = accepted else { break };
        iterations += 1;
        beta = cand;
        cur = ev;
        path.push(cur.loglik);
        grad_norm = problem.gradient_norm(&cur.score);
    }

    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::NotConverged { iterations, gradient_norm: grad_norm });
    }
    Ok(FGFit {
        beta,
        iterations,
        final_gradient_norm: grad_norm,
        loglik: cur.loglik,
        converged: grad_norm <= opts.tol,
        loglik_path: path,
    })
}

/// Score (gradient) of the weighted log partial likelihood at `beta`.
pub fn fg_score(beta: &[f64], train: &Dataset, pert_weights: &[f64]) -> Result<Vec<f64>> {
    let problem = Problem::new(train, pert_weights)?;
    check_beta(beta, problem.d)?;
    Ok(problem.evaluate(beta, false).score)
}

/// Weighted log partial likelihood at `beta`.
pub fn fg_loglik(beta: &[f64], train: &Dataset, pert_weights: &[f64]) -> Result<f64> {
    let problem = Problem::new(train, pert_weights)?;
    check_beta(beta, problem.d)?;
    Ok(problem.evaluate(beta, false).loglik)
}

fn check_beta(beta: &[f64], d: usize) -> Result<()> {
    if beta.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: beta.len() });
    }
    Ok(())
}

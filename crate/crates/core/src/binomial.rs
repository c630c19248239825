//! IPCW-weighted binomial (logistic) regression for the `tau`-year event
//! indicator on a basis of the risk score.

use crate::error::{Error, Result};
use crate::finegray::spd_solve;
use crate::model::dot;
use crate::spline::BasisRow;
use crate::stats::{expit, softplus};

/// Row-major design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    values: Vec<f64>,
    width: usize,
}

impl Design {
    pub fn with_width(width: usize) -> Design {
        Design { values: Vec::new(), width }
    }

    pub fn from_rows(rows: &[BasisRow]) -> Result<Design> {
        let width = rows.first().map_or(0, |r| r.values.len());
        let mut design = Design::with_width(width);
        for r in rows {
            if r.values.len() != width {
                return Err(Error::DimensionMismatch { expected: width, found: r.values.len() });
            }
            design.values.extend_from_slice(&r.values);
        }
        Ok(design)
    }

    /// Append a zeroed row and return it for filling.
    pub fn push_row(&mut self) -> &mut [f64] {
        let start = self.values.len();
        self.values.resize(start + self.width, 0.0);
        &mut self.values[start..]
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rows(&self) -> usize {
        self.values.len().checked_div(self.width).unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinomialOptions {
    /// Threshold on the max-norm of the gradient divided by the total weight.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BinomialOptions {
    fn default() -> Self {
        BinomialOptions { tol: 1e-8, max_iter: 50 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaFit {
    pub theta: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub final_gradient_norm: f64,
}

/// Fitted linear predictor magnitude beyond which an unsettled fit is
/// treated as separated.
const SEPARATION_ETA: f64 = 10.0;
/// Largest change of the fitted linear predictor that one more Newton step
/// may make at a settled fit.
const SETTLED_MOVE: f64 = 1e-3;
const MAX_HALVINGS: usize = 40;

/// Weighted log-likelihood `sum w_i [d_i log p_i + (1 - d_i) log(1 - p_i)]`.
pub fn binomial_objective(theta: &[f64], delta: &[bool], design: &Design, weights: &[f64]) -> f64 {
    (0..design.rows())
        .filter(|&i| weights[i] > 0.0)
        .map(|i| {
            let eta = dot(design.row(i), theta);
            // log p = -softplus(-eta), log(1 - p) = -softplus(eta)
            -weights[i] * if delta[i] { softplus(-eta) } else { softplus(eta) }
        })
        .sum()
}

struct Active<'a> {
    rows: Vec<&'a [f64]>,
    delta: Vec<bool>,
    w: Vec<f64>,
    total: f64,
    width: usize,
}

impl Active<'_> {
    fn objective(&self, theta: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(&self.delta)
            .zip(&self.w)
            .map(|((x, &d), &w)| {
                let eta = dot(x, theta);
                -w * if d { softplus(-eta) } else { softplus(eta) }
            })
            .sum()
    }

    /// Gradient and observed information (row-major).
    fn derivatives(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.width;
        let mut grad = vec![0.0; m];
        let mut info = vec![0.0; m * m];
        for ((x, &d), &w) in self.rows.iter().zip(&self.delta).zip(&self.w) {
            let p = expit(dot(x, theta));
            let resid = w * (if d { 1.0 } else { 0.0 } - p);
            let curv = w * p * (1.0 - p);
            for a in 0..m {
                grad[a] += resid * x[a];
                let ca = curv * x[a];
                for b in 0..=a {
                    info[a * m + b] += ca * x[b];
                }
            }
        }
        for a in 0..m {
            for b in 0..a {
                info[b * m + a] = info[a * m + b];
            }
        }
        (grad, info)
    }

    fn grad_norm(&self, grad: &[f64]) -> f64 {
        grad.iter().fold(0.0f64, |acc, g| acc.max(g.abs())) / self.total
    }
}

/// Maximize the weighted binomial log-likelihood by Newton's method with
/// step-halving from `theta = 0`. Rows with zero weight are ignored.
pub fn fit_weighted_binomial(
    delta: &[bool],
    design: &Design,
    weights: &[f64],
    opts: BinomialOptions,
) -> Result<ThetaFit> {
    let n = design.rows();
    if delta.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: delta.len() });
    }
    if weights.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: weights.len() });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidWeights);
    }

    let keep: Vec<usize> = (0..n).filter(|&i| weights[i] > 0.0).collect();
    let active = Active {
        rows: keep.iter().map(|&i| design.row(i)).collect(),
        delta: keep.iter().map(|&i| delta[i]).collect(),
        w: keep.iter().map(|&i| weights[i]).collect(),
        total: keep.iter().map(|&i| weights[i]).sum(),
        width: design.width(),
    };
    if active.rows.is_empty() {
        return Err(Error::AllWeightsZero);
    }
    if active.delta.iter().all(|&d| d) || active.delta.iter().all(|&d| !d) {
        return Err(Error::DegenerateResponses);
    }

    let mut theta = vec![0.0; design.width()];
    let mut obj = active.objective(&theta);
    let (mut grad, mut info) = active.derivatives(&theta);
    let mut grad_norm = active.grad_norm(&grad);
    let mut iterations = 0;
    let mut singular = None;

    while grad_norm > opts.tol && iterations < opts.max_iter {
        let step = match spd_solve(&info, &grad) {
            Ok(step) => step,
            Err(e) => {
                singular = Some(e);
                break;
            }
        };
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(t, s)| t + scale * s).collect();
            let cand_obj = active.objective(&cand);
            if cand_obj.is_finite() && cand_obj >= obj - 1e-12 * obj.abs() {
                accepted = Some((cand, cand_obj));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, cand_obj)) = accepted else { break };
        theta = cand;
        obj = cand_obj;
        iterations += 1;
        (grad, info) = active.derivatives(&theta);
        grad_norm = active.grad_norm(&grad);
    }

    let converged = grad_norm <= opts.tol;
    // Under separation the gradient decays only as the fitted linear
    // predictor diverges, so the tolerance can be met while a further Newton
    // step would still move it by O(1). At a finite maximum that step is tiny.
    let max_eta = active.rows.iter().map(|x| dot(x, &theta).abs()).fold(0.0, f64::max);
    let diverging = !converged
        || match spd_solve(&info, &grad) {
            Ok(step) => active.rows.iter().map(|x| dot(x, &step).abs()).fold(0.0, f64::max) > SETTLED_MOVE,
            Err(_) => true,
        };
    if diverging && !(max_eta <= SEPARATION_ETA) {
        return Err(Error::Separation { iterations });
    }
    if !converged {
        if let Some(e) = singular {
            return Err(e);
        }
    }
    Ok(ThetaFit { theta, converged, iterations, final_gradient_norm: grad_norm })
}

/// Fitted probability `expit(theta . B)`.
pub fn predict_prob(theta: &[f64], basis_row: &BasisRow) -> Result<f64> {
    if theta.len() != basis_row.values.len() {
        return Err(Error::DimensionMismatch { expected: theta.len(), found: basis_row.values.len() });
    }
    Ok(expit(dot(theta, &basis_row.values)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::glm_basis;

    fn intercept_design(n: usize) -> Design {
        Design::from_rows(&vec![BasisRow { values: vec![1.0] }; n]).unwrap()
    }

    #[test]
    fn intercept_only_closed_forms() {
        let delta = [true, false, true, false];
        let fit = fit_weighted_binomial(&delta, &intercept_design(4), &[1.0; 4], Default::default())
            .unwrap();
        assert!(fit.converged);
        assert!(fit.theta[0].abs() < 1e-12);

        let delta = [true, false, false, false];
        let fit = fit_weighted_binomial(&delta, &intercept_design(4), &[1.0; 4], Default::default())
            .unwrap();
        assert!((fit.theta[0] - (0.25f64 / 0.75).ln()).abs() < 1e-8);
        assert!((fit.theta[0] + 1.098612).abs() < 1e-6);
    }

    #[test]
    fn half_weight_duplicates_match() {
        let xs = [-1.2, -0.3, 0.1, 0.4, 0.9, 1.5, 2.0];
        let delta = [false, true, false, true, false, true, true];
        let rows: Vec<_> = xs.iter().map(|&x| glm_basis(x)).collect();
        let base = fit_weighted_binomial(
            &delta,
            &Design::from_rows(&rows).unwrap(),
            &[1.0; 7],
            Default::default(),
        )
        .unwrap();
        let rows2: Vec<_> = rows.iter().chain(&rows).cloned().collect();
        let delta2: Vec<_> = delta.iter().chain(&delta).copied().collect();
        let dup = fit_weighted_binomial(
            &delta2,
            &Design::from_rows(&rows2).unwrap(),
            &[0.5; 14],
            Default::default(),
        )
        .unwrap();
        for (a, b) in base.theta.iter().zip(&dup.theta) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn degenerate_and_separated() {
        let delta = [true, true, true];
        assert!(matches!(
            fit_weighted_binomial(&delta, &intercept_design(3), &[1.0; 3], Default::default()),
            Err(Error::DegenerateResponses)
        ));
        // Zero-weight rows do not count as responses.
        let delta = [true, false, true];
        assert!(matches!(
            fit_weighted_binomial(&delta, &intercept_design(3), &[1.0, 0.0, 1.0], Default::default()),
            Err(Error::DegenerateResponses)
        ));
        let rows: Vec<_> = [-2.0, -1.0, 1.0, 2.0].iter().map(|&x| glm_basis(x)).collect();
        let delta = [false, false, true, true];
        assert!(matches!(
            fit_weighted_binomial(&delta, &Design::from_rows(&rows).unwrap(), &[1.0; 4], Default::default()),
            Err(Error::Separation { .. })
        ));
    }

    #[test]
    fn predictions() {
        assert_eq!(predict_prob(&[0.0, 0.0], &glm_basis(3.0)).unwrap(), 0.5);
        let p = predict_prob(&[40.0, 0.0], &glm_basis(1.0)).unwrap();
        assert!(p > 1.0 - 1e-15 && p < 1.0);
        for x in [-5.0, 0.0, 7.0] {
            let p = predict_prob(&[-1.098612, 0.0], &glm_basis(x)).unwrap();
            assert!((p - 0.25).abs() < 1e-6);
        }
        assert!(predict_prob(&[0.0], &glm_basis(1.0)).is_err());
    }

    #[test]
    fn objective_helper_agrees_with_fit_internals() {
        let rows: Vec<_> = [-1.0, 0.5, 2.0].iter().map(|&x| glm_basis(x)).collect();
        let design = Design::from_rows(&rows).unwrap();
        let v = binomial_objective(&[0.0, 0.0], &[true, false, true], &design, &[1.0, 2.0, 0.0]);
        assert!((v - 3.0 * 0.5f64.ln()).abs() < 1e-12);
    }
}

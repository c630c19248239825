//! Cross-validated predictiveness curve `R(v)` on a quantile grid, and its
//! inverse `R^{-1}(p)`.
//!
//! For one split the pipeline is: fit the working Fine–Gray model on the
//! training half, score the test half, fit censoring weights and the
//! IPCW-weighted binomial model of the `tau`-year event on a basis of the
//! score, then read the fitted risk at the weighted score quantiles. Halves
//! are swapped and averaged, and the average is repeated over random splits.

use rayon::prelude::*;

use crate::binomial::{fit_weighted_binomial, BinomialOptions, Design};
use crate::error::{Error, Result, Stage};
use crate::finegray::{fg_fit, FgOptions};
use crate::ipcw::{fit_censoring_km, ipcw_rows};
use crate::model::{dot, two_fold_split, Dataset, Parameterization, Split, StudyConfig};
use crate::rng::{stream, Domain};
use crate::spline::Basis;
use crate::stats::expit;

/// Weighted empirical CDF with left-continuous inverse.
#[derive(Debug, Clone)]
pub struct WeightedEcdf {
    values: Vec<f64>,
    cumulative: Vec<f64>,
    total: f64,
}

/// Relative slack when comparing cumulative weight with `v * total`, so that
/// decimal grid levels hit their intended order statistic.
const QUANTILE_SLACK: f64 = 1e-12;

impl WeightedEcdf {
    pub fn new(values: &[f64], weights: &[f64]) -> Result<WeightedEcdf> {
        if values.len() != weights.len() {
            return Err(Error::DimensionMismatch { expected: values.len(), found: weights.len() });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidWeights);
        }
        let mut pairs: Vec<(f64, f64)> = values
            .iter()
            .zip(weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&v, &w)| (v, w))
            .collect();
        if pairs.is_empty() {
            return Err(Error::EmptyInput);
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut acc = 0.0;
        let cumulative = pairs
            .iter()
            .map(|&(_, w)| {
                acc += w;
                acc
            })
            .collect();
        Ok(WeightedEcdf { values: pairs.into_iter().map(|p| p.0).collect(), cumulative, total: acc })
    }

    /// Smallest value `x` with `F(x) >= v`.
    pub fn quantile(&self, v: f64) -> f64 {
        let target = v * self.total * (1.0 - QUANTILE_SLACK);
        let k = self.cumulative.partition_point(|&c| c < target);
        self.values[k.min(self.values.len() - 1)]
    }

    pub fn distinct_values(&self) -> usize {
        1 + self.values.windows(2).filter(|w| w[0] != w[1]).count()
    }
}

/// Weighted quantile: the smallest `x` among `values` whose weighted ECDF reaches `v`.
pub fn weighted_quantile(values: &[f64], weights: &[f64], v: f64) -> Result<f64> {
    Ok(WeightedEcdf::new(values, weights)?.quantile(v))
}

/// Predictiveness curve on a quantile grid, with optional pointwise inference.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveEstimate {
    pub v_grid: Vec<f64>,
    pub r_hat: Vec<f64>,
    pub se: Option<Vec<f64>>,
    pub ci_lo: Option<Vec<f64>>,
    pub ci_hi: Option<Vec<f64>>,
    pub tau: f64,
    pub parameterization: Parameterization,
}

impl CurveEstimate {
    pub fn point(v_grid: Vec<f64>, r_hat: Vec<f64>, tau: f64, parameterization: Parameterization) -> Self {
        CurveEstimate { v_grid, r_hat, se: None, ci_lo: None, ci_hi: None, tau, parameterization }
    }

    /// Index of grid point `v`, if present.
    pub fn index_of(&self, v: f64) -> Option<usize> {
        self.v_grid.iter().position(|&g| (g - v).abs() < 1e-9)
    }
}

/// `R^{-1}(p)` on a grid of risk thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseCurve {
    pub p_grid: Vec<f64>,
    pub proportion: Vec<f64>,
    pub se: Option<Vec<f64>>,
    pub ci_lo: Option<Vec<f64>>,
    pub ci_hi: Option<Vec<f64>>,
}

/// Population grid `0.01, ..., 0.99` over which sublevel-set proportions are measured.
pub fn population_grid() -> Vec<f64> {
    (1..100).map(|i| i as f64 / 100.0).collect()
}

/// Curve values on the population grid. Below the first grid point the curve
/// is held at its first value, above the last at its last value, and between
/// grid points it is interpolated linearly.
fn extended_values(curve: &CurveEstimate) -> Vec<f64> {
    let g = &curve.v_grid;
    let r = &curve.r_hat;
    population_grid()
        .into_iter()
        .map(|v| {
            let k = g.partition_point(|&x| x < v - 1e-12);
            if k == 0 {
                r[0]
            } else if k >= g.len() {
                r[g.len() - 1]
            } else if (g[k] - v).abs() <= 1e-12 {
                r[k]
            } else {
                let t = (v - g[k - 1]) / (g[k] - g[k - 1]);
                r[k - 1] + t * (r[k] - r[k - 1])
            }
        })
        .collect()
}

fn sublevel_fraction(values: &[f64], p: f64) -> f64 {
    values.iter().filter(|&&r| r < p).count() as f64 / values.len() as f64
}

/// Proportion of the population grid whose (extended) curve value lies below `p`.
/// Valid for non-monotone curves.
pub fn inverse_curve(curve: &CurveEstimate, p: f64) -> f64 {
    sublevel_fraction(&extended_values(curve), p)
}

/// [`inverse_curve`] over a grid of thresholds.
pub fn inverse_curve_on(curve: &CurveEstimate, p_grid: &[f64]) -> InverseCurve {
    let ext = extended_values(curve);
    InverseCurve {
        p_grid: p_grid.to_vec(),
        proportion: p_grid.iter().map(|&p| sublevel_fraction(&ext, p)).collect(),
        se: None,
        ci_lo: None,
        ci_hi: None,
    }
}

/// Sublevel-set proportion for a curve known at every population-grid point.
pub fn sublevel_proportion(r_on_population_grid: &[f64], p: f64) -> f64 {
    sublevel_fraction(r_on_population_grid, p)
}

/// One training/test assignment with its data materialized.
#[derive(Debug, Clone)]
pub(crate) struct PreparedHalf {
    train_idx: Vec<usize>,
    test_idx: Vec<usize>,
    train: Dataset,
    test: Dataset,
}

impl PreparedHalf {
    pub(crate) fn new(dataset: &Dataset, train_idx: &[usize], test_idx: &[usize]) -> PreparedHalf {
        PreparedHalf {
            train_idx: train_idx.to_vec(),
            test_idx: test_idx.to_vec(),
            train: dataset.subset(train_idx),
            test: dataset.subset(test_idx),
        }
    }
}

/// A split prepared in both directions.
#[derive(Debug, Clone)]
pub(crate) struct PreparedSplit {
    pub(crate) split: Split,
    first: PreparedHalf,
    second: PreparedHalf,
}

impl PreparedSplit {
    pub(crate) fn new(dataset: &Dataset, split: Split) -> PreparedSplit {
        let first = PreparedHalf::new(dataset, &split.idx_a, &split.idx_b);
        let second = PreparedHalf::new(dataset, &split.idx_b, &split.idx_a);
        PreparedSplit { split, first, second }
    }
}

fn gather(weights: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| weights[i]).collect()
}

fn half_curve(half: &PreparedHalf, weights: &[f64], cfg: &StudyConfig, grid: &[f64]) -> Result<Vec<f64>> {
    let w_train = gather(weights, &half.train_idx);
    let fit = fg_fit(&half.train, &w_train, FgOptions::default()).map_err(Error::at(Stage::FineGray))?;
    if !fit.converged {
        return Err(Error::at(Stage::FineGray)(Error::NotConverged {
            iterations: fit.iterations,
            gradient_norm: fit.final_gradient_norm,
        }));
    }
    let w_test = gather(weights, &half.test_idx);
    curve_from_beta(&half.test, &fit.beta, &w_test, cfg, grid)
}

/// Stages after the Fine–Gray fit: score, censoring weights, basis, binomial
/// fit and read-out at the weighted score quantiles.
fn curve_from_beta(
    test: &Dataset,
    beta: &[f64],
    w_test: &[f64],
    cfg: &StudyConfig,
    grid: &[f64],
) -> Result<Vec<f64>> {
    let scores: Vec<f64> = test.records().iter().map(|r| dot(&r.z, beta)).collect();

    let ghat = fit_censoring_km(test, w_test).map_err(Error::at(Stage::Censoring))?;
    let rows = ipcw_rows(test, &ghat, cfg.tau).map_err(Error::at(Stage::Censoring))?;

    let ecdf = WeightedEcdf::new(&scores, w_test).map_err(Error::at(Stage::Quantile))?;
    let basis = Basis::from_ecdf(cfg.parameterization, &ecdf, cfg.knots_q).map_err(Error::at(Stage::Knots))?;

    let mut design = Design::with_width(basis.width());
    for &s in &scores {
        basis.fill(s, design.push_row());
    }
    let delta: Vec<bool> = rows.iter().map(|r| r.delta_tau).collect();
    let weights: Vec<f64> = rows.iter().zip(w_test).map(|(r, w)| r.weight * w).collect();
    let theta = fit_weighted_binomial(&delta, &design, &weights, BinomialOptions::default())
        .map_err(Error::at(Stage::Binomial))?;
    if !theta.converged {
        return Err(Error::at(Stage::Binomial)(Error::NotConverged {
            iterations: theta.iterations,
            gradient_norm: theta.final_gradient_norm,
        }));
    }

    let mut row = vec![0.0; basis.width()];
    Ok(grid
        .iter()
        .map(|&v| {
            basis.fill(ecdf.quantile(v), &mut row);
            expit(dot(&theta.theta, &row))
        })
        .collect())
}

fn check_weights_len(dataset: &Dataset, weights: &[f64]) -> Result<()> {
    if weights.len() != dataset.len() {
        return Err(Error::DimensionMismatch { expected: dataset.len(), found: weights.len() });
    }
    Ok(())
}

/// Curve from one training/test assignment. `pert_weights` has one entry per
/// record of `dataset` (all ones for the point estimate).
pub fn estimate_half(
    dataset: &Dataset,
    train_idx: &[usize],
    test_idx: &[usize],
    pert_weights: &[f64],
    cfg: &StudyConfig,
) -> Result<CurveEstimate> {
    check_weights_len(dataset, pert_weights)?;
    let grid = cfg.grid();
    let half = PreparedHalf::new(dataset, train_idx, test_idx);
    let r_hat = half_curve(&half, pert_weights, cfg, &grid)?;
    Ok(CurveEstimate::point(grid, r_hat, cfg.tau, cfg.parameterization))
}

/// Curve from the test half with a supplied score coefficient, bypassing the
/// Fine–Gray fit.
pub fn estimate_half_with_beta(
    dataset: &Dataset,
    test_idx: &[usize],
    beta: &[f64],
    pert_weights: &[f64],
    cfg: &StudyConfig,
) -> Result<CurveEstimate> {
    check_weights_len(dataset, pert_weights)?;
    if beta.len() != dataset.d() {
        return Err(Error::DimensionMismatch { expected: dataset.d(), found: beta.len() });
    }
    let grid = cfg.grid();
    let test = dataset.subset(test_idx);
    let r_hat = curve_from_beta(&test, beta, &gather(pert_weights, test_idx), cfg, &grid)?;
    Ok(CurveEstimate::point(grid, r_hat, cfg.tau, cfg.parameterization))
}

/// Average of the two directions of one split.
pub(crate) fn repetition_curve(
    prepared: &PreparedSplit,
    weights: &[f64],
    cfg: &StudyConfig,
    grid: &[f64],
) -> Result<Vec<f64>> {
    let r1 = half_curve(&prepared.first, weights, cfg, grid)?;
    let r2 = half_curve(&prepared.second, weights, cfg, grid)?;
    Ok(r1.iter().zip(&r2).map(|(a, b)| (a + b) / 2.0).collect())
}

/// Pointwise mean, accumulated in order.
pub(crate) fn mean_curves(curves: &[Vec<f64>]) -> Vec<f64> {
    let m = curves[0].len();
    let mut acc = vec![0.0; m];
    for c in curves {
        for (a, x) in acc.iter_mut().zip(c) {
            *a += x;
        }
    }
    acc.iter().map(|a| a / curves.len() as f64).collect()
}

/// Result of repeated two-fold cross-validation.
#[derive(Debug, Clone)]
pub struct CvEstimate {
    pub curve: CurveEstimate,
    /// Splits whose repetition succeeded, in repetition order.
    pub splits: Vec<Split>,
    pub attempted: usize,
    /// Diagnostics of discarded repetitions.
    pub failures: Vec<String>,
    pub(crate) prepared: Vec<PreparedSplit>,
}

/// Repeated two-fold cross-validated curve. Repetition `r` draws its split
/// from the stream `(cfg.seed, Split, r)`; failed repetitions are discarded.
pub fn cv_estimate(dataset: &Dataset, cfg: &StudyConfig) -> Result<CvEstimate> {
    cfg.validate()?;
    let grid = cfg.grid();
    let ones = vec![1.0; dataset.len()];

    let outcomes: Vec<Result<(PreparedSplit, Vec<f64>)>> = (0..cfg.cv_repeats)
        .into_par_iter()
        .map(|r| {
            let split = two_fold_split(dataset, &mut stream(cfg.seed, Domain::Split, r as u64))?;
            let prepared = PreparedSplit::new(dataset, split);
            let curve = repetition_curve(&prepared, &ones, cfg, &grid)?;
            Ok((prepared, curve))
        })
        .collect();

    let mut prepared = Vec::new();
    let mut curves = Vec::new();
    let mut failures = Vec::new();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok((p, c)) => {
                prepared.push(p);
                curves.push(c);
            }
            Err(Error::TooFewRecords { n, min }) => return Err(Error::TooFewRecords { n, min }),
            Err(e) => failures.push(format!("repetition {r}: {e}")),
        }
    }
    if curves.is_empty() {
        return Err(Error::AllRepetitionsFailed {
            attempted: cfg.cv_repeats,
            last: failures.last().cloned().unwrap_or_default(),
        });
    }

    Ok(CvEstimate {
        curve: CurveEstimate::point(grid, mean_curves(&curves), cfg.tau, cfg.parameterization),
        splits: prepared.iter().map(|p| p.split.clone()).collect(),
        attempted: cfg.cv_repeats,
        failures,
        prepared,
    })
}

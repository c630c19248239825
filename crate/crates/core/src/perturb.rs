//! Perturbation resampling: every estimation stage is re-solved under
//! independent unit-exponential subject weights, over the same cross-validation
//! splits as the point estimate. The spread of the perturbed curves estimates
//! the sampling variance, and intervals are Wald intervals on the logit scale.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::curve::{
    cv_estimate, inverse_curve_on, mean_curves, population_grid, repetition_curve, CurveEstimate,
    CvEstimate, InverseCurve, PreparedSplit,
};
use crate::error::{Error, Result};
use crate::model::{Dataset, Split, StudyConfig};
use crate::rng::{stream, Domain};
use crate::stats::{expit, logit, z_critical};

/// Largest tolerated fraction of failed replicates.
pub const MAX_REPLICATE_FAILURE: f64 = 0.10;

/// `n` independent unit-exponential weights.
pub fn draw_exp_weights<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbReplicate {
    pub e_index: usize,
    pub r_hat_e: Vec<f64>,
    pub rinv_e: Option<Vec<f64>>,
}

fn replicate_curve(prepared: &[PreparedSplit], omega: &[f64], cfg: &StudyConfig, grid: &[f64]) -> Result<Vec<f64>> {
    let curves = prepared
        .iter()
        .map(|p| repetition_curve(p, omega, cfg, grid))
        .collect::<Result<Vec<_>>>()?;
    if curves.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(mean_curves(&curves))
}

/// One perturbed replicate of the cross-validated curve over `splits`, with
/// `omega` as the subject weights at every stage.
pub fn perturbed_replicate(
    dataset: &Dataset,
    splits: &[Split],
    omega: &[f64],
    cfg: &StudyConfig,
) -> Result<PerturbReplicate> {
    if omega.len() != dataset.len() {
        return Err(Error::DimensionMismatch { expected: dataset.len(), found: omega.len() });
    }
    let grid = cfg.grid();
    let prepared: Vec<PreparedSplit> =
        splits.iter().map(|s| PreparedSplit::new(dataset, s.clone())).collect();
    let r_hat_e = replicate_curve(&prepared, omega, cfg, &grid)?;
    Ok(PerturbReplicate { e_index: 0, r_hat_e, rinv_e: None })
}

/// Pointwise standard errors and confidence limits.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    pub se: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    pub level: f64,
    pub e_used: usize,
}

fn sample_sd(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let ss: f64 = values.map(|x| (x - mean) * (x - mean)).sum();
    (ss / (n - 1.0)).sqrt()
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("confidence level must be in (0, 1), got {level}")));
    }
    Ok(())
}

/// Logit-scale Wald intervals for the curve: `se` is the sample SD of the
/// replicates and `expit(logit(R) +/- z * se / (R (1 - R)))` the limits.
pub fn variance_ci(point: &CurveEstimate, replicates: &[PerturbReplicate], level: f64) -> Result<InferenceResult> {
    check_level(level)?;
    if replicates.len() < 2 {
        return Err(Error::TooFewReplicates { found: replicates.len(), required: 2 });
    }
    let z = z_critical(level);
    let m = point.r_hat.len();
    let mut se = Vec::with_capacity(m);
    let mut ci_lo = Vec::with_capacity(m);
    let mut ci_hi = Vec::with_capacity(m);
    for (j, &r) in point.r_hat.iter().enumerate() {
        let s = sample_sd(replicates.iter().map(|rep| rep.r_hat_e[j]));
        let half = z * s / (r * (1.0 - r));
        let centre = logit(r);
        se.push(s);
        if s == 0.0 {
            ci_lo.push(r);
            ci_hi.push(r);
        } else {
            ci_lo.push(expit(centre - half));
            ci_hi.push(expit(centre + half));
        }
    }
    Ok(InferenceResult { se, ci_lo, ci_hi, level, e_used: replicates.len() })
}

/// Wald intervals for `R^{-1}(p)` on the proportion scale, clipped to [0, 1].
pub fn inverse_variance_ci(point: &InverseCurve, replicates: &[PerturbReplicate], level: f64) -> Result<InferenceResult> {
    check_level(level)?;
    let usable: Vec<&Vec<f64>> = replicates.iter().filter_map(|r| r.rinv_e.as_ref()).collect();
    if usable.len() < 2 {
        return Err(Error::TooFewReplicates { found: usable.len(), required: 2 });
    }
    let z = z_critical(level);
    let mut out = InferenceResult {
        se: Vec::new(),
        ci_lo: Vec::new(),
        ci_hi: Vec::new(),
        level,
        e_used: usable.len(),
    };
    for (j, &x) in point.proportion.iter().enumerate() {
        let s = sample_sd(usable.iter().map(|r| r[j]));
        out.se.push(s);
        out.ci_lo.push((x - z * s).clamp(0.0, 1.0));
        out.ci_hi.push((x + z * s).clamp(0.0, 1.0));
    }
    Ok(out)
}

/// All perturbation replicates of a cross-validated estimate.
#[derive(Debug, Clone)]
pub struct PerturbOutcome {
    pub replicates: Vec<PerturbReplicate>,
    pub attempted: usize,
    pub failures: Vec<String>,
}

/// Run `cfg.perturb_e` replicates. Replicate `e` draws its weights from the
/// stream `(cfg.seed, Perturb, e)`; `p_grid` adds inverse-curve values.
pub fn run_perturbation(
    dataset: &Dataset,
    cv: &CvEstimate,
    cfg: &StudyConfig,
    p_grid: Option<&[f64]>,
) -> Result<PerturbOutcome> {
    let grid = cfg.grid();
    let n = dataset.len();
    let tau = cfg.tau;
    let param = cfg.parameterization;

    let outcomes: Vec<Result<PerturbReplicate>> = (0..cfg.perturb_e)
        .into_par_iter()
        .map(|e| {
            let omega = draw_exp_weights(n, &mut stream(cfg.seed, Domain::Perturb, e as u64));
            let r_hat_e = replicate_curve(&cv.prepared, &omega, cfg, &grid)?;
            let rinv_e = p_grid.map(|pg| {
                let c = CurveEstimate::point(grid.clone(), r_hat_e.clone(), tau, param);
                inverse_curve_on(&c, pg).proportion
            });
            Ok(PerturbReplicate { e_index: e, r_hat_e, rinv_e })
        })
        .collect();

    let mut replicates = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (e, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(r) => replicates.push(r),
            Err(err) => failures.push(format!("replicate {e}: {err}")),
        }
    }
    if failures.len() as f64 > MAX_REPLICATE_FAILURE * cfg.perturb_e as f64 {
        return Err(Error::ReplicateFailures { failed: failures.len(), total: cfg.perturb_e });
    }
    Ok(PerturbOutcome { replicates, attempted: cfg.perturb_e, failures })
}

/// Point estimate with pointwise inference for the curve and its inverse.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub curve: CurveEstimate,
    pub inverse: InverseCurve,
    pub splits: Vec<Split>,
    pub warnings: Vec<String>,
    pub replicates_used: usize,
}

/// Cross-validated estimate plus perturbation inference at confidence `level`.
/// The inverse curve is reported on `p_grid` (default `0.01, ..., 0.99`).
pub fn analyze(dataset: &Dataset, cfg: &StudyConfig, level: f64, p_grid: Option<&[f64]>) -> Result<Analysis> {
    check_level(level)?;
    let cv = cv_estimate(dataset, cfg)?;
    let default_p = population_grid();
    let p_grid = p_grid.unwrap_or(&default_p);
    let pert = run_perturbation(dataset, &cv, cfg, Some(p_grid))?;

    let mut curve = cv.curve.clone();
    let inf = variance_ci(&curve, &pert.replicates, level)?;
    curve.se = Some(inf.se);
    curve.ci_lo = Some(inf.ci_lo);
    curve.ci_hi = Some(inf.ci_hi);

    let mut inverse = inverse_curve_on(&curve, p_grid);
    let inv_inf = inverse_variance_ci(&inverse, &pert.replicates, level)?;
    inverse.se = Some(inv_inf.se);
    inverse.ci_lo = Some(inv_inf.ci_lo);
    inverse.ci_hi = Some(inv_inf.ci_hi);

    let mut warnings = cv.failures.clone();
    warnings.extend(pert.failures.iter().cloned());
    Ok(Analysis {
        curve,
        inverse,
        splits: cv.splits,
        warnings,
        replicates_used: pert.replicates.len(),
    })
}

//! Predictiveness curves for competing-risks prediction models.
//!
//! A working Fine–Gray model produces a linear risk score. The curve `R(v)`
//! gives the `tau`-year cumulative incidence of the cause of interest at the
//! `v`-th quantile of that score; it is estimated with repeated two-fold
//! cross-validation and an IPCW-weighted binomial model on a spline basis of
//! the score. Perturbation resampling supplies standard errors and
//! logit-scale confidence intervals. [`simgen`] and [`study`] reproduce
//! Monte-Carlo evaluations of the procedure.

pub mod binomial;
pub mod curve;
pub mod error;
pub mod finegray;
pub mod io;
pub mod ipcw;
pub mod model;
pub mod perturb;
pub mod rng;
pub mod simgen;
pub mod spline;
pub mod stats;
pub mod study;

pub use binomial::{binomial_objective, fit_weighted_binomial, predict_prob, BinomialOptions, Design, ThetaFit};
pub use curve::{
    cv_estimate, estimate_half, estimate_half_with_beta, inverse_curve, inverse_curve_on, population_grid,
    weighted_quantile, CurveEstimate, CvEstimate, InverseCurve, WeightedEcdf,
};
pub use error::{Error, Result, Stage};
pub use finegray::{fg_fit, fg_loglik, fg_score, FGFit, FgOptions};
pub use io::{fmt_sig, read_dataset_csv, CsvDataset};
pub use ipcw::{determinable, fit_censoring_km, ipcw_rows, IpcwRow, StepFunction};
pub use model::{
    linear_risk_score, two_fold_split, validate_dataset, Dataset, Link, Parameterization, RawRecord, Split,
    StudyConfig, SubjectRecord,
};
pub use perturb::{
    analyze, draw_exp_weights, perturbed_replicate, run_perturbation, variance_ci, Analysis, InferenceResult,
    PerturbOutcome, PerturbReplicate,
};
pub use simgen::{
    gen_setting1, gen_setting2, true_curve, true_curve_setting1, true_curve_setting2, Scenario, Setting, Setting1,
    Setting2, TrueCurve, TruthOptions,
};
pub use spline::{default_knots, glm_basis, rcs_basis, weighted_knots, Basis, BasisRow, KnotSet};
pub use study::{run_sim_study, Metric, PointSummary, StudyReport, StudySpec};

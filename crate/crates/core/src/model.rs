//! Data model shared by every estimation stage: subject records, validated
//! datasets, run configuration, risk scores and the randomized two-fold split.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observation: observed time `y = min(T, C)`, event code (0 = censored,
/// 1 = cause of interest, >= 2 = competing causes) and baseline covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub y: f64,
    pub event: u32,
    pub z: Vec<f64>,
}

impl SubjectRecord {
    pub fn new(y: f64, event: u32, z: Vec<f64>) -> Self {
        Self { y, event, z }
    }
}

/// A validated collection of records sharing covariate dimension `d`, with
/// event codes in `0..=k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<SubjectRecord>,
    d: usize,
    k: u32,
}

/// Raw, unvalidated input row. Event codes are signed so that malformed input
/// can be reported instead of silently wrapped.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub y: f64,
    pub event: i64,
    pub z: Vec<f64>,
}

impl From<SubjectRecord> for RawRecord {
    fn from(r: SubjectRecord) -> Self {
        RawRecord { y: r.y, event: i64::from(r.event), z: r.z }
    }
}

/// Validate raw rows into a [`Dataset`].
///
/// `declared_k` fixes the number of causes; when absent it is inferred as the
/// largest observed event code (at least 1).
pub fn validate_dataset<R: Into<RawRecord>>(
    raw: impl IntoIterator<Item = R>,
    declared_k: Option<u32>,
) -> Result<Dataset> {
    let raw: Vec<RawRecord> = raw.into_iter().map(Into::into).collect();
    let first = raw.first().ok_or(Error::EmptyInput)?;
    let d = first.z.len();

    for (index, r) in raw.iter().enumerate() {
        if !r.y.is_finite() || r.z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if r.y < 0.0 {
            return Err(Error::NegativeTime { index, y: r.y });
        }
        if r.z.len() != d {
            return Err(Error::RaggedCovariates { index, expected: d, found: r.z.len() });
        }
        let max_code = i64::from(declared_k.unwrap_or(u32::MAX));
        if r.event < 0 || r.event > max_code {
            return Err(Error::BadEventCode { index, event: r.event, k: declared_k.unwrap_or(0) });
        }
    }

    let observed_k = raw.iter().map(|r| r.event as u32).max().unwrap_or(0).max(1);
    let k = declared_k.unwrap_or(observed_k);
    if !raw.iter().any(|r| r.event == 1) {
        return Err(Error::NoCause1Events);
    }

    let records = raw
        .into_iter()
        .map(|r| SubjectRecord { y: r.y, event: r.event as u32, z: r.z })
        .collect();
    Ok(Dataset { records, d, k })
}

impl Dataset {
    pub fn records(&self) -> &[SubjectRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Covariate dimension.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of causes.
    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn max_time(&self) -> f64 {
        self.records.iter().map(|r| r.y).fold(0.0, f64::max)
    }

    pub fn count_event(&self, code: u32) -> usize {
        self.records.iter().filter(|r| r.event == code).count()
    }

    /// Records at `idx`, in that order. The result may contain no cause-1
    /// events; fitting routines check that themselves.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            records: idx.iter().map(|&i| self.records[i].clone()).collect(),
            d: self.d,
            k: self.k,
        }
    }

    /// Construct without validation. Callers guarantee the invariants.
    pub(crate) fn from_parts(records: Vec<SubjectRecord>, d: usize, k: u32) -> Dataset {
        Dataset { records, d, k }
    }
}

/// Linear risk score `z . beta`.
pub fn linear_risk_score(z: &[f64], beta: &[f64]) -> Result<f64> {
    if z.len() != beta.len() {
        return Err(Error::DimensionMismatch { expected: beta.len(), found: z.len() });
    }
    Ok(dot(z, beta))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Disjoint halves of a dataset. `idx_a` receives the extra record when `n` is odd.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub idx_a: Vec<usize>,
    pub idx_b: Vec<usize>,
}

impl Split {
    /// The same partition with the roles of the halves exchanged.
    pub fn swapped(&self) -> Split {
        Split { idx_a: self.idx_b.clone(), idx_b: self.idx_a.clone() }
    }
}

/// Uniformly random partition into halves of sizes `ceil(n/2)` and `floor(n/2)`.
pub fn two_fold_split<R: Rng + ?Sized>(dataset: &Dataset, rng: &mut R) -> Result<Split> {
    let n = dataset.len();
    if n < 4 {
        return Err(Error::TooFewRecords { n, min: 4 });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut idx_b = idx.split_off(n.div_ceil(2));
    let mut idx_a = idx;
    idx_a.sort_unstable();
    idx_b.sort_unstable();
    Ok(Split { idx_a, idx_b })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameterization {
    /// Intercept plus the linear score term only.
    Glm,
    /// Restricted cubic spline in the score.
    Rcs,
}

impl std::str::FromStr for Parameterization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "glm" => Ok(Parameterization::Glm),
            "rcs" => Ok(Parameterization::Rcs),
            other => Err(Error::Parse(format!("unknown parameterization {other:?}"))),
        }
    }
}

impl std::fmt::Display for Parameterization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Parameterization::Glm => "glm",
            Parameterization::Rcs => "rcs",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    #[default]
    Logit,
}

/// Run configuration. Field names double as keys in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub tau: f64,
    pub knots_q: usize,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_step: f64,
    pub cv_repeats: usize,
    pub perturb_e: usize,
    pub seed: u64,
    pub parameterization: Parameterization,
    pub link: Link,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            tau: 4.0,
            knots_q: 4,
            grid_lo: 0.05,
            grid_hi: 0.95,
            grid_step: 0.01,
            cv_repeats: 5,
            perturb_e: 400,
            seed: 1,
            parameterization: Parameterization::Rcs,
            link: Link::Logit,
        }
    }
}

const GRID_EPS: f64 = 1e-9;

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(3..=5).contains(&self.knots_q) {
            return bad(format!("knots_q must be 3, 4 or 5, got {}", self.knots_q));
        }
        if !(self.grid_step.is_finite() && self.grid_step > 0.0) {
            return bad(format!("grid_step must be positive, got {}", self.grid_step));
        }
        if !(self.grid_lo > 0.0 && self.grid_lo < self.grid_hi && self.grid_hi < 1.0) {
            return bad(format!(
                "need 0 < grid_lo < grid_hi < 1, got [{}, {}]",
                self.grid_lo, self.grid_hi
            ));
        }
        if self.grid_lo + GRID_EPS < self.grid_step || self.grid_hi > 1.0 - self.grid_step + GRID_EPS {
            return bad("grid must exclude the boundary regions (grid_lo >= grid_step, grid_hi <= 1 - grid_step)".into());
        }
        if self.grid().len() < self.knots_q + 2 {
            return bad(format!("grid needs at least {} points", self.knots_q + 2));
        }
        if self.cv_repeats == 0 {
            return bad("cv_repeats must be positive".into());
        }
        if self.perturb_e == 0 {
            return bad("perturb_e must be positive".into());
        }
        Ok(())
    }

    /// Evaluation grid `grid_lo, grid_lo + step, ..., <= grid_hi`, snapped to
    /// 1e-10 so that decimal steps land on their decimal values.
    pub fn grid(&self) -> Vec<f64> {
        let count = ((self.grid_hi - self.grid_lo) / self.grid_step + GRID_EPS).floor() as usize + 1;
        (0..count)
            .map(|i| snap(self.grid_lo + i as f64 * self.grid_step))
            .collect()
    }
}

pub(crate) fn snap(v: f64) -> f64 {
    (v * 1e10).round() / 1e10
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    fn raw(y: f64, event: i64, z: &[f64]) -> RawRecord {
        RawRecord { y, event, z: z.to_vec() }
    }

    #[test]
    fn validates_well_formed_input() {
        let ds = validate_dataset([raw(1.0, 1, &[0.2]), raw(2.0, 0, &[-0.1])], None).unwrap();
        assert_eq!((ds.len(), ds.d(), ds.k()), (2, 1, 1));
    }

    #[test]
    fn rejects_bad_records() {
        assert!(matches!(
            validate_dataset([raw(-1.0, 1, &[0.0])], None),
            Err(Error::NegativeTime { .. })
        ));
        assert!(matches!(
            validate_dataset([raw(1.0, 3, &[0.0]), raw(2.0, 1, &[0.0])], Some(2)),
            Err(Error::BadEventCode { index: 0, event: 3, .. })
        ));
        assert!(matches!(
            validate_dataset([raw(1.0, 1, &[0.0]), raw(2.0, 1, &[0.0, 1.0])], None),
            Err(Error::RaggedCovariates { index: 1, .. })
        ));
        assert!(matches!(
            validate_dataset([raw(1.0, 1, &[f64::NAN])], None),
            Err(Error::NonFinite { index: 0 })
        ));
        assert!(matches!(
            validate_dataset([raw(1.0, 2, &[0.0]), raw(2.0, 0, &[0.0])], None),
            Err(Error::NoCause1Events)
        ));
        assert!(matches!(validate_dataset(Vec::<RawRecord>::new(), None), Err(Error::EmptyInput)));
        assert!(matches!(
            validate_dataset([raw(1.0, -1, &[0.0])], None),
            Err(Error::BadEventCode { .. })
        ));
    }

    #[test]
    fn infers_k_from_max_code() {
        let ds = validate_dataset([raw(1.0, 1, &[]), raw(2.0, 3, &[])], None).unwrap();
        assert_eq!(ds.k(), 3);
        assert_eq!(ds.d(), 0);
    }

    #[test]
    fn risk_score_examples() {
        assert_eq!(linear_risk_score(&[1.0, 1.0], &[0.5, 0.5]).unwrap(), 1.0);
        assert_eq!(linear_risk_score(&[3.7, -2.1], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(linear_risk_score(&[2.0], &[1.0]).unwrap(), 2.0);
        assert!(matches!(
            linear_risk_score(&[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn toy(n: usize) -> Dataset {
        validate_dataset((0..n).map(|i| raw(i as f64 + 1.0, 1, &[0.0])), None).unwrap()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let mut rng = stream(7, Domain::Split, 0);
        let s = two_fold_split(&toy(10), &mut rng).unwrap();
        assert_eq!((s.idx_a.len(), s.idx_b.len()), (5, 5));
        let s = two_fold_split(&toy(11), &mut rng).unwrap();
        assert_eq!((s.idx_a.len(), s.idx_b.len()), (6, 5));

        let a = two_fold_split(&toy(30), &mut stream(7, Domain::Split, 3)).unwrap();
        let b = two_fold_split(&toy(30), &mut stream(7, Domain::Split, 3)).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            two_fold_split(&toy(3), &mut rng),
            Err(Error::TooFewRecords { n: 3, .. })
        ));
    }

    #[test]
    fn default_grid() {
        let cfg = StudyConfig::default();
        cfg.validate().unwrap();
        let g = cfg.grid();
        assert_eq!(g.len(), 91);
        assert_eq!(g[0], 0.05);
        assert_eq!(g[5], 0.1);
        assert_eq!(g[90], 0.95);
    }

    #[test]
    fn config_rejects_boundary_grid() {
        let cfg = StudyConfig { grid_lo: 0.005, ..StudyConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = StudyConfig { knots_q: 6, ..StudyConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = StudyConfig { grid_lo: 0.5, grid_hi: 0.53, ..StudyConfig::default() };
        assert!(cfg.validate().is_err());
    }
}

//! Censoring survival `G(t) = P(C >= t)` by weighted Kaplan–Meier, and the
//! inverse-probability-of-censoring weights of the `tau`-year binomial objective.

use crate::error::{Error, Result};
use crate::model::Dataset;

/// Right-continuous, nonincreasing step function starting at `value_at_zero`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    jump_times: Vec<f64>,
    values: Vec<f64>,
    value_at_zero: f64,
}

impl StepFunction {
    pub fn new(jump_times: Vec<f64>, values: Vec<f64>, value_at_zero: f64) -> Self {
        debug_assert_eq!(jump_times.len(), values.len());
        debug_assert!(jump_times.windows(2).all(|w| w[0] < w[1]));
        StepFunction { jump_times, values, value_at_zero }
    }

    /// The constant function 1.
    pub fn one() -> Self {
        StepFunction::new(Vec::new(), Vec::new(), 1.0)
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at_zero(&self) -> f64 {
        self.value_at_zero
    }

    /// Right-continuous value `S(t)`.
    pub fn value(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&s| s <= t);
        if k == 0 {
            self.value_at_zero
        } else {
            self.values[k - 1]
        }
    }

    /// Left limit `S(t-)`. For a censoring survival function this is `P(C >= t)`.
    pub fn left_limit(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&s| s < t);
        if k == 0 {
            self.value_at_zero
        } else {
            self.values[k - 1]
        }
    }
}

fn check_weights(n: usize, weights: &[f64]) -> Result<()> {
    if weights.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: weights.len() });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidWeights);
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::AllWeightsZero);
    }
    Ok(())
}

/// Weighted product-limit estimator of the censoring distribution.
///
/// Censorings (event code 0) are the "events"; failures of any cause are
/// censored observations of `C`. The risk set at `t` is every record with
/// `y >= t`, so failures tied with a censoring time stay at risk through `t`.
pub fn fit_censoring_km(dataset: &Dataset, case_weights: &[f64]) -> Result<StepFunction> {
    let records = dataset.records();
    check_weights(records.len(), case_weights)?;

    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].y.total_cmp(&records[b].y));
    Ok(km_sorted(
        order.iter().map(|&i| (records[i].y, records[i].event == 0, case_weights[i])),
    ))
}

/// Product-limit estimator over `(time, is_event, weight)` triples already
/// sorted by time.
pub(crate) fn km_sorted(sorted: impl Iterator<Item = (f64, bool, f64)> + Clone) -> StepFunction {
    let mut at_risk: f64 = sorted.clone().map(|(_, _, w)| w).sum();
    let mut surv = 1.0;
    let mut jump_times = Vec::new();
    let mut values = Vec::new();

    let mut it = sorted.peekable();
    while let Some((t, ev, w)) = it.next() {
        let mut events = if ev { w } else { 0.0 };
        let mut leaving = w;
        while let Some(&(t2, ev2, w2)) = it.peek() {
            if t2 != t {
                break;
            }
            if ev2 {
                events += w2;
            }
            leaving += w2;
            it.next();
        }
        if events > 0.0 && at_risk > 0.0 {
            surv *= 1.0 - events / at_risk;
            if surv < 0.0 || at_risk - events <= 0.0 {
                surv = 0.0;
            }
            jump_times.push(t);
            values.push(surv);
        }
        at_risk -= leaving;
    }
    StepFunction::new(jump_times, values, 1.0)
}

/// Whether `I(T <= tau, cause = 1)` is known from `(y, event)`: either the
/// failure was observed by `tau`, or the subject was followed past `tau`.
pub fn determinable(y: f64, event: u32, tau: f64) -> bool {
    (y <= tau && event >= 1) || y >= tau
}

/// Per-record IPCW data for the `tau`-year binomial objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpcwRow {
    pub determinable: bool,
    pub weight: f64,
    pub delta_tau: bool,
}

/// IPCW rows `weight_i = determinable_i / G(min(y_i, tau))` and
/// `delta_tau_i = I(y_i <= tau, event_i = 1)`.
///
/// Fails with [`Error::ZeroGhatAtDeterminable`] when `tau` lies beyond the
/// follow-up or the censoring support.
pub fn ipcw_rows(dataset: &Dataset, ghat: &StepFunction, tau: f64) -> Result<Vec<IpcwRow>> {
    let max_y = dataset.max_time();
    if tau > max_y {
        return Err(Error::ZeroGhatAtDeterminable { y: max_y, tau });
    }
    dataset
        .records()
        .iter()
        .map(|r| {
            let det = determinable(r.y, r.event, tau);
            let delta_tau = r.y <= tau && r.event == 1;
            let weight = if det {
                let g = ghat.left_limit(r.y.min(tau));
                if g <= 0.0 {
                    return Err(Error::ZeroGhatAtDeterminable { y: r.y, tau });
                }
                1.0 / g
            } else {
                0.0
            };
            Ok(IpcwRow { determinable: det, weight, delta_tau })
        })
        .collect()
}

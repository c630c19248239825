//! Data generators for the two simulation settings and their true curves.
//!
//! Setting 1 follows a Fine–Gray model for cause 1, so its curve has a closed
//! form. Setting 2 misspecifies the working model; its truth is approximated
//! by Monte Carlo.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::curve::population_grid;
use crate::finegray::{fg_fit, FgOptions};
use crate::model::{dot, Dataset, SubjectRecord};
use crate::rng::{stream, Domain};
use crate::stats::{expit, inverse_normal_cdf};
use crate::Result;

/// A subject before censoring.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent {
    pub t: f64,
    pub cause: u32,
    pub z: Vec<f64>,
}

/// Event-time model with independent censoring.
pub trait Scenario: Sync {
    fn latent<R: Rng + ?Sized>(&self, rng: &mut R) -> Latent;
    fn censoring_time<R: Rng + ?Sized>(&self, rng: &mut R) -> f64;

    /// `n` censored records. The result satisfies every per-record dataset
    /// invariant; it may lack cause-1 events when `n` is tiny.
    fn generate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Dataset {
        let records = (0..n)
            .map(|_| {
                let l = self.latent(rng);
                let c = self.censoring_time(rng);
                if l.t <= c {
                    SubjectRecord::new(l.t, l.cause, l.z)
                } else {
                    SubjectRecord::new(c, 0, l.z)
                }
            })
            .collect();
        Dataset::from_parts(records, 2, 2)
    }

    fn generate_latent<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Latent> {
        (0..n).map(|_| self.latent(rng)).collect()
    }
}

/// `scale * Beta(5, 1)` by inversion.
fn scaled_beta51<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    scale * rng.random::<f64>().powf(0.2)
}

/// Uniform on (0, 1), never exactly 0.
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Proportional subdistribution hazards for cause 1 with
/// `F1(t | Z) = 1 - [1 - gamma (1 - exp(-t/3))]^{exp(Z . beta1)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Setting1 {
    pub gamma: f64,
    pub beta1: [f64; 2],
    pub beta2: [f64; 2],
    /// Baseline rate of the exponential cause-2 times.
    pub cause2_rate: f64,
    pub censor_scale: f64,
}

/// Cause-2 baseline rate of setting 1, calibrated for a 30% censoring rate
/// (see `examples/calibrate.rs`).
pub const SETTING1_CAUSE2_RATE: f64 = 0.3476;

impl Default for Setting1 {
    fn default() -> Self {
        Setting1 {
            gamma: 0.48,
            beta1: [0.5, 0.5],
            beta2: [-0.5, 0.5],
            cause2_rate: SETTING1_CAUSE2_RATE,
            censor_scale: 4.2,
        }
    }
}

/// Cause-1 cumulative incidence of setting 1 at `t` for linear predictor `eta`.
pub fn setting1_cif(t: f64, eta: f64, gamma: f64) -> f64 {
    // 1 - [1 - gamma (1 - e^{-t/3})]^{e^eta}
    let inner = gamma * -(-t / 3.0).exp_m1();
    -(eta.exp() * (-inner).ln_1p()).exp_m1()
}

/// Time `t` with `F1(t | eta) = u * F1(inf | eta)`, i.e. a draw from the
/// cause-1 conditional law given cause 1 when `u` is uniform.
pub fn setting1_cause1_time(u: f64, eta: f64, gamma: f64) -> f64 {
    let a = eta.exp();
    let f_inf = -(a * (-gamma).ln_1p()).exp_m1();
    // 1 - gamma (1 - e^{-t/3}) = (1 - u F_inf)^{1/a}
    let s = -((-u * f_inf).ln_1p() / a).exp_m1() / gamma;
    -3.0 * (-s).ln_1p()
}

impl Scenario for Setting1 {
    fn latent<R: Rng + ?Sized>(&self, rng: &mut R) -> Latent {
        let z = vec![rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)];
        let eta1 = dot(&z, &self.beta1);
        let p1 = -(eta1.exp() * (-self.gamma).ln_1p()).exp_m1();
        if rng.random::<f64>() < p1 {
            let t = setting1_cause1_time(open_unit(rng), eta1, self.gamma);
            Latent { t, cause: 1, z }
        } else {
            let rate = self.cause2_rate * dot(&z, &self.beta2).exp();
            let t = -open_unit(rng).ln() / rate;
            Latent { t, cause: 2, z }
        }
    }

    fn censoring_time<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        scaled_beta51(self.censor_scale, rng)
    }
}

pub fn gen_setting1<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Dataset {
    Setting1::default().generate(n, rng)
}

/// Closed-form `R(v)` for setting 1. The score `0.5 Z1 + 0.5 Z2` is normal
/// with standard deviation `sqrt(0.5)`.
pub fn true_curve_setting1(v: f64, tau: f64) -> f64 {
    let s = Setting1::default();
    let sd = s.beta1.iter().map(|b| b * b).sum::<f64>().sqrt();
    setting1_cif(tau, sd * inverse_normal_cdf(v), s.gamma)
}

/// Cause-1 scale constant of setting 2, calibrated for a 30% censoring rate
/// (see `examples/calibrate.rs`).
pub const SETTING2_C1: f64 = 2.0461;

/// Logistic cause probabilities, Weibull cause-1 times and uniform cause-2
/// times; a working Fine–Gray model is misspecified here.
#[derive(Debug, Clone, PartialEq)]
pub struct Setting2 {
    pub c1: f64,
    pub censor_scale: f64,
}

impl Default for Setting2 {
    fn default() -> Self {
        Setting2 { c1: SETTING2_C1, censor_scale: 4.3 }
    }
}

impl Scenario for Setting2 {
    fn latent<R: Rng + ?Sized>(&self, rng: &mut R) -> Latent {
        let z1 = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
        let z2: f64 = rng.sample(StandardNormal);
        let p1 = 0.75 * expit(z1 + z2);
        if rng.random::<f64>() < p1 {
            // Weibull in proportional-hazards form: S(t) = exp(-lambda (t / c1)^2).
            let lambda = (-0.5 * z1 - 0.75 * z2).exp();
            let t = self.c1 * (-open_unit(rng).ln() / lambda).sqrt();
            Latent { t, cause: 1, z: vec![z1, z2] }
        } else {
            let t = 5.6 * open_unit(rng);
            Latent { t, cause: 2, z: vec![z1, z2] }
        }
    }

    fn censoring_time<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        scaled_beta51(self.censor_scale, rng)
    }
}

pub fn gen_setting2<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Dataset {
    Setting2::default().generate(n, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Setting {
    S1,
    S2,
}

impl std::str::FromStr for Setting {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" | "S1" | "s1" => Ok(Setting::S1),
            "2" | "S2" | "s2" => Ok(Setting::S2),
            other => Err(crate::Error::Parse(format!("unknown setting {other:?}"))),
        }
    }
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Setting::S1 => "1",
            Setting::S2 => "2",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrueCurve {
    pub v_grid: Vec<f64>,
    pub r_true: Vec<f64>,
    pub setting: Setting,
}

/// Monte-Carlo truth for setting 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthOptions {
    pub tau: f64,
    /// Size of each huge dataset.
    pub mc_size: usize,
    /// Independent rounds averaged.
    pub rounds: usize,
    /// Half-width of the quantile window around each `v`.
    pub half_width: f64,
    pub seed: u64,
}

impl Default for TruthOptions {
    fn default() -> Self {
        TruthOptions { tau: 4.0, mc_size: 1_000_000, rounds: 4, half_width: 0.005, seed: 20_240_601 }
    }
}

/// Setting-2 truth: in each round, fit the working model on a huge censored
/// dataset to approximate its limiting coefficient, score a fresh huge
/// uncensored dataset, and average `I(T <= tau, cause = 1)` over the subjects
/// whose score rank lies within `v +/- half_width`. Rounds are averaged.
pub fn true_curve_setting2(v_grid: &[f64], opts: &TruthOptions) -> Result<TrueCurve> {
    let r_true = true_curve_mc(&Setting2::default(), v_grid, opts)?;
    Ok(TrueCurve { v_grid: v_grid.to_vec(), r_true, setting: Setting::S2 })
}

/// Monte-Carlo truth of the working-model curve for any scenario; see
/// [`true_curve_setting2`].
pub fn true_curve_mc<S: Scenario>(scenario: &S, v_grid: &[f64], opts: &TruthOptions) -> Result<Vec<f64>> {
    let rounds: Vec<Vec<f64>> = (0..opts.rounds.max(1))
        .into_par_iter()
        .map(|round| {
            let mut rng = stream(opts.seed, Domain::Truth, round as u64);
            let fit_data = scenario.generate(opts.mc_size, &mut rng);
            let fit = fg_fit(&fit_data, &vec![1.0; fit_data.len()], FgOptions::default())?;
            drop(fit_data);

            let latent = scenario.generate_latent(opts.mc_size, &mut rng);
            let mut scored: Vec<(f64, bool)> = latent
                .iter()
                .map(|l| (dot(&l.z, &fit.beta), l.t <= opts.tau && l.cause == 1))
                .collect();
            scored.sort_by(|a, b| a.0.total_cmp(&b.0));
            let n = scored.len() as f64;
            Ok(v_grid
                .iter()
                .map(|&v| {
                    let lo = (((v - opts.half_width) * n).floor().max(0.0)) as usize;
                    let hi = (((v + opts.half_width) * n).ceil().min(n)) as usize;
                    let window = &scored[lo..hi.max(lo + 1)];
                    window.iter().filter(|s| s.1).count() as f64 / window.len() as f64
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    Ok(crate::curve::mean_curves(&rounds))
}

/// True curve of either setting on `v_grid`.
pub fn true_curve(setting: Setting, v_grid: &[f64], opts: &TruthOptions) -> Result<TrueCurve> {
    match setting {
        Setting::S1 => Ok(TrueCurve {
            v_grid: v_grid.to_vec(),
            r_true: v_grid.iter().map(|&v| true_curve_setting1(v, opts.tau)).collect(),
            setting,
        }),
        Setting::S2 => true_curve_setting2(v_grid, opts),
    }
}

/// True `R^{-1}(p)`: sublevel-set proportion of a truth on the population grid.
pub fn true_inverse(truth_on_population_grid: &TrueCurve, p: f64) -> f64 {
    debug_assert_eq!(truth_on_population_grid.v_grid, population_grid());
    crate::curve::sublevel_proportion(&truth_on_population_grid.r_true, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_dataset;

    #[test]
    fn setting1_truth_values() {
        for (v, want) in [(0.1, 0.162), (0.3, 0.260), (0.5, 0.353), (0.7, 0.469)] {
            let got = true_curve_setting1(v, 4.0);
            assert!((got - want).abs() <= 0.001, "v={v}: {got}");
        }
        let g = population_grid();
        let r: Vec<f64> = g.iter().map(|&v| true_curve_setting1(v, 4.0)).collect();
        assert!(r.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn cause1_time_round_trip() {
        for &eta in &[-2.0, -0.3, 0.0, 0.8, 2.5] {
            let f_inf = 1.0 - (1.0 - 0.48f64).powf(f64::exp(eta));
            for &u in &[1e-6, 0.1, 0.5, 0.9, 0.999999] {
                let t = setting1_cause1_time(u, eta, 0.48);
                let back = setting1_cif(t, eta, 0.48) / f_inf;
                assert!((back - u).abs() < 1e-10, "eta={eta} u={u}: {back}");
            }
        }
    }

    #[test]
    fn zero_gamma_has_no_cause1() {
        let s = Setting1 { gamma: 0.0, ..Setting1::default() };
        let ds = s.generate(2000, &mut stream(1, Domain::SimData, 0));
        assert_eq!(ds.count_event(1), 0);
    }

    #[test]
    fn generated_records_validate() {
        for seed in 0..20 {
            let ds = gen_setting2(50, &mut stream(seed, Domain::SimData, 0));
            let again = validate_dataset(ds.records().to_vec(), Some(2)).unwrap();
            assert_eq!(again, ds);
        }
    }
}

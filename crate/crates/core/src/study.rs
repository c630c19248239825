//! Monte-Carlo study harness: repeated generation, estimation and inference,
//! summarized as bias, empirical SE, average SE and coverage.

use std::io::Write;

use rayon::prelude::*;

use crate::curve::population_grid;
use crate::error::{Error, Result};
use crate::io::fmt_sig;
use crate::model::{Parameterization, StudyConfig};
use crate::perturb::analyze;
use crate::rng::{derive_seed, stream, Domain};
use crate::simgen::{true_curve, true_inverse, Scenario, Setting, Setting1, Setting2, TruthOptions};

/// Largest tolerated fraction of failed simulation replicates.
pub const MAX_SIMULATION_FAILURE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// `R(v)` at quantile levels.
    Curve,
    /// `R^{-1}(p)` at risk thresholds.
    Inverse,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rv" => Ok(Metric::Curve),
            "rinv" => Ok(Metric::Inverse),
            other => Err(Error::Parse(format!("unknown metric {other:?} (expected rv or rinv)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySpec {
    pub setting: Setting,
    pub n: usize,
    pub replicates: usize,
    pub cfg: StudyConfig,
    pub level: f64,
    pub v_points: Vec<f64>,
    pub p_points: Vec<f64>,
    /// Monte-Carlo truth settings (setting 2 only; `tau` is taken from `cfg`).
    pub truth: TruthOptions,
}

impl StudySpec {
    pub fn new(setting: Setting, n: usize, replicates: usize, cfg: StudyConfig) -> StudySpec {
        let truth = TruthOptions { tau: cfg.tau, ..TruthOptions::default() };
        StudySpec {
            setting,
            n,
            replicates,
            cfg,
            level: 0.95,
            v_points: vec![0.1, 0.3, 0.5, 0.7],
            p_points: vec![0.2, 0.3, 0.4, 0.5],
            truth,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointSummary {
    pub point: f64,
    pub truth: f64,
    pub bias: f64,
    pub ese: f64,
    pub ase: f64,
    pub cp: f64,
    pub replicates_used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub setting: Setting,
    pub parameterization: Parameterization,
    pub n: usize,
    pub replicates: usize,
    pub failed: usize,
    pub rv: Vec<PointSummary>,
    pub rinv: Vec<PointSummary>,
}

/// Per-replicate values at the requested points: (estimate, se, lo, hi).
struct ReplicateRecord {
    rv: Vec<[f64; 4]>,
    rinv: Vec<[f64; 4]>,
}

fn summarize(points: &[f64], truths: &[f64], records: &[&[[f64; 4]]]) -> Vec<PointSummary> {
    let m = records.len() as f64;
    points
        .iter()
        .enumerate()
        .map(|(j, &point)| {
            let truth = truths[j];
            let est: Vec<f64> = records.iter().map(|r| r[j][0]).collect();
            let mean = est.iter().sum::<f64>() / m;
            let ese = (est.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
            let ase = records.iter().map(|r| r[j][1]).sum::<f64>() / m;
            let covered = records.iter().filter(|r| r[j][2] <= truth && truth <= r[j][3]).count();
            PointSummary {
                point,
                truth,
                bias: mean - truth,
                ese,
                ase,
                cp: covered as f64 / m,
                replicates_used: records.len(),
            }
        })
        .collect()
}

/// Run the study. Replicate `r` draws data from the stream `(seed, SimData, r)`
/// and analyzes it with a seed derived from `(seed, SimAnalysis, r)`.
pub fn run_sim_study(spec: &StudySpec, seed: u64) -> Result<StudyReport> {
    spec.cfg.validate()?;
    if spec.replicates < 2 {
        return Err(Error::InvalidConfig("need at least 2 simulation replicates".into()));
    }
    let grid = spec.cfg.grid();
    let probe = crate::curve::CurveEstimate::point(grid, Vec::new(), spec.cfg.tau, spec.cfg.parameterization);
    let v_idx: Vec<usize> = spec
        .v_points
        .iter()
        .map(|&v| {
            probe
                .index_of(v)
                .ok_or_else(|| Error::InvalidConfig(format!("evaluation point v = {v} is not on the grid")))
        })
        .collect::<Result<_>>()?;

    let truth_opts = TruthOptions { tau: spec.cfg.tau, ..spec.truth };
    let truth = true_curve(spec.setting, &population_grid(), &truth_opts)?;
    let rv_truth: Vec<f64> = match spec.setting {
        Setting::S1 => spec.v_points.iter().map(|&v| crate::simgen::true_curve_setting1(v, spec.cfg.tau)).collect(),
        Setting::S2 => crate::simgen::true_curve_setting2(&spec.v_points, &truth_opts)?.r_true,
    };
    let rinv_truth: Vec<f64> = spec.p_points.iter().map(|&p| true_inverse(&truth, p)).collect();

    let outcomes: Vec<Result<ReplicateRecord>> = (0..spec.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, Domain::SimData, r as u64);
            let data = match spec.setting {
                Setting::S1 => Setting1::default().generate(spec.n, &mut rng),
                Setting::S2 => Setting2::default().generate(spec.n, &mut rng),
            };
            let cfg = StudyConfig { seed: derive_seed(seed, Domain::SimAnalysis, r as u64), ..spec.cfg.clone() };
            let a = analyze(&data, &cfg, spec.level, Some(&spec.p_points))?;
            let (se, lo, hi) = (a.curve.se.unwrap(), a.curve.ci_lo.unwrap(), a.curve.ci_hi.unwrap());
            let rv = v_idx.iter().map(|&i| [a.curve.r_hat[i], se[i], lo[i], hi[i]]).collect();
            let inv = &a.inverse;
            let (ise, ilo, ihi) = (inv.se.as_ref().unwrap(), inv.ci_lo.as_ref().unwrap(), inv.ci_hi.as_ref().unwrap());
            let rinv = (0..inv.p_grid.len()).map(|j| [inv.proportion[j], ise[j], ilo[j], ihi[j]]).collect();
            Ok(ReplicateRecord { rv, rinv })
        })
        .collect();

    let mut ok = Vec::new();
    let mut failed = 0;
    for o in outcomes {
        match o {
            Ok(r) => ok.push(r),
            Err(_) => failed += 1,
        }
    }
    if failed as f64 > MAX_SIMULATION_FAILURE * spec.replicates as f64 || ok.len() < 2 {
        return Err(Error::SimulationFailures { failed, total: spec.replicates });
    }

    let rv_records: Vec<&[[f64; 4]]> = ok.iter().map(|r| r.rv.as_slice()).collect();
    let rinv_records: Vec<&[[f64; 4]]> = ok.iter().map(|r| r.rinv.as_slice()).collect();
    Ok(StudyReport {
        setting: spec.setting,
        parameterization: spec.cfg.parameterization,
        n: spec.n,
        replicates: spec.replicates,
        failed,
        rv: summarize(&spec.v_points, &rv_truth, &rv_records),
        rinv: summarize(&spec.p_points, &rinv_truth, &rinv_records),
    })
}

impl StudyReport {
    pub fn summaries(&self, metric: Metric) -> &[PointSummary] {
        match metric {
            Metric::Curve => &self.rv,
            Metric::Inverse => &self.rinv,
        }
    }

    /// Table layout: one row per statistic (`True`, `Bias`, `ESE`, `ASE`,
    /// `CP`), one column per evaluation point.
    pub fn write_csv<W: Write>(&self, metric: Metric, out: W) -> Result<()> {
        let rows = self.summaries(metric);
        let axis = match metric {
            Metric::Curve => "v",
            Metric::Inverse => "p",
        };
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["setting".to_string(), "param".into(), "n".into(), "statistic".into()];
        header.extend(rows.iter().map(|r| format!("{axis}={}", fmt_sig(r.point))));
        w.write_record(&header)?;

        let stats: [(&str, fn(&PointSummary) -> f64); 5] = [
            ("True", |s| s.truth),
            ("Bias", |s| s.bias),
            ("ESE", |s| s.ese),
            ("ASE", |s| s.ase),
            ("CP", |s| s.cp),
        ];
        for (name, get) in stats {
            let mut rec = vec![self.setting.to_string(), self.parameterization.to_string(), self.n.to_string(), name.into()];
            rec.extend(rows.iter().map(|s| fmt_sig(get(s))));
            w.write_record(&rec)?;
        }
        let mut rec = vec![self.setting.to_string(), self.parameterization.to_string(), self.n.to_string(), "Used".into()];
        rec.extend(rows.iter().map(|s| s.replicates_used.to_string()));
        w.write_record(&rec)?;
        w.flush()?;
        Ok(())
    }
}

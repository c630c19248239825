//! Restricted cubic spline basis in the risk score, and the degenerate
//! linear-only basis.

use crate::curve::WeightedEcdf;
use crate::error::{Error, Result};
use crate::model::Parameterization;

/// Strictly increasing knot positions, 3 to 5 of them.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotSet(Vec<f64>);

impl KnotSet {
    pub fn new(knots: Vec<f64>) -> Result<KnotSet> {
        let q = knots.len();
        if !(3..=5).contains(&q) || knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::DegenerateScores { q });
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::DegenerateScores { q });
        }
        Ok(KnotSet(knots))
    }

    pub fn knots(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Quantile levels used to place `q` knots.
pub fn knot_levels(q: usize) -> Option<&'static [f64]> {
    match q {
        3 => Some(&[0.10, 0.50, 0.90]),
        4 => Some(&[0.05, 0.35, 0.65, 0.95]),
        5 => Some(&[0.05, 0.275, 0.50, 0.725, 0.95]),
        _ => None,
    }
}

/// Knots at the standard outer-trimmed quantiles of `scores`.
pub fn default_knots(scores: &[f64], q: usize) -> Result<KnotSet> {
    weighted_knots(scores, &vec![1.0; scores.len()], q)
}

/// Knots at the weighted quantiles of `scores`.
pub fn weighted_knots(scores: &[f64], weights: &[f64], q: usize) -> Result<KnotSet> {
    let ecdf = WeightedEcdf::new(scores, weights)?;
    knots_from_ecdf(&ecdf, q)
}

pub(crate) fn knots_from_ecdf(ecdf: &WeightedEcdf, q: usize) -> Result<KnotSet> {
    let levels = knot_levels(q).ok_or(Error::DegenerateScores { q })?;
    if ecdf.distinct_values() < q {
        return Err(Error::DegenerateScores { q });
    }
    KnotSet::new(levels.iter().map(|&v| ecdf.quantile(v)).collect())
}

/// Basis values `B(x)`, leading 1 for the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisRow {
    pub values: Vec<f64>,
}

#[inline]
fn cube_pos(x: f64) -> f64 {
    if x > 0.0 {
        x * x * x
    } else {
        0.0
    }
}

/// Write `(x, s_1(x), ..., s_{Q-2}(x))` into `out` (length `Q - 1`).
fn rcs_terms(x: f64, knots: &[f64], out: &mut [f64]) {
    let q = knots.len();
    let (t_first, t_pen, t_last) = (knots[0], knots[q - 2], knots[q - 1]);
    let norm = (t_last - t_first) * (t_last - t_first);
    let span = t_last - t_pen;
    let tail_pen = cube_pos(x - t_pen);
    let tail_last = cube_pos(x - t_last);
    out[0] = x;
    for (j, slot) in out[1..].iter_mut().enumerate() {
        let tj = knots[j];
        *slot = (cube_pos(x - tj) - tail_pen * (t_last - tj) / span + tail_last * (t_pen - tj) / span)
            / norm;
    }
}

/// Restricted cubic spline row `(1, x, s_1(x), ..., s_{Q-2}(x))`.
pub fn rcs_basis(x: f64, knots: &KnotSet) -> BasisRow {
    let mut values = vec![0.0; knots.len()];
    values[0] = 1.0;
    rcs_terms(x, knots.knots(), &mut values[1..]);
    BasisRow { values }
}

pub fn glm_basis(x: f64) -> BasisRow {
    BasisRow { values: vec![1.0, x] }
}

/// A basis choice that can fill design rows without per-row allocation.
#[derive(Debug, Clone, PartialEq)]
pub enum Basis {
    Linear,
    Spline(KnotSet),
}

impl Basis {
    /// Build the basis for `scores` under `param`; spline knots use the weighted quantiles.
    pub(crate) fn from_ecdf(param: Parameterization, ecdf: &WeightedEcdf, q: usize) -> Result<Basis> {
        Ok(match param {
            Parameterization::Glm => Basis::Linear,
            Parameterization::Rcs => Basis::Spline(knots_from_ecdf(ecdf, q)?),
        })
    }

    pub fn width(&self) -> usize {
        match self {
            Basis::Linear => 2,
            Basis::Spline(k) => k.len(),
        }
    }

    pub fn fill(&self, x: f64, out: &mut [f64]) {
        out[0] = 1.0;
        match self {
            Basis::Linear => out[1] = x,
            Basis::Spline(k) => rcs_terms(x, k.knots(), &mut out[1..]),
        }
    }

    pub fn row(&self, x: f64) -> BasisRow {
        let mut values = vec![0.0; self.width()];
        self.fill(x, &mut values);
        BasisRow { values }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<f64> {
        (0..=100).map(|i| i as f64 / 100.0).collect()
    }

    #[test]
    fn knots_on_uniform_grid() {
        let k3 = default_knots(&grid(), 3).unwrap();
        assert_eq!(k3.knots(), &[0.10, 0.50, 0.90]);
        let k4 = default_knots(&grid(), 4).unwrap();
        assert_eq!(k4.knots(), &[0.05, 0.35, 0.65, 0.95]);
        let k5 = default_knots(&grid(), 5).unwrap();
        for (a, b) in k5.knots().iter().zip([0.05, 0.275, 0.50, 0.725, 0.95]) {
            assert!((a - b).abs() <= 0.01);
        }
    }

    #[test]
    fn constant_scores_are_degenerate() {
        assert!(matches!(default_knots(&[2.0; 50], 3), Err(Error::DegenerateScores { q: 3 })));
        // Enough distinct values but heavy ties collapse two quantiles.
        let mut s = vec![0.0; 90];
        s.extend([1.0, 2.0, 3.0, 4.0]);
        assert!(default_knots(&s, 4).is_err());
    }

    #[test]
    fn rcs_examples() {
        let k = KnotSet::new(vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(rcs_basis(1.5, &k).values, vec![1.0, 1.5, 0.78125]);
        assert_eq!(rcs_basis(-3.0, &k).values, vec![1.0, -3.0, 0.0]);

        let k = KnotSet::new(vec![-1.0, 0.0, 0.4, 2.0, 3.0]).unwrap();
        let r = rcs_basis(-1.5, &k);
        assert_eq!(&r.values[2..], &[0.0, 0.0, 0.0]);
        let h = 0.37;
        let x = 10.0;
        for j in 2..5 {
            let f = |x: f64| rcs_basis(x, &k).values[j];
            let second = f(x + 2.0 * h) - 2.0 * f(x + h) + f(x);
            assert!(second.abs() < 1e-9, "term {j}: {second}");
        }
    }

    #[test]
    fn glm_rows() {
        assert_eq!(glm_basis(0.0).values, vec![1.0, 0.0]);
        assert_eq!(glm_basis(-2.5).values, vec![1.0, -2.5]);
        assert_eq!(Basis::Linear.row(3.0).values.len(), 2);
    }

    #[test]
    fn smooth_at_knots() {
        let k = KnotSet::new(vec![-0.8, -0.1, 0.3, 1.2]).unwrap();
        let h = 1e-4;
        for &t in k.knots() {
            for j in 2..4 {
                let f = |x: f64| rcs_basis(x, &k).values[j];
                let d1l = (f(t) - f(t - h)) / h;
                let d1r = (f(t + h) - f(t)) / h;
                assert!((d1l - d1r).abs() < 1e-3, "first derivative jump at {t}");
                let d2l = (f(t) - 2.0 * f(t - h) + f(t - 2.0 * h)) / (h * h);
                let d2r = (f(t + 2.0 * h) - 2.0 * f(t + h) + f(t)) / (h * h);
                assert!((d2l - d2r).abs() < 1e-2, "second derivative jump at {t}");
            }
        }
    }
}

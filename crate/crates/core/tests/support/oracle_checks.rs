//! Independent reference implementations and the checks that compare them
//! with the library. Shared by the core test suite and the acceptance runner.

use rand::Rng;
use rand_distr::StandardNormal;
use riskcurve::rng::{stream, Domain};
use riskcurve::*;

pub type Check = std::result::Result<(), String>;

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Classical Cox partial likelihood with Breslow ties, by direct O(n^2) sums.
fn cox_oracle(ds: &Dataset) -> Vec<f64> {
    let recs = ds.records();
    let d = ds.d();
    let mut beta = vec![0.0; d];
    let mut times: Vec<f64> = recs.iter().filter(|r| r.event == 1).map(|r| r.y).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    for _ in 0..100 {
        let mut grad = vec![0.0; d];
        let mut hess = vec![vec![0.0; d]; d];
        for &t in &times {
            let dead: Vec<_> = recs.iter().filter(|r| r.event == 1 && r.y == t).collect();
            let (mut s0, mut s1, mut s2) = (0.0, vec![0.0; d], vec![vec![0.0; d]; d]);
            for r in recs.iter().filter(|r| r.y >= t) {
                let e = r.z.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>().exp();
                s0 += e;
                for j in 0..d {
                    s1[j] += e * r.z[j];
                    for k in 0..d {
                        s2[j][k] += e * r.z[j] * r.z[k];
                    }
                }
            }
            let m = dead.len() as f64;
            for j in 0..d {
                grad[j] += dead.iter().map(|r| r.z[j]).sum::<f64>() - m * s1[j] / s0;
                for k in 0..d {
                    hess[j][k] += m * (s2[j][k] / s0 - s1[j] * s1[k] / (s0 * s0));
                }
            }
        }
        if grad.iter().all(|g| g.abs() < 1e-13) {
            break;
        }
        let step = solve(hess, grad);
        for j in 0..d {
            beta[j] += step[j];
        }
    }
    beta
}

/// Fine–Gray on single-cause uncensored data equals Cox, to 1e-8.
pub fn fine_gray_equals_cox() -> Check {
    for seed in 0..5u64 {
        let mut rng = stream(seed, Domain::SimData, 99);
        let recs: Vec<SubjectRecord> = (0..80)
            .map(|_| {
                let z: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
                let rate = (0.7 * z[0] - 0.4 * z[1]).exp();
                // Rounded times give tied event times.
                let t = (-rng.random::<f64>().ln() / rate * 10.0).round() / 10.0 + 0.1;
                SubjectRecord::new(t, 1, z)
            })
            .collect();
        let ds = validate_dataset(recs, None).map_err(|e| e.to_string())?;
        let fit = fg_fit(&ds, &vec![1.0; ds.len()], FgOptions::default()).map_err(|e| e.to_string())?;
        let oracle = cox_oracle(&ds);
        for (a, b) in fit.beta.iter().zip(&oracle) {
            if (a - b).abs() >= 1e-8 {
                return Err(format!("seed {seed}: {a} vs {b}"));
            }
        }
    }
    Ok(())
}

/// Score equals central finite differences of the log-likelihood, to 1e-5
/// relative to the largest score component.
pub fn score_matches_finite_differences() -> Check {
    for seed in 0..5u64 {
        let ds = gen_setting1(300, &mut stream(seed, Domain::SimData, 7));
        let mut rng = stream(seed, Domain::SimAnalysis, 7);
        let w: Vec<f64> = (0..ds.len()).map(|_| 0.5 + rng.random::<f64>()).collect();
        let beta: Vec<f64> = (0..2).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let g = fg_score(&beta, &ds, &w).map_err(|e| e.to_string())?;
        let scale = g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for j in 0..2 {
            let h = 1e-6 * beta[j].abs().max(1.0);
            let mut up = beta.clone();
            let mut down = beta.clone();
            up[j] += h;
            down[j] -= h;
            let fd = (fg_loglik(&up, &ds, &w).unwrap() - fg_loglik(&down, &ds, &w).unwrap()) / (2.0 * h);
            if (fd - g[j]).abs() > 1e-5 * scale {
                return Err(format!("seed {seed} j {j}: {fd} vs {}", g[j]));
            }
        }
    }
    Ok(())
}

/// Compass search: probe +/- step along each coordinate, halve on failure.
fn coordinate_search(f: impl Fn(&[f64]) -> f64, dim: usize) -> (Vec<f64>, f64) {
    let mut x = vec![0.0; dim];
    let mut fx = f(&x);
    let mut step = 1.0;
    while step > 1e-7 {
        let mut improved = false;
        for j in 0..dim {
            for s in [step, -step] {
                let mut y = x.clone();
                y[j] += s;
                let fy = f(&y);
                if fy > fx {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    (x, fx)
}

/// Newton binomial fit reaches the derivative-free maximum on 50 random
/// small problems (separated problems are skipped).
pub fn binomial_matches_derivative_free() -> Check {
    let mut checked = 0;
    let mut problem = 0u64;
    while checked < 50 {
        problem += 1;
        if problem >= 80 {
            return Err("too many separated problems".into());
        }
        let mut rng = stream(problem, Domain::SimAnalysis, 1);
        let n = rng.random_range(30..=200);
        let width = rng.random_range(1..=4);
        let truth: Vec<f64> = (0..width).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut design = Design::with_width(width);
        let mut delta = Vec::new();
        let mut w = Vec::new();
        for _ in 0..n {
            let row = design.push_row();
            row[0] = 1.0;
            for v in row.iter_mut().skip(1) {
                *v = rng.sample(StandardNormal);
            }
            let eta: f64 = row.iter().zip(&truth).map(|(a, b)| a * b).sum();
            delta.push(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()));
            w.push(if rng.random::<f64>() < 0.1 { 0.0 } else { 0.2 + 2.0 * rng.random::<f64>() });
        }
        let fit = match fit_weighted_binomial(&delta, &design, &w, BinomialOptions::default()) {
            Ok(f) => f,
            Err(Error::Separation { .. }) | Err(Error::DegenerateResponses) => continue,
            Err(e) => return Err(format!("problem {problem}: {e}")),
        };
        let obj = |t: &[f64]| binomial_objective(t, &delta, &design, &w);
        let (_, best) = coordinate_search(obj, width);
        let ours = obj(&fit.theta);
        if ours < best - 1e-4 || ours < obj(&vec![0.0; width]) {
            return Err(format!("problem {problem}: {ours} < {best}"));
        }
        checked += 1;
    }
    Ok(())
}

/// Product-limit estimate of P(C >= t) computed from first principles.
fn km_oracle(recs: &[(f64, u32, f64)], t: f64) -> f64 {
    let mut times: Vec<f64> = recs.iter().filter(|r| r.1 == 0 && r.0 < t).map(|r| r.0).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut g = 1.0;
    for s in times {
        let at_risk: f64 = recs.iter().filter(|r| r.0 >= s).map(|r| r.2).sum();
        let cens: f64 = recs.iter().filter(|r| r.0 == s && r.1 == 0).map(|r| r.2).sum();
        g *= 1.0 - cens / at_risk;
    }
    g
}

/// Weighted censoring KM equals the product-limit oracle on every five-record
/// dataset over times {1, 2, 3} and codes {0, 1, 2} (first record a cause-1
/// event). Returns the number of datasets checked.
pub fn weighted_km_matches_enumeration() -> std::result::Result<usize, String> {
    let cells: Vec<(f64, u32)> = [1.0, 2.0, 3.0].iter().flat_map(|&t| [(t, 0), (t, 1), (t, 2)]).collect();
    let weights = [1.0, 0.5, 2.0, 1.5, 0.25];
    let probes = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5];
    let mut count = 0;
    for first_t in [1.0, 2.0, 3.0] {
        for code in 0..cells.len().pow(4) {
            let mut recs = vec![(first_t, 1u32, weights[0])];
            let mut c = code;
            for w in &weights[1..] {
                let (t, e) = cells[c % cells.len()];
                c /= cells.len();
                recs.push((t, e, *w));
            }
            let ds = validate_dataset(recs.iter().map(|r| SubjectRecord::new(r.0, r.1, vec![0.0])), None)
                .map_err(|e| e.to_string())?;
            let ghat = fit_censoring_km(&ds, &weights).map_err(|e| e.to_string())?;
            for &t in &probes {
                let want = km_oracle(&recs, t);
                if (ghat.left_limit(t) - want).abs() >= 1e-12 {
                    return Err(format!("{recs:?} at {t}: {} vs {want}", ghat.left_limit(t)));
                }
                // Right-continuous value equals the left limit just above t.
                if (ghat.value(t) - km_oracle(&recs, t + 1e-9)).abs() >= 1e-12 {
                    return Err(format!("{recs:?} value at {t}"));
                }
            }
            count += 1;
        }
    }
    Ok(count)
}

/// A replicate with all perturbation weights equal to one reproduces the
/// point estimate bit for bit, under both parameterizations.
pub fn unit_perturbation_is_point_estimate() -> Check {
    let ds = gen_setting1(300, &mut stream(11, Domain::SimData, 0));
    for param in [Parameterization::Rcs, Parameterization::Glm] {
        let cfg = StudyConfig { parameterization: param, cv_repeats: 3, ..StudyConfig::default() };
        let cv = cv_estimate(&ds, &cfg).map_err(|e| e.to_string())?;
        let rep = perturbed_replicate(&ds, &cv.splits, &vec![1.0; ds.len()], &cfg).map_err(|e| e.to_string())?;
        if rep.r_hat_e != cv.curve.r_hat {
            return Err(format!("{param}: replicate differs from the point estimate"));
        }
    }
    Ok(())
}

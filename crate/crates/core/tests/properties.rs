use proptest::prelude::*;
use riskcurve::rng::{stream, Domain};
use riskcurve::*;

fn records() -> impl Strategy<Value = Vec<SubjectRecord>> {
    prop::collection::vec((0.0f64..10.0, 0u32..3, -3.0f64..3.0, -3.0f64..3.0), 5..60).prop_map(|rows| {
        let mut recs: Vec<SubjectRecord> =
            rows.into_iter().map(|(y, e, a, b)| SubjectRecord::new((y * 4.0).round() / 4.0, e, vec![a, b])).collect();
        recs[0].event = 1;
        recs
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn risk_score_is_linear(z in prop::collection::vec(-5.0f64..5.0, 3), b1 in prop::collection::vec(-5.0f64..5.0, 3),
                            b2 in prop::collection::vec(-5.0f64..5.0, 3), a in -3.0f64..3.0, c in -3.0f64..3.0) {
        let mix: Vec<f64> = b1.iter().zip(&b2).map(|(x, y)| a * x + c * y).collect();
        let lhs = linear_risk_score(&z, &mix).unwrap();
        let rhs = a * linear_risk_score(&z, &b1).unwrap() + c * linear_risk_score(&z, &b2).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn validation_is_idempotent(recs in records()) {
        let ds = validate_dataset(recs, None).unwrap();
        let again = validate_dataset(ds.records().to_vec(), Some(ds.k())).unwrap();
        prop_assert_eq!(again, ds);
    }

    #[test]
    fn censoring_km_is_a_survival_function(recs in records(), w in prop::collection::vec(0.01f64..3.0, 60)) {
        let ds = validate_dataset(recs, None).unwrap();
        let g = fit_censoring_km(&ds, &w[..ds.len()]).unwrap();
        let mut prev = 1.0;
        for i in 0..=44 {
            let t = i as f64 * 0.25;
            let v = g.value(t);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(v <= prev);
            prop_assert!(g.left_limit(t) >= v);
            prev = v;
        }
    }

    #[test]
    fn inverse_curve_is_nondecreasing(values in prop::collection::vec(0.01f64..0.99, 91)) {
        let cfg = StudyConfig::default();
        let curve = CurveEstimate::point(cfg.grid(), values, 4.0, Parameterization::Rcs);
        let ps: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
        let inv = inverse_curve_on(&curve, &ps);
        prop_assert!(inv.proportion.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(inv.proportion.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn knots_ignore_duplicated_scores(scores in prop::collection::vec(-5.0f64..5.0, 20..80), q in 3usize..=5) {
        let doubled: Vec<f64> = scores.iter().chain(&scores).copied().collect();
        match (default_knots(&scores, q), default_knots(&doubled, q)) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "only one of the knot sets was degenerate"),
        }
    }

    #[test]
    fn binomial_fit_ignores_weight_scale(seed in 0u64..1000, c in 0.1f64..10.0) {
        use rand::Rng;
        let mut rng = stream(seed, Domain::SimAnalysis, 3);
        let mut design = Design::with_width(2);
        let mut delta = Vec::new();
        let mut w = Vec::new();
        for _ in 0..80 {
            let x: f64 = rng.random::<f64>() * 4.0 - 2.0;
            design.push_row().copy_from_slice(&[1.0, x]);
            delta.push(rng.random::<f64>() < 1.0 / (1.0 + (-0.5 * x).exp()));
            w.push(0.5 + rng.random::<f64>());
        }
        let scaled: Vec<f64> = w.iter().map(|x| x * c).collect();
        let opts = BinomialOptions::default();
        if let Ok(a) = fit_weighted_binomial(&delta, &design, &w, opts) {
            let b = fit_weighted_binomial(&delta, &design, &scaled, opts).unwrap();
            for (x, y) in a.theta.iter().zip(&b.theta) {
                prop_assert!((x - y).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn split_partitions_records() {
    for n in [4usize, 5, 10, 11, 37] {
        let recs: Vec<SubjectRecord> = (0..n).map(|i| SubjectRecord::new(i as f64, 1, vec![0.0])).collect();
        let ds = validate_dataset(recs, None).unwrap();
        for s in 0..200u64 {
            let split = two_fold_split(&ds, &mut stream(s, Domain::Split, n as u64)).unwrap();
            assert_eq!(split.idx_a.len(), n.div_ceil(2));
            let mut all: Vec<usize> = split.idx_a.iter().chain(&split.idx_b).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}

#[test]
fn fine_gray_rescaled_covariates() {
    let ds = gen_setting1(400, &mut stream(5, Domain::SimData, 0));
    let w = vec![1.0; ds.len()];
    let base = fg_fit(&ds, &w, FgOptions::default()).unwrap();
    for c in [0.5, -2.0, 10.0] {
        let scaled = validate_dataset(
            ds.records().iter().map(|r| SubjectRecord::new(r.y, r.event, r.z.iter().map(|z| z * c).collect())),
            None,
        )
        .unwrap();
        let fit = fg_fit(&scaled, &w, FgOptions::default()).unwrap();
        for (a, b) in fit.beta.iter().zip(&base.beta) {
            assert!((a - b / c).abs() < 1e-6, "c={c}: {a} vs {}", b / c);
        }
        let s1: Vec<f64> = ds.records().iter().map(|r| linear_risk_score(&r.z, &base.beta).unwrap()).collect();
        let s2: Vec<f64> = scaled.records().iter().map(|r| linear_risk_score(&r.z, &fit.beta).unwrap()).collect();
        for i in 0..ds.len() {
            for j in 0..ds.len() {
                if (s1[i] - s1[j]).abs() > 1e-9 {
                    assert_eq!(s1[i] < s1[j], s2[i] < s2[j]);
                }
            }
        }
    }
}

#[test]
fn fine_gray_weight_scale_and_continuity() {
    let ds = gen_setting1(400, &mut stream(6, Domain::SimData, 0));
    let n = ds.len();
    let base = fg_fit(&ds, &vec![1.0; n], FgOptions::default()).unwrap();
    let doubled = fg_fit(&ds, &vec![2.0; n], FgOptions::default()).unwrap();
    let nudged = fg_fit(&ds, &vec![1.0 + 1e-9; n], FgOptions::default()).unwrap();
    for j in 0..2 {
        assert!((doubled.beta[j] - base.beta[j]).abs() < 1e-10);
        assert!((nudged.beta[j] - base.beta[j]).abs() < 1e-6);
    }
}

#[test]
fn monotone_curve_inverse_recovers_level() {
    let cfg = StudyConfig::default();
    let grid = cfg.grid();
    let r: Vec<f64> = grid.iter().map(|v| 0.1 + 0.6 * v).collect();
    let curve = CurveEstimate::point(grid.clone(), r.clone(), 4.0, Parameterization::Rcs);
    for (i, &v) in grid.iter().enumerate().skip(3).step_by(7) {
        let got = inverse_curve(&curve, r[i]);
        assert!((got - v).abs() <= 0.02, "v={v}: {got}");
    }
    // Crossing exactly at v = 0.4.
    assert!((inverse_curve(&curve, 0.1 + 0.6 * 0.4) - 0.4).abs() <= 0.01 + 1e-12);
}

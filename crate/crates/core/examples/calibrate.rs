//! Bisection for the simulation constants that give a 30% censoring rate:
//! the setting-1 cause-2 baseline rate and the setting-2 cause-1 scale.
//! Every evaluation reuses the same random stream, so the Monte-Carlo rate is
//! monotone in the constant being searched.
//!
//! cargo run --release -p riskcurve-core --example calibrate

use riskcurve::rng::{stream, Domain};
use riskcurve::{Scenario, Setting1, Setting2};

const DRAWS: usize = 1_000_000;
const TARGET: f64 = 0.30;
const SEED: u64 = 7;

fn rates<S: Scenario>(s: &S) -> (f64, f64) {
    let data = s.generate(DRAWS, &mut stream(SEED, Domain::Truth, 0));
    let n = data.len() as f64;
    (data.count_event(0) as f64 / n, data.count_event(1) as f64 / n)
}

/// Root of `censoring(x) = TARGET` on `[lo, hi]`; `increasing` gives the
/// direction of monotonicity.
fn bisect(mut lo: f64, mut hi: f64, increasing: bool, censoring: impl Fn(f64) -> f64) -> f64 {
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        if (censoring(mid) < TARGET) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn main() {
    let rate = bisect(0.01, 2.0, false, |r| rates(&Setting1 { cause2_rate: r, ..Setting1::default() }).0);
    let (cens, cause1) = rates(&Setting1 { cause2_rate: rate, ..Setting1::default() });
    println!("setting 1: cause2_rate = {rate:.4}  censoring = {cens:.4}  cause 1 = {cause1:.4}");

    let c1 = bisect(0.5, 10.0, true, |c| rates(&Setting2 { c1: c, ..Setting2::default() }).0);
    let (cens, cause1) = rates(&Setting2 { c1, ..Setting2::default() });
    println!("setting 2: c1 = {c1:.4}  censoring = {cens:.4}  cause 1 = {cause1:.4}");
}

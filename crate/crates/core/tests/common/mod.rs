//! Closed-form references shared by the integration tests.

#![allow(dead_code)]

use kspde::coefficients::{derive_sde, CoefficientSet, CorrelationSign, Samples, SdeSet};
use kspde::grid::{SpaceGrid, TimeGrid};
use statrs::distribution::{ContinuousCDF, Normal};

/// Probability that `x + sigma W` stays in `(0, l)` up to time `t`, by the
/// method of images.
pub fn interval_survival(x: f64, l: f64, sigma: f64, t: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).unwrap();
    let s = sigma * t.sqrt();
    let term = |k: f64| {
        let o = 2.0 * k * l;
        n.cdf((l - x + o) / s) - n.cdf((-x + o) / s) - n.cdf((l + x + o) / s) + n.cdf((x + o) / s)
    };
    let mut p = term(0.0);
    for k in 1.. {
        let kf = k as f64;
        let d = term(kf) + term(-kf);
        p += d;
        if d.abs() < 1e-12 && k > 2 {
            break;
        }
    }
    p
}

pub fn sde(c: &CoefficientSet, sign: CorrelationSign) -> SdeSet {
    let g = SpaceGrid::new(0.0, 1.0, 20).unwrap();
    let t = TimeGrid::new(0.0, 1.0, 10).unwrap();
    derive_sde(c, &Samples::for_set(c, &g, &t, 4, 0), sign).unwrap()
}

/// `|a - b| <= 3 se + slack`, with a readable message.
pub fn assert_close(label: &str, est: f64, se: f64, oracle: f64, slack: f64) {
    let tol = 3.0 * se + slack;
    assert!(
        (est - oracle).abs() <= tol,
        "{label}: estimate {est} vs {oracle} (se {se}, tol {tol})"
    );
}

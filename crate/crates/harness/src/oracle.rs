//! Closed-form references.

use std::f64::consts::PI;

use statrs::distribution::{ContinuousCDF, Normal};

/// Solution of the backward heat equation `p_t + b p_xx = 0` on `(a, a + l)`
/// with `p(T) = sin(pi (x - a) / l)`, at remaining time `tau = T - s`.
pub fn heat_eigenmode(x: f64, tau: f64, b: f64, a: f64, l: f64) -> f64 {
    (-b * PI * PI * tau / (l * l)).exp() * (PI * (x - a) / l).sin()
}

/// Probability that `x + sigma W` stays in `(a, a + l)` up to time `t`, by
/// the method of images. Terms are added in pairs until one pair falls below
/// `1e-12`.
pub fn image_survival(x: f64, a: f64, l: f64, sigma: f64, t: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    let x = x - a;
    let s = sigma * t.sqrt();
    let term = |k: f64| {
        let o = 2.0 * k * l;
        n.cdf((l - x + o) / s) - n.cdf((-x + o) / s) - n.cdf((l + x + o) / s) + n.cdf((x + o) / s)
    };
    let mut p = term(0.0);
    for k in 1..10_000 {
        let kf = k as f64;
        let d = term(kf) + term(-kf);
        p += d;
        if d.abs() < 1e-12 && k > 2 {
            break;
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn images_agree_with_eigen_expansion() {
        // sum over odd n of 4/(n pi) sin(n pi x) exp(-n^2 pi^2 sigma^2 t / 2)
        for &(x, sigma, t) in &[(0.5, 1.0, 0.1), (0.3, 0.7, 0.2), (0.9, 1.0, 0.02)] {
            let series: f64 = (0..400)
                .map(|m| {
                    let n = (2 * m + 1) as f64;
                    4.0 / (n * PI)
                        * (n * PI * x).sin()
                        * (-n * n * PI * PI * sigma * sigma * t / 2.0).exp()
                })
                .sum();
            assert!((image_survival(x, 0.0, 1.0, sigma, t) - series).abs() < 1e-9);
        }
    }

    #[test]
    fn shifted_interval() {
        let a = image_survival(0.5, 0.0, 1.0, 1.0, 0.1);
        let b = image_survival(2.5, 2.0, 1.0, 1.0, 0.1);
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn eigenmode_is_separable() {
        let v = heat_eigenmode(0.5, 0.25, 0.5, 0.0, 1.0);
        assert!((v - (-PI * PI / 8.0).exp()).abs() < 1e-15);
        assert_eq!(heat_eigenmode(0.3, 0.0, 0.5, 0.0, 1.0), (0.3 * PI).sin());
    }
}

//! Seedable Wiener increments for the common drivers `w` and the
//! independent drivers `w~`.
//!
//! Every stream is a ChaCha8 keystream whose key is derived from the master
//! seed and a namespace tag, with the stream id selecting the ChaCha stream
//! counter. A path is therefore a pure function of `(seed, namespace, id)`
//! and does not depend on how paths are partitioned across workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Namespace {
    Common,
    Independent,
    Initial,
    Auxiliary,
}

impl Namespace {
    fn tag(self) -> u64 {
        match self {
            Namespace::Common => 0x636f_6d6d_6f6e,
            Namespace::Independent => 0x696e_6465_70,
            Namespace::Initial => 0x696e_6974,
            Namespace::Auxiliary => 0x6175_78,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Namespace::Common => "common",
            Namespace::Independent => "independent",
            Namespace::Initial => "initial",
            Namespace::Auxiliary => "auxiliary",
        }
    }
}

/// Provenance of a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedRecord {
    pub seed: u64,
    pub namespace: Namespace,
    pub stream: u64,
}

/// Human-readable description of the stream policy, echoed into reports.
pub const STREAM_POLICY: &str =
    "chacha8(key=seed||namespace, stream=id); common id=path, independent id=(outer<<32)|inner";

pub fn stream_rng(seed: u64, namespace: Namespace, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&namespace.tag().to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Stream id for inner path `inner` under outer realization `outer`.
pub fn nested_stream(outer: u64, inner: u64) -> u64 {
    debug_assert!(inner < 1 << 32 && outer < 1 << 32);
    (outer << 32) | inner
}

/// Table of Gaussian increments `dW[k][i] ~ N(0, dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    grid: TimeGrid,
    n_drivers: usize,
    increments: Vec<f64>,
    record: SeedRecord,
}

impl NoisePath {
    fn generate(seed: u64, namespace: Namespace, stream: u64, grid: TimeGrid, n: usize) -> Self {
        let mut rng = stream_rng(seed, namespace, stream);
        let sd = grid.dt().sqrt();
        let increments = (0..grid.n_steps * n)
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            grid,
            n_drivers: n,
            increments,
            record: SeedRecord {
                seed,
                namespace,
                stream,
            },
        }
    }

    /// Build from explicit increments (row-major, `n_steps * n_drivers`).
    pub fn from_increments(grid: TimeGrid, n_drivers: usize, increments: Vec<f64>) -> Result<Self> {
        if increments.len() != grid.n_steps * n_drivers {
            return Err(Error::InvalidInput(format!(
                "expected {} increments, got {}",
                grid.n_steps * n_drivers,
                increments.len()
            )));
        }
        Ok(Self {
            grid,
            n_drivers,
            increments,
            record: SeedRecord {
                seed: 0,
                namespace: Namespace::Auxiliary,
                stream: 0,
            },
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_drivers(&self) -> usize {
        self.n_drivers
    }

    pub fn record(&self) -> SeedRecord {
        self.record
    }

    /// Increments over `[t_k, t_{k+1}]`, one per driver.
    pub fn step(&self, k: usize) -> &[f64] {
        &self.increments[k * self.n_drivers..(k + 1) * self.n_drivers]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn increments_mut(&mut self) -> &mut [f64] {
        &mut self.increments
    }

    /// `W(t_k) - W(t_0)` for every driver.
    pub fn value_at(&self, k: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.n_drivers];
        for j in 0..k {
            for (acc, d) in w.iter_mut().zip(self.step(j)) {
                *acc += d;
            }
        }
        w
    }

    /// Sum increments in blocks of `factor` steps.
    pub fn coarsen(&self, factor: usize) -> Result<NoisePath> {
        let grid = self.grid.coarsen(factor)?;
        let n = self.n_drivers;
        let mut increments = vec![0.0; grid.n_steps * n];
        for k in 0..grid.n_steps {
            for j in 0..factor {
                for i in 0..n {
                    increments[k * n + i] += self.step(k * factor + j)[i];
                }
            }
        }
        Ok(NoisePath {
            grid,
            n_drivers: n,
            increments,
            record: self.record,
        })
    }
}

/// Increments of the `n` common drivers for path `stream`.
pub fn sample_common_path(seed: u64, stream: u64, grid: TimeGrid, n: usize) -> NoisePath {
    NoisePath::generate(seed, Namespace::Common, stream, grid, n)
}

/// Increments of `m` drivers independent of every common path.
pub fn spawn_independent_path(seed: u64, stream: u64, grid: TimeGrid, m: usize) -> NoisePath {
    NoisePath::generate(seed, Namespace::Independent, stream, grid, m)
}

/// Probability that a Brownian bridge from `y_k` to `y_k1` with variance
/// rate `sigma^2` over `dt` touches `barrier`. Endpoints on opposite sides
/// (or on the barrier) give 1.
pub fn bridge_exit_prob(y_k: f64, y_k1: f64, barrier: f64, sigma: f64, dt: f64) -> Result<f64> {
    if !(sigma > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidInput(format!(
            "bridge needs sigma > 0 and dt > 0, got sigma={sigma}, dt={dt}"
        )));
    }
    let prod = (barrier - y_k) * (barrier - y_k1);
    if prod <= 0.0 {
        return Ok(1.0);
    }
    Ok((-2.0 * prod / (sigma * sigma * dt)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(0.0, 0.5, n).unwrap()
    }

    #[test]
    fn zero_drivers_give_empty_table() {
        let p = sample_common_path(1, 0, grid(10), 0);
        assert!(p.increments().is_empty());
        assert!(p.step(3).is_empty());
    }

    #[test]
    fn reproducible_and_stream_dependent() {
        let a = sample_common_path(7, 3, grid(50), 2);
        let b = sample_common_path(7, 3, grid(50), 2);
        let c = sample_common_path(7, 4, grid(50), 2);
        let d = spawn_independent_path(7, 3, grid(50), 2);
        assert_eq!(a, b);
        assert_ne!(a.increments(), c.increments());
        assert_ne!(a.increments(), d.increments());
    }

    #[test]
    fn single_increment_variance() {
        let g = TimeGrid::new(0.0, 0.04, 1).unwrap();
        let n = 20_000;
        let xs: Vec<f64> = (0..n)
            .map(|i| spawn_independent_path(11, i, g, 1).increments()[0])
            .collect();
        let var = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!((var / 0.04 - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn moments_of_increments() {
        let g = grid(100_000);
        let p = sample_common_path(42, 0, g, 1);
        let n = p.increments().len() as f64;
        let dt = g.dt();
        let mean = p.increments().iter().sum::<f64>() / n;
        assert!(mean.abs() <= 4.0 * (dt / n).sqrt());
        let var = p.increments().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var / dt - 1.0).abs() < 0.05);
    }

    #[test]
    fn common_and_independent_uncorrelated() {
        let g = grid(100_000);
        let w = sample_common_path(5, 0, g, 1);
        let wt = spawn_independent_path(5, 0, g, 1);
        let n = w.increments().len() as f64;
        let cov: f64 = w
            .increments()
            .iter()
            .zip(wt.increments())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n;
        let corr = cov / g.dt();
        assert!(corr.abs() <= 0.02, "corr {corr}");
    }

    #[test]
    fn kolmogorov_smirnov_against_normal() {
        let g = grid(10_000);
        let p = sample_common_path(2024, 9, g, 1);
        let mut xs = p.increments().to_vec();
        xs.sort_by(f64::total_cmp);
        let dist = Normal::new(0.0, g.dt().sqrt()).unwrap();
        let n = xs.len() as f64;
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = dist.cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        // critical value at significance 1e-3
        let crit = ((2.0f64 / 1e-3).ln() / 2.0).sqrt() / n.sqrt();
        assert!(d < crit, "D={d} crit={crit}");
    }

    #[test]
    fn prefix_sum_variance() {
        let g = TimeGrid::new(0.0, 1.0, 20).unwrap();
        let n = 100_000u64;
        let (mut s5, mut s20) = (0.0, 0.0);
        for i in 0..n {
            let p = sample_common_path(3, i, g, 1);
            s5 += p.value_at(5)[0].powi(2);
            s20 += p.value_at(20)[0].powi(2);
        }
        assert!((s5 / n as f64 / 0.25 - 1.0).abs() < 0.05);
        assert!((s20 / n as f64 - 1.0).abs() < 0.05);
    }

    #[test]
    fn coarsening_preserves_values() {
        let p = sample_common_path(1, 1, grid(40), 2);
        let c = p.coarsen(4).unwrap();
        assert_eq!(c.grid().n_steps, 10);
        for k in 0..=10 {
            let a = c.value_at(k);
            let b = p.value_at(4 * k);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn bridge_probabilities() {
        assert_eq!(bridge_exit_prob(1.0, 0.5, 1.0, 1.0, 0.01).unwrap(), 1.0);
        assert!(bridge_exit_prob(0.5, 0.5, 1.0, 1.0, 1e-3).unwrap() <= 1e-6);
        let (d, s, dt) = (0.1f64, 0.8f64, 0.01f64);
        let p = bridge_exit_prob(1.0 - d, 1.0 - d, 1.0, s, dt).unwrap();
        assert!((p - (-2.0 * d * d / (s * s * dt)).exp()).abs() < 1e-15);
        assert_eq!(bridge_exit_prob(0.9, 1.1, 1.0, 1.0, 0.01).unwrap(), 1.0);
        assert!(bridge_exit_prob(0.5, 0.5, 1.0, 0.0, 0.01).is_err());
    }
}

//! Euler-Maruyama simulation of the killed diffusion
//!
//! ```text
//! y_{k+1} = y_k + f~ dt + s sum_i beta_i dW_{k,i} + sum_j sigma_j dW~_{k,j}
//! gamma_{k+1} = gamma_k exp(-tilde_lambda dt + sum_i tilde_beta_i dW_{k,i} - 1/2 sum_i tilde_beta_i^2 dt)
//! ```
//!
//! and Monte Carlo estimators of
//!
//! ```text
//! E[ gamma(T) Psi(y(T)) 1{T <= tau} + int_s^tau gamma xi(y, t) dt ]
//! ```
//!
//! Coefficients are evaluated at `(y_k, t_k, W(t_k))`. Under hard detection
//! a path is killed at the first step whose end point leaves the open
//! interval and `tau` is that step's left endpoint. With the bridge
//! correction every step also multiplies a survival weight by the
//! probability that the Brownian bridge between the end points stays inside.

use rand::Rng;
use rayon::prelude::*;

use crate::coefficients::SdeSet;
use crate::error::{Error, Result};
use crate::expr::{Expression, Point};
use crate::grid::{SpaceGrid, TimeGrid};
use crate::noise::{
    bridge_exit_prob, nested_stream, sample_common_path, spawn_independent_path, stream_rng,
    Namespace, NoisePath,
};

/// Open interval `(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidInput(format!("invalid interval ({a}, {b})")));
        }
        Ok(Self { a, b })
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.a && x < self.b
    }
}

impl From<&SpaceGrid> for Interval {
    fn from(g: &SpaceGrid) -> Self {
        Self { a: g.a, b: g.b }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PathOptions {
    pub bridge: bool,
    pub retain_trajectory: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExitSample {
    pub x: f64,
    pub s: f64,
    /// `y_k` from the start node up to the last node reached, when retained.
    pub trajectory: Option<Vec<f64>>,
    pub killed: bool,
    /// Exit time, or `T` when the path survives.
    pub tau: f64,
    /// Product of the per-step bridge non-crossing probabilities.
    pub survival_prob: f64,
    /// Weight at `tau` (or `T`).
    pub gamma_t: f64,
    /// Position at `T`, or the first position outside the interval.
    pub y_terminal: f64,
}

/// Expression with a constant fast path.
#[derive(Debug, Clone)]
struct Coef {
    value: Option<f64>,
    expr: Expression,
}

impl Coef {
    fn new(e: &Expression) -> Self {
        Self {
            value: e.as_constant(),
            expr: e.clone(),
        }
    }

    #[inline]
    fn eval(&self, p: Point<'_>) -> Result<f64> {
        match self.value {
            Some(v) => Ok(v),
            None => Ok(self.expr.eval(p)?),
        }
    }

    fn is_zero(&self) -> bool {
        self.value == Some(0.0)
    }
}

#[derive(Debug, Clone)]
struct Compiled {
    drift: Coef,
    beta: Vec<Coef>,
    sigma: Vec<Coef>,
    tilde_lambda: Coef,
    tilde_beta: Vec<Coef>,
    sign: f64,
    weighted: bool,
}

impl Compiled {
    fn new(sde: &SdeSet) -> Self {
        let tilde_lambda = Coef::new(&sde.tilde_lambda);
        let tilde_beta: Vec<Coef> = sde.tilde_beta.iter().map(Coef::new).collect();
        let weighted = !tilde_lambda.is_zero() || tilde_beta.iter().any(|c| !c.is_zero());
        Self {
            drift: Coef::new(&sde.drift),
            beta: sde.beta.iter().map(Coef::new).collect(),
            sigma: sde.sigma.iter().map(Coef::new).collect(),
            tilde_lambda,
            tilde_beta,
            sign: sde.correlation_sign.value(),
            weighted,
        }
    }
}

/// Per-step state handed to the visitor for steps that do not end in a hard exit.
struct StepState {
    t: f64,
    y: f64,
    gamma: f64,
    survival: f64,
}

fn run_path(
    x: f64,
    s: f64,
    sde: &Compiled,
    domain: Interval,
    common: &NoisePath,
    indep: &NoisePath,
    opts: PathOptions,
    mut visit: impl FnMut(&StepState, &[f64]) -> Result<()>,
) -> Result<ExitSample> {
    let time = common.grid();
    if indep.grid() != time {
        return Err(Error::GridMismatch("common and independent paths differ in time grid".into()));
    }
    if common.n_drivers() != sde.beta.len() || indep.n_drivers() != sde.sigma.len() {
        return Err(Error::InvalidInput(format!(
            "noise has {}+{} drivers, dynamics need {}+{}",
            common.n_drivers(),
            indep.n_drivers(),
            sde.beta.len(),
            sde.sigma.len()
        )));
    }
    let k0 = time.exact_index(s)?;
    if !(x >= domain.a && x <= domain.b) {
        return Err(Error::OutOfRange(format!(
            "start x={x} outside [{}, {}]",
            domain.a, domain.b
        )));
    }
    let mut trajectory = opts.retain_trajectory.then(|| vec![x]);
    if !domain.contains(x) {
        return Ok(ExitSample {
            x,
            s,
            trajectory,
            killed: true,
            tau: s,
            survival_prob: 0.0,
            gamma_t: 1.0,
            y_terminal: x,
        });
    }

    let dt = time.dt();
    let n = sde.beta.len();
    let mut w = common.value_at(k0);
    let mut beta = vec![0.0; n];
    let mut y = x;
    let mut log_gamma = 0.0f64;
    let mut survival = 1.0;

    for k in k0..time.n_steps {
        let t = time.time(k);
        let p = Point::new(y, t, &w);
        let dw = common.step(k);
        let dwt = indep.step(k);

        let mut y1 = y + sde.drift.eval(p)? * dt;
        let mut var = 0.0f64;
        for (i, c) in sde.beta.iter().enumerate() {
            beta[i] = c.eval(p)?;
            y1 += sde.sign * beta[i] * dw[i];
            var += beta[i] * beta[i];
        }
        for (j, c) in sde.sigma.iter().enumerate() {
            let sj = c.eval(p)?;
            y1 += sj * dwt[j];
            var += sj * sj;
        }
        if !y1.is_finite() {
            return Err(Error::NonFinite(format!("state at t={t} from y={y}")));
        }
        let gamma = log_gamma.exp();

        if !domain.contains(y1) {
            if let Some(tr) = trajectory.as_mut() {
                tr.push(y1);
            }
            return Ok(ExitSample {
                x,
                s,
                trajectory,
                killed: true,
                tau: t,
                survival_prob: 0.0,
                gamma_t: gamma,
                y_terminal: y1,
            });
        }

        visit(
            &StepState {
                t,
                y,
                gamma,
                survival,
            },
            &w,
        )?;

        if sde.weighted {
            let mut inc = -sde.tilde_lambda.eval(p)? * dt;
            for (i, c) in sde.tilde_beta.iter().enumerate() {
                let tb = c.eval(p)?;
                inc += tb * dw[i] - 0.5 * tb * tb * dt;
            }
            log_gamma += inc;
            if !log_gamma.is_finite() {
                return Err(Error::NonFinite(format!("weight at t={t}")));
            }
        }
        if opts.bridge && var > 0.0 {
            let sig = var.sqrt();
            let pa = bridge_exit_prob(y, y1, domain.a, sig, dt)?;
            let pb = bridge_exit_prob(y, y1, domain.b, sig, dt)?;
            survival *= (1.0 - pa) * (1.0 - pb);
        }
        for (wi, d) in w.iter_mut().zip(dw) {
            *wi += d;
        }
        y = y1;
        if let Some(tr) = trajectory.as_mut() {
            tr.push(y);
        }
    }
    Ok(ExitSample {
        x,
        s,
        trajectory,
        killed: false,
        tau: time.t_end,
        survival_prob: survival,
        gamma_t: log_gamma.exp(),
        y_terminal: y,
    })
}

/// One killed path started at `(x, s)`; `s` must be a node of the noise grid.
pub fn simulate_killed_path(
    x: f64,
    s: f64,
    sde: &SdeSet,
    domain: Interval,
    common: &NoisePath,
    indep: &NoisePath,
    opts: PathOptions,
) -> Result<ExitSample> {
    run_path(x, s, &Compiled::new(sde), domain, common, indep, opts, |_, _| Ok(()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl McEstimate {
    /// Sample mean and `std / sqrt(n)` with the `n - 1` variance.
    pub fn from_samples(samples: &[f64], seed: u64) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 paths, got {n}")));
        }
        let nf = n as f64;
        let mean = samples.iter().sum::<f64>() / nf;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
        let std_error = (var / nf).sqrt();
        if !(mean.is_finite() && std_error.is_finite()) {
            return Err(Error::NonFinite("Monte Carlo estimate".into()));
        }
        Ok(Self {
            mean,
            std_error,
            n_paths: n,
            seed,
        })
    }
}

/// Shared Monte Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSetup {
    pub domain: Interval,
    pub time: TimeGrid,
    pub seed: u64,
    pub path: PathOptions,
}

/// Terminal functional and running cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Functional {
    pub xi: Expression,
    pub psi: Expression,
}

impl Functional {
    pub fn new(xi: Expression, psi: Expression) -> Self {
        Self { xi, psi }
    }
}

/// Per-path value of `gamma Psi(y_T) 1{alive} surv + sum dt gamma_k xi(y_k) surv_k`
/// for several functionals at once.
fn path_values(
    x: f64,
    s: f64,
    sde: &Compiled,
    domain: Interval,
    common: &NoisePath,
    indep: &NoisePath,
    opts: PathOptions,
    fns: &[(Coef, Coef)],
) -> Result<Vec<f64>> {
    let dt = common.grid().dt();
    let mut acc = vec![0.0; fns.len()];
    let sample = run_path(x, s, sde, domain, common, indep, opts, |st, w| {
        let p = Point::new(st.y, st.t, w);
        let weight = dt * st.gamma * st.survival;
        for (a, (xi, _)) in acc.iter_mut().zip(fns) {
            if !xi.is_zero() {
                *a += weight * xi.eval(p)?;
            }
        }
        Ok(())
    })?;
    if !sample.killed {
        let w = common.value_at(common.grid().n_steps);
        let t_end = common.grid().t_end;
        let p = Point::new(sample.y_terminal, t_end, &w);
        let weight = sample.gamma_t * sample.survival_prob;
        for (a, (_, psi)) in acc.iter_mut().zip(fns) {
            *a += weight * psi.eval(p)?;
        }
    }
    Ok(acc)
}

fn estimates_from_rows(rows: Vec<Vec<f64>>, n_fns: usize, seed: u64) -> Result<Vec<McEstimate>> {
    (0..n_fns)
        .map(|f| {
            let col: Vec<f64> = rows.iter().map(|r| r[f]).collect();
            McEstimate::from_samples(&col, seed)
        })
        .collect()
}

/// Unconditional estimates at `(x, s)` for deterministic data, one per
/// functional, all sharing the same paths. Path `i` draws its common and
/// independent increments from stream `i`.
pub fn estimate_representation_many(
    x: f64,
    s: f64,
    fns: &[Functional],
    sde: &SdeSet,
    n_paths: usize,
    setup: &McSetup,
) -> Result<Vec<McEstimate>> {
    if sde.depends_on_noise() {
        return Err(Error::RandomCoefficients(
            "unconditional estimation needs coefficients free of W".into(),
        ));
    }
    if let Some(f) = fns
        .iter()
        .find(|f| f.xi.depends_on_noise() || f.psi.depends_on_noise())
    {
        return Err(Error::RandomCoefficients(format!(
            "functional `{}` / `{}` mentions W",
            f.xi, f.psi
        )));
    }
    let compiled = Compiled::new(sde);
    let coefs: Vec<(Coef, Coef)> = fns.iter().map(|f| (Coef::new(&f.xi), Coef::new(&f.psi))).collect();
    let (n, m) = (sde.n_common(), sde.n_independent());
    let rows = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let common = sample_common_path(setup.seed, i, setup.time, n);
            let indep = spawn_independent_path(setup.seed, i, setup.time, m);
            path_values(x, s, &compiled, setup.domain, &common, &indep, setup.path, &coefs)
        })
        .collect::<Result<Vec<_>>>()?;
    estimates_from_rows(rows, fns.len(), setup.seed)
}

pub fn estimate_representation_rhs(
    x: f64,
    s: f64,
    xi: &Expression,
    psi: &Expression,
    sde: &SdeSet,
    n_paths: usize,
    setup: &McSetup,
) -> Result<McEstimate> {
    let f = [Functional::new(xi.clone(), psi.clone())];
    Ok(estimate_representation_many(x, s, &f, sde, n_paths, setup)?[0])
}

/// Inverse-CDF sampler for the piecewise-linear interpolant of `rho` on a grid.
#[derive(Debug, Clone)]
pub struct InitialSampler {
    nodes: Vec<f64>,
    density: Vec<f64>,
    cumulative: Vec<f64>,
}

/// Cells used for the normalization check of `rho`.
const RHO_CHECK_CELLS: usize = 20_000;

impl InitialSampler {
    /// `rho` must be a deterministic nonnegative density with unit mass on
    /// the grid's interval (trapezoid check within `1e-6`).
    pub fn new(rho: &Expression, grid: &SpaceGrid) -> Result<Self> {
        if rho.depends_on_noise() || rho.depends_on_time() {
            return Err(Error::InvalidDensity(format!(
                "rho = `{rho}` must depend on x only"
            )));
        }
        let eval = |x: f64| -> Result<f64> { Ok(rho.eval_xt(x, 0.0)?) };
        let fine = SpaceGrid::new(grid.a, grid.b, RHO_CHECK_CELLS)?;
        let mut mass = 0.0;
        let mut prev = eval(fine.a)?;
        for j in 1..=fine.n_cells {
            let v = eval(fine.node(j))?;
            if v < 0.0 || prev < 0.0 {
                return Err(Error::InvalidDensity(format!(
                    "rho is negative near x={}",
                    fine.node(j)
                )));
            }
            mass += 0.5 * (prev + v) * fine.dx();
            prev = v;
        }
        if (mass - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidDensity(format!("rho integrates to {mass}, not 1")));
        }
        let nodes: Vec<f64> = (0..=grid.n_cells).map(|j| grid.node(j)).collect();
        let density = nodes.iter().map(|&x| eval(x)).collect::<Result<Vec<_>>>()?;
        if let Some(x) = nodes.iter().zip(&density).find(|(_, d)| **d < 0.0).map(|(x, _)| x) {
            return Err(Error::InvalidDensity(format!("rho({x}) < 0")));
        }
        let mut cumulative = vec![0.0];
        for j in 0..grid.n_cells {
            let c = cumulative[j] + 0.5 * (density[j] + density[j + 1]) * grid.dx();
            cumulative.push(c);
        }
        if !(*cumulative.last().unwrap() > 0.0) {
            return Err(Error::InvalidDensity("rho vanishes on every grid node".into()));
        }
        Ok(Self {
            nodes,
            density,
            cumulative,
        })
    }

    /// Sample for `u` uniform in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let total = *self.cumulative.last().unwrap();
        let q = u * total;
        // first cell whose upper cumulative mass exceeds q
        let j = self.cumulative[1..]
            .partition_point(|&c| c <= q)
            .min(self.nodes.len() - 2);
        let (x0, x1) = (self.nodes[j], self.nodes[j + 1]);
        let h = x1 - x0;
        let (r0, r1) = (self.density[j], self.density[j + 1]);
        let rem = (q - self.cumulative[j]).max(0.0);
        let disc = (r0 * r0 + 2.0 * (r1 - r0) * rem / h).max(0.0);
        let denom = r0 + disc.sqrt();
        let z = if denom > 0.0 { 2.0 * rem / denom } else { 0.0 };
        (x0 + z.min(h)).clamp(x0, x1)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

/// Draw from `rho` using initial-namespace stream `stream`.
pub fn sample_initial(sampler: &InitialSampler, seed: u64, stream: u64) -> f64 {
    sampler.sample(&mut stream_rng(seed, Namespace::Initial, stream))
}

/// Estimates of `E[gamma(T) Psi(y(T)) 1{T <= tau} | w]` for a fixed common
/// path, with `y(t0) ~ rho` and fresh independent noise per inner path.
/// Inner path `i` uses stream `nested_stream(outer, i)` for both its start
/// point and its independent increments.
pub fn estimate_killed_density_rhs(
    rho: &InitialSampler,
    psi: &[Expression],
    sde: &SdeSet,
    common: &NoisePath,
    outer: u64,
    n_inner: usize,
    setup: &McSetup,
) -> Result<Vec<McEstimate>> {
    if common.grid() != &setup.time {
        return Err(Error::GridMismatch("common path and setup time grid differ".into()));
    }
    let compiled = Compiled::new(sde);
    let zero = Coef::new(&Expression::constant(0.0));
    let coefs: Vec<(Coef, Coef)> = psi.iter().map(|p| (zero.clone(), Coef::new(p))).collect();
    let m = sde.n_independent();
    let s = setup.time.t0;
    let rows = (0..n_inner as u64)
        .into_par_iter()
        .map(|i| {
            let id = nested_stream(outer, i);
            let x = sample_initial(rho, setup.seed, id);
            let indep = spawn_independent_path(setup.seed, id, setup.time, m);
            path_values(x, s, &compiled, setup.domain, common, &indep, setup.path, &coefs)
        })
        .collect::<Result<Vec<_>>>()?;
    estimates_from_rows(rows, psi.len(), setup.seed)
}

//! Theta-scheme finite differences for the forward SPDE
//!
//! ```text
//! du = (A u + phi) dt + sum_i (B_i u + h_i) dw_i   on (a, b) x (s, T]
//! u = 0 on the boundary,  u(s) = Phi
//! ```
//!
//! one noise realization at a time:
//!
//! ```text
//! (I - theta dt A(t_{k+1})) u_{k+1}
//!     = (I + (1 - theta) dt A(t_k)) u_k + dt phi_k + sum_i (B_i(t_k) u_k + h_{i,k}) dW_{k,i}
//! ```
//!
//! The noise term always uses `u_k`, so `u_{k+1}` depends on `dW_0..dW_k` only.

use std::io::{self, Write};

use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::expr::{Expression, Point};
use crate::grid::{Field, SpaceGrid, TimeGrid};
use crate::noise::NoisePath;
use crate::tridiag::Tridiag;

fn eval_nodes(e: &Expression, grid: &SpaceGrid, t: f64, w: &[f64]) -> Result<Vec<f64>> {
    grid.interior()
        .map(|x| Ok(e.eval(Point::new(x, t, w))?))
        .collect()
}

/// `b u_xx + f u_x + lambda u` on interior nodes with Dirichlet rows.
pub fn assemble_a(c: &CoefficientSet, grid: &SpaceGrid, t: f64, w: &[f64]) -> Result<Tridiag> {
    let b = eval_nodes(&c.b, grid, t, w)?;
    let f = eval_nodes(&c.f, grid, t, w)?;
    let lam = eval_nodes(&c.lambda, grid, t, w)?;
    Ok(stencil_a(&b, &f, &lam, grid.dx()))
}

fn stencil_a(b: &[f64], f: &[f64], lam: &[f64], dx: f64) -> Tridiag {
    let (dx2, two_dx) = (dx * dx, 2.0 * dx);
    Tridiag {
        lower: b.iter().zip(f).map(|(b, f)| b / dx2 - f / two_dx).collect(),
        diag: b.iter().zip(lam).map(|(b, l)| -2.0 * b / dx2 + l).collect(),
        upper: b.iter().zip(f).map(|(b, f)| b / dx2 + f / two_dx).collect(),
    }
}

/// `beta_i u_x + bar_beta_i u` for driver `i` (0-based).
pub fn assemble_b(
    c: &CoefficientSet,
    grid: &SpaceGrid,
    t: f64,
    w: &[f64],
    i: usize,
) -> Result<Tridiag> {
    if i >= c.n_drivers() {
        return Err(Error::InvalidInput(format!(
            "driver {i} out of range for {} drivers",
            c.n_drivers()
        )));
    }
    let beta = eval_nodes(&c.beta[i], grid, t, w)?;
    let bar = eval_nodes(&c.bar_beta[i], grid, t, w)?;
    let two_dx = 2.0 * grid.dx();
    Ok(Tridiag {
        lower: beta.iter().map(|v| -v / two_dx).collect(),
        diag: bar,
        upper: beta.iter().map(|v| v / two_dx).collect(),
    })
}

#[derive(Debug, Clone)]
pub struct SpdeProblem {
    pub coefficients: CoefficientSet,
    pub phi: Expression,
    /// One free noise term per common driver.
    pub h: Vec<Expression>,
    pub initial: Field,
}

impl SpdeProblem {
    pub fn new(
        coefficients: CoefficientSet,
        phi: Expression,
        h: Vec<Expression>,
        initial: Field,
    ) -> Result<Self> {
        let n = coefficients.n_drivers();
        if h.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} h expressions for {n} drivers",
                h.len()
            )));
        }
        if let Some(e) = std::iter::once(&phi).chain(&h).find(|e| e.max_driver() > n) {
            return Err(Error::InvalidInput(format!(
                "`{e}` refers to a driver beyond W{n}"
            )));
        }
        Ok(Self {
            coefficients,
            phi,
            h,
            initial,
        })
    }

    /// `phi = h = 0` with initial density `rho`.
    pub fn homogeneous(coefficients: CoefficientSet, rho: Field) -> Result<Self> {
        let n = coefficients.n_drivers();
        Self::new(
            coefficients,
            Expression::constant(0.0),
            vec![Expression::constant(0.0); n],
            rho,
        )
    }

    pub fn grid(&self) -> &SpaceGrid {
        self.initial.grid()
    }

    fn time_varying(&self) -> bool {
        let c = &self.coefficients;
        c.depends_on_time() || c.depends_on_noise()
    }

    fn sources_vary(&self) -> bool {
        std::iter::once(&self.phi)
            .chain(&self.h)
            .any(|e| e.depends_on_time() || e.depends_on_noise())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeOptions {
    pub theta: f64,
    pub c_cfl: f64,
    pub cfl_override: bool,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        Self {
            theta: 1.0,
            c_cfl: 1.0,
            cfl_override: false,
        }
    }
}

impl SchemeOptions {
    pub fn theta(theta: f64) -> Self {
        Self {
            theta,
            ..Self::default()
        }
    }

    fn check(&self) -> Result<()> {
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(Error::InvalidInput(format!(
                "theta must lie in [1/2, 1], got {}",
                self.theta
            )));
        }
        if !(self.c_cfl > 0.0) {
            return Err(Error::InvalidInput(format!("c_cfl must be positive, got {}", self.c_cfl)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistoryMode {
    Full,
    Terminal,
}

/// Discrete trajectory of one realization.
#[derive(Debug, Clone)]
pub struct SpdePath {
    time: TimeGrid,
    fields: Vec<Field>,
    noise: NoisePath,
}

impl SpdePath {
    pub fn time_grid(&self) -> &TimeGrid {
        &self.time
    }

    pub fn noise(&self) -> &NoisePath {
        &self.noise
    }

    pub fn is_full(&self) -> bool {
        self.fields.len() == self.time.n_steps + 1
    }

    pub fn terminal(&self) -> &Field {
        self.fields.last().expect("path holds at least one field")
    }

    /// Field at time node `k`, available in full mode (and for the last node).
    pub fn field(&self, k: usize) -> Option<&Field> {
        if self.is_full() {
            self.fields.get(k)
        } else if k == self.time.n_steps {
            self.fields.last()
        } else {
            None
        }
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    /// Long-format rows `t,x,value` for every stored node.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let offset = self.time.n_steps + 1 - self.fields.len();
        write_history_csv(&self.time, offset, &self.fields, out)
    }
}

pub(crate) fn write_history_csv<W: Write>(
    time: &TimeGrid,
    offset: usize,
    fields: &[Field],
    mut out: W,
) -> io::Result<()> {
    writeln!(out, "t,x,value")?;
    for (k, f) in fields.iter().enumerate() {
        let t = time.time(k + offset);
        for j in 0..=f.grid().n_cells {
            writeln!(out, "{:?},{:?},{:?}", t, f.grid().node(j), f.at_node(j))?;
        }
    }
    Ok(())
}

struct Operators {
    a: Tridiag,
    b: Vec<Tridiag>,
    max_2b: f64,
}

fn operators(c: &CoefficientSet, grid: &SpaceGrid, t: f64, w: &[f64]) -> Result<Operators> {
    let b = eval_nodes(&c.b, grid, t, w)?;
    let f = eval_nodes(&c.f, grid, t, w)?;
    let lam = eval_nodes(&c.lambda, grid, t, w)?;
    let max_2b = b.iter().fold(0.0f64, |m, v| m.max(2.0 * v));
    let a = stencil_a(&b, &f, &lam, grid.dx());
    let b = (0..c.n_drivers())
        .map(|i| assemble_b(c, grid, t, w, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(Operators { a, b, max_2b })
}

struct Sources {
    phi: Vec<f64>,
    h: Vec<Vec<f64>>,
}

fn sources(p: &SpdeProblem, t: f64, w: &[f64]) -> Result<Sources> {
    let g = p.grid();
    Ok(Sources {
        phi: eval_nodes(&p.phi, g, t, w)?,
        h: p.h.iter()
            .map(|e| eval_nodes(e, g, t, w))
            .collect::<Result<Vec<_>>>()?,
    })
}

/// Explicit part `(I + (1-theta) dt A_k) u + dt phi_k + sum (B_i u + h_i) dW_i`.
fn explicit_rhs(u: &[f64], ops: &Operators, src: &Sources, dt: f64, theta: f64, dw: &[f64]) -> Vec<f64> {
    let mut rhs = u.to_vec();
    if theta < 1.0 {
        ops.a.apply_add((1.0 - theta) * dt, u, &mut rhs);
    }
    for (r, p) in rhs.iter_mut().zip(&src.phi) {
        *r += dt * p;
    }
    for (i, &d) in dw.iter().enumerate() {
        ops.b[i].apply_add(d, u, &mut rhs);
        for (r, h) in rhs.iter_mut().zip(&src.h[i]) {
            *r += d * h;
        }
    }
    rhs
}

fn check_cfl(ops: &Operators, dt: f64, dx: f64, opts: &SchemeOptions) -> Result<()> {
    if opts.cfl_override || ops.max_2b <= 0.0 {
        return Ok(());
    }
    let bound = opts.c_cfl * dx * dx / ops.max_2b;
    if dt > bound {
        return Err(Error::Cfl { dt, bound });
    }
    Ok(())
}

/// Single step from node `k` to `k + 1` driven by `noise`. Assembles all
/// operators afresh; `solve_forward` reuses them when possible.
pub fn step_forward(
    problem: &SpdeProblem,
    u_k: &Field,
    k: usize,
    noise: &NoisePath,
    theta: f64,
) -> Result<Field> {
    SchemeOptions::theta(theta).check()?;
    let time = noise.grid();
    if k >= time.n_steps {
        return Err(Error::OutOfRange(format!("step {k} of {}", time.n_steps)));
    }
    let c = &problem.coefficients;
    let g = *u_k.grid();
    let dt = time.dt();
    let w_k = noise.value_at(k);
    let mut w_k1 = w_k.clone();
    for (w, d) in w_k1.iter_mut().zip(noise.step(k)) {
        *w += d;
    }
    let ops = operators(c, &g, time.time(k), &w_k)?;
    let src = sources(problem, time.time(k), &w_k)?;
    let mut rhs = explicit_rhs(u_k.values(), &ops, &src, dt, theta, noise.step(k));
    let lhs = assemble_a(c, &g, time.time(k + 1), &w_k1)?.shifted_identity(-theta * dt);
    lhs.solve_in_place(&mut rhs)?;
    Field::from_values(g, rhs)
}

/// Full trajectory over the noise path's time grid.
pub fn solve_forward(
    problem: &SpdeProblem,
    noise: &NoisePath,
    opts: &SchemeOptions,
    mode: HistoryMode,
) -> Result<SpdePath> {
    opts.check()?;
    let c = &problem.coefficients;
    if noise.n_drivers() != c.n_drivers() {
        return Err(Error::InvalidInput(format!(
            "noise path has {} drivers, coefficients {}",
            noise.n_drivers(),
            c.n_drivers()
        )));
    }
    let time = *noise.grid();
    let g = *problem.grid();
    let dt = time.dt();
    let dx = g.dx();
    let theta = opts.theta;

    let mut w = vec![0.0; c.n_drivers()];
    let varying = problem.time_varying();
    let sources_vary = problem.sources_vary();

    let mut ops = operators(c, &g, time.t0, &w)?;
    check_cfl(&ops, dt, dx, opts)?;
    let mut src = sources(problem, time.t0, &w)?;
    let mut lhs = ops.a.shifted_identity(-theta * dt);

    let mut u = problem.initial.values().to_vec();
    let mut fields = Vec::new();
    if mode == HistoryMode::Full {
        fields.push(problem.initial.clone());
    }
    for k in 0..time.n_steps {
        let dw = noise.step(k);
        let mut rhs = explicit_rhs(&u, &ops, &src, dt, theta, dw);
        for (wi, d) in w.iter_mut().zip(dw) {
            *wi += d;
        }
        let t1 = time.time(k + 1);
        if varying {
            ops = operators(c, &g, t1, &w)?;
            check_cfl(&ops, dt, dx, opts)?;
            lhs = ops.a.shifted_identity(-theta * dt);
        }
        if sources_vary {
            src = sources(problem, t1, &w)?;
        }
        lhs.solve_in_place(&mut rhs)?;
        u = rhs;
        if mode == HistoryMode::Full {
            fields.push(Field::from_values(g, u.clone())?);
        }
    }
    if mode == HistoryMode::Terminal {
        fields.push(Field::from_values(g, u)?);
    }
    Ok(SpdePath {
        time,
        fields,
        noise: noise.clone(),
    })
}

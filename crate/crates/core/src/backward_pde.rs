//! Backward PDE `-p_t = A* p + xi`, `p(T) = Psi`, `p = 0` on the boundary,
//! for deterministic coefficients.
//!
//! The discrete adjoint is the transpose of the forward theta-scheme. With
//! `M_L(k) = I - theta dt A(t_k)` and `M_R(k) = I + (1 - theta) dt A(t_k)`:
//!
//! ```text
//! p_K = Psi
//! M_L(k+1)^T g_{k+1} = p_{k+1}
//! p_k = M_R(k)^T g_{k+1} + dt xi_k
//! ```
//!
//! so that for any forward solution with `beta = h = 0`
//!
//! ```text
//! <u_K, Psi> + dt sum_{k<K} <u_k, xi_k> = <Phi, p_0> + dt sum_{k<K} <phi_k, g_{k+1}>
//! ```
//!
//! holds exactly. For `theta = 1` the implicit stage `g_{k+1}` equals `p_k`
//! when `xi = 0`.

use std::io::{self, Write};

use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::expr::{Expression, Point};
use crate::forward_spde::{assemble_a, write_history_csv, SpdePath, SpdeProblem};
use crate::grid::{Field, SpaceGrid, TimeGrid};
use crate::tridiag::Tridiag;

#[derive(Debug, Clone)]
pub struct BackwardProblem {
    pub coefficients: CoefficientSet,
    pub xi: Expression,
    pub psi: Field,
}

impl BackwardProblem {
    pub fn new(coefficients: CoefficientSet, xi: Expression, psi: Field) -> Result<Self> {
        if coefficients.depends_on_noise() {
            return Err(Error::RandomCoefficients(
                "coefficients mention W; the backward solver needs deterministic data".into(),
            ));
        }
        if xi.depends_on_noise() {
            return Err(Error::RandomCoefficients(format!("xi = `{xi}` mentions W")));
        }
        Ok(Self {
            coefficients,
            xi,
            psi,
        })
    }

    pub fn grid(&self) -> &SpaceGrid {
        self.psi.grid()
    }
}

/// `p` at every time node and the implicit stages `g_1..g_K`.
#[derive(Debug, Clone)]
pub struct BackwardSolution {
    time: TimeGrid,
    p: Vec<Field>,
    stage: Vec<Field>,
}

impl BackwardSolution {
    pub fn time_grid(&self) -> &TimeGrid {
        &self.time
    }

    pub fn p(&self, k: usize) -> &Field {
        &self.p[k]
    }

    pub fn history(&self) -> &[Field] {
        &self.p
    }

    /// Implicit stage `g_{k+1}` paired with the forward free term `phi_k`.
    pub fn stage(&self, k: usize) -> &Field {
        &self.stage[k]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        write_history_csv(&self.time, 0, &self.p, out)
    }
}

fn operator(c: &CoefficientSet, g: &SpaceGrid, t: f64) -> Result<Tridiag> {
    assemble_a(c, g, t, &vec![0.0; c.n_drivers()])
}

fn xi_values(xi: &Expression, g: &SpaceGrid, t: f64, n: usize) -> Result<Vec<f64>> {
    let w = vec![0.0; n];
    g.interior()
        .map(|x| Ok(xi.eval(Point::new(x, t, &w))?))
        .collect()
}

pub fn solve_backward(problem: &BackwardProblem, time: &TimeGrid, theta: f64) -> Result<BackwardSolution> {
    if !(0.5..=1.0).contains(&theta) {
        return Err(Error::InvalidInput(format!(
            "theta must lie in [1/2, 1], got {theta}"
        )));
    }
    let c = &problem.coefficients;
    let g = *problem.grid();
    let n = c.n_drivers();
    let dt = time.dt();
    let k_max = time.n_steps;
    let constant_op = !c.depends_on_time();
    let xi_const = !problem.xi.depends_on_time();

    let cached = if constant_op {
        Some(operator(c, &g, time.t0)?.transpose())
    } else {
        None
    };
    let a_t = |k: usize| -> Result<Tridiag> {
        match &cached {
            Some(a) => Ok(a.clone()),
            None => Ok(operator(c, &g, time.time(k))?.transpose()),
        }
    };
    let xi_cached = if xi_const {
        Some(xi_values(&problem.xi, &g, time.t0, n)?)
    } else {
        None
    };

    let mut p = vec![Field::zeros(g); k_max + 1];
    let mut stage = vec![Field::zeros(g); k_max];
    p[k_max] = problem.psi.clone();

    let lhs_cached = cached.as_ref().map(|a| a.shifted_identity(-theta * dt));
    for k in (0..k_max).rev() {
        let mut gv = p[k + 1].values().to_vec();
        match &lhs_cached {
            Some(l) => l.solve_in_place(&mut gv)?,
            None => a_t(k + 1)?.shifted_identity(-theta * dt).solve_in_place(&mut gv)?,
        }
        let mut pk = gv.clone();
        if theta < 1.0 {
            a_t(k)?.apply_add((1.0 - theta) * dt, &gv, &mut pk);
        }
        let xk = match &xi_cached {
            Some(v) => v.clone(),
            None => xi_values(&problem.xi, &g, time.time(k), n)?,
        };
        for (v, x) in pk.iter_mut().zip(&xk) {
            *v += dt * x;
        }
        stage[k] = Field::from_values(g, gv)?;
        p[k] = Field::from_values(g, pk)?;
    }
    Ok(BackwardSolution {
        time: *time,
        p,
        stage,
    })
}

/// `p(x, s)` with `s` snapped to the nearest time node.
pub fn evaluate_p(sol: &BackwardSolution, x: f64, s: f64) -> Result<f64> {
    let k = sol.time.nearest_index(s)?;
    sol.p[k].interpolate(x)
}

/// Both sides of the discrete duality identity for a forward path stored in
/// full. Exact for deterministic `beta = h = 0`; in expectation otherwise.
pub fn duality_sides(
    forward: &SpdeProblem,
    path: &SpdePath,
    backward: &BackwardProblem,
    sol: &BackwardSolution,
) -> Result<(f64, f64)> {
    if !path.is_full() {
        return Err(Error::InvalidInput("duality needs the full forward history".into()));
    }
    if path.time_grid() != sol.time_grid() {
        return Err(Error::GridMismatch("forward and backward time grids differ".into()));
    }
    let time = sol.time;
    let g = *forward.grid();
    let dt = time.dt();
    let n = backward.coefficients.n_drivers();
    let mut lhs = path.terminal().inner(&backward.psi)?;
    let mut rhs = forward.initial.inner(sol.p(0))?;
    let mut w = vec![0.0; path.noise().n_drivers()];
    for k in 0..time.n_steps {
        let t = time.time(k);
        let xi = Field::from_values(g, xi_values(&backward.xi, &g, t, n)?)?;
        lhs += dt * path.field(k).expect("full history").inner(&xi)?;
        let phi = Field::sample(g, &forward.phi, t, &w)?;
        rhs += dt * phi.inner(sol.stage(k))?;
        for (wi, d) in w.iter_mut().zip(path.noise().step(k)) {
            *wi += d;
        }
    }
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;
    use crate::forward_spde::{solve_forward, HistoryMode, SchemeOptions};
    use crate::noise::NoisePath;
    use std::f64::consts::PI;

    fn unit(n: usize) -> SpaceGrid {
        SpaceGrid::new(0.0, 1.0, n).unwrap()
    }

    fn heat(n: usize, lambda: f64) -> BackwardProblem {
        let c = CoefficientSet::constant(0.5, 0.0, lambda, &[], &[]).unwrap();
        let psi = Field::from_fn(unit(n), |x| (PI * x).sin()).unwrap();
        BackwardProblem::new(c, Expression::constant(0.0), psi).unwrap()
    }

    #[test]
    fn zero_data() {
        let mut p = heat(20, 0.0);
        p.psi = Field::zeros(unit(20));
        let s = solve_backward(&p, &TimeGrid::new(0.0, 1.0, 10).unwrap(), 0.5).unwrap();
        assert!(s.history().iter().all(|f| f.values().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn eigenmode() {
        let t_end = 0.25;
        let p = heat(100, 0.0);
        let time = TimeGrid::new(0.0, t_end, 100).unwrap();
        let s = solve_backward(&p, &time, 0.5).unwrap();
        let decay = (-PI * PI * t_end / 2.0).exp();
        let err = unit(100)
            .interior()
            .zip(s.p(0).values())
            .map(|(x, v)| (v - decay * (PI * x).sin()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-4, "{err}");
        assert!((evaluate_p(&s, 0.5, 0.0).unwrap() - decay).abs() < 1e-4);
        assert_eq!(evaluate_p(&s, 0.0, 0.1).unwrap(), 0.0);
        assert_eq!(evaluate_p(&s, 0.37, t_end).unwrap(), p.psi.interpolate(0.37).unwrap());
        assert!(evaluate_p(&s, 0.5, 2.0).is_err());
    }

    #[test]
    fn lambda_shift_scales_solution() {
        let c_shift = 0.8;
        let time = TimeGrid::new(0.0, 0.5, 1000).unwrap();
        let base = solve_backward(&heat(40, 0.0), &time, 1.0).unwrap();
        // lambda -> -c raises tilde_lambda by c
        let shifted = solve_backward(&heat(40, -c_shift), &time, 1.0).unwrap();
        for k in [0usize, 300, 700] {
            let scale = (-c_shift * (0.5 - time.time(k))).exp();
            for (a, b) in shifted.p(k).values().iter().zip(base.p(k).values()) {
                let rel = (a - scale * b).abs() / (scale * b.abs()).max(1e-12);
                assert!(rel < 5.0 * time.dt(), "k={k} rel={rel}");
            }
        }
    }

    #[test]
    fn rejects_random_coefficients() {
        let c = CoefficientSet::new(
            parse_expr("0.5+0.1*W1").unwrap(),
            Expression::constant(0.0),
            Expression::constant(0.0),
            vec![Expression::constant(0.1)],
            vec![Expression::constant(0.0)],
        )
        .unwrap();
        let r = BackwardProblem::new(c, Expression::constant(0.0), Field::zeros(unit(5)));
        assert!(matches!(r, Err(Error::RandomCoefficients(_))));
    }

    fn duality_case(theta: f64) -> (f64, f64) {
        let g = unit(30);
        let c = CoefficientSet::new(
            parse_expr("0.4+0.1*sin(2*x)*(1+t)").unwrap(),
            parse_expr("0.3*cos(x)").unwrap(),
            parse_expr("0.2*x-0.5*t").unwrap(),
            vec![],
            vec![],
        )
        .unwrap();
        let fwd = SpdeProblem::new(
            c.clone(),
            parse_expr("exp(-x)*(1+t)").unwrap(),
            vec![],
            Field::from_fn(g, |x| x * (1.0 - x) * (3.0 * x).exp()).unwrap(),
        )
        .unwrap();
        let bwd = BackwardProblem::new(
            c,
            parse_expr("x*x+t").unwrap(),
            Field::from_fn(g, |x| (PI * x).sin() + x).unwrap(),
        )
        .unwrap();
        let time = TimeGrid::new(0.0, 0.2, 200).unwrap();
        let noise = NoisePath::from_increments(time, 0, vec![]).unwrap();
        let path = solve_forward(&fwd, &noise, &SchemeOptions::theta(theta), HistoryMode::Full).unwrap();
        let sol = solve_backward(&bwd, &time, theta).unwrap();
        duality_sides(&fwd, &path, &bwd, &sol).unwrap()
    }

    #[test]
    fn exact_duality() {
        for theta in [0.5, 0.75, 1.0] {
            let (l, r) = duality_case(theta);
            assert!((l - r).abs() <= 1e-12 * l.abs().max(1.0), "theta={theta}: {l} vs {r}");
        }
    }

    #[test]
    fn implicit_stage_equals_p_for_fully_implicit_without_source() {
        let time = TimeGrid::new(0.0, 0.1, 20).unwrap();
        let s = solve_backward(&heat(20, 0.0), &time, 1.0).unwrap();
        for k in 0..20 {
            assert_eq!(s.stage(k), s.p(k));
        }
    }

    #[test]
    fn maximum_principle_fully_implicit() {
        let g = unit(40);
        let c = CoefficientSet::new(
            parse_expr("0.3+0.2*x").unwrap(),
            parse_expr("1.5*sin(4*x)").unwrap(),
            parse_expr("-0.3").unwrap(),
            vec![],
            vec![],
        )
        .unwrap();
        let bwd = BackwardProblem::new(
            c,
            parse_expr("abs(sin(7*x))").unwrap(),
            Field::from_fn(g, |x| if (0.4..0.5).contains(&x) { 1.0 } else { 0.0 }).unwrap(),
        )
        .unwrap();
        let s = solve_backward(&bwd, &TimeGrid::new(0.0, 0.5, 100).unwrap(), 1.0).unwrap();
        for f in s.history() {
            assert!(f.min() >= 0.0);
        }
    }

    #[test]
    fn contraction_bound() {
        // beta = bar_beta = 0 and tilde_lambda = f_x - b_xx - lambda = 0.2 >= 0
        let g = unit(40);
        let c = CoefficientSet::new(
            parse_expr("0.5").unwrap(),
            parse_expr("x").unwrap(),
            parse_expr("0.8").unwrap(),
            vec![],
            vec![],
        )
        .unwrap();
        let bwd = BackwardProblem::new(
            c,
            parse_expr("1+x").unwrap(),
            Field::from_fn(g, |x| (PI * x).sin()).unwrap(),
        )
        .unwrap();
        let time = TimeGrid::new(0.0, 0.5, 100).unwrap();
        let s = solve_backward(&bwd, &time, 1.0).unwrap();
        for (k, f) in s.history().iter().enumerate() {
            let bound = 1.0 + (0.5 - time.time(k)) * 2.0 + 1e-3 * 2.0;
            assert!(f.norm(crate::grid::NormKind::Sup) <= bound);
        }
    }
}

//! Operator coefficients, their adjoint and SDE forms, and coercivity checks.
//!
//! The forward operators are
//!
//! ```text
//! A v   = b v_xx + f v_x + lambda v
//! B_i v = beta_i v_x + bar_beta_i v
//! ```
//!
//! and the non-divergence adjoint form used by the killed diffusion is
//!
//! ```text
//! A* v  = b v_xx + hat_f v_x - tilde_lambda v,   hat_f = 2 b_x - f,
//!                                                 tilde_lambda = f_x - b_xx - lambda
//! tilde_beta_i = bar_beta_i - (beta_i)_x
//! ```

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::expr::{Expression, Point};
use crate::grid::{SpaceGrid, TimeGrid};
use crate::linalg::{jacobi_eigen, SymMatrix};
use crate::noise::{stream_rng, Namespace};

/// Floor for `2b - sum beta_i^2` when completing the diffusion.
pub const COMPLETION_FLOOR: f64 = 1e-8;

/// Sign of the `beta_i dw_i` coupling in the killed SDE relative to the
/// forward equation's noise. The negative sign is the one under which the
/// forward solution is the conditional density of the killed process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorrelationSign {
    Plus,
    Minus,
}

impl CorrelationSign {
    pub fn value(self) -> f64 {
        match self {
            CorrelationSign::Plus => 1.0,
            CorrelationSign::Minus => -1.0,
        }
    }

    pub fn from_value(v: i64) -> Result<Self> {
        match v {
            1 => Ok(CorrelationSign::Plus),
            -1 => Ok(CorrelationSign::Minus),
            _ => Err(Error::InvalidInput(format!(
                "correlation sign must be +1 or -1, got {v}"
            ))),
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            CorrelationSign::Plus => CorrelationSign::Minus,
            CorrelationSign::Minus => CorrelationSign::Plus,
        }
    }
}

impl Default for CorrelationSign {
    fn default() -> Self {
        CorrelationSign::Minus
    }
}

/// Optional user-supplied derivatives; missing ones are derived symbolically.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Derivatives {
    pub b_x: Option<Expression>,
    pub b_xx: Option<Expression>,
    pub f_x: Option<Expression>,
    pub beta_x: Vec<Option<Expression>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub b: Expression,
    pub f: Expression,
    pub lambda: Expression,
    pub beta: Vec<Expression>,
    pub bar_beta: Vec<Expression>,
    pub derivatives: Derivatives,
}

impl CoefficientSet {
    pub fn new(
        b: Expression,
        f: Expression,
        lambda: Expression,
        beta: Vec<Expression>,
        bar_beta: Vec<Expression>,
    ) -> Result<Self> {
        if beta.len() != bar_beta.len() {
            return Err(Error::InvalidInput(format!(
                "{} beta expressions but {} bar_beta expressions",
                beta.len(),
                bar_beta.len()
            )));
        }
        let set = Self {
            b,
            f,
            lambda,
            beta,
            bar_beta,
            derivatives: Derivatives::default(),
        };
        let n = set.n_drivers();
        if let Some(e) = set.all().find(|e| e.max_driver() > n) {
            return Err(Error::InvalidInput(format!(
                "`{e}` refers to W{} but only {n} common drivers exist",
                e.max_driver()
            )));
        }
        Ok(set)
    }

    /// Constant-coefficient set, convenient for tests and examples.
    pub fn constant(b: f64, f: f64, lambda: f64, beta: &[f64], bar_beta: &[f64]) -> Result<Self> {
        Self::new(
            Expression::constant(b),
            Expression::constant(f),
            Expression::constant(lambda),
            beta.iter().map(|&v| Expression::constant(v)).collect(),
            bar_beta.iter().map(|&v| Expression::constant(v)).collect(),
        )
    }

    pub fn with_derivatives(mut self, d: Derivatives) -> Result<Self> {
        if !d.beta_x.is_empty() && d.beta_x.len() != self.n_drivers() {
            return Err(Error::InvalidInput(format!(
                "{} beta_x expressions for {} drivers",
                d.beta_x.len(),
                self.n_drivers()
            )));
        }
        self.derivatives = d;
        Ok(self)
    }

    pub fn n_drivers(&self) -> usize {
        self.beta.len()
    }

    fn all(&self) -> impl Iterator<Item = &Expression> {
        [&self.b, &self.f, &self.lambda]
            .into_iter()
            .chain(self.beta.iter())
            .chain(self.bar_beta.iter())
    }

    /// Whether any coefficient mentions a common driver value.
    pub fn depends_on_noise(&self) -> bool {
        self.all().any(|e| e.depends_on_noise())
    }

    pub fn depends_on_time(&self) -> bool {
        self.all().any(|e| e.depends_on_time())
    }

    /// Every coefficient must evaluate finitely at every sample point.
    pub fn validate(&self, samples: &Samples) -> Result<()> {
        for p in samples.points() {
            for e in self.all() {
                e.eval(p.as_point())?;
            }
        }
        Ok(())
    }

    fn b_x(&self) -> Result<Expression> {
        match &self.derivatives.b_x {
            Some(e) => Ok(e.clone()),
            None => Ok(self.b.derivative_x()?),
        }
    }

    fn b_xx(&self) -> Result<Expression> {
        match &self.derivatives.b_xx {
            Some(e) => Ok(e.clone()),
            None => Ok(self.b_x()?.derivative_x()?),
        }
    }

    fn f_x(&self) -> Result<Expression> {
        match &self.derivatives.f_x {
            Some(e) => Ok(e.clone()),
            None => Ok(self.f.derivative_x()?),
        }
    }

    fn beta_x(&self, i: usize) -> Result<Expression> {
        match self.derivatives.beta_x.get(i) {
            Some(Some(e)) => Ok(e.clone()),
            _ => Ok(self.beta[i].derivative_x()?),
        }
    }
}

/// Sample points covering the closed domain, used for validation.
#[derive(Debug, Clone)]
pub struct SamplePoint {
    pub x: f64,
    pub t: f64,
    pub w: Vec<f64>,
}

impl SamplePoint {
    pub fn as_point(&self) -> Point<'_> {
        Point::new(self.x, self.t, &self.w)
    }
}

#[derive(Debug, Clone)]
pub struct Samples {
    points: Vec<SamplePoint>,
}

impl Samples {
    pub fn from_points(points: Vec<SamplePoint>) -> Self {
        Self { points }
    }

    /// All space nodes (boundary included) times all time nodes, with
    /// `noise_draws` seeded draws `W(t) ~ N(0, t - t0)` per node when the
    /// coefficients are noise dependent. Time is only sampled at `t0` for
    /// time-independent sets.
    pub fn for_set(
        set: &CoefficientSet,
        space: &SpaceGrid,
        time: &TimeGrid,
        noise_draws: usize,
        seed: u64,
    ) -> Self {
        let n = set.n_drivers();
        let time_nodes: Vec<f64> = if set.depends_on_time() {
            (0..=time.n_steps).map(|k| time.time(k)).collect()
        } else {
            vec![time.t0]
        };
        let draws: Vec<Vec<f64>> = if set.depends_on_noise() && noise_draws > 0 {
            let mut rng = stream_rng(seed, Namespace::Auxiliary, 0);
            (0..noise_draws)
                .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
                .collect()
        } else {
            vec![vec![0.0; n]]
        };
        let mut points = Vec::new();
        for &t in &time_nodes {
            let sd = (t - time.t0).max(0.0).sqrt();
            for z in &draws {
                let w: Vec<f64> = z.iter().map(|v| v * sd).collect();
                for j in 0..=space.n_cells {
                    points.push(SamplePoint {
                        x: space.node(j),
                        t,
                        w: w.clone(),
                    });
                }
            }
        }
        Self { points }
    }

    pub fn points(&self) -> &[SamplePoint] {
        &self.points
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointSet {
    pub hat_f: Expression,
    pub tilde_lambda: Expression,
    pub tilde_beta: Vec<Expression>,
}

pub fn derive_adjoint(c: &CoefficientSet) -> Result<AdjointSet> {
    let hat_f = 2.0 * c.b_x()? - c.f.clone();
    let tilde_lambda = c.f_x()? - c.b_xx()? - c.lambda.clone();
    let tilde_beta = (0..c.n_drivers())
        .map(|i| Ok(c.bar_beta[i].clone() - c.beta_x(i)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(AdjointSet {
        hat_f,
        tilde_lambda,
        tilde_beta,
    })
}

/// `2b - sum beta_i^2`.
fn completion_residual(c: &CoefficientSet) -> Expression {
    c.beta
        .iter()
        .fold(2.0 * c.b.clone(), |acc, beta| acc - beta.clone().powi(2))
}

/// In one dimension the completion has a single column
/// `sigma = sqrt(2b - sum beta_i^2)`.
pub fn complete_diffusion(c: &CoefficientSet, samples: &Samples) -> Result<Vec<Expression>> {
    let residual = completion_residual(c);
    for p in samples.points() {
        let r = residual.eval(p.as_point())?;
        if r < COMPLETION_FLOOR {
            return Err(Error::Coercivity {
                x: p.x,
                t: p.t,
                residual: r,
            });
        }
    }
    Ok(vec![residual.sqrt()])
}

/// Coefficients of the killed diffusion
/// `dy = f~ dt + s sum beta_i dw_i + sum sigma_j dw~_j` and of its weight
/// `gamma = exp(-int tilde_lambda dt + sum int tilde_beta_i dw_i - 1/2 sum int tilde_beta_i^2 dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdeSet {
    pub drift: Expression,
    pub beta: Vec<Expression>,
    pub sigma: Vec<Expression>,
    pub tilde_lambda: Expression,
    pub tilde_beta: Vec<Expression>,
    pub hat_f: Expression,
    pub correlation_sign: CorrelationSign,
}

impl SdeSet {
    pub fn n_common(&self) -> usize {
        self.beta.len()
    }

    pub fn n_independent(&self) -> usize {
        self.sigma.len()
    }

    fn all(&self) -> impl Iterator<Item = &Expression> {
        [&self.drift, &self.tilde_lambda]
            .into_iter()
            .chain(self.beta.iter())
            .chain(self.sigma.iter())
            .chain(self.tilde_beta.iter())
    }

    pub fn depends_on_noise(&self) -> bool {
        self.all().any(|e| e.depends_on_noise())
    }

    /// True when every coefficient is a literal.
    pub fn is_constant(&self) -> bool {
        self.all().all(|e| e.as_constant().is_some())
    }

    /// Same dynamics with the other coupling sign.
    pub fn with_sign(&self, sign: CorrelationSign) -> SdeSet {
        if sign == self.correlation_sign {
            return self.clone();
        }
        let mut out = self.clone();
        out.correlation_sign = sign;
        out.drift = drift_for(&self.hat_f, &self.beta, &self.tilde_beta, sign);
        out
    }
}

/// `f~ = hat_f - s * sum tilde_beta_i beta_i`; the cross variation between
/// the `s beta_i dw_i` coupling and the weight's `tilde_beta_i dw_i` term
/// restores the generator drift `hat_f`.
fn drift_for(
    hat_f: &Expression,
    beta: &[Expression],
    tilde_beta: &[Expression],
    sign: CorrelationSign,
) -> Expression {
    beta.iter().zip(tilde_beta).fold(hat_f.clone(), |acc, (b, tb)| {
        acc - sign.value() * (tb.clone() * b.clone())
    })
}

pub fn derive_sde(c: &CoefficientSet, samples: &Samples, sign: CorrelationSign) -> Result<SdeSet> {
    let adj = derive_adjoint(c)?;
    let sigma = complete_diffusion(c, samples)?;
    let drift = drift_for(&adj.hat_f, &c.beta, &adj.tilde_beta, sign);
    let sde = SdeSet {
        drift,
        beta: c.beta.clone(),
        sigma,
        tilde_lambda: adj.tilde_lambda,
        tilde_beta: adj.tilde_beta,
        hat_f: adj.hat_f,
        correlation_sign: sign,
    };
    for p in samples.points() {
        for e in sde.all() {
            e.eval(p.as_point())?;
        }
    }
    Ok(sde)
}

/// Outcome of a coercivity check. `witness` holds the sample point and the
/// minimizing direction(s) `y_1..y_N` when the check fails.
#[derive(Debug, Clone, PartialEq)]
pub struct CoercivityReport {
    pub delta: f64,
    pub holds: bool,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub x: f64,
    pub t: f64,
    pub w: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
}

/// One sample of matrix-valued coefficients in dimension `n`.
#[derive(Debug, Clone)]
pub struct MatrixSample {
    pub b: SymMatrix,
    pub beta: Vec<Vec<f64>>,
}

impl MatrixSample {
    pub fn new(b: SymMatrix, beta: Vec<Vec<f64>>) -> Result<Self> {
        let n = b.dim();
        if !b.is_symmetric(1e-12) {
            return Err(Error::InvalidInput("b must be symmetric".into()));
        }
        if let Some(v) = beta.iter().find(|v| v.len() != n) {
            return Err(Error::InvalidInput(format!(
                "beta vector of length {} in dimension {n}",
                v.len()
            )));
        }
        Ok(Self { b, beta })
    }

    /// `lambda_min(b - 1/2 sum beta_i beta_i^T)` and its eigenvector.
    pub fn superparabolic_margin(&self) -> (f64, Vec<f64>) {
        let mut m = self.b.clone();
        for v in &self.beta {
            m.add_outer(-0.5, v);
        }
        let e = jacobi_eigen(&m);
        let (lam, vec) = e.min();
        (lam, vec.to_vec())
    }

    /// `lambda_min(I_N (x) b - 1/2 s s^T)` with `s` stacking `beta_1..beta_N`,
    /// and the minimizing eigenvector split into `y_1..y_N`.
    pub fn strengthened_margin(&self) -> (f64, Vec<Vec<f64>>) {
        let n = self.b.dim();
        let big_n = self.beta.len();
        if big_n == 0 {
            let e = jacobi_eigen(&self.b);
            let (lam, v) = e.min();
            return (lam, vec![v.to_vec()]);
        }
        let mut m = self.b.kron_identity(big_n);
        let s: Vec<f64> = self.beta.iter().flatten().copied().collect();
        m.add_outer(-0.5, &s);
        let e = jacobi_eigen(&m);
        let (lam, v) = e.min();
        (lam, v.chunks(n).map(|c| c.to_vec()).collect())
    }
}

fn matrix_report<'a>(
    samples: impl Iterator<Item = (Option<&'a SamplePoint>, MatrixSample)>,
    strengthened: bool,
) -> CoercivityReport {
    let mut best: Option<(f64, Option<&SamplePoint>, Vec<Vec<f64>>)> = None;
    for (pt, s) in samples {
        let (d, dirs) = if strengthened {
            s.strengthened_margin()
        } else {
            let (d, v) = s.superparabolic_margin();
            (d, vec![v])
        };
        if best.as_ref().map_or(true, |(b, _, _)| d < *b) {
            best = Some((d, pt, dirs));
        }
    }
    let Some((delta, pt, dirs)) = best else {
        return CoercivityReport {
            delta: f64::INFINITY,
            holds: true,
            witness: None,
        };
    };
    let holds = delta > 0.0;
    CoercivityReport {
        delta,
        holds,
        witness: (!holds).then(|| Witness {
            x: pt.map_or(f64::NAN, |p| p.x),
            t: pt.map_or(f64::NAN, |p| p.t),
            w: pt.map_or_else(Vec::new, |p| p.w.clone()),
            directions: dirs,
        }),
    }
}

fn scalar_samples<'a>(
    c: &'a CoefficientSet,
    samples: &'a Samples,
) -> Result<Vec<(Option<&'a SamplePoint>, MatrixSample)>> {
    samples
        .points()
        .iter()
        .map(|p| {
            let b = c.b.eval(p.as_point())?;
            let beta = c
                .beta
                .iter()
                .map(|e| Ok(vec![e.eval(p.as_point())?]))
                .collect::<Result<Vec<_>>>()?;
            Ok((
                Some(p),
                MatrixSample {
                    b: SymMatrix::from_rows(&[vec![b]]),
                    beta,
                },
            ))
        })
        .collect()
}

/// `delta = min over samples of b - 1/2 sum beta_i^2` (one dimension).
pub fn check_superparabolic(c: &CoefficientSet, samples: &Samples) -> Result<CoercivityReport> {
    Ok(matrix_report(scalar_samples(c, samples)?.into_iter(), false))
}

/// Block form over `N` simultaneous directions (one dimension).
pub fn check_strengthened_coercivity(
    c: &CoefficientSet,
    samples: &Samples,
) -> Result<CoercivityReport> {
    Ok(matrix_report(scalar_samples(c, samples)?.into_iter(), true))
}

/// General-dimension validator on explicit matrix samples.
pub fn check_superparabolic_matrices(samples: &[MatrixSample]) -> CoercivityReport {
    matrix_report(samples.iter().map(|s| (None, s.clone())), false)
}

pub fn check_strengthened_matrices(samples: &[MatrixSample]) -> CoercivityReport {
    matrix_report(samples.iter().map(|s| (None, s.clone())), true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    fn samples(c: &CoefficientSet) -> Samples {
        let space = SpaceGrid::new(0.0, 1.0, 20).unwrap();
        let time = TimeGrid::new(0.0, 0.5, 10).unwrap();
        Samples::for_set(c, &space, &time, 4, 1)
    }

    fn unit_betas_in_2d() -> MatrixSample {
        MatrixSample::new(
            SymMatrix::from_rows(&[vec![0.51, 0.0], vec![0.0, 0.51]]),
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        )
        .unwrap()
    }

    #[test]
    fn constant_adjoint() {
        let c = CoefficientSet::constant(0.5, 0.0, 0.0, &[], &[]).unwrap();
        let a = derive_adjoint(&c).unwrap();
        assert_eq!(a.hat_f.as_constant(), Some(0.0));
        assert_eq!(a.tilde_lambda.as_constant(), Some(0.0));
        let c = CoefficientSet::constant(0.5, 0.0, 0.7, &[], &[]).unwrap();
        assert_eq!(derive_adjoint(&c).unwrap().tilde_lambda.as_constant(), Some(-0.7));
    }

    #[test]
    fn variable_diffusion_adjoint() {
        let c = CoefficientSet::new(
            parse_expr("0.5+0.1*sin(x)").unwrap(),
            Expression::constant(0.0),
            Expression::constant(0.0),
            vec![],
            vec![],
        )
        .unwrap();
        let a = derive_adjoint(&c).unwrap();
        for &x in &[0.0, 0.25, 0.9] {
            assert!((a.hat_f.eval_xt(x, 0.0).unwrap() - 0.2 * x.cos()).abs() < 1e-15);
            assert!((a.tilde_lambda.eval_xt(x, 0.0).unwrap() - 0.1 * x.sin()).abs() < 1e-15);
        }
    }

    #[test]
    fn explicit_derivatives_take_precedence() {
        let c = CoefficientSet::new(
            parse_expr("0.5").unwrap(),
            parse_expr("x").unwrap(),
            Expression::constant(0.0),
            vec![],
            vec![],
        )
        .unwrap()
        .with_derivatives(Derivatives {
            f_x: Some(Expression::constant(3.0)),
            ..Default::default()
        })
        .unwrap();
        let a = derive_adjoint(&c).unwrap();
        assert_eq!(a.tilde_lambda.as_constant(), Some(3.0));
    }

    #[test]
    fn completion() {
        let s = |c: &CoefficientSet| complete_diffusion(c, &samples(c));
        let c = CoefficientSet::constant(0.5, 0.0, 0.0, &[], &[]).unwrap();
        assert_eq!(s(&c).unwrap()[0].as_constant(), Some(1.0));
        let c = CoefficientSet::constant(0.5, 0.0, 0.0, &[0.5], &[0.0]).unwrap();
        assert_eq!(s(&c).unwrap()[0].as_constant(), Some(0.75f64.sqrt()));
        let c = CoefficientSet::constant(0.5, 0.0, 0.0, &[1.0], &[0.0]).unwrap();
        match s(&c) {
            Err(Error::Coercivity { residual, .. }) => assert_eq!(residual, 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sde_constants() {
        let c = CoefficientSet::constant(0.5, 0.0, 0.0, &[0.5], &[0.0]).unwrap();
        for sign in [CorrelationSign::Plus, CorrelationSign::Minus] {
            let sde = derive_sde(&c, &samples(&c), sign).unwrap();
            assert_eq!(sde.drift.as_constant(), Some(0.0));
            assert_eq!(sde.sigma[0].as_constant(), Some(0.75f64.sqrt()));
            assert_eq!(sde.tilde_beta[0].as_constant(), Some(0.0));
            assert!(sde.is_constant());
        }
        // empty sum: drift equals hat_f
        let c = CoefficientSet::new(
            parse_expr("0.5+0.1*x").unwrap(),
            parse_expr("0.3").unwrap(),
            Expression::constant(0.0),
            vec![],
            vec![],
        )
        .unwrap();
        let sde = derive_sde(&c, &samples(&c), CorrelationSign::Plus).unwrap();
        assert_eq!(sde.drift, sde.hat_f);
        // beta = 0.5, bar_beta = 1: tilde_beta = 1, drift = hat_f -/+ 0.5
        let c = CoefficientSet::constant(0.5, 0.0, 0.0, &[0.5], &[1.0]).unwrap();
        let plus = derive_sde(&c, &samples(&c), CorrelationSign::Plus).unwrap();
        assert_eq!(plus.tilde_beta[0].as_constant(), Some(1.0));
        assert_eq!(plus.drift.as_constant(), Some(-0.5));
        let minus = plus.with_sign(CorrelationSign::Minus);
        assert_eq!(minus.drift.as_constant(), Some(0.5));
    }

    #[test]
    fn sde_identities_hold_on_samples() {
        let c = CoefficientSet::new(
            parse_expr("0.6+0.1*sin(3*x)*cos(t)").unwrap(),
            parse_expr("0.2*x").unwrap(),
            parse_expr("-0.1").unwrap(),
            vec![parse_expr("0.4*cos(x)").unwrap(), parse_expr("0.2+0.1*W1").unwrap()],
            vec![parse_expr("0.3").unwrap(), parse_expr("x").unwrap()],
        )
        .unwrap();
        let smp = samples(&c);
        for sign in [CorrelationSign::Plus, CorrelationSign::Minus] {
            let sde = derive_sde(&c, &smp, sign).unwrap();
            for p in smp.points() {
                let pt = p.as_point();
                let ev = |e: &Expression| e.eval(pt).unwrap();
                let sum_b2: f64 = sde.beta.iter().map(|e| ev(e).powi(2)).sum();
                let sum_s2: f64 = sde.sigma.iter().map(|e| ev(e).powi(2)).sum();
                assert!((2.0 * ev(&c.b) - sum_b2 - sum_s2).abs() < 1e-12);
                let cross: f64 = sde
                    .beta
                    .iter()
                    .zip(&sde.tilde_beta)
                    .map(|(b, tb)| ev(b) * ev(tb))
                    .sum();
                assert!((ev(&sde.drift) + sign.value() * cross - ev(&sde.hat_f)).abs() < 1e-12);
            }
        }
        assert!(c.depends_on_noise());
    }

    #[test]
    fn driver_index_beyond_count_is_rejected() {
        let r = CoefficientSet::new(
            parse_expr("0.5+W2").unwrap(),
            Expression::constant(0.0),
            Expression::constant(0.0),
            vec![Expression::constant(0.1)],
            vec![Expression::constant(0.0)],
        );
        assert!(r.is_err());
    }

    #[test]
    fn superparabolic_one_dimension() {
        let c = CoefficientSet::constant(0.5, 0.0, 0.0, &[0.5], &[0.0]).unwrap();
        let r = check_superparabolic(&c, &samples(&c)).unwrap();
        assert!(r.holds);
        assert!((r.delta - 0.375).abs() < 1e-15);
        let r1 = check_strengthened_coercivity(&c, &samples(&c)).unwrap();
        assert!((r1.delta - r.delta).abs() < 1e-12);

        let c = CoefficientSet::constant(0.5, 0.0, 0.0, &[1.0], &[0.0]).unwrap();
        let r = check_superparabolic(&c, &samples(&c)).unwrap();
        assert!(!r.holds);
        assert_eq!(r.delta, 0.0);
        assert!(r.witness.is_some());
    }

    #[test]
    fn strengthened_without_noise_is_min_b() {
        let c = CoefficientSet::new(
            parse_expr("0.3+x").unwrap(),
            Expression::constant(0.0),
            Expression::constant(0.0),
            vec![Expression::constant(0.0), Expression::constant(0.0)],
            vec![Expression::constant(0.0), Expression::constant(0.0)],
        )
        .unwrap();
        let r = check_strengthened_coercivity(&c, &samples(&c)).unwrap();
        assert!((r.delta - 0.3).abs() < 1e-12);
    }

    #[test]
    fn unit_betas_in_2d_margins() {
        let s = [unit_betas_in_2d()];
        let main1 = check_superparabolic_matrices(&s);
        assert!(main1.holds);
        assert!((main1.delta - 0.01).abs() < 1e-9);
        let main1s = check_strengthened_matrices(&s);
        assert!(!main1s.holds);
        assert!((main1s.delta + 0.49).abs() < 1e-9);
        let w = main1s.witness.unwrap();
        let stacked: Vec<f64> = w.directions.iter().flatten().copied().collect();
        let s_dir = [1.0, 0.0, 0.0, 1.0];
        let cos = stacked.iter().zip(&s_dir).map(|(a, b)| a * b).sum::<f64>()
            / (stacked.iter().map(|a| a * a).sum::<f64>().sqrt() * 2f64.sqrt());
        assert!(cos.abs() >= 0.999);
    }

    #[test]
    fn strengthened_implies_superparabolic() {
        // random symmetric positive b and small beta vectors
        use rand::Rng;
        let mut rng = stream_rng(9, Namespace::Auxiliary, 1);
        for _ in 0..200 {
            let n = rng.random_range(1..4);
            let nn = rng.random_range(1..4);
            let mut b = SymMatrix::identity(n);
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            b.add_outer(1.0, &v);
            let beta: Vec<Vec<f64>> = (0..nn)
                .map(|_| (0..n).map(|_| rng.random_range(-0.8..0.8)).collect())
                .collect();
            let s = MatrixSample::new(b, beta).unwrap();
            let (d1, _) = s.strengthened_margin();
            let (d, _) = s.superparabolic_margin();
            if d1 > 0.0 {
                assert!(d >= d1 - 1e-12, "d={d} d1={d1}");
            }
        }
    }
}

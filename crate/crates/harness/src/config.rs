//! Experiment configuration files (TOML).
//!
//! Every expression is a string handed to the expression parser. Unknown
//! keys are rejected.

use std::path::{Path, PathBuf};

use kspde::coefficients::{CoefficientSet, CorrelationSign, Derivatives, Samples};
use kspde::expr::{parse_expr, Expression};
use kspde::grid::{SpaceGrid, TimeGrid};
use kspde::sde::Interval;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Validate,
    Repr,
    Density,
    Sign,
    Duality,
    Principles,
    Converge,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Validate => "validate",
            ExperimentKind::Repr => "repr",
            ExperimentKind::Density => "density",
            ExperimentKind::Sign => "sign",
            ExperimentKind::Duality => "duality",
            ExperimentKind::Principles => "principles",
            ExperimentKind::Converge => "converge",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub domain: DomainConfig,
    pub grid: GridConfig,
    pub coefficients: CoefficientConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub tolerance: ToleranceConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validator: Option<ValidatorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub principles: Option<PrinciplesConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub a: f64,
    pub b_right: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    #[serde(default)]
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_cells: usize,
    pub n_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConfig {
    pub b: String,
    #[serde(default = "zero")]
    pub f: String,
    #[serde(default = "zero")]
    pub lambda: String,
    #[serde(default)]
    pub beta: Vec<String>,
    #[serde(default)]
    pub bar_beta: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_x: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_xx: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_x: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub beta_x: Vec<String>,
}

fn zero() -> String {
    "0".into()
}

/// A single expression or a list of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

impl OneOrMany {
    pub fn items(&self) -> Vec<String> {
        match self {
            OneOrMany::One(s) => vec![s.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default = "zero")]
    pub xi: String,
    #[serde(default = "default_psi")]
    pub psi: OneOrMany,
    /// Forward initial condition.
    #[serde(default = "zero", rename = "Phi")]
    pub initial: String,
    #[serde(default = "zero")]
    pub phi: String,
    #[serde(default)]
    pub h: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<String>,
    /// Probe points for representation checks.
    #[serde(default)]
    pub probes: Vec<f64>,
}

fn default_psi() -> OneOrMany {
    OneOrMany::One(zero())
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            xi: zero(),
            psi: default_psi(),
            initial: zero(),
            phi: zero(),
            h: Vec::new(),
            rho: None,
            probes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_paths")]
    pub n_inner_paths: usize,
    /// Euler steps over `[0, T]`; defaults to the grid's step count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub bridge: bool,
    #[serde(default = "minus_one")]
    pub correlation_sign: i64,
}

fn default_paths() -> usize {
    1000
}

fn yes() -> bool {
    true
}

fn minus_one() -> i64 {
    -1
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_paths: default_paths(),
            n_inner_paths: default_paths(),
            n_steps: None,
            seed: 0,
            bridge: true,
            correlation_sign: -1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    #[serde(default = "one")]
    pub theta: f64,
    #[serde(default)]
    pub cfl_override: bool,
    #[serde(default = "one")]
    pub c_cfl: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            theta: 1.0,
            cfl_override: false,
            c_cfl: 1.0,
        }
    }
}

/// Allowances added to `3 * std_error`, and deterministic thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    #[serde(default = "default_mc_slack")]
    pub mc_slack: f64,
    #[serde(default = "default_z")]
    pub z: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pde_sup: Option<f64>,
    #[serde(default = "default_exact")]
    pub exact: f64,
    /// Allowed failing comparisons in the density check.
    #[serde(default = "default_max_failures")]
    pub max_failures: usize,
    /// Required discrepancy, in multiples of the tolerance, for the rejected sign.
    #[serde(default = "default_sign_factor")]
    pub sign_factor: f64,
}

fn default_mc_slack() -> f64 {
    0.02
}

fn default_z() -> f64 {
    3.0
}

fn default_exact() -> f64 {
    1e-12
}

fn default_max_failures() -> usize {
    1
}

fn default_sign_factor() -> f64 {
    5.0
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            mc_slack: default_mc_slack(),
            z: default_z(),
            pde_sup: None,
            exact: default_exact(),
            max_failures: default_max_failures(),
            sign_factor: default_sign_factor(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub kind: OracleKind,
    /// Expected validator margins and witness direction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub witness: Vec<f64>,
    #[serde(default = "default_margin_tol")]
    pub margin_tol: f64,
    #[serde(default = "default_cosine")]
    pub min_cosine: f64,
}

fn default_margin_tol() -> f64 {
    1e-9
}

fn default_cosine() -> f64 {
    0.999
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    /// `exp(-b pi^2 T / L^2) sin(pi (x - a) / L)` for `Psi = sin(pi (x - a) / L)`.
    HeatEigenmode,
    /// Survival probability of `x + sqrt(2b) W` in the interval.
    ImageSeries,
    /// Expected validator margins only.
    Margins,
}

/// Matrix-valued coefficient samples for validators in any dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidatorConfig {
    pub samples: Vec<MatrixSampleConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSampleConfig {
    pub b: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrinciplesConfig {
    pub n_instances: usize,
    pub n_paths: usize,
    #[serde(default = "default_principle_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_l1_factor")]
    pub l1_factor: f64,
}

fn default_principle_tol() -> f64 {
    1e-3
}

fn default_l1_factor() -> f64 {
    1.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    /// Cell counts for the spatial study (coarse, fine).
    pub heat_cells: [usize; 2],
    pub heat_steps: usize,
    pub heat_ratio: [f64; 2],
    /// Exit problem horizon and start point.
    pub exit_t_end: f64,
    pub exit_x: f64,
    /// Euler step counts for the bias study (coarse, fine).
    pub exit_steps: [usize; 2],
    pub exit_paths: usize,
    pub bias_ratio: [f64; 2],
    /// Path counts for the standard-error study (n, 4n).
    pub stderr_paths: [usize; 2],
    pub stderr_ratio: [f64; 2],
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text).map_err(|e| match e {
            HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Structural checks and a full parse of every expression.
    pub fn check(&self) -> Result<()> {
        self.space_grid()?;
        self.time_grid()?;
        self.mc_time_grid()?;
        self.coefficient_set()?;
        self.xi()?;
        self.psi()?;
        self.initial()?;
        self.phi()?;
        self.h()?;
        self.rho()?;
        self.correlation_sign()?;
        let d = &self.domain;
        if !(d.s >= 0.0 && d.s < d.t_end) {
            return Err(HarnessError::Config(format!(
                "start time s={} must lie in [0, T)",
                d.s
            )));
        }
        if let Some(x) = self.data.probes.iter().find(|&&x| !(x >= d.a && x <= d.b_right)) {
            return Err(HarnessError::Config(format!("probe {x} outside the domain")));
        }
        match self.experiment {
            ExperimentKind::Density | ExperimentKind::Sign if self.data.rho.is_none() => {
                return Err(HarnessError::Config("density experiments need data.rho".into()))
            }
            ExperimentKind::Principles if self.principles.is_none() => {
                return Err(HarnessError::Config("missing [principles] section".into()))
            }
            ExperimentKind::Converge if self.convergence.is_none() => {
                return Err(HarnessError::Config("missing [convergence] section".into()))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn space_grid(&self) -> Result<SpaceGrid> {
        Ok(SpaceGrid::new(self.domain.a, self.domain.b_right, self.grid.n_cells)?)
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        Ok(TimeGrid::new(0.0, self.domain.t_end, self.grid.n_steps)?)
    }

    pub fn mc_time_grid(&self) -> Result<TimeGrid> {
        let n = self.mc.n_steps.unwrap_or(self.grid.n_steps);
        Ok(TimeGrid::new(0.0, self.domain.t_end, n)?)
    }

    pub fn interval(&self) -> Result<Interval> {
        Ok(Interval::new(self.domain.a, self.domain.b_right)?)
    }

    pub fn coefficient_set(&self) -> Result<CoefficientSet> {
        let c = &self.coefficients;
        let list = |v: &[String]| v.iter().map(|s| expr(s)).collect::<Result<Vec<_>>>();
        let opt = |v: &Option<String>| v.as_deref().map(expr).transpose();
        let set = CoefficientSet::new(
            expr(&c.b)?,
            expr(&c.f)?,
            expr(&c.lambda)?,
            list(&c.beta)?,
            list(&c.bar_beta)?,
        )?;
        let beta_x = c
            .beta_x
            .iter()
            .map(|s| expr(s).map(Some))
            .collect::<Result<Vec<_>>>()?;
        Ok(set.with_derivatives(Derivatives {
            b_x: opt(&c.b_x)?,
            b_xx: opt(&c.b_xx)?,
            f_x: opt(&c.f_x)?,
            beta_x,
        })?)
    }

    pub fn samples(&self, set: &CoefficientSet) -> Result<Samples> {
        Ok(Samples::for_set(
            set,
            &self.space_grid()?,
            &self.time_grid()?,
            8,
            self.mc.seed,
        ))
    }

    pub fn xi(&self) -> Result<Expression> {
        expr(&self.data.xi)
    }

    pub fn psi(&self) -> Result<Vec<Expression>> {
        self.data.psi.items().iter().map(|s| expr(s)).collect()
    }

    pub fn initial(&self) -> Result<Expression> {
        expr(&self.data.initial)
    }

    pub fn phi(&self) -> Result<Expression> {
        expr(&self.data.phi)
    }

    /// Noise free terms, zero-filled to the number of drivers.
    pub fn h(&self) -> Result<Vec<Expression>> {
        let n = self.coefficients.beta.len();
        if self.data.h.len() > n {
            return Err(HarnessError::Config(format!(
                "{} h expressions for {n} drivers",
                self.data.h.len()
            )));
        }
        let mut h = self.data.h.iter().map(|s| expr(s)).collect::<Result<Vec<_>>>()?;
        h.resize(n, Expression::constant(0.0));
        Ok(h)
    }

    pub fn rho(&self) -> Result<Option<Expression>> {
        self.data.rho.as_deref().map(expr).transpose()
    }

    pub fn correlation_sign(&self) -> Result<CorrelationSign> {
        Ok(CorrelationSign::from_value(self.mc.correlation_sign)?)
    }

    pub fn scheme(&self) -> kspde::forward_spde::SchemeOptions {
        kspde::forward_spde::SchemeOptions {
            theta: self.scheme.theta,
            c_cfl: self.scheme.c_cfl,
            cfl_override: self.scheme.cfl_override,
        }
    }
}

pub fn expr(s: &str) -> Result<Expression> {
    parse_expr(s).map_err(|e| HarnessError::Config(format!("expression `{s}`: {e}")))
}

//! The verification experiments. Each returns a [`Report`]; a failing check
//! never stops the remaining checks.

use kspde::backward_pde::{duality_sides, evaluate_p, solve_backward, BackwardProblem};
use kspde::coefficients::{
    check_strengthened_coercivity, check_strengthened_matrices, check_superparabolic,
    check_superparabolic_matrices, derive_sde, CoefficientSet, CoercivityReport, CorrelationSign,
    MatrixSample, Samples,
};
use kspde::expr::{parse_expr, Expression};
use kspde::forward_spde::{solve_forward, HistoryMode, SpdeProblem};
use kspde::grid::{Field, NormKind, SpaceGrid, TimeGrid};
use kspde::linalg::SymMatrix;
use kspde::noise::{nested_stream, sample_common_path, stream_rng, Namespace, NoisePath};
use kspde::sde::{
    estimate_killed_density_rhs, estimate_representation_many, estimate_representation_rhs,
    Functional, InitialSampler, McEstimate, McSetup, PathOptions,
};
use rand::Rng;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, ExperimentKind, OracleKind};
use crate::error::{HarnessError, Result};
use crate::oracle::{heat_eigenmode, image_survival};
use crate::report::{num, Check, Relation, Report};

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    match cfg.experiment {
        ExperimentKind::Validate => run_validate(cfg),
        ExperimentKind::Repr => run_representation_check(cfg),
        ExperimentKind::Density => run_killed_density_check(cfg),
        ExperimentKind::Sign => run_sign_check(cfg),
        ExperimentKind::Duality => run_duality_check(cfg),
        ExperimentKind::Principles => run_principle_suites(cfg),
        ExperimentKind::Converge => run_convergence_study(cfg),
    }
}

fn new_report(cfg: &ExperimentConfig) -> Report {
    Report::new(cfg.experiment.name(), &cfg.name, cfg.mc.seed, cfg.to_toml())
}

fn validation(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Validation(e.to_string())
}

fn mc_setup(cfg: &ExperimentConfig, time: TimeGrid) -> Result<McSetup> {
    Ok(McSetup {
        domain: cfg.interval()?,
        time,
        seed: cfg.mc.seed,
        path: PathOptions {
            bridge: cfg.mc.bridge,
            retain_trajectory: false,
        },
    })
}

fn mc_tolerance(cfg: &ExperimentConfig, e: &McEstimate) -> f64 {
    cfg.tolerance.z * e.std_error + cfg.tolerance.mc_slack
}

fn allowance_note(cfg: &ExperimentConfig, dt: f64) -> String {
    format!(
        "Monte Carlo tolerance = {} * std_error + {} (bias allowance at dt = {})",
        cfg.tolerance.z,
        cfg.tolerance.mc_slack,
        num(dt)
    )
}

// ---------------------------------------------------------------- validation

/// Coercivity margins, boundedness sampling and the density of the initial
/// law. Returns the coefficient set and whether the superparabolic condition
/// holds.
fn validate_into(cfg: &ExperimentConfig, report: &mut Report) -> Result<(CoefficientSet, Samples, bool)> {
    let set = cfg.coefficient_set()?;
    let samples = cfg.samples(&set)?;
    set.validate(&samples).map_err(validation)?;
    let (main, strong) = match &cfg.validator {
        Some(v) => {
            let ms = v
                .samples
                .iter()
                .map(|s| MatrixSample::new(SymMatrix::from_rows(&s.b), s.beta.clone()))
                .collect::<kspde::Result<Vec<_>>>()
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            (check_superparabolic_matrices(&ms), check_strengthened_matrices(&ms))
        }
        None => (
            check_superparabolic(&set, &samples)?,
            check_strengthened_coercivity(&set, &samples)?,
        ),
    };
    report.push(Check::new("superparabolic margin", main.delta, 0.0, 0.0, Relation::Above));
    report.push(
        Check::new("strengthened margin", strong.delta, 0.0, 0.0, Relation::Above).informational(),
    );
    if !strong.holds {
        report.warnings.push(format!(
            "strengthened coercivity fails (delta1 = {}); representation estimates are not covered",
            num(strong.delta)
        ));
    }
    if let Some(o) = &cfg.oracle {
        margin_checks(o, &main, &strong, report);
    }
    if let Some(rho) = cfg.rho()? {
        InitialSampler::new(&rho, &cfg.space_grid()?).map_err(validation)?;
        report.notes.push("rho is a normalized density".into());
    }
    Ok((set, samples, main.holds))
}

fn margin_checks(
    o: &crate::config::OracleConfig,
    main: &CoercivityReport,
    strong: &CoercivityReport,
    report: &mut Report,
) {
    if let Some(d) = o.delta {
        report.push(Check::new("delta vs expected", main.delta, d, o.margin_tol, Relation::Close));
    }
    if let Some(d) = o.delta1 {
        report.push(Check::new("delta1 vs expected", strong.delta, d, o.margin_tol, Relation::Close));
    }
    if !o.witness.is_empty() {
        let cos = strong
            .witness
            .as_ref()
            .map(|w| {
                let got: Vec<f64> = w.directions.iter().flatten().copied().collect();
                cosine(&got, &o.witness)
            })
            .unwrap_or(f64::NAN);
        report.push(Check::new("witness alignment", cos, o.min_cosine, 0.0, Relation::AtLeast));
    }
}

/// `|<u, v>| / (|u| |v|)`; NaN on a length mismatch.
fn cosine(u: &[f64], v: &[f64]) -> f64 {
    if u.len() != v.len() {
        return f64::NAN;
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    dot.abs() / (nu * nv)
}

pub fn run_validate(cfg: &ExperimentConfig) -> Result<Report> {
    let mut report = new_report(cfg);
    validate_into(cfg, &mut report)?;
    Ok(report)
}

/// Validation that refuses to continue when the superparabolic condition fails.
fn preflight(cfg: &ExperimentConfig, report: &mut Report) -> Result<(CoefficientSet, Samples)> {
    let (set, samples, ok) = validate_into(cfg, report)?;
    if !ok {
        return Err(HarnessError::Validation(
            "superparabolic condition fails; solvers are not run".into(),
        ));
    }
    // margins are prerequisites, not verdicts of this experiment
    for c in &mut report.checks {
        c.gate = false;
    }
    Ok((set, samples))
}

// ------------------------------------------------------------ representation

fn deterministic(set: &CoefficientSet, what: &str) -> Result<()> {
    if set.depends_on_noise() {
        return Err(HarnessError::Config(format!("{what} needs coefficients free of W")));
    }
    Ok(())
}

fn heat_constant(set: &CoefficientSet) -> Result<f64> {
    match set.b.as_constant() {
        Some(b) if set.f.is_zero() && set.lambda.is_zero() => Ok(b),
        _ => Err(HarnessError::Config(
            "heat oracle needs constant b and f = lambda = 0".into(),
        )),
    }
}

pub fn run_representation_check(cfg: &ExperimentConfig) -> Result<Report> {
    let mut report = new_report(cfg);
    let (set, samples) = preflight(cfg, &mut report)?;
    deterministic(&set, "the representation check")?;
    let grid = cfg.space_grid()?;
    let time = cfg.time_grid()?;
    let (t_end, s) = (cfg.domain.t_end, cfg.domain.s);
    let xi = cfg.xi()?;
    let psis = cfg.psi()?;
    let probes = if cfg.data.probes.is_empty() {
        vec![0.5 * (grid.a + grid.b)]
    } else {
        cfg.data.probes.clone()
    };
    let sde = derive_sde(&set, &samples, cfg.correlation_sign()?)?;
    let setup = mc_setup(cfg, cfg.mc_time_grid()?)?;
    report.notes.push(allowance_note(cfg, setup.time.dt()));

    let sols = psis
        .iter()
        .map(|psi| {
            let bwd = BackwardProblem::new(set.clone(), xi.clone(), Field::sample(grid, psi, t_end, &[])?)?;
            solve_backward(&bwd, &time, cfg.scheme.theta)
        })
        .collect::<kspde::Result<Vec<_>>>()?;

    let oracle = cfg.oracle.as_ref().map(|o| o.kind);
    let l = grid.b - grid.a;
    if oracle == Some(OracleKind::HeatEigenmode) {
        let b = heat_constant(&set)?;
        let k = time.nearest_index(s)?;
        for (j, sol) in sols.iter().enumerate() {
            let err = (0..=grid.n_cells)
                .map(|i| {
                    let x = grid.node(i);
                    (sol.p(k).at_node(i) - heat_eigenmode(x, t_end - time.time(k), b, grid.a, l)).abs()
                })
                .fold(0.0, f64::max);
            let tol = cfg.tolerance.pde_sup.unwrap_or(1e-3);
            report.push(Check::new(format!("psi[{j}] pde sup error vs eigenmode"), err, 0.0, tol, Relation::AtMost));
        }
    }
    let fns: Vec<Functional> = psis.iter().map(|p| Functional::new(xi.clone(), p.clone())).collect();
    let table_header = [
        "experiment", "functional", "x", "s", "pde", "mean", "std_error", "n_paths", "dt", "bridge", "seed",
    ];
    for &x in &probes {
        let est = estimate_representation_many(x, s, &fns, &sde, cfg.mc.n_paths, &setup)?;
        for (j, (e, sol)) in est.iter().zip(&sols).enumerate() {
            let pde = evaluate_p(sol, x, s)?;
            let tol = mc_tolerance(cfg, e);
            report.push(
                Check::new(format!("psi[{j}] x={x} pde vs mc"), pde, e.mean, tol, Relation::Close)
                    .with_std_error(e.std_error),
            );
            match oracle {
                Some(OracleKind::HeatEigenmode) => {
                    let exact = heat_eigenmode(x, t_end - s, heat_constant(&set)?, grid.a, l);
                    report.push(
                        Check::new(format!("psi[{j}] x={x} mc vs eigenmode"), e.mean, exact, tol, Relation::Close)
                            .with_std_error(e.std_error),
                    );
                }
                Some(OracleKind::ImageSeries) => {
                    if psis[j].as_constant() != Some(1.0) || !xi.is_zero() {
                        return Err(HarnessError::Config("image-series oracle needs Psi = 1 and xi = 0".into()));
                    }
                    let b = heat_constant(&set)?;
                    let exact = image_survival(x, grid.a, l, (2.0 * b).sqrt(), t_end - s);
                    report.push(
                        Check::new(format!("psi[{j}] x={x} mc vs images"), e.mean, exact, tol, Relation::Close)
                            .with_std_error(e.std_error),
                    );
                }
                _ => {}
            }
            report.table_mut("estimates.csv", &table_header).push(vec![
                cfg.experiment.name().into(),
                j.to_string(),
                num(x),
                num(s),
                num(pde),
                num(e.mean),
                num(e.std_error),
                e.n_paths.to_string(),
                num(setup.time.dt()),
                cfg.mc.bridge.to_string(),
                e.seed.to_string(),
            ]);
        }
    }
    Ok(report)
}

// ------------------------------------------------------------------- density

struct DensityRow {
    path: u64,
    psi: usize,
    spde: f64,
    est: McEstimate,
    tol: f64,
}

impl DensityRow {
    fn ratio(&self) -> f64 {
        (self.spde - self.est.mean).abs() / self.tol
    }
}

/// For each common path: the forward SPDE started at `rho` against the
/// conditional killed-diffusion estimate on the same path.
fn density_rows(
    cfg: &ExperimentConfig,
    set: &CoefficientSet,
    samples: &Samples,
    sign: CorrelationSign,
) -> Result<Vec<DensityRow>> {
    let grid = cfg.space_grid()?;
    let fine = cfg.time_grid()?;
    let mc_steps = cfg.mc.n_steps.unwrap_or(cfg.grid.n_steps);
    if mc_steps == 0 || cfg.grid.n_steps % mc_steps != 0 {
        return Err(HarnessError::Config(format!(
            "mc.n_steps = {mc_steps} must divide grid.n_steps = {}",
            cfg.grid.n_steps
        )));
    }
    let stride = cfg.grid.n_steps / mc_steps;
    let rho = cfg
        .rho()?
        .ok_or_else(|| HarnessError::Config("density experiments need data.rho".into()))?;
    let sampler = InitialSampler::new(&rho, &grid).map_err(validation)?;
    let problem = SpdeProblem::homogeneous(set.clone(), Field::sample(grid, &rho, 0.0, &[])?)?;
    let sde = derive_sde(set, samples, sign)?;
    let psis = cfg.psi()?;
    let n = set.n_drivers();
    let mut rows = Vec::new();
    for k in 0..cfg.mc.n_paths as u64 {
        let w = sample_common_path(cfg.mc.seed, k, fine, n);
        let u = solve_forward(&problem, &w, &cfg.scheme(), HistoryMode::Terminal)?;
        let coarse = w.coarsen(stride)?;
        let setup = mc_setup(cfg, *coarse.grid())?;
        let est = estimate_killed_density_rhs(&sampler, &psis, &sde, &coarse, k, cfg.mc.n_inner_paths, &setup)?;
        let w_end = w.value_at(fine.n_steps);
        for (j, (psi, e)) in psis.iter().zip(est).enumerate() {
            let spde = u.terminal().inner(&Field::sample(grid, psi, fine.t_end, &w_end)?)?;
            rows.push(DensityRow {
                path: k,
                psi: j,
                spde,
                tol: mc_tolerance(cfg, &e),
                est: e,
            });
        }
    }
    Ok(rows)
}

fn density_table(report: &mut Report, cfg: &ExperimentConfig, sign: CorrelationSign, rows: &[DensityRow]) {
    let dt = cfg.domain.t_end / cfg.mc.n_steps.unwrap_or(cfg.grid.n_steps) as f64;
    let t = report.table_mut(
        "estimates.csv",
        &[
            "experiment", "sign", "path", "functional", "spde", "mean", "std_error", "n_paths", "dt", "bridge", "seed",
        ],
    );
    for r in rows {
        t.push(vec![
            cfg.experiment.name().into(),
            sign.value().to_string(),
            r.path.to_string(),
            r.psi.to_string(),
            num(r.spde),
            num(r.est.mean),
            num(r.est.std_error),
            r.est.n_paths.to_string(),
            num(dt),
            cfg.mc.bridge.to_string(),
            r.est.seed.to_string(),
        ]);
    }
}

pub fn run_killed_density_check(cfg: &ExperimentConfig) -> Result<Report> {
    let mut report = new_report(cfg);
    let (set, samples) = preflight(cfg, &mut report)?;
    let sign = cfg.correlation_sign()?;
    let rows = density_rows(cfg, &set, &samples, sign)?;
    report.notes.push(allowance_note(cfg, cfg.mc_time_grid()?.dt()));
    let psis = cfg.psi()?;
    for r in &rows {
        report.push(
            Check::new(
                format!("path {} psi[{}] spde vs mc", r.path, r.psi),
                r.spde,
                r.est.mean,
                r.tol,
                Relation::Close,
            )
            .with_std_error(r.est.std_error)
            .informational(),
        );
        if psis[r.psi].as_constant() == Some(1.0) {
            report.push(Check::new(format!("path {} mass", r.path), r.spde, 1.0, 1e-3, Relation::AtMost));
        }
    }
    let failures = rows.iter().filter(|r| r.ratio() > 1.0).count();
    report.push(Check::new(
        "failing comparisons",
        failures as f64,
        0.0,
        cfg.tolerance.max_failures as f64,
        Relation::AtMost,
    ));
    density_table(&mut report, cfg, sign, &rows);
    Ok(report)
}

pub fn run_sign_check(cfg: &ExperimentConfig) -> Result<Report> {
    let mut report = new_report(cfg);
    let (set, samples) = preflight(cfg, &mut report)?;
    if set.n_drivers() == 0 {
        return Err(HarnessError::Config("the sign check needs at least one common driver".into()));
    }
    let chosen = cfg.correlation_sign()?;
    report.notes.push(allowance_note(cfg, cfg.mc_time_grid()?.dt()));
    for (sign, selected) in [(chosen, true), (chosen.flipped(), false)] {
        let rows = density_rows(cfg, &set, &samples, sign)?;
        let worst = rows.iter().map(DensityRow::ratio).fold(0.0, f64::max);
        let failures = rows.iter().filter(|r| r.ratio() > 1.0).count();
        let v = sign.value();
        if selected {
            report.push(Check::new(
                format!("sign {v}: failing comparisons"),
                failures as f64,
                0.0,
                cfg.tolerance.max_failures as f64,
                Relation::AtMost,
            ));
            report.push(Check::new(format!("sign {v}: worst gap / tolerance"), worst, 1.0, 0.0, Relation::AtMost).informational());
        } else {
            report.push(Check::new(
                format!("sign {v}: worst gap / tolerance"),
                worst,
                cfg.tolerance.sign_factor,
                0.0,
                Relation::Above,
            ));
        }
        density_table(&mut report, cfg, sign, &rows);
    }
    report.notes.push(format!("selected correlation sign {}", chosen.value()));
    Ok(report)
}

// ------------------------------------------------------------------ duality

pub fn run_duality_check(cfg: &ExperimentConfig) -> Result<Report> {
    let mut report = new_report(cfg);
    let (set, _) = preflight(cfg, &mut report)?;
    deterministic(&set, "the duality check")?;
    let grid = cfg.space_grid()?;
    let time = cfg.time_grid()?;
    let theta = cfg.scheme.theta;
    let phi = cfg.phi()?;
    let xi = cfg.xi()?;
    let psi = cfg.psi()?.remove(0);
    if phi.depends_on_noise() {
        return Err(HarnessError::Config("the duality check needs phi free of W".into()));
    }
    let initial = Field::sample(grid, &cfg.initial()?, 0.0, &[])?;
    let terminal = Field::sample(grid, &psi, cfg.domain.t_end, &[])?;

    // deterministic identity with the noise coefficients removed
    let mut d = set.derivatives.clone();
    d.beta_x.clear();
    let plain = CoefficientSet::new(set.b.clone(), set.f.clone(), set.lambda.clone(), vec![], vec![])?
        .with_derivatives(d)?;
    let fwd0 = SpdeProblem::new(plain.clone(), phi.clone(), vec![], initial.clone())?;
    let bwd0 = BackwardProblem::new(plain, xi.clone(), terminal.clone())?;
    let sol0 = solve_backward(&bwd0, &time, theta)?;
    let quiet = NoisePath::from_increments(time, 0, vec![])?;
    let path0 = solve_forward(&fwd0, &quiet, &cfg.scheme(), HistoryMode::Full)?;
    let (l, r) = duality_sides(&fwd0, &path0, &bwd0, &sol0)?;
    report.push(Check::new("exact duality without noise", l, r, cfg.tolerance.exact, Relation::Close));

    // expectation over the common noise
    let fwd = SpdeProblem::new(set.clone(), phi, cfg.h()?, initial)?;
    let bwd = BackwardProblem::new(set.clone(), xi, terminal)?;
    let sol = solve_backward(&bwd, &time, theta)?;
    let n = set.n_drivers();
    let sides = (0..cfg.mc.n_paths as u64)
        .into_par_iter()
        .map(|k| {
            let w = sample_common_path(cfg.mc.seed, k, time, n);
            let path = solve_forward(&fwd, &w, &cfg.scheme(), HistoryMode::Full)?;
            duality_sides(&fwd, &path, &bwd, &sol)
        })
        .collect::<kspde::Result<Vec<_>>>()?;
    let lhs: Vec<f64> = sides.iter().map(|s| s.0).collect();
    let est = McEstimate::from_samples(&lhs, cfg.mc.seed)?;
    let det = sides[0].1;
    report.notes.push(allowance_note(cfg, time.dt()));
    report.push(
        Check::new("mean forward pairing vs backward value", est.mean, det, mc_tolerance(cfg, &est), Relation::Close)
            .with_std_error(est.std_error),
    );
    Ok(report)
}

// --------------------------------------------------------------- principles

struct Instance {
    set: CoefficientSet,
    psi: Expression,
    xi: f64,
    initial: Expression,
    phi: Expression,
}

/// Random coefficients with `tilde_beta = 0` (`bar_beta = beta_x`) and
/// `tilde_lambda = kappa >= 0`, with nonnegative data.
fn random_instance(seed: u64, i: u64) -> Result<Instance> {
    let mut rng = stream_rng(seed, Namespace::Auxiliary, i);
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let (b0, b1, kb) = (u(0.3, 0.6), u(0.0, 0.1), u(1.0, 4.0));
    let (f0, kf) = (u(-0.5, 0.5), u(1.0, 3.0));
    let (c0, c1) = (u(-0.4, 0.4), u(-0.1, 0.1));
    let kappa = u(0.0, 1.0);
    let (p0, p1, kp) = (u(0.5, 2.0), u(0.0, 1.0), u(1.0, 6.0));
    let xi = u(0.0, 1.0);
    let (q0, q1, kq) = (u(1.0, 6.0), u(0.0, 1.0), u(1.0, 6.0));
    let (r0, kr) = (u(0.1, 1.0), u(1.0, 6.0));
    let e = |s: String| parse_expr(&s).map_err(|e| HarnessError::Config(e.to_string()));
    let b = e(format!("{b0:?}+{b1:?}*sin({kb:?}*x)"))?;
    let f = e(format!("{f0:?}*cos({kf:?}*x)"))?;
    let beta = e(format!("{c0:?}+{c1:?}*x"))?;
    let diff = |x: &Expression| x.derivative_x().map_err(|e| HarnessError::Config(e.to_string()));
    let bar = diff(&beta)?.simplified();
    let lambda = (diff(&f)? - diff(&diff(&b)?)? - Expression::constant(kappa)).simplified();
    Ok(Instance {
        set: CoefficientSet::new(b, f, lambda, vec![beta], vec![bar])?,
        psi: e(format!("{p0:?}*(1+{p1:?}*sin({kp:?}*x))"))?,
        xi,
        initial: e(format!("{q0:?}*x*(1-x)*(1+{q1:?}*cos({kq:?}*x))"))?,
        phi: e(format!("{r0:?}*(1+sin({kr:?}*x+t))"))?,
    })
}

pub fn run_principle_suites(cfg: &ExperimentConfig) -> Result<Report> {
    let pc = cfg
        .principles
        .as_ref()
        .ok_or_else(|| HarnessError::Config("missing [principles] section".into()))?;
    let mut report = new_report(cfg);
    let grid = cfg.space_grid()?;
    let time = cfg.time_grid()?;
    let t_end = cfg.domain.t_end;
    let tol = pc.rel_tol;
    let scheme = cfg.scheme();
    for i in 0..pc.n_instances as u64 {
        let inst = random_instance(cfg.mc.seed, i)?;
        let tag = format!("instance {i}");

        let psi = Field::sample(grid, &inst.psi, t_end, &[])?;
        let sup_psi = psi.norm(NormKind::Sup);
        let bwd = BackwardProblem::new(inst.set.clone(), Expression::constant(inst.xi), psi)?;
        let sol = solve_backward(&bwd, &time, cfg.scheme.theta)?;
        let scale = sup_psi.max(t_end * inst.xi);
        let min_p = sol.history().iter().map(Field::min).fold(0.0, f64::min);
        let excess = sol
            .history()
            .iter()
            .enumerate()
            .map(|(k, p)| p.norm(NormKind::Sup) - (t_end - time.time(k)) * inst.xi)
            .fold(f64::NEG_INFINITY, f64::max);
        report.push(Check::new(format!("{tag} backward min"), min_p, 0.0, tol * scale, Relation::AtLeast));
        report.push(Check::new(format!("{tag} backward sup bound"), excess, sup_psi, tol * scale, Relation::AtMost));

        let initial = Field::sample(grid, &inst.initial, 0.0, &[])?;
        let homog = SpdeProblem::homogeneous(inst.set.clone(), initial.clone())?;
        let zero_h = vec![Expression::constant(0.0)];
        let sourced = SpdeProblem::new(inst.set.clone(), inst.phi.clone(), zero_h, Field::zeros(grid))?;
        let per_path = (0..pc.n_paths as u64)
            .into_par_iter()
            .map(|k| {
                let w = sample_common_path(cfg.mc.seed, nested_stream(i, k), time, 1);
                let u = solve_forward(&homog, &w, &scheme, HistoryMode::Full)?;
                let min_u = u.fields().iter().map(Field::min).fold(0.0, f64::min);
                let l1 = u.terminal().norm(NormKind::L1);
                let v = solve_forward(&sourced, &w, &scheme, HistoryMode::Terminal)?;
                Ok((min_u, l1, v.terminal().norm(NormKind::L1)))
            })
            .collect::<kspde::Result<Vec<_>>>()?;
        let n = per_path.len() as f64;
        let min_u = per_path.iter().map(|p| p.0).fold(0.0, f64::min);
        let mean_l1 = per_path.iter().map(|p| p.1).sum::<f64>() / n;
        let mean_src = per_path.iter().map(|p| p.2).sum::<f64>() / n;
        let sup_phi0 = initial.norm(NormKind::Sup);
        let l1_phi0 = initial.norm(NormKind::L1);
        let l1_src = (0..time.n_steps)
            .map(|k| Ok(time.dt() * Field::sample(grid, &inst.phi, time.time(k), &[0.0])?.norm(NormKind::L1)))
            .sum::<kspde::Result<f64>>()?;
        let slack = pc.l1_factor - 1.0;
        report.push(Check::new(format!("{tag} forward min"), min_u, 0.0, tol * sup_phi0, Relation::AtLeast));
        report.push(Check::new(format!("{tag} forward L1 contraction"), mean_l1, l1_phi0, slack * l1_phi0, Relation::AtMost));
        report.push(Check::new(format!("{tag} forward source bound"), mean_src, l1_src, slack * l1_src, Relation::AtMost));
        report.push(
            Check::new(format!("{tag} forward source bound with 1/T"), mean_src, l1_src / t_end, 0.0, Relation::AtMost)
                .informational(),
        );
    }
    report.notes.push(format!("relative guard {tol}; L1 factor {}", pc.l1_factor));
    Ok(report)
}

// -------------------------------------------------------------- convergence

pub fn run_convergence_study(cfg: &ExperimentConfig) -> Result<Report> {
    let cc = cfg
        .convergence
        .as_ref()
        .ok_or_else(|| HarnessError::Config("missing [convergence] section".into()))?;
    let mut report = new_report(cfg);
    let (set, samples) = preflight(cfg, &mut report)?;
    let b = heat_constant(&set)?;
    let (a, br) = (cfg.domain.a, cfg.domain.b_right);
    let l = br - a;
    let t_end = cfg.domain.t_end;
    let theta = cfg.scheme.theta;
    let header = ["study", "parameter", "value", "error", "std_error"];

    // spatial order on the heat eigenmode
    let heat = |cells: usize, steps: usize| -> Result<Field> {
        let g = SpaceGrid::new(a, br, cells)?;
        let psi = Field::from_fn(g, |x| heat_eigenmode(x, 0.0, b, a, l))?;
        let bwd = BackwardProblem::new(set.clone(), Expression::constant(0.0), psi)?;
        Ok(solve_backward(&bwd, &TimeGrid::new(0.0, t_end, steps)?, theta)?.p(0).clone())
    };
    let mut errs = Vec::new();
    for &cells in &cc.heat_cells {
        let p = heat(cells, cc.heat_steps)?;
        let g = *p.grid();
        let err = (0..=cells)
            .map(|i| (p.at_node(i) - heat_eigenmode(g.node(i), t_end, b, a, l)).abs())
            .fold(0.0, f64::max);
        report.table_mut("convergence.csv", &header).push(vec![
            "space".into(),
            "dx".into(),
            num(g.dx()),
            num(err),
            String::new(),
        ]);
        errs.push(err);
    }
    report.push(Check::in_range("spatial error ratio", errs[0] / errs[1], cc.heat_ratio[0], cc.heat_ratio[1]));

    // temporal order at the finer grid, against a many-step reference
    let cells = cc.heat_cells[1];
    let reference = heat(cells, cc.heat_steps)?;
    let coarse_steps = [cc.heat_steps / 64, cc.heat_steps / 32];
    let mut terrs = Vec::new();
    for &steps in &coarse_steps {
        let p = heat(cells, steps.max(1))?;
        let err = p.axpy(-1.0, &reference)?.norm(NormKind::Sup);
        report.table_mut("convergence.csv", &header).push(vec![
            "time".into(),
            "dt".into(),
            num(t_end / steps.max(1) as f64),
            num(err),
            String::new(),
        ]);
        terrs.push(err);
    }
    report.push(Check::new("temporal error ratio", terrs[0] / terrs[1], 4.0, 1.0, Relation::Close).informational());

    // Monte Carlo bias on the exit problem
    let sde = derive_sde(&set, &samples, cfg.correlation_sign()?)?;
    let x = cc.exit_x;
    let exact = image_survival(x, a, l, (2.0 * b).sqrt(), cc.exit_t_end);
    let zero = Expression::constant(0.0);
    let one = Expression::constant(1.0);
    let survival = |steps: usize, paths: usize| -> Result<McEstimate> {
        let setup = mc_setup(cfg, TimeGrid::new(0.0, cc.exit_t_end, steps)?)?;
        Ok(estimate_representation_rhs(x, 0.0, &zero, &one, &sde, paths, &setup)?)
    };
    let mut bias = Vec::new();
    for &steps in &cc.exit_steps {
        let e = survival(steps, cc.exit_paths)?;
        let dt = cc.exit_t_end / steps as f64;
        let d = e.mean - exact;
        report.table_mut("convergence.csv", &header).push(vec![
            "mc_bias".into(),
            "dt".into(),
            num(dt),
            num(d),
            num(e.std_error),
        ]);
        report.push(
            Check::new(format!("bias resolved at dt={}", num(dt)), d.abs(), cfg.tolerance.z * e.std_error, 0.0, Relation::Above)
                .with_std_error(e.std_error),
        );
        bias.push(d.abs());
    }
    report.push(Check::in_range("mc bias ratio", bias[0] / bias[1], cc.bias_ratio[0], cc.bias_ratio[1]));

    // standard error against path count
    let fine = cc.exit_steps[1];
    let mut ses = Vec::new();
    for &paths in &cc.stderr_paths {
        let e = survival(fine, paths)?;
        report.table_mut("convergence.csv", &header).push(vec![
            "mc_stderr".into(),
            "n_paths".into(),
            paths.to_string(),
            num(e.mean - exact),
            num(e.std_error),
        ]);
        ses.push(e.std_error);
    }
    report.push(Check::in_range("stderr ratio", ses[0] / ses[1], cc.stderr_ratio[0], cc.stderr_ratio[1]));
    Ok(report)
}

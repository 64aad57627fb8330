use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kspde_harness::{run_and_write, ExperimentConfig, ExperimentKind, HarnessError, Report};

#[derive(Parser)]
#[command(name = "kspde", version, about = "Run verification experiments from TOML configs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args)]
struct Global {
    /// Override the Monte Carlo seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for reports.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    /// Override the number of Monte Carlo paths.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Print only the verdict line per experiment.
    #[arg(long, global = true)]
    quiet: bool,
    /// Also write a summary in the given format.
    #[arg(long, global = true, value_enum)]
    report: Option<ReportFormat>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Md,
}

#[derive(Subcommand)]
enum Command {
    /// Coercivity margins, coefficient sampling and density checks.
    Validate(ConfigArg),
    /// Backward solve against the Monte Carlo representation.
    Repr(ConfigArg),
    /// Forward SPDE against the conditional killed-diffusion density.
    Density(ConfigArg),
    /// Density check under both correlation signs.
    Sign(ConfigArg),
    /// Forward/backward duality.
    Duality(ConfigArg),
    /// Maximum principles and contraction bounds on random instances.
    Principles(ConfigArg),
    /// Convergence orders.
    Converge(ConfigArg),
    /// Every `*.toml` in a directory, in file-name order.
    All {
        #[arg(long, default_value = "configs")]
        dir: PathBuf,
    },
}

#[derive(Args)]
struct ConfigArg {
    #[arg(long)]
    config: PathBuf,
}

fn load(path: &Path, kind: Option<ExperimentKind>, g: &Global) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(k) = kind {
        cfg.experiment = k;
    }
    if let Some(s) = g.seed {
        cfg.mc.seed = s;
    }
    if let Some(n) = g.paths {
        cfg.mc.n_paths = n;
        if let Some(p) = cfg.principles.as_mut() {
            p.n_paths = n;
        }
    }
    cfg.check()?;
    Ok(cfg)
}

fn print(report: &Report, quiet: bool) {
    if !quiet {
        for w in &report.warnings {
            eprintln!("warning: {w}");
        }
        for c in &report.checks {
            let tag = match (c.gate, c.pass) {
                (false, _) => "INFO",
                (true, true) => "PASS",
                (true, false) => "FAIL",
            };
            println!(
                "{tag} {}: lhs={:.6e} rhs={:.6e} tol={:.3e}",
                c.name, c.lhs, c.rhs, c.tolerance
            );
        }
    }
    let verdict = if report.passed() { "PASS" } else { "FAIL" };
    println!("{verdict} {} ({})", report.name, report.experiment);
}

/// 0 all pass, 1 some check failed, 2 a run could not complete.
fn run_one(path: &Path, kind: Option<ExperimentKind>, g: &Global) -> u8 {
    let result = load(path, kind, g).and_then(|cfg| run_and_write(&cfg, &g.out, g.report.is_some()));
    match result {
        Ok(r) => {
            print(&r, g.quiet);
            u8::from(!r.passed())
        }
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            e.exit_code() as u8
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = &cli.global;
    if let Some(n) = g.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let (path, kind) = match &cli.command {
        Command::Validate(c) => (&c.config, ExperimentKind::Validate),
        Command::Repr(c) => (&c.config, ExperimentKind::Repr),
        Command::Density(c) => (&c.config, ExperimentKind::Density),
        Command::Sign(c) => (&c.config, ExperimentKind::Sign),
        Command::Duality(c) => (&c.config, ExperimentKind::Duality),
        Command::Principles(c) => (&c.config, ExperimentKind::Principles),
        Command::Converge(c) => (&c.config, ExperimentKind::Converge),
        Command::All { dir } => {
            let mut files: Vec<PathBuf> = match std::fs::read_dir(dir) {
                Ok(rd) => rd
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "toml"))
                    .collect(),
                Err(e) => {
                    eprintln!("error: {}: {e}", dir.display());
                    return ExitCode::from(2);
                }
            };
            files.sort();
            let codes: Vec<u8> = files.iter().map(|f| run_one(f, None, g)).collect();
            return ExitCode::from(codes.into_iter().max().unwrap_or(0));
        }
    };
    ExitCode::from(run_one(path, Some(kind), g))
}

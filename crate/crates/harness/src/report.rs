//! Check rows, tables and their CSV / markdown rendering.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{HarnessError, Result};

/// How `lhs`, `rhs` and `tolerance` decide a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    /// `|lhs - rhs| <= tolerance`
    Close,
    /// `lhs <= rhs + tolerance`
    AtMost,
    /// `lhs >= rhs - tolerance`
    AtLeast,
    /// `lhs > rhs`
    Above,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Close => "close",
            Relation::AtMost => "at_most",
            Relation::AtLeast => "at_least",
            Relation::Above => "above",
        }
    }

    pub fn holds(self, lhs: f64, rhs: f64, tol: f64) -> bool {
        match self {
            Relation::Close => (lhs - rhs).abs() <= tol,
            Relation::AtMost => lhs <= rhs + tol,
            Relation::AtLeast => lhs >= rhs - tol,
            Relation::Above => lhs > rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    pub std_error: Option<f64>,
    pub relation: Relation,
    /// Informational rows are reported but do not decide the verdict.
    pub gate: bool,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64, relation: Relation) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            tolerance,
            std_error: None,
            relation,
            gate: true,
            // NaN compares false everywhere, so a non-finite number fails
            pass: relation.holds(lhs, rhs, tolerance),
        }
    }

    pub fn with_std_error(mut self, se: f64) -> Self {
        self.std_error = Some(se);
        self
    }

    pub fn informational(mut self) -> Self {
        self.gate = false;
        self
    }

    /// Ratio in `[lo, hi]`, written as closeness to the midpoint.
    pub fn in_range(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Self::new(name, value, 0.5 * (lo + hi), 0.5 * (hi - lo), Relation::Close)
    }
}

/// Extra CSV output with fixed columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file: &str, header: &[&str]) -> Self {
        Self {
            file: file.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Shortest round-trip formatting, so CSV reruns compare bytewise.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub experiment: String,
    pub name: String,
    pub seed: u64,
    /// Effective configuration as TOML.
    pub config: String,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(experiment: &str, name: &str, seed: u64, config: String) -> Self {
        Self {
            experiment: experiment.into(),
            name: name.into(),
            seed,
            config,
            checks: Vec::new(),
            tables: Vec::new(),
            warnings: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().filter(|c| c.gate).all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.gate && !c.pass)
    }

    pub fn table_mut(&mut self, file: &str, header: &[&str]) -> &mut Table {
        if let Some(i) = self.tables.iter().position(|t| t.file == file) {
            return &mut self.tables[i];
        }
        self.tables.push(Table::new(file, header));
        self.tables.last_mut().unwrap()
    }

    fn preamble(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# kspde-harness {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "# experiment: {} ({})", self.experiment, self.name);
        let _ = writeln!(s, "# seed: {}", self.seed);
        let _ = writeln!(s, "# streams: {}", kspde::noise::STREAM_POLICY);
        for n in &self.notes {
            let _ = writeln!(s, "# note: {n}");
        }
        for w in &self.warnings {
            let _ = writeln!(s, "# warning: {w}");
        }
        let _ = writeln!(s, "# config:");
        for line in self.config.lines() {
            let _ = writeln!(s, "#   {line}");
        }
        s
    }

    /// `report.csv` with a commented preamble, then the checks.
    pub fn checks_csv(&self) -> Result<Vec<u8>> {
        let mut out = self.preamble().into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record([
                "check", "lhs", "rhs", "tolerance", "std_error", "relation", "gate", "pass",
            ])?;
            for c in &self.checks {
                w.write_record([
                    c.name.clone(),
                    num(c.lhs),
                    num(c.rhs),
                    num(c.tolerance),
                    c.std_error.map(num).unwrap_or_default(),
                    c.relation.symbol().to_string(),
                    c.gate.to_string(),
                    c.pass.to_string(),
                ])?;
            }
            w.flush().map_err(|e| HarnessError::Csv(e.into()))?;
        }
        Ok(out)
    }

    pub fn table_csv(&self, t: &Table) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&t.header)?;
        for r in &t.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| HarnessError::Csv(e.into_error().into()))
    }

    pub fn markdown(&self) -> String {
        let mut s = String::new();
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let _ = writeln!(s, "# {} ({}): {verdict}\n", self.name, self.experiment);
        let _ = writeln!(s, "seed {}\n", self.seed);
        for w in &self.warnings {
            let _ = writeln!(s, "> warning: {w}\n");
        }
        for n in &self.notes {
            let _ = writeln!(s, "- {n}");
        }
        if !self.notes.is_empty() {
            s.push('\n');
        }
        let _ = writeln!(s, "| check | lhs | rhs | tolerance | stderr | gate | pass |");
        let _ = writeln!(s, "|---|---|---|---|---|---|---|");
        for c in &self.checks {
            let _ = writeln!(
                s,
                "| {} | {:.6e} | {:.6e} | {:.3e} | {} | {} | {} |",
                c.name,
                c.lhs,
                c.rhs,
                c.tolerance,
                c.std_error.map(|v| format!("{v:.3e}")).unwrap_or_default(),
                if c.gate { "yes" } else { "info" },
                if c.pass { "pass" } else { "FAIL" },
            );
        }
        s
    }

    /// Writes `report.csv`, every table, and `summary.md` when asked, into `dir`.
    pub fn write(&self, dir: &Path, markdown: bool) -> Result<()> {
        let io = |path: &Path, e: std::io::Error| HarnessError::Io {
            path: path.to_path_buf(),
            source: e,
        };
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let p = dir.join("report.csv");
        fs::write(&p, self.checks_csv()?).map_err(|e| io(&p, e))?;
        for t in &self.tables {
            let p = dir.join(&t.file);
            fs::write(&p, self.table_csv(t)?).map_err(|e| io(&p, e))?;
        }
        if markdown {
            let p = dir.join("summary.md");
            fs::write(&p, self.markdown()).map_err(|e| io(&p, e))?;
        }
        Ok(())
    }
}

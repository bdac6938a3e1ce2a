//! Run reports and their on-disk forms: per-branch CSV files, a JSON report,
//! a separate timings file, and an optional gnuplot script.
//!
//! Everything except `timings.json` is a pure function of the command line,
//! so two runs with the same arguments produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::penalty::CriticalPoint;
use crate::poly::PolySystem;
use crate::tracer::{TraceConfig, TracedBranch};
use crate::witness::{self, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessSummary {
    pub x: Vec<f64>,
    pub residual: f64,
    pub mu: f64,
    pub degree_index: usize,
    /// `1 / (2 I - 1)`, null when the degree index is 0.
    pub predicted_exponent: f64,
}

const DEGREE_TRIALS: usize = 7;

impl WitnessSummary {
    /// The degree index is the median of single-direction estimates. At an
    /// approximate zero the low-order coefficients are only small, not zero,
    /// so the tolerance grows with the residual and the median discards
    /// directions where the cutoff misfires.
    pub fn from_point(sys: &PolySystem, cp: &CriticalPoint, seed: u64) -> WitnessSummary {
        let tol = (10.0 * cp.residual.sqrt()).clamp(1e-10, 0.1);
        let mut est: Vec<usize> = (0..DEGREE_TRIALS as u64)
            .map(|k| witness::degree_index_estimate_tol(sys, &cp.x, 1, seed.wrapping_add(k), tol))
            .collect();
        est.sort_unstable();
        let degree_index = est[est.len() / 2];
        WitnessSummary {
            x: cp.x.clone(),
            residual: cp.residual,
            mu: cp.mu,
            degree_index,
            predicted_exponent: witness::predicted_exponent(degree_index),
        }
    }
}

/// One rung of a penalty-parameter ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedPoint {
    pub beta: f64,
    pub x: Vec<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineSummary {
    pub witness: Vec<f64>,
    /// Empty when the ladder failed; see `error`.
    pub ladder: Vec<RefinedPoint>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSummary {
    pub index: usize,
    pub points: usize,
    pub termination: crate::tracer::Termination,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub system: String,
    pub config_echo: TraceConfig,
    pub anchor: Vec<f64>,
    pub verdict: Option<Verdict>,
    pub witness_summary: Vec<WitnessSummary>,
    pub refinements: Vec<RefineSummary>,
    pub branches: Vec<TracedBranch>,
}

impl RunReport {
    pub fn new(command: &str, sys: &PolySystem, cfg: &TraceConfig, anchor: Vec<f64>) -> RunReport {
        RunReport {
            command: command.to_string(),
            system: sys.to_string(),
            config_echo: cfg.clone(),
            anchor,
            verdict: None,
            witness_summary: Vec::new(),
            refinements: Vec::new(),
            branches: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.anchor.len()
    }

    pub fn branch_summaries(&self) -> Vec<BranchSummary> {
        self.branches
            .iter()
            .enumerate()
            .map(|(index, b)| BranchSummary {
                index,
                points: b.len(),
                termination: b.termination,
                max_residual: b.steps.iter().map(|s| s.residual).fold(0.0, f64::max),
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Wall-clock milliseconds per phase, in execution order.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Timings {
    pub phases: Vec<PhaseTiming>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub phase: String,
    pub ms: f64,
}

impl Timings {
    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = std::time::Instant::now();
        let out = f();
        self.phases.push(PhaseTiming { phase: phase.to_string(), ms: start.elapsed().as_secs_f64() * 1e3 });
        out
    }
}

fn csv_header(n: usize) -> String {
    let mut h = String::from("idx");
    for i in 1..=n {
        let _ = write!(h, ",x{i}");
    }
    h.push_str(",residual\n");
    h
}

/// Rows `idx,x1..xn,residual` with 17 significant digits.
pub fn points_csv(n: usize, points: &[Vec<f64>], residuals: &[f64]) -> String {
    let mut out = csv_header(n);
    for (i, (p, r)) in points.iter().zip(residuals).enumerate() {
        let _ = write!(out, "{i}");
        for v in p {
            let _ = write!(out, ",{v:.16e}");
        }
        let _ = writeln!(out, ",{r:.16e}");
    }
    out
}

/// Curve points of `branch`, one row each.
pub fn branch_csv(n: usize, branch: &TracedBranch) -> String {
    let res: Vec<f64> = branch.steps.iter().map(|s| s.residual).collect();
    points_csv(n, &branch.curve_points(), &res)
}

/// Guide points of `branch`, tagged with the residual of the curve point they
/// produced.
pub fn companion_csv(n: usize, branch: &TracedBranch) -> String {
    let res: Vec<f64> = branch.steps.iter().map(|s| s.residual).collect();
    points_csv(n, &branch.companion_points(), &res)
}

/// Parses a file written by [`points_csv`] back into points and residuals.
pub fn read_points_csv(text: &str) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut lines = text.lines();
    let header = lines.next().context("missing CSV header")?;
    let cols = header.split(',').count();
    anyhow::ensure!(cols >= 2, "malformed CSV header {header:?}");
    let mut points = Vec::new();
    let mut residuals = Vec::new();
    for (no, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        anyhow::ensure!(fields.len() == cols, "row {} has {} fields, expected {cols}", no + 1, fields.len());
        let vals = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>().with_context(|| format!("row {}: bad number {f:?}", no + 1)))
            .collect::<Result<Vec<f64>>>()?;
        let (x, r) = vals.split_at(vals.len() - 1);
        points.push(x.to_vec());
        residuals.push(r[0]);
    }
    Ok((points, residuals))
}

pub fn branch_file(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("branch_{i}.csv"))
}

pub fn companion_file(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("companion_{i}.csv"))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

pub fn write_branch_csvs(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let n = report.n_vars();
    let mut written = Vec::new();
    for (i, b) in report.branches.iter().enumerate() {
        let (bp, cp) = (branch_file(dir, i), companion_file(dir, i));
        write_file(&bp, &branch_csv(n, b))?;
        write_file(&cp, &companion_csv(n, b))?;
        written.extend([bp, cp]);
    }
    Ok(written)
}

/// Writes the report into `dir`. CSV format adds the per-branch files next to
/// `report.json`; the JSON report carries the full branches either way.
pub fn write_report(report: &RunReport, fmt: OutputFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut written = Vec::new();
    if fmt == OutputFormat::Csv {
        written.extend(write_branch_csvs(report, dir)?);
    }
    let rp = dir.join("report.json");
    write_file(&rp, &report.to_json()?)?;
    written.push(rp);
    Ok(written)
}

pub fn write_timings(timings: &Timings, dir: &Path) -> Result<PathBuf> {
    let p = dir.join("timings.json");
    write_file(&p, &(serde_json::to_string_pretty(timings)? + "\n"))?;
    Ok(p)
}

/// Gnuplot script drawing every branch in gold and its companion curve in
/// blue. Files are referenced relative to the script, so run it from its own
/// directory. Returns `None` when there is nothing to plot.
pub fn plot_script(report: &RunReport) -> Option<String> {
    if report.branches.is_empty() {
        return None;
    }
    let n = report.n_vars();
    let (cmd, cols) = if n == 2 { ("plot", "2:3") } else { ("splot", "2:3:4") };
    let mut s = String::new();
    let _ = writeln!(s, "# {} branch(es) of: {}", report.branches.len(), report.system.trim_end().replace('\n', "; "));
    let _ = writeln!(s, "set datafile separator \",\"");
    let _ = writeln!(s, "set key outside");
    let _ = writeln!(s, "set xlabel \"x1\"\nset ylabel \"x2\"");
    if n > 2 {
        let _ = writeln!(s, "set zlabel \"x3\"");
        if n > 3 {
            let _ = writeln!(s, "set title \"projection onto (x1, x2, x3)\"");
        }
    }
    let mut items = Vec::new();
    for i in 0..report.branches.len() {
        items.push(format!(
            "'branch_{i}.csv' skip 1 using {cols} with lines lw 2 lc rgb \"gold\" title \"curve {i}\""
        ));
        items.push(format!(
            "'companion_{i}.csv' skip 1 using {cols} with lines lc rgb \"blue\" title \"companion {i}\""
        ));
    }
    let _ = writeln!(s, "{cmd} {}", items.join(", \\\n     "));
    let _ = writeln!(s, "pause mouse close");
    Some(s)
}

/// Writes `plot.gp` and the CSV files it reads. Returns `None` and writes
/// nothing when the report has no branches.
pub fn emit_plot_script(report: &RunReport, dir: &Path) -> Result<Option<PathBuf>> {
    let Some(script) = plot_script(report) else {
        return Ok(None);
    };
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    write_branch_csvs(report, dir)?;
    let p = dir.join("plot.gp");
    write_file(&p, &script)?;
    Ok(Some(p))
}

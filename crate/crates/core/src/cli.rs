//! Command-line front end. [`run`] parses arguments, runs one pipeline and
//! returns the process exit code: 0 on success, 2 when the emptiness test
//! proves the real variety empty, 1 on any error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand};

use crate::exec::{self, Exec};
use crate::io::{self, OutputFormat, RefineSummary, RefinedPoint, RunReport, Timings, WitnessSummary};
use crate::poly::{parse_system_file, PolySystem};
use crate::refine;
use crate::tracer::{self, TraceConfig};
use crate::witness::{self, VerdictKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_EMPTY: i32 = 2;

/// Environment variable capping worker threads; 0 runs serially.
pub const THREADS_ENV: &str = "RANKCURVE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "rankcurve", version, about = "Trace real curves of polynomial systems with rank-deficient Jacobians")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Find approximate witness points on the real variety.
    Witness(Common),
    /// Test whether the real variety is empty.
    Empty(Common),
    /// Push witness points toward the variety by raising beta.
    Refine {
        #[command(flatten)]
        common: Common,
        /// Final penalty parameter of the ladder.
        #[arg(long, default_value_t = 1e8)]
        target_beta: f64,
    },
    /// Trace every curve branch through the witness points.
    Trace(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// System file: a `vars:` line followed by one polynomial per line.
    #[arg(long)]
    system: PathBuf,
    #[arg(long, default_value_t = 1e4)]
    beta: f64,
    /// Guide contraction factor when re-tubing.
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    /// Step size h.
    #[arg(long, default_value_t = 0.01)]
    step: f64,
    /// Point budget per tracing direction.
    #[arg(long, default_value_t = 200)]
    points: usize,
    /// Residual bound for witnesses and traced points.
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// Multistart budget.
    #[arg(long, default_value_t = witness::DEFAULT_STARTS)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Multistart ball radius (default 5 (1 + |a|)).
    #[arg(long)]
    radius: Option<f64>,
    /// Fixed guide point, comma separated, instead of a seeded random one.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    anchor: Option<Vec<f64>>,
    /// Residual that triggers re-tubing (default: --eps).
    #[arg(long)]
    retube_residual: Option<f64>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,
    /// Output directory. Without it the JSON report goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write plot.gp (gnuplot) into the output directory.
    #[arg(long)]
    emit_plot: bool,
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_value_t = true, default_missing_value = "true")]
    both_directions: bool,
    /// No summary on stderr.
    #[arg(long)]
    quiet: bool,
}

impl Common {
    fn config(&self) -> TraceConfig {
        TraceConfig {
            beta: self.beta,
            lambda: self.lambda,
            step: self.step,
            n_points: self.points,
            eps_residual: self.eps,
            seed: self.seed,
            n_starts: self.starts,
            both_directions: self.both_directions,
            retube_residual: self.retube_residual,
            anchor: self.anchor.clone(),
            start_radius: self.radius,
            ..TraceConfig::default()
        }
    }
}

/// Parses `argv` (including the program name), runs the command and reports
/// diagnostics on stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match threads_from_env().and_then(|t| dispatch(cli.command, t)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}

fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse().map(Some).with_context(|| format!("{THREADS_ENV} must be a count, got {v:?}")),
        Err(_) => Ok(None),
    }
}

fn dispatch(cmd: Command, threads: Option<usize>) -> Result<i32> {
    match threads {
        Some(t) => exec::with_threads(t, |ex| execute(cmd, ex)),
        None => execute(cmd, Exec::default()),
    }
}

fn load_system(path: &Path) -> Result<PolySystem> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_system_file(&text).with_context(|| format!("{}", path.display()))
}

fn execute(cmd: Command, ex: Exec) -> Result<i32> {
    let (name, common, target_beta) = match &cmd {
        Command::Witness(c) => ("witness", c, None),
        Command::Empty(c) => ("empty", c, None),
        Command::Refine { common, target_beta } => ("refine", common, Some(*target_beta)),
        Command::Trace(c) => ("trace", c, None),
    };
    let sys = load_system(&common.system)?;
    let cfg = common.config();
    cfg.validate()?;
    if let Some(a) = &cfg.anchor {
        if a.len() != sys.n_vars() {
            bail!("--anchor has {} coordinates but the system has {} variables", a.len(), sys.n_vars());
        }
    }
    if common.emit_plot && common.out.is_none() {
        bail!("--emit-plot needs --out");
    }

    let mut timings = Timings::default();
    let anchor = tracer::run_anchor(sys.n_vars(), &cfg);
    let mut report = RunReport::new(name, &sys, &cfg, anchor.clone());
    match name {
        "empty" => {
            let (empty_seed, _) = tracer::derived_seeds(&cfg);
            let v = timings.time("emptiness", || witness::emptiness_test_with(&sys, cfg.beta, cfg.n_starts, empty_seed, ex));
            report.verdict = Some(v);
        }
        "witness" | "refine" => {
            let ws = timings.time("witnesses", || tracer::find_witnesses(&sys, &cfg, ex))?;
            report.witness_summary = summarize(&sys, &ws.witnesses, cfg.seed);
            if let Some(target) = target_beta {
                let betas = ladder(cfg.beta, target)?;
                report.refinements = timings.time("refine", || {
                    ex.map(ws.witnesses.clone(), |w| refine_one(&sys, &anchor, &w.x, &betas))
                });
            }
        }
        _ => {
            let (empty_seed, _) = tracer::derived_seeds(&cfg);
            let v = timings.time("emptiness", || witness::emptiness_test_with(&sys, cfg.beta, cfg.n_starts, empty_seed, ex));
            let empty = v.kind == VerdictKind::Empty;
            report.verdict = Some(v);
            if !empty {
                let ws = timings.time("witnesses", || tracer::find_witnesses(&sys, &cfg, ex))?;
                report.witness_summary = summarize(&sys, &ws.witnesses, cfg.seed);
                report.branches =
                    timings.time("trace", || tracer::trace_witnesses(&sys, &ws.witnesses, &anchor, &cfg, ex));
            }
        }
    }

    match &common.out {
        Some(dir) => {
            io::write_report(&report, common.format, dir)?;
            io::write_timings(&timings, dir)?;
            if common.emit_plot && io::emit_plot_script(&report, dir)?.is_none() && !common.quiet {
                eprintln!("no branches traced; plot script skipped");
            }
        }
        None => print!("{}", report.to_json()?),
    }
    if !common.quiet {
        eprint!("{}", summary_text(&report, &timings));
    }
    let empty = report.verdict.as_ref().is_some_and(|v| v.kind == VerdictKind::Empty);
    Ok(if empty { EXIT_EMPTY } else { EXIT_OK })
}

fn summarize(sys: &PolySystem, witnesses: &[crate::penalty::CriticalPoint], seed: u64) -> Vec<WitnessSummary> {
    witnesses.iter().map(|w| WitnessSummary::from_point(sys, w, seed)).collect()
}

/// Log-spaced betas from `from` to `to`, a factor of at most 100 apart and at
/// least three of them.
fn ladder(from: f64, to: f64) -> Result<Vec<f64>> {
    if !(to > from) {
        bail!("--target-beta ({to}) must exceed --beta ({from})");
    }
    let span = (to / from).log10();
    let rungs = ((span / 2.0).ceil() as usize).max(2);
    Ok((0..=rungs).map(|k| from * 10f64.powf(span * k as f64 / rungs as f64)).collect())
}

fn refine_one(sys: &PolySystem, anchor: &[f64], seed: &[f64], betas: &[f64]) -> RefineSummary {
    match refine::beta_ladder(sys, anchor, seed, betas) {
        Ok(points) => RefineSummary {
            witness: seed.to_vec(),
            ladder: betas
                .iter()
                .zip(points)
                .map(|(&beta, x)| RefinedPoint { beta, residual: sys.residual(&x).unwrap_or(f64::NAN), x })
                .collect(),
            error: None,
        },
        Err(e) => RefineSummary { witness: seed.to_vec(), ladder: Vec::new(), error: Some(e.to_string()) },
    }
}

fn summary_text(report: &RunReport, timings: &Timings) -> String {
    let mut s = String::new();
    if let Some(v) = &report.verdict {
        s += &format!("verdict: {:?} (mu_bar_min = {:.6})\n", v.kind, v.mu_bar_min);
    }
    if report.command != "empty" {
        s += &format!("witnesses: {}\n", report.witness_summary.len());
    }
    for r in &report.refinements {
        match (r.ladder.last(), &r.error) {
            (Some(p), _) => s += &format!("refined to beta {:.0e}: residual {:.3e}\n", p.beta, p.residual),
            (None, Some(e)) => s += &format!("refinement failed: {e}\n"),
            _ => {}
        }
    }
    for b in report.branch_summaries() {
        s += &format!(
            "branch {}: {} points, {:?}, max residual {:.3e}\n",
            b.index, b.points, b.termination, b.max_residual
        );
    }
    let total: f64 = timings.phases.iter().map(|p| p.ms).sum();
    s += &format!("time: {total:.0} ms\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_shape() {
        let b = ladder(1e4, 1e8).unwrap();
        assert_eq!(b.len(), 3);
        assert!((b[1] / 1e6 - 1.0).abs() < 1e-12 && (b[2] / 1e8 - 1.0).abs() < 1e-12);
        assert_eq!(ladder(1e4, 1e5).unwrap().len(), 3);
        assert!(ladder(1e4, 1e4).is_err());
    }

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from([
            "rankcurve", "trace", "--system", "s.sys", "--anchor", "0,-1", "--both-directions", "false",
        ])
        .unwrap();
        let Command::Trace(c) = cli.command else { panic!("wrong subcommand") };
        assert_eq!(c.anchor, Some(vec![0.0, -1.0]));
        assert!(!c.both_directions);
        let cli = Cli::try_parse_from(["rankcurve", "witness", "--system", "s", "--both-directions"]).unwrap();
        let Command::Witness(c) = cli.command else { panic!("wrong subcommand") };
        assert!(c.both_directions);
    }

    #[test]
    fn missing_file_is_an_error() {
        assert_eq!(run(["rankcurve", "empty", "--system", "/nonexistent/x.sys", "--quiet"]), EXIT_ERROR);
        assert_eq!(run(["rankcurve", "bogus"]), EXIT_ERROR);
    }
}

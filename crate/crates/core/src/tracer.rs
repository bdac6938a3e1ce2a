//! Companion-curve tracing.
//!
//! A guide point `a` is dragged along the curve together with the critical
//! point `x` of the penalty objective it defines. Each step moves both along
//! the eigenvector of the stability matrix whose eigenvalue `c` is closest
//! to 1 (`a += h c dx`, `x += h dx`), then re-solves for `x`. When the
//! critical point degrades (a small eigenvalue, or a growing residual) the
//! guide is pulled back toward `x` with [`move_toward_tube`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::linalg::{self, LinalgError};
use crate::penalty::{self, CriticalPoint, PenaltyError, PenaltyProblem};
use crate::poly::PolySystem;
use crate::refine::{move_toward_tube, RefineError};
use crate::witness::{self, Verdict, VerdictKind, WitnessSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("two eigenvalues of the stability matrix are equally close to 1 ({0:?})")]
    DirectionAmbiguous(Vec<f64>),
    #[error(transparent)]
    Penalty(#[from] PenaltyError),
    #[error(transparent)]
    Refine(#[from] RefineError),
    #[error("invalid trace configuration: {0}")]
    Config(String),
}

impl From<LinalgError> for TraceError {
    fn from(e: LinalgError) -> Self {
        TraceError::Penalty(e.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceConfig {
    pub beta: f64,
    /// Contraction factor of the guide point when re-tubing.
    pub lambda: f64,
    /// Step size `h`.
    pub step: f64,
    /// Point budget per tracing direction.
    pub n_points: usize,
    /// Residual bound for witnesses and traced points.
    pub eps_residual: f64,
    pub eig_unit_window: f64,
    /// Smallest eigenvalue of `S` tolerated before re-tubing.
    pub eig_floor: f64,
    pub seed: u64,
    pub n_starts: usize,
    pub both_directions: bool,
    /// Residual above which the guide is re-tubed; defaults to `eps_residual`.
    pub retube_residual: Option<f64>,
    /// Cap on consecutive tube moves in one re-tube.
    pub retube_max_iter: usize,
    /// Fixed guide point instead of a seeded draw from the unit ball.
    pub anchor: Option<Vec<f64>>,
    /// Multistart ball radius; defaults to `5 (1 + |a|)`.
    pub start_radius: Option<f64>,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            beta: 1e4,
            lambda: 0.1,
            step: 0.01,
            n_points: 200,
            eps_residual: 1e-3,
            eig_unit_window: 0.5,
            eig_floor: 0.1,
            seed: 0,
            n_starts: witness::DEFAULT_STARTS,
            both_directions: true,
            retube_residual: None,
            retube_max_iter: 100,
            anchor: None,
            start_radius: None,
        }
    }
}

impl TraceConfig {
    pub fn validate(&self) -> Result<(), TraceError> {
        let bad = |msg: String| Err(TraceError::Config(msg));
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return bad(format!("lambda must lie in (0, 1), got {}", self.lambda));
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return bad(format!("step must be positive, got {}", self.step));
        }
        if self.n_points == 0 {
            return bad("point budget must be at least 1".into());
        }
        if !(self.eps_residual > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps_residual));
        }
        if !(self.eig_unit_window > 0.0) || !(self.eig_floor > 0.0) {
            return bad("eigenvalue window and floor must be positive".into());
        }
        if self.n_starts == 0 {
            return bad("need at least one multistart start".into());
        }
        if let Some(r) = self.retube_residual {
            if !(r > 0.0) {
                return bad(format!("re-tube residual must be positive, got {r}"));
            }
        }
        if let Some(r) = self.start_radius {
            if !(r > 0.0) {
                return bad(format!("start radius must be positive, got {r}"));
            }
        }
        Ok(())
    }

    pub fn retube_target(&self) -> f64 {
        self.retube_residual.unwrap_or(self.eps_residual)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Termination {
    BudgetReached,
    ClosedLoop,
    Stalled,
    DirectionAmbiguous,
    SingularFailure,
}

impl Termination {
    /// The more informative of two half-branch outcomes.
    fn worst(self, other: Termination) -> Termination {
        self.max(other)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub x: Vec<f64>,
    pub a: Vec<f64>,
    pub residual: f64,
    /// Eigenvalue of the direction chosen at this point (NaN when none).
    pub eigenvalue_c: f64,
    pub min_eigenvalue: f64,
    /// Tube moves performed before this point was recorded.
    pub retube_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracedBranch {
    pub steps: Vec<TraceStep>,
    pub origin_witness: CriticalPoint,
    pub termination: Termination,
}

impl TracedBranch {
    pub fn curve_points(&self) -> Vec<Vec<f64>> {
        self.steps.iter().map(|s| s.x.clone()).collect()
    }

    pub fn companion_points(&self) -> Vec<Vec<f64>> {
        self.steps.iter().map(|s| s.a.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Direction chosen at a point: unit eigenvector `dir` of `S` with
/// eigenvalue `c`, plus the smallest eigenvalue of `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    pub dir: Vec<f64>,
    pub c: f64,
    pub min_eigenvalue: f64,
}

/// Picks the eigenvector of `S(x)` with eigenvalue closest to 1.
///
/// Ambiguity is judged on the deviations `c_i - 1`: the choice is ambiguous
/// when the second-smallest deviation is inside `eig_unit_window` and no
/// more than a tenth of the largest one, i.e. two directions look tangent
/// against the scale of the normal ones. A one-variable problem is never
/// ambiguous; `S` equal to the identity always is.
pub fn tracing_direction(
    prob: &PenaltyProblem,
    x: &[f64],
    prev_dir: Option<&[f64]>,
    cfg: &TraceConfig,
) -> Result<Direction, TraceError> {
    let s = penalty::stability_matrix(prob, x)?;
    let eig = linalg::sym_eigen(&s)?;
    let n = eig.values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| (eig.values[i] - 1.0).abs().total_cmp(&(eig.values[j] - 1.0).abs()));
    if n >= 2 {
        let d2 = (eig.values[order[1]] - 1.0).abs();
        let dmax = (eig.values[order[n - 1]] - 1.0).abs();
        if d2 <= cfg.eig_unit_window && d2 <= 0.1 * dmax {
            return Err(TraceError::DirectionAmbiguous(eig.values));
        }
    }
    let k = order[0];
    let mut dir = eig.vectors[k].clone();
    if let Some(prev) = prev_dir {
        if linalg::dot(&dir, prev) < 0.0 {
            dir.iter_mut().for_each(|v| *v = -*v);
        }
    }
    Ok(Direction { dir, c: eig.values[k], min_eigenvalue: eig.values[0] })
}

fn min_eigenvalue(prob: &PenaltyProblem, x: &[f64]) -> Result<f64, TraceError> {
    let s = penalty::stability_matrix(prob, x)?;
    Ok(linalg::sym_eigen(&s)?.values[0])
}

struct Retube {
    x: Vec<f64>,
    a: Vec<f64>,
    moves: usize,
}

/// Repeated tube moves until the residual is at most `target` with the
/// smallest eigenvalue above the floor, the residual stops improving by at
/// least 1%, or the move budget runs out.
fn retube(sys: &PolySystem, x: &[f64], a: &[f64], cfg: &TraceConfig, target: f64) -> Result<Retube, TraceError> {
    let mut x = x.to_vec();
    let mut a = a.to_vec();
    let mut r = sys.residual(&x).map_err(PenaltyError::from)?;
    let mut moves = 0;
    while moves < cfg.retube_max_iter.max(1) {
        let mv = move_toward_tube(sys, &x, &a, cfg.lambda, cfg.beta)?;
        moves += 1;
        let r_new = sys.residual(&mv.x1).map_err(PenaltyError::from)?;
        x = mv.x1;
        a = mv.a1;
        let prob = PenaltyProblem::new(sys.clone(), a.clone(), cfg.beta)?;
        let healthy = min_eigenvalue(&prob, &x)? >= cfg.eig_floor;
        if healthy && r_new <= target {
            break;
        }
        let stagnant = r_new > 0.99 * r;
        r = r_new;
        if healthy && stagnant {
            break;
        }
    }
    Ok(Retube { x, a, moves })
}

const JUMP_FACTOR: f64 = 3.0;
const MAX_HALVINGS: usize = 6;
const STALL_CYCLES: usize = 3;
const CLOSED_LOOP_WARMUP: usize = 5;
const STEP_NEWTON_ITERS: usize = 20;

/// Traces one direction from a witness.
///
/// The witness is first re-solved at `anchor0` and re-tubed. Failures end
/// the branch with a termination tag rather than an error.
pub fn trace_branch(
    sys: &PolySystem,
    witness: &CriticalPoint,
    anchor0: &[f64],
    cfg: &TraceConfig,
    direction_sign: f64,
) -> TracedBranch {
    let mut steps = Vec::new();
    let termination = match trace_into(sys, witness, anchor0, cfg, direction_sign, &mut steps) {
        Ok(t) => t,
        Err(TraceError::DirectionAmbiguous(_)) => Termination::DirectionAmbiguous,
        Err(_) => Termination::SingularFailure,
    };
    TracedBranch { steps, origin_witness: witness.clone(), termination }
}

fn trace_into(
    sys: &PolySystem,
    witness: &CriticalPoint,
    anchor0: &[f64],
    cfg: &TraceConfig,
    direction_sign: f64,
    steps: &mut Vec<TraceStep>,
) -> Result<Termination, TraceError> {
    cfg.validate()?;
    let h = cfg.step;
    let target = cfg.retube_target();
    // re-tube down to half the trigger so it does not fire on every step
    let retube_to = 0.5 * target;

    let prob0 = PenaltyProblem::new(sys.clone(), anchor0.to_vec(), cfg.beta)?;
    let cp = penalty::newton_refine(&prob0, &witness.x, prob0.default_tol(), penalty::DEFAULT_MAX_ITER)?;
    let start = retube(sys, &cp.x, anchor0, cfg, retube_to)?;
    let (mut x, mut a) = (start.x, start.a);
    let mut pending_moves = start.moves;

    let record = |steps: &mut Vec<TraceStep>, x: &[f64], a: &[f64], d: Option<&Direction>, moves: usize| {
        steps.push(TraceStep {
            x: x.to_vec(),
            a: a.to_vec(),
            residual: sys.residual(x).unwrap_or(f64::NAN),
            eigenvalue_c: d.map_or(f64::NAN, |d| d.c),
            min_eigenvalue: d.map_or(f64::NAN, |d| d.min_eigenvalue),
            retube_count: moves,
        });
    };

    let prob = prob0.with_anchor(a.clone())?;
    let first = match tracing_direction(&prob, &x, None, cfg) {
        Ok(d) => d,
        Err(e) => {
            record(steps, &x, &a, None, pending_moves);
            return Err(e);
        }
    };
    record(steps, &x, &a, Some(&first), pending_moves);
    pending_moves = 0;
    let mut dir: Vec<f64> = first.dir.iter().map(|v| v * direction_sign.signum()).collect();
    let mut c = first.c;
    let mut stalls = 0;
    // x after every re-tube; a bounce around an isolated zero keeps these
    // inside a ball of radius below h
    let mut retube_marks: Vec<Vec<f64>> = Vec::new();

    while steps.len() < cfg.n_points {
        let x_before = x.clone();
        let mut accepted = None;
        let mut hs = h;
        // with no eigenvalue near 1 the critical set is not curve-like here;
        // skip the step and re-tube instead
        let tangent_like = (c - 1.0).abs() <= cfg.eig_unit_window;
        for _ in 0..=if tangent_like { MAX_HALVINGS } else { 0 } {
            if !tangent_like {
                break;
            }
            let a_try: Vec<f64> = a.iter().zip(&dir).map(|(ai, di)| ai + hs * c * di).collect();
            let x_try: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + hs * di).collect();
            let p = prob0.with_anchor(a_try.clone())?;
            if let Ok(cp) = penalty::newton_refine(&p, &x_try, p.default_tol(), STEP_NEWTON_ITERS) {
                if linalg::dist(&cp.x, &x) <= JUMP_FACTOR * h {
                    accepted = Some((cp.x, a_try));
                    break;
                }
            }
            hs *= 0.5;
        }
        let must_retube = match accepted {
            Some((xn, an)) => {
                x = xn;
                a = an;
                let p = prob0.with_anchor(a.clone())?;
                let r = sys.residual(&x).map_err(PenaltyError::from)?;
                r > target || min_eigenvalue(&p, &x)? < cfg.eig_floor
            }
            None => true,
        };
        if must_retube {
            let rt = retube(sys, &x, &a, cfg, retube_to)?;
            x = rt.x;
            a = rt.a;
            pending_moves += rt.moves;
            retube_marks.push(x.clone());
        }
        let moved = linalg::dist(&x, &x_before);
        if moved > JUMP_FACTOR * h {
            return Ok(Termination::SingularFailure);
        }
        stalls = if moved < h / 10.0 { stalls + 1 } else { 0 };
        let bouncing = must_retube
            && retube_marks.len() > STALL_CYCLES
            && linalg::dist(&x, &retube_marks[retube_marks.len() - 1 - STALL_CYCLES]) < h;

        let p = prob0.with_anchor(a.clone())?;
        let d = match tracing_direction(&p, &x, Some(&dir), cfg) {
            Ok(d) => d,
            Err(e) => {
                record(steps, &x, &a, None, pending_moves);
                return Err(e);
            }
        };
        record(steps, &x, &a, Some(&d), pending_moves);
        pending_moves = 0;
        dir = d.dir;
        c = d.c;

        if stalls >= STALL_CYCLES || bouncing {
            return Ok(Termination::Stalled);
        }
        if steps.len() > CLOSED_LOOP_WARMUP && linalg::dist(&x, &steps[0].x) < h / 2.0 {
            return Ok(Termination::ClosedLoop);
        }
    }
    Ok(Termination::BudgetReached)
}

/// Traces both directions from a witness and joins them into one polyline
/// running from the far end of the negative half through the witness to the
/// far end of the positive half.
pub fn trace_both(sys: &PolySystem, witness: &CriticalPoint, anchor0: &[f64], cfg: &TraceConfig) -> TracedBranch {
    let plus = trace_branch(sys, witness, anchor0, cfg, 1.0);
    if !cfg.both_directions || plus.termination == Termination::ClosedLoop {
        return plus;
    }
    let minus = trace_branch(sys, witness, anchor0, cfg, -1.0);
    merge_halves(minus, plus)
}

fn merge_halves(minus: TracedBranch, plus: TracedBranch) -> TracedBranch {
    let termination = minus.termination.worst(plus.termination);
    let mut steps: Vec<TraceStep> = minus.steps.into_iter().skip(1).rev().collect();
    steps.extend(plus.steps);
    TracedBranch { steps, origin_witness: plus.origin_witness, termination }
}

/// Evenly spaced sample of at most `k` points.
fn sample_points(points: &[Vec<f64>], k: usize) -> Vec<&[f64]> {
    if points.len() <= k {
        return points.iter().map(|p| p.as_slice()).collect();
    }
    (0..k).map(|i| points[i * (points.len() - 1) / (k - 1)].as_slice()).collect()
}

fn directed_gap(sample: &[&[f64]], target: &[Vec<f64>]) -> f64 {
    sample
        .iter()
        .map(|p| target.iter().map(|q| linalg::dist(p, q)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// Whether two branches run along the same piece of curve: some sampled
/// point of either lies within `radius` of the other.
fn overlapping(a: &TracedBranch, b: &TracedBranch, radius: f64) -> bool {
    let pa = a.curve_points();
    let pb = b.curve_points();
    let near = |sample: Vec<&[f64]>, target: &[Vec<f64>]| {
        sample.iter().any(|p| directed_gap(&[p], target) < radius)
    };
    near(sample_points(&pa, 20), &pb) || near(sample_points(&pb, 20), &pa)
}

/// Sampled Hausdorff distance between the point sets of two branches.
pub fn sampled_hausdorff(a: &TracedBranch, b: &TracedBranch) -> f64 {
    let pa = a.curve_points();
    let pb = b.curve_points();
    directed_gap(&sample_points(&pa, 20), &pb).max(directed_gap(&sample_points(&pb, 20), &pa))
}

/// Keeps one branch per overlapping group: the longest, earliest on ties.
pub fn dedup_branches(branches: Vec<TracedBranch>, radius: f64) -> Vec<TracedBranch> {
    let mut kept: Vec<TracedBranch> = Vec::new();
    for b in branches {
        match kept.iter().position(|k| overlapping(k, &b, radius)) {
            Some(i) if b.len() > kept[i].len() => kept[i] = b,
            Some(_) => {}
            None => kept.push(b),
        }
    }
    kept
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceOutcome {
    pub verdict: Verdict,
    pub anchor: Vec<f64>,
    pub witness_set: Option<WitnessSet>,
    pub branches: Vec<TracedBranch>,
}

/// Guide point for a run: the configured anchor, or a seeded draw from the
/// unit ball.
pub fn run_anchor(n_vars: usize, cfg: &TraceConfig) -> Vec<f64> {
    match &cfg.anchor {
        Some(a) => a.clone(),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            witness::sample_ball(&mut rng, &vec![0.0; n_vars], 1.0)
        }
    }
}

/// Seeds for the emptiness test and the multistart, derived from `cfg.seed`.
pub fn derived_seeds(cfg: &TraceConfig) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed_5eed_5eed);
    (rng.random(), rng.random())
}

pub fn find_witnesses(sys: &PolySystem, cfg: &TraceConfig, exec: Exec) -> Result<WitnessSet, TraceError> {
    cfg.validate()?;
    let anchor = run_anchor(sys.n_vars(), cfg);
    if anchor.len() != sys.n_vars() {
        return Err(TraceError::Config(format!(
            "anchor has {} coordinates for {} variables",
            anchor.len(),
            sys.n_vars()
        )));
    }
    let prob = PenaltyProblem::new(sys.clone(), anchor.clone(), cfg.beta)?;
    let radius = cfg.start_radius.unwrap_or_else(|| witness::default_radius(&anchor));
    let (_, ms_seed) = derived_seeds(cfg);
    Ok(WitnessSet::find(&prob, cfg.n_starts, radius, ms_seed, cfg.eps_residual, exec))
}

pub fn trace_all(sys: &PolySystem, cfg: &TraceConfig) -> Result<TraceOutcome, TraceError> {
    trace_all_with(sys, cfg, Exec::default())
}

/// Emptiness test, witness search, and tracing of every witness.
pub fn trace_all_with(sys: &PolySystem, cfg: &TraceConfig, exec: Exec) -> Result<TraceOutcome, TraceError> {
    cfg.validate()?;
    let anchor = run_anchor(sys.n_vars(), cfg);
    let (empty_seed, _) = derived_seeds(cfg);
    let verdict = witness::emptiness_test_with(sys, cfg.beta, cfg.n_starts, empty_seed, exec);
    if verdict.kind == VerdictKind::Empty {
        return Ok(TraceOutcome { verdict, anchor, witness_set: None, branches: Vec::new() });
    }
    let ws = find_witnesses(sys, cfg, exec)?;
    let branches = trace_witnesses(sys, &ws.witnesses, &anchor, cfg, exec);
    Ok(TraceOutcome { verdict, anchor, witness_set: Some(ws), branches })
}

/// Traces every witness (both ways when configured), merges the halves and
/// drops overlapping branches.
pub fn trace_witnesses(
    sys: &PolySystem,
    witnesses: &[CriticalPoint],
    anchor: &[f64],
    cfg: &TraceConfig,
    exec: Exec,
) -> Vec<TracedBranch> {
    let halves: Vec<(usize, f64)> = (0..witnesses.len())
        .flat_map(|i| {
            let signs: &[f64] = if cfg.both_directions { &[1.0, -1.0] } else { &[1.0] };
            signs.iter().map(move |&s| (i, s))
        })
        .collect();
    let traced = exec.map(halves, |(i, s)| trace_branch(sys, &witnesses[i], anchor, cfg, s));

    let mut branches = Vec::new();
    let mut it = traced.into_iter();
    while let Some(plus) = it.next() {
        if cfg.both_directions {
            let minus = it.next().expect("halves come in pairs");
            if plus.termination == Termination::ClosedLoop {
                branches.push(plus);
            } else {
                branches.push(merge_halves(minus, plus));
            }
        } else {
            branches.push(plus);
        }
    }
    dedup_branches(branches, 2.0 * cfg.step)
}

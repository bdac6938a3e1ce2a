//! Continuation in `t = 1/beta` of critical points of the penalty objective,
//! and the move back toward the tubular neighborhood of the curve.
//!
//! With `H(x, t) = t (x - a) + J^T f`, a critical point for penalty `beta`
//! solves `H(x, 1/beta) = 0`. Tracking that zero as `t` decreases drives it
//! toward the variety.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, DenseMatrix, LinalgError, Lu};
use crate::penalty::{self, LocalModel, PenaltyError, PenaltyProblem};
use crate::poly::{PolyError, PolySystem};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RefineError {
    #[error(transparent)]
    Penalty(#[from] PenaltyError),
    #[error("start point is not on the homotopy (|H| = {residual:e})")]
    InvalidStart { residual: f64 },
    #[error("invalid refinement input: {0}")]
    Invalid(String),
    #[error("continuation stopped early: {0:?}")]
    Incomplete(PathStatus),
}

impl From<PolyError> for RefineError {
    fn from(e: PolyError) -> Self {
        RefineError::Penalty(e.into())
    }
}

pub type Result<T> = std::result::Result<T, RefineError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathStatus {
    Completed,
    SingularStop,
    StepUnderflow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomotopyPath {
    /// `(t, x)` pairs, `t` strictly monotone.
    pub samples: Vec<(f64, Vec<f64>)>,
    pub status: PathStatus,
}

impl HomotopyPath {
    pub fn endpoint(&self) -> &[f64] {
        &self.samples.last().expect("paths hold at least the start").1
    }

    pub fn final_t(&self) -> f64 {
        self.samples.last().expect("paths hold at least the start").0
    }
}

/// Largest initial `|H|` accepted by [`track_beta`].
pub const MAX_START_RESIDUAL: f64 = 1e-6;

const MIN_STEP: f64 = 1e-14;
const CORRECTOR_ITERS: usize = 8;

fn h_value(model: &LocalModel, x: &[f64], anchor: &[f64], t: f64) -> Vec<f64> {
    let mut h = model.jt_f(x.len());
    for ((hi, xi), ai) in h.iter_mut().zip(x).zip(anchor) {
        *hi += t * (xi - ai);
    }
    h
}

/// `dH/dx = t I + A`.
fn h_jacobian(model: &LocalModel, t: f64, n: usize) -> DenseMatrix {
    let mut m = model.a_matrix(n);
    for i in 0..n {
        m[(i, i)] += t;
    }
    m
}

/// Residual target for `|H|` at parameter `t`: the Newton tolerance on `G`
/// scaled by `t`, floored by the rounding error of evaluating `H`.
fn corrector_tol(model: &LocalModel, x: &[f64], anchor: &[f64], t: f64) -> f64 {
    let scale = 1.0 + linalg::norm2(anchor);
    let floor = 64.0 * f64::EPSILON * (model.noise + t * (linalg::norm2(x) + linalg::norm2(anchor)));
    (1e-10 * scale * t).max(floor)
}

/// Upper bound on `|H|` for any accepted sample.
fn accept_bound(anchor: &[f64]) -> f64 {
    1e-9 * (1.0 + linalg::norm2(anchor))
}

enum Correction {
    Converged(Vec<f64>, usize),
    Failed { singular: bool },
}

fn correct(sys: &PolySystem, anchor: &[f64], x0: Vec<f64>, t: f64) -> Correction {
    let n = x0.len();
    let mut x = x0;
    let mut last_step = f64::INFINITY;
    for iter in 0..=CORRECTOR_ITERS {
        let model = LocalModel::at(sys, &x, true);
        let h = h_value(&model, &x, anchor, t);
        let hn = linalg::norm2(&h);
        if !hn.is_finite() {
            return Correction::Failed { singular: false };
        }
        if hn <= corrector_tol(&model, &x, anchor, t) {
            return Correction::Converged(x, iter);
        }
        // rounding stagnation: steps no longer move x but |H| is small
        if last_step <= 1e-12 * (1.0 + linalg::norm2(&x)) && hn <= accept_bound(anchor) {
            return Correction::Converged(x, iter);
        }
        if iter == CORRECTOR_ITERS {
            break;
        }
        let m = h_jacobian(&model, t, n);
        let dx = match linalg::lu_solve(&m, &h) {
            Ok(dx) => dx,
            Err(_) => return Correction::Failed { singular: true },
        };
        let step = linalg::norm2(&dx);
        // a corrector that stops contracting is about to jump paths
        if iter >= 1 && step > 0.5 * last_step {
            return Correction::Failed { singular: false };
        }
        last_step = step;
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi -= di;
        }
    }
    Correction::Failed { singular: false }
}

/// Predictor-corrector continuation of `t (x - a) + J^T f = 0` from `t1` to
/// `t0`, parameterized by `ln t`.
///
/// The Euler predictor follows `dx/d(ln t) = -t (t I + A)^{-1} (x - a)`; the
/// corrector is Newton at fixed `t`. The step halves on corrector failure and
/// doubles after three easy steps, capped at an eighth of the `ln t` span.
pub fn track_beta(sys: &PolySystem, anchor: &[f64], x_start: &[f64], t1: f64, t0: f64) -> Result<HomotopyPath> {
    let n = sys.n_vars();
    if anchor.len() != n || x_start.len() != n {
        return Err(PolyError::DimensionMismatch { expected: n, got: anchor.len().min(x_start.len()) }.into());
    }
    if !(t1 > 0.0 && t0 > 0.0 && t1.is_finite() && t0.is_finite()) {
        return Err(RefineError::Invalid(format!("t1 = {t1}, t0 = {t0} must be positive and finite")));
    }
    let model = LocalModel::at(sys, x_start, false);
    let residual = linalg::norm2(&h_value(&model, x_start, anchor, t1));
    if !(residual <= MAX_START_RESIDUAL) {
        return Err(RefineError::InvalidStart { residual });
    }
    let x = match correct(sys, anchor, x_start.to_vec(), t1) {
        Correction::Converged(x, _) => x,
        Correction::Failed { singular } => {
            let status = if singular { PathStatus::SingularStop } else { PathStatus::StepUnderflow };
            return Ok(HomotopyPath { samples: vec![(t1, x_start.to_vec())], status });
        }
    };
    let mut samples = vec![(t1, x)];
    if t1 == t0 {
        return Ok(HomotopyPath { samples, status: PathStatus::Completed });
    }

    let s_end = t0.ln();
    let mut s = t1.ln();
    let span = (s_end - s).abs();
    let dir = (s_end - s).signum();
    let max_step = span / 8.0;
    let mut h = std::f64::consts::LN_2.min(max_step);
    let mut easy = 0;

    loop {
        let remaining = (s_end - s).abs();
        if remaining == 0.0 {
            return Ok(HomotopyPath { samples, status: PathStatus::Completed });
        }
        let (t, x) = samples.last().map(|(t, x)| (*t, x.clone())).expect("nonempty");
        let last = h >= remaining;
        let hs = if last { remaining } else { h };
        let s_new = if last { s_end } else { s + dir * hs };
        let t_new = if last { t0 } else { s_new.exp() };

        let model = LocalModel::at(sys, &x, true);
        let m = h_jacobian(&model, t, n);
        let tangent = match Lu::factor(&m) {
            Ok(lu) => {
                let xa: Vec<f64> = x.iter().zip(anchor).map(|(xi, ai)| xi - ai).collect();
                lu.solve(&xa)
            }
            Err(LinalgError::SingularMatrix { .. }) => {
                return Ok(HomotopyPath { samples, status: PathStatus::SingularStop });
            }
            Err(e) => return Err(PenaltyError::from(e).into()),
        };
        let predicted: Vec<f64> = x.iter().zip(&tangent).map(|(xi, vi)| xi - dir * hs * t * vi).collect();

        match correct(sys, anchor, predicted, t_new) {
            Correction::Converged(xn, iters) => {
                samples.push((t_new, xn));
                s = s_new;
                if iters <= 3 {
                    easy += 1;
                    if easy >= 3 {
                        h = (2.0 * h).min(max_step);
                        easy = 0;
                    }
                } else {
                    easy = 0;
                }
            }
            Correction::Failed { singular } => {
                easy = 0;
                h *= 0.5;
                if h < MIN_STEP {
                    let status = if singular { PathStatus::SingularStop } else { PathStatus::StepUnderflow };
                    return Ok(HomotopyPath { samples, status });
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeMove {
    pub x1: Vec<f64>,
    pub a1: Vec<f64>,
    /// Contraction factor actually used (halved once after a singular stop).
    pub lambda: f64,
}

/// Contracts the anchor toward `x0` and re-solves at the original penalty.
///
/// `x0` is critical for `(a1, lambda beta0)` with `a1 = (1 - lambda) x0 +
/// lambda a0`, so continuation from `t = 1/(lambda beta0)` to `1/beta0`
/// starts on the path. The endpoint is polished by Newton at `(a1, beta0)`.
pub fn move_toward_tube(sys: &PolySystem, x0: &[f64], a0: &[f64], lambda: f64, beta0: f64) -> Result<TubeMove> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(RefineError::Invalid(format!("lambda must lie in (0, 1], got {lambda}")));
    }
    if !(beta0 > 0.0 && beta0.is_finite()) {
        return Err(RefineError::Invalid(format!("beta must be positive, got {beta0}")));
    }
    match tube_step(sys, x0, a0, lambda, beta0) {
        Err(RefineError::Incomplete(PathStatus::SingularStop)) => tube_step(sys, x0, a0, 0.5 * lambda, beta0),
        other => other,
    }
}

fn tube_step(sys: &PolySystem, x0: &[f64], a0: &[f64], lambda: f64, beta0: f64) -> Result<TubeMove> {
    let a1: Vec<f64> = x0.iter().zip(a0).map(|(x, a)| (1.0 - lambda) * x + lambda * a).collect();
    let t0 = 1.0 / beta0;
    let t1 = if lambda == 1.0 { t0 } else { 1.0 / (lambda * beta0) };
    let path = track_beta(sys, &a1, x0, t1, t0)?;
    if path.status != PathStatus::Completed {
        return Err(RefineError::Incomplete(path.status));
    }
    let prob = PenaltyProblem::new(sys.clone(), a1.clone(), beta0)?;
    let cp = penalty::newton_refine(&prob, path.endpoint(), prob.default_tol(), penalty::DEFAULT_MAX_ITER)?;
    Ok(TubeMove { x1: cp.x, a1, lambda })
}

/// Least-squares slope of `ln d(beta)` against `ln beta` along the critical
/// point tracked over the ascending ladder `betas`, where `d` is the
/// caller's distance-to-variety oracle.
///
/// Returns NaN when some distance is exactly zero (the seed is already an
/// exact solution and the slope is undefined).
pub fn convergence_slope<D>(sys: &PolySystem, anchor: &[f64], x_seed: &[f64], betas: &[f64], dist: D) -> Result<f64>
where
    D: Fn(&[f64]) -> f64,
{
    let points = beta_ladder(sys, anchor, x_seed, betas)?;
    let d: Vec<f64> = points.iter().map(|x| dist(x)).collect();
    if d.contains(&0.0) {
        return Ok(f64::NAN);
    }
    let lx: Vec<f64> = betas.iter().map(|b| b.ln()).collect();
    let ly: Vec<f64> = d.iter().map(|v| v.ln()).collect();
    Ok(least_squares_slope(&lx, &ly))
}

/// Critical points at each rung of an ascending `beta` ladder, starting from
/// a Newton solve near `x_seed` at `betas[0]`.
pub fn beta_ladder(sys: &PolySystem, anchor: &[f64], x_seed: &[f64], betas: &[f64]) -> Result<Vec<Vec<f64>>> {
    if betas.len() < 3 || betas.windows(2).any(|w| !(w[0] < w[1])) || betas[0] <= 0.0 {
        return Err(RefineError::Invalid("need at least three ascending positive betas".into()));
    }
    let prob = PenaltyProblem::new(sys.clone(), anchor.to_vec(), betas[0])?;
    let cp = penalty::newton_refine(&prob, x_seed, prob.default_tol(), penalty::DEFAULT_MAX_ITER)?;
    let mut points = vec![cp.x];
    for w in betas.windows(2) {
        let start = points.last().expect("nonempty");
        let path = track_beta(sys, anchor, start, 1.0 / w[0], 1.0 / w[1])?;
        if path.status != PathStatus::Completed {
            return Err(RefineError::Incomplete(path.status));
        }
        points.push(path.endpoint().to_vec());
    }
    Ok(points)
}

fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

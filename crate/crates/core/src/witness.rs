//! Witness points: multistart search for critical points of the penalty
//! objective, residual filtering, the emptiness test on the homogenized
//! system, and degree-index estimation.
//!
//! The multistart is a seeded stand-in for a complete homotopy solver. It
//! finds critical points with high probability for a large enough budget but
//! cannot prove that it found all of them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::linalg;
use crate::penalty::{self, CriticalPoint, PenaltyProblem};
use crate::poly::{trailing_degree_rel, PolySystem};

/// Damped Newton iterations per multistart run.
pub const MULTISTART_MAX_ITER: usize = 200;

pub const DEFAULT_STARTS: usize = 500;

/// Default start-ball radius `5 (1 + |a|)`.
pub fn default_radius(anchor: &[f64]) -> f64 {
    5.0 * (1.0 + linalg::norm2(anchor))
}

/// Points closer than this are the same critical point.
pub fn dedup_radius(radius: f64) -> f64 {
    1e-6 * (1.0 + radius)
}

/// `n` points uniform in the ball of radius `r` about `center`, in draw
/// order. A longer request extends a shorter one with the same seed.
pub fn ball_samples(center: &[f64], r: f64, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| sample_ball(&mut rng, center, r)).collect()
}

pub(crate) fn sample_ball<R: Rng>(rng: &mut R, center: &[f64], r: f64) -> Vec<f64> {
    let d = center.len();
    let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let nv = linalg::norm2(&v);
    let u: f64 = rng.random();
    let scale = if nv > 0.0 { r * u.powf(1.0 / d as f64) / nv } else { 0.0 };
    for (vi, ci) in v.iter_mut().zip(center) {
        *vi = ci + scale * *vi;
    }
    v
}

pub fn multistart_critical_points(prob: &PenaltyProblem, n_starts: usize, radius: f64, seed: u64) -> Vec<CriticalPoint> {
    multistart_critical_points_with(prob, n_starts, radius, seed, Exec::default())
}

/// Runs damped Newton from `n_starts` seeded starts, keeps the earliest start
/// of every cluster of converged points, and sorts the survivors by `mu`.
pub fn multistart_critical_points_with(
    prob: &PenaltyProblem,
    n_starts: usize,
    radius: f64,
    seed: u64,
    exec: Exec,
) -> Vec<CriticalPoint> {
    let starts = ball_samples(prob.anchor(), radius, n_starts, seed);
    let tol = prob.default_tol();
    let solved = exec.map(starts, |x0| penalty::damped_newton(prob, &x0, tol, MULTISTART_MAX_ITER).ok());

    let r = dedup_radius(radius);
    let mut kept: Vec<CriticalPoint> = Vec::new();
    for cp in solved.into_iter().flatten() {
        if kept.iter().all(|k| linalg::dist(&k.x, &cp.x) > r) {
            kept.push(cp);
        }
    }
    kept.sort_by(|a, b| a.mu.total_cmp(&b.mu));
    kept
}

/// Points with residual strictly below `eps`, in input order.
pub fn filter_witnesses(points: &[CriticalPoint], eps: f64) -> Vec<CriticalPoint> {
    points.iter().filter(|p| p.residual < eps).cloned().collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WitnessSet {
    pub anchor: Vec<f64>,
    pub beta: f64,
    pub eps: f64,
    pub all_critical: Vec<CriticalPoint>,
    pub witnesses: Vec<CriticalPoint>,
}

impl WitnessSet {
    pub fn find(prob: &PenaltyProblem, n_starts: usize, radius: f64, seed: u64, eps: f64, exec: Exec) -> WitnessSet {
        let all_critical = multistart_critical_points_with(prob, n_starts, radius, seed, exec);
        let witnesses = filter_witnesses(&all_critical, eps);
        WitnessSet { anchor: prob.anchor().to_vec(), beta: prob.beta(), eps, all_critical, witnesses }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictKind {
    /// No real zeros, given that the multistart found the global minimum.
    Empty,
    Unknown,
}

/// Outcome of the emptiness test.
///
/// `mu_bar_min` is `beta |f̄(x)|^2 + |x - a|^2` at the best critical point
/// found, i.e. twice the penalty objective of the homogenized problem. On
/// this scale any real zero forces a value of at most 4, so `Empty` is
/// reported exactly when the estimate exceeds 4.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub mu_bar_min: f64,
    pub minimizer: Vec<f64>,
    pub anchor: Vec<f64>,
}

pub const EMPTY_THRESHOLD: f64 = 4.0;

pub fn emptiness_test(sys: &PolySystem, beta: f64, n_starts: usize, seed: u64) -> Verdict {
    emptiness_test_with(sys, beta, n_starts, seed, Exec::default())
}

/// Draws the anchor uniformly in the open unit ball of the homogenized space,
/// then defers to [`emptiness_test_with_anchor`].
pub fn emptiness_test_with(sys: &PolySystem, beta: f64, n_starts: usize, seed: u64, exec: Exec) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let anchor = sample_ball(&mut rng, &vec![0.0; sys.n_vars() + 1], 1.0);
    let ms_seed: u64 = rng.random();
    emptiness_test_with_anchor(sys, beta, &anchor, n_starts, ms_seed, exec)
}

pub fn emptiness_test_with_anchor(
    sys: &PolySystem,
    beta: f64,
    anchor: &[f64],
    n_starts: usize,
    seed: u64,
    exec: Exec,
) -> Verdict {
    let hom = sys.homogenize();
    let unknown = |mu_bar_min: f64, minimizer: Vec<f64>| Verdict {
        kind: VerdictKind::Unknown,
        mu_bar_min,
        minimizer,
        anchor: anchor.to_vec(),
    };
    let prob = match PenaltyProblem::new(hom, anchor.to_vec(), beta) {
        Ok(p) => p,
        Err(_) => return unknown(f64::NAN, Vec::new()),
    };
    // the sphere equation keeps every critical point near the unit sphere
    let radius = 2.0 + linalg::norm2(anchor);
    let points = multistart_critical_points_with(&prob, n_starts, radius, seed, exec);
    let Some(best) = points.first() else {
        return unknown(f64::NAN, Vec::new());
    };
    let mu_bar_min = 2.0 * best.mu;
    let kind = if mu_bar_min > EMPTY_THRESHOLD { VerdictKind::Empty } else { VerdictKind::Unknown };
    Verdict { kind, mu_bar_min, minimizer: best.x.clone(), anchor: anchor.to_vec() }
}

/// Largest trailing degree of `t -> f_i(p + t v)` over `trials` random unit
/// directions `v` and all members `f_i`. Coefficients below `1e-10` times the
/// largest one count as zero.
///
/// Random directions realize the generic trailing degree, so this is a lower
/// bound on the degree index at `p`.
pub fn degree_index_estimate(sys: &PolySystem, p: &[f64], trials: usize, seed: u64) -> usize {
    degree_index_estimate_tol(sys, p, trials, seed, 1e-10)
}

/// [`degree_index_estimate`] with an explicit relative coefficient tolerance,
/// for points that are only approximately on the variety.
pub fn degree_index_estimate_tol(sys: &PolySystem, p: &[f64], trials: usize, seed: u64, rel_tol: f64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = sys.n_vars();
    let mut best = 0;
    for _ in 0..trials.max(1) {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let nv = linalg::norm2(&v);
        if nv == 0.0 {
            continue;
        }
        v.iter_mut().for_each(|c| *c /= nv);
        for poly in sys.polys() {
            if let Ok(coeffs) = poly.restrict_to_ray(p, &v) {
                if let Some(d) = trailing_degree_rel(&coeffs, rel_tol) {
                    best = best.max(d);
                }
            }
        }
    }
    best
}

/// Predicted exponent `1 / (2 I - 1)` of the witness error in `1 / beta`.
pub fn predicted_exponent(degree_index: usize) -> f64 {
    if degree_index == 0 {
        return f64::NAN;
    }
    1.0 / (2.0 * degree_index as f64 - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse_system;

    fn vars(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn ball_samples_extend_under_prefix() {
        let a = ball_samples(&[1.0, 2.0], 3.0, 10, 5);
        let b = ball_samples(&[1.0, 2.0], 3.0, 25, 5);
        assert_eq!(a[..], b[..10]);
        assert!(b.iter().all(|p| linalg::dist(p, &[1.0, 2.0]) <= 3.0));
    }

    #[test]
    fn unique_minimum_of_squares() {
        let sys = parse_system("x1^2\nx2^2", &vars(&["x1", "x2"])).unwrap();
        let prob = PenaltyProblem::new(sys, vec![0.0, 0.0], 1e4).unwrap();
        let pts = multistart_critical_points(&prob, 40, 3.0, 1);
        assert_eq!(pts.len(), 1, "{pts:?}");
        assert!(linalg::norm2(&pts[0].x) < 1e-6);
    }

    #[test]
    fn filter_keeps_order() {
        let mk = |r: f64| CriticalPoint { x: vec![r], residual: r, mu: 0.0, grad_norm: 0.0 };
        let pts = vec![mk(0.5), mk(1e-4), mk(2e-3), mk(1e-5)];
        let kept = filter_witnesses(&pts, 1e-3);
        assert_eq!(kept.iter().map(|p| p.residual).collect::<Vec<_>>(), vec![1e-4, 1e-5]);
        assert!(filter_witnesses(&[], 1.0).is_empty());
    }

    #[test]
    fn degree_index_examples() {
        let sys = parse_system("x1", &vars(&["x1", "x2"])).unwrap();
        assert_eq!(degree_index_estimate(&sys, &[0.0, 0.0], 5, 0), 1);
        let sys = parse_system("(x1^3 - x2)^2", &vars(&["x1", "x2"])).unwrap();
        assert_eq!(degree_index_estimate(&sys, &[1.0, 1.0], 5, 0), 2);
        let sys = parse_system("x1^2\nx2^2", &vars(&["x1", "x2"])).unwrap();
        assert_eq!(degree_index_estimate(&sys, &[0.0, 0.0], 5, 0), 2);
        assert_eq!(predicted_exponent(2), 1.0 / 3.0);
    }

    #[test]
    fn linear_system_is_not_empty() {
        let sys = parse_system("x1", &vars(&["x1"])).unwrap();
        let v = emptiness_test(&sys, 1e4, 50, 3);
        assert_eq!(v.kind, VerdictKind::Unknown);
        assert!(v.mu_bar_min < 2.0, "{v:?}");
    }
}

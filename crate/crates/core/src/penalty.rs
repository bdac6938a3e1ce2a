//! Penalty objective `mu(x) = (beta * |f(x)|^2 + |x - a|^2) / 2`, its gradient
//! system `G`, the stability matrix `S = dG/dx`, and Newton refinement of
//! critical points.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, DenseMatrix, LinalgError, Lu};
use crate::poly::{PolyError, PolySystem};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PenaltyError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid penalty problem: {0}")]
    Invalid(String),
    #[error("Newton did not converge in {iters} iterations (|G| = {grad_norm:e})")]
    NoConvergence { iters: usize, grad_norm: f64 },
    #[error("Newton iterate diverged (|x| = {norm:e})")]
    DivergedToInfinity { norm: f64 },
}

pub type Result<T> = std::result::Result<T, PenaltyError>;

/// Iterates whose norm exceeds this are treated as escaping to infinity.
pub const DIVERGENCE_NORM: f64 = 1e8;

pub const DEFAULT_MAX_ITER: usize = 50;

#[derive(Debug, Clone)]
pub struct PenaltyProblem {
    sys: PolySystem,
    anchor: Vec<f64>,
    beta: f64,
}

impl PenaltyProblem {
    pub fn new(sys: PolySystem, anchor: Vec<f64>, beta: f64) -> Result<Self> {
        if anchor.len() != sys.n_vars() {
            return Err(PolyError::DimensionMismatch { expected: sys.n_vars(), got: anchor.len() }.into());
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(PenaltyError::Invalid(format!("beta must be finite and positive, got {beta}")));
        }
        if anchor.iter().any(|v| !v.is_finite()) {
            return Err(PenaltyError::Invalid("anchor has non-finite entries".into()));
        }
        Ok(PenaltyProblem { sys, anchor, beta })
    }

    pub fn sys(&self) -> &PolySystem {
        &self.sys
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn n_vars(&self) -> usize {
        self.sys.n_vars()
    }

    /// Same system and beta, different anchor.
    pub fn with_anchor(&self, anchor: Vec<f64>) -> Result<Self> {
        PenaltyProblem::new(self.sys.clone(), anchor, self.beta)
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        PenaltyProblem::new(self.sys.clone(), self.anchor.clone(), beta)
    }

    /// `1e-10 * (1 + |a|)`.
    pub fn default_tol(&self) -> f64 {
        1e-10 * (1.0 + linalg::norm2(&self.anchor))
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_vars() {
            return Err(PolyError::DimensionMismatch { expected: self.n_vars(), got: x.len() }.into());
        }
        Ok(())
    }
}

/// Values, Jacobian and (optionally) the curvature term `sum f_l H_l` of a
/// system at one point.
pub(crate) struct LocalModel {
    pub f: Vec<f64>,
    /// row-major `k x n`
    pub jac: Vec<f64>,
    /// upper triangle of `sum_l f_l * hess f_l`, row-major `n x n`
    pub curv: Option<Vec<f64>>,
    /// `sum_l |f_l terms|`-style rounding scale of `J^T f`
    pub noise: f64,
}

impl LocalModel {
    pub fn at(sys: &PolySystem, x: &[f64], with_curvature: bool) -> LocalModel {
        let n = sys.n_vars();
        let k = sys.len();
        let mut f = vec![0.0; k];
        let mut jac = vec![0.0; k * n];
        let mut noise = 0.0;
        for (l, p) in sys.polys().iter().enumerate() {
            p.accumulate(x, Some(&mut f[l]), Some(&mut jac[l * n..(l + 1) * n]), None, 1.0);
            let gnorm = linalg::norm2(&jac[l * n..(l + 1) * n]);
            noise += p.eval_abs_unchecked(x) * gnorm;
        }
        let curv = with_curvature.then(|| {
            let mut h = vec![0.0; n * n];
            for (l, p) in sys.polys().iter().enumerate() {
                if f[l] != 0.0 {
                    p.accumulate(x, None, None, Some(&mut h), f[l]);
                }
            }
            h
        });
        LocalModel { f, jac, curv, noise }
    }

    pub fn jt_f(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (l, fl) in self.f.iter().enumerate() {
            linalg::axpy(*fl, &self.jac[l * n..(l + 1) * n], &mut out);
        }
        out
    }

    /// `A = J^T J + sum f_l H_l`, exactly symmetric.
    pub fn a_matrix(&self, n: usize) -> DenseMatrix {
        let mut a = DenseMatrix::zeros(n, n);
        let k = self.f.len();
        for i in 0..n {
            for j in i..n {
                let mut v: f64 = (0..k).map(|l| self.jac[l * n + i] * self.jac[l * n + j]).sum();
                if let Some(c) = &self.curv {
                    v += c[i * n + j];
                }
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        a
    }
}

/// Rounding floor for `|G|`: no Newton iteration can push the computed
/// gradient much below the error made in evaluating `beta J^T f`.
fn noise_floor(beta: f64, model: &LocalModel, x: &[f64], anchor: &[f64]) -> f64 {
    let u = f64::EPSILON;
    64.0 * u * (beta * model.noise + linalg::norm2(x) + linalg::norm2(anchor))
}

pub fn mu_value(prob: &PenaltyProblem, x: &[f64]) -> Result<f64> {
    prob.check(x)?;
    let f = prob.sys.evaluate(x)?;
    let fsq: f64 = f.iter().map(|v| v * v).sum();
    let dsq: f64 = x.iter().zip(&prob.anchor).map(|(xi, ai)| (xi - ai) * (xi - ai)).sum();
    Ok((prob.beta * fsq + dsq) / 2.0)
}

/// `G(x) = (x - a) + beta J^T f`.
pub fn grad_system(prob: &PenaltyProblem, x: &[f64]) -> Result<Vec<f64>> {
    prob.check(x)?;
    let model = LocalModel::at(&prob.sys, x, false);
    Ok(gradient_from(prob, x, &model))
}

fn gradient_from(prob: &PenaltyProblem, x: &[f64], model: &LocalModel) -> Vec<f64> {
    let mut g = model.jt_f(x.len());
    for ((gi, xi), ai) in g.iter_mut().zip(x).zip(&prob.anchor) {
        *gi = prob.beta * *gi + (xi - ai);
    }
    g
}

/// `S = beta A + I` with `A = J^T J + sum_l f_l hess f_l`.
pub fn stability_matrix(prob: &PenaltyProblem, x: &[f64]) -> Result<DenseMatrix> {
    prob.check(x)?;
    let model = LocalModel::at(&prob.sys, x, true);
    Ok(stability_from(prob.beta, &model, x.len()))
}

pub(crate) fn stability_from(beta: f64, model: &LocalModel, n: usize) -> DenseMatrix {
    let mut s = model.a_matrix(n);
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] *= beta;
        }
        s[(i, i)] += 1.0;
    }
    s.symmetrize();
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub x: Vec<f64>,
    pub residual: f64,
    pub mu: f64,
    pub grad_norm: f64,
}

impl CriticalPoint {
    /// Evaluates residual, objective and gradient norm at `x`.
    pub fn at(prob: &PenaltyProblem, x: Vec<f64>) -> Result<CriticalPoint> {
        let residual = prob.sys.residual(&x)?;
        let mu = mu_value(prob, &x)?;
        let grad_norm = linalg::norm2(&grad_system(prob, &x)?);
        Ok(CriticalPoint { x, residual, mu, grad_norm })
    }

    /// Scaled slack values `w = -sqrt(beta) f(x)`.
    pub fn slack_w(&self, prob: &PenaltyProblem) -> Result<Vec<f64>> {
        let s = prob.beta.sqrt();
        Ok(prob.sys.evaluate(&self.x)?.into_iter().map(|v| -s * v).collect())
    }
}

/// Full-step Newton on `G` with `S` as its Jacobian.
///
/// Converges when `|G| <= tol`, or when `|G|` is already at the rounding
/// floor of its own evaluation (large coefficients times large `beta` can
/// put that floor above a fixed absolute `tol`).
pub fn newton_refine(prob: &PenaltyProblem, x0: &[f64], tol: f64, max_iter: usize) -> Result<CriticalPoint> {
    prob.check(x0)?;
    if !(tol > 0.0) {
        return Err(PenaltyError::Invalid(format!("tolerance must be positive, got {tol}")));
    }
    let n = prob.n_vars();
    let mut x = x0.to_vec();
    for iter in 0..=max_iter {
        let model = LocalModel::at(&prob.sys, &x, true);
        let g = gradient_from(prob, &x, &model);
        let gn = linalg::norm2(&g);
        if !gn.is_finite() {
            return Err(PenaltyError::DivergedToInfinity { norm: linalg::norm2(&x) });
        }
        if gn <= tol.max(noise_floor(prob.beta, &model, &x, &prob.anchor)) {
            return CriticalPoint::at(prob, x);
        }
        if iter == max_iter {
            return Err(PenaltyError::NoConvergence { iters: max_iter, grad_norm: gn });
        }
        let s = stability_from(prob.beta, &model, n);
        let dx = linalg::lu_solve(&s, &g)?;
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi -= di;
        }
        let xn = linalg::norm2(&x);
        if !(xn <= DIVERGENCE_NORM) {
            return Err(PenaltyError::DivergedToInfinity { norm: xn });
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// Newton with Armijo backtracking on `|G|^2`, for starts far from any
/// critical point. A singular `S` is shifted by a multiple of the identity.
pub(crate) fn damped_newton(prob: &PenaltyProblem, x0: &[f64], tol: f64, max_iter: usize) -> Result<CriticalPoint> {
    let n = prob.n_vars();
    let mut x = x0.to_vec();
    let mut model = LocalModel::at(&prob.sys, &x, true);
    let mut g = gradient_from(prob, &x, &model);
    let mut phi = linalg::dot(&g, &g);
    for _ in 0..max_iter {
        if !phi.is_finite() {
            return Err(PenaltyError::DivergedToInfinity { norm: linalg::norm2(&x) });
        }
        if phi.sqrt() <= tol.max(noise_floor(prob.beta, &model, &x, &prob.anchor)) {
            return CriticalPoint::at(prob, x);
        }
        let mut s = stability_from(prob.beta, &model, n);
        let dx = match Lu::factor(&s) {
            Ok(lu) => lu.solve(&g),
            Err(_) => {
                let shift = 1e-8 * s.frobenius().max(1.0);
                for i in 0..n {
                    s[(i, i)] += shift;
                }
                linalg::lu_solve(&s, &g)?
            }
        };
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(xi, di)| xi - alpha * di).collect();
            let tm = LocalModel::at(&prob.sys, &trial, true);
            let tg = gradient_from(prob, &trial, &tm);
            let tphi = linalg::dot(&tg, &tg);
            if tphi.is_finite() && tphi <= (1.0 - 1e-4 * alpha) * phi {
                x = trial;
                model = tm;
                g = tg;
                phi = tphi;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(PenaltyError::NoConvergence { iters: max_iter, grad_norm: phi.sqrt() });
        }
        let xn = linalg::norm2(&x);
        if !(xn <= DIVERGENCE_NORM) {
            return Err(PenaltyError::DivergedToInfinity { norm: xn });
        }
    }
    if phi.sqrt() <= tol.max(noise_floor(prob.beta, &model, &x, &prob.anchor)) {
        return CriticalPoint::at(prob, x);
    }
    Err(PenaltyError::NoConvergence { iters: max_iter, grad_norm: phi.sqrt() })
}

/// Residual of the Lagrangian system of the slack formulation
/// `min (|w|^2 + |x - a|^2)/2  s.t.  f + w / sqrt(beta) = 0`
/// at `(x, w, lambda)`:
/// rows `x - a - J^T lambda`, `w - lambda / sqrt(beta)`, `f + w / sqrt(beta)`.
pub fn lagrangian_residual(prob: &PenaltyProblem, x: &[f64], w: &[f64], lambda: &[f64]) -> Result<f64> {
    prob.check(x)?;
    let k = prob.sys.len();
    if w.len() != k || lambda.len() != k {
        return Err(PolyError::DimensionMismatch { expected: k, got: w.len().min(lambda.len()) }.into());
    }
    let n = x.len();
    let model = LocalModel::at(&prob.sys, x, false);
    let sb = prob.beta.sqrt();
    let mut acc = 0.0;
    for i in 0..n {
        let jl: f64 = (0..k).map(|l| model.jac[l * n + i] * lambda[l]).sum();
        let r = x[i] - prob.anchor[i] - jl;
        acc += r * r;
    }
    for l in 0..k {
        let r1 = w[l] - lambda[l] / sb;
        let r2 = model.f[l] + w[l] / sb;
        acc += r1 * r1 + r2 * r2;
    }
    Ok(acc.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse_system;

    fn vars(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn cubic(beta: f64, anchor: Vec<f64>) -> PenaltyProblem {
        let sys = parse_system("(x1^3 - x2)^2", &vars(&["x1", "x2"])).unwrap();
        PenaltyProblem::new(sys, anchor, beta).unwrap()
    }

    #[test]
    fn mu_of_linear_system() {
        let sys = parse_system("x1", &vars(&["x1"])).unwrap();
        let p = PenaltyProblem::new(sys, vec![0.0], 4.0).unwrap();
        assert_eq!(mu_value(&p, &[1.0]).unwrap(), 2.5);
        assert_eq!(mu_value(&p, &[0.0]).unwrap(), 0.0);
        assert_eq!(grad_system(&p, &[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn rejects_bad_problems() {
        let sys = parse_system("x1", &vars(&["x1"])).unwrap();
        assert!(PenaltyProblem::new(sys.clone(), vec![0.0, 1.0], 1.0).is_err());
        assert!(PenaltyProblem::new(sys.clone(), vec![0.0], 0.0).is_err());
        assert!(PenaltyProblem::new(sys, vec![0.0], f64::NAN).is_err());
    }

    #[test]
    fn stability_of_coordinate_function() {
        let sys = parse_system("x1", &vars(&["x1", "x2"])).unwrap();
        let p = PenaltyProblem::new(sys, vec![0.0, 0.0], 1.0).unwrap();
        let s = stability_matrix(&p, &[0.3, -0.2]).unwrap();
        assert_eq!(s, DenseMatrix::from_rows(&[&[2.0, 0.0], &[0.0, 1.0]]));
    }

    #[test]
    fn cubic_stability_matrix() {
        let p = cubic(1e4, vec![0.0, -1.0]);
        let s = stability_matrix(&p, &[-0.8296, -0.5982]).unwrap();
        let want = [[188.7722, -91.9182], [-91.9182, 45.5187]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((s[(i, j)] - want[i][j]).abs() < 0.05, "{s:?}");
            }
        }
    }

    #[test]
    fn gradient_expansion_matches_polynomial_form() {
        let p = cubic(1e4, vec![0.0, -1.0]);
        let x = [0.3, -0.7];
        let g = grad_system(&p, &x).unwrap();
        let (x1, x2) = (x[0], x[1]);
        let r = x1.powi(3) - x2;
        let want1 = 6e4 * r.powi(3) * x1 * x1 + x1;
        let want2 = -2e4 * r.powi(3) + x2 + 1.0;
        assert!((g[0] - want1).abs() < 1e-9 * want1.abs());
        assert!((g[1] - want2).abs() < 1e-9 * want2.abs());
    }

    #[test]
    fn newton_reaches_cubic_critical_points() {
        let p = cubic(1e4, vec![0.0, -1.0]);
        let tol = p.default_tol();
        let cp = newton_refine(&p, &[-0.83, -0.60], tol, DEFAULT_MAX_ITER).unwrap();
        assert!((cp.x[0] + 0.8296).abs() < 5e-4 && (cp.x[1] + 0.5982).abs() < 5e-4, "{cp:?}");
        assert!(cp.grad_norm <= tol);
        let cp = newton_refine(&p, &[0.0, -0.04], tol, DEFAULT_MAX_ITER).unwrap();
        assert!(cp.x[0].abs() < 5e-4 && (cp.x[1] + 0.0364).abs() < 5e-4, "{cp:?}");
        let again = newton_refine(&p, &cp.x, tol, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(again.x, cp.x);
    }

    #[test]
    fn newton_reports_divergence_and_budget() {
        let p = cubic(1e4, vec![0.0, -1.0]);
        let err = newton_refine(&p, &[5.0, 3.0], 1e-12, 2).unwrap_err();
        assert!(matches!(err, PenaltyError::NoConvergence { iters: 2, .. }), "{err:?}");
        assert!(newton_refine(&p, &[0.0, 0.0], -1.0, 5).is_err());
    }

    #[test]
    fn damped_newton_from_far_start() {
        let p = cubic(1e4, vec![0.0, -1.0]);
        let cp = damped_newton(&p, &[2.5, 1.0], p.default_tol(), 500).unwrap();
        assert!(cp.grad_norm <= p.default_tol() || cp.grad_norm < 1e-8);
    }

    #[test]
    fn lagrangian_substitution_at_critical_point() {
        let p = cubic(1e4, vec![0.0, -1.0]);
        let cp = newton_refine(&p, &[-0.83, -0.60], p.default_tol(), DEFAULT_MAX_ITER).unwrap();
        let w = cp.slack_w(&p).unwrap();
        let lam: Vec<f64> = w.iter().map(|v| v * 1e4f64.sqrt()).collect();
        assert!(lagrangian_residual(&p, &cp.x, &w, &lam).unwrap() < 1e-8);
        assert!(lagrangian_residual(&p, &[0.1, 0.1], &w, &lam).unwrap() > 1e-3);
    }
}

//! Seeded property suites shared by the `properties` and `acceptance`
//! targets: derivatives against finite differences, the
//! stability matrix and its eigendecomposition against nalgebra, the
//! Lagrangian form of the critical-point equations, homogenization, and the
//! system-file round trip.

use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use rankcurve::linalg::{self, sym_eigen};
use rankcurve::penalty::{self, PenaltyProblem};
use rankcurve::poly::{parse_system_file, PolySystem, Polynomial};

fn runner(cases: u32) -> TestRunner {
    let cfg = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(cfg, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

/// Up to six terms of total degree at most four with coefficients in [-2, 2].
fn poly(n: usize) -> impl Strategy<Value = Polynomial> {
    let term = (-2.0f64..2.0, prop::collection::vec(0u32..=2, n))
        .prop_filter("degree at most 4", |(_, e)| e.iter().sum::<u32>() <= 4);
    prop::collection::vec(term, 1..=6).prop_map(move |terms| Polynomial::from_terms(n, terms).unwrap())
}

fn system() -> impl Strategy<Value = PolySystem> {
    (1usize..=3, 1usize..=3).prop_flat_map(|(n, k)| {
        prop::collection::vec(poly(n), k).prop_map(move |polys| {
            let names = (1..=n).map(|i| format!("x{i}")).collect();
            PolySystem::new(polys, names).unwrap()
        })
    })
}

fn point(n: usize, r: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-r..r, n)
}

fn system_and_point(r: f64) -> impl Strategy<Value = (PolySystem, Vec<f64>)> {
    system().prop_flat_map(move |s| {
        let n = s.n_vars();
        (Just(s), point(n, r))
    })
}

fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

pub fn gradient_and_hessian_match_finite_differences() -> Result<(), String> {
    let strat = (1usize..=4).prop_flat_map(|n| (poly(n), point(n, 1.5)));
    runner(1000)
        .run(&strat, |(p, x)| {
            let n = x.len();
            let g = p.grad(&x).unwrap();
            let hess = p.hessian(&x).unwrap();
            let h = 1e-5;
            let gscale = 1.0 + linalg::norm_inf(&g);
            for i in 0..n {
                let fd = central_diff(|y| p.evaluate(y).unwrap(), &x, i, h);
                prop_assert!((fd - g[i]).abs() <= 1e-5 * gscale, "d/dx{i}: {} vs {fd}", g[i]);
            }
            let hscale = 1.0 + linalg::norm_inf(&hess);
            for i in 0..n {
                for j in 0..n {
                    let fd = central_diff(|y| p.grad(y).unwrap()[i], &x, j, h);
                    let an = hess[i * n + j];
                    prop_assert!((fd - an).abs() <= 1e-4 * hscale, "H[{i},{j}]: {an} vs {fd}");
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn penalty_gradient_is_grad_of_mu() -> Result<(), String> {
    let strat = (system_and_point(1.2), 1.0f64..100.0);
    runner(300)
        .run(&strat, |((sys, x), beta)| {
            let n = x.len();
            let a: Vec<f64> = (0..n).map(|i| 0.1 * i as f64 - 0.2).collect();
            let prob = PenaltyProblem::new(sys, a, beta).unwrap();
            let g = penalty::grad_system(&prob, &x).unwrap();
            let scale = 1.0 + linalg::norm_inf(&g);
            for i in 0..n {
                let fd = central_diff(|y| penalty::mu_value(&prob, y).unwrap(), &x, i, 1e-5);
                prop_assert!((fd - g[i]).abs() <= 1e-5 * scale, "G[{i}] = {} vs {fd}", g[i]);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn stability_matrix_is_jacobian_of_gradient() -> Result<(), String> {
    let strat = (system_and_point(1.2), 1.0f64..100.0);
    runner(300)
        .run(&strat, |((sys, x), beta)| {
            let n = x.len();
            let prob = PenaltyProblem::new(sys, vec![0.3; n], beta).unwrap();
            let s = penalty::stability_matrix(&prob, &x).unwrap();
            prop_assert_eq!(s.max_asymmetry(), 0.0);
            let scale = 1.0 + s.max_abs();
            for j in 0..n {
                for i in 0..n {
                    let fd = central_diff(|y| penalty::grad_system(&prob, y).unwrap()[i], &x, j, 1e-5);
                    prop_assert!((fd - s[(i, j)]).abs() <= 1e-4 * scale, "S[{i},{j}] = {} vs {fd}", s[(i, j)]);
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn eigendecomposition_matches_nalgebra() -> Result<(), String> {
    let strat = (system_and_point(1.2), 1.0f64..1e4);
    runner(300)
        .run(&strat, |((sys, x), beta)| {
            let n = x.len();
            let prob = PenaltyProblem::new(sys, vec![0.0; n], beta).unwrap();
            let s = penalty::stability_matrix(&prob, &x).unwrap();
            let eig = sym_eigen(&s).unwrap();
            let fro = s.frobenius();
            for (lam, v) in eig.values.iter().zip(&eig.vectors) {
                let sv = s.matvec(v);
                let r: Vec<f64> = sv.iter().zip(v).map(|(a, b)| a - lam * b).collect();
                prop_assert!(linalg::norm2(&r) <= 1e-10 * fro.max(1.0), "residual {}", linalg::norm2(&r));
            }
            for i in 0..n {
                for j in 0..n {
                    let d = linalg::dot(&eig.vectors[i], &eig.vectors[j]);
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((d - want).abs() <= 1e-10, "V^T V [{i},{j}] = {d}");
                }
            }
            prop_assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
            let m = DMatrix::from_row_slice(n, n, s.as_slice());
            let mut oracle: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
            oracle.sort_by(f64::total_cmp);
            for (a, b) in eig.values.iter().zip(&oracle) {
                prop_assert!((a - b).abs() <= 1e-9 * fro.max(1.0), "{a} vs nalgebra {b}");
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// With the slacks substituted, the Lagrangian residual collapses to the
/// norm of the penalty gradient, and it vanishes at a computed critical point.
pub fn lagrangian_form_agrees_with_penalty_form() -> Result<(), String> {
    let strat = (system_and_point(1.0), 1.0f64..1e3);
    runner(200)
        .run(&strat, |((sys, x), beta)| {
            let n = x.len();
            let a = vec![0.25; n];
            let prob = PenaltyProblem::new(sys, a, beta).unwrap();
            let sb = beta.sqrt();
            let slacks = |y: &[f64]| {
                let w: Vec<f64> = prob.sys().evaluate(y).unwrap().iter().map(|f| -sb * f).collect();
                let lam: Vec<f64> = w.iter().map(|v| sb * v).collect();
                (w, lam)
            };
            let (w, lam) = slacks(&x);
            let lr = penalty::lagrangian_residual(&prob, &x, &w, &lam).unwrap();
            let g = linalg::norm2(&penalty::grad_system(&prob, &x).unwrap());
            prop_assert!((lr - g).abs() <= 1e-10 * (1.0 + g), "{lr} vs |G| = {g}");

            if let Ok(cp) = penalty::newton_refine(&prob, &x, prob.default_tol(), penalty::DEFAULT_MAX_ITER) {
                let (w, lam) = slacks(&cp.x);
                let lr = penalty::lagrangian_residual(&prob, &cp.x, &w, &lam).unwrap();
                prop_assert!(lr <= 10.0 * prob.default_tol(), "critical point has Lagrangian residual {lr}");
                let sw = cp.slack_w(&prob).unwrap();
                prop_assert_eq!(sw, w);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn homogenization_is_homogeneous_and_dehomogenizes() -> Result<(), String> {
    let strat = (system_and_point(1.5), 0.1f64..3.0);
    runner(300)
        .run(&strat, |((sys, x), t)| {
            let hom = sys.homogenize();
            prop_assert_eq!(hom.n_vars(), sys.n_vars() + 1);
            prop_assert_eq!(hom.len(), sys.len() + 1);
            let mut xh = x.clone();
            xh.push(1.0);
            let f = sys.evaluate(&x).unwrap();
            let fh = hom.evaluate(&xh).unwrap();
            for (a, b) in f.iter().zip(&fh) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "f = {a}, hom(x, 1) = {b}");
            }
            let scaled: Vec<f64> = xh.iter().map(|v| t * v).collect();
            let fs = hom.evaluate(&scaled).unwrap();
            for (i, p) in hom.polys()[..sys.len()].iter().enumerate() {
                prop_assert!(p.is_homogeneous());
                let want = t.powi(p.degree() as i32) * fh[i];
                prop_assert!((fs[i] - want).abs() <= 1e-10 * (1.0 + want.abs()), "{} vs {want}", fs[i]);
            }
            let sphere = fs[sys.len()];
            let want = t * t * linalg::dot(&xh, &xh) - 1.0;
            prop_assert!((sphere - want).abs() <= 1e-12 * (1.0 + want.abs()));
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn system_file_round_trips() -> Result<(), String> {
    runner(500)
        .run(&system(), |sys| {
            let text = sys.to_string();
            let back = parse_system_file(&text).unwrap();
            prop_assert_eq!(&back, &sys, "printed as\n{}", text);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

#[allow(dead_code)]
pub type Suite = fn() -> Result<(), String>;

#[allow(dead_code)]
pub const ALL: &[(&str, Suite)] = &[
    ("gradient/Hessian vs finite differences", gradient_and_hessian_match_finite_differences),
    ("G = grad mu", penalty_gradient_is_grad_of_mu),
    ("S = dG/dx, symmetric", stability_matrix_is_jacobian_of_gradient),
    ("eigen residual, orthonormality, nalgebra", eigendecomposition_matches_nalgebra),
    ("Lagrangian equivalence", lagrangian_form_agrees_with_penalty_form),
    ("homogenization", homogenization_is_homogeneous_and_dehomogenizes),
    ("parse/print round trip", system_file_round_trips),
];

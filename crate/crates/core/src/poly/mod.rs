//! Sparse multivariate polynomials over `f64`.
//!
//! A [`Polynomial`] is kept in canonical form: exponent tuples are unique,
//! zero coefficients are dropped and terms are sorted by descending total
//! degree, ties broken by descending lexicographic order of the exponents.
//! Two polynomials built from the same terms therefore compare equal and
//! print identically.

mod parse;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

pub use parse::{parse_polynomial, parse_system, parse_system_file};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolyError {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unknown identifier `{name}` at line {line}, column {col}")]
    UnknownIdentifier { name: String, line: usize, col: usize },
    #[error("exponent at line {line}, column {col} is not a nonnegative integer literal")]
    BadExponent { line: usize, col: usize },
    #[error("division by a non-constant expression at line {line}, column {col}")]
    NonConstantDivisor { line: usize, col: usize },
    #[error("missing `vars:` header line")]
    MissingVars,
    #[error("system contains no polynomials")]
    EmptySystem,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("restriction direction is the zero vector")]
    ZeroDirection,
    #[error("non-finite coefficient")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, PolyError>;

/// A single term `coeff * x1^e1 * ... * xn^en`.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coeff: f64,
    pub exps: Vec<u32>,
}

impl Monomial {
    pub fn degree(&self) -> u32 {
        self.exps.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    n_vars: usize,
    terms: Vec<Monomial>,
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(PolyError::DimensionMismatch { expected, got })
    }
}

impl Polynomial {
    pub fn zero(n_vars: usize) -> Self {
        Polynomial { n_vars, terms: Vec::new() }
    }

    pub fn constant(n_vars: usize, c: f64) -> Self {
        Self::from_map(n_vars, std::iter::once((vec![0; n_vars], c)))
    }

    /// The coordinate function `x_i`.
    pub fn variable(n_vars: usize, i: usize) -> Self {
        let mut e = vec![0; n_vars];
        e[i] = 1;
        Self::from_map(n_vars, std::iter::once((e, 1.0)))
    }

    /// Builds a canonical polynomial from arbitrary `(coeff, exponents)` pairs.
    pub fn from_terms<I>(n_vars: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, Vec<u32>)>,
    {
        let mut pairs = Vec::new();
        for (c, e) in terms {
            check_dim(n_vars, e.len())?;
            if !c.is_finite() {
                return Err(PolyError::NonFinite);
            }
            pairs.push((e, c));
        }
        Ok(Self::from_map(n_vars, pairs))
    }

    fn from_map<I>(n_vars: usize, pairs: I) -> Self
    where
        I: IntoIterator<Item = (Vec<u32>, f64)>,
    {
        let mut acc: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (e, c) in pairs {
            *acc.entry(e).or_insert(0.0) += c;
        }
        let mut terms: Vec<Monomial> = acc
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(exps, coeff)| Monomial { coeff, exps })
            .collect();
        terms.sort_by(|a, b| b.degree().cmp(&a.degree()).then_with(|| b.exps.cmp(&a.exps)));
        Polynomial { n_vars, terms }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.iter().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn is_homogeneous(&self) -> bool {
        let d = self.degree();
        self.terms.iter().all(|t| t.degree() == d)
    }

    pub fn constant_term(&self) -> f64 {
        self.terms
            .iter()
            .find(|t| t.exps.iter().all(|&e| e == 0))
            .map_or(0.0, |t| t.coeff)
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.n_vars, other.n_vars, "variable count mismatch");
        let pairs = self.terms.iter().chain(&other.terms).map(|t| (t.exps.clone(), t.coeff));
        Self::from_map(self.n_vars, pairs)
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let pairs = self.terms.iter().map(|t| (t.exps.clone(), t.coeff * s));
        Self::from_map(self.n_vars, pairs)
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.n_vars, other.n_vars, "variable count mismatch");
        let mut pairs = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                let e = a.exps.iter().zip(&b.exps).map(|(x, y)| x + y).collect();
                pairs.push((e, a.coeff * b.coeff));
            }
        }
        Self::from_map(self.n_vars, pairs)
    }

    pub fn pow(&self, k: u32) -> Polynomial {
        let mut result = Polynomial::constant(self.n_vars, 1.0);
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                result = result.mul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
            }
        }
        result
    }

    /// Symbolic partial derivative with respect to `x_i`.
    pub fn derivative(&self, i: usize) -> Polynomial {
        let pairs = self.terms.iter().filter(|t| t.exps[i] > 0).map(|t| {
            let mut e = t.exps.clone();
            e[i] -= 1;
            (e, t.coeff * f64::from(t.exps[i]))
        });
        Self::from_map(self.n_vars, pairs)
    }

    /// Appends variables (with exponent zero) so the polynomial lives in a
    /// larger ring.
    pub fn extend_vars(&self, extra: usize) -> Polynomial {
        let pairs = self.terms.iter().map(|t| {
            let mut e = t.exps.clone();
            e.resize(self.n_vars + extra, 0);
            (e, t.coeff)
        });
        Self::from_map(self.n_vars + extra, pairs)
    }

    /// Degree-homogenizes with a new last variable `h`: every term of degree
    /// `k` is multiplied by `h^(d-k)` where `d` is the total degree.
    pub fn homogenize(&self) -> Polynomial {
        let d = self.degree();
        let pairs = self.terms.iter().map(|t| {
            let mut e = t.exps.clone();
            e.push(d - t.degree());
            (e, t.coeff)
        });
        Self::from_map(self.n_vars + 1, pairs)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.n_vars, x.len())?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.coeff * monomial_value(&t.exps, x)).sum()
    }

    /// `sum |c| |x^e|`, the scale against which rounding in [`evaluate`] is
    /// measured.
    ///
    /// [`evaluate`]: Polynomial::evaluate
    pub(crate) fn eval_abs_unchecked(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| (t.coeff * monomial_value(&t.exps, x)).abs()).sum()
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n_vars, x.len())?;
        let mut g = vec![0.0; self.n_vars];
        self.accumulate(x, None, Some(&mut g), None, 1.0);
        Ok(g)
    }

    /// Row-major `n x n` Hessian. The upper triangle is computed and mirrored,
    /// so the result is exactly symmetric.
    pub fn hessian(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n_vars, x.len())?;
        let n = self.n_vars;
        let mut h = vec![0.0; n * n];
        self.accumulate(x, None, None, Some(&mut h), 1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                h[j * n + i] = h[i * n + j];
            }
        }
        Ok(h)
    }

    /// Adds `weight * (p, grad p, upper(hess p))` at `x` into the provided
    /// buffers. Only the upper triangle of the Hessian is touched.
    pub(crate) fn accumulate(
        &self,
        x: &[f64],
        value: Option<&mut f64>,
        mut grad: Option<&mut [f64]>,
        mut hess: Option<&mut [f64]>,
        weight: f64,
    ) {
        let n = self.n_vars;
        let mut val = 0.0;
        // per-variable factors: x^e, e x^(e-1), e(e-1) x^(e-2)
        let mut p0 = vec![0.0; n];
        let mut p1 = vec![0.0; n];
        let mut p2 = vec![0.0; n];
        for t in &self.terms {
            for i in 0..n {
                let e = t.exps[i];
                let xi = x[i];
                p0[i] = powu(xi, e);
                p1[i] = if e >= 1 { f64::from(e) * powu(xi, e - 1) } else { 0.0 };
                p2[i] = if e >= 2 { f64::from(e * (e - 1)) * powu(xi, e - 2) } else { 0.0 };
            }
            let c = t.coeff * weight;
            val += c * p0.iter().product::<f64>();
            if let Some(g) = grad.as_deref_mut() {
                for j in 0..n {
                    if t.exps[j] == 0 {
                        continue;
                    }
                    let mut prod = c * p1[j];
                    for (i, v) in p0.iter().enumerate() {
                        if i != j {
                            prod *= v;
                        }
                    }
                    g[j] += prod;
                }
            }
            if let Some(h) = hess.as_deref_mut() {
                for j in 0..n {
                    if t.exps[j] == 0 {
                        continue;
                    }
                    for k in j..n {
                        let prod = if k == j {
                            if t.exps[j] < 2 {
                                continue;
                            }
                            let mut prod = c * p2[j];
                            for (i, v) in p0.iter().enumerate() {
                                if i != j {
                                    prod *= v;
                                }
                            }
                            prod
                        } else {
                            if t.exps[k] == 0 {
                                continue;
                            }
                            let mut prod = c * p1[j] * p1[k];
                            for (i, v) in p0.iter().enumerate() {
                                if i != j && i != k {
                                    prod *= v;
                                }
                            }
                            prod
                        };
                        h[j * n + k] += prod;
                    }
                }
            }
        }
        if let Some(v) = value {
            *v += val;
        }
    }

    /// Dense coefficients (lowest order first) of `t -> p(base + t * dir)`.
    pub fn restrict_to_ray(&self, base: &[f64], dir: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n_vars, base.len())?;
        check_dim(self.n_vars, dir.len())?;
        if dir.iter().all(|&d| d == 0.0) {
            return Err(PolyError::ZeroDirection);
        }
        let mut out = vec![0.0; self.degree() as usize + 1];
        for t in &self.terms {
            let mut uni = vec![t.coeff];
            for i in 0..self.n_vars {
                for _ in 0..t.exps[i] {
                    uni = mul_linear(&uni, base[i], dir[i]);
                }
            }
            for (k, c) in uni.into_iter().enumerate() {
                out[k] += c;
            }
        }
        Ok(out)
    }

    /// Formats with the given variable names.
    pub fn display_with<'a>(&'a self, names: &'a [String]) -> impl fmt::Display + 'a {
        PolyDisplay { poly: self, names }
    }
}

/// Index of the lowest-order coefficient with magnitude above `tol`;
/// `None` stands for the zero polynomial (infinite trailing degree).
pub fn trailing_degree(coeffs: &[f64], tol: f64) -> Option<usize> {
    coeffs.iter().position(|c| c.abs() > tol)
}

/// [`trailing_degree`] with a tolerance relative to the largest coefficient.
pub fn trailing_degree_rel(coeffs: &[f64], rel_tol: f64) -> Option<usize> {
    let scale = coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    if scale == 0.0 {
        return None;
    }
    trailing_degree(coeffs, rel_tol * scale)
}

fn mul_linear(p: &[f64], a: f64, b: f64) -> Vec<f64> {
    // p(t) * (a + b t)
    let mut out = vec![0.0; p.len() + 1];
    for (k, &c) in p.iter().enumerate() {
        out[k] += c * a;
        out[k + 1] += c * b;
    }
    out
}

#[inline]
fn powu(x: f64, e: u32) -> f64 {
    match e {
        0 => 1.0,
        1 => x,
        2 => x * x,
        _ => x.powi(e as i32),
    }
}

#[inline]
fn monomial_value(exps: &[u32], x: &[f64]) -> f64 {
    exps.iter().zip(x).map(|(&e, &xi)| powu(xi, e)).product()
}

struct PolyDisplay<'a> {
    poly: &'a Polynomial,
    names: &'a [String],
}

impl fmt::Display for PolyDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.poly.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, t) in self.poly.terms.iter().enumerate() {
            let neg = t.coeff < 0.0;
            let mag = t.coeff.abs();
            match (k, neg) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            let mut factors: Vec<String> = Vec::new();
            for (i, &e) in t.exps.iter().enumerate() {
                match e {
                    0 => {}
                    1 => factors.push(self.names[i].clone()),
                    _ => factors.push(format!("{}^{}", self.names[i], e)),
                }
            }
            if factors.is_empty() {
                write!(f, "{mag}")?;
            } else if mag == 1.0 {
                write!(f, "{}", factors.join("*"))?;
            } else {
                write!(f, "{mag}*{}", factors.join("*"))?;
            }
        }
        Ok(())
    }
}

/// `f = {f_1, ..., f_k}` sharing one variable list.
#[derive(Debug, Clone, PartialEq)]
pub struct PolySystem {
    polys: Vec<Polynomial>,
    var_names: Vec<String>,
}

impl PolySystem {
    pub fn new(polys: Vec<Polynomial>, var_names: Vec<String>) -> Result<Self> {
        if polys.is_empty() {
            return Err(PolyError::EmptySystem);
        }
        for p in &polys {
            check_dim(var_names.len(), p.n_vars())?;
        }
        Ok(PolySystem { polys, var_names })
    }

    pub fn polys(&self) -> &[Polynomial] {
        &self.polys
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }

    pub fn n_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn len(&self) -> usize {
        self.polys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polys.is_empty()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n_vars(), x.len())?;
        Ok(self.polys.iter().map(|p| p.eval_unchecked(x)).collect())
    }

    /// Euclidean norm of `f(x)`.
    pub fn residual(&self, x: &[f64]) -> Result<f64> {
        Ok(self.evaluate(x)?.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    /// Row-major `k x n` Jacobian.
    pub fn jacobian(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n_vars(), x.len())?;
        let n = self.n_vars();
        let mut j = vec![0.0; self.polys.len() * n];
        for (row, p) in j.chunks_mut(n).zip(&self.polys) {
            p.accumulate(x, None, Some(row), None, 1.0);
        }
        Ok(j)
    }

    /// Adds the sphere equation `h^2 + sum x_i^2 - 1` to the degree-homogenized
    /// members. The homogenizing variable is appended last.
    pub fn homogenize(&self) -> PolySystem {
        let n = self.n_vars();
        let mut polys: Vec<Polynomial> = self.polys.iter().map(Polynomial::homogenize).collect();
        let sphere_terms = (0..=n)
            .map(|i| {
                let mut e = vec![0; n + 1];
                e[i] = 2;
                (e, 1.0)
            })
            .chain(std::iter::once((vec![0; n + 1], -1.0)));
        polys.push(Polynomial::from_map(n + 1, sphere_terms));
        let mut names = self.var_names.clone();
        names.push(fresh_name(&self.var_names));
        PolySystem { polys, var_names: names }
    }
}

fn fresh_name(existing: &[String]) -> String {
    if !existing.iter().any(|s| s == "h") {
        return "h".to_string();
    }
    (0..)
        .map(|k| format!("h{k}"))
        .find(|cand| !existing.contains(cand))
        .expect("unbounded search")
}

impl fmt::Display for PolySystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "vars: {}", self.var_names.join(" "))?;
        for p in &self.polys {
            writeln!(f, "{}", p.display_with(&self.var_names))?;
        }
        Ok(())
    }
}

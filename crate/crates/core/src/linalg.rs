//! Small dense linear algebra: LU with partial pivoting, cyclic Jacobi for
//! symmetric eigenproblems, and a smallest-singular-value probe.
//!
//! Sizes here are the ambient dimension of the curve (a handful of
//! variables), so everything is plain row-major `Vec<f64>`.

use std::fmt;
use std::ops::{Index, IndexMut};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is numerically singular (pivot {pivot:e} below threshold {threshold:e})")]
    SingularMatrix { pivot: f64, threshold: f64 },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("Jacobi iteration did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data length");
        DenseMatrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        DenseMatrix { rows: r, cols: c, data }
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "matmul dimension");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    /// Replaces the matrix by `(A + A^T) / 2`.
    pub fn symmetrize(&mut self) {
        assert!(self.is_square());
        let n = self.rows;
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = avg;
                self[(j, i)] = avg;
            }
        }
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.rows;
        let mut m: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                m = m.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        m
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    /// Fails with `SingularMatrix` when a pivot falls below `1e-14 * ||A||_F`.
    pub fn factor(a: &DenseMatrix) -> Result<Lu> {
        if !a.is_square() {
            return Err(LinalgError::Dimension(format!(
                "LU needs a square matrix, got {}x{}",
                a.rows, a.cols
            )));
        }
        let n = a.rows;
        let threshold = 1e-14 * a.frobenius();
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmag) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmag <= threshold || pmag == 0.0 {
                return Err(LinalgError::SingularMatrix { pivot: pmag, threshold });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for i in (k + 1)..n {
                let l = lu[i * n + k] / pivot;
                lu[i * n + k] = l;
                if l != 0.0 {
                    for j in (k + 1)..n {
                        lu[i * n + j] -= l * lu[k * n + j];
                    }
                }
            }
        }
        Ok(Lu { n, lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n, "rhs dimension");
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu[i * n + j] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                x[i] -= self.lu[i * n + j] * x[j];
            }
            x[i] /= self.lu[i * n + i];
        }
        x
    }

    /// Solves `A^T x = b` with the same factorization.
    pub fn solve_transposed(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n, "rhs dimension");
        // A^T = U^T L^T P, so solve U^T z = b, L^T y = z, x = P^T y
        let mut z = b.to_vec();
        for i in 0..n {
            for j in 0..i {
                z[i] -= self.lu[j * n + i] * z[j];
            }
            z[i] /= self.lu[i * n + i];
        }
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                z[i] -= self.lu[j * n + i] * z[j];
            }
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = z[k];
        }
        x
    }
}

pub fn lu_solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.rows {
        return Err(LinalgError::Dimension(format!(
            "rhs has length {} for a {}x{} matrix",
            b.len(),
            a.rows,
            a.cols
        )));
    }
    Ok(Lu::factor(a)?.solve(b))
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    /// `vectors[i]` is the unit eigenvector of `values[i]`; its first
    /// component of non-negligible size is positive.
    pub vectors: Vec<Vec<f64>>,
}

const JACOBI_MAX_SWEEPS: usize = 50;

/// Cyclic Jacobi eigensolver.
///
/// Sweeps rows in a fixed order until the off-diagonal Frobenius norm is at
/// most `1e-12 * ||S||_F`.
pub fn sym_eigen(s: &DenseMatrix) -> Result<EigenDecomposition> {
    if !s.is_square() {
        return Err(LinalgError::Dimension(format!("{}x{} is not square", s.rows, s.cols)));
    }
    let n = s.rows;
    let scale = s.frobenius();
    let asym = s.max_asymmetry();
    if asym > 1e-8 * scale {
        return Err(LinalgError::NotSymmetric { asymmetry: asym });
    }
    let mut a = s.clone();
    a.symmetrize();
    let mut v = DenseMatrix::identity(n);
    let target = 1e-12 * scale;

    let off = |a: &DenseMatrix| -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    acc += a[(i, j)] * a[(i, j)];
                }
            }
        }
        acc.sqrt()
    };

    let mut sweeps = 0;
    while off(&a) > target {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(LinalgError::NoConvergence { sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }

    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|j| {
            let mut col: Vec<f64> = (0..n).map(|i| v[(i, j)]).collect();
            let nrm = norm2(&col);
            col.iter_mut().for_each(|c| *c /= nrm);
            canonical_sign(&mut col);
            (a[(j, j)], col)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (values, vectors) = pairs.into_iter().unzip();
    Ok(EigenDecomposition { values, vectors })
}

/// Flips `v` so that its first component of non-negligible magnitude is
/// positive.
pub fn canonical_sign(v: &mut [f64]) {
    let tol = 1e-12 * norm_inf(v);
    if let Some(first) = v.iter().find(|c| c.abs() > tol) {
        if *first < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
    }
}

/// Estimate of the smallest singular value of a square matrix from inverse
/// power iteration on `A^T A`. Returns 0 when `A` cannot be factored.
pub fn condition_probe(a: &DenseMatrix) -> f64 {
    if !a.is_square() || a.rows == 0 {
        return 0.0;
    }
    let Ok(lu) = Lu::factor(a) else {
        return 0.0;
    };
    let n = a.rows;
    // deterministic start with no special alignment
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * i as f64).collect();
    let nx = norm2(&x);
    x.iter_mut().for_each(|c| *c /= nx);
    let mut sigma = 0.0;
    for _ in 0..30 {
        // y = (A^T A)^{-1} x = A^{-1} A^{-T} x
        let z = lu.solve_transposed(&x);
        let y = lu.solve(&z);
        let ny = norm2(&y);
        if !ny.is_finite() || ny == 0.0 {
            return 0.0;
        }
        let next = 1.0 / ny.sqrt();
        x = y.into_iter().map(|c| c / ny).collect();
        let done = (next - sigma).abs() <= 1e-12 * next;
        sigma = next;
        if done {
            break;
        }
    }
    sigma
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_trivial_systems() {
        let id = DenseMatrix::identity(3);
        assert_eq!(lu_solve(&id, &[1.0, -2.0, 3.5]).unwrap(), vec![1.0, -2.0, 3.5]);
        let d = DenseMatrix::from_rows(&[&[2.0, 0.0], &[0.0, 4.0]]);
        assert_eq!(lu_solve(&d, &[2.0, 8.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        let a = DenseMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(lu_solve(&a, &[3.0, 4.0]).unwrap(), vec![4.0, 3.0]);
    }

    #[test]
    fn singular_is_reported() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(lu_solve(&a, &[1.0, 1.0]), Err(LinalgError::SingularMatrix { .. })));
        let z = DenseMatrix::zeros(2, 2);
        assert!(matches!(lu_solve(&z, &[1.0, 1.0]), Err(LinalgError::SingularMatrix { .. })));
    }

    #[test]
    fn transposed_solve() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0, 0.0], &[0.5, -1.0, 3.0], &[4.0, 0.0, 1.0]]);
        let lu = Lu::factor(&a).unwrap();
        let b = [1.0, 2.0, 3.0];
        let x = lu.solve_transposed(&b);
        let back = a.transpose().matvec(&x);
        for (u, v) in back.iter().zip(b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn stability_matrix_eigenpairs() {
        let s = DenseMatrix::from_rows(&[&[188.7722, -91.9182], &[-91.9182, 45.5187]]);
        let e = sym_eigen(&s).unwrap();
        assert!((e.values[0] - 0.6150).abs() < 1e-3, "{:?}", e.values);
        assert!((e.values[1] - 233.6758).abs() < 1e-3, "{:?}", e.values);
        assert!((e.vectors[0][0] - 0.4389).abs() < 1e-3);
        assert!((e.vectors[0][1] - 0.8985).abs() < 1e-3);
    }

    #[test]
    fn identity_eigen() {
        let e = sym_eigen(&DenseMatrix::identity(4)).unwrap();
        assert!(e.values.iter().all(|&v| v == 1.0));
        for (i, vi) in e.vectors.iter().enumerate() {
            for (j, vj) in e.vectors.iter().enumerate() {
                let d = dot(vi, vj);
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn asymmetric_input_rejected() {
        let s = DenseMatrix::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]);
        assert!(matches!(sym_eigen(&s), Err(LinalgError::NotSymmetric { .. })));
    }

    #[test]
    fn sign_convention() {
        let s = DenseMatrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let e = sym_eigen(&s).unwrap();
        for v in &e.vectors {
            assert!(v[0] > 0.0);
        }
        let mut v = vec![0.0, -1e-20, -2.0];
        canonical_sign(&mut v);
        assert_eq!(v[2], 2.0);
    }

    #[test]
    fn probe_simple_cases() {
        assert!((condition_probe(&DenseMatrix::identity(3)) - 1.0).abs() < 1e-6);
        let d = DenseMatrix::diag(&[1e-8, 1.0]);
        let s = condition_probe(&d);
        assert!((s / 1e-8 - 1.0).abs() < 1e-3, "{s}");
        let z = DenseMatrix::zeros(2, 2);
        assert_eq!(condition_probe(&z), 0.0);
    }
}

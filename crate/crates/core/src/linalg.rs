//! Small dense linear algebra: just enough for gradient matrices of a handful
//! of symbols in dimensions up to single digits.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mathfn;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut m = Matrix::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        let mut out = Matrix::zeros(self.rows, other.cols);
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

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    /// `self^T v` without forming the transpose.
    pub fn matvec_transposed(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len());
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j] += self[(i, j)] * v[i];
            }
        }
        out
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Maximum absolute deviation of `Q Q^T` from the identity.
    pub fn orthogonality_defect(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let prod = self.matmul(&self.transpose());
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max(mathfn::abs(prod[(i, j)] - target));
            }
        }
        worst
    }

    /// Determinant via LU with partial pivoting.
    pub fn determinant(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut lu = self.clone();
        let mut det = 1.0;
        for k in 0..n {
            let mut pivot = k;
            for i in k + 1..n {
                if mathfn::abs(lu[(i, k)]) > mathfn::abs(lu[(pivot, k)]) {
                    pivot = i;
                }
            }
            if lu[(pivot, k)] == 0.0 {
                return 0.0;
            }
            if pivot != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(pivot, j)];
                    lu[(pivot, j)] = tmp;
                }
                det = -det;
            }
            det *= lu[(k, k)];
            for i in k + 1..n {
                let factor = lu[(i, k)] / lu[(k, k)];
                for j in k..n {
                    let sub = factor * lu[(k, j)];
                    lu[(i, j)] -= sub;
                }
            }
        }
        det
    }

    /// Solve `self * x = b` via LU with partial pivoting.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(self.rows, self.cols);
        assert_eq!(self.rows, b.len());
        let n = self.rows;
        let mut lu = self.clone();
        let mut x: Vec<f64> = b.to_vec();
        for k in 0..n {
            let mut pivot = k;
            for i in k + 1..n {
                if mathfn::abs(lu[(i, k)]) > mathfn::abs(lu[(pivot, k)]) {
                    pivot = i;
                }
            }
            if mathfn::abs(lu[(pivot, k)]) < 1e-300 {
                return Err(Error::SingularMatrix { det: 0.0 });
            }
            if pivot != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(pivot, j)];
                    lu[(pivot, j)] = tmp;
                }
                x.swap(k, pivot);
            }
            for i in k + 1..n {
                let factor = lu[(i, k)] / lu[(k, k)];
                lu[(i, k)] = 0.0;
                for j in k + 1..n {
                    let sub = factor * lu[(k, j)];
                    lu[(i, j)] -= sub;
                }
                x[i] -= factor * x[k];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= lu[(i, j)] * x[j];
            }
            x[i] /= lu[(i, i)];
        }
        Ok(x)
    }
}

impl core::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    mathfn::sqrt(dot(a, a))
}

/// Orthogonal factor `Q` (n x n) such that `G Q` is lower-trapezoidal with
/// positive diagonal, computed by Householder QR of `G^T`.
///
/// `G` is r x n with r <= n. Returns `(Q, L = G Q)`.
pub fn lq_normalize(g: &Matrix) -> (Matrix, Matrix) {
    let r = g.rows;
    let n = g.cols;
    assert!(r <= n);
    // QR of the n x r matrix G^T: accumulate Q explicitly.
    let mut a = g.transpose();
    let mut q = Matrix::identity(n);
    for k in 0..r {
        // Householder vector for column k, rows k..n.
        let mut v = vec![0.0; n - k];
        for i in k..n {
            v[i - k] = a[(i, k)];
        }
        let alpha = norm(&v);
        if alpha == 0.0 {
            continue;
        }
        v[0] += mathfn::copysign(alpha, v[0]);
        let vnorm2 = dot(&v, &v);
        if vnorm2 == 0.0 {
            continue;
        }
        // Apply H = I - 2 v v^T / (v^T v) to A (rows k..n) and to Q (columns k..n).
        for j in 0..r {
            let mut proj = 0.0;
            for i in k..n {
                proj += v[i - k] * a[(i, j)];
            }
            proj *= 2.0 / vnorm2;
            for i in k..n {
                a[(i, j)] -= proj * v[i - k];
            }
        }
        for row in 0..n {
            let mut proj = 0.0;
            for i in k..n {
                proj += q[(row, i)] * v[i - k];
            }
            proj *= 2.0 / vnorm2;
            for i in k..n {
                q[(row, i)] -= proj * v[i - k];
            }
        }
    }
    let mut l = g.matmul(&q);
    // Flip column signs so the trapezoidal diagonal is positive.
    for k in 0..r {
        if l[(k, k)] < 0.0 {
            for row in 0..n {
                q[(row, k)] = -q[(row, k)];
            }
            for row in 0..r {
                l[(row, k)] = -l[(row, k)];
            }
        }
    }
    (q, l)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(m: &Matrix) -> Vec<f64> {
    assert_eq!(m.rows, m.cols);
    let n = m.rows;
    if n == 0 {
        return Vec::new();
    }
    let mut a = m.clone();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if mathfn::abs(apq) < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = mathfn::copysign(1.0, theta)
                    / (mathfn::abs(theta) + mathfn::sqrt(theta * theta + 1.0));
                let c = 1.0 / mathfn::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eig
}

/// Smallest singular value of an r x n matrix (r <= n), via the eigenvalues
/// of the r x r Gram matrix `A A^T`.
pub fn min_singular_value(a: &Matrix) -> f64 {
    let gram = a.matmul(&a.transpose());
    let eig = symmetric_eigenvalues(&gram);
    let smallest = eig.first().copied().unwrap_or(0.0);
    mathfn::sqrt(smallest.max(0.0))
}

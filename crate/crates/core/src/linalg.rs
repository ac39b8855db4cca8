//! Small dense matrix helpers.
//!
//! Everything here is sized for the estimation problems in this crate:
//! square systems of order six or less, solved thousands of times per
//! simulated second. A row-major `Mat` with LU, cofactor adjugates and a
//! Jacobi eigensolver covers all of it without pulling in a linear-algebra
//! dependency.

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Build from a slice of rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "matvec dimension");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul dimension");
        let mut out = Mat::zeros(self.rows, other.cols);
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

    /// self + alpha * other (both unchanged).
    pub fn add_scaled(&self, other: &Mat, alpha: f64) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        out
    }

    pub fn scale(&self, alpha: f64) -> Mat {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a *= alpha;
        }
        out
    }

    /// Rank-one update: self += alpha * v vᵀ.
    pub fn add_outer(&mut self, v: &[f64], alpha: f64) {
        assert_eq!(v.len(), self.rows);
        assert_eq!(v.len(), self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                self[(i, j)] += alpha * v[i] * v[j];
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Max absolute entry; zero for an empty matrix.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// LU decomposition with partial pivoting. Returns (LU, perm, sign) or the
/// column index where elimination broke down.
fn lu(m: &Mat) -> std::result::Result<(Mat, Vec<usize>, f64), usize> {
    assert_eq!(m.rows, m.cols, "lu: square only");
    let n = m.rows;
    let mut a = m.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = 1.0;
    for k in 0..n {
        let mut p = k;
        let mut best = a[(k, k)].abs();
        for i in k + 1..n {
            let v = a[(i, k)].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best == 0.0 {
            return Err(k);
        }
        if p != k {
            for j in 0..n {
                let tmp = a[(k, j)];
                a[(k, j)] = a[(p, j)];
                a[(p, j)] = tmp;
            }
            perm.swap(k, p);
            sign = -sign;
        }
        let pivot = a[(k, k)];
        for i in k + 1..n {
            let f = a[(i, k)] / pivot;
            a[(i, k)] = f;
            for j in k + 1..n {
                a[(i, j)] -= f * a[(k, j)];
            }
        }
    }
    Ok((a, perm, sign))
}

/// Determinant via LU; exact zero when elimination finds a zero pivot column.
pub fn det(m: &Mat) -> f64 {
    match lu(m) {
        Ok((a, _, sign)) => {
            let mut d = sign;
            for i in 0..m.rows {
                d *= a[(i, i)];
            }
            d
        }
        Err(_) => 0.0,
    }
}

/// Solve A x = b. Fails with `Error::NotExciting` when A is singular, since
/// the only square systems solved in this crate are Gram systems.
pub fn solve(m: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    let n = m.rows;
    if b.len() != n {
        return Err(Error::Dimension(format!("solve: A is {n}x{n}, b has {}", b.len())));
    }
    let (a, perm, _) = lu(m).map_err(|_| Error::NotExciting { rcond: 0.0 })?;
    // Forward substitution on permuted b.
    let mut x: Vec<f64> = perm.iter().map(|&p| b[p]).collect();
    for i in 1..n {
        for j in 0..i {
            x[i] -= a[(i, j)] * x[j];
        }
    }
    // Back substitution.
    for i in (0..n).rev() {
        for j in i + 1..n {
            x[i] -= a[(i, j)] * x[j];
        }
        x[i] /= a[(i, i)];
    }
    Ok(x)
}

pub fn inverse(m: &Mat) -> Result<Mat> {
    let n = m.rows;
    let mut inv = Mat::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = solve(m, &e)?;
        e[j] = 0.0;
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    Ok(inv)
}

/// Adjugate (classical adjoint): adj(A) A = det(A) I. Computed entry-wise
/// from cofactors, which stays well-defined when A is singular — exactly the
/// property the estimator update needs near Δ = 0.
pub fn adjugate(m: &Mat) -> Mat {
    assert_eq!(m.rows, m.cols, "adjugate: square only");
    let n = m.rows;
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    if n == 1 {
        let mut a = Mat::zeros(1, 1);
        a[(0, 0)] = 1.0;
        return a;
    }
    let mut adj = Mat::zeros(n, n);
    let mut minor = Mat::zeros(n - 1, n - 1);
    for i in 0..n {
        for j in 0..n {
            // Minor of entry (j, i) — the transpose is built in.
            let mut mr = 0;
            for r in 0..n {
                if r == j {
                    continue;
                }
                let mut mc = 0;
                for c in 0..n {
                    if c == i {
                        continue;
                    }
                    minor[(mr, mc)] = m[(r, c)];
                    mc += 1;
                }
                mr += 1;
            }
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            adj[(i, j)] = sign * det(&minor);
        }
    }
    adj
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    assert_eq!(m.rows, m.cols, "sym_eigenvalues: square only");
    let n = m.rows;
    let mut a = m.clone();
    // Symmetrize defensively; callers pass Gram-type matrices.
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = s;
            a[(j, i)] = s;
        }
    }
    let scale = a.max_abs();
    if scale == 0.0 || n < 2 {
        return (0..n).map(|i| a[(i, i)]).collect();
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a[(i, j)].abs();
            }
        }
        if off < 1e-15 * scale * (n * n) as f64 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
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
    let mut eigs: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eigs
}

// ── vector helpers ──────────────────────────────────────────────────────────

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Finite-difference weights on arbitrary nodes (Fornberg's recurrence).
///
/// Returns `w[k][i]`: the weight of sample `f(x[i])` in the order-`k`
/// derivative at `z`, for k = 0..=max_order. Exact for polynomials up to
/// degree `x.len() - 1`.
pub fn fd_weights(z: f64, x: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = x.len() - 1;
    let m = max_order;
    let mut c = vec![vec![0.0; m + 1]; n + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..=n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    // Transpose into per-order rows.
    (0..=m).map(|k| (0..=n).map(|i| c[i][k]).collect()).collect()
}

//! Dense row-major matrices, a cyclic Jacobi eigen-solver for symmetric
//! matrices and the eigenvalue-thresholded pseudo-inverse used to solve
//! Gram systems.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative eigenvalue threshold for [`pinv_rcond`].
pub const DEFAULT_RCOND: f64 = 1e-1;

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                context: "Matrix::new",
                expected: rows * cols,
                found: data.len(),
            });
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite matrix entry {bad}")));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix without the finiteness check. Used for label matrices
    /// where the caller owns validation.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from rows of equal length. An empty slice yields a
    /// `0 × 0` matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Dimension {
                    context: "Matrix::from_rows",
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    /// Column vector (`n × 1`).
    pub fn column(values: &[f64]) -> Result<Self> {
        Self::new(values.len(), 1, values.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols))
            .map(|i| self[(i, i)])
            .collect()
    }

    pub fn trace(&self) -> f64 {
        self.diag().iter().sum()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Dimension {
                context: "matmul",
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                for (o, &b) in out.row_mut(i).iter_mut().zip(src) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(Error::Dimension {
                context: "matvec",
                expected: self.cols,
                found: v.len(),
            });
        }
        Ok(self.iter_rows().map(|r| dot(r, v)).collect())
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Max-norm distance to `other`.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    /// Copy of the selected rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self::from_raw(idx.len(), self.cols, data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(
            self.rows,
            self.cols,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in self.iter_rows() {
            writeln!(f, "  {r:?}")?;
        }
        write!(f, "]")
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Eigen-decomposition of a symmetric matrix: eigenvalues in descending
/// order and the matching orthonormal eigenvectors stored as columns.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: Matrix,
    pub sweeps: usize,
}

impl SymEig {
    /// `V diag(values) Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        spectral_sum(&self.vectors, &self.values)
    }
}

fn check_square(a: &Matrix, context: &'static str) -> Result<()> {
    if a.rows() != a.cols() {
        return Err(Error::Dimension {
            context,
            expected: a.rows(),
            found: a.cols(),
        });
    }
    Ok(())
}

/// Symmetric eigen-decomposition by cyclic Jacobi rotations.
///
/// The input is symmetrized as `(A + Aᵀ)/2` after checking that it is
/// symmetric to within `1e-9` (relative to its largest entry).
pub fn sym_eig(a: &Matrix) -> Result<SymEig> {
    check_square(a, "sym_eig")?;
    let n = a.rows();
    let scale = a.max_abs().max(1.0);
    if !a.is_symmetric(SYMMETRY_TOL * scale) {
        return Err(Error::InvalidArgument(
            "sym_eig requires a symmetric matrix".into(),
        ));
    }
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = 0.5 * (a[(i, j)] + a[(j, i)]);
        }
    }
    let mut v = Matrix::identity(n);
    let target = JACOBI_TOL * m.frobenius();

    let off_norm = |m: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[(i, j)] * m[(i, j)];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    loop {
        let off = off_norm(&m);
        if off <= target {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence {
                sweeps,
                off_norm: off,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = c * akp - s * akq;
                    m[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[(p, k)];
                    let aqk = m[(q, k)];
                    m[(p, k)] = c * apk - s * aqk;
                    m[(q, k)] = s * apk + c * aqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps the original column order among equal eigenvalues.
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, dst)] = v[(k, src)];
        }
    }
    Ok(SymEig {
        values,
        vectors,
        sweeps,
    })
}

/// `Σᵢ dᵢ vᵢ vᵢᵀ` over the columns `vᵢ` of `vectors`.
fn spectral_sum(vectors: &Matrix, d: &[f64]) -> Matrix {
    let n = vectors.rows();
    let mut out = Matrix::zeros(n, n);
    for (k, &dk) in d.iter().enumerate() {
        if dk == 0.0 {
            continue;
        }
        for i in 0..n {
            let vik = vectors[(i, k)] * dk;
            if vik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[(i, j)] += vik * vectors[(j, k)];
            }
        }
    }
    out
}

/// Pseudo-inverse of a symmetric PSD matrix with its spectrum diagnostics.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pub matrix: Matrix,
    /// Number of eigenvalues kept above the threshold.
    pub rank: usize,
    /// `λ_max / λ_min` over the kept eigenvalues; infinite when nothing is kept.
    pub condition: f64,
    /// PSD-projected eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
}

impl PseudoInverse {
    /// True when every eigenvalue was thresholded away.
    pub fn is_degenerate(&self) -> bool {
        self.rank == 0
    }
}

/// Eigenvalue-thresholded pseudo-inverse.
///
/// Negative eigenvalues are clamped to zero, then every eigenvalue
/// `λᵢ ≤ max(rcond, n·ε) · λ_max` is treated as zero. The `n·ε` floor only
/// matters for `rcond` near zero, where it drops round-off eigenvalues of
/// singular matrices. A matrix with no surviving eigenvalue yields the zero
/// matrix with `rank == 0`.
pub fn pinv_rcond(a: &Matrix, rcond: f64) -> Result<PseudoInverse> {
    if !(0.0..1.0).contains(&rcond) {
        return Err(Error::InvalidArgument(format!(
            "rcond must lie in [0, 1), got {rcond}"
        )));
    }
    let eig = sym_eig(a)?;
    let values: Vec<f64> = eig.values.iter().map(|&l| l.max(0.0)).collect();
    let lmax = values.first().copied().unwrap_or(0.0);
    let floor = values.len() as f64 * f64::EPSILON;
    let threshold = rcond.max(floor) * lmax;
    let mut rank = 0;
    let mut lmin_kept = f64::INFINITY;
    let inv: Vec<f64> = values
        .iter()
        .map(|&l| {
            if l > threshold && l > 0.0 {
                rank += 1;
                lmin_kept = lmin_kept.min(l);
                1.0 / l
            } else {
                0.0
            }
        })
        .collect();
    if rank == 0 {
        log::warn!("degenerate Gram: all eigenvalues below rcond={rcond}");
    }
    let condition = if rank == 0 {
        f64::INFINITY
    } else {
        lmax / lmin_kept
    };
    Ok(PseudoInverse {
        matrix: spectral_sum(&eig.vectors, &inv),
        rank,
        condition,
        eigenvalues: values,
    })
}

/// Solution of `a x = b` through [`pinv_rcond`].
#[derive(Debug, Clone)]
pub struct RegularizedSolution {
    pub x: Vec<f64>,
    pub rank: usize,
    pub condition: f64,
}

pub fn solve_regularized(a: &Matrix, b: &[f64], rcond: f64) -> Result<RegularizedSolution> {
    check_square(a, "solve_regularized")?;
    if b.len() != a.rows() {
        return Err(Error::Dimension {
            context: "solve_regularized",
            expected: a.rows(),
            found: b.len(),
        });
    }
    let pinv = pinv_rcond(a, rcond)?;
    Ok(RegularizedSolution {
        x: pinv.matrix.matvec(b)?,
        rank: pinv.rank,
        condition: pinv.condition,
    })
}

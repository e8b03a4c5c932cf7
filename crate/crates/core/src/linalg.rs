//! Small dense factorizations used by the forward and backward sweeps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;
use crate::scalar::{dot, norm2, Scalar};

/// Smallest admissible `R[i][i]` before the tangent volume counts as collapsed.
pub const RANK_THRESHOLD: f64 = 1e-30;

/// Smallest admissible column norm in [`normalize_columns`].
pub const COLUMN_NORM_THRESHOLD: f64 = 1e-300;

/// Orthogonal matrix (the `Q` factor).
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoFrame<T>(SquareMatrix<T>);

/// Upper triangular matrix with positive diagonal (the `R` factor).
#[derive(Debug, Clone, PartialEq)]
pub struct UpperTri<T>(SquareMatrix<T>);

/// Upper triangular coefficient matrix with unit-norm columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffMatrix<T>(SquareMatrix<T>);

/// Column norms removed by [`normalize_columns`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiagNorms<T>(pub Vec<T>);

/// `max |Q^T Q - I|`.
pub fn orthogonality_defect<T: Scalar>(q: &SquareMatrix<T>) -> T {
    (&q.transpose() * q).max_abs_diff(&SquareMatrix::identity(q.dim()))
}

impl<T: Scalar> OrthoFrame<T> {
    pub fn identity(n: usize) -> Self {
        OrthoFrame(SquareMatrix::identity(n))
    }

    /// Accepts `q` when `Q^T Q = I` within `1e-10`.
    pub fn new(q: SquareMatrix<T>) -> Result<Self> {
        let defect = orthogonality_defect(&q);
        if !(defect <= T::lit(1e-10)) {
            return Err(Error::InvalidArgument(format!(
                "frame is not orthogonal: |Q^T Q - I| = {defect:e}"
            )));
        }
        Ok(OrthoFrame(q))
    }

    /// Orthogonal factor of a seeded uniform(-1, 1) matrix.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let data = (0..n * n)
                .map(|_| T::lit(rng.gen_range(-1.0..1.0)))
                .collect();
            let m = SquareMatrix::from_row_major(n, data).expect("sized");
            if let Ok((q, _)) = qr_positive(&m) {
                return q;
            }
        }
    }

    pub fn matrix(&self) -> &SquareMatrix<T> {
        &self.0
    }

    pub fn into_inner(self) -> SquareMatrix<T> {
        self.0
    }
}

impl<T: Scalar> UpperTri<T> {
    /// Accepts `r` when it is exactly upper triangular with a positive diagonal.
    pub fn new(r: SquareMatrix<T>) -> Result<Self> {
        if !r.is_upper_triangular() {
            return Err(Error::InvalidArgument("R is not upper triangular".into()));
        }
        if let Some(i) = r.diagonal().iter().position(|&d| !(d > T::zero())) {
            return Err(Error::InvalidArgument(format!(
                "R diagonal entry {i} is not positive"
            )));
        }
        Ok(UpperTri(r))
    }

    pub fn matrix(&self) -> &SquareMatrix<T> {
        &self.0
    }

    pub fn into_inner(self) -> SquareMatrix<T> {
        self.0
    }
}

impl<T: Scalar> CoeffMatrix<T> {
    /// Normalizes the columns of an upper triangular matrix.
    pub fn new(c: SquareMatrix<T>) -> Result<Self> {
        if !c.is_upper_triangular() {
            return Err(Error::InvalidArgument(
                "coefficient matrix is not upper triangular".into(),
            ));
        }
        let (normalized, _) = normalize_columns(&c)?;
        Ok(CoeffMatrix(normalized))
    }

    pub fn identity(n: usize) -> Self {
        CoeffMatrix(SquareMatrix::identity(n))
    }

    pub fn matrix(&self) -> &SquareMatrix<T> {
        &self.0
    }

    pub fn into_inner(self) -> SquareMatrix<T> {
        self.0
    }
}

/// QR factorization with `R[i][i] > 0`.
///
/// Modified Gram-Schmidt with a second orthogonalization pass. Under the
/// positive-diagonal convention the factorization of a full-rank matrix is
/// unique, so refactoring `Q R` returns the same pair.
pub fn qr_positive<T: Scalar>(m: &SquareMatrix<T>) -> Result<(OrthoFrame<T>, UpperTri<T>)> {
    let n = m.dim();
    let mut q_cols: Vec<Vec<T>> = Vec::with_capacity(n);
    let mut r = SquareMatrix::zeros(n);
    let threshold = T::lit(RANK_THRESHOLD);
    for j in 0..n {
        let mut v = m.column(j);
        for _pass in 0..2 {
            for (i, qi) in q_cols.iter().enumerate() {
                let proj = dot(qi, &v);
                for (vk, &qk) in v.iter_mut().zip(qi) {
                    *vk = *vk - proj * qk;
                }
                r[(i, j)] = r[(i, j)] + proj;
            }
        }
        let norm = norm2(&v);
        if !(norm >= threshold) {
            return Err(Error::RankDegenerate {
                column: j,
                step: None,
            });
        }
        r[(j, j)] = norm;
        q_cols.push(v.into_iter().map(|x| x / norm).collect());
    }
    Ok((OrthoFrame(SquareMatrix::from_columns(&q_cols)), UpperTri(r)))
}

/// Solves `R X = B` by back substitution, column by column.
///
/// When `B` is upper triangular so is `X`: entries below the diagonal come
/// out as exact zeros.
pub fn solve_upper<T: Scalar>(r: &UpperTri<T>, b: &SquareMatrix<T>) -> Result<SquareMatrix<T>> {
    let r = &r.0;
    let n = r.dim();
    if b.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.dim(),
        });
    }
    if let Some(i) = (0..n).find(|&i| !r[(i, i)].is_normal()) {
        return Err(Error::SingularSolve {
            index: i,
            step: None,
        });
    }
    let mut x = SquareMatrix::zeros(n);
    for j in 0..n {
        for i in (0..n).rev() {
            let mut acc = b[(i, j)];
            for k in i + 1..n {
                acc = acc - r[(i, k)] * x[(k, j)];
            }
            x[(i, j)] = acc / r[(i, i)];
        }
    }
    Ok(x)
}

/// Scales each column to unit Euclidean norm; returns the scaled matrix and
/// the removed norms.
pub fn normalize_columns<T: Scalar>(
    m: &SquareMatrix<T>,
) -> Result<(SquareMatrix<T>, DiagNorms<T>)> {
    let n = m.dim();
    let threshold = T::lit(COLUMN_NORM_THRESHOLD).max(T::min_positive_value());
    let mut out = m.clone();
    let mut norms = Vec::with_capacity(n);
    for j in 0..n {
        let col = m.column(j);
        let norm = norm2(&col);
        if !(norm > threshold) || !norm.is_finite() {
            return Err(Error::DegenerateCoefficient {
                column: j,
                step: None,
            });
        }
        for i in 0..n {
            out[(i, j)] = col[i] / norm;
        }
        norms.push(norm);
    }
    Ok((out, DiagNorms(norms)))
}

/// One pullback step: `C_prev = normalize(R^{-1} C)`.
pub(crate) fn pull_back<T: Scalar>(
    r: &UpperTri<T>,
    c: &CoeffMatrix<T>,
) -> Result<(CoeffMatrix<T>, DiagNorms<T>)> {
    let raw = solve_upper(r, &c.0)?;
    let (next, norms) = normalize_columns(&raw)?;
    Ok((CoeffMatrix(next), norms))
}

pub(crate) fn coeff_unchecked<T>(m: SquareMatrix<T>) -> CoeffMatrix<T> {
    CoeffMatrix(m)
}

pub(crate) fn upper_unchecked<T>(m: SquareMatrix<T>) -> UpperTri<T> {
    UpperTri(m)
}

//! Dense symmetric linear algebra.
//!
//! Every matrix the algorithms exchange is symmetric, so [`SymmetricMatrix`]
//! only exposes operations that keep `entry(j, l) == entry(l, j)` bit for bit:
//! element-wise arithmetic between symmetric operands, diagonal shifts, and
//! constructors that compute the lower triangle and mirror it.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::{Error, Result, Vector};

/// Numerical tolerances shared by the linear algebra routines and their tests.
pub mod tol {
    /// Relative reconstruction error of an eigendecomposition, w.r.t. `‖M‖_F`.
    pub const RECONSTRUCTION_REL: f64 = 1e-10;
    /// Deviation of the eigenvector Gram matrix from the identity.
    pub const ORTHONORMALITY: f64 = 1e-10;
    /// Absolute slack for eigenvalue lower bounds after projection.
    pub const PSD_ABS: f64 = 1e-12;
    /// Relative residual accepted from an SPD solve.
    pub const SOLVE_REL: f64 = 1e-10;
}

/// Number of entries in the lower triangle (diagonal included) of a `d × d` matrix.
pub fn lower_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Row-major linear index of lower-triangular position `(row, col)`, `col <= row`.
#[inline]
pub fn lower_index(row: usize, col: usize) -> usize {
    debug_assert!(col <= row);
    row * (row + 1) / 2 + col
}

/// Inverse of [`lower_index`].
pub fn lower_position(t: usize) -> (usize, usize) {
    // Largest row with row*(row+1)/2 <= t.
    let mut row = ((((8 * t + 1) as f64).sqrt() - 1.0) / 2.0) as usize;
    while row * (row + 1) / 2 > t {
        row -= 1;
    }
    while (row + 1) * (row + 2) / 2 <= t {
        row += 1;
    }
    (row, t - row * (row + 1) / 2)
}

/// Dense symmetric `d × d` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix {
    inner: DMatrix<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { inner: DMatrix::zeros(dim, dim) }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, value: f64) -> Self {
        Self { inner: DMatrix::from_diagonal_element(dim, dim, value) }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self { inner: DMatrix::from_diagonal(&DVector::from_column_slice(diag)) }
    }

    /// Builds a matrix from a function evaluated on the lower triangle only.
    pub fn from_lower_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut inner = DMatrix::zeros(dim, dim);
        for col in 0..dim {
            for row in col..dim {
                let v = f(row, col);
                inner[(row, col)] = v;
                inner[(col, row)] = v;
            }
        }
        Self { inner }
    }

    /// Takes the lower triangle of a square matrix and mirrors it.
    pub fn from_lower(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidInput(format!(
                "expected a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let out = Self::from_lower_fn(m.nrows(), |r, c| m[(r, c)]);
        if !out.is_finite() {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        Ok(out)
    }

    /// Accepts a dense matrix that is already symmetric up to rounding.
    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidInput("matrix is not square".into()));
        }
        let scale = m.amax().max(1.0);
        for c in 0..m.ncols() {
            for r in c + 1..m.nrows() {
                if (m[(r, c)] - m[(c, r)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidInput(format!("matrix is not symmetric at ({r}, {c})")));
                }
            }
        }
        Self::from_lower(m)
    }

    /// `scale · BᵀB`, the Gram matrix of the rows of `b`.
    pub fn gram(b: &DMatrix<f64>, scale: f64) -> Self {
        let g = b.tr_mul(b);
        Self::from_lower_fn(g.nrows(), |r, c| scale * g[(r, c)])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.inner[(row, col)]
    }

    pub fn as_dense(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_dense(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn is_finite(&self) -> bool {
        self.inner.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.inner.iter().map(|v| v * v).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    /// Frobenius distance `‖self − other‖_F`.
    pub fn frobenius_distance(&self, other: &Self) -> f64 {
        self.inner.iter().zip(other.inner.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    pub fn mul_vec(&self, v: &Vector) -> Vector {
        &self.inner * v
    }

    /// `self += coeff · other`.
    pub fn add_scaled(&mut self, coeff: f64, other: &Self) {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        self.inner.zip_apply(&other.inner, |a, b| *a += coeff * b);
    }

    pub fn add_diagonal(&mut self, value: f64) {
        for i in 0..self.dim() {
            self.inner[(i, i)] += value;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.inner *= factor;
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { inner: &self.inner * factor }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { inner: &self.inner - &other.inner }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { inner: &self.inner + &other.inner }
    }

    /// `self += coeff · u uᵀ`.
    pub fn add_rank_one(&mut self, coeff: f64, u: &Vector) {
        let d = self.dim();
        for c in 0..d {
            let uc = coeff * u[c];
            for r in c..d {
                let v = self.inner[(r, c)] + uc * u[r];
                self.inner[(r, c)] = v;
                self.inner[(c, r)] = v;
            }
        }
    }

    /// Sets entry `(row, col)` and its mirror.
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.inner[(row, col)] = value;
        self.inner[(col, row)] = value;
    }

    /// Average of a non-empty list of matrices, summed in order.
    pub fn mean<'a>(items: impl IntoIterator<Item = &'a SymmetricMatrix>) -> Self {
        let mut iter = items.into_iter();
        let first = iter.next().expect("mean of an empty list");
        let mut acc = first.clone();
        let mut count = 1usize;
        for m in iter {
            acc.inner += &m.inner;
            count += 1;
        }
        acc.inner /= count as f64;
        acc
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalues sorted non-increasing.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    /// Eigenvectors stored as columns, in the order of `values`.
    pub vectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, i: usize) -> Vector {
        self.vectors.column(i).into_owned()
    }

    pub fn min_value(&self) -> f64 {
        *self.values.last().expect("empty decomposition")
    }

    /// `Σ f(λ_i) u_i u_iᵀ`, assembled on the lower triangle.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymmetricMatrix {
        let d = self.dim();
        let mapped: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let scaled = DMatrix::from_fn(d, d, |r, c| self.vectors[(r, c)] * mapped[c]);
        let full = &scaled * self.vectors.transpose();
        SymmetricMatrix::from_lower_fn(d, |r, c| full[(r, c)])
    }

    pub fn reconstruct(&self) -> SymmetricMatrix {
        self.reconstruct_with(|l| l)
    }
}

/// Symmetric eigendecomposition.
pub fn eigh(m: &SymmetricMatrix) -> Result<EigenDecomposition> {
    if !m.is_finite() {
        return Err(Error::InvalidInput("eigh: matrix has non-finite entries".into()));
    }
    let d = m.dim();
    let eig = SymmetricEigen::new(m.inner.clone());
    let mut order: Vec<usize> = (0..d).collect();
    // Stable sort keeps the solver's order among exact ties.
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(EigenDecomposition { values, vectors })
}

/// Projection onto `{M = Mᵀ : M ⪰ μI}`, i.e. `[X − μI]_0 + μI`.
///
/// Matrices already inside the set are returned unchanged.
pub fn project_psd_mu(x: &SymmetricMatrix, mu: f64) -> Result<SymmetricMatrix> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidParameter(format!("projection requires mu > 0, got {mu}")));
    }
    let eig = eigh(x)?;
    if eig.min_value() >= mu {
        return Ok(x.clone());
    }
    Ok(eig.reconstruct_with(|l| l.max(mu)))
}

/// Cholesky factor of a symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    matrix: SymmetricMatrix,
    norm: f64,
}

impl SpdFactor {
    pub fn new(m: &SymmetricMatrix) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::InvalidInput("solve: matrix has non-finite entries".into()));
        }
        let chol = Cholesky::new(m.inner.clone())
            .ok_or_else(|| Error::SingularMatrix("Cholesky factorization failed".into()))?;
        Ok(Self { chol, norm: m.frobenius_norm(), matrix: m.clone() })
    }

    pub fn matrix(&self) -> &SymmetricMatrix {
        &self.matrix
    }

    pub fn solve(&self, b: &Vector) -> Result<Vector> {
        let x = self.chol.solve(b);
        let residual = (self.matrix.mul_vec(&x) - b).norm();
        let bound = tol::SOLVE_REL * (self.norm * x.norm() + b.norm());
        if !x.iter().all(|v| v.is_finite()) || residual > bound {
            return Err(Error::SingularMatrix(format!("solve residual {residual:.3e} exceeds {bound:.3e}")));
        }
        Ok(x)
    }
}

/// Solves `M x = b` for symmetric positive definite `M`.
pub fn solve_spd(m: &SymmetricMatrix, b: &Vector) -> Result<Vector> {
    SpdFactor::new(m)?.solve(b)
}

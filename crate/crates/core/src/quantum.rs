//! Dense complex linear algebra on composite Hilbert spaces.
//!
//! Factors are ordered as they were registered (atom ⊗ cavity ⊗ waveguide for
//! every model in this crate) and basis indices are lexicographic with the
//! first factor most significant.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Factor {
    pub label: String,
    pub dim: usize,
}

/// Tensor-product space described by an ordered list of labelled factors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HilbertSpace {
    factors: Vec<Factor>,
    total_dim: usize,
}

impl HilbertSpace {
    pub fn new<S: Into<String>>(factors: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let factors: Vec<Factor> = factors
            .into_iter()
            .map(|(label, dim)| Factor {
                label: label.into(),
                dim,
            })
            .collect();
        if factors.is_empty() {
            return Err(Error::invalid(
                "factors",
                "a Hilbert space needs at least one factor",
            ));
        }
        for (i, f) in factors.iter().enumerate() {
            if f.dim == 0 {
                return Err(Error::invalid(
                    &f.label,
                    "factor dimension must be positive",
                ));
            }
            if factors[..i].iter().any(|g| g.label == f.label) {
                return Err(Error::invalid(&f.label, "duplicate factor label"));
            }
        }
        let total_dim = factors.iter().map(|f| f.dim).product();
        Ok(Self { factors, total_dim })
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn factor_position(&self, label: &str) -> Result<usize> {
        self.factors
            .iter()
            .position(|f| f.label == label)
            .ok_or_else(|| Error::UnknownFactor(label.to_string()))
    }

    pub fn factor_dim(&self, label: &str) -> Result<usize> {
        Ok(self.factors[self.factor_position(label)?].dim)
    }

    /// Basis index of the product state with the given per-factor labels.
    pub fn index_of(&self, digits: &[usize]) -> Result<usize> {
        if digits.len() != self.factors.len() {
            return Err(Error::DimensionMismatch {
                expected: self.factors.len(),
                actual: digits.len(),
            });
        }
        let mut idx = 0;
        for (d, f) in digits.iter().zip(&self.factors) {
            if *d >= f.dim {
                return Err(Error::invalid(&f.label, format!("level {d} out of range")));
            }
            idx = idx * f.dim + d;
        }
        Ok(idx)
    }

    pub fn digits_of(&self, mut index: usize) -> Vec<usize> {
        let mut digits = vec![0; self.factors.len()];
        for (slot, f) in digits.iter_mut().zip(&self.factors).rev() {
            *slot = index % f.dim;
            index /= f.dim;
        }
        digits
    }
}

/// Square operator on a [`HilbertSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    space: HilbertSpace,
    matrix: CMatrix,
}

impl Operator {
    pub fn new(space: HilbertSpace, matrix: CMatrix) -> Result<Self> {
        let n = space.total_dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: matrix.nrows().max(matrix.ncols()),
            });
        }
        Ok(Self { space, matrix })
    }

    pub fn identity(space: &HilbertSpace) -> Self {
        let n = space.total_dim();
        Self {
            space: space.clone(),
            matrix: CMatrix::identity(n, n),
        }
    }

    pub fn zeros(space: &HilbertSpace) -> Self {
        let n = space.total_dim();
        Self {
            space: space.clone(),
            matrix: CMatrix::zeros(n, n),
        }
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn adjoint(&self) -> Self {
        Self {
            space: self.space.clone(),
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self {
            space: self.space.clone(),
            matrix: &self.matrix * factor,
        }
    }

    pub fn add(&self, other: &Operator) -> Result<Self> {
        self.check_space(other)?;
        Ok(Self {
            space: self.space.clone(),
            matrix: &self.matrix + &other.matrix,
        })
    }

    /// Operator product `self · other`.
    pub fn compose(&self, other: &Operator) -> Result<Self> {
        self.check_space(other)?;
        Ok(Self {
            space: self.space.clone(),
            matrix: &self.matrix * &other.matrix,
        })
    }

    /// Largest elementwise |A − A†|.
    pub fn hermiticity_error(&self) -> f64 {
        max_abs_diff(&self.matrix, &self.matrix.adjoint())
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.matrix.nrows();
        (0..n).all(|i| (0..n).all(|j| i == j || self.matrix[(i, j)] == ZERO))
    }

    fn check_space(&self, other: &Operator) -> Result<()> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch);
        }
        Ok(())
    }
}

/// Pure state on a [`HilbertSpace`]. Amplitudes are not forced to unit norm;
/// the trajectory engine tracks the decaying norm explicitly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateVector {
    space: HilbertSpace,
    amplitudes: CVector,
}

impl StateVector {
    pub fn new(space: HilbertSpace, amplitudes: CVector) -> Result<Self> {
        if amplitudes.len() != space.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: space.total_dim(),
                actual: amplitudes.len(),
            });
        }
        Ok(Self { space, amplitudes })
    }

    /// Product basis state selected by per-factor levels.
    pub fn basis(space: &HilbertSpace, digits: &[usize]) -> Result<Self> {
        let idx = space.index_of(digits)?;
        let mut amplitudes = CVector::zeros(space.total_dim());
        amplitudes[idx] = ONE;
        Ok(Self {
            space: space.clone(),
            amplitudes,
        })
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.amplitudes.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::invalid("state", "cannot normalize a zero vector"));
        }
        self.amplitudes /= Complex64::new(n, 0.0);
        Ok(())
    }
}

/// Density matrix. Invariants are checked on demand via [`DensityMatrix::check`].
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    space: HilbertSpace,
    matrix: CMatrix,
}

/// Deviations of a density matrix from its defining properties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvariantReport {
    pub trace_error: f64,
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
}

impl DensityMatrix {
    pub fn new(space: HilbertSpace, matrix: CMatrix) -> Result<Self> {
        let n = space.total_dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: matrix.nrows().max(matrix.ncols()),
            });
        }
        Ok(Self { space, matrix })
    }

    pub fn from_pure(state: &StateVector) -> Self {
        let psi = state.amplitudes();
        let n2 = state.norm_squared();
        let matrix = psi * psi.adjoint() / Complex64::new(n2, 0.0);
        Self {
            space: state.space().clone(),
            matrix,
        }
    }

    pub fn maximally_mixed(space: &HilbertSpace) -> Self {
        let n = space.total_dim();
        Self {
            space: space.clone(),
            matrix: CMatrix::identity(n, n) / Complex64::new(n as f64, 0.0),
        }
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    pub fn population(&self, index: usize) -> f64 {
        self.matrix[(index, index)].re
    }

    pub fn check(&self) -> InvariantReport {
        InvariantReport {
            trace_error: (self.trace() - ONE).norm(),
            hermiticity_error: max_abs_diff(&self.matrix, &self.matrix.adjoint()),
            min_eigenvalue: min_hermitian_eigenvalue(&self.matrix),
        }
    }
}

/// Embed a single-factor operator into `space`, padding with identities.
pub fn kron_embed(op: &CMatrix, factor_label: &str, space: &HilbertSpace) -> Result<Operator> {
    let pos = space.factor_position(factor_label)?;
    let fdim = space.factors()[pos].dim;
    if op.nrows() != fdim || op.ncols() != fdim {
        return Err(Error::DimensionMismatch {
            expected: fdim,
            actual: op.nrows().max(op.ncols()),
        });
    }
    let mut out = CMatrix::from_element(1, 1, ONE);
    for (i, f) in space.factors().iter().enumerate() {
        let factor = if i == pos {
            op.clone()
        } else {
            CMatrix::identity(f.dim, f.dim)
        };
        out = out.kronecker(&factor);
    }
    Operator::new(space.clone(), out)
}

/// Tr(ρ · op).
pub fn expectation(rho: &DensityMatrix, op: &Operator) -> Result<Complex64> {
    if rho.space != op.space {
        return Err(Error::SpaceMismatch);
    }
    Ok(trace_of_product(&rho.matrix, &op.matrix))
}

/// Tr(A · B) without forming the product.
pub fn trace_of_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Bosonic annihilation operator truncated to `dim` Fock states.
pub fn destroy(dim: usize) -> CMatrix {
    let mut m = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        m[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    m
}

/// |i⟩⟨j| on a `dim`-level factor.
pub fn transition(dim: usize, i: usize, j: usize) -> CMatrix {
    let mut m = CMatrix::zeros(dim, dim);
    m[(i, j)] = ONE;
    m
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn min_hermitian_eigenvalue(m: &CMatrix) -> f64 {
    let herm = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    SymmetricEigen::new(herm)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Operator stored as its nonzero entries; used in the inner loops of the solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOp {
    dim: usize,
    entries: Vec<(usize, usize, Complex64)>,
}

impl SparseOp {
    pub fn from_dense(m: &CMatrix) -> Self {
        let mut entries = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != ZERO {
                    entries.push((i, j, v));
                }
            }
        }
        Self {
            dim: m.nrows(),
            entries,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, usize, Complex64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
        }
        m
    }

    /// out += scale · self · x  for a vector x.
    pub fn mul_vec_add(&self, x: &[Complex64], scale: Complex64, out: &mut [Complex64]) {
        for &(i, j, v) in &self.entries {
            out[i] += scale * v * x[j];
        }
    }

    /// Tr(self · ρ) with ρ stored row-major.
    pub fn trace_with(&self, rho: &[Complex64]) -> Complex64 {
        let n = self.dim;
        self.entries
            .iter()
            .fold(ZERO, |acc, &(i, j, v)| acc + v * rho[j * n + i])
    }

    /// ⟨x|self|x⟩.
    pub fn expectation_vec(&self, x: &[Complex64]) -> Complex64 {
        self.entries
            .iter()
            .fold(ZERO, |acc, &(i, j, v)| acc + x[i].conj() * v * x[j])
    }
}

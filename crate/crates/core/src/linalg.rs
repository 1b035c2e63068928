//! Dense complex linear algebra for dimensions 2 and 4.
//!
//! Everything the simulator touches (states, collision unitaries, Kraus
//! operators, POVM effects) lives in a [`ComplexMatrix`]. The module provides
//! the four primitives the rest of the crate is built on: Hermitian
//! eigendecomposition, unitary matrix exponential, Kronecker product, and the
//! partial trace over the environment factor.
//!
//! Subsystem ordering is fixed globally: joint index = 2 * (battery bit) +
//! (environment bit), i.e. the battery is always the left Kronecker factor.

use num_complex::Complex;
use thiserror::Error;

use crate::num::Scalar;

/// Hermiticity tolerance for preconditions on `herm_eigen` / `unitary_exp`.
const HERMITICITY_TOL: f64 = 1e-10;
/// Off-diagonal threshold at which the Jacobi sweep stops.
const JACOBI_OFF_DIAG_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not Hermitian: max |A - A^dag| entry = {0:e}")]
    NonHermitianInput(f64),
    #[error("Kronecker product dimension {0} exceeds the supported maximum of 4")]
    DimensionOverflow(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

/// Dense square complex matrix of dimension 2 or 4, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix<T: Scalar> {
    dim: usize,
    entries: Vec<Complex<T>>,
}

impl<T: Scalar> ComplexMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim == 2 || dim == 4, "only dimensions 2 and 4 are supported");
        Self {
            dim,
            entries: vec![Complex::new(T::zero(), T::zero()); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = Complex::new(T::one(), T::zero());
        }
        m
    }

    /// Builds from a row-major list of entries; length must equal `dim * dim`.
    pub fn from_entries(dim: usize, entries: Vec<Complex<T>>) -> Self {
        assert!(dim == 2 || dim == 4, "only dimensions 2 and 4 are supported");
        assert_eq!(entries.len(), dim * dim);
        Self { dim, entries }
    }

    /// Builds a 2x2 matrix from `f64` entry pairs `(re, im)`, row-major.
    pub fn from_rows2(rows: [[(f64, f64); 2]; 2]) -> Self {
        let mut m = Self::zeros(2);
        for i in 0..2 {
            for j in 0..2 {
                m[(i, j)] = Complex::new(T::real(rows[i][j].0), T::real(rows[i][j].1));
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[Complex<T>] {
        &self.entries
    }

    /// Outer product |v><w| of two column vectors of matching length.
    pub fn outer(v: &[Complex<T>], w: &[Complex<T>]) -> Self {
        assert_eq!(v.len(), w.len());
        let dim = v.len();
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = v[i] * w[j].conj();
            }
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                m[(i, j)] = self[(j, i)].conj();
            }
        }
        m
    }

    pub fn trace(&self) -> Complex<T> {
        (0..self.dim).map(|i| self[(i, i)]).fold(
            Complex::new(T::zero(), T::zero()),
            |acc, z| acc + z,
        )
    }

    pub fn scale(&self, factor: Complex<T>) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn scale_re(&self, factor: T) -> Self {
        self.scale(Complex::new(factor, T::zero()))
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut m = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self[(i, k)];
                if aik.norm_sqr() == T::zero() {
                    continue;
                }
                for j in 0..n {
                    m[(i, j)] = m[(i, j)] + aik * other[(k, j)];
                }
            }
        }
        m
    }

    /// A B A^dag, the conjugation workhorse for channels and unitaries.
    pub fn conjugate_with(&self, inner: &Self) -> Self {
        self.mul(inner).mul(&self.adjoint())
    }

    /// Largest entry magnitude of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.dim, other.dim);
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(T::zero(), T::max)
    }

    pub fn max_abs(&self) -> T {
        self.entries.iter().map(|z| z.norm()).fold(T::zero(), T::max)
    }

    /// Deviation from Hermiticity, max |A_ij - conj(A_ji)|.
    pub fn hermiticity_defect(&self) -> T {
        self.max_abs_diff(&self.adjoint())
    }

    /// Deviation from unitarity, max |(A A^dag - I)_ij|.
    pub fn unitarity_defect(&self) -> T {
        self.mul(&self.adjoint())
            .max_abs_diff(&Self::identity(self.dim))
    }
}

impl<T: Scalar> std::ops::Index<(usize, usize)> for ComplexMatrix<T> {
    type Output = Complex<T>;
    fn index(&self, (i, j): (usize, usize)) -> &Complex<T> {
        &self.entries[i * self.dim + j]
    }
}

impl<T: Scalar> std::ops::IndexMut<(usize, usize)> for ComplexMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<T> {
        let dim = self.dim;
        &mut self.entries[i * dim + j]
    }
}

// Fixed 2x2 operators used across the crate. Basis convention: |0> is the
// ground state of the battery Hamiltonian, |1> the excited state.

pub fn sigma_x<T: Scalar>() -> ComplexMatrix<T> {
    ComplexMatrix::from_rows2([[(0.0, 0.0), (1.0, 0.0)], [(1.0, 0.0), (0.0, 0.0)]])
}

pub fn sigma_y<T: Scalar>() -> ComplexMatrix<T> {
    ComplexMatrix::from_rows2([[(0.0, 0.0), (0.0, -1.0)], [(0.0, 1.0), (0.0, 0.0)]])
}

pub fn sigma_z<T: Scalar>() -> ComplexMatrix<T> {
    ComplexMatrix::from_rows2([[(1.0, 0.0), (0.0, 0.0)], [(0.0, 0.0), (-1.0, 0.0)]])
}

pub fn hadamard<T: Scalar>() -> ComplexMatrix<T> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix::from_rows2([[(h, 0.0), (h, 0.0)], [(h, 0.0), (-h, 0.0)]])
}

/// |0><1|: maps the excited state to the ground state (energy-lowering).
pub fn lowering<T: Scalar>() -> ComplexMatrix<T> {
    ComplexMatrix::from_rows2([[(0.0, 0.0), (1.0, 0.0)], [(0.0, 0.0), (0.0, 0.0)]])
}

/// |1><0|: maps the ground state to the excited state (energy-raising).
pub fn raising<T: Scalar>() -> ComplexMatrix<T> {
    ComplexMatrix::from_rows2([[(0.0, 0.0), (0.0, 0.0)], [(1.0, 0.0), (0.0, 0.0)]])
}

/// |b><b| for b in {0, 1}.
pub fn ket_projector<T: Scalar>(bit: u8) -> ComplexMatrix<T> {
    let mut m = ComplexMatrix::zeros(2);
    let i = bit as usize;
    m[(i, i)] = Complex::new(T::one(), T::zero());
    m
}

/// Eigendecomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen<T: Scalar> {
    /// Eigenvalues sorted ascending.
    pub eigenvalues: Vec<T>,
    /// Column i is the orthonormal eigenvector paired with `eigenvalues[i]`.
    pub eigenvectors: ComplexMatrix<T>,
}

impl<T: Scalar> HermitianEigen<T> {
    /// Eigenvector column `i` as an owned vector.
    pub fn column(&self, i: usize) -> Vec<Complex<T>> {
        (0..self.eigenvectors.dim())
            .map(|r| self.eigenvectors[(r, i)])
            .collect()
    }
}

/// Hermitian eigendecomposition by cyclic complex Jacobi rotations.
///
/// Deterministic for identical input: sweeps run in fixed (p, q) order, the
/// spectrum is sorted ascending, and each eigenvector's phase is fixed by
/// making its first non-negligible component real and positive.
pub fn herm_eigen<T: Scalar>(a: &ComplexMatrix<T>) -> Result<HermitianEigen<T>, LinalgError> {
    let defect = a.hermiticity_defect();
    if defect > T::real(HERMITICITY_TOL) {
        return Err(LinalgError::NonHermitianInput(defect.to_f64_lossy()));
    }
    let n = a.dim();
    // Symmetrize so the iteration works on an exactly Hermitian matrix.
    let mut w = a.add(&a.adjoint()).scale_re(T::real(0.5));
    let mut v = ComplexMatrix::identity(n);
    let off_tol = T::real(JACOBI_OFF_DIAG_TOL);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = (0..n)
            .flat_map(|p| (0..n).filter(move |q| *q != p).map(move |q| (p, q)))
            .map(|(p, q)| w[(p, q)].norm())
            .fold(T::zero(), T::max);
        if off <= off_tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = w[(p, q)];
                let mag = apq.norm();
                if mag <= off_tol {
                    continue;
                }
                // Complex Jacobi rotation R = [[c, -s*e^{i phi}],
                // [s*e^{-i phi}, c]] with phi the phase of apq, chosen so
                // that (R^dag W R)[p][q] = 0. The inner-angle root of
                // t^2 - 2*tau*t - 1 = 0 with the smaller magnitude keeps
                // rotations mild and the sweep stable.
                let phase = apq / Complex::new(mag, T::zero());
                let app = w[(p, p)].re;
                let aqq = w[(q, q)].re;
                let tau = (aqq - app) / (T::real(2.0) * mag);
                let t = if tau == T::zero() {
                    T::one()
                } else if tau > T::zero() {
                    -T::one() / (tau + (T::one() + tau * tau).sqrt())
                } else {
                    T::one() / (-tau + (T::one() + tau * tau).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                let cs = Complex::new(c, T::zero());
                let sp = phase * Complex::new(s, T::zero());

                // W <- R^dag W R, applied as a column then a row update;
                // V <- V R accumulates the eigenvectors.
                for r in 0..n {
                    let wp = w[(r, p)];
                    let wq = w[(r, q)];
                    w[(r, p)] = wp * cs + wq * sp.conj();
                    w[(r, q)] = wq * cs - wp * sp;
                }
                for col in 0..n {
                    let wp = w[(p, col)];
                    let wq = w[(q, col)];
                    w[(p, col)] = wp * cs + wq * sp;
                    w[(q, col)] = wq * cs - wp * sp.conj();
                }
                for r in 0..n {
                    let vp = v[(r, p)];
                    let vq = v[(r, q)];
                    v[(r, p)] = vp * cs + vq * sp.conj();
                    v[(r, q)] = vq * cs - vp * sp;
                }
            }
        }
    }

    // Sort ascending, carrying eigenvector columns along.
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<T> = (0..n).map(|i| w[(i, i)].re).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).expect("finite eigenvalues"));

    let mut vectors = ComplexMatrix::zeros(n);
    let mut eigenvalues = Vec::with_capacity(n);
    for (new_col, &old_col) in order.iter().enumerate() {
        eigenvalues.push(diag[old_col]);
        // Phase fix: first component with non-negligible magnitude made
        // real-positive, for reproducible goldens.
        let mut phase = Complex::new(T::one(), T::zero());
        for r in 0..n {
            let z = v[(r, old_col)];
            if z.norm() > T::real(1e-12) {
                phase = z.conj() / Complex::new(z.norm(), T::zero());
                break;
            }
        }
        for r in 0..n {
            vectors[(r, new_col)] = v[(r, old_col)] * phase;
        }
    }

    Ok(HermitianEigen {
        eigenvalues,
        eigenvectors: vectors,
    })
}

/// exp(-i H) for Hermitian H, via the spectral decomposition.
pub fn unitary_exp<T: Scalar>(h: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>, LinalgError> {
    let eig = herm_eigen(h)?;
    let n = h.dim();
    let mut u = ComplexMatrix::zeros(n);
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        let phase = Complex::new(lambda.cos(), -lambda.sin());
        let col = eig.column(i);
        let proj = ComplexMatrix::outer(&col, &col);
        u = u.add(&proj.scale(phase));
    }
    Ok(u)
}

/// Kronecker product, battery as the left factor throughout the crate.
pub fn kron<T: Scalar>(
    a: &ComplexMatrix<T>,
    b: &ComplexMatrix<T>,
) -> Result<ComplexMatrix<T>, LinalgError> {
    let dim = a.dim() * b.dim();
    if dim > 4 {
        return Err(LinalgError::DimensionOverflow(dim));
    }
    let (da, db) = (a.dim(), b.dim());
    let mut m = ComplexMatrix::zeros(dim);
    for i in 0..da {
        for j in 0..da {
            for k in 0..db {
                for l in 0..db {
                    m[(i * db + k, j * db + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    Ok(m)
}

/// Trace over the right (environment) factor of a 4x4 matrix.
pub fn partial_trace_env<T: Scalar>(
    r: &ComplexMatrix<T>,
) -> Result<ComplexMatrix<T>, LinalgError> {
    if r.dim() != 4 {
        return Err(LinalgError::DimensionMismatch(r.dim(), 4));
    }
    let mut m = ComplexMatrix::zeros(2);
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                m[(i, j)] = m[(i, j)] + r[(2 * i + k, 2 * j + k)];
            }
        }
    }
    Ok(m)
}

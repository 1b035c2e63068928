//! Battery Hamiltonian, energy, and ergotropy for a single qubit.
//!
//! The internal Hamiltonian is `H0 = (omega0/2)(I - sigma_z)`, so |0> is the
//! ground state with energy zero and |1> the excited state with energy
//! `omega0`. Ergotropy is computed by passivization: the descending-sorted
//! populations of the state are paired with ascending energies, and the
//! optimal extraction unitary maps each state eigenvector onto the matching
//! Hamiltonian eigenvector.

use num_complex::Complex;
use thiserror::Error;

use crate::linalg::{self, ComplexMatrix};
use crate::num::Scalar;
use crate::quantum::DensityMatrix;

const UNITARITY_TOL: f64 = 1e-10;
/// Population gap below which the state counts as maximally mixed.
const DEGENERACY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BatteryError {
    #[error("extraction operator is not unitary: defect {0:e}")]
    NonUnitaryInput(f64),
}

/// `H0 = (omega0/2)(I - sigma_z)`, energies {0, omega0}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryHamiltonian<T: Scalar> {
    omega0: T,
}

impl<T: Scalar> Default for BatteryHamiltonian<T> {
    fn default() -> Self {
        Self { omega0: T::one() }
    }
}

impl<T: Scalar> BatteryHamiltonian<T> {
    pub fn new(omega0: T) -> Self {
        assert!(omega0 > T::zero(), "omega0 must be positive");
        Self { omega0 }
    }

    pub fn omega0(&self) -> T {
        self.omega0
    }

    pub fn matrix(&self) -> ComplexMatrix<T> {
        let mut h = ComplexMatrix::zeros(2);
        h[(1, 1)] = Complex::new(self.omega0, T::zero());
        h
    }
}

/// Energy, ergotropy, passive energy, and the optimal extraction unitary.
#[derive(Debug, Clone)]
pub struct ErgotropyResult<T: Scalar> {
    pub energy: T,
    pub ergotropy: T,
    pub passive_energy: T,
    pub optimal_unitary: ComplexMatrix<T>,
}

/// Tr[rho H0].
pub fn energy<T: Scalar>(rho: &DensityMatrix<T>, h: &BatteryHamiltonian<T>) -> T {
    rho.mat().mul(&h.matrix()).trace().re
}

/// Maximal unitarily extractable work, with the unitary that attains it.
pub fn ergotropy<T: Scalar>(
    rho: &DensityMatrix<T>,
    h: &BatteryHamiltonian<T>,
) -> ErgotropyResult<T> {
    let e = energy(rho, h);
    let eig = linalg::herm_eigen(rho.mat()).expect("density matrix is Hermitian");
    // Ascending state populations; descending pairs with ascending energies
    // {0, omega0}, so the passive energy is omega0 times the smaller one.
    let low = eig.eigenvalues[0];
    let high = eig.eigenvalues[1];
    let passive_energy = h.omega0() * low;

    let optimal_unitary = if high - low <= T::real(DEGENERACY_TOL) {
        // Maximally mixed: every unitary is optimal, identity costs nothing.
        ComplexMatrix::identity(2)
    } else {
        // U = |e0><r0| + |e1><r1| with r0 the majority eigenvector.
        let majority = eig.column(1);
        let minority = eig.column(0);
        let e0 = [Complex::new(T::one(), T::zero()), Complex::new(T::zero(), T::zero())];
        let e1 = [Complex::new(T::zero(), T::zero()), Complex::new(T::one(), T::zero())];
        ComplexMatrix::outer(&e0, &majority).add(&ComplexMatrix::outer(&e1, &minority))
    };

    ErgotropyResult {
        energy: e,
        ergotropy: e - passive_energy,
        passive_energy,
        optimal_unitary,
    }
}

/// `E(rho) - E(U rho U^dag)`; negative when U charges instead of extracting.
pub fn extracted_work<T: Scalar>(
    rho: &DensityMatrix<T>,
    u: &ComplexMatrix<T>,
    h: &BatteryHamiltonian<T>,
) -> Result<T, BatteryError> {
    let defect = u.unitarity_defect();
    if defect > T::real(UNITARITY_TOL) {
        return Err(BatteryError::NonUnitaryInput(defect.to_f64_lossy()));
    }
    let rotated = DensityMatrix::from_valid(u.conjugate_with(rho.mat()));
    Ok(energy(rho, h) - energy(&rotated, h))
}

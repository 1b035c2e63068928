//! States, CPTP channels, and POVMs for the monitored collisional model.
//!
//! The noise constructors implement the device model used throughout:
//! amplitude damping with probability `P_AD = 1 - exp(-Tr/T1)`, dephasing
//! with `P_D = 1 - exp(-Tr/T2)`, and a readout-confusion z-basis POVM with
//! parameters `P_01`, `P_10`. The x-basis measurement is obtained by
//! conjugating with a Hadamard.

use num_complex::Complex;
use thiserror::Error;

use crate::linalg::{self, ComplexMatrix, LinalgError};
use crate::num::Scalar;

/// Trace may drift by this much before construction refuses to renormalize.
const TRACE_TOL: f64 = 1e-9;
const HERMITICITY_TOL: f64 = 1e-10;
/// Smallest admissible eigenvalue of a state.
const PSD_TOL: f64 = -1e-9;
/// Kraus completeness and POVM completeness tolerance.
const COMPLETENESS_TOL: f64 = 1e-12;
/// Probabilities this close to [0, 1] are clipped onto it.
const PROB_CLIP_TOL: f64 = 1e-12;
/// Branches below this probability cannot be conditioned on.
const ZERO_BRANCH_TOL: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("invalid Kraus channel: completeness defect {0:e}")]
    IncompleteKrausSet(f64),
    #[error("invalid POVM effect: {0}")]
    InvalidEffect(String),
    #[error("branch probability {0:e} is indistinguishable from zero")]
    ZeroProbabilityBranch(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Clips a probability onto [0, 1] when it is within `PROB_CLIP_TOL` of the
/// boundary; values further out are returned unchanged so real bugs surface.
pub fn clip_probability<T: Scalar>(p: T) -> T {
    let tol = T::real(PROB_CLIP_TOL);
    if p < T::zero() && p > -tol {
        T::zero()
    } else if p > T::one() && p < T::one() + tol {
        T::one()
    } else {
        p
    }
}

fn check_probability<T: Scalar>(name: &'static str, p: T) -> Result<T, QuantumError> {
    let p = clip_probability(p);
    if p < T::zero() || p > T::one() {
        return Err(QuantumError::OutOfRange {
            name,
            value: p.to_f64_lossy(),
        });
    }
    Ok(p)
}

/// Trace-one Hermitian PSD matrix: the battery state (dim 2) or the joint
/// battery + ancilla state (dim 4).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T: Scalar> {
    mat: ComplexMatrix<T>,
}

impl<T: Scalar> DensityMatrix<T> {
    /// Validates Hermiticity, positivity, and the trace, renormalizing the
    /// latter when it is within `1e-9` of one.
    pub fn new(mat: ComplexMatrix<T>) -> Result<Self, QuantumError> {
        let herm = mat.hermiticity_defect();
        if herm > T::real(HERMITICITY_TOL) {
            return Err(QuantumError::InvalidState(format!(
                "hermiticity defect {:e}",
                herm.to_f64_lossy()
            )));
        }
        let tr = mat.trace();
        let defect = (tr - Complex::new(T::one(), T::zero())).norm();
        if defect > T::real(TRACE_TOL) {
            return Err(QuantumError::InvalidState(format!(
                "trace defect {:e}",
                defect.to_f64_lossy()
            )));
        }
        let mat = mat.scale(Complex::new(T::one(), T::zero()) / tr);
        let eig = linalg::herm_eigen(&mat)?;
        let min = eig.eigenvalues[0];
        if min < T::real(PSD_TOL) {
            return Err(QuantumError::InvalidState(format!(
                "negative eigenvalue {:e}",
                min.to_f64_lossy()
            )));
        }
        Ok(Self { mat })
    }

    /// Pure state |psi><psi| from an (unnormalized) amplitude vector.
    pub fn pure(amplitudes: &[Complex<T>]) -> Self {
        let norm_sqr: T = amplitudes.iter().map(|z| z.norm_sqr()).sum();
        let scale = Complex::new(T::one() / norm_sqr.sqrt(), T::zero());
        let normalized: Vec<Complex<T>> = amplitudes.iter().map(|z| z * scale).collect();
        Self {
            mat: ComplexMatrix::outer(&normalized, &normalized),
        }
    }

    /// The battery ground state |0><0|.
    pub fn ground() -> Self {
        Self {
            mat: linalg::ket_projector(0),
        }
    }

    /// The excited state |1><1|.
    pub fn excited() -> Self {
        Self {
            mat: linalg::ket_projector(1),
        }
    }

    pub fn mat(&self) -> &ComplexMatrix<T> {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    pub fn purity(&self) -> T {
        self.mat.mul(&self.mat).trace().re
    }

    /// Trusted constructor for states produced by internal CPTP/conditioning
    /// paths, where validity holds up to rounding by construction.
    pub(crate) fn from_valid(mat: ComplexMatrix<T>) -> Self {
        let tr = mat.trace();
        Self {
            mat: mat.scale(Complex::new(T::one(), T::zero()) / tr),
        }
    }
}

/// CPTP map as a list of Kraus operators of the same dimension.
#[derive(Debug, Clone)]
pub struct KrausChannel<T: Scalar> {
    kraus: Vec<ComplexMatrix<T>>,
}

impl<T: Scalar> KrausChannel<T> {
    pub fn new(kraus: Vec<ComplexMatrix<T>>) -> Result<Self, QuantumError> {
        assert!(!kraus.is_empty());
        let dim = kraus[0].dim();
        let mut sum = ComplexMatrix::zeros(dim);
        for k in &kraus {
            if k.dim() != dim {
                return Err(QuantumError::DimensionMismatch(k.dim(), dim));
            }
            sum = sum.add(&k.adjoint().mul(k));
        }
        let defect = sum.max_abs_diff(&ComplexMatrix::identity(dim));
        if defect > T::real(COMPLETENESS_TOL) {
            return Err(QuantumError::IncompleteKrausSet(defect.to_f64_lossy()));
        }
        Ok(Self { kraus })
    }

    pub fn kraus(&self) -> &[ComplexMatrix<T>] {
        &self.kraus
    }

    pub fn dim(&self) -> usize {
        self.kraus[0].dim()
    }

    /// Lifts a 2-dim battery channel to the 4-dim joint space, acting
    /// trivially on the environment factor.
    pub fn on_battery_factor(&self) -> Result<KrausChannel<T>, QuantumError> {
        let id = ComplexMatrix::identity(2);
        let kraus = self
            .kraus
            .iter()
            .map(|k| linalg::kron(k, &id))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(KrausChannel { kraus })
    }
}

/// rho -> sum_l K_l rho K_l^dag.
pub fn apply_channel<T: Scalar>(
    rho: &DensityMatrix<T>,
    ch: &KrausChannel<T>,
) -> Result<DensityMatrix<T>, QuantumError> {
    if rho.dim() != ch.dim() {
        return Err(QuantumError::DimensionMismatch(rho.dim(), ch.dim()));
    }
    let mut out = ComplexMatrix::zeros(rho.dim());
    for k in ch.kraus() {
        out = out.add(&k.conjugate_with(rho.mat()));
    }
    Ok(DensityMatrix::from_valid(out))
}

/// Amplitude damping channel with decay probability `p_ad`.
pub fn amplitude_damping<T: Scalar>(p_ad: T) -> Result<KrausChannel<T>, QuantumError> {
    let p = check_probability("p_ad", p_ad)?;
    let mut k0 = ComplexMatrix::identity(2);
    k0[(1, 1)] = Complex::new((T::one() - p).sqrt(), T::zero());
    let k1 = linalg::lowering().scale_re(p.sqrt());
    KrausChannel::new(vec![k0, k1])
}

/// Dephasing channel {sqrt(1 - p_d) I, sqrt(p_d) sigma_z}.
pub fn dephasing<T: Scalar>(p_d: T) -> Result<KrausChannel<T>, QuantumError> {
    let p = check_probability("p_d", p_d)?;
    let n0 = ComplexMatrix::identity(2).scale_re((T::one() - p).sqrt());
    let n1 = linalg::sigma_z().scale_re(p.sqrt());
    KrausChannel::new(vec![n0, n1])
}

/// Hermitian PSD effect with 0 <= eigenvalues <= 1, tagged with its outcome.
#[derive(Debug, Clone)]
pub struct PovmEffect<T: Scalar> {
    mat: ComplexMatrix<T>,
    label: u8,
}

impl<T: Scalar> PovmEffect<T> {
    pub fn new(mat: ComplexMatrix<T>, label: u8) -> Result<Self, QuantumError> {
        let eig = linalg::herm_eigen(&mat).map_err(|e| match e {
            LinalgError::NonHermitianInput(d) => {
                QuantumError::InvalidEffect(format!("hermiticity defect {d:e}"))
            }
            other => QuantumError::Linalg(other),
        })?;
        let tol = T::real(COMPLETENESS_TOL);
        let min = eig.eigenvalues[0];
        let max = *eig.eigenvalues.last().expect("non-empty spectrum");
        if min < -tol || max > T::one() + tol {
            return Err(QuantumError::InvalidEffect(format!(
                "eigenvalues [{}, {}] outside [0, 1]",
                min.to_f64_lossy(),
                max.to_f64_lossy()
            )));
        }
        Ok(Self { mat, label })
    }

    pub fn mat(&self) -> &ComplexMatrix<T> {
        &self.mat
    }

    pub fn label(&self) -> u8 {
        self.label
    }
}

fn check_povm_pair<T: Scalar>(
    e0: PovmEffect<T>,
    e1: PovmEffect<T>,
) -> Result<(PovmEffect<T>, PovmEffect<T>), QuantumError> {
    let sum = e0.mat().add(e1.mat());
    let defect = sum.max_abs_diff(&ComplexMatrix::identity(e0.mat().dim()));
    if defect > T::real(COMPLETENESS_TOL) {
        return Err(QuantumError::InvalidEffect(format!(
            "pair completeness defect {:e}",
            defect.to_f64_lossy()
        )));
    }
    Ok((e0, e1))
}

/// Readout-confused z-basis POVM:
/// pi0 = (1 - p10)|0><0| + p01|1><1|, pi1 = p10|0><0| + (1 - p01)|1><1|.
pub fn noisy_z_povm<T: Scalar>(
    p01: T,
    p10: T,
) -> Result<(PovmEffect<T>, PovmEffect<T>), QuantumError> {
    let p01 = check_probability("p01", p01)?;
    let p10 = check_probability("p10", p10)?;
    let mut m0 = ComplexMatrix::zeros(2);
    m0[(0, 0)] = Complex::new(T::one() - p10, T::zero());
    m0[(1, 1)] = Complex::new(p01, T::zero());
    let mut m1 = ComplexMatrix::zeros(2);
    m1[(0, 0)] = Complex::new(p10, T::zero());
    m1[(1, 1)] = Complex::new(T::one() - p01, T::zero());
    check_povm_pair(PovmEffect::new(m0, 0)?, PovmEffect::new(m1, 1)?)
}

/// x-basis POVM: conjugation of a z-basis pair by the Hadamard.
pub fn x_basis_povm<T: Scalar>(
    z_effects: &(PovmEffect<T>, PovmEffect<T>),
) -> Result<(PovmEffect<T>, PovmEffect<T>), QuantumError> {
    let had = linalg::hadamard::<T>();
    let m0 = had.conjugate_with(z_effects.0.mat());
    let m1 = had.conjugate_with(z_effects.1.mat());
    check_povm_pair(
        PovmEffect::new(m0, z_effects.0.label())?,
        PovmEffect::new(m1, z_effects.1.label())?,
    )
}

/// Conditions a joint battery + ancilla state on an environment outcome.
///
/// Returns the outcome probability `tr[rho (I (x) Pi)]` and the conditional
/// battery state `Tr_E[rho (I (x) Pi)] / p`.
pub fn measure_branch<T: Scalar>(
    joint: &DensityMatrix<T>,
    effect: &PovmEffect<T>,
) -> Result<(T, DensityMatrix<T>), QuantumError> {
    if joint.dim() != 4 {
        return Err(QuantumError::DimensionMismatch(joint.dim(), 4));
    }
    if effect.mat().dim() != 2 {
        return Err(QuantumError::DimensionMismatch(effect.mat().dim(), 2));
    }
    let lifted = linalg::kron(&ComplexMatrix::identity(2), effect.mat())?;
    let weighted = joint.mat().mul(&lifted);
    let p = clip_probability(weighted.trace().re);
    if p <= T::real(ZERO_BRANCH_TOL) {
        return Err(QuantumError::ZeroProbabilityBranch(p.to_f64_lossy()));
    }
    let reduced = linalg::partial_trace_env(&weighted)?;
    // Tr_E[rho (1 (x) Pi)] is Hermitian up to rounding; symmetrize before
    // dividing out the probability.
    let cond = reduced
        .add(&reduced.adjoint())
        .scale_re(T::real(0.5) / p);
    Ok((p, DensityMatrix::from_valid(cond)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hadamard, ket_projector, kron, ComplexMatrix};

    type M = ComplexMatrix<f64>;
    type C = Complex<f64>;

    fn plus_state() -> DensityMatrix<f64> {
        DensityMatrix::pure(&[C::new(1.0, 0.0), C::new(1.0, 0.0)])
    }

    #[test]
    fn identity_channel_preserves_state() {
        let ch = KrausChannel::new(vec![M::identity(2)]).unwrap();
        let rho = plus_state();
        let out = apply_channel(&rho, &ch).unwrap();
        assert!(out.mat().max_abs_diff(rho.mat()) < 1e-15);
    }

    #[test]
    fn full_damping_decays_excited_state() {
        let ch = amplitude_damping(1.0).unwrap();
        let out = apply_channel(&DensityMatrix::excited(), &ch).unwrap();
        assert!(out.mat().max_abs_diff(DensityMatrix::ground().mat()) < 1e-15);
    }

    #[test]
    fn weak_damping_on_plus_state() {
        // direct Kraus algebra: off-diagonals scale by sqrt(1-p), excited
        // population by (1-p); p is the Table row-1 amplitude-damping value
        let p = 0.0042;
        let out = apply_channel(&plus_state(), &amplitude_damping(p).unwrap()).unwrap();
        assert!((out.mat()[(0, 1)].re - 0.5 * (1.0 - p).sqrt()).abs() < 1e-15);
        assert!((out.mat()[(1, 0)].re - 0.5 * (1.0 - p).sqrt()).abs() < 1e-15);
        assert!((out.mat()[(1, 1)].re - 0.5 * (1.0 - p)).abs() < 1e-15);
        assert!((out.mat()[(0, 0)].re - (0.5 + 0.5 * p)).abs() < 1e-15);
    }

    #[test]
    fn damping_probability_from_timing() {
        // P_AD = 1 - exp(-Tr/T1) for the two timing rows quoted in tests
        let p1 = 1.0 - (-1440e-9_f64 / 342.13e-6).exp();
        assert!((p1 - 0.0042).abs() < 5e-5);
        let p2 = 1.0 - (-1300e-9_f64 / 303.33e-6).exp();
        assert!((p2 - 0.0042).abs() < 1e-4);
    }

    #[test]
    fn dephasing_probability_from_timing() {
        let p1 = 1.0 - (-1440e-9_f64 / 326.55e-6).exp();
        assert!((p1 - 0.0044).abs() < 5e-5);
        let p2 = 1.0 - (-1440e-9_f64 / 202.09e-6).exp();
        assert!((p2 - 0.0071).abs() < 5e-5);
    }

    #[test]
    fn zero_dephasing_is_identity_channel() {
        let ch = dephasing(0.0).unwrap();
        let rho = plus_state();
        let out = apply_channel(&rho, &ch).unwrap();
        assert!(out.mat().max_abs_diff(rho.mat()) < 1e-15);
    }

    #[test]
    fn channel_parameters_out_of_range() {
        assert!(matches!(
            amplitude_damping(1.5),
            Err(QuantumError::OutOfRange { name: "p_ad", .. })
        ));
        assert!(matches!(
            dephasing(-0.2),
            Err(QuantumError::OutOfRange { name: "p_d", .. })
        ));
    }

    #[test]
    fn ideal_z_povm_is_projective() {
        let (e0, e1): (PovmEffect<f64>, PovmEffect<f64>) = noisy_z_povm(0.0, 0.0).unwrap();
        assert!(e0.mat().max_abs_diff(&ket_projector(0)) < 1e-15);
        assert!(e1.mat().max_abs_diff(&ket_projector(1)) < 1e-15);
    }

    #[test]
    fn noisy_z_povm_table_row() {
        let (e0, _): (PovmEffect<f64>, PovmEffect<f64>) = noisy_z_povm(0.0061, 0.0070).unwrap();
        assert!((e0.mat()[(0, 0)].re - 0.9930).abs() < 1e-12);
        assert!((e0.mat()[(1, 1)].re - 0.0061).abs() < 1e-12);
    }

    #[test]
    fn fully_swapped_labels() {
        let (e0, e1): (PovmEffect<f64>, PovmEffect<f64>) = noisy_z_povm(1.0, 1.0).unwrap();
        assert!(e0.mat().max_abs_diff(&ket_projector(1)) < 1e-15);
        assert!(e1.mat().max_abs_diff(&ket_projector(0)) < 1e-15);
    }

    #[test]
    fn x_basis_projectors() {
        let pair: (PovmEffect<f64>, PovmEffect<f64>) = noisy_z_povm(0.0, 0.0).unwrap();
        let (x0, x1) = x_basis_povm(&pair).unwrap();
        let plus = plus_state();
        let minus = DensityMatrix::pure(&[C::new(1.0, 0.0), C::new(-1.0, 0.0)]);
        assert!(x0.mat().max_abs_diff(plus.mat()) < 1e-12);
        assert!(x1.mat().max_abs_diff(minus.mat()) < 1e-12);
    }

    #[test]
    fn x_basis_preserves_spectrum_and_completeness() {
        let pair: (PovmEffect<f64>, PovmEffect<f64>) = noisy_z_povm(0.0061, 0.0070).unwrap();
        let (x0, x1) = x_basis_povm(&pair).unwrap();
        let eig = crate::linalg::herm_eigen(x0.mat()).unwrap();
        assert!((eig.eigenvalues[0] - 0.0061).abs() < 1e-12);
        assert!((eig.eigenvalues[1] - 0.9930).abs() < 1e-12);
        let sum = x0.mat().add(x1.mat());
        assert!(sum.max_abs_diff(&M::identity(2)) < 1e-12);
    }

    #[test]
    fn branch_on_product_state() {
        let joint: DensityMatrix<f64> = DensityMatrix::new(
            kron(DensityMatrix::ground().mat(), DensityMatrix::ground().mat()).unwrap(),
        )
        .unwrap();
        let (e0, _): (PovmEffect<f64>, PovmEffect<f64>) = noisy_z_povm(0.0, 0.0).unwrap();
        let (p, cond) = measure_branch(&joint, &e0).unwrap();
        assert!((p - 1.0).abs() < 1e-15);
        assert!(cond.mat().max_abs_diff(DensityMatrix::ground().mat()) < 1e-15);
    }

    #[test]
    fn branch_on_x_effect_splits_evenly() {
        let joint: DensityMatrix<f64> = DensityMatrix::new(
            kron(DensityMatrix::ground().mat(), DensityMatrix::ground().mat()).unwrap(),
        )
        .unwrap();
        let x0 = PovmEffect::new(
            hadamard::<f64>().conjugate_with(&ket_projector(0)),
            0,
        )
        .unwrap();
        let (p, cond) = measure_branch(&joint, &x0).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        assert!(cond.mat().max_abs_diff(DensityMatrix::ground().mat()) < 1e-14);
    }

    #[test]
    fn zero_branch_is_an_error() {
        let joint: DensityMatrix<f64> = DensityMatrix::new(
            kron(DensityMatrix::ground().mat(), DensityMatrix::ground().mat()).unwrap(),
        )
        .unwrap();
        let (_, e1): (PovmEffect<f64>, PovmEffect<f64>) = noisy_z_povm(0.0, 0.0).unwrap();
        assert!(matches!(
            measure_branch(&joint, &e1),
            Err(QuantumError::ZeroProbabilityBranch(_))
        ));
    }

    #[test]
    fn density_matrix_renormalizes_small_drift() {
        let m = ket_projector::<f64>(0).scale_re(1.0 + 5e-10);
        let rho = DensityMatrix::new(m).unwrap();
        assert!((rho.mat().trace().re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn density_matrix_rejects_large_drift() {
        let m = ket_projector::<f64>(0).scale_re(1.01);
        assert!(DensityMatrix::new(m).is_err());
    }

    #[test]
    fn incomplete_kraus_set_rejected() {
        let k = vec![M::identity(2).scale_re(0.5)];
        assert!(matches!(
            KrausChannel::new(k),
            Err(QuantumError::IncompleteKrausSet(_))
        ));
    }
}

//! Randomized invariants over states, channels, and the trajectory tree.

use proptest::prelude::*;

use qbattery::battery::{ergotropy, BatteryHamiltonian};
use qbattery::collision::{
    daemonic_ergotropy, enumerate_trajectories, evolve_uncond, ModelParams, NoiseParams,
};
use qbattery::linalg::{kron, partial_trace_env, ComplexMatrix};
use qbattery::quantum::{
    amplitude_damping, apply_channel, dephasing, noisy_z_povm, DensityMatrix,
};

/// Arbitrary qubit density matrix from Bloch-ball coordinates.
fn density(r: f64, theta: f64, phi: f64) -> DensityMatrix<f64> {
    let (x, y, z) = (
        r * theta.sin() * phi.cos(),
        r * theta.sin() * phi.sin(),
        r * theta.cos(),
    );
    let m = ComplexMatrix::from_rows2([
        [(0.5 * (1.0 + z), 0.0), (0.5 * x, -0.5 * y)],
        [(0.5 * x, 0.5 * y), (0.5 * (1.0 - z), 0.0)],
    ]);
    DensityMatrix::new(m).unwrap()
}

fn bloch() -> impl Strategy<Value = DensityMatrix<f64>> {
    (0.0..1.0f64, 0.0..std::f64::consts::PI, 0.0..std::f64::consts::TAU)
        .prop_map(|(r, t, p)| density(r, t, p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ergotropy_bounded_by_energy(rho in bloch(), omega0 in 0.1..3.0f64) {
        let h = BatteryHamiltonian::new(omega0);
        let result = ergotropy(&rho, &h);
        prop_assert!(result.ergotropy >= -1e-12);
        prop_assert!(result.ergotropy <= result.energy + 1e-12);
        prop_assert!((result.energy - result.ergotropy - result.passive_energy).abs() < 1e-10);
        prop_assert!(result.optimal_unitary.unitarity_defect() < 1e-10);
    }

    #[test]
    fn ergotropy_is_convex(a in bloch(), b in bloch(), w in 0.0..1.0f64) {
        let h = BatteryHamiltonian::default();
        let mixed = DensityMatrix::new(
            a.mat().scale_re(w).add(&b.mat().scale_re(1.0 - w)),
        ).unwrap();
        let lhs = ergotropy(&mixed, &h).ergotropy;
        let rhs = w * ergotropy(&a, &h).ergotropy + (1.0 - w) * ergotropy(&b, &h).ergotropy;
        prop_assert!(lhs <= rhs + 1e-10);
    }

    #[test]
    fn channels_preserve_state_validity(rho in bloch(), p in 0.0..1.0f64, q in 0.0..1.0f64) {
        let joint = DensityMatrix::new(
            kron(rho.mat(), DensityMatrix::<f64>::ground().mat()).unwrap()
        ).unwrap();
        let damp = amplitude_damping(p).unwrap().on_battery_factor().unwrap();
        let deph = dephasing(q).unwrap().on_battery_factor().unwrap();
        let out = apply_channel(&apply_channel(&joint, &damp).unwrap(), &deph).unwrap();
        let reduced = partial_trace_env(out.mat()).unwrap();
        prop_assert!((reduced.trace().re - 1.0).abs() < 1e-12);
        prop_assert!(DensityMatrix::new(reduced).is_ok());
    }

    #[test]
    fn noisy_povm_probabilities_sum_to_one(rho in bloch(), p01 in 0.0..0.1f64, p10 in 0.0..0.1f64) {
        let (e0, e1) = noisy_z_povm(p01, p10).unwrap();
        let p0 = rho.mat().mul(e0.mat()).trace().re;
        let p1 = rho.mat().mul(e1.mat()).trace().re;
        prop_assert!((p0 + p1 - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&p0));
    }

    #[test]
    fn tree_probabilities_normalize(
        alpha in 0.1..2.0f64,
        kappa in 0.1..2.0f64,
        steps in 1..7u32,
        p_ad in 0.0..0.02f64,
        p_d in 0.0..0.02f64,
    ) {
        let model: ModelParams<f64> = ModelParams::new(alpha, kappa, steps);
        let noise = NoiseParams::direct(p_ad, p_d, 0.006, 0.007);
        let trajs = enumerate_trajectories(&model, &noise).unwrap();
        let total: f64 = trajs.iter().map(|t| t.prob).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);

        // demon never loses: conditional info can only help
        let h = model.hamiltonian();
        let rho = &evolve_uncond(&model, &noise).unwrap()[steps as usize];
        prop_assert!(daemonic_ergotropy(&trajs, &h) >= ergotropy(rho, &h).ergotropy - 1e-10);
    }
}

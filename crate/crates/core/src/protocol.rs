//! Feedback-table construction and the shot-based virtual experiment.
//!
//! `build_feedback_table` precomputes the 2^n per-outcome extraction
//! unitaries by enumerating every trajectory under a chosen model (ideal or
//! noisy). `run_shots` then emulates the hardware procedure: repeated
//! collisions, mid-circuit ancilla measurement with exact reset, the stored
//! conditional unitary, and a final z-basis energy measurement; the
//! unconditional energy term is estimated by a separate sampling experiment,
//! mirroring the two-term split of the daemonic-work estimator.
//!
//! All sampling draws from per-shot ChaCha streams derived from (seed,
//! purpose, step, shot index), so runs are reproducible bit for bit and
//! parallel shot execution is order-independent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::battery;
use crate::collision::{
    self, collision_unitary, CollisionError, ModelParams, NoiseParams,
};
use crate::linalg::ComplexMatrix;
use crate::num::Scalar;
use crate::quantum::{self, DensityMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("feedback table built for {table_steps} steps, device model has {model_steps}")]
    TableModelMismatch {
        table_steps: u32,
        model_steps: u32,
    },
    #[error("shots must be at least 1")]
    NoShots,
    #[error(transparent)]
    Collision(#[from] CollisionError),
}

/// Which device model a feedback table was optimized for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelTag {
    Ideal,
    Noisy,
}

impl std::fmt::Display for ModelTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelTag::Ideal => write!(f, "ideal"),
            ModelTag::Noisy => write!(f, "noisy"),
        }
    }
}

/// 2^n extraction unitaries indexed by the outcome bitstring (a_1 = MSB).
#[derive(Debug, Clone)]
pub struct FeedbackTable<T: Scalar> {
    steps: u32,
    model_tag: ModelTag,
    entries: Vec<ComplexMatrix<T>>,
}

impl<T: Scalar> FeedbackTable<T> {
    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn model_tag(&self) -> ModelTag {
        self.model_tag
    }

    pub fn entry(&self, outcomes: u32) -> Option<&ComplexMatrix<T>> {
        self.entries.get(outcomes as usize)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Identity unitaries for every outcome; extracts nothing by design.
    pub fn identity(steps: u32) -> Self {
        Self {
            steps,
            model_tag: ModelTag::Ideal,
            entries: vec![ComplexMatrix::identity(2); 1usize << steps],
        }
    }
}

/// Builds the per-outcome optimal extraction unitaries for the given model.
///
/// With `noise = None` the table is the ideal-model table; with noise it is
/// the noisy-optimized one. Dead branches get the identity.
pub fn build_feedback_table<T: Scalar>(
    model: &ModelParams<T>,
    noise: Option<&NoiseParams<T>>,
) -> Result<FeedbackTable<T>, ProtocolError> {
    let off = NoiseParams::off();
    let (effective, tag) = match noise {
        Some(n) if n.enabled => (*n, ModelTag::Noisy),
        _ => (off, ModelTag::Ideal),
    };
    let h = model.hamiltonian();
    let trajs = collision::enumerate_trajectories(model, &effective)?;
    let entries = trajs
        .iter()
        .map(|node| {
            if node.prob > T::zero() {
                battery::ergotropy(&node.state, &h).optimal_unitary
            } else {
                ComplexMatrix::identity(2)
            }
        })
        .collect();
    Ok(FeedbackTable {
        steps: model.steps,
        model_tag: tag,
        entries,
    })
}

/// Statistics of one shot-sampled experiment at a fixed step count.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotRecord<T: Scalar> {
    pub step: u32,
    pub shots: u64,
    pub mean_extracted_work: T,
    /// Combined standard error of the two-experiment work estimator.
    pub std_error: T,
    pub uncond_energy_est: T,
    pub uncond_energy_stderr: T,
}

/// Per-step shot records for steps 0..=n, plus the seed that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotResult<T: Scalar> {
    pub records: Vec<ShotRecord<T>>,
    pub seed: u64,
}

/// Readout-calibration estimates from the two preparation circuits.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult<T: Scalar> {
    pub p01_est: T,
    pub p10_est: T,
    pub shots: u64,
}

// Stream-id layout for the ChaCha substreams: purpose tag in the top byte,
// step count in the next two, shot index below.
const PURPOSE_TRAJECTORY: u64 = 1;
const PURPOSE_UNCOND: u64 = 2;
const PURPOSE_CALIB_P10: u64 = 3;
const PURPOSE_CALIB_P01: u64 = 4;

fn stream_rng(seed: u64, purpose: u64, step: u32, shot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 56) | (u64::from(step) << 40) | shot);
    rng
}

fn bernoulli<T: Scalar>(rng: &mut ChaCha8Rng, p: T) -> bool {
    rng.gen::<f64>() < quantum::clip_probability(p).to_f64_lossy()
}

/// Mean and standard error (sample std / sqrt(N)) of Bernoulli samples
/// scaled by `scale`.
fn binomial_stats<T: Scalar>(successes: u64, shots: u64, scale: T) -> (T, T) {
    let n = T::from_u64(shots).expect("shot count fits scalar");
    let p_hat = T::from_u64(successes).expect("count fits scalar") / n;
    let mean = scale * p_hat;
    let var = if shots > 1 {
        p_hat * (T::one() - p_hat) * n / (n - T::one())
    } else {
        T::zero()
    };
    let stderr = scale * (var / n).sqrt();
    (mean, stderr)
}

/// Samples the unconditional-energy arm of the estimator: binomial sampling
/// of the excited population of each `rho_k` from the exact unconditional
/// evolution. Returns (mean, stderr) for steps 0..=n.
pub fn estimate_uncond_energy<T: Scalar>(
    device_model: &ModelParams<T>,
    device_noise: &NoiseParams<T>,
    shots: u64,
    seed: u64,
) -> Result<Vec<(T, T)>, ProtocolError> {
    if shots == 0 {
        return Err(ProtocolError::NoShots);
    }
    let states = collision::evolve_uncond(device_model, device_noise)?;
    let mut out = Vec::with_capacity(states.len());
    for (step, rho) in states.iter().enumerate() {
        let p_excited = quantum::clip_probability(rho.mat()[(1, 1)].re);
        let successes = (0..shots)
            .into_par_iter()
            .map(|shot| {
                let mut rng = stream_rng(seed, PURPOSE_UNCOND, step as u32, shot);
                u64::from(bernoulli(&mut rng, p_excited))
            })
            .sum();
        out.push(binomial_stats(successes, shots, device_model.omega0));
    }
    Ok(out)
}

/// One trajectory shot: collide, measure the ancilla, reset, repeat; then
/// apply the stored conditional unitary and sample the final z-basis energy.
/// Returns the sampled energy (0 or omega0).
fn single_shot<T: Scalar>(
    unitary: &ComplexMatrix<T>,
    povm: &(quantum::PovmEffect<T>, quantum::PovmEffect<T>),
    device_noise: &NoiseParams<T>,
    table: &FeedbackTable<T>,
    omega0: T,
    rng: &mut ChaCha8Rng,
) -> T {
    let mut rho = DensityMatrix::ground();
    let mut outcomes: u32 = 0;
    for _ in 0..table.steps() {
        let joint = collided_joint_for_shot(&rho, unitary, device_noise);
        let (p0, cond0) = branch_or_dead(&joint, &povm.0);
        let bit = if bernoulli(rng, p0) { 0u32 } else { 1u32 };
        rho = if bit == 0 {
            cond0
        } else {
            branch_or_dead(&joint, &povm.1).1
        };
        outcomes = (outcomes << 1) | bit;
    }
    let extraction = table.entry(outcomes).expect("table covers 2^n outcomes");
    let extracted = DensityMatrix::from_valid(extraction.conjugate_with(rho.mat()));
    let p_excited = quantum::clip_probability(extracted.mat()[(1, 1)].re);
    if bernoulli(rng, p_excited) {
        omega0
    } else {
        T::zero()
    }
}

fn collided_joint_for_shot<T: Scalar>(
    rho: &DensityMatrix<T>,
    unitary: &ComplexMatrix<T>,
    noise: &NoiseParams<T>,
) -> DensityMatrix<T> {
    // same per-step map as the exact engine; errors cannot occur for the
    // fixed dims used here
    let model_err = "collision step on valid 2x2 state cannot fail";
    let joint = crate::linalg::kron(rho.mat(), DensityMatrix::ground().mat()).expect(model_err);
    let mut joint = DensityMatrix::from_valid(unitary.conjugate_with(&joint));
    if noise.enabled {
        let deph = quantum::dephasing(noise.p_d)
            .expect(model_err)
            .on_battery_factor()
            .expect(model_err);
        let damp = quantum::amplitude_damping(noise.p_ad)
            .expect(model_err)
            .on_battery_factor()
            .expect(model_err);
        joint = quantum::apply_channel(&joint, &deph).expect(model_err);
        joint = quantum::apply_channel(&joint, &damp).expect(model_err);
    }
    joint
}

fn branch_or_dead<T: Scalar>(
    joint: &DensityMatrix<T>,
    effect: &quantum::PovmEffect<T>,
) -> (T, DensityMatrix<T>) {
    match quantum::measure_branch(joint, effect) {
        Ok(pair) => pair,
        Err(_) => (T::zero(), DensityMatrix::ground()),
    }
}

/// Shot-sampled daemonic-work estimate for the n-step protocol the table was
/// built for. Deterministic for a fixed seed.
pub fn run_shots<T: Scalar>(
    device_model: &ModelParams<T>,
    device_noise: &NoiseParams<T>,
    table: &FeedbackTable<T>,
    shots: u64,
    seed: u64,
) -> Result<ShotRecord<T>, ProtocolError> {
    if table.steps() != device_model.steps {
        return Err(ProtocolError::TableModelMismatch {
            table_steps: table.steps(),
            model_steps: device_model.steps,
        });
    }
    if shots == 0 {
        return Err(ProtocolError::NoShots);
    }
    let n = device_model.steps;
    let unitary = collision_unitary(device_model.alpha, device_model.kappa);
    let povm = collision::measurement_povm(device_model, device_noise)?;
    let omega0 = device_model.omega0;

    // Final-energy arm: sampled trajectories + conditional unitary.
    let samples: Vec<T> = (0..shots)
        .into_par_iter()
        .map(|shot| {
            let mut rng = stream_rng(seed, PURPOSE_TRAJECTORY, n, shot);
            single_shot(&unitary, &povm, device_noise, table, omega0, &mut rng)
        })
        .collect();
    // Fixed-order reduction keeps the result independent of thread timing.
    let count = T::from_u64(shots).expect("shot count fits scalar");
    let mean_final: T = samples.iter().copied().sum::<T>() / count;
    let var_final: T = if shots > 1 {
        samples
            .iter()
            .map(|&x| (x - mean_final) * (x - mean_final))
            .sum::<T>()
            / (count - T::one())
    } else {
        T::zero()
    };
    let se_final = (var_final / count).sqrt();

    // Unconditional-energy arm: its own sampling experiment.
    let uncond = estimate_uncond_energy(device_model, device_noise, shots, seed)?;
    let (uncond_mean, uncond_se) = uncond[n as usize];

    Ok(ShotRecord {
        step: n,
        shots,
        mean_extracted_work: uncond_mean - mean_final,
        std_error: (se_final * se_final + uncond_se * uncond_se).sqrt(),
        uncond_energy_est: uncond_mean,
        uncond_energy_stderr: uncond_se,
    })
}

/// Runs the shot experiment for every step count 0..=n, building a feedback
/// table per step under `table_noise` (None = ideal-model tables).
pub fn run_shot_sweep<T: Scalar>(
    device_model: &ModelParams<T>,
    device_noise: &NoiseParams<T>,
    table_noise: Option<&NoiseParams<T>>,
    shots: u64,
    seed: u64,
) -> Result<ShotResult<T>, ProtocolError> {
    let mut records = Vec::with_capacity(device_model.steps as usize + 1);
    for step in 0..=device_model.steps {
        let sub_model = ModelParams {
            steps: step,
            ..*device_model
        };
        let table = build_feedback_table(&sub_model, table_noise)?;
        records.push(run_shots(&sub_model, device_noise, &table, shots, seed)?);
    }
    Ok(ShotResult { records, seed })
}

/// Emulates the two ad-hoc calibration circuits: prepare |0> and count `1`
/// outcomes (p10), prepare |1> via an X gate and count `0` outcomes (p01).
pub fn calibrate_readout<T: Scalar>(
    true_noise: &NoiseParams<T>,
    shots: u64,
    seed: u64,
) -> Result<CalibrationResult<T>, ProtocolError> {
    if shots == 0 {
        return Err(ProtocolError::NoShots);
    }
    let (_, _, p01, p10) = true_noise.effective();
    let ones_from_ground: u64 = (0..shots)
        .into_par_iter()
        .map(|shot| {
            let mut rng = stream_rng(seed, PURPOSE_CALIB_P10, 0, shot);
            u64::from(bernoulli(&mut rng, p10))
        })
        .sum();
    let zeros_from_excited: u64 = (0..shots)
        .into_par_iter()
        .map(|shot| {
            let mut rng = stream_rng(seed, PURPOSE_CALIB_P01, 0, shot);
            u64::from(bernoulli(&mut rng, p01))
        })
        .sum();
    let n = T::from_u64(shots).expect("shot count fits scalar");
    Ok(CalibrationResult {
        p10_est: T::from_u64(ones_from_ground).expect("count fits scalar") / n,
        p01_est: T::from_u64(zeros_from_excited).expect("count fits scalar") / n,
        shots,
    })
}

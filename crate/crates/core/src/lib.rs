//! Simulator for a continuously monitored collisional-model quantum battery.
//!
//! A two-level battery charges through repeated collisions with fresh ancilla
//! qubits; measuring each ancilla after its collision branches the battery
//! state into quantum trajectories, and a per-outcome feedback unitary then
//! extracts work. The crate computes the exact figures of merit (energy,
//! ergotropy, daemonic ergotropy, daemonic extracted work) for ideal and
//! noisy device models, and emulates the whole shot-based feedback
//! experiment, including readout calibration.
//!
//! All numerics are generic over the [`num::Scalar`] floating-point type;
//! the `*64` aliases below fix `f64`, which is what the CLI and every
//! documented tolerance use.

pub mod battery;
pub mod cli;
pub mod collision;
pub mod config;
pub mod linalg;
pub mod num;
pub mod protocol;
pub mod quantum;

pub type ComplexMatrix64 = linalg::ComplexMatrix<f64>;
pub type HermitianEigen64 = linalg::HermitianEigen<f64>;
pub type DensityMatrix64 = quantum::DensityMatrix<f64>;
pub type KrausChannel64 = quantum::KrausChannel<f64>;
pub type PovmEffect64 = quantum::PovmEffect<f64>;
pub type BatteryHamiltonian64 = battery::BatteryHamiltonian<f64>;
pub type ErgotropyResult64 = battery::ErgotropyResult<f64>;
pub type ModelParams64 = collision::ModelParams<f64>;
pub type NoiseParams64 = collision::NoiseParams<f64>;
pub type TrajectoryNode64 = collision::TrajectoryNode<f64>;
pub type FeedbackTable64 = protocol::FeedbackTable<f64>;
pub type ShotResult64 = protocol::ShotResult<f64>;
pub type CalibrationResult64 = protocol::CalibrationResult<f64>;

//! Distributed adaptive synchronization of heterogeneous second-order
//! followers to a broadcast leader over directed graphs.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`). The
//! aliases at the bottom of this file fix the scalar type for callers that
//! do not care.

pub mod engine;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod nonspr;
pub mod plant;
pub mod poly;
pub mod scalar;
pub mod signals;
pub mod spr;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type NetworkF64 = graph::Network<f64>;
pub type NetworkF32 = graph::Network<f32>;
pub type PlantParamsF64 = plant::PlantParams<f64>;
pub type PlantParamsF32 = plant::PlantParams<f32>;
pub type PlantStateF64 = plant::PlantState<f64>;
pub type SprGainsF64 = spr::SprGains<f64>;
pub type SprGainsF32 = spr::SprGains<f32>;
pub type CompensatorParamsF64 = nonspr::CompensatorParams<f64>;
pub type CompensatorParamsF32 = nonspr::CompensatorParams<f32>;
pub type LeaderSignalF64 = signals::LeaderSignal<f64>;
pub type DisturbanceProfileF64 = signals::DisturbanceProfile<f64>;
pub type SimulationSpecF64 = engine::SimulationSpec<f64>;
pub type RunResultF64 = engine::RunResult<f64>;

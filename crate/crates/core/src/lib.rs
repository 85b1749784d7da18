//! Capacity bounds and online power control for the AWGN channel whose
//! transmitter battery is recharged to full at random (Bernoulli) times.
//!
//! All numerics are generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`.

pub mod bounds;
pub mod cli;
pub mod error;
mod linalg;
pub mod model;
pub mod power_control;
pub mod scalar;
pub mod simulator;
pub mod smith;

pub use error::{Error, Result};

pub type ChannelParams = model::ChannelParams<f64>;
pub type BatteryState = model::BatteryState<f64>;
pub type RateValue = model::Bits<f64>;
pub type AllocationSolution = power_control::AllocationSolution<f64>;
pub type BoundsReport = bounds::BoundsReport<f64>;
pub type SmithSolution = smith::SmithSolution<f64>;
pub type SmithSolver = smith::SmithSolver<f64>;
pub type SmithCache = bounds::SmithCache<f64>;
pub type SimReport = simulator::SimReport<f64>;
pub type PowerPolicy = simulator::PowerPolicy<f64>;
pub type PolicyKind = simulator::PolicyKind<f64>;

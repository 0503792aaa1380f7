//! Stability analysis for retarded delay differential equations.
//!
//! Histories are cubic Hermite [`Segment`]s on a uniform grid over `[-r, 0]`.
//! Systems are integrated by the method of steps and probed for Lyapunov-type
//! stability properties with seeded random sampling.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

mod error;
mod scalar;

pub mod dde;
pub mod lyapunov;
pub mod sampler;
pub mod segment;
pub mod stability;

pub use error::{Error, Result};
pub use scalar::{euclid, euclid_dist, Scalar};

pub use dde::{build_system, simulate, DelaySystem, SystemDef, Trajectory};
pub use sampler::{Family, Sampler, SamplerConfig};
pub use segment::{NormConfig, Segment, Side, SpaceSpec};

pub type SegmentF64 = Segment<f64>;
pub type SegmentF32 = Segment<f32>;
pub type TrajectoryF64 = Trajectory<f64>;
pub type TrajectoryF32 = Trajectory<f32>;
pub type DelaySystemF64 = DelaySystem<f64>;
pub type DelaySystemF32 = DelaySystem<f32>;

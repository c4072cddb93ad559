//! Simulation and optimization toolkit for a time-multiplexed, SOA-gated
//! pair of widely tunable lasers.
//!
//! The crate models the full transmitter chain at desk scale: drive waveform
//! synthesis and AWG channel effects ([`signal`]), parametric SOA and DS-DBR
//! device dynamics ([`device`]), switching figures of merit ([`metrics`]),
//! particle-swarm shaping of SOA gate drives ([`pso`]), regression-tuned
//! laser pre-emphasis ([`preemph`]), and the composed time-multiplexed
//! module with its schedule, validation and power-scaling models
//! ([`system`]).
//!
//! All simulation paths are deterministic: random draws are indexed by seed,
//! particle and iteration, and batch evaluations give identical results on
//! the parallel (rayon) and sequential paths.

pub mod device;
pub mod error;
pub mod metrics;
pub mod par;
pub mod preemph;
pub mod pso;
pub mod signal;
pub mod system;

pub use device::{ChannelPlan, DsdbrParams, SoaParams};
pub use error::{Error, Result};
pub use metrics::SwitchMetrics;
pub use preemph::{PreemphasisParams, RegressionConfig};
pub use pso::{PsoConfig, PsoResult};
pub use signal::{AwgModel, SampledWaveform, Units};
pub use system::{GateSchedule, PowerModelParams, Scenario};

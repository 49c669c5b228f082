//! Weighted sum-rate (WSR) maximization for MU-MIMO downlink beamforming.
//!
//! Three solver families share one objective and one power projection:
//!
//! * [`optim`]: projected gradient ascent and Adam baselines,
//! * [`wmmse`]: the weighted-MMSE alternating minimization baseline,
//! * [`mlgd`]: meta-learned gradient descent, where a small network ([`metanet`])
//!   maps WSR gradients to beamformer updates and is itself trained online
//!   while the instance is being solved.

pub mod counters;
pub mod error;
pub mod linalg;
pub mod metanet;
pub mod mlgd;
pub mod objective;
pub mod optim;
pub mod scenario;
pub mod trajectory;
pub mod wmmse;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, C64};
pub use scenario::{BeamformerSet, ChannelSet, ScenarioConfig};
pub use trajectory::{Algorithm, Report, RunTrajectory};

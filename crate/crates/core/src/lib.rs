//! Power control under EMF exposure limits for user-centric cell-free massive
//! MIMO: channel simulation, heuristics, optimization-based allocation and
//! learned allocators.

pub mod beamforming;
pub mod config;
pub mod csi;
pub mod error;
pub mod experiment;
pub mod heuristics;
pub mod linalg;
pub mod metrics;
pub mod ml;
pub mod optimizer;
pub mod scenario;
pub mod seed;

pub use beamforming::{BeamformerKind, BeamformerSet};
pub use config::{SarLimit, SystemConfig};
pub use csi::{ChannelEstimateSet, PilotBook};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, Policy, Preset};
pub use heuristics::Heuristic;
pub use metrics::{Direction, EffectiveGains, EvaluationMode, PowerAllocationDL, PowerAllocationUL};
pub use ml::{Dataset, MlpSpec, Model, TrainConfig};
pub use optimizer::{Allocation, AllocationResult, SolverConfig};
pub use scenario::{Association, ChannelRealization, Deployment, LargeScaleState};

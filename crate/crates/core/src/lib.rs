//! Deterministic off-road trail simulation core.
//!
//! Everything in this crate is a pure function of its inputs and a seed:
//! procedurally randomized trail terrain, a dynamic bicycle vehicle with
//! Pacejka lateral tires, Frenet-frame projection onto the trail centerline,
//! scandot/depth/IMU sensors, a second-order control-barrier-function lane
//! shield, a rule-based expert driver and the episode loop that ties them
//! together with rewards and metrics.
//!
//! The crate is `no_std` (it needs `alloc`); IO, the wire protocol and the
//! command line live in the `offtersim` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod env;
pub mod error;
pub mod expert;
pub mod frenet;
pub mod grid;
pub mod sensors;
pub mod shield;
pub mod terrain;
pub mod vehicle;

mod math;

pub use env::{
    aggregate, derive_seed, discrete_action_map, ActionMode, AggregateReport, DoneReason,
    EnvAction, Environment, EpisodeConfig, MetricsAccumulator, MetricsReport, ObservationMode,
    RewardTerms, RewardWeights, StepInfo, StepResult, Steer,
};
pub use error::{Error, Result};
pub use frenet::{Centerline, FrenetState};
pub use grid::Grid;
pub use sensors::{CameraSpec, Observation, ScandotSpec};
pub use shield::{ShieldConfig, ShieldResult};
pub use terrain::{Obstacle, ObstacleKind, RandomizationRanges, TerrainModel, TerrainParams};
pub use vehicle::{Action, VehicleParams, VehicleState};

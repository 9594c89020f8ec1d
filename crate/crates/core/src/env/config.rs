use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expert::ExpertConfig;
use crate::sensors::{CameraSpec, ScandotSpec};
use crate::shield::ShieldConfig;
use crate::terrain::RandomizationRanges;
use crate::vehicle::VehicleRanges;

/// Steering interface exposed to policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionMode {
    #[default]
    Continuous,
    /// Steering restricted to `n` evenly spaced commands from -1 to 1.
    Discrete { n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMode {
    /// IMU, Frenet state and scandots.
    #[default]
    Privileged,
    /// IMU, Frenet state and the depth image.
    Depth,
    Both,
}

impl ObservationMode {
    pub fn wants_scandots(self) -> bool {
        matches!(self, ObservationMode::Privileged | ObservationMode::Both)
    }

    pub fn wants_depth(self) -> bool {
        matches!(self, ObservationMode::Depth | ObservationMode::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    pub progress: f64,
    pub smoothness: f64,
    pub boundary: f64,
    pub collision: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { progress: 1.0, smoothness: 0.5, boundary: 2.0, collision: 10.0 }
    }
}

/// Everything that defines an episode family. Roll and pitch termination
/// limits live in the vehicle parameters; the constraint penalty gain lives
/// in the shield config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub terrain: RandomizationRanges,
    pub vehicle: VehicleRanges,
    pub dt: f64,
    pub max_steps: usize,
    pub action_mode: ActionMode,
    pub observation_mode: ObservationMode,
    pub shield: ShieldConfig,
    pub rewards: RewardWeights,
    /// End the episode once `|x_lat|` exceeds `w/2 + margin`; `None` only penalizes.
    pub off_trail_margin: Option<f64>,
    pub spawn_speed: f64,
    pub scandots: ScandotSpec,
    pub camera: CameraSpec,
    pub expert: ExpertConfig,
    /// Standard deviation of additive IMU noise.
    pub imu_noise: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            terrain: RandomizationRanges::default(),
            vehicle: VehicleRanges::default(),
            dt: 0.02,
            max_steps: 3000,
            action_mode: ActionMode::Continuous,
            observation_mode: ObservationMode::Privileged,
            shield: ShieldConfig::default(),
            rewards: RewardWeights::default(),
            off_trail_margin: None,
            spawn_speed: 1.0,
            scandots: ScandotSpec::default(),
            camera: CameraSpec::default(),
            expert: ExpertConfig::default(),
            imu_noise: 0.0,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= 0.1) {
            return Err(Error::config("dt must lie in (0, 0.1]"));
        }
        if let ActionMode::Discrete { n } = self.action_mode {
            if n < 2 {
                return Err(Error::config("discrete action mode needs n >= 2"));
            }
        }
        if !(self.spawn_speed.is_finite() && self.imu_noise >= 0.0) {
            return Err(Error::config("spawn_speed must be finite and imu_noise non-negative"));
        }
        if self.camera.width == 0 || self.camera.height == 0 || !(self.camera.max_range > 0.0) {
            return Err(Error::config("camera needs a positive resolution and range"));
        }
        if !(self.camera.march_step > 0.0 && self.camera.refine_tol > 0.0) {
            return Err(Error::config("camera march step and refinement tolerance must be positive"));
        }
        if self.expert.n_offsets < 3 || self.expert.n_offsets % 2 == 0 || !(self.expert.lookahead > 0.0) {
            return Err(Error::config("expert needs an odd n_offsets >= 3 and a positive lookahead"));
        }
        self.shield.validate()?;
        self.terrain.validate()?;
        self.vehicle.validate()
    }
}

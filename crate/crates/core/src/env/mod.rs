//! Episode loop: reset, shielded stepping, rewards, termination and metrics.

mod config;
mod metrics;

pub use config::{ActionMode, EpisodeConfig, ObservationMode, RewardWeights};
pub use metrics::{
    aggregate, AggregateReport, MetricsAccumulator, MetricsReport, RunLabel, StepSample, TABLE_COLUMNS,
};

use alloc::format;
use num_traits::Float;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expert::{expert_action, ExpertDecision, ExpertInput};
use crate::frenet::FrenetState;
use crate::sensors::{imu, render_depth, scandots, Observation};
use crate::shield::{filter_action, ShieldConfig, ShieldResult};
use crate::terrain::{sample_terrain, terrain_rng, Obstacle, TerrainModel};
use crate::vehicle::{self, body_acceleration, conform, Action, VehicleParams, VehicleState};

const RNG_STREAM_VEHICLE: u64 = 3;
const RNG_STREAM_IMU: u64 = 4;

/// Maps discrete steering index `k` of `n` to `-1 + 2k/(n-1)`.
pub fn discrete_action_map(k: usize, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::protocol("discrete action space needs n >= 2"));
    }
    if k >= n {
        return Err(Error::protocol(format!("steer index {k} out of range for n = {n}")));
    }
    Ok(-1.0 + 2.0 * k as f64 / (n - 1) as f64)
}

/// Seed of environment `env_id` in a batch started from `master` (splitmix64).
pub fn derive_seed(master: u64, env_id: u64) -> u64 {
    let mut z = master.wrapping_add(env_id.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Steer {
    /// Normalized command in [-1, 1].
    Value(f64),
    /// Index into the discrete action set.
    Index(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvAction {
    pub steer: Steer,
    pub throttle: f64,
    pub brake: f64,
}

impl EnvAction {
    pub fn continuous(steer: f64, throttle: f64, brake: f64) -> Self {
        Self { steer: Steer::Value(steer), throttle, brake }
    }

    pub fn discrete(index: usize, throttle: f64, brake: f64) -> Self {
        Self { steer: Steer::Index(index), throttle, brake }
    }
}

impl From<Action> for EnvAction {
    fn from(a: Action) -> Self {
        Self::continuous(a.steer, a.throttle, a.brake)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoneReason {
    Flipped,
    ReachedEnd,
    /// Lateral offset exceeded the configured off-trail margin.
    OffTrail,
    /// The vehicle left the terrain grid.
    OutOfBounds,
    Horizon,
    Fault,
}

/// Reward decomposition of one step; `total` is their sum in field order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardTerms {
    pub progress: f64,
    pub smoothness: f64,
    pub boundary: f64,
    pub collision: f64,
    pub cbf: f64,
}

impl RewardTerms {
    pub fn total(&self) -> f64 {
        self.progress + self.smoothness + self.boundary + self.collision + self.cbf
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub step: usize,
    pub terms: RewardTerms,
    pub shield: ShieldResult,
    /// Action actually applied to the vehicle.
    pub applied: Action,
    pub collided: bool,
    pub flipped: bool,
    /// Set when the episode ended on a simulation fault.
    pub fault: Option<alloc::string::String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub reason: Option<DoneReason>,
    pub info: StepInfo,
}

#[derive(Debug, Clone)]
struct Episode {
    seed: u64,
    terrain: TerrainModel,
    params: VehicleParams,
    shield: ShieldConfig,
    state: VehicleState,
    prev: VehicleState,
    frenet: FrenetState,
    imu_rng: ChaCha8Rng,
    steps: usize,
    done: Option<DoneReason>,
    metrics: MetricsAccumulator,
    observation: Observation,
}

/// One simulated environment. Create it once, then `reset` for every episode.
#[derive(Debug, Clone)]
pub struct Environment {
    config: EpisodeConfig,
    episode: Option<Episode>,
}

impl Environment {
    pub fn new(config: EpisodeConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, episode: None })
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    /// Samples a fresh terrain and vehicle from `seed` and spawns the vehicle
    /// at the trail start, aligned with the centerline.
    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        let terrain = sample_terrain(seed, &self.config.terrain)?;
        let params = self.config.vehicle.sample(&mut terrain_rng(seed, RNG_STREAM_VEHICLE))?;
        let mut shield = self.config.shield.clone();
        shield.trail_width = terrain.params().w;
        let (sx, sy) = terrain.spawn_point();
        let yaw = terrain.centerline().tangent_angle(sx);
        let raw = VehicleState { x: sx, y: sy, yaw, v_x: self.config.spawn_speed, ..Default::default() };
        let state = conform(&raw, &terrain, &params)?;
        let frenet = project(&terrain, &state)?;
        let mut ep = Episode {
            seed,
            terrain,
            params,
            shield,
            state,
            prev: state,
            frenet,
            imu_rng: terrain_rng(seed, RNG_STREAM_IMU),
            steps: 0,
            done: None,
            metrics: MetricsAccumulator::default(),
            observation: empty_observation(frenet),
        };
        ep.observation = self.observe(&mut ep);
        self.episode = Some(ep);
        Ok(self.current()?.observation.clone())
    }

    /// Moves the vehicle to Frenet pose `(s, x_lat, theta)` with forward speed
    /// `v_x`, keeping terrain, metrics and step count. Intended for scripted
    /// scenarios.
    pub fn place_vehicle(&mut self, s: f64, x_lat: f64, theta: f64, v_x: f64) -> Result<Observation> {
        let ep = self.current()?;
        let (x, y, tangent) = ep.terrain.centerline().point_at(s, x_lat);
        let raw = VehicleState { x, y, yaw: crate::math::wrap_angle(tangent + theta), v_x, ..Default::default() };
        self.set_state(raw)
    }

    /// Replaces the episode's obstacles, keeping the vehicle where it is.
    pub fn set_obstacles(&mut self, obstacles: alloc::vec::Vec<Obstacle>) -> Result<Observation> {
        let state = {
            let ep = self.episode.as_mut().ok_or_else(|| Error::protocol("environment has not been reset"))?;
            ep.terrain.set_obstacles(obstacles);
            ep.state
        };
        self.set_state(state)
    }

    /// Replaces the vehicle state (re-seated on the terrain).
    pub fn set_state(&mut self, state: VehicleState) -> Result<Observation> {
        let mut ep = self.episode.take().ok_or_else(|| Error::protocol("environment has not been reset"))?;
        let result = (|| {
            let state = conform(&state, &ep.terrain, &ep.params)?;
            let frenet = project(&ep.terrain, &state)?;
            Ok((state, frenet))
        })();
        match result {
            Ok((state, frenet)) => {
                ep.state = state;
                ep.prev = state;
                ep.frenet = frenet;
                ep.observation = self.observe(&mut ep);
                let obs = ep.observation.clone();
                self.episode = Some(ep);
                Ok(obs)
            }
            Err(e) => {
                self.episode = Some(ep);
                Err(e)
            }
        }
    }

    fn current(&self) -> Result<&Episode> {
        self.episode.as_ref().ok_or_else(|| Error::protocol("environment has not been reset"))
    }

    pub fn seed(&self) -> Result<u64> {
        Ok(self.current()?.seed)
    }

    pub fn terrain(&self) -> Result<&TerrainModel> {
        Ok(&self.current()?.terrain)
    }

    pub fn vehicle_params(&self) -> Result<&VehicleParams> {
        Ok(&self.current()?.params)
    }

    /// Shield configuration of the running episode (lane width filled in).
    pub fn shield_config(&self) -> Result<&ShieldConfig> {
        Ok(&self.current()?.shield)
    }

    pub fn state(&self) -> Result<&VehicleState> {
        Ok(&self.current()?.state)
    }

    pub fn frenet(&self) -> Result<&FrenetState> {
        Ok(&self.current()?.frenet)
    }

    pub fn observation(&self) -> Result<&Observation> {
        Ok(&self.current()?.observation)
    }

    pub fn steps(&self) -> Result<usize> {
        Ok(self.current()?.steps)
    }

    pub fn done(&self) -> Result<Option<DoneReason>> {
        Ok(self.current()?.done)
    }

    pub fn metrics(&self) -> Result<&MetricsAccumulator> {
        Ok(&self.current()?.metrics)
    }

    /// The expert's choice for the current state, using privileged information.
    pub fn expert(&self) -> Result<ExpertDecision> {
        let ep = self.current()?;
        let dots;
        let grid = match &ep.observation.scandots {
            Some(g) => g,
            None => {
                dots = scandots(&ep.terrain, &ep.state, &self.config.scandots);
                &dots
            }
        };
        let input = ExpertInput {
            state: &ep.state,
            frenet: &ep.frenet,
            centerline: ep.terrain.centerline(),
            trail_width: ep.terrain.params().w,
            scandots: Some((grid, &self.config.scandots)),
            obstacles: ep.terrain.obstacles(),
        };
        Ok(expert_action(&input, &self.config.expert, &ep.params))
    }

    /// The expert action expressed in this environment's action space.
    pub fn expert_env_action(&self) -> Result<EnvAction> {
        let a = self.expert()?.action;
        Ok(match self.config.action_mode {
            ActionMode::Continuous => EnvAction::from(a),
            ActionMode::Discrete { n } => EnvAction::discrete(nearest_index(a.steer, n), a.throttle, a.brake),
        })
    }

    fn decode(&self, action: &EnvAction) -> Result<Action> {
        let steer = match (self.config.action_mode, action.steer) {
            (ActionMode::Continuous, Steer::Value(v)) => v,
            (ActionMode::Continuous, Steer::Index(_)) => {
                return Err(Error::protocol("steer index given to a continuous-action environment"))
            }
            (ActionMode::Discrete { n }, Steer::Index(k)) => discrete_action_map(k, n)?,
            // a raw value snaps to the nearest discrete command
            (ActionMode::Discrete { n }, Steer::Value(v)) => discrete_action_map(nearest_index(v, n), n)?,
        };
        Ok(Action::new(steer, action.throttle, action.brake).clamped())
    }

    /// Advances one control step.
    pub fn step(&mut self, action: &EnvAction) -> Result<StepResult> {
        let (done, steps) = {
            let ep = self.current()?;
            (ep.done, ep.steps)
        };
        if done.is_some() {
            return Err(Error::protocol("step called on a finished episode; reset first"));
        }
        let action = self.decode(action)?;
        let mut ep = self.episode.take().expect("episode checked above");
        let result = self.advance(&mut ep, &action, steps);
        self.episode = Some(ep);
        Ok(result)
    }

    fn advance(&self, ep: &mut Episode, action: &Action, steps: usize) -> StepResult {
        let cfg = &self.config;
        ep.steps = steps + 1;
        let a_x = body_acceleration(&ep.state, action, &ep.params).0;
        let shielded = filter_action(action, &ep.frenet, a_x, &ep.params, &ep.shield);
        let moved = shielded.as_ref().map_err(Clone::clone).and_then(|sh| {
            let next = vehicle::step(&ep.state, &sh.action, &ep.terrain, &ep.params, cfg.dt)?;
            let frenet = project(&ep.terrain, &next)?;
            Ok((*sh, next, frenet))
        });
        let (shield, next, frenet) = match moved {
            Ok(v) => v,
            Err(e) => return self.abort(ep, action, shielded.ok(), e),
        };

        let w = ep.terrain.params().w;
        let ds = frenet.s - ep.frenet.s;
        let rw = &cfg.rewards;
        let terms = RewardTerms {
            progress: rw.progress * ds,
            smoothness: -rw.smoothness * (next.roll * next.roll + next.pitch * next.pitch),
            boundary: -rw.boundary * (Float::abs(frenet.x_lat) - 0.5 * w).max(0.0),
            collision: if next.collided { -rw.collision } else { 0.0 },
            cbf: -shield.r_constraint,
        };
        ep.metrics.record(&StepSample {
            dt: cfg.dt,
            ds,
            was_collided: ep.state.collided,
            collided: next.collided,
            roll: next.roll,
            pitch: next.pitch,
            violation: shield.violation,
        });
        ep.prev = ep.state;
        ep.state = next;
        ep.frenet = frenet;
        ep.observation = self.observe(ep);

        let off_trail = cfg.off_trail_margin.is_some_and(|m| Float::abs(frenet.x_lat) > 0.5 * w + m);
        let reason = if next.flipped {
            Some(DoneReason::Flipped)
        } else if frenet.s >= ep.terrain.trail_length() {
            Some(DoneReason::ReachedEnd)
        } else if off_trail {
            Some(DoneReason::OffTrail)
        } else if ep.steps >= cfg.max_steps {
            Some(DoneReason::Horizon)
        } else {
            None
        };
        ep.done = reason;
        StepResult {
            observation: ep.observation.clone(),
            reward: terms.total(),
            done: reason.is_some(),
            reason,
            info: StepInfo {
                step: ep.steps,
                terms,
                shield,
                applied: shield.action,
                collided: next.collided,
                flipped: next.flipped,
                fault: None,
            },
        }
    }

    /// Ends the episode without moving the vehicle.
    fn abort(&self, ep: &mut Episode, action: &Action, shield: Option<ShieldResult>, err: Error) -> StepResult {
        let (reason, fault) = match err {
            Error::OutOfExtent { .. } => (DoneReason::OutOfBounds, None),
            other => (DoneReason::Fault, Some(format!("{other}"))),
        };
        ep.done = Some(reason);
        let shield = shield.unwrap_or_else(|| ShieldResult::passthrough(action));
        StepResult {
            observation: ep.observation.clone(),
            reward: 0.0,
            done: true,
            reason: Some(reason),
            info: StepInfo {
                step: ep.steps,
                terms: RewardTerms::default(),
                applied: shield.action,
                shield,
                collided: ep.state.collided,
                flipped: ep.state.flipped,
                fault,
            },
        }
    }

    /// Metrics of the finished episode.
    pub fn finalize_metrics(&self) -> Result<MetricsReport> {
        let ep = self.current()?;
        if ep.done.is_none() {
            return Err(Error::protocol("metrics requested before the episode finished"));
        }
        Ok(ep.metrics.report())
    }

    fn observe(&self, ep: &mut Episode) -> Observation {
        let cfg = &self.config;
        let reading = imu(&ep.state, &ep.prev, cfg.dt, &ep.params, cfg.imu_noise, &mut ep.imu_rng);
        Observation {
            imu_accel: reading.accel,
            imu_gyro: reading.gyro,
            roll: reading.roll,
            pitch: reading.pitch,
            frenet: ep.frenet,
            scandots: cfg
                .observation_mode
                .wants_scandots()
                .then(|| scandots(&ep.terrain, &ep.state, &cfg.scandots)),
            depth: cfg
                .observation_mode
                .wants_depth()
                .then(|| render_depth(&ep.terrain, ep.terrain.obstacles(), &ep.state, &cfg.camera)),
        }
    }
}

fn nearest_index(steer: f64, n: usize) -> usize {
    let v = if steer.is_finite() { steer.clamp(-1.0, 1.0) } else { 0.0 };
    let k = Float::round((v + 1.0) * 0.5 * (n - 1) as f64);
    (k as usize).min(n - 1)
}

fn project(terrain: &TerrainModel, s: &VehicleState) -> Result<FrenetState> {
    terrain.centerline().project(s.x, s.y, s.yaw, s.v_x, s.v_y, s.omega)
}

fn empty_observation(frenet: FrenetState) -> Observation {
    Observation {
        imu_accel: [0.0; 3],
        imu_gyro: [0.0; 3],
        roll: 0.0,
        pitch: 0.0,
        frenet,
        scandots: None,
        depth: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discrete_map_endpoints() {
        assert_eq!(discrete_action_map(0, 7).unwrap(), -1.0);
        assert_eq!(discrete_action_map(3, 7).unwrap(), 0.0);
        assert_eq!(discrete_action_map(6, 7).unwrap(), 1.0);
        assert!(matches!(discrete_action_map(7, 7), Err(Error::Protocol(_))));
    }

    #[test]
    fn nearest_index_round_trips() {
        for k in 0..7 {
            assert_eq!(nearest_index(discrete_action_map(k, 7).unwrap(), 7), k);
        }
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_eq!(derive_seed(5, 3), derive_seed(5, 3));
    }

    #[test]
    fn step_before_reset_is_a_protocol_error() {
        let mut env = Environment::new(EpisodeConfig::default()).unwrap();
        let r = env.step(&EnvAction::continuous(0.0, 0.0, 0.0));
        assert!(matches!(r, Err(Error::Protocol(_))));
    }
}

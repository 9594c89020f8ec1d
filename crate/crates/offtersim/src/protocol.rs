//! Newline-delimited JSON messages exchanged with external policy processes.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use offtersim_core::{
    Action, DoneReason, EnvAction, FrenetState, Grid, MetricsReport, Observation, RewardTerms, ShieldResult,
    Steer, TerrainParams, VehicleParams,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const VERSION: &str = "offtersim/1";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Request {
    pub cmd: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<WireAction>,
    /// Episode config overrides, merged over the server defaults on `make`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<Value>,
}

impl Request {
    pub fn new(cmd: &str) -> Self {
        Self { cmd: cmd.to_string(), ..Default::default() }
    }

    pub fn env(mut self, env_id: u64) -> Self {
        self.env_id = Some(env_id);
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

/// Action on the wire: either `steer` in [-1, 1] or `steer_index` for
/// discrete environments.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WireAction {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steer: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steer_index: Option<usize>,
    #[serde(default)]
    pub throttle: f64,
    #[serde(default)]
    pub brake: f64,
}

impl WireAction {
    pub fn to_env(&self) -> Result<EnvAction, String> {
        let steer = match (self.steer, self.steer_index) {
            (Some(v), None) => Steer::Value(v),
            (None, Some(k)) => Steer::Index(k),
            (None, None) => Steer::Value(0.0),
            (Some(_), Some(_)) => return Err("action has both steer and steer_index".into()),
        };
        Ok(EnvAction { steer, throttle: self.throttle, brake: self.brake })
    }
}

impl From<EnvAction> for WireAction {
    fn from(a: EnvAction) -> Self {
        let (steer, steer_index) = match a.steer {
            Steer::Value(v) => (Some(v), None),
            Steer::Index(k) => (None, Some(k)),
        };
        Self { steer, steer_index, throttle: a.throttle, brake: a.brake }
    }
}

impl From<Action> for WireAction {
    fn from(a: Action) -> Self {
        EnvAction::from(a).into()
    }
}

/// Depth frame: base64 of row-major little-endian `f32`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireDepth {
    pub width: usize,
    pub height: usize,
    pub data: String,
}

impl WireDepth {
    pub fn encode(depth: &Grid<f32>) -> Self {
        let mut bytes = Vec::with_capacity(depth.as_slice().len() * 4);
        for v in depth.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        Self { width: depth.cols(), height: depth.rows(), data: B64.encode(bytes) }
    }

    pub fn decode(&self) -> Result<Grid<f32>, String> {
        let bytes = B64.decode(&self.data).map_err(|e| format!("bad depth payload: {e}"))?;
        if bytes.len() != self.width * self.height * 4 {
            return Err("depth payload size does not match its dimensions".into());
        }
        let values = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        Grid::from_vec(self.height, self.width, values).ok_or_else(|| "bad depth dimensions".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireObservation {
    pub imu_accel: [f64; 3],
    pub imu_gyro: [f64; 3],
    pub roll: f64,
    pub pitch: f64,
    pub frenet: FrenetState,
    /// Row-major, rows forward and columns left to right.
    #[serde(default)]
    pub scandots: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub depth: Option<WireDepth>,
}

impl WireObservation {
    pub fn encode(obs: &Observation) -> Self {
        Self {
            imu_accel: obs.imu_accel,
            imu_gyro: obs.imu_gyro,
            roll: obs.roll,
            pitch: obs.pitch,
            frenet: obs.frenet,
            scandots: obs.scandots.as_ref().map(|g| {
                (0..g.rows()).map(|r| (0..g.cols()).map(|c| g[(r, c)]).collect()).collect()
            }),
            depth: obs.depth.as_ref().map(WireDepth::encode),
        }
    }

    pub fn decode(&self) -> Result<Observation, String> {
        let scandots = match &self.scandots {
            Some(rows) => {
                let cols = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|r| r.len() != cols) {
                    return Err("ragged scandot rows".into());
                }
                let flat = rows.iter().flatten().copied().collect();
                Some(Grid::from_vec(rows.len(), cols, flat).ok_or("bad scandot dimensions")?)
            }
            None => None,
        };
        Ok(Observation {
            imu_accel: self.imu_accel,
            imu_gyro: self.imu_gyro,
            roll: self.roll,
            pitch: self.pitch,
            frenet: self.frenet,
            scandots,
            depth: self.depth.as_ref().map(WireDepth::decode).transpose()?,
        })
    }
}

/// Shield decision as logged per step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShieldLog {
    pub u_ref: f64,
    pub u_safe: f64,
    pub c_left: f64,
    pub c_right: f64,
    pub violation: bool,
}

impl From<&ShieldResult> for ShieldLog {
    fn from(s: &ShieldResult) -> Self {
        Self { u_ref: s.u_ref, u_safe: s.u_safe, c_left: s.c_left, c_right: s.c_right, violation: s.violation }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WireInfo {
    pub step: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shield: Option<ShieldLog>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub applied: Option<Action>,
    #[serde(default)]
    pub collided: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<String>,
    /// What the built-in expert would do from the new state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert_action: Option<WireAction>,
}

/// Parameters sampled for an episode, sent with every reset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeParams {
    pub seed: u64,
    pub terrain: TerrainParams,
    pub vehicle: VehicleParams,
    pub trail_length: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Response {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode: Option<EpisodeParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<WireObservation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_terms: Option<RewardTerms>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub done: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub done_reason: Option<DoneReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info: Option<WireInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    pub fn ok(env_id: Option<u64>) -> Self {
        Self { ok: true, env_id, ..Default::default() }
    }

    pub fn error(env_id: Option<u64>, msg: impl Into<String>) -> Self {
        Self { ok: false, env_id, error: Some(msg.into()), ..Default::default() }
    }

    /// One protocol line, without the trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).unwrap_or_else(|e| {
            format!("{{\"ok\":false,\"error\":\"response not serializable: {e}\"}}")
        })
    }
}

/// Parses a request line. On failure returns the error response with
/// whatever `env_id` could be recovered.
pub fn parse_request(line: &str) -> Result<Request, Response> {
    let value: Value =
        serde_json::from_str(line).map_err(|e| Response::error(None, format!("malformed JSON: {e}")))?;
    let env_id = value.get("env_id").and_then(Value::as_u64);
    if !value.is_object() {
        return Err(Response::error(env_id, "request must be a JSON object"));
    }
    serde_json::from_value(value).map_err(|e| Response::error(env_id, format!("invalid request: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_round_trip_is_exact() {
        let g = Grid::from_fn(3, 2, |r, c| 0.1 + r as f32 * 1.7 + c as f32 * 1e-7);
        let wire = WireDepth::encode(&g);
        assert_eq!(wire.decode().unwrap(), g);
        assert_eq!(B64.decode(&wire.data).unwrap()[..4], 0.1f32.to_le_bytes());
    }

    #[test]
    fn malformed_and_non_object() {
        assert!(parse_request("{nope").unwrap_err().error.unwrap().contains("malformed"));
        let r = parse_request("[1,2]").unwrap_err();
        assert!(!r.ok);
        let r = parse_request(r#"{"env_id": 4}"#).unwrap_err();
        assert_eq!(r.env_id, Some(4));
    }

    #[test]
    fn action_forms() {
        let a: WireAction = serde_json::from_str(r#"{"steer_index": 3, "throttle": 0.5}"#).unwrap();
        assert_eq!(a.to_env().unwrap(), EnvAction::discrete(3, 0.5, 0.0));
        let both = WireAction { steer: Some(0.1), steer_index: Some(1), ..Default::default() };
        assert!(both.to_env().is_err());
    }
}

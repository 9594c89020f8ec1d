//! Dynamic bicycle model with Pacejka lateral tires.
//!
//! Planar body-frame dynamics (`v_x`, `v_y`, `omega`) are integrated with
//! RK4; height, roll and pitch are then slaved to the terrain under four
//! wheel contact points. Body axes: x forward, y left, z up; yaw is
//! counter-clockwise, pitch is nose-up positive and roll is positive when
//! the left side sits higher.

use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{signum0, wrap_angle};
use crate::terrain::{Obstacle, Range, TerrainModel};

/// Largest `h·λ` allowed per RK4 sub-step.
pub const MAX_STIFF_STEP: f64 = 0.5;
pub const MAX_SUBSTEPS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    pub m: f64,
    pub i_z: f64,
    pub l_f: f64,
    pub l_r: f64,
    pub b_f: f64,
    pub c_f_pac: f64,
    pub d_f: f64,
    pub b_r: f64,
    pub c_r_pac: f64,
    pub d_r: f64,
    /// Drive force per unit throttle (N).
    pub k_throttle: f64,
    /// Brake force per unit brake (N); non-positive, applied against `v_x`.
    pub k_brake: f64,
    /// Per-tire linear cornering stiffness used by the shield's model (N/rad).
    pub c_f_lin: f64,
    pub c_r_lin: f64,
    pub delta_max: f64,
    pub veh_radius: f64,
    pub g: f64,
    /// CoM height above the ground.
    pub cg_height: f64,
    pub track: f64,
    pub roll_limit: f64,
    pub pitch_limit: f64,
    /// Floor on `v_x` in the slip-angle denominators.
    pub v_eps: f64,
    /// Lateral forces fade in linearly from zero over `|v_x| < v_fade`.
    pub v_fade: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        let (b, c, d) = (8.0, 1.4, 1500.0);
        let (l_f, l_r) = (0.8, 0.9);
        Self {
            m: 300.0,
            i_z: 120.0,
            l_f,
            l_r,
            b_f: b,
            c_f_pac: c,
            d_f: d,
            b_r: b,
            c_r_pac: c,
            d_r: d,
            k_throttle: 1500.0,
            k_brake: -3000.0,
            c_f_lin: 0.5 * b * c * d,
            c_r_lin: 0.5 * b * c * d,
            delta_max: 0.45,
            veh_radius: 1.0,
            g: 9.81,
            cg_height: 0.4,
            track: 0.8 * (l_f + l_r),
            roll_limit: 0.6,
            pitch_limit: 0.6,
            v_eps: 0.1,
            v_fade: 0.5,
        }
    }
}

impl VehicleParams {
    pub fn wheelbase(&self) -> f64 {
        self.l_f + self.l_r
    }

    /// Sets the linear stiffnesses to half of the axle's `B·C·D`, the
    /// small-slip slope of the Pacejka curve shared by two tires.
    pub fn with_linearized_stiffness(mut self) -> Self {
        self.c_f_lin = 0.5 * self.b_f * self.c_f_pac * self.d_f;
        self.c_r_lin = 0.5 * self.b_r * self.c_r_pac * self.d_r;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m", self.m),
            ("i_z", self.i_z),
            ("l_f", self.l_f),
            ("l_r", self.l_r),
            ("d_f", self.d_f),
            ("d_r", self.d_r),
            ("delta_max", self.delta_max),
            ("veh_radius", self.veh_radius),
            ("track", self.track),
            ("v_eps", self.v_eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(alloc::format!("vehicle parameter `{name}` must be positive")));
            }
        }
        if self.k_brake > 0.0 {
            return Err(Error::config("k_brake must be non-positive"));
        }
        Ok(())
    }
}

/// Domain-randomization ranges for the vehicle; every other parameter comes
/// from `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleRanges {
    pub base: VehicleParams,
    pub m: Range,
    pub i_z: Range,
    pub b: Range,
    pub d: Range,
    pub k_throttle: Range,
    pub k_brake: Range,
}

impl Default for VehicleRanges {
    fn default() -> Self {
        Self {
            base: VehicleParams::default(),
            m: Range::new(270.0, 330.0),
            i_z: Range::new(108.0, 132.0),
            b: Range::new(7.0, 9.0),
            d: Range::new(1300.0, 1700.0),
            k_throttle: Range::new(1300.0, 1700.0),
            k_brake: Range::new(-3300.0, -2700.0),
        }
    }
}

impl VehicleRanges {
    /// Ranges collapsed onto `params`.
    pub fn fixed(params: VehicleParams) -> Self {
        Self {
            m: Range::point(params.m),
            i_z: Range::point(params.i_z),
            b: Range::point(params.b_f),
            d: Range::point(params.d_f),
            k_throttle: Range::point(params.k_throttle),
            k_brake: Range::point(params.k_brake),
            base: params,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("vehicle.m", &self.m),
            ("vehicle.i_z", &self.i_z),
            ("vehicle.b", &self.b),
            ("vehicle.d", &self.d),
            ("vehicle.k_throttle", &self.k_throttle),
            ("vehicle.k_brake", &self.k_brake),
        ] {
            r.validate(name)?;
        }
        self.base.validate()
    }

    /// Front and rear tires share each drawn Pacejka `B` and `D`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<VehicleParams> {
        self.validate()?;
        let b = self.b.sample(rng);
        let d = self.d.sample(rng);
        let p = VehicleParams {
            m: self.m.sample(rng),
            i_z: self.i_z.sample(rng),
            b_f: b,
            b_r: b,
            d_f: d,
            d_r: d,
            k_throttle: self.k_throttle.sample(rng),
            k_brake: self.k_brake.sample(rng),
            ..self.base.clone()
        }
        .with_linearized_stiffness();
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
    pub roll: f64,
    pub pitch: f64,
    pub v_x: f64,
    pub v_y: f64,
    pub omega: f64,
    /// `dv_x/dt` over the last step.
    pub a_x: f64,
    /// `dv_y/dt` over the last step.
    pub a_y: f64,
    pub collided: bool,
    pub flipped: bool,
}

impl VehicleState {
    fn is_finite(&self) -> bool {
        [self.x, self.y, self.z, self.yaw, self.roll, self.pitch, self.v_x, self.v_y, self.omega, self.a_x, self.a_y]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Control command: steering in [-1, 1], throttle and brake in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub steer: f64,
    pub throttle: f64,
    pub brake: f64,
}

impl Action {
    pub fn new(steer: f64, throttle: f64, brake: f64) -> Self {
        Self { steer, throttle, brake }.clamped()
    }

    /// Clamps every field to its interval; NaN becomes 0.
    pub fn clamped(self) -> Self {
        let c = |v: f64, lo: f64, hi: f64| if v.is_nan() { 0.0 } else { v.clamp(lo, hi) };
        Self { steer: c(self.steer, -1.0, 1.0), throttle: c(self.throttle, 0.0, 1.0), brake: c(self.brake, 0.0, 1.0) }
    }

    pub fn steering_angle(&self, params: &VehicleParams) -> f64 {
        self.steer * params.delta_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TireForces {
    pub f_rx: f64,
    pub f_fy: f64,
    pub f_ry: f64,
}

/// Pacejka magic formula `D·sin(C·atan(B·α))`.
pub fn pacejka(b: f64, c: f64, d: f64, alpha: f64) -> f64 {
    d * Float::sin(c * Float::atan(b * alpha))
}

/// Front and rear slip angles for steering angle `delta` (radians).
pub fn slip_angles(state: &VehicleState, delta: f64, params: &VehicleParams) -> (f64, f64) {
    slip(state.v_x, state.v_y, state.omega, delta, params)
}

fn slip(v_x: f64, v_y: f64, omega: f64, delta: f64, params: &VehicleParams) -> (f64, f64) {
    let vx = v_x.max(params.v_eps);
    let alpha_f = delta - Float::atan((v_y + omega * params.l_f) / vx);
    let alpha_r = Float::atan((omega * params.l_r - v_y) / vx);
    (alpha_f, alpha_r)
}

pub fn tire_forces(state: &VehicleState, action: &Action, params: &VehicleParams) -> TireForces {
    forces(state.v_x, state.v_y, state.omega, action, params)
}

fn forces(v_x: f64, v_y: f64, omega: f64, action: &Action, params: &VehicleParams) -> TireForces {
    let (alpha_f, alpha_r) = slip(v_x, v_y, omega, action.steering_angle(params), params);
    TireForces {
        f_rx: params.k_throttle * action.throttle + params.k_brake * action.brake * signum0(v_x),
        f_fy: pacejka(params.b_f, params.c_f_pac, params.d_f, alpha_f),
        f_ry: pacejka(params.b_r, params.c_r_pac, params.d_r, alpha_r),
    }
}

/// Planar state integrated by RK4: world `x, y, yaw` and body `v_x, v_y, omega`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Planar([f64; 6]);

impl Planar {
    fn axpy(&self, h: f64, k: &Planar) -> Planar {
        let mut out = self.0;
        for (o, d) in out.iter_mut().zip(k.0.iter()) {
            *o += h * d;
        }
        Planar(out)
    }
}

fn derivative(s: &Planar, roll: f64, pitch: f64, action: &Action, params: &VehicleParams) -> Planar {
    let [_, _, yaw, v_x, v_y, omega] = s.0;
    let f = forces(v_x, v_y, omega, action, params);
    let fade = if params.v_fade > 0.0 { (Float::abs(v_x) / params.v_fade).min(1.0) } else { 1.0 };
    let (f_fy, f_ry) = (fade * f.f_fy, fade * f.f_ry);
    let delta = action.steering_angle(params);
    let (sd, cd) = Float::sin_cos(delta);
    let m = params.m;
    let dv_x = (f.f_rx - f_fy * sd) / m + v_y * omega - params.g * Float::sin(pitch);
    let dv_y = (f_ry + f_fy * cd) / m - v_x * omega - params.g * Float::sin(roll);
    let domega = (params.l_f * f_fy * cd - params.l_r * f_ry) / params.i_z;
    let (sy, cy) = Float::sin_cos(yaw);
    Planar([v_x * cy - v_y * sy, v_x * sy + v_y * cy, omega, dv_x, dv_y, domega])
}

/// Body accelerations `(dv_x/dt, dv_y/dt)` at `state` under `action`,
/// without advancing time.
pub fn body_acceleration(state: &VehicleState, action: &Action, params: &VehicleParams) -> (f64, f64) {
    let s = Planar([state.x, state.y, state.yaw, state.v_x, state.v_y, state.omega]);
    let d = derivative(&s, state.roll, state.pitch, &action.clamped(), params);
    (d.0[3], d.0[4])
}

/// True iff the CoM is strictly closer than `veh_radius + radius` to an obstacle centre.
pub fn collision_check(state: &VehicleState, obstacles: &[Obstacle], params: &VehicleParams) -> bool {
    obstacles.iter().any(|o| {
        let (dx, dy) = (state.x - o.center_x, state.y - o.center_y);
        let reach = params.veh_radius + o.radius;
        dx * dx + dy * dy < reach * reach
    })
}

/// Re-seats the vehicle on the terrain: CoM height, roll and pitch from a
/// least-squares plane through the four wheel contacts, plus the collision
/// and rollover flags.
pub fn conform(state: &VehicleState, terrain: &TerrainModel, params: &VehicleParams) -> Result<VehicleState> {
    let (sy, cy) = Float::sin_cos(state.yaw);
    let half = 0.5 * params.track;
    let ground = |bx: f64, by: f64| terrain.height_at(state.x + cy * bx - sy * by, state.y + sy * bx + cy * by);
    let fl = ground(params.l_f, half)?;
    let fr = ground(params.l_f, -half)?;
    let rl = ground(-params.l_r, half)?;
    let rr = ground(-params.l_r, -half)?;
    let gx = (0.5 * (fl + fr) - 0.5 * (rl + rr)) / params.wheelbase();
    let gy = (fl - fr + rl - rr) / (2.0 * params.track);
    let mut out = *state;
    out.z = terrain.height_at(state.x, state.y)? + params.cg_height;
    out.pitch = Float::atan(gx);
    out.roll = Float::atan(gy);
    out.collided = collision_check(&out, terrain.obstacles(), params);
    out.flipped = Float::abs(out.roll) > params.roll_limit || Float::abs(out.pitch) > params.pitch_limit;
    Ok(out)
}

/// Number of RK4 sub-steps keeping `h·λ` below [`MAX_STIFF_STEP`], where `λ`
/// bounds the lateral tire modes at speed `v_x`.
pub fn substeps(v_x: f64, dt: f64, params: &VehicleParams) -> usize {
    let (cf, cr) = (params.b_f * params.c_f_pac * params.d_f, params.b_r * params.c_r_pac * params.d_r);
    let speed = Float::abs(v_x).max(params.v_eps).max(params.v_fade);
    let lateral = (cf + cr) / (params.m * speed);
    let yaw = (params.l_f * params.l_f * cf + params.l_r * params.l_r * cr) / (params.i_z * speed);
    let n = Float::ceil(dt * (lateral + yaw) / MAX_STIFF_STEP);
    if n.is_finite() && n >= 1.0 { (n as usize).min(MAX_SUBSTEPS) } else { 1 }
}

/// Advances the vehicle by `dt` seconds with RK4, sub-stepped when the
/// lateral dynamics are stiff (low speed).
pub fn step(
    state: &VehicleState,
    action: &Action,
    terrain: &TerrainModel,
    params: &VehicleParams,
    dt: f64,
) -> Result<VehicleState> {
    if !(dt > 0.0 && dt <= 0.1) {
        return Err(Error::config("dt must lie in (0, 0.1]"));
    }
    let action = action.clamped();
    let f = |s: &Planar| derivative(s, state.roll, state.pitch, &action, params);
    let n = substeps(state.v_x, dt, params);
    let h = dt / n as f64;
    let mut s1 = Planar([state.x, state.y, state.yaw, state.v_x, state.v_y, state.omega]);
    let mut last = [0.0; 6];
    for _ in 0..n {
        let k1 = f(&s1);
        let k2 = f(&s1.axpy(0.5 * h, &k1));
        let k3 = f(&s1.axpy(0.5 * h, &k2));
        let k4 = f(&s1.axpy(h, &k3));
        for (i, a) in last.iter_mut().enumerate() {
            *a = (k1.0[i] + 2.0 * k2.0[i] + 2.0 * k3.0[i] + k4.0[i]) / 6.0;
        }
        s1 = s1.axpy(h, &Planar(last));
    }
    let avg = last;
    let [x, y, yaw, mut v_x, v_y, omega] = s1.0;
    // braking never reverses the direction of travel
    if action.brake > 0.0 && state.v_x != 0.0 && signum0(v_x) != signum0(state.v_x) {
        v_x = 0.0;
    }
    let next = VehicleState {
        x,
        y,
        yaw: wrap_angle(yaw),
        v_x,
        v_y,
        omega,
        a_x: (v_x - state.v_x) / dt,
        a_y: avg[4],
        ..*state
    };
    if !next.is_finite() {
        return Err(Error::Fault(alloc::format!("non-finite vehicle state after step: {next:?}")));
    }
    conform(&next, terrain, params)
}

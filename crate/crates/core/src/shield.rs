//! Lane-keeping safety shield built on second-order control barrier functions.
//!
//! With `x` the signed lateral offset (positive right) and `L` the trail
//! width, the two barriers are `h_left = L/2 - x` and `h_right = L/2 + x`.
//! Each must satisfy `ḧ + 2λḣ + λ²h ≥ 0`, and since only `ẍ` depends on the
//! steering angle, each condition is an affine function of `δ`.
//!
//! The shield solves
//!
//! ```text
//! min_u  K_viol·(C_left(u)² + C_right(u)²) + (u - u_ref)²   s.t. u_min ≤ u ≤ u_max
//! ```
//!
//! with `C_side(u) = max(0, -g_side(u))`, exactly: the objective is a
//! piecewise quadratic with at most two breakpoints.
//!
//! The lateral kinematics are written for a lateral axis that points the
//! same way as `x`; heading error, lateral speed, yaw rate, curvature and
//! steering (all counter-clockwise in [`FrenetState`]) are mirrored into that
//! frame before the expressions are evaluated.

use alloc::vec::Vec;
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frenet::FrenetState;
use crate::vehicle::{Action, VehicleParams};

/// Closed-form model for the lateral-speed derivative used inside `ẍ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LateralModel {
    /// Linear single-track model:
    /// `v̇⊥ = -2(C_f+C_r)/(m v)·v⊥ - (v + 2(l_f C_f - l_r C_r)/(m v))·ω + 2 C_f/m·δ`.
    #[default]
    LinearBicycle,
    /// `v̇⊥ = -2(C_f+C_r)/(m v)·v⊥ - 2(l_f C_f² + l_r C_r²)/(I_z v) + 2 l_f C_f/I_z·δ`,
    /// term for term.
    Printed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShieldConfig {
    /// Barrier gain λ (1/s).
    pub lambda: f64,
    pub k_viol: f64,
    /// Gain on `(u - u_ref)²` in the constraint penalty.
    pub k_constraint: f64,
    pub u_min: f64,
    pub u_max: f64,
    /// Lane width `L`; the environment sets it to the episode's trail width.
    pub trail_width: f64,
    pub enabled: bool,
    /// Slack above which a step counts as a violation.
    pub viol_tol: f64,
    pub model: LateralModel,
}

impl Default for ShieldConfig {
    fn default() -> Self {
        Self {
            lambda: 1.5,
            k_viol: 1e4,
            k_constraint: 1.0,
            u_min: -1.0,
            u_max: 1.0,
            trail_width: 8.0,
            enabled: true,
            viol_tol: 1e-3,
            model: LateralModel::LinearBicycle,
        }
    }
}

impl ShieldConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::config("shield lambda must be positive"));
        }
        if !(self.k_viol > 0.0) {
            return Err(Error::config("shield k_viol must be positive"));
        }
        if !(self.u_min < self.u_max) {
            return Err(Error::config("shield needs u_min < u_max"));
        }
        if !(self.k_constraint >= 0.0 && self.viol_tol >= 0.0) {
            return Err(Error::config("shield k_constraint and viol_tol must be non-negative"));
        }
        Ok(())
    }
}

/// `g(δ) = slope·δ + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub slope: f64,
    pub offset: f64,
}

impl Affine {
    pub fn eval(&self, u: f64) -> f64 {
        self.slope * u + self.offset
    }

    /// Positive part of `-g(u)`.
    pub fn slack(&self, u: f64) -> f64 {
        (-self.eval(u)).max(0.0)
    }
}

/// The two barrier conditions as affine functions of the steering angle (rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneConstraints {
    /// Condition on `h = L/2 - x`.
    pub left: Affine,
    /// Condition on `h = L/2 + x`.
    pub right: Affine,
}

/// Lateral kinematics in the mirrored frame, split into the part that does
/// not depend on steering and the gain on steering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LateralTerms {
    pub x_dot: f64,
    /// `ẍ` at zero steering.
    pub x_ddot0: f64,
    /// `∂ẍ/∂δ` for the physical (counter-clockwise) steering angle.
    pub x_ddot_gain: f64,
}

pub fn lateral_terms(frenet: &FrenetState, a_x: f64, params: &VehicleParams, model: LateralModel) -> LateralTerms {
    let theta = -frenet.theta;
    let v_perp = -frenet.v_perp;
    let omega = -frenet.omega;
    let curv = -frenet.c;
    let v = frenet.v;
    let v_den = v.max(params.v_eps);
    let (cf, cr) = (params.c_f_lin, params.c_r_lin);
    let (lf, lr, m, iz) = (params.l_f, params.l_r, params.m, params.i_z);

    let (vp_dot0, vp_gain) = match model {
        LateralModel::LinearBicycle => (
            -2.0 * (cf + cr) / (m * v_den) * v_perp - (v + 2.0 * (lf * cf - lr * cr) / (m * v_den)) * omega,
            2.0 * cf / m,
        ),
        LateralModel::Printed => (
            -2.0 * (cf + cr) / (m * v_den) * v_perp - 2.0 * (lf * cf * cf + lr * cr * cr) / (iz * v_den),
            2.0 * lf * cf / iz,
        ),
    };
    let (st, ct) = Float::sin_cos(theta);
    let x_dot = v_perp * ct + v * st;
    let x_ddot0 = vp_dot0 * ct + a_x * st + (omega - v * curv) * (-v_perp * st + v * ct);
    // mirrored steering is -δ
    let x_ddot_gain = -vp_gain * ct;
    LateralTerms { x_dot, x_ddot0, x_ddot_gain }
}

/// Both second-order barrier conditions, affine in the steering angle.
pub fn cbf_constraints(frenet: &FrenetState, a_x: f64, params: &VehicleParams, config: &ShieldConfig) -> LaneConstraints {
    let t = lateral_terms(frenet, a_x, params, config.model);
    let lam = config.lambda;
    let half = 0.5 * config.trail_width;
    let x = frenet.x_lat;
    LaneConstraints {
        right: Affine { slope: t.x_ddot_gain, offset: t.x_ddot0 + 2.0 * lam * t.x_dot + lam * lam * (half + x) },
        left: Affine { slope: -t.x_ddot_gain, offset: -t.x_ddot0 - 2.0 * lam * t.x_dot + lam * lam * (half - x) },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShieldResult {
    pub u_ref: f64,
    pub u_safe: f64,
    pub c_left: f64,
    pub c_right: f64,
    pub modified: bool,
    pub r_constraint: f64,
    pub violation: bool,
    /// Input action with its steering replaced by `u_safe`.
    pub action: Action,
}

impl ShieldResult {
    pub fn passthrough(action: &Action) -> Self {
        Self {
            u_ref: action.steer,
            u_safe: action.steer,
            c_left: 0.0,
            c_right: 0.0,
            modified: false,
            r_constraint: 0.0,
            violation: false,
            action: *action,
        }
    }
}

/// Shield objective for steering command `u` under constraints expressed
/// in the steering command.
pub fn objective(sides: &[Affine; 2], k_viol: f64, u_ref: f64, u: f64) -> f64 {
    let c0 = sides[0].slack(u);
    let c1 = sides[1].slack(u);
    k_viol * (c0 * c0 + c1 * c1) + (u - u_ref) * (u - u_ref)
}

/// Exact minimizer of [`objective`] over `[u_min, u_max]`.
pub fn solve(sides: &[Affine; 2], k_viol: f64, u_ref: f64, u_min: f64, u_max: f64) -> f64 {
    let mut cuts: Vec<f64> = sides
        .iter()
        .filter(|g| g.slope != 0.0)
        .map(|g| -g.offset / g.slope)
        .filter(|r| *r > u_min && *r < u_max)
        .collect();
    cuts.sort_by(|a, b| a.total_cmp(b));
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(u_min);
    edges.extend(cuts);
    edges.push(u_max);

    let mut best_u = u_ref.clamp(u_min, u_max);
    let mut best_j = objective(sides, k_viol, u_ref, best_u);
    for pair in edges.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        let mid = 0.5 * (lo + hi);
        let (mut num, mut den) = (u_ref, 1.0);
        for g in sides {
            if g.eval(mid) < 0.0 {
                num -= k_viol * g.slope * g.offset;
                den += k_viol * g.slope * g.slope;
            }
        }
        let u = (num / den).clamp(lo, hi);
        let j = objective(sides, k_viol, u_ref, u);
        if j < best_j {
            best_j = j;
            best_u = u;
        }
    }
    best_u
}

/// Filters the steering of `action`; throttle and brake pass through.
pub fn filter_action(
    action: &Action,
    frenet: &FrenetState,
    a_x: f64,
    params: &VehicleParams,
    config: &ShieldConfig,
) -> Result<ShieldResult> {
    if !config.enabled {
        return Ok(ShieldResult::passthrough(action));
    }
    let finite = [action.steer, frenet.x_lat, frenet.theta, frenet.v, frenet.v_perp, frenet.omega, frenet.c, a_x]
        .iter()
        .all(|v| v.is_finite());
    if !finite {
        return Err(Error::fault("non-finite input to the shield"));
    }
    let lane = cbf_constraints(frenet, a_x, params, config);
    // δ = u·delta_max
    let per_command = |g: Affine| Affine { slope: g.slope * params.delta_max, offset: g.offset };
    let sides = [per_command(lane.left), per_command(lane.right)];
    let u_ref = action.steer;
    let u_safe = solve(&sides, config.k_viol, u_ref, config.u_min, config.u_max);
    let c_left = sides[0].slack(u_safe);
    let c_right = sides[1].slack(u_safe);
    let result = ShieldResult {
        u_ref,
        u_safe,
        c_left,
        c_right,
        modified: Float::abs(u_safe - u_ref) > 1e-9,
        r_constraint: config.k_constraint * (u_safe - u_ref) * (u_safe - u_ref),
        violation: c_left.max(c_right) > config.viol_tol,
        action: Action { steer: u_safe, ..*action },
    };
    Ok(result)
}

/// True iff either slack at `u_safe` exceeds `viol_tol` (strictly).
pub fn violation_flag(result: &ShieldResult, viol_tol: f64) -> bool {
    result.c_left.max(result.c_right) > viol_tol
}

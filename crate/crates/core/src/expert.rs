//! Rule-based privileged driver.
//!
//! Picks a lateral offset inside the trail that trades obstacle proximity,
//! distance from the centre and terrain roughness, steers towards it with
//! pure pursuit and holds a curvature-dependent target speed.

use alloc::vec::Vec;
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::frenet::{Centerline, FrenetState};
use crate::grid::Grid;
use crate::sensors::ScandotSpec;
use crate::terrain::Obstacle;
use crate::vehicle::{Action, VehicleParams, VehicleState};

const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpertConfig {
    /// Pure-pursuit lookahead along the trail (m).
    pub lookahead: f64,
    pub target_speed: f64,
    pub curvature_slowdown: f64,
    /// Number of candidate offsets; odd so the centre is a candidate.
    pub n_offsets: usize,
    /// Candidates span `[-w/2 + edge_margin, w/2 - edge_margin]`.
    pub edge_margin: f64,
    /// Desired gap between the vehicle's bounding circle and an obstacle's surface.
    pub obstacle_clearance: f64,
    /// Trail distance ahead over which obstacles are scored.
    pub obstacle_horizon: f64,
    pub sample_spacing: f64,
    pub kp_speed: f64,
    pub w_obs: f64,
    pub w_center: f64,
    pub w_rough: f64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            lookahead: 6.0,
            target_speed: 6.0,
            curvature_slowdown: 5.0,
            n_offsets: 9,
            edge_margin: 1.0,
            obstacle_clearance: 1.0,
            obstacle_horizon: 15.0,
            sample_spacing: 0.5,
            kp_speed: 0.5,
            w_obs: 10.0,
            w_center: 0.2,
            w_rough: 1.0,
        }
    }
}

/// Everything the expert may look at.
#[derive(Debug, Clone, Copy)]
pub struct ExpertInput<'a> {
    pub state: &'a VehicleState,
    pub frenet: &'a FrenetState,
    pub centerline: &'a Centerline,
    pub trail_width: f64,
    pub scandots: Option<(&'a Grid<f64>, &'a ScandotSpec)>,
    pub obstacles: &'a [Obstacle],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpertDecision {
    pub action: Action,
    /// Chosen lateral offset (positive right).
    pub offset: f64,
}

pub fn candidate_offsets(trail_width: f64, config: &ExpertConfig) -> Vec<f64> {
    let n = config.n_offsets.max(1);
    let half = (0.5 * trail_width - config.edge_margin).max(0.0);
    if n == 1 || half == 0.0 {
        return alloc::vec![0.0];
    }
    (0..n).map(|k| -half + 2.0 * half * k as f64 / (n - 1) as f64).collect()
}

fn obstacle_costs(input: &ExpertInput<'_>, offsets: &[f64], config: &ExpertConfig, params: &VehicleParams) -> Vec<f64> {
    let mut costs = alloc::vec![0.0; offsets.len()];
    let gap = params.veh_radius + config.obstacle_clearance;
    let reach = config.obstacle_horizon + 0.5 * input.trail_width + gap;
    let near: Vec<&Obstacle> = input
        .obstacles
        .iter()
        .filter(|o| {
            let (dx, dy) = (o.center_x - input.state.x, o.center_y - input.state.y);
            let r = reach + o.radius;
            dx * dx + dy * dy <= r * r
        })
        .collect();
    if near.is_empty() {
        return costs;
    }
    let ds = config.sample_spacing.max(1e-3);
    let n = Float::ceil(config.obstacle_horizon / ds) as usize;
    for k in 0..=n {
        let (cx, cy, tangent) = input.centerline.point_at(input.frenet.s + k as f64 * ds, 0.0);
        let (ty, tx) = Float::sin_cos(tangent);
        for (cost, &l) in costs.iter_mut().zip(offsets) {
            let (px, py) = (cx + l * ty, cy - l * tx);
            for o in &near {
                let d = Float::hypot(px - o.center_x, py - o.center_y);
                let pen = (o.radius + gap - d).max(0.0);
                *cost += pen * pen * ds;
            }
        }
    }
    costs
}

/// Variance of the scandot column closest to lateral offset `offset`.
fn roughness(dots: &Grid<f64>, spec: &ScandotSpec, offset: f64) -> f64 {
    if dots.cols() == 0 || dots.rows() == 0 {
        return 0.0;
    }
    // body y is left-positive, offsets are right-positive
    let target = -offset;
    let (lo, hi) = (spec.lateral[0], spec.lateral[1]);
    let pos = if dots.cols() > 1 && hi > lo {
        ((target - lo) / (hi - lo) * (dots.cols() - 1) as f64).clamp(0.0, (dots.cols() - 1) as f64)
    } else {
        0.0
    };
    let col = Float::round(pos) as usize;
    let samples: Vec<f64> =
        (0..dots.rows()).map(|r| dots[(r, col)]).filter(|h| *h != spec.sentinel).collect();
    if samples.len() < 2 {
        return 0.0;
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    samples.iter().map(|h| (h - mean) * (h - mean)).sum::<f64>() / samples.len() as f64
}

/// Cost of each candidate offset, in the order of [`candidate_offsets`].
pub fn offset_costs(
    input: &ExpertInput<'_>,
    offsets: &[f64],
    config: &ExpertConfig,
    params: &VehicleParams,
) -> Vec<f64> {
    let obs = obstacle_costs(input, offsets, config, params);
    offsets
        .iter()
        .zip(obs)
        .map(|(&l, o)| {
            let rough = input.scandots.map_or(0.0, |(g, spec)| roughness(g, spec, l));
            config.w_obs * o + config.w_center * l * l + config.w_rough * rough
        })
        .collect()
}

/// Lowest cost wins; near-ties go to the smaller `|offset|`, then the negative one.
pub fn select_offset(offsets: &[f64], costs: &[f64]) -> f64 {
    let mut best: Option<(f64, f64)> = None;
    for (&l, &c) in offsets.iter().zip(costs) {
        best = match best {
            None => Some((l, c)),
            Some((bl, bc)) => {
                let better = if c < bc - TIE_EPS {
                    true
                } else if Float::abs(c - bc) <= TIE_EPS {
                    let (al, abl) = (Float::abs(l), Float::abs(bl));
                    al < abl || (al == abl && l < bl)
                } else {
                    false
                };
                if better { Some((l, c)) } else { Some((bl, bc)) }
            }
        };
    }
    best.map_or(0.0, |(l, _)| l)
}

/// Pure-pursuit steering command towards `(tx, ty)`.
pub fn pure_pursuit(state: &VehicleState, tx: f64, ty: f64, params: &VehicleParams) -> f64 {
    let (sy, cy) = Float::sin_cos(state.yaw);
    let (wx, wy) = (tx - state.x, ty - state.y);
    let dx = cy * wx + sy * wy;
    let dy = -sy * wx + cy * wy;
    let dist_sq = dx * dx + dy * dy;
    if dist_sq == 0.0 {
        return 0.0;
    }
    let curvature = 2.0 * dy / dist_sq;
    let delta = Float::atan(curvature * params.wheelbase());
    (delta / params.delta_max).clamp(-1.0, 1.0)
}

/// Throttle and brake for the curvature-dependent target speed.
pub fn speed_control(v: f64, curvature: f64, config: &ExpertConfig) -> (f64, f64) {
    let v_target = config.target_speed / (1.0 + config.curvature_slowdown * Float::abs(curvature));
    let throttle = (config.kp_speed * (v_target - v)).clamp(0.0, 1.0);
    let brake = if v - v_target > 1.0 { (config.kp_speed * (v - v_target)).clamp(0.0, 1.0) } else { 0.0 };
    (throttle, brake)
}

pub fn expert_action(input: &ExpertInput<'_>, config: &ExpertConfig, params: &VehicleParams) -> ExpertDecision {
    let offsets = candidate_offsets(input.trail_width, config);
    let costs = offset_costs(input, &offsets, config, params);
    let offset = select_offset(&offsets, &costs);
    let (tx, ty, _) = input.centerline.point_at(input.frenet.s + config.lookahead, offset);
    let steer = pure_pursuit(input.state, tx, ty, params);
    let (throttle, brake) = speed_control(input.frenet.v, input.frenet.c, config);
    ExpertDecision { action: Action::new(steer, throttle, brake), offset }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_are_symmetric_and_include_centre() {
        let o = candidate_offsets(8.0, &ExpertConfig::default());
        assert_eq!(o.len(), 9);
        assert_eq!(o[0], -3.0);
        assert_eq!(o[8], 3.0);
        assert_eq!(o[4], 0.0);
        assert_eq!(candidate_offsets(1.5, &ExpertConfig::default()), alloc::vec![0.0]);
    }

    #[test]
    fn ties_prefer_centre_then_negative() {
        let offsets = [-1.0, 0.0, 1.0];
        assert_eq!(select_offset(&offsets, &[1.0, 1.0, 1.0]), 0.0);
        assert_eq!(select_offset(&offsets, &[0.5, 1.0, 0.5]), -1.0);
        assert_eq!(select_offset(&offsets, &[0.5, 1.0, 0.4]), 1.0);
    }

    #[test]
    fn speed_law() {
        let cfg = ExpertConfig::default();
        let (t, b) = speed_control(12.0, 0.0, &cfg);
        assert_eq!(t, 0.0);
        assert!(b > 0.0);
        let (t, b) = speed_control(6.0, 0.0, &cfg);
        assert_eq!((t, b), (0.0, 0.0));
        let (t, b) = speed_control(2.0, 0.0, &cfg);
        assert!(t > 0.0 && b == 0.0);
    }
}

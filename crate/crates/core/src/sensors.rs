//! Scandots, ray-cast depth camera and IMU.

use alloc::vec::Vec;
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::frenet::FrenetState;
use crate::grid::Grid;
use crate::terrain::{Obstacle, TerrainModel};
use crate::vehicle::{VehicleParams, VehicleState};

/// Body-frame height-sample lattice ahead of the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScandotSpec {
    pub rows: usize,
    pub cols: usize,
    /// Longitudinal span (m ahead of the CoM) covered by the rows.
    pub forward: [f64; 2],
    /// Lateral span (body y, left positive) covered by the columns.
    pub lateral: [f64; 2],
    /// Reported for samples that fall off the terrain.
    pub sentinel: f64,
}

impl Default for ScandotSpec {
    fn default() -> Self {
        Self { rows: 15, cols: 11, forward: [0.0, 14.0], lateral: [-5.0, 5.0], sentinel: 30.0 }
    }
}

impl ScandotSpec {
    fn axis(span: [f64; 2], n: usize, k: usize) -> f64 {
        if n <= 1 {
            span[0]
        } else {
            span[0] + (span[1] - span[0]) * k as f64 / (n - 1) as f64
        }
    }

    /// Body-frame `(forward, left)` offset of sample `(row, col)`.
    pub fn offset(&self, row: usize, col: usize) -> (f64, f64) {
        (Self::axis(self.forward, self.rows, row), Self::axis(self.lateral, self.cols, col))
    }
}

/// Pinhole depth camera rigidly mounted on the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraSpec {
    pub width: usize,
    pub height: usize,
    pub fov_h: f64,
    pub fov_v: f64,
    pub max_range: f64,
    /// Height of the optical centre above the CoM.
    pub mount_height: f64,
    /// Forward offset of the optical centre from the CoM.
    pub mount_forward: f64,
    /// Downward tilt of the optical axis (radians).
    pub mount_pitch: f64,
    pub march_step: f64,
    pub refine_tol: f64,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            fov_h: core::f64::consts::FRAC_PI_2,
            fov_v: core::f64::consts::FRAC_PI_2,
            max_range: 30.0,
            mount_height: 0.5,
            mount_forward: 0.0,
            mount_pitch: 10f64.to_radians(),
            march_step: 0.1,
            refine_tol: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: [f64; 3],
    /// Unit direction.
    pub dir: [f64; 3],
}

type Mat3 = [[f64; 3]; 3];

fn mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

fn apply(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

fn rot_z(a: f64) -> Mat3 {
    let (s, c) = Float::sin_cos(a);
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

/// Rotation about +y; positive angles tip +x towards -z (nose down).
fn rot_y(a: f64) -> Mat3 {
    let (s, c) = Float::sin_cos(a);
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

fn rot_x(a: f64) -> Mat3 {
    let (s, c) = Float::sin_cos(a);
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

/// Body-to-world attitude for the vehicle's yaw, nose-up pitch and roll.
pub fn body_to_world(state: &VehicleState) -> [[f64; 3]; 3] {
    mul(&mul(&rot_z(state.yaw), &rot_y(-state.pitch)), &rot_x(state.roll))
}

/// Terrain heights relative to the vehicle CoM on the body-frame lattice.
pub fn scandots(terrain: &TerrainModel, state: &VehicleState, spec: &ScandotSpec) -> Grid<f64> {
    let (sy, cy) = Float::sin_cos(state.yaw);
    Grid::from_fn(spec.rows, spec.cols, |r, c| {
        let (fx, ly) = spec.offset(r, c);
        let wx = state.x + cy * fx - sy * ly;
        let wy = state.y + sy * fx + cy * ly;
        match terrain.height_at(wx, wy) {
            Ok(h) => h - state.z,
            Err(_) => spec.sentinel,
        }
    })
}

impl CameraSpec {
    /// World-frame ray through the centre of pixel `(row, col)`; row 0 is the
    /// top of the image and col 0 its left edge.
    pub fn pixel_ray(&self, state: &VehicleState, row: usize, col: usize) -> Ray {
        let r = body_to_world(state);
        let origin_body = [self.mount_forward, 0.0, self.mount_height];
        let o = apply(&r, origin_body);
        let cam = mul(&r, &rot_y(self.mount_pitch));
        let half_w = 0.5 * self.width as f64;
        let half_h = 0.5 * self.height as f64;
        let u = (col as f64 + 0.5 - half_w) / half_w * Float::tan(0.5 * self.fov_h);
        let v = (row as f64 + 0.5 - half_h) / half_h * Float::tan(0.5 * self.fov_v);
        // camera frame: x forward, y left, z up
        let d = [1.0, -u, -v];
        let n = Float::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
        let d = apply(&cam, [d[0] / n, d[1] / n, d[2] / n]);
        Ray { origin: [state.x + o[0], state.y + o[1], state.z + o[2]], dir: d }
    }
}

/// Distance along `ray` to a capped vertical cylinder standing on `base`.
pub fn ray_cylinder(ray: &Ray, cx: f64, cy: f64, radius: f64, base: f64, top: f64) -> Option<f64> {
    let [ox, oy, oz] = ray.origin;
    let [dx, dy, dz] = ray.dir;
    let (px, py) = (ox - cx, oy - cy);
    let mut best: Option<f64> = None;
    let mut take = |t: f64| {
        if t >= 0.0 && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    };
    let a = dx * dx + dy * dy;
    if a > 0.0 {
        let b = px * dx + py * dy;
        let c = px * px + py * py - radius * radius;
        let disc = b * b - a * c;
        if disc >= 0.0 {
            let sq = Float::sqrt(disc);
            for t in [(-b - sq) / a, (-b + sq) / a] {
                let z = oz + t * dz;
                if z >= base && z <= top {
                    take(t);
                }
            }
        }
    }
    if dz != 0.0 {
        for cap in [top, base] {
            let t = (cap - oz) / dz;
            let (hx, hy) = (px + t * dx, py + t * dy);
            if hx * hx + hy * hy <= radius * radius {
                take(t);
            }
        }
    }
    best
}

fn terrain_gap(terrain: &TerrainModel, ray: &Ray, t: f64) -> Option<f64> {
    let p = [ray.origin[0] + t * ray.dir[0], ray.origin[1] + t * ray.dir[1], ray.origin[2] + t * ray.dir[2]];
    terrain.height_at(p[0], p[1]).ok().map(|h| p[2] - h)
}

/// First terrain hit along `ray` within `max_range`: fixed-step march,
/// bisection down to `refine_tol`, then a secant step inside the bracket.
pub fn march_terrain(terrain: &TerrainModel, ray: &Ray, spec: &CameraSpec) -> Option<f64> {
    let mut t_prev = 0.0;
    let mut gap_prev = terrain_gap(terrain, ray, 0.0)?;
    if gap_prev <= 0.0 {
        return Some(0.0);
    }
    let mut k = 1usize;
    loop {
        let t = (k as f64 * spec.march_step).min(spec.max_range);
        let gap = terrain_gap(terrain, ray, t)?;
        if gap <= 0.0 {
            let (mut lo, mut hi) = (t_prev, t);
            let (mut g_lo, mut g_hi) = (gap_prev, gap);
            while hi - lo > spec.refine_tol {
                let mid = 0.5 * (lo + hi);
                let g = terrain_gap(terrain, ray, mid)?;
                if g > 0.0 {
                    lo = mid;
                    g_lo = g;
                } else {
                    hi = mid;
                    g_hi = g;
                }
            }
            let secant = lo + (hi - lo) * g_lo / (g_lo - g_hi);
            return Some(if secant.is_finite() { secant.clamp(lo, hi) } else { hi });
        }
        if t >= spec.max_range {
            return None;
        }
        t_prev = t;
        gap_prev = gap;
        k += 1;
    }
}

/// Renders the depth image (metres along each ray, `max_range` on a miss).
pub fn render_depth(terrain: &TerrainModel, obstacles: &[Obstacle], state: &VehicleState, spec: &CameraSpec) -> Grid<f32> {
    let centre = spec.pixel_ray(state, spec.height / 2, spec.width / 2).origin;
    let reach = spec.max_range;
    // obstacle footprints that can be within range, with their base heights
    let near: Vec<(&Obstacle, f64)> = obstacles
        .iter()
        .filter(|o| {
            let (dx, dy) = (o.center_x - centre[0], o.center_y - centre[1]);
            let r = reach + o.radius;
            dx * dx + dy * dy <= r * r
        })
        .filter_map(|o| terrain.height_at(o.center_x, o.center_y).ok().map(|b| (o, b)))
        .collect();
    Grid::from_fn(spec.height, spec.width, |row, col| {
        let ray = spec.pixel_ray(state, row, col);
        let mut depth = march_terrain(terrain, &ray, spec).unwrap_or(spec.max_range);
        for (o, base) in &near {
            if let Some(t) = ray_cylinder(&ray, o.center_x, o.center_y, o.radius, *base, base + o.height) {
                depth = depth.min(t);
            }
        }
        depth.clamp(f32::MIN_POSITIVE as f64, spec.max_range) as f32
    })
}

/// One IMU reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuReading {
    /// Body-frame specific force (m/s²); reads `(0, 0, g)` at rest on flat ground.
    pub accel: [f64; 3],
    /// Roll rate, pitch rate and yaw rate (rad/s).
    pub gyro: [f64; 3],
    pub roll: f64,
    pub pitch: f64,
}

/// IMU from the current and previous vehicle states. `noise_std` adds
/// zero-mean Gaussian noise to accel and gyro when positive.
pub fn imu<R: Rng + ?Sized>(
    state: &VehicleState,
    prev: &VehicleState,
    dt: f64,
    params: &VehicleParams,
    noise_std: f64,
    rng: &mut R,
) -> ImuReading {
    let kin = [state.a_x - state.v_y * state.omega, state.a_y + state.v_x * state.omega, 0.0];
    let r = body_to_world(state);
    // gravity enters as +g·Rᵀ·e_z
    let up = [r[2][0], r[2][1], r[2][2]];
    let mut accel = [kin[0] + params.g * up[0], kin[1] + params.g * up[1], kin[2] + params.g * up[2]];
    let mut gyro = [(state.roll - prev.roll) / dt, (state.pitch - prev.pitch) / dt, state.omega];
    if noise_std > 0.0 {
        for v in accel.iter_mut().chain(gyro.iter_mut()) {
            let z: f64 = StandardNormal.sample(rng);
            *v += noise_std * z;
        }
    }
    ImuReading { accel, gyro, roll: state.roll, pitch: state.pitch }
}

/// Sensor bundle handed to policies. Scandots and depth are present only
/// when the observation mode asks for them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub imu_accel: [f64; 3],
    pub imu_gyro: [f64; 3],
    pub roll: f64,
    pub pitch: f64,
    pub frenet: FrenetState,
    pub scandots: Option<Grid<f64>>,
    pub depth: Option<Grid<f32>>,
}

//! Procedural trail terrain.
//!
//! A terrain is an inclined plane, plus side hills that start at the trail
//! edges, plus a sum of sinusoidal modes, plus per-cell Gaussian noise whose
//! spread depends on whether the cell is on the trail. Everything is baked
//! into an `M × M` height grid at construction; queries interpolate the grid.
//!
//! Cell `(i, j)` sits at world `(i·resolution, j·resolution)`.

use alloc::vec::Vec;
use core::f64::consts::PI;
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frenet::{Centerline, Cubic};
use crate::grid::Grid;

const RNG_STREAM_PARAMS: u64 = 0;
const RNG_STREAM_NOISE: u64 = 1;
const RNG_STREAM_OBSTACLES: u64 = 2;

/// Width of the smoothing band where the flat trail meets a side hill.
pub const HILL_BLEND_BAND: f64 = 1.0;

/// Closed sampling interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub const fn point(v: f64) -> Self {
        Self { min: v, max: v }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.min <= v && v <= self.max
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(Error::Config(alloc::format!("range `{name}` has a non-finite bound")));
        }
        if self.min > self.max {
            return Err(Error::Config(alloc::format!(
                "range `{name}` has min {} > max {}",
                self.min,
                self.max
            )));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // Always draw so that collapsing one range does not shift the stream.
        let u: f64 = rng.random();
        if self.min == self.max {
            self.min
        } else {
            (self.min + u * (self.max - self.min)).min(self.max)
        }
    }
}

/// How the configured noise magnitudes are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScale {
    #[default]
    StdDev,
    Variance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObstacleRanges {
    /// Trees per km², placed off-trail only.
    pub tree_density: f64,
    /// Rocks per km², placed anywhere.
    pub rock_density: f64,
    pub radius: Range,
    pub tree_height: Range,
    pub rock_height: Range,
    /// No obstacle centre is placed closer than this to the spawn point.
    pub spawn_clearance: f64,
    pub max_retries: u32,
}

impl Default for ObstacleRanges {
    fn default() -> Self {
        Self {
            tree_density: 1500.0,
            rock_density: 300.0,
            radius: Range::new(0.2, 1.0),
            tree_height: Range::new(0.5, 4.0),
            rock_height: Range::new(0.1, 0.5),
            spawn_clearance: 8.0,
            max_retries: 64,
        }
    }
}

/// Per-episode sampling ranges for every terrain parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomizationRanges {
    /// Constant term of the centerline; `None` centres the trail in the grid.
    pub a0: Option<f64>,
    pub b: Range,
    pub c: Range,
    pub d: Range,
    pub width: Range,
    /// Shared by both incline angles.
    pub alpha: Range,
    /// Side-hill angles are drawn from `[-beta_max, beta_max]`.
    pub beta_max: f64,
    /// Mode amplitudes are drawn from `[0, gamma_max]`.
    pub gamma_max: f64,
    pub modes: usize,
    pub sigma_trail: Range,
    pub sigma_nontrail: Range,
    pub noise_scale: NoiseScale,
    pub grid_size: usize,
    pub resolution: f64,
    /// Distance from the grid's x = 0 edge to the spawn point.
    pub start_margin: f64,
    /// The trail ends where the centerline comes within this of a grid edge.
    pub end_margin: f64,
    pub obstacles: ObstacleRanges,
}

impl Default for RandomizationRanges {
    fn default() -> Self {
        Self {
            a0: None,
            b: Range::new(-0.1, 0.1),
            c: Range::new(-5e-4, 5e-4),
            d: Range::new(-2e-6, 2e-6),
            width: Range::new(4.0, 12.0),
            alpha: Range::new(-0.05, 0.05),
            beta_max: 0.3,
            gamma_max: 0.01,
            modes: 8,
            sigma_trail: Range::new(0.0, 0.005),
            sigma_nontrail: Range::new(0.02, 0.05),
            noise_scale: NoiseScale::StdDev,
            grid_size: 512,
            resolution: 0.5,
            start_margin: 10.0,
            end_margin: 10.0,
            obstacles: ObstacleRanges::default(),
        }
    }
}

impl RandomizationRanges {
    /// A featureless plane: straight centred trail, no hills, modes, noise or obstacles.
    pub fn flat(width: f64) -> Self {
        Self {
            b: Range::point(0.0),
            c: Range::point(0.0),
            d: Range::point(0.0),
            width: Range::point(width),
            alpha: Range::point(0.0),
            beta_max: 0.0,
            gamma_max: 0.0,
            sigma_trail: Range::point(0.0),
            sigma_nontrail: Range::point(0.0),
            obstacles: ObstacleRanges { tree_density: 0.0, rock_density: 0.0, ..ObstacleRanges::default() },
            ..Self::default()
        }
    }

    pub fn extent(&self) -> f64 {
        (self.grid_size.saturating_sub(1)) as f64 * self.resolution
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("b", &self.b),
            ("c", &self.c),
            ("d", &self.d),
            ("width", &self.width),
            ("alpha", &self.alpha),
            ("sigma_trail", &self.sigma_trail),
            ("sigma_nontrail", &self.sigma_nontrail),
            ("obstacles.radius", &self.obstacles.radius),
            ("obstacles.tree_height", &self.obstacles.tree_height),
            ("obstacles.rock_height", &self.obstacles.rock_height),
        ] {
            r.validate(name)?;
        }
        if self.grid_size < 2 {
            return Err(Error::config("grid_size must be at least 2"));
        }
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(Error::config("resolution must be positive"));
        }
        if self.width.min <= 0.0 {
            return Err(Error::config("trail width must be positive"));
        }
        if self.modes == 0 {
            return Err(Error::config("at least one terrain mode is required"));
        }
        if !(self.beta_max >= 0.0 && self.beta_max < PI / 2.0) {
            return Err(Error::config("beta_max must lie in [0, π/2)"));
        }
        if !(self.alpha.min > -PI / 2.0 && self.alpha.max < PI / 2.0) {
            return Err(Error::config("incline angles must lie in (-π/2, π/2)"));
        }
        if !(self.gamma_max >= 0.0 && self.gamma_max.is_finite()) {
            return Err(Error::config("gamma_max must be non-negative"));
        }
        if self.sigma_trail.min < 0.0 {
            return Err(Error::config("noise magnitudes must be non-negative"));
        }
        if self.sigma_trail.max > self.sigma_nontrail.min {
            return Err(Error::config("sigma_trail range must lie below sigma_nontrail range"));
        }
        let ob = &self.obstacles;
        if ob.radius.min <= 0.0 {
            return Err(Error::config("obstacle radius must be positive"));
        }
        if !(ob.tree_density >= 0.0 && ob.rock_density >= 0.0) {
            return Err(Error::config("obstacle densities must be non-negative"));
        }
        let ext = self.extent();
        if !(self.start_margin >= 0.0 && self.start_margin < ext) {
            return Err(Error::config("start_margin must lie inside the grid"));
        }
        if let Some(a0) = self.a0 {
            if !(0.0..=ext).contains(&a0) {
                return Err(Error::config("a0 must lie inside the grid"));
            }
        }
        Ok(())
    }
}

/// Sampled parameters of one terrain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainParams {
    pub a0: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub w: f64,
    pub alpha_x: f64,
    pub alpha_y: f64,
    pub beta_left: f64,
    pub beta_right: f64,
    /// Number of modes per axis.
    pub modes: usize,
    /// `modes × modes` amplitudes; entry `(i-1)·modes + (j-1)` is mode `(i, j)`.
    pub gamma: Vec<f64>,
    pub sigma_trail: f64,
    pub sigma_nontrail: f64,
    pub noise_scale: NoiseScale,
    pub grid_size: usize,
    pub resolution: f64,
    pub x_start: f64,
    pub seed: u64,
}

impl TerrainParams {
    pub fn cubic(&self) -> Cubic {
        Cubic { a0: self.a0, b: self.b, c: self.c, d: self.d }
    }

    pub fn extent(&self) -> f64 {
        (self.grid_size - 1) as f64 * self.resolution
    }

    /// Amplitude of mode `(i, j)`, 1-based.
    pub fn gamma_at(&self, i: usize, j: usize) -> f64 {
        self.gamma[(i - 1) * self.modes + (j - 1)]
    }

    fn noise_std(&self, on_trail: bool) -> f64 {
        let raw = if on_trail { self.sigma_trail } else { self.sigma_nontrail };
        match self.noise_scale {
            NoiseScale::StdDev => raw,
            NoiseScale::Variance => Float::sqrt(raw),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w > 0.0) {
            return Err(Error::config("trail width must be positive"));
        }
        if self.grid_size < 2 || !(self.resolution > 0.0) {
            return Err(Error::config("grid must have at least 2 cells and positive resolution"));
        }
        if self.gamma.len() != self.modes * self.modes {
            return Err(Error::config("gamma must hold modes × modes entries"));
        }
        if !(self.sigma_nontrail >= self.sigma_trail && self.sigma_trail >= 0.0) {
            return Err(Error::config("need sigma_nontrail >= sigma_trail >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleKind {
    Tree,
    Rock,
}

/// A vertical cylinder standing on the terrain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub kind: ObstacleKind,
    #[serde(rename = "x")]
    pub center_x: f64,
    #[serde(rename = "y")]
    pub center_y: f64,
    pub radius: f64,
    pub height: f64,
}

/// One episode's terrain. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct TerrainModel {
    params: TerrainParams,
    centerline: Centerline,
    heights: Grid<f64>,
    obstacles: Vec<Obstacle>,
    x_end: f64,
}

/// `a0 + b·x + c·x² + d·x³`.
pub fn centerline_y(params: &TerrainParams, x: f64) -> f64 {
    params.cubic().y(x)
}

/// Sum of `gamma(i, j)·sin(2πx/i + 2πy/j)` over all modes.
pub fn fourier_height(params: &TerrainParams, x: f64, y: f64) -> f64 {
    let k = params.modes;
    let mut acc = 0.0;
    for i in 1..=k {
        let phase_x = 2.0 * PI * x / i as f64;
        for j in 1..=k {
            let g = params.gamma[(i - 1) * k + (j - 1)];
            if g != 0.0 {
                acc += g * Float::sin(phase_x + 2.0 * PI * y / j as f64);
            }
        }
    }
    acc
}

/// Side-hill elevation at signed lateral offset `offset` (positive right).
///
/// Zero on the trail, `(|offset| - w/2)·tan β` beyond the edge, with a
/// quadratic blend over [`HILL_BLEND_BAND`] centred on the edge so the slope
/// ramps continuously from 0 to `tan β`.
pub fn hill_height(params: &TerrainParams, offset: f64) -> f64 {
    let beta = if offset > 0.0 { params.beta_right } else { params.beta_left };
    let slope = Float::tan(beta);
    let half = 0.5 * HILL_BLEND_BAND;
    let excess = Float::abs(offset) - 0.5 * params.w;
    if excess <= -half {
        0.0
    } else if excess >= half {
        excess * slope
    } else {
        slope * (excess + half) * (excess + half) / (4.0 * half)
    }
}

fn check_extent(params: &TerrainParams, x: f64, y: f64) -> Result<()> {
    let ext = params.extent();
    if (0.0..=ext).contains(&x) && (0.0..=ext).contains(&y) {
        Ok(())
    } else {
        Err(Error::OutOfExtent { x, y })
    }
}

/// Noise-free terrain height.
pub fn base_height(params: &TerrainParams, centerline: &Centerline, x: f64, y: f64) -> Result<f64> {
    check_extent(params, x, y)?;
    let (offset, _) = centerline.lateral_offset(x, y)?;
    Ok(x * Float::tan(params.alpha_x)
        + y * Float::tan(params.alpha_y)
        + hill_height(params, offset)
        + fourier_height(params, x, y))
}

/// Terrain height with one Gaussian noise draw from `rng`; the spread is
/// picked by trail membership.
pub fn compose_height<R: Rng + ?Sized>(
    params: &TerrainParams,
    centerline: &Centerline,
    rng: &mut R,
    x: f64,
    y: f64,
) -> Result<f64> {
    compose_with(params, centerline, rng, x, y, fourier_height(params, x, y))
}

fn compose_with<R: Rng + ?Sized>(
    params: &TerrainParams,
    centerline: &Centerline,
    rng: &mut R,
    x: f64,
    y: f64,
    fourier: f64,
) -> Result<f64> {
    check_extent(params, x, y)?;
    let (offset, _) = centerline.lateral_offset(x, y)?;
    let on_trail = Float::abs(offset) <= 0.5 * params.w;
    let z: f64 = StandardNormal.sample(rng);
    let base = x * Float::tan(params.alpha_x) + y * Float::tan(params.alpha_y) + hill_height(params, offset) + fourier;
    Ok(base + params.noise_std(on_trail) * z)
}

/// `sin(a + b) = sin a·cos b + cos a·sin b` split of the Fourier sum over grid
/// lines, so a full grid costs O(M·K) trig calls instead of O(M²·K²).
fn fourier_grid_rows(params: &TerrainParams) -> (Vec<(f64, f64)>, impl Fn(f64, &[(f64, f64)]) -> f64 + '_) {
    let k = params.modes;
    let m = params.grid_size;
    let res = params.resolution;
    let mut cols = Vec::with_capacity(m * k);
    for c in 0..m {
        let y = c as f64 * res;
        for j in 1..=k {
            cols.push(Float::sin_cos(2.0 * PI * y / j as f64));
        }
    }
    let row = move |x: f64, col: &[(f64, f64)]| {
        let mut acc = 0.0;
        for i in 1..=k {
            let (sx, cx) = Float::sin_cos(2.0 * PI * x / i as f64);
            for (j, &(sy, cy)) in col.iter().enumerate() {
                let g = params.gamma[(i - 1) * k + j];
                acc += g * (sx * cy + cx * sy);
            }
        }
        acc
    };
    (cols, row)
}

/// Seeds the per-purpose ChaCha stream used while building the terrain.
pub fn terrain_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Noise stream used when baking the height grid.
pub fn noise_rng(seed: u64) -> ChaCha8Rng {
    terrain_rng(seed, RNG_STREAM_NOISE)
}

/// Draws terrain parameters from `ranges`.
pub fn sample_params(seed: u64, ranges: &RandomizationRanges) -> Result<TerrainParams> {
    ranges.validate()?;
    let mut rng = terrain_rng(seed, RNG_STREAM_PARAMS);
    let beta = Range::new(-ranges.beta_max, ranges.beta_max);
    let gamma_range = Range::new(0.0, ranges.gamma_max);
    let b = ranges.b.sample(&mut rng);
    let c = ranges.c.sample(&mut rng);
    let d = ranges.d.sample(&mut rng);
    let w = ranges.width.sample(&mut rng);
    let alpha_x = ranges.alpha.sample(&mut rng);
    let alpha_y = ranges.alpha.sample(&mut rng);
    let beta_left = beta.sample(&mut rng);
    let beta_right = beta.sample(&mut rng);
    let gamma = (0..ranges.modes * ranges.modes).map(|_| gamma_range.sample(&mut rng)).collect();
    let sigma_trail = ranges.sigma_trail.sample(&mut rng);
    let sigma_nontrail = ranges.sigma_nontrail.sample(&mut rng);
    let ext = ranges.extent();
    Ok(TerrainParams {
        a0: ranges.a0.unwrap_or(ranges.grid_size as f64 * ranges.resolution / 2.0).min(ext),
        b,
        c,
        d,
        w,
        alpha_x,
        alpha_y,
        beta_left,
        beta_right,
        modes: ranges.modes,
        gamma,
        sigma_trail,
        sigma_nontrail,
        noise_scale: ranges.noise_scale,
        grid_size: ranges.grid_size,
        resolution: ranges.resolution,
        x_start: ranges.start_margin,
        seed,
    })
}

/// Samples a complete terrain: parameters, height grid and obstacles.
pub fn sample_terrain(seed: u64, ranges: &RandomizationRanges) -> Result<TerrainModel> {
    let params = sample_params(seed, ranges)?;
    let mut model = TerrainModel::build(params, ranges.end_margin)?;
    model.obstacles = place_obstacles(&model, &ranges.obstacles)?;
    Ok(model)
}

fn place_obstacles(model: &TerrainModel, cfg: &ObstacleRanges) -> Result<Vec<Obstacle>> {
    let mut rng = terrain_rng(model.params.seed, RNG_STREAM_OBSTACLES);
    let ext = model.extent();
    let area_km2 = ext * ext * 1e-6;
    let (sx, sy) = model.spawn_point();
    let far_from_spawn = |x: f64, y: f64| {
        let (dx, dy) = (x - sx, y - sy);
        dx * dx + dy * dy >= cfg.spawn_clearance * cfg.spawn_clearance
    };
    let draw_count = |rng: &mut ChaCha8Rng, density: f64| -> u64 {
        let lambda = density * area_km2;
        if lambda > 0.0 {
            // Poisson::new only rejects non-positive or huge lambda.
            Poisson::new(lambda).map(|p| p.sample(rng) as u64).unwrap_or(0)
        } else {
            0
        }
    };
    let mut out = Vec::new();
    let n_trees = draw_count(&mut rng, cfg.tree_density);
    for _ in 0..n_trees {
        let radius = cfg.radius.sample(&mut rng);
        let height = cfg.tree_height.sample(&mut rng);
        for _ in 0..cfg.max_retries.max(1) {
            let x = rng.random::<f64>() * ext;
            let y = rng.random::<f64>() * ext;
            let (offset, _) = model.centerline.lateral_offset(x, y)?;
            if Float::abs(offset) > 0.5 * model.params.w + radius && far_from_spawn(x, y) {
                out.push(Obstacle { kind: ObstacleKind::Tree, center_x: x, center_y: y, radius, height });
                break;
            }
        }
    }
    let n_rocks = draw_count(&mut rng, cfg.rock_density);
    for _ in 0..n_rocks {
        let radius = cfg.radius.sample(&mut rng);
        let height = cfg.rock_height.sample(&mut rng);
        for _ in 0..cfg.max_retries.max(1) {
            let x = rng.random::<f64>() * ext;
            let y = rng.random::<f64>() * ext;
            if far_from_spawn(x, y) {
                out.push(Obstacle { kind: ObstacleKind::Rock, center_x: x, center_y: y, radius, height });
                break;
            }
        }
    }
    Ok(out)
}

impl TerrainModel {
    /// Bakes the height grid for `params` (noise included, no obstacles).
    pub fn build(params: TerrainParams, end_margin: f64) -> Result<Self> {
        params.validate()?;
        let ext = params.extent();
        let centerline = Centerline::new(params.cubic(), 0.0, ext, params.x_start)?;
        let m = params.grid_size;
        let res = params.resolution;
        let mut rng = noise_rng(params.seed);
        let data = {
            let k = params.modes;
            let (cols, fourier) = fourier_grid_rows(&params);
            let mut data = Vec::with_capacity(m * m);
            for i in 0..m {
                let x = i as f64 * res;
                for j in 0..m {
                    let f = fourier(x, &cols[j * k..(j + 1) * k]);
                    data.push(compose_with(&params, &centerline, &mut rng, x, j as f64 * res, f)?);
                }
            }
            data
        };
        let heights = Grid::from_vec(m, m, data).expect("grid dimensions");
        let x_end = trail_end(&centerline, params.x_start, ext, end_margin, res)?;
        Ok(Self { params, centerline, heights, obstacles: Vec::new(), x_end })
    }

    /// Replaces the obstacle set.
    pub fn with_obstacles(mut self, obstacles: Vec<Obstacle>) -> Self {
        self.obstacles = obstacles;
        self
    }

    pub fn set_obstacles(&mut self, obstacles: Vec<Obstacle>) {
        self.obstacles = obstacles;
    }

    pub fn params(&self) -> &TerrainParams {
        &self.params
    }

    pub fn centerline(&self) -> &Centerline {
        &self.centerline
    }

    pub fn heights(&self) -> &Grid<f64> {
        &self.heights
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    /// Side length of the square terrain in metres.
    pub fn extent(&self) -> f64 {
        self.params.extent()
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let ext = self.extent();
        (0.0..=ext).contains(&x) && (0.0..=ext).contains(&y)
    }

    pub fn spawn_point(&self) -> (f64, f64) {
        let x = self.params.x_start;
        (x, self.centerline.y(x))
    }

    /// Last x along the trail before it nears a grid edge.
    pub fn x_end(&self) -> f64 {
        self.x_end
    }

    /// Arc length from the spawn point to the end of the trail.
    pub fn trail_length(&self) -> f64 {
        self.centerline.arc_length(self.x_end)
    }

    /// Bilinear interpolation of the baked grid.
    pub fn height_at(&self, x: f64, y: f64) -> Result<f64> {
        check_extent(&self.params, x, y)?;
        let m = self.params.grid_size;
        let gx = x / self.params.resolution;
        let gy = y / self.params.resolution;
        let i = (Float::floor(gx) as usize).min(m - 2);
        let j = (Float::floor(gy) as usize).min(m - 2);
        let tx = gx - i as f64;
        let ty = gy - j as f64;
        let h = |a: usize, b: usize| self.heights[(a, b)];
        let lo = h(i, j) + ty * (h(i, j + 1) - h(i, j));
        let hi = h(i + 1, j) + ty * (h(i + 1, j + 1) - h(i + 1, j));
        Ok(lo + tx * (hi - lo))
    }

    /// Upward unit normal from central differences of [`height_at`](Self::height_at).
    pub fn surface_normal_at(&self, x: f64, y: f64) -> Result<[f64; 3]> {
        check_extent(&self.params, x, y)?;
        let step = self.params.resolution;
        let ext = self.extent();
        let (x0, x1) = ((x - step).max(0.0), (x + step).min(ext));
        let (y0, y1) = ((y - step).max(0.0), (y + step).min(ext));
        let hx = (self.height_at(x1, y)? - self.height_at(x0, y)?) / (x1 - x0);
        let hy = (self.height_at(x, y1)? - self.height_at(x, y0)?) / (y1 - y0);
        let norm = Float::sqrt(hx * hx + hy * hy + 1.0);
        Ok([-hx / norm, -hy / norm, 1.0 / norm])
    }

    /// Trail membership (closed interval) and signed lateral offset.
    pub fn is_on_trail(&self, x: f64, y: f64) -> Result<(bool, f64)> {
        let (offset, _) = self.centerline.lateral_offset(x, y)?;
        Ok((Float::abs(offset) <= 0.5 * self.params.w, offset))
    }
}

fn trail_end(centerline: &Centerline, x_start: f64, ext: f64, margin: f64, step: f64) -> Result<f64> {
    let inside = |x: f64| {
        let y = centerline.y(x);
        y >= margin && y <= ext - margin
    };
    if !inside(x_start) {
        return Err(Error::config("trail start lies within end_margin of the grid edge"));
    }
    let x_last = ext - margin;
    let mut x = x_start;
    while x + step <= x_last {
        if !inside(x + step) {
            return Ok(x);
        }
        x += step;
    }
    Ok(x.max(x_start))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn zero_params(grid_size: usize) -> TerrainParams {
        TerrainParams {
            a0: 0.0,
            b: 0.0,
            c: 0.0,
            d: 0.0,
            w: 6.0,
            alpha_x: 0.0,
            alpha_y: 0.0,
            beta_left: 0.0,
            beta_right: 0.0,
            modes: 4,
            gamma: vec![0.0; 16],
            sigma_trail: 0.0,
            sigma_nontrail: 0.0,
            noise_scale: NoiseScale::StdDev,
            grid_size,
            resolution: 0.5,
            x_start: 5.0,
            seed: 0,
        }
    }

    #[test]
    fn centerline_polynomial() {
        let mut p = zero_params(8);
        assert_eq!(centerline_y(&p, 50.0), 0.0);
        p.a0 = 2.0;
        p.b = 1.0;
        assert_eq!(centerline_y(&p, 3.0), 5.0);
        p.a0 = 0.0;
        p.b = 0.1;
        p.c = 0.01;
        p.d = 0.001;
        assert!((centerline_y(&p, 10.0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_fourier_mode() {
        let mut p = zero_params(8);
        assert_eq!(fourier_height(&p, 1.3, 2.7), 0.0);
        p.gamma[(2 - 1) * 4 + (4 - 1)] = 0.5;
        assert_eq!(p.gamma_at(2, 4), 0.5);
        // 0.5·sin(π/2 + π/2) = 0.5·sin(π)
        assert!(fourier_height(&p, 0.5, 1.0).abs() < 1e-15);
    }

    #[test]
    fn compose_height_plane_and_hill() {
        let mut rng = noise_rng(0);
        let mut p = zero_params(64);
        p.a0 = 15.0;
        let line = Centerline::new(p.cubic(), 0.0, p.extent(), p.x_start).unwrap();
        assert_eq!(compose_height(&p, &line, &mut rng, 3.0, 4.0).unwrap(), 0.0);

        p.alpha_x = 0.1;
        let h = compose_height(&p, &line, &mut rng, 10.0, 15.0).unwrap();
        assert!((h - 10.0 * libm_tan(0.1)).abs() < 1e-12);
        assert!((h - 1.00335).abs() < 1e-5);

        p.alpha_x = 0.0;
        p.beta_right = 0.2;
        // 3 m right of the edge: trail half width 3 plus 3 more, on the -y side.
        let h = compose_height(&p, &line, &mut rng, 10.0, 15.0 - 6.0).unwrap();
        assert!((h - 3.0 * libm_tan(0.2)).abs() < 1e-12);
        assert!((h - 0.6082).abs() < 1e-4);
        // the left side stays flat
        assert_eq!(compose_height(&p, &line, &mut rng, 10.0, 21.0).unwrap(), 0.0);
    }

    fn libm_tan(x: f64) -> f64 {
        Float::tan(x)
    }

    #[test]
    fn out_of_extent_queries_fail() {
        let p = zero_params(16);
        let model = TerrainModel::build(p, 0.0).unwrap();
        assert!(matches!(model.height_at(-0.1, 1.0), Err(Error::OutOfExtent { .. })));
        assert!(model.height_at(7.5, 7.5).is_ok());
        assert!(model.height_at(7.6, 1.0).is_err());
        assert!(model.surface_normal_at(1.0, 100.0).is_err());
    }

    #[test]
    fn flat_normal_points_up() {
        let model = TerrainModel::build(zero_params(16), 0.0).unwrap();
        assert_eq!(model.surface_normal_at(3.3, 4.1).unwrap(), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn incline_normal() {
        let mut p = zero_params(32);
        p.alpha_x = 0.2;
        let model = TerrainModel::build(p, 0.0).unwrap();
        let n = model.surface_normal_at(5.2, 6.1).unwrap();
        let t = libm_tan(0.2);
        let norm = (t * t + 1.0).sqrt();
        assert!((n[0] + t / norm).abs() < 1e-12);
        assert!(n[1].abs() < 1e-12);
        assert!((n[2] - 1.0 / norm).abs() < 1e-12);
    }

    #[test]
    fn trail_membership_is_closed() {
        let mut p = zero_params(32);
        p.a0 = 0.0;
        let model = TerrainModel::build(TerrainParams { a0: 8.0, ..p.clone() }, 0.0).unwrap();
        assert_eq!(model.is_on_trail(4.0, 8.0).unwrap(), (true, 0.0));
        let (on, off) = model.is_on_trail(5.0, 4.0).unwrap();
        assert!(!on);
        assert!((off - 4.0).abs() < 1e-12);
        let (on, off) = model.is_on_trail(5.0, 11.0).unwrap();
        assert!(on);
        assert!((off + 3.0).abs() < 1e-12);
        p.w = 1.0;
    }

    #[test]
    fn inverted_range_is_rejected() {
        let mut r = RandomizationRanges::flat(6.0);
        r.grid_size = 16;
        r.width = Range::new(5.0, 4.0);
        assert!(matches!(sample_terrain(1, &r), Err(Error::Config(_))));
    }

    #[test]
    fn variance_scale_takes_sqrt() {
        let mut p = zero_params(8);
        p.sigma_nontrail = 0.04;
        p.noise_scale = NoiseScale::Variance;
        assert!((p.noise_std(false) - 0.2).abs() < 1e-15);
    }
}

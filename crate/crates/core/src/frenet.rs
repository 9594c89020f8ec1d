//! Trail centerline geometry and the Frenet projection.
//!
//! The centerline is the cubic `y = a0 + b·x + c·x² + d·x³` over a bounded
//! x-domain. Arc length is measured from `x_start` (the spawn point), so
//! positions behind the start have negative `s`.
//!
//! Lateral offsets are positive on the *right* of the travel direction
//! (increasing x); heading error and curvature are counter-clockwise positive.

use alloc::vec::Vec;
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{integrate, wrap_angle};

const ARC_KNOTS: usize = 1024;
const SEED_SAMPLES: usize = 256;
const ARC_TOL: f64 = 1e-6;

/// Vehicle state relative to the centerline.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FrenetState {
    /// Arc length of the nearest centerline point, from the trail start.
    pub s: f64,
    /// Signed lateral distance, positive on the right.
    pub x_lat: f64,
    /// Heading error `yaw - tangent angle`, in (-π, π].
    pub theta: f64,
    pub v: f64,
    pub v_perp: f64,
    pub omega: f64,
    /// Signed curvature at the nearest point (1/m).
    pub c: f64,
}

impl FrenetState {
    /// Radius of curvature, infinite on straight sections.
    pub fn radius(&self) -> f64 {
        1.0 / self.c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cubic {
    pub a0: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Cubic {
    pub fn y(&self, x: f64) -> f64 {
        self.a0 + x * (self.b + x * (self.c + x * self.d))
    }

    pub fn dy(&self, x: f64) -> f64 {
        self.b + x * (2.0 * self.c + 3.0 * self.d * x)
    }

    pub fn ddy(&self, x: f64) -> f64 {
        2.0 * self.c + 6.0 * self.d * x
    }

    /// Signed curvature of the graph `y = f(x)`.
    pub fn curvature(&self, x: f64) -> f64 {
        let slope = self.dy(x);
        self.ddy(x) / Float::powf(1.0 + slope * slope, 1.5)
    }
}

/// Nearest point on the centerline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nearest {
    pub x: f64,
    pub y: f64,
    pub dist_sq: f64,
}

/// A cubic centerline over `[x_min, x_max]` with a cached arc-length table.
#[derive(Debug, Clone, PartialEq)]
pub struct Centerline {
    cubic: Cubic,
    x_min: f64,
    x_max: f64,
    x_start: f64,
    /// Cumulative arc length at each knot, measured from `x_min`.
    knots: Vec<f64>,
    s_offset: f64,
}

impl Centerline {
    pub fn new(cubic: Cubic, x_min: f64, x_max: f64, x_start: f64) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return Err(Error::config("centerline domain must satisfy x_min < x_max"));
        }
        let mut line = Self { cubic, x_min, x_max, x_start, knots: Vec::new(), s_offset: 0.0 };
        let h = (x_max - x_min) / (ARC_KNOTS - 1) as f64;
        let mut acc = 0.0;
        line.knots.reserve(ARC_KNOTS);
        line.knots.push(0.0);
        for k in 1..ARC_KNOTS {
            let a = x_min + (k - 1) as f64 * h;
            acc += line.arc_between(a, a + h);
            line.knots.push(acc);
        }
        line.s_offset = line.arc_from_min(x_start);
        Ok(line)
    }

    pub fn cubic(&self) -> &Cubic {
        &self.cubic
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn x_start(&self) -> f64 {
        self.x_start
    }

    pub fn y(&self, x: f64) -> f64 {
        self.cubic.y(x)
    }

    /// Unit tangent angle (counter-clockwise from +x) at `x`.
    pub fn tangent_angle(&self, x: f64) -> f64 {
        Float::atan(self.cubic.dy(x))
    }

    fn speed(&self, x: f64) -> f64 {
        let slope = self.cubic.dy(x);
        Float::sqrt(1.0 + slope * slope)
    }

    fn arc_between(&self, a: f64, b: f64) -> f64 {
        integrate(&|x| self.speed(x), a, b, ARC_TOL * 1e-3, 12)
    }

    fn knot_spacing(&self) -> f64 {
        (self.x_max - self.x_min) / (ARC_KNOTS - 1) as f64
    }

    fn arc_from_min(&self, x: f64) -> f64 {
        let h = self.knot_spacing();
        let k = Float::floor((x - self.x_min) / h);
        let k = if k < 0.0 { 0 } else if k as usize >= ARC_KNOTS { ARC_KNOTS - 1 } else { k as usize };
        let x_k = self.x_min + k as f64 * h;
        self.knots[k] + self.arc_between(x_k, x)
    }

    /// Arc length from the trail start to the centerline point above `x`.
    pub fn arc_length(&self, x: f64) -> f64 {
        self.arc_from_min(x) - self.s_offset
    }

    /// Inverse of [`arc_length`](Self::arc_length).
    pub fn x_at_arc(&self, s: f64) -> f64 {
        let target = s + self.s_offset;
        // Bracket on the knot table, then Newton on ds/dx = sqrt(1 + f'^2).
        let idx = self.knots.partition_point(|&v| v <= target);
        let k = idx.saturating_sub(1).min(ARC_KNOTS - 1);
        let mut x = self.x_min + k as f64 * self.knot_spacing();
        for _ in 0..50 {
            let err = self.arc_from_min(x) - target;
            let step = err / self.speed(x);
            x -= step;
            if Float::abs(step) < 1e-12 {
                break;
            }
        }
        x
    }

    /// Total length of the centerline from the start to `x_end`.
    pub fn length_to(&self, x_end: f64) -> f64 {
        self.arc_length(x_end)
    }

    /// Nearest point on the curve: best of a uniform seed scan, refined by a
    /// bracketed Newton iteration on `d/dx |p - c(x)|² / 2`.
    ///
    /// The scan walks outward from the sample closest to `px` and stops once
    /// the horizontal gap alone exceeds the best distance found, which gives
    /// the same winner as scanning every sample.
    pub fn nearest(&self, px: f64, py: f64) -> Result<Nearest> {
        if !(px.is_finite() && py.is_finite()) {
            return Err(Error::fault("non-finite query in nearest-point search"));
        }
        let dist_sq = |x: f64| {
            let dx = x - px;
            let dy = self.cubic.y(x) - py;
            dx * dx + dy * dy
        };
        let h = (self.x_max - self.x_min) / (SEED_SAMPLES - 1) as f64;
        let sample = |k: usize| self.x_min + k as f64 * h;
        let centre = Float::round((px - self.x_min) / h).clamp(0.0, (SEED_SAMPLES - 1) as f64) as usize;
        let mut best_k = centre;
        let mut best = dist_sq(sample(centre));
        let consider = |k: usize, best: &mut f64, best_k: &mut usize| {
            let d = dist_sq(sample(k));
            if d < *best || (d == *best && k < *best_k) {
                *best = d;
                *best_k = k;
            }
        };
        for k in (centre + 1)..SEED_SAMPLES {
            let gap = sample(k) - px;
            if gap > 0.0 && gap * gap > best {
                break;
            }
            consider(k, &mut best, &mut best_k);
        }
        for k in (0..centre).rev() {
            let gap = px - sample(k);
            if gap > 0.0 && gap * gap > best {
                break;
            }
            consider(k, &mut best, &mut best_k);
        }
        if !best.is_finite() {
            return Err(Error::fault("non-finite distance in nearest-point search"));
        }
        let seed_x = sample(best_k);
        let lo = (seed_x - h).max(self.x_min);
        let hi = (seed_x + h).min(self.x_max);
        let refined = self.refine(px, py, lo, hi, seed_x);
        let rd = dist_sq(refined);
        let x = if rd <= best { refined } else { seed_x };
        Ok(Nearest { x, y: self.cubic.y(x), dist_sq: rd.min(best) })
    }

    /// Signed distance to the curve, positive on the right of the travel
    /// direction. Also returns the nearest point.
    pub fn lateral_offset(&self, px: f64, py: f64) -> Result<(f64, Nearest)> {
        let near = self.nearest(px, py)?;
        let (ty, tx) = Float::sin_cos(self.tangent_angle(near.x));
        let cross = tx * (py - near.y) - ty * (px - near.x);
        let dist = Float::sqrt(near.dist_sq);
        let offset = if cross < 0.0 {
            dist
        } else if cross > 0.0 {
            -dist
        } else {
            0.0
        };
        Ok((offset, near))
    }

    fn refine(&self, px: f64, py: f64, mut lo: f64, mut hi: f64, start: f64) -> f64 {
        let grad = |x: f64| (x - px) + (self.cubic.y(x) - py) * self.cubic.dy(x);
        let g_lo = grad(lo);
        let g_hi = grad(hi);
        // Minimum on the bracket edge: the gradient does not change sign.
        if g_lo >= 0.0 {
            return lo;
        }
        if g_hi <= 0.0 {
            return hi;
        }
        let mut x = start;
        for _ in 0..100 {
            let g = grad(x);
            if Float::abs(g) < 1e-10 {
                break;
            }
            if g < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let slope = self.cubic.dy(x);
            let curv = 1.0 + slope * slope + (self.cubic.y(x) - py) * self.cubic.ddy(x);
            let newton = x - g / curv;
            x = if curv > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-15 {
                break;
            }
        }
        x
    }

    /// Projects a world-frame vehicle state onto the centerline.
    pub fn project(&self, px: f64, py: f64, yaw: f64, v_x: f64, v_y: f64, omega: f64) -> Result<FrenetState> {
        if !(px.is_finite() && py.is_finite() && yaw.is_finite()) {
            return Err(Error::fault("non-finite pose in Frenet projection"));
        }
        let (x_lat, near) = self.lateral_offset(px, py)?;
        let tangent = self.tangent_angle(near.x);
        Ok(FrenetState {
            s: self.arc_length(near.x),
            x_lat,
            theta: wrap_angle(yaw - tangent),
            v: v_x,
            v_perp: v_y,
            omega,
            c: self.cubic.curvature(near.x),
        })
    }

    /// World point at arc length `s` displaced `offset` metres to the right,
    /// together with the tangent angle there.
    pub fn point_at(&self, s: f64, offset: f64) -> (f64, f64, f64) {
        let x = self.x_at_arc(s);
        let tangent = self.tangent_angle(x);
        let (ty, tx) = Float::sin_cos(tangent);
        // Right normal of (tx, ty) is (ty, -tx).
        (x + offset * ty, self.cubic.y(x) - offset * tx, tangent)
    }
}

/// Signed curvature of the centerline at `x`.
pub fn curvature(cubic: &Cubic, x: f64) -> f64 {
    cubic.curvature(x)
}

use core::f64::consts::PI;
use num_traits::Float;

/// Wraps an angle to (-π, π]; -π itself maps to +π.
pub(crate) fn wrap_angle(a: f64) -> f64 {
    let mut w = a - 2.0 * PI * Float::floor((a + PI) / (2.0 * PI));
    // floor puts us in [-π, π); fold the lower end over.
    if w <= -PI {
        w += 2.0 * PI;
    }
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

pub(crate) fn signum0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Five-point Gauss-Legendre quadrature on [a, b].
pub(crate) fn gauss_legendre5(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const NODES: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_47,
        0.478_628_670_499_366_47,
        0.236_926_885_056_189_08,
        0.236_926_885_056_189_08,
    ];
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (n, w) in NODES.iter().zip(WEIGHTS.iter()) {
        acc += w * f(mid + half * n);
    }
    acc * half
}

/// Adaptive Gauss-Legendre: splits until the two-panel estimate agrees with
/// the one-panel estimate to `tol`.
pub(crate) fn integrate(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let whole = gauss_legendre5(f, a, b);
    let m = 0.5 * (a + b);
    let halves = gauss_legendre5(f, a, m) + gauss_legendre5(f, m, b);
    if depth == 0 || Float::abs(halves - whole) <= tol {
        halves
    } else {
        integrate(f, a, m, 0.5 * tol, depth - 1) + integrate(f, m, b, 0.5 * tol, depth - 1)
    }
}

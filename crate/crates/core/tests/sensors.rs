use offtersim_core::sensors::{imu, march_terrain, ray_cylinder, render_depth, scandots, Ray};
use offtersim_core::terrain::{sample_terrain, ObstacleKind, Range, RandomizationRanges};
use offtersim_core::vehicle::conform;
use offtersim_core::{CameraSpec, Obstacle, ScandotSpec, TerrainModel, VehicleParams, VehicleState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn terrain(ranges: RandomizationRanges) -> TerrainModel {
    sample_terrain(0, &RandomizationRanges { grid_size: 256, ..ranges }).unwrap()
}

fn seated(t: &TerrainModel, x: f64, y: f64, yaw: f64) -> VehicleState {
    conform(&VehicleState { x, y, yaw, ..Default::default() }, t, &VehicleParams::default()).unwrap()
}

/// Camera-frame ray for pixel `(row, col)` pitched down by `pitch`, as (forward, left, up).
fn camera_dir(spec: &CameraSpec, row: usize, col: usize) -> [f64; 3] {
    let tan_h = (spec.fov_h / 2.0).tan();
    let tan_v = (spec.fov_v / 2.0).tan();
    let u = ((col as f64 + 0.5) / spec.width as f64 * 2.0 - 1.0) * tan_h;
    let v = ((row as f64 + 0.5) / spec.height as f64 * 2.0 - 1.0) * tan_v;
    let n = (1.0 + u * u + v * v).sqrt();
    let (f, l, up) = (1.0 / n, -u / n, -v / n);
    let (s, c) = spec.mount_pitch.sin_cos();
    // tilted nose-down by `pitch`
    [f * c + up * s, l, up * c - f * s]
}

#[test]
fn flat_ground_depth_matches_plane_intersection() {
    let t = terrain(RandomizationRanges::flat(6.0));
    let spec = CameraSpec::default();
    let p = VehicleParams::default();
    let state = seated(&t, 20.0, 60.0, 0.7);
    let img = render_depth(&t, &[], &state, &spec);
    let lens = p.cg_height + spec.mount_height;
    let mut hits = 0;
    for row in 0..spec.height {
        for col in 0..spec.width {
            let d = camera_dir(&spec, row, col);
            let analytic = if d[2] < 0.0 { (lens / -d[2]).min(spec.max_range) } else { spec.max_range };
            let got = f64::from(img[(row, col)]);
            assert!((got - analytic).abs() < 0.015, "pixel ({row},{col}): {got} vs {analytic}");
            hits += usize::from(analytic < spec.max_range);
        }
    }
    assert!(hits > 1000);
}

#[test]
fn symmetric_scene_renders_mirror_exact() {
    let y0 = 64.0;
    let obstacle = |kind, x: f64, dy: f64, radius: f64, height: f64| Obstacle {
        kind,
        center_x: x,
        center_y: y0 + dy,
        radius,
        height,
    };
    let t = terrain(RandomizationRanges::flat(6.0)).with_obstacles(vec![
        obstacle(ObstacleKind::Tree, 30.0, 2.5, 0.5, 2.0),
        obstacle(ObstacleKind::Tree, 30.0, -2.5, 0.5, 2.0),
        obstacle(ObstacleKind::Tree, 30.0, 0.0, 0.25, 0.75),
        obstacle(ObstacleKind::Rock, 26.0, 1.25, 0.375, 0.25),
        obstacle(ObstacleKind::Rock, 26.0, -1.25, 0.375, 0.25),
    ]);
    let state = seated(&t, 24.0, y0, 0.0);
    let spec = CameraSpec::default();
    let img = render_depth(&t, t.obstacles(), &state, &spec);
    let mut above_horizon_hits = 0;
    for row in 0..spec.height {
        for col in 0..spec.width {
            let a = img[(row, col)];
            let b = img[(row, spec.width - 1 - col)];
            assert_eq!(a.to_bits(), b.to_bits(), "pixel ({row},{col})");
            if camera_dir(&spec, row, col)[2] >= 0.0 && a < spec.max_range as f32 {
                above_horizon_hits += 1;
            }
        }
    }
    assert!(above_horizon_hits > 0, "obstacles must be visible");
}

#[test]
fn incline_mirror_exact() {
    let ranges = RandomizationRanges { alpha: Range::point(0.0), ..RandomizationRanges::flat(6.0) };
    let mut p = offtersim_core::terrain::sample_params(0, &RandomizationRanges { grid_size: 256, ..ranges }).unwrap();
    p.alpha_x = 0.05;
    let t = TerrainModel::build(p, 10.0).unwrap();
    let state = seated(&t, 40.0, 63.75, 0.0);
    assert_eq!(state.roll, 0.0);
    let spec = CameraSpec::default();
    let img = render_depth(&t, &[], &state, &spec);
    for row in 0..spec.height {
        for col in 0..spec.width / 2 {
            assert_eq!(img[(row, col)].to_bits(), img[(row, spec.width - 1 - col)].to_bits());
        }
    }
}

#[test]
fn cylinder_centre_pixel_matches_analytic() {
    let t = terrain(RandomizationRanges::flat(6.0));
    let spec = CameraSpec::default();
    let p = VehicleParams::default();
    let state = seated(&t, 20.0, 64.0, 0.0);
    let (dist, radius) = (3.0, 0.5);
    let tree = Obstacle { kind: ObstacleKind::Tree, center_x: 20.0 + dist, center_y: 64.0, radius, height: 4.0 };
    let img = render_depth(&t, &[tree], &state, &spec);
    let (row, col) = (spec.height / 2, spec.width / 2);
    let d = camera_dir(&spec, row, col);
    // horizontal ray from the lens, offset sideways by the pixel's small yaw
    let (a, b) = (d[0] * d[0] + d[1] * d[1], -2.0 * dist * d[0]);
    let c = dist * dist - radius * radius;
    let analytic = (-b - (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
    let z_hit = p.cg_height + spec.mount_height + analytic * d[2];
    assert!(z_hit > 0.0 && z_hit < 4.0);
    let got = f64::from(img[(row, col)]);
    // f32 storage bounds the comparison
    assert!((got - analytic).abs() < 1e-6, "{got} vs {analytic}");
}

#[test]
fn cylinder_caps_and_misses() {
    let down = Ray { origin: [0.0, 0.0, 5.0], dir: [0.0, 0.0, -1.0] };
    assert_eq!(ray_cylinder(&down, 0.0, 0.0, 1.0, 0.0, 2.0), Some(3.0));
    let side = Ray { origin: [-5.0, 0.0, 1.0], dir: [1.0, 0.0, 0.0] };
    assert_eq!(ray_cylinder(&side, 0.0, 0.0, 1.0, 0.0, 2.0), Some(4.0));
    let over = Ray { origin: [-5.0, 0.0, 3.0], dir: [1.0, 0.0, 0.0] };
    assert_eq!(ray_cylinder(&over, 0.0, 0.0, 1.0, 0.0, 2.0), None);
    let away = Ray { origin: [-5.0, 0.0, 1.0], dir: [-1.0, 0.0, 0.0] };
    assert_eq!(ray_cylinder(&away, 0.0, 0.0, 1.0, 0.0, 2.0), None);
}

#[test]
fn upward_rays_miss_flat_ground() {
    let t = terrain(RandomizationRanges::flat(6.0));
    let spec = CameraSpec::default();
    let ray = Ray { origin: [20.0, 20.0, 1.0], dir: [0.6, 0.0, 0.8] };
    assert_eq!(march_terrain(&t, &ray, &spec), None);
}

#[test]
fn scandots_follow_the_incline() {
    let ranges = RandomizationRanges { alpha: Range::point(0.04), ..RandomizationRanges::flat(6.0) };
    let t = terrain(ranges);
    let spec = ScandotSpec::default();
    let state = seated(&t, 30.0, 40.0, 0.0);
    let g = scandots(&t, &state, &spec);
    assert_eq!((g.rows(), g.cols()), (15, 11));
    let slope = 0.04f64.tan();
    for r in 0..14 {
        for c in 0..11 {
            assert!((g[(r + 1, c)] - g[(r, c)] - slope).abs() < 1e-9);
        }
    }
    for c in 0..10 {
        // columns run right to left, so world +y (uphill) grows with the index
        assert!((g[(0, c + 1)] - g[(0, c)] - slope).abs() < 1e-9);
    }
    let edge = seated(&t, 3.0, 40.0, std::f64::consts::PI);
    let g = scandots(&t, &edge, &spec);
    assert_eq!(g[(14, 5)], spec.sentinel);
}

#[test]
fn imu_at_rest_reads_gravity() {
    let p = VehicleParams::default();
    let pitch: f64 = 0.1;
    let s = VehicleState { pitch, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let r = imu(&s, &s, 0.02, &p, 0.0, &mut rng);
    assert!((r.accel[0] - p.g * pitch.sin()).abs() < 1e-12);
    assert!(r.accel[1].abs() < 1e-12);
    assert!((r.accel[2] - p.g * pitch.cos()).abs() < 1e-12);
    assert_eq!(r.gyro, [0.0, 0.0, 0.0]);
    let turning = VehicleState { v_x: 5.0, omega: 0.2, roll: 0.01, ..Default::default() };
    let prev = VehicleState { roll: 0.0, ..turning };
    let r = imu(&turning, &prev, 0.02, &p, 0.0, &mut rng);
    assert!((r.gyro[0] - 0.5).abs() < 1e-12 && r.gyro[2] == 0.2);
    assert!((r.accel[1] - (5.0 * 0.2 + p.g * (0.01f64).sin())).abs() < 1e-12);
}

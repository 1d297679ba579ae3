use approx::assert_relative_eq;
use billiard_core::billiard::flow;
use billiard_core::spectral::analyse;
use billiard_core::trapped::{
    default_t_max, divergence_probe, escape_time, in_trapped_set, separation_probe, separation_samples,
    tangency_crossing_count, trapped_grid, GridSpec, TrappedRegion,
};
use billiard_core::{PhasePoint, Scene, Vec3};
use nalgebra::Rotation3;
use proptest::prelude::*;

fn scene() -> Scene {
    Scene::symmetric_two_spheres()
}

fn spec(samples: usize, t_max: f64) -> GridSpec {
    GridSpec { samples, speed_levels: 2, cone_half_angle: 0.2, t_max }
}

#[test]
fn axis_ray_never_escapes() {
    let s = scene();
    let d = TrappedRegion::u_infinity(&s);
    let t_max = default_t_max(&s);
    let t = escape_time(&PhasePoint::new(Vec3::new(0.0, 0.0, 2.0), Vec3::z()), &d, t_max, &s).unwrap();
    assert_eq!(t, t_max);
}

#[test]
fn outward_radial_ray_outside_d_escapes_at_once() {
    let s = scene();
    let d = TrappedRegion::u_infinity(&s);
    let t = escape_time(&PhasePoint::new(Vec3::new(1.0, 0.0, 2.0), Vec3::x()), &d, 100.0, &s).unwrap();
    assert_eq!(t, 0.0);
}

#[test]
fn near_axis_escape_follows_the_linearised_map() {
    let s = scene();
    let d = TrappedRegion::u_infinity(&s);
    let (_, data) = analyse(&s).unwrap();
    let mu = data.leading_expansion();
    let offset = 1e-3;
    let t = escape_time(&PhasePoint::new(Vec3::new(offset, 0.0, 2.0), Vec3::z()), &d, 1e3, &s).unwrap();
    let predicted = s.period() / mu.ln() * (d.radius / offset).ln();
    // The offset projects onto the unstable direction with an O(1) factor.
    assert!((t - predicted).abs() <= 0.5 * s.period(), "escape {t} vs {predicted}");
}

#[test]
fn escape_time_grows_like_log_inverse_offset() {
    let s = scene();
    let d = TrappedRegion::u_infinity(&s);
    let (_, data) = analyse(&s).unwrap();
    let e = |off: f64| escape_time(&PhasePoint::new(Vec3::new(off, 0.0, 2.0), Vec3::z()), &d, 1e3, &s).unwrap();
    let slope = (e(1e-9) - e(1e-3)) / (1e6f64).ln();
    assert_relative_eq!(slope, s.period() / data.leading_expansion().ln(), max_relative = 0.05);
}

#[test]
fn zero_horizon_traps_every_sample() {
    let s = scene();
    let d = TrappedRegion::u_infinity(&s);
    let g = trapped_grid(&d, 0.0, &spec(300, 40.0), &s).unwrap();
    assert_eq!(g.trapped_fraction(), 1.0);
}

#[test]
fn long_horizons_trap_almost_nothing() {
    let s = scene();
    let d = TrappedRegion::u_infinity(&s);
    let g = trapped_grid(&d, 10.0 * s.period(), &spec(2000, 12.0 * s.period()), &s).unwrap();
    let short = g.at_horizon(s.period()).trapped_fraction();
    assert!(g.trapped_fraction() < 0.01, "{}", g.trapped_fraction());
    assert!(g.trapped_fraction() < short);
    assert!(g.max_trapped_radial() <= d.radius);
}

#[test]
fn grid_rejects_a_single_sample() {
    let s = scene();
    assert!(trapped_grid(&TrappedRegion::u_infinity(&s), 1.0, &spec(1, 10.0), &s).is_err());
}

#[test]
fn identical_points_do_not_separate() {
    let s = scene();
    let pp = PhasePoint::new(Vec3::new(0.01, 0.0, 2.0), Vec3::z());
    let r = divergence_probe(&pp, &pp, 20.0, 2.0, &s).unwrap();
    assert!(r.windows.iter().all(|(_, d)| *d == 0.0));
}

#[test]
fn free_pairs_separate_at_most_linearly() {
    let s = scene();
    let a = PhasePoint::new(Vec3::new(10.0, 0.0, 0.0), Vec3::new(1.0, 0.2, 0.0));
    let b = PhasePoint::new(Vec3::new(10.0, 1e-6, 0.0), Vec3::new(1.0, 0.2 + 1e-6, 1e-6));
    let t = 10.0;
    let tr = flow(&a, t, &s).unwrap();
    assert!(tr.events.is_empty());
    let r = divergence_probe(&a, &b, t, 1.0, &s).unwrap();
    for (start, d) in &r.windows {
        assert!(*d <= (1.0 + start + 1.0) * r.initial, "window {start}: {d}");
    }
}

#[test]
fn near_axis_divergence_rate_is_bounded_by_the_expansion() {
    let s = scene();
    let (_, data) = analyse(&s).unwrap();
    let a = PhasePoint::new(Vec3::new(0.0, 0.0, 2.0), Vec3::z());
    let b = PhasePoint::new(Vec3::new(1e-12, 0.0, 2.0), Vec3::z());
    let r = divergence_probe(&a, &b, 10.0 * s.period(), s.period(), &s).unwrap();
    let bound = data.leading_expansion().ln() / s.period();
    assert!(r.growth_rate <= 1.05 * bound, "{} vs {bound}", r.growth_rate);
    assert!(r.growth_rate > 0.5 * bound);
}

#[test]
fn axis_ray_has_no_tangential_crossings() {
    let tr = flow(&PhasePoint::new(Vec3::new(0.0, 0.0, 2.0), Vec3::z()), 40.0, &scene()).unwrap();
    assert_eq!(tangency_crossing_count(&tr, 0.5), 0);
}

#[test]
fn grazing_ray_crosses_once() {
    // Impact parameter b on the unit sphere gives margin √(1 − b²) ≈ 0.0141.
    let b: f64 = 0.9999;
    let tr = flow(&PhasePoint::new(Vec3::new(b, 0.0, -3.0), Vec3::z()), 20.0, &scene()).unwrap();
    assert_eq!(tr.reflection_count(), 1);
    assert_relative_eq!(tr.events[0].hit.cos_incidence, (1.0 - b * b).sqrt(), max_relative = 1e-8);
    assert_eq!(tangency_crossing_count(&tr, 0.05), 1);
    assert_eq!(tangency_crossing_count(&tr, 0.01), 0);
}

#[test]
fn zero_horizon_separation_is_the_set_distance() {
    let s = scene();
    let outer = TrappedRegion::u_infinity(&s);
    let inner = TrappedRegion::around_axis(&s, 0.5 * outer.radius, 0.5 * outer.extension);
    let pts = separation_samples(&s, 400, (1e-8, 0.4));
    let r = separation_probe(&inner, &outer, &pts, &[0.0, s.period()], default_t_max(&s), &s).unwrap();
    let gap = (outer.radius - inner.radius).min(outer.extension - inner.extension);
    let sep = r.rows[0].separation.unwrap();
    assert!(sep >= gap, "{sep} < {gap}");
    assert!(r.rows.iter().all(|row| row.separation.is_none_or(|v| v > 0.0)));
}

fn near_axis() -> impl Strategy<Value = PhasePoint> {
    (1e-6f64..0.2, 0.0f64..std::f64::consts::TAU, 1.2f64..2.8, 0.0f64..0.15, 0.0f64..std::f64::consts::TAU, 0.25f64..1.25)
        .prop_map(|(r, a, z, tilt, b, speed)| {
            let x = Vec3::new(r * a.cos(), r * a.sin(), z);
            let xi = Vec3::new(tilt.sin() * b.cos(), tilt.sin() * b.sin(), tilt.cos()) * speed;
            PhasePoint::new(x, xi)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn escape_time_is_monotone_in_the_radius(pp in near_axis(), shrink in 0.1f64..0.9) {
        let s = scene();
        let big = TrappedRegion::u_infinity(&s);
        let small = TrappedRegion::around_axis(&s, big.radius * shrink, big.extension * shrink);
        let t_max = default_t_max(&s);
        if let (Ok(a), Ok(b)) = (escape_time(&pp, &small, t_max, &s), escape_time(&pp, &big, t_max, &s)) {
            prop_assert!(a <= b);
        }
    }

    #[test]
    fn trapped_sets_are_nested_in_the_horizon(pp in near_axis(), t1 in 0.0f64..20.0, dt in 0.0f64..20.0) {
        let s = scene();
        let d = TrappedRegion::u_infinity(&s);
        let t_max = default_t_max(&s);
        if in_trapped_set(&pp, &d, t1 + dt, t_max, &s).unwrap_or(false) {
            prop_assert!(in_trapped_set(&pp, &d, t1, t_max, &s).unwrap());
        }
    }

    #[test]
    fn escape_time_is_axially_symmetric(pp in near_axis(), angle in 0.0f64..std::f64::consts::TAU) {
        let s = scene();
        let d = TrappedRegion::u_infinity(&s);
        let rot = Rotation3::from_axis_angle(&Vec3::z_axis(), angle);
        let turned = PhasePoint::new(rot * pp.x, rot * pp.xi);
        let t_max = default_t_max(&s);
        if let (Ok(a), Ok(b)) = (escape_time(&pp, &d, t_max, &s), escape_time(&turned, &d, t_max, &s)) {
            prop_assert!((a - b).abs() <= 1e-6 * (1.0 + a));
        }
    }

    #[test]
    fn escape_time_is_reversible_on_the_mirror_axis(pp in near_axis()) {
        let s = scene();
        let d = TrappedRegion::u_infinity(&s);
        // Reflection through the plane z = 2 swaps the obstacles and preserves D.
        let mirror = |v: Vec3| Vec3::new(v.x, v.y, -v.z);
        let flipped = PhasePoint::new(mirror(pp.x - Vec3::new(0.0, 0.0, 2.0)) + Vec3::new(0.0, 0.0, 2.0), mirror(pp.xi));
        let t_max = default_t_max(&s);
        if let (Ok(a), Ok(b)) = (escape_time(&pp, &d, t_max, &s), escape_time(&flipped, &d, t_max, &s)) {
            prop_assert!((a - b).abs() <= 1e-6 * (1.0 + a));
        }
    }
}

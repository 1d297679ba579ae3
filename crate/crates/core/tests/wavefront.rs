use approx::assert_relative_eq;
use billiard_core::geometry::{hit_on, Obstacle};
use billiard_core::wavefront::{
    condition_p_check, lambda_product, phase_eval, propagate_free, reflect_wavefront, ConditionPSpec,
};
use billiard_core::{Error, PhaseField, Scene, Story, Vec3, WavefrontState};
use nalgebra::Matrix2;
use proptest::prelude::*;

fn scene() -> Scene {
    Scene::symmetric_two_spheres()
}

fn story(s: &[u8]) -> Story {
    Story::new(s.to_vec()).unwrap()
}

#[test]
fn plane_wave_stays_flat() {
    let ws = WavefrontState::plane(Vec3::zeros(), Vec3::z(), 0.5);
    let out = propagate_free(&ws, 2.0).unwrap();
    assert_eq!(out.q, Matrix2::zeros());
    assert_relative_eq!(out.phase, 2.5);
    assert_relative_eq!(out.point, Vec3::new(0.0, 0.0, 2.0));
}

#[test]
fn spherical_wave_follows_the_riccati_solution() {
    for (s, tau) in [(1.0, 0.5), (0.3, 4.0), (2.0, 10.0)] {
        let ws = WavefrontState::spherical(Vec3::zeros(), Vec3::x(), 0.0, s);
        let out = propagate_free(&ws, tau).unwrap();
        assert_relative_eq!(out.q, Matrix2::identity() / (s + tau), max_relative = 1e-14);
    }
}

#[test]
fn converging_wave_reports_its_focus() {
    let mut ws = WavefrontState::plane(Vec3::zeros(), Vec3::x(), 0.0);
    ws.q = -Matrix2::identity() / 1.5;
    match propagate_free(&ws, 3.0) {
        Err(Error::Caustic { focal_distance }) => assert_relative_eq!(focal_distance, 1.5, epsilon = 1e-12),
        other => panic!("expected a caustic, got {other:?}"),
    }
}

fn reflect_plane(r: f64, incidence: f64) -> Matrix2<f64> {
    let o = Obstacle::sphere(1, Vec3::zeros(), r);
    let dir = Vec3::new(incidence.sin(), 0.0, -incidence.cos());
    let p = Vec3::new(0.0, 0.0, r);
    let x = p - dir * 3.0;
    let hit = hit_on(&o, &x, &dir, 3.0);
    let ws = WavefrontState::plane(p, dir, 0.0);
    reflect_wavefront(&ws, &hit, &o, 1e-9).unwrap().q
}

#[test]
fn normal_incidence_mirror() {
    for r in [0.5, 1.0, 4.0] {
        assert_relative_eq!(reflect_plane(r, 0.0), Matrix2::identity() * (2.0 / r), epsilon = 1e-12);
    }
}

#[test]
fn oblique_incidence_matches_coddington() {
    // Tangential and sagittal powers of a spherical mirror: 2/(R cos θ) and 2 cos θ/R.
    for (r, th) in [(1.0f64, 1.0471975511965976f64), (2.0, 0.3), (1.0, 1.2)] {
        let q = reflect_plane(r, th);
        let mut eig: Vec<f64> = q.symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        assert_relative_eq!(eig[0], 2.0 * th.cos() / r, max_relative = 1e-10);
        assert_relative_eq!(eig[1], 2.0 / (r * th.cos()), max_relative = 1e-10);
    }
}

#[test]
fn diverging_wave_adds_mirror_power() {
    let o = Obstacle::sphere(1, Vec3::zeros(), 2.0);
    let p = Vec3::new(0.0, 0.0, 2.0);
    let hit = hit_on(&o, &Vec3::new(0.0, 0.0, 5.0), &-Vec3::z(), 3.0);
    let ws = WavefrontState::spherical(p, -Vec3::z(), 0.0, 3.0);
    let q = reflect_wavefront(&ws, &hit, &o, 1e-9).unwrap().q;
    assert_relative_eq!(q, Matrix2::identity() * (1.0 / 3.0 + 2.0 / 2.0), epsilon = 1e-12);
}

#[test]
fn empty_story_is_the_base_phase() {
    let xi = Vec3::new(0.2, -0.1, 1.0);
    let y = Vec3::new(0.1, 0.0, 1.5);
    let field = PhaseField::new(y, xi, Story::empty());
    let x = Vec3::new(0.05, 0.02, 2.2);
    let (v, g) = phase_eval(&field, &scene(), &x).unwrap();
    assert_relative_eq!(v, (x - y).dot(&xi) / xi.norm(), epsilon = 1e-14);
    assert_relative_eq!(g, xi.normalize(), epsilon = 1e-14);
    assert_eq!(lambda_product(&field, &scene(), &x).unwrap(), 1.0);
}

#[test]
fn once_reflected_axial_field() {
    let field = PhaseField::new(Vec3::zeros(), Vec3::z(), story(&[2]));
    let x = Vec3::new(0.0, 0.0, 2.0);
    let (v, g) = phase_eval(&field, &scene(), &x).unwrap();
    // Up to the mirror at z = 3, then back down one unit.
    assert_relative_eq!(v, 4.0, epsilon = 1e-12);
    assert_relative_eq!(g, -Vec3::z(), epsilon = 1e-12);
    // Λ = R/(R + 2l) for a plane wave off a sphere of radius R after length l.
    assert_relative_eq!(lambda_product(&field, &scene(), &x).unwrap(), 1.0 / 3.0, epsilon = 1e-12);
}

#[test]
fn twice_reflected_axial_field() {
    let field = PhaseField::new(Vec3::zeros(), Vec3::z(), story(&[2, 1]));
    let x = Vec3::new(0.0, 0.0, 2.0);
    let s = field.sample(&scene(), &x, None).unwrap();
    // Per plane: Q = 2 after Θ2, 2/(1 + 2·2) + 2 after Θ1, then one unit of flight.
    let q1 = 2.0;
    let q2 = q1 / (1.0 + 2.0 * q1) + 2.0;
    let expected = 1.0 / ((1.0 + 2.0 * q1) * (1.0 + q2));
    assert_relative_eq!(s.lambda, expected, max_relative = 1e-10);
    assert_relative_eq!(s.value, 2.0 + 2.0 + 1.0 + 1.0, epsilon = 1e-12);
}

#[test]
fn phase_gradient_matches_finite_differences() {
    let sc = scene();
    let field = PhaseField::new(Vec3::zeros(), Vec3::new(0.05, 0.0, 1.0), story(&[2, 1, 2]));
    let x = Vec3::new(0.07, -0.04, 1.8);
    let (_, g) = phase_eval(&field, &sc, &x).unwrap();
    let h = 1e-5;
    for k in 0..3 {
        let mut d = Vec3::zeros();
        d[k] = h;
        let fd = (phase_eval(&field, &sc, &(x + d)).unwrap().0 - phase_eval(&field, &sc, &(x - d)).unwrap().0) / (2.0 * h);
        assert_relative_eq!(fd, g[k], epsilon = 1e-8);
    }
    assert_relative_eq!(g.norm(), 1.0, epsilon = 1e-12);
}

#[test]
fn unreachable_point_is_outside_the_domain() {
    // A point behind Θ2 cannot be reached after reflecting on the near side of Θ2.
    let field = PhaseField::new(Vec3::zeros(), Vec3::z(), story(&[2]));
    let r = phase_eval(&field, &scene(), &Vec3::new(0.0, 0.0, 5.5));
    assert!(matches!(r, Err(Error::Domain(_))), "{r:?}");
}

fn p_spec() -> ConditionPSpec {
    ConditionPSpec {
        domain_points: vec![Vec3::new(0.0, 0.0, 1.5), Vec3::new(0.1, 0.0, 2.0), Vec3::new(0.0, -0.1, 2.5)],
        boundary_samples: 200,
        tolerance: 1e-9,
    }
}

#[test]
fn base_phase_satisfies_p_on_the_first_obstacle() {
    let field = PhaseField::new(Vec3::zeros(), Vec3::z(), Story::empty());
    let r = condition_p_check(&field, &scene(), 1, &p_spec());
    assert!(r.passes(), "{r:?}");
}

#[test]
fn base_phase_fails_p_on_the_second_obstacle() {
    let field = PhaseField::new(Vec3::zeros(), Vec3::z(), Story::empty());
    let r = condition_p_check(&field, &scene(), 2, &p_spec());
    assert!(!r.illumination_ok, "{r:?}");
}

#[test]
fn reflected_field_keeps_nonnegative_curvature() {
    let field = PhaseField::new(Vec3::zeros(), Vec3::z(), story(&[2]));
    let r = condition_p_check(&field, &scene(), 2, &p_spec());
    assert!(r.curvature_ok, "{r:?}");
    assert!(r.min_curvature > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lambda_never_exceeds_one(
        px in -0.2f64..0.2, py in -0.2f64..0.2, z in 1.3f64..2.7, tilt in -0.1f64..0.1, n in 1usize..5,
    ) {
        let field = PhaseField::new(Vec3::zeros(), Vec3::new(tilt, 0.0, 1.0), Story::alternating(2, n));
        if let Ok(s) = field.sample(&scene(), &Vec3::new(px, py, z), None) {
            prop_assert!(s.lambda > 0.0 && s.lambda <= 1.0);
            prop_assert!(s.front.q.symmetric_eigenvalues().min() >= 0.0);
        }
    }

    #[test]
    fn riccati_flow_composes(s in 0.1f64..5.0, a in 0.0f64..3.0, b in 0.0f64..3.0) {
        let ws = WavefrontState::spherical(Vec3::zeros(), Vec3::y(), 0.0, s);
        let two = propagate_free(&propagate_free(&ws, a).unwrap(), b).unwrap();
        let one = propagate_free(&ws, a + b).unwrap();
        prop_assert!((two.q - one.q).norm() <= 1e-13);
    }
}

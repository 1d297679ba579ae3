use approx::assert_relative_eq;
use billiard_core::config::{ObstacleConfig, SceneConfig, SymbolConfig};
use billiard_core::fit::{linear_fit, pairwise_sum};
use billiard_core::quadrature::{adaptive_simpson, gauss_legendre, gauss_legendre_on, tensor_gauss};
use billiard_core::sampling::{fibonacci_sphere, halton, radical_inverse, random_unit, sample_rng};
use billiard_core::{Error, Scene, SymbolSurrogate, Vec3};
use proptest::prelude::*;

#[test]
fn scene_config_round_trips() {
    let mut c = SceneConfig::symmetric_two_spheres();
    c.obstacles[1] = ObstacleConfig::Ellipsoid { center: [0.0, 0.0, 4.0], radii: [1.0, 1.5, 0.8] };
    c.delta1 = Some(0.3);
    assert_eq!(SceneConfig::from_json(&c.to_json()).unwrap(), c);
}

#[test]
fn minimal_json_takes_the_defaults() {
    let text = r#"{"obstacles": [
        {"kind": "sphere", "center": [0, 0, 0], "radius": 1},
        {"kind": "sphere", "center": [0, 0, 4], "radius": 1}
    ]}"#;
    let c = SceneConfig::from_json(text).unwrap();
    assert_eq!(c, SceneConfig::symmetric_two_spheres());
    let s = c.build().unwrap();
    let r = Scene::symmetric_two_spheres();
    assert_eq!(s.period(), r.period());
    assert_eq!(s.c1(), r.c1());
}

#[test]
fn unknown_fields_are_config_errors() {
    let text = r#"{"obstacles": [
        {"kind": "sphere", "center": [0, 0, 0], "radius": 1},
        {"kind": "sphere", "center": [0, 0, 4], "radius": 1}
    ], "gamma": 2}"#;
    assert!(matches!(SceneConfig::from_json(text), Err(Error::Config(_))));
    assert!(matches!(SymbolConfig::from_json(r#"{"radius": 1}"#), Err(Error::Config(_))));
    assert!(matches!(SceneConfig::from_json("{"), Err(Error::Config(_))));
}

#[test]
fn overlapping_obstacles_fail_to_build() {
    let mut c = SceneConfig::symmetric_two_spheres();
    c.obstacles[1] = ObstacleConfig::Sphere { center: [0.0, 0.0, 1.5], radius: 1.0 };
    assert!(matches!(c.build(), Err(Error::Config(_))));
}

#[test]
fn symbol_overrides_apply_on_top_of_the_defaults() {
    let s = Scene::symmetric_two_spheres();
    let base = SymbolSurrogate::for_scene(&s);
    assert_eq!(SymbolConfig::default().build(&s).unwrap(), base);
    let q = SymbolConfig::from_json(r#"{"orientation": -1, "order": 6}"#).unwrap().build(&s).unwrap();
    assert_eq!(q.cone_axis, -base.cone_axis);
    assert_eq!(q.order, 6);
    assert_eq!(q.center, base.center);
}

#[test]
fn gauss_legendre_is_exact_to_degree_2n_minus_1() {
    for n in 1..12 {
        let (x, w) = gauss_legendre(n);
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-13);
        for deg in 0..2 * n {
            let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert_relative_eq!(got, exact, epsilon = 1e-13);
        }
    }
}

#[test]
fn mapped_rule_integrates_on_any_interval() {
    let (x, w) = gauss_legendre_on(5, 1.0, 3.0);
    let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x * x).sum();
    assert_relative_eq!(got, (81.0 - 1.0) / 4.0, epsilon = 1e-12);
}

#[test]
fn adaptive_simpson_examples() {
    let v = adaptive_simpson(|x| Ok(x.sin()), 0.0, std::f64::consts::PI, 1e-12, 1e-15, 30).unwrap();
    assert_relative_eq!(v, 2.0, epsilon = 1e-11);
    let v = adaptive_simpson(|x| Ok(x.sqrt()), 0.0, 1.0, 1e-10, 1e-14, 40).unwrap();
    assert_relative_eq!(v, 2.0 / 3.0, epsilon = 1e-9);
    assert_eq!(adaptive_simpson(|_| Ok(1.0), 2.0, 2.0, 1e-8, 0.0, 10).unwrap(), 0.0);
}

#[test]
fn adaptive_simpson_reports_unresolved_jumps() {
    let step = |x: f64| Ok(if x < 0.3 { 0.0 } else { 1.0 });
    assert!(matches!(adaptive_simpson(step, 0.0, 1.0, 1e-12, 0.0, 6), Err(Error::Numeric(_))));
    assert_relative_eq!(adaptive_simpson(step, 0.0, 1.0, 1e-6, 0.0, 30).unwrap(), 0.7, epsilon = 1e-6);
}

#[test]
fn adaptive_simpson_propagates_integrand_errors() {
    let r = adaptive_simpson(|x| if x > 0.5 { Err(Error::Numeric("boom".into())) } else { Ok(x) }, 0.0, 1.0, 1e-8, 0.0, 10);
    assert!(r.is_err());
}

#[test]
fn tensor_rule_integrates_a_box_moment() {
    let v: f64 = tensor_gauss(|p| p[0] * p[1] * p[1] * p[2].powi(3), [0.0; 3], [1.0, 2.0, 3.0], [3, 3, 3]);
    assert_relative_eq!(v, 0.5 * (8.0 / 3.0) * (81.0 / 4.0), max_relative = 1e-12);
}

#[test]
fn radical_inverse_in_base_two() {
    let got: Vec<f64> = (1..8).map(|i| radical_inverse(i, 2)).collect();
    assert_eq!(got, vec![0.5, 0.25, 0.75, 0.125, 0.625, 0.375, 0.875]);
    assert_eq!(radical_inverse(0, 3), 0.0);
    assert_relative_eq!(radical_inverse(5, 3), 2.0 / 3.0 + 1.0 / 9.0);
    assert_eq!(halton(0, 2), vec![0.5, 1.0 / 3.0]);
}

#[test]
fn fibonacci_points_cover_the_sphere_evenly() {
    let pts = fibonacci_sphere(500);
    assert!(pts.iter().all(|p| (p.norm() - 1.0).abs() < 1e-14));
    let mean: Vec3 = pts.iter().sum::<Vec3>() / 500.0;
    assert!(mean.norm() < 1e-3, "{mean}");
}

#[test]
fn sample_streams_are_reproducible_and_distinct() {
    let a = random_unit(&mut sample_rng(7, 3));
    assert_eq!(a, random_unit(&mut sample_rng(7, 3)));
    assert_ne!(a, random_unit(&mut sample_rng(7, 4)));
    assert_ne!(a, random_unit(&mut sample_rng(8, 3)));
    assert_relative_eq!(a.norm(), 1.0, epsilon = 1e-14);
}

#[test]
fn exact_line_fit() {
    let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0 - 0.5 * i as f64)).collect();
    let f = linear_fit(&pts);
    assert_relative_eq!(f.slope, -0.5, epsilon = 1e-14);
    assert_relative_eq!(f.intercept, 3.0, epsilon = 1e-14);
    assert_relative_eq!(f.r_squared, 1.0, epsilon = 1e-14);
}

proptest! {
    #[test]
    fn pairwise_sum_matches_naive_summation(v in prop::collection::vec(-1e3f64..1e3, 0..200)) {
        let naive: f64 = v.iter().sum();
        prop_assert!((pairwise_sum(&v) - naive).abs() <= 1e-9 * (1.0 + v.iter().map(|x| x.abs()).sum::<f64>()));
    }

    #[test]
    fn fit_recovers_exact_lines(a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let pts: Vec<(f64, f64)> = (0..20).map(|i| { let x = i as f64 * 0.1; (x, a * x + b) }).collect();
        let f = linear_fit(&pts);
        prop_assert!((f.slope - a).abs() < 1e-10 && (f.intercept - b).abs() < 1e-10);
    }
}

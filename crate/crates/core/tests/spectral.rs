use approx::assert_relative_eq;
use billiard_core::geometry::SceneParams;
use billiard_core::spectral::{analyse, contraction_lambda, find_periodic_ray, poincare_jacobian};
use billiard_core::{Obstacle, Scene, Vec3};
use nalgebra::Matrix2;

/// Per transverse plane: flight `L`, mirror `2/R1`, flight `L`, mirror `2/R2`.
fn transfer_eigenvalues(gap: f64, r1: f64, r2: f64) -> (f64, f64) {
    let flight = Matrix2::new(1.0, gap, 0.0, 1.0);
    let mirror = |r: f64| Matrix2::new(1.0, 0.0, 2.0 / r, 1.0);
    let m = mirror(r1) * flight * mirror(r2) * flight;
    let tr = m.trace();
    let disc = (tr * tr - 4.0 * m.determinant()).sqrt();
    ((tr - disc) / 2.0, (tr + disc) / 2.0)
}

fn spheres(r1: f64, r2: f64, gap: f64) -> Scene {
    Scene::new(
        Obstacle::sphere(1, Vec3::zeros(), r1),
        Obstacle::sphere(2, Vec3::new(0.0, 0.0, r1 + gap + r2), r2),
        SceneParams::default(),
    )
    .unwrap()
}

#[test]
fn reference_periodic_ray() {
    let ray = find_periodic_ray(&Scene::symmetric_two_spheres()).unwrap();
    assert_relative_eq!(ray.endpoints[0], Vec3::new(0.0, 0.0, 1.0), epsilon = 1e-12);
    assert_relative_eq!(ray.endpoints[1], Vec3::new(0.0, 0.0, 3.0), epsilon = 1e-12);
    assert_relative_eq!(ray.d, 2.0, epsilon = 1e-12);
    assert_relative_eq!(ray.period, 4.0, epsilon = 1e-12);
    assert_relative_eq!(ray.e, Vec3::z(), epsilon = 1e-12);
}

#[test]
fn unequal_spheres_meet_on_the_center_line() {
    let ray = find_periodic_ray(&spheres(1.0, 2.0, 2.0)).unwrap();
    assert_relative_eq!(ray.endpoints[0], Vec3::new(0.0, 0.0, 1.0), epsilon = 1e-10);
    assert_relative_eq!(ray.endpoints[1], Vec3::new(0.0, 0.0, 3.0), epsilon = 1e-10);
    assert_relative_eq!(ray.d, 2.0, epsilon = 1e-10);
}

#[test]
fn ellipsoid_and_sphere_share_their_axis() {
    let scene = Scene::new(
        Obstacle::ellipsoid(1, Vec3::zeros(), Vec3::new(1.0, 1.5, 0.8)),
        Obstacle::sphere(2, Vec3::new(0.0, 0.0, 4.0), 1.0),
        SceneParams::default(),
    )
    .unwrap();
    let ray = find_periodic_ray(&scene).unwrap();
    for p in ray.endpoints {
        assert!(p.x.abs() < 1e-9 && p.y.abs() < 1e-9, "{p}");
    }
    assert_relative_eq!(ray.d, 2.2, epsilon = 1e-9);
}

#[test]
fn lambda_matches_the_transfer_oracle() {
    let scene = Scene::symmetric_two_spheres();
    let (_, data) = analyse(&scene).unwrap();
    let (small, big) = transfer_eigenvalues(2.0, 1.0, 1.0);
    // Two identical transverse planes.
    assert_relative_eq!(small * small, (3.0 - 2.0 * 2f64.sqrt()).powi(4), max_relative = 1e-12);
    let lambda = contraction_lambda(&data).unwrap();
    assert_relative_eq!(lambda, small * small, max_relative = 1e-4);
    assert_relative_eq!(data.lambda, lambda, max_relative = 1e-12);
    assert_relative_eq!(data.leading_expansion(), big, max_relative = 1e-4);
    assert_eq!(data.eigenvalues.iter().filter(|z| z.norm() < 1.0).count(), 2);
}

#[test]
fn return_map_is_symplectic() {
    let (_, data) = analyse(&Scene::symmetric_two_spheres()).unwrap();
    assert!((data.determinant() - 1.0).abs() <= 1e-6, "det {}", data.determinant());
    assert!((data.lambda * data.mu - 1.0).abs() <= 1e-6);
    assert!(data.pairing_error() <= 1e-6);
}

#[test]
fn step_halving_leaves_lambda_unchanged() {
    let scene = Scene::symmetric_two_spheres();
    let ray = find_periodic_ray(&scene).unwrap();
    let a = poincare_jacobian(&ray, &scene, Some(2e-6)).unwrap();
    let b = poincare_jacobian(&ray, &scene, Some(1e-6)).unwrap();
    assert_relative_eq!(a.lambda, b.lambda, max_relative = 1e-5);
}

#[test]
fn asymmetric_scenes_match_the_oracle() {
    for (r1, r2, gap) in [(1.0, 2.0, 2.0), (0.5, 1.5, 3.0), (2.0, 2.0, 1.0)] {
        let scene = spheres(r1, r2, gap);
        let (_, data) = analyse(&scene).unwrap();
        let (small, big) = transfer_eigenvalues(gap, r1, r2);
        assert_relative_eq!(contraction_lambda(&data).unwrap(), small * small, max_relative = 1e-4);
        assert_relative_eq!(data.leading_expansion(), big, max_relative = 1e-4);
    }
}

#[test]
fn flat_mirror_limit() {
    let mut last = f64::INFINITY;
    for r in [10.0, 100.0, 1000.0, 10_000.0] {
        let (_, data) = analyse(&spheres(r, r, 2.0)).unwrap();
        let (_, big) = transfer_eigenvalues(2.0, r, r);
        let lead = data.leading_expansion();
        assert_relative_eq!(lead, big, max_relative = 1e-4);
        assert!(lead < last);
        last = lead;
    }
    assert!(last - 1.0 < 0.05, "leading modulus {last}");
}

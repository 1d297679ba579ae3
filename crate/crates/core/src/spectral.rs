//! The periodic ray between the obstacles and its linearised return map.

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;

use crate::billiard::reflect;
use crate::error::{Error, Result};
use crate::geometry::{first_intersection_excluding, nearest_points, tangent_frame, Scene, Vec3};

#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicRay {
    /// Endpoints on Θ1 and Θ2.
    pub endpoints: [Vec3; 2],
    pub d: f64,
    /// Round-trip length, equal to the period at unit speed.
    pub period: f64,
    /// Unit vector from Θ1 to Θ2.
    pub e: Vec3,
    /// Segment length after each alternating-projection sweep.
    pub history: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoincareData {
    /// Jacobian of the full-period section map in `(a, b, p, q)` coordinates.
    pub jacobian: Matrix4<f64>,
    pub eigenvalues: Vec<Complex64>,
    /// Product of the eigenvalues inside the unit disk.
    pub lambda: f64,
    /// Product of the eigenvalues outside the unit disk.
    pub mu: f64,
    pub step: f64,
}

impl PoincareData {
    /// Largest eigenvalue modulus.
    pub fn leading_expansion(&self) -> f64 {
        self.eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Worst deviation of `|λᵢ|·|μᵢ|` from one over the reciprocal pairs.
    pub fn pairing_error(&self) -> f64 {
        let mut m: Vec<f64> = self.eigenvalues.iter().map(|z| z.norm()).collect();
        m.sort_by(f64::total_cmp);
        let n = m.len();
        (0..n / 2).map(|i| (m[i] * m[n - 1 - i] - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn determinant(&self) -> f64 {
        self.jacobian.determinant()
    }
}

/// Locates the unique periodic trajectory by alternating projection.
pub fn find_periodic_ray(scene: &Scene) -> Result<PeriodicRay> {
    let [o1, o2] = &scene.obstacles;
    let (p1, p2, history) = nearest_points(o1, o2, 10_000)?;
    let d = (p2 - p1).norm();
    let e = (p2 - p1) / d;
    let c1 = e.dot(&o1.normal(&p1));
    let c2 = -e.dot(&o2.normal(&p2));
    if c1 < 1.0 - 1e-10 || c2 < 1.0 - 1e-10 {
        return Err(Error::Numeric("periodic segment is not normal to both boundaries".into()));
    }
    Ok(PeriodicRay { endpoints: [p1, p2], d, period: 2.0 * d, e, history })
}

/// Full-period section map at the Θ1 endpoint.
///
/// Coordinates are the two transverse positions in the tangent plane at the
/// endpoint and the two transverse components of the unit direction.
pub fn section_map(ray: &PeriodicRay, scene: &Scene, z: &Vector4<f64>) -> Result<Vector4<f64>> {
    let [f1, f2] = tangent_frame(&ray.e);
    let p1 = ray.endpoints[0];
    let along = 1.0 - z[2] * z[2] - z[3] * z[3];
    if along <= 0.0 {
        return Err(Error::InvalidInput("direction components exceed the unit disk".into()));
    }
    let mut x = p1 + f1 * z[0] + f2 * z[1];
    let mut v = f1 * z[2] + f2 * z[3] + ray.e * along.sqrt();
    let mut last = Some(1u8);
    for expected in [2u8, 1u8] {
        let hit = first_intersection_excluding(&x, &v, scene, last)?
            .filter(|h| h.obstacle_id == expected)
            .ok_or_else(|| Error::Numeric("section probe left the periodic neighbourhood".into()))?;
        if hit.cos_incidence < scene.tol.tangency {
            return Err(Error::Numeric("section probe hit tangentially".into()));
        }
        x = hit.point;
        v = reflect(&v, &hit.normal);
        last = Some(expected);
    }
    let s = -(x - p1).dot(&ray.e) / v.dot(&ray.e);
    let y = x + v * s - p1;
    Ok(Vector4::new(y.dot(&f1), y.dot(&f2), v.dot(&f1), v.dot(&f2)))
}

/// Central finite-difference Jacobian of [`section_map`] at the periodic ray.
///
/// `step` defaults to `1e-6·d`.
pub fn poincare_jacobian(ray: &PeriodicRay, scene: &Scene, step: Option<f64>) -> Result<PoincareData> {
    let h = step.unwrap_or(1e-6 * ray.d);
    let mut jac = Matrix4::zeros();
    for k in 0..4 {
        let mut dz = Vector4::zeros();
        dz[k] = h;
        let plus = section_map(ray, scene, &dz)?;
        let minus = section_map(ray, scene, &(-dz))?;
        jac.set_column(k, &((plus - minus) / (2.0 * h)));
    }
    let eigenvalues: Vec<Complex64> = jac.complex_eigenvalues().iter().copied().collect();
    let inside: Complex64 = eigenvalues.iter().filter(|z| z.norm() < 1.0).product();
    let outside: Complex64 = eigenvalues.iter().filter(|z| z.norm() >= 1.0).product();
    Ok(PoincareData { jacobian: jac, eigenvalues, lambda: inside.re, mu: outside.re, step: h })
}

/// Product of the two eigenvalues of modulus below one.
pub fn contraction_lambda(data: &PoincareData) -> Result<f64> {
    if data.eigenvalues.iter().any(|z| (z.norm() - 1.0).abs() < 1e-4) {
        return Err(Error::DegenerateGeometry("eigenvalue on the unit circle".into()));
    }
    let inside: Vec<&Complex64> = data.eigenvalues.iter().filter(|z| z.norm() < 1.0).collect();
    if inside.len() != 2 {
        return Err(Error::DegenerateGeometry(format!(
            "{} eigenvalues inside the unit disk",
            inside.len()
        )));
    }
    let p = inside[0] * inside[1];
    Ok(p.re)
}

/// Periodic ray and return-map data in one call.
pub fn analyse(scene: &Scene) -> Result<(PeriodicRay, PoincareData)> {
    let ray = find_periodic_ray(scene)?;
    let data = poincare_jacobian(&ray, scene, None)?;
    Ok((ray, data))
}

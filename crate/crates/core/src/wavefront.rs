//! Reflected eikonal phases, wavefront curvature transport and Λ products.
//!
//! A [`WavefrontState`] stores the second fundamental form `Q` of the level
//! surface through a point, taken with respect to `−∇φ`, in an orthonormal
//! frame orthogonal to the ray. Diverging fronts have `Q ⪰ 0`.

use nalgebra::{Matrix2, Matrix3};

use crate::billiard::Story;
use crate::connect::{connect, RayPath, Source};
use crate::error::{Error, Result};
use crate::geometry::{tangent_frame, Obstacle, Scene, SurfaceHit, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WavefrontState {
    pub point: Vec3,
    /// Unit ray direction, equal to `∇φ`.
    pub direction: Vec3,
    pub phase: f64,
    pub q: Matrix2<f64>,
    /// Orthonormal frame orthogonal to `direction` in which `q` is expressed.
    pub frame: [Vec3; 2],
}

impl WavefrontState {
    pub fn plane(point: Vec3, direction: Vec3, phase: f64) -> Self {
        let direction = direction.normalize();
        Self { point, direction, phase, q: Matrix2::zeros(), frame: tangent_frame(&direction) }
    }

    /// Spherical front at distance `s` from its source.
    pub fn spherical(point: Vec3, direction: Vec3, phase: f64, s: f64) -> Self {
        let mut ws = Self::plane(point, direction, phase);
        ws.q = Matrix2::identity() / s;
        ws
    }

    /// Gaussian curvature `det Q`.
    pub fn gaussian_curvature(&self) -> f64 {
        self.q.determinant()
    }

    /// Sum of principal curvatures `tr Q`.
    pub fn mean_sum(&self) -> f64 {
        self.q.trace()
    }

    /// `Q` as a 3×3 tensor in ambient coordinates.
    pub fn ambient_q(&self) -> Matrix3<f64> {
        let [e1, e2] = self.frame;
        let mut m = Matrix3::zeros();
        for (i, a) in [e1, e2].iter().enumerate() {
            for (j, b) in [e1, e2].iter().enumerate() {
                m += a * b.transpose() * self.q[(i, j)];
            }
        }
        m
    }
}

/// `1 + τH + τ²G = det(I + τQ)`.
pub fn spreading_factor(q: &Matrix2<f64>, tau: f64) -> f64 {
    1.0 + tau * q.trace() + tau * tau * q.determinant()
}

/// Free propagation over path length `τ`: `Q ← Q(I + τQ)⁻¹`.
pub fn propagate_free(ws: &WavefrontState, tau: f64) -> Result<WavefrontState> {
    let m = Matrix2::identity() + ws.q * tau;
    if 1.0 + tau * ws.q.symmetric_eigenvalues().min() <= 0.0 {
        return Err(Error::Caustic { focal_distance: focal_distance(&ws.q, tau) });
    }
    let inv = m.try_inverse().ok_or(Error::Caustic { focal_distance: tau })?;
    let q = ws.q * inv;
    Ok(WavefrontState {
        point: ws.point + ws.direction * tau,
        phase: ws.phase + tau,
        q: 0.5 * (q + q.transpose()),
        ..*ws
    })
}

fn focal_distance(q: &Matrix2<f64>, limit: f64) -> f64 {
    let eig = q.symmetric_eigenvalues();
    eig.iter()
        .filter(|k| **k < 0.0)
        .map(|k| -1.0 / k)
        .filter(|s| *s <= limit * (1.0 + 1e-12))
        .fold(limit, f64::min)
}

/// Rotation taking the unit vector `a` to the unit vector `b` about `a × b`.
///
/// For antiparallel vectors the rotation is the half-turn about `fallback`.
pub fn rotation_between(a: &Vec3, b: &Vec3, fallback: &Vec3) -> Matrix3<f64> {
    let k = a.cross(b);
    let one_plus_cos = 0.5 * (a + b).norm_squared();
    if one_plus_cos < 1e-24 || (one_plus_cos < 1e-12 && k.norm() < 1e-12) {
        return 2.0 * fallback * fallback.transpose() - Matrix3::identity();
    }
    let kx = k.cross_matrix();
    Matrix3::identity() + kx + kx * kx / one_plus_cos
}

/// Mirror law for the front at a boundary hit of `obstacle`.
///
/// With incidence cosine `c`, surface tangent frame `T`, shape operator `K`
/// and projections `A = Fᵀ T`, the reflected form solves
/// `A_rᵀ Q_r A_r = A_iᵀ Q_i A_i + 2cK`.
pub fn reflect_wavefront(
    ws: &WavefrontState,
    hit: &SurfaceHit,
    obstacle: &Obstacle,
    tangency: f64,
) -> Result<WavefrontState> {
    let n = hit.normal;
    let c = -ws.direction.dot(&n);
    if c < tangency {
        return Err(Error::TangencyAmbiguity {
            time: hit.time,
            point: [hit.point.x, hit.point.y, hit.point.z],
            obstacle: hit.obstacle_id,
            margin: c.abs(),
        });
    }
    let out = crate::billiard::reflect(&ws.direction, &n);
    let rot = rotation_between(&ws.direction, &out, &ws.frame[0]);
    let frame_r = [rot * ws.frame[0], rot * ws.frame[1]];
    let t = tangent_frame(&n);
    let k = obstacle.second_form(&hit.point, &t[0], &t[1]);
    let proj = |f: &[Vec3; 2]| Matrix2::from_fn(|i, j| f[i].dot(&t[j]));
    let a_i = proj(&ws.frame);
    let a_r = proj(&frame_r);
    let inner = a_i.transpose() * ws.q * a_i + k * (2.0 * c);
    let a_r_inv = a_r
        .try_inverse()
        .ok_or_else(|| Error::Numeric("reflected frame is degenerate".into()))?;
    let q = a_r_inv.transpose() * inner * a_r_inv;
    Ok(WavefrontState {
        point: hit.point,
        direction: out,
        phase: ws.phase,
        q: 0.5 * (q + q.transpose()),
        frame: frame_r,
    })
}

/// Reflected phase `φ_J` generated by the base phase `(x − y)·ξ/|ξ|`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseField {
    pub y: Vec3,
    pub xi: Vec3,
    pub story: Story,
}

/// Everything known about `φ_J` at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSample {
    pub value: f64,
    pub gradient: Vec3,
    /// Curvature form of the level surface at the point.
    pub front: WavefrontState,
    /// Λφ_J at the point.
    pub lambda: f64,
    /// Curvature form just after each reflection.
    pub reflected_q: Vec<Matrix2<f64>>,
    pub path: RayPath,
}

impl PhaseField {
    pub fn new(y: Vec3, xi: Vec3, story: Story) -> Self {
        Self { y, xi, story }
    }

    pub fn direction(&self) -> Vec3 {
        self.xi.normalize()
    }

    /// Value, gradient, curvature and Λ at `x`, seeding the connection with `guess`.
    pub fn sample(&self, scene: &Scene, x: &Vec3, guess: Option<&[Vec3]>) -> Result<PhaseSample> {
        let dir = self.direction();
        let path = connect(&Source::PlaneWave { dir }, x, &self.story, scene, guess)?;
        if self.story.is_empty() {
            let front = WavefrontState::plane(*x, dir, (x - self.y).dot(&dir));
            return Ok(PhaseSample {
                value: front.phase,
                gradient: dir,
                front,
                lambda: 1.0,
                reflected_q: vec![],
                path,
            });
        }
        let p1 = path.points[0];
        let mut ws = WavefrontState::plane(p1, dir, (p1 - self.y).dot(&dir));
        let mut lambda = 1.0;
        let mut reflected_q = Vec::with_capacity(path.points.len());
        for (k, p) in path.points.iter().enumerate() {
            let o = scene.obstacle(self.story.as_slice()[k]);
            let normal = o.normal(p);
            let hit = SurfaceHit {
                time: 0.0,
                point: *p,
                normal,
                obstacle_id: o.id,
                cos_incidence: path.cosines[k],
            };
            ws.point = *p;
            ws = reflect_wavefront(&ws, &hit, o, scene.tol.tangency)?;
            ws.direction = path.dirs[k + 1];
            reflected_q.push(ws.q);
            let l = path.lengths[k];
            let spread = spreading_factor(&ws.q, l);
            if spread <= 0.0 {
                return Err(Error::Caustic { focal_distance: focal_distance(&ws.q, l) });
            }
            lambda /= spread.sqrt();
            ws = propagate_free(&ws, l)?;
        }
        ws.point = *x;
        Ok(PhaseSample {
            value: ws.phase,
            gradient: path.arrival_dir(),
            front: ws,
            lambda,
            reflected_q,
            path,
        })
    }
}

/// `(φ_J(x), ∇φ_J(x))`.
pub fn phase_eval(field: &PhaseField, scene: &Scene, x: &Vec3) -> Result<(f64, Vec3)> {
    let s = field.sample(scene, x, None)?;
    Ok((s.value, s.gradient))
}

/// Λφ_J at `x`, the telescoping product of per-flight curvature ratios.
pub fn lambda_product(field: &PhaseField, scene: &Scene, x: &Vec3) -> Result<f64> {
    Ok(field.sample(scene, x, None)?.lambda)
}

/// Sample set for [`condition_p_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionPSpec {
    /// Points inside the field domain for the curvature and convexity clauses.
    pub domain_points: Vec<Vec3>,
    /// Number of boundary samples on the other obstacle for the illumination clause.
    pub boundary_samples: usize,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionPReport {
    pub min_curvature: f64,
    pub curvature_ok: bool,
    pub illumination_failures: usize,
    pub illumination_ok: bool,
    /// Midpoint-convexity violations of sampled sublevel pairs.
    pub sublevel_violations: usize,
    pub sublevel_sampled_ok: bool,
    pub domain_failures: usize,
}

impl ConditionPReport {
    pub fn passes(&self) -> bool {
        self.curvature_ok && self.illumination_ok && self.sublevel_sampled_ok
    }
}

/// Samples the three clauses of condition (P) for `field` on `∂Θ_p`.
///
/// Illumination: every sampled boundary point `z` of the other obstacle must
/// lie on a ray of the field that left `∂Θ_p`, i.e. the line through `z`
/// along `∇φ(z)` must meet `Θ_p` behind `z`.
pub fn condition_p_check(field: &PhaseField, scene: &Scene, p: u8, spec: &ConditionPSpec) -> ConditionPReport {
    let mut min_curvature = f64::INFINITY;
    let mut domain_failures = 0;
    let mut samples = Vec::new();
    for x in &spec.domain_points {
        match field.sample(scene, x, None) {
            Ok(s) => {
                let m = s.front.q.symmetric_eigenvalues().min();
                min_curvature = min_curvature.min(m);
                samples.push((*x, s.value));
            }
            Err(_) => domain_failures += 1,
        }
    }
    let other = scene.obstacle(3 - p);
    let body = scene.obstacle(p);
    let mut illumination_failures = 0;
    for u in crate::sampling::fibonacci_sphere(spec.boundary_samples) {
        let z = other.support_point(&u);
        let grad = match field.sample(scene, &z, None) {
            Ok(s) => s.gradient,
            Err(_) => {
                illumination_failures += 1;
                continue;
            }
        };
        let behind = body.intersect(&z, &(-grad)).is_some()
            || body.line_meets(&z, &grad, spec.tolerance) && (body.center - z).dot(&grad) < 0.0;
        if !behind {
            illumination_failures += 1;
        }
    }
    let mut sublevel_violations = 0;
    for i in 0..samples.len() {
        for j in (i + 1)..samples.len() {
            let (a, fa) = samples[i];
            let (b, fb) = samples[j];
            let mid = 0.5 * (a + b);
            if let Ok(s) = field.sample(scene, &mid, None) {
                if s.value > fa.max(fb) + spec.tolerance {
                    sublevel_violations += 1;
                }
            }
        }
    }
    ConditionPReport {
        min_curvature,
        curvature_ok: min_curvature >= -spec.tolerance,
        illumination_failures,
        illumination_ok: illumination_failures == 0,
        sublevel_violations,
        sublevel_sampled_ok: sublevel_violations == 0,
        domain_failures,
    }
}

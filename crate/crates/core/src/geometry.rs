//! Strictly convex obstacles and the ray queries the flow is built from.
//!
//! Every obstacle carries an implicit function `g` that is negative inside,
//! zero on the boundary and positive outside. Spheres and axis-aligned
//! ellipsoids use closed-form line intersections; the general implicit body
//! `g(u) = Σ aᵢuᵢ² + bᵢuᵢ⁴ − 1` is intersected by safeguarded root bracketing.

use nalgebra::{Matrix2, Matrix3, Matrix4, Vector3, Vector4};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Obstacle family and its shape parameters (relative to the obstacle center).
#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Sphere { radius: f64 },
    /// Axis-aligned ellipsoid with semi-axes `radii`.
    Ellipsoid { radii: Vec3 },
    /// `g(u) = Σ quadraticᵢ uᵢ² + quarticᵢ uᵢ⁴ − 1`, `quadratic > 0`, `quartic ≥ 0`.
    Implicit { quadratic: Vec3, quartic: Vec3 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Obstacle {
    pub id: u8,
    pub center: Vec3,
    pub shape: Shape,
}

/// First contact of a ray with an obstacle boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceHit {
    pub time: f64,
    pub point: Vec3,
    pub normal: Vec3,
    pub obstacle_id: u8,
    /// `−ξ̂·n`, positive for a ray arriving from outside.
    pub cos_incidence: f64,
}

/// Orthonormal basis `(e1, e2)` of the plane orthogonal to `n`.
pub fn tangent_frame(n: &Vec3) -> [Vec3; 2] {
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = (helper - n * n.dot(&helper)).normalize();
    let e2 = n.cross(&e1);
    [e1, e2]
}

impl Obstacle {
    pub fn sphere(id: u8, center: Vec3, radius: f64) -> Self {
        Self { id, center, shape: Shape::Sphere { radius } }
    }

    pub fn ellipsoid(id: u8, center: Vec3, radii: Vec3) -> Self {
        Self { id, center, shape: Shape::Ellipsoid { radii } }
    }

    pub fn implicit(id: u8, center: Vec3, quadratic: Vec3, quartic: Vec3) -> Self {
        Self { id, center, shape: Shape::Implicit { quadratic, quartic } }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match &self.shape {
            Shape::Sphere { radius } => radius.is_finite() && *radius > 0.0,
            Shape::Ellipsoid { radii } => radii.iter().all(|r| r.is_finite() && *r > 0.0),
            Shape::Implicit { quadratic, quartic } => {
                quadratic.iter().all(|a| a.is_finite() && *a > 0.0)
                    && quartic.iter().all(|b| b.is_finite() && *b >= 0.0)
            }
        };
        if ok && self.center.iter().all(|c| c.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("obstacle {} has invalid parameters", self.id)))
        }
    }

    pub fn value(&self, p: &Vec3) -> f64 {
        let u = p - self.center;
        match &self.shape {
            Shape::Sphere { radius } => (u.norm_squared() - radius * radius) / (2.0 * radius),
            Shape::Ellipsoid { radii } => u.component_div(radii).norm_squared() - 1.0,
            Shape::Implicit { quadratic, quartic } => {
                (0..3)
                    .map(|i| quadratic[i] * u[i].powi(2) + quartic[i] * u[i].powi(4))
                    .sum::<f64>()
                    - 1.0
            }
        }
    }

    pub fn gradient(&self, p: &Vec3) -> Vec3 {
        let u = p - self.center;
        match &self.shape {
            Shape::Sphere { radius } => u / *radius,
            Shape::Ellipsoid { radii } => {
                Vec3::from_fn(|i, _| 2.0 * u[i] / (radii[i] * radii[i]))
            }
            Shape::Implicit { quadratic, quartic } => Vec3::from_fn(|i, _| {
                2.0 * quadratic[i] * u[i] + 4.0 * quartic[i] * u[i].powi(3)
            }),
        }
    }

    pub fn hessian(&self, p: &Vec3) -> Matrix3<f64> {
        let u = p - self.center;
        match &self.shape {
            Shape::Sphere { radius } => Matrix3::identity() / *radius,
            Shape::Ellipsoid { radii } => Matrix3::from_diagonal(&Vec3::from_fn(|i, _| {
                2.0 / (radii[i] * radii[i])
            })),
            Shape::Implicit { quadratic, quartic } => {
                Matrix3::from_diagonal(&Vec3::from_fn(|i, _| {
                    2.0 * quadratic[i] + 12.0 * quartic[i] * u[i] * u[i]
                }))
            }
        }
    }

    /// Outward unit normal of the level set through `p`.
    pub fn normal(&self, p: &Vec3) -> Vec3 {
        self.gradient(p).normalize()
    }

    /// Radius of a ball around `center` containing the obstacle.
    pub fn bounding_radius(&self) -> f64 {
        match &self.shape {
            Shape::Sphere { radius } => *radius,
            Shape::Ellipsoid { radii } => radii.max(),
            Shape::Implicit { quadratic, .. } => 1.0 / quadratic.min().sqrt(),
        }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.value(p) < 0.0
    }

    /// Boundary point maximising `u·p`.
    pub fn support_point(&self, u: &Vec3) -> Vec3 {
        let u = u.normalize();
        match &self.shape {
            Shape::Sphere { radius } => self.center + u * *radius,
            Shape::Ellipsoid { radii } => {
                let r2u = Vec3::from_fn(|i, _| radii[i] * radii[i] * u[i]);
                let denom = u.component_mul(radii).norm();
                self.center + r2u / denom
            }
            Shape::Implicit { .. } => {
                let far = self.center + u * (4.0 * self.bounding_radius());
                self.project(&far)
            }
        }
    }

    /// Moves a point near the boundary onto it along the gradient direction.
    pub fn retract(&self, p: &Vec3) -> Vec3 {
        if let Shape::Sphere { radius } = &self.shape {
            return self.center + (p - self.center).normalize() * *radius;
        }
        let mut q = *p;
        for _ in 0..60 {
            let g = self.value(&q);
            let grad = self.gradient(&q);
            let step = g / grad.norm_squared();
            q -= grad * step;
            if (grad * step).norm() < 1e-15 * (1.0 + q.norm()) {
                break;
            }
        }
        q
    }

    /// Nearest boundary point to an exterior point `z`.
    pub fn project(&self, z: &Vec3) -> Vec3 {
        if let Shape::Sphere { radius } = &self.shape {
            return self.center + (z - self.center).normalize() * *radius;
        }
        let toward = self.center - z;
        let start = match self.intersect(z, &toward) {
            Some(t) => z + toward * t,
            None => self.retract(z),
        };
        let mut p = start;
        let grad = self.gradient(&p);
        let mut lam = (z - p).dot(&grad) / grad.norm_squared();
        for _ in 0..100 {
            let g = self.gradient(&p);
            let h = self.hessian(&p);
            let r = p - z + g * lam;
            let f = Vector4::new(r.x, r.y, r.z, self.value(&p));
            if f.norm() < 1e-15 {
                break;
            }
            let a = Matrix3::identity() + h * lam;
            let mut jac = Matrix4::zeros();
            jac.fixed_view_mut::<3, 3>(0, 0).copy_from(&a);
            jac.fixed_view_mut::<3, 1>(0, 3).copy_from(&g);
            jac.fixed_view_mut::<1, 3>(3, 0).copy_from(&g.transpose());
            let Some(delta) = jac.lu().solve(&(-f)) else { break };
            p += Vec3::new(delta[0], delta[1], delta[2]);
            lam += delta[3];
            if delta.norm() < 1e-16 * (1.0 + p.norm()) {
                break;
            }
        }
        self.retract(&p)
    }

    /// Earliest `t > 0` with `x + tξ` on the boundary, or `None` if the ray misses.
    ///
    /// A ray touching the boundary tangentially counts as a hit.
    pub fn intersect(&self, x: &Vec3, xi: &Vec3) -> Option<f64> {
        match &self.shape {
            Shape::Sphere { radius } => quadric_hit(x - self.center, *xi, Vec3::repeat(*radius)),
            Shape::Ellipsoid { radii } => quadric_hit(x - self.center, *xi, *radii),
            Shape::Implicit { .. } => self.implicit_hit(x, xi),
        }
    }

    /// Whether the full line `x + sd`, `s ∈ ℝ`, meets the closed body (up to `tol` in `g`).
    pub fn line_meets(&self, x: &Vec3, d: &Vec3, tol: f64) -> bool {
        let u = x - self.center;
        let s = -u.dot(d) / d.norm_squared();
        let closest = x + d * s;
        let r = self.bounding_radius();
        if (closest - self.center).norm() > r * (1.0 + 1e-9) {
            return false;
        }
        let half = (r * r - (closest - self.center).norm_squared()).max(0.0).sqrt() / d.norm();
        let (mut lo, mut hi) = (s - half, s + half);
        let f = |t: f64| self.gradient(&(x + d * t)).dot(d);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.value(&(x + d * (0.5 * (lo + hi)))) <= tol
    }

    fn implicit_hit(&self, x: &Vec3, xi: &Vec3) -> Option<f64> {
        let r = self.bounding_radius() * (1.0 + 1e-12);
        let u = x - self.center;
        let a = xi.norm_squared();
        let b = u.dot(xi);
        let c = u.norm_squared() - r * r;
        let disc = b * b - a * c;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        let t_in = (-b - sq) / a;
        let t_out = (-b + sq) / a;
        if t_out <= 0.0 {
            return None;
        }
        let lo0 = t_in.max(0.0);
        let f = |t: f64| self.value(&(x + xi * t));
        let df = |t: f64| self.gradient(&(x + xi * t)).dot(xi);
        let d2f = |t: f64| xi.dot(&(self.hessian(&(x + xi * t)) * xi));

        // Minimiser of the convex restriction on the chord.
        let (mut lo, mut hi) = (lo0, t_out);
        let t_min = if df(lo) >= 0.0 {
            lo
        } else if df(hi) <= 0.0 {
            hi
        } else {
            let mut t = 0.5 * (lo + hi);
            for _ in 0..200 {
                let g = df(t);
                if g < 0.0 {
                    lo = t;
                } else {
                    hi = t;
                }
                let h = d2f(t);
                let newton = t - g / h;
                t = if h > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
                if hi - lo < 1e-15 * (1.0 + hi.abs()) || g == 0.0 {
                    break;
                }
            }
            t
        };
        if f(t_min) > 0.0 {
            return None;
        }
        if f(lo0) <= 0.0 {
            return Some(lo0);
        }
        // f decreases from positive to non-positive on [lo0, t_min].
        let (mut lo, mut hi) = (lo0, t_min);
        let mut t = lo;
        for _ in 0..300 {
            let v = f(t);
            if v > 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let g = df(t);
            let newton = t - v / g;
            t = if g < 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-15 * (1.0 + hi.abs()) {
                break;
            }
        }
        Some(hi)
    }

    /// Second fundamental form at a boundary point in the frame `(t1, t2)`.
    pub fn second_form(&self, p: &Vec3, t1: &Vec3, t2: &Vec3) -> Matrix2<f64> {
        let h = self.hessian(p);
        let g = self.gradient(p).norm();
        let a = t1.dot(&(h * t1)) / g;
        let b = t1.dot(&(h * t2)) / g;
        let c = t2.dot(&(h * t2)) / g;
        Matrix2::new(a, b, b, c)
    }
}

fn quadric_hit(u: Vec3, xi: Vec3, radii: Vec3) -> Option<f64> {
    let u = u.component_div(&radii);
    let v = xi.component_div(&radii);
    let a = v.norm_squared();
    let b = u.dot(&v);
    let c = u.norm_squared() - 1.0;
    if b >= 0.0 || a == 0.0 {
        return None;
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let t = c / (-b + disc.sqrt());
    (t >= 0.0).then_some(t)
}

/// Numerical tolerances carried by a scene.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Incidence cosine below which a hit is treated as tangential.
    pub tangency: f64,
    /// Accepted `|g|` on computed boundary points.
    pub intersection: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { tangency: 1e-9, intersection: 1e-9 }
    }
}

/// Scalar parameters of a scene that are not derived from the obstacles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneParams {
    pub alpha0: f64,
    pub beta0: f64,
    pub delta0: f64,
    /// Transversality threshold; computed from the periodic-ray family when `None`.
    pub delta1: Option<f64>,
    pub eta: f64,
    /// Radius of the cylinder 𝓤∞ around the periodic ray; defaults to `min(d, ρ)/4`.
    pub u_radius: Option<f64>,
    pub tolerances: Tolerances,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            alpha0: 0.25,
            beta0: 1.25,
            delta0: 0.25,
            delta1: None,
            eta: 0.05,
            u_radius: None,
            tolerances: Tolerances::default(),
        }
    }
}

/// Two disjoint strictly convex obstacles with the constants of the construction.
#[derive(Clone, Debug)]
pub struct Scene {
    pub obstacles: [Obstacle; 2],
    /// Minimal boundary-to-boundary distance.
    pub d: f64,
    /// Maximal distance between points of the two obstacles.
    pub diameter: f64,
    /// Endpoints of the periodic ray on Θ1 and Θ2.
    pub axis: [Vec3; 2],
    pub alpha0: f64,
    pub beta0: f64,
    pub delta0: f64,
    pub delta1: f64,
    pub eta: f64,
    pub u_radius: f64,
    pub tol: Tolerances,
}

/// Alternating projection between two convex boundaries.
///
/// Returns the pair of mutually nearest points and the distances after each sweep.
pub fn nearest_points(a: &Obstacle, b: &Obstacle, max_iter: usize) -> Result<(Vec3, Vec3, Vec<f64>)> {
    let mut pb = b.project(&a.center);
    let mut pa = a.project(&pb);
    let mut history = vec![(pa - pb).norm()];
    for _ in 0..max_iter {
        let nb = b.project(&pa);
        let na = a.project(&nb);
        let moved = (na - pa).norm() + (nb - pb).norm();
        pa = na;
        pb = nb;
        history.push((pa - pb).norm());
        if moved < 1e-12 {
            return Ok((pa, pb, history));
        }
    }
    Err(Error::Numeric(format!("alternating projection did not converge in {max_iter} sweeps")))
}

impl Scene {
    pub fn new(o1: Obstacle, o2: Obstacle, params: SceneParams) -> Result<Self> {
        o1.validate()?;
        o2.validate()?;
        if o1.id != 1 || o2.id != 2 {
            return Err(Error::InvalidInput("obstacle ids must be 1 and 2".into()));
        }
        if !(params.alpha0 > 0.0 && params.alpha0 <= params.beta0) {
            return Err(Error::InvalidInput("speed bounds must satisfy 0 < α0 ≤ β0".into()));
        }
        if !(params.delta0 > 0.0 && params.eta > 0.0) {
            return Err(Error::InvalidInput("δ0 and η must be positive".into()));
        }
        if o1.contains(&o2.center) || o2.contains(&o1.center) {
            return Err(Error::InvalidInput("obstacles overlap".into()));
        }
        let (p1, p2, _) = nearest_points(&o1, &o2, 10_000)?;
        let d = (p2 - p1).norm();
        if !(d > 0.0) || o1.contains(&p2) || o2.contains(&p1) {
            return Err(Error::InvalidInput("obstacles are not disjoint".into()));
        }
        let diameter = max_distance(&o1, &o2);
        let rho = [(&o1, p1), (&o2, p2)]
            .iter()
            .map(|(o, p)| {
                let [t1, t2] = tangent_frame(&o.normal(p));
                let k = o.second_form(p, &t1, &t2).symmetric_eigenvalues().max();
                1.0 / k
            })
            .fold(f64::INFINITY, f64::min);
        let u_radius = params.u_radius.unwrap_or(0.25 * d.min(rho));
        let mut scene = Scene {
            obstacles: [o1, o2],
            d,
            diameter,
            axis: [p1, p2],
            alpha0: params.alpha0,
            beta0: params.beta0,
            delta0: params.delta0,
            delta1: 0.0,
            eta: params.eta,
            u_radius,
            tol: params.tolerances,
        };
        scene.delta1 = match params.delta1 {
            Some(v) => v,
            None => scene.default_delta1(2),
        };
        Ok(scene)
    }

    /// Unit spheres centred at the origin and at `(0, 0, 4)`.
    pub fn symmetric_two_spheres() -> Self {
        Self::new(
            Obstacle::sphere(1, Vec3::zeros(), 1.0),
            Obstacle::sphere(2, Vec3::new(0.0, 0.0, 4.0), 1.0),
            SceneParams::default(),
        )
        .expect("reference scene is valid")
    }

    pub fn obstacle(&self, id: u8) -> &Obstacle {
        &self.obstacles[(id as usize).clamp(1, 2) - 1]
    }

    /// Unit vector along the periodic ray, oriented from Θ1 to Θ2.
    pub fn axis_dir(&self) -> Vec3 {
        (self.axis[1] - self.axis[0]).normalize()
    }

    pub fn center(&self) -> Vec3 {
        0.5 * (self.obstacles[0].center + self.obstacles[1].center)
    }

    pub fn escape_radius(&self) -> f64 {
        3.0 * self.diameter
    }

    /// Length of one round trip along the periodic ray (time at unit speed).
    pub fn period(&self) -> f64 {
        2.0 * self.d
    }

    pub fn c1(&self) -> f64 {
        self.delta0 / (2.0 * self.beta0)
    }

    pub fn c2(&self) -> f64 {
        4.0 * self.diameter / self.alpha0
    }

    pub fn t0(&self) -> f64 {
        0.5 * self.c1()
    }

    /// Axis-aligned box containing both bounding balls, widened by `margin`.
    pub fn bounding_box(&self, margin: f64) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for o in &self.obstacles {
            let r = o.bounding_radius() + margin;
            lo = lo.inf(&(o.center - Vec3::repeat(r)));
            hi = hi.sup(&(o.center + Vec3::repeat(r)));
        }
        (lo, hi)
    }

    /// Whether `x` lies strictly outside both obstacles.
    pub fn is_exterior(&self, x: &Vec3) -> bool {
        self.obstacles.iter().all(|o| !o.contains(x))
    }

    /// Whether `x` lies in the cylinder 𝓤∞ spanned by the periodic ray.
    ///
    /// The cylinder extends `u_radius` past both endpoints so that it reaches
    /// the boundary caps it meets.
    pub fn in_u_infinity(&self, x: &Vec3) -> bool {
        let e = self.axis_dir();
        let s = (x - self.axis[0]).dot(&e);
        let radial = (x - self.axis[0] - e * s).norm();
        let r = self.u_radius;
        s > -r && s < self.d + r && radial < r && self.is_exterior(x)
    }

    /// Half the smallest incidence cosine over the first `m` reflections of
    /// rays launched from the axis inside the cone subtended by 𝓤∞.
    fn default_delta1(&self, m: usize) -> f64 {
        let e = self.axis_dir();
        let [f1, f2] = tangent_frame(&e);
        let half_angle = (self.u_radius / self.d).atan();
        let mut min_cos = 1.0f64;
        for i in 1..=5 {
            let x = self.axis[0] + e * (self.d * i as f64 / 6.0);
            for sign in [1.0, -1.0] {
                for k in 0..8 {
                    let phi = std::f64::consts::TAU * k as f64 / 8.0;
                    let tilt = (f1 * phi.cos() + f2 * phi.sin()) * half_angle.tan();
                    let mut pos = x;
                    let mut dir = (e * sign + tilt).normalize();
                    let mut last = None;
                    for _ in 0..m {
                        let Ok(Some(hit)) = first_intersection_excluding(&pos, &dir, self, last) else {
                            break;
                        };
                        min_cos = min_cos.min(hit.cos_incidence);
                        dir = crate::billiard::reflect(&dir, &hit.normal);
                        pos = hit.point;
                        last = Some(hit.obstacle_id);
                    }
                }
            }
        }
        0.5 * min_cos
    }
}

fn max_distance(a: &Obstacle, b: &Obstacle) -> f64 {
    let quadric = |o: &Obstacle| !matches!(o.shape, Shape::Implicit { .. });
    if !(quadric(a) && quadric(b)) {
        return (a.center - b.center).norm() + a.bounding_radius() + b.bounding_radius();
    }
    let n = 4000;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let th = golden * i as f64;
            let u = Vec3::new(r * th.cos(), r * th.sin(), z);
            (a.support_point(&u) - b.support_point(&(-u))).norm()
        })
        .fold(0.0, f64::max)
}

/// Earliest forward boundary hit of the ray `x + tξ` among both obstacles.
pub fn first_intersection(x: &Vec3, xi: &Vec3, scene: &Scene) -> Result<Option<SurfaceHit>> {
    first_intersection_excluding(x, xi, scene, None)
}

/// As [`first_intersection`], ignoring obstacle `exclude` (the one just left).
pub fn first_intersection_excluding(
    x: &Vec3,
    xi: &Vec3,
    scene: &Scene,
    exclude: Option<u8>,
) -> Result<Option<SurfaceHit>> {
    let speed = xi.norm();
    if !(speed > 0.0) || !speed.is_finite() {
        return Err(Error::InvalidInput("ray direction must be nonzero".into()));
    }
    let best = scene
        .obstacles
        .iter()
        .filter(|o| Some(o.id) != exclude)
        .filter_map(|o| o.intersect(x, xi).map(|t| (t, o)))
        .min_by(|a, b| a.0.total_cmp(&b.0));
    Ok(best.map(|(t, o)| hit_on(o, x, xi, t)))
}

/// Builds the [`SurfaceHit`] for parameter `t` on obstacle `o`.
pub fn hit_on(o: &Obstacle, x: &Vec3, xi: &Vec3, t: f64) -> SurfaceHit {
    let point = x + xi * t;
    let normal = o.normal(&point);
    SurfaceHit {
        time: t,
        point,
        normal,
        obstacle_id: o.id,
        cos_incidence: -xi.dot(&normal) / xi.norm(),
    }
}

/// `|ξ̂·n|` at the hit; the hit is η-tangential iff the margin is at most η.
pub fn tangency_margin(hit: &SurfaceHit) -> f64 {
    hit.cos_incidence.abs()
}

/// Shape operator at a boundary point, in the frame returned alongside it.
pub fn shape_operator(obstacle: &Obstacle, p: &Vec3, tol: f64) -> Result<(Matrix2<f64>, [Vec3; 2])> {
    let g = obstacle.value(p);
    if g.abs() > tol * (1.0 + obstacle.bounding_radius()) {
        return Err(Error::InvalidInput(format!("point is not on the boundary (g = {g:e})")));
    }
    let frame = tangent_frame(&obstacle.normal(p));
    Ok((obstacle.second_form(p, &frame[0], &frame[1]), frame))
}

/// Travel time of `x + tξ` to the boundary, `None` on a miss.
pub fn travel_time(x: &Vec3, xi: &Vec3, scene: &Scene) -> Result<Option<f64>> {
    Ok(first_intersection(x, xi, scene)?.map(|h| h.time))
}

/// Fits the exponent `a` in `|t(x, ξ + δ v) − t(x, ξ)| ∝ δ^a` over the offsets.
pub fn travel_time_regularity_probe(
    scene: &Scene,
    x: &Vec3,
    xi: &Vec3,
    v: &Vec3,
    offsets: &[f64],
) -> Result<f64> {
    let base = travel_time(x, xi, scene)?
        .ok_or_else(|| Error::ProbeFailure("base ray misses both obstacles".into()))?;
    let mut pts = Vec::new();
    for &delta in offsets {
        if let Some(t) = travel_time(x, &(xi + v * delta), scene)? {
            let dt = (t - base).abs();
            if dt > 0.0 && delta > 0.0 {
                pts.push((delta.ln(), dt.ln()));
            }
        }
    }
    if pts.len() < 2 {
        return Err(Error::ProbeFailure("fewer than two probe rays hit".into()));
    }
    Ok(crate::fit::linear_fit(&pts).slope)
}

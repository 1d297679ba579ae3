//! Symbol surrogate, story amplitudes, phases and the parametrix `S_K`.

use nalgebra::Matrix3;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::billiard::{PhasePoint, Story};
use crate::connect::{connect, RayPath, Source};
use crate::error::{Error, Result};
use crate::fit::{linear_fit, pairwise_sum, LinearFit};
use crate::geometry::{tangent_frame, Scene, Vec3};
use crate::quadrature::{adaptive_simpson, gauss_legendre_on};
use crate::sampling::{fibonacci_sphere, halton};
use crate::trapped::{default_t_max, first_exit_time, TrappedRegion};
use crate::wavefront::{spreading_factor, PhaseField};

/// Directions `ξ` with `|ξ| ∈ [speed_lo, speed_hi]` within `half_angle` of `axis`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cone {
    pub axis: Vec3,
    pub half_angle: f64,
    pub speed_lo: f64,
    pub speed_hi: f64,
}

/// A symbol `q(x, ξ)` entering the amplitudes.
pub trait Symbol: Sync {
    fn eval(&self, x: &Vec3, xi: &Vec3) -> f64;
    /// Region of `ξ` outside which `q` vanishes.
    fn xi_support(&self) -> Cone;
    /// Step of the spatial finite-difference Laplacian.
    fn fd_step(&self) -> f64;
    /// Ball `(center, radius)` outside which `q` vanishes in `x`.
    fn spatial_support(&self) -> (Vec3, f64);
}

/// `cos(πr/2)^{2m}` on `r < 1`, zero beyond.
pub fn bump(r: f64, m: u32) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        (0.5 * std::f64::consts::PI * r).cos().powi(2 * m as i32)
    }
}

/// Product of cosine bumps in position, direction and speed.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolSurrogate {
    pub center: Vec3,
    /// Unit axis of the spatial ellipsoid.
    pub axis: Vec3,
    pub transverse_radius: f64,
    pub axial_radius: f64,
    pub cone_axis: Vec3,
    pub cone_half_angle: f64,
    pub speed_center: f64,
    pub speed_half_width: f64,
    pub order: u32,
}

impl SymbolSurrogate {
    /// Centred on the periodic ray, directions around `+e`, speeds spanning `[α0, β0]`.
    pub fn for_scene(scene: &Scene) -> Self {
        let e = scene.axis_dir();
        Self {
            center: 0.5 * (scene.axis[0] + scene.axis[1]),
            axis: e,
            transverse_radius: 0.5 * scene.u_radius,
            axial_radius: 0.5 * scene.d - 1.2 * scene.delta0,
            cone_axis: e,
            cone_half_angle: 0.1,
            speed_center: 0.5 * (scene.alpha0 + scene.beta0),
            speed_half_width: 0.5 * (scene.beta0 - scene.alpha0),
            order: 4,
        }
    }

    /// `+1` when the direction cone points along `e`, `−1` along `−e`.
    pub fn orientation(&self, scene: &Scene) -> f64 {
        self.cone_axis.dot(&scene.axis_dir()).signum()
    }

    /// Spatial bump factor.
    pub fn spatial(&self, x: &Vec3) -> f64 {
        let u = x - self.center;
        let s = u.dot(&self.axis);
        let r = (u - self.axis * s).norm();
        let rho = ((s / self.axial_radius).powi(2) + (r / self.transverse_radius).powi(2)).sqrt();
        bump(rho, self.order)
    }

    /// Derivative scale `ρ`: the order times `π/2` over the narrowest support width.
    pub fn rho(&self) -> f64 {
        let widths = [
            self.transverse_radius,
            self.axial_radius,
            self.speed_half_width,
            (self.speed_center - self.speed_half_width) * self.cone_half_angle,
        ];
        let w = widths.iter().copied().fold(f64::INFINITY, f64::min);
        self.order as f64 * std::f64::consts::FRAC_PI_2 / w
    }

    pub fn validate(&self, scene: &Scene) -> Result<()> {
        let e = scene.axis_dir();
        if (self.cone_axis.norm() - 1.0).abs() > 1e-12 || (self.axis.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput("symbol axes must be unit vectors".into()));
        }
        if self.cone_axis.dot(&e).abs() < 1.0 - 1e-12 {
            return Err(Error::InvalidInput("direction cone must be centred on ±e".into()));
        }
        if !(self.cone_half_angle > 0.0 && self.cone_half_angle < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidInput("direction cone straddles both orientations".into()));
        }
        let lo = self.speed_center - self.speed_half_width;
        let hi = self.speed_center + self.speed_half_width;
        if !(self.speed_half_width > 0.0 && lo >= scene.alpha0 - 1e-12 && hi <= scene.beta0 + 1e-12) {
            return Err(Error::InvalidInput("speed support must lie in [α0, β0]".into()));
        }
        if self.order < 2 {
            return Err(Error::InvalidInput("bump order must be at least 2".into()));
        }
        if !(self.transverse_radius > 0.0 && self.axial_radius > 0.0) {
            return Err(Error::InvalidInput("support radii must be positive".into()));
        }
        if self.transverse_radius > scene.u_radius {
            return Err(Error::InvalidInput("spatial support must lie inside 𝓤∞".into()));
        }
        let margin = self.boundary_distance(scene, 2000);
        if margin < scene.delta0 {
            return Err(Error::InvalidInput(format!(
                "spatial support is {margin} from the boundary, below δ0 = {}",
                scene.delta0
            )));
        }
        Ok(())
    }

    /// Sampled distance from the spatial support to `∂(Θ1 ∪ Θ2)`.
    pub fn boundary_distance(&self, scene: &Scene, n: usize) -> f64 {
        let [f1, f2] = tangent_frame(&self.axis);
        let mut best = f64::INFINITY;
        for u in fibonacci_sphere(n) {
            let p = self.center + self.axis * (u.z * self.axial_radius)
                + (f1 * u.x + f2 * u.y) * self.transverse_radius;
            for o in &scene.obstacles {
                let dist = if o.contains(&p) { -(o.project(&p) - p).norm() } else { (o.project(&p) - p).norm() };
                best = best.min(dist);
            }
        }
        best
    }

    /// Smallest unit-speed first-exit time from 𝓤∞ over sampled support points.
    pub fn trapped_horizon(&self, scene: &Scene, n: usize) -> f64 {
        let region = TrappedRegion::u_infinity(scene);
        let t_max = default_t_max(scene);
        let [f1, f2] = tangent_frame(&self.axis);
        let [g1, g2] = tangent_frame(&self.cone_axis);
        (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let u = halton(i, 5);
                let r = u[0].cbrt();
                let ct = 2.0 * u[1] - 1.0;
                let st = (1.0 - ct * ct).sqrt();
                let ph = std::f64::consts::TAU * u[2];
                let x = self.center
                    + self.axis * (r * ct * self.axial_radius)
                    + (f1 * ph.cos() + f2 * ph.sin()) * (r * st * self.transverse_radius);
                let th = self.cone_half_angle * u[3].sqrt();
                let ps = std::f64::consts::TAU * u[4];
                let dir = self.cone_axis * th.cos() + (g1 * ps.cos() + g2 * ps.sin()) * th.sin();
                first_exit_time(&PhasePoint::new(x, dir), &region, t_max, scene).unwrap_or(0.0)
            })
            .reduce(|| f64::INFINITY, f64::min)
    }
}

impl Symbol for SymbolSurrogate {
    fn eval(&self, x: &Vec3, xi: &Vec3) -> f64 {
        let speed = xi.norm();
        let sp = bump((speed - self.speed_center).abs() / self.speed_half_width, self.order);
        if sp == 0.0 {
            return 0.0;
        }
        let cos = (xi.dot(&self.cone_axis) / speed).clamp(-1.0, 1.0);
        let dir = bump(cos.acos() / self.cone_half_angle, self.order);
        if dir == 0.0 {
            return 0.0;
        }
        sp * dir * self.spatial(x)
    }

    fn xi_support(&self) -> Cone {
        Cone {
            axis: self.cone_axis,
            half_angle: self.cone_half_angle,
            speed_lo: self.speed_center - self.speed_half_width,
            speed_hi: self.speed_center + self.speed_half_width,
        }
    }

    fn fd_step(&self) -> f64 {
        0.02 * self.transverse_radius.min(self.axial_radius)
    }

    fn spatial_support(&self) -> (Vec3, f64) {
        (self.center, self.transverse_radius.max(self.axial_radius))
    }
}

/// `factor · q`.
#[derive(Clone, Debug, PartialEq)]
pub struct Scaled<S> {
    pub factor: f64,
    pub inner: S,
}

impl<S: Symbol> Symbol for Scaled<S> {
    fn eval(&self, x: &Vec3, xi: &Vec3) -> f64 {
        self.factor * self.inner.eval(x, xi)
    }
    fn xi_support(&self) -> Cone {
        self.inner.xi_support()
    }
    fn fd_step(&self) -> f64 {
        self.inner.fd_step()
    }
    fn spatial_support(&self) -> (Vec3, f64) {
        self.inner.spatial_support()
    }
}

/// Spatial cutoff χ₊: indicator of the convex hull of the obstacles minus the obstacles.
pub fn chi_plus(x: &Vec3, scene: &Scene) -> f64 {
    if !scene.is_exterior(x) {
        return 0.0;
    }
    let inside = fibonacci_sphere(400).iter().all(|u| {
        let h = scene.obstacles.iter().map(|o| o.support_point(u).dot(u)).fold(f64::NEG_INFINITY, f64::max);
        u.dot(x) <= h + 1e-12
    });
    if inside {
        1.0
    } else {
        0.0
    }
}

/// Index of the first reflection that survives pruning for momenta `ξ`.
pub fn first_obstacle(xi: &Vec3, scene: &Scene) -> u8 {
    if xi.dot(&scene.axis_dir()) > 0.0 {
        2
    } else {
        1
    }
}

/// Why an amplitude vanished, or that it was evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AmplitudeStatus {
    Evaluated,
    /// The story starts on the obstacle excluded by the sign of `ξ·e`.
    Pruned,
    /// No ray of the story reaches `x`, or `x` is not exterior.
    OutsideDomain,
    /// The backward modified flow has not used the whole story.
    StoryIncomplete,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Amplitude {
    pub value: f64,
    pub status: AmplitudeStatus,
    pub lambda: f64,
    /// `X̂_{−2t}(x, |ξ|∇φ_J)` when the story is complete.
    pub endpoint: Option<Vec3>,
    /// Path length from the first reflection to `x`.
    pub length: f64,
    pub path: Option<RayPath>,
}

impl Amplitude {
    fn zero(status: AmplitudeStatus) -> Self {
        Self { value: 0.0, status, lambda: 0.0, endpoint: None, length: 0.0, path: None }
    }
}

/// `w_0^J(x, t) = Λφ_J(x, ξ) q(X̂_{−2t}(x, |ξ|∇φ_J), ξ)` with diagnostics.
pub fn amplitude_w0_detail<S: Symbol + ?Sized>(
    story: &Story,
    x: &Vec3,
    t: f64,
    xi: &Vec3,
    q: &S,
    scene: &Scene,
) -> Result<Amplitude> {
    w0_guided(story, x, t, xi, q, scene, None, true)
}

#[allow(clippy::too_many_arguments)]
fn w0_guided<S: Symbol + ?Sized>(
    story: &Story,
    x: &Vec3,
    t: f64,
    xi: &Vec3,
    q: &S,
    scene: &Scene,
    guess: Option<&[Vec3]>,
    require_exterior: bool,
) -> Result<Amplitude> {
    if !(t >= 0.0) {
        return Err(Error::InvalidInput("time must be nonnegative".into()));
    }
    let speed = xi.norm();
    if !(speed > 0.0) {
        return Err(Error::InvalidInput("momentum must be nonzero".into()));
    }
    if require_exterior && !scene.is_exterior(x) {
        return Ok(Amplitude::zero(AmplitudeStatus::OutsideDomain));
    }
    if story.is_empty() {
        let end = x - xi * (2.0 * t);
        return Ok(Amplitude {
            value: q.eval(&end, xi),
            status: AmplitudeStatus::Evaluated,
            lambda: 1.0,
            endpoint: Some(end),
            length: 0.0,
            path: None,
        });
    }
    if story.first() != Some(first_obstacle(xi, scene)) {
        return Ok(Amplitude::zero(AmplitudeStatus::Pruned));
    }
    let field = PhaseField::new(Vec3::zeros(), *xi, story.clone());
    let sample = match field.sample(scene, x, guess) {
        Ok(s) => s,
        Err(Error::Domain(_)) | Err(Error::TangencyAmbiguity { .. }) => {
            return Ok(Amplitude::zero(AmplitudeStatus::OutsideDomain))
        }
        Err(e) => return Err(e),
    };
    let length = sample.path.length_after_first();
    let sigma = 2.0 * t * speed;
    if sigma < length {
        return Ok(Amplitude { length, path: Some(sample.path), ..Amplitude::zero(AmplitudeStatus::StoryIncomplete) });
    }
    let end = sample.path.points[0] - sample.path.dirs[0] * (sigma - length);
    Ok(Amplitude {
        value: sample.lambda * q.eval(&end, xi),
        status: AmplitudeStatus::Evaluated,
        lambda: sample.lambda,
        endpoint: Some(end),
        length,
        path: Some(sample.path),
    })
}

/// `w_0^J(x, t)` for momenta `ξ`; zero outside the story's support.
pub fn amplitude_w0<S: Symbol + ?Sized>(story: &Story, x: &Vec3, t: f64, xi: &Vec3, q: &S, scene: &Scene) -> Result<f64> {
    Ok(amplitude_w0_detail(story, x, t, xi, q, scene)?.value)
}

fn laplacian<F: Fn(&Vec3) -> Result<f64>>(f: F, x: &Vec3, h: f64) -> Result<f64> {
    let c = f(x)?;
    let mut sum = 0.0;
    for k in 0..3 {
        let mut e = Vec3::zeros();
        e[k] = h;
        let (p1, m1) = (f(&(x + e))?, f(&(x - e))?);
        let (p2, m2) = (f(&(x + 2.0 * e))?, f(&(x - 2.0 * e))?);
        sum += (-p2 + 16.0 * p1 - 30.0 * c + 16.0 * m1 - m2) / (12.0 * h * h);
    }
    Ok(sum)
}

/// [`laplacian`] that falls back per axis to a one-sided stencil when the
/// central one leaves the domain of `f`, as happens on the obstacle boundary.
fn laplacian_one_sided<F: Fn(&Vec3) -> Result<f64>>(f: F, x: &Vec3, h: f64) -> Result<f64> {
    const ONE_SIDED: [f64; 6] = [45.0, -154.0, 214.0, -156.0, 61.0, -10.0];
    let c = f(x)?;
    let mut sum = 0.0;
    for k in 0..3 {
        let mut e = Vec3::zeros();
        e[k] = h;
        let central = (|| {
            let (p1, m1) = (f(&(x + e))?, f(&(x - e))?);
            let (p2, m2) = (f(&(x + 2.0 * e))?, f(&(x - 2.0 * e))?);
            Ok::<f64, Error>((-p2 + 16.0 * p1 - 30.0 * c + 16.0 * m1 - m2) / (12.0 * h * h))
        })();
        let value = match central {
            Ok(v) => v,
            Err(first) => [1.0, -1.0]
                .iter()
                .find_map(|sign| {
                    let mut acc = ONE_SIDED[0] * c;
                    for (i, w) in ONE_SIDED.iter().enumerate().skip(1) {
                        acc += w * f(&(x + e * (sign * i as f64))).ok()?;
                    }
                    Some(acc / (12.0 * h * h))
                })
                .ok_or(first)?,
        };
        sum += value;
    }
    Ok(sum)
}

/// `w_1^∅(x, t) = −i t (Δq)(x − 2tξ, ξ)`, exact for the free story.
pub fn amplitude_w1_free<S: Symbol + ?Sized>(x: &Vec3, t: f64, xi: &Vec3, q: &S) -> Complex64 {
    let end = x - xi * (2.0 * t);
    let lap = laplacian(|z| Ok(q.eval(z, xi)), &end, q.fd_step()).expect("symbol evaluation is infallible");
    Complex64::new(0.0, -t * lap)
}

/// Options for [`amplitude_w1`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct W1Options {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_depth: u32,
}

impl Default for W1Options {
    fn default() -> Self {
        Self { rel_tol: 1e-8, abs_tol: 1e-14, max_depth: 24 }
    }
}

/// `w_1^J(x, t) = −i ∫_0^t g_{φ_J}(x, t−s, ξ) Δw_0^{J(x,ξ,t−s)}(X̂_{−2(t−s)}, s) ds`.
///
/// The Laplacian is a five-point stencil per axis at the symbol's step. The
/// integral is split at the reflection times of the backward ray.
pub fn amplitude_w1<S: Symbol + ?Sized>(
    story: &Story,
    x: &Vec3,
    t: f64,
    xi: &Vec3,
    q: &S,
    scene: &Scene,
    opts: &W1Options,
) -> Result<Complex64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidInput("time must be nonnegative".into()));
    }
    let speed = xi.norm();
    let h = q.fd_step();
    if story.is_empty() {
        let f = |s: f64| laplacian(|z| Ok(q.eval(&(z - xi * (2.0 * s)), xi)), &(x - xi * (2.0 * (t - s))), h);
        let v = adaptive_simpson(f, 0.0, t, opts.rel_tol, opts.abs_tol, opts.max_depth)?;
        return Ok(Complex64::new(0.0, -v));
    }
    if story.first() != Some(first_obstacle(xi, scene)) || !scene.is_exterior(x) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let field = PhaseField::new(Vec3::zeros(), *xi, story.clone());
    let sample = match field.sample(scene, x, None) {
        Ok(s) => s,
        Err(Error::Domain(_)) => return Ok(Complex64::new(0.0, 0.0)),
        Err(e) => return Err(e),
    };
    let path = &sample.path;
    let n = path.points.len();
    // Backward arclength at which each reflection point is reached.
    let mut marks = Vec::with_capacity(n);
    let mut acc = 0.0;
    for k in (0..n).rev() {
        acc += path.lengths[k];
        marks.push(acc);
    }
    let locate = |sigma: f64| -> (Vec3, f64, usize) {
        let mut g = 1.0;
        let mut rest = sigma;
        for k in (0..n).rev() {
            let l = path.lengths[k];
            let qk = &sample.reflected_q[k];
            if rest <= l {
                let a = l - rest;
                let ratio = spreading_factor(qk, a) / spreading_factor(qk, l);
                return (path.points[k] + path.dirs[k + 1] * a, g * ratio.sqrt(), k + 1);
            }
            g /= spreading_factor(qk, l).sqrt();
            rest -= l;
        }
        (path.points[0] - path.dirs[0] * rest, g, 0)
    };
    let integrand = |s: f64| -> Result<f64> {
        let (point, g, keep) = locate(2.0 * (t - s) * speed);
        if g == 0.0 {
            return Ok(0.0);
        }
        let sub = story.prefix(keep);
        let guess = &path.points[..keep];
        let lap = if keep == 0 {
            laplacian(|z| Ok(q.eval(&(z - xi * (2.0 * s)), xi)), &point, h)?
        } else {
            laplacian_one_sided(
                |z| {
                    let a = w0_guided(&sub, z, s, xi, q, scene, Some(guess), false)?;
                    if a.status == AmplitudeStatus::OutsideDomain {
                        return Err(Error::Numeric("Laplacian stencil leaves the phase domain".into()));
                    }
                    Ok(a.value)
                },
                &point,
                h,
            )?
        };
        Ok(g * lap)
    };
    let mut cuts = vec![0.0];
    for m in marks {
        let s = t - m / (2.0 * speed);
        if s > 0.0 && s < t {
            cuts.push(s);
        }
    }
    cuts.push(t);
    cuts.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += adaptive_simpson(integrand, w[0], w[1], opts.rel_tol, opts.abs_tol, opts.max_depth)?;
    }
    Ok(Complex64::new(0.0, -total))
}

/// `𝓢_J(x, t, ξ) = φ_J(x, ξ)|ξ| − t|ξ|²` and `D_ξ𝓢_J`.
///
/// The gradient is `X^{−|J|} − (2t − l/|ξ|)ξ − y`, which equals
/// `X̂_{−2t}(x, |ξ|∇φ_J) − y` whenever the modified flow uses the whole story.
pub fn phase_s_and_grad(story: &Story, x: &Vec3, t: f64, xi: &Vec3, y: &Vec3, scene: &Scene) -> Result<(f64, Vec3)> {
    phase_guided(story, x, t, xi, y, scene, None).map(|(v, g, _)| (v, g))
}

fn phase_guided(
    story: &Story,
    x: &Vec3,
    t: f64,
    xi: &Vec3,
    y: &Vec3,
    scene: &Scene,
    guess: Option<&[Vec3]>,
) -> Result<(f64, Vec3, Option<RayPath>)> {
    let speed = xi.norm();
    if story.is_empty() {
        return Ok(((x - y).dot(xi) - t * speed * speed, x - y - xi * (2.0 * t), None));
    }
    let field = PhaseField::new(*y, *xi, story.clone());
    let s = field.sample(scene, x, guess)?;
    let dir = xi / speed;
    let l = s.path.length_after_first();
    let grad = s.path.points[0] + dir * (l - 2.0 * t * speed) - y;
    Ok((s.value * speed - t * speed * speed, grad, Some(s.path)))
}

/// `D_ξ²𝓢_J` by central differences of the gradient (exact for the free story).
pub fn hessian_s(story: &Story, x: &Vec3, t: f64, xi: &Vec3, y: &Vec3, scene: &Scene) -> Result<(Matrix3<f64>, f64)> {
    if story.is_empty() {
        let m = Matrix3::identity() * (-2.0 * t);
        return Ok((m, -8.0 * t * t * t));
    }
    let (_, _, path) = phase_guided(story, x, t, xi, y, scene, None)?;
    let guess = path.map(|p| p.points);
    let step = 1e-5 * xi.norm();
    let mut m = Matrix3::zeros();
    for k in 0..3 {
        let mut d = Vec3::zeros();
        d[k] = step;
        let gp = phase_guided(story, x, t, &(xi + d), y, scene, guess.as_deref())?.1;
        let gm = phase_guided(story, x, t, &(xi - d), y, scene, guess.as_deref())?.1;
        m.set_column(k, &((gp - gm) / (2.0 * step)));
    }
    Ok((m, m.determinant()))
}

/// Momentum `s_J(x, t)` with `X̂_{2t}(y, s_J) = x` along story `J`.
///
/// The point-source ray through the story seeds a damped Newton iteration on
/// `D_ξ𝓢_J`. Returns `None` when no such ray exists.
pub fn critical_point(story: &Story, x: &Vec3, t: f64, y: &Vec3, scene: &Scene) -> Result<Option<Vec3>> {
    if !(t > 0.0) {
        return Err(Error::InvalidInput("time must be positive".into()));
    }
    if story.is_empty() {
        return Ok(Some((x - y) / (2.0 * t)));
    }
    let path = match connect(&Source::Point { y: *y }, x, story, scene, None) {
        Ok(p) => p,
        Err(Error::Domain(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let total = path.lead + path.length_after_first();
    let mut s = path.dirs[0] * (total / (2.0 * t));
    for _ in 0..30 {
        let grad = match phase_s_and_grad(story, x, t, &s, y, scene) {
            Ok(g) => g.1,
            Err(Error::Domain(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        if grad.norm() <= 1e-10 {
            return Ok(Some(s));
        }
        let (hess, _) = hessian_s(story, x, t, &s, y, scene)?;
        let step = hess
            .lu()
            .solve(&(-grad))
            .ok_or_else(|| Error::Numeric("singular Hessian while locating the critical point".into()))?;
        let mut alpha = 1.0;
        loop {
            let trial = s + step * alpha;
            if let Ok((_, g)) = phase_s_and_grad(story, x, t, &trial, y, scene) {
                if g.norm() < grad.norm() {
                    s = trial;
                    break;
                }
            }
            alpha *= 0.5;
            if alpha < 1e-6 {
                return Ok(None);
            }
        }
    }
    Ok(None)
}

/// `[∅, (i1), (i1, i2), …]` up to length `⌊t/c1⌋`.
///
/// With `orientation = None` both starting obstacles are listed.
pub fn story_enumeration(t: f64, scene: &Scene, orientation: Option<f64>) -> Vec<Story> {
    let n_max = if t >= 0.0 { (t / scene.c1() * (1.0 + 1e-12)).floor() as usize } else { 0 };
    let mut out = vec![Story::empty()];
    for k in 1..=n_max {
        match orientation {
            Some(sign) => out.push(Story::alternating(if sign > 0.0 { 2 } else { 1 }, k)),
            None => {
                out.push(Story::alternating(1, k));
                out.push(Story::alternating(2, k));
            }
        }
    }
    out
}

/// A point `(x, t, ξ)` reached from the support of `q` along story `J`.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportSample {
    pub start: Vec3,
    pub story: Story,
    pub x: Vec3,
    pub t: f64,
    pub xi: Vec3,
}

/// Flows `n` seeded points of `supp q` forward for `2t`, `t` uniform in `t_range`.
///
/// Every sample carries a ray of its story from the support to `x`, so
/// `w_0^J(x, t)` is generically nonzero there. Tangential runs are skipped.
pub fn support_samples(q: &SymbolSurrogate, scene: &Scene, n: usize, seed: u64, t_range: (f64, f64)) -> Vec<SupportSample> {
    use rand::Rng;
    let [f1, f2] = tangent_frame(&q.axis);
    let [g1, g2] = tangent_frame(&q.cone_axis);
    (0..n as u64)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = crate::sampling::sample_rng(seed, i);
            let mut u = [0.0; 7];
            for v in u.iter_mut() {
                *v = rng.random::<f64>();
            }
            // Interior fractions keep the sample off the edges of the bumps.
            let r = 0.9 * u[0].cbrt();
            let ct = 2.0 * u[1] - 1.0;
            let st = (1.0 - ct * ct).sqrt();
            let ph = std::f64::consts::TAU * u[2];
            let start = q.center
                + q.axis * (r * ct * q.axial_radius)
                + (f1 * ph.cos() + f2 * ph.sin()) * (r * st * q.transverse_radius);
            let th = 0.9 * q.cone_half_angle * u[3].sqrt();
            let ps = std::f64::consts::TAU * u[4];
            let dir = q.cone_axis * th.cos() + (g1 * ps.cos() + g2 * ps.sin()) * th.sin();
            let speed = q.speed_center + 0.9 * q.speed_half_width * (2.0 * u[5] - 1.0);
            let t = t_range.0 + (t_range.1 - t_range.0) * u[6];
            let xi = dir * speed;
            let tr = crate::billiard::flow(&PhasePoint::new(start, xi), 2.0 * t, scene).ok()?;
            Some(SupportSample { start, story: tr.story.clone(), x: tr.end.x, t, xi })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Direct,
    Stationary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkOptions {
    pub method: Method,
    /// Highest amplitude order, 0 or 1.
    pub k: u8,
    /// Stories to sum; enumerated from `t` when `None`.
    pub stories: Option<Vec<Story>>,
    pub direct_rel_tol: f64,
    pub direct_max_nodes: usize,
    pub w1: W1Options,
}

impl Default for SkOptions {
    fn default() -> Self {
        Self {
            method: Method::Stationary,
            k: 1,
            stories: None,
            direct_rel_tol: 1e-7,
            direct_max_nodes: 256,
            w1: W1Options::default(),
        }
    }
}

/// Contribution of one story.
#[derive(Clone, Debug, PartialEq)]
pub struct StoryTerm {
    pub story: Story,
    pub value: Complex64,
    pub critical_point: Option<Vec3>,
    pub phase: f64,
    pub hessian_det: f64,
    pub signature: i32,
    pub w0: f64,
    pub w1_tilde: Complex64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkResult {
    pub value: Complex64,
    pub terms: Vec<StoryTerm>,
    /// Stories dropped after a caustic, domain or numeric failure.
    pub excluded: usize,
    /// Nodes per axis of the accepted direct rule.
    pub nodes: Option<usize>,
}

fn signature(m: &Matrix3<f64>) -> i32 {
    let sym = 0.5 * (m + m.transpose());
    sym.symmetric_eigenvalues().iter().map(|v| if *v > 0.0 { 1 } else { -1 }).sum()
}

/// The parametrix `S_K(x, t)` for source `y` at semiclassical parameter `h`.
pub fn evaluate_sk(
    x: &Vec3,
    t: f64,
    y: &Vec3,
    h: f64,
    q: &SymbolSurrogate,
    scene: &Scene,
    opts: &SkOptions,
) -> Result<SkResult> {
    evaluate_sk_with(x, t, y, h, q, scene, opts)
}

/// [`evaluate_sk`] for any symbol.
pub fn evaluate_sk_with<S: Symbol>(
    x: &Vec3,
    t: f64,
    y: &Vec3,
    h: f64,
    q: &S,
    scene: &Scene,
    opts: &SkOptions,
) -> Result<SkResult> {
    if !(h > 0.0 && h <= 0.1) {
        return Err(Error::InvalidInput("h must lie in (0, 0.1]".into()));
    }
    if opts.k > 1 {
        return Err(Error::InvalidInput("amplitude order is capped at 1".into()));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidInput("time must be nonnegative".into()));
    }
    let cone = q.xi_support();
    let orientation = cone.axis.dot(&scene.axis_dir()).signum();
    let stories = opts.stories.clone().unwrap_or_else(|| story_enumeration(t, scene, Some(orientation)));
    match opts.method {
        Method::Stationary => {
            let terms: Vec<StoryTerm> =
                stories.par_iter().map(|j| stationary_term(j, x, t, y, h, q, scene, opts)).collect();
            let excluded = terms.iter().filter(|t| t.error.is_some()).count();
            let re: Vec<f64> = terms.iter().map(|t| t.value.re).collect();
            let im: Vec<f64> = terms.iter().map(|t| t.value.im).collect();
            Ok(SkResult {
                value: Complex64::new(pairwise_sum(&re), pairwise_sum(&im)),
                terms,
                excluded,
                nodes: None,
            })
        }
        Method::Direct => direct_sk(&stories, x, t, y, h, q, scene, opts, &cone),
    }
}

#[allow(clippy::too_many_arguments)]
fn stationary_term<S: Symbol>(
    story: &Story,
    x: &Vec3,
    t: f64,
    y: &Vec3,
    h: f64,
    q: &S,
    scene: &Scene,
    opts: &SkOptions,
) -> StoryTerm {
    let mut term = StoryTerm {
        story: story.clone(),
        value: Complex64::new(0.0, 0.0),
        critical_point: None,
        phase: 0.0,
        hessian_det: 0.0,
        signature: 0,
        w0: 0.0,
        w1_tilde: Complex64::new(0.0, 0.0),
        error: None,
    };
    if t <= 0.0 {
        return term;
    }
    let mut run = || -> Result<()> {
        let Some(s) = critical_point(story, x, t, y, scene)? else { return Ok(()) };
        term.critical_point = Some(s);
        let w0 = amplitude_w0(story, x, t, &s, q, scene)?;
        let (phase, _) = phase_s_and_grad(story, x, t, &s, y, scene)?;
        let (hess, det) = hessian_s(story, x, t, &s, y, scene)?;
        term.phase = phase;
        term.hessian_det = det;
        term.signature = signature(&(-hess));
        term.w0 = w0;
        let mut amp = Complex64::new(w0, 0.0);
        if opts.k == 1 {
            let w1 = if story.is_empty() {
                amplitude_w1_free(x, t, &s, q)
            } else {
                amplitude_w1(story, x, t, &s, q, scene, &opts.w1)?
            };
            let hinv = hess
                .try_inverse()
                .ok_or_else(|| Error::Numeric("singular Hessian at the critical point".into()))?;
            let d2 = xi_hessian(|xi| amplitude_w0(story, x, t, xi, q, scene), &s, 1e-3 * s.norm())?;
            let tr = (hinv * d2).trace();
            let tilde = w1 - Complex64::new(0.0, 0.5 * tr);
            term.w1_tilde = tilde;
            amp += tilde * h;
        }
        let pref = (2.0 * std::f64::consts::PI * h).powf(-1.5) / det.abs().sqrt();
        let rot = Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4 * term.signature as f64);
        term.value = amp * rot * Complex64::from_polar(pref, -phase / h);
        Ok(())
    };
    if let Err(e) = run() {
        term.error = Some(e.to_string());
        term.value = Complex64::new(0.0, 0.0);
    }
    term
}

fn xi_hessian<F: Fn(&Vec3) -> Result<f64>>(f: F, xi: &Vec3, step: f64) -> Result<Matrix3<f64>> {
    let c = f(xi)?;
    let mut m = Matrix3::zeros();
    for i in 0..3 {
        let mut di = Vec3::zeros();
        di[i] = step;
        m[(i, i)] = (f(&(xi + di))? - 2.0 * c + f(&(xi - di))?) / (step * step);
        for j in (i + 1)..3 {
            let mut dj = Vec3::zeros();
            dj[j] = step;
            let v = (f(&(xi + di + dj))? - f(&(xi + di - dj))? - f(&(xi - di + dj))? + f(&(xi - di - dj))?)
                / (4.0 * step * step);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

#[allow(clippy::too_many_arguments)]
fn direct_sk<S: Symbol>(
    stories: &[Story],
    x: &Vec3,
    t: f64,
    y: &Vec3,
    h: f64,
    q: &S,
    scene: &Scene,
    opts: &SkOptions,
    cone: &Cone,
) -> Result<SkResult> {
    let [g1, g2] = tangent_frame(&cone.axis);
    let integrand = |speed: f64, theta: f64, psi: f64| -> Complex64 {
        let dir = cone.axis * theta.cos() + (g1 * psi.cos() + g2 * psi.sin()) * theta.sin();
        let xi = dir * speed;
        let jac = speed * speed * theta.sin();
        let mut acc = Complex64::new(0.0, 0.0);
        for j in stories {
            let Ok(w0) = amplitude_w0(j, x, t, &xi, q, scene) else { continue };
            let mut amp = Complex64::new(w0, 0.0);
            if opts.k == 1 {
                let w1 = if j.is_empty() {
                    Ok(amplitude_w1_free(x, t, &xi, q))
                } else if w0 == 0.0 && amplitude_w0_detail(j, x, t, &xi, q, scene)
                    .map(|a| a.status != AmplitudeStatus::Evaluated)
                    .unwrap_or(true)
                {
                    Ok(Complex64::new(0.0, 0.0))
                } else {
                    amplitude_w1(j, x, t, &xi, q, scene, &opts.w1)
                };
                if let Ok(w1) = w1 {
                    amp += w1 * h;
                }
            }
            if amp.norm() == 0.0 {
                continue;
            }
            let Ok((phase, _)) = phase_s_and_grad(j, x, t, &xi, y, scene) else { continue };
            acc += amp * Complex64::from_polar(1.0, -phase / h);
        }
        acc * jac
    };
    let rule = |n: usize| -> (Complex64, f64) {
        let rules = [
            gauss_legendre_on(n, cone.speed_lo, cone.speed_hi),
            gauss_legendre_on(n, 0.0, cone.half_angle),
            gauss_legendre_on(n, 0.0, std::f64::consts::TAU),
        ];
        tensor_sum(&rules, |a, b, c| integrand(a, b, c))
    };
    // The preimage box only pays off once it is tighter than the cone.
    let free_only = stories.iter().all(|j| j.is_empty()) && {
        let (lo, hi) = free_box(x, t, q, cone);
        let r = cone.speed_hi * cone.half_angle.sin().max(0.5 * (1.0 - cone.speed_lo / cone.speed_hi));
        (0..3).all(|k| hi[k] - lo[k] < 2.0 * r) || (0..3).any(|k| lo[k] >= hi[k])
    };
    let boxed = |n: usize| -> (Complex64, f64) {
        let (lo, hi) = free_box(x, t, q, cone);
        if (0..3).any(|k| lo[k] >= hi[k]) {
            return (Complex64::new(0.0, 0.0), 0.0);
        }
        let rules = [0, 1, 2].map(|k| gauss_legendre_on(n, lo[k], hi[k]));
        tensor_sum(&rules, |a, b, c| free_integrand(x, t, y, h, q, &Vec3::new(a, b, c), opts.k))
    };
    let eval = |n: usize| if free_only { boxed(n) } else { rule(n) };
    let norm = (2.0 * std::f64::consts::PI * h).powi(-3);
    let mut n = 16;
    let (mut prev, _) = eval(n);
    loop {
        let next_n = 2 * n;
        if next_n > opts.direct_max_nodes {
            return Err(Error::Numeric(format!(
                "direct quadrature unresolved at {n} nodes per axis (h = {h})"
            )));
        }
        let (next, mass) = eval(next_n);
        let diff = (next - prev).norm();
        n = next_n;
        prev = next;
        // Cancellation can leave a value far below the integrand's mass.
        if diff <= opts.direct_rel_tol * next.norm().max(1e-3 * mass).max(1e-300) {
            break;
        }
    }
    Ok(SkResult { value: prev * norm, terms: vec![], excluded: 0, nodes: Some(n) })
}

/// Tensor Gauss–Legendre sum of `f` and of `|f|` with pairwise accumulation.
fn tensor_sum<F>(rules: &[(Vec<f64>, Vec<f64>); 3], f: F) -> (Complex64, f64)
where
    F: Fn(f64, f64, f64) -> Complex64 + Sync,
{
    let [(av, aw), (bv, bw), (cv, cw)] = rules;
    let parts: Vec<[f64; 3]> = (0..av.len())
        .into_par_iter()
        .map(|i| {
            let m = bv.len() * cv.len();
            let (mut re, mut im, mut ab) = (Vec::with_capacity(m), Vec::with_capacity(m), Vec::with_capacity(m));
            for j in 0..bv.len() {
                for k in 0..cv.len() {
                    let v = f(av[i], bv[j], cv[k]) * (aw[i] * bw[j] * cw[k]);
                    re.push(v.re);
                    im.push(v.im);
                    ab.push(v.norm());
                }
            }
            [pairwise_sum(&re), pairwise_sum(&im), pairwise_sum(&ab)]
        })
        .collect();
    let col = |c: usize| pairwise_sum(&parts.iter().map(|p| p[c]).collect::<Vec<_>>());
    (Complex64::new(col(0), col(1)), col(2))
}

/// Box of momenta where the free amplitude can be nonzero: the cone's
/// bounding ball intersected with the preimage of the spatial support.
fn free_box<S: Symbol>(x: &Vec3, t: f64, q: &S, cone: &Cone) -> (Vec3, Vec3) {
    let mid = 0.5 * (cone.speed_lo * cone.half_angle.cos() + cone.speed_hi);
    let c = cone.axis * mid;
    let [g1, _] = tangent_frame(&cone.axis);
    let r = [cone.speed_lo, cone.speed_hi]
        .iter()
        .flat_map(|s| {
            [0.0, cone.half_angle].map(|th| (cone.axis * (s * th.cos()) + g1 * (s * th.sin()) - c).norm())
        })
        .fold(0.0, f64::max);
    let mut lo = c - Vec3::repeat(r);
    let mut hi = c + Vec3::repeat(r);
    if t > 0.0 {
        let (center, radius) = q.spatial_support();
        let pc = (x - center) / (2.0 * t);
        let pr = radius / (2.0 * t);
        lo = lo.sup(&(pc - Vec3::repeat(pr)));
        hi = hi.inf(&(pc + Vec3::repeat(pr)));
    }
    (lo, hi)
}

fn free_integrand<S: Symbol>(x: &Vec3, t: f64, y: &Vec3, h: f64, q: &S, xi: &Vec3, k: u8) -> Complex64 {
    let w0 = q.eval(&(x - xi * (2.0 * t)), xi);
    let mut amp = Complex64::new(w0, 0.0);
    if k == 1 {
        amp += amplitude_w1_free(x, t, xi, q) * h;
    }
    if amp.norm() == 0.0 {
        return amp;
    }
    let phase = (x - y).dot(xi) - t * xi.norm_squared();
    amp * Complex64::from_polar(1.0, -phase / h)
}

/// `Σ_J |w_0^J(x, t)|` over the stories that can reach the symbol's support.
///
/// Only stories whose shortest connecting path fits in `2t|ξ|` can be nonzero;
/// lengths are visited from the longest admissible one downwards until the
/// leftover free flight exceeds `reach`.
pub fn amplitude_sum<S: Symbol + ?Sized>(x: &Vec3, t: f64, xi: &Vec3, q: &S, scene: &Scene, reach: f64) -> Result<(f64, usize)> {
    let speed = xi.norm();
    let sigma = 2.0 * t * speed;
    let i1 = first_obstacle(xi, scene);
    let n_support = (t / scene.c1() * (1.0 + 1e-12)).floor() as usize;
    let n_geom = (sigma / scene.d).floor() as usize + 1;
    let mut values = vec![amplitude_w0(&Story::empty(), x, t, xi, q, scene)?.abs()];
    let mut visited = 1;
    for n in (1..=n_support.min(n_geom)).rev() {
        let a = amplitude_w0_detail(&Story::alternating(i1, n), x, t, xi, q, scene)?;
        visited += 1;
        values.push(a.value.abs());
        if a.status == AmplitudeStatus::Evaluated && sigma - a.length > reach {
            break;
        }
    }
    Ok((pairwise_sum(&values), visited))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayReport {
    /// `(x index, t, Σ_J |w_0^J|)`.
    pub samples: Vec<(usize, f64, f64)>,
    /// `(t, max over the slice and the period bin)`.
    pub envelope: Vec<(f64, f64)>,
    pub fit: LinearFit,
    pub rate: f64,
    /// `2|ξ| log(1/λ)/period`, the rate implied by `λ` per round trip.
    pub expected: f64,
    pub relative_error: f64,
}

/// Fits the exponential decay of `Σ_J |w_0^J|` on a slice over a time ladder.
pub fn decay_experiment<S: Symbol + ?Sized>(
    points: &[Vec3],
    times: &[f64],
    xi: &Vec3,
    q: &S,
    scene: &Scene,
    lambda: f64,
) -> Result<DecayReport> {
    let reach = scene.diameter + 2.0 * scene.d;
    let jobs: Vec<(usize, f64)> = points.iter().enumerate().flat_map(|(i, _)| times.iter().map(move |t| (i, *t))).collect();
    let samples: Vec<(usize, f64, f64)> = jobs
        .par_iter()
        .map(|&(i, t)| amplitude_sum(&points[i], t, xi, q, scene, reach).map(|(v, _)| (i, t, v)))
        .collect::<Result<_>>()?;
    let period_t = scene.period() / (2.0 * xi.norm());
    let mut bins: std::collections::BTreeMap<i64, (f64, f64)> = Default::default();
    for &(_, t, v) in &samples {
        let b = (t / period_t).floor() as i64;
        let e = bins.entry(b).or_insert((t, 0.0));
        if v > e.1 {
            *e = (t, v);
        }
    }
    let envelope: Vec<(f64, f64)> = bins.values().copied().filter(|(_, v)| *v > 0.0).collect();
    if envelope.len() < 2 {
        return Err(Error::ProbeFailure("amplitude sum vanishes on the whole ladder".into()));
    }
    let pts: Vec<(f64, f64)> = envelope.iter().map(|(t, v)| (*t, v.ln())).collect();
    let fit = linear_fit(&pts);
    let rate = -fit.slope;
    let expected = 2.0 * xi.norm() * (1.0 / lambda).ln() / scene.period();
    Ok(DecayReport { samples, envelope, fit, rate, expected, relative_error: (rate - expected).abs() / expected })
}

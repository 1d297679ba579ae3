//! Escape times, trapped sets and the quantitative dynamics probes.

use rand::Rng;
use rayon::prelude::*;

use crate::billiard::{flow, reflect, PhasePoint, Trajectory};
use crate::error::{Error, Result};
use crate::fit::{linear_fit, LinearFit};
use crate::geometry::{first_intersection_excluding, tangency_margin, tangent_frame, Scene, Vec3};
use crate::sampling::{halton, random_unit, sample_rng};

/// Open cylinder around the periodic ray, extended past both endpoints.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrappedRegion {
    pub axis: [Vec3; 2],
    pub radius: f64,
    pub extension: f64,
}

impl TrappedRegion {
    pub fn around_axis(scene: &Scene, radius: f64, extension: f64) -> Self {
        Self { axis: scene.axis, radius, extension }
    }

    /// The cylinder 𝓤∞ of the scene.
    pub fn u_infinity(scene: &Scene) -> Self {
        Self::around_axis(scene, scene.u_radius, scene.u_radius)
    }

    fn e(&self) -> Vec3 {
        (self.axis[1] - self.axis[0]).normalize()
    }

    fn length(&self) -> f64 {
        (self.axis[1] - self.axis[0]).norm()
    }

    /// Axial coordinate from the first endpoint and distance to the axis.
    pub fn coordinates(&self, x: &Vec3) -> (f64, f64) {
        let e = self.e();
        let s = (x - self.axis[0]).dot(&e);
        (s, (x - self.axis[0] - e * s).norm())
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        let (s, r) = self.coordinates(x);
        r < self.radius && s > -self.extension && s < self.length() + self.extension
    }

    /// Parameter interval of `x + τv`, `τ ∈ [0, end]`, lying in the cylinder.
    pub fn segment_interval(&self, x: &Vec3, v: &Vec3, end: f64) -> Option<(f64, f64)> {
        let e = self.e();
        let u = x - self.axis[0];
        let (s0, sv) = (u.dot(&e), v.dot(&e));
        let (mut lo, mut hi) = (0.0f64, end);
        let (a_min, a_max) = (-self.extension, self.length() + self.extension);
        if sv.abs() < 1e-300 {
            if s0 <= a_min || s0 >= a_max {
                return None;
            }
        } else {
            let (t1, t2) = ((a_min - s0) / sv, (a_max - s0) / sv);
            lo = lo.max(t1.min(t2));
            hi = hi.min(t1.max(t2));
        }
        let up = u - e * s0;
        let vp = v - e * sv;
        let a = vp.norm_squared();
        let b = up.dot(&vp);
        let c = up.norm_squared() - self.radius * self.radius;
        if a < 1e-300 {
            if c >= 0.0 {
                return None;
            }
        } else {
            let disc = b * b - a * c;
            if disc <= 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            lo = lo.max((-b - sq) / a);
            hi = hi.min((-b + sq) / a);
        }
        (lo < hi).then_some((lo, hi))
    }
}

fn tangency(hit: &crate::geometry::SurfaceHit, time: f64) -> Error {
    Error::TangencyAmbiguity {
        time,
        point: [hit.point.x, hit.point.y, hit.point.z],
        obstacle: hit.obstacle_id,
        margin: tangency_margin(hit),
    }
}

/// Walks the trajectory segment by segment up to `t_max`, calling `visit`
/// with `(start time, point, velocity, duration)`; stops early when it returns false.
fn walk<F>(pp: &PhasePoint, t_max: f64, scene: &Scene, mut visit: F) -> Result<()>
where
    F: FnMut(f64, &Vec3, &Vec3, f64) -> bool,
{
    let mut x = pp.x;
    let mut v = pp.xi;
    let mut now = 0.0;
    let mut last = None;
    let max_events = (2.0 * v.norm() * t_max / scene.d).ceil() as usize + 4;
    for _ in 0..=max_events {
        let hit = first_intersection_excluding(&x, &v, scene, last)?;
        let seg = hit.map_or(f64::INFINITY, |h| h.time);
        let dur = seg.min(t_max - now);
        if !visit(now, &x, &v, dur) {
            return Ok(());
        }
        match hit {
            Some(h) if now + h.time <= t_max => {
                if h.cos_incidence < scene.tol.tangency {
                    return Err(tangency(&h, now + h.time));
                }
                now += h.time;
                x = h.point;
                v = reflect(&v, &h.normal);
                last = Some(h.obstacle_id);
            }
            _ => return Ok(()),
        }
    }
    Err(Error::Numeric("reflection count exceeds geometric bound".into()))
}

/// Last exit time of the forward trajectory from `region`, capped at `t_max`.
///
/// Returns 0 for trajectories that never enter the region.
pub fn escape_time(pp: &PhasePoint, region: &TrappedRegion, t_max: f64, scene: &Scene) -> Result<f64> {
    let mut last_inside = 0.0f64;
    walk(pp, t_max, scene, |start, x, v, dur| {
        if let Some((_, b)) = region.segment_interval(x, v, dur) {
            last_inside = last_inside.max(start + b);
        }
        true
    })?;
    Ok(if last_inside >= t_max * (1.0 - 1e-15) { t_max } else { last_inside })
}

/// First time the trajectory leaves `region`, capped at `t_max`; 0 if it starts outside.
pub fn first_exit_time(pp: &PhasePoint, region: &TrappedRegion, t_max: f64, scene: &Scene) -> Result<f64> {
    if !region.contains(&pp.x) {
        return Ok(0.0);
    }
    let mut exit = t_max;
    walk(pp, t_max, scene, |start, x, v, dur| match region.segment_interval(x, v, dur) {
        Some((a, b)) if a <= 1e-12 && b >= dur * (1.0 - 1e-15) => true,
        Some((a, b)) if a <= 1e-12 => {
            exit = start + b;
            false
        }
        _ => {
            exit = start;
            false
        }
    })?;
    Ok(exit.min(t_max))
}

/// `pp ∈ 𝓣̂_T(D)` on the escape-time criterion.
pub fn in_trapped_set(pp: &PhasePoint, region: &TrappedRegion, horizon: f64, t_max: f64, scene: &Scene) -> Result<bool> {
    Ok(region.contains(&pp.x) && escape_time(pp, region, t_max, scene)? >= horizon)
}

/// Default escape-time cap: 50 periods.
pub fn default_t_max(scene: &Scene) -> f64 {
    50.0 * scene.period()
}

/// Layout of a trapped-set grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    /// Low-discrepancy points in the five position/direction dimensions.
    pub samples: usize,
    /// Speed levels in `[α0, β0]` replicated over every point.
    pub speed_levels: usize,
    /// Half-angle of the direction cones around `±e`.
    pub cone_half_angle: f64,
    pub t_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSample {
    pub point: PhasePoint,
    /// `None` when the trajectory hit a boundary tangentially.
    pub escape: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrappedGrid {
    pub region: TrappedRegion,
    pub horizon: f64,
    pub t_max: f64,
    pub samples: Vec<GridSample>,
}

impl TrappedGrid {
    pub fn is_trapped(&self, s: &GridSample) -> bool {
        s.escape.is_some_and(|t| t >= self.horizon)
    }

    pub fn trapped_fraction(&self) -> f64 {
        let determinate = self.samples.iter().filter(|s| s.escape.is_some()).count();
        let trapped = self.samples.iter().filter(|s| self.is_trapped(s)).count();
        if determinate == 0 {
            0.0
        } else {
            trapped as f64 / determinate as f64
        }
    }

    pub fn indeterminate(&self) -> usize {
        self.samples.iter().filter(|s| s.escape.is_none()).count()
    }

    /// Largest distance to the axis among trapped samples.
    pub fn max_trapped_radial(&self) -> f64 {
        self.samples
            .iter()
            .filter(|s| self.is_trapped(s))
            .map(|s| self.region.coordinates(&s.point.x).1)
            .fold(0.0, f64::max)
    }

    /// The same samples judged at another horizon.
    pub fn at_horizon(&self, horizon: f64) -> TrappedGrid {
        TrappedGrid { horizon, ..self.clone() }
    }
}

/// Phase-space points of a grid over `region`, excluding obstacle interiors.
pub fn grid_points(region: &TrappedRegion, spec: &GridSpec, scene: &Scene) -> Result<Vec<PhasePoint>> {
    if spec.samples < 2 || spec.speed_levels < 1 {
        return Err(Error::InvalidInput("grid needs at least two samples and one speed level".into()));
    }
    let e = (region.axis[1] - region.axis[0]).normalize();
    let [f1, f2] = tangent_frame(&e);
    let len = (region.axis[1] - region.axis[0]).norm();
    let speeds: Vec<f64> = if spec.speed_levels == 1 {
        vec![0.5 * (scene.alpha0 + scene.beta0)]
    } else {
        (0..spec.speed_levels)
            .map(|k| scene.alpha0 + (scene.beta0 - scene.alpha0) * k as f64 / (spec.speed_levels - 1) as f64)
            .collect()
    };
    let cos_min = spec.cone_half_angle.cos();
    let mut out = Vec::with_capacity(spec.samples * speeds.len());
    for i in 0..spec.samples as u64 {
        let u = halton(i, 5);
        let r = region.radius * u[0].sqrt();
        let phi = std::f64::consts::TAU * u[1];
        let s = -region.extension + (len + 2.0 * region.extension) * u[2];
        let x = region.axis[0] + e * s + (f1 * phi.cos() + f2 * phi.sin()) * r;
        if !scene.is_exterior(&x) {
            continue;
        }
        let ct = 1.0 - (1.0 - cos_min) * u[3];
        let st = (1.0 - ct * ct).max(0.0).sqrt();
        let psi = std::f64::consts::TAU * u[4];
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let dir = e * (sign * ct) + (f1 * psi.cos() + f2 * psi.sin()) * st;
        for &speed in &speeds {
            out.push(PhasePoint::new(x, dir * speed));
        }
    }
    Ok(out)
}

/// Escape times over a low-discrepancy grid of `region × cones × speeds`.
pub fn trapped_grid(region: &TrappedRegion, horizon: f64, spec: &GridSpec, scene: &Scene) -> Result<TrappedGrid> {
    let points = grid_points(region, spec, scene)?;
    let samples = points
        .par_iter()
        .map(|pp| GridSample { point: *pp, escape: escape_time(pp, region, spec.t_max, scene).ok() })
        .collect();
    Ok(TrappedGrid { region: *region, horizon, t_max: spec.t_max, samples })
}

/// Transverse width of the trapped set along a one-parameter direction family.
#[derive(Clone, Debug, PartialEq)]
pub struct WidthProfile {
    /// Tilt angles of the family, increasing.
    pub tilts: Vec<f64>,
    pub escape: Vec<Option<f64>>,
    pub horizons: Vec<f64>,
    /// Largest trapped tilt at each horizon.
    pub widths: Vec<f64>,
    pub fit: LinearFit,
    /// Fitted `c` in `width ∝ e^{−cT}`.
    pub rate: f64,
}

/// Unit-speed rays from the axis midpoint, tilted by angles log-spaced in
/// `[tilt_min, tilt_max]` in one transverse plane.
pub fn width_profile(
    scene: &Scene,
    region: &TrappedRegion,
    samples: usize,
    tilt_range: (f64, f64),
    horizons: &[f64],
    t_max: f64,
) -> Result<WidthProfile> {
    if samples < 2 || horizons.len() < 2 {
        return Err(Error::InvalidInput("width profile needs two samples and two horizons".into()));
    }
    let e = scene.axis_dir();
    let f1 = tangent_frame(&e)[0];
    let mid = 0.5 * (scene.axis[0] + scene.axis[1]);
    let (a, b) = (tilt_range.0.ln(), tilt_range.1.ln());
    let tilts: Vec<f64> = (0..samples)
        .map(|k| (a + (b - a) * k as f64 / (samples - 1) as f64).exp())
        .collect();
    let escape: Vec<Option<f64>> = tilts
        .par_iter()
        .map(|p| {
            let dir = e * p.cos() + f1 * p.sin();
            escape_time(&PhasePoint::new(mid, dir), region, t_max, scene).ok()
        })
        .collect();
    let widths: Vec<f64> = horizons
        .iter()
        .map(|&t| {
            tilts
                .iter()
                .zip(&escape)
                .filter(|(_, e)| e.is_some_and(|v| v >= t))
                .map(|(p, _)| *p)
                .fold(0.0, f64::max)
        })
        .collect();
    let pts: Vec<(f64, f64)> = horizons
        .iter()
        .zip(&widths)
        .filter(|(_, w)| **w > 0.0)
        .map(|(t, w)| (*t, w.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::ProbeFailure("fewer than two horizons with trapped samples".into()));
    }
    let fit = linear_fit(&pts);
    Ok(WidthProfile { tilts, escape, horizons: horizons.to_vec(), widths, rate: -fit.slope, fit })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DivergenceReport {
    /// `(window start, min distance over the window)`.
    pub windows: Vec<(f64, f64)>,
    pub initial: f64,
    /// Slope of `log distance` against time over windows with positive distance.
    pub growth_rate: f64,
    /// `C` and `α` fitted from `log d(t) = t log C + α log d(0)` with `α = 1`.
    pub c: f64,
}

/// Per-window minimum phase-space distance between two trajectories.
pub fn divergence_probe(
    pp1: &PhasePoint,
    pp2: &PhasePoint,
    t: f64,
    window: f64,
    scene: &Scene,
) -> Result<DivergenceReport> {
    if !(window > 0.0) {
        return Err(Error::InvalidInput("window must be positive".into()));
    }
    let a: Trajectory = flow(pp1, t, scene)?;
    let b: Trajectory = flow(pp2, t, scene)?;
    let initial = pp1.distance(pp2);
    let n_windows = (t / window).floor() as usize;
    let per = 64;
    let windows: Vec<(f64, f64)> = (0..n_windows)
        .map(|w| {
            let t0 = w as f64 * window;
            let m = (0..=per)
                .map(|k| {
                    let s = t0 + window * k as f64 / per as f64;
                    a.state_at(s).distance(&b.state_at(s))
                })
                .fold(f64::INFINITY, f64::min);
            (t0, m)
        })
        .collect();
    let pts: Vec<(f64, f64)> =
        windows.iter().filter(|(_, d)| *d > 0.0).map(|(t0, d)| (*t0 + 0.5 * window, d.ln())).collect();
    let growth_rate = if pts.len() >= 2 { linear_fit(&pts).slope } else { 0.0 };
    Ok(DivergenceReport { windows, initial, growth_rate, c: growth_rate.exp() })
}

/// Reflections of `trajectory` with tangency margin at most `eta`.
pub fn tangency_crossing_count(trajectory: &Trajectory, eta: f64) -> usize {
    trajectory.events.iter().filter(|e| tangency_margin(&e.hit) <= eta).count()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrossingScan {
    pub rays: usize,
    pub indeterminate: usize,
    /// `(η, max crossing count)` over the scanned thresholds.
    pub max_counts: Vec<(f64, usize)>,
    /// Largest scanned η whose maximum count is at most two.
    pub eta_star: Option<f64>,
    pub max_at_eta_star: usize,
}

/// Counts η-tangential reflections of random unit-speed rays.
///
/// Rays start uniformly in the box around the obstacles with uniform
/// directions and run for `horizon`.
pub fn crossing_scan(scene: &Scene, rays: usize, seed: u64, horizon: f64, etas: &[f64]) -> CrossingScan {
    let (lo, hi) = scene.bounding_box(scene.d);
    let margins: Vec<Option<Vec<f64>>> = (0..rays as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            let x = loop {
                let p = Vec3::from_fn(|k, _| rng.random_range(lo[k]..hi[k]));
                if scene.is_exterior(&p) {
                    break p;
                }
            };
            let v = random_unit(&mut rng);
            let tr = flow(&PhasePoint::new(x, v), horizon, scene).ok()?;
            Some(tr.events.iter().map(|e| tangency_margin(&e.hit)).collect())
        })
        .collect();
    let ok: Vec<&Vec<f64>> = margins.iter().flatten().collect();
    let max_counts: Vec<(f64, usize)> = etas
        .iter()
        .map(|&eta| (eta, ok.iter().map(|m| m.iter().filter(|&&c| c <= eta).count()).max().unwrap_or(0)))
        .collect();
    let best = max_counts.iter().filter(|(_, m)| *m <= 2).max_by(|a, b| a.0.total_cmp(&b.0));
    CrossingScan {
        rays,
        indeterminate: margins.len() - ok.len(),
        eta_star: best.map(|b| b.0),
        max_at_eta_star: best.map_or(0, |b| b.1),
        max_counts,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeparationRow {
    pub horizon: f64,
    /// `None` when either sample set is empty.
    pub separation: Option<f64>,
    pub trapped_inner: usize,
    pub untrapped_outer: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeparationReport {
    pub rows: Vec<SeparationRow>,
    pub indeterminate: usize,
    /// Fitted `c` in `separation ∝ e^{−cT}` over horizons `T > 0`.
    pub rate: Option<f64>,
}

/// Distance between samples trapped for `inner` and samples not trapped for `outer`.
pub fn separation_probe(
    inner: &TrappedRegion,
    outer: &TrappedRegion,
    samples: &[PhasePoint],
    horizons: &[f64],
    t_max: f64,
    scene: &Scene,
) -> Result<SeparationReport> {
    if !(inner.radius < outer.radius && inner.extension <= outer.extension) {
        return Err(Error::InvalidInput("inner region must lie strictly inside the outer one".into()));
    }
    let times: Vec<Option<(f64, f64)>> = samples
        .par_iter()
        .map(|pp| {
            let ti = escape_time(pp, inner, t_max, scene).ok()?;
            let to = escape_time(pp, outer, t_max, scene).ok()?;
            Some((ti, to))
        })
        .collect();
    let indeterminate = times.iter().filter(|t| t.is_none()).count();
    let mut rows = Vec::with_capacity(horizons.len());
    for &h in horizons {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (pp, t) in samples.iter().zip(&times) {
            let Some((ti, to)) = t else { continue };
            if inner.contains(&pp.x) && *ti >= h {
                a.push(*pp);
            }
            if !(outer.contains(&pp.x) && *to >= h) {
                b.push(*pp);
            }
        }
        let separation = if a.is_empty() || b.is_empty() {
            None
        } else {
            Some(
                a.par_iter()
                    .map(|p| b.iter().map(|q| p.distance(q)).fold(f64::INFINITY, f64::min))
                    .reduce(|| f64::INFINITY, f64::min),
            )
        };
        rows.push(SeparationRow { horizon: h, separation, trapped_inner: a.len(), untrapped_outer: b.len() });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.horizon > 0.0)
        .filter_map(|r| r.separation.filter(|s| *s > 0.0).map(|s| (r.horizon, s.ln())))
        .collect();
    let rate = (pts.len() >= 2).then(|| -linear_fit(&pts).slope);
    Ok(SeparationReport { rows, indeterminate, rate })
}

/// Samples along the tilt family of [`width_profile`] at several axial positions,
/// offset in both transverse position and direction.
pub fn separation_samples(scene: &Scene, n: usize, offset_range: (f64, f64)) -> Vec<PhasePoint> {
    let e = scene.axis_dir();
    let f1 = tangent_frame(&e)[0];
    let mid = 0.5 * (scene.axis[0] + scene.axis[1]);
    let (a, b) = (offset_range.0.ln(), offset_range.1.ln());
    (0..n)
        .map(|k| {
            let p = (a + (b - a) * k as f64 / (n.max(2) - 1) as f64).exp();
            PhasePoint::new(mid + f1 * p, (e + f1 * p).normalize())
        })
        .collect()
}

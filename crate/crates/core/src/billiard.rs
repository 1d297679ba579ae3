//! Broken bicharacteristic flow outside the two obstacles.

use std::fmt;

use crate::error::{Error, Result};
use rand::Rng;
use rayon::prelude::*;

use crate::geometry::{first_intersection_excluding, hit_on, Scene, SurfaceHit, Vec3};
use crate::sampling::{random_unit, sample_rng};

/// Position and momentum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhasePoint {
    pub x: Vec3,
    pub xi: Vec3,
}

impl PhasePoint {
    pub fn new(x: Vec3, xi: Vec3) -> Self {
        Self { x, xi }
    }

    /// Euclidean distance on the concatenated `(x, ξ)`.
    pub fn distance(&self, other: &PhasePoint) -> f64 {
        ((self.x - other.x).norm_squared() + (self.xi - other.xi).norm_squared()).sqrt()
    }

    pub fn reversed(&self) -> PhasePoint {
        PhasePoint { x: self.x, xi: -self.xi }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReflectionEvent {
    pub time: f64,
    pub hit: SurfaceHit,
    pub incoming: Vec3,
    pub outgoing: Vec3,
}

/// Alternating sequence of obstacle indices `(j1, …, jn)`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Story(Vec<u8>);

impl Story {
    pub fn new(seq: Vec<u8>) -> Result<Self> {
        if seq.iter().any(|&j| j != 1 && j != 2) {
            return Err(Error::InvalidInput("story entries must be 1 or 2".into()));
        }
        if seq.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("story must alternate between obstacles".into()));
        }
        Ok(Self(seq))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// `(first, other, first, …)` of the given length.
    pub fn alternating(first: u8, len: usize) -> Self {
        let other = 3 - first;
        Self((0..len).map(|i| if i % 2 == 0 { first } else { other }).collect())
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> Option<u8> {
        self.0.first().copied()
    }

    pub fn last(&self) -> Option<u8> {
        self.0.last().copied()
    }

    pub fn prefix(&self, k: usize) -> Story {
        Story(self.0[..k.min(self.0.len())].to_vec())
    }

    pub fn reversed(&self) -> Story {
        Story(self.0.iter().rev().copied().collect())
    }

    /// `self` followed by `other`, provided the junction alternates.
    pub fn concat(&self, other: &Story) -> Result<Story> {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Story::new(v)
    }
}

impl fmt::Display for Story {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|j| j.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub start: PhasePoint,
    pub events: Vec<ReflectionEvent>,
    pub end: PhasePoint,
    pub elapsed: f64,
    pub story: Story,
    /// No further reflection can occur after the last event.
    pub escaped: bool,
}

impl Trajectory {
    pub fn reflection_count(&self) -> usize {
        self.events.len()
    }

    /// Position at time `s ∈ [0, elapsed]`.
    pub fn position_at(&self, s: f64) -> Vec3 {
        let mut x = self.start.x;
        let mut v = self.start.xi;
        let mut t = 0.0;
        for ev in &self.events {
            if ev.time > s {
                break;
            }
            x = ev.hit.point;
            v = ev.outgoing;
            t = ev.time;
        }
        x + v * (s - t)
    }

    /// Phase point at time `s ∈ [0, elapsed]`.
    pub fn state_at(&self, s: f64) -> PhasePoint {
        let mut x = self.start.x;
        let mut v = self.start.xi;
        let mut t = 0.0;
        for ev in &self.events {
            if ev.time > s {
                break;
            }
            x = ev.hit.point;
            v = ev.outgoing;
            t = ev.time;
        }
        PhasePoint { x: x + v * (s - t), xi: v }
    }
}

/// Specular reflection `ξ − 2(n·ξ)n` for a unit normal `n`.
pub fn reflect(xi: &Vec3, n: &Vec3) -> Vec3 {
    xi - n * (2.0 * n.dot(xi))
}

fn tangency_error(hit: &SurfaceHit, time: f64) -> Error {
    Error::TangencyAmbiguity {
        time,
        point: [hit.point.x, hit.point.y, hit.point.z],
        obstacle: hit.obstacle_id,
        margin: hit.cos_incidence.abs(),
    }
}

/// Forward flow `Φ_t` for `t ≥ 0`.
pub fn flow(pp: &PhasePoint, t: f64, scene: &Scene) -> Result<Trajectory> {
    if !(t >= 0.0) {
        return Err(Error::InvalidInput("flow time must be nonnegative".into()));
    }
    if !scene.is_exterior(&pp.x) {
        return Err(Error::InvalidInput("start point lies inside an obstacle".into()));
    }
    let speed = pp.xi.norm();
    let max_events = (2.0 * speed * t / scene.d).ceil() as usize + 4;
    let mut x = pp.x;
    let mut v = pp.xi;
    let mut now = 0.0;
    let mut last = None;
    let mut events = Vec::new();
    let mut story = Vec::new();
    let escaped;
    loop {
        let hit = first_intersection_excluding(&x, &v, scene, last)?;
        match hit {
            Some(hit) if now + hit.time <= t => {
                if hit.cos_incidence < scene.tol.tangency {
                    return Err(tangency_error(&hit, now + hit.time));
                }
                now += hit.time;
                let out = reflect(&v, &hit.normal);
                events.push(ReflectionEvent { time: now, hit, incoming: v, outgoing: out });
                story.push(hit.obstacle_id);
                x = hit.point;
                v = out;
                last = Some(hit.obstacle_id);
                if events.len() > max_events {
                    return Err(Error::Numeric("reflection count exceeds geometric bound".into()));
                }
            }
            other => {
                escaped = other.is_none();
                x += v * (t - now);
                break;
            }
        }
    }
    Ok(Trajectory {
        start: *pp,
        events,
        end: PhasePoint { x, xi: v },
        elapsed: t,
        story: Story(story),
        escaped,
    })
}

/// Backward flow `Φ_{−t}`, computed as the forward flow of `(x, −ξ)`.
///
/// The returned end point carries the forward-time momentum.
pub fn flow_backward(pp: &PhasePoint, t: f64, scene: &Scene) -> Result<Trajectory> {
    let mut tr = flow(&pp.reversed(), t, scene)?;
    tr.start = *pp;
    tr.end.xi = -tr.end.xi;
    Ok(tr)
}

/// Modified backward flow `X̂_{−2t}(x, ξ)` following the reversed story.
///
/// Only obstacle `j_k` is considered while looking for the `k`-th backward
/// reflection; once all of `J` has been used the motion is free. The end
/// point carries the velocity of the backward motion.
pub fn modified_flow(pp: &PhasePoint, t: f64, story: &Story, scene: &Scene) -> Result<Trajectory> {
    if !(t >= 0.0) {
        return Err(Error::InvalidInput("flow time must be nonnegative".into()));
    }
    if pp.xi.norm() == 0.0 {
        return Err(Error::InvalidInput("momentum must be nonzero".into()));
    }
    let total = 2.0 * t;
    let mut x = pp.x;
    let mut v = -pp.xi;
    let mut now = 0.0;
    let mut events = Vec::new();
    let mut used = Vec::new();
    for &j in story.as_slice().iter().rev() {
        let o = scene.obstacle(j);
        let Some(s) = o.intersect(&x, &v) else { break };
        if now + s > total {
            break;
        }
        let hit = hit_on(o, &x, &v, s);
        if hit.cos_incidence < scene.tol.tangency {
            return Err(tangency_error(&hit, now + s));
        }
        now += s;
        let out = reflect(&v, &hit.normal);
        events.push(ReflectionEvent { time: now, hit, incoming: v, outgoing: out });
        used.push(j);
        x = hit.point;
        v = out;
    }
    x += v * (total - now);
    Ok(Trajectory {
        start: *pp,
        events,
        end: PhasePoint { x, xi: v },
        elapsed: total,
        story: Story(used),
        escaped: false,
    })
}

/// Unreflected prefix of `J` after the modified flow `X̂_{−2t}`.
pub fn remaining_story(pp: &PhasePoint, t: f64, story: &Story, scene: &Scene) -> Result<Story> {
    let tr = modified_flow(pp, t, story, scene)?;
    Ok(story.prefix(story.len() - tr.events.len()))
}

/// Aggregate outcome of [`invariant_sweep`].
#[derive(Clone, Debug, PartialEq)]
pub struct InvariantReport {
    pub trajectories: usize,
    /// Worst relative change of `|ξ|²`.
    pub max_energy_error: f64,
    /// Worst phase-space distance after flowing forward, reversing and flowing back.
    pub max_reversal_error: f64,
    /// Event times `s ≥ d/β0` with `N(s) > 2(β0/d)s`.
    pub count_violations: usize,
    pub max_reflections: usize,
    /// Trajectories stopped by a tangency ambiguity.
    pub indeterminate: usize,
}

/// Random trajectory checks for energy, time reversal and the reflection count.
///
/// Start points are uniform in the box spanned by the obstacles' bounding balls
/// (widened by `d`), directions uniform, speeds uniform in `[α0, β0]` and
/// horizons uniform in `[d/β0, periods·2d/α0]`.
pub fn invariant_sweep(scene: &Scene, n: usize, seed: u64, periods: f64) -> InvariantReport {
    let (lo, hi) = scene.bounding_box(scene.d);
    let t_lo = scene.d / scene.beta0;
    let t_hi = periods * scene.period() / scene.alpha0;
    let rows: Vec<Option<(f64, f64, usize, usize)>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            let x = loop {
                let p = Vec3::from_fn(|k, _| rng.random_range(lo[k]..hi[k]));
                if scene.is_exterior(&p) {
                    break p;
                }
            };
            let speed = rng.random_range(scene.alpha0..=scene.beta0);
            let xi = random_unit(&mut rng) * speed;
            let t = rng.random_range(t_lo..=t_hi);
            let pp = PhasePoint::new(x, xi);
            let fwd = flow(&pp, t, scene).ok()?;
            let back = flow(&fwd.end.reversed(), t, scene).ok()?;
            let energy = fwd
                .events
                .iter()
                .map(|e| (e.outgoing.norm_squared() / xi.norm_squared() - 1.0).abs())
                .chain(std::iter::once((fwd.end.xi.norm_squared() / xi.norm_squared() - 1.0).abs()))
                .fold(0.0, f64::max);
            let reversal = back.end.reversed().distance(&pp);
            let bound = 2.0 * scene.beta0 / scene.d;
            let violations = fwd
                .events
                .iter()
                .enumerate()
                .filter(|(k, e)| e.time >= t_lo && (k + 1) as f64 > bound * e.time)
                .count()
                + usize::from(fwd.events.len() as f64 > bound * t);
            Some((energy, reversal, violations, fwd.events.len()))
        })
        .collect();
    let ok: Vec<_> = rows.iter().flatten().collect();
    InvariantReport {
        trajectories: n,
        max_energy_error: ok.iter().map(|r| r.0).fold(0.0, f64::max),
        max_reversal_error: ok.iter().map(|r| r.1).fold(0.0, f64::max),
        count_violations: ok.iter().map(|r| r.2).sum(),
        max_reflections: ok.iter().map(|r| r.3).max().unwrap_or(0),
        indeterminate: rows.len() - ok.len(),
    }
}

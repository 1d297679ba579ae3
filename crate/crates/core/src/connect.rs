//! Ray connection through a prescribed story of reflections.
//!
//! The reflection points are found as the stationary point of the optical
//! length, minimised by Newton's method in tangent coordinates. The Hessian of
//! the length is block tridiagonal and stays well conditioned for long
//! stories, unlike single shooting whose sensitivity grows with every bounce.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3};

use crate::billiard::Story;
use crate::error::{Error, Result};
use crate::geometry::{tangent_frame, Scene, Vec3};

/// Where the connected rays come from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Source {
    /// Plane wave travelling along the unit vector `dir`.
    PlaneWave { dir: Vec3 },
    /// Point source.
    Point { y: Vec3 },
}

/// A connected broken ray.
#[derive(Clone, Debug, PartialEq)]
pub struct RayPath {
    pub source: Source,
    pub target: Vec3,
    pub story: Story,
    /// Reflection points `P_1, …, P_n` on `Θ_{j_1}, …, Θ_{j_n}`.
    pub points: Vec<Vec3>,
    /// Unit direction of the ray arriving at `P_1` (index 0) and leaving each `P_k`.
    pub dirs: Vec<Vec3>,
    /// Segment lengths `|P_{k+1} − P_k|`, the last one ending at the target.
    pub lengths: Vec<f64>,
    /// Incidence cosines at the reflection points.
    pub cosines: Vec<f64>,
    /// Distance from a point source to the first reflection (zero for plane waves).
    pub lead: f64,
}

impl RayPath {
    /// Path length from `P_1` to the target.
    pub fn length_after_first(&self) -> f64 {
        self.lengths.iter().sum()
    }

    /// Direction of the ray at the target.
    pub fn arrival_dir(&self) -> Vec3 {
        *self.dirs.last().expect("path has at least the incoming direction")
    }
}

struct Frames {
    t: Vec<[Vec3; 2]>,
    n: Vec<Vec3>,
}

fn optical_length(source: &Source, target: &Vec3, pts: &[Vec3]) -> f64 {
    let lead = match source {
        Source::PlaneWave { dir } => pts[0].dot(dir),
        Source::Point { y } => (pts[0] - y).norm(),
    };
    let inner: f64 = pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    lead + inner + (target - pts[pts.len() - 1]).norm()
}

/// Connects the source to `target` through the reflections of `story`.
///
/// `guess` seeds the reflection points; by default every point starts at the
/// periodic-ray endpoint of its obstacle.
pub fn connect(
    source: &Source,
    target: &Vec3,
    story: &Story,
    scene: &Scene,
    guess: Option<&[Vec3]>,
) -> Result<RayPath> {
    let n = story.len();
    let js = story.as_slice();
    if n == 0 {
        let (dir, lead) = match source {
            Source::PlaneWave { dir } => (*dir, 0.0),
            Source::Point { y } => ((target - y).normalize(), 0.0),
        };
        let length = match source {
            Source::PlaneWave { .. } => 0.0,
            Source::Point { y } => (target - y).norm(),
        };
        return Ok(RayPath {
            source: *source,
            target: *target,
            story: story.clone(),
            points: vec![],
            dirs: vec![dir],
            lengths: vec![length],
            cosines: vec![],
            lead,
        });
    }
    let mut pts: Vec<Vec3> = match guess {
        Some(g) if g.len() == n => g.to_vec(),
        _ => js.iter().map(|&j| scene.axis[j as usize - 1]).collect(),
    };
    let mut converged = false;
    for _ in 0..200 {
        let normals: Vec<Vec3> = pts.iter().zip(js).map(|(p, &j)| scene.obstacle(j).normal(p)).collect();
        let frames = Frames { t: normals.iter().map(tangent_frame).collect(), n: normals };
        let (grad, hess) = derivatives(source, target, js, &pts, &frames, scene);
        let gnorm = grad.amax();
        if gnorm < 1e-14 {
            converged = true;
            break;
        }
        let mut step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&(-&grad)),
            None => match hess.lu().solve(&(-&grad)) {
                Some(s) if s.dot(&grad) < 0.0 => s,
                _ => -&grad,
            },
        };
        let base = optical_length(source, target, &pts);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = displaced(&pts, &frames, &step, alpha, js, scene);
            let val = optical_length(source, target, &trial);
            if val <= base + 1e-4 * alpha * step.dot(&grad) || step.amax() * alpha < 1e-9 {
                pts = trial;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            step.fill(0.0);
            break;
        }
        if step.amax() * alpha < 1e-15 {
            converged = true;
            break;
        }
    }
    let path = assemble(source, target, story, &pts, scene);
    let worst = (0..n)
        .map(|k| {
            let nrm = scene.obstacle(js[k]).normal(&pts[k]);
            path.cosines[k].min(path.dirs[k + 1].dot(&nrm))
        })
        .fold(f64::INFINITY, f64::min);
    let residual = path_residual(&path, scene);
    if !converged && residual > 1e-9 {
        return Err(Error::Domain(format!("no {story} ray through the target (residual {residual:e})")));
    }
    if !(worst > scene.tol.tangency) || residual > 1e-9 {
        return Err(Error::Domain(format!(
            "{story} ray through the target is not a proper reflection path"
        )));
    }
    Ok(path)
}

fn displaced(pts: &[Vec3], frames: &Frames, step: &DVector<f64>, alpha: f64, js: &[u8], scene: &Scene) -> Vec<Vec3> {
    pts.iter()
        .enumerate()
        .map(|(k, p)| {
            let [t1, t2] = frames.t[k];
            let q = p + (t1 * step[2 * k] + t2 * step[2 * k + 1]) * alpha;
            scene.obstacle(js[k]).retract(&q)
        })
        .collect()
}

fn derivatives(
    source: &Source,
    target: &Vec3,
    js: &[u8],
    pts: &[Vec3],
    frames: &Frames,
    scene: &Scene,
) -> (DVector<f64>, DMatrix<f64>) {
    let n = pts.len();
    let mut grad = DVector::zeros(2 * n);
    let mut hess = DMatrix::zeros(2 * n, 2 * n);
    let proj = |u: &Vec3, l: f64| (Matrix3::identity() - u * u.transpose()) / l;
    // Segment k runs from P_k to P_{k+1} (P_{n+1} is the target).
    let mut seg_dir = Vec::with_capacity(n);
    let mut seg_len = Vec::with_capacity(n);
    for k in 0..n {
        let next = if k + 1 < n { pts[k + 1] } else { *target };
        let v = next - pts[k];
        let l = v.norm();
        seg_dir.push(v / l);
        seg_len.push(l);
    }
    let (a0, a0_hess) = match source {
        Source::PlaneWave { dir } => (*dir, Matrix3::zeros()),
        Source::Point { y } => {
            let v = pts[0] - y;
            let l = v.norm();
            (v / l, proj(&(v / l), l))
        }
    };
    for k in 0..n {
        let a = if k == 0 { a0 } else { seg_dir[k - 1] };
        let b = seg_dir[k];
        let g3 = a - b;
        let [t1, t2] = frames.t[k];
        grad[2 * k] = g3.dot(&t1);
        grad[2 * k + 1] = g3.dot(&t2);
        let prev_h = if k == 0 { a0_hess } else { proj(&seg_dir[k - 1], seg_len[k - 1]) };
        let h3 = prev_h + proj(&b, seg_len[k]);
        let kmat = scene.obstacle(js[k]).second_form(&pts[k], &t1, &t2);
        let curv = kmat * (-g3.dot(&frames.n[k]));
        let block = tangent_block(&h3, &frames.t[k], &frames.t[k]) + curv;
        hess.view_mut((2 * k, 2 * k), (2, 2)).copy_from(&block);
        if k + 1 < n {
            let off = -tangent_block(&proj(&b, seg_len[k]), &frames.t[k], &frames.t[k + 1]);
            hess.view_mut((2 * k, 2 * k + 2), (2, 2)).copy_from(&off);
            hess.view_mut((2 * k + 2, 2 * k), (2, 2)).copy_from(&off.transpose());
        }
    }
    (grad, hess)
}

fn tangent_block(m: &Matrix3<f64>, left: &[Vec3; 2], right: &[Vec3; 2]) -> Matrix2<f64> {
    Matrix2::from_fn(|i, j| left[i].dot(&(m * right[j])))
}

fn assemble(source: &Source, target: &Vec3, story: &Story, pts: &[Vec3], scene: &Scene) -> RayPath {
    let js = story.as_slice();
    let n = pts.len();
    let (first_dir, lead) = match source {
        Source::PlaneWave { dir } => (*dir, 0.0),
        Source::Point { y } => ((pts[0] - y).normalize(), (pts[0] - y).norm()),
    };
    let mut dirs = vec![first_dir];
    let mut lengths = Vec::with_capacity(n);
    let mut cosines = Vec::with_capacity(n);
    for k in 0..n {
        let next = if k + 1 < n { pts[k + 1] } else { *target };
        let v = next - pts[k];
        lengths.push(v.norm());
        let nrm = scene.obstacle(js[k]).normal(&pts[k]);
        cosines.push(-dirs[k].dot(&nrm));
        dirs.push(v.normalize());
    }
    RayPath {
        source: *source,
        target: *target,
        story: story.clone(),
        points: pts.to_vec(),
        dirs,
        lengths,
        cosines,
        lead,
    }
}

/// Largest violation of the reflection law along the path.
pub fn path_residual(path: &RayPath, scene: &Scene) -> f64 {
    let js = path.story.as_slice();
    path.points
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let nrm = scene.obstacle(js[k]).normal(p);
            let expected = crate::billiard::reflect(&path.dirs[k], &nrm);
            (expected - path.dirs[k + 1]).norm()
        })
        .fold(0.0, f64::max)
}

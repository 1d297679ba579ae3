//! Gauss–Legendre rules and adaptive one-dimensional integration.

use crate::error::{Error, Result};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let dp = legendre(n, x).1;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
}

/// Nodes and weights mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (x.iter().map(|t| mid + half * t).collect(), w.iter().map(|v| v * half).collect())
}

/// Adaptive Simpson integration to absolute tolerance `abs_tol + rel_tol·|I|`.
///
/// Subintervals still unresolved at `max_depth` are accepted while their summed
/// error estimate stays within the tolerance; otherwise the worst is reported.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64, max_depth: u32) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a)?;
    let fb = f(b)?;
    let m = 0.5 * (a + b);
    let fm = f(m)?;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // A coarse estimate fixes the absolute target for the relative tolerance.
    let scale = whole.abs().max(composite_estimate(&f, a, b)?.abs());
    let tol = abs_tol.max(rel_tol * scale);
    let mut worst: Option<(f64, f64, f64)> = None;
    let mut unresolved = 0.0;
    let value = simpson_rec(&f, a, b, fa, fm, fb, whole, tol, max_depth, &mut (&mut worst, &mut unresolved))?;
    match worst {
        Some((lo, hi, err)) if unresolved > tol => Err(Error::Numeric(format!(
            "quadrature did not converge on [{lo}, {hi}] (error estimate {err:e})"
        ))),
        _ => Ok(value),
    }
}

fn composite_estimate<F: Fn(f64) -> Result<f64>>(f: &F, a: f64, b: f64) -> Result<f64> {
    let (x, w) = gauss_legendre_on(8, a, b);
    let mut s = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        s += wi * f(*xi)?;
    }
    Ok(s)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> Result<f64>>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    worst: &mut (&mut Option<(f64, f64, f64)>, &mut f64),
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let err = left + right - whole;
    if err.abs() <= 15.0 * tol {
        return Ok(left + right + err / 15.0);
    }
    if depth == 0 {
        let e = err.abs() / 15.0;
        *worst.1 += e;
        if worst.0.is_none_or(|w| e > w.2) {
            *worst.0 = Some((a, b, e));
        }
        return Ok(left + right + err / 15.0);
    }
    let l = simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, worst)?;
    let r = simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, worst)?;
    Ok(l + r)
}

/// Tensor Gauss–Legendre integral of `f` over a box, `n` nodes per axis.
pub fn tensor_gauss<F, T>(f: F, lo: [f64; 3], hi: [f64; 3], n: [usize; 3]) -> T
where
    F: Fn([f64; 3]) -> T + Sync,
    T: Send + Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
{
    use rayon::prelude::*;
    let rules: Vec<(Vec<f64>, Vec<f64>)> = (0..3).map(|k| gauss_legendre_on(n[k], lo[k], hi[k])).collect();
    let partial: Vec<T> = (0..n[0])
        .into_par_iter()
        .map(|i| {
            let mut acc = T::default();
            for j in 0..n[1] {
                for k in 0..n[2] {
                    let w = rules[0].1[i] * rules[1].1[j] * rules[2].1[k];
                    acc = acc + f([rules[0].0[i], rules[1].0[j], rules[2].0[k]]) * w;
                }
            }
            acc
        })
        .collect();
    partial.into_iter().fold(T::default(), |a, b| a + b)
}

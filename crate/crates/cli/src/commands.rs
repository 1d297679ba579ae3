use anyhow::Result;
use rayon::prelude::*;
use serde_json::json;

use billiard_core::acceptance::{run_criterion, AcceptanceOptions};
use billiard_core::billiard::{flow, flow_backward, invariant_sweep};
use billiard_core::geometry::{tangent_frame, tangency_margin};
use billiard_core::parametrix::{decay_experiment, evaluate_sk, Method, SkOptions};
use billiard_core::spectral::{analyse, contraction_lambda};
use billiard_core::trapped::{
    crossing_scan, default_t_max, divergence_probe, separation_probe, separation_samples, trapped_grid,
    width_profile, GridSpec, TrappedRegion,
};
use billiard_core::{PhaseField, PhasePoint, Scene, Vec3};

use crate::input::{config_err, scene, symbol};
use crate::output::{json, num, opt, vec3, Csv};
use crate::{Cli, Command, MethodArg};

/// Runs the selected experiment; `Ok(false)` reports a failed criterion.
pub fn run(cli: &Cli) -> Result<bool> {
    let scene = scene(cli.scene.as_deref())?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Flow { x, xi, t, backward, sweep, periods } => {
            if let Some(n) = sweep {
                let r = invariant_sweep(&scene, *n, cli.seed, *periods);
                json(
                    out,
                    "flow.json",
                    &json!({
                        "trajectories": r.trajectories,
                        "max_energy_error": r.max_energy_error,
                        "max_reversal_error": r.max_reversal_error,
                        "count_violations": r.count_violations,
                        "max_reflections": r.max_reflections,
                        "indeterminate": r.indeterminate,
                    }),
                )?;
                return Ok(true);
            }
            let (Some(x), Some(xi)) = (x, xi) else {
                return Err(config_err("flow needs --x and --xi, or --sweep"));
            };
            if !scene.is_exterior(x) {
                return Err(config_err("--x must lie outside both obstacles"));
            }
            let pp = PhasePoint::new(*x, *xi);
            let tr = if *backward { flow_backward(&pp, *t, &scene)? } else { flow(&pp, *t, &scene)? };
            let mut csv = Csv::create(out, "flow.csv", &["kind", "time", "x", "y", "z", "xi_x", "xi_y", "xi_z", "obstacle", "cos_incidence"])?;
            let state = |kind: &str, time: f64, p: &Vec3, v: &Vec3, ob: String, c: String| {
                vec![kind.to_string(), num(time), num(p.x), num(p.y), num(p.z), num(v.x), num(v.y), num(v.z), ob, c]
            };
            csv.row(state("start", 0.0, &tr.start.x, &tr.start.xi, String::new(), String::new()))?;
            for ev in &tr.events {
                csv.row(state(
                    "reflection",
                    ev.time,
                    &ev.hit.point,
                    &ev.outgoing,
                    ev.hit.obstacle_id.to_string(),
                    num(tangency_margin(&ev.hit)),
                ))?;
            }
            csv.row(state("end", tr.elapsed, &tr.end.x, &tr.end.xi, String::new(), String::new()))?;
            csv.finish()?;
            json(
                out,
                "flow.json",
                &json!({
                    "reflections": tr.reflection_count(),
                    "story": tr.story.to_string(),
                    "escaped": tr.escaped,
                    "elapsed": tr.elapsed,
                    "end": { "x": vec3(&tr.end.x), "xi": vec3(&tr.end.xi) },
                }),
            )?;
            Ok(true)
        }
        Command::TrappedSet { samples, speeds, cone, horizon, tilts } => {
            let region = TrappedRegion::u_infinity(&scene);
            let t_max = default_t_max(&scene);
            let spec = GridSpec { samples: *samples, speed_levels: *speeds, cone_half_angle: *cone, t_max };
            let grid = trapped_grid(&region, horizon * scene.period(), &spec, &scene).map_err(|e| config_err(e.to_string()))?;
            let mut csv = Csv::create(out, "trapped_set.csv", &["x", "y", "z", "xi_x", "xi_y", "xi_z", "escape_time", "trapped"])?;
            for s in &grid.samples {
                let p = &s.point;
                csv.row([
                    num(p.x.x), num(p.x.y), num(p.x.z), num(p.xi.x), num(p.xi.y), num(p.xi.z),
                    opt(s.escape),
                    (grid.is_trapped(s) as u8).to_string(),
                ])?;
            }
            csv.finish()?;
            let horizons: Vec<f64> = (2..=9).map(|k| k as f64 * scene.period()).collect();
            let (_, data) = analyse(&scene)?;
            let expected = data.leading_expansion().ln() / scene.period();
            let width = width_profile(&scene, &region, (*tilts).max(2), (1e-14, 0.1), &horizons, t_max);
            json(
                out,
                "trapped_set.json",
                &json!({
                    "samples": grid.samples.len(),
                    "trapped_fraction": grid.trapped_fraction(),
                    "indeterminate": grid.indeterminate(),
                    "max_trapped_radial": grid.max_trapped_radial(),
                    "width_rate": width.as_ref().ok().map(|w| w.rate),
                    "width_r_squared": width.as_ref().ok().map(|w| w.fit.r_squared),
                    "widths": width.as_ref().ok().map(|w| w.horizons.iter().zip(&w.widths).map(|(h, v)| [*h, *v]).collect::<Vec<_>>()),
                    "width_error": width.as_ref().err().map(|e| e.to_string()),
                    "expected_rate": expected,
                }),
            )?;
            Ok(true)
        }
        Command::Divergence { offset, t, window } => {
            let e = scene.axis_dir();
            let f1 = tangent_frame(&e)[0];
            let a = PhasePoint::new(scene.center(), e);
            let b = PhasePoint::new(scene.center() + f1 * *offset, e);
            let r = divergence_probe(&a, &b, *t, *window, &scene).map_err(|e| config_err(e.to_string()))?;
            let mut csv = Csv::create(out, "divergence.csv", &["window_start", "min_distance"])?;
            for (s, d) in &r.windows {
                csv.row([num(*s), num(*d)])?;
            }
            csv.finish()?;
            json(out, "divergence.json", &json!({ "initial": r.initial, "growth_rate": r.growth_rate, "c": r.c }))?;
            Ok(true)
        }
        Command::Crossings { rays, horizon, etas } => {
            let scan = crossing_scan(&scene, *rays, cli.seed, horizon * scene.period(), etas);
            let mut csv = Csv::create(out, "crossings.csv", &["eta", "max_count"])?;
            for (eta, m) in &scan.max_counts {
                csv.row([num(*eta), m.to_string()])?;
            }
            csv.finish()?;
            json(
                out,
                "crossings.json",
                &json!({
                    "rays": scan.rays,
                    "indeterminate": scan.indeterminate,
                    "eta_star": scan.eta_star,
                    "max_at_eta_star": scan.max_at_eta_star,
                }),
            )?;
            Ok(true)
        }
        Command::Separation { samples, horizons } => {
            let outer = TrappedRegion::u_infinity(&scene);
            let inner = TrappedRegion::around_axis(&scene, 0.5 * outer.radius, 0.5 * outer.extension);
            let pts = separation_samples(&scene, *samples, (1e-10, outer.radius));
            let hs: Vec<f64> = horizons.iter().map(|h| h * scene.period()).collect();
            let r = separation_probe(&inner, &outer, &pts, &hs, default_t_max(&scene), &scene)
                .map_err(|e| config_err(e.to_string()))?;
            let mut csv = Csv::create(out, "separation.csv", &["horizon", "separation", "trapped_inner", "untrapped_outer"])?;
            for row in &r.rows {
                csv.row([num(row.horizon), opt(row.separation), row.trapped_inner.to_string(), row.untrapped_outer.to_string()])?;
            }
            csv.finish()?;
            json(out, "separation.json", &json!({ "rate": r.rate, "indeterminate": r.indeterminate }))?;
            Ok(true)
        }
        Command::PhaseField { story, xi, from, to, n } => {
            let e = scene.axis_dir();
            let dir = xi.unwrap_or(e);
            if dir.norm() == 0.0 {
                return Err(config_err("--xi must be nonzero"));
            }
            let from = from.unwrap_or(scene.center());
            let to = to.unwrap_or(scene.center() + tangent_frame(&e)[0] * scene.u_radius);
            let field = PhaseField::new(from, dir, story.clone());
            let rows: Vec<(Vec3, Result<(f64, Vec3, f64), String>)> = (0..*n)
                .into_par_iter()
                .map(|k| {
                    let x = from + (to - from) * (k as f64 / (n.max(&2) - 1) as f64);
                    (x, field.sample(&scene, &x, None).map(|s| (s.value, s.gradient, s.lambda)).map_err(|e| e.to_string()))
                })
                .collect();
            let mut csv = Csv::create(out, "phase_field.csv", &["x", "y", "z", "phi", "grad_x", "grad_y", "grad_z", "lambda", "error"])?;
            let mut failures = 0;
            for (x, r) in &rows {
                let mut rec = vec![num(x.x), num(x.y), num(x.z)];
                match r {
                    Ok((v, g, l)) => rec.extend([num(*v), num(g.x), num(g.y), num(g.z), num(*l), String::new()]),
                    Err(msg) => {
                        failures += 1;
                        rec.extend([String::new(), String::new(), String::new(), String::new(), String::new(), msg.clone()]);
                    }
                }
                csv.row(rec)?;
            }
            csv.finish()?;
            json(out, "phase_field.json", &json!({ "story": story.to_string(), "points": rows.len(), "failures": failures }))?;
            Ok(true)
        }
        Command::Lambda => {
            let (ray, data) = analyse(&scene)?;
            let lambda = contraction_lambda(&data)?;
            let oracle = billiard_core::acceptance::sphere_pair_lambda(&scene).ok();
            json(
                out,
                "lambda.json",
                &json!({
                    "endpoints": [vec3(&ray.endpoints[0]), vec3(&ray.endpoints[1])],
                    "d": ray.d,
                    "period": ray.period,
                    "eigenvalues": data.eigenvalues.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
                    "lambda": lambda,
                    "mu": data.mu,
                    "leading_expansion": data.leading_expansion(),
                    "pairing_error": data.pairing_error(),
                    "oracle_lambda": oracle,
                }),
            )?;
            Ok(true)
        }
        Command::Parametrix { h, t, k, method, symbol: sym, y, x, to, n } => {
            let q = symbol(sym.as_deref(), &scene)?;
            let y = y.unwrap_or(q.center);
            let x = x.unwrap_or(y + scene.axis_dir() * (1.5 * t));
            let opts = SkOptions {
                method: if *method == MethodArg::Direct { Method::Direct } else { Method::Stationary },
                k: *k,
                ..Default::default()
            };
            if let Some(to) = to {
                let xs: Vec<Vec3> = (0..*n).map(|i| x + (to - x) * (i as f64 / (n.max(&2) - 1) as f64)).collect();
                let mut csv = Csv::create(out, "parametrix.csv", &["x", "y", "z", "re", "im", "abs", "error"])?;
                let mut failures = 0;
                for p in &xs {
                    let mut rec = vec![num(p.x), num(p.y), num(p.z)];
                    match evaluate_sk(p, *t, &y, *h, &q, &scene, &opts) {
                        Ok(r) => rec.extend([num(r.value.re), num(r.value.im), num(r.value.norm()), String::new()]),
                        Err(e @ billiard_core::Error::InvalidInput(_)) => return Err(config_err(e.to_string())),
                        Err(e) => {
                            failures += 1;
                            rec.extend([String::new(), String::new(), String::new(), e.to_string()]);
                        }
                    }
                    csv.row(rec)?;
                }
                csv.finish()?;
                json(out, "parametrix.json", &json!({ "points": xs.len(), "failures": failures }))?;
                return Ok(true);
            }
            let r = evaluate_sk(&x, *t, &y, *h, &q, &scene, &opts).map_err(|e| match e {
                billiard_core::Error::InvalidInput(_) => config_err(e.to_string()),
                e => e.into(),
            })?;
            let terms: Vec<_> = r
                .terms
                .iter()
                .map(|s| {
                    json!({
                        "story": s.story.to_string(),
                        "value": [s.value.re, s.value.im],
                        "critical_point": s.critical_point.as_ref().map(vec3),
                        "phase": s.phase,
                        "hessian_det": s.hessian_det,
                        "signature": s.signature,
                        "w0": s.w0,
                        "w1_tilde": [s.w1_tilde.re, s.w1_tilde.im],
                        "error": s.error,
                    })
                })
                .collect();
            json(
                out,
                "parametrix.json",
                &json!({
                    "x": vec3(&x), "y": vec3(&y), "t": t, "h": h, "K": k,
                    "value": [r.value.re, r.value.im],
                    "abs": r.value.norm(),
                    "terms": terms,
                    "excluded": r.excluded,
                    "nodes": r.nodes,
                }),
            )?;
            Ok(true)
        }
        Command::Decay { speed, first, periods, per_period } => decay(&scene, cli, *speed, (*first, *periods), *per_period),
        Command::VerifyAll { scale, only } => {
            let opts = AcceptanceOptions { seed: cli.seed, scale: *scale };
            let ids: Vec<u8> = if only.is_empty() { (1..=10).collect() } else { only.clone() };
            if let Some(bad) = ids.iter().find(|i| !(1..=10).contains(*i)) {
                return Err(config_err(format!("no criterion {bad}")));
            }
            let mut reports = Vec::new();
            for id in ids {
                let r = run_criterion(id, &scene, &opts);
                eprintln!("{r}");
                reports.push(r);
            }
            let passed = reports.iter().all(|r| r.passed);
            json(out, "verify.json", &json!({ "passed": passed, "criteria": reports }))?;
            Ok(passed)
        }
    }
}

fn decay(scene: &Scene, cli: &Cli, speed: f64, (first, last): (usize, usize), per_period: usize) -> Result<bool> {
    if !(speed > 0.0) || per_period == 0 || first >= last {
        return Err(config_err("decay needs a positive speed and a nonempty ladder"));
    }
    let q = symbol(None, scene)?;
    let (_, data) = analyse(scene)?;
    let lambda = contraction_lambda(&data)?;
    let e = scene.axis_dir();
    let xi = e * speed;
    let points: Vec<Vec3> = (0..5).map(|k| scene.center() + e * (0.25 * (k as f64 - 2.0))).collect();
    let period_t = scene.period() / (2.0 * speed);
    let times: Vec<f64> = (first * per_period..=last * per_period).map(|k| period_t * k as f64 / per_period as f64).collect();
    let r = decay_experiment(&points, &times, &xi, &q, scene, lambda)?;
    let mut csv = Csv::create(&cli.out, "decay.csv", &["point", "t", "amplitude_sum"])?;
    for (i, t, v) in &r.samples {
        csv.row([i.to_string(), num(*t), num(*v)])?;
    }
    csv.finish()?;
    json(
        &cli.out,
        "decay.json",
        &json!({
            "rate": r.rate,
            "expected": r.expected,
            "relative_error": r.relative_error,
            "r_squared": r.fit.r_squared,
            "envelope": r.envelope.iter().map(|(t, v)| [*t, *v]).collect::<Vec<_>>(),
        }),
    )?;
    Ok(true)
}

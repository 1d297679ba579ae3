use approx::assert_relative_eq;
use billiard_core::billiard::{flow, flow_backward, invariant_sweep, modified_flow, reflect, remaining_story};
use billiard_core::{PhasePoint, Scene, Story, Vec3};
use proptest::prelude::*;

fn scene() -> Scene {
    Scene::symmetric_two_spheres()
}

fn story(s: &[u8]) -> Story {
    Story::new(s.to_vec()).unwrap()
}

#[test]
fn reflection_examples() {
    let n = Vec3::new(0.0, 0.0, 1.0);
    assert_eq!(reflect(&Vec3::new(0.0, 0.0, -1.0), &n), Vec3::new(0.0, 0.0, 1.0));
    assert_eq!(reflect(&Vec3::new(1.0, 0.0, -1.0), &n), Vec3::new(1.0, 0.0, 1.0));
}

#[test]
fn free_flight() {
    let tr = flow(&PhasePoint::new(Vec3::new(10.0, 10.0, 10.0), Vec3::x()), 1.0, &scene()).unwrap();
    assert_eq!(tr.end.x, Vec3::new(11.0, 10.0, 10.0));
    assert!(tr.events.is_empty());
    assert!(tr.escaped);
}

#[test]
fn axis_ray_has_period_four() {
    let tr = flow(&PhasePoint::new(Vec3::new(0.0, 0.0, 2.0), Vec3::z()), 4.0, &scene()).unwrap();
    assert_eq!(tr.reflection_count(), 2);
    assert_eq!(tr.story, story(&[2, 1]));
    assert_relative_eq!(tr.end.x, Vec3::new(0.0, 0.0, 2.0), epsilon = 1e-14);
    assert_relative_eq!(tr.end.xi, Vec3::z(), epsilon = 1e-14);
    assert_relative_eq!(tr.events[0].time, 1.0, epsilon = 1e-14);
    assert_relative_eq!(tr.events[1].time, 3.0, epsilon = 1e-14);
}

#[test]
fn single_bounce_follows_the_mirror_law() {
    let tr = flow(&PhasePoint::new(Vec3::new(0.5, 0.0, 3.0), -Vec3::z()), 5.0, &scene()).unwrap();
    assert_eq!(tr.reflection_count(), 1);
    let p = Vec3::new(0.5, 0.0, 0.75f64.sqrt());
    let ev = &tr.events[0];
    assert_relative_eq!(ev.hit.point, p, epsilon = 1e-14);
    assert_relative_eq!(ev.time, 3.0 - 0.75f64.sqrt(), epsilon = 1e-14);
    assert_relative_eq!(ev.outgoing, reflect(&-Vec3::z(), &p), epsilon = 1e-14);
}

#[test]
fn start_inside_is_rejected() {
    assert!(flow(&PhasePoint::new(Vec3::zeros(), Vec3::z()), 1.0, &scene()).is_err());
    assert!(flow(&PhasePoint::new(Vec3::new(0.0, 0.0, 2.0), Vec3::z()), -1.0, &scene()).is_err());
}

#[test]
fn backward_flow_retraces_the_axis() {
    let tr = flow_backward(&PhasePoint::new(Vec3::new(0.0, 0.0, 2.0), Vec3::z()), 1.5, &scene()).unwrap();
    // Backwards along −e to Θ1 at time 1, then back up half a unit.
    assert_relative_eq!(tr.end.x, Vec3::new(0.0, 0.0, 1.5), epsilon = 1e-14);
    assert_relative_eq!(tr.end.xi, -Vec3::z(), epsilon = 1e-14);
}

#[test]
fn empty_story_ignores_obstacles() {
    let x = Vec3::new(0.0, 0.0, 5.5);
    let xi = Vec3::new(0.0, 0.0, 1.0);
    let tr = modified_flow(&PhasePoint::new(x, xi), 2.0, &Story::empty(), &scene()).unwrap();
    assert_eq!(tr.end.x, x - xi * 4.0);
    assert!(tr.events.is_empty());
}

#[test]
fn remaining_story_examples() {
    let s = scene();
    let pp = PhasePoint::new(Vec3::new(0.0, 0.0, 2.0), -Vec3::z());
    let j = story(&[1, 2]);
    assert_eq!(remaining_story(&pp, 0.0, &j, &s).unwrap(), j);
    // Backwards from z = 2 the Θ2 bounce happens after length 1, the Θ1 one after 3.
    assert_eq!(remaining_story(&pp, 1.0, &j, &s).unwrap(), story(&[1]));
    assert_eq!(remaining_story(&pp, 2.0, &j, &s).unwrap(), Story::empty());
}

#[test]
fn stories_must_alternate() {
    assert!(Story::new(vec![1, 1]).is_err());
    assert!(Story::new(vec![3]).is_err());
    assert_eq!(Story::alternating(2, 3), story(&[2, 1, 2]));
    assert_eq!(story(&[2, 1, 2]).to_string(), "(2,1,2)");
    assert_eq!(story(&[1, 2, 1, 2]).prefix(2), story(&[1, 2]));
}

#[test]
fn sweep_invariants() {
    let r = invariant_sweep(&scene(), 2000, 11, 2.0);
    assert!(r.max_energy_error <= 1e-12, "{r:?}");
    assert!(r.max_reversal_error <= 1e-8, "{r:?}");
    assert_eq!(r.count_violations, 0);
    assert!(r.indeterminate < 10);
}

#[test]
fn sweep_is_deterministic() {
    assert_eq!(invariant_sweep(&scene(), 300, 5, 1.0), invariant_sweep(&scene(), 300, 5, 1.0));
}

fn exterior_start() -> impl Strategy<Value = PhasePoint> {
    (-3.0f64..3.0, -3.0f64..3.0, -2.0f64..6.0, 0.0f64..1.0, 0.0f64..std::f64::consts::TAU, 0.25f64..1.25)
        .prop_filter_map("start inside an obstacle", |(x, y, z, u, ph, speed)| {
            let p = Vec3::new(x, y, z);
            let ct = 2.0 * u - 1.0;
            let st = (1.0 - ct * ct).sqrt();
            let xi = Vec3::new(st * ph.cos(), st * ph.sin(), ct) * speed;
            scene().is_exterior(&p).then_some(PhasePoint::new(p, xi))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn reflection_is_an_isometric_involution(
        a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0, th in 0.0f64..3.1, ph in 0.0f64..6.2,
    ) {
        let xi = Vec3::new(a, b, c);
        let n = Vec3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos());
        let r = reflect(&xi, &n);
        prop_assert!((r.norm() - xi.norm()).abs() <= 1e-14 * (1.0 + xi.norm()));
        prop_assert!((reflect(&r, &n) - xi).norm() <= 1e-14 * (1.0 + xi.norm()));
        prop_assert!((r.dot(&n) + xi.dot(&n)).abs() <= 1e-14 * (1.0 + xi.norm()));
    }

    #[test]
    fn flow_conserves_energy_and_reverses(pp in exterior_start(), t in 0.1f64..20.0) {
        let s = scene();
        if let Ok(fwd) = flow(&pp, t, &s) {
            prop_assert!((fwd.end.xi.norm() / pp.xi.norm() - 1.0).abs() <= 1e-13);
            if let Ok(back) = flow(&fwd.end.reversed(), t, &s) {
                prop_assert!(back.end.reversed().distance(&pp) <= 1e-8);
            }
        }
    }

    #[test]
    fn reflection_count_is_bounded(pp in exterior_start(), t in 2.0f64..40.0) {
        let s = scene();
        if let Ok(tr) = flow(&pp, t, &s) {
            prop_assert!(tr.reflection_count() as f64 <= 2.0 * s.beta0 * t / s.d);
            for w in tr.story.as_slice().windows(2) {
                prop_assert_ne!(w[0], w[1]);
            }
        }
    }

    #[test]
    fn flow_is_a_semigroup(pp in exterior_start(), a in 0.0f64..6.0, b in 0.0f64..6.0) {
        let s = scene();
        if let (Ok(whole), Ok(first)) = (flow(&pp, a + b, &s), flow(&pp, a, &s)) {
            if let Ok(second) = flow(&first.end, b, &s) {
                prop_assert!(whole.end.distance(&second.end) <= 1e-9);
            }
        }
    }
}

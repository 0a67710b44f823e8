use mixcon::cq::ErrorBoundOptions;
use mixcon::expr::EvalPoint;
use mixcon::model::{ProblemSpec, Radius, Trajectory};
use mixcon::setmap::{certify_gamma_pl, estimate_bounded_slope, estimate_pl_modulus, RadiusProfile, SamplingOptions};
use proptest::prelude::*;
use serde_json::Value;

fn fixture(name: &str) -> Value {
    let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

/// Forward-Euler trajectory of `ps` under the control law `u_k = law(x_k)`.
fn euler(ps: &ProblemSpec, n_int: usize, law: impl Fn(f64) -> f64) -> Trajectory<f64> {
    let grid = Trajectory::<f64>::uniform_grid(ps.t0, ps.t1, n_int);
    let (mut x, mut u) = (vec![vec![0.0]], Vec::new());
    for k in 0..n_int {
        let uk = vec![law(x[k][0])];
        let v = ps.dynamics(&EvalPoint::new(grid[k], x[k].clone(), uk.clone())).unwrap();
        x.push(vec![x[k][0] + (grid[k + 1] - grid[k]) * v[0]]);
        u.push(uk);
    }
    Trajectory { grid, x, u }
}

fn small() -> SamplingOptions {
    SamplingOptions { samples: 12, seed: 0, starts: 4, halfwidth: 5.0 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn certified_gamma_has_a_finite_modulus(
        idx in 0usize..4,
        x in -0.5..0.5f64,
        seed in any::<u64>(),
    ) {
        let (name, u) = [("exampleA.json", vec![0.3]), ("exampleB.json", vec![0.0]), ("constant_map.json", vec![0.0]), ("shifted_box.json", vec![0.0])][idx].clone();
        let ps = ProblemSpec::from_json_value(&fixture(name)).unwrap();
        let z = EvalPoint::new(0.0, vec![x], u.clone());
        let cert = certify_gamma_pl(&ps, &z, &ErrorBoundOptions::default()).unwrap();
        prop_assert!(cert.holds, "{name}");
        let v = ps.dynamics(&z).unwrap();
        let opts = SamplingOptions { seed, ..small() };
        let est = estimate_pl_modulus(&ps, 0.0, &[x], &v, 0.1, 1.0, &u, &opts).unwrap();
        prop_assert!(est.k_hat.is_finite() && est.k_hat >= 0.0);
        prop_assert!(est.pairs + est.empty == opts.samples);
    }

    #[test]
    fn bounded_slope_verdict_ignores_inequality_scaling(c in prop_oneof![Just(0.25), Just(0.5), Just(3.0), Just(10.0)], seed in 0u64..1000) {
        for (name, law) in [("exampleB.json", (|x: f64| x + 1.0) as fn(f64) -> f64), ("pure_state.json", |_| 0.0)] {
            let mut doc = fixture(name);
            let g0 = doc["g"][0].as_str().unwrap().to_string();
            let ps = ProblemSpec::from_json_value(&doc).unwrap();
            doc["g"][0] = Value::String(format!("({c})*({g0})"));
            let scaled = ProblemSpec::from_json_value(&doc).unwrap();
            let traj = euler(&ps, 8, law);
            let radius = RadiusProfile::new(Radius::Infinite, traj.grid.len()).unwrap();
            let opts = SamplingOptions { seed, ..small() };
            let a = estimate_bounded_slope(&ps, &traj, 0.1, &radius, &opts).unwrap();
            let b = estimate_bounded_slope(&scaled, &traj, 0.1, &radius, &opts).unwrap();
            prop_assert_eq!(a.bounded, b.bounded, "{}", name);
            prop_assert_eq!(a.bounded, name == "exampleB.json");
        }
    }
}

#[test]
fn pure_state_slope_has_a_witness() {
    let ps = ProblemSpec::from_json_value(&fixture("pure_state.json")).unwrap();
    let traj = euler(&ps, 8, |_| 0.0);
    let radius = RadiusProfile::new(Radius::Infinite, traj.grid.len()).unwrap();
    let s = estimate_bounded_slope(&ps, &traj, 0.1, &radius, &small()).unwrap();
    assert!(!s.bounded && s.k_hat.is_infinite());
    assert!(s.witness.is_some());
}

use mixcon::numkernel::{cone_membership, nnls, numeric_rank, positive_linear_dependence, ConeDescription, LinearProgram, LpStatus, Mat, RowSense};
use proptest::prelude::*;

/// Smallest `‖Σ c_i v_i‖∞` over coefficient vectors with `Σ|c_i| = 1` on a
/// grid of step `1/steps`, signed members restricted to `c_i ≥ 0`.
fn grid_min_residual(vectors: &[Vec<f64>], signed: &[bool], steps: usize) -> f64 {
    let k = vectors.len();
    let dim = vectors[0].len();
    let mut best = f64::INFINITY;
    let mut parts = vec![0usize; k];
    fn compositions(i: usize, left: usize, parts: &mut Vec<usize>, out: &mut dyn FnMut(&[usize])) {
        if i + 1 == parts.len() {
            parts[i] = left;
            out(parts);
            return;
        }
        for a in 0..=left {
            parts[i] = a;
            compositions(i + 1, left - a, parts, out);
        }
    }
    compositions(0, steps, &mut parts, &mut |w: &[usize]| {
        let free: Vec<usize> = (0..k).filter(|&i| !signed[i] && w[i] > 0).collect();
        for mask in 0..(1usize << free.len()) {
            let mut sum = vec![0.0; dim];
            for i in 0..k {
                let mut c = w[i] as f64 / steps as f64;
                if let Some(pos) = free.iter().position(|&f| f == i) {
                    if mask >> pos & 1 == 1 {
                        c = -c;
                    }
                }
                for d in 0..dim {
                    sum[d] += c * vectors[i][d];
                }
            }
            best = best.min(sum.iter().fold(0.0f64, |a, &v| a.max(v.abs())));
        }
    });
    best
}

/// Random integer families; when `plant` is set the last member closes a
/// strictly positive combination, so the family is dependent by construction.
fn family() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<bool>, bool)> {
    (1usize..=4, prop::collection::vec(prop::collection::vec(-2i32..=2, 3), 4), prop::collection::vec(any::<bool>(), 4), prop::collection::vec(1usize..=6, 4), any::<bool>()).prop_map(
        |(k, raw, signs, weights, plant)| {
            let mut v: Vec<Vec<f64>> = raw[..k].iter().map(|r| r.iter().map(|&c| c as f64).collect()).collect();
            if plant && k >= 2 {
                let w = &weights[..k];
                let mut last = [0.0; 3];
                for i in 0..k - 1 {
                    for d in 0..3 {
                        last[d] -= w[i] as f64 * v[i][d];
                    }
                }
                v[k - 1] = last.iter().map(|&c| c / w[k - 1] as f64).collect();
            }
            (v, signs[..k].to_vec(), plant && k >= 2)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn positive_dependence_matches_grid(fam in family()) {
        let (vectors, signed, planted) = fam;
        let k = vectors.len();
        let steps = match k { 1 | 2 => 120, 3 => 60, _ => 20 };
        let grid = grid_min_residual(&vectors, &signed, steps);
        // Rounding an exact dependency to the grid moves each weight by less
        // than 1/steps, so a dependent family has grid residual below `slack`.
        let vmax = vectors.iter().flatten().fold(0.0f64, |a, &c| a.max(c.abs()));
        let slack = k as f64 / steps as f64 * vmax;
        let expected = if planted || grid <= 1e-9 {
            true
        } else if grid > slack {
            false
        } else {
            // Ambiguous band: the grid cannot decide.
            prop_assume!(false);
            unreachable!()
        };
        let s: Vec<Vec<f64>> = vectors.iter().zip(&signed).filter(|(_, &sg)| sg).map(|(v, _)| v.clone()).collect();
        let f: Vec<Vec<f64>> = vectors.iter().zip(&signed).filter(|(_, &sg)| !sg).map(|(v, _)| v.clone()).collect();
        let dep = positive_linear_dependence(&s, &f).unwrap();
        prop_assert_eq!(dep.dependent, expected, "grid residual {}", grid);
        if dep.dependent {
            let mut sum = [0.0; 3];
            for (v, &a) in s.iter().zip(&dep.alpha) {
                prop_assert!(a >= -1e-12);
                for d in 0..3 { sum[d] += a * v[d]; }
            }
            for (v, &b) in f.iter().zip(&dep.beta) {
                for d in 0..3 { sum[d] += b * v[d]; }
            }
            let norm: f64 = dep.alpha.iter().chain(&dep.beta).map(|c| c.abs()).sum();
            prop_assert!(norm > 1e-9);
            prop_assert!(sum.iter().all(|c| c.abs() <= 1e-8 * norm));
        }
    }

    #[test]
    fn lp_strong_duality(
        a in prop::collection::vec(prop::collection::vec(1u32..=9, 3), 2..=4),
        b in prop::collection::vec(1u32..=20, 4),
        c in prop::collection::vec(-3i32..=5, 3),
    ) {
        // max cᵀx s.t. A x ≤ b, x ≥ 0 with A > 0, b > 0: feasible and bounded.
        let rows = a.len();
        let am: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        let bv: Vec<f64> = b[..rows].iter().map(|&v| v as f64).collect();
        let cv: Vec<f64> = c.iter().map(|&v| v as f64).collect();
        let mut primal = LinearProgram::new(3).maximize(cv.clone());
        for (r, &rhs) in am.iter().zip(&bv) {
            primal.push_row(r.clone(), RowSense::Le, rhs);
        }
        let mut dual = LinearProgram::new(rows).minimize(bv.clone());
        for j in 0..3 {
            dual.push_row(am.iter().map(|r| r[j]).collect(), RowSense::Ge, cv[j]);
        }
        let (p, d) = (primal.solve().unwrap(), dual.solve().unwrap());
        prop_assert_eq!(p.status, LpStatus::Optimal);
        prop_assert_eq!(d.status, LpStatus::Optimal);
        prop_assert!((p.objective - d.objective).abs() <= 1e-8 * (1.0 + p.objective.abs()), "{} vs {}", p.objective, d.objective);
        prop_assert!(primal.violation(&p.x) <= 1e-9 && dual.violation(&d.x) <= 1e-9);
    }

    #[test]
    fn rank_ignores_row_order_and_power_of_two_scaling(
        basis in prop::collection::vec(prop::collection::vec(-3i32..=3, 5), 1..=4),
        mix in prop::collection::vec(prop::collection::vec(-2i32..=2, 4), 6),
        shifts in prop::collection::vec(-8i32..=8, 6),
        perm_seed in any::<u64>(),
    ) {
        let rows: Vec<Vec<f64>> = mix.iter().map(|w| {
            (0..5).map(|c| basis.iter().zip(w).map(|(b, &wi)| b[c] as f64 * wi as f64).sum()).collect()
        }).collect();
        let r0 = numeric_rank(&Mat::from_rows(&rows), 1e-8);
        let mut order: Vec<usize> = (0..rows.len()).collect();
        let mut s = perm_seed;
        for i in (1..order.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let scaled: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].iter().map(|&v| v * 2f64.powi(shifts[i])).collect()).collect();
        prop_assert_eq!(r0, numeric_rank(&Mat::from_rows(&scaled), 1e-8));
        prop_assert!(r0 <= basis.len());
    }

    #[test]
    fn nnls_recovers_planted_solutions(
        a in prop::collection::vec(prop::collection::vec(-5i32..=5, 3), 5),
        x in prop::collection::vec(0u32..=4, 3),
    ) {
        let am: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        let mx = Mat::from_rows(&am);
        prop_assume!(numeric_rank(&mx, 1e-8) == 3);
        let xv: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let b = mx.mul_vec(&xv);
        let sol = nnls(&mx, &b).unwrap();
        prop_assert!(sol.residual < 1e-9 && sol.kkt < 1e-9);
        for (got, want) in sol.x.iter().zip(&xv) {
            prop_assert!((got - want).abs() < 1e-8);
        }
    }

    #[test]
    fn nnls_kkt_on_arbitrary_data(
        a in prop::collection::vec(prop::collection::vec(-5i32..=5, 4), 1..=6),
        b in prop::collection::vec(-5i32..=5, 6),
    ) {
        let am: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        let bv: Vec<f64> = b[..am.len()].iter().map(|&v| v as f64).collect();
        let sol = nnls(&Mat::from_rows(&am), &bv).unwrap();
        prop_assert!(sol.x.iter().all(|&v| v >= 0.0));
        prop_assert!(sol.kkt <= 1e-10 * (1.0 + bv.iter().map(|v| v.abs()).sum::<f64>()) * 25.0);
    }

    #[test]
    fn cone_certificates_reproduce_the_vector(
        gens in prop::collection::vec(prop::collection::vec(-3i32..=3, 3), 0..=4),
        span in prop::collection::vec(prop::collection::vec(-3i32..=3, 3), 0..=1),
        v in prop::collection::vec(-4i32..=4, 3),
    ) {
        let f = |m: &Vec<Vec<i32>>| -> Vec<Vec<f64>> { m.iter().map(|r| r.iter().map(|&c| c as f64).collect()).collect() };
        let (gv, sv) = (f(&gens), f(&span));
        let vv: Vec<f64> = v.iter().map(|&c| c as f64).collect();
        let m = cone_membership(&vv, &ConeDescription::new(gv.clone(), sv.clone())).unwrap();
        if m.member {
            let mut sum = [0.0; 3];
            for (g, &l) in gv.iter().zip(&m.lambda) {
                prop_assert!(l >= -1e-12);
                for d in 0..3 { sum[d] += l * g[d]; }
            }
            for (s, &mu) in sv.iter().zip(&m.mu) {
                for d in 0..3 { sum[d] += mu * s[d]; }
            }
            prop_assert!(sum.iter().zip(&vv).all(|(a, b)| (a - b).abs() <= 1e-8));
        }
    }
}

#[test]
fn worked_examples() {
    let dep = positive_linear_dependence::<f64>(&[], &[vec![1.0, 1.0, -1.0], vec![2.0, 2.0, -2.0]]).unwrap();
    assert!(dep.dependent);
    assert!((dep.beta[0] / dep.beta[1] + 2.0).abs() < 1e-9);
    assert!(!positive_linear_dependence::<f64>(&[vec![1.0, 0.0]], &[]).unwrap().dependent);
    assert!(positive_linear_dependence::<f64>(&[vec![1.0, 0.0], vec![-1.0, 0.0]], &[]).unwrap().dependent);
    let rows = vec![vec![1.0, 1.0, -1.0], vec![2.0, 2.0, -2.0]];
    assert_eq!(numeric_rank(&Mat::from_rows(&rows), 1e-8), 1);
    assert_eq!(numeric_rank(&Mat::<f64>::identity(3), 1e-8), 3);
    assert_eq!(numeric_rank(&Mat::<f64>::zeros(3, 3), 1e-8), 0);
    let m = cone_membership(&[0.0f64, 1.0], &ConeDescription::new(vec![vec![1.0, 1.0], vec![-1.0, 1.0]], vec![])).unwrap();
    assert!(m.member && (m.lambda[0] - 0.5).abs() < 1e-12 && (m.lambda[1] - 0.5).abs() < 1e-12);
}

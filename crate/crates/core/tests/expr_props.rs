use mixcon::expr::{BinaryOp, EvalPoint, ExprAst, Node, UnaryOp, Var, DEFAULT_TIE_TOL};
use proptest::prelude::*;

const N: usize = 2;
const M: usize = 2;

fn leaf() -> impl Strategy<Value = Node> {
    prop_oneof![
        (-3i32..=3).prop_map(|c| Node::Const(c as f64 * 0.5)),
        Just(Node::Var(Var::T)),
        (0..N).prop_map(|i| Node::Var(Var::X(i))),
        (0..M).prop_map(|j| Node::Var(Var::U(j))),
    ]
}

/// Smooth trees over `+ − * ^`, `sin`, `cos`, `exp`, unary minus.
fn smooth_tree() -> impl Strategy<Value = Node> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Node::Binary(BinaryOp::Add, Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Node::Binary(BinaryOp::Sub, Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Node::Binary(BinaryOp::Mul, Box::new(a), Box::new(b))),
            (inner.clone(), 1u32..=3).prop_map(|(a, k)| Node::Pow(Box::new(a), k)),
            inner.clone().prop_map(|a| Node::Unary(UnaryOp::Sin, Box::new(a))),
            inner.clone().prop_map(|a| Node::Unary(UnaryOp::Cos, Box::new(a))),
            inner.clone().prop_map(|a| Node::Unary(UnaryOp::Neg, Box::new(a))),
        ]
    })
}

fn any_tree() -> impl Strategy<Value = Node> {
    smooth_tree().prop_recursive(2, 32, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Node::Binary(BinaryOp::Max, Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Node::Binary(BinaryOp::Min, Box::new(a), Box::new(b))),
            inner.clone().prop_map(|a| Node::Unary(UnaryOp::Abs, Box::new(a))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Node::Binary(BinaryOp::Add, Box::new(a), Box::new(b))),
        ]
    })
}

fn point() -> impl Strategy<Value = EvalPoint<f64>> {
    (-1.0..1.0f64, prop::collection::vec(-1.0..1.0f64, N), prop::collection::vec(-1.0..1.0f64, M)).prop_map(|(t, x, u)| EvalPoint::new(t, x, u))
}

fn shifted(p: &EvalPoint<f64>, slot: usize, d: f64) -> EvalPoint<f64> {
    let mut q = p.clone();
    match slot {
        0 => q.t += d,
        s if s <= N => q.x[s - 1] += d,
        s => q.u[s - 1 - N] += d,
    }
    q
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn gradient_matches_central_differences(tree in smooth_tree(), p in point()) {
        let e = ExprAst::from_node(tree, N, M).unwrap();
        let g = e.gradient(&p).unwrap();
        prop_assert!(!g.nondifferentiable);
        for slot in 0..1 + N + M {
            let fd = (e.evaluate(&shifted(&p, slot, 1e-6)).unwrap() - e.evaluate(&shifted(&p, slot, -1e-6)).unwrap()) / 2e-6;
            let scale = 1.0f64.max(g.grad[slot].abs()).max(g.value.abs());
            prop_assert!((fd - g.grad[slot]).abs() <= 1e-5 * scale, "slot {slot}: fd {fd} vs {} for {e}", g.grad[slot]);
        }
    }

    #[test]
    fn parse_print_parse_is_stable(tree in any_tree()) {
        let text = ExprAst::from_node(tree, N, M).unwrap().to_string();
        let a = ExprAst::parse(&text, N, M).unwrap();
        let b = ExprAst::parse(&a.to_string(), N, M).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn printed_form_evaluates_identically(tree in any_tree(), p in point()) {
        let e = ExprAst::from_node(tree, N, M).unwrap();
        let back = ExprAst::parse(&e.to_string(), N, M).unwrap();
        let (a, b) = (e.evaluate(&p).unwrap(), back.evaluate(&p).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
    }

    #[test]
    fn clarke_set_at_smooth_point_is_the_gradient(tree in smooth_tree(), p in point()) {
        let e = ExprAst::from_node(tree, N, M).unwrap();
        let gs = e.clarke_generators(&p, DEFAULT_TIE_TOL).unwrap();
        prop_assert!(gs.is_singleton() && gs.exact);
        prop_assert_eq!(&gs.vectors[0], &e.gradient(&p).unwrap().grad);
    }

    #[test]
    fn gradient_is_a_clarke_generator(tree in any_tree(), p in point()) {
        let e = ExprAst::from_node(tree, N, M).unwrap();
        let g = e.gradient(&p).unwrap();
        let gs = e.clarke_generators(&p, DEFAULT_TIE_TOL).unwrap();
        prop_assert!(gs.vectors.iter().any(|v| v.iter().zip(&g.grad).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + b.abs()))));
    }

    #[test]
    fn depends_on_matches_syntax(tree in any_tree()) {
        let e = ExprAst::from_node(tree.clone(), N, M).unwrap();
        for v in [Var::T, Var::X(0), Var::X(1), Var::U(0), Var::U(1)] {
            prop_assert_eq!(e.depends_on(v), tree.contains_var(v));
        }
    }
}

#[test]
fn worked_values() {
    let p = EvalPoint::new(0.0, vec![1.0], vec![2.0, 3.0]);
    let e = ExprAst::parse("2*x1 + 2*u1 - 2*u2", 1, 2).unwrap();
    assert_eq!(e.evaluate(&p).unwrap(), 0.0);
    assert_eq!(ExprAst::parse("x1 + u1 - u2", 1, 2).unwrap().gradient(&p).unwrap().grad, vec![0.0, 1.0, 1.0, -1.0]);
    let q = EvalPoint::new(0.0, vec![-1.0], vec![]);
    let mx = ExprAst::parse("max(x1, 2*x1)", 1, 0).unwrap();
    assert_eq!(mx.gradient(&q).unwrap().grad[1], 1.0);
    let ab = ExprAst::parse("abs(x1)", 1, 0).unwrap();
    assert_eq!(ab.evaluate(&EvalPoint::new(0.0, vec![-2.0], vec![])).unwrap(), 2.0);
    let gs = ab.clarke_generators(&EvalPoint::new(0.0, vec![0.0], vec![]), 1e-9).unwrap();
    assert_eq!(gs.len(), 2);
    assert!(gs.exact);
    assert!(ExprAst::parse("log(x1)", 1, 0).unwrap().evaluate(&EvalPoint::new(0.0, vec![-1.0], vec![])).is_err());
}

use serde::Serialize;

use super::{BinaryOp, GeneratorSet, Node, UnaryOp, Var};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default absolute tolerance for detecting `max`/`min`/`abs` ties.
pub const DEFAULT_TIE_TOL: f64 = 1e-9;

/// Upper bound on the number of generators carried through composition.
const MAX_GENERATORS: usize = 4096;

/// Value and `(t, x, u)` gradient of the active smooth branch.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct Gradient<T: Real> {
    pub value: T,
    pub grad: Vec<T>,
    /// Set when a `max`/`min` tie or an `abs` kink lies within the tie
    /// tolerance of the evaluation point.
    pub nondifferentiable: bool,
}

impl<T: Real> Gradient<T> {
    pub fn dt(&self) -> T {
        self.grad[0]
    }

    /// `(x, u)` part.
    pub fn z(&self) -> &[T] {
        &self.grad[1..]
    }
}

fn lookup<T: Real>(v: Var, t: T, x: &[T], u: &[T]) -> Result<T> {
    match v {
        Var::T => Ok(t),
        Var::X(i) => x.get(i).copied().ok_or_else(|| Error::Dimension(format!("x{} not supplied", i + 1))),
        Var::U(j) => u.get(j).copied().ok_or_else(|| Error::Dimension(format!("u{} not supplied", j + 1))),
    }
}

fn check<T: Real>(v: T, what: &str) -> Result<T> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain(format!("{what} produced a non-finite value")))
    }
}

fn apply_unary<T: Real>(op: UnaryOp, a: T) -> Result<T> {
    match op {
        UnaryOp::Neg => Ok(-a),
        UnaryOp::Sin => Ok(a.sin()),
        UnaryOp::Cos => Ok(a.cos()),
        UnaryOp::Exp => check(a.exp(), "exp"),
        UnaryOp::Log => {
            if a <= T::zero() {
                Err(Error::Domain(format!("log of non-positive value {a}")))
            } else {
                Ok(a.ln())
            }
        }
        UnaryOp::Abs => Ok(a.abs()),
    }
}

fn apply_binary<T: Real>(op: BinaryOp, a: T, b: T) -> Result<T> {
    match op {
        BinaryOp::Add => check(a + b, "addition"),
        BinaryOp::Sub => check(a - b, "subtraction"),
        BinaryOp::Mul => check(a * b, "multiplication"),
        BinaryOp::Div => {
            if b == T::zero() {
                Err(Error::Domain("division by zero".into()))
            } else {
                check(a / b, "division")
            }
        }
        BinaryOp::Max => Ok(if a >= b { a } else { b }),
        BinaryOp::Min => Ok(if a <= b { a } else { b }),
    }
}

fn powi<T: Real>(a: T, k: u32) -> Result<T> {
    let v = if k <= i32::MAX as u32 { a.powi(k as i32) } else { a.powf(T::of(k as usize)) };
    check(v, "power")
}

pub(super) fn value<T: Real>(node: &Node, t: T, x: &[T], u: &[T]) -> Result<T> {
    match node {
        Node::Const(c) => Ok(T::lit(*c)),
        Node::Var(v) => lookup(*v, t, x, u),
        Node::Unary(op, a) => apply_unary(*op, value(a, t, x, u)?),
        Node::Binary(op, a, b) => apply_binary(*op, value(a, t, x, u)?, value(b, t, x, u)?),
        Node::Pow(a, k) => powi(value(a, t, x, u)?, *k),
    }
}

/// Derivative of a smooth unary op at `a` (value already known to be valid).
fn unary_slope<T: Real>(op: UnaryOp, a: T) -> T {
    match op {
        UnaryOp::Neg => -T::one(),
        UnaryOp::Sin => a.cos(),
        UnaryOp::Cos => -a.sin(),
        UnaryOp::Exp => a.exp(),
        UnaryOp::Log => T::one() / a,
        UnaryOp::Abs => {
            if a >= T::zero() {
                T::one()
            } else {
                -T::one()
            }
        }
    }
}

fn pow_slope<T: Real>(a: T, k: u32) -> T {
    match k {
        0 => T::zero(),
        1 => T::one(),
        _ => T::of(k as usize) * a.powi(k as i32 - 1),
    }
}

struct Dual<T> {
    v: T,
    d: Vec<T>,
    kink: bool,
}

pub(super) fn gradient<T: Real>(node: &Node, t: T, x: &[T], u: &[T], tie_tol: T) -> Result<Gradient<T>> {
    let dim = 1 + x.len() + u.len();
    let d = dual(node, t, x, u, tie_tol, dim)?;
    Ok(Gradient { value: d.v, grad: d.d, nondifferentiable: d.kink })
}

fn dual<T: Real>(node: &Node, t: T, x: &[T], u: &[T], tol: T, dim: usize) -> Result<Dual<T>> {
    Ok(match node {
        Node::Const(c) => Dual { v: T::lit(*c), d: vec![T::zero(); dim], kink: false },
        Node::Var(var) => {
            let mut d = vec![T::zero(); dim];
            d[var.slot(x.len())] = T::one();
            Dual { v: lookup(*var, t, x, u)?, d, kink: false }
        }
        Node::Unary(op, a) => {
            let a = dual(a, t, x, u, tol, dim)?;
            let v = apply_unary(*op, a.v)?;
            let s = unary_slope(*op, a.v);
            let kink = a.kink || (*op == UnaryOp::Abs && a.v.abs() <= tol);
            Dual { v, d: a.d.iter().map(|&g| g * s).collect(), kink }
        }
        Node::Pow(a, k) => {
            let a = dual(a, t, x, u, tol, dim)?;
            let s = pow_slope(a.v, *k);
            Dual { v: powi(a.v, *k)?, d: a.d.iter().map(|&g| g * s).collect(), kink: a.kink }
        }
        Node::Binary(op, a, b) => {
            let a = dual(a, t, x, u, tol, dim)?;
            let b = dual(b, t, x, u, tol, dim)?;
            let v = apply_binary(*op, a.v, b.v)?;
            let kink = a.kink || b.kink;
            match op {
                BinaryOp::Add => Dual { v, d: zip(&a.d, &b.d, |p, q| p + q), kink },
                BinaryOp::Sub => Dual { v, d: zip(&a.d, &b.d, |p, q| p - q), kink },
                BinaryOp::Mul => Dual { v, d: zip(&a.d, &b.d, |p, q| p * b.v + a.v * q), kink },
                BinaryOp::Div => {
                    let inv = T::one() / b.v;
                    Dual { v, d: zip(&a.d, &b.d, |p, q| (p - v * q) * inv), kink }
                }
                BinaryOp::Max | BinaryOp::Min => {
                    let tie = (a.v - b.v).abs() <= tol;
                    let first = if *op == BinaryOp::Max { a.v >= b.v } else { a.v <= b.v };
                    let d = if first { a.d } else { b.d };
                    Dual { v, d, kink: kink || tie }
                }
            }
        }
    })
}

fn zip<T: Real>(a: &[T], b: &[T], f: impl Fn(T, T) -> T) -> Vec<T> {
    a.iter().zip(b).map(|(&p, &q)| f(p, q)).collect()
}

struct Branches<T> {
    v: T,
    grads: Vec<Vec<T>>,
    exact: bool,
}

pub(super) fn generators<T: Real>(node: &Node, t: T, x: &[T], u: &[T], tie_tol: T) -> Result<GeneratorSet<T>> {
    let dim = 1 + x.len() + u.len();
    let b = branches(node, t, x, u, tie_tol, dim)?;
    Ok(GeneratorSet { vectors: b.grads, exact: b.exact })
}

fn dedup<T: Real>(mut grads: Vec<Vec<T>>) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = Vec::with_capacity(grads.len());
    for g in grads.drain(..) {
        let dup = out.iter().any(|h| {
            h.iter().zip(&g).all(|(&p, &q)| (p - q).abs() <= T::lit(1e-14) * (T::one() + p.abs().max(q.abs())))
        });
        if !dup {
            out.push(g);
        }
    }
    out
}

fn product<T: Real>(a: &Branches<T>, b: &Branches<T>, f: impl Fn(T, T) -> T) -> (Vec<Vec<T>>, bool) {
    let mut out = Vec::with_capacity(a.grads.len() * b.grads.len());
    let mut capped = false;
    'outer: for ga in &a.grads {
        for gb in &b.grads {
            if out.len() >= MAX_GENERATORS {
                capped = true;
                break 'outer;
            }
            out.push(zip(ga, gb, &f));
        }
    }
    (dedup(out), capped)
}

fn branches<T: Real>(node: &Node, t: T, x: &[T], u: &[T], tol: T, dim: usize) -> Result<Branches<T>> {
    Ok(match node {
        Node::Const(c) => Branches { v: T::lit(*c), grads: vec![vec![T::zero(); dim]], exact: true },
        Node::Var(var) => {
            let mut d = vec![T::zero(); dim];
            d[var.slot(x.len())] = T::one();
            Branches { v: lookup(*var, t, x, u)?, grads: vec![d], exact: true }
        }
        Node::Unary(UnaryOp::Abs, a) => {
            let a = branches(a, t, x, u, tol, dim)?;
            let v = a.v.abs();
            if a.v.abs() <= tol {
                let single = a.grads.len() == 1;
                let mut grads = a.grads.clone();
                grads.extend(a.grads.iter().map(|g| g.iter().map(|&p| -p).collect::<Vec<_>>()));
                Branches { v, grads: dedup(grads), exact: a.exact && single }
            } else {
                let s = unary_slope(UnaryOp::Abs, a.v);
                let grads = a.grads.iter().map(|g| g.iter().map(|&p| p * s).collect()).collect();
                Branches { v, grads, exact: a.exact }
            }
        }
        Node::Unary(op, a) => {
            let a = branches(a, t, x, u, tol, dim)?;
            let v = apply_unary(*op, a.v)?;
            let s = unary_slope(*op, a.v);
            let grads = dedup(a.grads.iter().map(|g| g.iter().map(|&p| p * s).collect()).collect());
            Branches { v, grads, exact: a.exact }
        }
        Node::Pow(a, k) => {
            let a = branches(a, t, x, u, tol, dim)?;
            let s = pow_slope(a.v, *k);
            let grads = dedup(a.grads.iter().map(|g| g.iter().map(|&p| p * s).collect()).collect());
            Branches { v: powi(a.v, *k)?, grads, exact: a.exact }
        }
        Node::Binary(op, a, b) => {
            let a = branches(a, t, x, u, tol, dim)?;
            let b = branches(b, t, x, u, tol, dim)?;
            let v = apply_binary(*op, a.v, b.v)?;
            // sum/product rules are equalities when at most one side is nonsmooth here
            let one_sided = a.grads.len() == 1 || b.grads.len() == 1;
            let both_exact = a.exact && b.exact;
            match op {
                BinaryOp::Max | BinaryOp::Min => {
                    let tie = (a.v - b.v).abs() <= tol;
                    if tie {
                        let exact = both_exact && a.grads.len() == 1 && b.grads.len() == 1;
                        let mut grads = a.grads;
                        grads.extend(b.grads);
                        Branches { v, grads: dedup(grads), exact }
                    } else {
                        let first = if *op == BinaryOp::Max { a.v >= b.v } else { a.v <= b.v };
                        if first {
                            Branches { v, grads: a.grads, exact: a.exact }
                        } else {
                            Branches { v, grads: b.grads, exact: b.exact }
                        }
                    }
                }
                _ => {
                    let (av, bv) = (a.v, b.v);
                    let (grads, capped) = match op {
                        BinaryOp::Add => product(&a, &b, |p, q| p + q),
                        BinaryOp::Sub => product(&a, &b, |p, q| p - q),
                        BinaryOp::Mul => product(&a, &b, |p, q| p * bv + av * q),
                        _ => {
                            let inv = T::one() / bv;
                            product(&a, &b, |p, q| (p - v * q) * inv)
                        }
                    };
                    Branches { v, grads, exact: both_exact && one_sided && !capped }
                }
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use crate::expr::{EvalPoint, ExprAst};

    fn pt(x: &[f64], u: &[f64]) -> EvalPoint<f64> {
        EvalPoint::new(0.0, x.to_vec(), u.to_vec())
    }

    #[test]
    fn evaluates_examples() {
        let phi1 = ExprAst::parse("x1 + u1 - u2", 1, 2).unwrap();
        assert_eq!(phi1.evaluate(&pt(&[1.0], &[2.0, 3.0])).unwrap(), 0.0);
        let phi2 = ExprAst::parse("2*x1 + 2*u1 - 2*u2", 1, 2).unwrap();
        assert_eq!(phi2.evaluate(&pt(&[1.0], &[2.0, 3.0])).unwrap(), 0.0);
        let a = ExprAst::parse("abs(x1)", 1, 0).unwrap();
        assert_eq!(a.evaluate(&pt(&[-2.0], &[])).unwrap(), 2.0);
    }

    #[test]
    fn domain_errors_are_reported() {
        let e = ExprAst::parse("log(x1)", 1, 0).unwrap();
        assert!(e.evaluate(&pt(&[0.0], &[])).is_err());
        let e = ExprAst::parse("1 / x1", 1, 0).unwrap();
        assert!(e.evaluate(&pt(&[0.0], &[])).is_err());
        let e = ExprAst::parse("exp(x1)", 1, 0).unwrap();
        assert!(e.evaluate(&pt(&[1e6], &[])).is_err());
        let e = ExprAst::parse("x1", 1, 0).unwrap();
        assert!(e.evaluate(&pt(&[1.0, 2.0], &[])).is_err());
    }

    #[test]
    fn gradient_examples() {
        let phi1 = ExprAst::parse("x1 + u1 - u2", 1, 2).unwrap();
        let g = phi1.gradient(&pt(&[0.3], &[-1.0, 4.0])).unwrap();
        assert_eq!(g.grad, vec![0.0, 1.0, 1.0, -1.0]);
        assert!(!g.nondifferentiable);

        let sq = ExprAst::parse("x1^2", 1, 0).unwrap();
        assert_eq!(sq.gradient(&pt(&[3.0], &[])).unwrap().grad[1], 6.0);

        let mx = ExprAst::parse("max(x1, 2*x1)", 1, 0).unwrap();
        let g = mx.gradient(&pt(&[-1.0], &[])).unwrap();
        assert_eq!(g.grad[1], 1.0);
        assert_eq!(g.value, -1.0);
    }

    #[test]
    fn ties_pick_first_operand_and_flag() {
        let mx = ExprAst::parse("max(2*x1, x1)", 1, 0).unwrap();
        let g = mx.gradient(&pt(&[0.0], &[])).unwrap();
        assert_eq!(g.grad[1], 2.0);
        assert!(g.nondifferentiable);
        let mn = ExprAst::parse("min(x1, 2*x1)", 1, 0).unwrap();
        let g = mn.gradient(&pt(&[0.0], &[])).unwrap();
        assert_eq!(g.grad[1], 1.0);
        assert!(g.nondifferentiable);
    }

    #[test]
    fn generator_examples() {
        let a = ExprAst::parse("abs(x1)", 1, 1).unwrap();
        let g = a.clarke_generators(&pt(&[0.0], &[0.0]), 1e-9).unwrap();
        assert!(g.exact);
        assert_eq!(g.vectors, vec![vec![0.0, 1.0, 0.0], vec![0.0, -1.0, 0.0]]);

        let s = ExprAst::parse("x1 + u1", 1, 1).unwrap();
        let g = s.clarke_generators(&pt(&[0.4], &[7.0]), 1e-9).unwrap();
        assert!(g.exact);
        assert_eq!(g.vectors, vec![vec![0.0, 1.0, 1.0]]);

        let m = ExprAst::parse("max(u1, -u1)", 1, 1).unwrap();
        let g = m.clarke_generators(&pt(&[0.0], &[0.0]), 1e-9).unwrap();
        assert!(g.exact);
        assert_eq!(g.vectors, vec![vec![0.0, 0.0, 1.0], vec![0.0, 0.0, -1.0]]);
    }

    #[test]
    fn nested_kinks_are_overapproximate() {
        let e = ExprAst::parse("max(abs(x1), u1)", 1, 1).unwrap();
        let g = e.clarke_generators(&pt(&[0.0], &[0.0]), 1e-9).unwrap();
        assert!(!g.exact);
        assert_eq!(g.len(), 3);
        let e = ExprAst::parse("abs(x1) + abs(u1)", 1, 1).unwrap();
        let g = e.clarke_generators(&pt(&[0.0], &[0.0]), 1e-9).unwrap();
        assert!(!g.exact);
        assert_eq!(g.len(), 4);
        // one kink composed with smooth operations stays exact
        let e = ExprAst::parse("3*abs(x1) + u1^2", 1, 1).unwrap();
        let g = e.clarke_generators(&pt(&[0.0], &[1.0]), 1e-9).unwrap();
        assert!(g.exact);
        assert_eq!(g.len(), 2);
    }

    #[test]
    fn works_in_f32() {
        let e = ExprAst::parse("x1^2 + sin(u1)", 1, 1).unwrap();
        let p = EvalPoint::<f32>::new(0.0, vec![2.0], vec![0.0]);
        let g = e.gradient(&p).unwrap();
        assert_eq!(g.value, 4.0f32);
        assert_eq!(g.grad, vec![0.0f32, 4.0, 1.0]);
    }
}

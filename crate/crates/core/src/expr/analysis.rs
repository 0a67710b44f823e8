use super::{BinaryOp, Node, UnaryOp, Var};

/// `g(z) = phi(z) + b^T z` with `b` over `(x, u)` and the nonlinear
/// remainder kept as a list of signed terms.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineSplit {
    pub linear: Vec<f64>,
    pub remainder: Vec<Node>,
}

impl AffineSplit {
    /// True when some remainder term references `var`.
    pub fn remainder_depends_on(&self, var: Var) -> bool {
        self.remainder.iter().any(|t| t.contains_var(var))
    }

    pub fn remainder_is_smooth(&self) -> bool {
        self.remainder.iter().all(|t| !t.has_nonsmooth())
    }
}

pub(super) fn is_affine(node: &Node) -> bool {
    if !node.depends_on_state_or_control() {
        return true;
    }
    match node {
        Node::Const(_) | Node::Var(_) => true,
        Node::Unary(UnaryOp::Neg, a) => is_affine(a),
        Node::Unary(_, _) => false,
        Node::Binary(BinaryOp::Add | BinaryOp::Sub, a, b) => is_affine(a) && is_affine(b),
        Node::Binary(BinaryOp::Mul, a, b) => {
            (!a.depends_on_state_or_control() && is_affine(b)) || (!b.depends_on_state_or_control() && is_affine(a))
        }
        Node::Binary(BinaryOp::Div, a, b) => !b.depends_on_state_or_control() && is_affine(a),
        Node::Binary(_, _, _) => false,
        Node::Pow(a, k) => *k == 1 && is_affine(a),
    }
}

/// Evaluates a subtree that references no variables at all.
fn numeric(node: &Node) -> Option<f64> {
    match node {
        Node::Const(c) => Some(*c),
        Node::Var(_) => None,
        Node::Unary(op, a) => {
            let a = numeric(a)?;
            Some(match op {
                UnaryOp::Neg => -a,
                UnaryOp::Sin => a.sin(),
                UnaryOp::Cos => a.cos(),
                UnaryOp::Exp => a.exp(),
                UnaryOp::Log => a.ln(),
                UnaryOp::Abs => a.abs(),
            })
        }
        Node::Binary(op, a, b) => {
            let (a, b) = (numeric(a)?, numeric(b)?);
            Some(match op {
                BinaryOp::Add => a + b,
                BinaryOp::Sub => a - b,
                BinaryOp::Mul => a * b,
                BinaryOp::Div => a / b,
                BinaryOp::Max => a.max(b),
                BinaryOp::Min => a.min(b),
            })
        }
        Node::Pow(a, k) => Some(numeric(a)?.powi(*k as i32)),
    }
    .filter(|v| v.is_finite())
}

/// Recognizes `c * v`, `v * c`, `v / c`, `-v`, `v` with numeric `c`.
fn monomial(node: &Node) -> Option<(Var, f64)> {
    match node {
        Node::Var(v) if *v != Var::T => Some((*v, 1.0)),
        Node::Unary(UnaryOp::Neg, a) => monomial(a).map(|(v, c)| (v, -c)),
        Node::Pow(a, 1) => monomial(a),
        Node::Binary(BinaryOp::Mul, a, b) => {
            if let Some(c) = numeric(a) {
                monomial(b).map(|(v, k)| (v, c * k))
            } else if let Some(c) = numeric(b) {
                monomial(a).map(|(v, k)| (v, c * k))
            } else {
                None
            }
        }
        Node::Binary(BinaryOp::Div, a, b) => {
            let c = numeric(b)?;
            if c == 0.0 {
                return None;
            }
            monomial(a).map(|(v, k)| (v, k / c))
        }
        _ => None,
    }
}

fn flatten<'a>(node: &'a Node, sign: f64, out: &mut Vec<(f64, &'a Node)>) {
    match node {
        Node::Binary(BinaryOp::Add, a, b) => {
            flatten(a, sign, out);
            flatten(b, sign, out);
        }
        Node::Binary(BinaryOp::Sub, a, b) => {
            flatten(a, sign, out);
            flatten(b, -sign, out);
        }
        Node::Unary(UnaryOp::Neg, a) => flatten(a, -sign, out),
        other => out.push((sign, other)),
    }
}

pub(super) fn split_affine(node: &Node, n: usize, m: usize) -> Option<AffineSplit> {
    let mut terms = Vec::new();
    flatten(node, 1.0, &mut terms);
    let mut linear = vec![0.0; n + m];
    let mut remainder = Vec::new();
    for (sign, term) in terms {
        match monomial(term) {
            Some((Var::X(i), c)) => *linear.get_mut(i)? += sign * c,
            Some((Var::U(j), c)) => *linear.get_mut(n + j)? += sign * c,
            _ => remainder.push(if sign < 0.0 {
                Node::Unary(UnaryOp::Neg, Box::new(term.clone()))
            } else {
                term.clone()
            }),
        }
    }
    Some(AffineSplit { linear, remainder })
}

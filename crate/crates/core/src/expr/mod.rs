//! Expression language for problem data.
//!
//! Expressions are written in a small ASCII grammar over the identifiers
//! `t`, `x1..xn` and `u1..um`:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := ('-' | '+') unary | power
//! power  := atom ('^' INTEGER)?
//! atom   := NUMBER | IDENT | FUNC '(' expr (',' expr)* ')' | '(' expr ')'
//! FUNC   := sin | cos | exp | log | abs | max | min
//! ```
//!
//! Exponents are non-negative integer literals. `max` and `min` take two
//! arguments, every other function takes one.

mod analysis;
mod eval;
mod parse;

use std::fmt;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::Result;
use crate::scalar::Real;

pub use analysis::AffineSplit;
pub use eval::{Gradient, DEFAULT_TIE_TOL};

/// A variable reference. Indices are zero-based internally and printed
/// one-based (`X(0)` is `x1`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    T,
    X(usize),
    U(usize),
}

impl Var {
    /// Position of this variable in a `(t, x, u)` gradient of length `1+n+m`.
    pub fn slot(self, n: usize) -> usize {
        match self {
            Var::T => 0,
            Var::X(i) => 1 + i,
            Var::U(j) => 1 + n + j,
        }
    }

    /// Parses `t`, `x3`, `u1`, ... without range checks.
    pub fn from_name(name: &str) -> Option<Var> {
        if name == "t" {
            return Some(Var::T);
        }
        let (head, digits) = name.split_at(1);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let idx: usize = digits.parse().ok()?;
        if idx == 0 {
            return None;
        }
        match head {
            "x" => Some(Var::X(idx - 1)),
            "u" => Some(Var::U(idx - 1)),
            _ => None,
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::T => write!(f, "t"),
            Var::X(i) => write!(f, "x{}", i + 1),
            Var::U(j) => write!(f, "u{}", j + 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Log,
    Abs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Max,
    Min,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Const(f64),
    Var(Var),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
    Pow(Box<Node>, u32),
}

impl Node {
    pub fn node_count(&self) -> usize {
        match self {
            Node::Const(_) | Node::Var(_) => 1,
            Node::Unary(_, a) | Node::Pow(a, _) => 1 + a.node_count(),
            Node::Binary(_, a, b) => 1 + a.node_count() + b.node_count(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Const(_) | Node::Var(_) => 1,
            Node::Unary(_, a) | Node::Pow(a, _) => 1 + a.depth(),
            Node::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    /// True when the subtree contains a `max`, `min` or `abs` node.
    pub fn has_nonsmooth(&self) -> bool {
        match self {
            Node::Const(_) | Node::Var(_) => false,
            Node::Unary(UnaryOp::Abs, _) => true,
            Node::Unary(_, a) | Node::Pow(a, _) => a.has_nonsmooth(),
            Node::Binary(BinaryOp::Max | BinaryOp::Min, _, _) => true,
            Node::Binary(_, a, b) => a.has_nonsmooth() || b.has_nonsmooth(),
        }
    }

    pub fn contains_var(&self, v: Var) -> bool {
        match self {
            Node::Const(_) => false,
            Node::Var(w) => *w == v,
            Node::Unary(_, a) | Node::Pow(a, _) => a.contains_var(v),
            Node::Binary(_, a, b) => a.contains_var(v) || b.contains_var(v),
        }
    }

    /// True when the subtree references any state or control variable.
    pub fn depends_on_state_or_control(&self) -> bool {
        match self {
            Node::Const(_) => false,
            Node::Var(Var::T) => false,
            Node::Var(_) => true,
            Node::Unary(_, a) | Node::Pow(a, _) => a.depends_on_state_or_control(),
            Node::Binary(_, a, b) => a.depends_on_state_or_control() || b.depends_on_state_or_control(),
        }
    }

    fn max_indices(&self, nx: &mut usize, nu: &mut usize) {
        match self {
            Node::Const(_) | Node::Var(Var::T) => {}
            Node::Var(Var::X(i)) => *nx = (*nx).max(i + 1),
            Node::Var(Var::U(j)) => *nu = (*nu).max(j + 1),
            Node::Unary(_, a) | Node::Pow(a, _) => a.max_indices(nx, nu),
            Node::Binary(_, a, b) => {
                a.max_indices(nx, nu);
                b.max_indices(nx, nu);
            }
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Const(c) => {
                if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                    write!(f, "(-{:?})", -c)
                } else {
                    write!(f, "{c:?}")
                }
            }
            Node::Var(v) => write!(f, "{v}"),
            Node::Unary(UnaryOp::Neg, a) => write!(f, "(-{a})"),
            Node::Unary(op, a) => {
                let name = match op {
                    UnaryOp::Sin => "sin",
                    UnaryOp::Cos => "cos",
                    UnaryOp::Exp => "exp",
                    UnaryOp::Log => "log",
                    UnaryOp::Abs => "abs",
                    UnaryOp::Neg => unreachable!(),
                };
                write!(f, "{name}({a})")
            }
            Node::Binary(BinaryOp::Max, a, b) => write!(f, "max({a}, {b})"),
            Node::Binary(BinaryOp::Min, a, b) => write!(f, "min({a}, {b})"),
            Node::Binary(op, a, b) => {
                let sym = match op {
                    BinaryOp::Add => "+",
                    BinaryOp::Sub => "-",
                    BinaryOp::Mul => "*",
                    BinaryOp::Div => "/",
                    _ => unreachable!(),
                };
                write!(f, "({a} {sym} {b})")
            }
            Node::Pow(a, k) => write!(f, "({a}^{k})"),
        }
    }
}

/// A parsed expression together with the `(n, m)` dimensions it was
/// checked against. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct ExprAst {
    root: Node,
    n: usize,
    m: usize,
}

/// Evaluation point `(t, x, u)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EvalPoint<T: Real> {
    pub t: T,
    pub x: Vec<T>,
    pub u: Vec<T>,
}

impl<T: Real> EvalPoint<T> {
    pub fn new(t: T, x: Vec<T>, u: Vec<T>) -> Self {
        Self { t, x, u }
    }

    /// Concatenated `(x, u)`.
    pub fn z(&self) -> Vec<T> {
        self.x.iter().chain(self.u.iter()).copied().collect()
    }

    pub fn from_z(t: T, z: &[T], n: usize) -> Self {
        Self { t, x: z[..n].to_vec(), u: z[n..].to_vec() }
    }
}

/// Finite set of gradients (each of length `1+n+m`, ordered `(t, x, u)`)
/// whose convex hull contains the Clarke generalized gradient.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct GeneratorSet<T: Real> {
    pub vectors: Vec<Vec<T>>,
    /// True when the convex hull equals the Clarke generalized gradient.
    pub exact: bool,
}

impl<T: Real> GeneratorSet<T> {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn is_singleton(&self) -> bool {
        self.vectors.len() == 1
    }

    /// The `(x, u)` part of generator `k` (drops the time partial).
    pub fn zpart(&self, k: usize) -> &[T] {
        &self.vectors[k][1..]
    }
}

impl ExprAst {
    /// Parses `text` against state dimension `n` and control dimension `m`.
    pub fn parse(text: &str, n: usize, m: usize) -> Result<Self> {
        let root = parse::parse(text, n, m)?;
        Ok(Self { root, n, m })
    }

    /// Wraps an already-built tree, checking variable ranges.
    pub fn from_node(root: Node, n: usize, m: usize) -> Result<Self> {
        let (mut nx, mut nu) = (0, 0);
        root.max_indices(&mut nx, &mut nu);
        if nx > n || nu > m {
            return Err(crate::Error::Dimension(format!(
                "expression uses x{nx}/u{nu} but dims are (n={n}, m={m})"
            )));
        }
        Ok(Self { root, n, m })
    }

    pub fn constant(c: f64, n: usize, m: usize) -> Self {
        Self { root: Node::Const(c), n, m }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn is_smooth(&self) -> bool {
        !self.root.has_nonsmooth()
    }

    /// Syntactic dependence on `var`.
    pub fn depends_on(&self, var: Var) -> bool {
        self.root.contains_var(var)
    }

    pub fn evaluate<T: Real>(&self, p: &EvalPoint<T>) -> Result<T> {
        self.check_point(p)?;
        eval::value(&self.root, p.t, &p.x, &p.u)
    }

    /// Evaluates at `(t, x, u)` given as slices.
    pub fn eval_parts<T: Real>(&self, t: T, x: &[T], u: &[T]) -> Result<T> {
        eval::value(&self.root, t, x, u)
    }

    /// Gradient `(d/dt, d/dx, d/du)` of the active branch with the default
    /// tie tolerance.
    pub fn gradient<T: Real>(&self, p: &EvalPoint<T>) -> Result<Gradient<T>> {
        self.gradient_with_tol(p, T::lit(DEFAULT_TIE_TOL))
    }

    pub fn gradient_with_tol<T: Real>(&self, p: &EvalPoint<T>, tie_tol: T) -> Result<Gradient<T>> {
        self.check_point(p)?;
        eval::gradient(&self.root, p.t, &p.x, &p.u, tie_tol)
    }

    pub fn gradient_parts<T: Real>(&self, t: T, x: &[T], u: &[T]) -> Result<Gradient<T>> {
        eval::gradient(&self.root, t, x, u, T::lit(DEFAULT_TIE_TOL))
    }

    /// Gradients of every branch within `tie_tol` of the realized value.
    pub fn clarke_generators<T: Real>(&self, p: &EvalPoint<T>, tie_tol: T) -> Result<GeneratorSet<T>> {
        self.check_point(p)?;
        eval::generators(&self.root, p.t, &p.x, &p.u, tie_tol)
    }

    pub fn clarke_generators_parts<T: Real>(&self, t: T, x: &[T], u: &[T], tie_tol: T) -> Result<GeneratorSet<T>> {
        eval::generators(&self.root, t, x, u, tie_tol)
    }

    /// True when the expression is affine in `(x, u)`; time may appear in
    /// coefficients only through state/control-free subtrees.
    pub fn is_affine(&self) -> bool {
        analysis::is_affine(&self.root)
    }

    /// Splits the expression as `phi(z) + b^T z` by collecting top-level
    /// linear monomials. Returns `None` if a linear coefficient is not a
    /// numeric constant.
    pub fn split_affine(&self) -> Option<AffineSplit> {
        analysis::split_affine(&self.root, self.n, self.m)
    }

    fn check_point<T: Real>(&self, p: &EvalPoint<T>) -> Result<()> {
        if p.x.len() != self.n || p.u.len() != self.m {
            return Err(crate::Error::Dimension(format!(
                "point has (|x|={}, |u|={}), expression expects ({}, {})",
                p.x.len(),
                p.u.len(),
                self.n,
                self.m
            )));
        }
        Ok(())
    }
}

impl fmt::Display for ExprAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.root)
    }
}

impl Serialize for ExprAst {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

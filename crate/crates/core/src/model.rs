//! Problem data, trajectories and multiplier arcs, plus the JSON problem
//! format.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::expr::{EvalPoint, ExprAst};
use crate::scalar::{norm2, Real};

/// Marks one endpoint coordinate as fixed or free.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndpointMark {
    Fixed(f64),
    Free,
}

impl EndpointMark {
    pub fn is_free(self) -> bool {
        matches!(self, EndpointMark::Free)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EndpointSet {
    pub x0: Vec<EndpointMark>,
    pub x1: Vec<EndpointMark>,
}

/// Radius of the Weierstrass / pseudo-Lipschitz conditions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Radius {
    Infinite,
    Constant(f64),
}

impl Radius {
    pub fn value(self) -> f64 {
        match self {
            Radius::Infinite => f64::INFINITY,
            Radius::Constant(r) => r,
        }
    }
}

/// Control set `U = [lower, upper]` (entries may be infinite).
#[derive(Clone, Debug, PartialEq)]
pub struct ControlBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ControlBox {
    pub fn unbounded(m: usize) -> Self {
        Self { lower: vec![f64::NEG_INFINITY; m], upper: vec![f64::INFINITY; m] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lo<T: Real>(&self, j: usize) -> T {
        T::lit(self.lower[j])
    }

    pub fn hi<T: Real>(&self, j: usize) -> T {
        T::lit(self.upper[j])
    }

    pub fn project<T: Real>(&self, u: &[T]) -> Vec<T> {
        u.iter().enumerate().map(|(j, &v)| v.max(self.lo(j)).min(self.hi(j))).collect()
    }

    /// Euclidean distance from `u` to the box.
    pub fn distance<T: Real>(&self, u: &[T]) -> T {
        let p = self.project(u);
        let d: Vec<T> = u.iter().zip(&p).map(|(&a, &b)| a - b).collect();
        norm2(&d)
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|v| v.is_finite())
    }
}

/// Full problem description: dynamics, costs, mixed constraints, control
/// box, endpoint marks and radius.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub s: usize,
    pub t0: f64,
    pub t1: f64,
    /// Running cost `F(t, x, u)`.
    pub running_cost: ExprAst,
    /// Endpoint cost over `(x(t0), x(t1))`, parsed with `2n` state slots.
    pub endpoint_cost: ExprAst,
    pub phi: Vec<ExprAst>,
    pub g: Vec<ExprAst>,
    pub h: Vec<ExprAst>,
    pub u_box: ControlBox,
    pub endpoints: EndpointSet,
    pub radius: Radius,
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema { path: path.into(), message: message.into() }
}

fn invariant(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Invariant { path: path.into(), message: message.into() }
}

fn get<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| schema(key, "missing key"))
}

fn as_usize(v: &Value, path: &str) -> Result<usize> {
    v.as_u64().map(|x| x as usize).ok_or_else(|| schema(path, "expected a nonnegative integer"))
}

fn as_f64(v: &Value, path: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| schema(path, "expected a number"))
}

/// A bound: a number, `"inf"`, `"-inf"`, or `null` (meaning `default`).
fn as_bound(v: &Value, path: &str, default: f64) -> Result<f64> {
    match v {
        Value::Null => Ok(default),
        Value::Number(x) => x.as_f64().ok_or_else(|| schema(path, "bad number")),
        Value::String(s) => match s.trim() {
            "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
            "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
            _ => Err(schema(path, format!("expected a number or \"inf\"/\"-inf\", got \"{s}\""))),
        },
        _ => Err(schema(path, "expected a number, \"inf\", \"-inf\" or null")),
    }
}

fn bound_json(v: f64) -> Value {
    if v == f64::INFINITY {
        json!("inf")
    } else if v == f64::NEG_INFINITY {
        json!("-inf")
    } else {
        json!(v)
    }
}

fn parse_expr(v: &Value, path: &str, n: usize, m: usize) -> Result<ExprAst> {
    let text = v.as_str().ok_or_else(|| schema(path, "expected an expression string"))?;
    ExprAst::parse(text, n, m).map_err(|e| invariant(path, e.to_string()))
}

fn parse_expr_list(obj: &Map<String, Value>, key: &str, n: usize, m: usize) -> Result<Vec<ExprAst>> {
    let Some(v) = obj.get(key) else { return Ok(Vec::new()) };
    let arr = v.as_array().ok_or_else(|| schema(key, "expected an array of expression strings"))?;
    arr.iter().enumerate().map(|(i, e)| parse_expr(e, &format!("{key}[{i}]"), n, m)).collect()
}

fn parse_marks(v: Option<&Value>, path: &str, n: usize) -> Result<Vec<EndpointMark>> {
    let Some(v) = v else { return Ok(vec![EndpointMark::Free; n]) };
    let arr = v.as_array().ok_or_else(|| schema(path, "expected an array"))?;
    if arr.len() != n {
        return Err(schema(path, format!("expected {n} entries, found {}", arr.len())));
    }
    arr.iter()
        .enumerate()
        .map(|(i, e)| {
            let p = format!("{path}[{i}]");
            match e {
                Value::String(s) if s == "free" => Ok(EndpointMark::Free),
                Value::Object(o) if o.len() == 1 && o.contains_key("fixed") => {
                    let x = as_f64(&o["fixed"], &format!("{p}.fixed"))?;
                    Ok(EndpointMark::Fixed(x))
                }
                _ => Err(schema(p, "expected \"free\" or {\"fixed\": value}")),
            }
        })
        .collect()
}

impl ProblemSpec {
    /// Parses and validates the JSON problem format.
    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        let value: Value = serde_json::from_slice(bytes).map_err(|e| schema("$", format!("invalid JSON: {e}")))?;
        Self::from_json_value(&value)
    }

    pub fn from_json_value(value: &Value) -> Result<Self> {
        let obj = value.as_object().ok_or_else(|| schema("$", "expected a JSON object"))?;
        const KNOWN: [&str; 14] = ["n", "m", "l", "s", "t0", "t1", "F", "f", "phi", "g", "h", "U", "E", "R"];
        if let Some(k) = obj.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(schema(k.as_str(), "unknown key"));
        }
        let n = as_usize(get(obj, "n")?, "n")?;
        let m = as_usize(get(obj, "m")?, "m")?;
        if n == 0 {
            return Err(invariant("n", "state dimension must be positive"));
        }
        let t0 = as_f64(get(obj, "t0")?, "t0")?;
        let t1 = as_f64(get(obj, "t1")?, "t1")?;
        let running_cost = parse_expr(get(obj, "F")?, "F", n, m)?;
        let endpoint_cost = match obj.get("f") {
            Some(v) => parse_expr(v, "f", 2 * n, 0)?,
            None => ExprAst::constant(0.0, 2 * n, 0),
        };
        let phi = parse_expr_list(obj, "phi", n, m)?;
        if !obj.contains_key("phi") {
            return Err(schema("phi", "missing key"));
        }
        let g = parse_expr_list(obj, "g", n, m)?;
        let h = parse_expr_list(obj, "h", n, m)?;
        let l = match obj.get("l") {
            Some(v) => as_usize(v, "l")?,
            None => g.len(),
        };
        let s = match obj.get("s") {
            Some(v) => as_usize(v, "s")?,
            None => h.len(),
        };
        let u_box = match obj.get("U") {
            None | Some(Value::Null) => ControlBox::unbounded(m),
            Some(Value::Object(u)) => {
                let side = |key: &str, default: f64| -> Result<Vec<f64>> {
                    let path = format!("U.{key}");
                    match u.get(key) {
                        None | Some(Value::Null) => Ok(vec![default; m]),
                        Some(Value::Array(a)) => {
                            if a.len() != m {
                                return Err(schema(path, format!("expected {m} entries, found {}", a.len())));
                            }
                            a.iter().enumerate().map(|(j, b)| as_bound(b, &format!("{path}[{j}]"), default)).collect()
                        }
                        Some(_) => Err(schema(path, "expected an array")),
                    }
                };
                ControlBox { lower: side("lower", f64::NEG_INFINITY)?, upper: side("upper", f64::INFINITY)? }
            }
            Some(_) => return Err(schema("U", "expected an object with lower/upper")),
        };
        let endpoints = match obj.get("E") {
            None | Some(Value::Null) => EndpointSet { x0: vec![EndpointMark::Free; n], x1: vec![EndpointMark::Free; n] },
            Some(Value::Object(e)) => {
                EndpointSet { x0: parse_marks(e.get("x0"), "E.x0", n)?, x1: parse_marks(e.get("x1"), "E.x1", n)? }
            }
            Some(_) => return Err(schema("E", "expected an object with x0/x1")),
        };
        let radius = match obj.get("R") {
            None | Some(Value::Null) => Radius::Infinite,
            Some(Value::String(s)) if s == "inf" => Radius::Infinite,
            Some(Value::Number(x)) => Radius::Constant(x.as_f64().ok_or_else(|| schema("R", "bad number"))?),
            Some(_) => return Err(schema("R", "expected \"inf\" or a positive number")),
        };
        let ps = ProblemSpec { n, m, l, s, t0, t1, running_cost, endpoint_cost, phi, g, h, u_box, endpoints, radius };
        ps.validate()?;
        Ok(ps)
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.n, self.m);
        if n == 0 {
            return Err(invariant("n", "state dimension must be positive"));
        }
        if !(self.t0.is_finite() && self.t1.is_finite()) || self.t0 >= self.t1 {
            return Err(invariant("t1", format!("require finite t0 < t1 (got {} and {})", self.t0, self.t1)));
        }
        if self.phi.len() != n {
            return Err(schema("phi", format!("expected {n} dynamics expressions, found {}", self.phi.len())));
        }
        if self.g.len() != self.l {
            return Err(schema("g", format!("l = {} but {} inequality expressions given", self.l, self.g.len())));
        }
        if self.h.len() != self.s {
            return Err(schema("h", format!("s = {} but {} equality expressions given", self.s, self.h.len())));
        }
        let check_dims = |e: &ExprAst, path: String, dims: (usize, usize)| -> Result<()> {
            if e.dims() != dims {
                return Err(invariant(path, format!("expression dims {:?} differ from {:?}", e.dims(), dims)));
            }
            Ok(())
        };
        check_dims(&self.running_cost, "F".into(), (n, m))?;
        check_dims(&self.endpoint_cost, "f".into(), (2 * n, 0))?;
        for (key, list) in [("phi", &self.phi), ("g", &self.g), ("h", &self.h)] {
            for (i, e) in list.iter().enumerate() {
                check_dims(e, format!("{key}[{i}]"), (n, m))?;
            }
        }
        for (j, e) in self.h.iter().enumerate() {
            if !e.is_smooth() {
                return Err(invariant(format!("h[{j}]"), "h must be smooth (no abs/max/min)"));
            }
        }
        if self.u_box.lower.len() != m || self.u_box.upper.len() != m {
            return Err(schema("U", format!("bounds must have {m} entries")));
        }
        for j in 0..m {
            let (lo, hi) = (self.u_box.lower[j], self.u_box.upper[j]);
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY || lo > hi {
                return Err(invariant(format!("U.lower[{j}]"), format!("invalid bounds [{lo}, {hi}]")));
            }
        }
        for (key, marks) in [("E.x0", &self.endpoints.x0), ("E.x1", &self.endpoints.x1)] {
            if marks.len() != n {
                return Err(schema(key, format!("expected {n} entries")));
            }
            for (i, mk) in marks.iter().enumerate() {
                if let EndpointMark::Fixed(v) = mk {
                    if !v.is_finite() {
                        return Err(invariant(format!("{key}[{i}]"), "fixed value must be finite"));
                    }
                }
            }
        }
        if let Radius::Constant(r) = self.radius {
            if !(r > 0.0) || r.is_nan() {
                return Err(invariant("R", "radius must be positive"));
            }
        }
        Ok(())
    }

    pub fn to_json_value(&self) -> Value {
        let strings = |v: &[ExprAst]| v.iter().map(|e| Value::String(e.to_string())).collect::<Vec<_>>();
        let marks = |v: &[EndpointMark]| serde_json::to_value(v).expect("marks serialize");
        json!({
            "n": self.n,
            "m": self.m,
            "l": self.l,
            "s": self.s,
            "t0": self.t0,
            "t1": self.t1,
            "F": self.running_cost.to_string(),
            "f": self.endpoint_cost.to_string(),
            "phi": strings(&self.phi),
            "g": strings(&self.g),
            "h": strings(&self.h),
            "U": {
                "lower": self.u_box.lower.iter().map(|&v| bound_json(v)).collect::<Vec<_>>(),
                "upper": self.u_box.upper.iter().map(|&v| bound_json(v)).collect::<Vec<_>>(),
            },
            "E": { "x0": marks(&self.endpoints.x0), "x1": marks(&self.endpoints.x1) },
            "R": match self.radius { Radius::Infinite => json!("inf"), Radius::Constant(r) => json!(r) },
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("problem serializes")
    }

    /// True when every coordinate of `x(t1)` is free.
    pub fn terminal_free(&self) -> bool {
        self.endpoints.x1.iter().all(|m| m.is_free())
    }

    /// `(g(z), h(z))` values.
    pub fn constraint_values<T: Real>(&self, p: &EvalPoint<T>) -> Result<(Vec<T>, Vec<T>)> {
        let g = self.g.iter().map(|e| e.evaluate(p)).collect::<Result<Vec<_>>>()?;
        let h = self.h.iter().map(|e| e.evaluate(p)).collect::<Result<Vec<_>>>()?;
        Ok((g, h))
    }

    pub fn dynamics<T: Real>(&self, p: &EvalPoint<T>) -> Result<Vec<T>> {
        self.phi.iter().map(|e| e.evaluate(p)).collect()
    }

    /// All mixed constraints `Φ = (g, h)` in order.
    pub fn mixed(&self) -> impl Iterator<Item = &ExprAst> {
        self.g.iter().chain(self.h.iter())
    }

    fn check_point<T: Real>(&self, p: &EvalPoint<T>) -> Result<()> {
        if p.x.len() != self.n || p.u.len() != self.m {
            return Err(Error::Dimension(format!(
                "point has (x, u) lengths ({}, {}) but problem has (n, m) = ({}, {})",
                p.x.len(),
                p.u.len(),
                self.n,
                self.m
            )));
        }
        Ok(())
    }

    /// `max(g_1, …, g_l, 0) + ‖h‖₂ + dist(u, U)`.
    pub fn feasibility_residual<T: Real>(&self, p: &EvalPoint<T>) -> Result<T> {
        self.check_point(p)?;
        let (g, h) = self.constraint_values(p)?;
        let gmax = g.iter().fold(T::zero(), |a, &v| a.max(v));
        Ok(gmax + norm2(&h) + self.u_box.distance(&p.u))
    }

    /// Inline point for this problem, with bounds-checked lengths.
    pub fn point<T: Real>(&self, t: T, x: Vec<T>, u: Vec<T>) -> Result<EvalPoint<T>> {
        let p = EvalPoint::new(t, x, u);
        self.check_point(&p)?;
        Ok(p)
    }
}

/// Loads a [`ProblemSpec`] from the JSON problem format.
pub fn load_problem(bytes: &[u8]) -> Result<ProblemSpec> {
    ProblemSpec::from_json_bytes(bytes)
}

/// `max(g, 0) + ‖h‖ + dist(u, U)` at `z`.
pub fn feasibility_residual<T: Real>(ps: &ProblemSpec, z: &EvalPoint<T>) -> Result<T> {
    ps.feasibility_residual(z)
}

/// Candidate trajectory: node states and piecewise-constant controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Trajectory<T: Real> {
    pub grid: Vec<T>,
    pub x: Vec<Vec<T>>,
    pub u: Vec<Vec<T>>,
}

impl<T: Real> Trajectory<T> {
    /// Number of intervals.
    pub fn intervals(&self) -> usize {
        self.u.len()
    }

    pub fn step(&self, k: usize) -> T {
        self.grid[k + 1] - self.grid[k]
    }

    pub fn max_step(&self) -> T {
        (0..self.intervals()).map(|k| self.step(k)).fold(T::zero(), T::max)
    }

    /// Uniform grid of `n_int` intervals on `[t0, t1]`.
    pub fn uniform_grid(t0: f64, t1: f64, n_int: usize) -> Vec<T> {
        let (a, b) = (T::lit(t0), T::lit(t1));
        (0..=n_int).map(|k| if k == n_int { b } else { a + (b - a) * T::of(k) / T::of(n_int) }).collect()
    }

    /// Point `(τ_k, x_k, u_k)`; `k < N`.
    pub fn node(&self, k: usize) -> EvalPoint<T> {
        EvalPoint::new(self.grid[k], self.x[k].clone(), self.u[k].clone())
    }

    /// Checks dimensions and grid monotonicity against `ps`.
    pub fn validate(&self, ps: &ProblemSpec) -> Result<()> {
        let nn = self.u.len();
        let bad = |path: &str, msg: String| Err(invariant(path, msg));
        if nn < 1 {
            return bad("u", "trajectory needs at least one interval".into());
        }
        if self.grid.len() != nn + 1 || self.x.len() != nn + 1 {
            return bad("grid", format!("expected {} grid times and states for {nn} controls", nn + 1));
        }
        if self.x.iter().any(|r| r.len() != ps.n) {
            return bad("x", format!("state rows must have length {}", ps.n));
        }
        if self.u.iter().any(|r| r.len() != ps.m) {
            return bad("u", format!("control rows must have length {}", ps.m));
        }
        let all = self.grid.iter().chain(self.x.iter().flatten()).chain(self.u.iter().flatten());
        if all.clone().any(|v| !v.is_finite()) {
            return bad("x", "trajectory contains non-finite values".into());
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("grid", "grid must be strictly increasing".into());
        }
        let tol = T::tol(1e-9) * (T::one() + T::lit(ps.t1.abs().max(ps.t0.abs())));
        if (self.grid[0] - T::lit(ps.t0)).abs() > tol || (self.grid[nn] - T::lit(ps.t1)).abs() > tol {
            return bad("grid", format!("grid must start at t0 = {} and end at t1 = {}", ps.t0, ps.t1));
        }
        Ok(())
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| schema("$", format!("invalid trajectory JSON: {e}")))
    }
}

/// Discrete multiplier arc: adjoint nodes, inequality and equality
/// multipliers per interval, endpoint normal-cone components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MultiplierArc<T: Real> {
    pub lambda0: u8,
    pub p: Vec<Vec<T>>,
    pub lam: Vec<Vec<T>>,
    pub varpi: Vec<Vec<T>>,
    pub xi0: Vec<T>,
    pub xi1: Vec<T>,
}

impl<T: Real> MultiplierArc<T> {
    pub fn nontriviality(&self) -> T {
        let pmax = self.p.iter().map(|r| crate::scalar::norm_inf(r)).fold(T::zero(), T::max);
        pmax.max(if self.lambda0 == 1 { T::one() } else { T::zero() })
    }

    pub fn min_lambda(&self) -> T {
        self.lam.iter().flatten().fold(T::infinity(), |a, &v| a.min(v))
    }

    /// Checks `λ ≥ 0` (up to `tol`) and nontriviality.
    pub fn validate(&self, tol: T) -> Result<()> {
        if self.lambda0 > 1 {
            return Err(invariant("lambda0", "must be 0 or 1"));
        }
        if self.lam.iter().flatten().any(|&v| v < -tol) {
            return Err(invariant("lam", "inequality multipliers must be nonnegative"));
        }
        if self.nontriviality() <= T::zero() {
            return Err(invariant("p", "multiplier arc is trivial"));
        }
        Ok(())
    }
}

//! Normal cones of the control box and of `Ω = R^l_- × {0}`, active sets,
//! and multiplier-weighted generator sets.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{EvalPoint, ExprAst, GeneratorSet};
use crate::model::{ControlBox, ProblemSpec};
use crate::numkernel::ConeDescription;
use crate::scalar::Real;

/// Default activity tolerance.
pub const DEFAULT_EPS_ACT: f64 = 1e-6;

/// Largest Minkowski-sum size built by [`weighted_subdiff_generators`].
const MAX_SUM_GENERATORS: usize = 4096;

/// Active inequalities and active box faces at a point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ActiveSetInfo {
    pub active_g: Vec<usize>,
    pub lower_active: Vec<usize>,
    pub upper_active: Vec<usize>,
    pub eps_act: f64,
}

impl ActiveSetInfo {
    /// Box faces as signed unit generators in `R^m`: `−e_j` (lower), `+e_j` (upper).
    pub fn face_generators<T: Real>(&self, m: usize) -> Vec<Vec<T>> {
        let unit = |j: usize, s: T| {
            let mut v = vec![T::zero(); m];
            v[j] = s;
            v
        };
        self.lower_active.iter().map(|&j| unit(j, -T::one())).chain(self.upper_active.iter().map(|&j| unit(j, T::one()))).collect()
    }

    pub fn face_count(&self) -> usize {
        self.lower_active.len() + self.upper_active.len()
    }
}

fn box_faces<T: Real>(bx: &ControlBox, u: &[T], eps: T) -> Result<(Vec<usize>, Vec<usize>)> {
    if u.len() != bx.dim() {
        return Err(Error::Dimension(format!("control has length {} but U has dimension {}", u.len(), bx.dim())));
    }
    let (mut lower, mut upper) = (Vec::new(), Vec::new());
    for (j, &uj) in u.iter().enumerate() {
        let (lo, hi): (T, T) = (bx.lo(j), bx.hi(j));
        if uj < lo - eps || uj > hi + eps {
            return Err(Error::Infeasible(format!("u{} = {uj} outside [{lo}, {hi}]", j + 1)));
        }
        if lo.is_finite() && uj <= lo + eps {
            lower.push(j);
        }
        if hi.is_finite() && uj >= hi - eps {
            upper.push(j);
        }
    }
    Ok((lower, upper))
}

/// Normal cone to the box `U` at `u`.
pub fn normal_cone_box<T: Real>(bx: &ControlBox, u: &[T], eps_act: T) -> Result<ConeDescription<T>> {
    let (lower, upper) = box_faces(bx, u, eps_act)?;
    let info = ActiveSetInfo { active_g: Vec::new(), lower_active: lower, upper_active: upper, eps_act: eps_act.to_f64_lossy() };
    Ok(ConeDescription::new(info.face_generators(bx.dim()), Vec::new()))
}

/// Normal cone to `Ω = R^l_- × {0}` at `(g, h)`.
pub fn normal_cone_omega<T: Real>(l: usize, s: usize, g: &[T], h: &[T], eps_act: T) -> Result<ConeDescription<T>> {
    if g.len() != l || h.len() != s {
        return Err(Error::Dimension(format!("expected {l} inequality and {s} equality values")));
    }
    if let Some((i, v)) = g.iter().enumerate().find(|(_, &v)| v > eps_act) {
        return Err(Error::Infeasible(format!("g{} = {v} exceeds the activity tolerance", i + 1)));
    }
    if let Some((j, v)) = h.iter().enumerate().find(|(_, &v)| v.abs() > eps_act) {
        return Err(Error::Infeasible(format!("h{} = {v} exceeds the activity tolerance", j + 1)));
    }
    let unit = |k: usize| {
        let mut v = vec![T::zero(); l + s];
        v[k] = T::one();
        v
    };
    let gens = (0..l).filter(|&i| g[i] >= -eps_act).map(unit).collect();
    let span = (l..l + s).map(unit).collect();
    Ok(ConeDescription::new(gens, span))
}

/// Active inequalities and box faces of `ps` at `z`; errors if `z` is
/// infeasible beyond `eps_act`.
pub fn active_set<T: Real>(ps: &ProblemSpec, z: &EvalPoint<T>, eps_act: T) -> Result<ActiveSetInfo> {
    let (g, h) = ps.constraint_values(z)?;
    normal_cone_omega(ps.l, ps.s, &g, &h, eps_act)?;
    let (lower, upper) = box_faces(&ps.u_box, &z.u, eps_act)?;
    let active_g = (0..ps.l).filter(|&i| g[i] >= -eps_act).collect();
    Ok(ActiveSetInfo { active_g, lower_active: lower, upper_active: upper, eps_act: eps_act.to_f64_lossy() })
}

/// Generators of `Σ λ_i ∂Φ_i(z)` (Minkowski sum of scaled Clarke generator sets).
pub fn weighted_subdiff_generators<T: Real>(
    phi: &[ExprAst],
    z: &EvalPoint<T>,
    lambda: &[T],
    tie_tol: T,
) -> Result<GeneratorSet<T>> {
    if phi.len() != lambda.len() {
        return Err(Error::Dimension(format!("{} expressions but {} weights", phi.len(), lambda.len())));
    }
    let width = 1 + z.x.len() + z.u.len();
    let mut acc: Vec<Vec<T>> = vec![vec![T::zero(); width]];
    let mut nonsingleton = 0usize;
    let mut exact = true;
    for (e, &li) in phi.iter().zip(lambda) {
        if li == T::zero() {
            continue;
        }
        let gs = e.clarke_generators(z, tie_tol)?;
        exact &= gs.exact;
        if gs.len() > 1 {
            nonsingleton += 1;
        }
        if acc.len() * gs.len() > MAX_SUM_GENERATORS {
            return Err(Error::Unsupported(format!("generator sum exceeds {MAX_SUM_GENERATORS} vectors")));
        }
        let mut next = Vec::with_capacity(acc.len() * gs.len());
        for a in &acc {
            for v in &gs.vectors {
                next.push(a.iter().zip(v).map(|(&x, &y)| x + li * y).collect::<Vec<T>>());
            }
        }
        next.dedup();
        acc = next;
    }
    Ok(GeneratorSet { vectors: acc, exact: exact && nonsingleton <= 1 })
}

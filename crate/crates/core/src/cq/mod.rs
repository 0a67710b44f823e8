//! Constraint qualifications for the mixed system
//! `M(y) = {(x, u) : u ∈ U, Φ(x, u) + y ∈ Ω}` with `Φ = (g, h)`.
//!
//! Pointwise checks are LPs over multipliers; neighborhood checks sample a
//! ball around the point, so their "holds" means no violation was found.

mod audit;
mod calm;
mod neighborhood;
mod pointwise;

use serde::Serialize;

pub use audit::{audit_implication_chain, AuditReport, AuditViolation};
pub use calm::{check_global_eb_structure, check_structural_calmness, estimate_error_bound, ErrorBoundOptions};
pub use neighborhood::{check_neighborhood_cq, NeighborhoodOptions};
pub use pointwise::{check_pointwise_cq, ColumnKind, MultiplierSystem};

use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CqKind {
    Nnamcq,
    Wbcq,
    Mfc,
    Ccq,
    Plicq,
    Cpld,
    Rcpld,
    Crsc,
    CalmStructural,
    ErrorBoundEst,
    GlobalEbStructural,
}

impl CqKind {
    pub fn name(self) -> &'static str {
        match self {
            CqKind::Nnamcq => "NNAMCQ",
            CqKind::Wbcq => "WBCQ",
            CqKind::Mfc => "MFC",
            CqKind::Ccq => "CCQ",
            CqKind::Plicq => "PLICQ",
            CqKind::Cpld => "CPLD",
            CqKind::Rcpld => "RCPLD",
            CqKind::Crsc => "CRSC",
            CqKind::CalmStructural => "CALM_STRUCTURAL",
            CqKind::ErrorBoundEst => "ERROR_BOUND_EST",
            CqKind::GlobalEbStructural => "GLOBAL_EB_STRUCTURAL",
        }
    }
}

/// Evidence attached to a verdict.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case", bound = "")]
pub enum Witness<T: Real> {
    /// Multipliers `λ = (λ_g, λ_h)` (length `l + s`), box-face
    /// coefficients `η` and the resulting x-row `α`.
    Multiplier { lambda: Vec<T>, eta: Vec<T>, alpha: Vec<T> },
    /// Positive linear dependence among gradients: coefficients on the
    /// sign-constrained family and on the free family, with the index
    /// labels of each member.
    Dependence { signed_labels: Vec<String>, signed: Vec<T>, free_labels: Vec<String>, free: Vec<T> },
    /// Sample point `z = (x, u)` at which a neighborhood condition broke.
    Sample { z: Vec<T>, detail: String },
    /// Coordinate used by a structural certificate.
    Coordinate { index: usize, name: String },
    /// Free-form structural explanation.
    Structural { detail: String },
}

/// Result of one constraint-qualification check.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct CqVerdict<T: Real> {
    pub kind: CqKind,
    /// `Some(true|false)` when decided; `None` for "unknown".
    pub holds: Option<bool>,
    /// True for sampling-based verdicts.
    pub empirical: bool,
    /// CCQ calibration or error-bound estimate; `None` serializes as null
    /// and means infinite when `holds` is false.
    pub modulus: Option<T>,
    pub witness: Option<Witness<T>>,
    /// Set when a Clarke overapproximation was used.
    pub conservative: bool,
    pub samples: usize,
    pub note: String,
}

impl<T: Real> CqVerdict<T> {
    pub(crate) fn new(kind: CqKind) -> Self {
        Self { kind, holds: None, empirical: false, modulus: None, witness: None, conservative: false, samples: 0, note: String::new() }
    }

    pub fn holds(&self) -> bool {
        self.holds == Some(true)
    }

    pub fn fails(&self) -> bool {
        self.holds == Some(false)
    }
}

/// Variable label `x1..`, `u1..` for a `(x, u)` coordinate.
pub(crate) fn coord_name(j: usize, n: usize) -> String {
    if j < n {
        format!("x{}", j + 1)
    } else {
        format!("u{}", j - n + 1)
    }
}

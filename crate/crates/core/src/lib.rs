//! Constraint qualifications, velocity-map moduli and necessary-condition
//! verification for optimal control problems with mixed state-control
//! constraints `g(x, u) ≤ 0`, `h(x, u) = 0`, `u ∈ U`.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`.

pub mod cq;
pub mod error;
pub mod expr;
pub mod localopt;
pub mod model;
pub mod nonsmooth;
pub mod numkernel;
pub mod ocp;
pub mod rng;
pub mod scalar;
pub mod setmap;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Real;

pub type EvalPoint = expr::EvalPoint<f64>;
pub type Gradient = expr::Gradient<f64>;
pub type Trajectory = model::Trajectory<f64>;
pub type MultiplierArc = model::MultiplierArc<f64>;
pub type CqVerdict = cq::CqVerdict<f64>;
pub type Witness = cq::Witness<f64>;
pub type DiscretizedNlp = ocp::DiscretizedNlp<f64>;
pub type SolveReport = ocp::SolveReport<f64>;
pub type NcCertificate = verify::NcCertificate<f64>;
pub type Reconstruction = verify::Reconstruction<f64>;
pub type WeierstrassReport = verify::WeierstrassReport<f64>;
pub type PlEstimate = setmap::PlEstimate<f64>;
pub type BoundedSlope = setmap::BoundedSlope<f64>;

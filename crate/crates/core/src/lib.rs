//! Numerical toolkit for directed harmonic currents near a hyperbolic
//! singularity of a holomorphic foliation in ℂ².

// `!(x > 0.0)` style checks are meant to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod current;
pub mod foliation;
pub mod kernel;
pub mod mass;
pub mod quad;
pub mod recurrence;

pub use current::{BoundaryProfile, CurrentError, CurrentSpec, IntegrabilityReport};
pub use foliation::{FoliationError, HalfPlanePoint, LeafPoint, SectorPoint, Singularity};
pub use quad::{QuadError, QuadResult, Tolerance};

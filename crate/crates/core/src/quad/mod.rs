//! Numerical integration used throughout the crate.
//!
//! * [`integrate_1d`]: globally adaptive Gauss–Kronrod (10/21) on finite
//!   intervals, half-lines and the whole line, with caller-supplied break
//!   points.
//! * [`integrate_2d`]: iterated adaptive quadrature over corner domains
//!   `{min(t, v) >= s}` (or the Euclidean-ball cut of one), truncated by
//!   explicit tail bounds derived from a [`DecayDescriptor`].
//! * [`monte_carlo`]: seeded sample means with standard errors.

mod adaptive;
mod corner;
mod monte_carlo;

pub use adaptive::{gauss_kronrod_21, integrate_1d, integrate_1d_with_breaks};
pub use corner::{integrate_2d, integrate_2d_with_breaks, CornerDomain, CornerPiece, DecayDescriptor, TailBounds};
pub use monte_carlo::{monte_carlo, monte_carlo_with_rng};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_evals: usize,
}

impl Tolerance {
    pub fn new(rel: f64, abs: f64, max_evals: usize) -> Result<Self, QuadError> {
        let tol = Self { rel, abs, max_evals };
        tol.validate()?;
        Ok(tol)
    }

    pub fn validate(&self) -> Result<(), QuadError> {
        if !(self.rel > 0.0 && self.rel.is_finite()) || !(self.abs > 0.0 && self.abs.is_finite()) {
            return Err(QuadError::InvalidTolerance(format!(
                "rel = {}, abs = {} must be positive",
                self.rel, self.abs
            )));
        }
        if self.max_evals < 100 {
            return Err(QuadError::InvalidTolerance(format!(
                "max_evals = {} must be at least 100",
                self.max_evals
            )));
        }
        Ok(())
    }

    /// The same tolerance with both `rel` and `abs` scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rel: self.rel * factor,
            abs: self.abs * factor,
            max_evals: self.max_evals,
        }
    }

    pub fn with_max_evals(mut self, max_evals: usize) -> Self {
        self.max_evals = max_evals;
        self
    }

    pub(crate) fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rel: 1e-8,
            abs: 1e-10,
            max_evals: 200_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    /// Internal error indicator; not a guarantee.
    pub error: f64,
    pub evals: usize,
}

impl QuadResult {
    pub fn zero() -> Self {
        Self {
            value: 0.0,
            error: 0.0,
            evals: 1,
        }
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self {
            value: self.value * factor,
            error: self.error * factor.abs(),
            evals: self.evals,
        }
    }
}

impl std::ops::Add for QuadResult {
    type Output = QuadResult;

    fn add(self, rhs: QuadResult) -> QuadResult {
        QuadResult {
            value: self.value + rhs.value,
            error: self.error + rhs.error,
            evals: self.evals + rhs.evals,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("quadrature did not converge within the evaluation budget (best {:e} ± {:e}, {} evals)", best.value, best.error, best.evals)]
    NotConverged { best: QuadResult },
    #[error("integrand returned a non-finite value at {at}")]
    NonFinite { at: f64 },
    #[error("invalid tolerance: {0}")]
    InvalidTolerance(String),
    #[error("invalid interval: {0}")]
    InvalidInterval(String),
    #[error("invalid decay descriptor: {0}")]
    InvalidDecay(String),
}

impl QuadError {
    /// The best available estimate carried by a convergence failure.
    pub fn best_estimate(&self) -> Option<QuadResult> {
        match self {
            QuadError::NotConverged { best } => Some(*best),
            _ => None,
        }
    }
}

/// Integration range for [`integrate_1d`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Interval {
    Finite(f64, f64),
    /// `[a, ∞)`
    From(f64),
    /// `(-∞, b]`
    To(f64),
    Line,
}

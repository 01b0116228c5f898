//! Directed harmonic currents in the singular flow box.
//!
//! A current is described by a transversal measure `ν` on the fundamental
//! annulus together with nonnegative boundary profiles `H̃_α` on ℝ. On each
//! leaf the harmonic weight is the Poisson integral of `H̃_α` pulled back
//! through `τ ↦ τ^γ`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::foliation::{FoliationError, HalfPlanePoint, SectorPoint, Singularity};
use crate::quad::{integrate_1d_with_breaks, Interval, QuadError, QuadResult, Tolerance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurrentError {
    #[error("invalid current: {0}")]
    Invalid(String),
    #[error("boundary profile is not integrable against the kernel: {0}")]
    NotIntegrable(String),
    #[error(transparent)]
    Geometry(#[from] FoliationError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// Built-in families of nonnegative boundary profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryProfile {
    Zero,
    /// `height` everywhere.
    Constant { height: f64 },
    /// `height · 1_{[start, ∞)}`.
    Step { start: f64, height: f64 },
    /// Triangular bump `height · max(0, 1 - |y - center| / width)`.
    Bump { center: f64, width: f64, height: f64 },
    /// `height / (1 + ((y - center)/width)²)`.
    Cauchy { center: f64, width: f64, height: f64 },
    /// `height · (1 + |y|)^{-exponent}`.
    AlgebraicTail { exponent: f64, height: f64 },
}

/// `h(W) <= amplitude · |W|^{-rate}` whenever `|W| >= onset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailEnvelope {
    pub amplitude: f64,
    pub rate: f64,
    pub onset: f64,
}

impl BoundaryProfile {
    pub fn evaluate(&self, y: f64) -> f64 {
        match *self {
            BoundaryProfile::Zero => 0.0,
            BoundaryProfile::Constant { height } => height,
            BoundaryProfile::Step { start, height } => {
                if y >= start {
                    height
                } else {
                    0.0
                }
            }
            BoundaryProfile::Bump { center, width, height } => height * (1.0 - (y - center).abs() / width).max(0.0),
            BoundaryProfile::Cauchy { center, width, height } => {
                let x = (y - center) / width;
                height / (1.0 + x * x)
            }
            BoundaryProfile::AlgebraicTail { exponent, height } => height * (1.0 + y.abs()).powf(-exponent),
        }
    }

    pub fn validate(&self) -> Result<(), CurrentError> {
        let bad = |m: &str| Err(CurrentError::Invalid(format!("{m}: {self:?}")));
        match *self {
            BoundaryProfile::Zero => Ok(()),
            BoundaryProfile::Constant { height } | BoundaryProfile::Step { height, .. } => {
                if height >= 0.0 && height.is_finite() {
                    Ok(())
                } else {
                    bad("height must be finite and nonnegative")
                }
            }
            BoundaryProfile::Bump { center, width, height } | BoundaryProfile::Cauchy { center, width, height } => {
                if !(height >= 0.0 && height.is_finite()) {
                    bad("height must be finite and nonnegative")
                } else if !(width > 0.0 && width.is_finite() && center.is_finite()) {
                    bad("width must be positive and center finite")
                } else {
                    Ok(())
                }
            }
            BoundaryProfile::AlgebraicTail { exponent, height } => {
                if !(height >= 0.0 && height.is_finite()) {
                    bad("height must be finite and nonnegative")
                } else if !(exponent > 0.0 && exponent.is_finite()) {
                    bad("exponent must be positive")
                } else {
                    Ok(())
                }
            }
        }
    }

    /// `β` with `H̃(y) = O((1 + |y|)^{-β})`; infinite for compact support.
    pub fn decay_exponent(&self) -> f64 {
        match *self {
            BoundaryProfile::Zero | BoundaryProfile::Bump { .. } => f64::INFINITY,
            BoundaryProfile::Constant { .. } | BoundaryProfile::Step { .. } => 0.0,
            BoundaryProfile::Cauchy { .. } => 2.0,
            BoundaryProfile::AlgebraicTail { exponent, .. } => exponent,
        }
    }

    /// Radius of an origin-centred interval containing the support.
    pub fn support_bound(&self) -> Option<f64> {
        match *self {
            BoundaryProfile::Zero => Some(0.0),
            BoundaryProfile::Bump { center, width, .. } => Some(center.abs() + width),
            _ => None,
        }
    }

    pub fn sup(&self) -> f64 {
        match *self {
            BoundaryProfile::Zero => 0.0,
            BoundaryProfile::Constant { height }
            | BoundaryProfile::Step { height, .. }
            | BoundaryProfile::Bump { height, .. }
            | BoundaryProfile::Cauchy { height, .. }
            | BoundaryProfile::AlgebraicTail { height, .. } => height,
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        let mut p = *self;
        match &mut p {
            BoundaryProfile::Zero => {}
            BoundaryProfile::Constant { height }
            | BoundaryProfile::Step { height, .. }
            | BoundaryProfile::Bump { height, .. }
            | BoundaryProfile::Cauchy { height, .. }
            | BoundaryProfile::AlgebraicTail { height, .. } => *height *= k,
        }
        p
    }

    /// Points where the profile is not smooth or is concentrated.
    pub fn kinks(&self) -> Vec<f64> {
        match *self {
            BoundaryProfile::Zero | BoundaryProfile::Constant { .. } => vec![],
            BoundaryProfile::Step { start, .. } => vec![start],
            BoundaryProfile::Bump { center, width, .. } => vec![center - width, center, center + width],
            BoundaryProfile::Cauchy { center, width, .. } => vec![center - width, center, center + width],
            BoundaryProfile::AlgebraicTail { .. } => vec![0.0],
        }
    }

    /// Whether `∫ H̃(y) (1 + |y|)^{1/γ - 1} dy` is finite.
    pub fn is_integrable(&self, gamma: f64) -> bool {
        self.sup() == 0.0 || self.support_bound().is_some() || self.decay_exponent() > 1.0 / gamma
    }

    /// Checks the declared decay on a logarithmic grid up to `10⁶`: the
    /// weighted profile `H̃(y)(1 + |y|)^β` over `10⁵ <= |y| <= 10⁶` may not
    /// exceed its maximum over `|y| <= 10⁵`.
    pub fn check_declared_decay(&self) -> bool {
        let beta = self.decay_exponent();
        if beta.is_infinite() {
            let r = self.support_bound().unwrap_or(0.0);
            return [r + 1e-9, 2.0 * r + 1.0, 1e6].iter().all(|&y| self.evaluate(y) == 0.0 && self.evaluate(-y) == 0.0);
        }
        let weighted = |y: f64| self.evaluate(y) * (1.0 + y.abs()).powf(beta);
        let mut head = 0.0f64;
        let mut tail = 0.0f64;
        for j in -40..=60 {
            let y = 10f64.powf(j as f64 / 10.0);
            let m = weighted(y).max(weighted(-y));
            if y < 1e5 {
                head = head.max(m);
            } else {
                tail = tail.max(m);
            }
        }
        head = head.max(weighted(0.0));
        tail.is_finite() && tail <= head * (1.0 + 1e-6)
    }

    /// Closed-form Poisson extension, where one is available.
    pub fn harmonic_extension(&self, p: &HalfPlanePoint) -> Option<f64> {
        let (u, v) = (p.re, p.im);
        match *self {
            BoundaryProfile::Zero => Some(0.0),
            BoundaryProfile::Constant { height } => Some(height),
            BoundaryProfile::Step { start, height } => Some(height * (0.5 + ((u - start) / v).atan() / PI)),
            BoundaryProfile::Cauchy { center, width, height } => {
                let vv = v + width;
                Some(height * width * vv / (vv * vv + (u - center).powi(2)))
            }
            BoundaryProfile::Bump { center, width, height } => Some(height * tent_extension(u - center, v, width)),
            BoundaryProfile::AlgebraicTail { .. } => None,
        }
    }

    /// Bound on the Poisson extension far from the origin, if it decays.
    pub fn tail_envelope(&self) -> Option<TailEnvelope> {
        match *self {
            BoundaryProfile::Zero => Some(TailEnvelope {
                amplitude: 0.0,
                rate: 1.0,
                onset: 0.0,
            }),
            BoundaryProfile::Constant { height } | BoundaryProfile::Step { height, .. } => {
                if height == 0.0 {
                    Some(TailEnvelope {
                        amplitude: 0.0,
                        rate: 1.0,
                        onset: 0.0,
                    })
                } else {
                    None
                }
            }
            BoundaryProfile::Bump { center, width, height } => Some(TailEnvelope {
                // |y - W| >= |W|/2 on the support and the kernel is <= 4/|W|.
                amplitude: 4.0 * height * width / PI,
                rate: 1.0,
                onset: 2.0 * (center.abs() + width),
            }),
            BoundaryProfile::Cauchy { center, width, height } => Some(TailEnvelope {
                amplitude: 2.0 * height * width,
                rate: 1.0,
                onset: 2.0 * center.abs(),
            }),
            BoundaryProfile::AlgebraicTail { exponent, height } => {
                // Split at |y| = |W|/2: the near part has mass I(|W|/2) under a
                // kernel <= 4/|W|, the far part is bounded by sup H̃ there.
                let beta = if (exponent - 1.0).abs() < 0.05 { 0.95 } else { exponent };
                let (amp, rate) = if beta < 1.0 {
                    (8.0 / (PI * (1.0 - beta)) + 2f64.powf(beta), beta)
                } else {
                    (8.0 / (PI * (beta - 1.0)) + 2f64.powf(beta), 1.0)
                };
                Some(TailEnvelope {
                    amplitude: height * amp,
                    rate,
                    onset: 2.0,
                })
            }
        }
    }

    pub fn has_closed_form(&self) -> bool {
        !matches!(self, BoundaryProfile::AlgebraicTail { .. })
    }

    /// Harmonic extension at `p`: closed form when available, quadrature otherwise.
    pub fn harmonic_at(&self, p: &HalfPlanePoint, tol: &Tolerance) -> Result<f64, CurrentError> {
        match self.harmonic_extension(p) {
            Some(h) => Ok(h),
            None => poisson_eval(self, p, tol),
        }
    }
}

/// Poisson extension of the unit tent `max(0, 1 - |x|/σ)` at `(U, V)`.
fn tent_extension(u: f64, v: f64, sigma: f64) -> f64 {
    let z = Complex64::new(u, v);
    if z.norm() > 20.0 * sigma {
        // Moment expansion: Im(1/(η - Z)) = -Σ η^n Im(Z^{-n-1}).
        let mut acc = 0.0;
        let zinv = z.inv();
        let zinv2 = zinv * zinv;
        let mut zpow = zinv;
        for j in 0..6 {
            let n = 2 * j;
            let mu = 2.0 * sigma.powi(n + 1) / (((n + 1) * (n + 2)) as f64);
            acc -= mu * zpow.im;
            zpow *= zinv2;
        }
        return acc / PI;
    }
    // Two linear pieces q(y) = 1 ± y/σ on [-σ, 0] and [0, σ].
    let piece = |y1: f64, y2: f64, q_at_u: f64, slope: f64| -> f64 {
        let a = (y2 - u) / v;
        let b = (y1 - u) / v;
        let dtheta = (a - b).atan2(1.0 + a * b);
        let d1 = (y1 - u).powi(2) + v * v;
        let log_ratio = ((y2 - y1) * (y2 + y1 - 2.0 * u) / d1).ln_1p();
        q_at_u * dtheta + slope * 0.5 * v * log_ratio
    };
    let left = piece(-sigma, 0.0, 1.0 + u / sigma, 1.0 / sigma);
    let right = piece(0.0, sigma, 1.0 - u / sigma, -1.0 / sigma);
    ((left + right) / PI).max(0.0)
}

/// `(1/π) ∫ H̃(y) V / (V² + (y - U)²) dy` by adaptive quadrature, split at
/// the kernel peak `y = U` and the profile's kinks.
pub fn poisson_eval(profile: &BoundaryProfile, p: &HalfPlanePoint, tol: &Tolerance) -> Result<f64, CurrentError> {
    if !(p.im > 0.0) {
        return Err(FoliationError::OutsideHalfPlane { re: p.re, im: p.im }.into());
    }
    if matches!(profile, BoundaryProfile::Zero) {
        return Ok(0.0);
    }
    let (u, v) = (p.re, p.im);
    if let Some(r) = profile.support_bound() {
        let kernel = |y: f64| profile.evaluate(y) * v / (v * v + (y - u) * (y - u)) / PI;
        let mut breaks = profile.kinks();
        breaks.extend([u - v, u, u + v]);
        let res = integrate_1d_with_breaks(kernel, Interval::Finite(-r, r), &breaks, tol)?;
        return Ok(res.value.max(0.0));
    }
    // y = U + V tan φ turns the kernel into the uniform measure dφ/π.
    let angle = |y: f64| ((y - u) / v).atan();
    let lo = match *profile {
        BoundaryProfile::Step { start, .. } => angle(start),
        _ => -0.5 * PI,
    };
    let breaks: Vec<f64> = profile.kinks().into_iter().map(angle).collect();
    let res = integrate_1d_with_breaks(
        |phi: f64| profile.evaluate(u + v * phi.tan()),
        Interval::Finite(lo, 0.5 * PI),
        &breaks,
        tol,
    )?;
    Ok((res.value / PI).max(0.0))
}

/// One atom of the transversal measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub alpha: Complex64,
    pub weight: f64,
    /// Profile for this leaf; the shared profile is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<BoundaryProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransversalMeasure {
    Atoms { atoms: Vec<Atom> },
    /// Uniform in `|α|` over the annulus, discretised at Gauss nodes.
    Radial { total_mass: f64, nodes: usize },
}

/// `T = ∫ h_α [P_α] dν(α)` in the singular flow box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentSpec {
    pub nu: TransversalMeasure,
    pub profile: BoundaryProfile,
    /// Collapse atoms sharing one profile into a single weighted profile.
    #[serde(default = "default_true")]
    pub aggregate: bool,
}

fn default_true() -> bool {
    true
}

impl CurrentSpec {
    /// One unit atom at the mid-annulus label.
    pub fn single_atom(sing: &Singularity, profile: BoundaryProfile) -> Self {
        Self {
            nu: TransversalMeasure::Atoms {
                atoms: vec![Atom {
                    alpha: sing.mid_annulus_label(),
                    weight: 1.0,
                    profile: None,
                }],
            },
            profile,
            aggregate: true,
        }
    }

    pub fn validate(&self, sing: &Singularity) -> Result<(), CurrentError> {
        self.profile.validate()?;
        match &self.nu {
            TransversalMeasure::Atoms { atoms } => {
                if atoms.is_empty() {
                    return Err(CurrentError::Invalid("transversal measure has no atoms".into()));
                }
                for a in atoms {
                    if !(a.weight >= 0.0 && a.weight.is_finite()) {
                        return Err(CurrentError::Invalid(format!("atom weight {} is negative or not finite", a.weight)));
                    }
                    if !sing.in_fundamental_annulus(a.alpha) {
                        return Err(CurrentError::Invalid(format!(
                            "atom |alpha| = {} outside [{}, 1)",
                            a.alpha.norm(),
                            sing.annulus_inner_radius()
                        )));
                    }
                    if let Some(p) = &a.profile {
                        p.validate()?;
                    }
                }
            }
            TransversalMeasure::Radial { total_mass, nodes } => {
                if !(total_mass.is_finite() && *total_mass >= 0.0) || *nodes == 0 {
                    return Err(CurrentError::Invalid("radial measure needs finite mass and at least one node".into()));
                }
            }
        }
        let total = self.total_mass();
        if !(total > 0.0 && total.is_finite()) {
            return Err(CurrentError::Invalid(format!("total transversal mass {total} must be positive")));
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        match &self.nu {
            TransversalMeasure::Atoms { atoms } => atoms.iter().map(|a| a.weight).sum(),
            TransversalMeasure::Radial { total_mass, .. } => *total_mass,
        }
    }

    /// Explicit atoms of `ν` (radial densities are discretised).
    pub fn atoms(&self, sing: &Singularity) -> Vec<Atom> {
        match &self.nu {
            TransversalMeasure::Atoms { atoms } => atoms.clone(),
            TransversalMeasure::Radial { total_mass, nodes } => {
                let lo = sing.annulus_inner_radius();
                let n = *nodes;
                (0..n)
                    .map(|i| {
                        let r = lo + (1.0 - lo) * (i as f64 + 0.5) / n as f64;
                        Atom {
                            alpha: Complex64::new(r, 0.0),
                            weight: total_mass / n as f64,
                            profile: None,
                        }
                    })
                    .collect()
            }
        }
    }

    /// `(weight, profile)` pairs to integrate against. With `aggregate` set
    /// and a single profile in use, this is one entry carrying the total
    /// weight, which is exact because every flow-box integral depends on
    /// `α` only through `H̃_α`.
    pub fn weighted_profiles(&self, sing: &Singularity) -> Vec<(f64, BoundaryProfile)> {
        let atoms = self.atoms(sing);
        let shared = atoms.iter().all(|a| a.profile.is_none() || a.profile == Some(self.profile));
        if self.aggregate && shared {
            return vec![(atoms.iter().map(|a| a.weight).sum(), self.profile)];
        }
        atoms
            .iter()
            .map(|a| (a.weight, a.profile.unwrap_or(self.profile)))
            .collect()
    }

    /// Profile attached to the leaf `α` (the nearest atom's, or the shared one).
    pub fn profile_for(&self, alpha: Complex64) -> BoundaryProfile {
        if let TransversalMeasure::Atoms { atoms } = &self.nu {
            if let Some(a) = atoms
                .iter()
                .filter(|a| (a.alpha - alpha).norm() < 1e-12)
                .find(|a| a.profile.is_some())
            {
                return a.profile.unwrap();
            }
        }
        self.profile
    }

    pub fn is_integrable(&self, sing: &Singularity) -> bool {
        self.weighted_profiles(sing)
            .iter()
            .all(|(w, p)| *w == 0.0 || p.is_integrable(sing.gamma))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrabilityReport {
    /// Total mass of `χ = ∫ H̃_α(y)(1 + |y|)^{1/γ - 1} dν(α)`, or a lower
    /// bound when not converged.
    pub chi_mass: f64,
    pub converged: bool,
}

/// Range used for the lower bound of a divergent χ-mass.
const DIVERGENT_CUTOFF: f64 = 1e6;

pub fn chi_mass(spec: &CurrentSpec, sing: &Singularity, tol: &Tolerance) -> Result<IntegrabilityReport, CurrentError> {
    spec.validate(sing)?;
    let weight_exp = 1.0 / sing.gamma - 1.0;
    let mut total = 0.0;
    let mut converged = true;
    for (w, profile) in spec.weighted_profiles(sing) {
        if w == 0.0 || profile.sup() == 0.0 {
            continue;
        }
        let f = |y: f64| profile.evaluate(y) * (1.0 + y.abs()).powf(weight_exp);
        let integrable = profile.is_integrable(sing.gamma);
        let interval = match (integrable, profile.support_bound()) {
            (false, _) => Interval::Finite(-DIVERGENT_CUTOFF, DIVERGENT_CUTOFF),
            (true, Some(r)) => Interval::Finite(-r, r),
            (true, None) => Interval::Line,
        };
        let mut breaks = profile.kinks();
        breaks.extend([-1.0, 0.0, 1.0]);
        let r: QuadResult = match integrate_1d_with_breaks(f, interval, &breaks, tol) {
            Ok(r) => r,
            Err(QuadError::NotConverged { best }) => {
                converged = false;
                best
            }
            Err(e) => return Err(e.into()),
        };
        converged &= integrable;
        total += w * r.value;
    }
    Ok(IntegrabilityReport {
        chi_mass: total,
        converged,
    })
}

/// Harmonic weight `h_α(ψ_α(ζ))`: the Poisson extension of `H̃_α` at `ζ^γ`.
pub fn leaf_density(
    spec: &CurrentSpec,
    sing: &Singularity,
    alpha: Complex64,
    zeta: &SectorPoint,
    tol: &Tolerance,
) -> Result<f64, CurrentError> {
    let w = sing.sector_to_halfplane(zeta)?;
    spec.profile_for(alpha).harmonic_at(&w, tol)
}

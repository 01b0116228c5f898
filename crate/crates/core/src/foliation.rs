//! Geometry of the linear vector field `z ∂z + λ w ∂w` near its hyperbolic
//! singular point at the origin of ℂ².
//!
//! Every leaf other than the two separatrices is parametrised by the sector
//! `S_λ = {v > 0, t > 0}` of the `ζ = u + iv` plane, where `t = b u + a v`.
//! The power map `τ ↦ τ^γ` then opens the sector onto the upper half plane.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack on the inner radius of the fundamental annulus.
pub const ANNULUS_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FoliationError {
    #[error("eigenvalue ratio {re}+{im}i is real: the singularity is not hyperbolic")]
    NotHyperbolic { re: f64, im: f64 },
    #[error("eigenvalues must be nonzero")]
    ZeroEigenvalue,
    #[error("point (u={u}, v={v}) lies outside the open sector")]
    OutsideSector { u: f64, v: f64 },
    #[error("half-plane point (U={re}, V={im}) has V <= 0")]
    OutsideHalfPlane { re: f64, im: f64 },
    #[error("leaf label alpha must be nonzero")]
    ZeroLeafLabel,
    #[error("point is not on the unit-bidisc piece of its leaf: {0}")]
    NotOnLeafPiece(String),
}

/// A normalised hyperbolic singularity with `λ = a + ib`, `b > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Singularity {
    pub a: f64,
    pub b: f64,
    /// Opening angle of the sector, in `(0, π)`.
    pub sector_angle: f64,
    /// `π / sector_angle`, always `> 1`.
    pub gamma: f64,
    /// True when the roles of `z` and `w` were swapped during normalisation.
    pub flipped: bool,
}

impl Singularity {
    /// Normalises the eigenvalue pair `(μ, λ)`.
    ///
    /// The ratio `λ/μ` is used as is when its imaginary part is positive;
    /// otherwise the coordinates are swapped and `μ/λ` is used instead.
    pub fn normalize(mu: Complex64, lambda: Complex64) -> Result<Self, FoliationError> {
        if mu.norm() == 0.0 || lambda.norm() == 0.0 {
            return Err(FoliationError::ZeroEigenvalue);
        }
        let ratio = lambda / mu;
        if ratio.im.abs() <= 1e-14 * ratio.norm() {
            return Err(FoliationError::NotHyperbolic {
                re: ratio.re,
                im: ratio.im,
            });
        }
        let (lam, flipped) = if ratio.im > 0.0 {
            (ratio, false)
        } else {
            (mu / lambda, true)
        };
        Ok(Self::from_normalized(lam.re, lam.im, flipped))
    }

    /// Shorthand for `normalize(1, lambda)`.
    pub fn from_lambda(lambda: Complex64) -> Result<Self, FoliationError> {
        Self::normalize(Complex64::new(1.0, 0.0), lambda)
    }

    fn from_normalized(a: f64, b: f64, flipped: bool) -> Self {
        // arctan(-b/a) on the (0, π) branch; atan2 covers a = 0 as π/2.
        let sector_angle = if a == 0.0 { PI / 2.0 } else { b.atan2(-a) };
        Self {
            a,
            b,
            sector_angle,
            gamma: PI / sector_angle,
            flipped,
        }
    }

    pub fn lambda(&self) -> Complex64 {
        Complex64::new(self.a, self.b)
    }

    pub fn lambda_norm(&self) -> f64 {
        self.a.hypot(self.b)
    }

    /// `t = b u + a v`.
    pub fn t_of(&self, u: f64, v: f64) -> f64 {
        self.b * u + self.a * v
    }

    /// Inverse of [`Singularity::t_of`] in `u`.
    pub fn u_of(&self, t: f64, v: f64) -> f64 {
        (t - self.a * v) / self.b
    }

    /// Inner radius `e^{-2πb}` of the fundamental annulus.
    pub fn annulus_inner_radius(&self) -> f64 {
        (-2.0 * PI * self.b).exp()
    }

    /// Membership in the half-open annulus `e^{-2πb} <= |α| < 1`.
    pub fn in_fundamental_annulus(&self, alpha: Complex64) -> bool {
        let r = alpha.norm();
        r >= self.annulus_inner_radius() - ANNULUS_SLACK && r < 1.0
    }

    /// The mid-annulus label `α = e^{-πb}`.
    pub fn mid_annulus_label(&self) -> Complex64 {
        Complex64::new((-PI * self.b).exp(), 0.0)
    }

    /// The point of the sector with coordinates `(t, v)`.
    pub fn sector_point_tv(&self, t: f64, v: f64) -> Result<SectorPoint, FoliationError> {
        let u = self.u_of(t, v);
        if !(v > 0.0 && t > 0.0) {
            return Err(FoliationError::OutsideSector { u, v });
        }
        Ok(SectorPoint { u, v, t })
    }

    /// The point `ζ = u + iv`, rejected unless it lies in the open sector.
    pub fn sector_point(&self, u: f64, v: f64) -> Result<SectorPoint, FoliationError> {
        let t = self.t_of(u, v);
        if !(v > 0.0 && t > 0.0) {
            return Err(FoliationError::OutsideSector { u, v });
        }
        Ok(SectorPoint { u, v, t })
    }

    /// `ψ_α(ζ)`: the point of the leaf `L_α` with parameter `ζ`.
    ///
    /// Moduli are assembled directly as `|z| = e^{-v}` and `|w| = e^{-t}`,
    /// which is the same map with the cancellation `log|α| - b·log|α|/b`
    /// done exactly.
    pub fn leaf_point(&self, alpha: Complex64, zeta: &SectorPoint) -> Result<LeafPoint, FoliationError> {
        if alpha.norm() == 0.0 {
            return Err(FoliationError::ZeroLeafLabel);
        }
        Ok(self.leaf_point_unchecked(alpha, zeta.u, zeta.v))
    }

    /// `ψ_α(u + iv)` for arbitrary `(u, v)`, without sector checks.
    pub fn leaf_point_unchecked(&self, alpha: Complex64, u: f64, v: f64) -> LeafPoint {
        let shift = alpha.norm().ln() / self.b;
        let t = self.t_of(u, v);
        let z = Complex64::from_polar((-v).exp(), u + shift);
        let w = Complex64::from_polar((-t).exp(), alpha.arg() + self.a * (u + shift) - self.b * v);
        LeafPoint { z, w, alpha }
    }

    /// `‖ψ'_α(ζ)‖² = |z|² + |λ|²|w|²`.
    pub fn leaf_speed_sq(&self, p: &LeafPoint) -> f64 {
        p.z.norm_sqr() + self.lambda().norm_sqr() * p.w.norm_sqr()
    }

    /// `‖ψ'_α(ζ)‖²` from sector coordinates alone: `e^{-2v} + |λ|² e^{-2t}`.
    pub fn leaf_speed_sq_tv(&self, t: f64, v: f64) -> f64 {
        (-2.0 * v).exp() + self.lambda().norm_sqr() * (-2.0 * t).exp()
    }

    /// `τ ↦ τ^γ`, evaluated in polar form with the angle taken in the sector.
    pub fn sector_to_halfplane(&self, zeta: &SectorPoint) -> Result<HalfPlanePoint, FoliationError> {
        let theta = zeta.v.atan2(zeta.u);
        if !(zeta.v > 0.0 && theta > 0.0 && theta < self.sector_angle) {
            return Err(FoliationError::OutsideSector { u: zeta.u, v: zeta.v });
        }
        Ok(self.power_map(zeta.u, zeta.v))
    }

    /// The power map without membership checks; callers guarantee `(u, v) ∈ S_λ`.
    pub fn power_map(&self, u: f64, v: f64) -> HalfPlanePoint {
        let rho = u.hypot(v);
        let theta = v.atan2(u);
        let mag = rho.powf(self.gamma);
        let phase = self.gamma * theta;
        HalfPlanePoint {
            re: mag * phase.cos(),
            im: mag * phase.sin(),
        }
    }

    /// `(U, V)` as a function of `(t, v)`.
    pub fn power_map_tv(&self, t: f64, v: f64) -> HalfPlanePoint {
        self.power_map(self.u_of(t, v), v)
    }

    /// Principal `γ`-th root, landing in the open sector.
    pub fn halfplane_to_sector(&self, p: &HalfPlanePoint) -> Result<SectorPoint, FoliationError> {
        if !(p.im > 0.0) {
            return Err(FoliationError::OutsideHalfPlane { re: p.re, im: p.im });
        }
        let mag = p.re.hypot(p.im).powf(1.0 / self.gamma);
        let theta = p.im.atan2(p.re) / self.gamma;
        let u = mag * theta.cos();
        let v = mag * theta.sin();
        Ok(SectorPoint {
            u,
            v,
            t: self.t_of(u, v),
        })
    }

    /// Recovers `(u, v)` from a leaf point whose label is known, verifying
    /// that the point really is `ψ_α(u + iv)` with `(u, v)` in the sector.
    pub fn locate_on_leaf(&self, p: &LeafPoint) -> Result<SectorPoint, FoliationError> {
        if p.alpha.norm() == 0.0 {
            return Err(FoliationError::ZeroLeafLabel);
        }
        let (rz, rw) = (p.z.norm(), p.w.norm());
        if !(rz > 0.0 && rz < 1.0 && rw > 0.0 && rw < 1.0) {
            return Err(FoliationError::NotOnLeafPiece(format!(
                "|z| = {rz}, |w| = {rw} outside (0, 1)"
            )));
        }
        let v = -rz.ln();
        let t = -rw.ln();
        let zeta = self.sector_point_tv(t, v)?;
        let back = self.leaf_point_unchecked(p.alpha, zeta.u, zeta.v);
        let mismatch = (back.z - p.z).norm() + (back.w - p.w).norm();
        if mismatch > 1e-9 {
            return Err(FoliationError::NotOnLeafPiece(format!(
                "phases inconsistent with leaf label (mismatch {mismatch:e})"
            )));
        }
        Ok(zeta)
    }
}

/// A point `ζ = u + iv` of the sector, together with `t = b u + a v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorPoint {
    pub u: f64,
    pub v: f64,
    pub t: f64,
}

impl SectorPoint {
    pub fn min_coord(&self) -> f64 {
        self.v.min(self.t)
    }

    pub fn max_coord(&self) -> f64 {
        self.v.max(self.t)
    }

    pub fn as_complex(&self) -> Complex64 {
        Complex64::new(self.u, self.v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlanePoint {
    /// `U`
    pub re: f64,
    /// `V`, positive.
    pub im: f64,
}

impl HalfPlanePoint {
    pub fn new(re: f64, im: f64) -> Result<Self, FoliationError> {
        if !(im > 0.0) {
            return Err(FoliationError::OutsideHalfPlane { re, im });
        }
        Ok(Self { re, im })
    }

    pub fn as_complex(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// A point `(z, w)` of ℂ² on the leaf labelled `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafPoint {
    pub z: Complex64,
    pub w: Complex64,
    pub alpha: Complex64,
}

impl LeafPoint {
    /// Euclidean norm of `(z, w)`.
    pub fn norm(&self) -> f64 {
        self.z.norm().hypot(self.w.norm())
    }

    pub fn in_unit_bidisc(&self) -> bool {
        self.z.norm() < 1.0 && self.w.norm() < 1.0
    }

    /// Euclidean distance to an ambient point.
    pub fn distance_to(&self, x: [Complex64; 2]) -> f64 {
        (self.z - x[0]).norm().hypot((self.w - x[1]).norm())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn normalize_quarter_plane() {
        let s = Singularity::normalize(c(2.0, 0.0), c(0.0, 2.0)).unwrap();
        assert_eq!(s.a, 0.0);
        assert!((s.b - 1.0).abs() < 1e-15);
        assert!((s.sector_angle - PI / 2.0).abs() < 1e-15);
        assert!((s.gamma - 2.0).abs() < 1e-15);
        assert!(!s.flipped);
    }

    #[test]
    fn normalize_flips_when_imaginary_part_negative() {
        let s = Singularity::normalize(c(1.0, 0.0), c(1.0, -1.0)).unwrap();
        assert!(s.flipped);
        assert!((s.a - 0.5).abs() < 1e-15);
        assert!((s.b - 0.5).abs() < 1e-15);
        assert!((s.sector_angle - 3.0 * PI / 4.0).abs() < 1e-14);
        assert!((s.gamma - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn normalize_rejects_real_ratio() {
        let err = Singularity::normalize(c(1.0, 0.0), c(3.0, 0.0)).unwrap_err();
        assert!(matches!(err, FoliationError::NotHyperbolic { .. }));
    }

    #[test]
    fn acute_sector_for_negative_real_part() {
        let s = Singularity::from_lambda(c(-1.0, 1.0)).unwrap();
        assert!((s.sector_angle - PI / 4.0).abs() < 1e-15);
        assert!((s.gamma - 4.0).abs() < 1e-14);
    }

    #[test]
    fn leaf_point_base_values() {
        let s = Singularity::from_lambda(c(0.0, 1.0)).unwrap();
        // ζ = 0 is on the sector boundary; evaluate the map directly.
        let p = s.leaf_point_unchecked(c(1.0, 0.0), 0.0, 0.0);
        assert!((p.z - c(1.0, 0.0)).norm() < 1e-15);
        assert!((p.w - c(1.0, 0.0)).norm() < 1e-15);

        let p = s.leaf_point_unchecked(c(0.5, 0.0), 2f64.ln(), 0.0);
        assert!((p.z - c(1.0, 0.0)).norm() < 1e-15);
        assert!((p.w - c(0.5, 0.0)).norm() < 1e-15);

        let p = s.leaf_point_unchecked(c(1.0, 0.0), 0.0, 1.0);
        assert!((p.z.norm() - (-1f64).exp()).abs() < 1e-15);
        assert!((p.w.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn leaf_point_rejects_zero_label() {
        let s = Singularity::from_lambda(c(0.0, 1.0)).unwrap();
        let z = s.sector_point(1.0, 1.0).unwrap();
        assert_eq!(s.leaf_point(c(0.0, 0.0), &z), Err(FoliationError::ZeroLeafLabel));
    }

    #[test]
    fn speed_examples() {
        let s = Singularity::from_lambda(c(0.0, 1.0)).unwrap();
        let p = LeafPoint {
            z: c(1.0, 0.0),
            w: c(0.0, 1.0),
            alpha: c(1.0, 0.0),
        };
        assert!((s.leaf_speed_sq(&p) - 2.0).abs() < 1e-15);
        let zeta = s.sector_point_tv(3.0, 3.0).unwrap();
        let p = s.leaf_point(c(0.7, 0.0), &zeta).unwrap();
        assert!((s.leaf_speed_sq(&p) - 2.0 * (-6f64).exp()).abs() < 1e-17);
    }

    #[test]
    fn power_map_examples() {
        let s = Singularity::from_lambda(c(0.0, 1.0)).unwrap();
        let z = s.sector_point((PI / 4.0).cos(), (PI / 4.0).sin()).unwrap();
        let p = s.sector_to_halfplane(&z).unwrap();
        assert!(p.re.abs() < 1e-15 && (p.im - 1.0).abs() < 1e-15);

        let z = s.sector_point(2.0 * (PI / 8.0).cos(), 2.0 * (PI / 8.0).sin()).unwrap();
        let p = s.sector_to_halfplane(&z).unwrap();
        assert!((p.re - 4.0 * (PI / 4.0).cos()).abs() < 1e-14);
        assert!((p.im - 4.0 * (PI / 4.0).sin()).abs() < 1e-14);
    }

    #[test]
    fn inverse_power_map_examples() {
        let s = Singularity::from_lambda(c(0.0, 1.0)).unwrap();
        let z = s.halfplane_to_sector(&HalfPlanePoint { re: 0.0, im: 1.0 }).unwrap();
        assert!((z.as_complex() - Complex64::from_polar(1.0, PI / 4.0)).norm() < 1e-15);

        let s = Singularity::normalize(c(1.0, 0.0), c(1.0, -1.0)).unwrap();
        let z = s.halfplane_to_sector(&HalfPlanePoint { re: 0.0, im: 1.0 }).unwrap();
        assert!((z.as_complex() - Complex64::from_polar(1.0, 3.0 * PI / 8.0)).norm() < 1e-15);
        assert!(s.halfplane_to_sector(&HalfPlanePoint { re: 1.0, im: 0.0 }).is_err());
    }

    #[test]
    fn sector_membership() {
        let s = Singularity::from_lambda(c(1.0, 1.0)).unwrap();
        assert!(s.sector_point(1.0, -0.1).is_err());
        // t = u + v must be positive
        assert!(s.sector_point(-2.0, 1.0).is_err());
        assert!(s.sector_point(-0.5, 1.0).is_ok());
    }

    #[test]
    fn annulus_is_half_open() {
        let s = Singularity::from_lambda(c(0.0, 1.0)).unwrap();
        assert!(s.in_fundamental_annulus(c(s.annulus_inner_radius(), 0.0)));
        assert!(!s.in_fundamental_annulus(c(1.0, 0.0)));
        assert!(s.in_fundamental_annulus(s.mid_annulus_label()));
    }

    #[test]
    fn locate_on_leaf_roundtrip_and_rejection() {
        let s = Singularity::from_lambda(c(0.3, 0.8)).unwrap();
        let alpha = s.mid_annulus_label();
        let z = s.sector_point(0.4, 1.3).unwrap();
        let p = s.leaf_point(alpha, &z).unwrap();
        let back = s.locate_on_leaf(&p).unwrap();
        assert!((back.u - z.u).abs() < 1e-12 && (back.v - z.v).abs() < 1e-12);

        let mut off = p;
        off.w *= Complex64::from_polar(1.0, 0.5);
        assert!(matches!(s.locate_on_leaf(&off), Err(FoliationError::NotOnLeafPiece(_))));
    }

    fn lambda_strategy() -> impl Strategy<Value = Singularity> {
        (-3.0f64..3.0, 0.2f64..3.0).prop_map(|(a, b)| Singularity::from_lambda(c(a, b)).unwrap())
    }

    fn sector_strategy() -> impl Strategy<Value = (Singularity, f64, f64)> {
        (lambda_strategy(), 0.01f64..20.0, 0.01f64..20.0)
    }

    proptest! {
        #[test]
        fn moduli_law((s, t, v) in sector_strategy(), arg in -PI..PI, rad in 0.0f64..1.0) {
            let alpha = Complex64::from_polar(
                s.annulus_inner_radius() + rad * (1.0 - s.annulus_inner_radius()) * 0.999,
                arg,
            );
            let zeta = s.sector_point_tv(t, v).unwrap();
            let p = s.leaf_point(alpha, &zeta).unwrap();
            prop_assert!((p.z.norm() - (-v).exp()).abs() <= 1e-12 * (-v).exp().max(1e-300));
            prop_assert!((p.w.norm() - (-t).exp()).abs() <= 1e-12 * (-t).exp().max(1e-300));
            let speed = s.leaf_speed_sq(&p);
            prop_assert!(speed <= (1.0 + s.lambda_norm()).powi(2) * (-2.0 * v.min(t)).exp() * (1.0 + 1e-12));
        }

        #[test]
        fn ball_sandwich((s, t, v) in sector_strategy(), r in 1e-4f64..0.999) {
            let zeta = s.sector_point_tv(t, v).unwrap();
            let p = s.leaf_point(c(0.5, 0.1), &zeta).unwrap();
            let m = v.min(t);
            if p.norm() <= r {
                prop_assert!(m >= -r.ln() - 1e-12);
            }
            if m >= -r.ln() + 2f64.ln() / 2.0 + 1e-12 {
                prop_assert!(p.norm() <= r);
            }
        }

        #[test]
        fn power_map_roundtrip((s, t, v) in sector_strategy()) {
            let zeta = s.sector_point_tv(t, v).unwrap();
            let w = s.sector_to_halfplane(&zeta).unwrap();
            prop_assert!(w.im > 0.0);
            let back = s.halfplane_to_sector(&w).unwrap();
            let scale = zeta.as_complex().norm().max(1.0);
            prop_assert!((back.as_complex() - zeta.as_complex()).norm() <= 1e-12 * scale);
        }

        #[test]
        fn angle_comparability((s, t, v) in (lambda_strategy(), 1.0f64..50.0, 1.0f64..50.0)) {
            let zeta = s.sector_point_tv(t, v).unwrap();
            let sin_theta = zeta.v / zeta.as_complex().norm();
            let ratio = sin_theta / (v / v.max(t));
            // max(v, t) <= OM <= (1 + (1 + |a|)/b) max(v, t)
            let k = 1.0 + (1.0 + s.a.abs()) / s.b;
            let lam = s.lambda_norm().max(1.0);
            prop_assert!(ratio >= 1.0 / k - 1e-12 && ratio <= lam + 1e-12);
        }
    }
}

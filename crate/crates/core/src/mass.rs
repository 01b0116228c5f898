//! Mass of a current in Euclidean balls and the Lelong-number diagnostics.
//!
//! With `s = -ln r`, `F(r) = r² G(r)` and
//!
//! ```text
//! G(r) = Σ_j w_j (2/b) ∫∫_{e^{-2t} + e^{-2v} <= e^{-2s}} h_j (e^{2s-2v} + |λ|² e^{2s-2t}) dt dv
//! ```
//!
//! Everything is computed on the `G` scale so that small radii do not
//! underflow.

use std::cell::Cell;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::current::{BoundaryProfile, CurrentError, CurrentSpec};
use crate::foliation::Singularity;
use crate::kernel::{kernel_decay, kernel_k, level_crossings, poisson_kernel_tv, KernelError, KernelQuery};
use crate::quad::{
    integrate_1d_with_breaks, integrate_2d_with_breaks, CornerDomain, CornerPiece, DecayDescriptor, Interval, QuadError,
    QuadResult, Tolerance,
};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum MassError {
    #[error("radius {0} is not in (0, 1)")]
    InvalidRadius(f64),
    #[error("radius grid must be nonempty and strictly decreasing in (0, 1)")]
    InvalidGrid,
    #[error(transparent)]
    Current(#[from] CurrentError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

impl MassError {
    /// The partial value carried by a non-convergence error.
    pub fn best_estimate(&self) -> Option<QuadResult> {
        match self {
            MassError::Current(CurrentError::Quadrature(q)) | MassError::Kernel(KernelError::Quadrature(q)) => {
                q.best_estimate()
            }
            _ => None,
        }
    }
}

impl From<QuadError> for MassError {
    fn from(e: QuadError) -> Self {
        MassError::Current(CurrentError::Quadrature(e))
    }
}

fn s_of_r(r: f64) -> Result<f64, MassError> {
    if r > 0.0 && r < 1.0 {
        Ok(-r.ln())
    } else {
        Err(MassError::InvalidRadius(r))
    }
}

/// Which weight multiplies the leaf density.
#[derive(Debug, Clone, Copy)]
enum Weight {
    /// `(2/b)(e^{2s-2v} + |λ|² e^{2s-2t})`, the `G` integrand.
    Speed,
    /// `(π/b) e^{2s - 2 min}`, the kernel side of the `G` bound.
    KernelSide,
    /// `(2/b)(1 + |λ|)² e^{2s - 2 min}`, the intermediate bound.
    MinExponential,
}

/// Integrates `weight · h` for one profile over a corner domain.
fn weighted_density_integral(
    sing: &Singularity,
    profile: &BoundaryProfile,
    domain: CornerDomain,
    weight: Weight,
    tol: &Tolerance,
) -> Result<QuadResult, MassError> {
    if profile.sup() == 0.0 {
        return Ok(QuadResult::zero());
    }
    let env = profile
        .tail_envelope()
        .ok_or_else(|| CurrentError::NotIntegrable(format!("{profile:?} has no decaying Poisson extension")))?;
    let s = domain.s();
    let g = sing.gamma;
    let lam2 = sing.lambda().norm_sqr();
    let c = sing.lambda_norm().max(1.0);
    // e^{2s-2v} + |λ|² e^{2s-2t} <= (1 + |λ|²) e^{-2(m - s)} and |W| >= (M/c)^γ.
    let (prefactor, weight_bound) = match weight {
        Weight::Speed => (2.0 / sing.b, 1.0 + lam2),
        Weight::KernelSide => (PI / sing.b, 1.0),
        Weight::MinExponential => (2.0 * (1.0 + sing.lambda_norm()).powi(2) / sing.b, 1.0),
    };
    let decay = DecayDescriptor {
        exp_rate: 2.0,
        alg_rate: g * env.rate,
        far_amplitude: weight_bound * env.amplitude * c.powf(g * env.rate),
        near_amplitude: weight_bound * profile.sup(),
        onset: c * env.onset.powf(1.0 / g),
    };
    if !profile.has_closed_form() {
        return exchanged_order_integral(sing, profile, domain, weight, weight_bound, prefactor, tol);
    }
    let poisson_tol = Tolerance::new(tol.rel * 0.01, 1e-300, tol.max_evals)?;
    let failed = Cell::new(false);
    let f = |t: f64, v: f64| {
        let w = sing.power_map_tv(t, v);
        let h = match profile.harmonic_at(&w, &poisson_tol) {
            Ok(h) => h,
            Err(CurrentError::Quadrature(QuadError::NotConverged { best })) => best.value,
            Err(_) => {
                failed.set(true);
                f64::NAN
            }
        };
        let wt = match weight {
            Weight::Speed => (2.0 * (s - v)).exp() + lam2 * (2.0 * (s - t)).exp(),
            Weight::KernelSide | Weight::MinExponential => (2.0 * (s - t.min(v))).exp(),
        };
        h * wt
    };
    let kinks = profile.kinks();
    let hi = 4.0 * decay.onset.max(s) + 10.0;
    let breaks = |piece: CornerPiece, m: f64| {
        kinks
            .iter()
            .flat_map(|&y| level_crossings(sing, piece, m, y, hi))
            .collect::<Vec<_>>()
    };
    let inner_tol = Tolerance {
        abs: tol.abs / prefactor,
        ..*tol
    };
    let r = integrate_2d_with_breaks(f, domain, &decay, breaks, &inner_tol);
    if failed.get() {
        return Err(CurrentError::Invalid("leaf density evaluation failed".into()).into());
    }
    let (r, _) = r?;
    Ok(r.scaled(prefactor))
}

/// Same integral with the profile integral outermost:
/// `prefactor/π ∫ H̃(y) [∫∫ weight · V/(V² + (y - U)²) dt dv] dy`.
fn exchanged_order_integral(
    sing: &Singularity,
    profile: &BoundaryProfile,
    domain: CornerDomain,
    weight: Weight,
    weight_bound: f64,
    prefactor: f64,
    tol: &Tolerance,
) -> Result<QuadResult, MassError> {
    let s = domain.s();
    let lam2 = sing.lambda().norm_sqr();
    let inner_tol = Tolerance {
        abs: tol.abs * 0.01 / prefactor,
        ..*tol
    };
    let failed = Cell::new(false);
    let fatal = Cell::new(None);
    let worst = Cell::new(0.0f64);
    let outer = |y: f64| -> f64 {
        let hy = profile.evaluate(y);
        if hy == 0.0 {
            return 0.0;
        }
        let mut decay = kernel_decay(sing, s, y);
        decay.far_amplitude *= weight_bound;
        decay.near_amplitude *= weight_bound;
        let f = |t: f64, v: f64| {
            let wt = match weight {
                Weight::Speed => (2.0 * (s - v)).exp() + lam2 * (2.0 * (s - t)).exp(),
                Weight::KernelSide | Weight::MinExponential => (2.0 * (s - t.min(v))).exp(),
            };
            wt * poisson_kernel_tv(sing, t, v, y)
        };
        let hi = 4.0 * decay.onset.max(s) + 10.0;
        let breaks = |piece: CornerPiece, m: f64| level_crossings(sing, piece, m, y, hi);
        let q = match integrate_2d_with_breaks(f, domain, &decay, breaks, &inner_tol) {
            Ok((q, _)) => q,
            Err(QuadError::NotConverged { best }) => {
                if best.error > 10.0 * inner_tol.abs.max(inner_tol.rel * best.value.abs()) {
                    failed.set(true);
                }
                best
            }
            Err(e) => {
                fatal.set(Some(e));
                return f64::NAN;
            }
        };
        if q.value > 0.0 {
            worst.set(worst.get().max(q.error / q.value));
        }
        hy * q.value
    };
    let mut breaks = profile.kinks();
    breaks.extend([-1.0, 1.0]);
    let outer_tol = Tolerance {
        abs: tol.abs / prefactor,
        ..*tol
    };
    let r = integrate_1d_with_breaks(outer, Interval::Line, &breaks, &outer_tol);
    if let Some(e) = fatal.take() {
        return Err(e.into());
    }
    let mut r = match r {
        Ok(r) => r,
        Err(QuadError::NotConverged { best }) => {
            failed.set(true);
            best
        }
        Err(e) => return Err(e.into()),
    };
    // Q > 0, so a uniform relative error in Q carries over to the outer integral.
    r.error += worst.get() * r.value.abs();
    let r = r.scaled(prefactor / PI);
    if failed.get() {
        return Err(QuadError::NotConverged { best: r }.into());
    }
    Ok(r)
}

fn sum_over_profiles(
    spec: &CurrentSpec,
    sing: &Singularity,
    domain: CornerDomain,
    weight: Weight,
    tol: &Tolerance,
) -> Result<QuadResult, MassError> {
    spec.validate(sing)?;
    let mut acc = QuadResult {
        value: 0.0,
        error: 0.0,
        evals: 0,
    };
    let pieces = spec.weighted_profiles(sing);
    let n = pieces.len().max(1) as f64;
    for (w, p) in pieces {
        if w == 0.0 {
            continue;
        }
        let part_tol = Tolerance {
            abs: tol.abs / (w * n),
            ..*tol
        };
        acc = acc + weighted_density_integral(sing, &p, domain, weight, &part_tol)?.scaled(w);
    }
    Ok(acc)
}

/// `G(r) = F(r)/r²` with its error estimate.
pub fn mass_g(spec: &CurrentSpec, sing: &Singularity, r: f64, tol: &Tolerance) -> Result<QuadResult, MassError> {
    let s = s_of_r(r)?;
    sum_over_profiles(spec, sing, CornerDomain::Ball { s }, Weight::Speed, tol)
}

/// `F(r)`, the trace mass of the ball of radius `r`.
pub fn mass_f(spec: &CurrentSpec, sing: &Singularity, r: f64, tol: &Tolerance) -> Result<QuadResult, MassError> {
    let g_tol = Tolerance {
        abs: tol.abs / (r * r),
        ..*tol
    };
    Ok(mass_g(spec, sing, r, &g_tol)?.scaled(r * r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotoneViolation {
    pub r: f64,
    /// `G(r) - G(r_prev) - (err + err_prev)`, positive.
    pub excess: f64,
}

/// Least-squares line `y = intercept + slope · x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs[..n].iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs[..n].iter().zip(&ys[..n]).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some(LinearFit {
        intercept: my - slope * mx,
        slope,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassProfile {
    pub r_grid: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub f_err: Vec<f64>,
    pub g_err: Vec<f64>,
    /// `G` at the smallest radius.
    pub lelong_estimate: f64,
    /// Fit of `G` against `|ln r|^{1-γ}`; the intercept extrapolates `r → 0`.
    pub extrapolation: Option<LinearFit>,
    /// Fit of `ln G` against `ln |ln r|`.
    pub log_log_fit: Option<LinearFit>,
    pub monotone_violations: Vec<MonotoneViolation>,
    /// Radii whose `G` did not reach the tolerance; the best estimate is kept.
    pub unconverged: Vec<f64>,
}

/// `r_k = 2^{-k}`, `k = 1..=n`.
pub fn default_r_grid(n: usize) -> Vec<f64> {
    (1..=n).map(|k| 0.5f64.powi(k as i32)).collect()
}

pub fn mass_profile(
    spec: &CurrentSpec,
    sing: &Singularity,
    r_grid: &[f64],
    tol: &Tolerance,
) -> Result<MassProfile, MassError> {
    if r_grid.is_empty() || r_grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(MassError::InvalidGrid);
    }
    for &r in r_grid {
        s_of_r(r)?;
    }
    let runs: Vec<(QuadResult, bool)> = r_grid
        .par_iter()
        .map(|&r| match mass_g(spec, sing, r, tol) {
            Ok(q) => Ok((q, true)),
            Err(e) => e.best_estimate().map(|q| (q, false)).ok_or(e),
        })
        .collect::<Result<_, _>>()?;
    let unconverged = r_grid.iter().zip(&runs).filter(|(_, run)| !run.1).map(|(&r, _)| r).collect();
    let gs: Vec<QuadResult> = runs.into_iter().map(|(q, _)| q).collect();
    let g: Vec<f64> = gs.iter().map(|q| q.value).collect();
    let g_err: Vec<f64> = gs.iter().map(|q| q.error).collect();
    let f: Vec<f64> = r_grid.iter().zip(&g).map(|(r, g)| g * r * r).collect();
    let f_err: Vec<f64> = r_grid.iter().zip(&g_err).map(|(r, e)| e * r * r).collect();
    let monotone_violations = (1..g.len())
        .filter_map(|k| {
            let excess = g[k] - g[k - 1] - (g_err[k] + g_err[k - 1]);
            (excess > 0.0).then_some(MonotoneViolation { r: r_grid[k], excess })
        })
        .collect();
    let ls: Vec<f64> = r_grid.iter().map(|r| -r.ln()).collect();
    let xs: Vec<f64> = ls.iter().map(|l| l.powf(1.0 - sing.gamma)).collect();
    let extrapolation = linear_fit(&xs, &g);
    let log_log_fit = if g.iter().all(|&v| v > 0.0) {
        let lx: Vec<f64> = ls.iter().map(|l| l.ln()).collect();
        let ly: Vec<f64> = g.iter().map(|v| v.ln()).collect();
        linear_fit(&lx, &ly)
    } else {
        None
    };
    Ok(MassProfile {
        lelong_estimate: *g.last().unwrap(),
        r_grid: r_grid.to_vec(),
        f,
        g,
        f_err,
        g_err,
        extrapolation,
        log_log_fit,
        monotone_violations,
        unconverged,
    })
}

/// `g_s(y) = K_s(y) (1 + |y|)^{1 - 1/γ}`.
pub fn g_profile(sing: &Singularity, s: f64, y: f64, tol: &Tolerance) -> Result<QuadResult, MassError> {
    let k = kernel_k(sing, &KernelQuery::new(s, y)?, tol)?;
    Ok(k.scaled((1.0 + y.abs()).powf(1.0 - 1.0 / sing.gamma)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GBound {
    /// `G(r)`
    pub lhs: QuadResult,
    /// `Σ w_j ∫ K_s(y) H̃_j(y) dy` with `s = -ln r`.
    pub rhs: QuadResult,
}

impl GBound {
    pub fn ratio(&self) -> f64 {
        if self.rhs.value == 0.0 {
            0.0
        } else {
            self.lhs.value / self.rhs.value
        }
    }
}

/// Both sides of the kernel bound for `G(r)`. The right side is evaluated
/// after exchanging the `y` and `(t, v)` integrals, which turns
/// `∫ K_s H̃ dy` into `(π/b) ∫∫_{min >= s} e^{2s - 2 min} h dt dv`.
pub fn bound_g_via_kernel(
    spec: &CurrentSpec,
    sing: &Singularity,
    r: f64,
    tol: &Tolerance,
) -> Result<GBound, MassError> {
    let s = s_of_r(r)?;
    Ok(GBound {
        lhs: mass_g(spec, sing, r, tol)?,
        rhs: sum_over_profiles(spec, sing, CornerDomain::Quadrant { s }, Weight::KernelSide, tol)?,
    })
}

/// `(F(r), (1 + |λ|)² (2/b) ∫∫_{min >= s} h e^{-2 min} dt dv)`; the first
/// should not exceed the second.
pub fn intermediate_bound(
    spec: &CurrentSpec,
    sing: &Singularity,
    r: f64,
    tol: &Tolerance,
) -> Result<(QuadResult, QuadResult), MassError> {
    let s = s_of_r(r)?;
    let lhs = mass_g(spec, sing, r, tol)?;
    let rhs = sum_over_profiles(spec, sing, CornerDomain::Quadrant { s }, Weight::MinExponential, tol)?;
    Ok((lhs.scaled(r * r), rhs.scaled(r * r)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn sing_i() -> Singularity {
        Singularity::from_lambda(Complex64::new(0.0, 1.0)).unwrap()
    }

    fn tol() -> Tolerance {
        Tolerance::new(1e-7, 1e-10, 2_000_000).unwrap()
    }

    fn bump() -> BoundaryProfile {
        BoundaryProfile::Bump {
            center: 0.0,
            width: 1.0,
            height: 1.0,
        }
    }

    #[test]
    fn zero_profile_has_no_mass() {
        let s = sing_i();
        let spec = CurrentSpec::single_atom(&s, BoundaryProfile::Zero);
        assert_eq!(mass_f(&spec, &s, 0.5, &tol()).unwrap().value, 0.0);
        let p = mass_profile(&spec, &s, &default_r_grid(4), &tol()).unwrap();
        assert!(p.g.iter().all(|&g| g == 0.0));
        assert_eq!(p.lelong_estimate, 0.0);
        let b = bound_g_via_kernel(&spec, &s, 0.25, &tol()).unwrap();
        assert_eq!((b.lhs.value, b.rhs.value), (0.0, 0.0));
    }

    #[test]
    fn constant_profile_is_rejected() {
        let s = sing_i();
        let spec = CurrentSpec::single_atom(&s, BoundaryProfile::Constant { height: 1.0 });
        assert!(matches!(
            mass_f(&spec, &s, 0.5, &tol()),
            Err(MassError::Current(CurrentError::NotIntegrable(_)))
        ));
    }

    #[test]
    fn bad_radii() {
        let s = sing_i();
        let spec = CurrentSpec::single_atom(&s, bump());
        assert!(mass_f(&spec, &s, 1.0, &tol()).is_err());
        assert!(mass_f(&spec, &s, 0.0, &tol()).is_err());
        assert!(mass_profile(&spec, &s, &[0.25, 0.5], &tol()).is_err());
    }

    #[test]
    fn linear_in_weight_and_profile() {
        let s = sing_i();
        let one = mass_f(&CurrentSpec::single_atom(&s, bump()), &s, 0.5, &tol()).unwrap().value;
        let two = mass_f(&CurrentSpec::single_atom(&s, bump().scaled(2.0)), &s, 0.5, &tol()).unwrap().value;
        assert!((two - 2.0 * one).abs() < 1e-9 * two);
        let mut spec = CurrentSpec::single_atom(&s, bump());
        if let crate::current::TransversalMeasure::Atoms { atoms } = &mut spec.nu {
            atoms[0].weight = 2.0;
        }
        let w2 = mass_f(&spec, &s, 0.5, &tol()).unwrap().value;
        assert!((w2 - 2.0 * one).abs() < 1e-9 * w2);
    }

    #[test]
    fn aggregation_is_exact() {
        let s = sing_i();
        let atoms = vec![
            crate::current::Atom {
                alpha: s.mid_annulus_label(),
                weight: 0.5,
                profile: None,
            },
            crate::current::Atom {
                alpha: Complex64::new(0.5, 0.0),
                weight: 1.5,
                profile: None,
            },
        ];
        let mut spec = CurrentSpec {
            nu: crate::current::TransversalMeasure::Atoms { atoms },
            profile: bump(),
            aggregate: true,
        };
        let agg = mass_f(&spec, &s, 0.5, &tol()).unwrap().value;
        spec.aggregate = false;
        let each = mass_f(&spec, &s, 0.5, &tol()).unwrap().value;
        assert!((agg - each).abs() < 1e-8 * agg);
    }

    #[test]
    fn integration_orders_agree() {
        let s = Singularity::from_lambda(Complex64::new(0.0, 1.0)).unwrap();
        let p = BoundaryProfile::Cauchy {
            center: 0.5,
            width: 1.0,
            height: 1.0,
        };
        let lam2 = s.lambda().norm_sqr();
        let domain = CornerDomain::Ball { s: 1.0 };
        let tol = Tolerance::new(1e-5, 1e-10, 2_000_000).unwrap();
        let a = weighted_density_integral(&s, &p, domain, Weight::Speed, &tol).unwrap().value;
        let b = exchanged_order_integral(&s, &p, domain, Weight::Speed, 1.0 + lam2, 2.0 / s.b, &tol)
            .unwrap()
            .value;
        assert!((a - b).abs() < 1e-4 * a, "{a} vs {b}");
    }

    #[test]
    fn linear_fit_recovers_line() {
        let f = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
        assert!(linear_fit(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn g_profile_examples() {
        let s = sing_i();
        let g1 = g_profile(&s, 1.0, 0.0, &tol()).unwrap().value;
        let g128 = g_profile(&s, 128.0, 0.0, &tol()).unwrap().value;
        assert!(g128 < 0.05 * g1);
        assert!(g_profile(&s, 3.0, -40.0, &tol()).unwrap().value >= 0.0);
    }

    #[test]
    fn intermediate_bound_holds() {
        let s = Singularity::from_lambda(Complex64::new(1.0, 1.0)).unwrap();
        let spec = CurrentSpec::single_atom(
            &s,
            BoundaryProfile::Cauchy {
                center: 1.0,
                width: 0.5,
                height: 1.0,
            },
        );
        for &r in &[0.5, 0.1, 0.01] {
            let (lhs, rhs) = intermediate_bound(&spec, &s, r, &tol()).unwrap();
            assert!(lhs.value <= rhs.value + lhs.error + rhs.error, "r={r}: {lhs:?} > {rhs:?}");
        }
    }

    #[test]
    fn kernel_side_matches_direct_kernel_integral() {
        // ∫ K_s(y) H̃(y) dy with K from kernel_k, against the exchanged form.
        let s = sing_i();
        let spec = CurrentSpec::single_atom(&s, bump());
        let r = (-2.0f64).exp();
        let b = bound_g_via_kernel(&spec, &s, r, &tol()).unwrap();
        let q = Tolerance::new(1e-9, 1e-12, 2_000_000).unwrap();
        let direct = crate::quad::integrate_1d_with_breaks(
            |y| kernel_k(&s, &KernelQuery::new(2.0, y).unwrap(), &q).unwrap().value * bump().evaluate(y),
            crate::quad::Interval::Finite(-1.0, 1.0),
            &[0.0],
            &Tolerance::new(1e-6, 1e-9, 10_000).unwrap(),
        )
        .unwrap()
        .value;
        assert!((b.rhs.value - direct).abs() < 1e-5 * direct, "{} vs {direct}", b.rhs.value);
    }
}

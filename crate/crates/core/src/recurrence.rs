//! Leafwise Poincaré geometry in the local model.
//!
//! The leaf piece over the sector is simply connected, so the disc
//! uniformization is a biholomorphism
//!
//! ```text
//! 𝔻 --Cayley--> upper half plane --W^{1/γ}--> sector --ψ_α--> leaf
//! ```
//!
//! Metric convention: curvature `-1`, `ds = 2|dξ|/(1 - |ξ|²)`, so the circle
//! of hyperbolic radius `t` has Euclidean radius `tanh(t/2)` and length
//! `2π sinh t`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::foliation::{FoliationError, HalfPlanePoint, LeafPoint, SectorPoint, Singularity};
use crate::mass::linear_fit;
use crate::quad::{integrate_1d, monte_carlo, Interval, QuadError, QuadResult, Tolerance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecurrenceError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Geometry(#[from] FoliationError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// Euclidean radius of the disc of hyperbolic radius `t`.
pub fn s_of_t(t: f64) -> f64 {
    (0.5 * t).tanh()
}

/// Hyperbolic distance from `0` to `ξ` in the disc.
pub fn disc_distance_from_origin(xi: Complex64) -> f64 {
    let r = xi.norm();
    2.0 * r.atanh()
}

/// Hyperbolic distance in the upper half plane with `ds = |dW|/Im W`.
pub fn halfplane_distance(p: &HalfPlanePoint, q: &HalfPlanePoint) -> f64 {
    let d2 = (p.re - q.re).powi(2) + (p.im - q.im).powi(2);
    let x = d2 / (2.0 * p.im * q.im);
    // acosh(1 + x), accurate for small x
    (x + (x * (x + 2.0)).sqrt()).ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafUniformization {
    pub sing: Singularity,
    pub alpha: Complex64,
    pub base_point: LeafPoint,
    pub sector_base: SectorPoint,
    pub half_plane_base: HalfPlanePoint,
}

pub fn uniformize_leaf(sing: &Singularity, alpha: Complex64, a: &LeafPoint) -> Result<LeafUniformization, RecurrenceError> {
    let sector_base = sing.locate_on_leaf(&LeafPoint { alpha, ..*a })?;
    let half_plane_base = sing.sector_to_halfplane(&sector_base)?;
    Ok(LeafUniformization {
        sing: *sing,
        alpha,
        base_point: *a,
        sector_base,
        half_plane_base,
    })
}

impl LeafUniformization {
    /// Uniformization based at the leaf point over the sector point `(t, v)`.
    pub fn at_sector_point(sing: &Singularity, alpha: Complex64, t: f64, v: f64) -> Result<Self, RecurrenceError> {
        let zeta = sing.sector_point_tv(t, v)?;
        let a = sing.leaf_point(alpha, &zeta)?;
        uniformize_leaf(sing, alpha, &a)
    }

    /// `W(ξ)` for `ξ = s e^{iφ}` with `1 - s` passed separately so that
    /// circles close to the boundary keep full precision.
    fn halfplane_polar(&self, s: f64, one_minus_s: f64, phi: f64) -> HalfPlanePoint {
        let (u0, v0) = (self.half_plane_base.re, self.half_plane_base.im);
        let half = (0.5 * phi).sin();
        let d = one_minus_s * one_minus_s + 4.0 * s * half * half;
        let re = 2.0 * s * phi.sin() / d;
        let im = one_minus_s * (1.0 + s) / d;
        HalfPlanePoint {
            re: u0 - v0 * re,
            im: v0 * im,
        }
    }

    /// `W(ξ) = Re W_a + Im W_a · i(1 + ξ)/(1 - ξ)`.
    pub fn disc_to_halfplane(&self, xi: Complex64) -> Result<HalfPlanePoint, RecurrenceError> {
        let r = xi.norm();
        if !(r < 1.0) {
            return Err(RecurrenceError::InvalidParameter(format!("|ξ| = {r} is not < 1")));
        }
        Ok(self.halfplane_polar(r, 1.0 - r, xi.arg()))
    }

    fn leaf_of_halfplane(&self, w: &HalfPlanePoint) -> Result<LeafPoint, RecurrenceError> {
        let zeta = self.sing.halfplane_to_sector(w)?;
        Ok(self.sing.leaf_point_unchecked(self.alpha, zeta.u, zeta.v))
    }

    /// `φ_a(ξ)`.
    pub fn evaluate(&self, xi: Complex64) -> Result<LeafPoint, RecurrenceError> {
        self.leaf_of_halfplane(&self.disc_to_halfplane(xi)?)
    }

    /// `φ_a(tanh(t/2) e^{iφ})`.
    pub fn on_circle(&self, t: f64, phi: f64) -> Result<LeafPoint, RecurrenceError> {
        // 1 - tanh(t/2) = 2/(e^t + 1)
        let one_minus_s = 2.0 / (t.exp() + 1.0);
        let w = self.halfplane_polar(1.0 - one_minus_s, one_minus_s, phi);
        self.leaf_of_halfplane(&w)
    }
}

fn inside_ball(p: &LeafPoint, x: [Complex64; 2], r: f64) -> bool {
    p.distance_to(x) < r
}

/// θ-average of `1_{B(x, r)}(φ_a(s_t e^{2πiθ}))` on `n_theta` uniform nodes
/// shifted by `offset` (in units of a full turn).
pub fn circle_average(
    uni: &LeafUniformization,
    x: [Complex64; 2],
    r: f64,
    t: f64,
    n_theta: usize,
    offset: f64,
) -> Result<f64, RecurrenceError> {
    if !(t >= 0.0) || !(r > 0.0) || n_theta < 8 {
        return Err(RecurrenceError::InvalidParameter(format!(
            "t = {t}, r = {r}, n_theta = {n_theta}"
        )));
    }
    if t == 0.0 {
        return Ok(if inside_ball(&uni.base_point, x, r) { 1.0 } else { 0.0 });
    }
    let mut hits = 0usize;
    for k in 0..n_theta {
        let phi = 2.0 * PI * ((k as f64 + offset) / n_theta as f64);
        if inside_ball(&uni.on_circle(t, phi)?, x, r) {
            hits += 1;
        }
    }
    Ok(hits as f64 / n_theta as f64)
}

/// Quadrature grid for circle-based averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleGrid {
    /// Radial nodes on `[0, R]`, at least 64.
    pub n_t: usize,
    /// Angular nodes, at least 8.
    pub n_theta: usize,
}

impl Default for CircleGrid {
    fn default() -> Self {
        Self { n_t: 128, n_theta: 4096 }
    }
}

impl CircleGrid {
    fn validate(&self) -> Result<(), RecurrenceError> {
        if self.n_t < 64 || self.n_theta < 8 {
            return Err(RecurrenceError::InvalidParameter(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Finite-horizon visibility `(1/R) ∫_0^R circle_average dt`, trapezoid in `t`.
pub fn visibility_n(
    uni: &LeafUniformization,
    x: [Complex64; 2],
    r: f64,
    horizon: f64,
    grid: &CircleGrid,
    offset: f64,
) -> Result<f64, RecurrenceError> {
    grid.validate()?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(RecurrenceError::InvalidParameter(format!("horizon R = {horizon}")));
    }
    let n = grid.n_t;
    let h = horizon / (n - 1) as f64;
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| circle_average(uni, x, r, i as f64 * h, grid.n_theta, offset))
        .collect::<Result<_, _>>()?;
    let sum: f64 = values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1]);
    Ok((sum * h / horizon).clamp(0.0, 1.0))
}

/// [`visibility_n`] averaged over random rotations of the angular grid,
/// with the standard error over replicates.
pub fn visibility_n_replicated(
    uni: &LeafUniformization,
    x: [Complex64; 2],
    r: f64,
    horizon: f64,
    grid: &CircleGrid,
    replicates: usize,
    seed: u64,
) -> Result<QuadResult, RecurrenceError> {
    let first_err = std::cell::RefCell::new(None);
    let res = monte_carlo(
        |&offset: &f64| match visibility_n(uni, x, r, horizon, grid, offset) {
            Ok(v) => v,
            Err(e) => {
                first_err.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        },
        |rng| rng.gen::<f64>(),
        replicates.max(2),
        seed,
    );
    match first_err.into_inner() {
        Some(e) => Err(e),
        None => Ok(res),
    }
}

/// `sinh(t) log(1/tanh(t/2))`, the circle length times `log(1/s_t)` over `2π`.
pub fn circle_factor(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    // With q = e^{-t}: sinh t = (1 - q²)/(2q) and log(1/tanh(t/2)) = 2 atanh(q).
    let q = (-t).exp();
    let one_minus_q = -(-t).exp_m1();
    let atanh_q = 0.5 * (2.0 * q / one_minus_q).ln_1p();
    one_minus_q * (1.0 + q) * atanh_q / q
}

/// `1 - circle_factor(t)`, without cancellation for large `t`:
/// `Σ_{k>=1} 2 e^{-2kt}/(4k² - 1)`.
pub fn circle_factor_deficit(t: f64) -> f64 {
    if t < 1.0 {
        return 1.0 - circle_factor(t);
    }
    let q2 = (-2.0 * t).exp();
    let mut acc = 0.0;
    let mut qk = q2;
    for k in 1..=40 {
        let kf = k as f64;
        acc += 2.0 * qk / (4.0 * kf * kf - 1.0);
        qk *= q2;
        if qk < 1e-20 * acc {
            break;
        }
    }
    acc
}

/// `M_R = ∫_{|ζ| < s_R} log(1/|ζ|) ω_P = 2π ∫_0^R circle_factor(τ) dτ`.
pub fn m_of_r(horizon: f64, tol: &Tolerance) -> Result<QuadResult, RecurrenceError> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(RecurrenceError::InvalidParameter(format!("R = {horizon}")));
    }
    Ok(integrate_1d(circle_factor, Interval::Finite(0.0, horizon), tol)?.scaled(2.0 * PI))
}

/// `m_{a,R}(f) = (2π/M_R) ∫_0^R circle_factor(τ) avg_θ f(φ_a(s_τ e^{iθ})) dτ`,
/// Simpson in `τ` on `grid.n_t` nodes and uniform nodes in `θ`.
pub fn m_ar_pushforward<F>(
    uni: &LeafUniformization,
    horizon: f64,
    f: F,
    grid: &CircleGrid,
    tol: &Tolerance,
) -> Result<f64, RecurrenceError>
where
    F: Fn(&LeafPoint) -> f64 + Sync,
{
    grid.validate()?;
    let m_r = m_of_r(horizon, tol)?.value;
    let n = grid.n_t | 1;
    let h = horizon / (n - 1) as f64;
    let nth = grid.n_theta;
    let terms: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<f64, RecurrenceError> {
            let t = i as f64 * h;
            let cf = circle_factor(t);
            if cf == 0.0 {
                return Ok(0.0);
            }
            let mut acc = 0.0;
            for k in 0..nth {
                acc += f(&uni.on_circle(t, 2.0 * PI * k as f64 / nth as f64)?);
            }
            let w = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            Ok(w * cf * acc / nth as f64)
        })
        .collect::<Result<_, _>>()?;
    Ok(2.0 * PI * terms.iter().sum::<f64>() * h / 3.0 / m_r)
}

/// `η(a) = ‖Dφ_a(0)‖` measured against the Poincaré metric:
/// `‖ψ'‖ · |dτ/dW| · |dW/dξ(0)| / 2 = ‖ψ'‖ |τ| sin(γθ)/γ`.
pub fn eta_local(uni: &LeafUniformization) -> f64 {
    let z = &uni.sector_base;
    let speed = uni.sing.leaf_speed_sq_tv(z.t, z.v).sqrt();
    let w = &uni.half_plane_base;
    let tau = z.u.hypot(z.v);
    speed * w.im / (uni.sing.gamma * tau.powf(uni.sing.gamma - 1.0))
}

/// Fitted slope of `log|circle_factor(t) - 1|` against `t` on `n` uniform
/// nodes of `[t0, t1]`.
pub fn circle_factor_decay_slope(t0: f64, t1: f64, n: usize) -> Option<f64> {
    let ts: Vec<f64> = (0..n).map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64).collect();
    let ys: Vec<f64> = ts.iter().map(|&t| circle_factor_deficit(t).abs().ln()).collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return None;
    }
    linear_fit(&ts, &ys).map(|f| f.slope)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityRow {
    pub x: [Complex64; 2],
    pub r: f64,
    pub horizon: f64,
    pub n: f64,
    pub n_err: f64,
    /// `m_{a,R}(B(x, r))`
    pub m_ball: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonRow {
    pub horizon: f64,
    pub m_r: f64,
    pub deviation: f64,
    pub mass_check: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceReport {
    pub visibility: Vec<VisibilityRow>,
    pub horizons: Vec<HorizonRow>,
    pub circle_factor_slope: Option<f64>,
    /// Slope of `ln N` against `ln |ln r|` per target point.
    pub decay_fits: Vec<Option<f64>>,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceSetup {
    pub targets: Vec<[Complex64; 2]>,
    pub r_grid: Vec<f64>,
    pub horizon: f64,
    pub horizons: Vec<f64>,
    pub grid: CircleGrid,
    pub replicates: usize,
}

pub fn recurrence_report(
    uni: &LeafUniformization,
    setup: &RecurrenceSetup,
    tol: &Tolerance,
    seed: u64,
) -> Result<RecurrenceReport, RecurrenceError> {
    let mut visibility = Vec::new();
    let mut decay_fits = Vec::new();
    for (ti, &x) in setup.targets.iter().enumerate() {
        let mut lx = Vec::new();
        let mut ly = Vec::new();
        for (ri, &r) in setup.r_grid.iter().enumerate() {
            let rep_seed = seed
                .wrapping_add((ti as u64) << 32)
                .wrapping_add(ri as u64);
            let n = visibility_n_replicated(uni, x, r, setup.horizon, &setup.grid, setup.replicates, rep_seed)?;
            let m_ball = m_ar_pushforward(
                uni,
                setup.horizon,
                |p| if inside_ball(p, x, r) { 1.0 } else { 0.0 },
                &setup.grid,
                tol,
            )?;
            if n.value > 0.0 && r < 1.0 {
                lx.push((-r.ln()).ln());
                ly.push(n.value.ln());
            }
            visibility.push(VisibilityRow {
                x,
                r,
                horizon: setup.horizon,
                n: n.value,
                n_err: n.error,
                m_ball,
            });
        }
        decay_fits.push(linear_fit(&lx, &ly).map(|f| f.slope));
    }
    let horizons = setup
        .horizons
        .iter()
        .map(|&h| -> Result<HorizonRow, RecurrenceError> {
            let m_r = m_of_r(h, tol)?.value;
            Ok(HorizonRow {
                horizon: h,
                m_r,
                deviation: m_r - 2.0 * PI * h,
                mass_check: m_ar_pushforward(uni, h, |_| 1.0, &setup.grid, tol)?,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(RecurrenceReport {
        visibility,
        horizons,
        circle_factor_slope: circle_factor_decay_slope(5.0, 15.0, 41),
        decay_fits,
        eta: eta_local(uni),
    })
}

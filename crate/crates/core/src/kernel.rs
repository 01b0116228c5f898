//! The singular kernel `K_s(y)`, its two-sided bound, and the Poisson-kernel
//! comparison regimes.
//!
//! ```text
//! K_s(y) = (1/b) ∫∫_{min(t, v) >= s} e^{2s - 2 min(t, v)} V / (V² + (y - U)²) dt dv
//! ```
//!
//! with `U + iV = ((t - a v)/b + i v)^γ`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::foliation::Singularity;
use crate::quad::{
    integrate_1d, integrate_1d_with_breaks, integrate_2d_with_breaks, CornerDomain, CornerPiece, DecayDescriptor,
    Interval, QuadError, QuadResult, Tolerance,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("invalid kernel query: {0}")]
    InvalidQuery(String),
    #[error("regime thresholds must satisfy 1 < c2 < c3 (got c2 = {c2}, c3 = {c3})")]
    InvalidThresholds { c2: f64, c3: f64 },
    #[error("min(v, t) = {0} is below 1")]
    BelowUnitCorner(f64),
    #[error("no root of U = {y} on the level min = {v} with min <= max")]
    NoRoot { y: f64, v: f64 },
    #[error("hypothesis set of {0:?} is empty for the given thresholds")]
    EmptyHypothesis(SamplerTarget),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelQuery {
    pub s: f64,
    pub y: f64,
}

impl KernelQuery {
    pub fn new(s: f64, y: f64) -> Result<Self, KernelError> {
        if !(s > 0.0 && s.is_finite()) || !y.is_finite() {
            return Err(KernelError::InvalidQuery(format!("s = {s}, y = {y}")));
        }
        Ok(Self { s, y })
    }
}

/// `V / (V² + (y - U)²)` at the sector point `(t, v)`.
pub fn poisson_kernel_tv(sing: &Singularity, t: f64, v: f64, y: f64) -> f64 {
    let w = sing.power_map_tv(t, v);
    let d = y - w.re;
    w.im / (w.im * w.im + d * d)
}

/// Values of `max(t, v)` on the level set `min(t, v) = m` (restricted to
/// `max >= m`) where `U = y`. Found by a geometric scan up to `max_hi`
/// followed by bisection to machine precision.
pub fn level_crossings(sing: &Singularity, piece: CornerPiece, m: f64, y: f64, max_hi: f64) -> Vec<f64> {
    sign_changes(
        |mx: f64| {
            let (t, v) = piece.tv(m, mx);
            sing.power_map_tv(t, v).re - y
        },
        m,
        max_hi,
    )
}

/// Roots of `g` on `[lo, hi]` located by a geometric scan and bisection.
fn sign_changes<G: Fn(f64) -> f64>(g: G, lo: f64, max_hi: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut lo = lo;
    let mut g_lo = g(lo);
    let step = 1.2f64;
    while lo < max_hi {
        let hi = (lo * step).max(lo + 0.05).min(max_hi);
        let g_hi = g(hi);
        if g_lo == 0.0 {
            out.push(lo);
        } else if g_lo.signum() != g_hi.signum() && g_hi != 0.0 {
            let (mut a, mut b, mut fa) = (lo, hi, g_lo);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                let fm = g(mid);
                if fm == 0.0 {
                    a = mid;
                    b = mid;
                    break;
                }
                if fm.signum() == fa.signum() {
                    a = mid;
                    fa = fm;
                } else {
                    b = mid;
                }
            }
            out.push(0.5 * (a + b));
        }
        lo = hi;
        g_lo = g_hi;
    }
    out
}

/// Envelope of `e^{2s - 2m} V/(V² + (y - U)²)` in the corner `min >= s`.
///
/// With `c = max(1, |λ|)` and `k = max(1, 1/|λ|)`: `M <= c|ζ|` and
/// `sin(γθ) <= (πγ/2) k m/|ζ|`. Once `|W| >= 4|y|` the kernel is at most
/// `16 V / (9|W|²)`, which gives the far bound; the near bound is `1/V`.
pub fn kernel_decay(sing: &Singularity, s: f64, y: f64) -> DecayDescriptor {
    let g = sing.gamma;
    let c = sing.lambda_norm().max(1.0);
    let k = (1.0 / sing.lambda_norm()).max(1.0);
    DecayDescriptor {
        exp_rate: 2.0,
        alg_rate: g + 1.0,
        far_amplitude: 8.0 * PI * g * k * c.powf(g + 1.0) / 9.0,
        near_amplitude: PI * c.powf(g) * s.powf(-g) / (2.0 * g),
        onset: c * (4.0 * y.abs()).powf(1.0 / g),
    }
}

/// `K_s(y)` in `(t, v)` coordinates, split at the kernel peak `U = y`.
pub fn kernel_k(sing: &Singularity, q: &KernelQuery, tol: &Tolerance) -> Result<QuadResult, KernelError> {
    let (s, y) = (q.s, q.y);
    let f = |t: f64, v: f64| {
        let m = t.min(v);
        (2.0 * (s - m)).exp() * poisson_kernel_tv(sing, t, v, y)
    };
    let decay = kernel_decay(sing, s, y);
    let hi = 4.0 * decay.onset.max(s) + 10.0;
    let breaks = |piece: CornerPiece, m: f64| level_crossings(sing, piece, m, y, hi);
    let inner_tol = Tolerance { abs: tol.abs * sing.b, ..*tol };
    let (r, _) = integrate_2d_with_breaks(f, CornerDomain::Quadrant { s }, &decay, breaks, &inner_tol)?;
    Ok(r.scaled(1.0 / sing.b))
}

/// `K_s(y)` in `(u, v)` coordinates by nested one-dimensional quadrature
/// over `{v >= s, bu + av >= s}`, with no change of variables.
pub fn kernel_k_uv(sing: &Singularity, q: &KernelQuery, tol: &Tolerance) -> Result<QuadResult, KernelError> {
    let (s, y) = (q.s, q.y);
    let (a, b) = (sing.a, sing.b);
    let inner_tol = tol.scaled(0.1);
    let failure = std::cell::Cell::new(None);
    let outer = |v: f64| -> f64 {
        let u0 = (s - a * v) / b;
        let g = |u: f64| {
            let t = b * u + a * v;
            let m = t.min(v);
            let w = sing.power_map(u, v);
            let d = y - w.re;
            (2.0 * (s - m)).exp() * w.im / (w.im * w.im + d * d)
        };
        let mut breaks = vec![(v - a * v) / b];
        // The weight e^{2s - 2t} is concentrated near t = s.
        let mut d = 0.5;
        while s + d < v {
            breaks.push((s + d - a * v) / b);
            d *= 4.0;
        }
        let below = sign_changes(|t| sing.power_map_tv(t, v).re - y, s, v);
        let above = level_crossings(sing, CornerPiece::VMin, v, y, 1e4 + 4.0 * y.abs());
        breaks.extend(below.into_iter().chain(above).map(|t| (t - a * v) / b));
        match integrate_1d_with_breaks(g, Interval::From(u0), &breaks, &inner_tol) {
            Ok(r) => r.value,
            Err(e) => {
                failure.set(Some(e));
                f64::NAN
            }
        }
    };
    let r = integrate_1d(outer, Interval::From(s), tol);
    if let Some(e) = failure.take() {
        return Err(e.into());
    }
    Ok(r?)
}

/// Comparator of the main estimate:
/// `(1 + |y|)^{1/γ - 1} min{1, ((1 + |y|)^{1/γ}/s)^{γ - 1}}`.
pub fn main_bound(sing: &Singularity, s: f64, y: f64) -> f64 {
    let g = sing.gamma;
    let r = (1.0 + y.abs()).powf(1.0 / g);
    (1.0 + y.abs()).powf(1.0 / g - 1.0) * (r / s).powf(g - 1.0).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelCell {
    pub s: f64,
    pub y: f64,
    pub k: f64,
    pub k_err: f64,
    pub bound_ratio: f64,
    /// Quadrature did not converge; `k` is the best estimate.
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub cells: Vec<KernelCell>,
    pub empirical_c: f64,
    pub refined_empirical_c: f64,
    pub refinement_drift: f64,
    pub failed_cells: usize,
}

/// Inserts a midpoint between consecutive grid values: geometric between
/// values of one sign, arithmetic across zero.
pub fn refine_grid(values: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v.dedup();
    let mut out = Vec::with_capacity(2 * v.len());
    for w in v.windows(2) {
        out.push(w[0]);
        let (p, q) = (w[0], w[1]);
        if p * q > 0.0 {
            out.push(p.signum() * (p * q).sqrt());
        } else {
            out.push(0.5 * (p + q));
        }
    }
    if let Some(&last) = v.last() {
        out.push(last);
    }
    out
}

fn kernel_cell(sing: &Singularity, s: f64, y: f64, tol: &Tolerance) -> Result<KernelCell, KernelError> {
    let q = KernelQuery::new(s, y)?;
    let (r, failed) = match kernel_k(sing, &q, tol) {
        Ok(r) => (r, false),
        Err(KernelError::Quadrature(QuadError::NotConverged { best })) => (best.scaled(1.0 / sing.b), true),
        Err(e) => return Err(e),
    };
    Ok(KernelCell {
        s,
        y,
        k: r.value,
        k_err: r.error,
        bound_ratio: r.value / main_bound(sing, s, y),
        failed,
    })
}

/// Bound ratios on `s_grid × y_grid` without refinement, in row-major order.
pub fn bound_ratio_cells(
    sing: &Singularity,
    s_grid: &[f64],
    y_grid: &[f64],
    tol: &Tolerance,
) -> Result<Vec<KernelCell>, KernelError> {
    let pairs: Vec<(f64, f64)> = s_grid.iter().flat_map(|&s| y_grid.iter().map(move |&y| (s, y))).collect();
    pairs
        .par_iter()
        .map(|&(s, y)| kernel_cell(sing, s, y, tol))
        .collect()
}

fn max_ratio(cells: &[KernelCell]) -> f64 {
    cells
        .iter()
        .filter(|c| !c.failed)
        .map(|c| c.bound_ratio)
        .fold(0.0, f64::max)
}

/// Bound ratios on `s_grid × y_grid`, and the drift of their maximum when
/// both grids are refined once with [`refine_grid`].
pub fn main_bound_report(
    sing: &Singularity,
    s_grid: &[f64],
    y_grid: &[f64],
    tol: &Tolerance,
) -> Result<KernelReport, KernelError> {
    if s_grid.is_empty() || y_grid.is_empty() {
        return Err(KernelError::InvalidQuery("empty grid".into()));
    }
    let cells = bound_ratio_cells(sing, s_grid, y_grid, tol)?;
    let fine_s = refine_grid(s_grid);
    let fine_y = refine_grid(y_grid);
    let known = |s: f64, y: f64| cells.iter().find(|c| c.s == s && c.y == y).copied();
    let extra: Vec<(f64, f64)> = fine_s
        .iter()
        .flat_map(|&s| fine_y.iter().map(move |&y| (s, y)))
        .filter(|&(s, y)| known(s, y).is_none())
        .collect();
    let extra_cells: Vec<KernelCell> = extra
        .par_iter()
        .map(|&(s, y)| kernel_cell(sing, s, y, tol))
        .collect::<Result<_, _>>()?;
    let empirical_c = max_ratio(&cells);
    let refined_empirical_c = empirical_c.max(max_ratio(&extra_cells));
    let failed_cells = cells.iter().chain(&extra_cells).filter(|c| c.failed).count();
    Ok(KernelReport {
        refinement_drift: (refined_empirical_c - empirical_c).abs() / empirical_c,
        cells,
        empirical_c,
        refined_empirical_c,
        failed_cells,
    })
}

/// The regimes of the Poisson-kernel comparison lemma.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Far,
    NearOrigin,
    Diagonal,
    BoundaryStrip,
    Unclassified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeThresholds {
    pub c2: f64,
    pub c3: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        Self { c2: 4.0, c3: 16.0 }
    }
}

impl RegimeThresholds {
    pub fn validate(&self) -> Result<(), KernelError> {
        if self.c2 > 1.0 && self.c3 > self.c2 && self.c3.is_finite() {
            Ok(())
        } else {
            Err(KernelError::InvalidThresholds { c2: self.c2, c3: self.c3 })
        }
    }

    pub fn doubled(&self) -> Self {
        Self {
            c2: 2.0 * self.c2,
            c3: 2.0 * self.c3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeClassification {
    pub regime: Regime,
    pub c2: f64,
    pub c3: f64,
}

pub fn classify_regime(
    sing: &Singularity,
    v: f64,
    t: f64,
    y: f64,
    th: &RegimeThresholds,
) -> Result<RegimeClassification, KernelError> {
    let _ = sing;
    th.validate()?;
    let (m, mx) = (v.min(t), v.max(t));
    if !(m >= 1.0) {
        return Err(KernelError::BelowUnitCorner(m));
    }
    let r = (1.0 + y.abs()).powf(1.0 / sing.gamma);
    let (lo, hi) = (r / th.c2, th.c2 * r);
    let regime = if mx >= hi {
        Regime::Far
    } else if mx <= lo {
        Regime::NearOrigin
    } else if m >= lo {
        Regime::Diagonal
    } else if m <= r / th.c3 {
        Regime::BoundaryStrip
    } else {
        Regime::Unclassified
    };
    Ok(RegimeClassification {
        regime,
        c2: th.c2,
        c3: th.c3,
    })
}

/// Solution of `U = y` along the level set `min = v` with `max >= v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoSolution {
    /// `ρ = b u + a v`, the max coordinate at the root.
    pub rho: f64,
    pub u: f64,
    pub residual: f64,
    /// `1 <= v <= (1 + |y|)^{1/γ}/c3`
    pub precondition_met: bool,
    /// `(1 + |y|)^{1/γ}/c2 <= ρ <= c2 (1 + |y|)^{1/γ}`
    pub in_band: bool,
}

/// `ρ(y, v)` on the branch `v <= t`. The largest crossing is returned.
pub fn rho_solver(sing: &Singularity, y: f64, v: f64, th: &RegimeThresholds) -> Result<RhoSolution, KernelError> {
    th.validate()?;
    if !(v > 0.0 && v.is_finite() && y.is_finite()) {
        return Err(KernelError::InvalidQuery(format!("y = {y}, v = {v}")));
    }
    rho_on_piece(sing, CornerPiece::VMin, y, v, th)
}

fn rho_on_piece(
    sing: &Singularity,
    piece: CornerPiece,
    y: f64,
    m: f64,
    th: &RegimeThresholds,
) -> Result<RhoSolution, KernelError> {
    let r = (1.0 + y.abs()).powf(1.0 / sing.gamma);
    let hi = 4.0 * sing.lambda_norm().max(1.0) * (r + m) * th.c2 + 10.0;
    let rho = *level_crossings(sing, piece, m, y, hi)
        .last()
        .ok_or(KernelError::NoRoot { y, v: m })?;
    let (t, v) = piece.tv(m, rho);
    let u = sing.u_of(t, v);
    Ok(RhoSolution {
        rho,
        u,
        residual: (sing.power_map(u, v).re - y).abs(),
        precondition_met: m >= 1.0 && m <= r / th.c3,
        in_band: rho >= r / th.c2 && rho <= th.c2 * r,
    })
}

/// Comparison statements sampled by [`regime_constant_sampler`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerTarget {
    /// `max^γ / |W|`
    Part1Modulus,
    /// `max^{γ-1} min / V`
    Part1Imaginary,
    Far,
    NearOrigin,
    Diagonal,
    BoundaryStrip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerReport {
    pub sup_ratio: f64,
    pub inf_ratio: f64,
    pub samples: usize,
    /// Draws rejected because no `ρ` existed or the point left the regime.
    pub rejected: usize,
}

impl SamplerReport {
    /// The smallest `c` with all ratios in `[1/c, c]`.
    pub fn band_constant(&self) -> f64 {
        self.sup_ratio.max(1.0 / self.inf_ratio)
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp()
}

/// Samples `(v, t, y)` in the hypothesis set of `target` and returns the
/// extreme ratios of the exact expression to the lemma's comparator.
pub fn regime_constant_sampler(
    sing: &Singularity,
    target: SamplerTarget,
    th: &RegimeThresholds,
    sample_count: usize,
    seed: u64,
) -> Result<SamplerReport, KernelError> {
    th.validate()?;
    if sample_count < 100 {
        return Err(KernelError::InvalidQuery(format!("sample_count = {sample_count} < 100")));
    }
    let g = sing.gamma;
    // Smallest |y| for which the hypothesis set contains points with min >= 1.
    let y_floor = match target {
        SamplerTarget::Part1Modulus | SamplerTarget::Part1Imaginary | SamplerTarget::Far => 0.0,
        SamplerTarget::NearOrigin | SamplerTarget::Diagonal => th.c2.powf(g) - 1.0,
        SamplerTarget::BoundaryStrip => (2.0 * th.c3).powf(g) - 1.0,
    };
    let y_ceil = (1e3 * (1.0 + y_floor)).max(1e4);
    if !(y_ceil.is_finite()) {
        return Err(KernelError::EmptyHypothesis(target));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sup = 0.0f64;
    let mut inf = f64::INFINITY;
    let mut accepted = 0;
    let mut rejected = 0;
    while accepted < sample_count {
        if rejected > 20 * sample_count {
            return Err(KernelError::EmptyHypothesis(target));
        }
        let ay = log_uniform(&mut rng, 1.0 + y_floor, 1.0 + y_ceil) - 1.0;
        let y = if rng.gen::<bool>() { ay } else { -ay };
        let r = (1.0 + ay).powf(1.0 / g);
        let piece = if rng.gen::<bool>() {
            CornerPiece::VMin
        } else {
            CornerPiece::TMin
        };
        let (m, mx) = match target {
            SamplerTarget::Part1Modulus | SamplerTarget::Part1Imaginary => {
                let m = log_uniform(&mut rng, 1.0, 1e3);
                (m, m * log_uniform(&mut rng, 1.0, 1e3))
            }
            SamplerTarget::Far => {
                let mx = log_uniform(&mut rng, th.c2 * r, 1e2 * th.c2 * r);
                (log_uniform(&mut rng, 1.0, mx), mx)
            }
            SamplerTarget::NearOrigin => {
                let mx = log_uniform(&mut rng, 1.0, r / th.c2);
                (log_uniform(&mut rng, 1.0, mx), mx)
            }
            SamplerTarget::Diagonal => {
                let a = log_uniform(&mut rng, r / th.c2, th.c2 * r);
                let b = log_uniform(&mut rng, r / th.c2, th.c2 * r);
                (a.min(b), a.max(b))
            }
            SamplerTarget::BoundaryStrip => {
                let mx = log_uniform(&mut rng, r / th.c2, th.c2 * r);
                (log_uniform(&mut rng, 1.0, r / th.c3), mx)
            }
        };
        if m < 1.0 {
            rejected += 1;
            continue;
        }
        let (t, v) = piece.tv(m, mx);
        let w = sing.power_map_tv(t, v);
        let p = w.im / (w.im * w.im + (y - w.re).powi(2));
        let ratio = match target {
            SamplerTarget::Part1Modulus => mx.powf(g) / w.re.hypot(w.im),
            SamplerTarget::Part1Imaginary => mx.powf(g - 1.0) * m / w.im,
            SamplerTarget::Far => p / (m / mx.powf(g + 1.0)),
            SamplerTarget::NearOrigin => p / (w.im / (1.0 + ay).powi(2)),
            SamplerTarget::Diagonal => p * (1.0 + ay),
            SamplerTarget::BoundaryStrip => {
                let rho = match rho_on_piece(sing, piece, y, m, th) {
                    Ok(sol) => sol.rho,
                    Err(KernelError::NoRoot { .. }) => {
                        rejected += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let cmp = (1.0 + ay).powf(1.0 / g - 1.0) * m / (m * m + (mx - rho).powi(2));
                p / cmp
            }
        };
        if !(ratio.is_finite() && ratio > 0.0) {
            rejected += 1;
            continue;
        }
        sup = sup.max(ratio);
        inf = inf.min(ratio);
        accepted += 1;
    }
    Ok(SamplerReport {
        sup_ratio: sup,
        inf_ratio: inf,
        samples: accepted,
        rejected,
    })
}

/// `∫_{s0}^∞ s e^{2 s0 - 2 s} ds`, which equals `s0/2 + 1/4`.
pub fn lemma_exp_oracle(s0: f64, tol: &Tolerance) -> Result<QuadResult, KernelError> {
    if !(s0 >= 1.0 && s0.is_finite()) {
        return Err(KernelError::InvalidQuery(format!("s0 = {s0} must be at least 1")));
    }
    Ok(integrate_1d(|s| s * (2.0 * (s0 - s)).exp(), Interval::From(s0), tol)?)
}

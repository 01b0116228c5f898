use std::cell::Cell;

use serde::{Deserialize, Serialize};

use super::adaptive::integrate_1d_with_breaks;
use super::{Interval, QuadError, QuadResult, Tolerance};

/// Unbounded integration domains in the `(t, v)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CornerDomain {
    /// `{ min(t, v) >= s }`
    Quadrant { s: f64 },
    /// `{ e^{-2t} + e^{-2v} <= e^{-2s}, t, v > 0 }`, a subset of the quadrant.
    Ball { s: f64 },
}

impl CornerDomain {
    pub fn s(&self) -> f64 {
        match *self {
            CornerDomain::Quadrant { s } | CornerDomain::Ball { s } => s,
        }
    }

    /// Smallest admissible distance `d = max - min` at a given `min`.
    fn d_lower(&self, m: f64) -> f64 {
        match *self {
            CornerDomain::Quadrant { .. } => 0.0,
            CornerDomain::Ball { s } => {
                let x = 2.0 * (m - s);
                if x >= std::f64::consts::LN_2 {
                    0.0
                } else if x <= 0.0 {
                    f64::INFINITY
                } else {
                    (-0.5 * x.exp_m1().ln()).max(0.0)
                }
            }
        }
    }
}

/// Which coordinate is the minimum on a half of the corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CornerPiece {
    /// `v = min`, `t = max`.
    VMin,
    /// `t = min`, `v = max`.
    TMin,
}

impl CornerPiece {
    /// `(t, v)` from `(min, max)`.
    pub fn tv(self, min: f64, max: f64) -> (f64, f64) {
        match self {
            CornerPiece::VMin => (max, min),
            CornerPiece::TMin => (min, max),
        }
    }
}

/// Envelope of the integrand, used to place and certify the truncation.
///
/// With `m = min(t, v)` and `M = max(t, v)` the caller guarantees
///
/// ```text
/// |f(t, v)| <= (1 + m) e^{-κ (m - s)} · near                 for M <  onset
/// |f(t, v)| <= (1 + m) e^{-κ (m - s)} · far · M^{-p}         for M >= onset
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayDescriptor {
    /// `κ > 0`
    pub exp_rate: f64,
    /// `p > 1`
    pub alg_rate: f64,
    pub far_amplitude: f64,
    pub near_amplitude: f64,
    pub onset: f64,
}

impl DecayDescriptor {
    pub fn validate(&self) -> Result<(), QuadError> {
        let ok = self.exp_rate > 0.0
            && self.exp_rate.is_finite()
            && self.alg_rate > 1.0
            && self.alg_rate.is_finite()
            && self.far_amplitude >= 0.0
            && self.far_amplitude.is_finite()
            && self.near_amplitude >= 0.0
            && self.near_amplitude.is_finite()
            && self.onset >= 0.0
            && self.onset.is_finite();
        if ok {
            Ok(())
        } else {
            Err(QuadError::InvalidDecay(format!("{self:?}")))
        }
    }

    /// `∫_{a}^{∞} (1 + m) e^{-κ (m - s)} dm`.
    fn exp_moment(&self, s: f64, a: f64) -> f64 {
        let k = self.exp_rate;
        (-k * (a - s)).exp() * ((1.0 + a) / k + 1.0 / (k * k))
    }

    /// Bound on the integral over `{ min >= min_cut }`.
    pub fn min_tail(&self, s: f64, min_cut: f64) -> f64 {
        let p = self.alg_rate;
        let inner = self.near_amplitude * (self.onset - min_cut).max(0.0)
            + self.far_amplitude * min_cut.max(self.onset).powf(1.0 - p) / (p - 1.0);
        2.0 * self.exp_moment(s, min_cut) * inner
    }

    /// Bound on the integral over `{ min <= min_cut, max >= max_cut }`
    /// for `max_cut >= onset`.
    pub fn max_tail(&self, s: f64, max_cut: f64) -> f64 {
        let p = self.alg_rate;
        2.0 * self.exp_moment(s, s) * self.far_amplitude * max_cut.powf(1.0 - p) / (p - 1.0)
    }
}

/// Truncation actually used for a 2D integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBounds {
    pub min_cut: f64,
    pub max_cut: f64,
    pub min_tail: f64,
    pub max_tail: f64,
}

impl TailBounds {
    pub fn total(&self) -> f64 {
        self.min_tail + self.max_tail
    }

    fn plan(s: f64, decay: &DecayDescriptor, abs_tol: f64) -> Self {
        let k = decay.exp_rate;
        let mut min_cut = s + 10f64.max(-abs_tol.ln() / k);
        let mut min_tail = decay.min_tail(s, min_cut);
        while min_tail > abs_tol / 4.0 {
            min_cut += 1.0 / k;
            min_tail = decay.min_tail(s, min_cut);
        }
        let floor = decay.onset.max(min_cut + 1.0);
        let max_cut = if decay.far_amplitude == 0.0 {
            floor
        } else {
            let p = decay.alg_rate;
            let needed = 2.0 * decay.exp_moment(s, s) * decay.far_amplitude / ((p - 1.0) * abs_tol / 4.0);
            needed.powf(1.0 / (p - 1.0)).max(floor)
        };
        Self {
            min_cut,
            max_cut,
            min_tail,
            max_tail: decay.max_tail(s, max_cut),
        }
    }
}

/// Integrates `f(t, v)` over a corner domain.
pub fn integrate_2d<F>(
    f: F,
    domain: CornerDomain,
    decay: &DecayDescriptor,
    tol: &Tolerance,
) -> Result<(QuadResult, TailBounds), QuadError>
where
    F: Fn(f64, f64) -> f64,
{
    integrate_2d_with_breaks(f, domain, decay, |_, _| Vec::new(), tol)
}

/// Integrates `f(t, v)` over a corner domain, with break points for the
/// inner integral.
///
/// The domain is split along the diagonal into the two halves of
/// [`CornerPiece`]. Each half is integrated as an iterated integral: the
/// outer variable is `m = min(t, v)` on `[s, min_cut]`, the inner one is
/// `x = ln(1 + max - min)` on the admissible range up to `max_cut`.
/// `breaks(piece, m)` may return values of `max(t, v)` where the inner
/// integrand is sharply peaked.
pub fn integrate_2d_with_breaks<F, B>(
    f: F,
    domain: CornerDomain,
    decay: &DecayDescriptor,
    breaks: B,
    tol: &Tolerance,
) -> Result<(QuadResult, TailBounds), QuadError>
where
    F: Fn(f64, f64) -> f64,
    B: Fn(CornerPiece, f64) -> Vec<f64>,
{
    tol.validate()?;
    decay.validate()?;
    let s = domain.s();
    if !s.is_finite() {
        return Err(QuadError::InvalidInterval(format!("corner s = {s}")));
    }
    let tails = TailBounds::plan(s, decay, tol.abs);
    let outer_len = tails.min_cut - s;
    let mut outer_breaks = Vec::new();
    if let CornerDomain::Ball { .. } = domain {
        outer_breaks.push(s + 0.5 * std::f64::consts::LN_2);
    }
    // The exponential factor varies on a 1/κ scale.
    let mut b = s + 1.0 / decay.exp_rate;
    while b < tails.min_cut {
        outer_breaks.push(b);
        b += 4.0 / decay.exp_rate;
    }
    let mut spent = 0;
    // The inner errors enter as `worst · length`, which is pessimistic;
    // tighten the inner rule a few times before giving up.
    for attempt in 0..3 {
        let scale = 10f64.powi(-attempt);
        let inner_tol = Tolerance {
            rel: tol.rel * 0.1 * scale,
            abs: tol.abs * 0.1 * scale / (1.0 + outer_len),
            max_evals: tol.max_evals,
        };
        let outer_tol = Tolerance {
            rel: tol.rel * 0.5,
            abs: tol.abs * 0.25,
            max_evals: tol.max_evals,
        };
        let (mut total, failed) = corner_pass(&f, domain, &tails, &breaks, &outer_breaks, &inner_tol, &outer_tol)?;
        total.evals += spent;
        spent = total.evals;
        total.error += tails.total();
        let ok = total.error <= 4.0 * tol.target(total.value);
        if failed || (!ok && attempt == 2) {
            return Err(QuadError::NotConverged { best: total });
        }
        if ok {
            return Ok((total, tails));
        }
    }
    unreachable!("the last attempt always returns")
}

fn corner_pass<F, B>(
    f: &F,
    domain: CornerDomain,
    tails: &TailBounds,
    breaks: &B,
    outer_breaks: &[f64],
    inner_tol: &Tolerance,
    outer_tol: &Tolerance,
) -> Result<(QuadResult, bool), QuadError>
where
    F: Fn(f64, f64) -> f64,
    B: Fn(CornerPiece, f64) -> Vec<f64>,
{
    let s = domain.s();
    let outer_len = tails.min_cut - s;
    let mut total = QuadResult {
        value: 0.0,
        error: 0.0,
        evals: 0,
    };
    let mut failed = false;
    for piece in [CornerPiece::VMin, CornerPiece::TMin] {
        let worst_inner = Cell::new(0.0f64);
        let inner_evals = Cell::new(0usize);
        let inner_failed = Cell::new(false);
        let outer = |m: f64| -> f64 {
            let d_lo = domain.d_lower(m);
            let d_hi = tails.max_cut - m;
            if !(d_hi > d_lo) {
                return 0.0;
            }
            let x_lo = d_lo.ln_1p();
            let x_hi = d_hi.ln_1p();
            let mut xb: Vec<f64> = breaks(piece, m)
                .into_iter()
                .filter_map(|peak| {
                    let d = peak - m;
                    (d > d_lo && d < d_hi).then(|| d.ln_1p())
                })
                .collect();
            let mut x = x_lo.floor() + 2.0;
            while x < x_hi {
                xb.push(x);
                x += 6.0;
            }
            let g = |x: f64| {
                let d = x.exp_m1();
                let (t, v) = piece.tv(m, m + d);
                f(t, v) * (1.0 + d)
            };
            let r = match integrate_1d_with_breaks(g, Interval::Finite(x_lo, x_hi), &xb, inner_tol) {
                Ok(r) => r,
                Err(QuadError::NotConverged { best }) => {
                    inner_failed.set(true);
                    best
                }
                Err(_) => {
                    inner_failed.set(true);
                    return f64::NAN;
                }
            };
            worst_inner.set(worst_inner.get().max(r.error));
            inner_evals.set(inner_evals.get() + r.evals);
            r.value
        };
        let r = match integrate_1d_with_breaks(outer, Interval::Finite(s, tails.min_cut), outer_breaks, outer_tol) {
            Ok(r) => r,
            Err(QuadError::NotConverged { best }) => {
                failed = true;
                best
            }
            Err(e) => return Err(e),
        };
        failed |= inner_failed.get();
        total.value += r.value;
        total.error += r.error + worst_inner.get() * outer_len;
        total.evals += inner_evals.get();
    }
    Ok((total, failed))
}

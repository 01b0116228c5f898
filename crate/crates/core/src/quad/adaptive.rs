use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{Interval, QuadError, QuadResult, Tolerance};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        scaled = scaled.max(50.0 * f64::EPSILON * res_abs);
    }
    scaled
}

/// One application of the 21-point Kronrod rule with its embedded 10-point
/// Gauss rule. Returns `(value, error_estimate)`.
pub fn gauss_kronrod_21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);
    let mut res_gauss = 0.0;
    let mut res_kronrod = f_center * WGK[10];
    let mut res_abs = res_kronrod.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];

    for j in 0..5 {
        let jtw = 2 * j + 1;
        let x = half * XGK[jtw];
        let (f1, f2) = (f(center - x), f(center + x));
        fv1[jtw] = f1;
        fv2[jtw] = f2;
        res_gauss += WG[j] * (f1 + f2);
        res_kronrod += WGK[jtw] * (f1 + f2);
        res_abs += WGK[jtw] * (f1.abs() + f2.abs());
    }
    for j in 0..5 {
        let jtwm1 = 2 * j;
        let x = half * XGK[jtwm1];
        let (f1, f2) = (f(center - x), f(center + x));
        fv1[jtwm1] = f1;
        fv2[jtwm1] = f2;
        res_kronrod += WGK[jtwm1] * (f1 + f2);
        res_abs += WGK[jtwm1] * (f1.abs() + f2.abs());
    }

    let mean = 0.5 * res_kronrod;
    let mut res_asc = WGK[10] * (f_center - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let err = (res_kronrod - res_gauss) * half;
    let habs = half.abs();
    (res_kronrod * half, rescale_error(err, res_abs * habs, res_asc * habs))
}

/// A finite piece of the (possibly transformed) integration range.
#[derive(Debug, Clone, Copy)]
enum Piece {
    /// Plain `[a, b]`.
    Plain,
    /// `x = origin + (1 - τ)/τ`, `τ ∈ (0, 1]`.
    Up(f64),
    /// `x = origin - (1 - τ)/τ`, `τ ∈ (0, 1]`.
    Down(f64),
}

struct Segment {
    a: f64,
    b: f64,
    piece: usize,
    value: f64,
    error: f64,
    order: usize,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.order.cmp(&self.order))
    }
}

/// Adaptive integration of `f` over `interval`.
///
/// Infinite ranges are mapped onto `(0, 1]` by `x = a ± (1 - τ)/τ`.
pub fn integrate_1d<F: Fn(f64) -> f64>(f: F, interval: Interval, tol: &Tolerance) -> Result<QuadResult, QuadError> {
    integrate_1d_with_breaks(f, interval, &[], tol)
}

/// As [`integrate_1d`], first splitting the range at `breaks`.
///
/// Break points outside the range are ignored. On the whole line with no
/// break points the range is split at the origin.
pub fn integrate_1d_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    interval: Interval,
    breaks: &[f64],
    tol: &Tolerance,
) -> Result<QuadResult, QuadError> {
    tol.validate()?;
    let (lo, hi) = match interval {
        Interval::Finite(a, b) => {
            if !(a.is_finite() && b.is_finite()) {
                return Err(QuadError::InvalidInterval(format!("[{a}, {b}] is not finite")));
            }
            if a == b {
                return Ok(QuadResult::zero());
            }
            if a > b {
                let r = integrate_1d_with_breaks(f, Interval::Finite(b, a), breaks, tol)?;
                return Ok(r.scaled(-1.0));
            }
            (a, b)
        }
        Interval::From(a) => (a, f64::INFINITY),
        Interval::To(b) => (f64::NEG_INFINITY, b),
        Interval::Line => (f64::NEG_INFINITY, f64::INFINITY),
    };
    if lo.is_nan() || hi.is_nan() {
        return Err(QuadError::InvalidInterval("NaN bound".into()));
    }

    let mut cuts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|x| x.is_finite() && *x > lo && *x < hi)
        .collect();
    if cuts.is_empty() && lo.is_infinite() && hi.is_infinite() {
        cuts.push(0.0);
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut pieces: Vec<Piece> = Vec::new();
    let mut spans: Vec<(f64, f64)> = Vec::new();
    let mut nodes = Vec::with_capacity(cuts.len() + 2);
    nodes.push(lo);
    nodes.extend(cuts.iter().copied());
    nodes.push(hi);
    for w in nodes.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.is_infinite() && b.is_infinite() {
            unreachable!("line is always split");
        } else if a.is_infinite() {
            pieces.push(Piece::Down(b));
            spans.push((0.0, 1.0));
        } else if b.is_infinite() {
            pieces.push(Piece::Up(a));
            spans.push((0.0, 1.0));
        } else if b > a {
            pieces.push(Piece::Plain);
            spans.push((a, b));
        }
    }

    let eval = |piece: Piece, x: f64| -> f64 {
        match piece {
            Piece::Plain => f(x),
            Piece::Up(o) => {
                let y = o + (1.0 - x) / x;
                f(y) / (x * x)
            }
            Piece::Down(o) => {
                let y = o - (1.0 - x) / x;
                f(y) / (x * x)
            }
        }
    };

    let mut heap = BinaryHeap::new();
    let mut evals = 0usize;
    let mut order = 0usize;
    let mut total = 0.0;
    let mut total_err = 0.0;
    let mut finished_value = 0.0;
    let mut finished_err = 0.0;

    for (idx, (&piece, &(a, b))) in pieces.iter().zip(spans.iter()).enumerate() {
        let g = |x: f64| eval(piece, x);
        let (v, e) = gauss_kronrod_21(&g, a, b);
        evals += 21;
        if !v.is_finite() || !e.is_finite() {
            return Err(QuadError::NonFinite { at: 0.5 * (a + b) });
        }
        total += v;
        total_err += e;
        heap.push(Segment {
            a,
            b,
            piece: idx,
            value: v,
            error: e,
            order,
        });
        order += 1;
    }

    loop {
        if total_err <= tol.target(total) {
            break;
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        let width = worst.b - worst.a;
        let scale = worst.a.abs().max(worst.b.abs()).max(f64::MIN_POSITIVE);
        if width <= 1e3 * f64::EPSILON * scale || mid <= worst.a || mid >= worst.b {
            // Cannot subdivide further; keep its contribution as final.
            finished_value += worst.value;
            finished_err += worst.error;
            continue;
        }
        if evals + 42 > tol.max_evals {
            heap.push(worst);
            let best = QuadResult {
                value: total,
                error: total_err,
                evals,
            };
            return Err(QuadError::NotConverged { best });
        }
        let piece = pieces[worst.piece];
        let g = |x: f64| eval(piece, x);
        let (v1, e1) = gauss_kronrod_21(&g, worst.a, mid);
        let (v2, e2) = gauss_kronrod_21(&g, mid, worst.b);
        evals += 42;
        if !(v1.is_finite() && v2.is_finite() && e1.is_finite() && e2.is_finite()) {
            return Err(QuadError::NonFinite { at: mid });
        }
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        for (a, b, value, error) in [(worst.a, mid, v1, e1), (mid, worst.b, v2, e2)] {
            heap.push(Segment {
                a,
                b,
                piece: worst.piece,
                value,
                error,
                order,
            });
            order += 1;
        }
        // Resum periodically so that drift from incremental updates stays bounded.
        if order.is_multiple_of(256) {
            total = finished_value + heap.iter().map(|s| s.value).sum::<f64>();
            total_err = finished_err + heap.iter().map(|s| s.error).sum::<f64>();
        }
    }

    // Deterministic final sum in segment-creation order.
    let mut segs: Vec<&Segment> = heap.iter().collect();
    segs.sort_by_key(|s| s.order);
    let value = finished_value + segs.iter().map(|s| s.value).sum::<f64>();
    let error = finished_err + segs.iter().map(|s| s.error).sum::<f64>();
    if error > tol.target(value) && !heap.is_empty() {
        return Err(QuadError::NotConverged {
            best: QuadResult { value, error, evals },
        });
    }
    Ok(QuadResult { value, error, evals })
}

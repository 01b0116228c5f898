//! Acceptance criteria, one line each.
//!
//! The process exits nonzero when a criterion fails that is not listed in
//! [`DOCUMENTED_RED`], or when a listed one unexpectedly passes.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use lelong_core::current::{poisson_eval, BoundaryProfile, CurrentSpec};
use lelong_core::kernel::{
    kernel_k, kernel_k_uv, lemma_exp_oracle, main_bound_report, rho_solver, regime_constant_sampler, KernelQuery,
    RegimeThresholds, SamplerTarget,
};
use lelong_core::mass::{bound_g_via_kernel, default_r_grid, linear_fit, mass_profile};
use lelong_core::recurrence::{
    circle_factor_decay_slope, m_ar_pushforward, m_of_r, visibility_n_replicated, CircleGrid, LeafUniformization,
};
use lelong_core::{HalfPlanePoint, Singularity, Tolerance};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_601;

// Pinned tolerances.
const EXP_ORACLE_TOL: f64 = 1e-8;
const EXP_ORACLE_TIME: Duration = Duration::from_secs(1);
const COORD_TOL: f64 = 1e-12;
const COORD_SAMPLES: usize = 10_000;
const COORD_TIME: Duration = Duration::from_secs(5);
const POISSON_TOL: f64 = 1e-6;
const KERNEL_FORMS_REL: f64 = 1e-5;
const REFINEMENT_DRIFT: f64 = 0.10;
const CASE1_SLACK: f64 = 0.15;
const REGIME_CHANGE: f64 = 0.15;
const REGIME_SAMPLES: usize = 10_000;
const RHO_RESIDUAL: f64 = 1e-10;
const LELONG_RATIO: f64 = 0.2;
const LELONG_SLOPE_BAND: f64 = 0.2;
const G_BOUND_DRIFT: f64 = 0.10;
const MASS_TOL: f64 = 1e-3;
const DEVIATION_RANGE: f64 = 1.0;
const CIRCLE_SLOPE: f64 = -1.0;
const CIRCLE_SLOPE_BAND: f64 = 0.1;

/// Criteria that fail for reasons recorded in the decisions ledger.
///
/// 7: the diagonal band is `[r/c2, c2 r]`, and at its corner `(c2 r, r/c2)`
/// the ratio is about `2/c2^4`, so doubling `c2` moves the infimum by ~16x.
/// 11: the circle-factor deficit decays like `R^-2`.
const DOCUMENTED_RED: &[u32] = &[7, 11];

struct Outcome {
    pass: bool,
    detail: String,
}

fn lambdas() -> [(&'static str, Complex64); 3] {
    [
        ("i", Complex64::new(0.0, 1.0)),
        ("1+i", Complex64::new(1.0, 1.0)),
        ("-1+i", Complex64::new(-1.0, 1.0)),
    ]
}

fn sing(lambda: Complex64) -> Singularity {
    Singularity::from_lambda(lambda).unwrap()
}

fn sing_i() -> Singularity {
    sing(Complex64::new(0.0, 1.0))
}

fn tol(rel: f64, abs: f64) -> Tolerance {
    Tolerance::new(rel, abs, 4_000_000).unwrap()
}

fn rel_change(a: f64, b: f64) -> f64 {
    (b - a).abs() / a.abs()
}

fn builtin_profiles() -> [(&'static str, BoundaryProfile, Tolerance); 3] {
    [
        (
            "bump",
            BoundaryProfile::Bump {
                center: 0.0,
                width: 1.0,
                height: 1.0,
            },
            tol(1e-7, 1e-10),
        ),
        (
            "cauchy",
            BoundaryProfile::Cauchy {
                center: 0.0,
                width: 1.0,
                height: 1.0,
            },
            tol(1e-7, 1e-10),
        ),
        (
            "algebraic",
            BoundaryProfile::AlgebraicTail {
                exponent: 1.5,
                height: 1.0,
            },
            tol(1e-5, 1e-9),
        ),
    ]
}

fn c1_exponential_moment() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for s0 in [1.0, 2.0, 10.0] {
        let r = lemma_exp_oracle(s0, &tol(1e-12, 1e-13)).unwrap();
        worst = worst.max((r.value - (s0 / 2.0 + 0.25)).abs());
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: worst < EXP_ORACLE_TOL && elapsed < EXP_ORACLE_TIME,
        detail: format!("max error {worst:.2e}, {elapsed:.2?}"),
    }
}

fn c2_coordinates() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let i = Complex64::new(0.0, 1.0);
    let mut worst = 0.0f64;
    for (_, lambda) in lambdas() {
        let s = sing(lambda);
        let inner = s.annulus_inner_radius();
        for _ in 0..COORD_SAMPLES / 3 + 1 {
            let alpha = Complex64::from_polar(rng.gen_range(inner..1.0), rng.gen_range(-PI..PI));
            let t = rng.gen_range(0.05..30.0);
            let v = rng.gen_range(0.05..30.0);
            let zeta = s.sector_point_tv(t, v).unwrap();
            let p = s.leaf_point(alpha, &zeta).unwrap();
            // ψ_α(ζ) = (e^{iζ'}, α e^{iλζ'}) with ζ' = ζ + ln|α|/b.
            let zp = Complex64::new(zeta.u + alpha.norm().ln() / s.b, zeta.v);
            let z = (i * zp).exp();
            let w = alpha * (i * lambda * zp).exp();
            let speed = (i * z).norm_sqr() + (i * lambda * w).norm_sqr();
            let half = s.sector_to_halfplane(&zeta).unwrap();
            let back = s.halfplane_to_sector(&half).unwrap();
            let scale = zeta.u.abs().max(zeta.v);
            let errs = [
                (p.z.norm() - (-v).exp()).abs() / (-v).exp(),
                (p.w.norm() - (-t).exp()).abs() / (-t).exp(),
                (p.z - z).norm() / z.norm(),
                (p.w - w).norm() / w.norm(),
                (s.leaf_speed_sq(&p) - speed).abs() / speed,
                (s.leaf_speed_sq_tv(t, v) - speed).abs() / speed,
                ((back.u - zeta.u).abs() + (back.v - zeta.v).abs()) / scale,
            ];
            worst = errs.iter().fold(worst, |a, &e| a.max(e));
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: worst < COORD_TOL && elapsed < COORD_TIME,
        detail: format!("max relative error {worst:.2e} over {} samples, {elapsed:.2?}", 3 * (COORD_SAMPLES / 3 + 1)),
    }
}

fn c3_poisson_normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let one = BoundaryProfile::Constant { height: 1.0 };
    let t = tol(1e-10, 1e-12);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let p = HalfPlanePoint::new(rng.gen_range(-100.0..100.0), 10f64.powf(rng.gen_range(-3.0..3.0))).unwrap();
        worst = worst.max((poisson_eval(&one, &p, &t).unwrap() - 1.0).abs());
    }
    let step = BoundaryProfile::Step {
        start: 0.0,
        height: 1.0,
    };
    let half = poisson_eval(&step, &HalfPlanePoint::new(0.0, 1.0).unwrap(), &t).unwrap();
    let half_err = (half - 0.5).abs();
    Outcome {
        pass: worst < POISSON_TOL && half_err < POISSON_TOL,
        detail: format!("constant max error {worst:.2e}, half-line {half:.12}"),
    }
}

fn c4_kernel_forms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 4);
    let t = tol(1e-8, 1e-13);
    let mut worst = 0.0f64;
    for k in 0..20 {
        let (_, lambda) = lambdas()[k % 3];
        let s = sing(lambda);
        let q = KernelQuery::new(10f64.powf(rng.gen_range(0.0..1.5)), rng.gen_range(-50.0..50.0)).unwrap();
        let a = kernel_k(&s, &q, &t).unwrap().value;
        let b = kernel_k_uv(&s, &q, &t).unwrap().value;
        worst = worst.max(rel_change(a, b));
    }
    Outcome {
        pass: worst < KERNEL_FORMS_REL,
        detail: format!("max relative difference {worst:.2e} on 20 points"),
    }
}

fn c5_main_bound() -> Outcome {
    let start = Instant::now();
    let s_grid: Vec<f64> = (0..8).map(|k| 2f64.powi(k)).collect();
    let mut y_grid = vec![0.0];
    for y in [1.0, 10.0, 1e2, 1e3, 1e4] {
        y_grid.extend([y, -y]);
    }
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, lambda) in lambdas() {
        let r = main_bound_report(&sing(lambda), &s_grid, &y_grid, &tol(1e-6, 1e-14)).unwrap();
        let finite = r.cells.iter().all(|c| c.bound_ratio.is_finite()) && r.failed_cells == 0;
        pass &= finite && r.refinement_drift < REFINEMENT_DRIFT;
        parts.push(format!(
            "λ={name}: sup {:.4} -> {:.4} (drift {:.3}, failed {})",
            r.empirical_c, r.refined_empirical_c, r.refinement_drift, r.failed_cells
        ));
    }
    Outcome {
        pass,
        detail: format!("{}; {:.1?}", parts.join(", "), start.elapsed()),
    }
}

fn c6_case1_rate() -> Outcome {
    let s_grid: Vec<f64> = (0..=8).map(|k| 8.0 * 2f64.powf(k as f64 / 2.0)).collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, lambda) in lambdas() {
        let s = sing(lambda);
        let ks: Vec<f64> = s_grid
            .iter()
            .map(|&x| kernel_k(&s, &KernelQuery::new(x, 0.0).unwrap(), &tol(1e-8, 1e-16)).unwrap().value)
            .collect();
        let lx: Vec<f64> = s_grid.iter().map(|x| x.ln()).collect();
        let ly: Vec<f64> = ks.iter().map(|k| k.ln()).collect();
        let slope = linear_fit(&lx, &ly).unwrap().slope;
        let limit = -(s.gamma - 1.0) + CASE1_SLACK;
        pass &= slope <= limit;
        parts.push(format!("λ={name}: slope {slope:.4} (limit {limit:.4})"));
    }
    Outcome {
        pass,
        detail: parts.join(", "),
    }
}

fn c7_regime_bands() -> Outcome {
    let s = sing_i();
    let base = RegimeThresholds::default();
    let doubled = base.doubled();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, target) in [
        ("P1|W|", SamplerTarget::Part1Modulus),
        ("P1 V", SamplerTarget::Part1Imaginary),
        ("P2", SamplerTarget::Far),
        ("P3", SamplerTarget::NearOrigin),
        ("P4", SamplerTarget::Diagonal),
    ] {
        let a = regime_constant_sampler(&s, target, &base, REGIME_SAMPLES, SEED).unwrap();
        let b = regime_constant_sampler(&s, target, &doubled, REGIME_SAMPLES, SEED).unwrap();
        let finite = [a.sup_ratio, a.inf_ratio, b.sup_ratio, b.inf_ratio]
            .iter()
            .all(|x| x.is_finite() && *x > 0.0);
        let change = rel_change(a.sup_ratio, b.sup_ratio).max(rel_change(a.inf_ratio, b.inf_ratio));
        pass &= finite && change < REGIME_CHANGE;
        parts.push(format!(
            "{name}: [{:.3e}, {:.3e}] -> [{:.3e}, {:.3e}] ({:.1}%)",
            a.inf_ratio,
            a.sup_ratio,
            b.inf_ratio,
            b.sup_ratio,
            100.0 * change
        ));
    }
    // ρ on its hypothesis set 1 <= v <= (1 + y)^{1/γ}/c3, 0 < y <= 10⁴. For
    // y < 0 the v-level ray has no root when λ = i, since U >= -v² there.
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 7);
    let y_lo = base.c3.powf(s.gamma);
    let mut worst = 0.0f64;
    let mut solved = 0;
    for _ in 0..1000 {
        let ay = (rng.gen_range(y_lo.ln()..1e4f64.ln())).exp();
        let y = ay;
        let v_hi = (1.0 + ay).powf(1.0 / s.gamma) / base.c3;
        let v = rng.gen_range(1.0..v_hi);
        let sol = rho_solver(&s, y, v, &base).unwrap();
        assert!(sol.precondition_met);
        worst = worst.max(sol.residual);
        solved += 1;
    }
    pass &= worst < RHO_RESIDUAL;
    parts.push(format!("P5: max residual {worst:.2e} over {solved} roots"));
    Outcome {
        pass,
        detail: parts.join(", "),
    }
}

struct Profiles {
    rows: Vec<(&'static str, lelong_core::mass::MassProfile)>,
}

fn compute_profiles() -> Profiles {
    let s = sing_i();
    let grid = default_r_grid(12);
    let rows = builtin_profiles()
        .into_iter()
        .map(|(name, p, t)| (name, mass_profile(&CurrentSpec::single_atom(&s, p), &s, &grid, &t).unwrap()))
        .collect();
    Profiles { rows }
}

fn c8_monotonicity(p: &Profiles) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, m) in &p.rows {
        pass &= m.monotone_violations.is_empty();
        parts.push(format!("{name}: {} violations", m.monotone_violations.len()));
    }
    Outcome {
        pass,
        detail: parts.join(", "),
    }
}

fn c9_lelong_vanishing(p: &Profiles) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, m) in &p.rows {
        let ratio = m.g[11] / m.g[0];
        pass &= ratio <= LELONG_RATIO;
        parts.push(format!("{name}: G(2^-12)/G(2^-1) = {ratio:.4}"));
    }
    let bump = &p.rows[0].1;
    let slope = bump.log_log_fit.unwrap().slope;
    let target = -(sing_i().gamma - 1.0);
    pass &= (slope - target).abs() <= LELONG_SLOPE_BAND * target.abs();
    parts.push(format!("bump log-log slope {slope:.4} (target {target} ± 20%)"));
    Outcome {
        pass,
        detail: parts.join(", "),
    }
}

fn c10_g_bound() -> Outcome {
    let s = sing_i();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, p, _) in builtin_profiles().into_iter().take(2) {
        let spec = CurrentSpec::single_atom(&s, p);
        let sup = |t: &Tolerance| -> (f64, bool) {
            let ratios: Vec<f64> = default_r_grid(12)
                .iter()
                .map(|&r| bound_g_via_kernel(&spec, &s, r, t).unwrap().ratio())
                .collect();
            let ok = ratios.iter().all(|x| x.is_finite() && *x > 0.0);
            (ratios.iter().fold(0.0, |a: f64, &b| a.max(b)), ok)
        };
        let (coarse, ok_a) = sup(&tol(1e-5, 1e-8));
        let (fine, ok_b) = sup(&tol(1e-7, 1e-10));
        let drift = rel_change(fine, coarse);
        pass &= ok_a && ok_b && drift <= G_BOUND_DRIFT;
        parts.push(format!("{name}: sup lhs/rhs {fine:.5} (drift {drift:.2e})"));
    }
    Outcome {
        pass,
        detail: parts.join(", "),
    }
}

fn default_uniformization() -> LeafUniformization {
    let s = sing_i();
    LeafUniformization::at_sector_point(&s, s.mid_annulus_label(), 1.0, 1.0).unwrap()
}

fn c11_poincare() -> Outcome {
    let uni = default_uniformization();
    let t = tol(1e-11, 1e-12);
    let grid = CircleGrid { n_t: 256, n_theta: 64 };
    let mass_err = [10.0, 15.0, 20.0]
        .iter()
        .map(|&r| (m_ar_pushforward(&uni, r, |_| 1.0, &grid, &t).unwrap() - 1.0).abs())
        .fold(0.0, f64::max);
    let devs: Vec<f64> = (0..=20)
        .map(|k| {
            let r = 10.0 + 0.5 * k as f64;
            m_of_r(r, &t).unwrap().value - 2.0 * PI * r
        })
        .collect();
    let range = devs.iter().cloned().fold(f64::MIN, f64::max) - devs.iter().cloned().fold(f64::MAX, f64::min);
    let slope = circle_factor_decay_slope(5.0, 15.0, 41).unwrap();
    let mass_ok = mass_err < MASS_TOL;
    let range_ok = range < DEVIATION_RANGE;
    let slope_ok = (slope - CIRCLE_SLOPE).abs() <= CIRCLE_SLOPE_BAND;
    let mark = |b: bool| if b { "ok" } else { "FAIL" };
    Outcome {
        pass: mass_ok && range_ok && slope_ok,
        detail: format!(
            "mass error {mass_err:.2e} [{}], M_R - 2πR range {range:.2e} [{}], circle factor slope {slope:.4} vs {CIRCLE_SLOPE} ± {CIRCLE_SLOPE_BAND} [{}]",
            mark(mass_ok),
            mark(range_ok),
            mark(slope_ok)
        ),
    }
}

fn c12_visibility() -> Outcome {
    let uni = default_uniformization();
    let origin = [Complex64::new(0.0, 0.0); 2];
    let grid = CircleGrid::default();
    let horizon = 20.0;
    let rows: Vec<(f64, f64, f64)> = default_r_grid(12)
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let n = visibility_n_replicated(&uni, origin, r, horizon, &grid, 8, SEED + k as u64).unwrap();
            let l = -r.ln();
            (r, n.value * l, n.error * l)
        })
        .collect();
    let tail = &rows[rows.len() / 2..];
    let mut pass = true;
    for w in tail.windows(2) {
        pass &= w[1].1 <= w[0].1 + w[0].2 + w[1].2;
    }
    let shown: Vec<String> = tail.iter().map(|(_, x, e)| format!("{x:.3e}±{e:.0e}")).collect();
    Outcome {
        pass,
        detail: format!("N|log r| on r = 2^-7..2^-12: {}", shown.join(" ")),
    }
}

fn main() {
    let mut unexpected = Vec::new();
    let mut report = |id: u32, name: &str, run: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = run();
        let documented = DOCUMENTED_RED.contains(&id);
        let tag = match (o.pass, documented) {
            (true, false) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "FAIL (documented)",
            (true, true) => "PASS (expected red)",
        };
        if o.pass == documented {
            unexpected.push(id);
        }
        println!("criterion {id:>2} {tag}: {name}: {} [{:.1?}]", o.detail, start.elapsed());
    };
    report(1, "exponential-moment oracle", &c1_exponential_moment);
    report(2, "coordinate identities", &c2_coordinates);
    report(3, "Poisson normalization", &c3_poisson_normalization);
    report(4, "kernel coordinate equality", &c4_kernel_forms);
    report(5, "main bound certification", &c5_main_bound);
    report(6, "near-origin decay rate", &c6_case1_rate);
    report(7, "regime bands", &c7_regime_bands);
    let profiles = compute_profiles();
    report(8, "monotonicity of G", &|| c8_monotonicity(&profiles));
    report(9, "Lelong vanishing", &|| c9_lelong_vanishing(&profiles));
    report(10, "kernel bound for G", &c10_g_bound);
    report(11, "Poincaré machinery", &c11_poincare);
    report(12, "visibility decay", &c12_visibility);
    if !unexpected.is_empty() {
        eprintln!("unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}

//! Independent oracles for the quadrature-backed quantities.

use lelong_core::current::{BoundaryProfile, CurrentSpec};
use lelong_core::kernel::{kernel_k, KernelQuery};
use lelong_core::mass::mass_f;
use lelong_core::quad::{integrate_2d, CornerDomain, DecayDescriptor};
use lelong_core::{Singularity, Tolerance};
use num_complex::Complex64;

const E1_2: f64 = 0.04890051070806112;

fn tol() -> Tolerance {
    Tolerance::new(1e-9, 1e-11, 4_000_000).unwrap()
}

fn descriptor(far: f64, near: f64, alg: f64) -> DecayDescriptor {
    DecayDescriptor {
        exp_rate: 2.0,
        alg_rate: alg,
        far_amplitude: far,
        near_amplitude: near,
        onset: 1.0,
    }
}

#[test]
fn corner_exponential_product() {
    // 2 ∫_1^∞ e^{2-2m} e^{-m} e^{-m} dm
    let f = |t: f64, v: f64| (2.0 - 2.0 * t.min(v)).exp() * (-t - v).exp();
    // e^{-M} <= (3/e)^3 M^{-3}
    let d = descriptor(1.4 / 1f64.exp(), (-2f64).exp(), 3.0);
    let (r, _) = integrate_2d(f, CornerDomain::Quadrant { s: 1.0 }, &d, &tol()).unwrap();
    let exact = 0.5 * (-2f64).exp();
    assert!((r.value - exact).abs() < 1e-9, "{} vs {exact}", r.value);
    assert!(r.error < 1e-8);
}

#[test]
fn corner_algebraic_tail() {
    // e² E₂(2) = 1 - 2 e² E₁(2)
    let f = |t: f64, v: f64| (2.0 - 2.0 * t.min(v)).exp() / t.max(v).powi(3);
    let (r, _) = integrate_2d(f, CornerDomain::Quadrant { s: 1.0 }, &descriptor(1.0, 1.0, 3.0), &tol()).unwrap();
    let exact = 1.0 - 2.0 * 2f64.exp() * E1_2;
    assert!((r.value - exact).abs() < 1e-8, "{} vs {exact}", r.value);
}

#[test]
fn ball_area_in_exponential_coordinates() {
    // x = e^{-2t}, y = e^{-2v} maps the ball onto a triangle of area e^{-4s}/2.
    for s in [0.5, 2.0, 6.0] {
        let f = |t: f64, v: f64| 4.0 * (4.0 * s - 2.0 * t - 2.0 * v).exp();
        let d = DecayDescriptor {
            exp_rate: 2.0,
            alg_rate: 3.0,
            far_amplitude: 4.0,
            near_amplitude: 4.0,
            onset: 1.0,
        };
        let (r, _) = integrate_2d(f, CornerDomain::Ball { s }, &d, &tol()).unwrap();
        assert!((r.value - 0.5).abs() < 1e-8, "s = {s}: {}", r.value);
    }
}

/// Tensor midpoint rule on `[s, ∞)²` after `t = s + (x/(1-x))³`.
fn mapped_midpoint<F: Fn(f64, f64) -> f64>(s: f64, n: usize, f: F) -> f64 {
    let h = 1.0 / n as f64;
    let nodes: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let x = (i as f64 + 0.5) * h;
            let q = x / (1.0 - x);
            (s + q * q * q, 3.0 * q * q / ((1.0 - x) * (1.0 - x)) * h)
        })
        .collect();
    let mut acc = 0.0;
    for &(t, wt) in &nodes {
        for &(v, wv) in &nodes {
            acc += wt * wv * f(t, v);
        }
    }
    acc
}

#[test]
fn trace_mass_against_riemann_sum() {
    let sing = Singularity::from_lambda(Complex64::new(0.0, 1.0)).unwrap();
    let bump = BoundaryProfile::Bump {
        center: 0.0,
        width: 1.0,
        height: 1.0,
    };
    let spec = CurrentSpec::single_atom(&sing, bump);
    let r = 0.5f64;
    let computed = mass_f(&spec, &sing, r, &Tolerance::new(1e-8, 1e-12, 4_000_000).unwrap())
        .unwrap()
        .value;
    // λ = i: u = t, and i dζ∧dζ̄ = 2 du dv.
    let s = -r.ln();
    let oracle = mapped_midpoint(s, 2000, |t, v| {
        if (-2.0 * t).exp() + (-2.0 * v).exp() > r * r {
            return 0.0;
        }
        let w = sing.power_map(sing.u_of(t, v), v);
        let h = bump.harmonic_extension(&w).unwrap();
        2.0 * h * ((-2.0 * v).exp() + (-2.0 * t).exp())
    });
    assert!((computed - oracle).abs() < 0.02 * oracle, "{computed} vs {oracle}");
}

#[test]
fn kernel_against_riemann_sum() {
    for (lambda, s, y) in [
        (Complex64::new(1.0, 1.0), 2.0, 3.0),
        (Complex64::new(0.0, 1.0), 1.5, -2.0),
        (Complex64::new(-1.0, 1.0), 1.0, 0.5),
    ] {
        let sing = Singularity::from_lambda(lambda).unwrap();
        let k = kernel_k(&sing, &KernelQuery::new(s, y).unwrap(), &tol()).unwrap().value;
        let oracle = mapped_midpoint(s, 3000, |t, v| {
            let w = sing.power_map(sing.u_of(t, v), v);
            let p = w.im / (w.im * w.im + (y - w.re).powi(2));
            (2.0 * (s - t.min(v))).exp() * p
        }) / sing.b;
        assert!((k - oracle).abs() < 1e-4 * oracle, "λ = {lambda}: {k} vs {oracle}");
    }
}

//! Subcommand bodies. Each returns its tables; nothing here touches the disk.

use lelong_core::current::{BoundaryProfile, CurrentSpec};
use lelong_core::kernel::{
    bound_ratio_cells, lemma_exp_oracle, main_bound_report, regime_constant_sampler, rho_solver, KernelCell,
    KernelError, SamplerTarget,
};
use lelong_core::mass::{mass_profile, MassError};
use lelong_core::recurrence::{recurrence_report, LeafUniformization, RecurrenceError, RecurrenceSetup};
use lelong_core::{QuadError, Singularity, Tolerance};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::report::{Cell, RunOutput, Table};
use crate::{CliError, Command};

/// Loosest relative tolerance used for slowly decaying profiles in `all`.
pub const ALGEBRAIC_REL: f64 = 1e-5;

const DEFAULT_S0: [f64; 3] = [1.0, 2.0, 10.0];
const RHO_SAMPLES: usize = 1000;

fn invalid(context: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{context}: {e}"))
}

pub fn run(cmd: &Command, cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    match cmd {
        Command::Oracle { s0 } => oracle(if s0.is_empty() { &DEFAULT_S0 } else { s0 }, cfg),
        Command::Profile => {
            let sing = cfg.singularity()?;
            profile(&sing, &cfg.current(&sing), &cfg.grids.r, &cfg.tolerance()?, "profile")
        }
        Command::KernelBound { refine } => kernel_bound(&cfg.singularity()?, cfg, *refine, "kernel"),
        Command::Regimes => regimes(cfg),
        Command::Recurrence => recurrence(cfg),
        Command::All => all(cfg),
    }
}

pub fn oracle(s0s: &[f64], cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let tol = cfg.tolerance()?;
    let mut out = RunOutput::default();
    let mut t = Table::new("oracle", &["s0", "computed", "expected", "error"]);
    for &s0 in s0s {
        let computed = match lemma_exp_oracle(s0, &tol) {
            Ok(r) => r.value,
            Err(KernelError::Quadrature(QuadError::NotConverged { best })) => {
                out.fail(format!("oracle at s0 = {s0} did not converge"));
                best.value
            }
            Err(e) => return Err(invalid("oracle", e)),
        };
        let expected = s0 / 2.0 + 0.25;
        println!("s0 = {s0}: {computed} (closed form {expected})");
        t.push(vec![s0.into(), computed.into(), expected.into(), (computed - expected).abs().into()]);
    }
    out.tables.push(t);
    Ok(out)
}

pub fn profile(
    sing: &Singularity,
    spec: &CurrentSpec,
    r_grid: &[f64],
    tol: &Tolerance,
    name: &str,
) -> Result<RunOutput, CliError> {
    let mut out = RunOutput::default();
    let m = match mass_profile(spec, sing, r_grid, tol) {
        Ok(m) => m,
        Err(e @ MassError::InvalidGrid) | Err(e @ MassError::InvalidRadius(_)) => return Err(invalid(name, e)),
        Err(e) => {
            // A failure without any estimate, e.g. a non-finite integrand.
            out.fail(format!("{name}: {e}"));
            out.tables.push(Table::new(name, &["r", "F", "G", "F_err", "G_err", "monotone_violation"]));
            return Ok(out);
        }
    };
    let mut t = Table::new(name, &["r", "F", "G", "F_err", "G_err", "monotone_violation"]);
    for (k, &r) in m.r_grid.iter().enumerate() {
        let violation = m.monotone_violations.iter().any(|v| v.r == r);
        t.push(vec![r.into(), m.f[k].into(), m.g[k].into(), m.f_err[k].into(), m.g_err[k].into(), violation.into()]);
    }
    out.tables.push(t);
    let mut s = Table::summary(format!("{name}_summary"));
    s.kv("gamma", sing.gamma);
    s.kv("lelong_estimate", m.lelong_estimate);
    s.kv("extrapolated_limit", m.extrapolation.map(|f| f.intercept));
    s.kv("log_log_slope", m.log_log_fit.map(|f| f.slope));
    s.kv("monotone_violations", m.monotone_violations.len());
    s.kv("unconverged_radii", m.unconverged.len());
    out.tables.push(s);
    if !m.monotone_violations.is_empty() {
        out.warn(format!("{name}: G increases beyond its error bars at {} radii", m.monotone_violations.len()));
    }
    if !m.unconverged.is_empty() {
        out.fail(format!("{name}: G did not converge at r = {:?}", m.unconverged));
    }
    Ok(out)
}

fn cell_row(c: &KernelCell) -> Vec<Cell> {
    vec![c.s.into(), c.y.into(), c.k.into(), c.k_err.into(), c.bound_ratio.into(), (!c.failed).into()]
}

pub fn kernel_bound(sing: &Singularity, cfg: &ExperimentConfig, refine: bool, name: &str) -> Result<RunOutput, CliError> {
    let tol = cfg.tolerance()?;
    let (s_grid, y_grid) = (&cfg.grids.s, &cfg.grids.y);
    let mut out = RunOutput::default();
    let mut cells = Table::new(name, &["s", "y", "K", "K_err", "bound_ratio", "converged"]);
    let lambda = Complex64::new(sing.a, sing.b);
    let failed;
    if refine {
        let rep = main_bound_report(sing, s_grid, y_grid, &tol).map_err(|e| invalid(name, e))?;
        for c in &rep.cells {
            cells.push(cell_row(c));
        }
        let mut s = Table::new(
            format!("{name}_summary"),
            &["lambda_re", "lambda_im", "gamma", "empirical_c", "refined_empirical_c", "refinement_drift", "failed_cells"],
        );
        s.push(vec![
            lambda.re.into(),
            lambda.im.into(),
            sing.gamma.into(),
            rep.empirical_c.into(),
            rep.refined_empirical_c.into(),
            rep.refinement_drift.into(),
            rep.failed_cells.into(),
        ]);
        out.tables.push(cells);
        out.tables.push(s);
        failed = rep.failed_cells;
    } else {
        let rows = bound_ratio_cells(sing, s_grid, y_grid, &tol).map_err(|e| invalid(name, e))?;
        let c = rows.iter().filter(|c| !c.failed).map(|c| c.bound_ratio).fold(0.0, f64::max);
        for r in &rows {
            cells.push(cell_row(r));
        }
        failed = rows.iter().filter(|c| c.failed).count();
        let mut s = Table::new(format!("{name}_summary"), &["lambda_re", "lambda_im", "gamma", "empirical_c", "failed_cells"]);
        s.push(vec![lambda.re.into(), lambda.im.into(), sing.gamma.into(), c.into(), failed.into()]);
        out.tables.push(cells);
        out.tables.push(s);
    }
    if failed > 0 {
        out.fail(format!("{name}: {failed} kernel cells did not converge"));
    }
    Ok(out)
}

const TARGETS: [(&str, SamplerTarget); 6] = [
    ("part1_modulus", SamplerTarget::Part1Modulus),
    ("part1_imaginary", SamplerTarget::Part1Imaginary),
    ("far", SamplerTarget::Far),
    ("near_origin", SamplerTarget::NearOrigin),
    ("diagonal", SamplerTarget::Diagonal),
    ("boundary_strip", SamplerTarget::BoundaryStrip),
];

fn rel_change(a: f64, b: f64) -> f64 {
    (b - a).abs() / a.abs()
}

pub fn regimes(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let sing = cfg.singularity()?;
    let seed = cfg.require_seed("regimes")?;
    let base = cfg.thresholds();
    let doubled = base.doubled();
    let n = cfg.regimes.samples;
    let mut out = RunOutput::default();
    let mut bands = Table::new(
        "regimes",
        &["part", "c2", "c3", "samples", "rejected", "inf_ratio", "sup_ratio", "band_constant"],
    );
    let mut stability = Table::new("regime_stability", &["part", "inf_change", "sup_change"]);
    for (name, target) in TARGETS {
        let mut reports = Vec::new();
        for th in [base, doubled] {
            match regime_constant_sampler(&sing, target, &th, n, seed) {
                Ok(r) => {
                    bands.push(vec![
                        name.into(),
                        th.c2.into(),
                        th.c3.into(),
                        r.samples.into(),
                        r.rejected.into(),
                        r.inf_ratio.into(),
                        r.sup_ratio.into(),
                        r.band_constant().into(),
                    ]);
                    reports.push(r);
                }
                Err(e @ KernelError::EmptyHypothesis(_)) => out.warn(format!("{name} at c2 = {}: {e}", th.c2)),
                Err(e) => return Err(invalid("regimes", e)),
            }
        }
        if let [a, b] = reports[..] {
            stability.push(vec![
                name.into(),
                rel_change(a.inf_ratio, b.inf_ratio).into(),
                rel_change(a.sup_ratio, b.sup_ratio).into(),
            ]);
        }
    }
    out.tables.push(bands);
    out.tables.push(stability);
    let rho = rho_table(&sing, cfg, seed, &mut out)?;
    out.tables.push(rho);
    Ok(out)
}

/// ρ at random points of its hypothesis set with `y > 0`.
fn rho_table(sing: &Singularity, cfg: &ExperimentConfig, seed: u64, out: &mut RunOutput) -> Result<Table, CliError> {
    let th = cfg.thresholds();
    let mut t = Table::new("rho", &["y", "v", "rho", "u", "residual", "precondition_met", "in_band"]);
    let y_lo = th.c3.powf(sing.gamma);
    let y_hi = 1e4f64.max(100.0 * y_lo);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0005);
    let mut missing = 0;
    for _ in 0..RHO_SAMPLES {
        let y = rng.gen_range(y_lo.ln()..y_hi.ln()).exp();
        let v_hi = (1.0 + y).powf(1.0 / sing.gamma) / th.c3;
        let v = if v_hi > 1.0 { rng.gen_range(1.0..v_hi) } else { 1.0 };
        match rho_solver(sing, y, v, &th) {
            Ok(s) => t.push(vec![
                y.into(),
                v.into(),
                s.rho.into(),
                s.u.into(),
                s.residual.into(),
                s.precondition_met.into(),
                s.in_band.into(),
            ]),
            Err(KernelError::NoRoot { .. }) => missing += 1,
            Err(e) => return Err(invalid("rho", e)),
        }
    }
    if missing > 0 {
        out.warn(format!("rho: no root at {missing} of {RHO_SAMPLES} sample points"));
    }
    Ok(t)
}

fn recurrence_failure(out: &mut RunOutput, e: RecurrenceError) -> Result<(), CliError> {
    match e {
        RecurrenceError::Quadrature(q) => {
            out.fail(format!("recurrence: {q}"));
            Ok(())
        }
        other => Err(invalid("recurrence", other)),
    }
}

pub fn recurrence(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let sing = cfg.singularity()?;
    let seed = cfg.require_seed("recurrence")?;
    let rc = &cfg.recurrence;
    let mut out = RunOutput::default();
    let uni = LeafUniformization::at_sector_point(&sing, sing.mid_annulus_label(), rc.base[0], rc.base[1])
        .map_err(|e| invalid("recurrence.base", e))?;
    let setup = RecurrenceSetup {
        targets: rc.targets.clone(),
        r_grid: cfg.grids.r.clone(),
        horizon: rc.horizon,
        horizons: cfg.grids.horizons.clone(),
        grid: cfg.circle_grid(),
        replicates: rc.replicates,
    };
    let rep = match recurrence_report(&uni, &setup, &cfg.tolerance()?, seed) {
        Ok(r) => r,
        Err(e) => {
            recurrence_failure(&mut out, e)?;
            return Ok(out);
        }
    };
    let mut vis = Table::new("visibility", &["z_re", "z_im", "w_re", "w_im", "r", "R", "N", "N_err", "m_ball"]);
    for row in &rep.visibility {
        let [z, w] = row.x;
        vis.push(vec![
            z.re.into(),
            z.im.into(),
            w.re.into(),
            w.im.into(),
            row.r.into(),
            row.horizon.into(),
            row.n.into(),
            row.n_err.into(),
            row.m_ball.into(),
        ]);
    }
    let mut hz = Table::new("horizons", &["R", "M_R", "deviation", "mass_check"]);
    for h in &rep.horizons {
        hz.push(vec![h.horizon.into(), h.m_r.into(), h.deviation.into(), h.mass_check.into()]);
    }
    let mut s = Table::summary("recurrence_summary");
    s.kv("eta", rep.eta);
    s.kv("circle_factor_slope", rep.circle_factor_slope);
    for (k, fit) in rep.decay_fits.iter().enumerate() {
        s.kv(&format!("decay_slope_target_{k}"), *fit);
    }
    out.tables.extend([vis, hz, s]);
    Ok(out)
}

pub fn builtin_profiles() -> [(&'static str, BoundaryProfile); 3] {
    [
        (
            "bump",
            BoundaryProfile::Bump {
                center: 0.0,
                width: 1.0,
                height: 1.0,
            },
        ),
        (
            "cauchy",
            BoundaryProfile::Cauchy {
                center: 0.0,
                width: 1.0,
                height: 1.0,
            },
        ),
        (
            "algebraic",
            BoundaryProfile::AlgebraicTail {
                exponent: 1.5,
                height: 1.0,
            },
        ),
    ]
}

fn lambda_tag(l: Complex64) -> String {
    format!("{}_{}", l.re, l.im)
}

pub fn all(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let mut out = oracle(&DEFAULT_S0, cfg)?;
    for lambda in [Complex64::new(0.0, 1.0), Complex64::new(1.0, 1.0), Complex64::new(-1.0, 1.0)] {
        let sing = Singularity::from_lambda(lambda).map_err(|e| invalid("lambda", e))?;
        out.absorb(kernel_bound(&sing, cfg, true, &format!("kernel_{}", lambda_tag(lambda)))?);
    }
    let sing = cfg.singularity()?;
    let tol = cfg.tolerance()?;
    for (name, p) in builtin_profiles() {
        let mut t = tol;
        if !p.has_closed_form() && t.rel < ALGEBRAIC_REL {
            t.rel = ALGEBRAIC_REL;
            out.warn(format!("profile_{name}: relative tolerance loosened to {ALGEBRAIC_REL:e}"));
        }
        out.absorb(profile(&sing, &CurrentSpec::single_atom(&sing, p), &cfg.grids.r, &t, &format!("profile_{name}"))?);
    }
    out.absorb(regimes(cfg)?);
    out.absorb(recurrence(cfg)?);
    Ok(out)
}

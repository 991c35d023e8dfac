//! Implementations of the subcommands.
//!
//! Each command returns an [`Outcome`]: the verdict, the one-line summaries
//! printed to stdout and the JSON report written to the output directory.

use crate::config::{DrivingSection, IdentitySection, RunConfig};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use sle_lab::charges::{Divisor, Point, Side};
use sle_lab::coulomb::{log_correlation_plane, moebius_transport, Moebius};
use sle_lab::driver::DrivingProcess;
use sle_lab::observables::{virasoro_npoint_recursion, PhaseTracker};
use sle_lab::partition::{
    bpz_cardy_residual, chordal_rho_background, null_vector_residual, radial_rho_background, Direction, Geometry,
    SleParams,
};
use sle_lab::verify::{exponent_regression, martingale_test, restriction_probability_test, Verdict};
use crate::CliError;
use std::f64::consts::TAU;
use std::path::Path;

type Result<T> = std::result::Result<T, CliError>;

/// Result of a command.
pub struct Outcome {
    pub pass: bool,
    pub summary: Vec<String>,
    /// Report file name (inside the output directory) and its content.
    pub report: Option<(String, Value)>,
}

impl Outcome {
    fn check(name: &str, pass: bool, line: String, report: Value) -> Self {
        Self { pass, summary: vec![line], report: Some((format!("{name}.json"), report)) }
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn random_neutral_divisor(rng: &mut ChaCha8Rng, n: usize) -> Divisor<f64> {
    let b: f64 = rng.random_range(-1.0..1.0);
    let mut d = Divisor::with_real_b(b);
    let mut total = 0.0;
    for k in 0..n {
        let z = c(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let s = if k + 1 == n { 2.0 * b - total } else { rng.random_range(-2.0..2.0) };
        total += s;
        d.push(Point::new(z, Side::Interior), c(s, 0.0));
    }
    d
}

fn random_moebius(rng: &mut ChaCha8Rng) -> Moebius<f64> {
    loop {
        let mut g = || c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let m = Moebius { a: g(), b: g(), c: g(), d: g() };
        if m.det().norm() > 0.5 {
            return m;
        }
    }
}

fn phase_defect(a: f64, b: f64) -> f64 {
    let d = a - b;
    (d - TAU * (d / TAU).round()).abs()
}

/// Möbius invariance of the plane correlation on random neutral divisors.
pub fn check_coulomb(cfg: &RunConfig) -> Result<Outcome> {
    let s = &cfg.coulomb;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut worst_mod, mut worst_phase, mut passed, mut done) = (0.0f64, 0.0f64, 0usize, 0usize);
    while done < s.random {
        let n = rng.random_range(2..=s.max_points);
        let d = random_neutral_divisor(&mut rng, n);
        let m = random_moebius(&mut rng);
        if d.entries().iter().any(|(p, _)| (m.c * p.coord + m.d).norm() < 0.1) {
            continue;
        }
        done += 1;
        let base = log_correlation_plane(&d)?;
        let moved = moebius_transport(&d, &m)?;
        let dm = (moved.log_modulus - base.log_modulus).abs();
        let dp = phase_defect(moved.phase, base.phase);
        worst_mod = worst_mod.max(dm);
        worst_phase = worst_phase.max(dp);
        if dm < s.tol && dp < s.tol {
            passed += 1;
        }
    }
    let pass = passed == s.random;
    Ok(Outcome::check(
        "check-coulomb",
        pass,
        format!(
            "check-coulomb: {passed}/{} Möbius-invariance checks passed (max |Δ log|C|| {worst_mod:.2e}, max phase \
             defect {worst_phase:.2e}, tol {:.0e})",
            s.random, s.tol
        ),
        json!({
            "command": "check-coulomb", "seed": cfg.seed, "checks": s.random, "passed": passed,
            "max_log_modulus_defect": worst_mod, "max_phase_defect": worst_phase, "tol": s.tol, "pass": pass,
        }),
    ))
}

fn params(kappa: f64, direction: Direction) -> SleParams<f64> {
    match direction {
        Direction::Forward => SleParams::forward(kappa, true),
        Direction::Backward => SleParams::backward(kappa, true),
    }
}

/// Random SLE(κ, ρ) background (driving point excluded); for controls all
/// weights are positive so that the defect of a wrong `b` cannot cancel.
fn background(
    rng: &mut ChaCha8Rng,
    p: &SleParams<f64>,
    x: f64,
    geometry: Geometry,
    control: bool,
) -> Divisor<f64> {
    let n = rng.random_range(1..=3);
    let rho = |rng: &mut ChaCha8Rng| if control { rng.random_range(1.0..3.0) } else { rng.random_range(-1.5..3.0) };
    match geometry {
        Geometry::Chordal => {
            let force: Vec<(f64, f64)> = (0..n)
                .map(|_| {
                    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    (x + side * rng.random_range(0.3..3.0), rho(rng))
                })
                .collect();
            chordal_rho_background(p, &force)
        }
        Geometry::Radial => {
            let force: Vec<(f64, f64)> =
                (0..n).map(|_| (x + rng.random_range(0.3..(TAU - 0.3)), rho(rng))).collect();
            let eta = if control { 0.0 } else { rng.random_range(-1.0..1.0) };
            radial_rho_background(p, &force, eta)
        }
    }
}

/// Neutral vertex observable `±σ` at two interior points.
fn random_tau(rng: &mut ChaCha8Rng, p: &SleParams<f64>, geometry: Geometry, x: f64, control: bool) -> Divisor<f64> {
    let sigma = if control { rng.random_range(0.3..1.0) } else { rng.random_range(-1.0..1.0) };
    let (z1, z2) = match (geometry, control) {
        (Geometry::Chordal, false) => (
            c(rng.random_range(-2.0..2.0), rng.random_range(0.2..2.0)),
            c(rng.random_range(-2.0..2.0), rng.random_range(0.2..2.0)),
        ),
        (Geometry::Chordal, true) => (
            c(x + rng.random_range(-0.5..0.5), rng.random_range(0.2..0.6)),
            c(x + rng.random_range(-0.5..0.5), rng.random_range(1.5..2.5)),
        ),
        (Geometry::Radial, false) => (
            Complex64::from_polar(rng.random_range(0.2..0.85), rng.random_range(0.0..TAU)),
            Complex64::from_polar(rng.random_range(0.2..0.85), rng.random_range(0.0..TAU)),
        ),
        (Geometry::Radial, true) => (
            Complex64::from_polar(rng.random_range(0.7..0.85), x + rng.random_range(-0.5..0.5)),
            Complex64::from_polar(rng.random_range(0.0..0.3), rng.random_range(0.0..TAU)),
        ),
    };
    Divisor::with_real_b(p.b).with(Point::interior(z1), c(sigma, 0.0)).with(Point::interior(z2), c(-sigma, 0.0))
}

struct IdentityStats {
    cases: usize,
    worst: f64,
    failures: usize,
    control_min: f64,
}

fn identity_check(
    s: &IdentitySection,
    seed: u64,
    mut residual: impl FnMut(&mut ChaCha8Rng, f64, Geometry, Direction, bool) -> Result<f64>,
) -> Result<IdentityStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut st = IdentityStats { cases: 0, worst: 0.0, failures: 0, control_min: f64::INFINITY };
    for &kappa in &s.kappas {
        for geometry in [Geometry::Chordal, Geometry::Radial] {
            for direction in [Direction::Forward, Direction::Backward] {
                for _ in 0..s.random {
                    let r = residual(&mut rng, kappa, geometry, direction, false)?;
                    st.cases += 1;
                    st.worst = st.worst.max(r);
                    if !(r < s.tol) {
                        st.failures += 1;
                    }
                }
            }
            for _ in 0..s.random {
                st.control_min = st.control_min.min(residual(&mut rng, kappa, geometry, Direction::Forward, true)?);
            }
        }
    }
    Ok(st)
}

fn identity_outcome(name: &str, label: &str, control: &str, s: &IdentitySection, seed: u64, st: IdentityStats) -> Outcome {
    let control_ok = st.control_min > s.control_min;
    let pass = st.failures == 0 && control_ok;
    Outcome::check(
        name,
        pass,
        format!(
            "{name}: {}/{} {label} checks passed (max relative residual {:.2e}, tol {:.0e}); {control} control min \
             residual {:.2e} ({})",
            st.cases - st.failures,
            st.cases,
            st.worst,
            s.tol,
            st.control_min,
            if control_ok { "detected" } else { "NOT detected" }
        ),
        json!({
            "command": name, "seed": seed, "kappas": s.kappas, "checks": st.cases, "failures": st.failures,
            "max_residual": st.worst, "tol": s.tol, "control_min_residual": st.control_min,
            "control_threshold": s.control_min, "pass": pass,
        }),
    )
}

/// Null-vector equation for random SLE(κ, ρ) backgrounds, with a perturbed-`b` control.
pub fn check_nullvector(cfg: &RunConfig) -> Result<Outcome> {
    let s = &cfg.nullvector;
    let st = identity_check(s, cfg.seed, |rng, kappa, geometry, direction, control| {
        let mut p = params(kappa, direction);
        if control {
            p.b += 0.1;
        }
        let x = rng.random_range(-1.0..1.0);
        let beta = background(rng, &p, x, geometry, control);
        Ok(null_vector_residual(&beta, x, &p, geometry)?.rel)
    })?;
    Ok(identity_outcome("check-nullvector", "null-vector", "b + 0.1", s, cfg.seed, st))
}

/// BPZ–Cardy equation for random vertex observables, with a wrong-κ control.
pub fn check_bpz_cardy(cfg: &RunConfig) -> Result<Outcome> {
    let s = &cfg.bpz_cardy;
    let st = identity_check(s, cfg.seed, |rng, kappa, geometry, direction, control| {
        let p = if control {
            let wrong = SleParams::forward(kappa + 1.0, true);
            SleParams::unchecked(kappa, SleParams::forward(kappa, true).a, wrong.b, Direction::Forward)
        } else {
            params(kappa, direction)
        };
        let x = rng.random_range(-1.0..1.0);
        let beta = background(rng, &p, x, geometry, control);
        let tau = random_tau(rng, &p, geometry, x, control);
        Ok(bpz_cardy_residual(&beta, &tau, x, &p, geometry)?.rel)
    })?;
    Ok(identity_outcome("check-bpz-cardy", "BPZ–Cardy", "wrong-κ", s, cfg.seed, st))
}

/// Writes path dumps: the Loewner state columns followed by
/// `obs{k}_re, obs{k}_im, obs{k}_phase` for every configured observable.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let section = cfg.driving.clone().unwrap_or_default();
    let driving = section.to_config(cfg.seed);
    let sim = &cfg.simulate;
    let mut files = Vec::new();
    let mut truncated = 0;
    for idx in 0..sim.n_paths {
        let mut process = DrivingProcess::new(&driving, idx as u64)?;
        for z in &sim.points {
            process.state_mut().track(c(z[0], z[1]));
        }
        let mut handles = Vec::with_capacity(sim.observables.len());
        for obs in &sim.observables {
            handles.push(obs.track(process.state_mut())?);
        }
        let mut phases = vec![PhaseTracker::new(); sim.observables.len()];
        let file = out.join(format!("path_{idx}.csv"));
        let mut writer = csv::Writer::from_path(&file).map_err(io_error)?;
        let mut header = process.state().csv_header();
        for k in 0..sim.observables.len() {
            header.extend([format!("obs{k}_re"), format!("obs{k}_im"), format!("obs{k}_phase")]);
        }
        writer.write_record(&header).map_err(io_error)?;
        let mut step = 0usize;
        loop {
            let mut row = process.state().csv_record();
            for (k, (obs, handle)) in sim.observables.iter().zip(&handles).enumerate() {
                let v = obs.value(process.state(), handle, &driving.params)?;
                let phase = match obs.log_value(process.state(), handle, &driving.params)? {
                    Some(l) => l.im,
                    None => v.arg(),
                };
                let phase = phases[k].update(phase)?;
                row.extend([v.re.to_string(), v.im.to_string(), phase.to_string()]);
            }
            if step.is_multiple_of(sim.every) || !process.is_running() {
                writer.write_record(&row).map_err(io_error)?;
            }
            if !process.step()? {
                if matches!(process.status(), sle_lab::driver::PathStatus::Truncated { .. }) {
                    truncated += 1;
                    break;
                }
                if !step.is_multiple_of(sim.every) {
                    // The final state has not been written yet.
                    let mut row = process.state().csv_record();
                    for (k, (obs, handle)) in sim.observables.iter().zip(&handles).enumerate() {
                        let v = obs.value(process.state(), handle, &driving.params)?;
                        let phase = phases[k].phase().unwrap_or(v.arg());
                        row.extend([v.re.to_string(), v.im.to_string(), phase.to_string()]);
                    }
                    writer.write_record(&row).map_err(io_error)?;
                }
                break;
            }
            step += 1;
        }
        writer.flush().map_err(io_error)?;
        files.push(file.display().to_string());
    }
    Ok(Outcome::check(
        "simulate",
        true,
        format!(
            "simulate: {} path(s) of κ = {} {:?}/{:?} written to {} ({truncated} truncated at a force point)",
            sim.n_paths,
            section.kappa,
            section.geometry,
            section.direction,
            out.display()
        ),
        json!({ "command": "simulate", "seed": cfg.seed, "files": files, "truncated": truncated, "pass": true }),
    ))
}

fn io_error(e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("cannot write CSV: {e}"))
}

fn verdict_word(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "PASS",
        Verdict::Fail => "FAIL",
        Verdict::Inconclusive => "INCONCLUSIVE",
    }
}

/// Monte Carlo martingale test of the configured observable.
pub fn verify_martingale(cfg: &RunConfig, paths: Option<usize>) -> Result<Outcome> {
    let section = cfg
        .driving
        .clone()
        .unwrap_or_else(|| DrivingSection::with(4.0, Geometry::Chordal, Direction::Forward, 1e-4));
    let driving = section.to_config(cfg.seed);
    let m = &cfg.martingale;
    let obs_params = section.params(m.observable_kappa.unwrap_or(section.kappa));
    let mut settings = m.settings.clone();
    if let Some(n) = paths {
        settings.n_paths = n;
    }
    let report = martingale_test(&m.observable, &obs_params, &driving, &settings)?;
    let last = report.checkpoints.last().expect("at least one checkpoint");
    let line = format!(
        "verify-martingale: {} {} (κ_obs = {}, κ_drive = {}, N = {}): E M_t = {:.5} vs M0 = {:.5} at t = {}, max z = {:.2}",
        verdict_word(report.verdict),
        report.observable,
        report.kappa_observable,
        report.kappa_driving,
        report.paths,
        last.mean,
        last.m0,
        last.t,
        report.max_z()
    );
    let value = serde_json::to_value(&report).expect("report serializes");
    Ok(Outcome::check("verify-martingale", report.passed(), line, value))
}

/// Decay-rate regression of the boundary derivative observable.
pub fn verify_exponent(cfg: &RunConfig, paths: Option<usize>) -> Result<Outcome> {
    let section =
        cfg.driving.clone().unwrap_or_else(|| DrivingSection::with(6.0, Geometry::Radial, Direction::Forward, 1e-3));
    let driving = section.to_config(cfg.seed);
    let mut settings = cfg.exponent.clone();
    if let Some(n) = paths {
        settings.n_paths = n;
    }
    let report = exponent_regression(&driving, &settings)?;
    let line = format!(
        "verify-exponent: {} slope {:.4} ± {:.4} vs expected {:.4} (relative error {:.3}, tol {}) at κ = {}, h = {}, N = {}",
        verdict_word(report.verdict),
        report.slope,
        report.ci,
        report.expected_slope,
        report.rel_error,
        settings.rel_tol,
        report.kappa,
        report.h,
        report.paths
    );
    let pass = report.verdict == Verdict::Pass;
    Ok(Outcome::check("verify-exponent", pass, line, serde_json::to_value(&report).expect("report serializes")))
}

/// Avoidance probability of a vertical slit by chordal SLE(8/3).
pub fn verify_restriction(cfg: &RunConfig, paths: Option<usize>) -> Result<Outcome> {
    let section = cfg
        .driving
        .clone()
        .unwrap_or_else(|| DrivingSection::with(8.0 / 3.0, Geometry::Chordal, Direction::Forward, 1e-3));
    let driving = section.to_config(cfg.seed);
    let mut settings = cfg.restriction.clone();
    if let Some(n) = paths {
        settings.n_paths = n;
    }
    let report = restriction_probability_test(&driving, &settings)?;
    let line = format!(
        "verify-restriction: {} p_mc = {:.4} ± {:.4} vs formula {:.4} (relative error {:.4}, tol {}), truncation bias {:.4}, N = {}",
        verdict_word(report.verdict),
        report.p_mc,
        report.ci,
        report.p_formula,
        report.rel_error,
        settings.rel_tol,
        report.truncation_bias,
        report.paths
    );
    let pass = report.verdict == Verdict::Pass;
    Ok(Outcome::check("verify-restriction", pass, line, serde_json::to_value(&report).expect("report serializes")))
}

/// `R(1; e^{iθ_1}, …)` from the recursion; for one point it is compared with
/// `h_{1,2}/(z(1−z)²) + h_{0,1/2}/z²`.
pub fn virasoro_recursion(cfg: &RunConfig, angles: &[f64], kappa: Option<f64>) -> Result<Outcome> {
    let kappa = kappa.unwrap_or(cfg.virasoro.kappa);
    let angles = if angles.is_empty() { cfg.virasoro.angles.clone() } else { angles.to_vec() };
    let v = virasoro_npoint_recursion(&angles, kappa)?;
    let mut report = json!({
        "command": "virasoro-recursion", "kappa": kappa, "angles": angles,
        "r": [v.r.re, v.r.im], "density": [v.density.re, v.density.im],
    });
    let mut line = format!(
        "virasoro-recursion: R = {:.15e} {:+.15e}i, density = {:.15e} at κ = {kappa}, {} point(s)",
        v.r.re,
        v.r.im,
        v.density.re,
        angles.len()
    );
    let mut pass = true;
    if let [theta] = angles[..] {
        let p = SleParams::forward(kappa, true);
        let z = Complex64::from_polar(1.0, theta);
        let one = c(1.0, 0.0);
        let closed = p.h12() / (z * (one - z) * (one - z)) + p.h0_half() / (z * z);
        let rel = (v.r - closed).norm() / closed.norm();
        pass = rel < 1e-12;
        line.push_str(&format!("; closed form {:.15e} {:+.15e}i, relative error {rel:.2e}", closed.re, closed.im));
        report["closed_form"] = json!([closed.re, closed.im]);
        report["relative_error"] = json!(rel);
    }
    report["pass"] = json!(pass);
    Ok(Outcome::check("virasoro-recursion", pass, line, report))
}

/// Writes the fully resolved configuration (defaults filled in) as TOML.
pub fn export(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let mut resolved = cfg.clone();
    resolved.driving.get_or_insert_with(DrivingSection::default);
    let text = toml::to_string_pretty(&resolved)
        .map_err(|e| CliError::Io(format!("cannot serialize the configuration: {e}")))?;
    let file = out.join("config.toml");
    std::fs::write(&file, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", file.display())))?;
    Ok(Outcome { pass: true, summary: vec![format!("export: configuration written to {}", file.display())], report: None })
}

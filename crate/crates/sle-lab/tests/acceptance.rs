//! Acceptance suite: one line per criterion, `PASS` or `FAIL`, with the
//! measured quantity next to its pinned tolerance.
//!
//! Runs as a plain binary (no libtest harness) so that every line is printed
//! even when all criteria pass. Positional arguments select criteria by
//! number or by a substring of their name; flags are ignored.

mod common;

use common::*;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sle_lab::charges::Divisor;
use sle_lab::coulomb::{log_correlation_plane, moebius_transport, Moebius};
use sle_lab::driver::{DrivingConfig, DrivingProcess};
use sle_lab::loewner::LoewnerState;
use sle_lab::observables::{
    domain_greens, eval_sle0_invariants, hadamard_rate, restriction_formula, virasoro_npoint_recursion, Observable,
    VerticalSlit,
};
use sle_lab::partition::{
    bpz_cardy_residual, chordal_rho_background, drift_chordal, drift_radial, null_vector_residual,
    radial_rho_background, rho_drift_chordal, rho_drift_radial, Direction, Geometry, SleParams,
};
use sle_lab::verify::{
    exponent_regression, martingale_test, restriction_probability_test, ExponentSettings, MartingaleSettings,
    RestrictionSettings,
};
use sle_lab::SleParams64;
use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::time::{Duration, Instant};

const KAPPAS: [f64; 4] = [2.0, 8.0 / 3.0, 4.0, 6.0];
const SEED: u64 = 20_240_601;

/// Result of one criterion: verdict plus a one-line account of the numbers.
struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("Möbius invariance", moebius_invariance),
        ("null-vector equation", null_vector),
        ("BPZ–Cardy equation", bpz_cardy),
        ("drift equivalence", drift_equivalence),
        ("Loewner integrator", loewner_integrator),
        ("martingale suite", martingale_suite),
        ("LSW derivative exponent", lsw_exponent),
        ("restriction (κ = 8/3)", restriction),
        ("Friedrich–Werner recursion", virasoro),
        ("Hadamard variation", hadamard),
        ("SLE(0) integrals of motion", sle0_integrals),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected = |k: usize, name: &str| {
        filters.is_empty()
            || filters.iter().any(|f| f.parse::<usize>().map_or(name.contains(f.as_str()), |n| n == k + 1))
    };
    let mut out = std::io::stdout();
    let mut failed = Vec::new();
    let mut ran = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        if !selected(k, name) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = run();
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        let secs = start.elapsed().as_secs_f64();
        writeln!(out, "[{verdict}] {:>2}. {name}: {} ({secs:.1} s)", k + 1, outcome.detail).unwrap();
        out.flush().unwrap();
        if !outcome.pass {
            failed.push(k + 1);
        }
    }
    writeln!(out, "acceptance: {} of {ran} criteria passed", ran - failed.len()).unwrap();
    if !failed.is_empty() {
        writeln!(out, "failed criteria: {failed:?}").unwrap();
        std::process::exit(1);
    }
}

fn within(elapsed: Duration, limit_secs: f64) -> bool {
    elapsed.as_secs_f64() < limit_secs
}

fn phase_defect(a: f64, b: f64) -> f64 {
    let d = a - b;
    (d - TAU * (d / TAU).round()).abs()
}

fn random_moebius<R: Rng>(rng: &mut R) -> Moebius<f64> {
    loop {
        let mut g = || c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let m = Moebius { a: g(), b: g(), c: g(), d: g() };
        if m.det().norm() > 0.5 {
            return m;
        }
    }
}

fn moebius_invariance() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut worst_mod, mut worst_phase) = (0.0f64, 0.0f64);
    let mut count = 0;
    while count < 500 {
        let n = rng.random_range(2..=6);
        let d = random_neutral_plane(&mut rng, n);
        let m = random_moebius(&mut rng);
        if d.entries().iter().any(|(p, _)| (m.c * p.coord + m.d).norm() < 0.1) {
            continue;
        }
        count += 1;
        let base = log_correlation_plane(&d).unwrap();
        let moved = moebius_transport(&d, &m).unwrap();
        worst_mod = worst_mod.max((moved.log_modulus - base.log_modulus).abs());
        worst_phase = worst_phase.max(phase_defect(moved.phase, base.phase));
    }
    let elapsed = start.elapsed();
    Outcome::new(
        worst_mod < 1e-9 && worst_phase < 1e-9 && within(elapsed, 5.0),
        format!(
            "{count} divisors, max |Δ log|C|| = {worst_mod:.2e}, max phase defect mod 2π = {worst_phase:.2e} \
             (tol 1e-9, runtime < 5 s)"
        ),
    )
}

fn background(rng: &mut ChaCha8Rng, p: &SleParams<f64>, x: f64, geometry: Geometry, control: bool) -> Divisor<f64> {
    match (geometry, control) {
        (Geometry::Chordal, false) => random_chordal_background(rng, p, x),
        (Geometry::Chordal, true) => control_chordal_background(rng, p, x),
        (Geometry::Radial, false) => random_radial_background(rng, p, x),
        (Geometry::Radial, true) => control_radial_background(rng, p, x),
    }
}

const GEOMETRIES: [Geometry; 2] = [Geometry::Chordal, Geometry::Radial];

fn null_vector() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let (mut worst, mut weakest_control, mut cases) = (0.0f64, f64::INFINITY, 0);
    for kappa in KAPPAS {
        for geometry in GEOMETRIES {
            for direction in [Direction::Forward, Direction::Backward] {
                let p = match direction {
                    Direction::Forward => SleParams64::forward(kappa, true),
                    Direction::Backward => SleParams64::backward(kappa, true),
                };
                for _ in 0..200 {
                    let x = rng.random_range(-1.0..1.0);
                    let beta = background(&mut rng, &p, x, geometry, false);
                    worst = worst.max(null_vector_residual(&beta, x, &p, geometry).unwrap().rel);
                    cases += 1;
                }
            }
            let mut bad = SleParams64::forward(kappa, true);
            bad.b += 0.1;
            for _ in 0..200 {
                let x = rng.random_range(-1.0..1.0);
                let beta = background(&mut rng, &bad, x, geometry, true);
                let r = null_vector_residual(&beta, x, &bad, geometry).unwrap().rel;
                weakest_control = weakest_control.min(r);
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        worst < 1e-7 && weakest_control > 1e-3 && within(elapsed, 10.0),
        format!(
            "{cases} configurations, max residual/|Z| = {worst:.2e} (tol 1e-7); b + 0.1 control min residual = \
             {weakest_control:.2e} (> 1e-3); runtime < 10 s"
        ),
    )
}

fn bpz_cardy() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let (mut worst, mut weakest_control, mut cases) = (0.0f64, f64::INFINITY, 0);
    for kappa in KAPPAS {
        for geometry in GEOMETRIES {
            let radial = geometry == Geometry::Radial;
            for direction in [Direction::Forward, Direction::Backward] {
                let p = match direction {
                    Direction::Forward => SleParams64::forward(kappa, true),
                    Direction::Backward => SleParams64::backward(kappa, true),
                };
                for _ in 0..200 {
                    let x = rng.random_range(-1.0..1.0);
                    let beta = background(&mut rng, &p, x, geometry, false);
                    let tau = random_tau(&mut rng, &p, radial);
                    worst = worst.max(bpz_cardy_residual(&beta, &tau, x, &p, geometry).unwrap().rel);
                    cases += 1;
                }
            }
            // Wrong κ: `a` from κ, `b` from κ + 1.
            let good = SleParams64::forward(kappa, true);
            let wrong = SleParams64::forward(kappa + 1.0, true);
            let p = SleParams64::unchecked(kappa, good.a, wrong.b, Direction::Forward);
            for _ in 0..200 {
                let x = rng.random_range(-1.0..1.0);
                let beta = background(&mut rng, &p, x, geometry, true);
                let tau = control_tau(&mut rng, &p, radial, x);
                let r = bpz_cardy_residual(&beta, &tau, x, &p, geometry).unwrap().rel;
                weakest_control = weakest_control.min(r);
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        worst < 1e-7 && weakest_control > 1e-3 && within(elapsed, 30.0),
        format!(
            "{cases} configurations, max relative residual = {worst:.2e} (tol 1e-7); wrong-κ control min residual = \
             {weakest_control:.2e} (> 1e-3); runtime < 30 s"
        ),
    )
}

fn drift_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 4);
    let (mut chordal, mut radial) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let p = SleParams64::forward(rng.random_range(0.5..8.0), true);
        let xi = rng.random_range(-1.0..1.0);
        let force: Vec<(f64, f64)> = (0..rng.random_range(1..=4))
            .map(|_| {
                let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                (xi + side * rng.random_range(0.1..4.0), rng.random_range(-2.0..4.0))
            })
            .collect();
        let beta = chordal_rho_background(&p, &force);
        let mut defect = (drift_chordal(&beta, xi, &p).unwrap() - rho_drift_chordal(xi, &force)).abs();
        for (k, &(_, rho)) in force.iter().enumerate() {
            defect = defect.max((beta.entries()[k].1.re - rho / (2.0 * p.kappa).sqrt()).abs());
        }
        chordal = chordal.max(defect);
    }
    for _ in 0..100 {
        let p = SleParams64::forward(rng.random_range(0.5..8.0), true);
        let theta = rng.random_range(-PI..PI);
        let eta = rng.random_range(-2.0..2.0);
        let force: Vec<(f64, f64)> = (0..rng.random_range(0..=3))
            .map(|_| (theta + rng.random_range(0.1..(2.0 * PI - 0.1)), rng.random_range(-2.0..4.0)))
            .collect();
        let beta = radial_rho_background(&p, &force, eta);
        let got = drift_radial(&beta, theta, &p).unwrap();
        radial = radial.max((got - rho_drift_radial(theta, &force, eta)).abs());
    }
    let elapsed = start.elapsed();
    Outcome::new(
        chordal < 1e-9 && radial < 1e-9 && within(elapsed, 5.0),
        format!(
            "100 chordal configs max |Δ| = {chordal:.2e}, 100 radial configs (with η) max |Δ| = {radial:.2e} \
             (tol 1e-9, runtime < 5 s)"
        ),
    )
}

fn run_flow(state: &mut LoewnerState<f64>, dt: f64, t_end: f64) {
    let n = (t_end / dt).round() as usize;
    for _ in 0..n {
        state.step(0.0, dt).unwrap();
    }
}

/// Square root in the closed upper half-plane.
fn upper_root(w: Complex64) -> Complex64 {
    let r = w.sqrt();
    if r.im < 0.0 {
        -r
    } else {
        r
    }
}

fn loewner_integrator() -> Outcome {
    // Chordal closed form g_1(z) = √(z² + 4).
    let zs = [c(0.3, 0.2), c(-1.0, 0.5), c(2.0, 3.0), c(0.05, 1.0)];
    let mut s = LoewnerState::new(Geometry::Chordal, Direction::Forward, 0.0);
    for z in zs {
        s.track(z);
    }
    run_flow(&mut s, 1e-4, 1.0);
    let closed = s.tracked.iter().zip(zs).map(|(p, z)| (p.g - upper_root(z * z + 4.0)).norm()).fold(0.0, f64::max);

    // Radial flow with ζ ≡ 1: e^{−t} g/(1 + g)² is conserved.
    let zs = [c(0.3, 0.2), c(-0.5, 0.1), c(0.1, -0.7), c(-0.6, 0.0)];
    let mut s = LoewnerState::new(Geometry::Radial, Direction::Forward, 0.0);
    for z in zs {
        s.track(z);
    }
    let invariant = |z: Complex64, t: f64| (-t).exp() * z / ((1.0 + z) * (1.0 + z));
    let mut drift: f64 = 0.0;
    for k in 1..=5000 {
        s.step(0.0, 1e-4).unwrap();
        let t = k as f64 * 1e-4;
        for (p, z) in s.tracked.iter().zip(zs) {
            drift = drift.max((invariant(p.g, t) - invariant(z, 0.0)).norm() / t);
        }
    }

    // Order of convergence from three step sizes.
    let z = c(1.5, 1.0);
    let exact = (z * z + 4.0).sqrt();
    let err = |dt: f64| {
        let mut s = LoewnerState::new(Geometry::Chordal, Direction::Forward, 0.0);
        s.track(z);
        run_flow(&mut s, dt, 1.0);
        (s.tracked[0].g - exact).norm()
    };
    let (e1, e2, e3) = (err(0.1), err(0.05), err(0.025));
    let orders = [(e1 / e2).log2(), (e2 / e3).log2()];
    let order_ok = orders.iter().all(|o| (o - 4.0).abs() < 0.3);
    Outcome::new(
        closed < 1e-9 && drift < 1e-8 && order_ok,
        format!(
            "chordal closed form error {closed:.2e} (tol 1e-9); radial invariant drift {drift:.2e} per unit time \
             (tol 1e-8); observed orders {:.2}, {:.2} (4 ± 0.3)",
            orders[0], orders[1]
        ),
    )
}

struct MartingaleCase {
    obs: Observable,
    params: SleParams64,
    geometry: Geometry,
    stop_radius: Option<f64>,
}

fn martingale_suite() -> Outcome {
    let p2 = SleParams64::forward(2.0, true);
    let p6 = SleParams64::forward(6.0, true);
    let mut cases: Vec<MartingaleCase> = [2.0, 4.0, 6.0]
        .iter()
        .map(|&k| MartingaleCase {
            obs: Observable::SchrammSheffield { z: [1.0, 1.0] },
            params: SleParams64::forward(k, true),
            geometry: Geometry::Chordal,
            stop_radius: None,
        })
        .collect();
    // The radial point observables are stopped at |1 − w| = 0.2: the Poisson
    // vertex is only a local martingale up to the time the curve reaches `z`,
    // and the κ = 6 observable's frozen value at a discretised swallowing
    // carries an O(dt^{1/6}) bias through the factor (1 − w)^{1/3}.
    cases.push(MartingaleCase {
        obs: Observable::poisson([0.2, 0.3], &p2),
        params: p2,
        geometry: Geometry::Radial,
        stop_radius: Some(0.2),
    });
    cases.push(MartingaleCase {
        obs: Observable::LswKappa6 { z: [0.2, 0.3] },
        params: p6,
        geometry: Geometry::Radial,
        stop_radius: Some(0.2),
    });
    cases.push(MartingaleCase {
        obs: Observable::SheffieldNeumann { z: [0.0, 1.0] },
        params: SleParams64::backward(4.0, true),
        geometry: Geometry::Chordal,
        stop_radius: None,
    });

    let mut lines = Vec::new();
    let mut pass = true;
    for (k, case) in cases.iter().enumerate() {
        let start = Instant::now();
        let mut cfg = DrivingConfig::standard(case.params, case.geometry, SEED + 60 + k as u64);
        cfg.dt = 1e-4;
        let settings = MartingaleSettings { n_paths: 50_000, stop_radius: case.stop_radius, ..Default::default() };
        let right = martingale_test(&case.obs, &case.params, &cfg, &settings).unwrap();
        let right_time = start.elapsed();

        // Negative control: the same observable along SLE(κ + 2).
        let wrong_kappa = case.params.kappa + 2.0;
        cfg.params = match case.params.mode {
            Direction::Forward => SleParams64::forward(wrong_kappa, true),
            Direction::Backward => SleParams64::backward(wrong_kappa, true),
        };
        let control = MartingaleSettings { n_paths: 100_000, ..settings };
        let wrong = martingale_test(&case.obs, &case.params, &cfg, &control).unwrap();

        let ok = right.passed() && !wrong.passed() && within(right_time, 300.0);
        pass &= ok;
        let worst_dev = right
            .checkpoints
            .iter()
            .map(|c| (c.mean - c.m0).norm() / (3.0 * c.std_err).max(right.rel_tol * c.m0.norm()))
            .fold(0.0, f64::max);
        lines.push(format!(
            "{} κ={}: {} (max |E M − M0|/bound = {worst_dev:.2}, {:.0} s), wrong κ={}: {} (max z = {:.1})",
            right.observable,
            case.params.kappa,
            if right.passed() { "ok" } else { "FAILED" },
            right_time.as_secs_f64(),
            wrong_kappa,
            if wrong.passed() { "NOT DETECTED" } else { "detected" },
            wrong.max_z(),
        ));
    }
    Outcome::new(
        pass,
        format!(
            "N = 5e4 (controls 1e5), dt = 1e-4, t ∈ {{0.1, 0.25, 0.5}}, bound max(3·SE, 2%·|M0|), ≤ 300 s each; {}",
            lines.join("; ")
        ),
    )
}

fn lsw_exponent() -> Outcome {
    let cfg = DrivingConfig::standard(SleParams64::forward(6.0, true), Geometry::Radial, SEED + 7);
    let settings = ExponentSettings::default();
    let report = exponent_regression(&cfg, &settings).unwrap();
    let rel = (report.slope / -0.25 - 1.0).abs();
    Outcome::new(
        rel <= 0.1,
        format!(
            "κ = 6, h = 0, N = {}: slope {:.4} ± {:.4} vs −0.25 (relative error {:.3}, tol 0.10); \
             angle-weighted slope {:.4}",
            report.paths, report.slope, report.ci, rel, report.weighted_slope
        ),
    )
}

fn restriction() -> Outcome {
    let start = Instant::now();
    let p = SleParams64::forward(8.0 / 3.0, true);
    let lambda_exact = p.h12() == 5.0 / 8.0 || (p.h12() - 5.0 / 8.0).abs() <= 4.0 * f64::EPSILON;
    let mu_exact = p.mu() == 5.0 / 48.0 || (p.mu() - 5.0 / 48.0).abs() <= 4.0 * f64::EPSILON;
    let formula = restriction_formula(&VerticalSlit::new(1.0, 0.3).unwrap(), &p);
    let closed = (1.0 / 1.09f64.sqrt()).powf(5.0 / 8.0);
    let cfg = DrivingConfig::standard(p, Geometry::Chordal, SEED + 8);
    let report = restriction_probability_test(&cfg, &RestrictionSettings::default()).unwrap();
    let elapsed = start.elapsed();
    Outcome::new(
        lambda_exact
            && mu_exact
            && (formula - closed).abs() < 1e-14
            && report.rel_error < 0.05
            && within(elapsed, 600.0),
        format!(
            "λ = {}, μ = {} (exact 5/8, 5/48); N = {}: p_mc = {:.4} ± {:.4} vs formula {:.4} (relative error {:.4}, \
             tol 0.05), P(T/2) − P(T) = {:.4}, runtime ≤ 600 s",
            p.h12(),
            p.mu(),
            report.paths,
            report.p_mc,
            report.ci,
            report.p_formula,
            report.rel_error,
            report.truncation_bias
        ),
    )
}

fn virasoro() -> Outcome {
    let kappa = 8.0 / 3.0;
    let p = SleParams64::forward(kappa, true);
    let (h12, h0) = (p.h12(), p.h0_half());
    let values_ok = (h12 - 5.0 / 8.0).abs() < 1e-15 && (h0 - 5.0 / 96.0).abs() < 1e-15;
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let theta = 0.05 + (2.0 * PI - 0.1) * (k as f64 + 0.5) / 100.0;
        let z = c(0.0, theta).exp();
        let one = c(1.0, 0.0);
        let closed = h12 / (z * (one - z) * (one - z)) + h0 / (z * z);
        let v = virasoro_npoint_recursion(&[theta], kappa).unwrap();
        worst = worst.max((v.r - closed).norm() / closed.norm());
    }
    Outcome::new(
        values_ok && worst < 1e-12,
        format!("h_{{1,2}} = {h12}, h_{{0,1/2}} = {h0}; 100 circle points, max relative error {worst:.2e} (tol 1e-12)"),
    )
}

/// Largest relative discrepancy between `(G(t+dt) − G(t))/dt` and the mean of
/// the closed-form rate at both ends, along one simulated path.
fn hadamard_along_path(cfg: &DrivingConfig, z1: Complex64, z2: Complex64, steps: usize) -> f64 {
    let mut p = DrivingProcess::new(cfg, 0).unwrap();
    let (i, j) = (p.state_mut().track(z1), p.state_mut().track(z2));
    let mut worst: f64 = 0.0;
    let mut g0 = domain_greens(p.state(), i, j).unwrap();
    let mut r0 = hadamard_rate(p.state(), i, j).unwrap();
    for _ in 0..steps {
        let t0 = p.t();
        p.step().unwrap();
        let g1 = domain_greens(p.state(), i, j).unwrap();
        let r1 = hadamard_rate(p.state(), i, j).unwrap();
        let fd = (g1 - g0) / (p.t() - t0);
        let rate = 0.5 * (r0 + r1);
        worst = worst.max((fd - rate).abs() / rate.abs().max(1e-3));
        (g0, r0) = (g1, r1);
    }
    worst
}

fn hadamard() -> Outcome {
    let start = Instant::now();
    let mut radial = DrivingConfig::standard(SleParams64::forward(2.0, true), Geometry::Radial, SEED + 10);
    radial.dt = 1e-5;
    radial.t_end = 0.05;
    let dirichlet = hadamard_along_path(&radial, c(0.3, 0.2), c(-0.2, -0.4), 5000);
    let mut backward = DrivingConfig::standard(SleParams64::backward(4.0, true), Geometry::Chordal, SEED + 11);
    backward.dt = 1e-5;
    backward.t_end = 0.05;
    let neumann = hadamard_along_path(&backward, c(0.5, 0.7), c(-1.0, 0.3), 5000);
    let elapsed = start.elapsed();
    Outcome::new(
        dirichlet < 1e-3 && neumann < 1e-3 && within(elapsed, 60.0),
        format!(
            "dt = 1e-5, 5000 steps each: Dirichlet-radial max relative error {dirichlet:.2e}, Neumann-backward \
             {neumann:.2e} (tol 1e-3, runtime < 60 s)"
        ),
    )
}

fn sle0_integrals() -> Outcome {
    let mut s = LoewnerState::new(Geometry::Radial, Direction::Forward, 0.0);
    let zs = [c(0.3, 0.3), c(-0.4, 0.2), c(0.1, -0.5), c(0.6, -0.1)];
    let idx: Vec<usize> = zs.iter().map(|&z| s.track(z)).collect();
    let start: Vec<(f64, Complex64)> = idx.iter().map(|&i| eval_sle0_invariants(&s, i).unwrap()).collect();
    let (mut first, mut second) = (0.0f64, 0.0f64);
    for _ in 0..3000 {
        s.step(0.0, 1e-4).unwrap();
        for (&i, (a0, b0)) in idx.iter().zip(&start) {
            let (a, b) = eval_sle0_invariants(&s, i).unwrap();
            first = first.max((a - a0).abs());
            second = second.max((b - b0).norm() / (1.0 + b0.norm()));
        }
    }
    Outcome::new(
        first < 1e-6 && second < 1e-6,
        format!(
            "t ∈ [0, 0.3], dt = 1e-4, 4 points: max drift {first:.2e} (argument invariant), {second:.2e} \
             (Schwarzian invariant, relative) (tol 1e-6)"
        ),
    )
}

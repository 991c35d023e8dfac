//! Random configuration generators shared by the integration tests.
#![allow(dead_code)]

use num_complex::Complex64;
use rand::Rng;
use sle_lab::charges::{Divisor, Point, Side};
use sle_lab::coulomb::ChartContext;
use sle_lab::partition::SleParams;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Random neutral divisor on the sphere with `n` finite points.
pub fn random_neutral_plane<R: Rng>(rng: &mut R, n: usize) -> Divisor<f64> {
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

/// Random symmetric background for the half-plane (driving point excluded):
/// boundary force points near `xi`, conjugate interior pairs and the balancing
/// charge at `∞`.
pub fn random_chordal_background<R: Rng>(rng: &mut R, params: &SleParams<f64>, xi: f64) -> Divisor<f64> {
    chordal_background(rng, params, xi, false)
}

/// Background for negative controls: one to three force points with charges
/// in `[0.3, 1]` and no interior pairs.  The null-vector defect of a wrong `b`
/// is proportional to `Σ β_k/(ξ − q_k)²`, which cannot cancel here.
pub fn control_chordal_background<R: Rng>(rng: &mut R, params: &SleParams<f64>, xi: f64) -> Divisor<f64> {
    chordal_background(rng, params, xi, true)
}

fn charge<R: Rng>(rng: &mut R, control: bool) -> f64 {
    if control {
        rng.random_range(0.3..1.0)
    } else {
        rng.random_range(-1.0..1.0)
    }
}

fn chordal_background<R: Rng>(rng: &mut R, params: &SleParams<f64>, xi: f64, control: bool) -> Divisor<f64> {
    let lo = usize::from(control);
    let mut d = Divisor::with_real_b(params.b);
    let mut total = c(params.a, 0.0);
    for _ in 0..rng.random_range(lo..=3) {
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let q = xi + side * rng.random_range(0.3..3.0);
        let s = c(charge(rng, control), 0.0);
        total += s;
        d.push(Point::real(q), s);
    }
    for _ in 0..if control { 0 } else { rng.random_range(0..=2) } {
        let z = c(xi + rng.random_range(-2.0..2.0), rng.random_range(0.2..2.0));
        let s = c(charge(rng, control), rng.random_range(-0.5..0.5));
        total += s + s.conj();
        d.push(Point::interior(z), s);
        d.push(Point::reflected(z.conj()), s.conj());
    }
    d.push(Point::infinity(Side::Boundary), c(2.0 * params.b, 0.0) - total);
    d
}

/// Random symmetric neutral background for the disc (driving point at angle
/// `theta` excluded): force points on the circle, conjugate interior pairs
/// and balancing charges at `0` and `0*`.
pub fn random_radial_background<R: Rng>(rng: &mut R, params: &SleParams<f64>, theta: f64) -> Divisor<f64> {
    radial_background(rng, params, theta, false)
}

/// Radial analogue of [`control_chordal_background`].
pub fn control_radial_background<R: Rng>(rng: &mut R, params: &SleParams<f64>, theta: f64) -> Divisor<f64> {
    radial_background(rng, params, theta, true)
}

fn radial_background<R: Rng>(rng: &mut R, params: &SleParams<f64>, theta: f64, control: bool) -> Divisor<f64> {
    let lo = usize::from(control);
    let mut d = Divisor::with_real_b(params.b);
    let mut total = c(params.a, 0.0);
    for _ in 0..rng.random_range(lo..=3) {
        let v = theta + rng.random_range(0.3..(std::f64::consts::TAU - 0.3));
        let s = c(charge(rng, control), 0.0);
        total += s;
        d.push(Point::on_circle(v), s);
    }
    for _ in 0..if control { 0 } else { rng.random_range(0..=2) } {
        let r: f64 = rng.random_range(0.15..0.8);
        let z = Complex64::from_polar(r, rng.random_range(0.0..std::f64::consts::TAU));
        let s = c(charge(rng, control), rng.random_range(-0.5..0.5));
        total += s + s.conj();
        let p = Point::interior(z);
        d.push(p, s);
        d.push(p.star(ChartContext::DISC), s.conj());
    }
    let half = (c(2.0 * params.b, 0.0) - total) * 0.5;
    let spin = if control { c(0.0, 0.0) } else { c(0.0, rng.random_range(-0.3..0.3)) };
    let zero = Point::interior(c(0.0, 0.0));
    d.push(zero, half + spin);
    d.push(zero.star(ChartContext::DISC), half - spin);
    d
}

/// Random neutral vertex observable: `±σ` at two interior points.
pub fn random_tau<R: Rng>(rng: &mut R, params: &SleParams<f64>, radial: bool) -> Divisor<f64> {
    let sigma = rng.random_range(-1.0..1.0);
    tau_with_charge(rng, params, radial, sigma)
}

/// Vertex observable for negative controls: `σ ≥ 0.3` at a point close to the
/// driving point and `−σ` at a point far from it, so that the two insertions
/// cannot compensate each other.
pub fn control_tau<R: Rng>(rng: &mut R, params: &SleParams<f64>, radial: bool, x: f64) -> Divisor<f64> {
    let sigma = c(rng.random_range(0.3..1.0), 0.0);
    let (z1, z2) = if radial {
        (
            Complex64::from_polar(rng.random_range(0.7..0.85), x + rng.random_range(-0.5..0.5)),
            Complex64::from_polar(rng.random_range(0.0..0.3), rng.random_range(0.0..std::f64::consts::TAU)),
        )
    } else {
        (
            c(x + rng.random_range(-0.5..0.5), rng.random_range(0.2..0.6)),
            c(x + rng.random_range(-0.5..0.5), rng.random_range(1.5..2.5)),
        )
    };
    Divisor::with_real_b(params.b)
        .with(Point::interior(z1), sigma)
        .with(Point::interior(z2), -sigma)
}

fn tau_with_charge<R: Rng>(rng: &mut R, params: &SleParams<f64>, radial: bool, sigma: f64) -> Divisor<f64> {
    let sigma = c(sigma, 0.0);
    let mut pick = || {
        if radial {
            Complex64::from_polar(rng.random_range(0.2..0.85), rng.random_range(0.0..std::f64::consts::TAU))
        } else {
            c(rng.random_range(-2.0..2.0), rng.random_range(0.2..2.0))
        }
    };
    let (z1, z2) = (pick(), pick());
    Divisor::with_real_b(params.b)
        .with(Point::interior(z1), sigma)
        .with(Point::interior(z2), -sigma)
}

//! Numerical Loewner evolution (forward and backward, chordal and radial).
//!
//! Every tracked interior point carries its image `g` together with the first
//! three derivatives `g', g'', g'''` (exact variational equations) and the
//! continuous logarithms `log g'` and, radially, `log g`, which the observables
//! use for branch tracking.  Boundary points are tracked as real coordinates
//! (position on `ℝ` or angle on the circle) with `log |g'|`.
//!
//! Each step is RK4 with the driving function interpolated linearly inside
//! the step.  Near the singularity the step is halved per point down to
//! `dt_min`; a forward point that cannot be advanced is declared swallowed,
//! a backward point returns an error.

use crate::error::{Error, Result};
use crate::partition::{Direction, Geometry};
use crate::scalar::{cplx, wrap_angle, Real};
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul};

/// Default swallowing threshold (chart units).
pub const EPS_SWALLOW: f64 = 1e-4;
/// Default smallest sub-step.
pub const DT_MIN: f64 = 1e-9;

/// An interior point followed by the flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackedPoint<T> {
    pub z0: Complex<T>,
    pub g: Complex<T>,
    pub g1: Complex<T>,
    pub g2: Complex<T>,
    pub g3: Complex<T>,
    /// Continuous branch of `log g'`.
    pub log_g1: Complex<T>,
    /// Continuous branch of `log g` (radial only; `Log z0` chordally).
    pub log_g: Complex<T>,
    pub alive: bool,
    /// Swallowing time, set once.
    pub tau: Option<T>,
    /// Driving value at the swallowing time; the map data above are frozen
    /// at that time (the last state inside the domain).
    pub tau_driving: Option<T>,
}

/// A boundary point (force point or tracked boundary point).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint<T> {
    /// Initial position (real coordinate in `ℍ`, angle in `𝔻`).
    pub x0: T,
    /// Current image (real coordinate or continuous angle).
    pub x: T,
    /// `log |g'(x0)|`.
    pub log_abs_g1: T,
    pub alive: bool,
    /// Time at which the point reached the driving point.
    pub tau: Option<T>,
    /// Driving value at `tau`.
    pub tau_driving: Option<T>,
}

impl<T: Real> TrackedPoint<T> {
    fn set_jet(&mut self, y: &Jet<T>) {
        self.g = y.g;
        self.g1 = y.g1;
        self.g2 = y.g2;
        self.g3 = y.g3;
        self.log_g1 = y.lg1;
        self.log_g = y.lg;
    }

    fn freeze(&mut self, t: T, driving: T) {
        self.alive = false;
        self.tau = Some(t);
        self.tau_driving = Some(driving);
    }
}

impl<T: Real> BoundaryPoint<T> {
    fn freeze(&mut self, t: T, driving: T) {
        self.alive = false;
        self.tau = Some(t);
        self.tau_driving = Some(driving);
    }
}

/// Conformal map data of a Loewner chain at capacity time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoewnerState<T> {
    pub geometry: Geometry,
    pub direction: Direction,
    pub t: T,
    /// `ξ_t` (chordal) or `θ_t` (radial).
    pub driving: T,
    pub tracked: Vec<TrackedPoint<T>>,
    pub boundary: Vec<BoundaryPoint<T>>,
    pub eps_swallow: T,
    pub dt_min: T,
}

/// Interior state vector integrated by RK4.
#[derive(Debug, Clone, Copy)]
struct Jet<T> {
    g: Complex<T>,
    g1: Complex<T>,
    g2: Complex<T>,
    g3: Complex<T>,
    lg1: Complex<T>,
    lg: Complex<T>,
}

impl<T: Real> Add for Jet<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Jet {
            g: self.g + o.g,
            g1: self.g1 + o.g1,
            g2: self.g2 + o.g2,
            g3: self.g3 + o.g3,
            lg1: self.lg1 + o.lg1,
            lg: self.lg + o.lg,
        }
    }
}

impl<T: Real> Mul<T> for Jet<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Jet { g: self.g * s, g1: self.g1 * s, g2: self.g2 * s, g3: self.g3 * s, lg1: self.lg1 * s, lg: self.lg * s }
    }
}

/// `V, V', V'', V'''` of the Loewner field at `g` for driving `d`
/// (`ξ` chordally, `ζ = e^{iθ}` radially), plus `V/g` for the radial log.
fn field<T: Real>(geometry: Geometry, sign: T, g: Complex<T>, d: Complex<T>) -> [Complex<T>; 5] {
    let two = T::lit(2.0);
    match geometry {
        Geometry::Chordal => {
            let r = (g - d).inv();
            let r2 = r * r;
            [r * two, -r2 * two, r2 * r * T::lit(4.0), -r2 * r2 * T::lit(12.0), cplx(T::zero(), T::zero())]
                .map(|v| v * sign)
        }
        Geometry::Radial => {
            let r = (d - g).inv();
            let z2 = d * d;
            let r2 = r * r;
            let one = cplx(T::one(), T::zero());
            [
                z2 * r * two - d * two - g,
                z2 * r2 * two - one,
                z2 * r2 * r * T::lit(4.0),
                z2 * r2 * r2 * T::lit(12.0),
                (d + g) * r,
            ]
            .map(|v| v * sign)
        }
    }
}

fn jet_rhs<T: Real>(geometry: Geometry, sign: T, y: &Jet<T>, d: Complex<T>) -> Jet<T> {
    let [v, v1, v2, v3, vlog] = field(geometry, sign, y.g, d);
    let three = T::lit(3.0);
    Jet {
        g: v,
        g1: v1 * y.g1,
        g2: v2 * y.g1 * y.g1 + v1 * y.g2,
        g3: v3 * y.g1 * y.g1 * y.g1 + v2 * y.g1 * y.g2 * three + v1 * y.g3,
        lg1: v1,
        lg: vlog,
    }
}

/// Right-hand side for a boundary point: `(dx/dt, d log|g'|/dt)`.
fn boundary_rhs<T: Real>(geometry: Geometry, sign: T, x: T, d: T) -> (T, T) {
    let two = T::lit(2.0);
    match geometry {
        Geometry::Chordal => {
            let r = (x - d).recip();
            (sign * two * r, -sign * two * r * r)
        }
        Geometry::Radial => {
            let half = (x - d) / two;
            let s = half.sin();
            (sign * half.cos() / s, -sign / (two * s * s))
        }
    }
}

/// Outcome of advancing one point over a step.
enum Advance<T, Y> {
    Done(Y),
    /// Could not proceed past time `.0`; `.1` is the state reached there.
    Stuck(T, Y),
}

impl<T: Real> LoewnerState<T> {
    /// Empty chain at `t = 0` with the given initial driving value.
    pub fn new(geometry: Geometry, direction: Direction, driving: T) -> Self {
        Self {
            geometry,
            direction,
            t: T::zero(),
            driving,
            tracked: Vec::new(),
            boundary: Vec::new(),
            eps_swallow: T::lit(EPS_SWALLOW),
            dt_min: T::lit(DT_MIN),
        }
    }

    /// Starts tracking an interior point; returns its index.
    pub fn track(&mut self, z: Complex<T>) -> usize {
        let one = cplx(T::one(), T::zero());
        let zero = cplx(T::zero(), T::zero());
        self.tracked.push(TrackedPoint {
            z0: z,
            g: z,
            g1: one,
            g2: zero,
            g3: zero,
            log_g1: zero,
            log_g: z.ln(),
            alive: true,
            tau: None,
            tau_driving: None,
        });
        self.tracked.len() - 1
    }

    /// Starts tracking a boundary point (real coordinate or angle); returns its index.
    pub fn track_boundary(&mut self, x: T) -> usize {
        self.boundary.push(BoundaryPoint { x0: x, x, log_abs_g1: T::zero(), alive: true, tau: None, tau_driving: None });
        self.boundary.len() - 1
    }

    /// The driving point as a complex number (`ξ` or `e^{iθ}`).
    pub fn driving_point(&self) -> Complex<T> {
        drive_point(self.geometry, self.driving)
    }

    fn sign(&self) -> T {
        match self.direction {
            Direction::Forward => T::one(),
            Direction::Backward => -T::one(),
        }
    }

    /// `w = g − ξ` (chordal) or `w = g/ζ` (radial) for a tracked point.
    pub fn w(&self, i: usize) -> Complex<T> {
        let p = &self.tracked[i];
        match self.geometry {
            Geometry::Chordal => p.g - cplx(self.driving, T::zero()),
            Geometry::Radial => p.g * cplx(T::zero(), -self.driving).exp(),
        }
    }

    /// Swallowing time of tracked point `i` (`None` while alive).
    pub fn swallow_time(&self, i: usize) -> Result<Option<T>> {
        self.tracked
            .get(i)
            .map(|p| p.tau)
            .ok_or_else(|| Error::Precondition(format!("point {i} is not tracked")))
    }

    /// Swallowing time of boundary point `i`.
    pub fn boundary_swallow_time(&self, i: usize) -> Result<Option<T>> {
        self.boundary
            .get(i)
            .map(|p| p.tau)
            .ok_or_else(|| Error::Precondition(format!("boundary point {i} is not tracked")))
    }

    /// Forward chordal step (`∂_t g = 2/(g − ξ)`).
    pub fn step_chordal(&mut self, xi_next: T, dt: T) -> Result<()> {
        self.expect(Geometry::Chordal, Direction::Forward)?;
        self.step(xi_next, dt)
    }

    /// Forward radial step (`∂_t g = g(ζ + g)/(ζ − g)`).
    pub fn step_radial(&mut self, theta_next: T, dt: T) -> Result<()> {
        self.expect(Geometry::Radial, Direction::Forward)?;
        self.step(theta_next, dt)
    }

    /// Backward step in either geometry (sign-flipped vector fields).
    pub fn step_backward(&mut self, driving_next: T, dt: T) -> Result<()> {
        if self.direction != Direction::Backward {
            return Err(Error::Precondition("state is not a backward flow".into()));
        }
        self.step(driving_next, dt)
    }

    fn expect(&self, geometry: Geometry, direction: Direction) -> Result<()> {
        if self.geometry != geometry || self.direction != direction {
            return Err(Error::Precondition(format!(
                "state is {:?}/{:?}, step requires {:?}/{:?}",
                self.geometry, self.direction, geometry, direction
            )));
        }
        Ok(())
    }

    /// Advances the chain by `dt` with the driving function moving linearly to
    /// `next`.
    pub fn step(&mut self, next: T, dt: T) -> Result<()> {
        if dt < T::zero() {
            return Err(Error::Precondition("negative time step".into()));
        }
        if dt == T::zero() {
            return Ok(());
        }
        let (t0, d0) = (self.t, self.driving);
        let slope = (next - d0) / dt;
        let drive = |s: T| d0 + slope * (s - t0);
        let (geometry, sign, eps, dt_min) = (self.geometry, self.sign(), self.eps_swallow, self.dt_min);
        let backward = self.direction == Direction::Backward;
        for p in self.tracked.iter_mut().filter(|p| p.alive) {
            let y = Jet { g: p.g, g1: p.g1, g2: p.g2, g3: p.g3, lg1: p.log_g1, lg: p.log_g };
            let dist = |y: &Jet<T>, s: T| (y.g - drive_point(geometry, drive(s))).norm();
            let step = |y: &Jet<T>, s: T, h: T| rk4_jet(geometry, sign, y, s, h, &drive);
            match advance(y, t0, dt, eps, dt_min, dist, step) {
                Advance::Done(y) => {
                    // A forward point whose image leaves the domain numerically
                    // (fjords make Im g decay exponentially) is treated as
                    // swallowed at the start of the step, keeping the last data
                    // inside the domain. Points started on the boundary stay
                    // there and are exempt.
                    let outside = !backward
                        && match geometry {
                            Geometry::Chordal => p.z0.im > T::zero() && y.g.im < T::zero(),
                            Geometry::Radial => p.z0.norm() < T::one() && y.g.norm() > T::one(),
                        };
                    if outside {
                        p.freeze(t0, d0);
                        continue;
                    }
                    p.set_jet(&y);
                    if !backward && (p.g - drive_point(geometry, next)).norm() < eps {
                        p.freeze(t0 + dt, next);
                    }
                }
                Advance::Stuck(at, y) => {
                    if backward {
                        return Err(Error::StepUnderflow(at.to_f64_lossy()));
                    }
                    p.set_jet(&y);
                    p.freeze(at, drive(at));
                }
            }
        }
        for p in self.boundary.iter_mut().filter(|p| p.alive) {
            let before = boundary_offset(geometry, p.x, d0);
            let dist = |y: &(T, T), s: T| boundary_distance(geometry, y.0, drive(s));
            let step = |y: &(T, T), s: T, h: T| rk4_boundary(geometry, sign, *y, s, h, &drive);
            match advance((p.x, p.log_abs_g1), t0, dt, eps, dt_min, dist, step) {
                Advance::Done((x, l)) => {
                    // Boundary points reach the driving point in both directions
                    // (backward flows zip them into the curve). A point that ends
                    // up on the other side of the driving point (e.g. because the
                    // driving function jumped over it) collided with it during
                    // the step. Radial offsets also change sign when the point
                    // passes the antipode of the driving point, where boundary
                    // points accumulate, so only sign changes near the driving
                    // point count.
                    let after = boundary_offset(geometry, x, next);
                    let near = match geometry {
                        Geometry::Chordal => true,
                        Geometry::Radial => before.abs() < T::FRAC_PI_2() && after.abs() < T::FRAC_PI_2(),
                    };
                    let crossed = near && (after > T::zero()) != (before > T::zero());
                    if crossed {
                        p.freeze(t0, d0);
                        continue;
                    }
                    p.x = x;
                    p.log_abs_g1 = l;
                    if boundary_distance(geometry, x, next) < eps {
                        p.freeze(t0 + dt, next);
                    }
                }
                Advance::Stuck(at, (x, l)) => {
                    p.x = x;
                    p.log_abs_g1 = l;
                    p.freeze(at, drive(at));
                }
            }
        }
        self.t = t0 + dt;
        self.driving = next;
        Ok(())
    }

    /// Column names of the path dump.
    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string(), "driving".to_string()];
        for i in 0..self.tracked.len() {
            for c in ["g_re", "g_im", "g1_re", "g1_im", "alive"] {
                h.push(format!("{c}_{i}"));
            }
        }
        h
    }

    /// One row of the path dump, matching [`LoewnerState::csv_header`].
    pub fn csv_record(&self) -> Vec<String> {
        let mut r = vec![self.t.to_string(), self.driving.to_string()];
        for p in &self.tracked {
            r.push(p.g.re.to_string());
            r.push(p.g.im.to_string());
            r.push(p.g1.re.to_string());
            r.push(p.g1.im.to_string());
            r.push(u8::from(p.alive).to_string());
        }
        r
    }
}

fn drive_point<T: Real>(geometry: Geometry, d: T) -> Complex<T> {
    match geometry {
        Geometry::Chordal => cplx(d, T::zero()),
        Geometry::Radial => cplx(d.cos(), d.sin()),
    }
}

fn boundary_distance<T: Real>(geometry: Geometry, x: T, d: T) -> T {
    match geometry {
        Geometry::Chordal => (x - d).abs(),
        Geometry::Radial => wrap_angle(x - d).abs(),
    }
}

/// Signed offset of a boundary point from the driving point.
fn boundary_offset<T: Real>(geometry: Geometry, x: T, d: T) -> T {
    match geometry {
        Geometry::Chordal => x - d,
        Geometry::Radial => wrap_angle(x - d),
    }
}

fn rk4_jet<T: Real>(
    geometry: Geometry,
    sign: T,
    y: &Jet<T>,
    s: T,
    h: T,
    drive: &impl Fn(T) -> T,
) -> (Jet<T>, [Complex<T>; 3]) {
    let half = T::lit(0.5);
    let (d0, dm, d1) = (
        drive_point(geometry, drive(s)),
        drive_point(geometry, drive(s + h * half)),
        drive_point(geometry, drive(s + h)),
    );
    let k1 = jet_rhs(geometry, sign, y, d0);
    let y2 = *y + k1 * (h * half);
    let k2 = jet_rhs(geometry, sign, &y2, dm);
    let y3 = *y + k2 * (h * half);
    let k3 = jet_rhs(geometry, sign, &y3, dm);
    let y4 = *y + k3 * h;
    let k4 = jet_rhs(geometry, sign, &y4, d1);
    let out = *y + (k1 + k2 * T::lit(2.0) + k3 * T::lit(2.0) + k4) * (h / T::lit(6.0));
    (out, [y2.g - dm, y3.g - dm, y4.g - d1])
}

fn rk4_boundary<T: Real>(
    geometry: Geometry,
    sign: T,
    y: (T, T),
    s: T,
    h: T,
    drive: &impl Fn(T) -> T,
) -> ((T, T), [Complex<T>; 3]) {
    let half = T::lit(0.5);
    let (d0, dm, d1) = (drive(s), drive(s + h * half), drive(s + h));
    let f = |x: T, d: T| boundary_rhs(geometry, sign, x, d);
    let k1 = f(y.0, d0);
    let x2 = y.0 + k1.0 * h * half;
    let k2 = f(x2, dm);
    let x3 = y.0 + k2.0 * h * half;
    let k3 = f(x3, dm);
    let x4 = y.0 + k3.0 * h;
    let k4 = f(x4, d1);
    let two = T::lit(2.0);
    let sixth = h / T::lit(6.0);
    let out = (
        y.0 + (k1.0 + two * k2.0 + two * k3.0 + k4.0) * sixth,
        y.1 + (k1.1 + two * k2.1 + two * k3.1 + k4.1) * sixth,
    );
    let gap = |x: T, d: T| cplx(boundary_distance(geometry, x, d), T::zero());
    (out, [gap(x2, dm), gap(x3, dm), gap(x4, d1)])
}

/// Integrates one point over `[t0, t0 + dt]` with step halving.
///
/// A trial step of size `h` is rejected when an intermediate stage comes
/// within `eps` of the singularity or the point moves by more than a quarter
/// of its distance to it.
fn advance<T: Real, Y: Copy>(
    mut y: Y,
    t0: T,
    dt: T,
    eps: T,
    dt_min: T,
    dist: impl Fn(&Y, T) -> T,
    step: impl Fn(&Y, T, T) -> (Y, [Complex<T>; 3]),
) -> Advance<T, Y> {
    let quarter = T::lit(0.25);
    let t1 = t0 + dt;
    let mut t = t0;
    let mut h = dt;
    let tiny = T::epsilon() * T::lit(8.0) * t1.abs().max(T::one());
    loop {
        let rem = t1 - t;
        if rem <= tiny {
            return Advance::Done(y);
        }
        let d = dist(&y, t);
        if d < eps {
            return Advance::Stuck(t, y);
        }
        let hs = h.min(rem);
        let (trial, stages) = step(&y, t, hs);
        let moved = dist(&trial, t + hs);
        let ok = stages.iter().all(|s| s.norm() >= eps)
            && moved.is_finite()
            && (moved - d).abs() <= quarter * d
            && stage_motion_ok(&stages, d, quarter);
        if ok {
            y = trial;
            t = t + hs;
            if hs == h {
                h = (h + h).min(dt);
            }
        } else if hs * T::lit(0.5) < dt_min {
            return Advance::Stuck(t, y);
        } else {
            h = hs * T::lit(0.5);
        }
    }
}

/// Stage distances must stay within a factor of the starting distance.
fn stage_motion_ok<T: Real>(stages: &[Complex<T>; 3], d: T, quarter: T) -> bool {
    stages.iter().all(|s| {
        let n = s.norm();
        n.is_finite() && n >= d * (T::one() - T::lit(2.0) * quarter)
    })
}

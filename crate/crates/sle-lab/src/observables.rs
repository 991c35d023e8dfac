//! Closed-form martingale observables evaluated along a Loewner chain.
//!
//! Every evaluator reads the conformal map data `w_t(z)`, `w_t'(z)`, … of a
//! tracked point from a [`LoewnerState`] and combines them with the
//! differential weights of the observable. Multivalued quantities (arguments,
//! fractional powers) are built from the continuously tracked logarithms
//! `log g_t` and `log g_t'`, so the values are the continuous-in-time branches
//! that are martingales.
//!
//! Conventions: chordally `w = g_t − ξ_t`; radially `w = e^{−iθ_t} g_t` maps the
//! slit disc onto `𝔻` with the tip sent to `1` and `0` fixed, so
//! `log w = log g − iθ`, `log w' = log g' − iθ` and `w'(0) = e^{t − iθ}`.
//!
//! A point that has been swallowed keeps the map data of its swallowing time;
//! [`PointView::stopped`] and [`Observable::value`] evaluate the stopped
//! observable `M_{t∧τ}` from them.

use crate::charges::{Divisor, Point};
use crate::coulomb::{ChartContext, NEUTRALITY_TOL};
use crate::error::{Error, Result};
use crate::loewner::{LoewnerState, TrackedPoint};
use crate::partition::{Direction, Geometry, SleParams};
use crate::scalar::{cplx, Real};
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Green's functions with closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreensKernel {
    /// `G_ℍ(ζ, z) = log |(ζ − z̄)/(ζ − z)|`.
    DirichletH,
    /// `G_𝔻(ζ, z) = log |(1 − ζz̄)/(ζ − z)|`.
    DirichletD,
    /// `G_N(ζ, z) = log 1/|(ζ − z)(ζ − z̄)|`.
    NeumannH,
}

/// Evaluates a Green's function.
pub fn eval_greens<T: Real>(kernel: GreensKernel, z: Complex<T>, w: Complex<T>) -> Result<T> {
    if (z - w).norm() <= T::epsilon() * (T::one() + z.norm()) {
        return Err(Error::Degenerate("Green's function at coincident points".into()));
    }
    let one = cplx(T::one(), T::zero());
    Ok(match kernel {
        GreensKernel::DirichletH => ((z - w.conj()) / (z - w)).norm().ln(),
        GreensKernel::DirichletD => ((one - z * w.conj()) / (z - w)).norm().ln(),
        GreensKernel::NeumannH => -((z - w) * (z - w.conj())).norm().ln(),
    })
}

/// Map data of one tracked point at a given time (current, or frozen at its
/// swallowing time).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointView<T> {
    pub geometry: Geometry,
    pub t: T,
    pub driving: T,
    pub g: Complex<T>,
    pub g1: Complex<T>,
    pub g2: Complex<T>,
    pub g3: Complex<T>,
    pub log_g1: Complex<T>,
    pub log_g: Complex<T>,
}

impl<T: Real> PointView<T> {
    /// View of an alive point; errors if it has been swallowed.
    pub fn alive(state: &LoewnerState<T>, i: usize) -> Result<Self> {
        let p = tracked(state, i)?;
        if !p.alive {
            return Err(Error::Swallowed(format!("tracked point {i}")));
        }
        Ok(Self::build(state.geometry, state.t, state.driving, p))
    }

    /// View of the stopped point: current data while alive, frozen data at the
    /// swallowing time afterwards.
    pub fn stopped(state: &LoewnerState<T>, i: usize) -> Result<Self> {
        let p = tracked(state, i)?;
        match (p.alive, p.tau, p.tau_driving) {
            (false, Some(t), Some(d)) => Ok(Self::build(state.geometry, t, d, p)),
            _ => Ok(Self::build(state.geometry, state.t, state.driving, p)),
        }
    }

    fn build(geometry: Geometry, t: T, driving: T, p: &TrackedPoint<T>) -> Self {
        Self {
            geometry,
            t,
            driving,
            g: p.g,
            g1: p.g1,
            g2: p.g2,
            g3: p.g3,
            log_g1: p.log_g1,
            log_g: p.log_g,
        }
    }

    fn rotation(&self) -> Complex<T> {
        cplx(T::zero(), -self.driving).exp()
    }

    /// `w = g − ξ` or `w = e^{−iθ} g`.
    pub fn w(&self) -> Complex<T> {
        match self.geometry {
            Geometry::Chordal => self.g - cplx(self.driving, T::zero()),
            Geometry::Radial => self.g * self.rotation(),
        }
    }

    /// `w' = g'` or `e^{−iθ} g'`.
    pub fn w1(&self) -> Complex<T> {
        match self.geometry {
            Geometry::Chordal => self.g1,
            Geometry::Radial => self.g1 * self.rotation(),
        }
    }

    /// Continuous `log w'`.
    pub fn log_w1(&self) -> Complex<T> {
        match self.geometry {
            Geometry::Chordal => self.log_g1,
            Geometry::Radial => self.log_g1 - cplx(T::zero(), self.driving),
        }
    }

    /// Continuous `log w` (radial only).
    pub fn log_w(&self) -> Complex<T> {
        match self.geometry {
            Geometry::Chordal => self.w().ln(),
            Geometry::Radial => self.log_g - cplx(T::zero(), self.driving),
        }
    }
}

fn tracked<T: Real>(state: &LoewnerState<T>, i: usize) -> Result<&TrackedPoint<T>> {
    state.tracked.get(i).ok_or_else(|| Error::Precondition(format!("point {i} is not tracked")))
}

fn require(cond: bool, what: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Precondition(what.to_string()))
    }
}

/// Schramm–Sheffield observable from a point view: chordal
/// `2a·arg w − 2b·arg w'`, radial `2a·arg(1 − w) − a·arg w − 2b·arg(w'/w)`.
pub fn schramm_sheffield_view<T: Real>(v: &PointView<T>, params: &SleParams<T>) -> T {
    let two = T::lit(2.0);
    match v.geometry {
        Geometry::Chordal => two * params.a * v.w().arg() - two * params.b * v.log_w1().im,
        Geometry::Radial => {
            let one = cplx(T::one(), T::zero());
            let lw = v.log_w();
            two * params.a * (one - v.w()).arg() - params.a * lw.im - two * params.b * (v.log_w1() - lw).im
        }
    }
}

/// Schramm–Sheffield observable at tracked point `i` (forward flows).
pub fn eval_schramm_sheffield<T: Real>(state: &LoewnerState<T>, i: usize, params: &SleParams<T>) -> Result<T> {
    require(state.direction == Direction::Forward, "Schramm–Sheffield observable needs a forward flow")?;
    Ok(schramm_sheffield_view(&PointView::alive(state, i)?, params))
}

/// Charges of a 1-point vertex observable: `τ⁺` at `z`, `τ⁻` at `z*`, `τ_q^±`
/// at the target `0`, `0*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VertexCharges<T> {
    pub plus: Complex<T>,
    pub minus: Complex<T>,
    pub q_plus: Complex<T>,
    pub q_minus: Complex<T>,
}

/// Exponents of a 1-point vertex observable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexExponents<T> {
    /// `h^± = λ_b(τ^±) = (τ^±)²/2 − bτ^±`.
    pub h_plus: Complex<T>,
    pub h_minus: Complex<T>,
    /// `h_q^± = τ_q^±(τ_q^± − a)/2`.
    pub hq_plus: Complex<T>,
    pub hq_minus: Complex<T>,
    /// `ν^± = τ^±(τ_q^± + b − a/2)`.
    pub nu_plus: Complex<T>,
    pub nu_minus: Complex<T>,
}

impl<T: Real> VertexCharges<T> {
    /// Real charges.
    pub fn real(plus: T, minus: T, q_plus: T, q_minus: T) -> Self {
        let r = |x| cplx(x, T::zero());
        Self { plus: r(plus), minus: r(minus), q_plus: r(q_plus), q_minus: r(q_minus) }
    }

    /// Checks `τ⁺ + τ⁻ + τ_q⁺ + τ_q⁻ = 0`.
    pub fn check_neutral(&self) -> Result<()> {
        let total = self.plus + self.minus + self.q_plus + self.q_minus;
        if total.norm() > T::lit(NEUTRALITY_TOL) {
            return Err(Error::Neutrality { total: format!("{total}"), target: "0".into() });
        }
        Ok(())
    }

    /// Exponents for the given parameters.
    pub fn exponents(&self, params: &SleParams<T>) -> VertexExponents<T> {
        let (a, b) = (cplx(params.a, T::zero()), cplx(params.b, T::zero()));
        let half = T::lit(0.5);
        let lam = |s: Complex<T>| s * s * half - b * s;
        let hq = |s: Complex<T>| s * (s - a) * half;
        VertexExponents {
            h_plus: lam(self.plus),
            h_minus: lam(self.minus),
            hq_plus: hq(self.q_plus),
            hq_minus: hq(self.q_minus),
            nu_plus: self.plus * (self.q_plus + b - a * half),
            nu_minus: self.minus * (self.q_minus + b - a * half),
        }
    }

    /// The charge divisor `τ` in the disc with `z` at the given point
    /// (background charge `b`).
    pub fn divisor(&self, z: Complex<T>, b: T) -> Divisor<T> {
        let zero = Point::interior(cplx(T::zero(), T::zero()));
        let zp = Point::interior(z);
        Divisor::new(cplx(b, T::zero()))
            .with(zp, self.plus)
            .with(zp.star(ChartContext::DISC), self.minus)
            .with(zero, self.q_plus)
            .with(zero.star(ChartContext::DISC), self.q_minus)
    }
}

/// Radial 1-point vertex observable from a point view:
/// `(w_q')^{h_q⁺}(w̄_q')^{h_q⁻}(w')^{h⁺}(w̄')^{h⁻}w^{ν⁺}w̄^{ν⁻}(1−w)^{aτ⁺}(1−w̄)^{aτ⁻}(1−|w|²)^{τ⁺τ⁻}`
/// with `w_q' = e^{t−iθ}`.
pub fn vertex_view<T: Real>(v: &PointView<T>, tau: &VertexCharges<T>, params: &SleParams<T>) -> Complex<T> {
    vertex_log_view(v, tau, params).exp()
}

/// Continuous logarithm of [`vertex_view`].
pub fn vertex_log_view<T: Real>(v: &PointView<T>, tau: &VertexCharges<T>, params: &SleParams<T>) -> Complex<T> {
    let e = tau.exponents(params);
    let a = cplx(params.a, T::zero());
    let one = cplx(T::one(), T::zero());
    let log_wq = cplx(v.t, -v.driving);
    let l1 = v.log_w1();
    let lw = v.log_w();
    let w = v.w();
    let l1m = (one - w).ln();
    let disc = (T::one() - w.norm_sqr()).max(T::min_positive_value()).ln();
    e.hq_plus * log_wq
        + e.hq_minus * log_wq.conj()
        + e.h_plus * l1
        + e.h_minus * l1.conj()
        + e.nu_plus * lw
        + e.nu_minus * lw.conj()
        + a * tau.plus * l1m
        + a * tau.minus * l1m.conj()
        + tau.plus * tau.minus * disc
}

/// Radial 1-point vertex observable at tracked point `i`.
pub fn eval_vertex_1pt<T: Real>(
    state: &LoewnerState<T>,
    i: usize,
    tau: &VertexCharges<T>,
    params: &SleParams<T>,
) -> Result<Complex<T>> {
    require(state.geometry == Geometry::Radial, "vertex observables are radial")?;
    tau.check_neutral()?;
    Ok(vertex_view(&PointView::alive(state, i)?, tau, params))
}

/// `e^{t/4}(1 − w)^{1/3} w^{−1/6}` from a point view.
pub fn lsw_kappa6_view<T: Real>(v: &PointView<T>) -> Complex<T> {
    lsw_kappa6_log_view(v).exp()
}

/// Continuous logarithm of [`lsw_kappa6_view`] (`log(1 − w)` is principal,
/// `1 − w` staying in the right half-plane).
pub fn lsw_kappa6_log_view<T: Real>(v: &PointView<T>) -> Complex<T> {
    let one = cplx(T::one(), T::zero());
    cplx(v.t / T::lit(4.0), T::zero()) + (one - v.w()).ln() / T::lit(3.0) - v.log_w() / T::lit(6.0)
}

/// The κ = 6 observable `e^{t/4}(1 − w_t)^{1/3} w_t^{−1/6}` (radial).
pub fn eval_lsw_kappa6<T: Real>(state: &LoewnerState<T>, i: usize) -> Result<Complex<T>> {
    require(state.geometry == Geometry::Radial, "the κ = 6 observable is radial")?;
    Ok(lsw_kappa6_view(&PointView::alive(state, i)?))
}

/// Exponents of the boundary derivative observable for a given `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LswExponents<T> {
    /// `σ = (a/4)(κ − 4 + √((κ−4)² + 16κh))`.
    pub sigma: T,
    /// `h_q = σ²/8 + aσ/4`.
    pub h_q: T,
    /// Exponent of `sin²(θ/2)`: `aσ/2`.
    pub angle_exponent: T,
}

impl<T: Real> LswExponents<T> {
    pub fn new(params: &SleParams<T>, h: T) -> Self {
        let k = params.kappa;
        let four = T::lit(4.0);
        let root = ((k - four) * (k - four) + T::lit(16.0) * k * h).sqrt();
        let sigma = params.a / four * (k - four + root);
        Self {
            sigma,
            h_q: sigma * sigma / T::lit(8.0) + params.a * sigma / four,
            angle_exponent: params.a * sigma / T::lit(2.0),
        }
    }
}

/// `e^{2h_q t}|w_t'|^h (sin²(θ_t/2))^{aσ/2}` at boundary point `j`
/// (`θ_t` = angle of `w_t(e^{iθ})`); stopped at the swallowing time.
pub fn eval_lsw_boundary_exponent<T: Real>(
    state: &LoewnerState<T>,
    j: usize,
    h: T,
    params: &SleParams<T>,
) -> Result<T> {
    let p = state
        .boundary
        .get(j)
        .ok_or_else(|| Error::Precondition(format!("boundary point {j} is not tracked")))?;
    if !p.alive {
        return Err(Error::Swallowed(format!("boundary point {j}")));
    }
    lsw_boundary_value(state, j, h, params)
}

/// Stopped version of [`eval_lsw_boundary_exponent`] (frozen at the
/// swallowing time).
pub fn lsw_boundary_value<T: Real>(state: &LoewnerState<T>, j: usize, h: T, params: &SleParams<T>) -> Result<T> {
    require(state.geometry == Geometry::Radial, "the boundary exponent observable is radial")?;
    let p = state
        .boundary
        .get(j)
        .ok_or_else(|| Error::Precondition(format!("boundary point {j} is not tracked")))?;
    let (t, d) = match (p.alive, p.tau, p.tau_driving) {
        (false, Some(t), Some(d)) => (t, d),
        _ => (state.t, state.driving),
    };
    let e = LswExponents::new(params, h);
    let s = ((p.x - d) / T::lit(2.0)).sin();
    let two = T::lit(2.0);
    Ok((two * e.h_q * t + h * p.log_abs_g1 + e.angle_exponent * (s * s).ln()).exp())
}

/// The two SLE(0) integrals of motion `arg((1−w)w^{−3/2}w')` and
/// `S_w + (3/8)(w'/w)²(1 − 4w/(1−w)²)` (radial).
pub fn eval_sle0_invariants<T: Real>(state: &LoewnerState<T>, i: usize) -> Result<(T, Complex<T>)> {
    require(state.geometry == Geometry::Radial, "the SLE(0) invariants are radial")?;
    let v = PointView::alive(state, i)?;
    let one = cplx(T::one(), T::zero());
    let w = v.w();
    let first = ((one - w).ln() - v.log_w() * T::lit(1.5) + v.log_w1()).im;
    // The rotation e^{−iθ} cancels in the pre-Schwarzian N = w''/w'.
    let n = v.g2 / v.g1;
    let schwarzian = v.g3 / v.g1 - n * n * T::lit(1.5);
    let ratio = v.w1() / w;
    let second = schwarzian
        + ratio * ratio * T::lit(0.375) * (one - w * T::lit(4.0) / ((one - w) * (one - w)));
    Ok((first, second))
}

/// Sheffield's backward observable `−2a log|f_t − ξ_t| + 2b log|f_t'|` from a view.
pub fn sheffield_neumann_view<T: Real>(v: &PointView<T>, params: &SleParams<T>) -> T {
    let two = T::lit(2.0);
    -two * params.a * v.w().norm().ln() + two * params.b * v.log_g1.re
}

/// Sheffield's backward observable at tracked point `i` (backward chordal).
pub fn eval_sheffield_neumann<T: Real>(state: &LoewnerState<T>, i: usize, params: &SleParams<T>) -> Result<T> {
    require(
        state.direction == Direction::Backward && state.geometry == Geometry::Chordal,
        "Sheffield's observable needs a backward chordal flow",
    )?;
    let v = PointView::alive(state, i)?;
    if v.w().norm() < state.eps_swallow {
        return Err(Error::Pole("f_t(z) is too close to the driving point".into()));
    }
    Ok(sheffield_neumann_view(&v, params))
}

/// Green's function of the current domain between two tracked points:
/// `G_𝔻(w_1, w_2)` (forward radial) or `G_N(f_1, f_2)` (backward chordal).
pub fn domain_greens<T: Real>(state: &LoewnerState<T>, i: usize, j: usize) -> Result<T> {
    let (a, b) = (PointView::alive(state, i)?, PointView::alive(state, j)?);
    match (state.geometry, state.direction) {
        (Geometry::Radial, Direction::Forward) => eval_greens(GreensKernel::DirichletD, a.w(), b.w()),
        (Geometry::Chordal, Direction::Backward) => eval_greens(GreensKernel::NeumannH, a.g, b.g),
        (Geometry::Chordal, Direction::Forward) => eval_greens(GreensKernel::DirichletH, a.g, b.g),
        (Geometry::Radial, Direction::Backward) => {
            Err(Error::Precondition("no closed-form Green's function for backward radial flows".into()))
        }
    }
}

/// Hadamard rate `dG/dt`: `−Re((1+w_1)/(1−w_1))·Re((1+w_2)/(1−w_2))` (forward
/// radial), `−4 Re(1/(f_1−ξ))·Re(1/(f_2−ξ))` (backward chordal) or
/// `−4 Im(1/w_1)·Im(1/w_2)` (forward chordal).
pub fn hadamard_rate<T: Real>(state: &LoewnerState<T>, i: usize, j: usize) -> Result<T> {
    let (a, b) = (PointView::alive(state, i)?, PointView::alive(state, j)?);
    let one = cplx(T::one(), T::zero());
    let four = T::lit(4.0);
    match (state.geometry, state.direction) {
        (Geometry::Radial, Direction::Forward) => {
            let p = |w: Complex<T>| ((one + w) / (one - w)).re;
            Ok(-p(a.w()) * p(b.w()))
        }
        (Geometry::Chordal, Direction::Backward) => Ok(-four * a.w().inv().re * b.w().inv().re),
        (Geometry::Chordal, Direction::Forward) => Ok(-four * a.w().inv().im * b.w().inv().im),
        (Geometry::Radial, Direction::Backward) => {
            Err(Error::Precondition("no closed-form Hadamard rate for backward radial flows".into()))
        }
    }
}

/// A vertical slit `[x0, x0 + ih]` in `ℍ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerticalSlit<T> {
    pub x0: T,
    pub h: T,
}

/// Branch of `√((z − c)² + y²)` with values in the closed upper half-plane and
/// the sign of `z − c` on the real line (the hydrodynamic slit map minus `c`).
fn slit_root<T: Real>(z: Complex<T>, c: T, y: T) -> Complex<T> {
    let u = z - cplx(c, T::zero());
    let s = (u * u + cplx(y * y, T::zero())).sqrt();
    if s.im < T::zero() || (s.im == T::zero() && s.re * u.re < T::zero()) {
        -s
    } else {
        s
    }
}

impl<T: Real> VerticalSlit<T> {
    pub fn new(x0: T, h: T) -> Result<Self> {
        if !(h > T::zero()) {
            return Err(Error::Precondition("slit height must be positive".into()));
        }
        Ok(Self { x0, h })
    }

    /// Hydrodynamically normalized map `Ψ_K(z) = x0 + √((z − x0)² + h²)` of `ℍ \ K` onto `ℍ`.
    pub fn map(&self, z: Complex<T>) -> Complex<T> {
        cplx(self.x0, T::zero()) + slit_root(z, self.x0, self.h)
    }

    /// `Ψ_K'(z) = (z − x0)/√((z − x0)² + h²)`.
    pub fn derivative(&self, z: Complex<T>) -> Complex<T> {
        (z - cplx(self.x0, T::zero())) / slit_root(z, self.x0, self.h)
    }

    /// Points `x0 + i h k/n`, `k = 1..n`, ordered from the base to the tip.
    pub fn samples(&self, n: usize) -> Vec<Complex<T>> {
        let n = n.max(1);
        (1..=n).map(|k| cplx(self.x0, self.h * T::lit(k as f64) / T::lit(n as f64))).collect()
    }
}

/// Tracking handles of a slit followed by a chordal flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlitTracker<T> {
    pub slit: VerticalSlit<T>,
    /// Boundary index of the base point `x0`.
    pub base: usize,
    /// Tracked indices of the sample points, base to tip.
    pub samples: Vec<usize>,
}

impl<T: Real> SlitTracker<T> {
    /// Starts tracking `n` sample points of `slit` (plus its base) in `state`.
    pub fn track(state: &mut LoewnerState<T>, slit: VerticalSlit<T>, n: usize) -> Self {
        let base = state.track_boundary(slit.x0);
        let samples = slit.samples(n).into_iter().map(|z| state.track(z)).collect();
        Self { slit, base, samples }
    }

    /// Distance between consecutive sample points.
    pub fn spacing(&self) -> T {
        self.slit.h / T::lit(self.samples.len().max(1) as f64)
    }

    /// Whether the curve has reached the slit: a sample point or the base was
    /// swallowed, or the Koebe estimate `Im g/|g'|` of a sample point dropped
    /// below its threshold (`1.01·spacing`, reduced to half the height for
    /// the two lowest samples, whose distance to `ℝ` bounds the estimate).
    /// A curve passing between two samples comes within `spacing/2` of one
    /// of them, which forces the estimate below `spacing`.
    pub fn hit(&self, state: &LoewnerState<T>) -> bool {
        if !state.boundary[self.base].alive {
            return true;
        }
        let s = self.spacing();
        self.samples.iter().enumerate().any(|(k, &i)| {
            let p = &state.tracked[i];
            let threshold = s * T::lit(1.01f64.min((k as f64 + 0.5) / 2.0));
            !p.alive || p.g.im / p.g1.norm() < threshold
        })
    }

    /// `min_k Im g_t(z_k)/|g_t'(z_k)|`, comparable (within a factor 2) to the
    /// distance from the sampled slit points to the curve.
    pub fn distance_estimate(&self, state: &LoewnerState<T>) -> T {
        self.samples
            .iter()
            .map(|&i| {
                let p = &state.tracked[i];
                if p.alive {
                    p.g.im / p.g1.norm()
                } else {
                    T::zero()
                }
            })
            .fold(T::infinity(), |a, b| a.min(b))
    }
}

/// Derivative at the real point `x` of the hydrodynamic map removing the hull
/// bounded by the polyline `p_1 → … → p_n` starting on `ℝ` (vertical-slit
/// zipper: each step removes the vertical slit below the next point; exact
/// when the polyline is a vertical segment).
pub fn zipper_derivative<T: Real>(points: &[Complex<T>], x: T) -> Result<T> {
    let mut pts: Vec<Complex<T>> = points.to_vec();
    let mut zeta = cplx(x, T::zero());
    let mut deriv = T::one();
    for k in 0..pts.len() {
        let p = pts[k];
        if !(p.im > T::zero()) {
            return Err(Error::Degenerate("slit image touches the real line".into()));
        }
        let (c, y) = (p.re, p.im);
        let root = slit_root(zeta, c, y);
        if root.norm() == T::zero() {
            return Err(Error::Pole("evaluation point on the slit".into()));
        }
        deriv = deriv * ((zeta - cplx(c, T::zero())) / root).re;
        zeta = cplx(c, T::zero()) + root;
        for q in pts.iter_mut().skip(k + 1) {
            *q = cplx(c, T::zero()) + slit_root(*q, c, y);
        }
    }
    Ok(deriv)
}

/// Chordal restriction martingale `M_t = h_t'(ξ_t)^λ`, `λ = a²/2 − ab`, with
/// `h_t` the hydrodynamic map removing `g_t(K)`; `None` once the curve has
/// reached the slit.
pub fn eval_restriction_chordal<T: Real>(
    state: &LoewnerState<T>,
    tracker: &SlitTracker<T>,
    params: &SleParams<T>,
) -> Result<Option<T>> {
    require(
        state.geometry == Geometry::Chordal && state.direction == Direction::Forward,
        "the restriction observable needs a forward chordal flow",
    )?;
    if tracker.hit(state) {
        return Ok(None);
    }
    let pts: Vec<Complex<T>> = tracker.samples.iter().map(|&i| state.tracked[i].g).collect();
    let d = zipper_derivative(&pts, state.driving)?;
    Ok(Some(d.abs().powf(params.h12())))
}

/// The exact restriction probability `Ψ_K'(0)^λ = (|x0|/√(x0² + h²))^λ`.
pub fn restriction_formula<T: Real>(slit: &VerticalSlit<T>, params: &SleParams<T>) -> T {
    let d = slit.x0.abs() / (slit.x0 * slit.x0 + slit.h * slit.h).sqrt();
    d.powf(params.h12())
}

/// Result of the Virasoro recursion on the unit circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirasoroValue<T> {
    /// `R(1; e^{iθ_1}, …, e^{iθ_n})`.
    pub r: Complex<T>,
    /// `(−2)^n e^{2iΣθ_j} R`: the small-slit hitting density
    /// `lim P(hits all slits)/t^n` (real for points on the circle).
    pub density: Complex<T>,
}

/// Evaluates the n-point recursion for `R(1; z_1, …, z_n)`, `z_j = e^{iθ_j}`,
/// with `R(1; ·) = 1` for `n = 0`.
pub fn virasoro_npoint_recursion<T: Real>(angles: &[T], kappa: T) -> Result<VirasoroValue<T>> {
    let points: Vec<Complex<T>> = angles.iter().map(|&t| cplx(T::zero(), t).exp()).collect();
    for (k, z) in points.iter().enumerate() {
        if (*z - cplx(T::one(), T::zero())).norm() < T::lit(1e-12) {
            return Err(Error::Degenerate(format!("angle {k} coincides with the root point")));
        }
        for w in &points[..k] {
            if (*z - *w).norm() < T::lit(1e-12) {
                return Err(Error::Degenerate("coincident angles".into()));
            }
        }
    }
    let r = virasoro_r(&points, kappa)?;
    let n = points.len();
    let sum: T = angles.iter().fold(T::zero(), |s, &t| s + t);
    let factor = cplx(T::lit((-2.0f64).powi(n as i32)), T::zero()) * cplx(T::zero(), T::lit(2.0) * sum).exp();
    Ok(VirasoroValue { r, density: factor * r })
}

/// `R(1; z_1, …, z_n)` for arbitrary complex points (off the root point).
pub fn virasoro_r<T: Real>(points: &[Complex<T>], kappa: T) -> Result<Complex<T>> {
    let n = points.len();
    if n > 8 {
        return Err(Error::Precondition("the recursion is limited to n ≤ 8 points".into()));
    }
    let params = SleParams::forward(kappa, true);
    let layout = std::rc::Rc::new(Layout::new(n, n));
    let vars: Vec<Taylor<T>> =
        points.iter().enumerate().map(|(k, &z)| Taylor::variable(&layout, k, z)).collect();
    let coeffs = Coefficients {
        lambda: params.h12(),
        mu: params.mu(),
        c: params.central_charge(),
    };
    let mut memo = HashMap::new();
    let full = (1u32 << n) - 1;
    Ok(recursion(&vars, full, &coeffs, &layout, &mut memo).constant())
}

struct Coefficients<T> {
    lambda: T,
    mu: T,
    c: T,
}

/// `R` restricted to the points in `mask`, as a truncated Taylor series in the
/// perturbations of all points.
fn recursion<T: Real>(
    vars: &[Taylor<T>],
    mask: u32,
    k: &Coefficients<T>,
    layout: &std::rc::Rc<Layout>,
    memo: &mut HashMap<u32, Taylor<T>>,
) -> Taylor<T> {
    if let Some(v) = memo.get(&mask) {
        return v.clone();
    }
    if mask == 0 {
        return Taylor::constant_of(layout, cplx(T::one(), T::zero()));
    }
    let first = mask.trailing_zeros() as usize;
    let rest_mask = mask & !(1 << first);
    let rest: Vec<usize> = (0..vars.len()).filter(|j| rest_mask & (1 << j) != 0).collect();
    let z = &vars[first];
    let r = recursion(vars, rest_mask, k, layout, memo);
    let one = Taylor::constant_of(layout, cplx(T::one(), T::zero()));
    let two = cplx(T::lit(2.0), T::zero());
    let n = T::lit(rest.len() as f64);
    let one_minus = one.sub(z);
    let mobius = one.add(z).mul(&one_minus.recip());
    // (2n(1+z)/(1−z) + 2λz/(1−z)² + μ) R
    let mut bracket = mobius
        .scale(cplx(T::lit(2.0) * n, T::zero()))
        .add(&z.scale(two * k.lambda).mul(&one_minus.mul(&one_minus).recip()))
        .add_const(cplx(k.mu, T::zero()))
        .mul(&r);
    let mut tail = Taylor::constant_of(layout, cplx(T::zero(), T::zero()));
    for &j in &rest {
        let zj = &vars[j];
        let dr = r.derivative(j);
        // (1+z)/(1−z)·z_j ∂_j R
        bracket = bracket.add(&mobius.mul(zj).mul(&dr));
        // z_j (z + z_j)/(z − z_j) ∂_j R + 2(z² + 2z z_j − z_j²)/(z − z_j)² R
        let diff = z.sub(zj);
        let inv = diff.recip();
        bracket = bracket.add(&zj.mul(&z.add(zj)).mul(&inv).mul(&dr));
        let num = z.mul(z).add(&z.mul(zj).scale(two)).sub(&zj.mul(zj));
        bracket = bracket.add(&num.scale(two).mul(&inv).mul(&inv).mul(&r));
        // (c/2) R(𝒛_j)/(z − z_j)⁴
        let rj = recursion(vars, rest_mask & !(1 << j), k, layout, memo);
        let inv2 = inv.mul(&inv);
        tail = tail.add(&rj.mul(&inv2).mul(&inv2).scale(cplx(k.c * T::lit(0.5), T::zero())));
    }
    let value = bracket.mul(&z.mul(z).scale(two).recip()).add(&tail);
    memo.insert(mask, value.clone());
    value
}

/// Multi-indices of total degree `≤ order` in `nvars` variables with their
/// multiplication table.
struct Layout {
    nvars: usize,
    order: usize,
    exps: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
}

impl Layout {
    fn new(nvars: usize, order: usize) -> Self {
        let mut exps = vec![vec![0u8; nvars]];
        let mut frontier = exps.clone();
        for _ in 0..order {
            let mut next = Vec::new();
            for e in &frontier {
                // Extend only at or after the last nonzero position so each
                // multi-index is generated once.
                let start = e.iter().rposition(|&x| x > 0).unwrap_or(0);
                for v in start..nvars {
                    let mut f = e.clone();
                    f[v] += 1;
                    next.push(f);
                }
            }
            exps.extend(next.iter().cloned());
            frontier = next;
        }
        let index = exps.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        Self { nvars, order, exps, index }
    }

    fn degree(&self, i: usize) -> usize {
        self.exps[i].iter().map(|&x| x as usize).sum()
    }
}

/// Truncated multivariate Taylor series with complex coefficients.
#[derive(Clone)]
struct Taylor<T> {
    layout: std::rc::Rc<Layout>,
    c: Vec<Complex<T>>,
}

impl<T: Real> Taylor<T> {
    fn constant_of(layout: &std::rc::Rc<Layout>, value: Complex<T>) -> Self {
        let mut c = vec![cplx(T::zero(), T::zero()); layout.exps.len()];
        c[0] = value;
        Self { layout: layout.clone(), c }
    }

    fn variable(layout: &std::rc::Rc<Layout>, var: usize, value: Complex<T>) -> Self {
        let mut t = Self::constant_of(layout, value);
        if layout.order > 0 {
            let mut e = vec![0u8; layout.nvars];
            e[var] = 1;
            t.c[layout.index[&e]] = cplx(T::one(), T::zero());
        }
        t
    }

    fn constant(&self) -> Complex<T> {
        self.c[0]
    }

    fn add(&self, o: &Self) -> Self {
        Self { layout: self.layout.clone(), c: self.c.iter().zip(&o.c).map(|(a, b)| a + b).collect() }
    }

    fn sub(&self, o: &Self) -> Self {
        Self { layout: self.layout.clone(), c: self.c.iter().zip(&o.c).map(|(a, b)| a - b).collect() }
    }

    fn add_const(&self, v: Complex<T>) -> Self {
        let mut t = self.clone();
        t.c[0] = t.c[0] + v;
        t
    }

    fn scale(&self, s: Complex<T>) -> Self {
        Self { layout: self.layout.clone(), c: self.c.iter().map(|a| a * s).collect() }
    }

    fn mul(&self, o: &Self) -> Self {
        let l = &self.layout;
        let mut c = vec![cplx(T::zero(), T::zero()); l.exps.len()];
        let mut e = vec![0u8; l.nvars];
        for (i, a) in self.c.iter().enumerate() {
            if a.norm_sqr() == T::zero() {
                continue;
            }
            let di = l.degree(i);
            for (j, b) in o.c.iter().enumerate() {
                if b.norm_sqr() == T::zero() || di + l.degree(j) > l.order {
                    continue;
                }
                for (v, x) in e.iter_mut().enumerate() {
                    *x = l.exps[i][v] + l.exps[j][v];
                }
                let k = l.index[&e];
                c[k] = c[k] + a * b;
            }
        }
        Self { layout: l.clone(), c }
    }

    /// `1/f = Σ_k (−u)^k / f_0^{k+1}` with `u = f − f_0`.
    fn recip(&self) -> Self {
        let f0 = self.c[0];
        let inv0 = f0.inv();
        let mut u = self.clone();
        u.c[0] = cplx(T::zero(), T::zero());
        let neg_u = u.scale(-inv0);
        let mut term = Self::constant_of(&self.layout, inv0);
        let mut sum = term.clone();
        for _ in 0..self.layout.order {
            term = term.mul(&neg_u);
            sum = sum.add(&term);
        }
        sum
    }

    /// Partial derivative with respect to variable `var` (the top order is
    /// lost).
    fn derivative(&self, var: usize) -> Self {
        let l = &self.layout;
        let mut c = vec![cplx(T::zero(), T::zero()); l.exps.len()];
        for (i, e) in l.exps.iter().enumerate() {
            if l.degree(i) + 1 > l.order {
                continue;
            }
            let mut f = e.clone();
            f[var] += 1;
            let k = l.index[&f];
            c[i] = self.c[k] * T::lit(f[var] as f64);
        }
        Self { layout: l.clone(), c }
    }
}

/// Martingale observables available to the Monte Carlo harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    /// `M ≡ 0`.
    Zero,
    /// Schramm–Sheffield observable at `z` (forward, either geometry).
    SchrammSheffield { z: [f64; 2] },
    /// Radial 1-point vertex observable with real charges.
    Vertex { z: [f64; 2], tau_plus: f64, tau_minus: f64, tauq_plus: f64, tauq_minus: f64 },
    /// Radial κ = 6 observable `e^{t/4}(1−w)^{1/3}w^{−1/6}`.
    LswKappa6 { z: [f64; 2] },
    /// Radial boundary derivative observable at `e^{iθ}`.
    LswBoundary { theta: f64, h: f64 },
    /// Chordal restriction martingale for the vertical slit `[x0, x0 + ih]`.
    Restriction { x0: f64, h: f64, samples: usize },
    /// Backward chordal Sheffield observable at `z`.
    SheffieldNeumann { z: [f64; 2] },
}

/// Indices of the points an [`Observable`] follows in a Loewner chain.
#[derive(Debug, Clone, PartialEq)]
pub enum Handle {
    None,
    Point(usize),
    Boundary(usize),
    Slit(SlitTracker<f64>),
}

impl Observable {
    /// Short identifier used in reports.
    pub fn id(&self) -> String {
        match self {
            Observable::Zero => "zero".into(),
            Observable::SchrammSheffield { z } => format!("schramm_sheffield({}, {})", z[0], z[1]),
            Observable::Vertex { z, tau_plus, tau_minus, tauq_plus, tauq_minus } => {
                format!("vertex({}, {}; {}, {}; {}, {})", z[0], z[1], tau_plus, tau_minus, tauq_plus, tauq_minus)
            }
            Observable::LswKappa6 { z } => format!("lsw_kappa6({}, {})", z[0], z[1]),
            Observable::LswBoundary { theta, h } => format!("lsw_boundary(θ={theta}, h={h})"),
            Observable::Restriction { x0, h, .. } => format!("restriction(x0={x0}, h={h})"),
            Observable::SheffieldNeumann { z } => format!("sheffield_neumann({}, {})", z[0], z[1]),
        }
    }

    /// The κ = 2 Poisson-kernel observable `(1 − |w|²)/|1 − w|²` at `z`.
    pub fn poisson(z: [f64; 2], params: &SleParams<f64>) -> Self {
        let a = params.a;
        Observable::Vertex { z, tau_plus: -a, tau_minus: -a, tauq_plus: a, tauq_minus: a }
    }

    /// Checks that the observable fits the flow.
    pub fn check_compatible(&self, geometry: Geometry, direction: Direction) -> Result<()> {
        let ok = match self {
            Observable::Zero => true,
            Observable::SchrammSheffield { .. } => direction == Direction::Forward,
            Observable::Vertex { .. } | Observable::LswKappa6 { .. } | Observable::LswBoundary { .. } => {
                geometry == Geometry::Radial && direction == Direction::Forward
            }
            Observable::Restriction { .. } => geometry == Geometry::Chordal && direction == Direction::Forward,
            Observable::SheffieldNeumann { .. } => {
                geometry == Geometry::Chordal && direction == Direction::Backward
            }
        };
        require(ok, &format!("{} does not apply to {geometry:?}/{direction:?} flows", self.id()))
    }

    /// Registers the points the observable needs.
    pub fn track(&self, state: &mut LoewnerState<f64>) -> Result<Handle> {
        self.check_compatible(state.geometry, state.direction)?;
        let z = |p: &[f64; 2]| cplx(p[0], p[1]);
        Ok(match self {
            Observable::Zero => Handle::None,
            Observable::SchrammSheffield { z: p }
            | Observable::Vertex { z: p, .. }
            | Observable::LswKappa6 { z: p }
            | Observable::SheffieldNeumann { z: p } => Handle::Point(state.track(z(p))),
            Observable::LswBoundary { theta, .. } => Handle::Boundary(state.track_boundary(*theta)),
            Observable::Restriction { x0, h, samples } => {
                Handle::Slit(SlitTracker::track(state, VerticalSlit::new(*x0, *h)?, *samples))
            }
        })
    }

    /// Value of the stopped observable `M_{t∧τ}` (frozen at swallowing).
    pub fn value(&self, state: &LoewnerState<f64>, handle: &Handle, params: &SleParams<f64>) -> Result<Complex<f64>> {
        let real = |x: f64| Complex::new(x, 0.0);
        match (self, handle) {
            (Observable::Zero, _) => Ok(real(0.0)),
            (Observable::SchrammSheffield { .. }, Handle::Point(i)) => {
                Ok(real(schramm_sheffield_view(&PointView::stopped(state, *i)?, params)))
            }
            (Observable::Vertex { tau_plus, tau_minus, tauq_plus, tauq_minus, .. }, Handle::Point(i)) => {
                let tau = VertexCharges::real(*tau_plus, *tau_minus, *tauq_plus, *tauq_minus);
                tau.check_neutral()?;
                Ok(vertex_view(&PointView::stopped(state, *i)?, &tau, params))
            }
            (Observable::LswKappa6 { .. }, Handle::Point(i)) => Ok(lsw_kappa6_view(&PointView::stopped(state, *i)?)),
            (Observable::LswBoundary { h, .. }, Handle::Boundary(j)) => {
                Ok(real(lsw_boundary_value(state, *j, *h, params)?))
            }
            (Observable::Restriction { .. }, Handle::Slit(tracker)) => {
                Ok(real(eval_restriction_chordal(state, tracker, params)?.unwrap_or(0.0)))
            }
            (Observable::SheffieldNeumann { .. }, Handle::Point(i)) => {
                Ok(real(sheffield_neumann_view(&PointView::stopped(state, *i)?, params)))
            }
            _ => Err(Error::Precondition("observable handle does not match its kind".into())),
        }
    }

    /// Whether the observable has been stopped (its point swallowed or the
    /// slit reached).
    pub fn stopped(&self, state: &LoewnerState<f64>, handle: &Handle) -> bool {
        match handle {
            Handle::None => false,
            Handle::Point(i) => !state.tracked[*i].alive,
            Handle::Boundary(j) => !state.boundary[*j].alive,
            Handle::Slit(tracker) => tracker.hit(state),
        }
    }
}

impl Observable {
    /// Continuous logarithm of a complex-valued observable (`None` for the
    /// real-valued kinds), used to follow its phase along a path.
    pub fn log_value(
        &self,
        state: &LoewnerState<f64>,
        handle: &Handle,
        params: &SleParams<f64>,
    ) -> Result<Option<Complex<f64>>> {
        match (self, handle) {
            (Observable::Vertex { tau_plus, tau_minus, tauq_plus, tauq_minus, .. }, Handle::Point(i)) => {
                let tau = VertexCharges::real(*tau_plus, *tau_minus, *tauq_plus, *tauq_minus);
                Ok(Some(vertex_log_view(&PointView::stopped(state, *i)?, &tau, params)))
            }
            (Observable::LswKappa6 { .. }, Handle::Point(i)) => {
                Ok(Some(lsw_kappa6_log_view(&PointView::stopped(state, *i)?)))
            }
            _ => Ok(None),
        }
    }
}

/// Follows the continuous phase of a complex observable along a path and
/// rejects steps in which it moves by `π` or more.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTracker {
    last: Option<f64>,
}

impl PhaseTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records the next phase; errors if it differs from the previous one by
    /// at least `π`.
    pub fn update(&mut self, phase: f64) -> Result<f64> {
        if let Some(prev) = self.last {
            let jump = phase - prev;
            if !(jump.abs() < std::f64::consts::PI) {
                return Err(Error::PhaseJump(jump));
            }
        }
        self.last = Some(phase);
        Ok(phase)
    }

    /// Last accepted phase.
    pub fn phase(&self) -> Option<f64> {
        self.last
    }
}

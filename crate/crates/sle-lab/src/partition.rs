//! SLE parameters, partition functions `Z_β = |C[β]|`, their analytic
//! logarithmic derivatives (the SLE drifts) and residuals of the null-vector
//! and BPZ–Cardy equations.
//!
//! Background divisors passed to the drift and residual functions describe
//! every marked point *except* the driving point; the charge `a` at the driving
//! point (`ξ` on the real line, or `e^{iθ}` on the circle) is inserted here.
//! Backward (Neumann) quantities reuse the forward code under the substitution
//! `(a, b, β, τ) ↦ (−ia, −ib, −iβ, −iτ)`.

use crate::charges::{Divisor, DoubleDivisor, Neutrality, Point};
use crate::coulomb::{self, lie_derivative_gas, ChartContext, Gas, VectorField, NEUTRALITY_TOL};
use crate::error::{Error, Result};
use crate::scalar::{cplx, Real};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

/// Forward (Dirichlet) or backward (Neumann) SLE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

/// Chordal (`ℍ`, target `∞`) or radial (`𝔻`, target `0`) geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    Chordal,
    Radial,
}

impl Geometry {
    /// The uniformization in which this geometry is evaluated.
    pub fn chart(self) -> ChartContext {
        match self {
            Geometry::Chordal => ChartContext::HALF_PLANE,
            Geometry::Radial => ChartContext::DISC,
        }
    }

    /// The boundary point carrying the driving charge.
    pub fn driving_point<T: Real>(self, x: T) -> Point<T> {
        match self {
            Geometry::Chordal => Point::real(x),
            Geometry::Radial => Point::on_circle(x),
        }
    }
}

/// `κ` together with the Coulomb gas parameters `a`, `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SleParams<T> {
    pub kappa: T,
    pub a: T,
    pub b: T,
    pub mode: Direction,
}

impl<T: Real> SleParams<T> {
    /// Forward parameters `a = ±√(2/κ)`, `b = a(κ/4 − 1)`.
    pub fn forward(kappa: T, positive: bool) -> Self {
        let a = (T::lit(2.0) / kappa).sqrt();
        let a = if positive { a } else { -a };
        Self { kappa, a, b: a * (kappa / T::lit(4.0) - T::one()), mode: Direction::Forward }
    }

    /// Backward parameters `a = ±√(2/κ)`, `b = −a(κ/4 + 1)`.
    pub fn backward(kappa: T, positive: bool) -> Self {
        let a = (T::lit(2.0) / kappa).sqrt();
        let a = if positive { a } else { -a };
        Self { kappa, a, b: -a * (kappa / T::lit(4.0) + T::one()), mode: Direction::Backward }
    }

    /// Arbitrary parameters (used for negative controls); not validated.
    pub fn unchecked(kappa: T, a: T, b: T, mode: Direction) -> Self {
        Self { kappa, a, b, mode }
    }

    /// Checks `2a(a+b) = ±1` and `κ = 2/a²`.
    pub fn validate(&self) -> Result<()> {
        let target = match self.mode {
            Direction::Forward => T::one(),
            Direction::Backward => -T::one(),
        };
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(64.0));
        let rel = T::lit(2.0) * self.a * (self.a + self.b) - target;
        let kap = self.kappa * self.a * self.a - T::lit(2.0);
        if !(self.kappa > T::zero()) || rel.abs() > tol || kap.abs() > tol {
            return Err(Error::Precondition(format!(
                "inconsistent SLE parameters κ={}, a={}, b={} ({:?})",
                self.kappa, self.a, self.b, self.mode
            )));
        }
        Ok(())
    }

    /// Central charge: `1 − 12b²` forward, `1 + 12b²` backward.
    pub fn central_charge(&self) -> T {
        let t = T::lit(12.0) * self.b * self.b;
        match self.mode {
            Direction::Forward => T::one() - t,
            Direction::Backward => T::one() + t,
        }
    }

    /// One-leg boundary dimension `h_{1,2} = a²/2 − ab` (the exponent `λ`).
    pub fn h12(&self) -> T {
        self.a * self.a / T::lit(2.0) - self.a * self.b
    }

    /// Dimension `h_{0,1/2} = a²/8 − b²/2`.
    pub fn h0_half(&self) -> T {
        self.a * self.a / T::lit(8.0) - self.b * self.b / T::lit(2.0)
    }

    /// Effective dimension at the radial target, `μ = a²/4 − b² = 2h_{0,1/2}`.
    pub fn mu(&self) -> T {
        self.a * self.a / T::lit(4.0) - self.b * self.b
    }

    /// Charge of a force point with SLE(κ,ρ) weight `ρ`: `aρ/2` (`= ρ/√(2κ)` for `a > 0`).
    pub fn rho_to_beta(&self, rho: T) -> T {
        self.a * rho / T::lit(2.0)
    }

    /// Factor applied to charges before evaluation (`1` forward, `−i` backward).
    pub fn charge_scale(&self) -> Complex<T> {
        match self.mode {
            Direction::Forward => cplx(T::one(), T::zero()),
            Direction::Backward => cplx(T::zero(), -T::one()),
        }
    }

    /// `(a, b)` after the direction substitution.
    pub fn effective(&self) -> (Complex<T>, Complex<T>) {
        let s = self.charge_scale();
        (s * self.a, s * self.b)
    }
}

/// Partition function `Z_β = |C[β]|` (backward: `|C_(−ib)[−iβ]|`).
pub fn z_beta<T: Real>(beta: &Divisor<T>, chart: ChartContext, params: &SleParams<T>) -> Result<T> {
    if !beta.symmetrize_check(chart, T::lit(NEUTRALITY_TOL)) {
        return Err(Error::Precondition("background charge is not symmetric".into()));
    }
    let scaled = beta.with_b(cplx(params.b, T::zero())).scaled(params.charge_scale());
    Ok(coulomb::correlation(&scaled, chart)?.log_modulus.exp())
}

/// Background divisor with the driving charge inserted, ready for analytic
/// differentiation in the driving variable.
struct Driven<T> {
    dd: DoubleDivisor<T>,
    gas: Gas<T>,
    drive: usize,
    point: Point<T>,
}

impl<T: Real> Driven<T> {
    fn new(rest: &Divisor<T>, x: T, params: &SleParams<T>, geometry: Geometry) -> Result<Self> {
        let chart = geometry.chart();
        let point = geometry.driving_point(x);
        if rest.entries().iter().any(|(p, s)| p.same_as(&point) && s.norm() > T::zero()) {
            return Err(Error::Pole("driving point coincides with a marked point".into()));
        }
        let full = rest
            .with_b(cplx(params.b, T::zero()))
            .with(point, cplx(params.a, T::zero()))
            .scaled(params.charge_scale());
        Self::from_full(full, point, chart)
    }

    fn from_full(full: Divisor<T>, point: Point<T>, chart: ChartContext) -> Result<Self> {
        let dd = DoubleDivisor::from_double(&full, chart);
        let gas = Gas::build(&dd, chart)?;
        let i = dd
            .plus
            .entries()
            .iter()
            .position(|(p, _)| p.same_as(&point))
            .ok_or_else(|| Error::Precondition("driving point missing".into()))?;
        let drive = gas.plus_index[i].ok_or_else(|| Error::Chart("driving point at ∞".into()))?;
        Ok(Self { dd, gas, drive, point })
    }

    /// `∂_x log C` and `∂²_x log C` with `x` the holomorphic driving variable.
    fn derivatives(&self) -> Result<(Complex<T>, Complex<T>)> {
        Ok((self.gas.dx(self.drive)?, self.gas.dxx(self.drive)?))
    }

    fn other_nodes(&self) -> Vec<Point<T>> {
        coulomb::support(&self.dd).into_iter().filter(|p| !p.same_as(&self.point)).collect()
    }

    fn lie(&self, v: &VectorField<T>, nodes: &[Point<T>]) -> Result<Complex<T>> {
        lie_derivative_gas(v, &self.gas, &self.dd, nodes)
    }
}

/// Converts `(∂_ζ, ∂²_ζ)` of a log into `(∂_θ, ∂²_θ)` with `ζ = e^{iθ}`.
fn to_theta<T: Real>(zeta: Complex<T>, d1: Complex<T>, d2: Complex<T>) -> (Complex<T>, Complex<T>) {
    let i = cplx(T::zero(), T::one());
    (i * zeta * d1, -(zeta * d1) - zeta * zeta * d2)
}

/// Chordal drift `κ ∂_ξ log Z_{β_ξ}` (analytic).
pub fn drift_chordal<T: Real>(beta: &Divisor<T>, xi: T, params: &SleParams<T>) -> Result<T> {
    let d = Driven::new(beta, xi, params, Geometry::Chordal)?;
    Ok(params.kappa * d.gas.dx(d.drive)?.re)
}

/// Radial drift `κ ∂_θ log Z_{β_ζ}`, `ζ = e^{iθ}` (analytic).
pub fn drift_radial<T: Real>(beta: &Divisor<T>, theta: T, params: &SleParams<T>) -> Result<T> {
    let d = Driven::new(beta, theta, params, Geometry::Radial)?;
    let zeta = d.point.coord;
    let (d1, _) = to_theta(zeta, d.gas.dx(d.drive)?, cplx(T::zero(), T::zero()));
    Ok(params.kappa * d1.re)
}

/// Drift in the given geometry.
pub fn drift<T: Real>(beta: &Divisor<T>, x: T, params: &SleParams<T>, geometry: Geometry) -> Result<T> {
    match geometry {
        Geometry::Chordal => drift_chordal(beta, x, params),
        Geometry::Radial => drift_radial(beta, x, params),
    }
}

/// Defect of the radial normalization identity `Re(ζ ∂_ζ log C_ζ) = −h`,
/// `h = a²/2 − ab`, which makes `∂_θ log Z_ζ = ∂_θ log(C_ζ/C⁰_ζ)` for symmetric
/// neutral backgrounds.
pub fn radial_normalization_defect<T: Real>(beta: &Divisor<T>, theta: T, params: &SleParams<T>) -> Result<T> {
    let d = Driven::new(beta, theta, params, Geometry::Radial)?;
    let (a, b) = params.effective();
    let h = a * a * T::lit(0.5) - a * b;
    Ok((d.point.coord * d.gas.dx(d.drive)? + h).re)
}

/// Both sides of a checked PDE, normalized by the partition function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual<T> {
    /// Differential operator in the driving variable.
    pub lhs: Complex<T>,
    /// Lie derivative side.
    pub rhs: Complex<T>,
    /// `|lhs − rhs|`.
    pub abs: T,
    /// `|lhs − rhs| / max(1, |lhs|, |rhs|)`.
    pub rel: T,
}

impl<T: Real> Residual<T> {
    fn new(lhs: Complex<T>, rhs: Complex<T>) -> Self {
        let abs = (lhs - rhs).norm();
        let scale = T::one().max(lhs.norm()).max(rhs.norm());
        Self { lhs, rhs, abs, rel: abs / scale }
    }
}

fn loewner_field<T: Real>(geometry: Geometry, point: &Point<T>) -> VectorField<T> {
    match geometry {
        Geometry::Chordal => VectorField::Chordal { xi: point.coord.re },
        Geometry::Radial => VectorField::Radial { zeta: point.coord },
    }
}

/// Residual of the null-vector equation.
///
/// Chordal: `(1/2a²) ∂²_ξ Z = Ľ_{k_ξ} Z`.  Radial: `L(ζ) C_ζ = Ľ_{v_ζ} C_ζ` with
/// `L(e^{iθ}) = −(2/a²)(½∂²_θ + ih∂_θ) + h`.  `Ľ` acts on every marked point
/// except the driving point.
pub fn null_vector_residual<T: Real>(
    beta: &Divisor<T>,
    x: T,
    params: &SleParams<T>,
    geometry: Geometry,
) -> Result<Residual<T>> {
    let d = Driven::new(beta, x, params, geometry)?;
    let (a, b) = params.effective();
    let (d1, d2) = d.derivatives()?;
    let nodes = d.other_nodes();
    let rhs = d.lie(&loewner_field(geometry, &d.point), &nodes)?;
    let half = T::lit(0.5);
    let lhs = match geometry {
        Geometry::Chordal => (d1 * d1 + d2) / (a * a * T::lit(2.0)),
        Geometry::Radial => {
            let (t1, t2) = to_theta(d.point.coord, d1, d2);
            let h = a * a * half - a * b;
            let i = cplx(T::zero(), T::one());
            -((t1 * t1 + t2) * half + i * h * t1) * T::lit(2.0) / (a * a) + h
        }
    };
    Ok(Residual::new(lhs, rhs))
}

/// Residual of the BPZ–Cardy equation for the vertex observable
/// `Ê X = C[β_ξ + τ] / C[β_ξ]`.
///
/// Chordal: `(1/2a²)(∂²_ξ + 2(∂_ξ log Z)∂_ξ) Ê X = Ľ_{k_ξ} Ê X`.
/// Radial: `−(2/a²)(½∂²_θ + (∂_θ log Z)∂_θ) Ê X = Ľ_{v_ζ} Ê X`.
pub fn bpz_cardy_residual<T: Real>(
    beta: &Divisor<T>,
    tau: &Divisor<T>,
    x: T,
    params: &SleParams<T>,
    geometry: Geometry,
) -> Result<Residual<T>> {
    let tau = tau.with_b(cplx(params.b, T::zero()));
    tau.require_neutrality(Neutrality::NC0, T::lit(NEUTRALITY_TOL))?;
    let point = geometry.driving_point(x);
    if tau.charge_at(&point).norm() > T::zero() {
        return Err(Error::Precondition("observable carries charge at the driving point".into()));
    }
    let den = Driven::new(beta, x, params, geometry)?;
    let full = beta
        .with_b(cplx(params.b, T::zero()))
        .with(point, cplx(params.a, T::zero()))
        .add(&tau)?
        .scaled(params.charge_scale());
    let num = Driven::from_full(full, point, geometry.chart())?;
    let (a, _) = params.effective();
    let (n1, n2) = num.derivatives()?;
    let (z1, z2) = den.derivatives()?;
    let (r1, r2) = (n1 - z1, n2 - z2);
    let mut nodes = num.other_nodes();
    for p in den.other_nodes() {
        if !nodes.iter().any(|q| q.same_as(&p)) {
            nodes.push(p);
        }
    }
    let field = loewner_field(geometry, &point);
    let rhs = num.lie(&field, &nodes)? - den.lie(&field, &nodes)?;
    let two = T::lit(2.0);
    let lhs = match geometry {
        Geometry::Chordal => {
            let dz = z1.re;
            (r1 * r1 + r2 + r1 * (dz * two)) / (a * a * two)
        }
        Geometry::Radial => {
            let zeta = point.coord;
            let (t1, t2) = to_theta(zeta, r1, r2);
            let (dz, _) = to_theta(zeta, z1, z2);
            -((t1 * t1 + t2) * T::lit(0.5) + t1 * dz.re) * two / (a * a)
        }
    };
    Ok(Residual::new(lhs, rhs))
}

/// Background charge of chordal SLE(κ,ρ): `β_k = aρ_k/2` at the boundary force
/// points and the balancing charge at `∞` (driving point not included).
pub fn chordal_rho_background<T: Real>(params: &SleParams<T>, force: &[(T, T)]) -> Divisor<T> {
    let mut d = Divisor::with_real_b(params.b);
    let mut total = params.a;
    for &(q, rho) in force {
        let beta = params.rho_to_beta(rho);
        total = total + beta;
        d.push(Point::real(q), cplx(beta, T::zero()));
    }
    let two_b = params.b + params.b;
    d.push(Point::infinity(crate::charges::Side::Boundary), cplx(two_b - total, T::zero()));
    d
}

/// Background charge of radial SLE_η(κ,ρ): charges `aρ_k/2` at `e^{iϑ_k}` and
/// `b − (a + Σβ_k ± iδ)/2` at `0` and `0*`, with spin `δ = ηa` (driving point
/// not included).
pub fn radial_rho_background<T: Real>(params: &SleParams<T>, force: &[(T, T)], eta: T) -> Divisor<T> {
    let mut d = Divisor::with_real_b(params.b);
    let mut sum = T::zero();
    for &(angle, rho) in force {
        let beta = params.rho_to_beta(rho);
        sum = sum + beta;
        d.push(Point::on_circle(angle), cplx(beta, T::zero()));
    }
    let delta = eta * params.a;
    let half = T::lit(0.5);
    let base = params.b - (params.a + sum) * half;
    let zero = Point::interior(cplx(T::zero(), T::zero()));
    d.push(zero, cplx(base, -delta * half));
    d.push(zero.star(ChartContext::DISC), cplx(base, delta * half));
    d
}

/// Explicit SLE(κ,ρ) drift `Σ ρ_k/(ξ − q_k)`.
pub fn rho_drift_chordal<T: Real>(xi: T, force: &[(T, T)]) -> T {
    force.iter().fold(T::zero(), |acc, &(q, rho)| acc + rho / (xi - q))
}

/// Explicit SLE_η(κ,ρ) drift `η + Σ (ρ_k/2) cot((θ − ϑ_k)/2)`.
pub fn rho_drift_radial<T: Real>(theta: T, force: &[(T, T)], eta: T) -> T {
    let half = T::lit(0.5);
    force.iter().fold(eta, |acc, &(v, rho)| acc + rho * half / ((theta - v) * half).tan())
}

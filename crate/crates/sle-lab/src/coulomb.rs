//! Coulomb gas correlation differentials.
//!
//! For a divisor `σ = Σ σ_j·z_j` with background parameter `b` the correlation
//! on the sphere is `C[σ] = Π_{j<k} (z_j − z_k)^{σ_j σ_k}`; every point carries
//! the conformal dimension `λ_b(σ_j) = σ_j²/2 − σ_j b`.  In the half-plane and
//! the disc the double divisor `(σ⁺, σ⁻)` additionally interacts through the
//! cross kernels `z_j − z̄_k` and `1 − z_j z̄_k`.
//!
//! All values are kept in logarithmic form ([`LogCorrelation`]); a charge at
//! infinity contributes its dimension but never a product factor, and factors
//! with a zero exponent are skipped (`0⁰ = 1`).

use crate::charges::{Divisor, DoubleDivisor, Neutrality, Point, Side};
use crate::error::{Error, Result};
use crate::scalar::{cplx, Real};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

/// Tolerance used for the neutrality preconditions.
pub const NEUTRALITY_TOL: f64 = 1e-9;

/// Which uniformization a value is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Uniformization {
    /// The Riemann sphere `ℂ̂`.
    Sphere,
    /// The upper half-plane `ℍ` (with `∞` on the boundary).
    HalfPlane,
    /// The unit disc `𝔻`.
    Disc,
}

/// Chart bookkeeping: the active uniformization; `∞` always uses `z ↦ −1/z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChartContext {
    /// The active uniformization.
    pub uniformization: Uniformization,
}

impl ChartContext {
    /// Identity chart of the sphere.
    pub const SPHERE: Self = Self { uniformization: Uniformization::Sphere };
    /// Identity chart of the upper half-plane.
    pub const HALF_PLANE: Self = Self { uniformization: Uniformization::HalfPlane };
    /// Identity chart of the unit disc.
    pub const DISC: Self = Self { uniformization: Uniformization::Disc };
}

/// Conformal dimensions attached to one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dim<T> {
    pub point: Point<T>,
    /// Holomorphic dimension `λ⁺`.
    pub plus: Complex<T>,
    /// Antiholomorphic dimension `λ⁻`.
    pub minus: Complex<T>,
}

/// A correlation differential in logarithmic form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogCorrelation<T> {
    /// `log |C|`.
    pub log_modulus: T,
    /// Accumulated principal-branch phase (meaningful modulo `2π`).
    pub phase: T,
    /// Dimensions of every point of the input divisor.
    pub dims: Vec<Dim<T>>,
}

impl<T: Real> LogCorrelation<T> {
    fn from_log(log: Complex<T>, dims: Vec<Dim<T>>) -> Self {
        Self { log_modulus: log.re, phase: log.im, dims }
    }

    /// `log_modulus + i·phase`.
    pub fn log_value(&self) -> Complex<T> {
        cplx(self.log_modulus, self.phase)
    }

    /// The correlation value `exp(log C)`.
    pub fn value(&self) -> Complex<T> {
        self.log_value().exp()
    }

    /// Phase reduced to `(-π, π]`.
    pub fn phase_mod_2pi(&self) -> T {
        crate::scalar::wrap_angle(self.phase)
    }

    /// Dimensions recorded for `point`, if any.
    pub fn dim_at(&self, point: &Point<T>) -> Option<&Dim<T>> {
        self.dims.iter().find(|d| d.point.same_as(point))
    }
}

/// The dimension `λ_b(σ) = σ²/2 − σb`.
#[inline]
pub fn lambda_b<T: Real>(sigma: Complex<T>, b: Complex<T>) -> Complex<T> {
    sigma * sigma * T::lit(0.5) - sigma * b
}

fn zero<T: Real>() -> Complex<T> {
    cplx(T::zero(), T::zero())
}

fn is_zero<T: Real>(z: Complex<T>) -> bool {
    z.re == T::zero() && z.im == T::zero()
}

/// Cross interaction between the two layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Cross {
    /// `x − y` (sphere and half-plane).
    Plane,
    /// `1 − x·y` (disc).
    Disc,
}

/// Flattened Coulomb gas: holomorphic variables `x` and antiholomorphic
/// variables `y = z̄` with their charges.  Analytic log-derivatives live here.
#[derive(Debug, Clone)]
pub(crate) struct Gas<T> {
    pub cross: Cross,
    pub x: Vec<Complex<T>>,
    pub sx: Vec<Complex<T>>,
    pub y: Vec<Complex<T>>,
    pub sy: Vec<Complex<T>>,
    /// Charge at infinity (plus layer), contributes only to chart derivatives.
    pub s_inf: Complex<T>,
    /// For every plus entry of the source divisor, its index in `x`.
    pub plus_index: Vec<Option<usize>>,
    /// For every minus entry of the source divisor, its index in `y`.
    pub minus_index: Vec<Option<usize>>,
}

impl<T: Real> Gas<T> {
    pub fn build(dd: &DoubleDivisor<T>, chart: ChartContext) -> Result<Self> {
        let cross = match chart.uniformization {
            Uniformization::Disc => Cross::Disc,
            _ => Cross::Plane,
        };
        if chart.uniformization == Uniformization::Sphere && !dd.minus.is_empty() {
            return Err(Error::Chart("sphere correlations have no minus layer".into()));
        }
        let mut gas = Gas {
            cross,
            x: Vec::new(),
            sx: Vec::new(),
            y: Vec::new(),
            sy: Vec::new(),
            s_inf: zero(),
            plus_index: Vec::new(),
            minus_index: Vec::new(),
        };
        for (p, s) in dd.plus.entries() {
            if p.at_infinity {
                if chart.uniformization == Uniformization::Disc {
                    return Err(Error::Chart("∞ is not a point of the closed disc".into()));
                }
                gas.s_inf = gas.s_inf + *s;
                gas.plus_index.push(None);
            } else {
                gas.plus_index.push(Some(gas.x.len()));
                gas.x.push(p.coord);
                gas.sx.push(*s);
            }
        }
        for (p, s) in dd.minus.entries() {
            if p.at_infinity {
                return Err(Error::Chart("minus layer cannot be supported at ∞".into()));
            }
            gas.minus_index.push(Some(gas.y.len()));
            gas.y.push(p.coord.conj());
            gas.sy.push(*s);
        }
        Ok(gas)
    }

    fn kernel(&self, x: Complex<T>, y: Complex<T>) -> Complex<T> {
        match self.cross {
            Cross::Plane => x - y,
            Cross::Disc => cplx(T::one(), T::zero()) - x * y,
        }
    }

    fn log_factor(diff: Complex<T>, expo: Complex<T>, what: &str) -> Result<Complex<T>> {
        if is_zero(expo) {
            return Ok(zero());
        }
        if diff.norm() == T::zero() {
            return Err(Error::Degenerate(format!("coincident points in {what}")));
        }
        Ok(diff.ln() * expo)
    }

    /// `log C` with principal branches, summed in stored order.
    pub fn log_value(&self) -> Result<Complex<T>> {
        let mut acc = zero();
        for j in 0..self.x.len() {
            for k in j + 1..self.x.len() {
                acc = acc + Self::log_factor(self.x[j] - self.x[k], self.sx[j] * self.sx[k], "plus layer")?;
            }
        }
        for j in 0..self.y.len() {
            for k in j + 1..self.y.len() {
                acc = acc + Self::log_factor(self.y[j] - self.y[k], self.sy[j] * self.sy[k], "minus layer")?;
            }
        }
        for j in 0..self.x.len() {
            for k in 0..self.y.len() {
                acc = acc + Self::log_factor(self.kernel(self.x[j], self.y[k]), self.sx[j] * self.sy[k], "cross term")?;
            }
        }
        Ok(acc)
    }

    fn checked_inv(d: Complex<T>) -> Result<Complex<T>> {
        if d.norm() == T::zero() {
            Err(Error::Degenerate("coincident points in derivative".into()))
        } else {
            Ok(d.inv())
        }
    }

    /// `∂ log C / ∂x_j`.
    pub fn dx(&self, j: usize) -> Result<Complex<T>> {
        let mut acc = zero();
        let sj = self.sx[j];
        if is_zero(sj) {
            return Ok(acc);
        }
        for k in 0..self.x.len() {
            if k != j && !is_zero(self.sx[k]) {
                acc = acc + sj * self.sx[k] * Self::checked_inv(self.x[j] - self.x[k])?;
            }
        }
        for k in 0..self.y.len() {
            if is_zero(self.sy[k]) {
                continue;
            }
            let kx = match self.cross {
                Cross::Plane => cplx(T::one(), T::zero()),
                Cross::Disc => -self.y[k],
            };
            acc = acc + sj * self.sy[k] * kx * Self::checked_inv(self.kernel(self.x[j], self.y[k]))?;
        }
        Ok(acc)
    }

    /// `∂² log C / ∂x_j²`.
    pub fn dxx(&self, j: usize) -> Result<Complex<T>> {
        let mut acc = zero();
        let sj = self.sx[j];
        if is_zero(sj) {
            return Ok(acc);
        }
        for k in 0..self.x.len() {
            if k != j && !is_zero(self.sx[k]) {
                let r = Self::checked_inv(self.x[j] - self.x[k])?;
                acc = acc - sj * self.sx[k] * r * r;
            }
        }
        for k in 0..self.y.len() {
            if is_zero(self.sy[k]) {
                continue;
            }
            let kx = match self.cross {
                Cross::Plane => cplx(T::one(), T::zero()),
                Cross::Disc => -self.y[k],
            };
            let r = kx * Self::checked_inv(self.kernel(self.x[j], self.y[k]))?;
            acc = acc - sj * self.sy[k] * r * r;
        }
        Ok(acc)
    }

    /// `∂ log C / ∂y_k` (derivative in the antiholomorphic variable `z̄_k`).
    pub fn dy(&self, k: usize) -> Result<Complex<T>> {
        let mut acc = zero();
        let sk = self.sy[k];
        if is_zero(sk) {
            return Ok(acc);
        }
        for l in 0..self.y.len() {
            if l != k && !is_zero(self.sy[l]) {
                acc = acc + sk * self.sy[l] * Self::checked_inv(self.y[k] - self.y[l])?;
            }
        }
        for j in 0..self.x.len() {
            if is_zero(self.sx[j]) {
                continue;
            }
            let ky = match self.cross {
                Cross::Plane => cplx(-T::one(), T::zero()),
                Cross::Disc => -self.x[j],
            };
            acc = acc + sk * self.sx[j] * ky * Self::checked_inv(self.kernel(self.x[j], self.y[k]))?;
        }
        Ok(acc)
    }

    /// Derivative of `log C` in the chart `u = −1/z` at a charge sitting at `∞`
    /// (sphere/half-plane only): `σ_∞ Σ_m σ_m m` over all finite nodes.
    pub fn d_inf(&self) -> Complex<T> {
        let mut acc: Complex<T> = zero();
        for (x, s) in self.x.iter().zip(&self.sx) {
            acc = acc + *x * *s;
        }
        for (y, s) in self.y.iter().zip(&self.sy) {
            acc = acc + *y * *s;
        }
        acc * self.s_inf
    }
}

fn dims_of<T: Real>(dd: &DoubleDivisor<T>) -> Vec<Dim<T>> {
    let b = dd.b();
    let mut dims: Vec<Dim<T>> = dd
        .plus
        .entries()
        .iter()
        .map(|(p, s)| Dim { point: *p, plus: lambda_b(*s, b), minus: lambda_b(dd.minus.charge_at(p), b) })
        .collect();
    for (p, s) in dd.minus.entries() {
        if !dims.iter().any(|d| d.point.same_as(p)) {
            dims.push(Dim { point: *p, plus: zero(), minus: lambda_b(*s, b) });
        }
    }
    dims
}

/// Applies the neutrality convention: within tolerance nothing happens;
/// otherwise a warning is emitted and, where `∞` belongs to the closure of the
/// domain, the charge at `∞` is adjusted so that its dimension is consistent.
fn neutralize<T: Real>(dd: &DoubleDivisor<T>, chart: ChartContext) -> DoubleDivisor<T> {
    let deficit = dd.b() + dd.b() - dd.total_charge();
    if deficit.norm() <= T::lit(NEUTRALITY_TOL) {
        return dd.clone();
    }
    log::warn!("divisor violates the neutrality condition by {deficit}; adjusting the charge at ∞");
    let mut out = dd.clone();
    match chart.uniformization {
        Uniformization::Disc => {}
        _ => out.plus.push(Point::infinity(Side::Boundary), deficit),
    }
    out
}

/// Correlation `C_ℂ[σ]` on the Riemann sphere.
pub fn log_correlation_plane<T: Real>(d: &Divisor<T>) -> Result<LogCorrelation<T>> {
    let dd = DoubleDivisor { plus: d.clone(), minus: Divisor::new(d.b()) };
    let gas = Gas::build(&dd, ChartContext::SPHERE)?;
    Ok(LogCorrelation::from_log(gas.log_value()?, dims_of(&dd)))
}

/// Correlation `C_ℍ[σ⁺, σ⁻]` in the identity chart of the upper half-plane.
pub fn correlation_halfplane<T: Real>(dd: &DoubleDivisor<T>) -> Result<LogCorrelation<T>> {
    let dd = neutralize(dd, ChartContext::HALF_PLANE);
    let gas = Gas::build(&dd, ChartContext::HALF_PLANE)?;
    Ok(LogCorrelation::from_log(gas.log_value()?, dims_of(&dd)))
}

/// Correlation `C_𝔻[σ⁺, σ⁻]` in the identity chart of the unit disc.
pub fn correlation_disc<T: Real>(dd: &DoubleDivisor<T>) -> Result<LogCorrelation<T>> {
    let dd = neutralize(dd, ChartContext::DISC);
    let gas = Gas::build(&dd, ChartContext::DISC)?;
    Ok(LogCorrelation::from_log(gas.log_value()?, dims_of(&dd)))
}

/// Correlation of a divisor on the Schottky double (reflected points allowed)
/// in the identity chart of `chart`.
pub fn correlation<T: Real>(d: &Divisor<T>, chart: ChartContext) -> Result<LogCorrelation<T>> {
    match chart.uniformization {
        Uniformization::Sphere => log_correlation_plane(d),
        Uniformization::HalfPlane => correlation_halfplane(&DoubleDivisor::from_double(d, chart)),
        Uniformization::Disc => correlation_disc(&DoubleDivisor::from_double(d, chart)),
    }
}

/// A Möbius map `z ↦ (az + b)/(cz + d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moebius<T> {
    pub a: Complex<T>,
    pub b: Complex<T>,
    pub c: Complex<T>,
    pub d: Complex<T>,
}

impl<T: Real> Moebius<T> {
    /// The identity map.
    pub fn identity() -> Self {
        let one = cplx(T::one(), T::zero());
        Self { a: one, b: zero(), c: zero(), d: one }
    }

    /// `ad − bc`.
    pub fn det(&self) -> Complex<T> {
        self.a * self.d - self.b * self.c
    }

    /// Image of a finite point (`None` when it is sent to `∞`).
    pub fn apply(&self, z: Complex<T>) -> Option<Complex<T>> {
        let den = self.c * z + self.d;
        if den.norm() == T::zero() {
            None
        } else {
            Some((self.a * z + self.b) / den)
        }
    }

    /// Derivative at a finite point.
    pub fn derivative(&self, z: Complex<T>) -> Complex<T> {
        let den = self.c * z + self.d;
        self.det() / (den * den)
    }

    /// Image of a point of the sphere.
    pub fn apply_point(&self, p: &Point<T>) -> Point<T> {
        if p.at_infinity {
            if self.c.norm() == T::zero() {
                *p
            } else {
                Point::new(self.a / self.c, p.side)
            }
        } else {
            match self.apply(p.coord) {
                Some(w) => Point::new(w, p.side),
                None => Point::infinity(p.side),
            }
        }
    }
}

/// Transports a neutral divisor by `τ`: returns `C(τz)·Π τ'(z_j)^{λ_j}` where
/// Jacobians at `∞` are taken in the chart `z ↦ −1/z`.  By Möbius invariance the
/// result equals [`log_correlation_plane`] of `d` (phases modulo `2π`).
///
/// Branches of the individual factors are aligned with the factorization
/// `τz_j − τz_k = (ad−bc)(z_j−z_k)/((cz_j+d)(cz_k+d))`, so that the phase
/// defect is an exact multiple of `2π` for points that stay finite.
pub fn moebius_transport<T: Real>(d: &Divisor<T>, tau: &Moebius<T>) -> Result<LogCorrelation<T>> {
    d.require_neutrality(Neutrality::NCb, T::lit(NEUTRALITY_TOL))?;
    let det = tau.det();
    if det.norm() == T::zero() {
        return Err(Error::Precondition("degenerate Möbius map (ad − bc = 0)".into()));
    }
    let big_l = det.ln();
    let b = d.b();
    let n = d.len();
    // Per entry: image (None = ∞), denominator log, Jacobian log.
    let mut images: Vec<Option<Complex<T>>> = Vec::with_capacity(n);
    let mut dens: Vec<Complex<T>> = Vec::with_capacity(n);
    let mut acc = zero();
    for (p, s) in d.entries() {
        let lam = lambda_b(*s, b);
        if p.at_infinity {
            if tau.c.norm() == T::zero() {
                images.push(None);
                dens.push(zero());
                acc = acc + (tau.d.ln() - tau.a.ln()) * lam;
            } else {
                let lc = tau.c.ln();
                images.push(Some(tau.a / tau.c));
                dens.push(lc);
                acc = acc + (big_l - lc - lc) * lam;
            }
        } else {
            let den = tau.c * p.coord + tau.d;
            if den.norm() <= T::epsilon() * (tau.c.norm() * p.coord.norm() + tau.d.norm()) {
                if tau.c.norm() == T::zero() {
                    return Err(Error::Chart("finite point mapped to ∞ by an affine map".into()));
                }
                images.push(None);
                dens.push(zero());
                let lc = tau.c.ln();
                acc = acc + (lc + lc - big_l) * lam;
            } else {
                let ld = den.ln();
                images.push(Some((tau.a * p.coord + tau.b) / den));
                dens.push(ld);
                acc = acc + (big_l - ld - ld) * lam;
            }
        }
    }
    let two_pi = T::TAU();
    let entries = d.entries();
    for j in 0..n {
        for k in j + 1..n {
            let expo = entries[j].1 * entries[k].1;
            if is_zero(expo) {
                continue;
            }
            let (Some(wj), Some(wk)) = (images[j], images[k]) else { continue };
            let diff = wj - wk;
            if diff.norm() == T::zero() {
                return Err(Error::Degenerate("coincident image points".into()));
            }
            let principal = diff.ln();
            let source = match (entries[j].0.at_infinity, entries[k].0.at_infinity) {
                (false, false) => (entries[j].0.coord - entries[k].0.coord).ln(),
                (true, _) => zero(),
                (false, true) => cplx(T::zero(), T::PI()),
            };
            let guess = source + big_l - dens[j] - dens[k];
            let turns = ((guess.im - principal.im) / two_pi).round();
            acc = acc + (principal + cplx(T::zero(), turns * two_pi)) * expo;
        }
    }
    Ok(LogCorrelation::from_log(acc, dims_of(&DoubleDivisor { plus: d.clone(), minus: Divisor::new(b) })))
}

/// OPE exponential expectation `E 𝒪_β[τ] = C[β + τ] / C[β]`.
///
/// `beta` must satisfy `NC_b` and `tau` must satisfy `NC0`; coincident points
/// merge their charges in the numerator.  Dimensions are
/// `λ_b(β_j + τ_j) − λ_b(β_j)` on each layer.
pub fn expectation_vertex<T: Real>(
    beta: &Divisor<T>,
    tau: &Divisor<T>,
    chart: ChartContext,
) -> Result<LogCorrelation<T>> {
    let tol = T::lit(NEUTRALITY_TOL);
    beta.require_neutrality(Neutrality::NCb, tol)?;
    tau.require_neutrality(Neutrality::NC0, tol)?;
    let sum = beta.add(tau)?;
    let num = correlation(&sum, chart)?;
    let den = correlation(beta, chart)?;
    let dims = num
        .dims
        .iter()
        .map(|dn| {
            let (p0, m0) = den.dim_at(&dn.point).map(|d| (d.plus, d.minus)).unwrap_or((zero(), zero()));
            Dim { point: dn.point, plus: dn.plus - p0, minus: dn.minus - m0 }
        })
        .collect();
    Ok(LogCorrelation::from_log(num.log_value() - den.log_value(), dims))
}

/// A holomorphic vector field acting on differentials by Lie derivatives.
#[derive(Debug, Clone, PartialEq)]
pub enum VectorField<T> {
    /// `v ≡ 0`.
    Zero,
    /// Chordal Loewner field `k_ξ(z) = 1/(ξ − z)`.
    Chordal { xi: T },
    /// Radial Loewner field `v_ζ(z) = z(ζ + z)/(ζ − z)`.
    Radial { zeta: Complex<T> },
    /// Rational field `N(z)/D(z)`, coefficients in ascending powers.
    Rational { num: Vec<Complex<T>>, den: Vec<Complex<T>> },
}

fn poly_eval<T: Real>(c: &[Complex<T>], z: Complex<T>) -> (Complex<T>, Complex<T>) {
    let mut p = zero();
    let mut dp = zero();
    for coef in c.iter().rev() {
        dp = dp * z + p;
        p = p * z + *coef;
    }
    (p, dp)
}

impl<T: Real> VectorField<T> {
    /// `(v(z), v'(z))` at a finite point.
    pub fn eval(&self, z: Complex<T>) -> Result<(Complex<T>, Complex<T>)> {
        let pole = || Error::Pole(format!("vector field singular at {z}"));
        match self {
            Self::Zero => Ok((zero(), zero())),
            Self::Chordal { xi } => {
                let d = cplx(*xi, T::zero()) - z;
                if d.norm() == T::zero() {
                    return Err(pole());
                }
                let r = d.inv();
                Ok((r, r * r))
            }
            Self::Radial { zeta } => {
                let d = *zeta - z;
                if d.norm() == T::zero() {
                    return Err(pole());
                }
                let r = d.inv();
                let two = T::lit(2.0);
                let z2 = *zeta * *zeta;
                // v = 2ζ²/(ζ−z) − 2ζ − z, v' = 2ζ²/(ζ−z)² − 1.
                Ok((z2 * r * two - *zeta * two - z, z2 * r * r * two - cplx(T::one(), T::zero())))
            }
            Self::Rational { num, den } => {
                let (n, dn) = poly_eval(num, z);
                let (d, dd) = poly_eval(den, z);
                if d.norm() == T::zero() {
                    return Err(pole());
                }
                Ok((n / d, (dn * d - n * dd) / (d * d)))
            }
        }
    }

    /// `(ṽ(0), ṽ'(0))` for the field expressed in the chart `u = −1/z` at `∞`,
    /// `ṽ(u) = u² v(−1/u)`; an error if the field has a pole at `∞`.
    pub fn at_infinity(&self) -> Result<(Complex<T>, Complex<T>)> {
        match self {
            Self::Zero | Self::Chordal { .. } => Ok((zero(), zero())),
            Self::Radial { .. } => Ok((zero(), cplx(T::one(), T::zero()))),
            Self::Rational { num, den } => {
                let degree = |c: &[Complex<T>]| c.iter().rposition(|x| !is_zero(*x));
                let (Some(dn), Some(dd)) = (degree(num), degree(den)) else {
                    return if degree(den).is_none() {
                        Err(Error::Pole("zero denominator".into()))
                    } else {
                        Ok((zero(), zero()))
                    };
                };
                // N(−1/u) = u^{−dn} Ñ(u) with Ñ(u) = Σ N_k (−1)^k u^{dn−k}.
                let flip = |c: &[Complex<T>], deg: usize| -> Vec<Complex<T>> {
                    (0..=deg)
                        .map(|m| {
                            let k = deg - m;
                            if k.is_multiple_of(2) {
                                c[k]
                            } else {
                                -c[k]
                            }
                        })
                        .collect()
                };
                let nt = flip(num, dn);
                let dt = flip(den, dd);
                let e = 2 + dd as i64 - dn as i64;
                if e < 0 {
                    return Err(Error::Pole("vector field has a pole at ∞".into()));
                }
                let (n0, n1) = (nt[0], if nt.len() > 1 { nt[1] } else { zero() });
                let (d0, d1) = (dt[0], if dt.len() > 1 { dt[1] } else { zero() });
                let r0 = n0 / d0;
                let r1 = (n1 * d0 - n0 * d1) / (d0 * d0);
                Ok(match e {
                    0 => (r0, r1),
                    1 => (zero(), r0),
                    _ => (zero(), zero()),
                })
            }
        }
    }
}

/// `(L_v C)/C` for the correlation of `dd`, with the Lie derivative acting only
/// at the listed `nodes`:
/// `Σ_j [v(z_j) ∂_j log C + λ_j⁺ v'(z_j) + conj(v(z_j)) ∂̄_j log C + λ_j⁻ conj(v'(z_j))]`.
pub fn lie_derivative_log<T: Real>(
    v: &VectorField<T>,
    dd: &DoubleDivisor<T>,
    chart: ChartContext,
    nodes: &[Point<T>],
) -> Result<Complex<T>> {
    let gas = Gas::build(dd, chart)?;
    lie_derivative_gas(v, &gas, dd, nodes)
}

pub(crate) fn lie_derivative_gas<T: Real>(
    v: &VectorField<T>,
    gas: &Gas<T>,
    dd: &DoubleDivisor<T>,
    nodes: &[Point<T>],
) -> Result<Complex<T>> {
    let b = dd.b();
    let mut acc = zero();
    for node in nodes {
        if let Some(i) = dd.plus.entries().iter().position(|(p, _)| p.same_as(node)) {
            let (p, s) = dd.plus.entries()[i];
            let lam = lambda_b(s, b);
            if p.at_infinity {
                let (w0, w1) = v.at_infinity()?;
                if !is_zero(w0) {
                    acc = acc + w0 * gas.d_inf();
                }
                acc = acc + w1 * lam;
            } else {
                let (vz, vp) = v.eval(p.coord)?;
                let j = gas.plus_index[i].expect("finite plus point indexed");
                acc = acc + vz * gas.dx(j)? + vp * lam;
            }
        }
        if let Some(i) = dd.minus.entries().iter().position(|(p, _)| p.same_as(node)) {
            let (p, s) = dd.minus.entries()[i];
            let lam = lambda_b(s, b);
            let (vz, vp) = v.eval(p.coord)?;
            let k = gas.minus_index[i].expect("finite minus point indexed");
            acc = acc + vz.conj() * gas.dy(k)? + vp.conj() * lam;
        }
    }
    Ok(acc)
}

/// All points of a double divisor (union of both layers, plus layer first).
pub fn support<T: Real>(dd: &DoubleDivisor<T>) -> Vec<Point<T>> {
    let mut pts: Vec<Point<T>> = dd.plus.entries().iter().map(|e| e.0).collect();
    for (p, _) in dd.minus.entries() {
        if !pts.iter().any(|q| q.same_as(p)) {
            pts.push(*p);
        }
    }
    pts
}

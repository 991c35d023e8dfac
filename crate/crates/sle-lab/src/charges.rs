//! Divisors: finite point-charge assignments on the Schottky double of the
//! upper half-plane or the unit disc.
//!
//! A [`Divisor`] is an ordered list of `(point, charge)` pairs together with the
//! background parameter `b`.  Points of the double are tagged with a [`Side`]:
//! boundary points are fixed by the involution `z ↦ z*`, interior points live in
//! the domain and reflected points are their mirror images.  A
//! [`DoubleDivisor`] is the same data split into the pair `(σ⁺, σ⁻)` with both
//! layers expressed at points of the closed domain.

use crate::coulomb::{ChartContext, Uniformization};
use crate::error::{Error, Result};
use crate::scalar::{cplx, Real};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

/// Distance below which two coordinates denote the same point.
pub const POINT_TOL: f64 = 1e-12;

/// Position of a point relative to the domain inside the Schottky double.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// On the boundary (fixed by the involution).
    Boundary,
    /// Inside the domain.
    Interior,
    /// Inside the mirror copy of the domain.
    Reflected,
}

/// A point of the Riemann sphere / Schottky double.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point<T> {
    /// Coordinate in the ambient uniformization (ignored at infinity).
    pub coord: Complex<T>,
    /// The point is `∞`, evaluated in the chart `z ↦ −1/z`.
    pub at_infinity: bool,
    /// Position relative to the domain.
    pub side: Side,
}

impl<T: Real> Point<T> {
    /// A finite point with the given side tag.
    pub fn new(coord: Complex<T>, side: Side) -> Self {
        Self { coord, at_infinity: false, side }
    }

    /// A finite interior point.
    pub fn interior(coord: Complex<T>) -> Self {
        Self::new(coord, Side::Interior)
    }

    /// A finite reflected point.
    pub fn reflected(coord: Complex<T>) -> Self {
        Self::new(coord, Side::Reflected)
    }

    /// A point on the real line (boundary of the half-plane).
    pub fn real(x: T) -> Self {
        Self::new(cplx(x, T::zero()), Side::Boundary)
    }

    /// The boundary point `e^{iθ}` of the unit disc.
    pub fn on_circle(theta: T) -> Self {
        Self::new(Complex::from_polar(T::one(), theta), Side::Boundary)
    }

    /// The point at infinity with the given side tag.
    pub fn infinity(side: Side) -> Self {
        Self { coord: Complex::new(T::zero(), T::zero()), at_infinity: true, side }
    }

    /// Point identity: both at infinity, or finite coordinates within [`POINT_TOL`].
    pub fn same_as(&self, other: &Self) -> bool {
        match (self.at_infinity, other.at_infinity) {
            (true, true) => true,
            (false, false) => (self.coord - other.coord).norm() <= T::lit(POINT_TOL),
            _ => false,
        }
    }

    /// Image under the canonical involution of the given uniformization.
    pub fn star(&self, chart: ChartContext) -> Self {
        let side = match self.side {
            Side::Boundary => Side::Boundary,
            Side::Interior => Side::Reflected,
            Side::Reflected => Side::Interior,
        };
        match chart.uniformization {
            Uniformization::Disc => {
                if self.at_infinity {
                    Self::new(Complex::new(T::zero(), T::zero()), side)
                } else if self.coord.norm_sqr() == T::zero() {
                    Self::infinity(side)
                } else {
                    Self::new(self.coord.conj().inv(), side)
                }
            }
            _ => {
                if self.at_infinity {
                    Self::infinity(side)
                } else {
                    Self::new(self.coord.conj(), side)
                }
            }
        }
    }

    /// Checks the boundary invariant of the point for the given chart.
    pub fn validate(&self, chart: ChartContext) -> Result<()> {
        if self.side != Side::Boundary || self.at_infinity {
            return Ok(());
        }
        let tol = T::lit(POINT_TOL);
        let ok = match chart.uniformization {
            Uniformization::HalfPlane => self.coord.im.abs() <= tol,
            Uniformization::Disc => (self.coord.norm() - T::one()).abs() <= tol,
            Uniformization::Sphere => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Chart(format!("boundary point {:?} is off the boundary", self.coord)))
        }
    }
}

/// Which total charge a neutrality check targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Neutrality {
    /// Total charge zero.
    NC0,
    /// Total charge `2b`.
    NCb,
}

/// Ordered point-charge assignment with a background parameter `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Divisor<T> {
    entries: Vec<(Point<T>, Complex<T>)>,
    b: Complex<T>,
}

impl<T: Real> Divisor<T> {
    /// The empty divisor with background parameter `b`.
    pub fn new(b: Complex<T>) -> Self {
        Self { entries: Vec::new(), b }
    }

    /// The empty divisor with a real background parameter.
    pub fn with_real_b(b: T) -> Self {
        Self::new(cplx(b, T::zero()))
    }

    /// Builds a divisor from entries, merging coincident points.
    pub fn from_entries(b: Complex<T>, entries: impl IntoIterator<Item = (Point<T>, Complex<T>)>) -> Self {
        let mut d = Self::new(b);
        for (p, s) in entries {
            d.push(p, s);
        }
        d
    }

    /// Builder form of [`Divisor::push`].
    pub fn with(mut self, point: Point<T>, charge: Complex<T>) -> Self {
        self.push(point, charge);
        self
    }

    /// Builder form with a real charge.
    pub fn with_real(self, point: Point<T>, charge: T) -> Self {
        self.with(point, cplx(charge, T::zero()))
    }

    /// Adds `charge` at `point`; a coincident existing entry absorbs the charge.
    pub fn push(&mut self, point: Point<T>, charge: Complex<T>) {
        if let Some(e) = self.entries.iter_mut().find(|(p, _)| p.same_as(&point)) {
            e.1 = e.1 + charge;
        } else {
            self.entries.push((point, charge));
        }
    }

    /// The entries in stored order.
    pub fn entries(&self) -> &[(Point<T>, Complex<T>)] {
        &self.entries
    }

    /// Number of entries (zero charges included).
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// True if there are no entries.
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Background parameter.
    pub fn b(&self) -> Complex<T> {
        self.b
    }

    /// Charge carried at `point` (zero if absent).
    pub fn charge_at(&self, point: &Point<T>) -> Complex<T> {
        self.entries
            .iter()
            .find(|(p, _)| p.same_as(point))
            .map(|e| e.1)
            .unwrap_or_else(|| cplx(T::zero(), T::zero()))
    }

    /// Exact sum of all charges, including a charge at infinity.
    pub fn total_charge(&self) -> Complex<T> {
        self.entries.iter().fold(cplx(T::zero(), T::zero()), |acc, e| acc + e.1)
    }

    /// Neutrality test: `|total − target| ≤ tol`.
    pub fn check_neutrality(&self, level: Neutrality, tol: T) -> bool {
        let target = match level {
            Neutrality::NC0 => cplx(T::zero(), T::zero()),
            Neutrality::NCb => self.b + self.b,
        };
        (self.total_charge() - target).norm() <= tol
    }

    /// Like [`Divisor::check_neutrality`] but returns a descriptive error.
    pub fn require_neutrality(&self, level: Neutrality, tol: T) -> Result<()> {
        if self.check_neutrality(level, tol) {
            return Ok(());
        }
        let target = match level {
            Neutrality::NC0 => cplx(T::zero(), T::zero()),
            Neutrality::NCb => self.b + self.b,
        };
        Err(Error::Neutrality {
            total: format!("{}", self.total_charge()),
            target: format!("{target}"),
        })
    }

    /// Sum of two divisors; both must carry the same background parameter.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if (self.b - other.b).norm() > T::lit(POINT_TOL) {
            return Err(Error::MixedBackground(format!("{}", self.b), format!("{}", other.b)));
        }
        let mut out = self.clone();
        for (p, s) in &other.entries {
            out.push(*p, *s);
        }
        Ok(out)
    }

    /// Multiplies every charge and the background parameter by `factor`.
    pub fn scaled(&self, factor: Complex<T>) -> Self {
        Self {
            entries: self.entries.iter().map(|(p, s)| (*p, *s * factor)).collect(),
            b: self.b * factor,
        }
    }

    /// Same divisor with a different background parameter.
    pub fn with_b(&self, b: Complex<T>) -> Self {
        Self { entries: self.entries.clone(), b }
    }

    /// Image under the involution of the chart; charges unchanged.
    pub fn star(&self, chart: ChartContext) -> Self {
        Self {
            entries: self.entries.iter().map(|(p, s)| (p.star(chart), *s)).collect(),
            b: self.b,
        }
    }

    /// Is the divisor equal to the charge-conjugate of its star image?
    pub fn symmetrize_check(&self, chart: ChartContext, tol: T) -> bool {
        let starred = self.star(chart);
        let covers = |a: &Self, b: &Self| {
            a.entries.iter().all(|(p, s)| {
                let partner = b.charge_at(p).conj();
                (partner - *s).norm() <= tol
            })
        };
        covers(self, &starred) && covers(&starred, self)
    }

    /// Checks point invariants (distinctness, boundary placement).
    pub fn validate(&self, chart: ChartContext) -> Result<()> {
        for (i, (p, _)) in self.entries.iter().enumerate() {
            p.validate(chart)?;
            if self.entries[..i].iter().any(|(q, _)| q.same_as(p)) {
                return Err(Error::Degenerate(format!("repeated point {:?}", p.coord)));
            }
        }
        Ok(())
    }
}

/// The pair `(σ⁺, σ⁻)`, both layers supported in the closed domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleDivisor<T> {
    /// Holomorphic layer (domain and boundary).
    pub plus: Divisor<T>,
    /// Antiholomorphic layer (domain only).
    pub minus: Divisor<T>,
}

impl<T: Real> DoubleDivisor<T> {
    /// Builds a double divisor, rejecting boundary support in the minus layer.
    pub fn new(plus: Divisor<T>, minus: Divisor<T>) -> Result<Self> {
        if (plus.b() - minus.b()).norm() > T::lit(POINT_TOL) {
            return Err(Error::MixedBackground(format!("{}", plus.b()), format!("{}", minus.b())));
        }
        if let Some((p, _)) = minus.entries().iter().find(|(p, _)| p.side == Side::Boundary) {
            return Err(Error::Precondition(format!(
                "boundary point {:?} carries a minus charge",
                p.coord
            )));
        }
        Ok(Self { plus, minus })
    }

    /// Splits a divisor on the Schottky double: reflected entries become minus
    /// charges at their mirror points in the domain.
    pub fn from_double(d: &Divisor<T>, chart: ChartContext) -> Self {
        let mut plus = Divisor::new(d.b());
        let mut minus = Divisor::new(d.b());
        for (p, s) in d.entries() {
            if p.side == Side::Reflected {
                minus.push(p.star(chart), *s);
            } else {
                plus.push(*p, *s);
            }
        }
        Self { plus, minus }
    }

    /// Inverse of [`DoubleDivisor::from_double`].
    pub fn to_double(&self, chart: ChartContext) -> Divisor<T> {
        let mut d = self.plus.clone();
        for (p, s) in self.minus.entries() {
            d.push(p.star(chart), *s);
        }
        d
    }

    /// Total charge of both layers.
    pub fn total_charge(&self) -> Complex<T> {
        self.plus.total_charge() + self.minus.total_charge()
    }

    /// Background parameter.
    pub fn b(&self) -> Complex<T> {
        self.plus.b()
    }
}

/// Serializable form of one divisor entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryRecord {
    pub re: f64,
    pub im: f64,
    #[serde(default)]
    pub at_infinity: bool,
    pub side: Side,
    pub charge_re: f64,
    #[serde(default)]
    pub charge_im: f64,
}

/// Serializable form of a divisor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivisorRecord {
    pub b_re: f64,
    #[serde(default)]
    pub b_im: f64,
    #[serde(default)]
    pub entries: Vec<EntryRecord>,
}

impl From<&Divisor<f64>> for DivisorRecord {
    fn from(d: &Divisor<f64>) -> Self {
        Self {
            b_re: d.b().re,
            b_im: d.b().im,
            entries: d
                .entries()
                .iter()
                .map(|(p, s)| EntryRecord {
                    re: p.coord.re,
                    im: p.coord.im,
                    at_infinity: p.at_infinity,
                    side: p.side,
                    charge_re: s.re,
                    charge_im: s.im,
                })
                .collect(),
        }
    }
}

impl DivisorRecord {
    /// Converts to a divisor over `T` (entries kept in order; duplicates merged).
    pub fn to_divisor<T: Real>(&self) -> Divisor<T> {
        let mut d = Divisor::new(cplx(T::lit(self.b_re), T::lit(self.b_im)));
        for e in &self.entries {
            let point = if e.at_infinity {
                Point::infinity(e.side)
            } else {
                Point::new(cplx(T::lit(e.re), T::lit(e.im)), e.side)
            };
            d.push(point, cplx(T::lit(e.charge_re), T::lit(e.charge_im)));
        }
        d
    }
}

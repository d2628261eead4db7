//! Exact numbers of the form `p + q·√d` with rational `p`, `q`, `d`.
//!
//! Roots of the quadratic positivity constraints that show up for surfaces
//! live here. Comparisons are exact whenever both operands share a radicand
//! (or one of them is rational), which is always the case for the roots of a
//! single quadratic intersected with linear constraints.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

/// `rational + coeff * sqrt(radicand)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuadSurd {
    pub rational: Rational,
    pub coeff: Rational,
    pub radicand: Rational,
}

impl QuadSurd {
    pub fn from_rational(r: Rational) -> Self {
        QuadSurd {
            rational: r,
            coeff: Rational::zero(),
            radicand: Rational::zero(),
        }
    }

    pub fn from_integer(n: i64) -> Self {
        Self::from_rational(Rational::from_integer(BigInt::from(n)))
    }

    pub fn zero() -> Self {
        Self::from_integer(0)
    }

    /// Builds `p + q√d`, folding perfect-square radicands back into the rational part.
    pub fn new(p: Rational, q: Rational, d: Rational) -> Self {
        assert!(!d.is_negative(), "negative radicand");
        if q.is_zero() || d.is_zero() {
            return Self::from_rational(p);
        }
        if let Some(root) = rational_sqrt(&d) {
            return Self::from_rational(p + q * root);
        }
        QuadSurd {
            rational: p,
            coeff: q,
            radicand: d,
        }
    }

    pub fn is_rational(&self) -> bool {
        self.coeff.is_zero()
    }

    pub fn as_rational(&self) -> Option<&Rational> {
        self.is_rational().then_some(&self.rational)
    }

    pub fn to_f64(&self) -> f64 {
        let p = self.rational.to_f64().unwrap_or(f64::NAN);
        if self.is_rational() {
            return p;
        }
        let q = self.coeff.to_f64().unwrap_or(f64::NAN);
        let d = self.radicand.to_f64().unwrap_or(f64::NAN);
        p + q * d.sqrt()
    }

    /// Exact sign of `self`.
    pub fn signum(&self) -> Ordering {
        sign_of(&self.rational, &self.coeff, &self.radicand)
    }

    fn sub_same_radicand(&self, other: &QuadSurd) -> Option<QuadSurd> {
        if self.is_rational() || other.is_rational() || self.radicand == other.radicand {
            let d = if self.is_rational() {
                other.radicand.clone()
            } else {
                self.radicand.clone()
            };
            Some(QuadSurd {
                rational: &self.rational - &other.rational,
                coeff: &self.coeff - &other.coeff,
                radicand: d,
            })
        } else {
            None
        }
    }
}

fn sign_of(a: &Rational, b: &Rational, d: &Rational) -> Ordering {
    let sa = a.signum();
    if b.is_zero() || d.is_zero() {
        return sa.cmp(&Rational::zero());
    }
    let sb = b.signum();
    if a.is_zero() {
        return sb.cmp(&Rational::zero());
    }
    if sa == sb {
        return sa.cmp(&Rational::zero());
    }
    // Opposite signs: whichever has the larger square wins.
    let lhs = a * a;
    let rhs = b * b * d;
    match lhs.cmp(&rhs) {
        Ordering::Greater => sa.cmp(&Rational::zero()),
        Ordering::Less => sb.cmp(&Rational::zero()),
        Ordering::Equal => Ordering::Equal,
    }
}

/// Exact square root of a nonnegative rational when it is a perfect square.
pub fn rational_sqrt(r: &Rational) -> Option<Rational> {
    if r.is_negative() {
        return None;
    }
    let n = r.numer().sqrt();
    let d = r.denom().sqrt();
    if &(&n * &n) == r.numer() && &(&d * &d) == r.denom() {
        Some(Rational::new(n, d))
    } else {
        None
    }
}

impl PartialOrd for QuadSurd {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.sub_same_radicand(other) {
            Some(diff) => Some(diff.signum()),
            None => self.to_f64().partial_cmp(&other.to_f64()),
        }
    }
}

impl fmt::Display for QuadSurd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_rational() {
            return write!(f, "{}", self.rational);
        }
        if self.rational.is_zero() {
            write!(f, "{}·√{}", self.coeff, self.radicand)
        } else if self.coeff.is_negative() {
            write!(f, "{} - {}·√{}", self.rational, -&self.coeff, self.radicand)
        } else {
            write!(f, "{} + {}·√{}", self.rational, self.coeff, self.radicand)
        }
    }
}

/// A point of the extended half-line `[0, +∞]`, or more generally of `ℝ ∪ {±∞}`.
#[derive(Clone, Debug, PartialEq)]
pub enum ExtendedReal {
    NegInfinity,
    Finite(QuadSurd),
    Infinity,
}

impl ExtendedReal {
    pub fn finite_rational(r: Rational) -> Self {
        ExtendedReal::Finite(QuadSurd::from_rational(r))
    }

    pub fn is_infinite(&self) -> bool {
        !matches!(self, ExtendedReal::Finite(_))
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            ExtendedReal::NegInfinity => f64::NEG_INFINITY,
            ExtendedReal::Finite(s) => s.to_f64(),
            ExtendedReal::Infinity => f64::INFINITY,
        }
    }

    pub fn as_rational(&self) -> Option<&Rational> {
        match self {
            ExtendedReal::Finite(s) => s.as_rational(),
            _ => None,
        }
    }
}

impl PartialOrd for ExtendedReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        use ExtendedReal::*;
        match (self, other) {
            (NegInfinity, NegInfinity) | (Infinity, Infinity) => Some(Ordering::Equal),
            (NegInfinity, _) | (_, Infinity) => Some(Ordering::Less),
            (_, NegInfinity) | (Infinity, _) => Some(Ordering::Greater),
            (Finite(a), Finite(b)) => a.partial_cmp(b),
        }
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedReal::NegInfinity => write!(f, "-inf"),
            ExtendedReal::Finite(s) => write!(f, "{s}"),
            ExtendedReal::Infinity => write!(f, "+inf"),
        }
    }
}

/// Real roots of `a + b·x + c·x²` in increasing order (exact).
pub(crate) fn quadratic_roots(a: &Rational, b: &Rational, c: &Rational) -> Vec<QuadSurd> {
    if c.is_zero() {
        if b.is_zero() {
            return Vec::new();
        }
        return vec![QuadSurd::from_rational(-a / b)];
    }
    let disc = b * b - Rational::from_integer(4.into()) * a * c;
    if disc.is_negative() {
        return Vec::new();
    }
    let two_c = c * Rational::from_integer(2.into());
    let p = -b / &two_c;
    let q = Rational::one() / &two_c;
    if disc.is_zero() {
        return vec![QuadSurd::from_rational(p)];
    }
    let lo = QuadSurd::new(p.clone(), -q.clone(), disc.clone());
    let hi = QuadSurd::new(p, q, disc);
    if lo <= hi {
        vec![lo, hi]
    } else {
        vec![hi, lo]
    }
}

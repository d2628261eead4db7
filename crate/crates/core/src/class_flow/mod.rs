//! Cohomology-class dynamics of the conical flow.
//!
//! On the level of classes the flow is linear: the unnormalized flow moves
//! `[ω₀]` along `-t·(c₁ − Σ(1−βᵢ)[Dᵢ])` and the normalized flow relaxes it
//! exponentially toward `−c₁ + Σ(1−βᵢ)[Dᵢ]`. Everything here is exact rational
//! arithmetic; cone angles enter as the exact dyadic value of their `f64`.
//!
//! Degrees on a curve are stored in *algebraic* units: `deg c₁(ℙ¹) = 2`, a
//! point has degree 1. Multiply by `2π` to obtain areas (Gauss–Bonnet
//! normalization `∫ Ric = 2πχ`).

mod surd;

use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use surd::{ExtendedReal, QuadSurd, Rational};
use surd::quadratic_roots;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassError {
    #[error("positivity is ambiguous: no curve classes were declared for a surface")]
    AmbiguousPositivity,
    #[error("no δ > 0 makes L − δE positive against the declared data")]
    EmptyRange,
    #[error("cone angle β = {0} is outside (0, 1)")]
    InvalidBeta(f64),
    #[error("value {0} is not a finite real")]
    NotFinite(f64),
    #[error("classes live on different spaces")]
    Mismatch,
    #[error("the initial class [ω₀] is not positive")]
    InitialNotPositive,
    #[error("the class is not big")]
    NotBig,
    #[error("the divisor E must be a nonzero class")]
    ZeroDivisor,
    #[error("maximal existence time is defined for the unnormalized flow only")]
    ModeMismatch,
}

/// Unnormalized (`∂ω = −Ric + 2π Σ(1−βᵢ)[Dᵢ]`) or normalized (`… − ω`) flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowMode {
    Unnormalized,
    Normalized,
}

/// Intersection form on a surface: classes are coordinate vectors in a fixed
/// basis of divisor classes, `gram` is the intersection matrix, and `curves`
/// are the declared curve classes positivity is tested against.
#[derive(Clone, Debug, PartialEq)]
pub struct IntersectionLattice {
    gram: Vec<Vec<Rational>>,
    curves: Vec<Vec<Rational>>,
}

impl IntersectionLattice {
    pub fn new(gram: Vec<Vec<Rational>>, curves: Vec<Vec<Rational>>) -> Arc<Self> {
        let m = gram.len();
        assert!(gram.iter().all(|row| row.len() == m), "gram matrix must be square");
        for i in 0..m {
            for j in 0..i {
                assert_eq!(gram[i][j], gram[j][i], "gram matrix must be symmetric");
            }
        }
        assert!(curves.iter().all(|c| c.len() == m), "curve coordinates must match the basis");
        Arc::new(IntersectionLattice { gram, curves })
    }

    pub fn rank(&self) -> usize {
        self.gram.len()
    }

    pub fn dot(&self, a: &[Rational], b: &[Rational]) -> Rational {
        let mut acc = Rational::zero();
        for (i, ai) in a.iter().enumerate() {
            if ai.is_zero() {
                continue;
            }
            for (j, bj) in b.iter().enumerate() {
                acc += ai * &self.gram[i][j] * bj;
            }
        }
        acc
    }

    pub fn curves(&self) -> &[Vec<Rational>] {
        &self.curves
    }
}

/// A real (1,1)-class on a compact complex manifold of dimension 1 or 2.
#[derive(Clone, Debug, PartialEq)]
pub enum CohomClass {
    /// Complex dimension 1: a single degree, in units of `2π` of area.
    Curve { degree: Rational },
    /// Complex dimension 2: coordinates against the lattice basis.
    Surface {
        lattice: Arc<IntersectionLattice>,
        coords: Vec<Rational>,
    },
}

impl CohomClass {
    pub fn degree(degree: Rational) -> Self {
        CohomClass::Curve { degree }
    }

    pub fn degree_i(n: i64) -> Self {
        CohomClass::Curve {
            degree: int(n),
        }
    }

    /// Degree from a real area, `area / 2π`, rationalized exactly from its `f64`.
    pub fn from_area(area: f64) -> Result<Self, ClassError> {
        Ok(CohomClass::Curve {
            degree: exact(area / std::f64::consts::TAU)?,
        })
    }

    pub fn surface(lattice: Arc<IntersectionLattice>, coords: Vec<Rational>) -> Self {
        assert_eq!(coords.len(), lattice.rank());
        CohomClass::Surface { lattice, coords }
    }

    pub fn dim(&self) -> u32 {
        match self {
            CohomClass::Curve { .. } => 1,
            CohomClass::Surface { .. } => 2,
        }
    }

    pub fn zero_like(&self) -> Self {
        self.scale(&Rational::zero())
    }

    pub fn is_zero(&self) -> bool {
        match self {
            CohomClass::Curve { degree } => degree.is_zero(),
            CohomClass::Surface { coords, .. } => coords.iter().all(Zero::is_zero),
        }
    }

    pub fn scale(&self, s: &Rational) -> Self {
        match self {
            CohomClass::Curve { degree } => CohomClass::Curve {
                degree: degree * s,
            },
            CohomClass::Surface { lattice, coords } => CohomClass::Surface {
                lattice: lattice.clone(),
                coords: coords.iter().map(|c| c * s).collect(),
            },
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, ClassError> {
        self.combine(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, ClassError> {
        self.combine(other, |a, b| a - b)
    }

    fn combine(
        &self,
        other: &Self,
        op: impl Fn(&Rational, &Rational) -> Rational,
    ) -> Result<Self, ClassError> {
        match (self, other) {
            (CohomClass::Curve { degree: a }, CohomClass::Curve { degree: b }) => {
                Ok(CohomClass::Curve { degree: op(a, b) })
            }
            (
                CohomClass::Surface { lattice, coords: a },
                CohomClass::Surface {
                    lattice: l2,
                    coords: b,
                },
            ) if Arc::ptr_eq(lattice, l2) || **lattice == **l2 => Ok(CohomClass::Surface {
                lattice: lattice.clone(),
                coords: a.iter().zip(b).map(|(x, y)| op(x, y)).collect(),
            }),
            _ => Err(ClassError::Mismatch),
        }
    }

    /// `∫_M c^n`: the degree for curves, `c·c` for surfaces.
    pub fn top_intersection(&self) -> Rational {
        match self {
            CohomClass::Curve { degree } => degree.clone(),
            CohomClass::Surface { lattice, coords } => lattice.dot(coords, coords),
        }
    }

    /// Intersection pairing of two classes on a surface.
    pub fn dot(&self, other: &Self) -> Result<Rational, ClassError> {
        match (self, other) {
            (
                CohomClass::Surface { lattice, coords: a },
                CohomClass::Surface { coords: b, .. },
            ) => Ok(lattice.dot(a, b)),
            _ => Err(ClassError::Mismatch),
        }
    }

    /// Area `2π·deg` for a curve class, as a float.
    pub fn area(&self) -> f64 {
        match self {
            CohomClass::Curve { degree } => std::f64::consts::TAU * to_f64(degree),
            CohomClass::Surface { .. } => f64::NAN,
        }
    }

    pub fn degree_value(&self) -> Option<&Rational> {
        match self {
            CohomClass::Curve { degree } => Some(degree),
            CohomClass::Surface { .. } => None,
        }
    }

    fn declared_pairings(&self, curves: &[CohomClass]) -> Result<Vec<Rational>, ClassError> {
        match self {
            CohomClass::Curve { .. } => Ok(Vec::new()),
            CohomClass::Surface { lattice, coords } => {
                if curves.is_empty() {
                    return Err(ClassError::AmbiguousPositivity);
                }
                curves
                    .iter()
                    .map(|c| match c {
                        CohomClass::Surface { coords: cc, .. } => Ok(lattice.dot(coords, cc)),
                        _ => Err(ClassError::Mismatch),
                    })
                    .collect()
            }
        }
    }

    fn lattice_curves(&self) -> Vec<CohomClass> {
        match self {
            CohomClass::Curve { .. } => Vec::new(),
            CohomClass::Surface { lattice, .. } => lattice
                .curves()
                .iter()
                .map(|c| CohomClass::surface(lattice.clone(), c.clone()))
                .collect(),
        }
    }

    /// Strict positivity against the declared data (degree > 0 on curves,
    /// Nakai–Moishezon against the lattice's declared curves on surfaces).
    pub fn is_positive(&self) -> Result<bool, ClassError> {
        match self {
            CohomClass::Curve { degree } => Ok(degree.is_positive()),
            CohomClass::Surface { .. } => {
                let pairings = self.declared_pairings(&self.lattice_curves())?;
                Ok(self.top_intersection().is_positive() && pairings.iter().all(Signed::is_positive))
            }
        }
    }
}

/// `L` is big: `L^n > 0` (on surfaces additionally some declared curve pairing is positive).
pub fn is_big(l: &CohomClass) -> Result<bool, ClassError> {
    match l {
        CohomClass::Curve { degree } => Ok(degree.is_positive()),
        CohomClass::Surface { .. } => {
            let pairings = l.declared_pairings(&l.lattice_curves())?;
            Ok(l.top_intersection().is_positive() && pairings.iter().any(Signed::is_positive))
        }
    }
}

/// `L` is nef relative to `curves`: every pairing is nonnegative.
/// On curves the list is ignored and nefness is `deg ≥ 0`.
pub fn is_nef(l: &CohomClass, curves: &[CohomClass]) -> Result<bool, ClassError> {
    match l {
        CohomClass::Curve { degree } => Ok(!degree.is_negative()),
        CohomClass::Surface { .. } => {
            let pairings = l.declared_pairings(curves)?;
            Ok(pairings.iter().all(|p| !p.is_negative()))
        }
    }
}

/// The class data of a conical flow: initial class, first Chern class and
/// the weighted divisor components.
#[derive(Clone, Debug)]
pub struct ClassFlowPath {
    pub omega0: CohomClass,
    pub c1: CohomClass,
    pub divisors: Vec<(CohomClass, f64)>,
    pub mode: FlowMode,
}

impl ClassFlowPath {
    pub fn new(
        omega0: CohomClass,
        c1: CohomClass,
        divisors: Vec<(CohomClass, f64)>,
        mode: FlowMode,
    ) -> Result<Self, ClassError> {
        for (_, beta) in &divisors {
            if !(*beta > 0.0 && *beta < 1.0) {
                return Err(ClassError::InvalidBeta(*beta));
            }
        }
        if omega0.dim() != c1.dim() || divisors.iter().any(|(d, _)| d.dim() != c1.dim()) {
            return Err(ClassError::Mismatch);
        }
        Ok(ClassFlowPath {
            omega0,
            c1,
            divisors,
            mode,
        })
    }

    /// The class path of a Riemann surface of Euler characteristic `euler`
    /// with point divisors of the given cone angles and initial area `area`.
    pub fn riemann_surface(
        area: f64,
        euler: i64,
        betas: &[f64],
        mode: FlowMode,
    ) -> Result<Self, ClassError> {
        ClassFlowPath::new(
            CohomClass::from_area(area)?,
            CohomClass::degree_i(euler),
            betas.iter().map(|&b| (CohomClass::degree_i(1), b)).collect(),
            mode,
        )
    }

    /// `Σ(1−βᵢ)[Dᵢ]`.
    pub fn divisor_weight(&self) -> Result<CohomClass, ClassError> {
        let mut acc = self.c1.zero_like();
        for (d, beta) in &self.divisors {
            let w = Rational::one() - exact(*beta)?;
            acc = acc.add(&d.scale(&w))?;
        }
        Ok(acc)
    }

    /// Twist class `c₁ − Σ(1−βᵢ)[Dᵢ]`; the unnormalized flow moves by `−t` times it.
    pub fn twist(&self) -> Result<CohomClass, ClassError> {
        self.c1.sub(&self.divisor_weight()?)
    }

    /// Fixed point of the normalized class flow, `−c₁ + Σ(1−βᵢ)[Dᵢ]`
    /// (the twisted canonical class).
    pub fn twisted_canonical(&self) -> Result<CohomClass, ClassError> {
        Ok(self.twist()?.scale(&-Rational::one()))
    }

    /// `[ω_t]` for a real time `t ≥ 0`. In normalized mode `e^{-t}` is taken
    /// as the exact rational value of its `f64`.
    pub fn class_at(&self, t: f64) -> Result<CohomClass, ClassError> {
        match self.mode {
            FlowMode::Unnormalized => self.class_at_exact(&exact(t)?),
            FlowMode::Normalized => self.class_at_decay(&exact((-t).exp())?),
        }
    }

    /// Unnormalized class at an exact rational time.
    pub fn class_at_exact(&self, t: &Rational) -> Result<CohomClass, ClassError> {
        self.omega0.sub(&self.twist()?.scale(t))
    }

    /// Normalized class with the decay factor `q = e^{-t}` given exactly:
    /// `q[ω₀] + (1−q)(−c₁ + Σ(1−βᵢ)[Dᵢ])`.
    pub fn class_at_decay(&self, decay: &Rational) -> Result<CohomClass, ClassError> {
        let stationary = self.twisted_canonical()?;
        self.omega0
            .scale(decay)
            .add(&stationary.scale(&(Rational::one() - decay)))
    }

    /// `d/dt [ω_t]` written symbolically: `−twist` (unnormalized) or
    /// `q·(−[ω₀] + (−c₁ + Σ(1−βᵢ)[Dᵢ]))` with `q = e^{-t}` (normalized).
    pub fn class_velocity_decay(&self, decay: &Rational) -> Result<CohomClass, ClassError> {
        match self.mode {
            FlowMode::Unnormalized => Ok(self.twist()?.scale(&-Rational::one())),
            FlowMode::Normalized => Ok(self
                .twisted_canonical()?
                .sub(&self.omega0)?
                .scale(decay)),
        }
    }

    /// Area `2π·deg[ω_t]` for curves.
    pub fn area_at(&self, t: f64) -> f64 {
        // Closed forms avoid rationalizing on every solver step.
        let a0 = self.omega0.area();
        let twist = self.twist().map(|c| c.area()).unwrap_or(f64::NAN);
        match self.mode {
            FlowMode::Unnormalized => a0 - t * twist,
            FlowMode::Normalized => {
                let q = (-t).exp();
                q * a0 - (1.0 - q) * twist
            }
        }
    }

    /// `d(area)/dt` of the unnormalized flow, `−2π·deg(twist)`.
    pub fn area_slope(&self) -> Result<f64, ClassError> {
        Ok(-self.twist()?.area())
    }

    /// Maximal existence time `T₀ = sup{t : [ω₀] − t·twist > 0}`.
    pub fn max_existence_time(&self) -> Result<ExtendedReal, ClassError> {
        if self.mode != FlowMode::Unnormalized {
            return Err(ClassError::ModeMismatch);
        }
        let twist = self.twist()?;
        match (&self.omega0, &twist) {
            (CohomClass::Curve { degree: a0 }, CohomClass::Curve { degree: tw }) => {
                if !a0.is_positive() {
                    return Err(ClassError::InitialNotPositive);
                }
                if tw.is_positive() {
                    Ok(ExtendedReal::finite_rational(a0 / tw))
                } else {
                    Ok(ExtendedReal::Infinity)
                }
            }
            (CohomClass::Surface { .. }, CohomClass::Surface { .. }) => {
                if !self.omega0.is_positive()? {
                    return Err(ClassError::InitialNotPositive);
                }
                let constraints = line_constraints(&self.omega0, &twist)?;
                let set = solve_constraints(&constraints);
                // The component that contains t = 0⁺.
                let zero = ExtendedReal::finite_rational(Rational::zero());
                let comp = set
                    .into_iter()
                    .find(|iv| iv.lo <= zero && zero < iv.hi)
                    .ok_or(ClassError::InitialNotPositive)?;
                Ok(comp.hi)
            }
            _ => Err(ClassError::Mismatch),
        }
    }
}

/// An open interval with extended-real endpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct OpenInterval {
    pub lo: ExtendedReal,
    pub hi: ExtendedReal,
}

impl OpenInterval {
    fn new(lo: ExtendedReal, hi: ExtendedReal) -> Option<Self> {
        (lo < hi).then_some(OpenInterval { lo, hi })
    }

    fn everything() -> Self {
        OpenInterval {
            lo: ExtendedReal::NegInfinity,
            hi: ExtendedReal::Infinity,
        }
    }

    fn intersect(&self, other: &Self) -> Option<Self> {
        let lo = if self.lo >= other.lo { &self.lo } else { &other.lo };
        let hi = if self.hi <= other.hi { &self.hi } else { &other.hi };
        OpenInterval::new(lo.clone(), hi.clone())
    }

    pub fn contains_f64(&self, x: f64) -> bool {
        self.lo.to_f64() < x && x < self.hi.to_f64()
    }
}

impl std::fmt::Display for OpenInterval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.lo, self.hi)
    }
}

/// `a + b·x + c·x² > 0` as a constraint on the real line.
struct PolyConstraint {
    a: Rational,
    b: Rational,
    c: Rational,
}

impl PolyConstraint {
    fn positive_set(&self) -> Vec<OpenInterval> {
        let roots = quadratic_roots(&self.a, &self.b, &self.c);
        let fin = |s: &QuadSurd| ExtendedReal::Finite(s.clone());
        // Evaluate sign between breakpoints by the leading behaviour.
        let mut pts = vec![ExtendedReal::NegInfinity];
        pts.extend(roots.iter().map(fin));
        pts.push(ExtendedReal::Infinity);
        let mut out = Vec::new();
        for w in pts.windows(2) {
            if let Some(iv) = OpenInterval::new(w[0].clone(), w[1].clone()) {
                if self.positive_inside(&iv) {
                    out.push(iv);
                }
            }
        }
        out
    }

    fn positive_inside(&self, iv: &OpenInterval) -> bool {
        // Any rational point inside the interval decides the sign.
        let probe = match (&iv.lo, &iv.hi) {
            (ExtendedReal::NegInfinity, ExtendedReal::Infinity) => Rational::zero(),
            (ExtendedReal::NegInfinity, ExtendedReal::Finite(h)) => {
                rational_below(h) - Rational::one()
            }
            (ExtendedReal::Finite(l), ExtendedReal::Infinity) => rational_above(l) + Rational::one(),
            (ExtendedReal::Finite(l), ExtendedReal::Finite(h)) => rational_between(l, h),
            _ => unreachable!("degenerate interval"),
        };
        let v = &self.a + &self.b * &probe + &self.c * &probe * &probe;
        v.is_positive()
    }
}

fn rational_below(s: &QuadSurd) -> Rational {
    Rational::from_integer(BigInt::from(s.to_f64().floor() as i64)) - Rational::one()
}

fn rational_above(s: &QuadSurd) -> Rational {
    Rational::from_integer(BigInt::from(s.to_f64().ceil() as i64)) + Rational::one()
}

/// A rational strictly between two distinct surds, found by bisecting on
/// rationals until the exact comparison confirms it.
fn rational_between(lo: &QuadSurd, hi: &QuadSurd) -> Rational {
    let mut a = Rational::from_float(lo.to_f64()).unwrap_or_else(Rational::zero);
    let mut b = Rational::from_float(hi.to_f64()).unwrap_or_else(Rational::zero);
    for _ in 0..256 {
        let mid = (&a + &b) / int(2);
        let m = QuadSurd::from_rational(mid.clone());
        match (lo < &m, &m < hi) {
            (true, true) => return mid,
            (false, _) => a = mid,
            (_, false) => b = mid,
        }
    }
    (a + b) / int(2)
}

fn solve_constraints(constraints: &[PolyConstraint]) -> Vec<OpenInterval> {
    let mut set = vec![OpenInterval::everything()];
    for c in constraints {
        let pos = c.positive_set();
        let mut next = Vec::new();
        for a in &set {
            for b in &pos {
                if let Some(iv) = a.intersect(b) {
                    next.push(iv);
                }
            }
        }
        set = next;
    }
    set.sort_by(|a, b| a.lo.partial_cmp(&b.lo).unwrap_or(std::cmp::Ordering::Equal));
    set
}

/// Positivity constraints of `base − x·dir` on a surface, as polynomials in `x`.
fn line_constraints(base: &CohomClass, dir: &CohomClass) -> Result<Vec<PolyConstraint>, ClassError> {
    let curves = base.lattice_curves();
    if curves.is_empty() {
        return Err(ClassError::AmbiguousPositivity);
    }
    let pb = base.declared_pairings(&curves)?;
    let pd = dir.declared_pairings(&curves)?;
    let two = int(2);
    let mut out = vec![PolyConstraint {
        a: base.top_intersection(),
        b: -(two * base.dot(dir)?),
        c: dir.top_intersection(),
    }];
    for (a, d) in pb.into_iter().zip(pd) {
        out.push(PolyConstraint {
            a,
            b: -d,
            c: Rational::zero(),
        });
    }
    Ok(out)
}

/// The set of `δ > 0` with `L − δE` positive against the declared data
/// (Kodaira's lemma at the level of intersection numbers).
///
/// When the solution set has several components the one with the smallest
/// left endpoint is returned.
pub fn kodaira_delta_range(l: &CohomClass, e: &CohomClass) -> Result<OpenInterval, ClassError> {
    if !is_big(l)? {
        return Err(ClassError::NotBig);
    }
    let positive_half = OpenInterval {
        lo: ExtendedReal::finite_rational(Rational::zero()),
        hi: ExtendedReal::Infinity,
    };
    let set = match (l, e) {
        (CohomClass::Curve { degree: ld }, CohomClass::Curve { degree: ed }) => {
            let c = PolyConstraint {
                a: ld.clone(),
                b: -ed.clone(),
                c: Rational::zero(),
            };
            c.positive_set()
        }
        (CohomClass::Surface { .. }, CohomClass::Surface { .. }) => {
            if e.is_zero() {
                return Err(ClassError::ZeroDivisor);
            }
            solve_constraints(&line_constraints(l, e)?)
        }
        _ => return Err(ClassError::Mismatch),
    };
    set.iter()
        .filter_map(|iv| iv.intersect(&positive_half))
        .next()
        .ok_or(ClassError::EmptyRange)
}

fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Exact rational value of a finite float.
pub fn exact(x: f64) -> Result<Rational, ClassError> {
    Rational::from_float(x).ok_or(ClassError::NotFinite(x))
}

fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    fn football(mode: FlowMode) -> ClassFlowPath {
        ClassFlowPath::riemann_surface(4.0 * PI, 2, &[0.5, 0.5], mode).unwrap()
    }

    #[test]
    fn football_degree_at_unit_time() {
        // 4π − 1·(4π − 2π) = 2π, i.e. degree 1
        let c = football(FlowMode::Unnormalized).class_at(1.0).unwrap();
        assert_eq!(c.degree_value(), Some(&q(1, 1)));
    }

    #[test]
    fn time_zero_is_initial_class() {
        for mode in [FlowMode::Unnormalized, FlowMode::Normalized] {
            let p = football(mode);
            assert_eq!(p.class_at(0.0).unwrap(), p.omega0);
        }
    }

    #[test]
    fn normalized_limit_is_twisted_canonical() {
        let p = football(FlowMode::Normalized);
        let at = p.class_at(50.0).unwrap();
        let lim = p.twisted_canonical().unwrap();
        let diff = at.sub(&lim).unwrap().degree_value().unwrap().abs();
        assert!(diff < q(1, 10i64.pow(18)) * q(1, 100));
    }

    #[test]
    fn football_max_time_is_two() {
        let t0 = football(FlowMode::Unnormalized).max_existence_time().unwrap();
        assert_eq!(t0.as_rational(), Some(&q(2, 1)));
    }

    #[test]
    fn torus_and_zero_twist_are_immortal() {
        let torus = ClassFlowPath::riemann_surface(1.0, 0, &[0.5], FlowMode::Unnormalized).unwrap();
        assert_eq!(torus.max_existence_time().unwrap(), ExtendedReal::Infinity);
        // deg c₁ = 1 exactly cancelled by two half-weighted points
        let flat = ClassFlowPath::new(
            CohomClass::degree_i(3),
            CohomClass::degree_i(1),
            vec![(CohomClass::degree_i(1), 0.5), (CohomClass::degree_i(1), 0.5)],
            FlowMode::Unnormalized,
        )
        .unwrap();
        assert!(flat.twist().unwrap().is_zero());
        assert_eq!(flat.max_existence_time().unwrap(), ExtendedReal::Infinity);
    }

    #[test]
    fn normalized_mode_has_no_max_time() {
        assert_eq!(
            football(FlowMode::Normalized).max_existence_time(),
            Err(ClassError::ModeMismatch)
        );
    }

    #[test]
    fn beta_out_of_range_rejected() {
        let r = ClassFlowPath::riemann_surface(1.0, 2, &[1.0], FlowMode::Unnormalized);
        assert_eq!(r.unwrap_err(), ClassError::InvalidBeta(1.0));
    }

    #[test]
    fn bigness_and_nefness_on_curves() {
        let torus = ClassFlowPath::riemann_surface(1.0, 0, &[0.5], FlowMode::Normalized).unwrap();
        let k = torus.twisted_canonical().unwrap();
        assert_eq!(k.degree_value(), Some(&q(1, 2)));
        assert!(is_big(&k).unwrap() && is_nef(&k, &[]).unwrap());

        let sphere = football(FlowMode::Normalized).twisted_canonical().unwrap();
        assert_eq!(sphere.degree_value(), Some(&q(-1, 1)));
        assert!(!is_big(&sphere).unwrap() && !is_nef(&sphere, &[]).unwrap());

        let zero = CohomClass::degree_i(0);
        assert!(!is_big(&zero).unwrap() && is_nef(&zero, &[]).unwrap());
    }

    #[test]
    fn kodaira_on_curves() {
        let r = kodaira_delta_range(&CohomClass::degree_i(3), &CohomClass::degree_i(1)).unwrap();
        assert_eq!(r.lo.as_rational(), Some(&q(0, 1)));
        assert_eq!(r.hi.as_rational(), Some(&q(3, 1)));
        let r = kodaira_delta_range(&CohomClass::degree_i(3), &CohomClass::degree_i(0)).unwrap();
        assert_eq!(r.hi, ExtendedReal::Infinity);
    }

    /// Basis (L, E) with L² = 2, L·E = −1, E² = −1 and one declared curve
    /// C = −E, so that L·C = 1 and E·C = 1.
    fn surface_lattice() -> (Arc<IntersectionLattice>, CohomClass, CohomClass) {
        let gram = vec![vec![q(2, 1), q(-1, 1)], vec![q(-1, 1), q(-1, 1)]];
        let lat = IntersectionLattice::new(gram, vec![vec![q(0, 1), q(-1, 1)]]);
        let l = CohomClass::surface(lat.clone(), vec![q(1, 1), q(0, 1)]);
        let e = CohomClass::surface(lat.clone(), vec![q(0, 1), q(1, 1)]);
        (lat, l, e)
    }

    #[test]
    fn kodaira_on_a_surface_by_exact_roots() {
        let (lat, l, e) = surface_lattice();
        let c = CohomClass::surface(lat.clone(), lat.curves()[0].clone());
        assert_eq!(l.dot(&c).unwrap(), q(1, 1));
        assert_eq!(e.dot(&c).unwrap(), q(1, 1));
        // (L−δE)² = 2 + 2δ − δ² > 0 on (1−√3, 1+√3); (L−δE)·C = 1 − δ > 0 → δ < 1.
        let r = kodaira_delta_range(&l, &e).unwrap();
        assert_eq!(r.lo.as_rational(), Some(&q(0, 1)));
        assert_eq!(r.hi.as_rational(), Some(&q(1, 1)));

        // Declaring C = L instead leaves the quadratic as the binding constraint.
        let lat2 = IntersectionLattice::new(
            vec![vec![q(2, 1), q(-1, 1)], vec![q(-1, 1), q(-1, 1)]],
            vec![vec![q(1, 1), q(0, 1)]],
        );
        let l2 = CohomClass::surface(lat2.clone(), vec![q(1, 1), q(0, 1)]);
        let e2 = CohomClass::surface(lat2, vec![q(0, 1), q(1, 1)]);
        // (L−δE)·L = 2 + δ > 0 always, so only 2 + 2δ − δ² > 0 binds: hi = 1 + √3.
        let r2 = kodaira_delta_range(&l2, &e2).unwrap();
        assert!(r2.hi.as_rational().is_none());
        assert!((r2.hi.to_f64() - (1.0 + 3f64.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn surfaces_need_declared_curves() {
        let lat = IntersectionLattice::new(vec![vec![q(1, 1)]], vec![]);
        let l = CohomClass::surface(lat, vec![q(1, 1)]);
        assert_eq!(is_big(&l), Err(ClassError::AmbiguousPositivity));
        assert_eq!(is_nef(&l, &[]), Err(ClassError::AmbiguousPositivity));
    }

    #[test]
    fn surface_max_time_first_root() {
        // ℙ²-like lattice, H² = 1, curve H. ω₀ = 3H, c₁ = 3H, D = line with β = 1/2:
        // twist = 3H − H/2 = 5H/2, T₀ = 3 / (5/2) = 6/5.
        let lat = IntersectionLattice::new(vec![vec![q(1, 1)]], vec![vec![q(1, 1)]]);
        let h = |n: i64, d: i64| CohomClass::surface(lat.clone(), vec![q(n, d)]);
        let path = ClassFlowPath::new(h(3, 1), h(3, 1), vec![(h(1, 1), 0.5)], FlowMode::Unnormalized)
            .unwrap();
        let t0 = path.max_existence_time().unwrap();
        assert_eq!(t0.as_rational(), Some(&q(6, 5)));
    }
}

// SPDX-License-Identifier: Apache-2.0

//! Exact arithmetic in Q and in real quadratic fields of class number one.
//!
//! Elements are stored by rational coordinates on the integral basis
//! `(1, w)`, with `w = (1 + sqrt d)/2` when `d = 1 mod 4` and `w = sqrt d`
//! otherwise. The first real embedding sends `sqrt d` to the positive root.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::arith::{is_square_free, isqrt, primes_up_to};

pub type Rational = Ratio<i128>;

/// Default cap on the number of ideals `enumerate_principal_ideals` may return.
pub const DEFAULT_MAX_IDEALS: usize = 5_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("{0} is not square-free")]
    NotSquareFree(i64),
    #[error("radicand must be a square-free integer greater than 1, got {0}")]
    InvalidRadicand(i64),
    #[error("class number of Q(sqrt {d}) is not 1: the ideals above {prime} are not principal")]
    ClassNumberNotOne { d: i64, prime: u64 },
    #[error("degree {0} is not supported (only 1 and 2)")]
    UnsupportedDegree(usize),
    #[error("element has a zero embedding")]
    ZeroEmbedding,
    #[error("norm bound {bound} would produce more than {limit} ideals")]
    BoundTooLarge { bound: f64, limit: usize },
    #[error("no fundamental unit found with coefficients below {0}")]
    UnitSearchExhausted(i64),
}

/// Multiplication data of the order `Z[w]`: `w^2 = trace * w + constant`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct QuadRing {
    pub d: i64,
    pub trace: i64,
    pub constant: i64,
}

impl QuadRing {
    pub fn rational() -> Self {
        QuadRing { d: 1, trace: 0, constant: 0 }
    }

    pub fn quadratic(d: i64) -> Self {
        if d.rem_euclid(4) == 1 {
            QuadRing { d, trace: 1, constant: (d - 1) / 4 }
        } else {
            QuadRing { d, trace: 0, constant: d }
        }
    }

    pub fn is_rational(&self) -> bool {
        self.d == 1
    }
}

/// An element `a + b w` of the field, with exact rational coordinates.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct FieldElement {
    pub a: Rational,
    pub b: Rational,
    ring: QuadRing,
}

fn rat(n: i128) -> Rational {
    Rational::from_integer(n)
}

impl FieldElement {
    pub fn new(ring: QuadRing, a: Rational, b: Rational) -> Self {
        debug_assert!(!ring.is_rational() || b.is_zero());
        FieldElement { a, b, ring }
    }

    pub fn from_ints(ring: QuadRing, a: i64, b: i64) -> Self {
        Self::new(ring, rat(a as i128), rat(b as i128))
    }

    pub fn ring(&self) -> QuadRing {
        self.ring
    }

    pub fn zero(ring: QuadRing) -> Self {
        Self::from_ints(ring, 0, 0)
    }

    pub fn one(ring: QuadRing) -> Self {
        Self::from_ints(ring, 1, 0)
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }

    pub fn is_integral(&self) -> bool {
        self.a.is_integer() && self.b.is_integer()
    }

    /// Integer coordinates, if the element is integral and fits in `i64`.
    pub fn int_coords(&self) -> Option<(i64, i64)> {
        if !self.is_integral() {
            return None;
        }
        Some((self.a.to_integer().to_i64()?, self.b.to_integer().to_i64()?))
    }

    /// The Galois conjugate.
    pub fn conj(&self) -> Self {
        if self.ring.is_rational() {
            return self.clone();
        }
        let t = rat(self.ring.trace as i128);
        FieldElement::new(self.ring, self.a + self.b * t, -self.b)
    }

    /// `x * conj(x)`; over Q this is `a^2`, not the degree-one norm.
    pub fn norm(&self) -> Rational {
        let t = rat(self.ring.trace as i128);
        let n = rat(self.ring.constant as i128);
        self.a * self.a + self.a * self.b * t - self.b * self.b * n
    }

    pub fn trace(&self) -> Rational {
        if self.ring.is_rational() {
            return self.a;
        }
        rat(2) * self.a + self.b * rat(self.ring.trace as i128)
    }

    pub fn inverse(&self) -> Option<Self> {
        let n = self.norm();
        if n.is_zero() {
            return None;
        }
        let c = self.conj();
        Some(FieldElement::new(self.ring, c.a / n, c.b / n))
    }

    pub fn scale(&self, r: Rational) -> Self {
        FieldElement::new(self.ring, self.a * r, self.b * r)
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut out = FieldElement::one(self.ring);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    /// Exact `x / y` when `y` divides `x` in the ring of integers.
    pub fn div_exact(&self, y: &FieldElement) -> Option<Self> {
        let q = self * &y.inverse()?;
        q.is_integral().then_some(q)
    }

    /// `p + q sqrt(disc)` form used for exact sign tests: returns `(p, q, disc)`
    /// with `2x = p + q sqrt(disc)` for the first embedding.
    fn surd_form(&self) -> (Rational, Rational, i128) {
        if self.ring.is_rational() {
            return (rat(2) * self.a, Rational::zero(), 0);
        }
        let t = self.ring.trace as i128;
        let disc = t * t + 4 * self.ring.constant as i128;
        (rat(2) * self.a + self.b * rat(t), self.b, disc)
    }

    /// Exact sign of the `j`-th embedding (`j` is 0-based).
    pub fn embedding_sign(&self, j: usize) -> Ordering {
        let (p, q, disc) = self.surd_form();
        let q = if j == 0 { q } else { -q };
        surd_sign(p, q, disc)
    }

    /// Floating point value of the `j`-th embedding (`j` is 0-based).
    pub fn embed(&self, j: usize) -> f64 {
        let a = self.a.to_f64().unwrap_or(f64::NAN);
        if self.ring.is_rational() {
            return a;
        }
        let b = self.b.to_f64().unwrap_or(f64::NAN);
        let direct = a + b * omega_embedding(self.ring, j);
        let other = a + b * omega_embedding(self.ring, 1 - j);
        if direct.abs() < other.abs() {
            // avoid cancellation: the smaller embedding is N(x) / the larger
            self.norm().to_f64().unwrap_or(f64::NAN) / other
        } else {
            direct
        }
    }

    pub fn embeddings(&self) -> Vec<f64> {
        let g = if self.ring.is_rational() { 1 } else { 2 };
        (0..g).map(|j| self.embed(j)).collect()
    }

    /// Exact comparison of the `j`-th embeddings of `self` and `other`.
    pub fn cmp_embedding(&self, other: &FieldElement, j: usize) -> Ordering {
        (self - other).embedding_sign(j)
    }

    pub fn is_totally_positive(&self) -> bool {
        let g = if self.ring.is_rational() { 1 } else { 2 };
        (0..g).all(|j| self.embedding_sign(j) == Ordering::Greater)
    }

    pub fn is_totally_negative(&self) -> bool {
        (-self.clone()).is_totally_positive()
    }
}

/// Sign of `p + q sqrt(disc)` for `disc >= 0`.
fn surd_sign(p: Rational, q: Rational, disc: i128) -> Ordering {
    let sp = p.cmp(&Rational::zero());
    let sq = if disc == 0 { Ordering::Equal } else { q.cmp(&Rational::zero()) };
    match (sp, sq) {
        (Ordering::Equal, s) | (s, Ordering::Equal) => s,
        (a, b) if a == b => a,
        (a, _) => {
            let lhs = p * p;
            let rhs = q * q * rat(disc);
            match lhs.cmp(&rhs) {
                Ordering::Greater => a,
                Ordering::Less => a.reverse(),
                Ordering::Equal => Ordering::Equal,
            }
        }
    }
}

pub fn omega_embedding(ring: QuadRing, j: usize) -> f64 {
    let t = ring.trace as f64;
    let disc = (ring.trace * ring.trace + 4 * ring.constant) as f64;
    let root = disc.sqrt();
    if j == 0 {
        (t + root) / 2.0
    } else {
        (t - root) / 2.0
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ring.is_rational() || self.b.is_zero() {
            return write!(f, "{}", self.a);
        }
        if self.b.is_negative() {
            write!(f, "{}-{}w", self.a, -self.b)
        } else {
            write!(f, "{}+{}w", self.a, self.b)
        }
    }
}

impl Serialize for FieldElement {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl Add for &FieldElement {
    type Output = FieldElement;
    fn add(self, o: &FieldElement) -> FieldElement {
        FieldElement::new(self.ring, self.a + o.a, self.b + o.b)
    }
}

impl Sub for &FieldElement {
    type Output = FieldElement;
    fn sub(self, o: &FieldElement) -> FieldElement {
        FieldElement::new(self.ring, self.a - o.a, self.b - o.b)
    }
}

impl Mul for &FieldElement {
    type Output = FieldElement;
    fn mul(self, o: &FieldElement) -> FieldElement {
        let t = rat(self.ring.trace as i128);
        let n = rat(self.ring.constant as i128);
        let bb = self.b * o.b;
        FieldElement::new(
            self.ring,
            self.a * o.a + bb * n,
            self.a * o.b + self.b * o.a + bb * t,
        )
    }
}

impl Neg for FieldElement {
    type Output = FieldElement;
    fn neg(self) -> FieldElement {
        FieldElement::new(self.ring, -self.a, -self.b)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for FieldElement {
            type Output = FieldElement;
            fn $m(self, o: FieldElement) -> FieldElement {
                (&self).$m(&o)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

/// A principal integral ideal with its canonical generator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrincipalIdeal {
    pub generator: FieldElement,
    pub norm: i64,
}

/// Exponents `e[q][j]` making `lambda_m` trivial on totally positive units.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrossenExponents {
    pub rows: Vec<Vec<f64>>,
}

impl GrossenExponents {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Imaginary shift `pi * sum_q m_q e_j^(q)` for each embedding.
    pub fn shifts(&self, m: &[i64], g: usize) -> Vec<f64> {
        (0..g)
            .map(|j| {
                self.rows
                    .iter()
                    .zip(m)
                    .map(|(row, &mq)| std::f64::consts::PI * mq as f64 * row[j])
                    .sum()
            })
            .collect()
    }

    /// `lambda_m` evaluated on a vector of embedding values.
    pub fn lambda_embedded(&self, m: &[i64], values: &[f64]) -> Complex64 {
        let shifts = self.shifts(m, values.len());
        let phase: f64 = shifts
            .iter()
            .zip(values)
            .map(|(sh, v)| sh * v.abs().ln())
            .sum();
        Complex64::from_polar(1.0, phase)
    }
}

/// Q or a real quadratic field `Q(sqrt d)` of class number one.
#[derive(Clone, Debug, Serialize)]
pub struct TotallyRealField {
    degree: usize,
    d: Option<i64>,
    ring: QuadRing,
    discriminant: i64,
    fundamental_unit: Option<FieldElement>,
    totally_positive_unit: Option<FieldElement>,
    unit_norm: i64,
    log_positive_unit: f64,
    class_number: u32,
}

impl TotallyRealField {
    pub fn rationals() -> Self {
        TotallyRealField {
            degree: 1,
            d: None,
            ring: QuadRing::rational(),
            discriminant: 1,
            fundamental_unit: None,
            totally_positive_unit: None,
            unit_norm: 1,
            log_positive_unit: 0.0,
            class_number: 1,
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn radicand(&self) -> Option<i64> {
        self.d
    }

    pub fn ring(&self) -> QuadRing {
        self.ring
    }

    pub fn discriminant(&self) -> i64 {
        self.discriminant
    }

    pub fn fundamental_unit(&self) -> Option<&FieldElement> {
        self.fundamental_unit.as_ref()
    }

    pub fn totally_positive_unit(&self) -> Option<&FieldElement> {
        self.totally_positive_unit.as_ref()
    }

    /// Norm of the fundamental unit (`1` for Q by convention).
    pub fn unit_norm(&self) -> i64 {
        self.unit_norm
    }

    /// `log` of the first embedding of the totally positive fundamental unit.
    pub fn log_positive_unit(&self) -> f64 {
        self.log_positive_unit
    }

    pub fn class_number(&self) -> u32 {
        self.class_number
    }

    pub fn element(&self, a: i64, b: i64) -> FieldElement {
        FieldElement::from_ints(self.ring, a, if self.degree == 1 { 0 } else { b })
    }

    pub fn from_rational(&self, r: Rational) -> FieldElement {
        FieldElement::new(self.ring, r, Rational::zero())
    }

    pub fn omega(&self) -> f64 {
        omega_embedding(self.ring, 0)
    }

    /// Embeddings of an integral element given by coordinates, in floating point.
    pub fn embed_coords(&self, a: f64, b: f64) -> [f64; 2] {
        if self.degree == 1 {
            return [a, a];
        }
        [a + b * omega_embedding(self.ring, 0), a + b * omega_embedding(self.ring, 1)]
    }

    pub fn embeddings(&self, x: &FieldElement) -> Vec<f64> {
        (0..self.degree).map(|j| x.embed(j)).collect()
    }

    /// The exponent system of the Grössencharacters `lambda_m`.
    pub fn grossen_exponents(&self) -> GrossenExponents {
        if self.degree == 1 {
            return GrossenExponents { rows: Vec::new() };
        }
        let eps = self.totally_positive_unit.as_ref().expect("quadratic field has a unit");
        let l1 = eps.embed(0).ln();
        let l2 = eps.embed(1).ln();
        let c = 1.0 / (l1 - l2);
        GrossenExponents { rows: vec![vec![c, -c]] }
    }

    /// `lambda_m(x)`; errors when an embedding of `x` vanishes.
    pub fn lambda_m(
        &self,
        e: &GrossenExponents,
        m: &[i64],
        x: &FieldElement,
    ) -> Result<Complex64, FieldError> {
        if (0..self.degree).any(|j| x.embedding_sign(j) == Ordering::Equal) {
            return Err(FieldError::ZeroEmbedding);
        }
        Ok(e.lambda_embedded(m, &self.embeddings(x)))
    }

    /// Canonical generator of the ideal `(x)`: the unit multiple with positive
    /// first embedding in `[1, eps0)`, and positive second embedding when the
    /// fundamental unit has norm `-1`.
    pub fn canonical_generator(&self, x: &FieldElement) -> FieldElement {
        assert!(!x.is_zero(), "zero has no canonical generator");
        let mut y = if x.embedding_sign(0) == Ordering::Less { -x.clone() } else { x.clone() };
        if self.degree == 1 {
            return y;
        }
        let eps0 = self.totally_positive_unit.clone().unwrap();
        let eps0_inv = eps0.conj();
        let one = FieldElement::one(self.ring);
        let jump = (y.embed(0).ln() / self.log_positive_unit).floor();
        if jump.is_finite() && jump.abs() > 1.0 {
            let k = (jump.abs() as u32).saturating_sub(1);
            let f = if jump > 0.0 { eps0_inv.pow(k) } else { eps0.pow(k) };
            y = &y * &f;
        }
        while y.cmp_embedding(&one, 0) == Ordering::Less {
            y = &y * &eps0;
        }
        while y.cmp_embedding(&eps0, 0) != Ordering::Less {
            y = &y * &eps0_inv;
        }
        if self.unit_norm == -1 && y.embedding_sign(1) == Ordering::Less {
            let eps = self.fundamental_unit.clone().unwrap();
            let phi = eps.embed(0);
            y = if y.embed(0) * phi < eps0.embed(0) {
                &y * &eps
            } else {
                &y * &eps.inverse().unwrap()
            };
            while y.cmp_embedding(&one, 0) == Ordering::Less {
                y = &y * &eps0;
            }
            while y.cmp_embedding(&eps0, 0) != Ordering::Less {
                y = &y * &eps0_inv;
            }
        }
        y
    }

    /// All principal integral ideals with `|N| <= norm_bound`, sorted by norm.
    pub fn enumerate_principal_ideals(
        &self,
        norm_bound: f64,
    ) -> Result<Vec<PrincipalIdeal>, FieldError> {
        self.enumerate_principal_ideals_with(norm_bound, 1.0, DEFAULT_MAX_IDEALS)
    }

    /// As [`Self::enumerate_principal_ideals`], with an enlarged search box
    /// (`box_scale >= 1`) and an explicit output cap.
    pub fn enumerate_principal_ideals_with(
        &self,
        norm_bound: f64,
        box_scale: f64,
        max_ideals: usize,
    ) -> Result<Vec<PrincipalIdeal>, FieldError> {
        let bound = norm_bound.floor().max(0.0);
        let estimate = if self.degree == 1 {
            bound
        } else {
            2.0 * bound * self.log_positive_unit.exp() / (self.d.unwrap() as f64).sqrt()
        };
        if estimate > 4.0 * max_ideals as f64 {
            return Err(FieldError::BoundTooLarge { bound: norm_bound, limit: max_ideals });
        }
        let mut out = Vec::new();
        if self.degree == 1 {
            for n in 1..=(bound as i64) {
                out.push(PrincipalIdeal { generator: self.element(n, 0), norm: n });
            }
            return Ok(out);
        }
        let d = self.d.unwrap();
        let sqrt_d = (d as f64).sqrt();
        let w1 = omega_embedding(self.ring, 0);
        let eps0 = self.totally_positive_unit.as_ref().unwrap().embed(0);
        let s2_low = if self.unit_norm == -1 { 0.0 } else { -bound };
        let (s1_lo, s1_hi) = (1.0, eps0 * box_scale);
        let (s2_lo, s2_hi) = (s2_low * box_scale, bound * box_scale);
        let w_gap = if self.ring.trace == 1 { sqrt_d } else { 2.0 * sqrt_d };
        let b_lo = ((s1_lo - s2_hi) / w_gap).floor() as i64 - 1;
        let b_hi = ((s1_hi - s2_lo) / w_gap).ceil() as i64 + 1;
        for b in b_lo..=b_hi {
            let a_lo = (s1_lo / box_scale - b as f64 * w1).floor() as i64 - 1;
            let a_hi = (s1_hi - b as f64 * w1).ceil() as i64 + 1;
            for a in a_lo..=a_hi {
                let x = self.element(a, b);
                if x.is_zero() {
                    continue;
                }
                let n = x.norm().to_integer();
                if n.abs() as f64 > bound {
                    continue;
                }
                if self.canonical_generator(&x) == x {
                    out.push(PrincipalIdeal { generator: x, norm: n.abs() as i64 });
                }
            }
        }
        if out.len() > max_ideals {
            return Err(FieldError::BoundTooLarge { bound: norm_bound, limit: max_ideals });
        }
        out.sort_by(|p, q| {
            p.norm
                .cmp(&q.norm)
                .then_with(|| p.generator.b.cmp(&q.generator.b))
                .then_with(|| p.generator.a.cmp(&q.generator.a))
        });
        Ok(out)
    }

    /// Some integral element of norm `+-n`, searched over a bounded box.
    pub fn element_of_norm(&self, n: i64) -> Option<FieldElement> {
        if self.degree == 1 {
            return Some(self.element(n, 0));
        }
        let eps = self.fundamental_unit.as_ref()?.embed(0);
        let d = self.d.unwrap() as f64;
        // Some generator has both embeddings of size at most sqrt(|n| eps).
        let bmax = (2.0 * ((n.abs() as f64) * eps).sqrt() / d.sqrt()).ceil() as i64 + 1;
        (0..=bmax).find_map(|b| solve_norm_for_a(self.ring, b, n).map(|a| self.element(a, b)))
    }

    /// Whether `x` is a unit of the ring of integers.
    pub fn is_unit(&self, x: &FieldElement) -> bool {
        x.is_integral() && x.norm().abs() == Rational::one()
    }
}

fn ext_gcd_i64(a: i64, b: i64) -> (i64, i64, i64) {
    if b == 0 {
        return if a < 0 { (-a, -1, 0) } else { (a, 1, 0) };
    }
    let (g, x, y) = ext_gcd_i64(b, a.rem_euclid(b));
    (g, y, x - a.div_euclid(b) * y)
}

/// An integer `a` with `N(a + b w) = +-n`, if one exists.
fn solve_norm_for_a(ring: QuadRing, b: i64, n: i64) -> Option<i64> {
    // a^2 + t a b - c b^2 = target, c = ring.constant
    let (t, c, b) = (ring.trace as i128, ring.constant as i128, b as i128);
    for target in [n as i128, -(n as i128)] {
        // a = (-t b +- sqrt(t^2 b^2 + 4 (target + c b^2))) / 2
        let disc = t * t * b * b + 4 * (target + c * b * b);
        if disc < 0 {
            continue;
        }
        let r = isqrt(disc);
        if r * r != disc {
            continue;
        }
        for num in [-t * b + r, -t * b - r] {
            if num.is_even() {
                return Some((num / 2) as i64);
            }
        }
    }
    None
}

/// Build Q (`degree = 1`) or `Q(sqrt d)` (`degree = 2`), verifying class number one.
pub fn make_field(degree: usize, d: Option<i64>) -> Result<TotallyRealField, FieldError> {
    match degree {
        1 => Ok(TotallyRealField::rationals()),
        2 => {
            let d = d.ok_or(FieldError::InvalidRadicand(0))?;
            if d <= 1 {
                return Err(FieldError::InvalidRadicand(d));
            }
            if !is_square_free(d) {
                return Err(FieldError::NotSquareFree(d));
            }
            let ring = QuadRing::quadratic(d);
            let discriminant = if ring.trace == 1 { d } else { 4 * d };
            let eps = fundamental_unit(ring)?;
            let unit_norm = eps.norm().to_integer() as i64;
            let eps0 = if unit_norm == 1 { eps.clone() } else { &eps * &eps };
            let mut field = TotallyRealField {
                degree: 2,
                d: Some(d),
                ring,
                discriminant,
                log_positive_unit: eps0.embed(0).ln(),
                fundamental_unit: Some(eps),
                totally_positive_unit: Some(eps0),
                unit_norm,
                class_number: 0,
            };
            verify_class_number_one(&field)?;
            field.class_number = 1;
            Ok(field)
        }
        g => Err(FieldError::UnsupportedDegree(g)),
    }
}

/// Smallest unit greater than one, found by increasing the `w`-coordinate.
fn fundamental_unit(ring: QuadRing) -> Result<FieldElement, FieldError> {
    let limit = 1i64 << 40;
    let mut box_hi = 16i64;
    let mut b = 1i64;
    while box_hi <= limit {
        while b <= box_hi {
            let mut best: Option<FieldElement> = None;
            for target in [1i64, -1] {
                if let Some(a) = solve_norm_for_a(ring, b, target) {
                    let t = ring.trace;
                    // both roots a and -t b - a have the requested norm
                    for a in [a, -t * b - a] {
                        let u = FieldElement::from_ints(ring, a, b);
                        if u.embed(0) > 1.0 && u.norm().abs() == Rational::one() {
                            let better = best.as_ref().is_none_or(|v| u.cmp_embedding(v, 0) == Ordering::Less);
                            if better {
                                best = Some(u);
                            }
                        }
                    }
                }
            }
            if let Some(u) = best {
                return Ok(u);
            }
            b += 1;
        }
        box_hi *= 2;
    }
    Err(FieldError::UnitSearchExhausted(limit))
}

/// Every prime ideal of norm below the Minkowski bound must be principal.
fn verify_class_number_one(field: &TotallyRealField) -> Result<(), FieldError> {
    let d = field.d.unwrap();
    let disc = field.discriminant as f64;
    let minkowski = disc.sqrt() / 2.0;
    for p in primes_up_to(minkowski.floor() as u64) {
        let splits = prime_has_degree_one_ideal(field.ring, p);
        if splits && field.element_of_norm(p as i64).is_none() {
            return Err(FieldError::ClassNumberNotOne { d, prime: p });
        }
    }
    Ok(())
}

/// Whether some prime above `p` has residue degree one (p split or ramified).
fn prime_has_degree_one_ideal(ring: QuadRing, p: u64) -> bool {
    // w is a root of x^2 - t x - c; test for a root mod p.
    let (t, c) = (ring.trace, ring.constant);
    (0..p as i64).any(|x| (x * x - t * x - c).rem_euclid(p as i64) == 0)
}

impl TotallyRealField {
    /// Integral elements whose `j`-th embedding lies within `radius[j]` of `center[j]`.
    pub fn elements_near(&self, center: [f64; 2], radius: [f64; 2]) -> Vec<(i64, i64)> {
        if self.degree == 1 {
            let lo = (center[0] - radius[0]).ceil() as i64;
            let hi = (center[0] + radius[0]).floor() as i64;
            return (lo..=hi).map(|a| (a, 0)).collect();
        }
        let w1 = omega_embedding(self.ring, 0);
        let w2 = omega_embedding(self.ring, 1);
        let gap = w1 - w2;
        let b_lo = ((center[0] - radius[0] - center[1] - radius[1]) / gap).ceil() as i64;
        let b_hi = ((center[0] + radius[0] - center[1] + radius[1]) / gap).floor() as i64;
        let mut out = Vec::new();
        for b in b_lo..=b_hi {
            let bf = b as f64;
            let lo = (center[0] - radius[0] - bf * w1).max(center[1] - radius[1] - bf * w2).ceil() as i64;
            let hi = (center[0] + radius[0] - bf * w1).min(center[1] + radius[1] - bf * w2).floor() as i64;
            for a in lo..=hi {
                out.push((a, b));
            }
        }
        out
    }

    /// `(a, b)` with `a d - b c = 1`, when `c` and `d` generate the unit ideal.
    pub fn bezout(&self, c: &FieldElement, d: &FieldElement) -> Option<(FieldElement, FieldElement)> {
        let (c0, c1) = c.int_coords()?;
        let (d0, d1) = d.int_coords()?;
        if self.degree == 1 {
            let (g, x, y) = ext_gcd_i64(d0, c0);
            if g != 1 {
                return None;
            }
            // x d + y c = 1  =>  a = x, b = -y
            return Some((self.element(x, 0), self.element(-y, 0)));
        }
        let (t, n) = (self.ring.trace as i128, self.ring.constant as i128);
        let mult = |x0: i64, x1: i64| {
            let (x0, x1) = (x0 as i128, x1 as i128);
            [[x0, x1 * n], [x1, x0 + x1 * t]]
        };
        let md = mult(d0, d1);
        let mc = mult(c0, c1);
        let sys = [
            [md[0][0], md[0][1], -mc[0][0], -mc[0][1]],
            [md[1][0], md[1][1], -mc[1][0], -mc[1][1]],
        ];
        let v = crate::arith::solve_integer_2x4(sys, [1, 0])?;
        let a = FieldElement::new(self.ring, Rational::from_integer(v[0]), Rational::from_integer(v[1]));
        let b = FieldElement::new(self.ring, Rational::from_integer(v[2]), Rational::from_integer(v[3]));
        Some((a, b))
    }

    /// All integral elements `a + b w` (of any norm) with both embeddings of
    /// absolute value at most `r`.
    pub fn elements_in_box(&self, r: [f64; 2]) -> Vec<(i64, i64)> {
        if self.degree == 1 {
            let k = r[0].floor() as i64;
            return (-k..=k).map(|a| (a, 0)).collect();
        }
        let w1 = omega_embedding(self.ring, 0);
        let w2 = omega_embedding(self.ring, 1);
        let gap = w1 - w2;
        let bmax = ((r[0] + r[1]) / gap).floor() as i64;
        let mut out = Vec::new();
        for b in -bmax..=bmax {
            let bf = b as f64;
            let lo = (-r[0] - bf * w1).max(-r[1] - bf * w2).ceil() as i64;
            let hi = (r[0] - bf * w1).min(r[1] - bf * w2).floor() as i64;
            for a in lo..=hi {
                out.push((a, b));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q5() -> TotallyRealField {
        make_field(2, Some(5)).unwrap()
    }

    /// Independent unit oracle: scan a box of coordinates for norm +-1.
    fn brute_force_unit(d: i64, bound: i64) -> FieldElement {
        let ring = QuadRing::quadratic(d);
        let mut best: Option<FieldElement> = None;
        for a in -bound..=bound {
            for b in -bound..=bound {
                let u = FieldElement::from_ints(ring, a, b);
                if u.norm().abs() == Rational::one() && u.embed(0) > 1.0 + 1e-9
                    && best.as_ref().is_none_or(|v| u.embed(0) < v.embed(0)) {
                        best = Some(u);
                    }
            }
        }
        best.unwrap()
    }

    #[test]
    fn rationals_have_no_exponents() {
        let f = make_field(1, None).unwrap();
        assert_eq!(f.degree(), 1);
        assert!(f.fundamental_unit().is_none());
        assert!(f.grossen_exponents().is_empty());
        let e = f.grossen_exponents();
        let x = f.element(7, 0);
        assert_eq!(f.lambda_m(&e, &[], &x).unwrap(), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn golden_field_units() {
        let f = q5();
        let eps = f.fundamental_unit().unwrap();
        assert_eq!(eps, &f.element(0, 1));
        assert_eq!(eps.norm(), rat(-1));
        assert_eq!(f.totally_positive_unit().unwrap(), &f.element(1, 1));
        assert_eq!(brute_force_unit(5, 20), *eps);
        let expect = (3.0 + 5f64.sqrt()) / 2.0;
        assert!((f.totally_positive_unit().unwrap().embed(0) - expect).abs() < 1e-14);
    }

    #[test]
    fn units_match_brute_force_for_small_radicands() {
        for d in [2, 3, 6, 7, 11, 13, 14, 17, 21, 29] {
            let f = make_field(2, Some(d)).unwrap();
            assert_eq!(f.fundamental_unit().unwrap(), &brute_force_unit(d, 60), "d={d}");
        }
    }

    #[test]
    fn construction_errors() {
        assert_eq!(make_field(2, Some(10)).unwrap_err(), FieldError::ClassNumberNotOne { d: 10, prime: 2 });
        assert_eq!(make_field(2, Some(12)).unwrap_err(), FieldError::NotSquareFree(12));
        assert_eq!(make_field(3, None).unwrap_err(), FieldError::UnsupportedDegree(3));
        assert!(make_field(2, Some(15)).is_err());
        assert!(make_field(2, Some(26)).is_err());
    }

    #[test]
    fn class_number_one_radicands_below_thirty() {
        let ok: Vec<i64> = (2..30).filter(|&d| make_field(2, Some(d)).is_ok()).collect();
        assert_eq!(ok, vec![2, 3, 5, 6, 7, 11, 13, 14, 17, 19, 21, 22, 23, 29]);
    }

    #[test]
    fn golden_exponents() {
        let f = q5();
        let e = f.grossen_exponents();
        let c = 1.0 / (2.0 * ((3.0 + 5f64.sqrt()) / 2.0).ln());
        assert!((e.rows[0][0] - c).abs() < 1e-14);
        assert!((e.rows[0][1] + c).abs() < 1e-14);
        assert!((c - 0.51953).abs() < 1e-5);
        let eps0 = f.totally_positive_unit().unwrap();
        let sum: f64 = (0..2).map(|j| e.rows[0][j] * eps0.embed(j).ln()).sum();
        assert!((sum - 1.0).abs() < 1e-13);
    }

    #[test]
    fn lambda_on_units_is_a_sign() {
        // lambda_m(eps0^k) = exp(pi i m k): trivial exactly when m k is even.
        let f = q5();
        let e = f.grossen_exponents();
        let eps0 = f.totally_positive_unit().unwrap();
        for k in 0..=6u32 {
            let u = eps0.pow(k);
            for m in -4i64..=4 {
                let v = f.lambda_m(&e, &[m], &u).unwrap();
                let expect = if (m * k as i64) % 2 == 0 { 1.0 } else { -1.0 };
                assert!((v - Complex64::new(expect, 0.0)).norm() < 1e-12, "k={k} m={m}");
            }
        }
        let eps = f.fundamental_unit().unwrap();
        for k in -10i32..=10 {
            let u = if k >= 0 { eps.pow(k as u32) } else { eps.inverse().unwrap().pow((-k) as u32) };
            for sign in [1, -1] {
                let u = if sign == 1 { u.clone() } else { -u.clone() };
                let v = f.lambda_m(&e, &[4], &u).unwrap();
                assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn lambda_on_rationals_is_one() {
        let f = q5();
        let e = f.grossen_exponents();
        let v = f.lambda_m(&e, &[1], &f.element(2, 0)).unwrap();
        assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert_eq!(f.lambda_m(&e, &[0], &f.element(3, 7)).unwrap(), Complex64::new(1.0, 0.0));
        assert_eq!(f.lambda_m(&e, &[1], &f.element(0, 0)), Err(FieldError::ZeroEmbedding));
    }

    #[test]
    fn ideals_of_z() {
        let f = make_field(1, None).unwrap();
        let norms: Vec<i64> = f.enumerate_principal_ideals(5.0).unwrap().iter().map(|p| p.norm).collect();
        assert_eq!(norms, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn ideals_of_golden_field_below_six() {
        let f = q5();
        let ideals = f.enumerate_principal_ideals(6.0).unwrap();
        let norms: Vec<i64> = ideals.iter().map(|p| p.norm).collect();
        assert_eq!(norms, vec![1, 4, 5]);
        assert_eq!(ideals[0].generator, f.element(1, 0));
        assert_eq!(ideals[1].generator, f.element(2, 0));
        // sqrt 5 = 2w - 1 up to a unit
        assert_eq!(f.canonical_generator(&f.element(-1, 2)), ideals[2].generator);
    }

    /// Independent ideal-count oracle: scan a coordinate box, divide out units
    /// by testing associates pairwise.
    fn ideal_count_oracle(f: &TotallyRealField, bound: i64) -> usize {
        let mut reps: Vec<FieldElement> = Vec::new();
        for a in -60i64..=60 {
            for b in -60i64..=60 {
                let x = f.element(a, b);
                let n = x.norm().to_integer();
                if n == 0 || n.abs() > bound as i128 {
                    continue;
                }
                let associate = reps.iter().any(|r| {
                    let q = &x * &r.inverse().unwrap();
                    q.is_integral() && q.norm().abs() == Rational::one()
                });
                if !associate {
                    reps.push(x);
                }
            }
        }
        reps.len()
    }

    #[test]
    fn ideal_count_to_one_hundred_matches_oracle() {
        let f = q5();
        let got = f.enumerate_principal_ideals(100.0).unwrap().len();
        assert_eq!(got, ideal_count_oracle(&f, 100));
        assert_eq!(got, 44);
    }

    #[test]
    fn ideal_enumeration_saturates() {
        for d in [2, 3, 5, 13] {
            let f = make_field(2, Some(d)).unwrap();
            let a = f.enumerate_principal_ideals_with(300.0, 1.0, DEFAULT_MAX_IDEALS).unwrap();
            let b = f.enumerate_principal_ideals_with(300.0, 2.0, DEFAULT_MAX_IDEALS).unwrap();
            assert_eq!(a, b, "d={d}");
        }
    }

    #[test]
    fn bezout_completes_coprime_pairs() {
        for d in [2, 3, 5, 13] {
            let f = make_field(2, Some(d)).unwrap();
            for (c, dd) in [((2, 1), (3, 0)), ((0, 1), (1, 1)), ((5, 2), (-3, 7))] {
                let c = f.element(c.0, c.1);
                let dd = f.element(dd.0, dd.1);
                if let Some((a, b)) = f.bezout(&c, &dd) {
                    assert_eq!(&(&a * &dd) - &(&b * &c), f.element(1, 0));
                }
            }
        }
        let q = make_field(1, None).unwrap();
        let (a, b) = q.bezout(&q.element(7, 0), &q.element(12, 0)).unwrap();
        assert_eq!(&(&a * &q.element(12, 0)) - &(&b * &q.element(7, 0)), q.element(1, 0));
        assert!(q.bezout(&q.element(4, 0), &q.element(6, 0)).is_none());
    }

    #[test]
    fn bound_guard() {
        let f = q5();
        assert!(matches!(
            f.enumerate_principal_ideals_with(1e6, 1.0, 1000),
            Err(FieldError::BoundTooLarge { .. })
        ));
    }

    fn elem() -> impl Strategy<Value = (i64, i64)> {
        (-1000i64..1000, -1000i64..1000)
    }

    proptest! {
        #[test]
        fn embeddings_are_multiplicative((a1, b1) in elem(), (a2, b2) in elem()) {
            let f = q5();
            let x = f.element(a1, b1);
            let y = f.element(a2, b2);
            let xy = &x * &y;
            prop_assert_eq!(xy.norm(), x.norm() * y.norm());
            prop_assert_eq!(xy.trace(), (&x * &y).trace());
            for j in 0..2 {
                let lhs = xy.embed(j);
                let rhs = x.embed(j) * y.embed(j);
                prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
            }
            prop_assert_eq!(x.conj().conj(), x.clone());
            prop_assert_eq!(&x * &x.conj(), f.from_rational(x.norm()));
        }

        #[test]
        fn lambda_is_multiplicative((a1, b1) in elem(), (a2, b2) in elem(), m in -6i64..6) {
            let f = q5();
            let e = f.grossen_exponents();
            let x = f.element(a1, b1);
            let y = f.element(a2, b2);
            prop_assume!(x.norm() != Rational::zero() && y.norm() != Rational::zero());
            let lhs = f.lambda_m(&e, &[m], &(&x * &y)).unwrap();
            let rhs = f.lambda_m(&e, &[m], &x).unwrap() * f.lambda_m(&e, &[m], &y).unwrap();
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }

        #[test]
        fn canonical_generator_is_unit_invariant((a, b) in elem(), k in 0u32..6, neg in any::<bool>()) {
            let f = q5();
            let x = f.element(a, b);
            prop_assume!(!x.is_zero());
            let u = f.fundamental_unit().unwrap().pow(k);
            let y = if neg { -(&x * &u) } else { &x * &u };
            prop_assert_eq!(f.canonical_generator(&x), f.canonical_generator(&y));
        }
    }
}

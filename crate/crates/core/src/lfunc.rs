// SPDX-License-Identifier: Apache-2.0

//! Dirichlet L-functions of Kronecker characters, Hecke L-series over a real
//! quadratic field, and their twists by relative quadratic characters.
//!
//! Over Q every series is reduced to Hurwitz zeta values, which are valid for
//! any `s != 1`. Over a quadratic field the series is a smoothed sum over
//! principal ideals, so only `Re s > 1` is available.

use std::collections::HashMap;

use num_complex::Complex64;
use num_traits::Signed;
use serde::Serialize;
use thiserror::Error;

use crate::arith::{factorize, is_fundamental_discriminant, mod_pow, primes_up_to, sqrt_mod};
use crate::field::{FieldElement, FieldError, PrincipalIdeal, TotallyRealField};
use crate::orbits::{enumerate_orbits, heegner_points, order_unit, OrbitError, QuadTriple, Signature};
use crate::special::{cutoff, cutoff_mellin, unit_partition};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LError {
    #[error("{0} is not a fundamental discriminant")]
    NotFundamental(String),
    #[error("ideal sums need Re(s) > 1, got {0}")]
    OutsideConvergence(f64),
    #[error("reached {achieved:e}, above the tolerance {tolerance:e}")]
    ToleranceUnreachable { achieved: f64, tolerance: f64 },
    #[error("character data does not match a field of degree {0}")]
    DegreeMismatch(usize),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
}

/// The Kronecker symbol `(d / n)`.
pub fn kronecker(d: i64, n: i64) -> i8 {
    if n == 0 {
        return if d.abs() == 1 { 1 } else { 0 };
    }
    let mut result: i8 = 1;
    let mut n = n;
    if n < 0 {
        n = -n;
        if d < 0 {
            result = -result;
        }
    }
    while n % 2 == 0 {
        n /= 2;
        match d.rem_euclid(8) {
            1 | 7 => {}
            3 | 5 => result = -result,
            _ => return 0,
        }
    }
    // Jacobi symbol (d mod n / n) for odd n
    let mut a = d.rem_euclid(n);
    let mut m = n;
    while a != 0 {
        while a % 2 == 0 {
            a /= 2;
            if matches!(m % 8, 3 | 5) {
                result = -result;
            }
        }
        std::mem::swap(&mut a, &mut m);
        if a % 4 == 3 && m % 4 == 3 {
            result = -result;
        }
        a %= m;
    }
    if m == 1 {
        result
    } else {
        0
    }
}

/// `chi_d(n)` for a fundamental discriminant `d`.
pub fn kronecker_chi(d: i64, n: i64) -> Result<i8, LError> {
    if !is_fundamental_discriminant(d) {
        return Err(LError::NotFundamental(d.to_string()));
    }
    Ok(kronecker(d, n))
}

// B_{2k} / (2k)!
const BERNOULLI_OVER_FACTORIAL: [f64; 12] = [
    1.0 / 12.0,
    -1.0 / 720.0,
    1.0 / 30_240.0,
    -1.0 / 1_209_600.0,
    1.0 / 47_900_160.0,
    -691.0 / 1_307_674_368_000.0,
    1.0 / 74_724_249_600.0,
    -3617.0 / 10_670_622_842_880_000.0,
    43_867.0 / 5_109_094_217_170_944_000.0,
    -174_611.0 / 802_857_662_698_291_200_000.0,
    77_683.0 / 14_101_100_039_391_805_440_000.0,
    -236_364_091.0 / 1_693_824_136_731_743_669_452_800_000.0,
];

/// `zeta(s, a) - 1/(s - 1)` by Euler–Maclaurin, finite at `s = 1`.
pub fn hurwitz_zeta_regular(s: Complex64, a: f64) -> Complex64 {
    let n = (24.0 + s.im.abs()).ceil() as usize;
    let mut total = Complex64::new(0.0, 0.0);
    for k in 0..n {
        total += (-s * (k as f64 + a).ln()).exp();
    }
    let x = n as f64 + a;
    let lx = x.ln();
    // (x^(1-s) - 1) / (s - 1), continuous through s = 1
    let sm1 = s - 1.0;
    let ratio = if sm1.norm() < 1e-6 {
        -lx * (1.0 - sm1 * lx / 2.0 + sm1 * sm1 * lx * lx / 6.0)
    } else {
        ((-sm1 * lx).exp() - 1.0) / sm1
    };
    total += ratio;
    total += (-s * lx).exp() / 2.0;
    let mut rising = s;
    let mut power = (-(s + 1.0) * lx).exp();
    for (k, coeff) in BERNOULLI_OVER_FACTORIAL.iter().enumerate() {
        total += rising * power * *coeff;
        let j = 2 * k + 1;
        rising = rising * (s + j as f64) * (s + (j + 1) as f64);
        power /= x * x;
    }
    total
}

/// The Hurwitz zeta function `zeta(s, a)`, `s != 1`, `a > 0`.
pub fn hurwitz_zeta(s: Complex64, a: f64) -> Complex64 {
    hurwitz_zeta_regular(s, a) + 1.0 / (s - 1.0)
}

pub fn riemann_zeta(s: Complex64) -> Complex64 {
    hurwitz_zeta(s, 1.0)
}

/// `L(s, chi_d)` for a fundamental `d` (`d = 1` gives `zeta`).
pub fn dirichlet_l(d: i64, s: Complex64) -> Complex64 {
    if d == 1 {
        return riemann_zeta(s);
    }
    let q = d.unsigned_abs() as f64;
    let mut total = Complex64::new(0.0, 0.0);
    for a in 1..=d.abs() {
        let chi = kronecker(d, a);
        if chi != 0 {
            total += hurwitz_zeta_regular(s, a as f64 / q) * chi as f64;
        }
    }
    total * (-s * q.ln()).exp()
}

/// Class number of the quadratic order of fundamental discriminant `d` from
/// `L(1, chi_d)`: `w sqrt|d| L / 2 pi` for `d < 0`, `sqrt d L / 2 log eps` for `d > 0`.
pub fn dirichlet_class_number(d: i64) -> f64 {
    let l = dirichlet_l(d, Complex64::new(1.0, 0.0)).re;
    let root = (d.unsigned_abs() as f64).sqrt();
    if d < 0 {
        let w = match d {
            -3 => 6.0,
            -4 => 4.0,
            _ => 2.0,
        };
        w * root * l / (2.0 * std::f64::consts::PI)
    } else {
        root * l / (2.0 * order_unit(d).log_unit)
    }
}

/// Which multiplicative function the series is built from.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum CharacterKind {
    /// `chi_d` over Q.
    Kronecker(i64),
    /// `lambda_m` alone.
    Hecke,
    /// `chi_{L/F} lambda_m` with `L = F(sqrt delta)`.
    Twisted(FieldElement),
}

#[derive(Clone, Debug, Serialize)]
pub struct CharacterSpec {
    pub kind: CharacterKind,
    pub m: Vec<i64>,
}

impl CharacterSpec {
    pub fn hecke(m: Vec<i64>) -> Self {
        CharacterSpec { kind: CharacterKind::Hecke, m }
    }

    pub fn twisted(delta: FieldElement, m: Vec<i64>) -> Self {
        CharacterSpec { kind: CharacterKind::Twisted(delta), m }
    }

    fn is_principal(&self) -> bool {
        matches!(self.kind, CharacterKind::Hecke) && self.m.iter().all(|&m| m == 0)
            || matches!(self.kind, CharacterKind::Kronecker(1))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LValue {
    pub value: Complex64,
    pub error_estimate: f64,
    /// Ideals summed (zero for the Hurwitz route).
    pub terms: usize,
}

/// How a rational prime decomposes in `F`.
#[derive(Clone, Debug)]
enum Decomposition {
    Split([FieldElement; 2]),
    Inert,
    Ramified(FieldElement),
}

#[derive(Clone, Debug)]
struct PrimeIdeal {
    generator: FieldElement,
    norm: i64,
    /// Root of the minimal polynomial of `w` mod `p`, when the residue field is `F_p`.
    root: Option<i64>,
    p: i64,
}

/// Roots of `t^2 - trace t - constant` modulo `p`.
fn omega_roots(field: &TotallyRealField, p: i64) -> Vec<i64> {
    let ring = field.ring();
    let poly = |x: i64| (x * x - ring.trace * x - ring.constant).rem_euclid(p);
    if p == 2 {
        return (0..2).filter(|&x| poly(x) == 0).collect();
    }
    let disc = (ring.trace * ring.trace + 4 * ring.constant).rem_euclid(p) as u64;
    let Some(r) = sqrt_mod(disc, p as u64) else {
        return Vec::new();
    };
    let half = (p + 1) / 2;
    let mut roots: Vec<i64> = [r as i64, -(r as i64)]
        .iter()
        .map(|&x| ((ring.trace + x).rem_euclid(p) * half).rem_euclid(p))
        .collect();
    roots.dedup();
    roots
}

fn decompose(field: &TotallyRealField, p: i64) -> Decomposition {
    let roots = omega_roots(field, p);
    let pi = || field.element_of_norm(p).expect("class number one gives a generator");
    match roots.len() {
        0 => Decomposition::Inert,
        1 => Decomposition::Ramified(pi()),
        _ => {
            let a = pi();
            Decomposition::Split([a.clone(), a.conj()])
        }
    }
}

fn residue_root(field: &TotallyRealField, pi: &FieldElement, p: i64) -> i64 {
    let (a, b) = pi.int_coords().unwrap();
    omega_roots(field, p)
        .into_iter()
        .find(|&r| (a as i128 + b as i128 * r as i128).rem_euclid(p as i128) == 0)
        .expect("generator lies in a degree-one prime")
}

fn primes_above(field: &TotallyRealField, p: i64) -> Vec<PrimeIdeal> {
    if field.degree() == 1 {
        return vec![PrimeIdeal { generator: field.element(p, 0), norm: p, root: Some(0), p }];
    }
    match decompose(field, p) {
        Decomposition::Inert => vec![PrimeIdeal { generator: field.element(p, 0), norm: p * p, root: None, p }],
        Decomposition::Ramified(pi) => {
            let root = residue_root(field, &pi, p);
            vec![PrimeIdeal { generator: pi, norm: p, root: Some(root), p }]
        }
        Decomposition::Split(pis) => pis
            .iter()
            .map(|pi| PrimeIdeal { generator: pi.clone(), norm: p, root: Some(residue_root(field, pi, p)), p })
            .collect(),
    }
}

fn valuation(x: &FieldElement, pi: &FieldElement) -> u32 {
    let mut v = 0;
    let mut y = x.clone();
    while let Some(q) = y.div_exact(pi) {
        if !q.is_integral() {
            break;
        }
        y = q;
        v += 1;
    }
    v
}

fn divides(x: &FieldElement, y: &FieldElement) -> bool {
    y.div_exact(x).is_some_and(|q| q.is_integral())
}

/// Whether `x` is congruent to a square modulo the ideal `(modulus)`.
fn is_square_mod(field: &TotallyRealField, x: &FieldElement, modulus: &FieldElement, residues: i64) -> bool {
    let b_range = if field.degree() == 1 { 0..1 } else { 0..residues };
    for b in b_range {
        for a in 0..residues {
            let r = field.element(a, b);
            if divides(modulus, &(&(&r * &r) - x)) {
                return true;
            }
        }
    }
    false
}

/// `chi_{L/F}` at the prime ideal `P`, for a fundamental `delta`.
fn local_chi(field: &TotallyRealField, delta: &FieldElement, prime: &PrimeIdeal) -> i8 {
    if divides(&prime.generator, delta) {
        return 0;
    }
    let p = prime.p;
    if p == 2 {
        let modulus = &field.element(4, 0) * &prime.generator;
        return if is_square_mod(field, delta, &modulus, 8) { 1 } else { -1 };
    }
    let residue = match prime.root {
        Some(r) => {
            let (a, b) = delta.int_coords().unwrap();
            (a as i128 + b as i128 * r as i128).rem_euclid(p as i128) as u64
        }
        None => delta.norm().to_integer().rem_euclid(p as i128) as u64,
    };
    if mod_pow(residue, (p as u64 - 1) / 2, p as u64) == 1 {
        1
    } else {
        -1
    }
}

fn is_square_element(field: &TotallyRealField, x: &FieldElement) -> bool {
    if x.embedding_sign(0) == std::cmp::Ordering::Less
        || (field.degree() == 2 && x.embedding_sign(1) == std::cmp::Ordering::Less)
    {
        return false;
    }
    let e = field.embeddings(x);
    let r: Vec<f64> = e.iter().map(|v| v.sqrt()).collect();
    let candidates = if field.degree() == 1 { vec![(r[0], r[0])] } else { vec![(r[0], r[1]), (r[0], -r[1])] };
    candidates.iter().any(|&(e1, e2)| {
        let y = crate::orbits::element_from_embeddings(field, e1, e2);
        &y * &y == *x
    })
}

/// Why `delta` fails to generate the relative discriminant of `F(sqrt delta)/F`.
pub fn fundamental_defect(field: &TotallyRealField, delta: &FieldElement) -> Option<String> {
    if delta.is_zero() || !delta.is_integral() {
        return Some("not a nonzero integral element".into());
    }
    if is_square_element(field, delta) {
        return Some("a square in F".into());
    }
    let four = field.element(4, 0);
    if !is_square_mod(field, delta, &four, 4) {
        return Some("not a square modulo 4".into());
    }
    let n = delta.norm().abs().to_integer() as u64;
    for (p, _) in factorize(n) {
        for prime in primes_above(field, p as i64) {
            if valuation(delta, &prime.generator) < 2 {
                continue;
            }
            if p != 2 {
                return Some(format!("divisible by the square of a prime above {p}"));
            }
            let pi2 = &prime.generator * &prime.generator;
            let reduced = delta.div_exact(&pi2).unwrap();
            if is_square_mod(field, &reduced, &four, 4) {
                return Some("not maximal at a prime above 2".into());
            }
        }
    }
    None
}

pub fn is_fundamental_relative(field: &TotallyRealField, delta: &FieldElement) -> bool {
    fundamental_defect(field, delta).is_none()
}

/// `chi_{L/F}` with its prime values cached.
pub struct RelativeCharacter<'a> {
    field: &'a TotallyRealField,
    delta: FieldElement,
    primes: HashMap<i64, Vec<(PrimeIdeal, i8)>>,
}

impl<'a> RelativeCharacter<'a> {
    pub fn new(field: &'a TotallyRealField, delta: &FieldElement) -> Result<Self, LError> {
        if let Some(reason) = fundamental_defect(field, delta) {
            return Err(LError::NotFundamental(format!("{delta}: {reason}")));
        }
        Ok(RelativeCharacter { field, delta: delta.clone(), primes: HashMap::new() })
    }

    fn primes(&mut self, p: i64) -> &[(PrimeIdeal, i8)] {
        let (field, delta) = (self.field, &self.delta);
        self.primes.entry(p).or_insert_with(|| {
            primes_above(field, p)
                .into_iter()
                .map(|pr| {
                    let chi = local_chi(field, delta, &pr);
                    (pr, chi)
                })
                .collect()
        })
    }

    /// `chi` on the ideal `(x)`.
    pub fn value(&mut self, x: &FieldElement) -> i8 {
        let n = x.norm().abs().to_integer() as u64;
        let mut result = 1i8;
        for (p, _) in factorize(n) {
            let primes = self.primes(p as i64).to_vec();
            for (pr, chi) in primes {
                let v = valuation(x, &pr.generator);
                if v > 0 {
                    result *= if v.is_multiple_of(2) { chi * chi } else { chi };
                }
            }
        }
        result
    }

    /// `chi` at every prime ideal of norm `<= bound`.
    fn prime_values(&mut self, bound: u64) -> Vec<(PrimeIdeal, i8)> {
        let mut out = Vec::new();
        for p in primes_up_to(bound) {
            for (pr, chi) in self.primes(p as i64).to_vec() {
                if pr.norm as u64 <= bound {
                    out.push((pr, chi));
                }
            }
        }
        out
    }
}

/// `chi_{L/F}(b)` for a principal ideal `b`.
pub fn relative_chi(field: &TotallyRealField, delta: &FieldElement, b: &PrincipalIdeal) -> Result<i8, LError> {
    Ok(RelativeCharacter::new(field, delta)?.value(&b.generator))
}

/// Residue of `zeta_F` at `s = 1`.
fn dedekind_residue(field: &TotallyRealField) -> f64 {
    if field.degree() == 1 {
        return 1.0;
    }
    let log_eps = field.fundamental_unit().unwrap().embed(0).abs().ln();
    2.0 * log_eps / (field.discriminant() as f64).sqrt()
}

/// Initial norm cutoff of the smoothed ideal sums and the largest one tried.
pub const IDEAL_SUM_START: f64 = 2000.0;
pub const IDEAL_SUM_LIMIT: f64 = 2_000_000.0;

fn smoothed_ideal_sum(
    field: &TotallyRealField,
    spec: &CharacterSpec,
    s: Complex64,
    bound: f64,
) -> Result<(Complex64, Complex64, usize), LError> {
    let ideals = field.enumerate_principal_ideals(bound)?;
    let e = field.grossen_exponents();
    let mut chi = match &spec.kind {
        CharacterKind::Twisted(delta) => Some(RelativeCharacter::new(field, delta)?),
        _ => None,
    };
    let mut full = Vec::with_capacity(ideals.len());
    let mut half = Vec::with_capacity(ideals.len());
    for ideal in &ideals {
        let mut a = field.lambda_m(&e, &spec.m, &ideal.generator)?;
        if let Some(c) = chi.as_mut() {
            let v = c.value(&ideal.generator);
            if v == 0 {
                continue;
            }
            a *= v as f64;
        }
        let n = ideal.norm as f64;
        let term = a * (-s * n.ln()).exp();
        full.push(term * cutoff(n / bound));
        half.push(term * cutoff(2.0 * n / bound));
    }
    let mut value = crate::hyperbolic::pairwise_sum(&full);
    let mut value_half = crate::hyperbolic::pairwise_sum(&half);
    if spec.is_principal() {
        let kappa = dedekind_residue(field);
        let k = cutoff_mellin(s);
        value += kappa * k * (-(s - 1.0) * bound.ln()).exp();
        value_half += kappa * k * (-(s - 1.0) * (bound / 2.0).ln()).exp();
    }
    Ok((value, value_half, ideals.len()))
}

/// `L(s, spec)`: Hurwitz route over Q, smoothed ideal sums over `Q(sqrt d)`.
pub fn l_series(field: &TotallyRealField, spec: &CharacterSpec, s: Complex64, tol: f64) -> Result<LValue, LError> {
    if field.degree() == 1 {
        let d = match &spec.kind {
            CharacterKind::Kronecker(d) => *d,
            CharacterKind::Hecke => 1,
            CharacterKind::Twisted(delta) => delta.int_coords().ok_or(LError::DegreeMismatch(1))?.0,
        };
        if d != 1 && !is_fundamental_discriminant(d) {
            return Err(LError::NotFundamental(d.to_string()));
        }
        return Ok(LValue { value: dirichlet_l(d, s), error_estimate: 1e-14, terms: 0 });
    }
    if matches!(spec.kind, CharacterKind::Kronecker(_)) || spec.m.len() != 1 {
        return Err(LError::DegreeMismatch(2));
    }
    if s.re <= 1.0 {
        return Err(LError::OutsideConvergence(s.re));
    }
    let mut bound = IDEAL_SUM_START;
    loop {
        let (value, value_half, terms) = smoothed_ideal_sum(field, spec, s, bound)?;
        let error_estimate = (value - value_half).norm();
        if error_estimate <= tol {
            return Ok(LValue { value, error_estimate, terms });
        }
        if bound * 2.0 > IDEAL_SUM_LIMIT {
            return Err(LError::ToleranceUnreachable { achieved: error_estimate, tolerance: tol });
        }
        bound *= 2.0;
    }
}

/// Heuristic value of a Hecke series on or left of `Re s = 1`, by the same
/// smoothed sum at a fixed cutoff. The error bar is the change under halving
/// the cutoff and carries no guarantee.
pub fn l_series_smoothed(
    field: &TotallyRealField,
    spec: &CharacterSpec,
    s: Complex64,
    bound: f64,
) -> Result<LValue, LError> {
    let (value, value_half, terms) = smoothed_ideal_sum(field, spec, s, bound)?;
    Ok(LValue { value, error_estimate: (value - value_half).norm(), terms })
}

/// The Euler product over prime ideals of norm `<= bound`. For principal
/// characters the omitted primes are accounted for by the prime ideal
/// theorem density, `log` of the tail being `E_1((s - 1) log bound)`.
pub fn euler_product(field: &TotallyRealField, spec: &CharacterSpec, s: Complex64, bound: u64) -> Result<Complex64, LError> {
    let e = field.grossen_exponents();
    let primes: Vec<(PrimeIdeal, i8)> = match &spec.kind {
        CharacterKind::Twisted(delta) => RelativeCharacter::new(field, delta)?.prime_values(bound),
        CharacterKind::Kronecker(d) => primes_up_to(bound)
            .into_iter()
            .map(|p| {
                let p = p as i64;
                (PrimeIdeal { generator: field.element(p, 0), norm: p, root: Some(0), p }, kronecker(*d, p))
            })
            .collect(),
        CharacterKind::Hecke => primes_up_to(bound)
            .into_iter()
            .flat_map(|p| primes_above(field, p as i64))
            .filter(|pr| pr.norm as u64 <= bound)
            .map(|pr| (pr, 1))
            .collect(),
    };
    let mut log_total = Complex64::new(0.0, 0.0);
    for (pr, chi) in &primes {
        if *chi == 0 {
            continue;
        }
        let gen = field.canonical_generator(&pr.generator);
        let a = field.lambda_m(&e, &spec.m, &gen)? * *chi as f64;
        let x = a * (-s * (pr.norm as f64).ln()).exp();
        log_total -= (Complex64::new(1.0, 0.0) - x).ln();
    }
    if spec.is_principal() && s.im == 0.0 {
        let tail = statrs::function::exponential::integral((s.re - 1.0) * (bound as f64).ln(), 1).unwrap_or(0.0);
        log_total += tail;
    }
    Ok(log_total.exp())
}

/// Truncation of the left-hand side of [`factor_check`].
#[derive(Clone, Debug, Serialize)]
pub struct FactorParams {
    /// Cutoff on `|N(q_h(-d, c))|`.
    pub bound: f64,
    pub tol: f64,
}

impl Default for FactorParams {
    fn default() -> Self {
        FactorParams { bound: 4.0e4, tol: 1e-9 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FactorReport {
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub residual: f64,
    pub lhs_estimate: f64,
    pub class_number: usize,
}

/// Integer coordinates of `(a0 + a1 w)(b0 + b1 w)`.
fn mul_coords(t: i128, c: i128, x: (i128, i128), y: (i128, i128)) -> (i128, i128) {
    (x.0 * y.0 + c * x.1 * y.1, x.0 * y.1 + x.1 * y.0 + t * x.1 * y.1)
}

/// `L(s, lambda_-m, L)` summed over elements `q_h(-d, c)` of the classes of
/// `L = F(sqrt delta)`, against `L(s, lambda_-m) L(s, chi lambda_-m)`.
pub fn factor_check(
    field: &TotallyRealField,
    delta: &FieldElement,
    m: &[i64],
    s: Complex64,
    params: &FactorParams,
) -> Result<FactorReport, LError> {
    if s.re <= 1.0 {
        return Err(LError::OutsideConvergence(s.re));
    }
    RelativeCharacter::new(field, delta)?;
    let orbits = enumerate_orbits(field, delta)?;
    let neg_m: Vec<i64> = m.iter().map(|v| -v).collect();
    let (lhs, lhs_half) = match orbits.signature {
        Signature::TotallyNegative => definite_class_sum(field, &orbits, &neg_m, s, params.bound)?,
        _ => indefinite_class_sum(field, &orbits, s, params.bound)?,
    };
    let first = l_series(field, &CharacterSpec::hecke(neg_m.clone()), s, params.tol)?;
    let second = l_series(field, &CharacterSpec::twisted(delta.clone(), neg_m), s, params.tol)?;
    let rhs = first.value * second.value;
    Ok(FactorReport {
        lhs,
        rhs,
        residual: (lhs - rhs).norm() / lhs.norm().max(rhs.norm()),
        lhs_estimate: (lhs - lhs_half).norm(),
        class_number: orbits.class_number(),
    })
}

fn triple_coords(h: &QuadTriple) -> [(i128, i128); 3] {
    let c = |x: &FieldElement| {
        let (a, b) = x.int_coords().expect("integral triple");
        (a as i128, b as i128)
    };
    [c(&h.alpha), c(&h.beta), c(&h.gamma)]
}

fn definite_class_sum(
    field: &TotallyRealField,
    orbits: &crate::orbits::OrbitSet,
    neg_m: &[i64],
    s: Complex64,
    bound: f64,
) -> Result<(Complex64, Complex64), LError> {
    use rayon::prelude::*;
    let g = field.degree();
    let ring = field.ring();
    let (t, cst) = (ring.trace as i128, ring.constant as i128);
    let e = field.grossen_exponents();
    let points = heegner_points(orbits)?;
    // |O_L^*| / |O^*|, read off the stabilizer of a Heegner point
    let unit_index = points[0].stabilizer_order as f64;
    let norm_delta: f64 = field.embeddings(&orbits.delta).iter().product::<f64>().abs();
    let scale = norm_delta.sqrt() / 2f64.powi(g as i32);
    let period = if g == 2 {
        let eps = field.fundamental_unit().unwrap();
        2.0 * (eps.embed(0).abs().ln() - eps.embed(1).abs().ln()).abs()
    } else {
        0.0
    };
    // log(q_1 / q_2) - log(h_1 / h_2) is this constant
    let offset = if g == 1 {
        0.0
    } else {
        0.5 * (orbits.delta.embed(0).abs() / orbits.delta.embed(1).abs()).ln()
    };
    let height_cap = if g == 1 {
        bound / scale
    } else {
        (bound / scale).sqrt() * ((period + offset.abs()) / 2.0).exp()
    };
    let trivial = neg_m.iter().all(|&v| v == 0);
    let k_s = cutoff_mellin(s);
    let covolume_term = if g == 1 {
        std::f64::consts::PI / 2.0
    } else {
        std::f64::consts::PI.powi(2) * period / (4.0 * field.discriminant() as f64)
    };
    let tail = |x: f64| -> Complex64 {
        if !trivial {
            return Complex64::new(0.0, 0.0);
        }
        let y = x / scale;
        (-s * scale.ln()).exp() * covolume_term * k_s * (-(s - 1.0) * y.ln()).exp()
    };
    let mut total = Complex64::new(0.0, 0.0);
    let mut total_half = Complex64::new(0.0, 0.0);
    for hp in &points {
        let [al, be, ga] = triple_coords(&hp.source);
        let z = &hp.z;
        let cs = field.elements_in_box([
            (height_cap / z.z[0].im).sqrt(),
            if g == 1 { 0.0 } else { (height_cap / z.z[1].im).sqrt() },
        ]);
        let parts: Vec<(Complex64, Complex64)> = cs
            .par_iter()
            .map(|&c| {
                let w = |j: usize| crate::field::omega_embedding(ring, j);
                let cj: Vec<f64> = (0..g).map(|j| c.0 as f64 + if g == 1 { 0.0 } else { c.1 as f64 * w(j) }).collect();
                let mut center = [0.0; 2];
                let mut radius = [0.0; 2];
                for j in 0..g {
                    let (x, y) = (z.z[j].re, z.z[j].im);
                    center[j] = -cj[j] * x;
                    radius[j] = (height_cap * y - (cj[j] * y).powi(2)).max(0.0).sqrt();
                }
                let mut acc = Vec::new();
                let mut acc_half = Vec::new();
                let cc = (c.0 as i128, c.1 as i128);
                for d in field.elements_near(center, radius) {
                    if c == (0, 0) && d == (0, 0) {
                        continue;
                    }
                    let dd = (d.0 as i128, d.1 as i128);
                    // q = alpha d^2 - beta c d + gamma c^2
                    let d2 = mul_coords(t, cst, dd, dd);
                    let cd = mul_coords(t, cst, cc, dd);
                    let c2 = mul_coords(t, cst, cc, cc);
                    let p1 = mul_coords(t, cst, al, d2);
                    let p2 = mul_coords(t, cst, be, cd);
                    let p3 = mul_coords(t, cst, ga, c2);
                    let q = (p1.0 - p2.0 + p3.0, p1.1 - p2.1 + p3.1);
                    let norm = if g == 1 { q.0 } else { q.0 * q.0 + t * q.0 * q.1 - cst * q.1 * q.1 };
                    let n = norm as f64;
                    if n >= bound {
                        continue;
                    }
                    let mut weight = 0.5;
                    let mut a = Complex64::new(1.0, 0.0);
                    if g == 2 {
                        let q1 = q.0 as f64 + q.1 as f64 * w(0);
                        let q2 = q.0 as f64 + q.1 as f64 * w(1);
                        weight *= unit_partition(q1.ln() - q2.ln(), period);
                        if weight == 0.0 {
                            continue;
                        }
                        if !trivial {
                            a = e.lambda_embedded(neg_m, &[q1, q2]);
                        }
                    }
                    let term = a * (-s * n.ln()).exp() * weight;
                    acc.push(term * cutoff(n / bound));
                    acc_half.push(term * cutoff(2.0 * n / bound));
                }
                (crate::hyperbolic::pairwise_sum(&acc), crate::hyperbolic::pairwise_sum(&acc_half))
            })
            .collect();
        let head: Vec<Complex64> = parts.iter().map(|p| p.0).collect();
        let head_half: Vec<Complex64> = parts.iter().map(|p| p.1).collect();
        total += crate::hyperbolic::pairwise_sum(&head) + tail(bound);
        total_half += crate::hyperbolic::pairwise_sum(&head_half) + tail(bound / 2.0);
    }
    Ok((total / unit_index, total_half / unit_index))
}

fn indefinite_class_sum(
    field: &TotallyRealField,
    orbits: &crate::orbits::OrbitSet,
    s: Complex64,
    bound: f64,
) -> Result<(Complex64, Complex64), LError> {
    if field.degree() != 1 {
        return Err(LError::Orbit(OrbitError::UnsupportedGeodesicDegree));
    }
    let d = orbits.delta.int_coords().unwrap().0;
    let root = (d as f64).sqrt();
    let period = 2.0 * order_unit(d).log_unit;
    let k_s = cutoff_mellin(s);
    let tail = |x: f64| (-(s - 1.0) * x.ln()).exp() * k_s * (period / root);
    let mut total = Complex64::new(0.0, 0.0);
    let mut total_half = Complex64::new(0.0, 0.0);
    for h in &orbits.representatives {
        let [(a, _), (b, _), (c, _)] = triple_coords(h);
        let (af, bf) = (a as f64, b as f64);
        let cap = (af.abs() * bound).sqrt() * (period / 2.0).exp();
        let ymax = (2.0 * cap / root).floor() as i64;
        let mut acc = Vec::new();
        let mut acc_half = Vec::new();
        for y in -ymax..=ymax {
            let yf = y as f64;
            let shift = yf * (bf - root) / 2.0;
            let (e1, e2) = ((-cap - shift) / af, (cap - shift) / af);
            let lo = e1.min(e2).floor() as i64 - 1;
            let hi = e1.max(e2).ceil() as i64 + 1;
            for x in lo..=hi {
                if x == 0 && y == 0 {
                    continue;
                }
                let q = a * (x as i128).pow(2) + b * x as i128 * y as i128 + c * (y as i128).pow(2);
                let n = (q.abs()) as f64;
                if n == 0.0 || n >= bound {
                    continue;
                }
                let eta1 = af * x as f64 + yf * (bf - root) / 2.0;
                let eta2 = af * x as f64 + yf * (bf + root) / 2.0;
                let weight = 0.5 * unit_partition(eta1.abs().ln() - eta2.abs().ln(), period);
                if weight == 0.0 {
                    continue;
                }
                let term = (-s * n.ln()).exp() * weight;
                acc.push(term * cutoff(n / bound));
                acc_half.push(term * cutoff(2.0 * n / bound));
            }
        }
        total += crate::hyperbolic::pairwise_sum(&acc) + tail(bound);
        total_half += crate::hyperbolic::pairwise_sum(&acc_half) + tail(bound / 2.0);
    }
    Ok((total, total_half))
}

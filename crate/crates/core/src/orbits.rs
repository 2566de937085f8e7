// SPDX-License-Identifier: Apache-2.0

//! Orbits of integral quadratic triples `(alpha, beta, gamma)` under
//! `g h g^t`, their class numbers, Heegner points and closed geodesics.

use std::cmp::Ordering;

use num_complex::Complex64;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::arith::{is_square, isqrt};
use crate::field::{FieldElement, FieldError, TotallyRealField};
use crate::hyperbolic::{reduce_hilbert, HyperbolicError, Sl2Matrix, Sl2Z, UHPPoint};

/// Upper bound on the number of `c` candidates examined by one equivalence search.
pub const EQUIVALENCE_SEARCH_CAP: usize = 200_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbitError {
    #[error("discriminant is zero")]
    ZeroDiscriminant,
    #[error("discriminant {0} is a square in the base field")]
    SquareDiscriminant(String),
    #[error("discriminant {0} is neither totally positive nor totally negative")]
    MixedSignature(String),
    #[error("search exceeded its cap: {0}")]
    SearchOverflow(String),
    #[error("operation needs a {expected} discriminant")]
    WrongSignature { expected: &'static str },
    #[error("closed geodesics are implemented for the rational field only")]
    UnsupportedGeodesicDegree,
    #[error("triple coefficients must be integral")]
    NonIntegral,
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Hyperbolic(#[from] HyperbolicError),
}

/// Sign pattern of a discriminant across the real embeddings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Signature {
    TotallyNegative,
    TotallyPositive,
    Mixed,
}

pub fn signature(x: &FieldElement, degree: usize) -> Signature {
    let signs: Vec<Ordering> = (0..degree).map(|j| x.embedding_sign(j)).collect();
    if signs.iter().all(|&s| s == Ordering::Less) {
        Signature::TotallyNegative
    } else if signs.iter().all(|&s| s == Ordering::Greater) {
        Signature::TotallyPositive
    } else {
        Signature::Mixed
    }
}

/// An integral triple `h = (alpha, beta, gamma)` with form `alpha x^2 + beta x y + gamma y^2`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct QuadTriple {
    pub alpha: FieldElement,
    pub beta: FieldElement,
    pub gamma: FieldElement,
}

impl QuadTriple {
    pub fn new(alpha: FieldElement, beta: FieldElement, gamma: FieldElement) -> Result<Self, OrbitError> {
        if !(alpha.is_integral() && beta.is_integral() && gamma.is_integral()) {
            return Err(OrbitError::NonIntegral);
        }
        Ok(QuadTriple { alpha, beta, gamma })
    }

    pub fn from_ints(field: &TotallyRealField, a: i64, b: i64, c: i64) -> Self {
        QuadTriple { alpha: field.element(a, 0), beta: field.element(b, 0), gamma: field.element(c, 0) }
    }

    pub fn discriminant(&self) -> FieldElement {
        let four = FieldElement::from_ints(self.alpha.ring(), 4, 0);
        &(&self.beta * &self.beta) - &(&four * &(&self.alpha * &self.gamma))
    }

    pub fn value(&self, x: &FieldElement, y: &FieldElement) -> FieldElement {
        &(&(&self.alpha * &(x * x)) + &(&self.beta * &(x * y))) + &(&self.gamma * &(y * y))
    }

    /// The action `h -> g h g^t` on the symmetric matrix `[[alpha, beta/2], [beta/2, gamma]]`.
    pub fn act(&self, g: &Sl2Matrix) -> QuadTriple {
        let two = FieldElement::from_ints(self.alpha.ring(), 2, 0);
        let alpha = self.value(&g.a, &g.b);
        let gamma = self.value(&g.c, &g.d);
        let beta = &(&(&two * &(&(&g.a * &g.c) * &self.alpha)) + &(&(&(&g.a * &g.d) + &(&g.b * &g.c)) * &self.beta))
            + &(&two * &(&(&g.b * &g.d) * &self.gamma));
        QuadTriple { alpha, beta, gamma }
    }

    pub fn neg(&self) -> QuadTriple {
        QuadTriple { alpha: -self.alpha.clone(), beta: -self.beta.clone(), gamma: -self.gamma.clone() }
    }

    pub fn embed(&self, j: usize) -> (f64, f64, f64) {
        (self.alpha.embed(j), self.beta.embed(j), self.gamma.embed(j))
    }

    /// Integer coordinates, used for deterministic ordering.
    pub fn key(&self) -> [i64; 6] {
        let (a0, a1) = self.alpha.int_coords().unwrap_or((0, 0));
        let (b0, b1) = self.beta.int_coords().unwrap_or((0, 0));
        let (c0, c1) = self.gamma.int_coords().unwrap_or((0, 0));
        [a0, a1, b0, b1, c0, c1]
    }

    pub fn rational_coeffs(&self) -> (i64, i64, i64) {
        let k = self.key();
        (k[0], k[2], k[4])
    }

    /// The root in the upper half-plane of each embedding (totally negative discriminant).
    pub fn heegner_root(&self, degree: usize) -> UHPPoint {
        let disc = self.discriminant();
        let z = (0..degree)
            .map(|j| {
                let (a, b, _) = self.embed(j);
                let root = Complex64::new(-b, disc.embed(j).abs().sqrt()) / (2.0 * a);
                if root.im < 0.0 {
                    root.conj()
                } else {
                    root
                }
            })
            .collect();
        UHPPoint { z }
    }

    /// Real roots `(w-, w+)` of each embedding, `w- < w+` (totally positive discriminant).
    pub fn real_roots(&self, degree: usize) -> Vec<(f64, f64)> {
        let disc = self.discriminant();
        (0..degree)
            .map(|j| {
                let (a, b, _) = self.embed(j);
                let r = disc.embed(j).sqrt();
                let (p, q) = ((-b - r) / (2.0 * a), (-b + r) / (2.0 * a));
                if p < q {
                    (p, q)
                } else {
                    (q, p)
                }
            })
            .collect()
    }
}

/// Complete set of inequivalent representatives for one discriminant.
#[derive(Clone, Debug, Serialize)]
pub struct OrbitSet {
    #[serde(skip)]
    pub field: TotallyRealField,
    pub delta: FieldElement,
    pub signature: Signature,
    pub representatives: Vec<QuadTriple>,
}

impl OrbitSet {
    pub fn class_number(&self) -> usize {
        self.representatives.len()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HeegnerPoint {
    pub z: UHPPoint,
    pub source: QuadTriple,
    /// Order of the stabilizer of `z` in `SL(2, O) / {+-1}`.
    pub stabilizer_order: u32,
}

#[derive(Clone, Debug, Serialize)]
pub struct GeodesicCycle {
    pub source: QuadTriple,
    /// `(w-, w+)` per embedding.
    pub endpoints: Vec<(f64, f64)>,
    /// Generators of the period lattice, one row per generator.
    pub period_basis: Vec<Vec<f64>>,
    /// Covolume of the period lattice.
    pub volume: f64,
    /// Generator of the proper automorphs, when its entries fit in `i64`.
    pub automorph: Option<Sl2Z>,
}

fn is_square_in_field(field: &TotallyRealField, x: &FieldElement) -> bool {
    if field.degree() == 1 {
        return x.int_coords().is_some_and(|(a, _)| is_square(a as i128));
    }
    if !x.is_totally_positive() {
        return false;
    }
    let (r1, r2) = (x.embed(0).sqrt(), x.embed(1).sqrt());
    [(r1, r2), (r1, -r2)].iter().any(|&(e1, e2)| {
        let y = element_from_embeddings(field, e1, e2);
        &y * &y == *x
    })
}

/// The integral element nearest to the given embedding pair.
pub fn element_from_embeddings(field: &TotallyRealField, e1: f64, e2: f64) -> FieldElement {
    if field.degree() == 1 {
        return field.element(e1.round() as i64, 0);
    }
    let w1 = crate::field::omega_embedding(field.ring(), 0);
    let w2 = crate::field::omega_embedding(field.ring(), 1);
    let t = (e1 - e2) / (w1 - w2);
    let s = e1 - t * w1;
    field.element(s.round() as i64, t.round() as i64)
}

/// Enumerate `SL(2, O)`-orbits of triples with discriminant `delta`.
///
/// Totally negative discriminants count positive definite triples; for
/// indefinite triples over Q, a triple and its negative are identified.
pub fn enumerate_orbits(field: &TotallyRealField, delta: &FieldElement) -> Result<OrbitSet, OrbitError> {
    if delta.is_zero() {
        return Err(OrbitError::ZeroDiscriminant);
    }
    if !delta.is_integral() {
        return Err(OrbitError::NonIntegral);
    }
    let sig = signature(delta, field.degree());
    let representatives = match sig {
        Signature::Mixed => return Err(OrbitError::MixedSignature(delta.to_string())),
        Signature::TotallyPositive if is_square_in_field(field, delta) => {
            return Err(OrbitError::SquareDiscriminant(delta.to_string()))
        }
        Signature::TotallyNegative if field.degree() == 1 => {
            let d = delta.int_coords().unwrap().0;
            definite_reduced_forms(d).into_iter().map(|(a, b, c)| QuadTriple::from_ints(field, a, b, c)).collect()
        }
        Signature::TotallyNegative => definite_orbits_quadratic(field, delta)?,
        Signature::TotallyPositive if field.degree() == 1 => {
            let d = delta.int_coords().unwrap().0;
            indefinite_classes(d)
                .into_iter()
                .map(|cycle| {
                    let (a, b, c) = cycle.representative;
                    QuadTriple::from_ints(field, a, b, c)
                })
                .collect()
        }
        Signature::TotallyPositive => return Err(OrbitError::UnsupportedGeodesicDegree),
    };
    Ok(OrbitSet { field: field.clone(), delta: delta.clone(), signature: sig, representatives })
}

/// Reduced positive definite forms `|b| <= a <= c` of discriminant `d < 0`.
pub fn definite_reduced_forms(d: i64) -> Vec<(i64, i64, i64)> {
    let mut out = Vec::new();
    let amax = isqrt((-d / 3) as i128) as i64;
    for a in 1..=amax {
        for b in -a..=a {
            let num = b * b - d;
            if num % (4 * a) != 0 {
                continue;
            }
            let c = num / (4 * a);
            if c < a || (b < 0 && (-b == a || a == c)) {
                continue;
            }
            out.push((a, b, c));
        }
    }
    out
}

fn is_reduced_indefinite(d: i64, a: i64, b: i64) -> bool {
    let r = (d as f64).sqrt();
    let two_a = 2.0 * a.abs() as f64;
    b > 0 && (b as f64) < r && r - (b as f64) < two_a && two_a < r + b as f64
}

/// The reduction operator on indefinite forms and the shift `s` of its
/// substitution `(x, y) -> (-y, x + s y)`.
pub fn rho(d: i64, (_, b, c): (i64, i64, i64)) -> ((i64, i64, i64), i64) {
    let r = (d as f64).sqrt();
    let m = 2 * c;
    let base = (-b).rem_euclid(m.abs());
    let cf = c.abs() as f64;
    let (lo, hi) = if cf < r { (r - 2.0 * cf, r) } else { (-cf, cf) };
    // smallest representative of -b mod 2|c| above lo
    let step = m.abs() as f64;
    let k = ((lo - base as f64) / step).floor() as i64;
    let mut b2 = base + k * m.abs();
    while (b2 as f64) <= lo {
        b2 += m.abs();
    }
    debug_assert!((b2 as f64) <= hi + 1e-9);
    let s = (b2 + b) / m;
    let c2 = (b2 * b2 - d) / (4 * c);
    ((c, b2, c2), s)
}

/// One class of indefinite forms modulo `h ~ -h`, with its reduction cycle.
#[derive(Clone, Debug, Serialize)]
pub struct IndefiniteClass {
    pub representative: (i64, i64, i64),
    /// The narrow reduction cycle through the representative.
    pub cycle: Vec<(i64, i64, i64)>,
    /// Shifts of the substitutions along the cycle.
    pub shifts: Vec<i64>,
}

/// Classes of indefinite forms of discriminant `d > 0` (non-square), modulo sign.
pub fn indefinite_classes(d: i64) -> Vec<IndefiniteClass> {
    let r = (d as f64).sqrt();
    let mut reduced = Vec::new();
    for b in 1..=(r.floor() as i64) {
        if (b * b - d) % 4 != 0 {
            continue;
        }
        let amax = ((r + b as f64) / 2.0).ceil() as i64;
        for a in (-amax..=amax).filter(|&a| a != 0) {
            if !is_reduced_indefinite(d, a, b) {
                continue;
            }
            let num = b * b - d;
            if num % (4 * a) == 0 {
                reduced.push((a, b, num / (4 * a)));
            }
        }
    }
    reduced.sort();
    let mut seen = std::collections::BTreeSet::new();
    let mut classes = Vec::new();
    for &f in &reduced {
        if seen.contains(&f) {
            continue;
        }
        let mut cycle = vec![f];
        let mut shifts = Vec::new();
        let mut cur = f;
        loop {
            let (next, s) = rho(d, cur);
            shifts.push(s);
            if next == f {
                break;
            }
            cycle.push(next);
            cur = next;
        }
        let negated: Vec<_> = cycle.iter().map(|&(a, b, c)| (-a, b, -c)).collect();
        for g in cycle.iter().chain(&negated) {
            seen.insert(*g);
        }
        let key = |f: &(i64, i64, i64)| (f.0 < 0, f.0.abs(), f.1, f.2);
        let representative = *cycle.iter().chain(&negated).min_by_key(|f| key(f)).unwrap();
        // rotate the cycle so that it starts at the representative
        let (cycle, shifts) = if let Some(pos) = cycle.iter().position(|&g| g == representative) {
            (rotate(&cycle, pos), rotate(&shifts, pos))
        } else {
            let pos = negated.iter().position(|&g| g == representative).unwrap();
            // the negated cycle has negated shifts
            let neg_shifts: Vec<i64> = shifts.iter().map(|s| -s).collect();
            (rotate(&negated, pos), rotate(&neg_shifts, pos))
        };
        classes.push(IndefiniteClass { representative, cycle, shifts });
    }
    classes
}

fn rotate<T: Clone>(v: &[T], k: usize) -> Vec<T> {
    v[k..].iter().chain(&v[..k]).cloned().collect()
}

impl IndefiniteClass {
    /// `log` of the norm-one automorph eigenvalue, from the roots along the cycle.
    pub fn log_automorph(&self, d: i64) -> f64 {
        let r = (d as f64).sqrt();
        let (a, b, _) = self.cycle[0];
        let mut theta = (-(b as f64) + r) / (2.0 * a as f64);
        let mut total = 0.0;
        for (i, &s) in self.shifts.iter().enumerate() {
            total += theta.abs().ln();
            let next = -(1.0 + s as f64 * theta) / theta;
            let (a2, b2, _) = self.cycle[(i + 1) % self.cycle.len()];
            // snap to the exact root to stop error growth
            let roots = [(-(b2 as f64) + r) / (2.0 * a2 as f64), (-(b2 as f64) - r) / (2.0 * a2 as f64)];
            theta = if (roots[0] - next).abs() < (roots[1] - next).abs() { roots[0] } else { roots[1] };
        }
        total.abs()
    }

    /// Product of the cycle substitutions, when it fits in `i64`.
    pub fn automorph(&self) -> Option<Sl2Z> {
        let mut m = [[1i64, 0], [0, 1]];
        for &s in &self.shifts {
            let step = [[0i64, -1], [1, s]];
            let mut next = [[0i64; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    next[i][j] = m[i][0].checked_mul(step[0][j])?.checked_add(m[i][1].checked_mul(step[1][j])?)?;
                }
            }
            m = next;
        }
        Some(Sl2Z { a: m[0][0], b: m[0][1], c: m[1][0], d: m[1][1] })
    }
}

/// Fundamental unit data of the quadratic order of discriminant `d > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OrderUnit {
    /// `log` of the fundamental unit.
    pub log_unit: f64,
    /// Its norm, `+1` or `-1`.
    pub norm: i64,
}

impl OrderUnit {
    /// `log` of the smallest unit of norm `+1` above one.
    pub fn log_norm_one(&self) -> f64 {
        if self.norm == -1 {
            2.0 * self.log_unit
        } else {
            self.log_unit
        }
    }
}

/// Fundamental unit of the order of discriminant `d` by the continued
/// fraction of `(d mod 2 + sqrt d) / 2`.
pub fn order_unit(d: i64) -> OrderUnit {
    let r = (d as f64).sqrt();
    let sd = isqrt(d as i128) as i64;
    let (mut p, mut q) = (d.rem_euclid(2), 2i64);
    let mut states = std::collections::HashMap::new();
    let mut logs = Vec::new();
    let mut i = 0usize;
    loop {
        if let Some(&start) = states.get(&(p, q)) {
            let period = i - start;
            let log_unit: f64 = logs[start..].iter().sum();
            let norm = if period % 2 == 1 { -1 } else { 1 };
            return OrderUnit { log_unit, norm };
        }
        states.insert((p, q), i);
        logs.push(((p as f64 + r) / q as f64).ln());
        let a = (p + sd).div_euclid(q);
        p = a * q - p;
        q = (d - p * p) / q;
        i += 1;
    }
}

/// Index of the norm-one units times `{+-1}` in all units, for `d > 0` over Q.
pub fn unit_index(d: i64) -> u32 {
    if order_unit(d).norm == -1 {
        2
    } else {
        1
    }
}

/// Minkowski bound of the quartic field `F(sqrt delta)`, `delta` totally negative.
fn minkowski_bound_cm(field: &TotallyRealField, delta: &FieldElement) -> f64 {
    let nd = delta.norm().abs().to_f64().unwrap();
    let sqrt_disc = field.discriminant() as f64 * nd.sqrt();
    let pi = std::f64::consts::PI;
    24.0 / 256.0 * (4.0 / pi).powi(2) * sqrt_disc
}

fn definite_orbits_quadratic(field: &TotallyRealField, delta: &FieldElement) -> Result<Vec<QuadTriple>, OrbitError> {
    let ring = field.ring();
    let bound = minkowski_bound_cm(field, delta).floor().max(1.0);
    let eps = field.fundamental_unit().unwrap().clone();
    let four = FieldElement::from_ints(ring, 4, 0);
    let mut alphas = Vec::new();
    for ideal in field.enumerate_principal_ideals(bound)? {
        let x = ideal.generator;
        for u in [FieldElement::one(ring), -FieldElement::one(ring), eps.clone(), -eps.clone()] {
            let y = &u * &x;
            if y.is_totally_positive() {
                alphas.push(y);
            }
        }
    }
    let mut candidates = Vec::new();
    for alpha in &alphas {
        let n = alpha.norm().abs().to_integer() as i64;
        let four_alpha = &four * alpha;
        for a in 0..2 * n {
            for b in 0..2 * n {
                let beta = field.element(a, b);
                let num = &(&beta * &beta) - delta;
                if let Some(gamma) = num.div_exact(&four_alpha) {
                    if gamma.is_integral() {
                        candidates.push(QuadTriple { alpha: alpha.clone(), beta, gamma });
                    }
                }
            }
        }
    }
    let mut reduced: Vec<(QuadTriple, UHPPoint)> = Vec::new();
    for h in candidates {
        let z = h.heegner_root(2);
        let red = reduce_hilbert(&z, field)?;
        // z_{g h} = (g^t)^{-1} z_h, so the triple moves by (m^t)^{-1}
        let g = red.transform.transpose().inverse();
        let h2 = h.act(&g);
        reduced.push((h2, red.point));
    }
    reduced.sort_by(|p, q| triple_order(&p.0, &q.0));
    reduced.dedup_by(|p, q| p.0 == q.0);
    let mut classes: Vec<(QuadTriple, UHPPoint)> = Vec::new();
    for (h, z) in reduced {
        let mut known = false;
        for (h0, z0) in &classes {
            if !find_transforms(field, h0, z0, &h, &z, true)?.is_empty() {
                known = true;
                break;
            }
        }
        if !known {
            classes.push((h, z));
        }
    }
    Ok(classes.into_iter().map(|c| c.0).collect())
}

fn triple_order(p: &QuadTriple, q: &QuadTriple) -> Ordering {
    let np = p.alpha.norm().abs();
    let nq = q.alpha.norm().abs();
    np.cmp(&nq).then_with(|| p.key().cmp(&q.key()))
}

/// Matrices `gamma` in `SL(2, O)` with `gamma z = w` that carry the triple
/// `h` (root `z`) to `h2` (root `w`), found by an exhaustive box search.
///
/// With `first_only` the search stops at the first hit.
pub fn find_transforms(
    field: &TotallyRealField,
    h: &QuadTriple,
    z: &UHPPoint,
    h2: &QuadTriple,
    w: &UHPPoint,
    first_only: bool,
) -> Result<Vec<Sl2Matrix>, OrbitError> {
    let g = field.degree();
    let ratio: Vec<f64> = (0..g).map(|j| z.z[j].im / w.z[j].im).collect();
    let mut crad = [0.0; 2];
    for j in 0..g {
        crad[j] = (1.0 / (z.z[j].im * w.z[j].im)).sqrt() * (1.0 + 1e-9);
    }
    if g == 1 {
        crad[1] = crad[0];
    }
    let cs = field.elements_in_box(crad);
    if cs.len() > EQUIVALENCE_SEARCH_CAP {
        return Err(OrbitError::SearchOverflow(format!("{} candidate lower-left entries", cs.len())));
    }
    let mut out = Vec::new();
    for (c0, c1) in cs {
        let c = field.element(c0, c1);
        let cj: Vec<f64> = (0..g).map(|j| c.embed(j)).collect();
        let mut center = [0.0; 2];
        let mut radius = [0.0; 2];
        for j in 0..g {
            center[j] = -cj[j] * z.z[j].re;
            radius[j] = ratio[j].sqrt() * (1.0 + 1e-9) + 1e-9;
        }
        for (d0, d1) in field.elements_near(center, radius) {
            let d = field.element(d0, d1);
            let mut ok = true;
            let mut a_emb = [0.0; 2];
            let mut b_emb = [0.0; 2];
            for j in 0..g {
                let den = z.z[j] * cj[j] + d.embed(j);
                if (den.norm_sqr() / ratio[j] - 1.0).abs() > 1e-6 {
                    ok = false;
                    break;
                }
                let num = w.z[j] * den;
                a_emb[j] = num.im / z.z[j].im;
                b_emb[j] = num.re - a_emb[j] * z.z[j].re;
            }
            if !ok {
                continue;
            }
            let (a, b) = if g == 1 {
                (field.element(a_emb[0].round() as i64, 0), field.element(b_emb[0].round() as i64, 0))
            } else {
                (
                    element_from_embeddings(field, a_emb[0], a_emb[1]),
                    element_from_embeddings(field, b_emb[0], b_emb[1]),
                )
            };
            let gamma = Sl2Matrix { a, b, c: c.clone(), d };
            if !gamma.det().is_one_element() {
                continue;
            }
            if h.act(&gamma.transpose().inverse()) == *h2 {
                out.push(gamma);
                if first_only {
                    return Ok(out);
                }
            }
        }
    }
    Ok(out)
}

trait IsOne {
    fn is_one_element(&self) -> bool;
}

impl IsOne for FieldElement {
    fn is_one_element(&self) -> bool {
        self.a.is_one() && self.b.is_zero()
    }
}

/// One Heegner point per orbit, with the order of its stabilizer.
pub fn heegner_points(orbits: &OrbitSet) -> Result<Vec<HeegnerPoint>, OrbitError> {
    if orbits.signature != Signature::TotallyNegative {
        return Err(OrbitError::WrongSignature { expected: "totally negative" });
    }
    let field = &orbits.field;
    orbits
        .representatives
        .iter()
        .map(|h| {
            let z = h.heegner_root(field.degree());
            let stab = find_transforms(field, h, &z, h, &z, false)?;
            Ok(HeegnerPoint { z, source: h.clone(), stabilizer_order: (stab.len() / 2).max(1) as u32 })
        })
        .collect()
}

/// One closed geodesic per orbit (rational field only).
pub fn geodesic_cycles(orbits: &OrbitSet) -> Result<Vec<GeodesicCycle>, OrbitError> {
    if orbits.signature != Signature::TotallyPositive {
        return Err(OrbitError::WrongSignature { expected: "totally positive" });
    }
    if orbits.field.degree() != 1 {
        return Err(OrbitError::UnsupportedGeodesicDegree);
    }
    let d = orbits.delta.int_coords().unwrap().0;
    let classes = indefinite_classes(d);
    let mut out = Vec::new();
    for h in &orbits.representatives {
        let key = h.rational_coeffs();
        let class = classes
            .iter()
            .find(|c| c.representative == key)
            .ok_or_else(|| OrbitError::SearchOverflow(format!("no reduction cycle through {key:?}")))?;
        let length = 2.0 * class.log_automorph(d);
        out.push(GeodesicCycle {
            source: h.clone(),
            endpoints: h.real_roots(1),
            period_basis: vec![vec![length]],
            volume: length,
            automorph: class.automorph(),
        });
    }
    Ok(out)
}

/// Total geodesic volume computed from the cycles and from `h(Delta) R`.
#[derive(Clone, Debug, Serialize)]
pub struct MuDelta {
    pub class_number: usize,
    pub regulator: f64,
    pub from_cycles: f64,
    pub from_regulator: f64,
}

impl MuDelta {
    pub fn residual(&self) -> f64 {
        (self.from_cycles - self.from_regulator).abs() / self.from_regulator
    }
}

pub fn mu_delta(field: &TotallyRealField, delta: &FieldElement) -> Result<MuDelta, OrbitError> {
    let orbits = enumerate_orbits(field, delta)?;
    let cycles = geodesic_cycles(&orbits)?;
    let d = delta.int_coords().unwrap().0;
    let regulator = 2.0 * order_unit(d).log_norm_one();
    let from_cycles = cycles.iter().map(|c| c.volume).sum();
    Ok(MuDelta {
        class_number: cycles.len(),
        regulator,
        from_cycles,
        from_regulator: cycles.len() as f64 * regulator,
    })
}

/// Rational discriminant as a field element.
pub fn rational_delta(field: &TotallyRealField, d: i64) -> FieldElement {
    field.element(d, 0)
}

/// Whether the coefficients of a rational triple are coprime.
pub fn is_primitive(a: i64, b: i64, c: i64) -> bool {
    crate::arith::gcd(crate::arith::gcd(a, b), c) == 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::is_fundamental_discriminant;
    use crate::field::make_field;

    fn q() -> TotallyRealField {
        make_field(1, None).unwrap()
    }

    fn q5() -> TotallyRealField {
        make_field(2, Some(5)).unwrap()
    }

    /// Classes of definite forms by brute-force equivalence over small matrices.
    fn brute_force_class_number(d: i64) -> usize {
        let mut forms = Vec::new();
        let bound = -d;
        for a in 1..=bound {
            for b in -a..=a {
                let num = b * b - d;
                if num % (4 * a) == 0 {
                    forms.push((a, b, num / (4 * a)));
                }
            }
        }
        // reduce each by the classical algorithm implemented independently
        let reduce = |(mut a, mut b, mut c): (i64, i64, i64)| loop {
            if c < a {
                std::mem::swap(&mut a, &mut c);
                b = -b;
                continue;
            }
            if b > a || b <= -a {
                let k = (a - b).div_euclid(2 * a);
                let nb = b + 2 * a * k;
                c = (nb * nb - d) / (4 * a);
                b = nb;
                continue;
            }
            if a == c && b < 0 {
                b = -b;
            }
            return (a, b, c);
        };
        let mut reps: Vec<_> = forms.into_iter().map(reduce).collect();
        reps.sort();
        reps.dedup();
        reps.len()
    }

    #[test]
    fn gaussian_discriminant() {
        let f = q();
        let o = enumerate_orbits(&f, &rational_delta(&f, -4)).unwrap();
        assert_eq!(o.class_number(), 1);
        assert_eq!(o.representatives[0], QuadTriple::from_ints(&f, 1, 0, 1));
        let pts = heegner_points(&o).unwrap();
        assert!((pts[0].z.z[0] - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        assert_eq!(pts[0].stabilizer_order, 2);
    }

    #[test]
    fn stabilizer_orders_match_small_matrix_search() {
        let f = q();
        for (d, expected) in [(-3, 3u32), (-4, 2), (-7, 1), (-8, 1), (-23, 1)] {
            let o = enumerate_orbits(&f, &rational_delta(&f, d)).unwrap();
            for p in heegner_points(&o).unwrap() {
                let z = p.z.z[0];
                let mut count = 0;
                for a in -3..=3i64 {
                    for b in -3..=3i64 {
                        for c in -3..=3i64 {
                            for dd in -3..=3i64 {
                                if a * dd - b * c != 1 {
                                    continue;
                                }
                                let m = Sl2Z { a, b, c, d: dd };
                                if (m.apply(z) - z).norm() < 1e-12 {
                                    count += 1;
                                }
                            }
                        }
                    }
                }
                assert_eq!(p.stabilizer_order, count / 2, "d={d}");
                if d == -3 || d == -4 {
                    assert_eq!(p.stabilizer_order, expected);
                }
            }
        }
    }

    #[test]
    fn class_numbers_match_independent_reduction() {
        let f = q();
        assert_eq!(enumerate_orbits(&f, &rational_delta(&f, -23)).unwrap().class_number(), 3);
        for d in (-200..0).filter(|&d| is_fundamental_discriminant(d)) {
            let h = enumerate_orbits(&f, &rational_delta(&f, d)).unwrap().class_number();
            assert_eq!(h, brute_force_class_number(d), "d={d}");
        }
    }

    #[test]
    fn sign_errors() {
        let f = q();
        assert!(matches!(enumerate_orbits(&f, &rational_delta(&f, 9)), Err(OrbitError::SquareDiscriminant(_))));
        let g = q5();
        assert!(matches!(enumerate_orbits(&g, &rational_delta(&g, 4)), Err(OrbitError::SquareDiscriminant(_))));
        // 1 - 2w has embeddings of both signs
        assert!(matches!(enumerate_orbits(&g, &g.element(1, -2)), Err(OrbitError::MixedSignature(_))));
        let o = enumerate_orbits(&f, &rational_delta(&f, 5)).unwrap();
        assert!(matches!(heegner_points(&o), Err(OrbitError::WrongSignature { .. })));
    }

    fn pell_search(d: i64) -> (i64, i64) {
        (1..).find_map(|u: i64| {
            let t2 = d * u * u + 4;
            let t = isqrt(t2 as i128) as i64;
            (t * t == t2).then_some((t, u))
        })
        .unwrap()
    }

    #[test]
    fn golden_geodesic() {
        let f = q();
        let o = enumerate_orbits(&f, &rational_delta(&f, 5)).unwrap();
        assert_eq!(o.representatives, vec![QuadTriple::from_ints(&f, 1, 1, -1)]);
        let c = &geodesic_cycles(&o).unwrap()[0];
        let s5 = 5f64.sqrt();
        assert!((c.endpoints[0].0 + (1.0 + s5) / 2.0).abs() < 1e-14);
        assert!((c.endpoints[0].1 - (-1.0 + s5) / 2.0).abs() < 1e-14);
        let (t, u) = pell_search(5);
        let eps = (t as f64 + u as f64 * s5) / 2.0;
        assert!((c.volume - 2.0 * eps.ln()).abs() < 1e-12);
        assert!((c.volume - 1.92485).abs() < 1e-5);
        let a = c.automorph.unwrap();
        assert_eq!((a.a + a.d).abs(), t);
        // arclength of the semicircle between a point and its automorph image
        let (wm, wp) = c.endpoints[0];
        let z0 = crate::hyperbolic::geodesic_point(wm, wp, 0.0);
        let z1 = a.apply(z0);
        let dist = (1.0 + (z1 - z0).norm_sqr() / (2.0 * z0.im * z1.im)).acosh();
        assert!((dist - c.volume).abs() < 1e-9);
    }

    #[test]
    fn endpoints_satisfy_the_geodesic_equation() {
        let f = q();
        for d in [5, 8, 12, 13, 17, 21, 60, 229] {
            if !is_fundamental_discriminant(d) {
                continue;
            }
            let o = enumerate_orbits(&f, &rational_delta(&f, d)).unwrap();
            for c in geodesic_cycles(&o).unwrap() {
                let (a, b, g) = c.source.embed(0);
                let (wm, wp) = c.endpoints[0];
                assert!(wm < wp);
                for w in [wm, wp] {
                    let res = 2.0 * a * w * w + b * (2.0 * w) + 2.0 * g;
                    assert!(res.abs() < 1e-12 * (1.0 + a.abs() + b.abs() + g.abs()));
                }
            }
        }
    }

    #[test]
    fn regulators_agree_with_pell_search() {
        for d in [5i64, 8, 12, 13, 17, 21, 24, 28, 29] {
            let (t, u) = pell_search(d);
            let eps = (t as f64 + u as f64 * (d as f64).sqrt()) / 2.0;
            assert!((order_unit(d).log_norm_one() - eps.ln()).abs() < 1e-12, "d={d}");
        }
        assert_eq!(unit_index(5), 2);
        assert_eq!(unit_index(12), 1);
        assert_eq!(unit_index(21), 1);
        for d in [8, 13, 17] {
            assert_eq!(unit_index(d), 2);
        }
    }

    #[test]
    fn mu_delta_two_ways() {
        let f = q();
        for d in [5, 8, 12, 13, 17] {
            let mu = mu_delta(&f, &rational_delta(&f, d)).unwrap();
            assert!(mu.residual() < 1e-9, "d={d}");
        }
        let mu = mu_delta(&f, &rational_delta(&f, 12)).unwrap();
        assert_eq!(mu.class_number, 1);
    }

    #[test]
    fn indefinite_orbit_completeness_by_brute_force() {
        // every small form of discriminant d reduces into a stored class
        let f = q();
        for d in [5i64, 12, 13, 40, 60, 65] {
            let classes = indefinite_classes(d);
            let o = enumerate_orbits(&f, &rational_delta(&f, d)).unwrap();
            assert_eq!(o.class_number(), classes.len());
            for a in -6..=6i64 {
                for b in -6..=6i64 {
                    if a == 0 || (b * b - d) % (4 * a) != 0 || !is_primitive(a, b, (b * b - d) / (4 * a)) {
                        continue;
                    }
                    let c = (b * b - d) / (4 * a);
                    // walk with rho until reduced
                    let mut cur = (a, b, c);
                    for _ in 0..200 {
                        if is_reduced_indefinite(d, cur.0, cur.1) {
                            break;
                        }
                        cur = rho(d, cur).0;
                    }
                    assert!(is_reduced_indefinite(d, cur.0, cur.1));
                    let neg = (-cur.0, cur.1, -cur.2);
                    let hits = classes.iter().filter(|k| k.cycle.contains(&cur) || k.cycle.contains(&neg)).count();
                    assert_eq!(hits, 1, "d={d} form {a},{b},{c}");
                }
            }
        }
    }

    #[test]
    fn golden_field_heegner_classes() {
        let f = q5();
        for d in [-7i64, -11, -19, -23] {
            let o = enumerate_orbits(&f, &rational_delta(&f, d)).unwrap();
            assert!(o.class_number() >= 1);
            for p in heegner_points(&o).unwrap() {
                assert!(p.source.alpha.is_totally_positive());
                for j in 0..2 {
                    let (a, b, c) = p.source.embed(j);
                    let z = p.z.z[j];
                    assert!((z * z * a + z * b + c).norm() < 1e-9);
                }
                assert_eq!(p.stabilizer_order, 1);
            }
        }
    }

    #[test]
    fn golden_field_orbits_are_complete_on_a_sweep() {
        // every triple with small coordinates and discriminant -7 lands in a class
        let f = q5();
        let delta = rational_delta(&f, -7);
        let o = enumerate_orbits(&f, &delta).unwrap();
        let reps: Vec<(QuadTriple, UHPPoint)> =
            o.representatives.iter().map(|h| (h.clone(), h.heegner_root(2))).collect();
        let four = f.element(4, 0);
        let mut checked = 0;
        for a0 in 1..=3i64 {
            for a1 in -2..=2i64 {
                let alpha = f.element(a0, a1);
                if !alpha.is_totally_positive() {
                    continue;
                }
                for b0 in -3..=3i64 {
                    for b1 in -3..=3i64 {
                        let beta = f.element(b0, b1);
                        let num = &(&beta * &beta) - &delta;
                        let Some(gamma) = num.div_exact(&(&four * &alpha)) else { continue };
                        if !gamma.is_integral() {
                            continue;
                        }
                        let h = QuadTriple { alpha: alpha.clone(), beta, gamma };
                        let z = h.heegner_root(2);
                        let red = reduce_hilbert(&z, &f).unwrap();
                        let h2 = h.act(&red.transform.transpose().inverse());
                        let hits = reps
                            .iter()
                            .filter(|(r, zr)| !find_transforms(&f, r, zr, &h2, &red.point, true).unwrap().is_empty())
                            .count();
                        assert_eq!(hits, 1);
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 0);
    }
}

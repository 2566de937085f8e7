// SPDX-License-Identifier: Apache-2.0

//! Geometry of products of upper half-planes: reduction to fundamental
//! domains, normalized hyperbolic volume, and integration along closed
//! geodesic cycles.

use std::cmp::Ordering;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::field::{FieldElement, QuadRing, TotallyRealField};
use crate::orbits::GeodesicCycle;

pub const HILBERT_ITERATION_CAP: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HyperbolicError {
    #[error("point is not in the upper half-plane (imaginary part {0})")]
    NotInUpperHalfPlane(f64),
    #[error("expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("quadrature did not converge: last change {change:e} with {nodes} nodes")]
    QuadratureNotConverged { change: f64, nodes: usize },
    #[error("region is not defined for degree {0}")]
    RegionDegree(usize),
}

/// A point of the product of `g` upper half-planes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UHPPoint {
    pub z: Vec<Complex64>,
}

impl UHPPoint {
    pub fn new(z: Vec<Complex64>) -> Result<Self, HyperbolicError> {
        if let Some(w) = z.iter().find(|w| !(w.im > 0.0)) {
            return Err(HyperbolicError::NotInUpperHalfPlane(w.im));
        }
        Ok(UHPPoint { z })
    }

    pub fn single(z: Complex64) -> Result<Self, HyperbolicError> {
        Self::new(vec![z])
    }

    pub fn degree(&self) -> usize {
        self.z.len()
    }

    /// Product of the imaginary parts.
    pub fn y_norm(&self) -> f64 {
        self.z.iter().map(|w| w.im).product()
    }
}

pub fn mobius(a: f64, b: f64, c: f64, d: f64, z: Complex64) -> Complex64 {
    (z * a + b) / (z * c + d)
}

/// An element of SL(2, Z).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Sl2Z {
    pub a: i64,
    pub b: i64,
    pub c: i64,
    pub d: i64,
}

impl Sl2Z {
    pub const IDENTITY: Sl2Z = Sl2Z { a: 1, b: 0, c: 0, d: 1 };
    pub const S: Sl2Z = Sl2Z { a: 0, b: -1, c: 1, d: 0 };

    pub fn translate(n: i64) -> Self {
        Sl2Z { a: 1, b: n, c: 0, d: 1 }
    }

    pub fn mul(&self, o: &Sl2Z) -> Sl2Z {
        Sl2Z {
            a: self.a * o.a + self.b * o.c,
            b: self.a * o.b + self.b * o.d,
            c: self.c * o.a + self.d * o.c,
            d: self.c * o.b + self.d * o.d,
        }
    }

    pub fn inverse(&self) -> Sl2Z {
        Sl2Z { a: self.d, b: -self.b, c: -self.c, d: self.a }
    }

    pub fn det(&self) -> i64 {
        self.a * self.d - self.b * self.c
    }

    pub fn apply(&self, z: Complex64) -> Complex64 {
        mobius(self.a as f64, self.b as f64, self.c as f64, self.d as f64, z)
    }
}

/// A 2x2 matrix over the ring of integers of a field.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Sl2Matrix {
    pub a: FieldElement,
    pub b: FieldElement,
    pub c: FieldElement,
    pub d: FieldElement,
}

impl Sl2Matrix {
    pub fn identity(ring: QuadRing) -> Self {
        Sl2Matrix {
            a: FieldElement::one(ring),
            b: FieldElement::zero(ring),
            c: FieldElement::zero(ring),
            d: FieldElement::one(ring),
        }
    }

    pub fn from_sl2z(ring: QuadRing, m: &Sl2Z) -> Self {
        Sl2Matrix {
            a: FieldElement::from_ints(ring, m.a, 0),
            b: FieldElement::from_ints(ring, m.b, 0),
            c: FieldElement::from_ints(ring, m.c, 0),
            d: FieldElement::from_ints(ring, m.d, 0),
        }
    }

    pub fn mul(&self, o: &Sl2Matrix) -> Sl2Matrix {
        Sl2Matrix {
            a: &(&self.a * &o.a) + &(&self.b * &o.c),
            b: &(&self.a * &o.b) + &(&self.b * &o.d),
            c: &(&self.c * &o.a) + &(&self.d * &o.c),
            d: &(&self.c * &o.b) + &(&self.d * &o.d),
        }
    }

    pub fn det(&self) -> FieldElement {
        &(&self.a * &self.d) - &(&self.b * &self.c)
    }

    /// Inverse of a determinant-one matrix.
    pub fn inverse(&self) -> Sl2Matrix {
        Sl2Matrix { a: self.d.clone(), b: -self.b.clone(), c: -self.c.clone(), d: self.a.clone() }
    }

    pub fn transpose(&self) -> Sl2Matrix {
        Sl2Matrix { a: self.a.clone(), b: self.c.clone(), c: self.b.clone(), d: self.d.clone() }
    }

    /// Galois conjugate entry-wise.
    pub fn conj(&self) -> Sl2Matrix {
        Sl2Matrix { a: self.a.conj(), b: self.b.conj(), c: self.c.conj(), d: self.d.conj() }
    }

    /// Real matrix of the `j`-th embedding.
    pub fn embed(&self, j: usize) -> [f64; 4] {
        [self.a.embed(j), self.b.embed(j), self.c.embed(j), self.d.embed(j)]
    }

    pub fn apply(&self, z: &UHPPoint) -> UHPPoint {
        let w = z
            .z
            .iter()
            .enumerate()
            .map(|(j, &zj)| {
                let [a, b, c, d] = self.embed(j);
                mobius(a, b, c, d, zj)
            })
            .collect();
        UHPPoint { z: w }
    }
}

const BOUNDARY_TOL: f64 = 1e-12;

/// Reduce `z` into the standard fundamental domain of SL(2, Z):
/// `|Re z| <= 1/2` and `|z| >= 1`, with `transform * z = z_reduced`.
///
/// Boundary points are normalized to `Re z < 1/2`, and to `Re z <= 0` on
/// the unit circle, which makes the result a well-defined function on the
/// quotient.
pub fn reduce_sl2z(z: Complex64) -> (Complex64, Sl2Z) {
    let mut w = z;
    let mut m = Sl2Z::IDENTITY;
    for _ in 0..10_000 {
        let n = (w.re + 0.5).floor() as i64;
        if n != 0 {
            w -= n as f64;
            m = Sl2Z::translate(-n).mul(&m);
        }
        if w.norm_sqr() < 1.0 - BOUNDARY_TOL {
            w = -w.inv();
            m = Sl2Z::S.mul(&m);
        } else {
            break;
        }
    }
    if (w.re - 0.5).abs() < BOUNDARY_TOL {
        w -= 1.0;
        m = Sl2Z::translate(-1).mul(&m);
    }
    if (w.norm_sqr() - 1.0).abs() < BOUNDARY_TOL && w.re > BOUNDARY_TOL {
        w = -w.inv();
        m = Sl2Z::S.mul(&m);
    }
    (w, m)
}

/// Result of the approximate reduction for SL(2, O).
#[derive(Clone, Debug, Serialize)]
pub struct HilbertReduction {
    pub point: UHPPoint,
    pub transform: Sl2Matrix,
    pub converged: bool,
    pub iterations: usize,
}

fn translation_step(field: &TotallyRealField, z: &mut UHPPoint, m: &mut Sl2Matrix) {
    let w1 = crate::field::omega_embedding(field.ring(), 0);
    let w2 = crate::field::omega_embedding(field.ring(), 1);
    let (x1, x2) = (z.z[0].re, z.z[1].re);
    let t = (x1 - x2) / (w1 - w2);
    let s = x1 - t * w1;
    let (ks, kt) = (s.round() as i64, t.round() as i64);
    if ks == 0 && kt == 0 {
        return;
    }
    let b = -field.element(ks, kt);
    let step = Sl2Matrix {
        a: FieldElement::one(field.ring()),
        b,
        c: FieldElement::zero(field.ring()),
        d: FieldElement::one(field.ring()),
    };
    *z = step.apply(z);
    *m = step.mul(m);
}

fn scaling_step(field: &TotallyRealField, z: &mut UHPPoint, m: &mut Sl2Matrix) {
    let eps = field.fundamental_unit().unwrap();
    let shift = 2.0 * (eps.embed(0).abs().ln() - eps.embed(1).abs().ln());
    let q = (z.z[0].im / z.z[1].im).ln();
    let k = (-q / shift).round() as i32;
    if k == 0 {
        return;
    }
    let u = if k > 0 { eps.pow(k as u32) } else { eps.inverse().unwrap().pow((-k) as u32) };
    let step = Sl2Matrix {
        a: u.clone(),
        b: FieldElement::zero(field.ring()),
        c: FieldElement::zero(field.ring()),
        d: u.inverse().unwrap(),
    };
    *z = step.apply(z);
    *m = step.mul(m);
}

/// Coprime `(c, d)` minimizing `N(|c z + d|^2)` among those with value below 1.
fn best_inversion(field: &TotallyRealField, z: &UHPPoint) -> Option<(FieldElement, FieldElement, f64)> {
    let ny = z.y_norm();
    let bound = 1.0 / ny;
    if bound < 1.0 {
        return None;
    }
    let ideals = field.enumerate_principal_ideals(bound).ok()?;
    let mut best: Option<(FieldElement, FieldElement, f64)> = None;
    for ideal in ideals {
        let c = ideal.generator;
        let cj = [c.embed(0), c.embed(1)];
        let radius = [1.0 / (cj[1].abs() * z.z[1].im), 1.0 / (cj[0].abs() * z.z[0].im)];
        let center = [-cj[0] * z.z[0].re, -cj[1] * z.z[1].re];
        for (d0, d1) in field.elements_near(center, radius) {
            let d = field.element(d0, d1);
            let dj = [d.embed(0), d.embed(1)];
            let v: f64 = (0..2).map(|j| (z.z[j] * cj[j] + dj[j]).norm_sqr()).product();
            if v >= 1.0 - 1e-12 {
                continue;
            }
            if best.as_ref().is_some_and(|b| b.2 <= v) {
                continue;
            }
            if field.bezout(&c, &d).is_some() {
                best = Some((c.clone(), d, v));
            }
        }
    }
    best
}

/// Approximate reduction for SL(2, O) by ascent on `N(Im z)`.
///
/// Alternates translation by O, scaling by squares of units, and the best
/// available inversion until no inversion increases `N(Im z)`.
pub fn reduce_hilbert(z: &UHPPoint, field: &TotallyRealField) -> Result<HilbertReduction, HyperbolicError> {
    if field.degree() != 2 || z.degree() != 2 {
        return Err(HyperbolicError::DimensionMismatch { expected: 2, got: z.degree() });
    }
    let ring = field.ring();
    let mut w = z.clone();
    let mut m = Sl2Matrix::identity(ring);
    for it in 0..HILBERT_ITERATION_CAP {
        scaling_step(field, &mut w, &mut m);
        translation_step(field, &mut w, &mut m);
        match best_inversion(field, &w) {
            Some((c, d, _)) => {
                let (a, b) = field.bezout(&c, &d).expect("coprime pair");
                let step = Sl2Matrix { a, b, c, d };
                w = step.apply(&w);
                m = step.mul(&m);
            }
            None => {
                return Ok(HilbertReduction { point: w, transform: m, converged: true, iterations: it + 1 });
            }
        }
    }
    Ok(HilbertReduction { point: w, transform: m, converged: false, iterations: HILBERT_ITERATION_CAP })
}

/// A measurable subset of the fundamental domain.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Region {
    /// The whole fundamental domain.
    Full,
    /// Degree one: `x in [x0, x1)`, `y in [y0, y1)`, intersected with the domain.
    Box { x0: f64, x1: f64, y0: f64, y1: f64 },
    /// Degree two: the cusp neighbourhood `N(Im z) >= min_y_norm`, valid for `min_y_norm >= 1`.
    Cusp { min_y_norm: f64 },
}

impl Region {
    /// Membership of a point already reduced into the fundamental domain.
    pub fn contains(&self, z: &UHPPoint) -> bool {
        match self {
            Region::Full => true,
            Region::Box { x0, x1, y0, y1 } => {
                let w = z.z[0];
                w.re >= *x0 && w.re < *x1 && w.im >= *y0 && w.im < *y1
            }
            Region::Cusp { min_y_norm } => z.y_norm() >= *min_y_norm,
        }
    }
}

/// Hyperbolic covolume of SL(2, O) with the measure `prod dx_j dy_j / y_j^2`.
pub fn covolume(field: &TotallyRealField) -> f64 {
    use std::f64::consts::PI;
    if field.degree() == 1 {
        return PI / 3.0;
    }
    8.0 * PI * PI * zeta_at_minus_one(field.discriminant())
}

/// `zeta_F(-1)` of a real quadratic field of discriminant `disc`, by the
/// divisor-sum formula over `b^2 < disc`, `b = disc mod 2`.
pub fn zeta_at_minus_one(disc: i64) -> f64 {
    let mut total = 0u64;
    let mut b = -(crate::arith::isqrt(disc as i128) as i64);
    while b * b <= disc {
        if (b - disc).rem_euclid(2) == 0 && b * b < disc {
            let n = ((disc - b * b) / 4) as u64;
            total += crate::arith::factorize(n)
                .iter()
                .map(|&(p, e)| (p.pow(e + 1) - 1) / (p - 1))
                .product::<u64>();
        }
        b += 1;
    }
    total as f64 / 60.0
}

/// Normalized volume of `region`: the full fundamental domain has volume 1.
pub fn mu_volume(region: &Region, field: &TotallyRealField) -> Result<f64, HyperbolicError> {
    let total = covolume(field);
    match region {
        Region::Full => Ok(1.0),
        Region::Box { x0, x1, y0, y1 } => {
            if field.degree() != 1 {
                return Err(HyperbolicError::RegionDegree(field.degree()));
            }
            Ok(box_volume(*x0, *x1, *y0, *y1) / total)
        }
        Region::Cusp { min_y_norm } => {
            if field.degree() != 2 {
                return Err(HyperbolicError::RegionDegree(field.degree()));
            }
            let eps = field.fundamental_unit().unwrap();
            let shift = 2.0 * (eps.embed(0).abs().ln() - eps.embed(1).abs().ln());
            let area = (field.discriminant() as f64).sqrt();
            Ok(area * shift / (2.0 * min_y_norm.max(1.0)) / total)
        }
    }
}

/// `int int dx dy / y^2` over the box intersected with `|x| <= 1/2, |z| >= 1`.
fn box_volume(x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let lo = x0.max(-0.5);
    let hi = x1.min(0.5);
    if hi <= lo || y1 <= y0 {
        return 0.0;
    }
    let inner = |x: f64| {
        let floor = y0.max((1.0 - x * x).max(0.0).sqrt());
        if floor >= y1 {
            0.0
        } else {
            1.0 / floor - 1.0 / y1
        }
    };
    let mut cuts = vec![lo, hi];
    for y in [y0, y1] {
        if y > 0.0 && y < 1.0 {
            let xc = (1.0 - y * y).sqrt();
            for x in [-xc, xc] {
                if x > lo && x < hi {
                    cuts.push(x);
                }
            }
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let (nodes, weights) = gauss_legendre(64);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += integrate_panel(&inner, w[0], w[1], &nodes, &weights, 32);
    }
    total
}

fn integrate_panel(f: &dyn Fn(f64) -> f64, a: f64, b: f64, nodes: &[f64], weights: &[f64], panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let (pa, pb) = (a + p as f64 * h, a + (p + 1) as f64 * h);
        let (mid, half) = ((pa + pb) / 2.0, (pb - pa) / 2.0);
        total += half * nodes.iter().zip(weights).map(|(t, w)| w * f(mid + half * t)).sum::<f64>();
    }
    total
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    use std::f64::consts::PI;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// The point at parameter `v` on the geodesic from `w_minus` to `w_plus`.
///
/// The parametrization has unit hyperbolic speed.
pub fn geodesic_point(w_minus: f64, w_plus: f64, v: f64) -> Complex64 {
    let e = Complex64::new(0.0, v.exp());
    (e * w_plus + w_minus) / (e + 1.0)
}

/// Relative convergence target of [`integrate_along_cycle`].
pub const CYCLE_QUADRATURE_TOL: f64 = 1e-8;

/// `int_C f ds` over one period cell of the cycle, by composite tensor
/// Gauss–Legendre rules with panel doubling until two successive results
/// differ by less than [`CYCLE_QUADRATURE_TOL`] (relative to the result).
pub fn integrate_along_cycle(
    f: &(dyn Fn(&UHPPoint) -> Complex64 + Sync),
    cycle: &GeodesicCycle,
    order: usize,
) -> Result<Complex64, HyperbolicError> {
    use rayon::prelude::*;
    let g = cycle.endpoints.len();
    let (nodes, weights) = gauss_legendre(order.max(2));
    let basis = &cycle.period_basis;
    let cell_volume = cycle.volume;
    let evaluate = |panels: usize| -> Complex64 {
        let per_axis: Vec<(f64, f64)> = (0..panels)
            .flat_map(|p| {
                nodes.iter().zip(&weights).map(move |(t, w)| {
                    ((p as f64 + (t + 1.0) / 2.0) / panels as f64, w / (2.0 * panels as f64))
                })
            })
            .collect();
        let grid: Vec<Vec<(f64, f64)>> = if g == 1 {
            per_axis.iter().map(|&p| vec![p]).collect()
        } else {
            per_axis
                .iter()
                .flat_map(|&p| per_axis.iter().map(move |&q| vec![p, q]))
                .collect()
        };
        let values: Vec<Complex64> = grid
            .par_iter()
            .map(|coords| {
                let weight: f64 = coords.iter().map(|c| c.1).product();
                let point: Vec<Complex64> = (0..g)
                    .map(|j| {
                        let v: f64 = coords.iter().enumerate().map(|(i, c)| (c.0 - 0.5) * basis[i][j]).sum();
                        let (wm, wp) = cycle.endpoints[j];
                        geodesic_point(wm, wp, v)
                    })
                    .collect();
                f(&UHPPoint { z: point }) * weight
            })
            .collect();
        pairwise_sum(&values) * cell_volume
    };
    let mut panels = 1;
    let mut prev = evaluate(panels);
    for _ in 0..12 {
        panels *= 2;
        let next = evaluate(panels);
        let change = (next - prev).norm();
        if change <= CYCLE_QUADRATURE_TOL * next.norm().max(1e-300) {
            return Ok(next);
        }
        prev = next;
    }
    Err(HyperbolicError::QuadratureNotConverged {
        change: f64::NAN,
        nodes: panels * order,
    })
}

/// Deterministic pairwise summation.
pub fn pairwise_sum(values: &[Complex64]) -> Complex64 {
    if values.len() <= 16 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::make_field;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn random_sl2z(words: &[u8]) -> Sl2Z {
        let mut m = Sl2Z::IDENTITY;
        for &w in words {
            let step = match w % 3 {
                0 => Sl2Z::S,
                1 => Sl2Z::translate(1),
                _ => Sl2Z::translate(-1),
            };
            m = step.mul(&m);
        }
        m
    }

    #[test]
    fn i_is_already_reduced() {
        let (w, m) = reduce_sl2z(Complex64::new(0.0, 1.0));
        assert_eq!(m, Sl2Z::IDENTITY);
        assert!((w - Complex64::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn reduction_of_a_low_point() {
        let z = Complex64::new(2.0, 0.1);
        let (w, m) = reduce_sl2z(z);
        assert!(w.re.abs() <= 0.5 && w.norm() >= 1.0);
        assert_eq!(m.det(), 1);
        assert!((m.apply(z) - w).norm() < 1e-12);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(10);
        for k in 0..20 {
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum();
            assert!((got - exact).abs() < 1e-13, "k={k}");
        }
    }

    #[test]
    fn full_domain_volume() {
        let q = make_field(1, None).unwrap();
        let full = Region::Box { x0: -0.5, x1: 0.5, y0: 0.0, y1: f64::INFINITY };
        assert!((mu_volume(&full, &q).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(mu_volume(&Region::Full, &q).unwrap(), 1.0);
    }

    #[test]
    fn strip_above_two() {
        let q = make_field(1, None).unwrap();
        let strip = Region::Box { x0: -0.5, x1: 0.5, y0: 2.0, y1: f64::INFINITY };
        let v = mu_volume(&strip, &q).unwrap();
        assert!((v - 3.0 / (2.0 * PI)).abs() < 1e-12);
        assert!((v - 0.477).abs() < 1e-3);
    }

    #[test]
    fn volume_is_additive() {
        let q = make_field(1, None).unwrap();
        let whole = Region::Box { x0: -0.3, x1: 0.4, y0: 0.5, y1: 3.0 };
        let left = Region::Box { x0: -0.3, x1: 0.1, y0: 0.5, y1: 3.0 };
        let right = Region::Box { x0: 0.1, x1: 0.4, y0: 0.5, y1: 3.0 };
        let low = Region::Box { x0: -0.3, x1: 0.4, y0: 0.5, y1: 1.2 };
        let high = Region::Box { x0: -0.3, x1: 0.4, y0: 1.2, y1: 3.0 };
        let v = |r: &Region| mu_volume(r, &q).unwrap();
        assert!((v(&whole) - v(&left) - v(&right)).abs() < 1e-10);
        assert!((v(&whole) - v(&low) - v(&high)).abs() < 1e-10);
    }

    #[test]
    fn golden_field_covolume() {
        let f = make_field(2, Some(5)).unwrap();
        assert!((zeta_at_minus_one(5) - 1.0 / 30.0).abs() < 1e-15);
        assert!((zeta_at_minus_one(8) - 1.0 / 12.0).abs() < 1e-15);
        assert!((covolume(&f) - 4.0 * PI * PI / 15.0).abs() < 1e-12);
        let v = mu_volume(&Region::Cusp { min_y_norm: 2.0 }, &f).unwrap();
        assert!(v > 0.0 && v < 1.0);
    }

    #[test]
    fn geodesic_parametrization_is_unit_speed_on_the_semicircle() {
        // h = (1, 1, -1): 2|w|^2 + (w + conj w) - 2 = 0
        let s5 = 5f64.sqrt();
        let (wm, wp) = ((-1.0 - s5) / 2.0, (-1.0 + s5) / 2.0);
        for k in 0..100 {
            let v = -5.0 + 0.1 * k as f64;
            let z = geodesic_point(wm, wp, v);
            let residual = 2.0 * z.norm_sqr() + 2.0 * z.re - 2.0;
            assert!(residual.abs() < 1e-12);
            let h = 1e-5;
            let (za, zb) = (geodesic_point(wm, wp, v - h), geodesic_point(wm, wp, v + h));
            let speed = (zb - za).norm() / (2.0 * h) / z.im;
            assert!((speed - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn hilbert_reduction_of_a_cusp_point() {
        let f = make_field(2, Some(5)).unwrap();
        let z = UHPPoint::new(vec![Complex64::new(0.1, 2.0), Complex64::new(-0.2, 2.0)]).unwrap();
        let r = reduce_hilbert(&z, &f).unwrap();
        assert!(r.converged);
        assert_eq!(r.transform, Sl2Matrix::identity(f.ring()));
    }

    proptest! {
        #[test]
        fn reduction_is_well_defined(x in -3.0f64..3.0, y in 0.05f64..3.0, words in proptest::collection::vec(0u8..3, 0..12)) {
            let z = Complex64::new(x, y);
            let t = random_sl2z(&words);
            let (w1, m1) = reduce_sl2z(z);
            let (w2, _) = reduce_sl2z(t.apply(z));
            prop_assert!((w1 - w2).norm() < 1e-9);
            prop_assert!(w1.re.abs() <= 0.5 + 1e-12 && w1.norm() >= 1.0 - 1e-12);
            prop_assert!((m1.apply(z) - w1).norm() < 1e-9 * (1.0 + w1.norm()));
            let (w3, m3) = reduce_sl2z(w1);
            prop_assert_eq!(w3, w1);
            prop_assert_eq!(m3, Sl2Z::IDENTITY);
        }

        #[test]
        fn hilbert_reduction_ascends(x1 in -2.0f64..2.0, x2 in -2.0f64..2.0, y1 in 0.05f64..2.0, y2 in 0.05f64..2.0) {
            let f = make_field(2, Some(5)).unwrap();
            let z = UHPPoint::new(vec![Complex64::new(x1, y1), Complex64::new(x2, y2)]).unwrap();
            let r = reduce_hilbert(&z, &f).unwrap();
            prop_assert!(r.converged);
            prop_assert!(r.point.y_norm() >= z.y_norm() * (1.0 - 1e-12));
            prop_assert_eq!(r.transform.det(), FieldElement::one(f.ring()));
            let again = r.transform.apply(&z);
            for j in 0..2 {
                prop_assert!((again.z[j] - r.point.z[j]).norm() < 1e-8 * (1.0 + r.point.z[j].norm()));
            }
        }
    }
}

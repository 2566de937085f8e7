// SPDX-License-Identifier: Apache-2.0

//! Weyl sums over Heegner points and closed geodesics, the exact Eisenstein
//! identities they satisfy, the Fourier coefficient formulas of the theta
//! lift, and equidistribution experiments.

use std::sync::Mutex;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::arith::is_fundamental_discriminant;
use crate::field::{FieldElement, FieldError, TotallyRealField};
use crate::hyperbolic::{
    geodesic_point, integrate_along_cycle, mu_volume, pairwise_sum, reduce_hilbert, reduce_sl2z, HyperbolicError,
    Region, Sl2Z, UHPPoint,
};
use crate::lfunc::{l_series, l_series_smoothed, CharacterSpec, LError};
use crate::orbits::{
    enumerate_orbits, geodesic_cycles, heegner_points, signature, unit_index, OrbitError, Signature,
};
use crate::special::{c_factor, eisenstein, EisensteinParams, SpecialError};

/// Gauss–Legendre order per panel for cycle integrals.
pub const CYCLE_ORDER: usize = 16;

/// Arc length between samples of the geodesic walk.
pub const WALK_STEP: f64 = 0.01;

#[derive(Debug, Error)]
pub enum WeylError {
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error(transparent)]
    Special(#[from] SpecialError),
    #[error(transparent)]
    L(#[from] LError),
    #[error(transparent)]
    Hyperbolic(#[from] HyperbolicError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("discriminant {0} is not totally {1}")]
    WrongSignature(String, &'static str),
    #[error("sign {found:?} does not match the signature of {delta}")]
    SignMismatch { delta: String, found: DeltaSign },
    #[error("no discriminants to sample")]
    NoDiscriminants,
    #[error("the test function failed: {0}")]
    TestFunction(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SumKind {
    Points,
    Geodesics,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Descriptor {
    Eisenstein { s: Complex64, m: Vec<i64> },
    User(String),
}

/// How a Heegner point is weighted in the point sum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum WeightConvention {
    /// `1 / |Gamma_z|`, the order of the stabilizer modulo `+-1`.
    Stabilizer,
    /// Every point counts once.
    Unweighted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DeltaSign {
    Negative,
    Positive,
}

type Evaluator<'a> = dyn Fn(&UHPPoint) -> Result<Complex64, WeylError> + Sync + 'a;

/// A function on `H^g` together with a description for reports.
pub struct TestFunction<'a> {
    pub descriptor: Descriptor,
    eval: Box<Evaluator<'a>>,
}

impl<'a> TestFunction<'a> {
    pub fn user(name: &str, f: impl Fn(&UHPPoint) -> Complex64 + Sync + 'a) -> Self {
        TestFunction { descriptor: Descriptor::User(name.to_string()), eval: Box::new(move |z| Ok(f(z))) }
    }

    pub fn constant(c: f64) -> Self {
        Self::user("constant", move |_| Complex64::new(c, 0.0))
    }

    /// `E(z, s, m)` truncated at `params.bound`.
    pub fn eisenstein(params: EisensteinParams, field: &'a TotallyRealField) -> Self {
        let descriptor = Descriptor::Eisenstein { s: params.s, m: params.m.clone() };
        TestFunction { descriptor, eval: Box::new(move |z| Ok(eisenstein(z, &params, field)?.value)) }
    }

    pub fn eval(&self, z: &UHPPoint) -> Result<Complex64, WeylError> {
        (self.eval)(z)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WeylResult {
    pub delta: String,
    pub kind: SumKind,
    pub descriptor: Descriptor,
    pub raw: Complex64,
    /// `h(Delta)` for points, `mu(Delta)` for geodesics.
    pub normalization: f64,
    pub normalized: Complex64,
    pub convention: Option<WeightConvention>,
}

/// `(1 / h(Delta)) sum_z w(z) f(z)` over the Heegner points of `delta`.
pub fn weyl_points(
    field: &TotallyRealField,
    delta: &FieldElement,
    f: &TestFunction,
    convention: WeightConvention,
) -> Result<WeylResult, WeylError> {
    if signature(delta, field.degree()) != Signature::TotallyNegative {
        return Err(WeylError::WrongSignature(delta.to_string(), "negative"));
    }
    let orbits = enumerate_orbits(field, delta)?;
    let points = heegner_points(&orbits)?;
    let terms: Vec<Complex64> = points
        .par_iter()
        .map(|p| {
            let w = match convention {
                WeightConvention::Stabilizer => 1.0 / p.stabilizer_order as f64,
                WeightConvention::Unweighted => 1.0,
            };
            Ok(f.eval(&p.z)? * w)
        })
        .collect::<Result<_, WeylError>>()?;
    let raw = pairwise_sum(&terms);
    let normalization = points.len() as f64;
    Ok(WeylResult {
        delta: delta.to_string(),
        kind: SumKind::Points,
        descriptor: f.descriptor.clone(),
        raw,
        normalization,
        normalized: raw / normalization,
        convention: Some(convention),
    })
}

/// `(1 / mu(Delta)) sum_C int_C f ds` over the closed geodesics of `delta`.
pub fn weyl_geodesics(field: &TotallyRealField, delta: &FieldElement, f: &TestFunction) -> Result<WeylResult, WeylError> {
    if signature(delta, field.degree()) != Signature::TotallyPositive {
        return Err(WeylError::WrongSignature(delta.to_string(), "positive"));
    }
    let orbits = enumerate_orbits(field, delta)?;
    let cycles = geodesic_cycles(&orbits)?;
    let failure = Mutex::new(None);
    let safe = |z: &UHPPoint| match f.eval(z) {
        Ok(v) => v,
        Err(e) => {
            failure.lock().unwrap().get_or_insert(e.to_string());
            Complex64::new(f64::NAN, f64::NAN)
        }
    };
    let mut integrals = Vec::with_capacity(cycles.len());
    for c in &cycles {
        integrals.push(integrate_along_cycle(&safe, c, CYCLE_ORDER));
        if let Some(msg) = failure.lock().unwrap().take() {
            return Err(WeylError::TestFunction(msg));
        }
    }
    let integrals: Vec<Complex64> = integrals.into_iter().collect::<Result<_, _>>()?;
    let raw = pairwise_sum(&integrals);
    let normalization: f64 = cycles.iter().map(|c| c.volume).sum();
    Ok(WeylResult {
        delta: delta.to_string(),
        kind: SumKind::Geodesics,
        descriptor: f.descriptor.clone(),
        raw,
        normalization,
        normalized: raw / normalization,
        convention: None,
    })
}

/// Truncation of an identity check.
#[derive(Clone, Debug, Serialize)]
pub struct IdentityParams {
    /// Height cutoff of the Eisenstein series.
    pub bound: f64,
    /// Target accuracy of the L-series on the right.
    pub tol: f64,
    pub convention: WeightConvention,
}

impl Default for IdentityParams {
    fn default() -> Self {
        IdentityParams { bound: 4000.0, tol: 1e-10, convention: WeightConvention::Stabilizer }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityReport {
    pub delta: String,
    pub s: Complex64,
    pub m: Vec<i64>,
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub residual: f64,
    pub bound: f64,
    /// Propagated tail estimate of the Eisenstein values on the left.
    pub lhs_estimate: f64,
    pub class_number: usize,
    pub convention: Option<WeightConvention>,
    /// The unit index on the geodesic side.
    pub index: Option<u32>,
    pub c_factor: Option<Complex64>,
}

fn residual(lhs: Complex64, rhs: Complex64) -> f64 {
    let scale = lhs.norm().max(rhs.norm());
    if scale == 0.0 {
        0.0
    } else {
        (lhs - rhs).norm() / scale
    }
}

fn negated(m: &[i64]) -> Vec<i64> {
    m.iter().map(|v| -v).collect()
}

/// `lambda_{m/2}(x)` for even `m`; the half index of an odd entry is rounded
/// toward zero.
fn lambda_half(field: &TotallyRealField, m: &[i64], values: &[f64]) -> Complex64 {
    let half: Vec<i64> = m.iter().map(|v| v / 2).collect();
    field.grossen_exponents().lambda_embedded(&half, values)
}

/// `L(s, lambda_{-m}) L(s, chi_{L/F} lambda_{-m})`.
fn quartic_l(
    field: &TotallyRealField,
    delta: &FieldElement,
    m: &[i64],
    s: Complex64,
    tol: f64,
) -> Result<Complex64, WeylError> {
    let neg = negated(m);
    let first = l_series(field, &CharacterSpec::hecke(neg.clone()), s, tol)?;
    let second = l_series(field, &CharacterSpec::twisted(delta.clone(), neg), s, tol)?;
    Ok(first.value * second.value)
}

/// Both sides of the point identity
/// `2^{sg} L(2s, lambda_{-2m}) sum_z w(z) E(z, s, m)
///   = |N Delta|^{s/2} lambda_{m/2}(Delta / 4) L(s, lambda_{-m}) L(s, chi lambda_{-m})`.
pub fn verify_point_identity(
    field: &TotallyRealField,
    delta: &FieldElement,
    s: Complex64,
    m: &[i64],
    params: &IdentityParams,
) -> Result<IdentityReport, WeylError> {
    if s.re <= 1.0 {
        return Err(SpecialError::OutsideConvergence(s.re).into());
    }
    if signature(delta, field.degree()) != Signature::TotallyNegative {
        return Err(WeylError::WrongSignature(delta.to_string(), "negative"));
    }
    let g = field.degree();
    let orbits = enumerate_orbits(field, delta)?;
    let points = heegner_points(&orbits)?;
    let eis = EisensteinParams::new(s, m.to_vec(), params.bound);
    let values: Vec<(Complex64, f64)> = points
        .par_iter()
        .map(|p| {
            let w = match params.convention {
                WeightConvention::Stabilizer => 1.0 / p.stabilizer_order as f64,
                WeightConvention::Unweighted => 1.0,
            };
            let e = eisenstein(&p.z, &eis, field)?;
            Ok((e.value * w, e.tail_estimate * w))
        })
        .collect::<Result<_, WeylError>>()?;
    let total = pairwise_sum(&values.iter().map(|v| v.0).collect::<Vec<_>>());
    let estimate: f64 = values.iter().map(|v| v.1).sum();
    let double_m: Vec<i64> = m.iter().map(|v| -2 * v).collect();
    let l2 = l_series(field, &CharacterSpec::hecke(double_m), 2.0 * s, params.tol)?.value;
    let prefactor = Complex64::new(2.0, 0.0).powc(s * g as f64) * l2;
    let lhs = prefactor * total;

    let embedded = field.embeddings(delta);
    let norm_delta: f64 = embedded.iter().product::<f64>().abs();
    let quarter: Vec<f64> = embedded.iter().map(|x| x / 4.0).collect();
    let rhs = Complex64::new(norm_delta, 0.0).powc(s / 2.0)
        * lambda_half(field, m, &quarter)
        * quartic_l(field, delta, m, s, params.tol)?;
    Ok(IdentityReport {
        delta: delta.to_string(),
        s,
        m: m.to_vec(),
        lhs,
        rhs,
        residual: residual(lhs, rhs),
        bound: params.bound,
        lhs_estimate: estimate * prefactor.norm(),
        class_number: points.len(),
        convention: Some(params.convention),
        index: None,
        c_factor: None,
    })
}

/// The point identity under both weight conventions, and the convention
/// with the smaller residual.
pub fn adjudicate_convention(
    field: &TotallyRealField,
    delta: &FieldElement,
    s: Complex64,
    params: &IdentityParams,
) -> Result<(IdentityReport, IdentityReport, WeightConvention), WeylError> {
    let m = vec![0; field.degree() - 1];
    let run = |convention| verify_point_identity(field, delta, s, &m, &IdentityParams { convention, ..params.clone() });
    let weighted = run(WeightConvention::Stabilizer)?;
    let unweighted = run(WeightConvention::Unweighted)?;
    let exact = if weighted.residual <= unweighted.residual {
        WeightConvention::Stabilizer
    } else {
        WeightConvention::Unweighted
    };
    Ok((weighted, unweighted, exact))
}

/// Both sides of the geodesic identity
/// `L(2s, lambda_{-2m}) sum_C int_C E(z, s, m) ds
///   = N(c(s)) i N(Delta)^{s/2} lambda_{m/2}(Delta) L(s, lambda_{-m}) L(s, chi lambda_{-m})`.
pub fn verify_geodesic_identity(
    field: &TotallyRealField,
    delta: &FieldElement,
    s: Complex64,
    m: &[i64],
    params: &IdentityParams,
) -> Result<IdentityReport, WeylError> {
    if s.re <= 1.0 {
        return Err(SpecialError::OutsideConvergence(s.re).into());
    }
    let g = field.degree();
    let f = TestFunction::eisenstein(EisensteinParams::new(s, m.to_vec(), params.bound), field);
    let weyl = weyl_geodesics(field, delta, &f)?;
    let double_m: Vec<i64> = m.iter().map(|v| -2 * v).collect();
    let l2 = l_series(field, &CharacterSpec::hecke(double_m), 2.0 * s, params.tol)?.value;
    let lhs = l2 * weyl.raw;

    let d = delta.int_coords().expect("rational discriminant").0;
    let index = unit_index(d);
    let c = c_factor(s)?;
    let embedded = field.embeddings(delta);
    let norm_delta: f64 = embedded.iter().product();
    let rhs = c.powu(g as u32)
        * index as f64
        * Complex64::new(norm_delta, 0.0).powc(s / 2.0)
        * lambda_half(field, m, &embedded)
        * quartic_l(field, delta, m, s, params.tol)?;
    Ok(IdentityReport {
        delta: delta.to_string(),
        s,
        m: m.to_vec(),
        lhs,
        rhs,
        residual: residual(lhs, rhs),
        bound: params.bound,
        lhs_estimate: f64::NAN,
        class_number: enumerate_orbits(field, delta)?.class_number(),
        convention: None,
        index: Some(index),
        c_factor: Some(c),
    })
}

/// A point Weyl sum on a vertical line, defined through the right-hand side
/// of the point identity. Over a quadratic field the L-values come from the
/// smoothed heuristic sums at cutoff `bound`.
pub fn critical_line_weyl(
    field: &TotallyRealField,
    delta: &FieldElement,
    s: Complex64,
    bound: f64,
) -> Result<Complex64, WeylError> {
    let g = field.degree();
    let m = vec![0; g - 1];
    let l = |spec: CharacterSpec, at: Complex64| -> Result<Complex64, LError> {
        if g == 1 {
            Ok(l_series(field, &spec, at, 1e-12)?.value)
        } else {
            Ok(l_series_smoothed(field, &spec, at, bound)?.value)
        }
    };
    let h = enumerate_orbits(field, delta)?.class_number() as f64;
    let norm_delta: f64 = field.embeddings(delta).iter().product::<f64>().abs();
    let numerator = Complex64::new(norm_delta, 0.0).powc(s / 2.0)
        * l(CharacterSpec::hecke(m.clone()), s)?
        * l(CharacterSpec::twisted(delta.clone(), m.clone()), s)?;
    let denominator = Complex64::new(2.0, 0.0).powc(s * g as f64) * l(CharacterSpec::hecke(m), 2.0 * s)? * h;
    Ok(numerator / denominator)
}

/// Least-squares slope of `log |W|` against `log |N Delta|`.
pub fn fit_log_slope(samples: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = samples.iter().map(|&(n, w)| (n.ln(), w.abs().ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Weight, eigenvalue map and coefficient of the lift from a quadratic form
/// in `m_vars` variables and a harmonic of degree `p`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Rho23 {
    /// `k = p - m/2`.
    pub weight: f64,
    /// `lambda = eigen_scale * (lambda' + eigen_offset)`.
    pub eigen_offset: f64,
    pub eigen_scale: f64,
    /// `rho(d) / c_1`.
    pub rho_over_c1: Complex64,
}

impl Rho23 {
    pub fn eigenvalue(&self, lambda_prime: f64) -> f64 {
        self.eigen_scale * (lambda_prime + self.eigen_offset)
    }
}

pub fn rho_formula_23(d: i64, m_vars: u32, p: u32, weyl_value: Complex64) -> Rho23 {
    let m = m_vars as f64;
    Rho23 {
        weight: p as f64 - m / 2.0,
        eigen_offset: m - m * m / 4.0,
        eigen_scale: 0.25,
        rho_over_c1: weyl_value * (d.unsigned_abs() as f64).powf(-m / 4.0),
    }
}

/// The Fourier coefficient of the lift at `delta`, given the weighted point
/// sum (`Delta << 0`) or the cycle integral sum (`Delta >> 0`).
pub fn rho_formula_hilbert(
    field: &TotallyRealField,
    delta: &FieldElement,
    sum_value: Complex64,
    sign: DeltaSign,
) -> Result<Complex64, WeylError> {
    use std::f64::consts::PI;
    let g = field.degree() as f64;
    let expected = match signature(delta, field.degree()) {
        Signature::TotallyNegative => DeltaSign::Negative,
        Signature::TotallyPositive => DeltaSign::Positive,
        Signature::Mixed => return Err(WeylError::SignMismatch { delta: delta.to_string(), found: sign }),
    };
    if expected != sign {
        return Err(WeylError::SignMismatch { delta: delta.to_string(), found: sign });
    }
    let norm: f64 = field.embeddings(delta).iter().product::<f64>().abs();
    let pi_power = match sign {
        DeltaSign::Negative => -3.0 * g / 4.0,
        DeltaSign::Positive => -g / 4.0,
    };
    Ok(sum_value * 2f64.powf(-g) * (4.0 * PI).powf(pi_power) * norm.powf(-0.75))
}

/// Horizontal cut heights `y_1 > y_2` splitting the modular fundamental
/// domain into three pieces of equal volume.
pub fn three_region_partition() -> Vec<Region> {
    let field = TotallyRealField::rationals();
    let above = |y: f64| {
        mu_volume(&Region::Box { x0: -0.5, x1: 0.5, y0: y, y1: f64::INFINITY }, &field).expect("degree one box")
    };
    let solve = |target: f64| {
        let (mut lo, mut hi) = (0.5, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if above(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let (y1, y2) = (solve(1.0 / 3.0), solve(2.0 / 3.0));
    vec![
        Region::Box { x0: -0.5, x1: 0.5, y0: y1, y1: f64::INFINITY },
        Region::Box { x0: -0.5, x1: 0.5, y0: y2, y1 },
        Region::Box { x0: -0.5, x1: 0.5, y0: 0.0, y1: y2 },
    ]
}

#[derive(Clone, Debug, Serialize)]
pub struct EquidistRow {
    pub delta: i64,
    pub region_id: usize,
    pub empirical: f64,
    pub target: f64,
    pub discrepancy: f64,
}

/// Fraction of Heegner points (`Delta << 0`) or of geodesic length
/// (`Delta >> 0`, degree one) in each region, against its volume.
pub fn equidist_experiment(
    field: &TotallyRealField,
    deltas: &[i64],
    regions: &[Region],
) -> Result<Vec<EquidistRow>, WeylError> {
    let targets: Vec<f64> = regions.iter().map(|r| mu_volume(r, field)).collect::<Result<_, _>>()?;
    let per_delta: Vec<Vec<EquidistRow>> = deltas
        .par_iter()
        .map(|&d| {
            let delta = field.element(d, 0);
            let fractions = if d < 0 || field.degree() == 2 {
                point_fractions(field, &delta, regions)?
            } else {
                geodesic_fractions(d, regions)
            };
            Ok(fractions
                .into_iter()
                .zip(&targets)
                .enumerate()
                .map(|(i, (empirical, &target))| EquidistRow {
                    delta: d,
                    region_id: i,
                    empirical,
                    target,
                    discrepancy: (empirical - target).abs(),
                })
                .collect())
        })
        .collect::<Result<_, WeylError>>()?;
    Ok(per_delta.into_iter().flatten().collect())
}

fn point_fractions(field: &TotallyRealField, delta: &FieldElement, regions: &[Region]) -> Result<Vec<f64>, WeylError> {
    let orbits = enumerate_orbits(field, delta)?;
    let mut reduced = Vec::new();
    for h in &orbits.representatives {
        let z = h.heegner_root(field.degree());
        reduced.push(if field.degree() == 1 {
            UHPPoint { z: vec![reduce_sl2z(z.z[0]).0] }
        } else {
            reduce_hilbert(&z, field)?.point
        });
    }
    let n = reduced.len() as f64;
    Ok(regions.iter().map(|r| reduced.iter().filter(|z| r.contains(z)).count() as f64 / n).collect())
}

/// `Q(x, y) = a x^2 + b x y + c y^2` pulled back along `gamma^{-1}`, so that the
/// roots move by `gamma`.
fn transport_form((a, b, c): (i128, i128, i128), g: &Sl2Z) -> (i128, i128, i128) {
    let (p, q, r, s) = (g.d as i128, -g.b as i128, -g.c as i128, g.a as i128);
    (a * p * p + b * p * r + c * r * r, 2 * a * p * q + b * (p * s + q * r) + 2 * c * r * s, a * q * q + b * q * s + c * s * s)
}

fn form_roots((a, b, _): (i128, i128, i128), d: i64) -> (f64, f64) {
    let r = (d as f64).sqrt();
    ((-(b as f64) - r) / (2.0 * a as f64), (-(b as f64) + r) / (2.0 * a as f64))
}

/// [`geodesic_point`] for either order of the endpoints.
fn oriented_point(w_minus: f64, w_plus: f64, v: f64) -> Complex64 {
    let z = geodesic_point(w_minus, w_plus, v);
    if w_plus > w_minus {
        z
    } else {
        z.conj()
    }
}

/// Walk each closed geodesic in steps of [`WALK_STEP`], re-reducing after
/// every step so that the point stays in the fundamental domain, and record
/// the share of arc length spent in each region.
fn geodesic_fractions(d: i64, regions: &[Region]) -> Vec<f64> {
    let field = TotallyRealField::rationals();
    let delta = field.element(d, 0);
    let orbits = enumerate_orbits(&field, &delta).expect("checked discriminant");
    let cycles = geodesic_cycles(&orbits).expect("rational cycles");
    let mut time = vec![0.0; regions.len()];
    let mut total = 0.0;
    for c in &cycles {
        let (a, b, cc) = c.source.rational_coeffs();
        let mut form = (a as i128, b as i128, cc as i128);
        let (mut w_minus, mut w_plus) = c.endpoints[0];
        let mut v = 0.0;
        let steps = (c.volume / WALK_STEP).round().max(1.0) as usize;
        let dv = c.volume / steps as f64;
        for _ in 0..steps {
            let z = oriented_point(w_minus, w_plus, v + 0.5 * dv);
            let (zr, gamma) = reduce_sl2z(z);
            let point = UHPPoint { z: vec![zr] };
            for (t, r) in time.iter_mut().zip(regions) {
                if r.contains(&point) {
                    *t += dv;
                }
            }
            total += dv;
            // move to the geodesic through the reduced point
            let next = transport_form(form, &gamma);
            let (r1, r2) = form_roots(next, d);
            let image = gamma.apply(Complex64::new(w_plus, 0.0)).re;
            let (nm, np) = if (r1 - image).abs() < (r2 - image).abs() { (r2, r1) } else { (r1, r2) };
            let target = gamma.apply(oriented_point(w_minus, w_plus, v + dv));
            let e = (target - nm) / (np - target);
            form = next;
            w_minus = nm;
            w_plus = np;
            v = e.norm().ln();
        }
    }
    time.iter().map(|t| t / total).collect()
}

/// Fundamental discriminants between `lo` and `hi` (inclusive, same sign),
/// `count` of them drawn without replacement from a seeded stream.
pub fn sample_discriminants(lo: i64, hi: i64, count: usize, seed: u64) -> Vec<i64> {
    let (lo, hi) = (lo.min(hi), lo.max(hi));
    let mut all: Vec<i64> = (lo..=hi)
        .filter(|&d| d != 0 && is_fundamental_discriminant(d) && !crate::arith::is_square(d as i128))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    all.shuffle(&mut rng);
    all.truncate(count);
    all.sort();
    all
}

/// Largest discrepancy over the regions for each discriminant, then the median.
pub fn median_discrepancy(rows: &[EquidistRow]) -> f64 {
    let mut worst: std::collections::BTreeMap<i64, f64> = std::collections::BTreeMap::new();
    for r in rows {
        let e = worst.entry(r.delta).or_insert(0.0);
        *e = e.max(r.discrepancy);
    }
    let mut v: Vec<f64> = worst.into_values().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::make_field;
    use crate::orbits::mu_delta;

    fn q() -> TotallyRealField {
        TotallyRealField::rationals()
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn constant_function_averages_to_one() {
        let f = q();
        let one = TestFunction::constant(1.0);
        for d in [-3, -4, -23, -84] {
            let w = weyl_points(&f, &f.element(d, 0), &one, WeightConvention::Unweighted).unwrap();
            assert!((w.normalized - 1.0).norm() < 1e-15);
        }
        for d in [5, 12, 40] {
            let w = weyl_geodesics(&f, &f.element(d, 0), &one).unwrap();
            assert!((w.normalized - 1.0).norm() < 1e-9);
        }
    }

    #[test]
    fn singleton_average_is_the_value() {
        let f = q();
        let g = TestFunction::user("re", |z| Complex64::new(z.z[0].re + 3.0 * z.z[0].im, 0.0));
        let w = weyl_points(&f, &f.element(-7, 0), &g, WeightConvention::Stabilizer).unwrap();
        let z = Complex64::new(-0.5, 7f64.sqrt() / 2.0);
        assert!((w.normalized.re - (z.re + 3.0 * z.im)).abs() < 1e-12);
    }

    #[test]
    fn geodesic_length_of_five() {
        let f = q();
        let w = weyl_geodesics(&f, &f.element(5, 0), &TestFunction::constant(1.0)).unwrap();
        let expect = 2.0 * ((3.0 + 5f64.sqrt()) / 2.0).ln();
        assert!((w.raw.re - expect).abs() < 1e-12);
        assert!((w.normalization - expect).abs() < 1e-12);
    }

    #[test]
    fn point_identity_over_q() {
        let f = q();
        let p = IdentityParams::default();
        let r = verify_point_identity(&f, &f.element(-7, 0), c(2.0), &[], &p).unwrap();
        assert!(r.residual < 1e-6, "{r:?}");
        for d in [-8, -15, -20] {
            let r = verify_point_identity(&f, &f.element(d, 0), c(1.5), &[], &p).unwrap();
            assert!(r.residual < 1e-5, "{r:?}");
        }
    }

    #[test]
    fn stabilizer_weights_are_exact_for_extra_units() {
        let f = q();
        for d in [-3, -4] {
            let (weighted, unweighted, exact) =
                adjudicate_convention(&f, &f.element(d, 0), c(2.0), &IdentityParams::default()).unwrap();
            assert_eq!(exact, WeightConvention::Stabilizer);
            assert!(weighted.residual < 1e-6);
            assert!(unweighted.residual > 0.1);
        }
    }

    #[test]
    fn geodesic_identity_over_q() {
        let f = q();
        let r = verify_geodesic_identity(&f, &f.element(5, 0), c(2.0), &[], &IdentityParams::default()).unwrap();
        assert_eq!(r.index, Some(2));
        assert!(r.residual < 1e-5, "{r:?}");
    }

    #[test]
    fn volumes_match_regulator() {
        let f = q();
        for d in [5, 8, 12, 13, 17, 21] {
            assert!(mu_delta(&f, &f.element(d, 0)).unwrap().residual() < 1e-9);
        }
    }

    #[test]
    fn weyl_sums_are_linear() {
        let f = q();
        let delta = f.element(-56, 0);
        let a = TestFunction::user("a", |z| Complex64::new(z.z[0].im, z.z[0].re));
        let b = TestFunction::user("b", |z| Complex64::new(1.0 / z.z[0].im, 0.0));
        let ab = TestFunction::user("a+2b", |z| Complex64::new(z.z[0].im + 2.0 / z.z[0].im, z.z[0].re));
        let wa = weyl_points(&f, &delta, &a, WeightConvention::Stabilizer).unwrap().raw;
        let wb = weyl_points(&f, &delta, &b, WeightConvention::Stabilizer).unwrap().raw;
        let wab = weyl_points(&f, &delta, &ab, WeightConvention::Stabilizer).unwrap().raw;
        assert!((wab - wa - wb * 2.0).norm() < 1e-12);
    }

    #[test]
    fn weight_formula_examples() {
        let r = rho_formula_23(-7, 3, 2, c(1.0));
        assert_eq!(r.weight, 0.5);
        let r = rho_formula_23(-7, 5, 3, c(1.0));
        assert_eq!(r.weight, 0.5);
        assert!((r.eigenvalue(2.0) - (2.0 + 5.0 - 25.0 / 4.0) / 4.0).abs() < 1e-15);
        assert_eq!(rho_formula_23(-11, 4, 2, c(0.0)).rho_over_c1, c(0.0));
    }

    #[test]
    fn hilbert_coefficient_constants() {
        use std::f64::consts::PI;
        let f = q();
        let delta = f.element(-4, 0);
        let r = rho_formula_hilbert(&f, &delta, c(1.0), DeltaSign::Negative).unwrap();
        let expect = 0.5 * (4.0 * PI).powf(-0.75) * 4f64.powf(-0.75);
        assert!((r.re - expect).abs() < 1e-15);
        assert_eq!(rho_formula_hilbert(&f, &delta, c(0.0), DeltaSign::Negative).unwrap(), c(0.0));
        let twice = rho_formula_hilbert(&f, &delta, c(2.0), DeltaSign::Negative).unwrap();
        assert!((twice - r * 2.0).norm() < 1e-15);
        assert!(matches!(
            rho_formula_hilbert(&f, &delta, c(1.0), DeltaSign::Positive),
            Err(WeylError::SignMismatch { .. })
        ));
    }

    #[test]
    fn partition_has_equal_thirds() {
        let f = q();
        let regions = three_region_partition();
        let total: f64 = regions.iter().map(|r| mu_volume(r, &f).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9);
        for r in &regions {
            assert!((mu_volume(r, &f).unwrap() - 1.0 / 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn full_region_and_single_point() {
        let f = q();
        let rows = equidist_experiment(&f, &[-4, -23, 5, 13], &[Region::Full]).unwrap();
        assert!(rows.iter().all(|r| (r.empirical - 1.0).abs() < 1e-12 && r.target == 1.0));
        let regions = three_region_partition();
        let rows = equidist_experiment(&f, &[-4], &regions).unwrap();
        // i has height 1, inside the middle band
        let hit: Vec<f64> = rows.iter().map(|r| r.empirical).collect();
        let expected: Vec<f64> = regions.iter().map(|r| r.contains(&UHPPoint { z: vec![Complex64::i()] }) as u8 as f64).collect();
        assert_eq!(hit, expected);
        assert_eq!(expected.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn geodesic_walk_matches_direct_sampling() {
        // the walk must agree with reducing sampled points of a short cycle
        let f = q();
        let regions = three_region_partition();
        let walk = geodesic_fractions(13, &regions);
        let cycles = geodesic_cycles(&enumerate_orbits(&f, &f.element(13, 0)).unwrap()).unwrap();
        let cyc = &cycles[0];
        let (wm, wp) = cyc.endpoints[0];
        let n = 20_000;
        let mut counts = vec![0.0; 3];
        for k in 0..n {
            let v = (k as f64 + 0.5) / n as f64 * cyc.volume;
            let z = UHPPoint { z: vec![reduce_sl2z(geodesic_point(wm, wp, v)).0] };
            for (cnt, r) in counts.iter_mut().zip(&regions) {
                if r.contains(&z) {
                    *cnt += 1.0 / n as f64;
                }
            }
        }
        for (a, b) in walk.iter().zip(&counts) {
            assert!((a - b).abs() < 0.01, "{walk:?} vs {counts:?}");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_discriminants(-1000, -100, 10, 7);
        assert_eq!(a, sample_discriminants(-1000, -100, 10, 7));
        assert!(a.iter().all(|&d| is_fundamental_discriminant(d)));
    }

    #[test]
    fn critical_line_vanishes_at_the_center() {
        // zeta(2s) has its pole at s = 1/2
        let f = q();
        let w = critical_line_weyl(&f, &f.element(-23, 0), Complex64::new(0.5, 1e-7), 0.0).unwrap();
        assert!(w.norm() < 1e-5);
        let slope = fit_log_slope(&[(10.0, 1.0), (100.0, 0.1), (1000.0, 0.01)]);
        assert!((slope + 1.0).abs() < 1e-12);
    }

    #[test]
    fn hilbert_point_identity() {
        let f = make_field(2, Some(5)).unwrap();
        let delta = f.element(-3, 0);
        let p = IdentityParams { bound: 2000.0, ..IdentityParams::default() };
        let r = verify_point_identity(&f, &delta, c(2.0), &[0], &p).unwrap();
        assert!(r.residual < 1e-3, "{r:?}");
    }
}

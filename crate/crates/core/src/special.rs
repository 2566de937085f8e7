// SPDX-License-Identifier: Apache-2.0

//! Real-analytic Eisenstein series over Q and real quadratic fields, the
//! beta-type factor `c(s)`, and the theta kernel attached to ternary forms.
//!
//! Lattice sums are smoothed: a term at normalized height `P` is weighted by
//! `cutoff(P / X)`, and the discarded part is replaced by its continuum
//! integral. Over a quadratic field the unit group is handled by a partition
//! of unity in `log h_1 - log h_2` instead of choosing representatives.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::arith::gcd;
use crate::field::{omega_embedding, FieldError, TotallyRealField};
use crate::hyperbolic::{gauss_legendre, pairwise_sum, reduce_hilbert, reduce_sl2z, HyperbolicError, UHPPoint};
use crate::lfunc::{dirichlet_l, riemann_zeta};

/// Below this fraction of the bound the cutoff weight is exactly one.
pub const CUTOFF_START: f64 = 0.25;

/// Largest number of terms a theta enumeration may visit.
pub const THETA_TERM_CAP: usize = 50_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecialError {
    #[error("direct summation needs Re(s) > 1, got {0}")]
    OutsideConvergence(f64),
    #[error("truncation {bound} is too small (need at least {minimum})")]
    TruncationTooSmall { bound: f64, minimum: f64 },
    #[error("quadrature did not settle: last change {change:e}")]
    QuadratureNotConverged { change: f64 },
    #[error("lambda_m with m = {0:?} is not invariant under the unit group")]
    CharacterNotUnitInvariant(Vec<i64>),
    #[error("expected {expected} coordinates, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("tail bound {bound:e} exceeds the tolerance {tolerance:e}")]
    TailAboveTolerance { bound: f64, tolerance: f64 },
    #[error("enumeration would visit more than {0} terms")]
    EnumerationTooLarge(usize),
    #[error("majorant coordinate {0} is not in SL(2, R)")]
    NotSpecialLinear(usize),
    #[error(transparent)]
    Hyperbolic(#[from] HyperbolicError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// The smooth cutoff: `1` on `[0, 1/4]`, `0` on `[1, inf)`.
pub fn cutoff(t: f64) -> f64 {
    if t <= CUTOFF_START {
        return 1.0;
    }
    if t >= 1.0 {
        return 0.0;
    }
    let u = (1.0 - t) / (1.0 - CUTOFF_START);
    let a = (-1.0 / u).exp();
    let b = (-1.0 / (1.0 - u)).exp();
    a / (a + b)
}

/// `K(s) = int_0^inf t^-s (1 - cutoff(t)) dt`, for `Re s > 1`.
pub fn cutoff_mellin(s: Complex64) -> Complex64 {
    let (nodes, weights) = gauss_legendre(24);
    let panels = 24;
    let h = (1.0 - CUTOFF_START) / panels as f64;
    let mut total = Complex64::new(0.0, 0.0);
    for p in 0..panels {
        let mid = CUTOFF_START + (p as f64 + 0.5) * h;
        for (x, w) in nodes.iter().zip(&weights) {
            let t = mid + 0.5 * h * x;
            total += (-s * t.ln()).exp() * (w * 0.5 * h * (1.0 - cutoff(t)));
        }
    }
    total + 1.0 / (s - 1.0)
}

fn bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - t * t)).exp()
    }
}

/// A smooth partition of unity of period `period`, supported on `|q| < period`.
pub fn unit_partition(q: f64, period: f64) -> f64 {
    let t = q / period;
    if t.abs() >= 1.0 {
        return 0.0;
    }
    let total: f64 = (-2..=2).map(|k| bump(t + k as f64)).sum();
    bump(t) / total
}

/// Parameters of a truncated Eisenstein series.
#[derive(Clone, Debug, Serialize)]
pub struct EisensteinParams {
    pub s: Complex64,
    pub m: Vec<i64>,
    /// Cutoff `X` on the product of normalized heights `|c_j z_j + d_j|^2 / y_j`.
    pub bound: f64,
    /// Move `z` to the reduced domain before summing.
    pub reduce: bool,
}

impl EisensteinParams {
    pub fn new(s: Complex64, m: Vec<i64>, bound: f64) -> Self {
        EisensteinParams { s, m, bound, reduce: true }
    }

    /// The shifted exponents `s_j`.
    pub fn shifted(&self, field: &TotallyRealField) -> Vec<Complex64> {
        let g = field.degree();
        let shifts = field.grossen_exponents().shifts(&self.m, g);
        (0..g)
            .map(|j| self.s + Complex64::new(0.0, shifts.get(j).copied().unwrap_or(0.0)))
            .collect()
    }
}

/// A truncated series value with the contribution supplied by the tail
/// integral and an estimate of the remaining error.
#[derive(Clone, Debug, Serialize)]
pub struct SeriesValue {
    pub value: Complex64,
    pub tail: Complex64,
    pub tail_estimate: f64,
    pub terms: usize,
}

/// `F(z, s, m)` and `E(z, s, m)` computed from one lattice pass.
#[derive(Clone, Debug, Serialize)]
pub struct EisensteinPair {
    pub f: SeriesValue,
    pub e: SeriesValue,
}

fn validate(z: &UHPPoint, p: &EisensteinParams, field: &TotallyRealField) -> Result<(), SpecialError> {
    let g = field.degree();
    if z.degree() != g {
        return Err(SpecialError::DimensionMismatch { expected: g, found: z.degree() });
    }
    if p.m.len() != g - 1 {
        return Err(SpecialError::DimensionMismatch { expected: g - 1, found: p.m.len() });
    }
    if p.s.re <= 1.0 {
        return Err(SpecialError::OutsideConvergence(p.s.re));
    }
    if p.bound < 2.0 {
        return Err(SpecialError::TruncationTooSmall { bound: p.bound, minimum: 2.0 });
    }
    if g == 2 && p.m.iter().any(|m| m % 2 != 0) {
        return Err(SpecialError::CharacterNotUnitInvariant(p.m.clone()));
    }
    Ok(())
}

fn reduced_point(z: &UHPPoint, p: &EisensteinParams, field: &TotallyRealField) -> Result<UHPPoint, SpecialError> {
    if !p.reduce {
        return Ok(z.clone());
    }
    if field.degree() == 1 {
        return Ok(UHPPoint::single(reduce_sl2z(z.z[0]).0)?);
    }
    let r = reduce_hilbert(z, field)?;
    Ok(if r.converged { r.point } else { z.clone() })
}

/// Period of `log h_1 - log h_2` under multiplication of `(c, d)` by units.
fn unit_log_period(field: &TotallyRealField) -> f64 {
    let eps = field.fundamental_unit().expect("quadratic field has a unit");
    2.0 * (eps.embed(0).abs().ln() - eps.embed(1).abs().ln()).abs()
}

/// Index of the Z-span of `{c, c w, d, d w}` in `O`; `1` means `(c, d) = O`.
fn ideal_index(field: &TotallyRealField, c: (i64, i64), d: (i64, i64)) -> i64 {
    if field.degree() == 1 {
        return gcd(c.0, d.0);
    }
    let ring = field.ring();
    let times_w = |x: (i64, i64)| (ring.constant * x.1, x.0 + ring.trace * x.1);
    let v = [c, times_w(c), d, times_w(d)];
    let mut g = 0;
    for i in 0..4 {
        for k in i + 1..4 {
            g = gcd(g, v[i].0 * v[k].1 - v[i].1 * v[k].0);
        }
    }
    g
}

struct Term {
    heights: [f64; 2],
    coprime: bool,
}

/// Visit every nonzero `(c, d)` in `O^2` whose normalized heights are below
/// `limit`. Work is split over `c`; partial results come back in `c` order.
fn lattice_pass<T: Send>(
    field: &TotallyRealField,
    z: &UHPPoint,
    limit: [f64; 2],
    visit: &(dyn Fn(&Term) -> Option<T> + Sync),
) -> Vec<Vec<T>> {
    let g = field.degree();
    let ring = field.ring();
    let w: Vec<f64> = (0..g).map(|j| omega_embedding(ring, j)).collect();
    let x: Vec<f64> = z.z.iter().map(|c| c.re).collect();
    let y: Vec<f64> = z.z.iter().map(|c| c.im).collect();
    let embed = |a: (i64, i64), j: usize| a.0 as f64 + if g == 1 { 0.0 } else { a.1 as f64 * w[j] };
    let c_radius = [
        (limit[0] / y[0]).sqrt(),
        if g == 1 { 0.0 } else { (limit[1] / y[1]).sqrt() },
    ];
    let cs = field.elements_in_box(c_radius);
    cs.par_iter()
        .map(|&c| {
            let cj: Vec<f64> = (0..g).map(|j| embed(c, j)).collect();
            let mut center = [0.0; 2];
            let mut radius = [0.0; 2];
            for j in 0..g {
                center[j] = -cj[j] * x[j];
                let slack = limit[j] * y[j] - (cj[j] * y[j]).powi(2);
                radius[j] = slack.max(0.0).sqrt();
            }
            let mut out = Vec::new();
            for d in field.elements_near(center, radius) {
                if c == (0, 0) && d == (0, 0) {
                    continue;
                }
                let mut heights = [1.0; 2];
                for j in 0..g {
                    let re = cj[j] * x[j] + embed(d, j);
                    let im = cj[j] * y[j];
                    heights[j] = (re * re + im * im) / y[j];
                }
                if (0..g).any(|j| heights[j] > limit[j]) {
                    continue;
                }
                let coprime = ideal_index(field, c, d) == 1;
                if let Some(v) = visit(&Term { heights, coprime }) {
                    out.push(v);
                }
            }
            out
        })
        .collect()
}

fn flatten_sum(parts: &[Vec<[Complex64; 4]>]) -> ([Complex64; 4], usize) {
    let mut acc = [Complex64::new(0.0, 0.0); 4];
    let mut count = 0;
    for k in 0..4 {
        let column: Vec<Complex64> = parts.iter().flat_map(|p| p.iter().map(move |t| t[k])).collect();
        acc[k] = pairwise_sum(&column);
        count = column.len();
    }
    (acc, count)
}

fn mobius_table(n: usize) -> Vec<i8> {
    let mut mu = vec![1i8; n + 1];
    let mut is_composite = vec![false; n + 1];
    mu[0] = 0;
    for p in 2..=n {
        if !is_composite[p] {
            for k in (p..=n).step_by(p) {
                if k > p {
                    is_composite[k] = true;
                }
                mu[k] = -mu[k];
            }
            let sq = p * p;
            for k in (sq..=n).step_by(sq) {
                mu[k] = 0;
            }
        }
    }
    mu
}

fn estimate_floor(value: Complex64) -> f64 {
    64.0 * f64::EPSILON * value.norm()
}

/// Both `F(z, s, m)` and `E(z, s, m)`.
///
/// For Q the coprime tail is resolved with Moebius inversion against `F`, so
/// `F` and `E` reach comparable accuracy. Over a quadratic field the coprime
/// tail is the density `1 / zeta_F(2)` times the continuum tail of `F`.
pub fn eisenstein_pair(
    z: &UHPPoint,
    p: &EisensteinParams,
    field: &TotallyRealField,
) -> Result<EisensteinPair, SpecialError> {
    validate(z, p, field)?;
    let point = reduced_point(z, p, field)?;
    if field.degree() == 1 {
        rational_pair(&point, p)
    } else {
        quadratic_pair(&point, p, field)
    }
}

/// Truncated `E(z, s, m)`: the sum over coprime `(c, d)` modulo units.
pub fn eisenstein(z: &UHPPoint, p: &EisensteinParams, field: &TotallyRealField) -> Result<SeriesValue, SpecialError> {
    Ok(eisenstein_pair(z, p, field)?.e)
}

/// Truncated `F(z, s, m)`: the sum over all nonzero `(c, d)` modulo units.
pub fn eisenstein_f(z: &UHPPoint, p: &EisensteinParams, field: &TotallyRealField) -> Result<SeriesValue, SpecialError> {
    Ok(eisenstein_pair(z, p, field)?.f)
}

fn rational_pair(z: &UHPPoint, p: &EisensteinParams) -> Result<EisensteinPair, SpecialError> {
    let field = TotallyRealField::rationals();
    let s = p.s;
    let x_hi = p.bound;
    let k_s = cutoff_mellin(s);
    // continuum tail of F at bound X (covolume 1, halved for +-).
    let tail_at = |bound: f64| (-s * bound.ln()).exp() * bound * k_s * (PI / 2.0);

    // Moebius split: n <= n_split uses the continuum tail at X / n^2.
    let resolved = 256.0;
    let split_at = |bound: f64| ((bound / resolved).sqrt().floor() as usize).max(1);
    let small_limit = [x_hi, x_hi / 2.0]
        .iter()
        .map(|&b| b / ((split_at(b) + 1) as f64).powi(2))
        .fold(0.0, f64::max);

    let parts = lattice_pass(&field, z, [x_hi, 0.0], &|t: &Term| {
        let h = t.heights[0];
        let f = (-s * h.ln()).exp() * 0.5;
        let (w1, w2) = (cutoff(h / x_hi), cutoff(2.0 * h / x_hi));
        let (e1, e2) = if t.coprime { (f * w1, f * w2) } else { (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)) };
        Some([f * w1, f * w2, e1, e2])
    });
    let (sums, terms) = flatten_sum(&parts);
    let mut small: Vec<(f64, Complex64)> = lattice_pass(&field, z, [small_limit, 0.0], &|t: &Term| {
        let h = t.heights[0];
        Some((h, (-s * h.ln()).exp() * 0.5))
    })
    .into_iter()
    .flatten()
    .collect();
    small.sort_by(|a, b| a.0.total_cmp(&b.0));
    let h_min = small.first().map(|t| t.0).unwrap_or(f64::INFINITY);

    let eval = |bound: f64, f_head: Complex64, e_head: Complex64| -> (Complex64, Complex64, Complex64, Complex64) {
        let f_tail = tail_at(bound);
        let f_value = f_head + f_tail;
        let n_split = split_at(bound);
        let n_max = if h_min.is_finite() { (bound / h_min).sqrt().floor() as usize } else { n_split };
        let mu = mobius_table(n_max.max(n_split));
        let mut e_tail = Complex64::new(0.0, 0.0);
        let mut partial_dirichlet = Complex64::new(0.0, 0.0);
        for n in 1..=n_split {
            if mu[n] == 0 {
                continue;
            }
            let weight = (-2.0 * s * (n as f64).ln()).exp() * mu[n] as f64;
            partial_dirichlet += weight;
            e_tail += weight * tail_at(bound / (n * n) as f64);
        }
        e_tail += f_value * (1.0 / riemann_zeta(2.0 * s) - partial_dirichlet);
        for n in n_split + 1..=n_max {
            if mu[n] == 0 {
                continue;
            }
            let rho = bound / (n * n) as f64;
            let head: Vec<Complex64> = small
                .iter()
                .take_while(|t| t.0 < rho)
                .map(|t| t.1 * cutoff(t.0 / rho))
                .collect();
            let weight = (-2.0 * s * (n as f64).ln()).exp() * mu[n] as f64;
            e_tail -= weight * pairwise_sum(&head);
        }
        (f_value, f_tail, e_head + e_tail, e_tail)
    };
    let (f1, ft1, e1, et1) = eval(x_hi, sums[0], sums[2]);
    let (f2, _, e2, _) = eval(x_hi / 2.0, sums[1], sums[3]);
    Ok(EisensteinPair {
        f: SeriesValue {
            value: f1,
            tail: ft1,
            tail_estimate: (f1 - f2).norm().max(estimate_floor(f1)),
            terms,
        },
        e: SeriesValue {
            value: e1,
            tail: et1,
            tail_estimate: (e1 - e2).norm().max(estimate_floor(e1)),
            terms,
        },
    })
}

fn quadratic_pair(z: &UHPPoint, p: &EisensteinParams, field: &TotallyRealField) -> Result<EisensteinPair, SpecialError> {
    let s_j = p.shifted(field);
    let x_hi = p.bound;
    let period = unit_log_period(field);
    let h_limit = x_hi.sqrt() * (period / 2.0).exp();
    let parts = lattice_pass(field, z, [h_limit, h_limit], &|t: &Term| {
        let [h1, h2] = t.heights;
        let q = h1.ln() - h2.ln();
        let psi = unit_partition(q, period);
        let prod = h1 * h2;
        if psi == 0.0 || prod >= x_hi {
            return None;
        }
        let f = (-s_j[0] * h1.ln() - s_j[1] * h2.ln()).exp() * (0.5 * psi);
        let (w1, w2) = (cutoff(prod / x_hi), cutoff(2.0 * prod / x_hi));
        let (e1, e2) = if t.coprime { (f * w1, f * w2) } else { (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)) };
        Some([f * w1, f * w2, e1, e2])
    });
    let (sums, terms) = flatten_sum(&parts);
    let s = p.s;
    let k_s = cutoff_mellin(s);
    let disc = field.discriminant() as f64;
    let zeta_f2 = (riemann_zeta(Complex64::new(2.0, 0.0)) * dirichlet_l(field.discriminant(), Complex64::new(2.0, 0.0))).re;
    let trivial = p.m.iter().all(|&m| m == 0);
    let tail_at = |bound: f64| {
        if trivial {
            (-s * bound.ln()).exp() * bound * k_s * (PI * PI * period / (4.0 * disc))
        } else {
            Complex64::new(0.0, 0.0)
        }
    };
    let (ft1, ft2) = (tail_at(x_hi), tail_at(x_hi / 2.0));
    let (f1, f2) = (sums[0] + ft1, sums[1] + ft2);
    let (et1, et2) = (ft1 / zeta_f2, ft2 / zeta_f2);
    let (e1, e2) = (sums[2] + et1, sums[3] + et2);
    Ok(EisensteinPair {
        f: SeriesValue {
            value: f1,
            tail: ft1,
            tail_estimate: (f1 - f2).norm().max(estimate_floor(f1)),
            terms,
        },
        e: SeriesValue {
            value: e1,
            tail: et1,
            tail_estimate: (e1 - e2).norm().max(estimate_floor(e1)),
            terms,
        },
    })
}

const QUADRATURE_NODES: usize = 20;
const QUADRATURE_TOL: f64 = 1e-14;

/// Composite Gauss–Legendre on `[a, b]` with panel doubling.
fn integrate(f: &dyn Fn(f64) -> Complex64, a: f64, b: f64) -> Result<Complex64, SpecialError> {
    let (nodes, weights) = gauss_legendre(QUADRATURE_NODES);
    let rule = |panels: usize| {
        let h = (b - a) / panels as f64;
        let values: Vec<Complex64> = (0..panels)
            .flat_map(|p| {
                let mid = a + (p as f64 + 0.5) * h;
                nodes.iter().zip(&weights).map(move |(x, w)| (mid + 0.5 * h * x, w * 0.5 * h))
            })
            .map(|(t, w)| f(t) * w)
            .collect();
        pairwise_sum(&values)
    };
    let mut panels = 8;
    let mut prev = rule(panels);
    let mut change = f64::INFINITY;
    for _ in 0..10 {
        panels *= 2;
        let next = rule(panels);
        change = (next - prev).norm();
        if change <= QUADRATURE_TOL * next.norm().max(1e-300) {
            return Ok(next);
        }
        prev = next;
    }
    Err(SpecialError::QuadratureNotConverged { change })
}

fn decay_window(s: Complex64) -> Result<f64, SpecialError> {
    if s.re <= 0.0 {
        return Err(SpecialError::OutsideConvergence(s.re));
    }
    // the integrand is below exp(-40) beyond this
    Ok(40.0 / s.re)
}

/// `c(s) = int_R (e^v + e^-v)^-s dv` by quadrature, for `Re s > 0`.
pub fn c_factor(s: Complex64) -> Result<Complex64, SpecialError> {
    let v_max = decay_window(s)?;
    let f = |v: f64| {
        let log_cosh2 = v.abs() + (-2.0 * v.abs()).exp().ln_1p();
        (-s * log_cosh2).exp()
    };
    Ok(integrate(&f, 0.0, v_max)? * 2.0)
}

/// `c(s) = Gamma(s/2)^2 / (2 Gamma(s))` for real `s > 0`.
pub fn c_factor_closed(s: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    (2.0 * ln_gamma(s / 2.0) - ln_gamma(s)).exp() / 2.0
}

/// `int_R dv / (a^2 e^v + b^2 e^-v)^s` by quadrature, with `a, b` nonzero.
pub fn hecke_integral(a: f64, b: f64, s: Complex64) -> Result<Complex64, SpecialError> {
    let v_max = decay_window(s)?;
    let center = (b.abs() / a.abs()).ln();
    let (a2, b2) = (a * a, b * b);
    let f = |v: f64| (-s * (a2 * v.exp() + b2 * (-v).exp()).ln()).exp();
    integrate(&f, center - v_max - 1.0, center + v_max + 1.0)
}

/// Truncation data of the theta kernel.
#[derive(Clone, Debug, Serialize)]
pub struct ThetaParams {
    /// Terms with `Q(x) <= radius` are summed, `exp(-pi Q)` being the Gaussian weight.
    pub radius: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ThetaValue {
    pub value: Complex64,
    /// Certified bound on the omitted terms.
    pub tail_bound: f64,
    pub terms: usize,
}

/// `g^-1 H g^-t` for the symmetric `H` of the form `(alpha, beta, gamma)`.
fn translate_form(g: &[f64; 4], form: [f64; 3]) -> [f64; 3] {
    let [a, b, c, d] = *g;
    let inv = [d, -b, -c, a];
    let h = [[form[0], form[1] / 2.0], [form[1] / 2.0, form[2]]];
    let mut t = [[0.0; 2]; 2];
    for i in 0..2 {
        for k in 0..2 {
            t[i][k] = inv[2 * i] * h[0][k] + inv[2 * i + 1] * h[1][k];
        }
    }
    let mut y = [[0.0; 2]; 2];
    for i in 0..2 {
        for k in 0..2 {
            y[i][k] = t[i][0] * inv[2 * k] + t[i][1] * inv[2 * k + 1];
        }
    }
    [y[0][0], y[0][1], y[1][1]]
}

/// The theta kernel `theta(z, g)` summed over integral ternary forms.
///
/// The Gaussian factor of a form `h` at embedding `j` is
/// `exp(-4 pi v_j |g_j^-1 h_j g_j^-t|_F^2)`, so the whole weight is
/// `exp(-pi x^t A x)` for a positive definite Gram matrix `A` on the integer
/// coordinates `x` of `h`. Lattice points with `x^t A x <= radius` are
/// enumerated by Fincke–Pohst on the Cholesky factor of `A`.
pub fn siegel_theta(
    z: &UHPPoint,
    g_coords: &[[f64; 4]],
    params: &ThetaParams,
    field: &TotallyRealField,
) -> Result<ThetaValue, SpecialError> {
    let g = field.degree();
    if z.degree() != g || g_coords.len() != g {
        return Err(SpecialError::DimensionMismatch { expected: g, found: z.degree().min(g_coords.len()) });
    }
    for (j, m) in g_coords.iter().enumerate() {
        if (m[0] * m[3] - m[1] * m[2] - 1.0).abs() > 1e-9 {
            return Err(SpecialError::NotSpecialLinear(j));
        }
    }
    let ring = field.ring();
    let n = 3 * g;
    let w: Vec<f64> = (0..g).map(|j| omega_embedding(ring, j)).collect();
    // coordinate k of the form at embedding j, for integer basis vector `e`
    let coordinate_map = |j: usize, e: usize| -> [f64; 3] {
        let mut form = [0.0; 3];
        let slot = e / g;
        form[slot] = if e.is_multiple_of(g) { 1.0 } else { w[j] };
        form
    };
    let mut gram = DMatrix::<f64>::zeros(n, n);
    for j in 0..g {
        let v = z.z[j].im;
        let images: Vec<[f64; 3]> = (0..n).map(|e| translate_form(&g_coords[j], coordinate_map(j, e))).collect();
        for k in 0..n {
            for l in 0..n {
                let (p, q) = (images[k], images[l]);
                let frob = p[0] * q[0] + 2.0 * p[1] * q[1] + p[2] * q[2];
                gram[(k, l)] += 4.0 * v * frob;
            }
        }
    }
    let lambda_min = SymmetricEigen::new(gram.clone()).eigenvalues.min();
    let norm_v: f64 = z.z.iter().map(|c| c.im).product();
    let prefactor = norm_v.powf(0.75);
    let tail_bound = prefactor * (-PI * params.radius / 2.0).exp() * (1.0 + (2.0 / lambda_min).sqrt()).powi(n as i32);
    if tail_bound > params.tolerance {
        return Err(SpecialError::TailAboveTolerance { bound: tail_bound, tolerance: params.tolerance });
    }
    let upper = gram
        .clone()
        .cholesky()
        .expect("Gram matrix of a definite form is positive definite")
        .l()
        .transpose();
    let u: Vec<f64> = z.z.iter().map(|c| c.re).collect();
    let phase_of = |x: &[i64]| -> f64 {
        let mut total = 0.0;
        for j in 0..g {
            let coord = |slot: usize| {
                let base = x[slot * g] as f64;
                if g == 1 { base } else { base + x[slot * g + 1] as f64 * w[j] }
            };
            let (al, be, ga) = (coord(0), coord(1), coord(2));
            total += u[j] * (be * be - 4.0 * al * ga);
        }
        2.0 * PI * total
    };
    let mut terms: Vec<Complex64> = Vec::new();
    let mut x = vec![0i64; n];
    let mut overflow = false;
    fincke_pohst(
        &upper,
        params.radius,
        n,
        &mut x,
        0.0,
        &mut |x: &[i64], q: f64| {
            if terms.len() >= THETA_TERM_CAP {
                overflow = true;
                return;
            }
            terms.push(Complex64::from_polar((-PI * q).exp(), phase_of(x)));
        },
    );
    if overflow {
        return Err(SpecialError::EnumerationTooLarge(THETA_TERM_CAP));
    }
    Ok(ThetaValue {
        value: pairwise_sum(&terms) * prefactor,
        tail_bound,
        terms: terms.len(),
    })
}

/// Enumerate integer `x` with `|U x|^2 <= bound`, fixing coordinates from the
/// last one down.
fn fincke_pohst(
    upper: &DMatrix<f64>,
    bound: f64,
    level: usize,
    x: &mut [i64],
    partial: f64,
    visit: &mut dyn FnMut(&[i64], f64),
) {
    if level == 0 {
        visit(x, partial);
        return;
    }
    let i = level - 1;
    let n = x.len();
    let shift: f64 = (i + 1..n).map(|k| upper[(i, k)] * x[k] as f64).sum();
    let diag = upper[(i, i)];
    let room = bound - partial;
    if room < 0.0 {
        return;
    }
    let r = room.sqrt();
    let lo = ((-shift - r) / diag).ceil() as i64;
    let hi = ((-shift + r) / diag).floor() as i64;
    for k in lo..=hi {
        let t = diag * k as f64 + shift;
        let next = partial + t * t;
        if next <= bound {
            x[i] = k;
            fincke_pohst(upper, bound, i, x, next, visit);
        }
    }
    x[i] = 0;
}

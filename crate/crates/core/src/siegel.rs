// SPDX-License-Identifier: Apache-2.0

//! Genus-two constructions: the quinary form `Q` and its alternating
//! matrices `M(x)`, singular relations cutting out Humbert surfaces, the
//! modular embedding `H^2 -> H_2`, modular curves on Hilbert modular
//! surfaces, and the quaternion algebras attached to them.
//!
//! The modular embedding uses the basis `1, w` of `O` and the matching dual
//! basis of `O^v` under the trace, which gives `z = A^t diag(z_1, z_2) A`
//! with `A = [[1, w], [1, w']]`.

use num_complex::Complex64;
use num_traits::{One, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::arith::{gcd, is_square};
use crate::field::{FieldElement, QuadRing, Rational, TotallyRealField};
use crate::hyperbolic::UHPPoint;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SiegelError {
    #[error("the modular embedding needs d = 1 mod 4, got {0}")]
    NotCongruentOne(i64),
    #[error("Q(x) = {q} does not match the requested relation variant")]
    SignMismatch { q: i64 },
    #[error("Q_d[M] = {0} is not positive")]
    DegenerateM(String),
    #[error("quaternion basis could not be normalized: {0}")]
    BasisSolveFailed(String),
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("imaginary part is not positive definite")]
    NotPositive,
    #[error("{0} is not in the inverse ideal")]
    NotIntegral(String),
    #[error("the field has degree {0}, need a real quadratic field")]
    WrongDegree(usize),
}

/// A point of the Siegel upper half space of degree two.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SiegelPoint {
    pub z: [[Complex64; 2]; 2],
}

impl SiegelPoint {
    pub fn new(z: [[Complex64; 2]; 2]) -> Result<Self, SiegelError> {
        if z[0][1] != z[1][0] {
            return Err(SiegelError::NotSymmetric);
        }
        let (a, b, c) = (z[0][0].im, z[0][1].im, z[1][1].im);
        if !(a > 0.0 && a * c - b * b > 0.0) {
            return Err(SiegelError::NotPositive);
        }
        Ok(SiegelPoint { z })
    }

    /// `(z_11, z_12, z_22)`.
    pub fn entries(&self) -> (Complex64, Complex64, Complex64) {
        (self.z[0][0], self.z[0][1], self.z[1][1])
    }
}

pub type Mat4 = [[i64; 4]; 4];

/// The symplectic form `[[0, -1], [1, 0]]` in 2x2 blocks.
pub const J: Mat4 = [[0, 0, -1, 0], [0, 0, 0, -1], [1, 0, 0, 0], [0, 1, 0, 0]];

fn mul4(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[0i64; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn transpose4(a: &Mat4) -> Mat4 {
    let mut out = [[0i64; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = a[j][i];
        }
    }
    out
}

/// An integer vector for the quinary form `Q(x) = x_2^2 - 4 x_3 x_1 - 4 x_4 x_5`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct QuinaryVector(pub [i64; 5]);

impl QuinaryVector {
    pub fn q(&self) -> i64 {
        let [x1, x2, x3, x4, x5] = self.0;
        x2 * x2 - 4 * x3 * x1 - 4 * x4 * x5
    }

    /// The alternating matrix `M(x)`.
    pub fn matrix(&self) -> Mat4 {
        let [x1, x2, x3, x4, x5] = self.0;
        [
            [0, -2 * x4, x2, -2 * x1],
            [2 * x4, 0, 2 * x3, -x2],
            [-x2, -2 * x3, 0, 2 * x5],
            [2 * x1, x2, -2 * x5, 0],
        ]
    }

    /// The vector whose singular relation is
    /// `(1 - d)/4 z_11 - z_12 + z_22 = 0`, satisfied by the modular embedding.
    pub fn embedding_relation(d: i64) -> Self {
        QuinaryVector([(d - 1) / 4, 1, -1, 0, 0])
    }
}

/// Coordinates `x` of an alternating matrix of the shape `M(x)`, possibly
/// half-integral; `None` off the five-dimensional subspace.
pub fn quinary_coordinates(m: &Mat4) -> Option<[Rational; 5]> {
    let antisymmetric = (0..4).all(|i| (0..4).all(|j| m[i][j] == -m[j][i]));
    if !antisymmetric || m[0][2] != -m[1][3] {
        return None;
    }
    let half = |v: i64| Rational::new(v as i128, 2);
    Some([half(-m[0][3]), Rational::from_integer(m[0][2] as i128), half(m[1][2]), half(-m[0][1]), half(m[2][3])])
}

pub fn q_rational(x: &[Rational; 5]) -> Rational {
    let four = Rational::from_integer(4);
    x[1] * x[1] - four * x[2] * x[0] - four * x[3] * x[4]
}

/// Exact check of `M(x)^t J M(x) = Q(x) J`.
pub fn check_mq_identity(x: &QuinaryVector) -> bool {
    let m = x.matrix();
    let lhs = mul4(&mul4(&transpose4(&m), &J), &m);
    let q = x.q();
    (0..4).all(|i| (0..4).all(|j| lhs[i][j] == q * J[i][j]))
}

/// Which singular relation a vector defines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RelationVariant {
    /// `(z 1) M (z 1)^t = 0`, for `Q(x) > 0`.
    Holomorphic,
    /// `(conj z 1) M (z 1)^t = 0`, for `Q(x) < 0`.
    Conjugate,
}

/// Size of the singular relation of `x` at `z`: the off-diagonal entry of the
/// alternating matrix for the holomorphic variant, the Frobenius norm of the
/// 2x2 matrix for the conjugate one. Zero exactly on the locus.
pub fn humbert_residual(z: &SiegelPoint, x: &QuinaryVector, variant: RelationVariant) -> Result<f64, SiegelError> {
    let q = x.q();
    let expected = if q > 0 {
        RelationVariant::Holomorphic
    } else if q < 0 {
        RelationVariant::Conjugate
    } else {
        return Err(SiegelError::SignMismatch { q });
    };
    if variant != expected {
        return Err(SiegelError::SignMismatch { q });
    }
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let right = [[z.z[0][0], z.z[0][1], one, zero], [z.z[1][0], z.z[1][1], zero, one]];
    let left = match variant {
        RelationVariant::Holomorphic => right,
        RelationVariant::Conjugate => right.map(|row| row.map(|v| v.conj())),
    };
    let m = x.matrix();
    let mut out = [[zero; 2]; 2];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, entry) in row.iter_mut().enumerate() {
            for i in 0..4 {
                for j in 0..4 {
                    *entry += left[r][i] * m[i][j] as f64 * right[c][j];
                }
            }
        }
    }
    Ok(match variant {
        RelationVariant::Holomorphic => out[0][1].norm(),
        RelationVariant::Conjugate => out.iter().flatten().map(|v| v.norm_sqr()).sum::<f64>().sqrt(),
    })
}

/// The modular embedding of `H^2` into `H_2` for `Q(sqrt d)`, `d = 1 mod 4`.
pub fn modular_embedding(field: &TotallyRealField, z: &UHPPoint) -> Result<SiegelPoint, SiegelError> {
    let d = match field.radicand() {
        Some(d) if field.degree() == 2 => d,
        _ => return Err(SiegelError::WrongDegree(field.degree())),
    };
    if d.rem_euclid(4) != 1 {
        return Err(SiegelError::NotCongruentOne(d));
    }
    let w = [crate::field::omega_embedding(field.ring(), 0), crate::field::omega_embedding(field.ring(), 1)];
    let (z1, z2) = (z.z[0], z.z[1]);
    let off = z1 * w[0] + z2 * w[1];
    SiegelPoint::new([[z1 + z2, off], [off, z1 * w[0] * w[0] + z2 * w[1] * w[1]]])
}

/// An element of `Sp(4, Z)` in 2x2 blocks `[[A, B], [C, D]]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Sp4(pub Mat4);

impl Sp4 {
    pub fn identity() -> Self {
        Sp4([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]])
    }

    /// `[[1, S], [0, 1]]` with `S = [[s11, s12], [s12, s22]]`.
    pub fn translation(s11: i64, s12: i64, s22: i64) -> Self {
        Sp4([[1, 0, s11, s12], [0, 1, s12, s22], [0, 0, 1, 0], [0, 0, 0, 1]])
    }

    /// `[[U^t, 0], [0, U^{-1}]]` for `U` in `GL(2, Z)`.
    pub fn rotation(u: [[i64; 2]; 2]) -> Self {
        let det = u[0][0] * u[1][1] - u[0][1] * u[1][0];
        assert!(det.abs() == 1, "U must be unimodular");
        let inv = [[u[1][1] * det, -u[0][1] * det], [-u[1][0] * det, u[0][0] * det]];
        Sp4([
            [u[0][0], u[1][0], 0, 0],
            [u[0][1], u[1][1], 0, 0],
            [0, 0, inv[0][0], inv[0][1]],
            [0, 0, inv[1][0], inv[1][1]],
        ])
    }

    pub fn j() -> Self {
        Sp4(J)
    }

    pub fn mul(&self, o: &Sp4) -> Sp4 {
        Sp4(mul4(&self.0, &o.0))
    }

    pub fn is_symplectic(&self) -> bool {
        mul4(&mul4(&transpose4(&self.0), &J), &self.0) == J
    }

    /// `J^{-1} g^t J`.
    pub fn inverse(&self) -> Sp4 {
        let j_inv = transpose4(&J);
        Sp4(mul4(&mul4(&j_inv, &transpose4(&self.0)), &J))
    }

    pub fn transpose(&self) -> Sp4 {
        Sp4(transpose4(&self.0))
    }

    /// `(A z + B)(C z + D)^{-1}`.
    pub fn act(&self, z: &SiegelPoint) -> Result<SiegelPoint, SiegelError> {
        let g = &self.0;
        let block = |r: usize, c: usize| [[g[r][c] as f64, g[r][c + 1] as f64], [g[r + 1][c] as f64, g[r + 1][c + 1] as f64]];
        let (a, b, c, d) = (block(0, 0), block(0, 2), block(2, 0), block(2, 2));
        let mm = |p: [[f64; 2]; 2], q: &[[Complex64; 2]; 2], add: [[f64; 2]; 2]| {
            let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    out[i][j] = p[i][0] * q[0][j] + p[i][1] * q[1][j] + add[i][j];
                }
            }
            out
        };
        let num = mm(a, &z.z, b);
        let den = mm(c, &z.z, d);
        let det = den[0][0] * den[1][1] - den[0][1] * den[1][0];
        let inv = [[den[1][1] / det, -den[0][1] / det], [-den[1][0] / det, den[0][0] / det]];
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = num[i][0] * inv[0][j] + num[i][1] * inv[1][j];
            }
        }
        // the product is symmetric up to rounding
        let off = 0.5 * (out[0][1] + out[1][0]);
        SiegelPoint::new([[out[0][0], off], [off, out[1][1]]])
    }

    /// `M(x) -> g M(x) g^t`, which preserves `Q`.
    pub fn act_on_quinary(&self, x: &QuinaryVector) -> [Rational; 5] {
        let m = mul4(&mul4(&self.0, &x.matrix()), &transpose4(&self.0));
        quinary_coordinates(&m).expect("symplectic action preserves the shape of M(x)")
    }
}

fn as_string<S: serde::Serializer>(v: &Rational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

type Mat2 = [[FieldElement; 2]; 2];

fn mul2(a: &Mat2, b: &Mat2) -> Mat2 {
    let e = |i: usize, j: usize| &(&a[i][0] * &b[0][j]) + &(&a[i][1] * &b[1][j]);
    [[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]]
}

fn add2(a: &Mat2, b: &Mat2) -> Mat2 {
    [[&a[0][0] + &b[0][0], &a[0][1] + &b[0][1]], [&a[1][0] + &b[1][0], &a[1][1] + &b[1][1]]]
}

fn scale2(a: &Mat2, r: Rational) -> Mat2 {
    a.clone().map(|row| row.map(|v| v.scale(r)))
}

fn adj2(a: &Mat2) -> Mat2 {
    [[a[1][1].clone(), -a[0][1].clone()], [-a[1][0].clone(), a[0][0].clone()]]
}

fn sigma_transpose(a: &Mat2) -> Mat2 {
    [[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]]
}

fn det2(a: &Mat2) -> FieldElement {
    &(&a[0][0] * &a[1][1]) - &(&a[0][1] * &a[1][0])
}

fn trace2(a: &Mat2) -> FieldElement {
    &a[0][0] + &a[1][1]
}

fn sqrt_d(ring: QuadRing) -> FieldElement {
    if ring.trace == 1 {
        FieldElement::from_ints(ring, -1, 2)
    } else {
        FieldElement::from_ints(ring, 0, 1)
    }
}

fn rational_part(x: &FieldElement) -> Option<Rational> {
    x.b.is_zero().then_some(x.a)
}

/// `[[a sqrt d, alpha], [-alpha', b sqrt d / delta]]` with `alpha` in the
/// inverse of the ideal `A = (generator)`, `delta = N(A)`.
#[derive(Clone, Debug, Serialize)]
pub struct YdMatrix {
    pub d: i64,
    pub generator: FieldElement,
    pub delta: i64,
    pub a: i64,
    pub b: i64,
    pub alpha: FieldElement,
}

impl YdMatrix {
    pub fn new(field: &TotallyRealField, generator: FieldElement, a: i64, b: i64, alpha: FieldElement) -> Result<Self, SiegelError> {
        let d = match field.radicand() {
            Some(d) if field.degree() == 2 => d,
            _ => return Err(SiegelError::WrongDegree(field.degree())),
        };
        if !(&alpha * &generator).is_integral() {
            return Err(SiegelError::NotIntegral(alpha.to_string()));
        }
        let delta = generator.norm().abs().to_integer() as i64;
        Ok(YdMatrix { d, generator, delta, a, b, alpha })
    }

    pub fn ring(&self) -> QuadRing {
        self.alpha.ring()
    }

    pub fn entries(&self) -> Mat2 {
        let r = sqrt_d(self.ring());
        let a = r.scale(Rational::from_integer(self.a as i128));
        let b = r.scale(Rational::new(self.b as i128, self.delta as i128));
        [[a, self.alpha.clone()], [-self.alpha.conj(), b]]
    }

    /// `Q_d[M] = det M = a b d / delta + N(alpha)`.
    pub fn n(&self) -> Rational {
        rational_part(&det2(&self.entries())).expect("det of M is rational")
    }

    /// `n = N(alpha) N(A) mod d`, tested in `Z_(d)` after clearing `delta`.
    pub fn congruence_holds(&self) -> bool {
        let lhs = self.n() - self.alpha.norm() * Rational::from_integer(self.delta as i128);
        let q = lhs / Rational::from_integer(self.d as i128);
        gcd(*q.denom() as i64, self.d) == 1
    }
}

/// The graph `z_2 = (a z_1 + b) / (c z_1 + d)` of a modular curve.
#[derive(Clone, Debug, Serialize)]
pub struct ModularCurve {
    /// `[a, b, c, d]` with `a d - b c = Q_d[M]`.
    pub mobius: [f64; 4],
    pub matrix: [[f64; 2]; 2],
}

impl ModularCurve {
    pub fn image(&self, z1: Complex64) -> Complex64 {
        let [a, b, c, d] = self.mobius;
        (z1 * a + b) / (z1 * c + d)
    }

    /// `|(z_2, 1) M (z_1, 1)^t|`.
    pub fn residual(&self, z1: Complex64, z2: Complex64) -> f64 {
        let m = self.matrix;
        (z2 * (z1 * m[0][0] + m[0][1]) + z1 * m[1][0] + m[1][1]).norm()
    }
}

pub fn modular_curve(m: &YdMatrix) -> Result<ModularCurve, SiegelError> {
    let n = m.n();
    if !n.is_positive() {
        return Err(SiegelError::DegenerateM(n.to_string()));
    }
    let e = m.entries().map(|row| row.map(|v| v.embed(0)));
    // z_2 (e00 z_1 + e01) + e10 z_1 + e11 = 0
    Ok(ModularCurve { mobius: [-e[1][0], -e[1][1], e[0][0], e[0][1]], matrix: e })
}

/// The algebra `{g : (g^sigma)^t M g = det(g) M}` with normalized generators.
#[derive(Clone, Debug, Serialize)]
pub struct QuaternionData {
    pub basis: Vec<Mat2>,
    pub pure_dimension: usize,
    pub i: Mat2,
    pub j: Mat2,
    pub k: Mat2,
    #[serde(serialize_with = "as_string")]
    pub i_square: Rational,
    #[serde(serialize_with = "as_string")]
    pub j_square: Rational,
    /// `-n / (delta d)`.
    #[serde(serialize_with = "as_string")]
    pub expected_j_square: Rational,
    pub anticommute: bool,
    /// A Z-basis of the order `Q_M` intersected with `[[O, A^{-1}], [A, O]]`.
    pub order_basis: Vec<Mat2>,
    /// `|det trd(e_i e_j)|` over the order basis.
    #[serde(serialize_with = "as_string")]
    pub order_discriminant: Rational,
}

/// Box radius of the searches for normalized generators.
pub const GENERATOR_SEARCH_RADIUS: i64 = 12;

pub fn quaternion_from_m(m: &YdMatrix) -> Result<QuaternionData, SiegelError> {
    let n = m.n();
    if !n.is_positive() {
        return Err(SiegelError::DegenerateM(n.to_string()));
    }
    let ring = m.ring();
    let mm = m.entries();
    let unit = |k: usize| -> Mat2 {
        let mut g: Mat2 = std::array::from_fn(|_| std::array::from_fn(|_| FieldElement::zero(ring)));
        g[k / 4][(k / 2) % 2] = if k.is_multiple_of(2) { FieldElement::one(ring) } else { FieldElement::from_ints(ring, 0, 1) };
        g
    };
    let condition = |g: &Mat2| -> Vec<Rational> {
        let lhs = mul2(&sigma_transpose(g), &mm);
        let rhs = mul2(&mm, &adj2(g));
        let diff = add2(&lhs, &scale2(&rhs, -Rational::one()));
        diff.iter().flatten().flat_map(|v| [v.a, v.b]).collect()
    };
    // linear in g: (g^sigma)^t M = M adj(g)
    let columns: Vec<Vec<Rational>> = (0..8).map(|k| condition(&unit(k))).collect();
    let system: Vec<Vec<Rational>> = (0..8).map(|r| (0..8).map(|c| columns[c][r]).collect()).collect();
    let kernel = nullspace(&system, 8);
    if kernel.len() != 4 {
        return Err(SiegelError::BasisSolveFailed(format!("solution space has dimension {}", kernel.len())));
    }
    let combine = |coeffs: &[Rational], elems: &[Mat2]| -> Mat2 {
        let mut out: Mat2 = std::array::from_fn(|_| std::array::from_fn(|_| FieldElement::zero(ring)));
        for (c, e) in coeffs.iter().zip(elems) {
            out = add2(&out, &scale2(e, *c));
        }
        out
    };
    let units: Vec<Mat2> = (0..8).map(unit).collect();
    let basis: Vec<Mat2> = kernel.iter().map(|v| combine(v, &units)).collect();

    // trace-zero part
    let traces: Vec<FieldElement> = basis.iter().map(trace2).collect();
    let trace_rows = vec![traces.iter().map(|t| t.a).collect::<Vec<_>>(), traces.iter().map(|t| t.b).collect()];
    let pure: Vec<Mat2> = nullspace(&trace_rows, 4).iter().map(|v| combine(v, &basis)).collect();
    let square = |x: &Mat2| -> Rational { -rational_part(&det2(x)).expect("reduced norm is rational") };
    let polar = |x: &Mat2, y: &Mat2| (square(&add2(x, y)) - square(x) - square(y)) / Rational::from_integer(2);

    let d = Rational::from_integer(m.d as i128);
    let i = search_square(&pure, d, &square, &combine)
        .ok_or_else(|| SiegelError::BasisSolveFailed(format!("no element with square {d}")))?;
    let orth_row = vec![pure.iter().map(|p| polar(p, &i)).collect::<Vec<_>>()];
    let anti: Vec<Mat2> = nullspace(&orth_row, pure.len()).iter().map(|v| combine(v, &pure)).collect();
    let t = -n / (Rational::from_integer(m.delta as i128) * d);
    let j = search_square(&anti, t, &square, &combine)
        .ok_or_else(|| SiegelError::BasisSolveFailed(format!("no element with square {t}")))?;
    let k = mul2(&i, &j);
    let anticommute = add2(&k, &mul2(&j, &i)).iter().flatten().all(|v| v.is_zero());

    let order_basis = order_lattice(m, &basis);
    let gram: Vec<Vec<Rational>> = order_basis
        .iter()
        .map(|x| {
            order_basis
                .iter()
                .map(|y| rational_part(&trace2(&mul2(x, y))).expect("reduced trace is rational"))
                .collect()
        })
        .collect();
    let order_discriminant = determinant(gram).abs();

    Ok(QuaternionData {
        basis,
        pure_dimension: pure.len(),
        i_square: square(&i),
        j_square: square(&j),
        i,
        j,
        k,
        expected_j_square: t,
        anticommute,
        order_basis,
        order_discriminant,
    })
}

fn rational_sqrt(r: Rational) -> Option<Rational> {
    if r.is_negative() {
        return None;
    }
    let (p, q) = (*r.numer(), *r.denom());
    (is_square(p) && is_square(q)).then(|| Rational::new(crate::arith::isqrt(p), crate::arith::isqrt(q)))
}

/// Smallest integer combination of `span` with square a rational square
/// multiple of `target`, rescaled to square exactly `target`.
fn search_square(
    span: &[Mat2],
    target: Rational,
    square: &dyn Fn(&Mat2) -> Rational,
    combine: &dyn Fn(&[Rational], &[Mat2]) -> Mat2,
) -> Option<Mat2> {
    let r = GENERATOR_SEARCH_RADIUS;
    let dim = span.len();
    for radius in 1..=r {
        let mut c = vec![-radius; dim];
        loop {
            if c.iter().map(|v| v.abs()).max() == Some(radius) {
                let coeffs: Vec<Rational> = c.iter().map(|&v| Rational::from_integer(v as i128)).collect();
                let x = combine(&coeffs, span);
                let q = square(&x);
                if !q.is_zero() {
                    if let Some(s) = rational_sqrt(q / target) {
                        return Some(scale2(&x, s.recip()));
                    }
                }
            }
            let mut pos = 0;
            loop {
                if pos == dim {
                    break;
                }
                c[pos] += 1;
                if c[pos] > radius {
                    c[pos] = -radius;
                    pos += 1;
                } else {
                    break;
                }
            }
            if pos == dim {
                break;
            }
        }
    }
    None
}

/// `{g in span(basis) : g_11, g_22 in O, g_12 in A^{-1}, g_21 in A}`.
fn order_lattice(m: &YdMatrix, basis: &[Mat2]) -> Vec<Mat2> {
    let ring = m.ring();
    let gen = &m.generator;
    let gen_inv = gen.inverse().expect("nonzero generator");
    let coords = |g: &Mat2| -> Vec<Rational> {
        [g[0][0].clone(), &g[0][1] * gen, &g[1][0] * &gen_inv, g[1][1].clone()]
            .iter()
            .flat_map(|v| [v.a, v.b])
            .collect()
    };
    // rows are the images of the basis, so the null space annihilates the span
    let images: Vec<Vec<Rational>> = basis.iter().map(coords).collect();
    let annihilator = nullspace(&images, 8);
    let integer_rows: Vec<Vec<i128>> = annihilator.iter().map(|v| clear_denominators(v)).collect();
    let kernel = integer_kernel(&integer_rows, 8);
    kernel
        .iter()
        .map(|v| {
            let e = |k: usize| FieldElement::new(ring, Rational::from_integer(v[k]), Rational::from_integer(v[k + 1]));
            [[e(0), &e(2) * &gen_inv], [&e(4) * gen, e(6)]]
        })
        .collect()
}

fn clear_denominators(v: &[Rational]) -> Vec<i128> {
    let l = v.iter().fold(1i128, |acc, r| num_integer::lcm(acc, *r.denom()));
    v.iter().map(|r| (*r * Rational::from_integer(l)).to_integer()).collect()
}

/// Basis of `{x : rows x = 0}` over Q, by reduced row echelon form.
fn nullspace(rows: &[Vec<Rational>], ncols: usize) -> Vec<Vec<Rational>> {
    let mut a: Vec<Vec<Rational>> = rows.to_vec();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        let Some(p) = (r..a.len()).find(|&i| !a[i][c].is_zero()) else { continue };
        a.swap(r, p);
        let inv = a[r][c].recip();
        for v in a[r].iter_mut() {
            *v *= inv;
        }
        for i in 0..a.len() {
            if i != r && !a[i][c].is_zero() {
                let f = a[i][c];
                for k in 0..ncols {
                    let delta = f * a[r][k];
                    a[i][k] -= delta;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    (0..ncols)
        .filter(|c| !pivots.contains(c))
        .map(|free| {
            let mut v = vec![Rational::zero(); ncols];
            v[free] = Rational::one();
            for (row, &pc) in pivots.iter().enumerate() {
                v[pc] = -a[row][free];
            }
            v
        })
        .collect()
}

/// Z-basis of `{x in Z^n : rows x = 0}` by unimodular column reduction.
fn integer_kernel(rows: &[Vec<i128>], n: usize) -> Vec<Vec<i128>> {
    let mut a: Vec<Vec<i128>> = rows.to_vec();
    let mut u: Vec<Vec<i128>> = (0..n).map(|i| (0..n).map(|j| (i == j) as i128).collect()).collect();
    let col_op = |a: &mut Vec<Vec<i128>>, u: &mut Vec<Vec<i128>>, dst: usize, src: usize, f: i128| {
        for row in a.iter_mut() {
            row[dst] -= f * row[src];
        }
        for row in u.iter_mut() {
            row[dst] -= f * row[src];
        }
    };
    let swap = |a: &mut Vec<Vec<i128>>, u: &mut Vec<Vec<i128>>, i: usize, j: usize| {
        for row in a.iter_mut() {
            row.swap(i, j);
        }
        for row in u.iter_mut() {
            row.swap(i, j);
        }
    };
    let mut p = 0;
    for r in 0..a.len() {
        if p == n {
            break;
        }
        loop {
            let nonzero: Vec<usize> = (p..n).filter(|&c| a[r][c] != 0).collect();
            if nonzero.is_empty() {
                break;
            }
            let best = *nonzero.iter().min_by_key(|&&c| a[r][c].abs()).unwrap();
            swap(&mut a, &mut u, p, best);
            let mut done = true;
            for c in p + 1..n {
                if a[r][c] != 0 {
                    let f = a[r][c].div_euclid(a[r][p]);
                    col_op(&mut a, &mut u, c, p, f);
                    if a[r][c] != 0 {
                        done = false;
                    }
                }
            }
            if done {
                p += 1;
                break;
            }
        }
    }
    (p..n).map(|c| u.iter().map(|row| row[c]).collect()).collect()
}

fn determinant(mut a: Vec<Vec<Rational>>) -> Rational {
    let n = a.len();
    let mut det = Rational::one();
    for c in 0..n {
        let Some(p) = (c..n).find(|&i| !a[i][c].is_zero()) else { return Rational::zero() };
        if p != c {
            a.swap(p, c);
            det = -det;
        }
        det *= a[c][c];
        for i in c + 1..n {
            let f = a[i][c] / a[c][c];
            for k in c..n {
                let delta = f * a[c][k];
                a[i][k] -= delta;
            }
        }
    }
    det
}

/// Vectors in `[-r, r]^5` with `Q(x) = d`.
pub fn solutions_in_box(d: i64, r: i64) -> Vec<QuinaryVector> {
    let mut out = Vec::new();
    let range = -r..=r;
    for x1 in range.clone() {
        for x2 in range.clone() {
            for x3 in range.clone() {
                for x4 in range.clone() {
                    for x5 in range.clone() {
                        let x = QuinaryVector([x1, x2, x3, x4, x5]);
                        if x.q() == d {
                            out.push(x);
                        }
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::make_field;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn generators() -> Vec<Sp4> {
        vec![
            Sp4::translation(1, 0, 0),
            Sp4::translation(0, 1, 0),
            Sp4::translation(0, 0, 1),
            Sp4::translation(-1, 0, 0),
            Sp4::translation(0, -1, 0),
            Sp4::rotation([[1, 1], [0, 1]]),
            Sp4::rotation([[0, 1], [-1, 0]]),
            Sp4::rotation([[1, 0], [0, -1]]),
            Sp4::j(),
        ]
    }

    fn random_word(rng: &mut ChaCha8Rng, len: usize) -> Sp4 {
        let gens = generators();
        (0..len).fold(Sp4::identity(), |acc, _| acc.mul(&gens[rng.gen_range(0..gens.len())]))
    }

    #[test]
    fn basic_vectors() {
        let x = QuinaryVector([0, 1, 0, 0, 0]);
        assert_eq!(x.q(), 1);
        assert!(check_mq_identity(&x));
        let zero = QuinaryVector([0; 5]);
        assert_eq!(zero.q(), 0);
        assert!(check_mq_identity(&zero));
    }

    #[test]
    fn random_vectors_satisfy_the_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let x = QuinaryVector(std::array::from_fn(|_| rng.gen_range(-50..=50)));
            assert!(check_mq_identity(&x));
            let m = x.matrix();
            assert!((0..4).all(|i| (0..4).all(|j| m[i][j] == -m[j][i])));
        }
    }

    #[test]
    fn product_locus_is_the_invariant_one_relation() {
        let x = QuinaryVector([0, 1, 0, 0, 0]);
        let z = SiegelPoint::new([[c(0.3, 1.2), c(0.0, 0.0)], [c(0.0, 0.0), c(-0.1, 0.7)]]).unwrap();
        assert!(humbert_residual(&z, &x, RelationVariant::Holomorphic).unwrap() < 1e-15);
        let w = SiegelPoint::new([[c(0.3, 1.2), c(0.1, 0.2)], [c(0.1, 0.2), c(-0.1, 0.7)]]).unwrap();
        assert!(humbert_residual(&w, &x, RelationVariant::Holomorphic).unwrap() > 1e-3);
        assert_eq!(
            humbert_residual(&w, &x, RelationVariant::Conjugate),
            Err(SiegelError::SignMismatch { q: 1 })
        );
    }

    #[test]
    fn embedding_lies_on_the_humbert_surface() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in [5, 13, 17] {
            let f = make_field(2, Some(d)).unwrap();
            let x = QuinaryVector::embedding_relation(d);
            assert_eq!(x.q(), d);
            for _ in 0..50 {
                let z = UHPPoint {
                    z: vec![c(rng.gen_range(-2.0..2.0), rng.gen_range(0.1..3.0)), c(rng.gen_range(-2.0..2.0), rng.gen_range(0.1..3.0))],
                };
                let s = modular_embedding(&f, &z).unwrap();
                assert!(humbert_residual(&s, &x, RelationVariant::Holomorphic).unwrap() < 1e-10);
            }
        }
        let f = make_field(2, Some(2)).unwrap();
        let z = UHPPoint { z: vec![Complex64::i(), Complex64::i()] };
        assert_eq!(modular_embedding(&f, &z), Err(SiegelError::NotCongruentOne(2)));
    }

    #[test]
    fn galois_swap_is_a_symplectic_change_of_basis() {
        let f = make_field(2, Some(5)).unwrap();
        let z = UHPPoint { z: vec![c(0.2, 1.1), c(-0.4, 0.6)] };
        let swapped = UHPPoint { z: vec![z.z[1], z.z[0]] };
        let a = modular_embedding(&f, &z).unwrap();
        let b = modular_embedding(&f, &swapped).unwrap();
        let g = Sp4::rotation([[1, 1], [0, -1]]);
        assert!(g.is_symplectic());
        let ga = g.act(&a).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((ga.z[i][j] - b.z[i][j]).norm() < 1e-12);
            }
        }
        let x = QuinaryVector::embedding_relation(5);
        let moved = g.inverse().transpose().act_on_quinary(&x);
        assert_eq!(q_rational(&moved), Rational::from_integer(5));
        let ints: Vec<i64> = moved.iter().map(|v| v.to_integer() as i64).collect();
        let mx = QuinaryVector(ints.try_into().unwrap());
        assert!(humbert_residual(&b, &mx, RelationVariant::Holomorphic).unwrap() < 1e-12);
    }

    #[test]
    fn symplectic_action_preserves_q_and_relations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = SiegelPoint::new([[c(0.1, 1.3), c(0.2, 0.3)], [c(0.2, 0.3), c(-0.3, 0.9)]]).unwrap();
        for _ in 0..1000 {
            let g = random_word(&mut rng, 6);
            assert!(g.is_symplectic());
            let x = QuinaryVector(std::array::from_fn(|_| rng.gen_range(-20..=20)));
            let moved = g.act_on_quinary(&x);
            assert_eq!(q_rational(&moved), Rational::from_integer(x.q() as i128));
            assert!(moved.iter().all(|v| v.is_integer()));
        }
        for _ in 0..50 {
            let g = random_word(&mut rng, 4);
            let z = g.act(&base).unwrap();
            let (a, b, cc) = (z.z[0][0].im, z.z[0][1].im, z.z[1][1].im);
            assert!(a > 0.0 && a * cc - b * b > 0.0);
        }
    }

    #[test]
    fn relations_travel_with_points() {
        let f = make_field(2, Some(13)).unwrap();
        let z = modular_embedding(&f, &UHPPoint { z: vec![c(0.3, 0.8), c(0.1, 1.4)] }).unwrap();
        let x = QuinaryVector::embedding_relation(13);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let g = random_word(&mut rng, 3);
            let gz = g.act(&z).unwrap();
            let moved = g.inverse().transpose().act_on_quinary(&x);
            let mx = QuinaryVector(std::array::from_fn(|i| moved[i].to_integer() as i64));
            let scale = gz.z.iter().flatten().map(|v| v.norm()).fold(1.0, f64::max);
            assert!(humbert_residual(&gz, &mx, RelationVariant::Holomorphic).unwrap() < 1e-9 * scale * scale);
        }
    }

    #[test]
    fn humbert_parity() {
        for d in [1, 5, 13] {
            assert!(!solutions_in_box(d, 2).is_empty());
        }
        for d in [2, 3, 6, 7] {
            assert!(solutions_in_box(d, 2).is_empty());
        }
    }

    fn golden(a: i64, b: i64, alpha: (i64, i64)) -> YdMatrix {
        let f = make_field(2, Some(5)).unwrap();
        let alpha = f.element(alpha.0, alpha.1);
        YdMatrix::new(&f, f.element(1, 0), a, b, alpha).unwrap()
    }

    #[test]
    fn diagonal_modular_curve() {
        let m = golden(0, 0, (1, 0));
        assert_eq!(m.n(), Rational::one());
        let curve = modular_curve(&m).unwrap();
        let z = c(0.4, 1.7);
        assert!((curve.image(z) - z).norm() < 1e-15);
        assert!(m.congruence_holds());
    }

    #[test]
    fn generic_modular_curve() {
        let m = golden(1, 2, (1, 1));
        let curve = modular_curve(&m).unwrap();
        for k in 0..20 {
            let z1 = c(-1.0 + 0.1 * k as f64, 0.3 + 0.05 * k as f64);
            let z2 = curve.image(z1);
            assert!(z2.im > 0.0);
            assert!(curve.residual(z1, z2) < 1e-12);
        }
        assert!(m.congruence_holds());
        assert!(matches!(modular_curve(&golden(1, -1, (0, 0))), Err(SiegelError::DegenerateM(_))));
    }

    #[test]
    fn quaternion_of_the_diagonal() {
        let q = quaternion_from_m(&golden(0, 0, (1, 0))).unwrap();
        assert_eq!(q.pure_dimension, 3);
        assert_eq!(q.i_square, Rational::from_integer(5));
        assert_eq!(q.j_square, Rational::new(-1, 5));
        assert!(q.anticommute);
        assert_eq!(q.order_discriminant, Rational::one());
    }

    #[test]
    fn quaternion_grid() {
        for (d, a, b, alpha, n) in [(5, 1, 1, 0, 5), (5, 1, 1, 1, 6), (5, 1, 2, 1, 11), (13, 1, 1, 0, 13), (13, 1, 1, 1, 14)] {
            let f = make_field(2, Some(d)).unwrap();
            let m = YdMatrix::new(&f, f.element(1, 0), a, b, f.element(alpha, 0)).unwrap();
            assert_eq!(m.n(), Rational::from_integer(n));
            assert!(m.congruence_holds());
            let q = quaternion_from_m(&m).unwrap();
            assert_eq!(q.pure_dimension, 3);
            assert_eq!(q.i_square, Rational::from_integer(d as i128));
            assert_eq!(q.j_square, Rational::new(-n, d as i128));
            assert!(q.anticommute);
            assert_eq!(q.order_discriminant, Rational::from_integer(n * n));
        }
    }

    #[test]
    fn inverse_ideal_is_enforced() {
        let f = make_field(2, Some(5)).unwrap();
        let r = YdMatrix::new(&f, f.element(2, 0), 0, 0, f.element(1, 0).scale(Rational::new(1, 3)));
        assert!(matches!(r, Err(SiegelError::NotIntegral(_))));
    }

    proptest! {
        #[test]
        fn mq_identity_holds(x in prop::array::uniform5(-1000i64..1000)) {
            prop_assert!(check_mq_identity(&QuinaryVector(x)));
        }
    }
}

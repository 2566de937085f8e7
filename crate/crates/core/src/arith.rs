// SPDX-License-Identifier: Apache-2.0

//! Small integer helpers shared by the number-theoretic modules.

/// Floor of the square root of a non-negative integer.
pub fn isqrt(n: i128) -> i128 {
    if n < 0 {
        return -1;
    }
    if n < 2 {
        return n;
    }
    let mut x = (n as f64).sqrt() as i128;
    while x * x > n {
        x -= 1;
    }
    while (x + 1) * (x + 1) <= n {
        x += 1;
    }
    x
}

pub fn is_square(n: i128) -> bool {
    n >= 0 && {
        let r = isqrt(n);
        r * r == n
    }
}

pub fn is_square_free(n: i64) -> bool {
    if n == 0 {
        return false;
    }
    let mut m = n.unsigned_abs();
    let mut p = 2u64;
    while p * p <= m {
        if m.is_multiple_of(p) {
            m /= p;
            if m.is_multiple_of(p) {
                return false;
            }
        }
        p += 1;
    }
    true
}

/// Primes up to and including `n`.
pub fn primes_up_to(n: u64) -> Vec<u64> {
    if n < 2 {
        return Vec::new();
    }
    let n = n as usize;
    let mut sieve = vec![true; n + 1];
    sieve[0] = false;
    sieve[1] = false;
    let mut i = 2;
    while i * i <= n {
        if sieve[i] {
            let mut j = i * i;
            while j <= n {
                sieve[j] = false;
                j += i;
            }
        }
        i += 1;
    }
    sieve
        .iter()
        .enumerate()
        .filter_map(|(k, &p)| p.then_some(k as u64))
        .collect()
}

/// Prime factorisation as (prime, exponent) pairs, ascending.
pub fn factorize(n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut m = n;
    let mut p = 2u64;
    while p * p <= m {
        if m.is_multiple_of(p) {
            let mut e = 0;
            while m.is_multiple_of(p) {
                m /= p;
                e += 1;
            }
            out.push((p, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if m > 1 {
        out.push((m, 1));
    }
    out
}

pub fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

pub fn mod_pow(base: u64, exp: u64, m: u64) -> u64 {
    let mut result = 1u128;
    let mut b = (base % m) as u128;
    let mut e = exp;
    let m = m as u128;
    while e > 0 {
        if e & 1 == 1 {
            result = result * b % m;
        }
        b = b * b % m;
        e >>= 1;
    }
    result as u64
}

/// A square root of `a` modulo an odd prime `p` (Tonelli–Shanks).
pub fn sqrt_mod(a: u64, p: u64) -> Option<u64> {
    let a = a % p;
    if a == 0 {
        return Some(0);
    }
    if mod_pow(a, (p - 1) / 2, p) != 1 {
        return None;
    }
    let (mut q, mut s) = (p - 1, 0);
    while q % 2 == 0 {
        q /= 2;
        s += 1;
    }
    let z = (2..p).find(|&z| mod_pow(z, (p - 1) / 2, p) == p - 1)?;
    let mulm = |x: u64, y: u64| ((x as u128 * y as u128) % p as u128) as u64;
    let mut m = s;
    let mut c = mod_pow(z, q, p);
    let mut t = mod_pow(a, q, p);
    let mut r = mod_pow(a, q.div_ceil(2), p);
    while t != 1 {
        let mut i = 0;
        let mut t2 = t;
        while t2 != 1 {
            t2 = mulm(t2, t2);
            i += 1;
        }
        let b = mod_pow(c, 1 << (m - i - 1), p);
        m = i;
        c = mulm(b, b);
        t = mulm(t, c);
        r = mulm(r, b);
    }
    Some(r)
}

/// True when `d` is a fundamental discriminant of a quadratic field.
pub fn is_fundamental_discriminant(d: i64) -> bool {
    if d == 0 || d == 1 {
        return false;
    }
    let r = d.rem_euclid(4);
    if r == 1 {
        return is_square_free(d);
    }
    if r == 0 {
        let q = d / 4;
        let rq = q.rem_euclid(4);
        return (rq == 2 || rq == 3) && is_square_free(q);
    }
    false
}

fn ext_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    if b == 0 {
        return if a < 0 { (-a, -1, 0) } else { (a, 1, 0) };
    }
    let (g, x, y) = ext_gcd(b, a.rem_euclid(b));
    (g, y, x - a.div_euclid(b) * y)
}

/// An integer solution of `A v = e` for a 2x4 integer matrix, if one exists.
///
/// Column operations bring `A` to lower-triangular form `[H | 0]`; the
/// accumulated unimodular matrix maps the triangular solution back.
pub fn solve_integer_2x4(a: [[i128; 4]; 2], e: [i128; 2]) -> Option<[i128; 4]> {
    let mut m = a;
    let mut u = [[0i128; 4]; 4];
    for (i, row) in u.iter_mut().enumerate() {
        row[i] = 1;
    }
    // combine columns `p` and `q` with the unimodular 2x2 [[x, -b/g], [y, a/g]]
    let combine = |m: &mut [[i128; 4]; 2], u: &mut [[i128; 4]; 4], row: usize, p: usize, q: usize| {
        let (va, vb) = (m[row][p], m[row][q]);
        if vb == 0 {
            return;
        }
        let (g, x, y) = ext_gcd(va, vb);
        let (ca, cb) = (va / g, vb / g);
        for r in m.iter_mut() {
            let (cp, cq) = (r[p], r[q]);
            r[p] = x * cp + y * cq;
            r[q] = -cb * cp + ca * cq;
        }
        for r in u.iter_mut() {
            let (cp, cq) = (r[p], r[q]);
            r[p] = x * cp + y * cq;
            r[q] = -cb * cp + ca * cq;
        }
    };
    for q in 1..4 {
        combine(&mut m, &mut u, 0, 0, q);
    }
    for q in 2..4 {
        combine(&mut m, &mut u, 1, 1, q);
    }
    let h00 = m[0][0];
    if h00 == 0 || e[0] % h00 != 0 {
        return None;
    }
    let w0 = e[0] / h00;
    let rest = e[1] - m[1][0] * w0;
    let h11 = m[1][1];
    if h11 == 0 || rest % h11 != 0 {
        return None;
    }
    let w1 = rest / h11;
    let mut v = [0i128; 4];
    for (i, vi) in v.iter_mut().enumerate() {
        *vi = u[i][0] * w0 + u[i][1] * w1;
    }
    Some(v)
}

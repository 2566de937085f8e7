// SPDX-License-Identifier: Apache-2.0
//! Browser bindings: reduced Heegner points, Eisenstein values and a region
//! histogram, each returned as JSON text.

use num_complex::Complex64;
use wasm_bindgen::prelude::*;
use weylsum::field::TotallyRealField;
use weylsum::hyperbolic::{reduce_sl2z, UHPPoint};
use weylsum::orbits::enumerate_orbits;
use weylsum::special::{eisenstein, EisensteinParams};
use weylsum::weyl::{equidist_experiment, median_discrepancy, sample_discriminants, three_region_partition};

fn to_js<E: std::fmt::Display>(e: E) -> JsError {
    JsError::new(&e.to_string())
}

/// Reduced Heegner points of discriminant `d < 0` as `[[x, y], ...]`.
#[wasm_bindgen]
pub fn heegner_points(d: i32) -> Result<String, JsError> {
    let q = TotallyRealField::rationals();
    let orbits = enumerate_orbits(&q, &q.element(d as i64, 0)).map_err(to_js)?;
    if d >= 0 {
        return Err(JsError::new("Heegner points need a negative discriminant"));
    }
    let pts: Vec<[f64; 2]> = orbits
        .representatives
        .iter()
        .map(|h| {
            let z = reduce_sl2z(h.heegner_root(1).z[0]).0;
            [z.re, z.im]
        })
        .collect();
    serde_json::to_string(&pts).map_err(to_js)
}

/// `E(x + iy, s)` over Q as `[re, im]`.
#[wasm_bindgen]
pub fn eisenstein_value(x: f64, y: f64, s: f64, bound: f64) -> Result<Vec<f64>, JsError> {
    let q = TotallyRealField::rationals();
    let z = UHPPoint::single(Complex64::new(x, y)).map_err(to_js)?;
    let v = eisenstein(&z, &EisensteinParams::new(Complex64::new(s, 0.0), vec![], bound), &q).map_err(to_js)?;
    Ok(vec![v.value.re, v.value.im])
}

/// Median three-region discrepancy of `count` sampled fundamental
/// discriminants in `[lo, hi]`, with the per-region rows.
#[wasm_bindgen]
pub fn equidist_histogram(lo: i32, hi: i32, count: u32, seed: u32) -> Result<String, JsError> {
    let q = TotallyRealField::rationals();
    let deltas = sample_discriminants(lo as i64, hi as i64, count as usize, seed as u64);
    let rows = equidist_experiment(&q, &deltas, &three_region_partition()).map_err(to_js)?;
    let doc = serde_json::json!({ "median_discrepancy": median_discrepancy(&rows), "rows": rows });
    Ok(doc.to_string())
}

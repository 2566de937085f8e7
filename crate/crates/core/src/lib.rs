// SPDX-License-Identifier: Apache-2.0

//! Arithmetic and analytic objects attached to quadratic triples over Q and
//! real quadratic fields: orbit classes, Heegner points, closed geodesics,
//! Eisenstein series, Hecke L-series, and the genus-two Siegel constructions.

pub mod arith;
pub mod cli;
pub mod field;
pub mod hyperbolic;
pub mod lfunc;
pub mod orbits;
pub mod siegel;
pub mod special;
pub mod weyl;

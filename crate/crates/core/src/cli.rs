// SPDX-License-Identifier: Apache-2.0
//! Command-line front end: argument parsing, validated run configuration,
//! and CSV / JSON rendering of every experiment.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::arith::{is_fundamental_discriminant, is_square};
use crate::field::{make_field, FieldElement, TotallyRealField};
use crate::hyperbolic::{geodesic_point, reduce_sl2z, Region, UHPPoint};
use crate::lfunc::{dirichlet_class_number, is_fundamental_relative};
use crate::orbits::{enumerate_orbits, geodesic_cycles, mu_delta};
use crate::siegel::{
    check_mq_identity, humbert_residual, modular_curve, modular_embedding, quaternion_from_m, QuinaryVector,
    RelationVariant, YdMatrix,
};
use crate::weyl::{
    equidist_experiment, median_discrepancy, sample_discriminants, three_region_partition, verify_geodesic_identity,
    verify_point_identity, IdentityParams, IdentityReport, WeightConvention,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exit status for usage and construction errors.
pub const EXIT_USAGE: i32 = 2;
/// Exit status when a computed check misses its tolerance.
pub const EXIT_TOLERANCE: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Parser, Debug)]
#[command(name = "weylsum", version, about = "Heegner points, closed geodesics and Eisenstein identities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Class numbers by orbit enumeration, cross-checked against L(1, chi).
    Classnumber(CommonArgs),
    /// Both sides of the point or geodesic identity.
    Identity {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value_t = IdentityKind::Auto)]
        kind: IdentityKind,
    },
    /// Region histograms of Heegner points or geodesic length.
    Equidist {
        #[command(flatten)]
        common: CommonArgs,
        /// Fundamental discriminants drawn per decade of |delta| from the range.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = RegionSet::Partition)]
        regions: RegionSet,
        /// Also emit reduced points as (x, y) rows.
        #[arg(long)]
        plot_data: bool,
    },
    /// Symplectic and quaternion checks for a matrix in Y_d.
    Siegel {
        #[command(flatten)]
        common: CommonArgs,
        /// `a,b,p,q` for the matrix with diagonal `a sqrt d, b sqrt d` and `alpha = p + q w`.
        #[arg(long, default_value = "1,1,1,0")]
        yd: String,
        /// Random checks of the M/Q identity.
        #[arg(long, default_value_t = 10_000)]
        mq_checks: usize,
        /// Random points for the embedding and modular curve checks.
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// `q` for the rationals, or a square-free radicand `d` for Q(sqrt d).
    #[arg(long, default_value = "q")]
    pub field: String,
    /// A discriminant: `a` or `a,b` for `a + b w`. Repeatable.
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Vec<String>,
    /// Rational discriminants `lo..hi`, inclusive.
    #[arg(long, allow_hyphen_values = true)]
    pub delta_range: Option<String>,
    /// Comma-separated values of `s`, each `x` or `x+yi`.
    #[arg(long, allow_hyphen_values = true)]
    pub s: Option<String>,
    /// Comma-separated weight vector of length `g - 1`.
    #[arg(long, allow_hyphen_values = true)]
    pub m: Option<String>,
    /// Height cutoff of the Eisenstein series.
    #[arg(long)]
    pub bound: Option<f64>,
    /// Pass threshold for the command's checks.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, value_enum, default_value_t = Precision::Standard)]
    pub precision: Precision,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `csv` (default) or `json`; the siegel report is JSON only.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// `high` doubles the Eisenstein cutoff and tightens the L-series target.
#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Standard,
    High,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum IdentityKind {
    /// Points for negative, geodesics for positive discriminants.
    Auto,
    Points,
    Geodesics,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionSet {
    Full,
    Partition,
}

/// Fully resolved configuration, echoed into every output.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    pub degree: usize,
    pub radicand: Option<i64>,
    pub deltas: Vec<String>,
    pub delta_range: Option<(i64, i64)>,
    pub s: Vec<Complex64>,
    pub m: Vec<i64>,
    pub bound: f64,
    pub tol: f64,
    pub series_tol: f64,
    pub precision: Precision,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub options: Value,
}

struct Resolved {
    config: RunConfig,
    field: TotallyRealField,
    deltas: Vec<FieldElement>,
}

/// Text to write and the process status.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub text: String,
    pub status: i32,
}

#[derive(Clone, Debug)]
enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format!("{v:.16e}"),
            Cell::Text(t) if t.contains([',', '"', '\n']) => format!("\"{}\"", t.replace('"', "\"\"")),
            Cell::Text(t) => t.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Float(v) if v.is_finite() => json!(v),
            Cell::Text(t) => json!(t),
            _ => Value::Null,
        }
    }
}

fn opt_float(v: Option<f64>) -> Cell {
    v.map_or(Cell::Empty, Cell::Float)
}

struct Table {
    columns: &'static [&'static str],
    rows: Vec<Vec<Cell>>,
}

fn render(config: &RunConfig, table: &Table) -> String {
    match config.format {
        Format::Csv => {
            let mut out = String::new();
            writeln!(out, "# weylsum {VERSION}").unwrap();
            writeln!(out, "# config {}", serde_json::to_string(config).unwrap()).unwrap();
            writeln!(out, "{}", table.columns.join(",")).unwrap();
            for row in &table.rows {
                let cells: Vec<String> = row.iter().map(Cell::csv).collect();
                writeln!(out, "{}", cells.join(",")).unwrap();
            }
            out
        }
        Format::Json => {
            let rows: Vec<Value> = table
                .rows
                .iter()
                .map(|row| {
                    let map = table.columns.iter().zip(row).map(|(k, c)| (k.to_string(), c.json())).collect();
                    Value::Object(map)
                })
                .collect();
            let doc = json!({ "version": VERSION, "config": config, "rows": rows });
            serde_json::to_string_pretty(&doc).unwrap() + "\n"
        }
    }
}

fn parse_field(spec: &str) -> Result<TotallyRealField, CliError> {
    let spec = spec.trim();
    let field = if spec.eq_ignore_ascii_case("q") || spec == "1" {
        make_field(1, None)
    } else {
        let d = spec.parse::<i64>().map_err(|_| CliError::Usage(format!("bad --field {spec:?}")))?;
        make_field(2, Some(d))
    };
    field.map_err(|e| CliError::Construction(e.to_string()))
}

fn parse_int(t: &str, what: &str) -> Result<i64, CliError> {
    t.trim().parse().map_err(|_| CliError::Usage(format!("bad {what} {t:?}")))
}

fn parse_delta(field: &TotallyRealField, spec: &str) -> Result<FieldElement, CliError> {
    let parts: Vec<&str> = spec.split(',').collect();
    match parts.as_slice() {
        [a] => Ok(field.element(parse_int(a, "--delta")?, 0)),
        [a, b] if field.degree() == 2 => Ok(field.element(parse_int(a, "--delta")?, parse_int(b, "--delta")?)),
        _ => Err(CliError::Usage(format!("bad --delta {spec:?}"))),
    }
}

fn parse_range(spec: &str) -> Result<(i64, i64), CliError> {
    let (lo, hi) = spec.split_once("..").ok_or_else(|| CliError::Usage(format!("bad --delta-range {spec:?}")))?;
    let (lo, hi) = (parse_int(lo, "--delta-range")?, parse_int(hi, "--delta-range")?);
    if lo > hi {
        return Err(CliError::Usage(format!("empty --delta-range {spec:?}")));
    }
    Ok((lo, hi))
}

/// `x`, `x+yi` or `x-yi`.
pub fn parse_complex(spec: &str) -> Option<Complex64> {
    let t = spec.trim();
    let Some(body) = t.strip_suffix('i') else {
        return t.parse().ok().map(|x| Complex64::new(x, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len()).rev().find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'))?;
    let re = body[..split].parse().ok()?;
    let im_text = &body[split..];
    let im = match im_text {
        "+" => 1.0,
        "-" => -1.0,
        _ => im_text.parse().ok()?,
    };
    Some(Complex64::new(re, im))
}

fn resolve(
    command: &'static str,
    args: &CommonArgs,
    default_s: &[f64],
    default_bound: f64,
    default_tol: f64,
    options: Value,
) -> Result<Resolved, CliError> {
    let field = parse_field(&args.field)?;
    let g = field.degree();
    let m = match &args.m {
        Some(t) => t.split(',').map(|v| parse_int(v, "--m")).collect::<Result<Vec<_>, _>>()?,
        None => vec![0; g - 1],
    };
    if m.len() != g - 1 {
        return Err(CliError::Usage(format!("--m needs {} entries for degree {g}, got {}", g - 1, m.len())));
    }
    let s = match &args.s {
        Some(t) => t
            .split(',')
            .map(|v| parse_complex(v).ok_or_else(|| CliError::Usage(format!("bad --s {v:?}"))))
            .collect::<Result<Vec<_>, _>>()?,
        None => default_s.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
    };
    let mut deltas = args.delta.iter().map(|t| parse_delta(&field, t)).collect::<Result<Vec<_>, _>>()?;
    let delta_range = args.delta_range.as_deref().map(parse_range).transpose()?;
    if let Some((lo, hi)) = delta_range {
        deltas.extend(
            (lo..=hi)
                .filter(|&d| d != 0 && !is_square(d as i128))
                .map(|d| field.element(d, 0))
                .filter(|x| range_member(&field, x)),
        );
    }
    let scale = match args.precision {
        Precision::Standard => 1.0,
        Precision::High => 2.0,
    };
    let series_tol = match args.precision {
        Precision::Standard => 1e-10,
        Precision::High => 1e-12,
    };
    let bound = args.bound.unwrap_or(default_bound) * scale;
    if !(bound > 1.0) {
        return Err(CliError::Usage(format!("--bound must exceed 1, got {bound}")));
    }
    let config = RunConfig {
        command,
        degree: g,
        radicand: field.radicand(),
        deltas: deltas.iter().map(|x| x.to_string()).collect(),
        delta_range,
        s,
        m,
        bound,
        tol: args.tol.unwrap_or(default_tol),
        series_tol,
        precision: args.precision,
        out: args.out.clone(),
        format: args.format.unwrap_or(Format::Csv),
        options,
    };
    Ok(Resolved { config, field, deltas })
}

/// Range expansion keeps fundamental discriminants only.
fn range_member(field: &TotallyRealField, x: &FieldElement) -> bool {
    if field.degree() == 1 {
        is_fundamental_discriminant(x.int_coords().unwrap().0)
    } else {
        (x.is_totally_negative() || x.is_totally_positive()) && is_fundamental_relative(field, x)
    }
}

fn require_deltas(r: &Resolved) -> Result<(), CliError> {
    if r.deltas.is_empty() {
        return Err(CliError::Usage("give --delta or --delta-range".into()));
    }
    Ok(())
}

fn delta_cell(x: &FieldElement) -> Cell {
    match x.int_coords() {
        Some((a, 0)) => Cell::Int(a),
        _ => Cell::Text(x.to_string()),
    }
}

const CLASSNUMBER_COLUMNS: &[&str] = &["delta", "h", "mu", "dirichlet_h", "method_cross_check_residual", "error"];

fn classnumber_row(field: &TotallyRealField, delta: &FieldElement) -> (Vec<Cell>, Option<f64>) {
    let orbits = match enumerate_orbits(field, delta) {
        Ok(o) => o,
        Err(e) => {
            let mut row = vec![delta_cell(delta)];
            row.extend([Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty, Cell::Text(e.to_string())]);
            return (row, None);
        }
    };
    let h = orbits.class_number();
    let mut error = None;
    let mu = if field.degree() == 1 && delta.is_totally_positive() {
        match mu_delta(field, delta) {
            Ok(mu) => Some(mu.from_cycles),
            Err(e) => {
                error = Some(e.to_string());
                None
            }
        }
    } else {
        None
    };
    let d = delta.int_coords().filter(|&(_, b)| b == 0).map(|(a, _)| a);
    let formula = match d {
        Some(d) if field.degree() == 1 && is_fundamental_discriminant(d) => Some(dirichlet_class_number(d)),
        _ => None,
    };
    let residual = formula.map(|f| (f - h as f64).abs());
    let row = vec![
        delta_cell(delta),
        Cell::Int(h as i64),
        opt_float(mu),
        opt_float(formula),
        opt_float(residual),
        error.map_or(Cell::Empty, Cell::Text),
    ];
    (row, residual)
}

fn cmd_classnumber(args: &CommonArgs) -> Result<Outcome, CliError> {
    let r = resolve("classnumber", args, &[], 2.0, 1e-6, json!({}))?;
    require_deltas(&r)?;
    let results: Vec<(Vec<Cell>, Option<f64>)> = r.deltas.par_iter().map(|x| classnumber_row(&r.field, x)).collect();
    let failed = results.iter().any(|(_, res)| res.is_some_and(|v| v >= r.config.tol));
    let table = Table { columns: CLASSNUMBER_COLUMNS, rows: results.into_iter().map(|(row, _)| row).collect() };
    Ok(Outcome { text: render(&r.config, &table), status: if failed { EXIT_TOLERANCE } else { 0 } })
}

const IDENTITY_COLUMNS: &[&str] = &[
    "delta", "kind", "s_re", "s_im", "m", "lhs_re", "lhs_im", "rhs_re", "rhs_im", "residual", "bound", "lhs_estimate",
    "h", "index", "c_re", "c_im", "error",
];

fn identity_row(delta: &FieldElement, kind: &str, s: Complex64, m: &[i64], report: Result<IdentityReport, String>) -> Vec<Cell> {
    let m_text = m.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";");
    let mut row = vec![delta_cell(delta), Cell::Text(kind.into()), Cell::Float(s.re), Cell::Float(s.im), Cell::Text(m_text)];
    match report {
        Ok(rep) => row.extend([
            Cell::Float(rep.lhs.re),
            Cell::Float(rep.lhs.im),
            Cell::Float(rep.rhs.re),
            Cell::Float(rep.rhs.im),
            Cell::Float(rep.residual),
            Cell::Float(rep.bound),
            opt_float(rep.lhs_estimate.is_finite().then_some(rep.lhs_estimate)),
            Cell::Int(rep.class_number as i64),
            rep.index.map_or(Cell::Empty, |i| Cell::Int(i as i64)),
            opt_float(rep.c_factor.map(|c| c.re)),
            opt_float(rep.c_factor.map(|c| c.im)),
            Cell::Empty,
        ]),
        Err(e) => {
            row.extend(std::iter::repeat_n(Cell::Empty, 11));
            row.push(Cell::Text(e));
        }
    }
    row
}

fn cmd_identity(args: &CommonArgs, kind: IdentityKind) -> Result<Outcome, CliError> {
    let r = resolve("identity", args, &[2.0], 4000.0, 1e-5, json!({ "kind": kind }))?;
    require_deltas(&r)?;
    let params = IdentityParams { bound: r.config.bound, tol: r.config.series_tol, convention: WeightConvention::Stabilizer };
    let cells: Vec<(&FieldElement, Complex64)> =
        r.deltas.iter().flat_map(|x| r.config.s.iter().map(move |&s| (x, s))).collect();
    let results: Vec<(Vec<Cell>, Option<f64>)> = cells
        .par_iter()
        .map(|&(delta, s)| {
            let geodesic = match kind {
                IdentityKind::Auto => delta.is_totally_positive(),
                IdentityKind::Points => false,
                IdentityKind::Geodesics => true,
            };
            let report = if geodesic {
                verify_geodesic_identity(&r.field, delta, s, &r.config.m, &params)
            } else {
                verify_point_identity(&r.field, delta, s, &r.config.m, &params)
            }
            .map_err(|e| e.to_string());
            let residual = report.as_ref().ok().map(|rep| rep.residual);
            let label = if geodesic { "geodesics" } else { "points" };
            (identity_row(delta, label, s, &r.config.m, report), residual)
        })
        .collect();
    let failed = results.iter().any(|(_, res)| res.is_some_and(|v| !(v < r.config.tol)));
    let table = Table { columns: IDENTITY_COLUMNS, rows: results.into_iter().map(|(row, _)| row).collect() };
    Ok(Outcome { text: render(&r.config, &table), status: if failed { EXIT_TOLERANCE } else { 0 } })
}

const EQUIDIST_COLUMNS: &[&str] = &["kind", "delta", "region_id", "empirical", "target", "discrepancy", "x", "y", "note"];

/// Decade index `k` with `10^k <= |d| < 10^(k+1)`.
fn decade(d: i64) -> u32 {
    d.unsigned_abs().ilog10()
}

fn sampled_deltas(range: (i64, i64), per_decade: usize, seed: u64) -> Vec<i64> {
    let (lo, hi) = range;
    let mut out = Vec::new();
    let mut push_side = |a: i64, b: i64, sign: i64| {
        // a <= b are absolute values on one side of zero
        if b < 1 {
            return;
        }
        let a = a.max(1);
        for k in decade(a)..=decade(b) {
            let dlo = 10i64.pow(k).max(a);
            let dhi = (10i64.pow(k + 1) - 1).min(b);
            if dlo <= dhi {
                out.extend(sample_discriminants(sign * dlo, sign * dhi, per_decade, seed));
            }
        }
    };
    if lo < 0 {
        push_side((-hi).max(1), -lo, -1);
    }
    if hi > 0 {
        push_side(lo.max(1), hi, 1);
    }
    out.sort();
    out
}

fn plot_points(d: i64) -> Result<Vec<(f64, f64)>, CliError> {
    let field = TotallyRealField::rationals();
    let delta = field.element(d, 0);
    let orbits = enumerate_orbits(&field, &delta).map_err(|e| CliError::Construction(e.to_string()))?;
    let mut out = Vec::new();
    if d < 0 {
        for h in &orbits.representatives {
            let z = reduce_sl2z(h.heegner_root(1).z[0]).0;
            out.push((z.re, z.im));
        }
    } else {
        for c in geodesic_cycles(&orbits).map_err(|e| CliError::Construction(e.to_string()))? {
            let (w_minus, w_plus) = c.endpoints[0];
            let steps = (c.volume / PLOT_STEP).ceil().max(1.0) as usize;
            for k in 0..steps {
                let z = reduce_sl2z(geodesic_point(w_minus, w_plus, c.volume * k as f64 / steps as f64)).0;
                out.push((z.re, z.im));
            }
        }
    }
    Ok(out)
}

/// Arc length between plotted geodesic samples.
const PLOT_STEP: f64 = 0.05;

fn cmd_equidist(
    args: &CommonArgs,
    samples: Option<usize>,
    seed: u64,
    regions: RegionSet,
    plot_data: bool,
) -> Result<Outcome, CliError> {
    let options = json!({ "samples": samples, "seed": seed, "regions": regions, "plot_data": plot_data });
    let mut r = resolve("equidist", args, &[], 2.0, 0.0, options)?;
    if let (Some(n), Some(range)) = (samples, r.config.delta_range) {
        let explicit: Vec<FieldElement> =
            args.delta.iter().map(|t| parse_delta(&r.field, t)).collect::<Result<_, _>>()?;
        r.deltas = explicit;
        r.deltas.extend(sampled_deltas(range, n, seed).into_iter().map(|d| r.field.element(d, 0)));
        r.config.deltas = r.deltas.iter().map(|x| x.to_string()).collect();
    }
    require_deltas(&r)?;
    let deltas: Vec<i64> = r
        .deltas
        .iter()
        .map(|x| match x.int_coords() {
            Some((a, 0)) => Ok(a),
            _ => Err(CliError::Usage(format!("equidist takes rational discriminants, got {x}"))),
        })
        .collect::<Result<_, _>>()?;
    if plot_data && r.field.degree() != 1 {
        return Err(CliError::Usage("plot data is available over Q only".into()));
    }
    let region_list = match (regions, r.field.degree()) {
        (RegionSet::Full, _) => vec![Region::Full],
        (RegionSet::Partition, 1) => three_region_partition(),
        (RegionSet::Partition, _) => vec![Region::Cusp { min_y_norm: 1.0 }, Region::Cusp { min_y_norm: 2.0 }],
    };
    let rows = equidist_experiment(&r.field, &deltas, &region_list).map_err(|e| CliError::Construction(e.to_string()))?;
    let mut table = Table { columns: EQUIDIST_COLUMNS, rows: Vec::new() };
    for row in &rows {
        table.rows.push(vec![
            Cell::Text("row".into()),
            Cell::Int(row.delta),
            Cell::Int(row.region_id as i64),
            Cell::Float(row.empirical),
            Cell::Float(row.target),
            Cell::Float(row.discrepancy),
            Cell::Empty,
            Cell::Empty,
            Cell::Empty,
        ]);
    }
    // per sign and decade, in order of increasing |delta|
    let mut groups: Vec<((bool, u32), Vec<_>)> = Vec::new();
    for row in &rows {
        let key = (row.delta > 0, decade(row.delta));
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(row.clone()),
            None => groups.push((key, vec![row.clone()])),
        }
    }
    groups.sort_by_key(|(k, _)| *k);
    let mut failed = false;
    for positive in [false, true] {
        let side: Vec<_> = groups.iter().filter(|(k, _)| k.0 == positive).collect();
        let medians: Vec<f64> = side.iter().map(|(_, v)| median_discrepancy(v)).collect();
        for (((_, k), _), median) in side.iter().zip(&medians) {
            let (a, b) = (10i64.pow(*k), 10i64.pow(k + 1));
            let label = if positive { format!("{a}..{b}") } else { format!("-{b}..-{a}") };
            table.rows.push(vec![
                Cell::Text("summary".into()),
                Cell::Text(label),
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Float(*median),
                Cell::Empty,
                Cell::Empty,
                Cell::Text("median of max discrepancy".into()),
            ]);
        }
        if medians.len() >= 2 {
            let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
            failed |= !decreasing;
            table.rows.push(vec![
                Cell::Text("trend".into()),
                Cell::Text(if positive { "positive" } else { "negative" }.into()),
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Text(if decreasing { "decreasing" } else { "not decreasing" }.into()),
            ]);
        }
    }
    if plot_data {
        let pts: Vec<Vec<(f64, f64)>> = deltas.par_iter().map(|&d| plot_points(d)).collect::<Result<_, _>>()?;
        for (&d, list) in deltas.iter().zip(pts) {
            for (x, y) in list {
                table.rows.push(vec![
                    Cell::Text("point".into()),
                    Cell::Int(d),
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Float(x),
                    Cell::Float(y),
                    Cell::Empty,
                ]);
            }
        }
    }
    Ok(Outcome { text: render(&r.config, &table), status: if failed { EXIT_TOLERANCE } else { 0 } })
}

#[derive(Serialize)]
struct SiegelReport {
    version: &'static str,
    config: RunConfig,
    mq_identity: MqSummary,
    humbert: HumbertSummary,
    modular_curve: CurveSummary,
    quaternion: Value,
    n: String,
    congruence_holds: bool,
    order_discriminant: String,
    discriminant_is_n_squared: bool,
}

#[derive(Serialize)]
struct MqSummary {
    checked: usize,
    failures: usize,
}

#[derive(Serialize)]
struct HumbertSummary {
    relation: [i64; 5],
    points: usize,
    max_residual: f64,
}

#[derive(Serialize)]
struct CurveSummary {
    mobius: [f64; 4],
    points: usize,
    max_residual: f64,
}

fn random_uhp(rng: &mut ChaCha8Rng, g: usize) -> Result<UHPPoint, CliError> {
    let z = (0..g).map(|_| Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(0.2..3.0))).collect();
    UHPPoint::new(z).map_err(|e| CliError::Construction(e.to_string()))
}

fn cmd_siegel(args: &CommonArgs, yd: &str, mq_checks: usize, points: usize, seed: u64) -> Result<Outcome, CliError> {
    if args.format == Some(Format::Csv) {
        return Err(CliError::Usage("the siegel report is JSON only".into()));
    }
    let options = json!({ "yd": yd, "mq_checks": mq_checks, "points": points, "seed": seed });
    let mut r = resolve("siegel", args, &[], 2.0, 1e-10, options)?;
    r.config.format = Format::Json;
    let d = match r.field.radicand() {
        Some(d) => d,
        None => return Err(CliError::Usage("siegel needs a real quadratic --field".into())),
    };
    let parts = yd.split(',').map(|v| parse_int(v, "--yd")).collect::<Result<Vec<_>, _>>()?;
    let [a, b, p, q] = parts[..] else {
        return Err(CliError::Usage(format!("--yd needs four integers, got {yd:?}")));
    };
    let construct = |e: crate::siegel::SiegelError| CliError::Construction(e.to_string());
    let field = &r.field;
    let m = YdMatrix::new(field, field.element(1, 0), a, b, field.element(p, q)).map_err(construct)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vectors: Vec<QuinaryVector> =
        (0..mq_checks).map(|_| QuinaryVector(std::array::from_fn(|_| rng.gen_range(-1000..=1000)))).collect();
    let failures = vectors.par_iter().filter(|x| !check_mq_identity(x)).count();

    let relation = QuinaryVector::embedding_relation(d);
    let curve = modular_curve(&m).map_err(construct)?;
    let (mut humbert_max, mut curve_max) = (0.0f64, 0.0f64);
    for _ in 0..points {
        let z = random_uhp(&mut rng, 2)?;
        let image = modular_embedding(field, &z).map_err(construct)?;
        humbert_max = humbert_max.max(humbert_residual(&image, &relation, RelationVariant::Holomorphic).map_err(construct)?);
        let z1 = z.z[0];
        curve_max = curve_max.max(curve.residual(z1, curve.image(z1)));
    }
    let quaternion = quaternion_from_m(&m).map_err(construct)?;
    let n = m.n();
    let failed = failures > 0 || !(humbert_max < r.config.tol) || !quaternion.anticommute;
    let report = SiegelReport {
        version: VERSION,
        mq_identity: MqSummary { checked: mq_checks, failures },
        humbert: HumbertSummary { relation: relation.0, points, max_residual: humbert_max },
        modular_curve: CurveSummary { mobius: curve.mobius, points, max_residual: curve_max },
        quaternion: serde_json::to_value(&quaternion).expect("quaternion data serializes"),
        n: n.to_string(),
        congruence_holds: m.congruence_holds(),
        order_discriminant: quaternion.order_discriminant.to_string(),
        discriminant_is_n_squared: quaternion.order_discriminant == n * n,
        config: r.config,
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    Ok(Outcome { text, status: if failed { EXIT_TOLERANCE } else { 0 } })
}

/// Run a parsed command line.
pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Classnumber(common) => cmd_classnumber(common),
        Command::Identity { common, kind } => cmd_identity(common, *kind),
        Command::Equidist { common, samples, seed, regions, plot_data } => {
            cmd_equidist(common, *samples, *seed, *regions, *plot_data)
        }
        Command::Siegel { common, yd, mq_checks, points, seed } => cmd_siegel(common, yd, *mq_checks, *points, *seed),
    }
}

fn out_path(cli: &Cli) -> Option<&PathBuf> {
    match &cli.command {
        Command::Classnumber(c) => c.out.as_ref(),
        Command::Identity { common, .. } | Command::Equidist { common, .. } | Command::Siegel { common, .. } => {
            common.out.as_ref()
        }
    }
}

/// Cap the worker pool at `WEYLSUM_THREADS` when set.
pub fn configure_threads() {
    if let Some(n) = std::env::var("WEYLSUM_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // a second call keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

/// Parse `args`, run, write the output, and return the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    configure_threads();
    let outcome = match execute(&cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("weylsum: {e}");
            return EXIT_USAGE;
        }
    };
    let written = match out_path(&cli) {
        Some(p) => std::fs::write(p, &outcome.text),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(outcome.text.as_bytes())
        }
    };
    if let Err(e) = written {
        eprintln!("weylsum: {}", CliError::Io(e));
        return EXIT_USAGE;
    }
    outcome.status
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(args: &[&str]) -> Result<Outcome, CliError> {
        let cli = Cli::try_parse_from(std::iter::once("weylsum").chain(args.iter().copied())).unwrap();
        execute(&cli)
    }

    fn data_lines(text: &str) -> Vec<Vec<String>> {
        text.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
    }

    #[test]
    fn complex_arguments() {
        assert_eq!(parse_complex("2"), Some(Complex64::new(2.0, 0.0)));
        assert_eq!(parse_complex("0.5+14i"), Some(Complex64::new(0.5, 14.0)));
        assert_eq!(parse_complex("1e-1-2i"), Some(Complex64::new(0.1, -2.0)));
        assert_eq!(parse_complex("2-i"), Some(Complex64::new(2.0, -1.0)));
        assert_eq!(parse_complex("x"), None);
    }

    #[test]
    fn class_numbers_agree_with_the_formula() {
        let out = outcome(&["classnumber", "--delta-range=-100..-1"]).unwrap();
        assert_eq!(out.status, 0);
        let rows = data_lines(&out.text);
        assert_eq!(rows.len(), 31);
        for row in rows {
            let h: f64 = row[1].parse().unwrap();
            let formula: f64 = row[3].parse().unwrap();
            assert_eq!(h, formula.round());
        }
    }

    #[test]
    fn golden_discriminant_row() {
        let out = outcome(&["classnumber", "--delta", "5"]).unwrap();
        let row = &data_lines(&out.text)[0];
        assert_eq!(row[1], "1");
        let mu: f64 = row[2].parse().unwrap();
        assert!((mu - 2.0 * ((3.0 + 5f64.sqrt()) / 2.0).ln()).abs() < 1e-10);
    }

    #[test]
    fn square_discriminant_is_an_error_row() {
        let out = outcome(&["classnumber", "--delta", "4", "--delta", "-4"]).unwrap();
        assert_eq!(out.status, 0);
        let rows = data_lines(&out.text);
        assert!(rows[0][5].contains("square"));
        assert_eq!(rows[1][1], "1");
    }

    #[test]
    fn wrong_m_length_is_a_usage_error() {
        let err = outcome(&["identity", "--delta=-7", "--m", "0"]).unwrap_err();
        assert!(matches!(err, CliError::Usage(_)));
        assert_eq!(run(["weylsum", "identity", "--delta=-7", "--m", "0"]), EXIT_USAGE);
        let err = outcome(&["identity", "--field", "5", "--delta=-3", "--m", "0,0"]).unwrap_err();
        assert!(matches!(err, CliError::Usage(_)));
    }

    #[test]
    fn bad_field_is_a_construction_error() {
        assert!(matches!(outcome(&["classnumber", "--field", "12", "--delta=-3"]), Err(CliError::Construction(_))));
    }

    #[test]
    fn identity_batches_pass() {
        let out = outcome(&["identity", "--delta=-7", "--delta=-8", "--s", "1.5,2", "--bound", "512"]).unwrap();
        assert_eq!(out.status, 0, "{}", out.text);
        let out = outcome(&["identity", "--delta", "5", "--delta", "12", "--bound", "512"]).unwrap();
        assert_eq!(out.status, 0, "{}", out.text);
        assert!(out.text.contains("geodesics"));
    }

    #[test]
    fn identity_tolerance_failure() {
        let out = outcome(&["identity", "--delta=-7", "--bound", "8", "--tol", "1e-12"]).unwrap();
        assert_eq!(out.status, EXIT_TOLERANCE);
    }

    #[test]
    fn full_region_is_everything() {
        let out = outcome(&["equidist", "--delta=-23", "--regions", "full"]).unwrap();
        let row = &data_lines(&out.text)[0];
        assert_eq!(row[3].parse::<f64>().unwrap(), 1.0);
        assert_eq!(row[4].parse::<f64>().unwrap(), 1.0);
    }

    #[test]
    fn plot_data_adds_points() {
        let out = outcome(&["equidist", "--delta=-23", "--delta", "5", "--plot-data"]).unwrap();
        let points: Vec<_> = data_lines(&out.text).into_iter().filter(|r| r[0] == "point").collect();
        assert_eq!(points.iter().filter(|r| r[1] == "-23").count(), 3);
        assert!(points.iter().any(|r| r[1] == "5"));
        assert!(points.iter().all(|r| r[7].parse::<f64>().unwrap() > 0.8));
    }

    #[test]
    fn decade_trend_row() {
        let out = outcome(&["equidist", "--delta-range=-10000..-100", "--samples", "20"]).unwrap();
        let rows = data_lines(&out.text);
        assert_eq!(rows.iter().filter(|r| r[0] == "summary").count(), 2);
        assert!(rows.iter().any(|r| r[0] == "trend"));
    }

    #[test]
    fn outputs_embed_config_and_version() {
        let out = outcome(&["classnumber", "--delta=-3", "--format", "json"]).unwrap();
        let v: Value = serde_json::from_str(&out.text).unwrap();
        assert_eq!(v["version"], VERSION);
        assert_eq!(v["config"]["command"], "classnumber");
        assert_eq!(v["rows"][0]["h"], 1);
        let csv = outcome(&["classnumber", "--delta=-3"]).unwrap().text;
        assert!(csv.starts_with(&format!("# weylsum {VERSION}\n# config {{")));
    }

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(Cell::Float(1.0 / 3.0).csv(), "3.3333333333333331e-1");
    }

    #[test]
    fn siegel_report() {
        let out = outcome(&["siegel", "--field", "5", "--yd", "1,2,1,0", "--mq-checks", "200", "--points", "10"]).unwrap();
        assert_eq!(out.status, 0, "{}", out.text);
        let v: Value = serde_json::from_str(&out.text).unwrap();
        assert_eq!(v["n"], "11");
        assert_eq!(v["order_discriminant"], "121");
        assert_eq!(v["mq_identity"]["failures"], 0);
        assert!(v["humbert"]["max_residual"].as_f64().unwrap() < 1e-10);
    }
}

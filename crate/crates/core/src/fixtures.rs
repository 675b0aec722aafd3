//! Published reference matrices, shipped as JSON and compared entry-wise.
//!
//! Entries are kept as the printed strings (`"-0.163639+0.972727i"`,
//! `"2i"`, `"0"`). Each component remembers how many decimals were printed,
//! so a computed value can be rounded the same way before comparing.
//! Obvious print errors are corrected in place; the original string is kept
//! in the fixture's `corrections` list together with the reason.

use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::assembly::estimate_nnz;
use crate::error::{Error, Result};
use crate::rational::Rational;
use crate::solver::{period_matrix, CMatrix, RiemannMatrix, SolveOptions};
use crate::surface::{make_js, make_l, BasisVariant, Family, SurfaceSpec};

const SOURCES: [(&str, &str); 8] = [
    ("l2", include_str!("../fixtures/l2.json")),
    ("l_sqrt3_cf", include_str!("../fixtures/l_sqrt3_cf.json")),
    (
        "l_10864_7953",
        include_str!("../fixtures/l_10864_7953.json"),
    ),
    ("js2", include_str!("../fixtures/js2.json")),
    ("js2_params", include_str!("../fixtures/js2_params.json")),
    ("js3", include_str!("../fixtures/js3.json")),
    ("js4", include_str!("../fixtures/js4.json")),
    ("js5", include_str!("../fixtures/js5.json")),
];

/// Identifiers of the shipped fixtures.
pub fn ids() -> impl Iterator<Item = &'static str> {
    SOURCES.iter().map(|(id, _)| *id)
}

pub fn load(id: &str) -> Result<Fixture> {
    let (_, text) = SOURCES
        .iter()
        .find(|(k, _)| *k == id)
        .ok_or_else(|| Error::InvalidParameter(format!("unknown fixture '{id}'")))?;
    Fixture::from_json(text)
}

pub fn load_all() -> Result<Vec<Fixture>> {
    ids().map(load).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparison {
    /// `|computed − printed| ≤ tol` per component.
    Absolute,
    /// Round the computed component to the printed number of decimals first.
    Rounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSurface {
    pub family: Family,
    #[serde(default)]
    pub genus: Option<usize>,
    #[serde(default)]
    pub lambda: Option<Rational>,
    #[serde(default)]
    pub mu: Option<Rational>,
    #[serde(default)]
    pub basis: Option<BasisVariant>,
    /// Irrational parameter that the rows approximate.
    #[serde(default)]
    pub lambda_decimal: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRow {
    pub level: u32,
    #[serde(default)]
    pub lambda: Option<Rational>,
    #[serde(default)]
    pub mu: Option<Rational>,
    /// Continued-fraction tolerance that produced `lambda`.
    #[serde(default)]
    pub cf_tol: Option<f64>,
    #[serde(default)]
    pub time_s: Option<f64>,
    pub tau: Vec<Vec<String>>,
    /// Set when the printed row is known to be unreliable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suspect: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureLimit {
    pub label: String,
    #[serde(default)]
    pub lambda: Option<Rational>,
    #[serde(default)]
    pub lambda_decimal: Option<f64>,
    pub tau: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub level: u32,
    pub row: usize,
    pub col: usize,
    pub printed: String,
    pub value: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub id: String,
    pub title: String,
    pub provenance: String,
    pub surface: FixtureSurface,
    pub comparison: Comparison,
    /// Decimals stated for the table as a whole.
    pub decimals: u32,
    pub rows: Vec<FixtureRow>,
    #[serde(default)]
    pub limits: Vec<FixtureLimit>,
    #[serde(default)]
    pub corrections: Vec<Correction>,
}

/// One printed real number and its number of decimals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrintedReal {
    pub value: f64,
    pub decimals: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrintedComplex {
    pub re: PrintedReal,
    pub im: PrintedReal,
}

impl PrintedComplex {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value, self.im.value)
    }
}

fn parse_real(s: &str, whole: &str) -> Result<PrintedReal> {
    let bad = || Error::InvalidParameter(format!("cannot parse printed entry '{whole}'"));
    let value: f64 = s.parse().map_err(|_| bad())?;
    if !value.is_finite() || s.contains(['e', 'E']) {
        return Err(bad());
    }
    let decimals = s.split_once('.').map_or(0, |(_, frac)| frac.len() as u32);
    Ok(PrintedReal { value, decimals })
}

/// Parses `a`, `bi`, `i`, `-i`, `a+bi` or `a-bi` (whitespace ignored). A
/// missing component is zero with the decimals of the printed one.
pub fn parse_entry(entry: &str) -> Result<PrintedComplex> {
    let s: String = entry.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || Error::InvalidParameter(format!("cannot parse printed entry '{entry}'"));
    if s.is_empty() {
        return Err(bad());
    }
    let Some(body) = s.strip_suffix('i') else {
        let re = parse_real(&s, entry)?;
        return Ok(PrintedComplex {
            re,
            im: PrintedReal { value: 0.0, ..re },
        });
    };
    // split before the last sign that is not leading
    let split = body
        .char_indices()
        .skip(1)
        .filter(|&(_, c)| c == '+' || c == '-')
        .map(|(k, _)| k)
        .last();
    let (re_s, im_s) = match split {
        Some(k) => (Some(&body[..k]), &body[k..]),
        None => (None, body),
    };
    let im = match im_s {
        "" | "+" => PrintedReal {
            value: 1.0,
            decimals: 0,
        },
        "-" => PrintedReal {
            value: -1.0,
            decimals: 0,
        },
        t => parse_real(t.strip_prefix('+').unwrap_or(t), entry)?,
    };
    if im_s.len() > 1 && im_s[1..].starts_with(['+', '-']) {
        return Err(bad());
    }
    let re = match re_s {
        Some(t) => parse_real(t, entry)?,
        None => PrintedReal { value: 0.0, ..im },
    };
    Ok(PrintedComplex { re, im })
}

pub fn parse_matrix(tau: &[Vec<String>]) -> Result<Vec<Vec<PrintedComplex>>> {
    let g = tau.len();
    if g == 0 || tau.iter().any(|r| r.len() != g) {
        return Err(Error::InvalidParameter(
            "fixture matrix must be square".into(),
        ));
    }
    tau.iter()
        .map(|r| r.iter().map(|e| parse_entry(e)).collect())
        .collect()
}

fn round_to(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (x * scale).round() / scale
}

/// Distance of one computed component from the printed one under `mode`.
/// Integers are always compared directly.
pub fn component_deviation(computed: f64, printed: PrintedReal, mode: Comparison) -> f64 {
    match mode {
        Comparison::Rounded if printed.decimals > 0 => {
            (round_to(computed, printed.decimals) - printed.value).abs()
        }
        _ => (computed - printed.value).abs(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mismatch {
    pub row: usize,
    pub col: usize,
    pub printed: String,
    pub computed: Complex64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixComparison {
    pub max_deviation: f64,
    pub mismatches: Vec<Mismatch>,
}

impl MatrixComparison {
    pub fn pass(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Compares a computed matrix with printed entries; a mismatch is any entry
/// whose deviation exceeds `tol`.
pub fn compare_matrix(
    printed: &[Vec<String>],
    computed: &CMatrix,
    mode: Comparison,
    tol: f64,
) -> Result<MatrixComparison> {
    let parsed = parse_matrix(printed)?;
    if computed.len() != parsed.len() {
        return Err(Error::InvalidParameter(format!(
            "computed matrix is {0}×{0}, fixture is {1}×{1}",
            computed.len(),
            parsed.len()
        )));
    }
    let mut max_deviation = 0.0f64;
    let mut mismatches = Vec::new();
    for (a, row) in parsed.iter().enumerate() {
        for (b, p) in row.iter().enumerate() {
            let z = computed[a][b];
            let d =
                component_deviation(z.re, p.re, mode).max(component_deviation(z.im, p.im, mode));
            max_deviation = max_deviation.max(d);
            if !(d <= tol) {
                mismatches.push(Mismatch {
                    row: a,
                    col: b,
                    printed: printed[a][b].clone(),
                    computed: z,
                    deviation: d,
                });
            }
        }
    }
    Ok(MatrixComparison {
        max_deviation,
        mismatches,
    })
}

/// Numeric value of a printed matrix.
pub fn printed_values(tau: &[Vec<String>]) -> Result<CMatrix> {
    Ok(parse_matrix(tau)?
        .into_iter()
        .map(|r| r.into_iter().map(|p| p.value()).collect())
        .collect())
}

impl Fixture {
    pub fn from_json(text: &str) -> Result<Self> {
        let f: Fixture = serde_json::from_str(text)?;
        for row in &f.rows {
            parse_matrix(&row.tau)?;
        }
        for lim in &f.limits {
            parse_matrix(&lim.tau)?;
        }
        Ok(f)
    }

    pub fn row(&self, level: u32) -> Option<&FixtureRow> {
        self.rows.iter().find(|r| r.level == level)
    }

    /// Surface of a row, with row-level parameters taking precedence.
    pub fn spec_for(&self, row: &FixtureRow) -> Result<SurfaceSpec> {
        let missing =
            |what: &str| Error::InvalidParameter(format!("fixture {} row lacks {what}", self.id));
        let lambda = row
            .lambda
            .or(self.surface.lambda)
            .ok_or_else(|| missing("lambda"))?;
        match self.surface.family {
            Family::L => make_l(lambda, self.surface.basis.unwrap_or_default()),
            Family::Js => {
                let g = self.surface.genus.ok_or_else(|| missing("genus"))?;
                let mu = row.mu.or(self.surface.mu).ok_or_else(|| missing("mu"))?;
                make_js(g, lambda, mu)
            }
        }
    }

    /// Printed matrix as a [`RiemannMatrix`], for use as input elsewhere.
    pub fn matrix(&self, level: u32) -> Result<RiemannMatrix> {
        let row = self.row(level).ok_or_else(|| {
            Error::InvalidParameter(format!("fixture {} has no level {level}", self.id))
        })?;
        let mut m = RiemannMatrix::from_tau(printed_values(&row.tau)?)?;
        m.level = Some(level);
        m.provenance = Some(format!("fixture {} level {level}", self.id));
        Ok(m)
    }

    pub fn compare(
        &self,
        row: &FixtureRow,
        computed: &CMatrix,
        tol: f64,
    ) -> Result<MatrixComparison> {
        compare_matrix(&row.tau, computed, self.comparison, tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum RowStatus {
    Pass { max_deviation: f64 },
    Fail { comparison: MatrixComparison },
    Skipped { reason: String },
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowCheck {
    pub fixture: String,
    pub level: u32,
    pub surface: String,
    pub wall_time_s: Option<f64>,
    #[serde(flatten)]
    pub status: RowStatus,
}

#[derive(Debug, Clone, Copy)]
pub struct CheckOptions {
    /// Rows above this level are skipped.
    pub max_level: u32,
    /// Skip rows whose estimated matrix has more nonzeros.
    pub nnz_budget: u64,
    pub tol: f64,
    pub solve: SolveOptions,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            max_level: 3,
            nnz_budget: 20_000_000,
            tol: 1e-9,
            solve: SolveOptions::default(),
        }
    }
}

/// Recomputes every eligible row of `fixture` and compares it.
pub fn check(fixture: &Fixture, opts: &CheckOptions) -> Vec<RowCheck> {
    fixture
        .rows
        .iter()
        .map(|row| check_row(fixture, row, opts))
        .collect()
}

pub fn check_row(fixture: &Fixture, row: &FixtureRow, opts: &CheckOptions) -> RowCheck {
    let mut out = RowCheck {
        fixture: fixture.id.clone(),
        level: row.level,
        surface: String::new(),
        wall_time_s: None,
        status: RowStatus::Skipped {
            reason: String::new(),
        },
    };
    let spec = match fixture.spec_for(row) {
        Ok(s) => s,
        Err(e) => {
            out.status = RowStatus::Error {
                message: e.to_string(),
            };
            return out;
        }
    };
    out.surface = spec.summary();
    if let Some(reason) = &row.suspect {
        out.status = RowStatus::Skipped {
            reason: reason.clone(),
        };
        return out;
    }
    if row.level > opts.max_level {
        out.status = RowStatus::Skipped {
            reason: format!("level above {}", opts.max_level),
        };
        return out;
    }
    match estimate_nnz(&spec, row.level) {
        Ok(n) if n > opts.nnz_budget => {
            out.status = RowStatus::Skipped {
                reason: format!("estimated {n} nonzeros exceeds budget {}", opts.nnz_budget),
            };
            return out;
        }
        Err(e) => {
            out.status = RowStatus::Error {
                message: e.to_string(),
            };
            return out;
        }
        Ok(_) => {}
    }
    let start = Instant::now();
    let result = period_matrix(&spec, row.level, &opts.solve)
        .and_then(|m| fixture.compare(row, &m.tau, opts.tol));
    out.wall_time_s = Some(start.elapsed().as_secs_f64());
    out.status = match result {
        Ok(c) if c.pass() => RowStatus::Pass {
            max_deviation: c.max_deviation,
        },
        Ok(c) => RowStatus::Fail { comparison: c },
        Err(e) => RowStatus::Error {
            message: e.to_string(),
        },
    };
    out
}

//! Closed forms, basis changes, rational approximation of side lengths,
//! convergence studies and the reciprocity test for genus-2 branch points.

use std::fmt::Write as _;
use std::time::Instant;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rational::Rational;
use crate::solver::{period_matrix, sup_distance, CMatrix, SolveOptions};
use crate::surface::SurfaceSpec;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Riemann matrix of the L-shaped surface with side ratio `λ > 1`:
/// `𝐢/(2λ−1)·[[2λ²−2λ+1, −2λ(λ−1)], [−2λ(λ−1), 2λ²−2λ+1]]`.
pub fn exact_l_matrix(lambda: f64) -> Result<CMatrix> {
    if !(lambda > 1.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!(
            "exact L matrix needs lambda > 1, got {lambda}"
        )));
    }
    let s = 1.0 / (2.0 * lambda - 1.0);
    let d = (2.0 * lambda * lambda - 2.0 * lambda + 1.0) * s;
    let o = -2.0 * lambda * (lambda - 1.0) * s;
    Ok(vec![vec![c(0.0, d), c(0.0, o)], vec![c(0.0, o), c(0.0, d)]])
}

/// `[[x, y], [y, z]] ↦ [[x+2y+z, −y−z], [−y−z, z]]`, taking the matrix in
/// the δ-basis of the L to the matrix in the α-basis.
pub fn basis_transform_l(tau: &CMatrix) -> Result<CMatrix> {
    if tau.len() != 2 || tau.iter().any(|r| r.len() != 2) {
        return Err(Error::InvalidParameter(
            "basis transform needs a 2×2 matrix".into(),
        ));
    }
    let (x, y, z) = (tau[0][0], 0.5 * (tau[0][1] + tau[1][0]), tau[1][1]);
    Ok(vec![vec![x + 2.0 * y + z, -y - z], vec![-y - z, z]])
}

/// Convergents of the nearest-integer continued fraction of `x`, stopping
/// when the expansion terminates or the next one would overflow.
pub fn nearest_integer_convergents(x: f64, max_terms: usize) -> Vec<Rational> {
    let mut out = Vec::new();
    if !x.is_finite() {
        return out;
    }
    let (mut p0, mut q0) = (1i128, 0i128);
    let (mut p1, mut q1): (i128, i128);
    let mut t = x;
    let a0 = t.round();
    if a0.abs() > i64::MAX as f64 / 2.0 {
        return out;
    }
    p1 = a0 as i128;
    q1 = 1;
    let mut frac = t - a0;
    loop {
        let Ok(r) = Rational::new(p1 as i64, q1 as i64) else {
            break;
        };
        out.push(r);
        if out.len() >= max_terms || frac == 0.0 {
            break;
        }
        t = 1.0 / frac;
        let a = t.round();
        frac = t - a;
        if a.abs() > 1e15 {
            break;
        }
        let a = a as i128;
        let (p2, q2) = (a * p1 + p0, a * q1 + q0);
        if p2.abs() > i64::MAX as i128 || q2.abs() > i64::MAX as i128 || q2 == 0 {
            break;
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        // Rational::new normalizes the sign of the denominator
    }
    out
}

/// First nearest-integer continued-fraction convergent `p/q` of `x` with
/// `|x − p/q| < tol`.
pub fn continued_fraction_approx(x: f64, tol: f64) -> Result<Rational> {
    if !(x > 1.0) || !x.is_finite() {
        return Err(Error::InvalidParameter(format!("expected x > 1, got {x}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    nearest_integer_convergents(x, 64)
        .into_iter()
        .find(|r| (x - r.to_f64()).abs() < tol)
        .ok_or_else(|| {
            Error::InvalidParameter(format!(
                "no convergent of {x} within {tol:e} before integer overflow"
            ))
        })
}

/// What a convergence study measures its errors against.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reference {
    ExactL { lambda: f64 },
    Fixture { label: String, tau: CMatrix },
    None,
}

impl Reference {
    pub fn exact_l(lambda: f64) -> Result<Self> {
        exact_l_matrix(lambda)?;
        Ok(Reference::ExactL { lambda })
    }

    fn matrix(&self) -> Option<CMatrix> {
        match self {
            Reference::ExactL { lambda } => exact_l_matrix(*lambda).ok(),
            Reference::Fixture { tau, .. } => Some(tau.clone()),
            Reference::None => None,
        }
    }

    fn label(&self) -> String {
        match self {
            Reference::ExactL { lambda } => format!("exact L (lambda = {lambda})"),
            Reference::Fixture { label, .. } => label.clone(),
            Reference::None => "none".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub level: u32,
    pub tau: CMatrix,
    /// `‖τ_n − reference‖∞` (max entry modulus).
    pub error: Option<f64>,
    /// `log₁₀(err_{n−1}/err_n)`
    pub digits_gained: Option<f64>,
    pub residual: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub surface: String,
    pub reference: Reference,
    pub rows: Vec<ConvergenceRow>,
    /// Set when a level failed; the rows before it are still valid.
    pub stopped: Option<StopReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StopReason {
    pub level: u32,
    pub message: String,
}

impl ConvergenceReport {
    /// Mean of the per-level digit gains.
    pub fn mean_digit_gain(&self) -> Option<f64> {
        let gains: Vec<f64> = self.rows.iter().filter_map(|r| r.digits_gained).collect();
        (!gains.is_empty()).then(|| gains.iter().sum::<f64>() / gains.len() as f64)
    }

    /// Errors strictly decrease from level to level.
    pub fn errors_decreasing(&self) -> bool {
        let errs: Vec<f64> = self.rows.iter().filter_map(|r| r.error).collect();
        errs.windows(2).all(|w| w[1] < w[0])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Aligned columns: level, time, error, digit gain, then the matrix
    /// entries (`re+imi`) row by row.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "surface:   {}", self.surface);
        let _ = writeln!(out, "reference: {}", self.reference.label());
        let _ = writeln!(
            out,
            "{:>5}  {:>10}  {:>10}  {:>6}  approximation",
            "n", "time [s]", "error", "digits"
        );
        for row in &self.rows {
            let err = row.error.map_or("-".into(), |e| format!("{e:.3e}"));
            let gain = row.digits_gained.map_or("-".into(), |d| format!("{d:.2}"));
            for (k, line) in row.tau.iter().enumerate() {
                let entries: Vec<String> = line.iter().map(|z| format_complex(*z)).collect();
                if k == 0 {
                    let _ = writeln!(
                        out,
                        "{:>5}  {:>10.3}  {:>10}  {:>6}  {}",
                        row.level,
                        row.wall_time_s,
                        err,
                        gain,
                        entries.join("  ")
                    );
                } else {
                    let _ = writeln!(
                        out,
                        "{:>5}  {:>10}  {:>10}  {:>6}  {}",
                        "",
                        "",
                        "",
                        "",
                        entries.join("  ")
                    );
                }
            }
        }
        if let Some(s) = &self.stopped {
            let _ = writeln!(out, "stopped at level {}: {}", s.level, s.message);
        }
        out
    }
}

/// `-0.183154151609461+0.965246769734320i`
pub fn format_complex(z: Complex64) -> String {
    format!("{:.15}{:+.15}i", z.re, z.im)
}

/// Solves `spec` at each level and measures the error against `reference`.
pub fn convergence_report(
    spec: &SurfaceSpec,
    levels: &[u32],
    reference: Reference,
    opts: &SolveOptions,
) -> Result<ConvergenceReport> {
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "levels must be strictly increasing".into(),
        ));
    }
    let target = reference.matrix();
    if let Some(t) = &target {
        if t.len() != spec.genus {
            return Err(Error::InvalidParameter(format!(
                "reference is {}×{} but the surface has genus {}",
                t.len(),
                t.len(),
                spec.genus
            )));
        }
    }
    let mut report = ConvergenceReport {
        surface: spec.summary(),
        reference,
        rows: Vec::new(),
        stopped: None,
    };
    let mut previous: Option<f64> = None;
    for &level in levels {
        let start = Instant::now();
        let m = match period_matrix(spec, level, opts) {
            Ok(m) => m,
            Err(e) => {
                report.stopped = Some(StopReason {
                    level,
                    message: e.to_string(),
                });
                break;
            }
        };
        let error = target.as_ref().map(|t| sup_distance(&m.tau, t));
        let digits_gained = match (previous, error) {
            (Some(p), Some(e)) if e > 0.0 && p > 0.0 => Some((p / e).log10()),
            _ => None,
        };
        previous = error;
        report.rows.push(ConvergenceRow {
            level,
            tau: m.tau,
            error,
            digits_gained,
            residual: m.residual,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reciprocity {
    /// Index pairs into the input.
    pub pairs: [(usize, usize); 3],
    pub products: [Complex64; 3],
    /// `max |αβ − 1|` over the three pairs.
    pub max_defect: f64,
}

/// Splits six points into three pairs whose products are as close to 1 as
/// possible, trying all 15 perfect matchings.
pub fn reciprocity_check(points: &[Complex64]) -> Result<Reciprocity> {
    if points.len() != 6
        || points
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
    {
        return Err(Error::InvalidParameter(
            "reciprocity needs six finite points".into(),
        ));
    }
    let mut best: Option<Reciprocity> = None;
    for (a, b, cc, d, e, f) in matchings() {
        let pairs = [(a, b), (cc, d), (e, f)];
        let products = pairs.map(|(i, j)| points[i] * points[j]);
        let max_defect = products
            .iter()
            .map(|p| (p - 1.0).norm())
            .fold(0.0, f64::max);
        if best.as_ref().is_none_or(|r| max_defect < r.max_defect) {
            best = Some(Reciprocity {
                pairs,
                products,
                max_defect,
            });
        }
    }
    best.ok_or_else(|| Error::Internal("no matching".into()))
}

fn matchings() -> Vec<(usize, usize, usize, usize, usize, usize)> {
    let mut out = Vec::with_capacity(15);
    for b in 1..6 {
        let rest: Vec<usize> = (1..6).filter(|&k| k != b).collect();
        for k in 1..4 {
            let (c0, d0) = (rest[0], rest[k]);
            let last: Vec<usize> = rest[1..].iter().copied().filter(|&x| x != d0).collect();
            out.push((0, b, c0, d0, last[0], last[1]));
        }
    }
    out
}

//! Plain-text tables laid out like the published approximation tables:
//! one block per level with the time and the matrix rows.

use std::fmt::Write;

use discrete_riemann::solver::CMatrix;
use num_complex::Complex64;

/// Real parts below this are treated as zero and the matrix is printed as
/// `i [ ... ]` with imaginary parts only.
const PURELY_IMAGINARY: f64 = 1e-12;

pub struct TableRow<'a> {
    pub level: String,
    pub time_s: Option<f64>,
    pub tau: &'a CMatrix,
}

fn complex(z: Complex64) -> String {
    format!("{:.15}{:+.15}i", z.re, z.im)
}

/// The matrix as text lines, without the level and time columns.
pub fn matrix_lines(tau: &CMatrix) -> Vec<String> {
    let imaginary = tau.iter().flatten().all(|z| z.re.abs() < PURELY_IMAGINARY);
    let cells: Vec<Vec<String>> = tau
        .iter()
        .map(|row| {
            row.iter()
                .map(|&z| {
                    if imaginary {
                        format!("{:.15}", z.im)
                    } else {
                        complex(z)
                    }
                })
                .collect()
        })
        .collect();
    let width = cells.iter().flatten().map(String::len).max().unwrap_or(0);
    let prefix = if imaginary { "i " } else { "" };
    cells
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let body: Vec<String> = row.iter().map(|c| format!("{c:>width$}")).collect();
            let lead = if k == 0 {
                prefix.to_string()
            } else {
                " ".repeat(prefix.len())
            };
            format!("{lead}[ {} ]", body.join("  "))
        })
        .collect()
}

pub fn table(title: &str, rows: &[TableRow]) -> String {
    let mut out = String::new();
    writeln!(out, "{title}").unwrap();
    let level_w = rows.iter().map(|r| r.level.len()).max().unwrap_or(1).max(1);
    let times: Vec<String> = rows
        .iter()
        .map(|r| {
            r.time_s
                .map(|t| format!("{t:.2}"))
                .unwrap_or_else(|| "-".into())
        })
        .collect();
    let time_w = times.iter().map(String::len).max().unwrap_or(4).max(4);
    writeln!(
        out,
        "{:>level_w$} | {:>time_w$} | Approximation",
        "n", "Time"
    )
    .unwrap();
    for (row, time) in rows.iter().zip(&times) {
        for (k, line) in matrix_lines(row.tau).iter().enumerate() {
            if k == 0 {
                writeln!(out, "{:>level_w$} | {time:>time_w$} | {line}", row.level).unwrap();
            } else {
                writeln!(out, "{:>level_w$} | {:>time_w$} | {line}", "", "").unwrap();
            }
        }
    }
    out
}

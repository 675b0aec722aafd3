//! Sparse linear system for the canonical discrete differentials.
//!
//! Unknowns are the vertex values followed by the `4g` period variables
//! `A_1^b, A_1^w, …, A_g^b, A_g^w, B_1^b, B_1^w, …, B_g^w`. Rows are ordered
//! holomorphicity (one per square), periodicity (one per boundary link),
//! normalization (`2g + 2`). The matrix does not depend on which differential
//! is wanted; only the right-hand side does.

use std::fmt::Write as _;
use std::io::Write;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::{estimate_counts, Color, QuadMesh};
use crate::surface::{Family, SurfaceSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Period {
    A,
    B,
}

/// Row and column counts by category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SystemMeta {
    pub vertex_vars: usize,
    pub period_vars: usize,
    pub holomorphicity: usize,
    pub periodicity: usize,
    pub normalization: usize,
}

impl SystemMeta {
    pub fn n_vars(&self) -> usize {
        self.vertex_vars + self.period_vars
    }

    pub fn n_equations(&self) -> usize {
        self.holomorphicity + self.periodicity + self.normalization
    }
}

#[derive(Debug, Clone)]
pub struct Triplet {
    pub row: usize,
    pub col: usize,
    pub val: Complex64,
}

#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub genus: usize,
    pub meta: SystemMeta,
    /// Sorted by `(row, col)`, no duplicates.
    pub triplets: Vec<Triplet>,
}

/// Column of a period variable; `k` is 1-based.
pub fn period_column(
    n_vertices: usize,
    genus: usize,
    period: Period,
    k: usize,
    color: Color,
) -> usize {
    let base = match period {
        Period::A => n_vertices,
        Period::B => n_vertices + 2 * genus,
    };
    base + 2 * (k - 1) + usize::from(color == Color::White)
}

const I: Complex64 = Complex64::new(0.0, 1.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

fn holomorphicity_rows(
    mesh: &QuadMesh,
) -> impl Iterator<Item = Result<[(usize, Complex64); 4]>> + '_ {
    mesh.squares().map(|(i, j)| {
        let [a, b, c, d] = mesh
            .square_corners(i, j)
            .ok_or_else(|| Error::Internal(format!("square ({i},{j}) has a missing corner")))?;
        Ok([(a, -I), (b, ONE), (c, -ONE), (d, I)])
    })
}

/// One row per square: `𝐢x_{i+1,j+1} − 𝐢x_{i,j} − x_{i,j+1} + x_{i+1,j} = 0`.
pub fn holomorphicity_equations(mesh: &QuadMesh) -> Result<Vec<Vec<(usize, Complex64)>>> {
    holomorphicity_rows(mesh)
        .map(|r| r.map(Vec::from))
        .collect()
}

/// One row per instantiated boundary link:
/// `x_target − x_source − Σ c_k A_k^p − Σ d_k B_k^p = 0`.
pub fn periodicity_equations(mesh: &QuadMesh) -> Vec<Vec<(usize, Complex64)>> {
    let nv = mesh.n_vertices();
    let g = mesh.genus;
    mesh.boundary
        .iter()
        .map(|link| {
            let coeffs = &mesh.relations[link.relation];
            let mut row = vec![(link.source, -ONE), (link.target, ONE)];
            for (period, values) in [(Period::A, &coeffs.a), (Period::B, &coeffs.b)] {
                for (k, &c) in values.iter().enumerate() {
                    if c != 0 {
                        let col = period_column(nv, g, period, k + 1, link.color);
                        row.push((col, Complex64::new(-(c as f64), 0.0)));
                    }
                }
            }
            row
        })
        .collect()
}

/// Rows `x_{0,0} = 0`, `x_{1,0} = 0` and, for each `j`, `A_j^w − A_j^b = 0`
/// and `A_j^w = [j = k]`, with their right-hand side.
pub fn normalization_equations(
    mesh: &QuadMesh,
    k: usize,
) -> Result<(Vec<Vec<(usize, Complex64)>>, Vec<Complex64>)> {
    let g = mesh.genus;
    if k == 0 || k > g {
        return Err(Error::InvalidParameter(format!(
            "differential index {k} outside 1..={g}"
        )));
    }
    let nv = mesh.n_vertices();
    let origin = mesh
        .index(0, 0)
        .ok_or_else(|| Error::Internal("mesh has no vertex (0,0)".into()))?;
    let next = mesh
        .index(1, 0)
        .ok_or_else(|| Error::Internal("mesh has no vertex (1,0)".into()))?;
    let mut rows = vec![vec![(origin, ONE)], vec![(next, ONE)]];
    let mut rhs = vec![Complex64::default(); 2];
    for j in 1..=g {
        let b = period_column(nv, g, Period::A, j, Color::Black);
        let w = period_column(nv, g, Period::A, j, Color::White);
        rows.push(vec![(b, -ONE), (w, ONE)]);
        rhs.push(Complex64::default());
        rows.push(vec![(w, ONE)]);
        rhs.push(if j == k { ONE } else { Complex64::default() });
    }
    Ok((rows, rhs))
}

/// Builds the coefficient matrix shared by all `g` differentials.
pub fn assemble(mesh: &QuadMesh) -> Result<LinearSystem> {
    let peri = periodicity_equations(mesh);
    let (norm, _) = normalization_equations(mesh, 1)?;
    let meta = SystemMeta {
        vertex_vars: mesh.n_vertices(),
        period_vars: 4 * mesh.genus,
        holomorphicity: mesh.n_squares(),
        periodicity: peri.len(),
        normalization: norm.len(),
    };
    let nnz = meta.holomorphicity * 4 + peri.iter().map(Vec::len).sum::<usize>() + 2 * norm.len();
    let mut triplets = Vec::with_capacity(nnz);
    let mut push_row = |row: usize, entries: &mut [(usize, Complex64)]| {
        entries.sort_unstable_by_key(|e| e.0);
        for &(col, val) in entries.iter() {
            match triplets.last_mut() {
                Some(Triplet {
                    row: r,
                    col: c,
                    val: v,
                }) if *r == row && *c == col => *v += val,
                _ => triplets.push(Triplet { row, col, val }),
            }
        }
    };
    let mut row = 0;
    for entries in holomorphicity_rows(mesh) {
        push_row(row, &mut entries?);
        row += 1;
    }
    for mut entries in peri.into_iter().chain(norm) {
        push_row(row, &mut entries);
        row += 1;
    }
    debug_assert_eq!(row, meta.n_equations());
    Ok(LinearSystem {
        genus: mesh.genus,
        meta,
        triplets,
    })
}

impl LinearSystem {
    pub fn n_rows(&self) -> usize {
        self.meta.n_equations()
    }

    pub fn n_cols(&self) -> usize {
        self.meta.n_vars()
    }

    pub fn nnz(&self) -> usize {
        self.triplets.len()
    }

    /// Right-hand side selecting the `k`-th canonical differential (1-based).
    pub fn rhs_for(&self, k: usize) -> Result<Vec<Complex64>> {
        if k == 0 || k > self.genus {
            return Err(Error::InvalidParameter(format!(
                "differential index {k} outside 1..={}",
                self.genus
            )));
        }
        let mut rhs = vec![Complex64::default(); self.n_rows()];
        let start = self.meta.holomorphicity + self.meta.periodicity;
        // x00, x10, then (A^w − A^b, A^w) pairs
        rhs[start + 2 + 2 * (k - 1) + 1] = ONE;
        Ok(rhs)
    }

    /// Column index of `B_k^color`.
    pub fn b_column(&self, k: usize, color: Color) -> usize {
        period_column(self.meta.vertex_vars, self.genus, Period::B, k, color)
    }

    pub fn a_column(&self, k: usize, color: Color) -> usize {
        period_column(self.meta.vertex_vars, self.genus, Period::A, k, color)
    }

    /// `A x` for a dense vector.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::default(); self.n_rows()];
        for t in &self.triplets {
            y[t.row] += t.val * x[t.col];
        }
        y
    }

    /// Every column appears in at least one row.
    pub fn all_columns_used(&self) -> bool {
        let mut used = vec![false; self.n_cols()];
        for t in &self.triplets {
            used[t.col] = true;
        }
        used.into_iter().all(|u| u)
    }

    /// Writes the matrix in Matrix Market coordinate format.
    pub fn write_matrix_market<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::new();
        writeln!(buf, "%%MatrixMarket matrix coordinate complex general").ok();
        writeln!(buf, "{} {} {}", self.n_rows(), self.n_cols(), self.nnz()).ok();
        out.write_all(buf.as_bytes())?;
        for t in &self.triplets {
            writeln!(out, "{} {} {} {}", t.row + 1, t.col + 1, t.val.re, t.val.im)?;
        }
        Ok(())
    }

    /// Writes a right-hand side as a dense Matrix Market array.
    pub fn write_rhs_matrix_market<W: Write>(rhs: &[Complex64], mut out: W) -> Result<()> {
        writeln!(out, "%%MatrixMarket matrix array complex general")?;
        writeln!(out, "{} 1", rhs.len())?;
        for v in rhs {
            writeln!(out, "{} {}", v.re, v.im)?;
        }
        Ok(())
    }
}

/// Closed-form `(variables, equations)` for the standard families: L of any
/// λ, and JS with unit side lengths. `None` for other specs.
pub fn closed_form_counts(spec: &SurfaceSpec, level: u32) -> Option<(u64, u64)> {
    let f = 3u64.checked_pow(level)?;
    match spec.family {
        Family::L => {
            let s = spec.base_step.den() as u64;
            let n = f * s;
            let m = spec.lambda.scaled(n as i64)? as u64;
            // N²(2λ − 1) = 2NM − N²
            let vars = 9 + 2 * n * m - n * n + 2 * m;
            Some((vars, vars + 1))
        }
        Family::Js => {
            let unit = spec.lambda.is_integer()
                && spec.lambda.num() == 1
                && spec.mu.is_some_and(|m| m.is_integer() && m.num() == 1);
            if !unit {
                return None;
            }
            let g = spec.genus as u64;
            let base = f * f * (4 * g - 4) + f * (4 * g - 3);
            Some((base + 4 * g + 1, base + 6 * g - 1))
        }
    }
}

/// Rough nonzero count of the assembled matrix, for resource checks.
pub fn estimate_nnz(spec: &SurfaceSpec, level: u32) -> Result<u64> {
    let (v, s) = estimate_counts(spec, level)?;
    let boundary = v.saturating_sub(s);
    Ok(s.saturating_mul(4)
        .saturating_add(boundary.saturating_mul(2 + 2 * spec.genus as u64)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::refine;
    use crate::rational::Rational;
    use crate::surface::{make_js, make_l, BasisVariant};

    fn r(s: &str) -> Rational {
        s.parse().unwrap()
    }

    #[test]
    fn l2_level0_counts() {
        let spec = make_l(r("2"), BasisVariant::Alpha).unwrap();
        let sys = assemble(&refine(&spec, 0).unwrap()).unwrap();
        assert_eq!(sys.meta.holomorphicity, 12);
        assert_eq!(sys.meta.periodicity, 12);
        assert_eq!(sys.meta.normalization, 6);
        assert_eq!((sys.n_cols(), sys.n_rows()), (29, 30));
        assert_eq!(closed_form_counts(&spec, 0), Some((29, 30)));
    }

    #[test]
    fn js2_level0_counts() {
        let spec = make_js(2, r("1"), r("1")).unwrap();
        let sys = assemble(&refine(&spec, 0).unwrap()).unwrap();
        assert_eq!((sys.n_cols(), sys.n_rows()), (18, 20));
        assert_eq!(sys.meta.holomorphicity, 4);
    }

    #[test]
    fn holomorphicity_rows_have_unit_coefficients() {
        let spec = make_js(3, r("1"), r("1")).unwrap();
        let mesh = refine(&spec, 0).unwrap();
        let rows = holomorphicity_equations(&mesh).unwrap();
        assert_eq!(rows.len(), 8);
        for row in rows {
            assert_eq!(row.len(), 4);
            for (_, v) in row {
                assert!([ONE, -ONE, I, -I].contains(&v));
            }
        }
    }

    #[test]
    fn bottom_row_period_is_a1_black() {
        let spec = make_l(r("2"), BasisVariant::Alpha).unwrap();
        let mesh = refine(&spec, 0).unwrap();
        let rows = periodicity_equations(&mesh);
        let (o, e) = (mesh.index(0, 0).unwrap(), mesh.index(4, 0).unwrap());
        let a1b = period_column(mesh.n_vertices(), 2, Period::A, 1, Color::Black);
        assert!(rows.iter().any(|row| {
            row.contains(&(o, -ONE)) && row.contains(&(e, ONE)) && row.contains(&(a1b, -ONE))
        }));
    }

    #[test]
    fn normalization_rows() {
        let spec = make_js(5, r("1"), r("1")).unwrap();
        let mesh = refine(&spec, 0).unwrap();
        let (rows, rhs) = normalization_equations(&mesh, 5).unwrap();
        assert_eq!(rows.len(), 12);
        assert_eq!(rhs.iter().filter(|v| **v == ONE).count(), 1);
        assert_eq!(*rhs.last().unwrap(), ONE);
        assert!(normalization_equations(&mesh, 6).is_err());
        assert!(normalization_equations(&mesh, 0).is_err());

        let spec = make_l(r("2"), BasisVariant::Alpha).unwrap();
        let mesh = refine(&spec, 0).unwrap();
        let (_, rhs) = normalization_equations(&mesh, 2).unwrap();
        // A_1^w = 0, A_2^w = 1
        assert_eq!(rhs[3], Complex64::default());
        assert_eq!(rhs[5], ONE);
    }

    #[test]
    fn rhs_matches_normalization() {
        let spec = make_js(3, r("1"), r("1")).unwrap();
        let mesh = refine(&spec, 1).unwrap();
        let sys = assemble(&mesh).unwrap();
        let start = sys.meta.holomorphicity + sys.meta.periodicity;
        for k in 1..=3 {
            let (_, rhs) = normalization_equations(&mesh, k).unwrap();
            assert_eq!(&sys.rhs_for(k).unwrap()[start..], &rhs[..]);
        }
        assert!(sys.all_columns_used());
    }

    #[test]
    fn level_scaling_of_holomorphicity_rows() {
        for spec in [
            make_l(r("3"), BasisVariant::Alpha).unwrap(),
            make_js(4, r("1"), r("1")).unwrap(),
        ] {
            let h0 = assemble(&refine(&spec, 0).unwrap())
                .unwrap()
                .meta
                .holomorphicity;
            let h1 = assemble(&refine(&spec, 1).unwrap())
                .unwrap()
                .meta
                .holomorphicity;
            assert_eq!(h1, 9 * h0);
        }
    }

    #[test]
    fn matrix_market_header() {
        let spec = make_js(2, r("1"), r("1")).unwrap();
        let sys = assemble(&refine(&spec, 0).unwrap()).unwrap();
        let mut out = Vec::new();
        sys.write_matrix_market(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("%%MatrixMarket matrix coordinate complex general")
        );
        assert_eq!(lines.next(), Some(format!("20 18 {}", sys.nnz()).as_str()));
        assert_eq!(lines.count(), sys.nnz());
    }
}

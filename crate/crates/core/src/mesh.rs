//! Level-n refinement of a surface into a bipartite square grid.
//!
//! Each base cell is split into `3^n × 3^n` squares. Vertices are stored row
//! by row; a row is a short list of closed integer intervals, so the
//! `(i, j) → index` map works for any union of rectangles.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rational::Rational;
use crate::surface::{HomologyVector, SurfaceSpec};

/// Largest level accepted; `3^n` must stay far inside `i64`.
pub const MAX_LEVEL: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Black,
    White,
}

pub fn vertex_color(i: i64, j: i64) -> Color {
    if (i + j).rem_euclid(2) == 0 {
        Color::Black
    } else {
        Color::White
    }
}

#[derive(Debug, Clone)]
struct Row {
    /// Closed vertex intervals `[lo, hi]`, sorted and disjoint.
    vertices: Vec<(i64, i64)>,
    /// Half-open cell intervals `[lo, hi)` of squares whose bottom edge is this row.
    cells: Vec<(i64, i64)>,
    offset: usize,
}

/// One instantiated periodicity row: `x[target] − x[source] = coefficients`
/// in the periods of `color`.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryLink {
    pub source: usize,
    pub target: usize,
    pub color: Color,
    pub relation: usize,
}

#[derive(Debug, Clone)]
pub struct QuadMesh {
    pub level: u32,
    /// `3^level`
    pub factor: i64,
    /// Side length of a refined square.
    pub step: Rational,
    pub genus: usize,
    y_min: i64,
    rows: Vec<Row>,
    n_vertices: usize,
    n_squares: usize,
    pub boundary: Vec<BoundaryLink>,
    /// Coefficient vectors, indexed by `BoundaryLink::relation`.
    pub relations: Vec<HomologyVector>,
}

/// Merges overlapping or touching intervals.
fn merge(mut iv: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    iv.sort_unstable();
    let mut out: Vec<(i64, i64)> = Vec::with_capacity(iv.len());
    for (lo, hi) in iv {
        match out.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

/// Square count and an upper bound on the vertex count of
/// `refine(spec, level)`, without building it.
pub fn estimate_counts(spec: &SurfaceSpec, level: u32) -> Result<(u64, u64)> {
    let f = factor(level)? as u128;
    let squares: u128 = spec.base_cell_count() as u128 * f * f;
    // every square owns its bottom-left vertex; the rest sit on top/right edges
    let perimeter: u128 = spec
        .footprint
        .iter()
        .map(|r| (r.width + r.height) as u128 + 1)
        .sum::<u128>()
        * f;
    let vertices = squares + perimeter;
    let cap = u64::MAX as u128;
    if vertices > cap {
        return Err(Error::ResourceLimit {
            estimated: u64::MAX,
            cap: u64::MAX,
        });
    }
    Ok((vertices as u64, squares as u64))
}

fn factor(level: u32) -> Result<i64> {
    if level > MAX_LEVEL {
        return Err(Error::InvalidParameter(format!(
            "level {level} exceeds the maximum {MAX_LEVEL}"
        )));
    }
    Ok(3i64.pow(level))
}

/// Refines `spec` to level `level`, instantiating every periodicity relation
/// on the refined boundary lattice points.
pub fn refine(spec: &SurfaceSpec, level: u32) -> Result<QuadMesh> {
    spec.check_structure()?;
    let f = factor(level)?;
    let rects: Vec<_> = spec
        .footprint
        .iter()
        .map(|r| (r.x * f, r.y * f, r.width * f, r.height * f))
        .collect();
    let y_min = rects
        .iter()
        .map(|r| r.1)
        .min()
        .expect("non-empty footprint");
    let y_max = rects
        .iter()
        .map(|r| r.1 + r.3)
        .max()
        .expect("non-empty footprint");

    let mut rows = Vec::with_capacity((y_max - y_min + 1) as usize);
    let mut offset = 0usize;
    let mut n_squares = 0usize;
    for j in y_min..=y_max {
        let vertices = merge(
            rects
                .iter()
                .filter(|r| r.1 <= j && j <= r.1 + r.3)
                .map(|r| (r.0, r.0 + r.2))
                .collect(),
        );
        let cells = merge(
            rects
                .iter()
                .filter(|r| r.1 <= j && j < r.1 + r.3)
                .map(|r| (r.0, r.0 + r.2))
                .collect(),
        );
        let count: i64 = vertices.iter().map(|(lo, hi)| hi - lo + 1).sum();
        n_squares += cells
            .iter()
            .map(|(lo, hi)| (hi - lo) as usize)
            .sum::<usize>();
        rows.push(Row {
            vertices,
            cells,
            offset,
        });
        offset += count as usize;
    }

    let mut mesh = QuadMesh {
        level,
        factor: f,
        step: Rational::new(spec.base_step.num(), spec.base_step.den() * f)?,
        genus: spec.genus,
        y_min,
        rows,
        n_vertices: offset,
        n_squares,
        boundary: Vec::new(),
        relations: Vec::new(),
    };

    for (r_idx, rel) in spec.periodicity_table.iter().enumerate() {
        let id = &spec.identifications[rel.identification];
        let (dx, dy) = id.source.direction.unit();
        let start = (id.source.start.0 * f, id.source.start.1 * f);
        let shift = (id.translation.0 * f, id.translation.1 * f);
        for t in 0..=id.source.length * f {
            let p = (start.0 + dx * t, start.1 + dy * t);
            let q = (p.0 + shift.0, p.1 + shift.1);
            let (Some(source), Some(target)) = (mesh.index(p.0, p.1), mesh.index(q.0, q.1)) else {
                return Err(Error::Internal(format!(
                    "side {} leaves the refined grid at {:?} -> {:?}",
                    id.label, p, q
                )));
            };
            mesh.boundary.push(BoundaryLink {
                source,
                target,
                color: vertex_color(p.0, p.1),
                relation: r_idx,
            });
        }
        mesh.relations.push(rel.coefficients.clone());
    }
    Ok(mesh)
}

impl QuadMesh {
    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_squares(&self) -> usize {
        self.n_squares
    }

    /// Linear index of lattice point `(i, j)`, if it belongs to the mesh.
    #[inline]
    pub fn index(&self, i: i64, j: i64) -> Option<usize> {
        let r = j.checked_sub(self.y_min)?;
        let row = self.rows.get(usize::try_from(r).ok()?)?;
        let mut offset = row.offset;
        for &(lo, hi) in &row.vertices {
            if i < lo {
                return None;
            }
            if i <= hi {
                return Some(offset + (i - lo) as usize);
            }
            offset += (hi - lo + 1) as usize;
        }
        None
    }

    /// Lattice coordinates of every vertex, in index order.
    pub fn vertices(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        self.rows.iter().enumerate().flat_map(move |(r, row)| {
            let j = self.y_min + r as i64;
            row.vertices
                .iter()
                .flat_map(move |&(lo, hi)| (lo..=hi).map(move |i| (i, j)))
        })
    }

    /// Bottom-left corners of all squares, row by row.
    pub fn squares(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        self.rows.iter().enumerate().flat_map(move |(r, row)| {
            let j = self.y_min + r as i64;
            row.cells
                .iter()
                .flat_map(move |&(lo, hi)| (lo..hi).map(move |i| (i, j)))
        })
    }

    /// Corner indices `[x_{i,j}, x_{i+1,j}, x_{i,j+1}, x_{i+1,j+1}]` of a square.
    #[inline]
    pub fn square_corners(&self, i: i64, j: i64) -> Option<[usize; 4]> {
        Some([
            self.index(i, j)?,
            self.index(i + 1, j)?,
            self.index(i, j + 1)?,
            self.index(i + 1, j + 1)?,
        ])
    }

    /// Whether `(i, j)` is the bottom-left corner of a square.
    pub fn has_square(&self, i: i64, j: i64) -> bool {
        let Some(row) = usize::try_from(j - self.y_min)
            .ok()
            .and_then(|r| self.rows.get(r))
        else {
            return false;
        };
        row.cells.iter().any(|&(lo, hi)| lo <= i && i < hi)
    }

    /// Number of grid edges at `(i, j)` that bound at least one square.
    pub fn degree(&self, i: i64, j: i64) -> usize {
        let sq = |a, b| self.has_square(a, b);
        let mut d = 0;
        // right, left, up, down
        if sq(i, j) || sq(i, j - 1) {
            d += 1;
        }
        if sq(i - 1, j) || sq(i - 1, j - 1) {
            d += 1;
        }
        if sq(i, j) || sq(i - 1, j) {
            d += 1;
        }
        if sq(i, j - 1) || sq(i - 1, j - 1) {
            d += 1;
        }
        d
    }

    /// Number of squares around `(i, j)`; 4 means interior.
    pub fn incident_squares(&self, i: i64, j: i64) -> usize {
        [(i, j), (i - 1, j), (i, j - 1), (i - 1, j - 1)]
            .iter()
            .filter(|&&(a, b)| self.has_square(a, b))
            .count()
    }

    pub fn dump(&self) -> MeshDump {
        let step = self.step.to_f64();
        MeshDump {
            level: self.level,
            step: self.step,
            vertices: self
                .vertices()
                .map(|(i, j)| DumpVertex {
                    i,
                    j,
                    x: i as f64 * step,
                    y: j as f64 * step,
                    color: vertex_color(i, j),
                })
                .collect(),
            squares: self.squares().collect(),
        }
    }
}

/// Plain JSON view of a mesh for plotting.
#[derive(Debug, Clone, Serialize)]
pub struct MeshDump {
    pub level: u32,
    pub step: Rational,
    pub vertices: Vec<DumpVertex>,
    pub squares: Vec<(i64, i64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DumpVertex {
    pub i: i64,
    pub j: i64,
    pub x: f64,
    pub y: f64,
    pub color: Color,
}

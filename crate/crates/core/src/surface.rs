//! Square-tiled translation surfaces: the symmetric L family and the
//! one-cylinder Jenkins–Strebel family.
//!
//! All geometry lives on an integer base lattice whose unit is
//! [`SurfaceSpec::base_step`]. A side of the polygon is a [`Segment`]; each
//! identification glues a source segment onto its translate, and the
//! periodicity table attaches a homology coefficient vector to each gluing.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{lcm, Rational};

/// Largest genus accepted by the constructors.
pub const MAX_GENUS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    L,
    Js,
}

/// Homology basis used for the L-shape periodicity table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisVariant {
    /// (α₁, α₂, β₁, β₂)
    #[default]
    Alpha,
    /// (δ₁, δ₂, γ₁, γ₂ − γ₁)
    Delta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Horizontal,
    Vertical,
}

impl Direction {
    pub fn unit(self) -> (i64, i64) {
        match self {
            Direction::Horizontal => (1, 0),
            Direction::Vertical => (0, 1),
        }
    }
}

/// Axis-aligned block of base cells `[x, x + width) × [y, y + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRect {
    pub x: i64,
    pub y: i64,
    pub width: i64,
    pub height: i64,
}

/// A straight run of `length` base edges starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: (i64, i64),
    pub direction: Direction,
    pub length: i64,
}

impl Segment {
    pub fn end(&self) -> (i64, i64) {
        let (dx, dy) = self.direction.unit();
        (
            self.start.0 + dx * self.length,
            self.start.1 + dy * self.length,
        )
    }

    pub fn translated(&self, by: (i64, i64)) -> Segment {
        Segment {
            start: (self.start.0 + by.0, self.start.1 + by.1),
            ..*self
        }
    }

    /// The `t`-th lattice point, `0 <= t <= length`.
    pub fn point(&self, t: i64) -> (i64, i64) {
        let (dx, dy) = self.direction.unit();
        (self.start.0 + dx * t, self.start.1 + dy * t)
    }
}

/// Side `source` is glued to `source + translation`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Identification {
    pub label: String,
    pub source: Segment,
    pub translation: (i64, i64),
}

impl Identification {
    pub fn target(&self) -> Segment {
        self.source.translated(self.translation)
    }
}

/// Integer combination `Σ a_k A_k + Σ b_k B_k` of the 2g period symbols.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HomologyVector {
    pub a: Vec<i64>,
    pub b: Vec<i64>,
}

impl HomologyVector {
    pub fn zero(genus: usize) -> Self {
        Self {
            a: vec![0; genus],
            b: vec![0; genus],
        }
    }

    pub fn genus(&self) -> usize {
        self.a.len()
    }

    pub fn is_zero(&self) -> bool {
        self.a.iter().chain(&self.b).all(|&c| c == 0)
    }

    /// 1-based index helpers.
    fn add_a(mut self, k: usize, c: i64) -> Self {
        self.a[k - 1] += c;
        self
    }

    fn add_b(mut self, k: usize, c: i64) -> Self {
        self.b[k - 1] += c;
        self
    }

    pub fn plus(&self, other: &Self) -> Self {
        Self {
            a: self.a.iter().zip(&other.a).map(|(x, y)| x + y).collect(),
            b: self.b.iter().zip(&other.b).map(|(x, y)| x + y).collect(),
        }
    }

    pub fn minus(&self, other: &Self) -> Self {
        Self {
            a: self.a.iter().zip(&other.a).map(|(x, y)| x - y).collect(),
            b: self.b.iter().zip(&other.b).map(|(x, y)| x - y).collect(),
        }
    }
}

/// Periodicity rule for one identification: for every lattice point `p` on
/// the source side, `x(p + translation) − x(p) = Σ a_k A_k^c + Σ b_k B_k^c`
/// where `c` is the color of `p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodRelation {
    pub identification: usize,
    pub coefficients: HomologyVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSpec {
    pub family: Family,
    pub genus: usize,
    pub lambda: Rational,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Rational>,
    #[serde(default)]
    pub basis: BasisVariant,
    /// Side length of one base cell.
    pub base_step: Rational,
    pub footprint: Vec<CellRect>,
    pub identifications: Vec<Identification>,
    pub periodicity_table: Vec<PeriodRelation>,
}

/// Jenkins–Strebel gluing permutation on `4g − 4` sides, 1-indexed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation {
    pub images: Vec<usize>,
}

impl Permutation {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Image of `k` (1-based).
    pub fn apply(&self, k: usize) -> usize {
        self.images[k - 1]
    }

    pub fn is_bijection(&self) -> bool {
        let n = self.images.len();
        let mut seen = vec![false; n];
        for &v in &self.images {
            if v == 0 || v > n || seen[v - 1] {
                return false;
            }
            seen[v - 1] = true;
        }
        true
    }
}

pub fn js_permutation(genus: usize) -> Result<Permutation> {
    if genus < 2 {
        return Err(Error::InvalidParameter(format!(
            "Jenkins–Strebel genus must be at least 2, got {genus}"
        )));
    }
    let n = 4 * genus - 4;
    let images = (1..=n)
        .map(|k| {
            if k % 2 == 1 {
                k + 1
            } else if k % 4 == 2 {
                k - 1
            } else {
                (k + 3 - 1) % n + 1
            }
        })
        .collect();
    Ok(Permutation { images })
}

/// Symmetric L with legs of length 1 and outer sides of length `lambda`.
pub fn make_l(lambda: Rational, basis: BasisVariant) -> Result<SurfaceSpec> {
    if lambda <= Rational::integer(1) {
        return Err(Error::InvalidParameter(format!(
            "L-shape requires lambda > 1, got {lambda}"
        )));
    }
    // Both the leg and the outer side need an even number of cells; for an
    // even denominator lcm(q, 2) = q leaves the outer side odd, so double it.
    let mut step = lcm(lambda.den(), 2);
    if lambda.scaled(step).is_some_and(|m| m % 2 != 0) {
        step *= 2;
    }
    let leg = step;
    let outer = lambda
        .scaled(step)
        .ok_or_else(|| Error::Internal("lambda * step not integral".into()))?;
    let g = 2;
    let h = || HomologyVector::zero(g);

    let footprint = vec![
        CellRect {
            x: 0,
            y: 0,
            width: leg,
            height: outer,
        },
        CellRect {
            x: leg,
            y: 0,
            width: outer - leg,
            height: leg,
        },
    ];
    let identifications = vec![
        Identification {
            label: "1".into(),
            source: Segment {
                start: (0, 0),
                direction: Direction::Horizontal,
                length: leg,
            },
            translation: (0, outer),
        },
        Identification {
            label: "2".into(),
            source: Segment {
                start: (leg, 0),
                direction: Direction::Horizontal,
                length: outer - leg,
            },
            translation: (0, leg),
        },
        Identification {
            label: "3".into(),
            source: Segment {
                start: (0, leg),
                direction: Direction::Vertical,
                length: outer - leg,
            },
            translation: (leg, 0),
        },
        Identification {
            label: "4".into(),
            source: Segment {
                start: (0, 0),
                direction: Direction::Vertical,
                length: leg,
            },
            translation: (outer, 0),
        },
    ];
    let coefficients = match basis {
        BasisVariant::Alpha => [
            h().add_b(1, 1),
            h().add_b(1, 1).add_b(2, 1),
            h().add_a(1, 1).add_a(2, -1),
            h().add_a(1, 1),
        ],
        BasisVariant::Delta => [
            h().add_b(1, 1).add_b(2, 1),
            h().add_b(1, 1),
            h().add_a(2, 1),
            h().add_a(1, 1),
        ],
    };
    let periodicity_table = coefficients
        .into_iter()
        .enumerate()
        .map(|(identification, coefficients)| PeriodRelation {
            identification,
            coefficients,
        })
        .collect();

    Ok(SurfaceSpec {
        family: Family::L,
        genus: g,
        lambda,
        mu: None,
        basis,
        base_step: Rational::new(1, step)?,
        footprint,
        identifications,
        periodicity_table,
    })
}

/// One-cylinder Jenkins–Strebel surface `J_g(lambda, mu)`: the vertical side
/// has length `lambda`, side 1 has length `mu`, all other sides length 1.
pub fn make_js(genus: usize, lambda: Rational, mu: Rational) -> Result<SurfaceSpec> {
    if !(2..=MAX_GENUS).contains(&genus) {
        return Err(Error::InvalidParameter(format!(
            "Jenkins–Strebel genus must be in 2..={MAX_GENUS}, got {genus}"
        )));
    }
    for (name, v) in [("lambda", lambda), ("mu", mu)] {
        if v <= Rational::integer(0) {
            return Err(Error::InvalidParameter(format!(
                "{name} must be positive, got {v}"
            )));
        }
        if !v.is_odd_odd() {
            return Err(Error::InvalidParameter(format!(
                "{name} = {v} needs odd numerator and denominator for a bipartite tiling"
            )));
        }
    }
    let g = genus;
    let perm = js_permutation(g)?;
    let sides = 4 * g - 4;
    let step = lcm(lambda.den(), mu.den());
    let height = lambda.scaled(step).expect("den divides step");
    let unit = step;
    let side_len = |label: usize| {
        if label == 1 {
            mu.scaled(step).expect("den divides step")
        } else {
            unit
        }
    };

    let mut top_start = vec![0i64; sides + 1];
    let mut x = 0;
    for (label, start) in top_start.iter_mut().enumerate().skip(1) {
        *start = x;
        x += side_len(label);
    }
    let width = x;
    let mut bottom_start = vec![0i64; sides + 1];
    let mut x = 0;
    for slot in 1..=sides {
        let label = perm.apply(slot);
        bottom_start[label] = x;
        x += side_len(label);
    }
    debug_assert_eq!(x, width);

    let h = || HomologyVector::zero(g);
    let coefficient = |label: usize| -> HomologyVector {
        match label % 4 {
            // A_{k+1} on side 4k + 2
            2 => h().add_a(label / 4 + 1, 1),
            // −A_g on sides 4k + 4
            0 => h().add_a(g, -1),
            // B_{k+1} on side 4k + 1
            1 => h().add_b(label / 4 + 1, 1),
            _ if label == 3 => {
                let mut v = h().add_b(g, -1).add_a(g, g as i64 - 2);
                for j in 2..g {
                    v = v.add_b(j, 1).add_a(j, -1);
                }
                v
            }
            // side 4k + 7: A_{k+2} − B_{k+2} − A_g
            _ => {
                let k2 = (label - 7) / 4 + 2;
                h().add_a(k2, 1).add_b(k2, -1).add_a(g, -1)
            }
        }
    };

    let mut identifications = Vec::with_capacity(sides + 1);
    let mut periodicity_table = Vec::with_capacity(sides + 1);
    for label in 1..=sides {
        identifications.push(Identification {
            label: label.to_string(),
            source: Segment {
                start: (bottom_start[label], 0),
                direction: Direction::Horizontal,
                length: side_len(label),
            },
            translation: (top_start[label] - bottom_start[label], height),
        });
        periodicity_table.push(PeriodRelation {
            identification: label - 1,
            coefficients: coefficient(label),
        });
    }
    // B_g − (g−1)A_g + Σ_{j<g} (A_j − B_j); the opposite sign on the sum
    // does not close around the vertex classes
    let mut side0 = h().add_b(g, 1).add_a(g, -(g as i64 - 1));
    for j in 1..g {
        side0 = side0.add_a(j, 1).add_b(j, -1);
    }
    identifications.push(Identification {
        label: "0".into(),
        source: Segment {
            start: (0, 0),
            direction: Direction::Vertical,
            length: height,
        },
        translation: (width, 0),
    });
    periodicity_table.push(PeriodRelation {
        identification: sides,
        coefficients: side0,
    });

    Ok(SurfaceSpec {
        family: Family::Js,
        genus: g,
        lambda,
        mu: Some(mu),
        basis: BasisVariant::Alpha,
        base_step: Rational::new(1, step)?,
        footprint: vec![CellRect {
            x: 0,
            y: 0,
            width,
            height,
        }],
        identifications,
        periodicity_table,
    })
}

impl SurfaceSpec {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses and structurally checks a spec document.
    pub fn from_json(s: &str) -> Result<Self> {
        let spec: SurfaceSpec = serde_json::from_str(s)?;
        spec.check_structure()?;
        Ok(spec)
    }

    /// Shape checks needed before a `SurfaceSpec` can be meshed; geometric
    /// consistency is reported by [`validate_spec`].
    pub fn check_structure(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.genus == 0 || self.genus > MAX_GENUS {
            return bad(format!("genus {} out of range", self.genus));
        }
        if self.base_step <= Rational::integer(0) {
            return bad("base_step must be positive".into());
        }
        if self.footprint.is_empty() {
            return bad("empty footprint".into());
        }
        const COORD_LIMIT: i64 = 1 << 40;
        // keeps validate_spec, which walks unit boundary edges, cheap
        const UNIT_EDGE_LIMIT: i64 = 1 << 24;
        const COEFFICIENT_LIMIT: i64 = 1 << 20;
        let mut unit_edges: i64 = 0;
        for r in &self.footprint {
            if r.width <= 0 || r.height <= 0 {
                return bad("footprint rectangles need positive size".into());
            }
            if [r.x, r.y, r.width, r.height]
                .iter()
                .any(|v| v.abs() > COORD_LIMIT)
            {
                return bad("footprint coordinates out of range".into());
            }
            unit_edges = unit_edges.saturating_add(2 * (r.width + r.height));
        }
        for id in &self.identifications {
            if id.source.length <= 0 {
                return bad(format!("side {} has non-positive length", id.label));
            }
            let coords = [
                id.source.start.0,
                id.source.start.1,
                id.source.length,
                id.translation.0,
                id.translation.1,
            ];
            if coords.iter().any(|v| v.abs() > COORD_LIMIT) {
                return bad(format!("side {} coordinates out of range", id.label));
            }
            unit_edges = unit_edges.saturating_add(2 * id.source.length);
        }
        if unit_edges > UNIT_EDGE_LIMIT {
            return bad(format!(
                "boundary has {unit_edges} unit edges, limit is {UNIT_EDGE_LIMIT}"
            ));
        }
        if self.periodicity_table.len() != self.identifications.len() {
            return bad("periodicity table must have one relation per identification".into());
        }
        let mut used = vec![false; self.identifications.len()];
        for rel in &self.periodicity_table {
            if rel.identification >= self.identifications.len() || used[rel.identification] {
                return bad("periodicity relation references a bad identification".into());
            }
            used[rel.identification] = true;
            if rel.coefficients.a.len() != self.genus || rel.coefficients.b.len() != self.genus {
                return bad("coefficient vectors must have length genus".into());
            }
            let c = &rel.coefficients;
            if c.a.iter().chain(&c.b).any(|v| v.abs() > COEFFICIENT_LIMIT) {
                return bad("periodicity coefficients out of range".into());
            }
        }
        Ok(())
    }

    /// Number of base cells.
    pub fn base_cell_count(&self) -> u64 {
        self.footprint
            .iter()
            .map(|r| (r.width as u64) * (r.height as u64))
            .sum()
    }

    pub fn summary(&self) -> String {
        match self.family {
            Family::L => format!("L(lambda={}, basis={:?})", self.lambda, self.basis),
            Family::Js => format!(
                "J{}(lambda={}, mu={})",
                self.genus,
                self.lambda,
                self.mu.unwrap_or(Rational::integer(1))
            ),
        }
    }
}

/// Outcome of [`validate_spec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    /// Boundary base edges not covered by any side.
    pub unpaired_edges: Vec<((i64, i64), Direction)>,
    /// Boundary base edges covered by more than one side.
    pub overlapping_edges: Vec<((i64, i64), Direction)>,
    /// Sides (by label) whose source or image leaves the boundary.
    pub off_boundary_sides: Vec<String>,
    /// Sides whose translation flips the vertex color.
    pub color_conflicts: Vec<String>,
    /// Sides whose periodicity relation closes a loop with nonzero total.
    pub cocycle_violations: Vec<String>,
    pub vertex_classes: usize,
    pub edges: usize,
    pub faces: usize,
    pub euler_characteristic: i64,
    pub genus_from_euler: Option<usize>,
    pub declared_genus: usize,
}

impl DiagnosticsReport {
    pub fn is_valid(&self) -> bool {
        self.unpaired_edges.is_empty()
            && self.overlapping_edges.is_empty()
            && self.off_boundary_sides.is_empty()
            && self.color_conflicts.is_empty()
            && self.cocycle_violations.is_empty()
            && self.genus_from_euler == Some(self.declared_genus)
    }
}

type UnitEdge = ((i64, i64), Direction);

fn unit_edges(seg: &Segment) -> impl Iterator<Item = UnitEdge> + '_ {
    (0..seg.length).map(move |t| (seg.point(t), seg.direction))
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

/// Checks edge pairing, coloring, cocycle closure and the Euler
/// characteristic of the glued surface. Never fails; problems are listed.
pub fn validate_spec(spec: &SurfaceSpec) -> DiagnosticsReport {
    // boundary of the union of cells
    let mut count: HashMap<UnitEdge, i32> = HashMap::new();
    for r in &spec.footprint {
        let sides = [
            Segment {
                start: (r.x, r.y),
                direction: Direction::Horizontal,
                length: r.width,
            },
            Segment {
                start: (r.x, r.y + r.height),
                direction: Direction::Horizontal,
                length: r.width,
            },
            Segment {
                start: (r.x, r.y),
                direction: Direction::Vertical,
                length: r.height,
            },
            Segment {
                start: (r.x + r.width, r.y),
                direction: Direction::Vertical,
                length: r.height,
            },
        ];
        for s in &sides {
            for e in unit_edges(s) {
                *count.entry(e).or_default() += 1;
            }
        }
    }
    let mut coverage: HashMap<UnitEdge, u32> = count
        .into_iter()
        .filter(|&(_, c)| c == 1)
        .map(|(e, _)| (e, 0))
        .collect();

    let mut off_boundary_sides = Vec::new();
    let mut color_conflicts = Vec::new();
    for id in &spec.identifications {
        let mut off = false;
        for seg in [id.source, id.target()] {
            for e in unit_edges(&seg) {
                match coverage.get_mut(&e) {
                    Some(c) => *c += 1,
                    None => off = true,
                }
            }
        }
        if off {
            off_boundary_sides.push(id.label.clone());
        }
        if (id.translation.0 + id.translation.1).rem_euclid(2) != 0 {
            color_conflicts.push(id.label.clone());
        }
    }
    let mut unpaired_edges: Vec<UnitEdge> = coverage
        .iter()
        .filter(|(_, &c)| c == 0)
        .map(|(&e, _)| e)
        .collect();
    let mut overlapping_edges: Vec<UnitEdge> = coverage
        .iter()
        .filter(|(_, &c)| c > 1)
        .map(|(&e, _)| e)
        .collect();
    unpaired_edges.sort_by_key(|&((x, y), d)| (y, x, d == Direction::Vertical));
    overlapping_edges.sort_by_key(|&((x, y), d)| (y, x, d == Direction::Vertical));

    // polygon vertices = side endpoints, glued by the identifications
    let mut point_ids: HashMap<(i64, i64), usize> = HashMap::new();
    let mut intern = |p: (i64, i64)| {
        let n = point_ids.len();
        *point_ids.entry(p).or_insert(n)
    };
    let mut links: Vec<(usize, usize, usize)> = Vec::new();
    for (idx, id) in spec.identifications.iter().enumerate() {
        let t = id.target();
        let (s0, s1) = (intern(id.source.start), intern(id.source.end()));
        let (t0, t1) = (intern(t.start), intern(t.end()));
        links.push((s0, t0, idx));
        links.push((s1, t1, idx));
    }
    let n_points = point_ids.len();
    let mut uf = UnionFind::new(n_points);
    for &(a, b, _) in &links {
        uf.union(a, b);
    }
    let vertex_classes = (0..n_points).filter(|&p| uf.find(p) == p).count();

    // potentials x(p) along the identification graph must be single valued
    let relation_of: HashMap<usize, &HomologyVector> = spec
        .periodicity_table
        .iter()
        .map(|r| (r.identification, &r.coefficients))
        .collect();
    let mut adjacency: Vec<Vec<(usize, usize, bool)>> = vec![Vec::new(); n_points];
    for &(a, b, idx) in &links {
        adjacency[a].push((b, idx, true));
        adjacency[b].push((a, idx, false));
    }
    let mut potential: Vec<Option<HomologyVector>> = vec![None; n_points];
    let mut violations = std::collections::BTreeSet::new();
    for root in 0..n_points {
        if potential[root].is_some() {
            continue;
        }
        potential[root] = Some(HomologyVector::zero(spec.genus));
        let mut queue = VecDeque::from([root]);
        while let Some(p) = queue.pop_front() {
            let here = potential[p].clone().expect("visited");
            for &(q, idx, forward) in &adjacency[p] {
                let Some(c) = relation_of.get(&idx) else {
                    violations.insert(idx);
                    continue;
                };
                if c.genus() != spec.genus {
                    violations.insert(idx);
                    continue;
                }
                let expected = if forward { here.plus(c) } else { here.minus(c) };
                match &potential[q] {
                    None => {
                        potential[q] = Some(expected);
                        queue.push_back(q);
                    }
                    Some(existing) if *existing != expected => {
                        violations.insert(idx);
                    }
                    _ => {}
                }
            }
        }
    }
    let cocycle_violations = violations
        .into_iter()
        .map(|i| spec.identifications[i].label.clone())
        .collect();

    let edges = spec.identifications.len();
    let faces = 1;
    let euler_characteristic = vertex_classes as i64 - edges as i64 + faces as i64;
    let genus_from_euler = if euler_characteristic <= 2 && (2 - euler_characteristic) % 2 == 0 {
        Some(((2 - euler_characteristic) / 2) as usize)
    } else {
        None
    };

    DiagnosticsReport {
        unpaired_edges,
        overlapping_edges,
        off_boundary_sides,
        color_conflicts,
        cocycle_violations,
        vertex_classes,
        edges,
        faces,
        euler_characteristic,
        genus_from_euler,
        declared_genus: spec.genus,
    }
}

//! Sparse least-squares solve and extraction of the discrete Riemann matrix.

use std::time::Instant;

use faer::linalg::solvers::{Solve, SolveLstsq};
use faer::sparse::linalg::matmul::sparse_sparse_matmul;
use faer::sparse::{SparseColMat, Triplet as FaerTriplet};
use faer::{Mat, Par, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble, estimate_nnz, LinearSystem};
use crate::error::{Error, Result};
use crate::mesh::{refine, vertex_color, Color};
use crate::surface::SurfaceSpec;

/// Default cap on the estimated number of matrix nonzeros.
pub const DEFAULT_NNZ_CAP: u64 = 100_000_000;

/// Complex `g × g` matrix stored row-major.
pub type CMatrix = Vec<Vec<Complex64>>;

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub nnz_cap: u64,
    pub strategy: Strategy,
    /// Relative residual above which the system is reported as inconsistent.
    pub residual_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            nnz_cap: DEFAULT_NNZ_CAP,
            strategy: Strategy::Auto,
            residual_tol: 1e-8,
        }
    }
}

/// Limits the worker threads used by the factorization.
pub fn set_threads(n: usize) {
    let par = if n <= 1 {
        faer::Par::Seq
    } else {
        faer::Par::rayon(n)
    };
    faer::set_global_parallelism(par);
}

#[derive(Debug, Clone)]
pub struct Solution {
    /// One column per right-hand side.
    pub x: Vec<Vec<Complex64>>,
    /// `‖A x − b‖₂` per right-hand side.
    pub residuals: Vec<f64>,
    pub rhs_norms: Vec<f64>,
}

fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn factorization_error(e: impl std::fmt::Debug) -> Error {
    Error::Factorization(format!("{e:?}"))
}

fn to_faer(sys: &LinearSystem) -> Result<SparseColMat<usize, Complex64>> {
    let entries: Vec<_> = sys
        .triplets
        .iter()
        .map(|t| FaerTriplet::new(t.row, t.col, t.val))
        .collect();
    SparseColMat::try_new_from_triplets(sys.n_rows(), sys.n_cols(), &entries)
        .map_err(factorization_error)
}

fn solve_qr(a: &SparseColMat<usize, Complex64>, b: &Mat<Complex64>) -> Result<Mat<Complex64>> {
    let qr = a.sp_qr().map_err(factorization_error)?;
    Ok(qr.solve_lstsq(b))
}

/// Normal equations `AᴴA x = Aᴴb` by sparse Cholesky, followed by a few steps
/// of iterative refinement against the original residual. Needs far less
/// memory than QR, which keeps the Householder vectors.
fn solve_normal(
    a: &SparseColMat<usize, Complex64>,
    b: &Mat<Complex64>,
    refinement_steps: usize,
) -> Result<Mat<Complex64>> {
    let ah = a
        .as_ref()
        .adjoint()
        .to_col_major()
        .map_err(factorization_error)?;
    let ata = sparse_sparse_matmul(ah.as_ref(), a.as_ref(), Complex64::new(1.0, 0.0), Par::Seq)
        .map_err(factorization_error)?;
    let llt = ata.sp_cholesky(Side::Lower).map_err(|e| {
        Error::SingularSystem(format!("normal equations are not positive definite: {e:?}"))
    })?;
    drop(ata);
    let mut x = &ah * b;
    llt.solve_in_place(&mut x);
    for _ in 0..refinement_steps {
        let r = b - a * &x;
        let mut dx = &ah * &r;
        llt.solve_in_place(&mut dx);
        x += &dx;
    }
    Ok(x)
}

/// Real normal equations with iterative refinement; `b` holds real columns.
fn solve_normal_real(
    a: &SparseColMat<usize, f64>,
    b: &Mat<f64>,
    refinement_steps: usize,
) -> Result<Mat<f64>> {
    let at = a
        .as_ref()
        .transpose()
        .to_col_major()
        .map_err(factorization_error)?;
    let ata = sparse_sparse_matmul(at.as_ref(), a.as_ref(), 1.0, Par::Seq)
        .map_err(factorization_error)?;
    let llt = ata.sp_cholesky(Side::Lower).map_err(|e| {
        Error::SingularSystem(format!("normal equations are not positive definite: {e:?}"))
    })?;
    drop(ata);
    let mut x = &at * b;
    llt.solve_in_place(&mut x);
    for _ in 0..refinement_steps {
        let r = b - a * &x;
        let mut dx = &at * &r;
        llt.solve_in_place(&mut dx);
        x += &dx;
    }
    Ok(x)
}

/// A complex system rewritten as `E A D y = E b` with real `E A D`, where
/// `D` multiplies white columns by 𝐢 and `E` multiplies some rows by −𝐢.
struct RealForm {
    a: SparseColMat<usize, f64>,
    rotated_rows: Vec<bool>,
    white_cols: Vec<bool>,
    /// Normalization rows `A_j^w − A_j^b = 0` that were replaced by
    /// `A_j^b = A_j^w`'s right-hand side, paired with the row they copy.
    copied_rhs: Vec<(usize, usize)>,
}

/// Builds the real form of a period system, or `None` when some row mixes
/// real and imaginary coefficients after the column scaling.
///
/// The coupling `A_j^w − A_j^b = 0` is the only row that mixes the two
/// colors. Since the system is consistent and `A_j^w` is pinned by the next
/// row, it is replaced by the equivalent `A_j^b = [j = k]`.
fn real_form(sys: &LinearSystem, white_cols: Vec<bool>) -> Option<RealForm> {
    let start = sys.meta.holomorphicity + sys.meta.periodicity;
    let coupling_row = |row: usize| {
        row >= start + 2 && row < start + sys.meta.normalization && (row - start) % 2 == 0
    };
    let mut copied_rhs = Vec::new();
    let mut rotated_rows = vec![false; sys.n_rows()];
    let mut entries = Vec::with_capacity(sys.triplets.len());
    let mut current: Option<(usize, bool)> = None;
    for t in &sys.triplets {
        if coupling_row(t.row) {
            // keep only the black column, with coefficient one
            if t.col == sys.a_column((t.row - start - 2) / 2 + 1, Color::Black) {
                entries.push(FaerTriplet::new(t.row, t.col, 1.0));
                copied_rhs.push((t.row, t.row + 1));
            }
            continue;
        }
        let v = if white_cols[t.col] {
            t.val * Complex64::new(0.0, 1.0)
        } else {
            t.val
        };
        let rotate = match current {
            Some((row, rot)) if row == t.row => rot,
            _ => {
                let rot = v.im != 0.0;
                current = Some((t.row, rot));
                rotated_rows[t.row] = rot;
                rot
            }
        };
        // multiplying by −𝐢 sends 𝐢s to s
        let (re, im) = if rotate { (v.im, -v.re) } else { (v.re, v.im) };
        if im != 0.0 {
            return None;
        }
        entries.push(FaerTriplet::new(t.row, t.col, re));
    }
    let a = SparseColMat::try_new_from_triplets(sys.n_rows(), sys.n_cols(), &entries).ok()?;
    Some(RealForm {
        a,
        rotated_rows,
        white_cols,
        copied_rhs,
    })
}

impl RealForm {
    fn solve(&self, rhs: &[Vec<Complex64>]) -> Result<Vec<Vec<Complex64>>> {
        let m = self.a.nrows();
        let scaled: Vec<Vec<Complex64>> = rhs
            .iter()
            .map(|b| {
                let mut b = b.clone();
                for &(row, from) in &self.copied_rhs {
                    b[row] = b[from];
                }
                for (z, &rot) in b.iter_mut().zip(&self.rotated_rows) {
                    if rot {
                        *z *= Complex64::new(0.0, -1.0);
                    }
                }
                b
            })
            .collect();
        let nr = rhs.len();
        let b = Mat::<f64>::from_fn(m, 2 * nr, |i, k| {
            let z = scaled[k / 2][i];
            if k % 2 == 0 {
                z.re
            } else {
                z.im
            }
        });
        let y = solve_normal_real(&self.a, &b, 3)?;
        Ok((0..nr)
            .map(|k| {
                (0..self.a.ncols())
                    .map(|c| {
                        let z = Complex64::new(y[(c, 2 * k)], y[(c, 2 * k + 1)]);
                        if self.white_cols[c] {
                            z * Complex64::new(0.0, 1.0)
                        } else {
                            z
                        }
                    })
                    .collect()
            })
            .collect())
    }
}

/// Factorization used by [`solve_system`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// QR below [`AUTO_QR_MAX_COLS`] unknowns; above that, the real form for
    /// period systems and complex normal equations otherwise.
    #[default]
    Auto,
    Qr,
    Normal,
    /// Real normal equations after rotating white columns by 𝐢. Only
    /// available through [`period_matrix`]; elsewhere it means `Normal`.
    Real,
}

/// Largest system solved by QR under [`Strategy::Auto`].
pub const AUTO_QR_MAX_COLS: usize = 250_000;

/// Least-squares solution of `sys` for every right-hand side in `rhs`, from a
/// single sparse factorization.
pub fn solve_system(sys: &LinearSystem, rhs: &[Vec<Complex64>]) -> Result<Solution> {
    solve_system_with(sys, rhs, Strategy::Auto)
}

pub fn solve_system_with(
    sys: &LinearSystem,
    rhs: &[Vec<Complex64>],
    strategy: Strategy,
) -> Result<Solution> {
    let (m, n) = (sys.n_rows(), sys.n_cols());
    if m < n {
        return Err(Error::SingularSystem(format!(
            "{m} equations for {n} unknowns"
        )));
    }
    solve_faer(&to_faer(sys)?, rhs, strategy)
}

fn solve_faer(
    a: &SparseColMat<usize, Complex64>,
    rhs: &[Vec<Complex64>],
    strategy: Strategy,
) -> Result<Solution> {
    let (m, n) = (a.nrows(), a.ncols());
    if rhs.iter().any(|b| b.len() != m) {
        return Err(Error::InvalidParameter(
            "right-hand side length mismatch".into(),
        ));
    }
    let b = Mat::<Complex64>::from_fn(m, rhs.len(), |i, k| rhs[k][i]);
    let sol = match strategy {
        Strategy::Qr => solve_qr(a, &b)?,
        Strategy::Auto if n <= AUTO_QR_MAX_COLS => solve_qr(a, &b)?,
        Strategy::Normal | Strategy::Auto | Strategy::Real => solve_normal(a, &b, 3)?,
    };
    finish(a, &b, rhs, &sol)
}

fn finish(
    a: &SparseColMat<usize, Complex64>,
    b: &Mat<Complex64>,
    rhs: &[Vec<Complex64>],
    sol: &Mat<Complex64>,
) -> Result<Solution> {
    let n = a.ncols();
    if sol
        .col_iter()
        .flat_map(|c| c.iter())
        .any(|z| !z.re.is_finite() || !z.im.is_finite())
    {
        return Err(Error::SingularSystem(
            "factorization produced non-finite values; the matrix is rank deficient".into(),
        ));
    }
    let r = b - a * sol;
    let residuals = (0..rhs.len()).map(|k| r.col(k).norm_l2()).collect();
    let rhs_norms = rhs.iter().map(|b| norm2(b)).collect();
    let x = (0..rhs.len())
        .map(|k| (0..n).map(|i| sol[(i, k)]).collect())
        .collect();
    Ok(Solution {
        x,
        residuals,
        rhs_norms,
    })
}

/// Discrete Riemann matrix with diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RiemannJson", into = "RiemannJson")]
pub struct RiemannMatrix {
    pub genus: usize,
    pub level: Option<u32>,
    pub tau: CMatrix,
    pub residual: Option<f64>,
    pub symmetry_defect: f64,
    pub min_imag_eig: f64,
    pub wall_time_s: Option<f64>,
    pub provenance: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct RiemannJson {
    genus: usize,
    #[serde(default)]
    level: Option<u32>,
    tau_re: Vec<Vec<f64>>,
    tau_im: Vec<Vec<f64>>,
    #[serde(default)]
    residual: Option<f64>,
    #[serde(default)]
    symmetry_defect: Option<f64>,
    #[serde(default)]
    min_imag_eig: Option<f64>,
    #[serde(default)]
    wall_time_s: Option<f64>,
    #[serde(default)]
    provenance: Option<String>,
}

impl TryFrom<RiemannJson> for RiemannMatrix {
    type Error = Error;

    fn try_from(j: RiemannJson) -> Result<Self> {
        let g = j.genus;
        let shape_ok = |m: &Vec<Vec<f64>>| m.len() == g && m.iter().all(|r| r.len() == g);
        if g == 0 || !shape_ok(&j.tau_re) || !shape_ok(&j.tau_im) {
            return Err(Error::InvalidParameter(format!(
                "tau_re and tau_im must both be {g}×{g}"
            )));
        }
        let tau: CMatrix = (0..g)
            .map(|a| {
                (0..g)
                    .map(|b| Complex64::new(j.tau_re[a][b], j.tau_im[a][b]))
                    .collect()
            })
            .collect();
        if tau
            .iter()
            .flatten()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::InvalidParameter("tau has non-finite entries".into()));
        }
        // recompute rather than trust the file
        let mut m = RiemannMatrix::from_tau(tau)?;
        m.level = j.level;
        m.residual = j.residual;
        m.wall_time_s = j.wall_time_s;
        m.provenance = j.provenance;
        Ok(m)
    }
}

impl From<RiemannMatrix> for RiemannJson {
    fn from(m: RiemannMatrix) -> Self {
        RiemannJson {
            genus: m.genus,
            level: m.level,
            tau_re: m
                .tau
                .iter()
                .map(|r| r.iter().map(|z| z.re).collect())
                .collect(),
            tau_im: m
                .tau
                .iter()
                .map(|r| r.iter().map(|z| z.im).collect())
                .collect(),
            residual: m.residual,
            symmetry_defect: Some(m.symmetry_defect),
            min_imag_eig: Some(m.min_imag_eig),
            wall_time_s: m.wall_time_s,
            provenance: m.provenance,
        }
    }
}

pub fn symmetry_defect(tau: &CMatrix) -> f64 {
    let g = tau.len();
    let mut d = 0.0f64;
    for a in 0..g {
        for b in 0..g {
            d = d.max((tau[a][b] - tau[b][a]).norm());
        }
    }
    d
}

/// Eigenvalues of the symmetric part of `Im τ`, ascending.
pub fn imag_eigenvalues(tau: &CMatrix) -> Result<Vec<f64>> {
    let g = tau.len();
    let y = Mat::<f64>::from_fn(g, g, |a, b| 0.5 * (tau[a][b].im + tau[b][a].im));
    y.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Factorization(format!("eigenvalues: {e:?}")))
}

/// Max-abs entry norm.
pub fn sup_norm(tau: &CMatrix) -> f64 {
    tau.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn sup_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

impl RiemannMatrix {
    /// Wraps a bare matrix, computing symmetry and positivity diagnostics.
    pub fn from_tau(tau: CMatrix) -> Result<Self> {
        let g = tau.len();
        if g == 0 || tau.iter().any(|r| r.len() != g) {
            return Err(Error::InvalidParameter(
                "tau must be a non-empty square matrix".into(),
            ));
        }
        let eig = imag_eigenvalues(&tau)?;
        Ok(Self {
            genus: g,
            level: None,
            symmetry_defect: symmetry_defect(&tau),
            min_imag_eig: eig[0],
            tau,
            residual: None,
            wall_time_s: None,
            provenance: None,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// `(τ + τᵀ)/2`
    pub fn symmetrized(&self) -> CMatrix {
        let g = self.genus;
        (0..g)
            .map(|a| {
                (0..g)
                    .map(|b| 0.5 * (self.tau[a][b] + self.tau[b][a]))
                    .collect()
            })
            .collect()
    }
}

/// Solves the `g` systems of `spec` at `level` and assembles τ, whose row `k`
/// is `½(B^w + B^b)` of the `k`-th normalized differential.
pub fn period_matrix(spec: &SurfaceSpec, level: u32, opts: &SolveOptions) -> Result<RiemannMatrix> {
    let estimated = estimate_nnz(spec, level)?;
    if estimated > opts.nnz_cap {
        return Err(Error::ResourceLimit {
            estimated,
            cap: opts.nnz_cap,
        });
    }
    let start = Instant::now();
    let mesh = refine(spec, level)?;
    let mut sys = assemble(&mesh)?;
    let use_real = match opts.strategy {
        Strategy::Real => true,
        Strategy::Auto => sys.n_cols() > AUTO_QR_MAX_COLS,
        _ => false,
    };
    let real = if use_real {
        let nv = mesh.n_vertices();
        let mut white: Vec<bool> = mesh
            .vertices()
            .map(|(i, j)| vertex_color(i, j) == Color::White)
            .collect();
        white.extend((0..sys.n_cols() - nv).map(|c| c % 2 == 1));
        real_form(&sys, white)
    } else {
        None
    };
    drop(mesh);
    let g = spec.genus;
    let rhs: Vec<_> = (1..=g).map(|k| sys.rhs_for(k)).collect::<Result<_>>()?;
    let a = to_faer(&sys)?;
    // only the column layout is needed from here on
    sys.triplets = Vec::new();
    let sol = match real {
        Some(rf) => {
            let x = rf.solve(&rhs)?;
            drop(rf);
            let m = a.nrows();
            let b = Mat::<Complex64>::from_fn(m, g, |i, k| rhs[k][i]);
            let xm = Mat::<Complex64>::from_fn(a.ncols(), g, |i, k| x[k][i]);
            finish(&a, &b, &rhs, &xm)?
        }
        None => solve_faer(&a, &rhs, opts.strategy)?,
    };
    drop(a);
    let tau = tau_from_solution(&sys, &sol.x);

    let residual = sol.residuals.iter().copied().fold(0.0, f64::max);
    let rel = sol
        .residuals
        .iter()
        .zip(&sol.rhs_norms)
        .map(|(r, b)| r / b.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    let magnitude = sol.x.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
    if rel > opts.residual_tol || magnitude > 1e12 {
        return Err(Error::SingularSystem(format!(
            "least-squares residual {rel:.3e} (relative), solution magnitude {magnitude:.3e}; \
             the periodicity relations are inconsistent or the matrix is rank deficient"
        )));
    }

    let mut m = RiemannMatrix::from_tau(tau)?;
    m.level = Some(level);
    m.residual = Some(residual);
    m.wall_time_s = Some(start.elapsed().as_secs_f64());
    m.provenance = Some(format!("{} level {level}", spec.summary()));
    Ok(m)
}

/// Reads τ off the period columns of the solved systems.
pub fn tau_from_solution(sys: &LinearSystem, x: &[Vec<Complex64>]) -> CMatrix {
    let g = sys.genus;
    (0..g)
        .map(|k| {
            (1..=g)
                .map(|j| {
                    let b = x[k][sys.b_column(j, Color::Black)];
                    let w = x[k][sys.b_column(j, Color::White)];
                    0.5 * (b + w)
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiemannTolerances {
    /// Symmetry defect relative to `‖τ‖∞`.
    pub symmetry_rel: f64,
    /// Residual relative to the right-hand side norm (which is 1).
    pub residual: f64,
}

impl Default for RiemannTolerances {
    fn default() -> Self {
        Self {
            symmetry_rel: 1e-8,
            residual: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiemannDiagnostics {
    pub symmetry_defect: f64,
    pub min_imag_eig: f64,
    pub residual: Option<f64>,
    pub symmetric: bool,
    pub positive_definite: bool,
    pub residual_ok: bool,
    pub pass: bool,
}

pub fn validate_riemann(m: &RiemannMatrix, tol: &RiemannTolerances) -> RiemannDiagnostics {
    let scale = sup_norm(&m.tau).max(1.0);
    let symmetric = m.symmetry_defect <= tol.symmetry_rel * scale;
    let positive_definite = m.min_imag_eig > 0.0;
    let residual_ok = m.residual.is_none_or(|r| r <= tol.residual);
    RiemannDiagnostics {
        symmetry_defect: m.symmetry_defect,
        min_imag_eig: m.min_imag_eig,
        residual: m.residual,
        symmetric,
        positive_definite,
        residual_ok,
        pass: symmetric && positive_definite && residual_ok,
    }
}

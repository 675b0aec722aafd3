use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use discrete_riemann::analysis::{
    continued_fraction_approx, convergence_report, exact_l_matrix, reciprocity_check,
    ConvergenceReport, Reciprocity, Reference,
};
use discrete_riemann::fixtures::{self, CheckOptions, RowCheck, RowStatus};
use discrete_riemann::solver::{set_threads, validate_riemann, RiemannTolerances, Strategy};
use discrete_riemann::surface::{validate_spec, DiagnosticsReport};
use discrete_riemann::theta::{
    branch_points_g2_with, pairs_from, theta_constants, vanishing_from, BranchPoint, Convention,
    ThetaCharacteristic, ThetaOptions, ThetaReport, VanishingReport, DEFAULT_TOL,
    DEFAULT_VANISHING_REL, MAX_RADIUS,
};
use discrete_riemann::{
    make_js, make_l, period_matrix, BasisVariant, Error, Family, Rational, RiemannMatrix,
    SolveOptions, SurfaceSpec,
};
use serde::Serialize;

use crate::levels::parse_levels;
use crate::render::{table, TableRow};

pub const EXIT_ARGUMENT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_RESOURCE: i32 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "drm",
    version,
    about = "Discrete Riemann matrices of square-tiled translation surfaces"
)]
struct Cli {
    /// Worker threads for the sparse factorization.
    #[arg(long, global = true, env = "DRM_THREADS", value_parser = clap::value_parser!(u32).range(1..))]
    threads: Option<u32>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Write the report to this file instead of stdout.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Discrete Riemann matrix of one surface at one level.
    Compute {
        #[command(flatten)]
        surface: SurfaceArgs,
        #[arg(long)]
        level: u32,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Solve several levels and measure the error against a reference.
    Converge {
        #[command(flatten)]
        surface: SurfaceArgs,
        /// Levels such as `0..2`, `0..=3` or `0,1,3`.
        #[arg(long, default_value = "0..2")]
        levels: String,
        /// `exact` (L only, the default there), `none`, or a RiemannMatrix JSON file.
        #[arg(long)]
        reference: Option<String>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Theta constants, branch points and hyperelliptic signatures of a matrix.
    Theta {
        /// RiemannMatrix JSON file.
        #[arg(long, conflicts_with_all = ["exact_l", "fixture"])]
        tau: Option<PathBuf>,
        /// Use the exact matrix of the L-shape with this lambda.
        #[arg(long, conflicts_with = "fixture")]
        exact_l: Option<f64>,
        /// Published matrix, as `id:level` (see `fixtures --list`).
        #[arg(long)]
        fixture: Option<String>,
        #[arg(long)]
        branch_points: bool,
        #[arg(long)]
        vanishing: bool,
        /// Vanishing threshold relative to the median even-constant magnitude.
        #[arg(long, default_value_t = DEFAULT_VANISHING_REL)]
        rel: f64,
        #[arg(long)]
        pairs: bool,
        /// Relative tolerance for pairing equal even constants.
        #[arg(long, default_value_t = 1e-6)]
        pair_tol: f64,
        /// Truncation tolerance of the lattice sums.
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = MAX_RADIUS)]
        max_radius: u32,
        #[arg(long, value_enum, default_value_t = ConventionArg::TwoPiI)]
        convention: ConventionArg,
        /// Leave the per-characteristic constants out of the report.
        #[arg(long)]
        no_constants: bool,
    },
    /// List or re-check the published regression tables.
    Fixtures {
        #[arg(long)]
        check: bool,
        #[arg(long, conflicts_with = "check")]
        list: bool,
        /// Restrict to these fixture ids.
        #[arg(long = "id")]
        ids: Vec<String>,
        #[arg(long, default_value_t = 3)]
        max_level: u32,
        /// Skip rows whose estimated nonzero count exceeds this.
        #[arg(long, default_value_t = 20_000_000)]
        nnz_budget: u64,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Structural diagnostics of a surface (no solve).
    Validate {
        #[command(flatten)]
        surface: SurfaceArgs,
    },
}

#[derive(Args, Debug)]
struct SurfaceArgs {
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    /// SurfaceSpec JSON file instead of a built-in family.
    #[arg(long, conflicts_with = "family")]
    spec: Option<PathBuf>,
    #[arg(long)]
    genus: Option<usize>,
    /// Rational `p/q`.
    #[arg(long)]
    lambda: Option<Rational>,
    /// Decimal lambda, rationalized with --cf-tol.
    #[arg(long, conflicts_with = "lambda", requires = "cf_tol")]
    lambda_decimal: Option<f64>,
    /// Rational `p/q` (JS only).
    #[arg(long)]
    mu: Option<Rational>,
    #[arg(long, conflicts_with = "mu", requires = "cf_tol")]
    mu_decimal: Option<f64>,
    /// Continued-fraction tolerance for decimal parameters.
    #[arg(long)]
    cf_tol: Option<f64>,
    #[arg(long, value_enum)]
    basis: Option<BasisArg>,
}

#[derive(Args, Debug)]
struct SolverArgs {
    #[arg(long, value_enum, default_value_t = StrategyArg::Auto)]
    strategy: StrategyArg,
    /// Refuse systems whose estimated nonzero count exceeds this.
    #[arg(long)]
    nnz_cap: Option<u64>,
    /// Run levels above the safety threshold and lift the default nonzero cap.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FamilyArg {
    L,
    Js,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BasisArg {
    Alpha,
    Delta,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyArg {
    Auto,
    Qr,
    Normal,
    Real,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ConventionArg {
    TwoPiI,
    PiI,
}

/// Failure of a subcommand, reported as JSON on stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    fn argument(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_ARGUMENT,
            kind: "invalid_argument",
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::InvalidParameter(_) | Error::ParseRational { .. } => {
                (EXIT_ARGUMENT, "invalid_argument")
            }
            Error::Domain(_) => (EXIT_ARGUMENT, "domain"),
            Error::Json(_) => (EXIT_ARGUMENT, "invalid_json"),
            Error::Io(_) => (EXIT_ARGUMENT, "io"),
            Error::ResourceLimit { .. } => (EXIT_RESOURCE, "resource_limit"),
            Error::PrecisionUnreachable { .. } => (EXIT_RESOURCE, "precision_unreachable"),
            Error::SingularSystem(_) => (EXIT_NUMERICAL, "singular_system"),
            Error::Factorization(_) => (EXIT_NUMERICAL, "factorization"),
            Error::Internal(_) => (EXIT_NUMERICAL, "internal"),
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

fn error_json(f: &Failure) -> String {
    serde_json::json!({
        "error": { "kind": f.kind, "message": f.message, "exit_code": f.code }
    })
    .to_string()
}

/// A decimal parameter replaced by a continued-fraction convergent.
#[derive(Debug, Clone, Serialize)]
struct Rationalized {
    parameter: &'static str,
    decimal: f64,
    cf_tol: f64,
    rational: Rational,
}

struct Surface {
    spec: SurfaceSpec,
    /// Decimal lambda if one was given; the exact L reference uses it.
    lambda_decimal: Option<f64>,
    rationalized: Vec<Rationalized>,
}

fn rationalize(
    name: &'static str,
    decimal: f64,
    cf_tol: f64,
    out: &mut Vec<Rationalized>,
) -> Result<Rational, Failure> {
    let rational = continued_fraction_approx(decimal, cf_tol)?;
    out.push(Rationalized {
        parameter: name,
        decimal,
        cf_tol,
        rational,
    });
    Ok(rational)
}

impl SurfaceArgs {
    fn resolve(&self) -> Result<Surface, Failure> {
        if let Some(path) = &self.spec {
            if self.genus.is_some()
                || self.lambda.is_some()
                || self.lambda_decimal.is_some()
                || self.mu.is_some()
                || self.mu_decimal.is_some()
                || self.basis.is_some()
            {
                return Err(Failure::argument(
                    "--spec cannot be combined with family parameters",
                ));
            }
            let text = std::fs::read_to_string(path).map_err(Error::from)?;
            let spec = SurfaceSpec::from_json(&text)?;
            return Ok(Surface {
                spec,
                lambda_decimal: None,
                rationalized: Vec::new(),
            });
        }
        let family = self
            .family
            .ok_or_else(|| Failure::argument("one of --family or --spec is required"))?;
        if self.cf_tol.is_some() && self.lambda_decimal.is_none() && self.mu_decimal.is_none() {
            return Err(Failure::argument(
                "--cf-tol only applies to --lambda-decimal or --mu-decimal",
            ));
        }
        let cf_tol = self.cf_tol.unwrap_or(0.0);
        let mut rationalized = Vec::new();
        let lambda = match (self.lambda, self.lambda_decimal) {
            (Some(l), _) => Some(l),
            (None, Some(d)) => Some(rationalize("lambda", d, cf_tol, &mut rationalized)?),
            (None, None) => None,
        };
        let mu = match (self.mu, self.mu_decimal) {
            (Some(m), _) => Some(m),
            (None, Some(d)) => Some(rationalize("mu", d, cf_tol, &mut rationalized)?),
            (None, None) => None,
        };
        let spec = match family {
            FamilyArg::L => {
                if mu.is_some() {
                    return Err(Failure::argument("the L family has no mu"));
                }
                if self.genus.is_some_and(|g| g != 2) {
                    return Err(Failure::argument("the L family has genus 2"));
                }
                let lambda = lambda.ok_or_else(|| {
                    Failure::argument("--lambda or --lambda-decimal is required for the L family")
                })?;
                let basis = match self.basis.unwrap_or(BasisArg::Alpha) {
                    BasisArg::Alpha => BasisVariant::Alpha,
                    BasisArg::Delta => BasisVariant::Delta,
                };
                make_l(lambda, basis)?
            }
            FamilyArg::Js => {
                if self.basis.is_some() {
                    return Err(Failure::argument("--basis only applies to the L family"));
                }
                let genus = self
                    .genus
                    .ok_or_else(|| Failure::argument("--genus is required for the JS family"))?;
                let one = Rational::integer(1);
                make_js(genus, lambda.unwrap_or(one), mu.unwrap_or(one))?
            }
        };
        Ok(Surface {
            spec,
            lambda_decimal: self.lambda_decimal,
            rationalized,
        })
    }
}

impl SolverArgs {
    fn options(&self) -> SolveOptions {
        let default = SolveOptions::default();
        let cap = match (self.nnz_cap, self.force) {
            (Some(c), _) => c,
            (None, true) => u64::MAX,
            (None, false) => default.nnz_cap,
        };
        let strategy = match self.strategy {
            StrategyArg::Auto => Strategy::Auto,
            StrategyArg::Qr => Strategy::Qr,
            StrategyArg::Normal => Strategy::Normal,
            StrategyArg::Real => Strategy::Real,
        };
        SolveOptions {
            nnz_cap: cap,
            strategy,
            ..default
        }
    }

    /// Refuses levels whose published run times are hours unless forced.
    fn guard(&self, spec: &SurfaceSpec, level: u32) -> Result<(), Failure> {
        if self.force {
            return Ok(());
        }
        let step_den = spec.base_step.den();
        let heavy = match spec.family {
            Family::L => level >= 5 && step_den > 10,
            Family::Js => level >= 6 && spec.genus >= 4,
        };
        if heavy {
            return Err(Failure {
                code: EXIT_RESOURCE,
                kind: "needs_force",
                message: format!(
                    "level {level} of {} is above the safety threshold; pass --force to run it",
                    spec.summary()
                ),
            });
        }
        Ok(())
    }
}

fn provenance_note(rationalized: &[Rationalized]) -> String {
    rationalized
        .iter()
        .map(|r| {
            format!(
                "; {} = {} from {} at cf tol {:e}",
                r.parameter, r.rational, r.decimal, r.cf_tol
            )
        })
        .collect()
}

struct Output {
    text: String,
    /// Non-zero when the report is complete but signals a failure.
    failure: Option<Failure>,
}

impl Output {
    fn ok(text: String) -> Self {
        Output {
            text,
            failure: None,
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value).map_err(|e| Failure::from(Error::from(e)))
}

fn compute(
    surface: &SurfaceArgs,
    level: u32,
    solver: &SolverArgs,
    format: Format,
) -> Result<Output, Failure> {
    let s = surface.resolve()?;
    solver.guard(&s.spec, level)?;
    let mut m = period_matrix(&s.spec, level, &solver.options())?;
    if let Some(p) = &mut m.provenance {
        p.push_str(&provenance_note(&s.rationalized));
    }
    let text = match format {
        Format::Json => m.to_json()?,
        Format::Text => {
            let mut t = table(
                &s.spec.summary(),
                &[TableRow {
                    level: level.to_string(),
                    time_s: m.wall_time_s,
                    tau: &m.tau,
                }],
            );
            let d = validate_riemann(&m, &RiemannTolerances::default());
            writeln!(
                t,
                "residual {:.1e}  symmetry defect {:.1e}  min eig Im tau {:.6}",
                m.residual.unwrap_or(f64::NAN),
                d.symmetry_defect,
                d.min_imag_eig
            )
            .unwrap();
            for r in &s.rationalized {
                writeln!(
                    t,
                    "{} = {} from {} (cf tol {:e})",
                    r.parameter, r.rational, r.decimal, r.cf_tol
                )
                .unwrap();
            }
            t
        }
    };
    Ok(Output::ok(text))
}

#[derive(Serialize)]
struct ConvergeOut<'a> {
    rationalized: &'a [Rationalized],
    #[serde(flatten)]
    report: &'a ConvergenceReport,
}

fn converge(
    surface: &SurfaceArgs,
    levels: &str,
    reference: Option<&str>,
    solver: &SolverArgs,
    format: Format,
) -> Result<Output, Failure> {
    let s = surface.resolve()?;
    let levels = parse_levels(levels).map_err(|e| Failure::argument(format!("--levels: {e}")))?;
    for &l in &levels {
        solver.guard(&s.spec, l)?;
    }
    let exact = || -> Result<Reference, Failure> {
        if s.spec.family != Family::L {
            return Err(Failure::argument(
                "the exact reference exists for the L family only",
            ));
        }
        let lambda = s.lambda_decimal.unwrap_or_else(|| s.spec.lambda.to_f64());
        Ok(Reference::exact_l(lambda)?)
    };
    let reference = match reference {
        Some("none") => Reference::None,
        Some("exact") => exact()?,
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(Error::from)?;
            let m = RiemannMatrix::from_json(&text)?;
            Reference::Fixture {
                label: path.to_string(),
                tau: m.tau,
            }
        }
        None if s.spec.family == Family::L => exact()?,
        None => Reference::None,
    };
    let report = convergence_report(&s.spec, &levels, reference, &solver.options())?;
    let failure = report.stopped.as_ref().map(|stop| Failure {
        code: EXIT_NUMERICAL,
        kind: "stopped",
        message: format!("level {}: {}", stop.level, stop.message),
    });
    let text = match format {
        Format::Json => to_json(&ConvergeOut {
            rationalized: &s.rationalized,
            report: &report,
        })?,
        Format::Text => {
            let rows: Vec<TableRow> = report
                .rows
                .iter()
                .map(|r| TableRow {
                    level: r.level.to_string(),
                    time_s: Some(r.wall_time_s),
                    tau: &r.tau,
                })
                .collect();
            let mut t = table(&report.surface, &rows);
            t.push('\n');
            t.push_str(&report.to_text());
            for r in &s.rationalized {
                writeln!(
                    t,
                    "{} = {} from {} (cf tol {:e})",
                    r.parameter, r.rational, r.decimal, r.cf_tol
                )
                .unwrap();
            }
            t
        }
    };
    Ok(Output { text, failure })
}

#[derive(Serialize)]
struct ThetaOut {
    #[serde(flatten)]
    report: ThetaReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    branch_points: Option<Vec<BranchPoint>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reciprocity: Option<Reciprocity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    vanishing: Option<VanishingReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pairs: Option<Vec<(ThetaCharacteristic, ThetaCharacteristic)>>,
}

struct ThetaRequest<'a> {
    tau: Option<&'a PathBuf>,
    exact_l: Option<f64>,
    fixture: Option<&'a str>,
    branch_points: bool,
    vanishing: bool,
    rel: f64,
    pairs: bool,
    pair_tol: f64,
    opts: ThetaOptions,
    constants: bool,
}

fn load_tau(req: &ThetaRequest) -> Result<RiemannMatrix, Failure> {
    match (req.tau, req.exact_l, req.fixture) {
        (Some(path), _, _) => {
            let text = std::fs::read_to_string(path).map_err(Error::from)?;
            Ok(RiemannMatrix::from_json(&text)?)
        }
        (None, Some(lambda), _) => Ok(RiemannMatrix::from_tau(exact_l_matrix(lambda)?)?),
        (None, None, Some(f)) => {
            let (id, level) = f
                .rsplit_once(':')
                .ok_or_else(|| Failure::argument("--fixture expects id:level"))?;
            let level: u32 = level
                .parse()
                .map_err(|_| Failure::argument(format!("bad fixture level {level:?}")))?;
            Ok(fixtures::load(id)?.matrix(level)?)
        }
        (None, None, None) => Err(Failure::argument(
            "one of --tau, --exact-l or --fixture is required",
        )),
    }
}

fn theta_cmd(req: &ThetaRequest, format: Format) -> Result<Output, Failure> {
    let tau = load_tau(req)?;
    if req.branch_points && tau.genus != 2 {
        return Err(Failure::argument("--branch-points needs a genus-2 matrix"));
    }
    let mut report = theta_constants(&tau, &req.opts)?;
    let branch_points = if req.branch_points {
        Some(branch_points_g2_with(&tau, &req.opts)?)
    } else {
        None
    };
    let reciprocity = branch_points.as_ref().and_then(|bp| {
        let finite: Vec<_> = bp.iter().filter_map(|p| p.value).collect();
        reciprocity_check(&finite).ok()
    });
    let vanishing = if req.vanishing {
        Some(vanishing_from(&report, req.rel)?)
    } else {
        None
    };
    let pairs = req.pairs.then(|| pairs_from(&report, req.pair_tol));
    let text = match format {
        Format::Json => {
            if !req.constants {
                report.constants.clear();
            }
            to_json(&ThetaOut {
                report,
                branch_points,
                reciprocity,
                vanishing,
                pairs,
            })?
        }
        Format::Text => {
            let mut t = String::new();
            writeln!(
                t,
                "genus {}  lattice radius {}  tail bound {:.1e}",
                report.genus, report.truncation.radius, report.truncation.tail_bound
            )
            .unwrap();
            if req.constants {
                writeln!(t, "characteristic  parity  |theta(0)|").unwrap();
                for c in &report.constants {
                    let parity = if c.odd { "odd" } else { "even" };
                    writeln!(
                        t,
                        "{:>14}  {parity:>6}  {:.6e}",
                        c.characteristic.to_string(),
                        c.magnitude
                    )
                    .unwrap();
                }
            }
            if let Some(bp) = &branch_points {
                writeln!(t, "branch points:").unwrap();
                for p in bp {
                    match p.value {
                        Some(z) => {
                            writeln!(t, "  {}  {:+.15} {:+.15}i", p.characteristic, z.re, z.im)
                        }
                        None => writeln!(t, "  {}  infinity", p.characteristic),
                    }
                    .unwrap();
                }
            }
            if let Some(r) = &reciprocity {
                writeln!(
                    t,
                    "reciprocal pairs {:?}, max |ab - 1| = {:.1e}",
                    r.pairs, r.max_defect
                )
                .unwrap();
            }
            if let Some(v) = &vanishing {
                writeln!(
                    t,
                    "vanishing even constants: {} (below {:e} x median {:.3e})",
                    v.count, v.rel_threshold, v.median
                )
                .unwrap();
                for c in &v.vanishing {
                    writeln!(t, "  {c}").unwrap();
                }
            }
            if let Some(p) = &pairs {
                writeln!(t, "equal even constants: {}", p.len()).unwrap();
                for (a, b) in p {
                    writeln!(t, "  {a} ~ {b}").unwrap();
                }
            }
            t
        }
    };
    Ok(Output::ok(text))
}

fn fixtures_cmd(
    check: bool,
    ids: &[String],
    opts: CheckOptions,
    format: Format,
) -> Result<Output, Failure> {
    let all = fixtures::load_all()?;
    for id in ids {
        if !all.iter().any(|f| &f.id == id) {
            return Err(Failure::argument(format!("unknown fixture {id:?}")));
        }
    }
    let chosen: Vec<_> = all
        .iter()
        .filter(|f| ids.is_empty() || ids.contains(&f.id))
        .collect();
    if !check {
        #[derive(Serialize)]
        struct Listing<'a> {
            id: &'a str,
            title: &'a str,
            levels: Vec<u32>,
        }
        let list: Vec<Listing> = chosen
            .iter()
            .map(|f| Listing {
                id: &f.id,
                title: &f.title,
                levels: f.rows.iter().map(|r| r.level).collect(),
            })
            .collect();
        let text = match format {
            Format::Json => to_json(&list)?,
            Format::Text => list
                .iter()
                .map(|l| format!("{:<14} levels {:?}  {}\n", l.id, l.levels, l.title))
                .collect(),
        };
        return Ok(Output::ok(text));
    }
    let checks: Vec<RowCheck> = chosen
        .iter()
        .flat_map(|f| fixtures::check(f, &opts))
        .collect();
    let failed = checks
        .iter()
        .filter(|c| matches!(c.status, RowStatus::Fail { .. } | RowStatus::Error { .. }))
        .count();
    let text = match format {
        Format::Json => to_json(&checks)?,
        Format::Text => {
            let mut t = String::new();
            for c in &checks {
                let status = match &c.status {
                    RowStatus::Pass { max_deviation } => {
                        format!("pass  max dev {max_deviation:.1e}")
                    }
                    RowStatus::Fail { comparison } => format!(
                        "FAIL  max dev {:.1e}, {} mismatches",
                        comparison.max_deviation,
                        comparison.mismatches.len()
                    ),
                    RowStatus::Skipped { reason } => format!("skip  {reason}"),
                    RowStatus::Error { message } => format!("ERROR {message}"),
                };
                let time = c
                    .wall_time_s
                    .map(|t| format!("{t:.2}s"))
                    .unwrap_or_default();
                writeln!(
                    t,
                    "{:<14} level {:<2} {:<7} {status}",
                    c.fixture, c.level, time
                )
                .unwrap();
            }
            writeln!(t, "{} rows, {failed} failed", checks.len()).unwrap();
            t
        }
    };
    let failure = (failed > 0).then(|| Failure {
        code: EXIT_NUMERICAL,
        kind: "fixture_mismatch",
        message: format!("{failed} fixture rows failed"),
    });
    Ok(Output { text, failure })
}

fn validate(surface: &SurfaceArgs, format: Format) -> Result<Output, Failure> {
    let s = surface.resolve()?;
    let report: DiagnosticsReport = validate_spec(&s.spec);
    let text = match format {
        Format::Json => to_json(&report)?,
        Format::Text => {
            let mut t = String::new();
            writeln!(t, "{}", s.spec.summary()).unwrap();
            writeln!(
                t,
                "vertices {}  edges {}  faces {}  euler {}  genus {:?} (declared {})",
                report.vertex_classes,
                report.edges,
                report.faces,
                report.euler_characteristic,
                report.genus_from_euler,
                report.declared_genus
            )
            .unwrap();
            for (name, items) in [
                ("off-boundary sides", &report.off_boundary_sides),
                ("color conflicts", &report.color_conflicts),
                ("cocycle violations", &report.cocycle_violations),
            ] {
                if !items.is_empty() {
                    writeln!(t, "{name}: {}", items.join(", ")).unwrap();
                }
            }
            if !report.unpaired_edges.is_empty() || !report.overlapping_edges.is_empty() {
                writeln!(
                    t,
                    "unpaired edges {}  overlapping edges {}",
                    report.unpaired_edges.len(),
                    report.overlapping_edges.len()
                )
                .unwrap();
            }
            writeln!(
                t,
                "{}",
                if report.is_valid() {
                    "valid"
                } else {
                    "INVALID"
                }
            )
            .unwrap();
            t
        }
    };
    let failure = (!report.is_valid()).then(|| Failure::argument("surface fails validation"));
    Ok(Output { text, failure })
}

fn dispatch(cli: &Cli) -> Result<Output, Failure> {
    if let Some(n) = cli.threads {
        set_threads(n as usize);
    }
    match &cli.command {
        Command::Compute {
            surface,
            level,
            solver,
        } => compute(surface, *level, solver, cli.format),
        Command::Converge {
            surface,
            levels,
            reference,
            solver,
        } => converge(surface, levels, reference.as_deref(), solver, cli.format),
        Command::Theta {
            tau,
            exact_l,
            fixture,
            branch_points,
            vanishing,
            rel,
            pairs,
            pair_tol,
            tol,
            max_radius,
            convention,
            no_constants,
        } => {
            let req = ThetaRequest {
                tau: tau.as_ref(),
                exact_l: *exact_l,
                fixture: fixture.as_deref(),
                branch_points: *branch_points,
                vanishing: *vanishing,
                rel: *rel,
                pairs: *pairs,
                pair_tol: *pair_tol,
                opts: ThetaOptions {
                    tol: *tol,
                    max_radius: *max_radius,
                    convention: match convention {
                        ConventionArg::TwoPiI => Convention::TwoPiI,
                        ConventionArg::PiI => Convention::PiI,
                    },
                },
                constants: !no_constants,
            };
            theta_cmd(&req, cli.format)
        }
        Command::Fixtures {
            check,
            list: _,
            ids,
            max_level,
            nnz_budget,
            tol,
            solver,
        } => fixtures_cmd(
            *check,
            ids,
            CheckOptions {
                max_level: *max_level,
                nnz_budget: *nnz_budget,
                tol: *tol,
                solve: solver.options(),
            },
            cli.format,
        ),
        Command::Validate { surface } => validate(surface, cli.format),
    }
}

/// Runs `drm` with `args` (including the program name). Reports go to
/// `stdout` or the `--out` file, errors as JSON to `stderr`. Returns the
/// process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{}", e.render());
                return 0;
            }
            let f = Failure::argument(e.render().to_string().trim_end());
            let _ = writeln!(stderr, "{}", error_json(&f));
            return f.code;
        }
    };
    let result = dispatch(&cli).and_then(|out| {
        let mut text = out.text;
        if !text.ends_with('\n') {
            text.push('\n');
        }
        match &cli.out {
            Some(path) => std::fs::write(path, &text).map_err(|e| Failure::from(Error::from(e)))?,
            None => stdout
                .write_all(text.as_bytes())
                .map_err(|e| Failure::from(Error::from(e)))?,
        }
        match out.failure {
            Some(f) => Err(f),
            None => Ok(()),
        }
    });
    match result {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(stderr, "{}", error_json(&f));
            f.code
        }
    }
}

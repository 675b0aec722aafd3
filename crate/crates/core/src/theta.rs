//! Riemann theta functions with characteristics and the curve-level
//! observables derived from their values and gradients at the origin.
//!
//! Convention:
//! `θ[ε;δ](z|τ) = Σ_n exp(π𝐢 vᵀτv + 2π𝐢 vᵀ(z + δ/2))` with `v = n + ε/2`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::solver::{CMatrix, RiemannMatrix};

/// Default truncation tolerance of the lattice sums.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Largest admissible truncation radius.
pub const MAX_RADIUS: u32 = 60;
/// Default relative threshold of [`vanishing_even_count`].
pub const DEFAULT_VANISHING_REL: f64 = 1e-4;
/// Refuse lattice boxes with more points than this.
const MAX_LATTICE_POINTS: f64 = 2e8;
/// Characteristics are enumerated explicitly, so keep `4^g` small.
pub const MAX_THETA_GENUS: usize = 8;

/// A characteristic `[ε; δ]` with `ε, δ ∈ {0,1}^g`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ThetaCharacteristic {
    pub eps: Vec<u8>,
    pub delta: Vec<u8>,
}

impl ThetaCharacteristic {
    pub fn new(eps: Vec<u8>, delta: Vec<u8>) -> Result<Self> {
        if eps.is_empty() || eps.len() != delta.len() {
            return Err(Error::InvalidParameter(
                "characteristic vectors must be non-empty and of equal length".into(),
            ));
        }
        if eps.iter().chain(&delta).any(|&b| b > 1) {
            return Err(Error::InvalidParameter(
                "characteristic entries must be 0 or 1".into(),
            ));
        }
        Ok(Self { eps, delta })
    }

    pub fn genus(&self) -> usize {
        self.eps.len()
    }

    /// `ε·δ mod 2`
    pub fn is_odd(&self) -> bool {
        self.eps
            .iter()
            .zip(&self.delta)
            .map(|(&a, &b)| a & b)
            .sum::<u8>()
            % 2
            == 1
    }

    pub fn is_even(&self) -> bool {
        !self.is_odd()
    }

    /// All `4^g` characteristics, ordered by the bit strings of `ε` then `δ`.
    pub fn all(g: usize) -> Vec<Self> {
        let bits = |x: usize| {
            (0..g)
                .map(|i| ((x >> (g - 1 - i)) & 1) as u8)
                .collect::<Vec<_>>()
        };
        let n = 1usize << g;
        (0..n)
            .flat_map(|e| (0..n).map(move |d| (e, d)))
            .map(|(e, d)| Self {
                eps: bits(e),
                delta: bits(d),
            })
            .collect()
    }

    pub fn odd(g: usize) -> Vec<Self> {
        Self::all(g).into_iter().filter(Self::is_odd).collect()
    }

    pub fn even(g: usize) -> Vec<Self> {
        Self::all(g).into_iter().filter(Self::is_even).collect()
    }

    fn bit_string(v: &[u8]) -> String {
        v.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect()
    }

    fn index(&self) -> (usize, usize) {
        let pack = |v: &[u8]| v.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
        (pack(&self.eps), pack(&self.delta))
    }
}

/// Written `ε/δ`, e.g. `10/01`.
impl fmt::Display for ThetaCharacteristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}",
            Self::bit_string(&self.eps),
            Self::bit_string(&self.delta)
        )
    }
}

impl FromStr for ThetaCharacteristic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse = |t: &str| -> Result<Vec<u8>> {
            t.trim()
                .chars()
                .map(|c| match c {
                    '0' => Ok(0),
                    '1' => Ok(1),
                    _ => Err(Error::InvalidParameter(format!("bad characteristic '{s}'"))),
                })
                .collect()
        };
        let (e, d) = s
            .split_once('/')
            .ok_or_else(|| Error::InvalidParameter(format!("characteristic '{s}' lacks '/'")))?;
        Self::new(parse(e)?, parse(d)?)
    }
}

#[derive(Serialize, Deserialize)]
struct CharacteristicJson {
    eps: String,
    delta: String,
}

impl Serialize for ThetaCharacteristic {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CharacteristicJson {
            eps: Self::bit_string(&self.eps),
            delta: Self::bit_string(&self.delta),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ThetaCharacteristic {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = CharacteristicJson::deserialize(d)?;
        format!("{}/{}", j.eps, j.delta)
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// Factor in front of the `z` term.
///
/// Rescaling `z` scales every gradient by the same constant, so ratios of
/// gradient components do not depend on the choice. The `δ/2` shift always
/// keeps `2π𝐢`, otherwise parity would not be preserved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// `2π𝐢 vᵀz`
    #[default]
    TwoPiI,
    /// `π𝐢 vᵀz`
    PiI,
}

impl Convention {
    fn z_factor(self) -> f64 {
        match self {
            Convention::TwoPiI => 2.0 * std::f64::consts::PI,
            Convention::PiI => std::f64::consts::PI,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaOptions {
    pub tol: f64,
    pub max_radius: u32,
    pub convention: Convention,
}

impl Default for ThetaOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_radius: MAX_RADIUS,
            convention: Convention::TwoPiI,
        }
    }
}

/// Lattice truncation: all `v ∈ Z^g + ε/2` with `‖v‖ ≤ radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Truncation {
    pub radius: u32,
    /// Upper bound on the omitted part of each sum (values and gradients).
    pub tail_bound: f64,
}

fn check_tau(tau: &RiemannMatrix) -> Result<()> {
    if tau.genus > MAX_THETA_GENUS {
        return Err(Error::InvalidParameter(format!(
            "theta evaluation supports genus up to {MAX_THETA_GENUS}"
        )));
    }
    if !(tau.min_imag_eig > 0.0) {
        return Err(Error::Domain(format!(
            "Im τ is not positive definite (smallest eigenvalue {:.3e})",
            tau.min_imag_eig
        )));
    }
    Ok(())
}

/// Chooses the radius from a Gaussian bound on the terms outside the ball.
///
/// With `λ` the smallest eigenvalue of `Im τ` and `y = ‖Im z‖`, a term and
/// its `z`-gradient are bounded by `h(r) = (1 + c r) exp(−πλr² + c r y)` at
/// `r = ‖v‖`, and at most `(2k+3)^g` points of a shifted lattice lie in the
/// shell `k < r ≤ k + 1`.
pub fn truncation(
    genus: usize,
    min_imag_eig: f64,
    imag_z_norm: f64,
    opts: &ThetaOptions,
) -> Result<Truncation> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(
            "theta tolerance must be positive".into(),
        ));
    }
    if !(min_imag_eig > 0.0) {
        return Err(Error::Domain("Im τ is not positive definite".into()));
    }
    let lam = min_imag_eig;
    let c = opts.convention.z_factor().max(2.0 * std::f64::consts::PI);
    let y = imag_z_norm;
    let h = |r: f64| (1.0 + c * r) * (-std::f64::consts::PI * lam * r * r + c * r * y).exp();
    // h is decreasing beyond this point
    let peak = (y + 1.0) / lam;
    let tail = |radius: u32| -> f64 {
        let mut sum = 0.0;
        let mut k = radius as f64;
        loop {
            let term = (2.0 * k + 3.0).powi(genus as i32) * h(k);
            sum += term;
            if term <= sum * 1e-17 || term == 0.0 {
                break;
            }
            k += 1.0;
        }
        sum
    };
    let start = peak.ceil().max(1.0) as u32;
    for radius in start..=opts.max_radius {
        let t = tail(radius);
        if t < opts.tol {
            return Ok(Truncation {
                radius,
                tail_bound: t,
            });
        }
    }
    // report how far the sum would have to go
    let mut needed = opts.max_radius.max(start);
    while tail(needed) >= opts.tol && needed < 1_000_000 {
        needed = needed.saturating_mul(2);
    }
    Err(Error::PrecisionUnreachable {
        radius: needed as usize,
        cap: opts.max_radius as usize,
    })
}

/// Calls `f(m)` for every `m ∈ Z^g` with `‖m/2‖ ≤ radius`.
fn for_each_half_lattice_point(g: usize, radius: u32, mut f: impl FnMut(&[i64])) -> Result<()> {
    let bound = 2 * radius as i64 + 1;
    let points = ((2 * bound + 1) as f64).powi(g as i32);
    if points > MAX_LATTICE_POINTS {
        return Err(Error::ResourceLimit {
            estimated: points as u64,
            cap: MAX_LATTICE_POINTS as u64,
        });
    }
    let r2 = 4 * (radius as i64) * (radius as i64);
    let mut m = vec![-bound; g];
    loop {
        if m.iter().map(|x| x * x).sum::<i64>() <= r2 {
            f(&m);
        }
        let mut i = 0;
        loop {
            if i == g {
                return Ok(());
            }
            if m[i] < bound {
                m[i] += 1;
                break;
            }
            m[i] = -bound;
            i += 1;
        }
    }
}

/// `π𝐢 vᵀτv` for the symmetric part of τ.
fn quadratic(tau: &CMatrix, v: &[f64]) -> Complex64 {
    let g = v.len();
    let mut s = Complex64::default();
    for a in 0..g {
        for b in 0..g {
            s += 0.5 * (tau[a][b] + tau[b][a]) * (v[a] * v[b]);
        }
    }
    Complex64::new(0.0, std::f64::consts::PI) * s
}

fn dot_bits(v: &[f64], bits: &[u8]) -> f64 {
    v.iter().zip(bits).map(|(x, &b)| x * b as f64).sum()
}

/// `θ[ε;δ](z|τ)` under the standard convention.
pub fn theta(
    z: &[Complex64],
    tau: &RiemannMatrix,
    ch: &ThetaCharacteristic,
    tol: f64,
) -> Result<Complex64> {
    let opts = ThetaOptions {
        tol,
        ..ThetaOptions::default()
    };
    theta_with(z, tau, ch, &opts).map(|(v, _)| v)
}

/// [`theta`] with explicit options, also returning the truncation.
pub fn theta_with(
    z: &[Complex64],
    tau: &RiemannMatrix,
    ch: &ThetaCharacteristic,
    opts: &ThetaOptions,
) -> Result<(Complex64, Truncation)> {
    check_tau(tau)?;
    let g = tau.genus;
    if z.len() != g || ch.genus() != g {
        return Err(Error::InvalidParameter(format!(
            "z and the characteristic must have length {g}"
        )));
    }
    let y = z.iter().map(|w| w.im * w.im).sum::<f64>().sqrt();
    let trunc = truncation(g, tau.min_imag_eig, y, opts)?;
    let c = opts.convention.z_factor();
    let mut sum = Complex64::default();
    let mut v = vec![0.0; g];
    for_each_half_lattice_point(g, trunc.radius, |m| {
        if m.iter()
            .zip(&ch.eps)
            .any(|(x, &e)| x.rem_euclid(2) != e as i64)
        {
            return;
        }
        for (vi, &mi) in v.iter_mut().zip(m) {
            *vi = mi as f64 / 2.0;
        }
        let vz: Complex64 = v.iter().zip(z).map(|(a, b)| a * b).sum();
        let phase = std::f64::consts::PI * dot_bits(&v, &ch.delta);
        let arg =
            quadratic(&tau.tau, &v) + Complex64::new(0.0, c) * vz + Complex64::new(0.0, phase);
        sum += arg.exp();
    })?;
    Ok((sum, trunc))
}

/// Gradient `(∂θ/∂z_1, …, ∂θ/∂z_g)` at `z = 0`.
pub fn theta_grad0(
    tau: &RiemannMatrix,
    ch: &ThetaCharacteristic,
    tol: f64,
) -> Result<Vec<Complex64>> {
    let opts = ThetaOptions {
        tol,
        ..ThetaOptions::default()
    };
    let report = theta_constants(tau, &opts)?;
    Ok(report
        .constants
        .into_iter()
        .find(|c| &c.characteristic == ch)
        .map(|c| c.gradient)
        .ok_or_else(|| Error::InvalidParameter(format!("characteristic {ch} has wrong length")))?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaConstant {
    pub characteristic: ThetaCharacteristic,
    pub odd: bool,
    /// `θ[ε;δ](0|τ)`
    pub value: Complex64,
    /// `∇θ[ε;δ](0|τ)`
    pub gradient: Vec<Complex64>,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaReport {
    pub genus: usize,
    pub convention: Convention,
    pub truncation: Truncation,
    /// In the order of [`ThetaCharacteristic::all`].
    pub constants: Vec<ThetaConstant>,
}

/// Values and gradients at the origin for all `4^g` characteristics, from a
/// single pass over the half-integer lattice.
pub fn theta_constants(tau: &RiemannMatrix, opts: &ThetaOptions) -> Result<ThetaReport> {
    check_tau(tau)?;
    let g = tau.genus;
    let trunc = truncation(g, tau.min_imag_eig, 0.0, opts)?;
    let n = 1usize << g;
    let c = opts.convention.z_factor();
    let mut values = vec![Complex64::default(); n * n];
    let mut grads = vec![vec![Complex64::default(); g]; n * n];
    let deltas: Vec<Vec<u8>> = (0..n)
        .map(|d| (0..g).map(|i| ((d >> (g - 1 - i)) & 1) as u8).collect())
        .collect();
    let mut v = vec![0.0; g];
    for_each_half_lattice_point(g, trunc.radius, |m| {
        let e = m
            .iter()
            .fold(0usize, |acc, x| (acc << 1) | x.rem_euclid(2) as usize);
        for (vi, &mi) in v.iter_mut().zip(m) {
            *vi = mi as f64 / 2.0;
        }
        let base = quadratic(&tau.tau, &v).exp();
        for (d, bits) in deltas.iter().enumerate() {
            let phase = std::f64::consts::PI * dot_bits(&v, bits);
            let term = base * Complex64::from_polar(1.0, phase);
            let k = e * n + d;
            values[k] += term;
            for (gi, vi) in grads[k].iter_mut().zip(&v) {
                *gi += term * Complex64::new(0.0, c * vi);
            }
        }
    })?;
    let constants = ThetaCharacteristic::all(g)
        .into_iter()
        .map(|ch| {
            let (e, d) = ch.index();
            let k = e * n + d;
            ThetaConstant {
                odd: ch.is_odd(),
                characteristic: ch,
                value: values[k],
                gradient: grads[k].clone(),
                magnitude: values[k].norm(),
            }
        })
        .collect();
    Ok(ThetaReport {
        genus: g,
        convention: opts.convention,
        truncation: trunc,
        constants,
    })
}

/// A branch point `−θ₁/θ₂` of an odd characteristic; `None` is the point at
/// infinity (`θ₂` numerically zero).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchPoint {
    pub characteristic: ThetaCharacteristic,
    pub value: Option<Complex64>,
}

/// `|θ₂|` below this fraction of `|∇θ|` is treated as zero.
const INFINITY_REL: f64 = 1e-12;

pub fn branch_points_g2_with(tau: &RiemannMatrix, opts: &ThetaOptions) -> Result<Vec<BranchPoint>> {
    if tau.genus != 2 {
        return Err(Error::InvalidParameter(format!(
            "branch points need genus 2, got {}",
            tau.genus
        )));
    }
    let report = theta_constants(tau, opts)?;
    Ok(report
        .constants
        .into_iter()
        .filter(|c| c.odd)
        .map(|c| {
            let (t1, t2) = (c.gradient[0], c.gradient[1]);
            let scale = t1.norm().max(t2.norm());
            let value = (t2.norm() > INFINITY_REL * scale).then(|| -t1 / t2);
            BranchPoint {
                characteristic: c.characteristic,
                value,
            }
        })
        .collect())
}

/// The six branch points of a genus-2 Riemann matrix normalized with
/// identity A-periods, one per odd characteristic.
pub fn branch_points_g2(tau: &RiemannMatrix) -> Result<Vec<BranchPoint>> {
    branch_points_g2_with(tau, &ThetaOptions::default())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VanishingReport {
    pub count: usize,
    pub rel_threshold: f64,
    pub median: f64,
    /// Even characteristics with their `|θ(0)|`, smallest first.
    pub magnitudes: Vec<(ThetaCharacteristic, f64)>,
    pub vanishing: Vec<ThetaCharacteristic>,
}

/// Counts even theta constants below `rel_threshold` times the median even
/// magnitude.
pub fn vanishing_even_count(tau: &RiemannMatrix, rel_threshold: f64) -> Result<VanishingReport> {
    vanishing_from(
        &theta_constants(tau, &ThetaOptions::default())?,
        rel_threshold,
    )
}

pub fn vanishing_from(report: &ThetaReport, rel_threshold: f64) -> Result<VanishingReport> {
    if !(rel_threshold > 0.0 && rel_threshold < 1.0) {
        return Err(Error::InvalidParameter(
            "rel_threshold must lie in (0, 1)".into(),
        ));
    }
    let mut magnitudes: Vec<_> = report
        .constants
        .iter()
        .filter(|c| !c.odd)
        .map(|c| (c.characteristic.clone(), c.magnitude))
        .collect();
    magnitudes.sort_by(|a, b| a.1.total_cmp(&b.1));
    let k = magnitudes.len();
    let median = if k % 2 == 1 {
        magnitudes[k / 2].1
    } else {
        0.5 * (magnitudes[k / 2 - 1].1 + magnitudes[k / 2].1)
    };
    let vanishing: Vec<_> = magnitudes
        .iter()
        .filter(|(_, m)| *m < rel_threshold * median)
        .map(|(c, _)| c.clone())
        .collect();
    Ok(VanishingReport {
        count: vanishing.len(),
        rel_threshold,
        median,
        magnitudes,
        vanishing,
    })
}

/// Pairs of even characteristics whose theta constants agree to relative
/// tolerance `tol`.
pub fn even_constant_pairs(
    tau: &RiemannMatrix,
    tol: f64,
) -> Result<Vec<(ThetaCharacteristic, ThetaCharacteristic)>> {
    if tau.genus != 2 {
        return Err(Error::InvalidParameter(format!(
            "constant pairing needs genus 2, got {}",
            tau.genus
        )));
    }
    Ok(pairs_from(
        &theta_constants(tau, &ThetaOptions::default())?,
        tol,
    ))
}

pub fn pairs_from(
    report: &ThetaReport,
    tol: f64,
) -> Vec<(ThetaCharacteristic, ThetaCharacteristic)> {
    let even: Vec<_> = report.constants.iter().filter(|c| !c.odd).collect();
    let mut out = Vec::new();
    for (i, a) in even.iter().enumerate() {
        for b in &even[i + 1..] {
            let scale = a.magnitude.max(b.magnitude);
            if (a.value - b.value).norm() < tol * scale {
                out.push((a.characteristic.clone(), b.characteristic.clone()));
            }
        }
    }
    out
}

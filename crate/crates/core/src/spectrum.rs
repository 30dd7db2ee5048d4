//! Even-sector spectrum of H' = H + kδ(x) and the overlaps
//! Λ_{m,n} = ⟨ψ'_m|ψ_n⟩ with the unperturbed eigenstates.
//!
//! Both backends share one representation. Every perturbed eigenvector of a
//! rank-one update of a diagonal operator has components proportional to
//! ψ_n(0)/(E'_m - E_n), so a row is stored as its energy and a scale factor:
//!
//! Λ_{m,n} = scale_m · ψ_n(0) / (E'_m - E_n).
//!
//! Energies are stored as an offset from the nearest unperturbed pole so that
//! the denominators keep full relative precision. Odd levels never couple to
//! the defect and are not represented.

use crate::basis::{energy_unperturbed, psi_at_origin, psi_at_origin_sq};
use crate::special::{ln_gamma, Neumaier};
use crate::{convention_hash, Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

/// Strength of the delta defect: a positive real or the analytic k → +∞ limit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DefectStrength {
    Finite(f64),
    Infinite,
}

impl DefectStrength {
    pub fn finite(self) -> Option<f64> {
        match self {
            DefectStrength::Finite(k) => Some(k),
            DefectStrength::Infinite => None,
        }
    }

    pub fn validate(self) -> Result<Self> {
        match self {
            DefectStrength::Finite(k) if !(k > 0.0 && k.is_finite()) => Err(Error::InvalidParameter(
                format!("defect strength must be positive and finite (or \"inf\"), got {k}"),
            )),
            other => Ok(other),
        }
    }
}

impl fmt::Display for DefectStrength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DefectStrength::Finite(k) => write!(f, "{k}"),
            DefectStrength::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for DefectStrength {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if matches!(s, "inf" | "+inf" | "infinity" | "Inf") {
            return Ok(DefectStrength::Infinite);
        }
        s.parse::<f64>()
            .map(DefectStrength::Finite)
            .map_err(|e| Error::Parse { what: "defect strength", detail: format!("{s:?}: {e}") })
    }
}

impl Serialize for DefectStrength {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            DefectStrength::Finite(k) => s.serialize_f64(*k),
            DefectStrength::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for DefectStrength {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(k) => Ok(DefectStrength::Finite(k)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    StrongCoupling,
    FiniteK,
}

/// Post-quench even-sector spectrum truncated to `cutoff` levels.
///
/// Row `r` is the perturbed level m = 2r. For the finite-k backend the basis
/// is the `cutoff` lowest even oscillator levels, so the rows form an exactly
/// orthogonal matrix within that basis; the top row carries the truncation
/// remainder and sits above E_{2(M-1)} by up to k Σ ψ_a(0)^2.
#[derive(Clone, Debug)]
pub struct PerturbedSpectrum {
    k: DefectStrength,
    backend: Backend,
    /// even-level index j of the pole each energy is measured from
    origin: Vec<u32>,
    /// E'_r - E_{2 origin_r}
    shift: Vec<f64>,
    scale: Vec<f64>,
    energies: Vec<f64>,
}

impl PerturbedSpectrum {
    fn assemble(k: DefectStrength, backend: Backend, origin: Vec<u32>, shift: Vec<f64>, scale: Vec<f64>) -> Self {
        let energies = origin
            .iter()
            .zip(&shift)
            .map(|(&o, &s)| energy_unperturbed(2 * o as u64) + s)
            .collect();
        Self { k, backend, origin, shift, scale, energies }
    }

    pub fn k(&self) -> DefectStrength {
        self.k
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    /// Number of retained even levels M.
    pub fn cutoff(&self) -> usize {
        self.energies.len()
    }

    /// Highest unperturbed level (exclusive) the overlaps are defined for.
    pub fn level_limit(&self) -> u64 {
        match self.backend {
            Backend::FiniteK => 2 * self.cutoff() as u64,
            Backend::StrongCoupling => u64::MAX,
        }
    }

    /// E'_m for m = 0, 2, 4, … in ascending order.
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn energy(&self, row: usize) -> f64 {
        self.energies[row]
    }

    /// E'_{2r} - E_n computed without cancellation.
    #[inline]
    pub fn gap(&self, row: usize, n: u64) -> f64 {
        (2 * self.origin[row] as i64 - n as i64) as f64 + self.shift[row]
    }

    /// Λ_{2r,n} given a precomputed ψ_n(0).
    #[inline]
    pub fn overlap_with_origin_value(&self, row: usize, n: u64, psi_n: f64) -> f64 {
        self.scale[row] * psi_n / self.gap(row, n)
    }

    /// Λ_{2r,n} = ⟨ψ'_{2r}|ψ_n⟩. Zero for odd n.
    pub fn overlap(&self, row: usize, n: u64) -> f64 {
        self.overlap_with_origin_value(row, n, psi_at_origin(n))
    }

    /// Dense block Λ_{2r, 2c} for r < rows, c < cols, row-major.
    pub fn overlap_block(&self, rows: usize, cols: usize) -> Vec<f64> {
        let psi: Vec<f64> = (0..cols as u64).map(|c| psi_at_origin(2 * c)).collect();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for (c, &p) in psi.iter().enumerate() {
                out.push(self.overlap_with_origin_value(r, 2 * c as u64, p));
            }
        }
        out
    }

    fn cache_header(&self) -> CacheHeader {
        CacheHeader {
            format: CACHE_FORMAT,
            convention: convention_hash(),
            backend: self.backend,
            k: self.k,
            cutoff: self.cutoff(),
        }
    }

    /// Serialize to the binary cache format: a JSON header line followed by
    /// little-endian (u32 origin, f64 shift, f64 scale) records.
    pub fn write_cache<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_string(&self.cache_header())?;
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(header.as_bytes())?;
        for r in 0..self.cutoff() {
            w.write_all(&self.origin[r].to_le_bytes())?;
            w.write_all(&self.shift[r].to_le_bytes())?;
            w.write_all(&self.scale[r].to_le_bytes())?;
        }
        Ok(())
    }

    /// Read a cache written by [`write_cache`](Self::write_cache). Returns
    /// `Ok(None)` when the file was written under a different convention or
    /// format version.
    pub fn read_cache<R: Read>(mut r: R) -> Result<Option<Self>> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Ok(None);
        }
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut header)?;
        let header: CacheHeader = serde_json::from_slice(&header)?;
        if header.format != CACHE_FORMAT || header.convention != convention_hash() {
            return Ok(None);
        }
        let m = header.cutoff;
        let (mut origin, mut shift, mut scale) = (Vec::with_capacity(m), Vec::with_capacity(m), Vec::with_capacity(m));
        let mut buf4 = [0u8; 4];
        let mut buf8 = [0u8; 8];
        for _ in 0..m {
            r.read_exact(&mut buf4)?;
            origin.push(u32::from_le_bytes(buf4));
            r.read_exact(&mut buf8)?;
            shift.push(f64::from_le_bytes(buf8));
            r.read_exact(&mut buf8)?;
            scale.push(f64::from_le_bytes(buf8));
        }
        Ok(Some(Self::assemble(header.k, header.backend, origin, shift, scale)))
    }

    /// File name under which this spectrum is cached.
    pub fn cache_file_name(k: DefectStrength, cutoff: usize) -> String {
        let backend = match k {
            DefectStrength::Infinite => "strong",
            DefectStrength::Finite(_) => "finite",
        };
        let ktag = match k {
            DefectStrength::Infinite => "inf".to_string(),
            DefectStrength::Finite(k) => format!("{:016x}", k.to_bits()),
        };
        format!("spectrum-{backend}-k{ktag}-M{cutoff}-{}.bin", convention_hash())
    }
}

const CACHE_MAGIC: &[u8; 4] = b"QSPC";
const CACHE_FORMAT: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    format: u32,
    convention: String,
    backend: Backend,
    k: DefectStrength,
    cutoff: usize,
}

/// Load a spectrum from `dir` if a matching cache exists, otherwise build it
/// and store it atomically (temporary file, then rename).
pub fn cached_spectrum(dir: &Path, k: DefectStrength, cutoff: usize) -> Result<PerturbedSpectrum> {
    let path = dir.join(PerturbedSpectrum::cache_file_name(k, cutoff));
    if let Ok(file) = std::fs::File::open(&path) {
        if let Some(s) = PerturbedSpectrum::read_cache(std::io::BufReader::new(file))? {
            if s.k == k && s.cutoff() == cutoff {
                return Ok(s);
            }
        }
    }
    let spectrum = build_spectrum(k, cutoff)?;
    std::fs::create_dir_all(dir)?;
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut w = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        spectrum.write_cache(&mut w)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, &path)?;
    Ok(spectrum)
}

/// Dispatch on the defect strength: +∞ selects the analytic backend.
pub fn build_spectrum(k: DefectStrength, cutoff: usize) -> Result<PerturbedSpectrum> {
    match k.validate()? {
        DefectStrength::Infinite => build_strong_spectrum(cutoff),
        DefectStrength::Finite(k) => build_finite_spectrum(k, cutoff),
    }
}

fn check_even(m: u64) -> Result<()> {
    if m % 2 == 1 {
        Err(Error::OddLevel(m))
    } else {
        Ok(())
    }
}

/// Λ_{m,0} at k → +∞ from its closed form in log-gamma arithmetic:
/// (-1)^{m/2} √(2^{m+1}/(m+1)!) Γ((m+1)/2)/π.
pub fn strong_overlap_ground(m: u64) -> Result<f64> {
    check_even(m)?;
    let mf = m as f64;
    let ln_mag = 0.5 * ((mf + 1.0) * 2f64.ln() - ln_gamma(mf + 2.0)) + ln_gamma((mf + 1.0) / 2.0) - PI.ln();
    let sign = if (m / 2) % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign * ln_mag.exp())
}

/// Λ_{m,n} at k → +∞: the ground-state column followed by the ratio
/// recursion Λ_{m,n}/Λ_{m,n-2} = -√((n-1)/n) (m-n+3)/(m-n+1).
pub fn strong_overlap(m: u64, n: u64) -> Result<f64> {
    check_even(n)?;
    let mut value = strong_overlap_ground(m)?;
    let mi = m as i64;
    for step in (2..=n).step_by(2) {
        let s = step as i64;
        let ratio = -(((s - 1) as f64) / s as f64).sqrt() * (mi - s + 3) as f64 / (mi - s + 1) as f64;
        value *= ratio;
    }
    Ok(value)
}

/// Strong-coupling spectrum with `cutoff` rows: E'_m = m + 3/2 exactly.
pub fn build_strong_spectrum(cutoff: usize) -> Result<PerturbedSpectrum> {
    if cutoff == 0 {
        return Err(Error::InvalidParameter("cutoff must be at least 1".into()));
    }
    let psi0 = psi_at_origin(0);
    let scale = (0..cutoff as u64)
        .into_par_iter()
        .map(|r| {
            let m = 2 * r;
            // Λ_{m,0} = scale ψ_0(0)/(m+1)
            strong_overlap_ground(m).map(|l| l * (m as f64 + 1.0) / psi0)
        })
        .collect::<Result<Vec<_>>>()?;
    let origin = (0..cutoff as u32).collect();
    let shift = vec![1.0; cutoff];
    Ok(PerturbedSpectrum::assemble(DefectStrength::Infinite, Backend::StrongCoupling, origin, shift, scale))
}

/// Secular function pieces evaluated at E = d_origin + tau, split into the
/// poles at or below `split` and those above it.
struct SecularEval {
    f: f64,
    low: f64,
    low_d: f64,
    high: f64,
    high_d: f64,
}

fn secular_eval(weights: &[f64], origin: usize, split: usize, tau: f64) -> SecularEval {
    let (mut low, mut low_d, mut high, mut high_d) = (Neumaier::default(), 0.0, Neumaier::default(), 0.0);
    for (a, &w) in weights.iter().enumerate() {
        let delta = 2.0 * (a as f64 - origin as f64) - tau;
        let term = w / delta;
        if a <= split {
            low.add(term);
            low_d += term / delta;
        } else {
            high.add(term);
            high_d += term / delta;
        }
    }
    let (low, high) = (low.value(), high.value());
    SecularEval { f: 1.0 + low + high, low, low_d, high, high_d }
}

/// Root y ∈ (0, width) of W - B/y + D/(width - y) = 0 with B, D ≥ 0.
fn two_pole_root(w: f64, near: f64, far: f64, width: f64) -> f64 {
    let b = w * width + near + far;
    let disc = (b * b - 4.0 * w * near * width).max(0.0);
    if b > 0.0 {
        2.0 * near * width / (b + disc.sqrt())
    } else {
        (b - disc.sqrt()) / (2.0 * w)
    }
}

const MAX_SECULAR_ITERS: usize = 200;

/// Root of 1 + Σ_a w_a/(d_a - E) = 0 in (d_j, d_{j+1}), returned as
/// (pole index the offset is measured from, offset). `weights` are k ψ_a(0)^2.
fn interior_root(weights: &[f64], j: usize) -> (usize, f64) {
    let mid = secular_eval(weights, j, j, 1.0);
    if mid.f == 0.0 {
        return (j, 1.0);
    }
    // f increases from -∞ to +∞ across the interval; work from the nearer pole
    let left = mid.f > 0.0;
    let origin = if left { j } else { j + 1 };
    let (mut lo, mut hi) = if left { (0.0, 1.0) } else { (-1.0, 0.0) };
    let mut x = if left { 0.5 } else { -0.5 };
    for _ in 0..MAX_SECULAR_ITERS {
        let e = secular_eval(weights, origin, j, x);
        if e.f == 0.0 {
            return (origin, x);
        }
        if e.f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        // poles of the two partial sums, relative to the origin
        let (p_low, p_high) = if left { (0.0, 2.0) } else { (-2.0, 0.0) };
        let b = e.low_d * (p_low - x).powi(2);
        let d = e.high_d * (p_high - x).powi(2);
        let w = 1.0 + (e.low - b / (p_low - x)) + (e.high - d / (p_high - x));
        let mut next = if left {
            p_low + two_pole_root(w, b, d, 2.0)
        } else {
            p_high - two_pole_root(-w, d, b, 2.0)
        };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let done = (next - x).abs() <= 4.0 * f64::EPSILON * next.abs().max(f64::MIN_POSITIVE);
        x = next;
        if done || hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
            break;
        }
    }
    (origin, x)
}

/// Largest root, above the last pole d_{M-1}.
fn top_root(weights: &[f64]) -> (usize, f64) {
    let j = weights.len() - 1;
    let total: f64 = weights.iter().sum();
    let (mut lo, mut hi) = (0.0, total);
    let mut x = 0.5 * total;
    for _ in 0..MAX_SECULAR_ITERS {
        let e = secular_eval(weights, j, j, x);
        if e.f == 0.0 {
            break;
        }
        if e.f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let b = e.low_d * x * x;
        let a = e.low + b / x;
        let mut next = if 1.0 + a > 0.0 { b / (1.0 + a) } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let done = (next - x).abs() <= 4.0 * f64::EPSILON * next.abs();
        x = next;
        if done || hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    (j, x)
}

/// Finite-k spectrum from the rank-one secular equation
/// 1 + k Σ_a ψ_a(0)^2/(E_a - E) = 0 over the `cutoff` lowest even levels.
pub fn build_finite_spectrum(k: f64, cutoff: usize) -> Result<PerturbedSpectrum> {
    DefectStrength::Finite(k).validate()?;
    if cutoff < 2 {
        return Err(Error::InvalidParameter("finite-k cutoff must be at least 2".into()));
    }
    let weights: Vec<f64> = (0..cutoff as u64).map(|a| k * psi_at_origin_sq(2 * a)).collect();
    let roots: Vec<(usize, f64)> = (0..cutoff)
        .into_par_iter()
        .map(|j| if j + 1 < cutoff { interior_root(&weights, j) } else { top_root(&weights) })
        .collect();
    let psi_sq: Vec<f64> = weights.iter().map(|w| w / k).collect();
    let scale: Vec<f64> = roots
        .par_iter()
        .enumerate()
        .map(|(r, &(o, tau))| {
            let norm_sq: Neumaier = psi_sq
                .iter()
                .enumerate()
                .map(|(a, &p)| {
                    let gap = 2.0 * (o as f64 - a as f64) + tau;
                    p / (gap * gap)
                })
                .collect();
            // Λ_{m,m} > 0: ψ_m(0) carries (-1)^{m/2} and E'_m > E_m
            let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
            sign / norm_sq.value().sqrt()
        })
        .collect();
    let origin = roots.iter().map(|&(o, _)| o as u32).collect();
    let shift = roots.iter().map(|&(_, t)| t).collect();
    let spectrum = PerturbedSpectrum::assemble(DefectStrength::Finite(k), Backend::FiniteK, origin, shift, scale);
    if spectrum.energies.iter().any(|e| !e.is_finite()) {
        return Err(Error::Convergence(format!("secular solve produced non-finite energies at k={k}, M={cutoff}")));
    }
    Ok(spectrum)
}

/// Truncation diagnostics comparing cutoffs M < M2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub cutoff: usize,
    pub reference_cutoff: usize,
    /// number of low rows compared (M/2)
    pub levels: usize,
    pub energy_deviation: f64,
    pub overlap_deviation: f64,
}

/// Max deviation of the lowest M/2 energies and overlap rows between cutoffs
/// M and M2. Overlap rows are compared on the lowest M/2 unperturbed levels.
pub fn convergence_probe(k: DefectStrength, cutoff: usize, reference: usize) -> Result<ProbeReport> {
    if reference <= cutoff {
        return Err(Error::InvalidParameter(format!("reference cutoff {reference} must exceed {cutoff}")));
    }
    let levels = cutoff / 2;
    let zero = ProbeReport { cutoff, reference_cutoff: reference, levels, energy_deviation: 0.0, overlap_deviation: 0.0 };
    let k = match k {
        DefectStrength::Finite(v) if v == 0.0 => return Ok(zero),
        other => other.validate()?,
    };
    let a = build_spectrum(k, cutoff)?;
    let b = build_spectrum(k, reference)?;
    Ok(probe_pair(&a, &b, levels))
}

/// Deviation between two already-built spectra over their lowest `levels` rows.
pub fn probe_pair(a: &PerturbedSpectrum, b: &PerturbedSpectrum, levels: usize) -> ProbeReport {
    let levels = levels.min(a.cutoff()).min(b.cutoff());
    let energy_deviation = match (a.backend, b.backend) {
        // analytic energies do not depend on the cutoff
        (Backend::StrongCoupling, Backend::StrongCoupling) => 0.0,
        _ => (0..levels).map(|r| (a.energy(r) - b.energy(r)).abs()).fold(0.0, f64::max),
    };
    let psi: Vec<f64> = (0..levels as u64).map(|c| psi_at_origin(2 * c)).collect();
    let overlap_deviation = (0..levels)
        .into_par_iter()
        .map(|r| {
            psi.iter()
                .enumerate()
                .map(|(c, &p)| {
                    let n = 2 * c as u64;
                    (a.overlap_with_origin_value(r, n, p) - b.overlap_with_origin_value(r, n, p)).abs()
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    ProbeReport { cutoff: a.cutoff(), reference_cutoff: b.cutoff(), levels, energy_deviation, overlap_deviation }
}

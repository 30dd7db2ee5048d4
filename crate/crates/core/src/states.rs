//! Initial states: single-particle and two-fermion, pure and diagonal.
//!
//! Two-fermion states are antisymmetrized pairs that share one occupied
//! orbital, |a⟩ ∧ Σ_i α_i |b_i⟩ with b_i > a, so a pure two-fermion state is a
//! single Slater determinant. The pair (a, b_i) is stored through its partner
//! level b_i; the shared orbital is [`InitialState::core`].

use crate::basis::psi_at_origin;
use crate::special::{ln_factorial, Neumaier};
use crate::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Tolerance on the norm of a supplied state.
pub const NORM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    PureSingle,
    DiagonalSingle,
    PureTwoFermion,
    DiagonalTwoFermion,
}

impl Flavor {
    pub fn is_pure(self) -> bool {
        matches!(self, Flavor::PureSingle | Flavor::PureTwoFermion)
    }

    pub fn is_two_fermion(self) -> bool {
        matches!(self, Flavor::PureTwoFermion | Flavor::DiagonalTwoFermion)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitialState {
    flavor: Flavor,
    /// Occupied even levels (single particle) or partner levels b_i (two fermions).
    levels: Vec<u64>,
    /// Pure flavors only.
    amplitudes: Vec<Complex64>,
    /// Diagonal flavors only.
    weights: Vec<f64>,
    /// Shared orbital of two-fermion states.
    core: Option<u64>,
    label: String,
    /// Norm squared of the truncated expansion before it was rescaled to one.
    renormalization: f64,
}

impl InitialState {
    /// Pure single-particle state from explicit (level, amplitude) pairs.
    pub fn pure(levels: Vec<u64>, amplitudes: Vec<Complex64>, label: impl Into<String>) -> Result<Self> {
        let s = Self {
            flavor: Flavor::PureSingle,
            levels,
            amplitudes,
            weights: Vec::new(),
            core: None,
            label: label.into(),
            renormalization: 1.0,
        };
        s.validate()?;
        Ok(s)
    }

    /// Pure two-fermion state |core⟩ ∧ Σ α_i |levels_i⟩.
    pub fn pure_two_fermion(
        core: u64,
        levels: Vec<u64>,
        amplitudes: Vec<Complex64>,
        label: impl Into<String>,
    ) -> Result<Self> {
        let s = Self {
            flavor: Flavor::PureTwoFermion,
            levels,
            amplitudes,
            weights: Vec::new(),
            core: Some(core),
            label: label.into(),
            renormalization: 1.0,
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        let len = if self.flavor.is_pure() { self.amplitudes.len() } else { self.weights.len() };
        if len != self.levels.len() || self.levels.is_empty() {
            return Err(Error::InvalidParameter("state needs one coefficient per level and at least one level".into()));
        }
        for (i, &n) in self.levels.iter().enumerate() {
            if n % 2 == 1 {
                return Err(Error::OddLevel(n));
            }
            if self.levels[..i].contains(&n) {
                return Err(Error::InvalidParameter(format!("level {n} listed twice")));
            }
        }
        if let Some(a) = self.core {
            if a % 2 == 1 {
                return Err(Error::OddLevel(a));
            }
            if let Some(&b) = self.levels.iter().find(|&&b| b <= a) {
                return Err(Error::InvalidParameter(format!("pair ({a}, {b}) is not strictly ordered")));
            }
        }
        let norm: f64 = if self.flavor.is_pure() {
            self.amplitudes.iter().map(|a| a.norm_sqr()).collect::<Neumaier>().value()
        } else {
            if self.weights.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::InvalidParameter("diagonal weights must be nonnegative".into()));
            }
            self.weights.iter().copied().collect::<Neumaier>().value()
        };
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidParameter(format!("state norm is {norm}, expected 1")));
        }
        Ok(())
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn levels(&self) -> &[u64] {
        &self.levels
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn core(&self) -> Option<u64> {
        self.core
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn renormalization(&self) -> f64 {
        self.renormalization
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Highest oscillator level the state touches.
    pub fn max_level(&self) -> u64 {
        let top = self.levels.iter().copied().max().unwrap_or(0);
        top.max(self.core.unwrap_or(0))
    }

    /// Ordered pairs (a, b) of a two-fermion state, in storage order.
    pub fn pairs(&self) -> Option<Vec<(u64, u64)>> {
        self.core.map(|a| self.levels.iter().map(|&b| (a, b)).collect())
    }

    /// Amplitude on level `n`, zero if absent. Pure flavors only.
    pub fn amplitude(&self, n: u64) -> Complex64 {
        self.levels
            .iter()
            .position(|&l| l == n)
            .and_then(|i| self.amplitudes.get(i).copied())
            .unwrap_or_default()
    }

    /// Weight on level `n`, zero if absent. Diagonal flavors only.
    pub fn weight(&self, n: u64) -> f64 {
        self.levels
            .iter()
            .position(|&l| l == n)
            .and_then(|i| self.weights.get(i).copied())
            .unwrap_or(0.0)
    }

    /// Amplitude on the ordered pair (a, b); swapping the pair flips the sign.
    pub fn pair_amplitude(&self, a: u64, b: u64) -> Complex64 {
        match self.core {
            Some(c) if c == a => self.amplitude(b),
            Some(c) if c == b => -self.amplitude(a),
            _ => Complex64::default(),
        }
    }

    /// Σ_n α_n ψ_n(0) over the (partner) levels of a pure state.
    pub fn origin_amplitude(&self) -> Complex64 {
        let mut re = Neumaier::default();
        let mut im = Neumaier::default();
        for (&n, a) in self.levels.iter().zip(&self.amplitudes) {
            let p = psi_at_origin(n);
            re.add(a.re * p);
            im.add(a.im * p);
        }
        Complex64::new(re.value(), im.value())
    }
}

/// Equal superposition Σ_{j<N} (-1)^j |2j⟩/√N of the N lowest even levels.
pub fn equal_superposition(n: usize) -> Result<InitialState> {
    check_count(n)?;
    let amp = 1.0 / (n as f64).sqrt();
    let levels = (0..n as u64).map(|j| 2 * j).collect();
    let amplitudes = (0..n).map(|j| Complex64::new(alternating(j) * amp, 0.0)).collect();
    InitialState::pure(levels, amplitudes, format!("equal:N={n}"))
}

/// Diagonal state with p_n = |α_n|^2.
pub fn dephase(state: &InitialState) -> Result<InitialState> {
    let flavor = match state.flavor {
        Flavor::PureSingle => Flavor::DiagonalSingle,
        Flavor::PureTwoFermion => Flavor::DiagonalTwoFermion,
        _ => return Err(Error::InvalidParameter("state is already diagonal".into())),
    };
    let weights = state.amplitudes.iter().map(|a| a.norm_sqr()).collect();
    let label = if state.label.starts_with("diag-") { state.label.clone() } else { format!("diag-{}", state.label) };
    Ok(InitialState {
        flavor,
        levels: state.levels.clone(),
        amplitudes: Vec::new(),
        weights,
        core: state.core,
        label,
        renormalization: state.renormalization,
    })
}

/// cos(θ/2)|0⟩ + e^{iφ} sin(θ/2)|2⟩. Exactly vanishing components are dropped.
pub fn two_level(theta: f64, phi: f64) -> Result<InitialState> {
    if !theta.is_finite() || !phi.is_finite() {
        return Err(Error::InvalidParameter("theta and phi must be finite".into()));
    }
    let (s, c) = (0.5 * theta).sin_cos();
    let mut levels = Vec::new();
    let mut amplitudes = Vec::new();
    for (n, a) in [(0, Complex64::new(c, 0.0)), (2, Complex64::from_polar(s, phi))] {
        if a.norm_sqr() > 0.0 {
            levels.push(n);
            amplitudes.push(a);
        }
    }
    InitialState::pure(levels, amplitudes, format!("twolevel:theta={theta},phi={phi}"))
}

/// Even part of the coherent state, e^{-|ξ|^2/2} Σ (-1)^{n/2} ξ^n |n⟩/√(n!),
/// truncated to its N lowest even terms and renormalized.
pub fn coherent(xi: Complex64, n: usize) -> Result<InitialState> {
    check_count(n)?;
    if !xi.re.is_finite() || !xi.im.is_finite() {
        return Err(Error::InvalidParameter("xi must be finite".into()));
    }
    let r = xi.norm();
    let arg = xi.arg();
    let mut levels = Vec::with_capacity(n);
    let mut raw = Vec::with_capacity(n);
    for j in 0..n as u64 {
        let level = 2 * j;
        let modulus = if r == 0.0 {
            if level == 0 { 1.0 } else { 0.0 }
        } else {
            (level as f64 * r.ln() - 0.5 * ln_factorial(level) - 0.5 * r * r).exp()
        };
        levels.push(level);
        raw.push(Complex64::from_polar(alternating(j as usize) * modulus, level as f64 * arg));
    }
    let norm_sq = raw.iter().map(|a| a.norm_sqr()).collect::<Neumaier>().value();
    if norm_sq <= 0.0 || !norm_sq.is_finite() {
        return Err(Error::InvalidParameter(format!("coherent amplitude ξ={xi} underflows on the first {n} even levels")));
    }
    let scale = norm_sq.sqrt().recip();
    let keep: Vec<usize> = (0..n).filter(|&i| raw[i].norm_sqr() > 0.0).collect();
    let mut s = InitialState::pure(
        keep.iter().map(|&i| levels[i]).collect(),
        keep.iter().map(|&i| raw[i] * scale).collect(),
        format!("coherent:xi={},N={n}", format_complex(xi)),
    )?;
    s.renormalization = norm_sq;
    Ok(s)
}

/// |0⟩ ∧ Σ_{j=1..N} s_j |2j⟩/√N with s_j = (-1)^{j-1}, or s_j = 1 without the
/// phase. The alternating sign starts positive on the pair (0, 2).
pub fn two_fermion_superposition(n: usize, with_phase: bool) -> Result<InitialState> {
    check_count(n)?;
    let amp = 1.0 / (n as f64).sqrt();
    let levels = (1..=n as u64).map(|j| 2 * j).collect();
    let amplitudes = (1..=n)
        .map(|j| Complex64::new(if with_phase { alternating(j - 1) } else { 1.0 } * amp, 0.0))
        .collect();
    let label = if with_phase { format!("fermi2:N={n}") } else { format!("fermi2:N={n},phase=false") };
    InitialState::pure_two_fermion(0, levels, amplitudes, label)
}

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidParameter("N must be at least 1".into()))
    } else {
        Ok(())
    }
}

#[inline]
fn alternating(j: usize) -> f64 {
    if j % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn format_complex(z: Complex64) -> String {
    if z.im < 0.0 || (z.im == 0.0 && z.im.is_sign_negative()) {
        format!("{}-{}i", z.re, -z.im)
    } else {
        format!("{}+{}i", z.re, z.im)
    }
}

fn parse_err(detail: impl Into<String>) -> Error {
    Error::Parse { what: "state spec", detail: detail.into() }
}

/// A parsed state spec such as `equal:N=10` or `diag-coherent:xi=1.5+0i,N=40`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpec {
    pub family: Family,
    pub diagonal: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    Equal { n: usize },
    TwoLevel { theta: f64, phi: f64 },
    Coherent { xi: Complex64, n: usize },
    Fermi2 { n: usize, phase: bool },
}

impl StateSpec {
    pub fn build(&self) -> Result<InitialState> {
        let pure = match self.family {
            Family::Equal { n } => equal_superposition(n)?,
            Family::TwoLevel { theta, phi } => two_level(theta, phi)?,
            Family::Coherent { xi, n } => coherent(xi, n)?,
            Family::Fermi2 { n, phase } => two_fermion_superposition(n, phase)?,
        };
        if self.diagonal {
            dephase(&pure)
        } else {
            Ok(pure)
        }
    }

    /// Family name as used in sweep configurations (`equal`, `diag-fermi2`, …).
    pub fn family_name(&self) -> String {
        let base = match self.family {
            Family::Equal { .. } => "equal",
            Family::TwoLevel { .. } => "twolevel",
            Family::Coherent { .. } => "coherent",
            Family::Fermi2 { .. } => "fermi2",
        };
        if self.diagonal {
            format!("diag-{base}")
        } else {
            base.to_string()
        }
    }

    /// The same family with its size parameter replaced, where it has one.
    pub fn with_count(&self, n: usize) -> Self {
        let family = match self.family.clone() {
            Family::Equal { .. } => Family::Equal { n },
            Family::Coherent { xi, .. } => Family::Coherent { xi, n },
            Family::Fermi2 { phase, .. } => Family::Fermi2 { n, phase },
            f @ Family::TwoLevel { .. } => f,
        };
        Self { family, diagonal: self.diagonal }
    }

    /// Parse a bare family name with default parameters, e.g. `diag-equal`.
    pub fn from_family(name: &str) -> Result<Self> {
        let (diagonal, base) = match name.strip_prefix("diag-") {
            Some(rest) => (true, rest),
            None => (false, name),
        };
        let family = match base {
            "equal" => Family::Equal { n: 1 },
            "twolevel" => Family::TwoLevel { theta: 0.0, phi: 0.0 },
            "coherent" => Family::Coherent { xi: Complex64::new(1.0, 0.0), n: 1 },
            "fermi2" => Family::Fermi2 { n: 1, phase: true },
            other => return Err(parse_err(format!("unknown state family '{other}'"))),
        };
        Ok(Self { family, diagonal })
    }
}

impl FromStr for StateSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, params) = s.split_once(':').unwrap_or((s, ""));
        let mut spec = Self::from_family(head.trim())?;
        let mut seen = Vec::new();
        for item in params.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = item.split_once('=').ok_or_else(|| parse_err(format!("expected key=value, got '{item}'")))?;
            let (key, value) = (key.trim(), value.trim());
            seen.push(key.to_string());
            let bad = |what: &str| parse_err(format!("bad {what} '{value}' in '{s}'"));
            match (&mut spec.family, key) {
                (Family::Equal { n } | Family::Coherent { n, .. } | Family::Fermi2 { n, .. }, "N") => {
                    *n = value.parse().map_err(|_| bad("N"))?
                }
                (Family::TwoLevel { theta, .. }, "theta") => *theta = value.parse().map_err(|_| bad("theta"))?,
                (Family::TwoLevel { phi, .. }, "phi") => *phi = value.parse().map_err(|_| bad("phi"))?,
                (Family::Coherent { xi, .. }, "xi") => *xi = value.parse().map_err(|_| bad("xi"))?,
                (Family::Fermi2 { phase, .. }, "phase") => *phase = value.parse().map_err(|_| bad("phase"))?,
                _ => return Err(parse_err(format!("unknown parameter '{key}' for '{head}'"))),
            }
        }
        let required: &[&str] = match spec.family {
            Family::Equal { .. } | Family::Fermi2 { .. } => &["N"],
            Family::Coherent { .. } => &["xi", "N"],
            Family::TwoLevel { .. } => &["theta", "phi"],
        };
        if let Some(missing) = required.iter().find(|r| !seen.iter().any(|s| s == *r)) {
            return Err(parse_err(format!("'{s}' is missing {missing}")));
        }
        Ok(spec)
    }
}

impl fmt::Display for StateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.family_name())?;
        match self.family {
            Family::Equal { n } => write!(f, "N={n}"),
            Family::TwoLevel { theta, phi } => write!(f, "theta={theta},phi={phi}"),
            Family::Coherent { xi, n } => write!(f, "xi={},N={n}", format_complex(xi)),
            Family::Fermi2 { n, phase: true } => write!(f, "N={n}"),
            Family::Fermi2 { n, phase: false } => write!(f, "N={n},phase=false"),
        }
    }
}

/// Build a state straight from its spec string.
pub fn parse_state(spec: &str) -> Result<InitialState> {
    spec.parse::<StateSpec>()?.build()
}

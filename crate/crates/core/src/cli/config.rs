//! Run configuration, output metadata and the parser that reads either back.

use crate::scaling::Admissibility;
use crate::spectrum::{Backend, DefectStrength, ProbeReport};
use crate::{convention_hash, Error, Result, VERSION};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const DEFAULT_FINITE_CUTOFF: usize = 4000;
pub const DEFAULT_STRONG_CUTOFF: usize = 1_000_000;
pub const DEFAULT_PAIR_CUTOFF: usize = 1000;
/// Law-fit window used when none is configured.
pub const DEFAULT_WINDOW: [f64; 2] = [0.018, 0.11];

/// Physical and numerical parameters of a run. Execution settings (cache
/// directory, worker count, output directory) are not part of it because
/// they do not change results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub description: Option<String>,
    /// state spec for single-state commands
    pub state: Option<String>,
    /// state families for `sweep`, e.g. `equal`, `diag-coherent:xi=1.5`
    pub states: Vec<String>,
    pub k: Vec<DefectStrength>,
    #[serde(rename = "N")]
    pub n: Vec<usize>,
    /// number of even levels kept; per-backend default when absent
    pub cutoff: Option<usize>,
    /// reference cutoff multiple for the convergence probe; below 2 disables it
    pub probe_factor: usize,
    /// fail with a convergence error when the probed energy deviation exceeds this
    pub probe_tolerance: Option<f64>,
    pub tmin: f64,
    pub tmax: f64,
    pub points: usize,
    /// speed-limit evaluation time; first minimum of |ν| in [0, π] when absent
    pub tau: Option<f64>,
    pub bin_width: f64,
    pub cusp_threshold: f64,
    pub write_kdq: bool,
    pub write_echo: bool,
    pub window: Option<[f64; 2]>,
    pub band: Admissibility,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            description: None,
            state: None,
            states: Vec::new(),
            k: Vec::new(),
            n: Vec::new(),
            cutoff: None,
            probe_factor: 2,
            probe_tolerance: None,
            tmin: 0.0,
            tmax: 2.0 * std::f64::consts::PI,
            points: 2000,
            tau: None,
            bin_width: crate::workstats::DEFAULT_BIN_WIDTH,
            cusp_threshold: crate::echo::CUSP_THRESHOLD,
            write_kdq: false,
            write_echo: true,
            window: None,
            band: Admissibility::default(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

impl RunConfig {
    /// Checks shared by every command.
    pub fn validate(&self) -> Result<()> {
        for k in &self.k {
            k.validate()?;
        }
        if let Some(&n) = self.n.iter().find(|&&n| n == 0) {
            return Err(invalid(format!("N must be at least 1, got {n}")));
        }
        if self.cutoff == Some(0) {
            return Err(invalid("cutoff must be at least 1"));
        }
        if !(self.tmin.is_finite() && self.tmax.is_finite() && self.tmax > self.tmin) {
            return Err(invalid(format!("time range [{}, {}] is empty", self.tmin, self.tmax)));
        }
        if self.points < 2 {
            return Err(invalid(format!("need at least 2 time points, got {}", self.points)));
        }
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) {
            return Err(invalid(format!("bin width must be positive, got {}", self.bin_width)));
        }
        if !(self.cusp_threshold > 0.0) {
            return Err(invalid(format!("cusp threshold must be positive, got {}", self.cusp_threshold)));
        }
        if let Some([a, b]) = self.window {
            if !(a < b) {
                return Err(invalid(format!("fit window [{a}, {b}] is empty")));
            }
        }
        let band = &self.band;
        if !(band.floor > 0.0 && band.ceiling > 0.0 && band.floor < 1.0 - band.ceiling) {
            return Err(invalid(format!("admissibility band {band:?} is empty")));
        }
        Ok(())
    }

    /// The single defect strength of a single-state command.
    pub fn single_k(&self) -> Result<DefectStrength> {
        match self.k.as_slice() {
            [k] => k.validate(),
            [] => Err(invalid("no defect strength given (--k)")),
            _ => Err(invalid(format!("expected one defect strength, got {}", self.k.len()))),
        }
    }

    pub fn single_state(&self) -> Result<&str> {
        self.state.as_deref().ok_or_else(|| invalid("no state given (--state)"))
    }

    /// Cutoff for a spectrum serving states of the given kind.
    pub fn cutoff_for(&self, k: DefectStrength, two_fermion: bool) -> usize {
        self.cutoff.unwrap_or(match (k, two_fermion) {
            (_, true) => DEFAULT_PAIR_CUTOFF,
            (DefectStrength::Infinite, false) => DEFAULT_STRONG_CUTOFF,
            (DefectStrength::Finite(_), false) => DEFAULT_FINITE_CUTOFF,
        })
    }

    pub fn window(&self) -> [f64; 2] {
        self.window.unwrap_or(DEFAULT_WINDOW)
    }
}

/// Spectrum used by a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    pub backend: Backend,
    pub k: DefectStrength,
    pub cutoff: usize,
    pub probe: Option<ProbeReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub state_norm: f64,
    pub probe_energy: Option<f64>,
    pub cusp_threshold: f64,
    pub admissibility: Admissibility,
}

/// Header embedded in every output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub program: String,
    pub version: String,
    pub convention: String,
    pub command: String,
    pub spectra: Vec<SpectrumMeta>,
    pub tolerances: Tolerances,
    pub config: RunConfig,
}

impl Metadata {
    pub fn new(command: &str, config: &RunConfig, spectra: Vec<SpectrumMeta>) -> Self {
        Self {
            program: "quench".into(),
            version: VERSION.into(),
            convention: convention_hash(),
            command: command.into(),
            spectra,
            tolerances: Tolerances {
                state_norm: crate::states::NORM_TOL,
                probe_energy: config.probe_tolerance,
                cusp_threshold: config.cusp_threshold,
                admissibility: config.band,
            },
            config: config.clone(),
        }
    }

    /// The `# {...}` line that opens a CSV file.
    pub fn csv_header(&self) -> Result<String> {
        Ok(format!("# {}", serde_json::to_string(self)?))
    }
}

/// Read a configuration from a plain config JSON, a JSON output with a
/// `meta` object, or a CSV output whose first line is a metadata header.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    Ok(match parse_metadata(text)? {
        Some(meta) => meta.config,
        None => serde_json::from_str(text)?,
    })
}

/// Metadata embedded in an output file, if it has any.
pub fn parse_metadata(text: &str) -> Result<Option<Metadata>> {
    let trimmed = text.trim_start();
    if let Some(rest) = trimmed.strip_prefix('#') {
        let line = rest.lines().next().unwrap_or("");
        return Ok(Some(serde_json::from_str(line.trim())?));
    }
    let value: serde_json::Value = serde_json::from_str(trimmed)?;
    match value.get("meta") {
        Some(meta) => Ok(Some(serde_json::from_value(meta.clone())?)),
        None => Ok(None),
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// Parse an N list such as `2:20`, `1,2,4,10,100` or `2:50:4`.
pub fn parse_n_list(spec: &str) -> Result<Vec<usize>> {
    let bad = |detail: String| Error::Parse { what: "N list", detail };
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = item.split(':').collect();
        let num = |s: &str| s.trim().parse::<usize>().map_err(|e| bad(format!("'{s}' in '{spec}': {e}")));
        match parts.as_slice() {
            [a] => out.push(num(a)?),
            [a, b] | [a, b, _] => {
                let (a, b) = (num(a)?, num(b)?);
                let step = if parts.len() == 3 { num(parts[2])? } else { 1 };
                if step == 0 || a > b {
                    return Err(bad(format!("empty range '{item}'")));
                }
                out.extend((a..=b).step_by(step));
            }
            _ => return Err(bad(format!("'{item}'"))),
        }
    }
    if out.is_empty() {
        return Err(bad("empty list".into()));
    }
    Ok(out)
}

/// Parse `a:b` into a window.
pub fn parse_window(spec: &str) -> Result<[f64; 2]> {
    let bad = || Error::Parse { what: "window", detail: format!("expected tmin:tmax, got '{spec}'") };
    let (a, b) = spec.split_once(':').ok_or_else(bad)?;
    Ok([a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?])
}

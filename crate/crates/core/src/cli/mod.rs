//! Command-line front end: `spectrum`, `echo`, `work`, `cusps`, `sweep` and `fit`.
//!
//! Exit codes: 0 success, 2 invalid input, 3 convergence or fit failure, 4 I/O.

pub mod config;

use crate::echo::{detect_cusps, echo_series, fmt_f64, kdq_table, EchoSeries, TimeGrid};
use crate::scaling::{fit_growth_curve, fit_time_laws, GrowthFit, ScalingFit};
use crate::spectrum::{cached_spectrum, probe_pair, Backend, DefectStrength, PerturbedSpectrum, ProbeReport};
use crate::states::StateSpec;
use crate::workstats::{mhq_histogram, work_report, WorkReport};
use crate::{Error, Result};
use clap::{Args, Parser, Subcommand};
use config::{load_config, parse_metadata, parse_n_list, parse_window, Metadata, RunConfig, SpectrumMeta};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub const ECHO_FILE: &str = "echo.csv";
pub const KDQ_FILE: &str = "kdq.csv";
pub const WORK_FILE: &str = "work.json";
pub const MHQ_FILE: &str = "mhq.csv";
pub const CUSPS_FILE: &str = "cusps.csv";
pub const SPECTRUM_FILE: &str = "spectrum.json";
pub const SWEEP_ECHO_FILE: &str = "sweep_echo.csv";
pub const SWEEP_WORK_FILE: &str = "sweep_work.csv";
pub const FIT_FILE: &str = "fit.json";

/// Number of levels listed in the spectrum summary.
const SUMMARY_LEVELS: usize = 20;

#[derive(Parser, Debug)]
#[command(name = "quench", version, about = "Echoes and work statistics of a harmonic trap quenched by a delta defect")]
pub struct Cli {
    /// Directory holding cached spectra
    #[arg(long, global = true, default_value = ".quench-cache")]
    pub cache_dir: PathBuf,
    /// Worker threads (0: one per core)
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    /// Output directory
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// JSON config, or any output file whose metadata should be reused
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build (or load) a spectrum and write a summary with a convergence probe
    Spectrum(SpectrumArgs),
    /// Loschmidt echo of one state on a time grid
    Echo {
        #[command(flatten)]
        state: StateArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Also write the full quasiprobability table
        #[arg(long)]
        kdq: bool,
    },
    /// Work statistics, MHQ histogram and speed-limit time of one state
    Work {
        #[command(flatten)]
        state: StateArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Speed-limit time (default: first minimum of |ν| in [0, π])
        #[arg(long, allow_hyphen_values = true)]
        tau: Option<f64>,
        /// Work bin width of the MHQ histogram
        #[arg(long)]
        bin_width: Option<f64>,
    },
    /// Times at which |ν(t)| has a cusp
    Cusps {
        #[command(flatten)]
        state: StateArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Cusp threshold on |Δ²|ν|| / h
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Echoes and work statistics over k × state family × N
    Sweep {
        /// State families, e.g. `equal diag-equal coherent:xi=1.5`
        #[arg(long, num_args = 1..)]
        states: Vec<String>,
        /// N values: `2:20`, `1,2,4,10`, `2:50:4`
        #[arg(long = "N")]
        n: Option<String>,
        #[command(flatten)]
        spectrum: SpectrumArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Speed-limit time (default: first minimum of |ν| in [0, π])
        #[arg(long, allow_hyphen_values = true)]
        tau: Option<f64>,
        /// Skip the per-point echo table
        #[arg(long)]
        no_echo: bool,
    },
    /// Scaling and growth fits over sweep output
    Fit {
        /// Directory with sweep output (defaults to --out)
        #[arg(long)]
        input: Option<PathBuf>,
        /// Law-fit window `tmin:tmax`
        #[arg(long)]
        window: Option<String>,
        /// Smallest 1 - |ν| used in fits
        #[arg(long)]
        floor: Option<f64>,
        /// Smallest |ν| used in fits
        #[arg(long)]
        ceiling: Option<f64>,
        /// Fewest N values per time slice
        #[arg(long)]
        min_points: Option<usize>,
    },
}

#[derive(Args, Debug, Default)]
pub struct SpectrumArgs {
    /// Defect strength, `inf`, or a comma list for sweeps
    #[arg(long, allow_hyphen_values = true)]
    pub k: Option<String>,
    /// Number of even levels kept
    #[arg(long)]
    pub cutoff: Option<usize>,
    /// Probe convergence against a spectrum this many times larger (below 2: off)
    #[arg(long)]
    pub probe_factor: Option<usize>,
    /// Fail when the probed energy deviation exceeds this
    #[arg(long)]
    pub probe_tolerance: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct StateArgs {
    /// State spec, e.g. `equal:N=10`, `diag-fermi2:N=5`
    #[arg(long)]
    pub state: Option<String>,
    #[command(flatten)]
    pub spectrum: SpectrumArgs,
}

#[derive(Args, Debug, Default)]
pub struct GridArgs {
    /// First grid time [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub tmin: Option<f64>,
    /// Last grid time [default: 2π]
    #[arg(long, allow_hyphen_values = true)]
    pub tmax: Option<f64>,
    /// Number of grid points [default: 2000]
    #[arg(long)]
    pub points: Option<usize>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn parse_k_list(s: &str) -> Result<Vec<DefectStrength>> {
    s.split(',').map(|p| p.trim().parse()).collect()
}

impl SpectrumArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(k) = &self.k {
            cfg.k = parse_k_list(k)?;
        }
        if self.cutoff.is_some() {
            cfg.cutoff = self.cutoff;
        }
        set(&mut cfg.probe_factor, self.probe_factor);
        if self.probe_tolerance.is_some() {
            cfg.probe_tolerance = self.probe_tolerance;
        }
        Ok(())
    }
}

impl StateArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if self.state.is_some() {
            cfg.state.clone_from(&self.state);
        }
        self.spectrum.apply(cfg)
    }
}

impl GridArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.tmin, self.tmin);
        set(&mut cfg.tmax, self.tmax);
        set(&mut cfg.points, self.points);
    }
}

/// Map an error to the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::OddLevel(_) | Error::InvalidParameter(_) | Error::OutsideCutoff { .. } | Error::Parse { .. } => 2,
        Error::Convergence(_) | Error::Fit(_) => 3,
        Error::Io(_) | Error::Json(_) => 4,
    }
}

/// Parse arguments, run the command and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Run a parsed command inside a worker pool of the requested size.
pub fn run(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?;
    pool.install(|| dispatch(&cli))
}

fn base_config(cli: &Cli) -> Result<Option<RunConfig>> {
    match &cli.config {
        None => Ok(None),
        Some(path) => load_config(path).map(Some).map_err(|e| match e {
            Error::Io(io) => Error::Io(io),
            other => Error::Parse { what: "config", detail: format!("{}: {other}", path.display()) },
        }),
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let mut cfg = base_config(cli)?.unwrap_or_default();
    match &cli.command {
        Command::Spectrum(args) => {
            args.apply(&mut cfg)?;
            cfg.validate()?;
            cmd_spectrum(cli, &cfg)
        }
        Command::Echo { state, grid, kdq } => {
            state.apply(&mut cfg)?;
            grid.apply(&mut cfg);
            cfg.write_kdq |= *kdq;
            cfg.validate()?;
            cmd_echo(cli, &cfg)
        }
        Command::Work { state, grid, tau, bin_width } => {
            state.apply(&mut cfg)?;
            grid.apply(&mut cfg);
            if tau.is_some() {
                cfg.tau = *tau;
            }
            set(&mut cfg.bin_width, *bin_width);
            cfg.validate()?;
            cmd_work(cli, &cfg)
        }
        Command::Cusps { state, grid, threshold } => {
            state.apply(&mut cfg)?;
            grid.apply(&mut cfg);
            set(&mut cfg.cusp_threshold, *threshold);
            cfg.validate()?;
            cmd_cusps(cli, &cfg)
        }
        Command::Sweep { states, n, spectrum, grid, tau, no_echo } => {
            if !states.is_empty() {
                cfg.states.clone_from(states);
            }
            if let Some(n) = n {
                cfg.n = parse_n_list(n)?;
            }
            spectrum.apply(&mut cfg)?;
            grid.apply(&mut cfg);
            if tau.is_some() {
                cfg.tau = *tau;
            }
            if *no_echo {
                cfg.write_echo = false;
            }
            cfg.validate()?;
            cmd_sweep(cli, &cfg)
        }
        Command::Fit { input, window, floor, ceiling, min_points } => {
            let dir = input.clone().unwrap_or_else(|| cli.out.clone());
            let text = read_input(&dir.join(SWEEP_ECHO_FILE))?;
            let source = parse_metadata(&text)?
                .ok_or_else(|| Error::Parse { what: "sweep output", detail: "missing metadata header".into() })?;
            if cli.config.is_none() {
                cfg = source.config.clone();
            }
            if let Some(w) = window {
                cfg.window = Some(parse_window(w)?);
            }
            set(&mut cfg.band.floor, *floor);
            set(&mut cfg.band.ceiling, *ceiling);
            set(&mut cfg.band.min_points, *min_points);
            cfg.validate()?;
            cmd_fit(cli, &cfg, &dir, &text, source)
        }
    }
}

fn read_input(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

fn write_output(cli: &Cli, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<PathBuf> {
    std::fs::create_dir_all(&cli.out)?;
    let path = cli.out.join(name);
    let mut w = BufWriter::new(File::create(&path)?);
    body(&mut w)?;
    w.flush()?;
    println!("{}", path.display());
    Ok(path)
}

fn write_json<T: Serialize>(cli: &Cli, name: &str, value: &T) -> Result<PathBuf> {
    write_output(cli, name, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

fn write_csv_with_meta(
    cli: &Cli,
    name: &str,
    meta: &Metadata,
    body: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
) -> Result<PathBuf> {
    write_output(cli, name, |w| {
        writeln!(w, "{}", meta.csv_header()?)?;
        body(w)
    })
}

/// Load or build a spectrum and probe it against a larger cutoff.
fn load_spectrum(cli: &Cli, cfg: &RunConfig, k: DefectStrength, cutoff: usize) -> Result<(PerturbedSpectrum, SpectrumMeta)> {
    let spectrum = cached_spectrum(&cli.cache_dir, k, cutoff)?;
    let probe = probe(cli, cfg, &spectrum)?;
    let meta = SpectrumMeta { backend: spectrum.backend(), k, cutoff, probe };
    Ok((spectrum, meta))
}

fn probe(cli: &Cli, cfg: &RunConfig, spectrum: &PerturbedSpectrum) -> Result<Option<ProbeReport>> {
    if cfg.probe_factor < 2 {
        return Ok(None);
    }
    let cutoff = spectrum.cutoff();
    let reference = cutoff * cfg.probe_factor;
    let report = match spectrum.backend() {
        // analytic rows do not depend on the cutoff
        Backend::StrongCoupling => ProbeReport {
            cutoff,
            reference_cutoff: reference,
            levels: cutoff / 2,
            energy_deviation: 0.0,
            overlap_deviation: 0.0,
        },
        Backend::FiniteK => {
            info!("probing k={} M={cutoff} against M={reference}", spectrum.k());
            let larger = cached_spectrum(&cli.cache_dir, spectrum.k(), reference)?;
            probe_pair(spectrum, &larger, cutoff / 2)
        }
    };
    if let Some(tol) = cfg.probe_tolerance {
        if !(report.energy_deviation <= tol) {
            return Err(Error::Convergence(format!(
                "energies at cutoff {cutoff} deviate by {:e} from cutoff {reference} (tolerance {tol:e})",
                report.energy_deviation
            )));
        }
    }
    Ok(Some(report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelEntry {
    pub m: u64,
    pub energy: f64,
    /// ⟨ψ'_m|ψ_0⟩
    pub overlap_ground: f64,
}

/// Summary written by `spectrum`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub meta: Metadata,
    pub backend: Backend,
    pub k: DefectStrength,
    pub cutoff: usize,
    pub lowest: Vec<LevelEntry>,
    pub probe: Option<ProbeReport>,
}

fn cmd_spectrum(cli: &Cli, cfg: &RunConfig) -> Result<()> {
    let k = cfg.single_k()?;
    let cutoff = cfg.cutoff_for(k, false);
    let (spectrum, smeta) = load_spectrum(cli, cfg, k, cutoff)?;
    let lowest = (0..cutoff.min(SUMMARY_LEVELS))
        .map(|r| LevelEntry { m: 2 * r as u64, energy: spectrum.energy(r), overlap_ground: spectrum.overlap(r, 0) })
        .collect();
    let summary = SpectrumSummary {
        meta: Metadata::new("spectrum", cfg, vec![smeta.clone()]),
        backend: spectrum.backend(),
        k,
        cutoff,
        lowest,
        probe: smeta.probe,
    };
    write_json(cli, SPECTRUM_FILE, &summary)?;
    Ok(())
}

/// A state, its spectrum and the echo grid of a single-state command.
struct SingleRun {
    spec: StateSpec,
    state: crate::InitialState,
    spectrum: PerturbedSpectrum,
    meta: Metadata,
    grid: TimeGrid,
}

fn single_run(cli: &Cli, cfg: &RunConfig, command: &str) -> Result<SingleRun> {
    let spec: StateSpec = cfg.single_state()?.parse()?;
    let state = spec.build()?;
    let k = cfg.single_k()?;
    let cutoff = cfg.cutoff_for(k, state.flavor().is_two_fermion());
    let (spectrum, smeta) = load_spectrum(cli, cfg, k, cutoff)?;
    let grid = TimeGrid::uniform(cfg.tmin, cfg.tmax, cfg.points)?;
    let meta = Metadata::new(command, cfg, vec![smeta]);
    Ok(SingleRun { spec, state, spectrum, meta, grid })
}

fn cmd_echo(cli: &Cli, cfg: &RunConfig) -> Result<()> {
    let run = single_run(cli, cfg, "echo")?;
    let table = kdq_table(&run.state, &run.spectrum)?;
    let series = echo_series(&table, &run.grid);
    write_csv_with_meta(cli, ECHO_FILE, &run.meta, |w| series.write_csv(w))?;
    if cfg.write_kdq {
        write_csv_with_meta(cli, KDQ_FILE, &run.meta, |w| table.write_csv(w))?;
    }
    info!("echo of {} written", run.spec);
    Ok(())
}

/// Output of `work`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkOutput {
    pub meta: Metadata,
    #[serde(flatten)]
    pub report: WorkReport,
}

fn cmd_work(cli: &Cli, cfg: &RunConfig) -> Result<()> {
    let run = single_run(cli, cfg, "work")?;
    let table = kdq_table(&run.state, &run.spectrum)?;
    let series = echo_series(&table, &run.grid);
    let report = work_report(&table, Some(&series), cfg.tau)?;
    let hist = mhq_histogram(&table, cfg.bin_width)?;
    write_json(cli, WORK_FILE, &WorkOutput { meta: run.meta.clone(), report })?;
    write_csv_with_meta(cli, MHQ_FILE, &run.meta, |w| {
        writeln!(w, "w_bin,re_q_sum")?;
        for (c, v) in &hist {
            writeln!(w, "{},{}", fmt_f64(*c), fmt_f64(*v))?;
        }
        Ok(())
    })?;
    Ok(())
}

fn cmd_cusps(cli: &Cli, cfg: &RunConfig) -> Result<()> {
    let run = single_run(cli, cfg, "cusps")?;
    let table = kdq_table(&run.state, &run.spectrum)?;
    let series = echo_series(&table, &run.grid);
    let cusps = detect_cusps(&series, cfg.cusp_threshold)?;
    let abs = series.abs();
    write_csv_with_meta(cli, CUSPS_FILE, &run.meta, |w| {
        writeln!(w, "t,abs_nu")?;
        for &t in &cusps {
            let j = series.times.iter().position(|&s| s == t).expect("cusp time is a grid time");
            writeln!(w, "{},{}", fmt_f64(t), fmt_f64(abs[j]))?;
        }
        Ok(())
    })?;
    Ok(())
}

/// Parse a sweep family. The size parameter is filled in per grid point.
fn sweep_family(name: &str) -> Result<StateSpec> {
    if name.contains("N=") {
        return name.parse();
    }
    let sep = if name.contains(':') { ',' } else { ':' };
    format!("{name}{sep}N=1").parse().or_else(|_| name.parse())
}

struct SweepPoint<'a> {
    k: DefectStrength,
    family: &'a str,
    spec: StateSpec,
    n: usize,
    spectrum: usize,
}

struct SweepResult {
    series: Option<EchoSeries>,
    report: WorkReport,
}

fn cmd_sweep(cli: &Cli, cfg: &RunConfig) -> Result<()> {
    if cfg.states.is_empty() || cfg.n.is_empty() || cfg.k.is_empty() {
        return Err(Error::InvalidParameter("sweep needs --states, --N and --k".into()));
    }
    let families: Vec<(String, StateSpec)> =
        cfg.states.iter().map(|s| Ok((s.clone(), sweep_family(s)?))).collect::<Result<_>>()?;

    let mut spectra: Vec<PerturbedSpectrum> = Vec::new();
    let mut smeta: Vec<SpectrumMeta> = Vec::new();
    let mut points = Vec::new();
    for &k in &cfg.k {
        for (name, family) in &families {
            for &n in &cfg.n {
                let spec = family.with_count(n);
                let cutoff = cfg.cutoff_for(k, matches!(spec.family, crate::states::Family::Fermi2 { .. }));
                let idx = match smeta.iter().position(|m| m.k == k && m.cutoff == cutoff) {
                    Some(i) => i,
                    None => {
                        let (s, m) = load_spectrum(cli, cfg, k, cutoff)?;
                        spectra.push(s);
                        smeta.push(m);
                        spectra.len() - 1
                    }
                };
                points.push(SweepPoint { k, family: name, spec, n, spectrum: idx });
            }
        }
    }
    let grid = TimeGrid::uniform(cfg.tmin, cfg.tmax, cfg.points)?;
    info!("sweep over {} points", points.len());
    let results: Vec<SweepResult> = points
        .par_iter()
        .map(|p| {
            let state = p.spec.build()?;
            let table = kdq_table(&state, &spectra[p.spectrum])?;
            let series = echo_series(&table, &grid);
            let report = work_report(&table, Some(&series), cfg.tau)?;
            Ok(SweepResult { series: cfg.write_echo.then_some(series), report })
        })
        .collect::<Result<_>>()?;

    let meta = Metadata::new("sweep", cfg, smeta);
    write_csv_with_meta(cli, SWEEP_ECHO_FILE, &meta, |w| {
        let mut csv = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Io(e.into());
        csv.write_record(["k", "family", "N", "t", "re_nu", "im_nu", "abs_nu"]).map_err(err)?;
        for (p, r) in points.iter().zip(&results) {
            let Some(series) = &r.series else { continue };
            let (k, n) = (p.k.to_string(), p.n.to_string());
            for (t, z) in series.times.iter().zip(&series.nu) {
                csv.write_record([&k, p.family, &n, &fmt_f64(*t), &fmt_f64(z.re), &fmt_f64(z.im), &fmt_f64(z.norm())])
                    .map_err(err)?;
            }
        }
        csv.flush()?;
        Ok(())
    })?;
    write_csv_with_meta(cli, SWEEP_WORK_FILE, &meta, |w| {
        let mut csv = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Io(e.into());
        csv.write_record([
            "k",
            "family",
            "N",
            "n_re",
            "avg_work_direct",
            "avg_work_moment",
            "slope",
            "tau",
            "tau_qsl",
        ])
        .map_err(err)?;
        let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
        for (p, r) in points.iter().zip(&results) {
            let rep = &r.report;
            csv.write_record([
                p.k.to_string(),
                p.family.to_string(),
                p.n.to_string(),
                fmt_f64(rep.n_re),
                opt(rep.avg_work.direct),
                fmt_f64(rep.avg_work.moment),
                opt(rep.avg_work.slope_fit),
                opt(rep.tau_qsl.tau),
                opt(rep.tau_qsl.value),
            ])
            .map_err(err)?;
        }
        csv.flush()?;
        Ok(())
    })?;
    Ok(())
}

/// N_Re growth fit of one (k, family) group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthEntry {
    pub k: DefectStrength,
    pub family: String,
    #[serde(rename = "N")]
    pub n: Vec<usize>,
    pub n_re: Vec<f64>,
    pub fit: Option<GrowthFit>,
}

/// Output of `fit`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOutput {
    pub meta: Metadata,
    pub scaling: Vec<ScalingFit>,
    pub growth: Vec<GrowthEntry>,
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes())
}

fn sweep_parse_err(e: impl std::fmt::Display) -> Error {
    Error::Parse { what: "sweep output", detail: e.to_string() }
}

fn field<'r>(rec: &'r csv::StringRecord, i: usize) -> Result<&'r str> {
    rec.get(i).ok_or_else(|| sweep_parse_err(format!("short record {rec:?}")))
}

fn num<T: std::str::FromStr>(s: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| sweep_parse_err(format!("'{s}': {e}")))
}

/// Rows of one group keyed by N, each a list of (t, |ν|).
type EchoGroup = BTreeMap<usize, Vec<(f64, f64)>>;

fn group_echoes(text: &str) -> Result<Vec<(DefectStrength, String, EchoGroup)>> {
    let mut groups: Vec<(DefectStrength, String, EchoGroup)> = Vec::new();
    for rec in csv_reader(text).records() {
        let rec = rec.map_err(sweep_parse_err)?;
        let k: DefectStrength = field(&rec, 0)?.parse()?;
        let family = field(&rec, 1)?;
        let n: usize = num(field(&rec, 2)?)?;
        let (t, abs): (f64, f64) = (num(field(&rec, 3)?)?, num(field(&rec, 6)?)?);
        let g = match groups.iter().position(|(gk, gf, _)| *gk == k && gf == family) {
            Some(i) => i,
            None => {
                groups.push((k, family.to_string(), BTreeMap::new()));
                groups.len() - 1
            }
        };
        groups[g].2.entry(n).or_default().push((t, abs));
    }
    Ok(groups)
}

fn scaling_fit(cfg: &RunConfig, k: DefectStrength, family: &str, group: &EchoGroup) -> Result<ScalingFit> {
    let n_range: Vec<usize> = group.keys().copied().collect();
    let first = group.values().next().expect("group is non-empty");
    let t_grid: Vec<f64> = first.iter().map(|p| p.0).collect();
    let mut rows = Vec::with_capacity(group.len());
    for (n, row) in group {
        if row.len() != t_grid.len() || row.iter().zip(&t_grid).any(|(p, t)| p.0 != *t) {
            return Err(sweep_parse_err(format!("N={n} of {family} at k={k} uses a different time grid")));
        }
        rows.push(row.iter().map(|p| p.1).collect::<Vec<f64>>());
    }
    let full = ScalingFit::from_echoes(k, family, n_range, t_grid, &rows, &cfg.band)?;
    let [a, b] = cfg.window();
    let keep: Vec<usize> = (0..full.t_grid.len()).filter(|&j| full.t_grid[j] >= a && full.t_grid[j] <= b).collect();
    let pick = |v: &[Option<f64>]| keep.iter().map(|&j| v[j]).collect::<Vec<_>>();
    let windowed = ScalingFit {
        t_grid: keep.iter().map(|&j| full.t_grid[j]).collect(),
        beta: pick(&full.beta),
        gamma: pick(&full.gamma),
        r2: pick(&full.r2),
        ..full.clone()
    };
    let laws = fit_time_laws(&windowed, family.starts_with("diag-"))
        .map_err(|e| Error::Fit(format!("{family} at k={k}, window [{a}, {b}]: {e}")))?;
    Ok(ScalingFit { beta_law: laws.beta_law, gamma_law: laws.gamma_law, ..full })
}

fn growth_fits(text: &str) -> Result<Vec<GrowthEntry>> {
    let mut out: Vec<GrowthEntry> = Vec::new();
    for rec in csv_reader(text).records() {
        let rec = rec.map_err(sweep_parse_err)?;
        let k: DefectStrength = field(&rec, 0)?.parse()?;
        let family = field(&rec, 1)?;
        let (n, n_re): (usize, f64) = (num(field(&rec, 2)?)?, num(field(&rec, 3)?)?);
        let g = match out.iter().position(|e| e.k == k && e.family == family) {
            Some(i) => i,
            None => {
                out.push(GrowthEntry { k, family: family.to_string(), n: Vec::new(), n_re: Vec::new(), fit: None });
                out.len() - 1
            }
        };
        out[g].n.push(n);
        out[g].n_re.push(n_re);
    }
    for e in &mut out {
        let pts: Vec<(f64, f64)> = e.n.iter().zip(&e.n_re).map(|(&n, &v)| (n as f64, v)).collect();
        e.fit = match fit_growth_curve(&pts) {
            Ok(f) => Some(f),
            Err(err) => {
                info!("no growth fit for {} at k={}: {err}", e.family, e.k);
                None
            }
        };
    }
    Ok(out)
}

fn cmd_fit(cli: &Cli, cfg: &RunConfig, dir: &Path, echo_text: &str, source: Metadata) -> Result<()> {
    let groups = group_echoes(echo_text)?;
    let scaling = groups
        .iter()
        .map(|(k, family, group)| scaling_fit(cfg, *k, family, group))
        .collect::<Result<Vec<_>>>()?;
    let work_path = dir.join(SWEEP_WORK_FILE);
    let growth = if work_path.exists() { growth_fits(&read_input(&work_path)?)? } else { Vec::new() };
    let out = FitOutput { meta: Metadata::new("fit", cfg, source.spectra), scaling, growth };
    write_json(cli, FIT_FILE, &out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::InvalidParameter("x".into())), 2);
        assert_eq!(exit_code(&Error::OutsideCutoff { level: 4, limit: 2 }), 2);
        assert_eq!(exit_code(&Error::Convergence("x".into())), 3);
        assert_eq!(exit_code(&Error::Io(std::io::Error::other("x"))), 4);
    }

    #[test]
    fn sweep_families() {
        assert_eq!(sweep_family("equal").unwrap().with_count(7).to_string(), "equal:N=7");
        assert_eq!(sweep_family("diag-fermi2").unwrap().with_count(3).to_string(), "diag-fermi2:N=3");
        assert_eq!(sweep_family("coherent:xi=1.5").unwrap().with_count(4).to_string(), "coherent:xi=1.5+0i,N=4");
        assert!(sweep_family("twolevel:theta=1,phi=0").is_ok());
        assert!(sweep_family("bogus").is_err());
    }

    #[test]
    fn k_lists() {
        assert_eq!(
            parse_k_list("1, 10,inf").unwrap(),
            vec![DefectStrength::Finite(1.0), DefectStrength::Finite(10.0), DefectStrength::Infinite]
        );
        assert!(parse_k_list("x").is_err());
    }

    #[test]
    fn negative_k_is_a_validation_error() {
        let dir = tempfile_dir();
        let code = main_with_args(["quench", "--cache-dir", &dir, "--out", &dir, "spectrum", "--k", "-1"]);
        assert_eq!(code, 2);
    }

    fn tempfile_dir() -> String {
        let d = std::env::temp_dir().join(format!("quench-cli-unit-{}", std::process::id()));
        d.to_string_lossy().into_owned()
    }
}

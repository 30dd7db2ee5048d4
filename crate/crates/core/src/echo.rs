//! Kirkwood–Dirac work quasiprobabilities and the Loschmidt echo
//! ν(t) = Σ q_{n,m} e^{-i(E'_m - E_n)t}.
//!
//! Tables are never materialized: entries are generated row by row from the
//! factored overlaps of [`PerturbedSpectrum`]. The echo is evaluated either by
//! aggregating the integer energy transfers of the strong-coupling backend
//! (then one FFT or a Horner sweep per time) or by a row-factorized sum that
//! costs O(M·N) per time point for single particles and for pair states
//! sharing one orbital.

use crate::basis::{energy_unperturbed, psi_at_origin};
use crate::special::ComplexNeumaier;
use crate::spectrum::{Backend, PerturbedSpectrum};
use crate::states::{Flavor, InitialState};
use crate::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::io::Write;

/// Rows handled per parallel block when folding over entries.
const ROW_BLOCK: usize = 1024;
/// Largest FFT length used for uniform grids.
const MAX_FFT_LEN: usize = 1 << 22;

/// Initial or final index of a table entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Index {
    Level(u64),
    Pair(u64, u64),
}

impl fmt::Display for Index {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Index::Level(n) => write!(f, "{n}"),
            Index::Pair(a, b) => write!(f, "{a};{b}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KdqEntry {
    pub initial: Index,
    pub target: Index,
    /// E'_m - E_n
    pub w: f64,
    pub q: Complex64,
}

/// Work quasiprobability table of a state under a quench.
#[derive(Clone, Debug)]
pub struct QuasiprobTable<'a> {
    state: &'a InitialState,
    spectrum: &'a PerturbedSpectrum,
    /// ψ_n(0) for the state's (partner) levels
    psi: Vec<f64>,
    /// single pure: β_r = Σ_i α_i Λ_{r,i}; pair pure: B_r, same sum over partners
    beta: Vec<Complex64>,
    /// pair states: Λ_{r,core} per row
    core_col: Vec<f64>,
    /// pair states: Λ_{r,b_i}, row-major rows × levels
    lambda: Vec<f64>,
}

/// Build the quasiprobability table of `state` against `spectrum`.
pub fn kdq_table<'a>(state: &'a InitialState, spectrum: &'a PerturbedSpectrum) -> Result<QuasiprobTable<'a>> {
    let limit = spectrum.level_limit();
    if state.max_level() >= limit {
        return Err(Error::OutsideCutoff { level: state.max_level(), limit });
    }
    let rows = spectrum.cutoff();
    let psi: Vec<f64> = state.levels().iter().map(|&n| psi_at_origin(n)).collect();
    let (core_col, lambda) = match state.core() {
        Some(a) => {
            let pa = psi_at_origin(a);
            let core_col = (0..rows).map(|r| spectrum.overlap_with_origin_value(r, a, pa)).collect();
            let lambda = (0..rows)
                .into_par_iter()
                .flat_map_iter(|r| {
                    state.levels().iter().zip(&psi).map(move |(&n, &p)| spectrum.overlap_with_origin_value(r, n, p))
                })
                .collect();
            (core_col, lambda)
        }
        None => (Vec::new(), Vec::new()),
    };
    let mut table = QuasiprobTable { state, spectrum, psi, beta: Vec::new(), core_col, lambda };
    if state.flavor().is_pure() {
        table.beta = (0..rows).into_par_iter().map(|r| table.row_amplitude(r)).collect();
    }
    Ok(table)
}

impl<'a> QuasiprobTable<'a> {
    pub fn state(&self) -> &InitialState {
        self.state
    }

    pub fn spectrum(&self) -> &PerturbedSpectrum {
        self.spectrum
    }

    fn rows(&self) -> usize {
        self.spectrum.cutoff()
    }

    #[inline]
    fn lam(&self, r: usize, i: usize) -> f64 {
        if self.lambda.is_empty() {
            self.spectrum.overlap_with_origin_value(r, self.state.levels()[i], self.psi[i])
        } else {
            self.lambda[r * self.state.len() + i]
        }
    }

    /// Σ_i α_i Λ_{r,i}
    fn row_amplitude(&self, r: usize) -> Complex64 {
        self.state
            .amplitudes()
            .iter()
            .enumerate()
            .map(|(i, a)| a * self.lam(r, i))
            .collect::<ComplexNeumaier>()
            .value()
    }

    /// Number of final indices (perturbed levels or ordered perturbed pairs).
    pub fn final_count(&self) -> usize {
        let m = self.rows();
        if self.state.flavor().is_two_fermion() {
            m * (m - 1) / 2
        } else {
            m
        }
    }

    /// Number of entries, including exact zeros.
    pub fn len(&self) -> usize {
        self.final_count() * self.state.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entries whose final index has first row in `outer`: the perturbed
    /// level for single particles, the lower orbital c of the pair (c, d)
    /// for two fermions.
    fn emit_outer(&self, c: usize, f: &mut impl FnMut(&KdqEntry)) {
        let levels = self.state.levels();
        let sp = self.spectrum;
        match self.state.flavor() {
            Flavor::PureSingle => {
                let beta = self.beta[c];
                for (i, (&n, a)) in levels.iter().zip(self.state.amplitudes()).enumerate() {
                    let q = a.conj() * self.lam(c, i) * beta;
                    f(&KdqEntry { initial: Index::Level(n), target: Index::Level(2 * c as u64), w: sp.gap(c, n), q });
                }
            }
            Flavor::DiagonalSingle => {
                for (i, (&n, &p)) in levels.iter().zip(self.state.weights()).enumerate() {
                    let l = self.lam(c, i);
                    let q = Complex64::new(p * l * l, 0.0);
                    f(&KdqEntry { initial: Index::Level(n), target: Index::Level(2 * c as u64), w: sp.gap(c, n), q });
                }
            }
            Flavor::PureTwoFermion | Flavor::DiagonalTwoFermion => {
                let a = self.state.core().expect("pair state has a core orbital");
                let pure = self.state.flavor().is_pure();
                let nl = levels.len();
                let lc = &self.lambda[c * nl..(c + 1) * nl];
                let lca = self.core_col[c];
                let gca = sp.gap(c, a);
                for d in c + 1..self.rows() {
                    let ld = &self.lambda[d * nl..(d + 1) * nl];
                    let lda = self.core_col[d];
                    let target = Index::Pair(2 * c as u64, 2 * d as u64);
                    let beta = if pure { lca * self.beta[d] - self.beta[c] * lda } else { Complex64::default() };
                    for (i, &b) in levels.iter().enumerate() {
                        let det = lca * ld[i] - lc[i] * lda;
                        let q = if pure {
                            self.state.amplitudes()[i].conj() * det * beta
                        } else {
                            Complex64::new(self.state.weights()[i] * det * det, 0.0)
                        };
                        let w = gca + sp.gap(d, b);
                        f(&KdqEntry { initial: Index::Pair(a, b), target, w, q });
                    }
                }
            }
        }
    }

    /// Visit every entry in a fixed order.
    pub fn for_each(&self, mut f: impl FnMut(&KdqEntry)) {
        for c in 0..self.rows() {
            self.emit_outer(c, &mut f);
        }
    }

    /// All entries, materialized. Use [`fold`](Self::fold) for large tables.
    pub fn entries(&self) -> Vec<KdqEntry> {
        let mut out = Vec::with_capacity(self.len());
        self.for_each(|e| out.push(*e));
        out
    }

    /// Fold entries in parallel blocks of rows. The partial results come back
    /// in row order, so a sequential merge is deterministic.
    pub fn fold<T, I, F>(&self, init: I, fold: F) -> Vec<T>
    where
        T: Send,
        I: Fn() -> T + Sync + Send,
        F: Fn(&mut T, &KdqEntry) + Sync + Send,
    {
        let rows = self.rows();
        let block = if self.state.flavor().is_two_fermion() { 1 } else { ROW_BLOCK };
        (0..rows.div_ceil(block))
            .into_par_iter()
            .map(|b| {
                let mut acc = init();
                for c in b * block..((b + 1) * block).min(rows) {
                    self.emit_outer(c, &mut |e| fold(&mut acc, e));
                }
                acc
            })
            .collect()
    }

    /// Σ q, which is ν(0).
    pub fn sum(&self) -> Complex64 {
        let parts = self.fold(ComplexNeumaier::default, |acc, e| acc.add(e.q));
        parts.iter().map(|p| p.value()).collect::<ComplexNeumaier>().value()
    }

    /// Σ_{entries with the given initial index} q.
    pub fn initial_marginal(&self, initial: Index) -> Complex64 {
        let parts = self.fold(ComplexNeumaier::default, |acc, e| {
            if e.initial == initial {
                acc.add(e.q)
            }
        });
        parts.iter().map(|p| p.value()).collect::<ComplexNeumaier>().value()
    }

    /// CSV with columns `n,m,w,re_q,im_q`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n,m,w,re_q,im_q")?;
        let mut err = None;
        self.for_each(|e| {
            if err.is_none() {
                if let Err(x) = writeln!(w, "{},{},{},{},{}", e.initial, e.target, fmt_f64(e.w), fmt_f64(e.q.re), fmt_f64(e.q.im)) {
                    err = Some(x);
                }
            }
        });
        match err {
            Some(e) => Err(e.into()),
            None => Ok(()),
        }
    }
}

/// Full-precision float formatting: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Sample times for an echo evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
    /// (start, step) when the grid is uniform
    uniform: Option<(f64, f64)>,
}

impl TimeGrid {
    /// `points` equally spaced times from `start` to `stop` inclusive.
    pub fn uniform(start: f64, stop: f64, points: usize) -> Result<Self> {
        if !(start.is_finite() && stop.is_finite()) || stop < start {
            return Err(Error::InvalidParameter(format!("bad time range [{start}, {stop}]")));
        }
        if points == 0 {
            return Err(Error::InvalidParameter("time grid needs at least one point".into()));
        }
        let step = if points > 1 { (stop - start) / (points - 1) as f64 } else { 0.0 };
        let times = (0..points).map(|j| start + j as f64 * step).collect();
        Ok(Self { times, uniform: Some((start, step)) })
    }

    /// 2000 points over two strong-coupling periods, [0, 2π].
    pub fn default_grid() -> Self {
        Self::uniform(0.0, TAU, 2000).expect("valid default grid")
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter("time grid contains non-finite values".into()));
        }
        Ok(Self { times, uniform: None })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Spacing of a uniform grid with at least two points.
    pub fn spacing(&self) -> Option<f64> {
        self.uniform.filter(|_| self.times.len() > 1).map(|(_, h)| h)
    }

    /// FFT length L with step · L = 2π, if the grid admits one.
    fn fft_len(&self) -> Option<usize> {
        let h = self.spacing()?;
        if h <= 0.0 {
            return None;
        }
        let l = TAU / h;
        let rounded = l.round();
        if (l - rounded).abs() <= 1e-9 * l && rounded >= 1.0 && (rounded as usize) <= MAX_FFT_LEN {
            Some(rounded as usize)
        } else {
            None
        }
    }
}

/// ν(t) sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct EchoSeries {
    pub times: Vec<f64>,
    pub nu: Vec<Complex64>,
    /// grid spacing when uniform
    pub spacing: Option<f64>,
}

impl EchoSeries {
    pub fn abs(&self) -> Vec<f64> {
        self.nu.iter().map(|z| z.norm()).collect()
    }

    pub fn abs_sq(&self) -> Vec<f64> {
        self.nu.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with columns `t,re_nu,im_nu,abs_nu,abs_nu_sq`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,re_nu,im_nu,abs_nu,abs_nu_sq")?;
        for (t, z) in self.times.iter().zip(&self.nu) {
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt_f64(*t),
                fmt_f64(z.re),
                fmt_f64(z.im),
                fmt_f64(z.norm()),
                fmt_f64(z.norm_sqr())
            )?;
        }
        Ok(())
    }
}

/// ν(t) = Σ q e^{-i w t} on every grid time.
pub fn echo_series(table: &QuasiprobTable<'_>, grid: &TimeGrid) -> EchoSeries {
    let nu = if table.spectrum.backend() == Backend::StrongCoupling && !table.state.flavor().is_two_fermion() {
        let lines = integer_lines(table);
        match (grid.fft_len(), grid.uniform) {
            (Some(l), _) => lines.eval_fft(grid, l),
            (None, Some((t0, h))) => lines.eval_chirp(t0, h, grid.len()),
            (None, None) => grid.times.par_iter().map(|&t| lines.eval_horner(t)).collect(),
        }
    } else {
        let ctx = RowContext::new(table);
        grid.times.par_iter().map(|&t| ctx.eval(t)).collect()
    };
    EchoSeries { times: grid.times.clone(), nu, spacing: grid.spacing() }
}

/// ν at a single time.
pub fn echo_at(table: &QuasiprobTable<'_>, t: f64) -> Complex64 {
    echo_series(table, &TimeGrid::from_times(vec![t]).expect("finite time")).nu[0]
}

/// Quasiprobability aggregated by integer energy transfer, Q_w for
/// w = w_min, w_min + 1, ….
struct IntegerLines {
    w_min: i64,
    q: Vec<Complex64>,
}

fn integer_lines(table: &QuasiprobTable<'_>) -> IntegerLines {
    let levels = table.state.levels();
    let max_n = levels.iter().copied().max().unwrap_or(0) as i64;
    // strong coupling: w = 2r + 1 - n
    let w_min = 1 - max_n;
    let w_max = 2 * table.rows() as i64 - 1;
    let mut q = vec![ComplexNeumaier::default(); (w_max - w_min + 1) as usize];
    table.for_each(|e| {
        let w = e.w.round() as i64;
        debug_assert!((e.w - w as f64).abs() < 1e-9);
        q[(w - w_min) as usize].add(e.q);
    });
    IntegerLines { w_min, q: q.iter().map(|c| c.value()).collect() }
}

impl IntegerLines {
    fn eval_horner(&self, t: f64) -> Complex64 {
        let z = Complex64::from_polar(1.0, -t);
        let mut acc = Complex64::default();
        for q in self.q.iter().rev() {
            acc = acc * z + q;
        }
        acc * Complex64::from_polar(1.0, -(self.w_min as f64) * t)
    }

    /// ν(t0 + jh) with h = 2π/L through one length-L FFT.
    fn eval_fft(&self, grid: &TimeGrid, l: usize) -> Vec<Complex64> {
        let (t0, _) = grid.uniform.expect("uniform grid");
        let mut bins = vec![ComplexNeumaier::default(); l];
        for (i, q) in self.q.iter().enumerate() {
            let w = self.w_min + i as i64;
            let shifted = if t0 == 0.0 { *q } else { q * Complex64::from_polar(1.0, -(w as f64) * t0) };
            bins[w.rem_euclid(l as i64) as usize].add(shifted);
        }
        let mut buf: Vec<Complex64> = bins.iter().map(|b| b.value()).collect();
        FftPlanner::new().plan_fft_forward(l).process(&mut buf);
        (0..grid.len()).map(|j| buf[j % l]).collect()
    }
}

/// Fractional part of r·m in cycles, with r·m formed exactly by a fused
/// multiply-add so that large integer m keeps full phase precision.
fn frac_cycles(r: f64, m: f64) -> f64 {
    let p = r * m;
    let e = r.mul_add(m, -p);
    (p - p.round()) + e
}

/// e^{-2πi r m}
fn unit_phase(r: f64, m: f64) -> Complex64 {
    Complex64::from_polar(1.0, -TAU * frac_cycles(r, m))
}

impl IntegerLines {
    /// ν(t0 + jh), j < points, for any spacing h by the chirp-z transform:
    /// nj = (n² + j² - (j - n)²)/2 turns the sum into one convolution.
    fn eval_chirp(&self, t0: f64, h: f64, points: usize) -> Vec<Complex64> {
        let lines = self.q.len();
        let size = (lines + points - 1).next_power_of_two();
        // m² stays exact below 2^26
        assert!(size < 1 << 26, "chirp transform of {size} points is out of range");
        let (r0, rh) = (t0 / TAU, 0.5 * h / TAU);
        let chirp = |m: usize| unit_phase(rh, (m as f64) * (m as f64));
        let mut a = vec![Complex64::default(); size];
        for (n, q) in self.q.iter().enumerate() {
            a[n] = q * unit_phase(r0, n as f64) * chirp(n);
        }
        let mut b = vec![Complex64::default(); size];
        for m in 0..points.max(lines) {
            let c = chirp(m).conj();
            if m < points {
                b[m] = c;
            }
            if m > 0 && m < lines {
                b[size - m] = c;
            }
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        forward.process(&mut a);
        forward.process(&mut b);
        for (x, y) in a.iter_mut().zip(&b) {
            *x *= y;
        }
        planner.plan_fft_inverse(size).process(&mut a);
        let norm = 1.0 / size as f64;
        (0..points)
            .map(|j| {
                let t = t0 + j as f64 * h;
                a[j] * norm * chirp(j) * Complex64::from_polar(1.0, -(self.w_min as f64) * t)
            })
            .collect()
    }
}

/// Per-row data for the row-factorized echo.
struct RowContext<'t, 'a> {
    table: &'t QuasiprobTable<'a>,
    energies: &'t [f64],
    level_energy: Vec<f64>,
}

impl<'t, 'a> RowContext<'t, 'a> {
    fn new(table: &'t QuasiprobTable<'a>) -> Self {
        let level_energy = table.state.levels().iter().map(|&n| energy_unperturbed(n)).collect();
        Self { table, energies: table.spectrum.energies(), level_energy }
    }

    fn eval(&self, t: f64) -> Complex64 {
        let tab = self.table;
        let st = tab.state;
        let rows = tab.rows();
        let phase = |e: f64| Complex64::from_polar(1.0, -e * t);
        match st.flavor() {
            Flavor::PureSingle => {
                // conj(α_i) e^{+iE_n t}
                let u: Vec<Complex64> =
                    st.amplitudes().iter().zip(&self.level_energy).map(|(a, &e)| a.conj() * phase(-e)).collect();
                let mut acc = ComplexNeumaier::default();
                for r in 0..rows {
                    let mut g = Complex64::default();
                    for (i, ui) in u.iter().enumerate() {
                        g += ui * tab.lam(r, i);
                    }
                    acc.add(tab.beta[r] * g * phase(self.energies[r]));
                }
                acc.value()
            }
            Flavor::DiagonalSingle => {
                let mut total = ComplexNeumaier::default();
                let mut per_level = vec![ComplexNeumaier::default(); st.len()];
                for r in 0..rows {
                    let er = phase(self.energies[r]);
                    for (i, acc) in per_level.iter_mut().enumerate() {
                        let l = tab.lam(r, i);
                        acc.add(er * (l * l));
                    }
                }
                for (i, acc) in per_level.iter().enumerate() {
                    total.add(acc.value() * st.weights()[i] * phase(-self.level_energy[i]));
                }
                total.value()
            }
            Flavor::PureTwoFermion => {
                let a = st.core().expect("pair state has a core orbital");
                let nl = st.len();
                let u: Vec<Complex64> =
                    st.amplitudes().iter().zip(&self.level_energy).map(|(x, &e)| x.conj() * phase(-e)).collect();
                // ν = e^{iE_a t} (A·B - C·D)
                let (mut sa, mut sb, mut sc, mut sd) = Default::default();
                for r in 0..rows {
                    let er = phase(self.energies[r]);
                    let la = tab.core_col[r];
                    let lr = &tab.lambda[r * nl..(r + 1) * nl];
                    let mut gbar = Complex64::default();
                    for i in 0..nl {
                        gbar += u[i] * lr[i];
                    }
                    let big_b = tab.beta[r];
                    add(&mut sa, er * (la * la));
                    add(&mut sb, er * big_b * gbar);
                    add(&mut sc, er * gbar * la);
                    add(&mut sd, er * big_b * la);
                }
                let (sa, sb, sc, sd): (ComplexNeumaier, ComplexNeumaier, ComplexNeumaier, ComplexNeumaier) =
                    (sa, sb, sc, sd);
                phase(-energy_unperturbed(a)) * (sa.value() * sb.value() - sc.value() * sd.value())
            }
            Flavor::DiagonalTwoFermion => {
                let a = st.core().expect("pair state has a core orbital");
                let nl = st.len();
                let mut aa = ComplexNeumaier::default();
                let mut ab = vec![ComplexNeumaier::default(); nl];
                let mut bb = vec![ComplexNeumaier::default(); nl];
                for r in 0..rows {
                    let er = phase(self.energies[r]);
                    let la = tab.core_col[r];
                    let lr = &tab.lambda[r * nl..(r + 1) * nl];
                    aa.add(er * (la * la));
                    for i in 0..nl {
                        ab[i].add(er * (la * lr[i]));
                        bb[i].add(er * (lr[i] * lr[i]));
                    }
                }
                let aa = aa.value();
                let ea = energy_unperturbed(a);
                let mut total = ComplexNeumaier::default();
                for i in 0..nl {
                    let x = ab[i].value();
                    let det = aa * bb[i].value() - x * x;
                    total.add(det * st.weights()[i] * phase(-(ea + self.level_energy[i])));
                }
                total.value()
            }
        }
    }
}

#[inline]
fn add(acc: &mut ComplexNeumaier, z: Complex64) {
    acc.add(z)
}

/// Strong-coupling echo of cos(θ/2)|0⟩ + e^{iφ} sin(θ/2)|2⟩ in closed form,
///
/// ν(t) = (2/π)[arcsin(e^{-it}) - (√(1-e^{-2it})/4)(e^{it}(cos θ - 1) - 2√2 cos(φ-t) sin θ)]
///
/// with principal branches of the complex arcsine and square root. The cross
/// term carries the sign of Λ_{m,2}/Λ_{m,0} < 0; with a plus sign the formula
/// describes the state with φ shifted by π instead.
pub fn echo_closed_form_two_level(theta: f64, phi: f64, t: f64) -> Complex64 {
    let z = Complex64::from_polar(1.0, -t);
    // 1 - e^{-2it} = 2i sin(t) e^{-it}
    let root = (Complex64::new(0.0, 2.0 * t.sin()) * z).sqrt();
    let bracket = Complex64::from_polar(1.0, t) * (theta.cos() - 1.0)
        - 2.0 * std::f64::consts::SQRT_2 * (phi - t).cos() * theta.sin();
    (z.asin() - root / 4.0 * bracket) * (2.0 / PI)
}

/// Default cusp threshold on |Δ²|ν|| / h.
pub const CUSP_THRESHOLD: f64 = 1.0;

/// Times at which |ν| has a cusp: runs of grid points where the discrete
/// second difference of |ν|, divided by the spacing h, exceeds `threshold`.
/// One time is reported per run, at its largest second difference. The two
/// end points use one-sided differences.
pub fn detect_cusps(series: &EchoSeries, threshold: f64) -> Result<Vec<f64>> {
    let h = series
        .spacing
        .ok_or_else(|| Error::InvalidParameter("cusp detection needs a uniform time grid".into()))?;
    let n = series.len();
    if n < 3 || h <= 0.0 {
        return Err(Error::InvalidParameter("cusp detection needs at least 3 grid points".into()));
    }
    let a = series.abs();
    let score = |j: usize| -> f64 {
        let d2 = match j {
            0 => a[0] - 2.0 * a[1] + a[2],
            j if j == n - 1 => a[n - 1] - 2.0 * a[n - 2] + a[n - 3],
            j => a[j + 1] - 2.0 * a[j] + a[j - 1],
        };
        d2.abs() / h
    };
    let scores: Vec<f64> = (0..n).map(score).collect();
    let mut out = Vec::new();
    let mut j = 0;
    while j < n {
        if scores[j] > threshold {
            let mut best = j;
            while j < n && scores[j] > threshold {
                if scores[j] > scores[best] {
                    best = j;
                }
                j += 1;
            }
            out.push(series.times[best]);
        } else {
            j += 1;
        }
    }
    Ok(out)
}

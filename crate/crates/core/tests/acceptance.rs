//! Acceptance criteria 1-11. Each criterion prints one PASS/FAIL line with
//! the measured numbers; the process exits non-zero if any criterion fails.

use num_complex::Complex64;
use quench::echo::{echo_closed_form_two_level, echo_series, kdq_table, TimeGrid};
use quench::scaling::{fit_growth_curve, fit_time_laws, Admissibility, LawForm, ScalingFit};
use quench::spectrum::{
    build_finite_spectrum, build_strong_spectrum, strong_overlap_ground, DefectStrength, PerturbedSpectrum,
};
use quench::states::{dephase, equal_superposition, two_fermion_superposition, two_level, InitialState};
use quench::workstats::{
    average_work_direct, average_work_moment, equal_superposition_slope, first_local_minimum, nonpositivity,
    qsl_curve, qsl_time, truncated_variance, variance_growth_exponent, ASYMPTOTIC_SLOPE,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

const FINITE_CUTOFF: usize = 4000;
const STRONG_CUTOFF: usize = 1_000_000;
const PAIR_CUTOFF: usize = 1000;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

/// Spectra shared between criteria.
#[derive(Default)]
struct Spectra {
    finite: HashMap<(u64, usize), PerturbedSpectrum>,
    strong: Option<PerturbedSpectrum>,
}

impl Spectra {
    fn finite(&mut self, k: f64, m: usize) -> &PerturbedSpectrum {
        self.finite.entry((k.to_bits(), m)).or_insert_with(|| build_finite_spectrum(k, m).unwrap())
    }

    fn strong(&mut self) -> &PerturbedSpectrum {
        self.strong.get_or_insert_with(|| build_strong_spectrum(STRONG_CUTOFF).unwrap())
    }
}

fn echo_abs(st: &InitialState, sp: &PerturbedSpectrum, grid: &TimeGrid) -> Vec<f64> {
    echo_series(&kdq_table(st, sp).unwrap(), grid).abs()
}

fn strictly_monotone(v: &[f64], increasing: bool) -> bool {
    v.windows(2).all(|w| if increasing { w[1] > w[0] } else { w[1] < w[0] })
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target.abs()
}

// 1. Strong-coupling overlap identities
fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    // C(2j, j)/4^j by its product form
    let mut central = 1.0;
    for j in 0..=500u64 {
        if j > 0 {
            central *= (2 * j - 1) as f64 / (2 * j) as f64;
        }
        let em = 2.0 / PI * central / (2 * j + 1) as f64;
        let lam = strong_overlap_ground(2 * j).unwrap();
        worst = worst.max((lam * lam - em).abs() / em);
    }
    let total: f64 = (0..1_000_000u64).map(|j| strong_overlap_ground(2 * j).unwrap().powi(2)).sum();
    let elapsed = start.elapsed().as_secs_f64();
    Outcome::new(
        worst <= 1e-10 && total >= 0.999 && elapsed < 1.0,
        format!("max rel dev {worst:.2e} (tol 1e-10), sum over 1e6 terms {total:.6} (>= 0.999), {elapsed:.2}s (< 1s)"),
    )
}

// 2. Cusp theorem
fn criterion_2(spectra: &mut Spectra) -> Outcome {
    let start = Instant::now();
    let sp = spectra.strong();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut series_dev, mut closed_dev, mut mismatch, mut deficit): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..20 {
        let (theta, phi) = (rng.gen_range(0.05..PI - 0.05), rng.gen_range(0.0..2.0 * PI));
        let st = two_level(theta, phi).unwrap();
        let table = kdq_table(&st, sp).unwrap();
        deficit = deficit.max(1.0 - table.sum().re);
        // cusp times first, then ten random times away from them
        let mut times = vec![PI, 2.0 * PI];
        while times.len() < 12 {
            let t: f64 = rng.gen_range(0.0..2.0 * PI);
            if (0..=2).all(|s| (t - s as f64 * PI).abs() > 0.05) {
                times.push(t);
            }
        }
        let nu = echo_series(&table, &TimeGrid::from_times(times.clone()).unwrap()).nu;
        for (j, &t) in times.iter().enumerate() {
            let closed = echo_closed_form_two_level(theta, phi, t);
            if j < 2 {
                series_dev = series_dev.max((nu[j].norm() - 1.0).abs());
                closed_dev = closed_dev.max((closed.norm() - 1.0).abs());
            } else {
                mismatch = mismatch.max((nu[j] - closed).norm());
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    Outcome::new(
        series_dev <= 1e-4 && closed_dev <= 1e-4 && mismatch <= 1e-6 && elapsed < 10.0,
        format!(
            "series ||nu(s pi)|-1| {series_dev:.2e}, closed form {closed_dev:.2e} (tol 1e-4); \
             series vs closed form elsewhere {mismatch:.2e} (tol 1e-6); \
             truncation deficit 1-sum(q) up to {deficit:.2e}; {elapsed:.1}s (< 10s, spectrum shared)"
        ),
    )
}

// 3. Periodicity at infinite coupling
fn criterion_3(spectra: &mut Spectra) -> Outcome {
    let sp = spectra.strong();
    let h = PI / 1000.0;
    let grid = TimeGrid::uniform(0.0, 2.0 * PI - h, 2000).unwrap();
    let mut worst: f64 = 0.0;
    for n in 1..=20 {
        let a = echo_abs(&equal_superposition(n).unwrap(), sp, &grid);
        for j in 0..1000 {
            worst = worst.max((a[j + 1000] - a[j]).abs());
        }
    }
    Outcome::new(worst <= 1e-3, format!("max ||nu(t+pi)|-|nu(t)|| over N<=20, 2000 points: {worst:.2e} (tol 1e-3)"))
}

// 4. Scaling-law signs and Table 1
fn criterion_4(spectra: &mut Spectra) -> Outcome {
    // (k, coherent β, coherent γ, diagonal β, diagonal γ) as printed
    let table1 = [
        (1.0, (0.06, 1.34), (0.044, -0.49), (0.06, 1.36), (-0.45, 0.95)),
        (10.0, (0.85, 0.98), (0.15, -0.21), (0.73, 1.01), (-0.46, 1.63)),
        (100.0, (0.6, 0.52), (0.36, -0.042), (0.48, 0.47), (-0.46, 1.82)),
    ];
    let window = TimeGrid::uniform(0.018, 0.11, 30).unwrap();
    let early = TimeGrid::uniform(0.002, 0.2, 100).unwrap();
    let band = Admissibility::default();
    let n_range: Vec<usize> = (2..=20).collect();
    let mut pass = true;
    let mut notes = Vec::new();
    let mut worst_coef: f64 = 0.0;
    let mut late_gamma = f64::NAN;
    for (k, cb, cg, db, dg) in table1 {
        let sp = spectra.finite(k, FINITE_CUTOFF);
        for diag in [false, true] {
            let states: Vec<InitialState> = n_range
                .iter()
                .map(|&n| {
                    let s = equal_superposition(n).unwrap();
                    if diag {
                        dephase(&s).unwrap()
                    } else {
                        s
                    }
                })
                .collect();
            let fam = if diag { "diag-equal" } else { "equal" };
            let rows_w: Vec<Vec<f64>> = states.iter().map(|s| echo_abs(s, sp, &window)).collect();
            let fit = ScalingFit::from_echoes(
                DefectStrength::Finite(k),
                fam,
                n_range.clone(),
                window.times().to_vec(),
                &rows_w,
                &band,
            )
            .unwrap();
            let laws = fit_time_laws(&fit, diag).unwrap();
            let (b, g) = (laws.beta_law.unwrap(), laws.gamma_law.unwrap());
            assert_eq!(g.form, if diag { LawForm::Affine } else { LawForm::Power });
            let (pb, pg) = if diag { (db, dg) } else { (cb, cg) };
            let coefs = [(b.b0, pb.0), (b.b1, pb.1), (g.g0, pg.0), (g.g1, pg.1)];
            for (ours, theirs) in coefs {
                let rel = (ours - theirs).abs() / theirs.abs();
                worst_coef = worst_coef.max(rel);
                pass &= rel <= 0.25;
            }
            notes.push(format!(
                "k={k} {fam}: beta {:.3} t^{:.3} (paper {} t^{}), gamma {} (paper {:?})",
                b.b0,
                b.b1,
                pb.0,
                pb.1,
                match g.form {
                    LawForm::Power => format!("{:.3} t^{:.3}", g.g0, g.g1),
                    LawForm::Affine => format!("{:.3} + {:.3} t", g.g0, g.g1),
                },
                pg
            ));
            if diag {
                let rows_e: Vec<Vec<f64>> = states.iter().map(|s| echo_abs(s, sp, &early)).collect();
                let fit_e = ScalingFit::from_echoes(
                    DefectStrength::Finite(k),
                    fam,
                    n_range.clone(),
                    early.times().to_vec(),
                    &rows_e,
                    &band,
                )
                .unwrap();
                let ok = fit_e.gamma.iter().all(|g| matches!(g, Some(g) if *g < 0.0));
                pass &= ok;
                if !ok {
                    notes.push(format!("k={k}: diagonal gamma not negative on all of (0, 0.2]"));
                }
            } else {
                let ok = fit.gamma.iter().all(|g| matches!(g, Some(g) if *g > 0.0));
                pass &= ok;
                if !ok {
                    notes.push(format!("k={k}: coherent gamma not positive across the window"));
                }
                if k == 100.0 {
                    late_gamma = fit.gamma.last().copied().flatten().unwrap_or(f64::NAN);
                }
            }
        }
    }
    let late_ok = (late_gamma - 0.41).abs() <= 0.05;
    pass &= late_ok;
    Outcome::new(
        pass,
        format!(
            "window t in [0.018, 0.11], N 2..20, M={FINITE_CUTOFF}; worst Table 1 coefficient deviation {:.1}% (tol 25%); \
             k=100 late-window gamma {late_gamma:.3} (0.41 +- 0.05); {}",
            100.0 * worst_coef,
            notes.join("; ")
        ),
    )
}

/// ⟨w⟩/(k√N) for the alternating equal superposition by direct summation of
/// k|Σ α_n ψ_n(0)|² with ψ_n(0) from its two-step recursion.
fn slope_oracle(n: usize) -> f64 {
    let mut psi = (2.0 * PI).powf(-0.25);
    let mut sum = 0.0;
    for j in 0..n {
        if j > 0 {
            let m = 2.0 * (j as f64 - 1.0);
            psi *= -((m + 1.0) / (m + 2.0)).sqrt();
        }
        let alpha = if j % 2 == 0 { 1.0 } else { -1.0 } / (n as f64).sqrt();
        sum += alpha * psi;
    }
    sum * sum / (n as f64).sqrt()
}

// 5. Average work
fn criterion_5() -> Outcome {
    let (s3, s4) = (equal_superposition_slope(1000), equal_superposition_slope(10_000));
    let drift = (s4 - s3).abs() / s4;
    let mut oracle_dev: f64 = 0.0;
    for n in [1, 7, 50, 1000, 10_000] {
        let lib = average_work_direct(&equal_superposition(n).unwrap(), DefectStrength::Finite(1.0)).unwrap()
            / (n as f64).sqrt();
        oracle_dev = oracle_dev.max((lib - slope_oracle(n)).abs() / slope_oracle(n));
    }
    let mut trends = true;
    for k in [1.0, 2.0, 5.0, 10.0] {
        let kk = DefectStrength::Finite(k);
        let coh: Vec<f64> =
            (1..=50).map(|n| average_work_direct(&equal_superposition(n).unwrap(), kk).unwrap()).collect();
        let diag: Vec<f64> = (1..=50)
            .map(|n| average_work_direct(&dephase(&equal_superposition(n).unwrap()).unwrap(), kk).unwrap())
            .collect();
        trends &= strictly_monotone(&coh, true) && strictly_monotone(&diag, false);
    }
    Outcome::new(
        drift < 0.01 && oracle_dev < 1e-10 && trends,
        format!(
            "<w>/(k sqrt N): {s3:.6} at N=1e3, {s4:.6} at N=1e4, drift {:.3}% per decade (< 1%); \
             oracle agreement {oracle_dev:.1e}; printed constant {ASYMPTOTIC_SLOPE:.6} differs from the N=1e4 value by {:.2}%; \
             superposition increasing and diagonal decreasing in N<=50 for k in {{1,2,5,10}}: {trends}",
            100.0 * drift,
            100.0 * (s4 - ASYMPTOTIC_SLOPE).abs() / ASYMPTOTIC_SLOPE
        ),
    )
}

// 6. KDQ first moment against the direct average
fn criterion_6(spectra: &mut Spectra) -> Outcome {
    let cutoffs = [1000, 2000, FINITE_CUTOFF];
    let floor = 1e-12;
    let mut worst: f64 = 0.0;
    let mut monotone = true;
    for n in 1..=10 {
        for diag in [false, true] {
            let s = equal_superposition(n).unwrap();
            let st = if diag { dephase(&s).unwrap() } else { s };
            let direct = average_work_direct(&st, DefectStrength::Finite(1.0)).unwrap();
            let errs: Vec<f64> = cutoffs
                .iter()
                .map(|&m| {
                    let table = kdq_table(&st, spectra.finite(1.0, m)).unwrap();
                    (average_work_moment(&table) - direct).abs() / direct
                })
                .collect();
            worst = worst.max(errs[errs.len() - 1]);
            monotone &= errs.windows(2).all(|w| w[1] <= w[0] || w[1] <= floor);
        }
    }
    Outcome::new(
        worst <= 0.01 && monotone,
        format!(
            "k=1, N<=10, both flavors: max rel error {worst:.2e} at M={FINITE_CUTOFF} (tol 1%); \
             non-increasing under doubling 1000 -> 2000 -> 4000 or below the {floor:.0e} rounding floor: {monotone}"
        ),
    )
}

// 7. Variance divergence
fn criterion_7() -> Outcome {
    let st = equal_superposition(10).unwrap();
    let k = DefectStrength::Finite(1.0);
    let values: Vec<f64> =
        [1_000, 10_000, 100_000, 1_000_000].iter().map(|&m| truncated_variance(&st, k, m).unwrap().value).collect();
    let incr: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let grows = incr.iter().all(|&d| d > 0.0);
    let no_plateau = incr.windows(2).all(|w| w[1] >= w[0]);
    let cutoffs: Vec<usize> = (0..=10).map(|i| 1000usize << i).filter(|&m| m <= 1_000_000).collect();
    let exponent = variance_growth_exponent(&cutoffs).unwrap();
    Outcome::new(
        grows && no_plateau && (0.4..=0.6).contains(&exponent),
        format!(
            "truncated <V^2> at M=1e3..1e6: {:?}; decade increments non-shrinking: {no_plateau}; growth exponent {exponent:.4} (in [0.4, 0.6])",
            values.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>()
        ),
    )
}

fn growth_series(states: impl Iterator<Item = InitialState>, sp: &PerturbedSpectrum) -> Vec<(f64, f64)> {
    states.map(|st| (st.len() as f64, nonpositivity(&kdq_table(&st, sp).unwrap()))).collect()
}

// 8. Non-positivity
fn criterion_8(spectra: &mut Spectra) -> Outcome {
    let mut dephased_worst: f64 = 0.0;
    for k in [1.0, 2.0, 5.0, 10.0, 100.0, 1000.0] {
        let sp = spectra.finite(k, FINITE_CUTOFF);
        for n in 1..=50 {
            let st = dephase(&equal_superposition(n).unwrap()).unwrap();
            dephased_worst = dephased_worst.max(nonpositivity(&kdq_table(&st, sp).unwrap()).abs());
        }
    }
    {
        let sp = spectra.finite(100.0, PAIR_CUTOFF);
        for n in 1..=50 {
            let st = dephase(&two_fermion_superposition(n, true).unwrap()).unwrap();
            dephased_worst = dephased_worst.max(nonpositivity(&kdq_table(&st, sp).unwrap()).abs());
        }
    }
    let strong_deficit = {
        let st = dephase(&equal_superposition(10).unwrap()).unwrap();
        nonpositivity(&kdq_table(&st, spectra.strong()).unwrap())
    };

    let single = |spectra: &mut Spectra, k: f64| {
        let pts = growth_series((1..=50).map(|n| equal_superposition(n).unwrap()), spectra.finite(k, FINITE_CUTOFF));
        (fit_growth_curve(&pts).unwrap(), pts.last().unwrap().1)
    };
    let (g100, last100) = single(spectra, 100.0);
    let (g10, last10) = single(spectra, 10.0);
    let pair_pts = growth_series(
        (1..=50).map(|n| two_fermion_superposition(n, true).unwrap()),
        spectra.finite(100.0, PAIR_CUTOFF),
    );
    let gp = fit_growth_curve(&pair_pts).unwrap();

    let dephased_ok = dephased_worst <= 1e-6;
    let single_ok = (g100.b - 0.17).abs() <= 0.05 && within(g100.a, 1.08, 0.3);
    let pair_ok = (gp.b - 0.07).abs() <= 0.04 && within(gp.a, 3.83, 0.3);
    Outcome::new(
        dephased_ok && single_ok && pair_ok,
        format!(
            "dephased |N_Re| max {dephased_worst:.1e} (tol 1e-6; finite k in {{1,2,5,10,100,1000}} and two fermions at k=100; \
             at k=inf the truncated table gives {strong_deficit:.1e}); \
             single particle k=100: N_Re = {:.3}(N^{:.4} - 1), N_Re(50)={last100:.3} (paper 1.08, 0.17 +- 0.05) -> {single_ok}; \
             [k=10 for reference: {:.3}(N^{:.4} - 1), N_Re(50)={last10:.3}]; \
             two fermions k=100 M={PAIR_CUTOFF}: {:.3}(N^{:.4} - 1), N_Re(50)={:.3} (paper 3.83, 0.07 +- 0.04) -> {pair_ok}",
            g100.a,
            g100.b,
            g10.a,
            g10.b,
            gp.a,
            gp.b,
            pair_pts.last().unwrap().1
        ),
    )
}

fn random_state(rng: &mut ChaCha8Rng) -> InitialState {
    let count = rng.gen_range(2..=6);
    let mut levels: Vec<u64> = Vec::new();
    while levels.len() < count {
        let n = 2 * rng.gen_range(0..=20u64);
        if !levels.contains(&n) {
            levels.push(n);
        }
    }
    let raw: Vec<Complex64> = (0..count).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let norm = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    InitialState::pure(levels, raw.iter().map(|z| z / norm).collect(), "random").unwrap()
}

// 9. Quantum speed limit
fn criterion_9(spectra: &mut Spectra) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let grid = TimeGrid::uniform(0.0, 2.0 * PI, 2000).unwrap();
    let eps = 1e-12;
    let mut violating = 0;
    let mut worst_excess: f64 = 0.0;
    for _ in 0..20 {
        let st = random_state(&mut rng);
        let k = rng.gen_range(0.5..50.0);
        let sp = build_finite_spectrum(k, 1000).unwrap();
        let series = echo_series(&kdq_table(&st, &sp).unwrap(), &grid);
        let w = average_work_direct(&st, DefectStrength::Finite(k)).unwrap();
        let excess = series
            .times
            .iter()
            .zip(qsl_curve(&series, w).unwrap())
            .map(|(t, b)| b - t)
            .fold(f64::MIN, f64::max);
        if excess > eps {
            violating += 1;
        }
        worst_excess = worst_excess.max(excess);
    }

    let ns = [1usize, 2, 3, 5, 10, 20, 30, 40, 50];
    let half = TimeGrid::uniform(0.0, PI, 2000).unwrap();
    let mut trends_ok = true;
    let mut notes = Vec::new();
    for k in [1.0, 2.0, 5.0, 10.0] {
        let sp = spectra.finite(k, FINITE_CUTOFF);
        for diag in [false, true] {
            let values: Vec<Option<f64>> = ns
                .iter()
                .map(|&n| {
                    let s = equal_superposition(n).unwrap();
                    let st = if diag { dephase(&s).unwrap() } else { s };
                    let series = echo_series(&kdq_table(&st, sp).unwrap(), &half);
                    let w = average_work_direct(&st, DefectStrength::Finite(k)).unwrap();
                    first_local_minimum(&series, PI).map(|tau| qsl_time(&series, w, tau).unwrap())
                })
                .collect();
            let complete: Option<Vec<f64>> = values.iter().copied().collect();
            let ok = complete.as_deref().is_some_and(|v| strictly_monotone(v, diag));
            trends_ok &= ok;
            if !ok {
                let shown: Vec<String> =
                    values.iter().map(|v| v.map_or("none".into(), |x| format!("{x:.4}"))).collect();
                notes.push(format!("k={k} {}: [{}]", if diag { "dephased" } else { "coherent" }, shown.join(", ")));
            }
        }
    }
    Outcome::new(
        violating == 0 && trends_ok,
        format!(
            "bound tau >= tau_QSL(tau): {violating}/20 random states violate it, worst excess {worst_excess:.3e}; \
             tau_QSL at the first minimum over N={ns:?}: trends hold: {trends_ok}{}",
            if notes.is_empty() { String::new() } else { format!("; failing series {}", notes.join("; ")) }
        ),
    )
}

// 10. Finite-k solver
fn criterion_10(spectra: &mut Spectra) -> Outcome {
    let mut interlacing = true;
    for k in [1.0, 10.0, 100.0, 1000.0] {
        let sp = spectra.finite(k, FINITE_CUTOFF);
        let m = sp.cutoff();
        for r in 0..m {
            let (lo, e) = (2.0 * r as f64 + 0.5, sp.energy(r));
            let ok = if r + 1 < m { lo < e && e < lo + 2.0 } else { lo < e };
            interlacing &= ok;
        }
    }
    let dense_dev = dense_energy_deviation(512, &[1.0, 10.0, 100.0, 1000.0]);
    let e0 = build_finite_spectrum(1e6, FINITE_CUTOFF).unwrap().energy(0);
    Outcome::new(
        interlacing && dense_dev <= 1e-9 && (e0 - 1.5).abs() <= 0.01,
        format!(
            "strict interlacing at k in {{1,10,100,1000}}, M={FINITE_CUTOFF}: {interlacing}; \
             dense oracle at M=512: max energy deviation {dense_dev:.2e} (tol 1e-9); E'_0(k=1e6) = {e0:.6} (1.5 +- 0.01)"
        ),
    )
}

fn dense_energy_deviation(m: usize, ks: &[f64]) -> f64 {
    use nalgebra::{DMatrix, SymmetricEigen};
    let mut psi = vec![(2.0 * PI).powf(-0.25)];
    for j in 1..m {
        let n = 2.0 * (j as f64 - 1.0);
        psi.push(-psi[j - 1] * ((n + 1.0) / (n + 2.0)).sqrt());
    }
    let mut worst: f64 = 0.0;
    for &k in ks {
        let h = DMatrix::from_fn(m, m, |i, j| k * psi[i] * psi[j] + if i == j { 2.0 * i as f64 + 0.5 } else { 0.0 });
        let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let sp = build_finite_spectrum(k, m).unwrap();
        for (r, e) in ev.iter().enumerate() {
            worst = worst.max((sp.energy(r) - e).abs());
        }
    }
    worst
}

// 11. Determinism of sweeps
fn criterion_11() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let args = [
        "sweep", "--states", "equal", "diag-equal", "coherent:xi=1.2", "fermi2", "--N", "1:6", "--k", "5,inf",
        "--cutoff", "500", "--points", "400",
    ];
    let mut outputs = Vec::new();
    for (i, workers) in ["1", "2", "1"].iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_quench"))
            .args(["--cache-dir", cache.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", workers])
            .args(args)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        let files: Vec<Vec<u8>> =
            ["sweep_echo.csv", "sweep_work.csv"].iter().map(|f| std::fs::read(out.join(f)).unwrap()).collect();
        outputs.push(files);
    }
    let same = outputs.windows(2).all(|w| w[0] == w[1]);
    let bytes: usize = outputs[0].iter().map(Vec::len).sum();
    Outcome::new(same, format!("three sweep runs (cold cache, then warm, 1/2/1 workers) byte-identical: {same} ({bytes} bytes)"))
}

fn main() {
    let mut spectra = Spectra::default();
    let mut results = Vec::new();
    let mut run = |n: usize, name: &str, f: &mut dyn FnMut(&mut Spectra) -> Outcome| {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| f(&mut spectra)))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Outcome::new(false, format!("panicked: {msg}"))
            });
        println!(
            "criterion {n:>2} {name}: {} [{:.1}s] {}",
            if outcome.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            outcome.detail
        );
        results.push(outcome.pass);
    };
    run(1, "strong-coupling overlaps", &mut |_| criterion_1());
    run(2, "cusp theorem", &mut criterion_2);
    run(3, "periodicity", &mut criterion_3);
    run(4, "scaling-law signs and coefficients", &mut criterion_4);
    run(5, "average work", &mut |_| criterion_5());
    run(6, "KDQ first moment", &mut criterion_6);
    run(7, "variance divergence", &mut |_| criterion_7());
    run(8, "non-positivity", &mut criterion_8);
    run(9, "quantum speed limit", &mut criterion_9);
    run(10, "finite-k solver", &mut criterion_10);
    run(11, "determinism", &mut |_| criterion_11());
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}

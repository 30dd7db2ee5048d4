//! Independent oracles: dense diagonalization of the truncated Hamiltonian and
//! echoes assembled from explicit propagator matrix elements.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use quench::echo::{echo_series, kdq_table, TimeGrid};
use quench::spectrum::build_finite_spectrum;
use quench::states::{dephase, equal_superposition, two_fermion_superposition, InitialState};

/// ψ_{2j}(0) by the two-step recursion ψ_{n+2}(0) = -ψ_n(0) √((n+1)/(n+2)).
fn origin_values(m: usize) -> Vec<f64> {
    let mut psi = vec![(2.0 * std::f64::consts::PI).powf(-0.25)];
    for j in 1..m {
        let n = 2.0 * (j as f64 - 1.0);
        psi.push(-psi[j - 1] * ((n + 1.0) / (n + 2.0)).sqrt());
    }
    psi
}

struct Dense {
    energies: Vec<f64>,
    /// column r is the eigenvector of the r-th level, with v[r][r] > 0
    vectors: DMatrix<f64>,
}

fn dense(k: f64, m: usize) -> Dense {
    let psi = DVector::from_vec(origin_values(m));
    let mut h = &psi * psi.transpose() * k;
    for j in 0..m {
        h[(j, j)] += 2.0 * j as f64 + 0.5;
    }
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut vectors = DMatrix::zeros(m, m);
    for (r, &c) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(c).into_owned();
        if v[r] < 0.0 {
            v = -v;
        }
        vectors.set_column(r, &v);
    }
    Dense { energies: order.iter().map(|&c| eig.eigenvalues[c]).collect(), vectors }
}

#[test]
fn finite_k_solver_matches_dense_diagonalization() {
    let m = 512;
    for k in [1.0, 10.0, 100.0, 1000.0] {
        let d = dense(k, m);
        let sp = build_finite_spectrum(k, m).unwrap();
        let mut worst_e: f64 = 0.0;
        let mut worst_v: f64 = 0.0;
        for r in 0..m {
            worst_e = worst_e.max((sp.energy(r) - d.energies[r]).abs());
            for j in 0..m {
                worst_v = worst_v.max((sp.overlap(r, 2 * j as u64) - d.vectors[(j, r)]).abs());
            }
        }
        assert!(worst_e <= 1e-9, "k={k}: energy deviation {worst_e:e}");
        assert!(worst_v <= 1e-9, "k={k}: overlap deviation {worst_v:e}");
    }
}

/// A_ab(t) = ⟨a| e^{iHt} e^{-iH't} |b⟩ in the dense eigenbasis.
fn propagator(d: &Dense, a: usize, b: usize, t: f64) -> Complex64 {
    let ea = 2.0 * a as f64 + 0.5;
    let mut s = Complex64::default();
    for r in 0..d.energies.len() {
        s += d.vectors[(a, r)] * d.vectors[(b, r)] * Complex64::from_polar(1.0, -d.energies[r] * t);
    }
    s * Complex64::from_polar(1.0, ea * t)
}

fn single_oracle(d: &Dense, st: &InitialState, t: f64) -> Complex64 {
    let idx: Vec<usize> = st.levels().iter().map(|&n| n as usize / 2).collect();
    if st.flavor().is_pure() {
        let a = st.amplitudes();
        let mut s = Complex64::default();
        for (i, &x) in idx.iter().enumerate() {
            for (j, &y) in idx.iter().enumerate() {
                s += a[i].conj() * a[j] * propagator(d, x, y, t);
            }
        }
        s
    } else {
        idx.iter().zip(st.weights()).map(|(&x, &p)| p * propagator(d, x, x, t)).sum()
    }
}

fn det2(d: &Dense, a: usize, b: usize, c: usize, e: usize, t: f64) -> Complex64 {
    // ⟨a b| U |c e⟩ for normalized determinants
    propagator(d, a, c, t) * propagator(d, b, e, t) - propagator(d, a, e, t) * propagator(d, b, c, t)
}

fn pair_oracle(d: &Dense, st: &InitialState, t: f64) -> Complex64 {
    let pairs = st.pairs().unwrap();
    let idx: Vec<(usize, usize)> = pairs.iter().map(|&(a, b)| (a as usize / 2, b as usize / 2)).collect();
    if st.flavor().is_pure() {
        let mut s = Complex64::default();
        for (i, &(a, b)) in idx.iter().enumerate() {
            for (j, &(c, e)) in idx.iter().enumerate() {
                let ai = st.pair_amplitude(pairs[i].0, pairs[i].1);
                let aj = st.pair_amplitude(pairs[j].0, pairs[j].1);
                s += ai.conj() * aj * det2(d, a, b, c, e, t);
            }
        }
        s
    } else {
        idx.iter().zip(st.weights()).map(|(&(a, b), &p)| p * det2(d, a, b, a, b, t)).sum()
    }
}

#[test]
fn single_particle_echo_matches_dense_propagator() {
    let m = 128;
    let k = 3.0;
    let d = dense(k, m);
    let sp = build_finite_spectrum(k, m).unwrap();
    let times = vec![0.0, 0.013, 0.4, 1.7, 3.1, 5.9, 12.5];
    let grid = TimeGrid::from_times(times.clone()).unwrap();
    for st in [equal_superposition(6).unwrap(), dephase(&equal_superposition(6).unwrap()).unwrap()] {
        let table = kdq_table(&st, &sp).unwrap();
        let series = echo_series(&table, &grid);
        for (j, &t) in times.iter().enumerate() {
            let want = single_oracle(&d, &st, t);
            assert!((series.nu[j] - want).norm() < 1e-11, "{} t={t}: {} vs {want}", st.label(), series.nu[j]);
        }
    }
}

#[test]
fn two_fermion_echo_matches_slater_determinants() {
    let m = 96;
    let k = 7.0;
    let d = dense(k, m);
    let sp = build_finite_spectrum(k, m).unwrap();
    let times = vec![0.0, 0.05, 0.9, 2.2, 4.0];
    let grid = TimeGrid::from_times(times.clone()).unwrap();
    let states = [
        two_fermion_superposition(1, true).unwrap(),
        two_fermion_superposition(4, true).unwrap(),
        two_fermion_superposition(3, false).unwrap(),
        dephase(&two_fermion_superposition(4, true).unwrap()).unwrap(),
    ];
    for st in &states {
        let table = kdq_table(st, &sp).unwrap();
        let series = echo_series(&table, &grid);
        for (j, &t) in times.iter().enumerate() {
            let want = pair_oracle(&d, st, t);
            assert!((series.nu[j] - want).norm() < 1e-11, "{} t={t}: {} vs {want}", st.label(), series.nu[j]);
        }
    }
}

#[test]
fn single_pair_reduces_to_a_two_by_two_determinant() {
    // |0 2⟩: ν(t) = A_00 A_22 - A_02 A_20 with no interference terms
    let m = 64;
    let k = 2.5;
    let d = dense(k, m);
    let sp = build_finite_spectrum(k, m).unwrap();
    let st = two_fermion_superposition(1, true).unwrap();
    let table = kdq_table(&st, &sp).unwrap();
    for t in [0.3, 1.1, 2.9] {
        let nu = echo_series(&table, &TimeGrid::from_times(vec![t]).unwrap()).nu[0];
        let want = propagator(&d, 0, 0, t) * propagator(&d, 1, 1, t) - propagator(&d, 0, 1, t) * propagator(&d, 1, 0, t);
        assert!((nu - want).norm() < 1e-12, "t={t}");
    }
}

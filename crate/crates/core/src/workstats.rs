//! Work statistics of the quench: Margenau–Hill histogram, non-positivity,
//! average work by direct expectation and by KDQ moment, the truncated second
//! moment and quantum-speed-limit times.

use crate::basis::{psi_at_origin, psi_at_origin_sq};
use crate::echo::{EchoSeries, QuasiprobTable};
use crate::special::Neumaier;
use crate::spectrum::DefectStrength;
use crate::states::{Flavor, InitialState};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Large-N limit of ⟨w⟩/(k√N) for the alternating equal superposition,
/// 8√2/(9π).
pub const ASYMPTOTIC_SLOPE: f64 = 8.0 * std::f64::consts::SQRT_2 / (9.0 * std::f64::consts::PI);

/// Default MHQ bin width, one trap quantum.
pub const DEFAULT_BIN_WIDTH: f64 = 1.0;

/// N_Re = -1 + Σ |Re q|.
pub fn nonpositivity(table: &QuasiprobTable<'_>) -> f64 {
    let parts = table.fold(Neumaier::default, |acc, e| acc.add(e.q.re.abs()));
    let mut total: Neumaier = parts.iter().map(|p| p.value()).collect();
    total.add(-1.0);
    total.value()
}

fn finite_k(k: DefectStrength) -> Result<f64> {
    match k.validate()? {
        DefectStrength::Finite(k) => Ok(k),
        DefectStrength::Infinite => Err(Error::InvalidParameter("average work diverges at infinite coupling".into())),
    }
}

/// ⟨ψ|kδ(x)|ψ⟩ summed exactly over the state's levels. For pair states the
/// one-body expectation of a single determinant is the sum over its two
/// orbitals; there is no exchange contribution for a one-body operator.
pub fn average_work_direct(state: &InitialState, k: DefectStrength) -> Result<f64> {
    let k = finite_k(k)?;
    let core = state.core().map(psi_at_origin_sq).unwrap_or(0.0);
    let partner = match state.flavor() {
        Flavor::PureSingle | Flavor::PureTwoFermion => state.origin_amplitude().norm_sqr(),
        Flavor::DiagonalSingle | Flavor::DiagonalTwoFermion => state
            .levels()
            .iter()
            .zip(state.weights())
            .map(|(&n, &p)| p * psi_at_origin_sq(n))
            .collect::<Neumaier>()
            .value(),
    };
    Ok(k * (core + partner))
}

/// Σ Re(q) w, the first moment of the quasiprobability.
pub fn average_work_moment(table: &QuasiprobTable<'_>) -> f64 {
    let parts = table.fold(Neumaier::default, |acc, e| acc.add(e.q.re * e.w));
    parts.iter().map(|p| p.value()).collect::<Neumaier>().value()
}

/// ⟨w⟩/(k√N) of the equal superposition of N even levels, from the exact
/// finite sum: (2π)^{-1/2} (Σ_{j<N} c_{2j})^2 / N^{3/2}.
pub fn equal_superposition_slope(n: usize) -> f64 {
    let sum: Neumaier = (0..n as u64).map(|j| psi_at_origin(2 * j).abs()).collect();
    let s = sum.value();
    s * s / (n as f64).powf(1.5)
}

/// Truncated ⟨V²⟩ and the cutoff it was computed at.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedVariance {
    pub value: f64,
    pub cutoff: usize,
}

/// Σ_{j<M} ψ_{2j}(0)^2, the norm of the defect state within M even levels.
pub fn origin_norm_sq(cutoff: usize) -> f64 {
    (0..cutoff as u64).map(|j| psi_at_origin_sq(2 * j)).collect::<Neumaier>().value()
}

/// ⟨V²⟩ with the intermediate sum over levels truncated at M even levels:
/// k² |Σ α_n ψ_n(0)|² Σ_{m<2M} ψ_m(0)² (pure) or the weighted analogue
/// (diagonal). Grows without bound in M.
pub fn truncated_variance(state: &InitialState, k: DefectStrength, cutoff: usize) -> Result<TruncatedVariance> {
    let k = finite_k(k)?;
    let origin = match state.flavor() {
        Flavor::PureSingle => state.origin_amplitude().norm_sqr(),
        Flavor::DiagonalSingle => state
            .levels()
            .iter()
            .zip(state.weights())
            .map(|(&n, &p)| p * psi_at_origin_sq(n))
            .collect::<Neumaier>()
            .value(),
        _ => return Err(Error::InvalidParameter("truncated variance is implemented for single-particle states".into())),
    };
    Ok(TruncatedVariance { value: k * k * origin * origin_norm_sq(cutoff), cutoff })
}

/// Slope of ln Σ_{j<M} ψ_{2j}(0)² against ln M by least squares over the
/// given cutoffs (ascending).
pub fn variance_growth_exponent(cutoffs: &[usize]) -> Result<f64> {
    if cutoffs.len() < 2 || cutoffs.windows(2).any(|w| w[1] <= w[0]) || cutoffs[0] == 0 {
        return Err(Error::InvalidParameter("need at least two increasing positive cutoffs".into()));
    }
    let mut acc = Neumaier::default();
    let mut next = 0u64;
    let mut points = Vec::with_capacity(cutoffs.len());
    for &m in cutoffs {
        while next < m as u64 {
            acc.add(psi_at_origin_sq(2 * next));
            next += 1;
        }
        points.push(((m as f64).ln(), acc.value().ln()));
    }
    Ok(crate::scaling::linear_fit(&points)?.slope)
}

/// Bures angle L(t) = arccos |ν(t)|, with |ν| clamped to [0, 1].
pub fn bures_angle(series: &EchoSeries) -> Vec<f64> {
    series.abs().iter().map(|a| a.clamp(0.0, 1.0).acos()).collect()
}

/// τ_QSL(τ) = (1 - |ν(τ)|)/|⟨w⟩| at every grid time. |ν| above one by
/// rounding is clamped, so the result is never negative.
pub fn qsl_curve(series: &EchoSeries, avg_work: f64) -> Result<Vec<f64>> {
    if avg_work == 0.0 || !avg_work.is_finite() {
        return Err(Error::InvalidParameter(format!("speed limit needs finite nonzero average work, got {avg_work}")));
    }
    Ok(series.abs().iter().map(|a| (1.0 - a.min(1.0)) / avg_work.abs()).collect())
}

/// τ_QSL at a grid time τ.
pub fn qsl_time(series: &EchoSeries, avg_work: f64, tau: f64) -> Result<f64> {
    let j = grid_index(series, tau)?;
    Ok(qsl_curve(series, avg_work)?[j])
}

fn grid_index(series: &EchoSeries, tau: f64) -> Result<usize> {
    let tol = 1e-9 * tau.abs().max(1.0);
    series
        .times
        .iter()
        .position(|t| (t - tau).abs() <= tol)
        .ok_or_else(|| Error::InvalidParameter(format!("time {tau} is not on the series grid")))
}

/// First interior grid time t ≤ `t_max` at which |ν| has a local minimum.
pub fn first_local_minimum(series: &EchoSeries, t_max: f64) -> Option<f64> {
    let a = series.abs();
    (1..a.len().saturating_sub(1))
        .take_while(|&j| series.times[j] <= t_max)
        .find(|&j| a[j] < a[j - 1] && a[j] <= a[j + 1])
        .map(|j| series.times[j])
}

/// Σ Re q binned by energy transfer; bins are centred on multiples of the
/// width. Returns (centre, sum) in ascending order.
pub fn mhq_histogram(table: &QuasiprobTable<'_>, bin_width: f64) -> Result<Vec<(f64, f64)>> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidParameter(format!("bin width must be positive, got {bin_width}")));
    }
    let parts = table.fold(BTreeMap::<i64, Neumaier>::new, |acc, e| {
        acc.entry((e.w / bin_width).round() as i64).or_default().add(e.q.re);
    });
    let mut merged = BTreeMap::<i64, Neumaier>::new();
    for part in parts {
        for (bin, v) in part {
            merged.entry(bin).or_default().add(v.value());
        }
    }
    Ok(merged.into_iter().map(|(b, v)| (b as f64 * bin_width, v.value())).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AverageWork {
    pub direct: Option<f64>,
    pub moment: f64,
    /// direct / (k √N) with N the number of levels in the state
    pub slope_fit: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceSummary {
    pub value: Option<f64>,
    pub cutoff: usize,
    pub growth_exponent: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QslSummary {
    pub tau: Option<f64>,
    pub value: Option<f64>,
}

/// Work report written by the `work` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkReport {
    pub state: String,
    pub k: DefectStrength,
    pub cutoff: usize,
    pub n_re: f64,
    pub avg_work: AverageWork,
    pub variance: VarianceSummary,
    pub tau_qsl: QslSummary,
}

/// Assemble a report from a table and, optionally, its echo series. The
/// speed limit is evaluated at `tau`, or at the first minimum of |ν| in
/// [0, π] when `tau` is `None`.
pub fn work_report(table: &QuasiprobTable<'_>, series: Option<&EchoSeries>, tau: Option<f64>) -> Result<WorkReport> {
    let state = table.state();
    let k = table.spectrum().k();
    let cutoff = table.spectrum().cutoff();
    let direct = average_work_direct(state, k).ok();
    let slope_fit = match (direct, k) {
        (Some(w), DefectStrength::Finite(kv)) => Some(w / (kv * (state.len() as f64).sqrt())),
        _ => None,
    };
    let single = !state.flavor().is_two_fermion();
    let variance = if single && direct.is_some() {
        let cutoffs: Vec<usize> = (0..)
            .map(|i| 1usize << i)
            .skip_while(|&m| m < (cutoff / 64).max(1))
            .take_while(|&m| m <= cutoff)
            .collect();
        VarianceSummary {
            value: Some(truncated_variance(state, k, cutoff)?.value),
            cutoff,
            growth_exponent: variance_growth_exponent(&cutoffs).ok(),
        }
    } else {
        VarianceSummary { value: None, cutoff, growth_exponent: None }
    };
    let tau_qsl = match (series, direct) {
        (Some(s), Some(w)) if w > 0.0 => {
            let tau = tau.or_else(|| first_local_minimum(s, std::f64::consts::PI));
            let value = tau.map(|t| qsl_time(s, w, t)).transpose()?;
            QslSummary { tau, value }
        }
        _ => QslSummary { tau, value: None },
    };
    Ok(WorkReport {
        state: state.label().to_string(),
        k,
        cutoff,
        n_re: nonpositivity(table),
        avg_work: AverageWork { direct, moment: average_work_moment(table), slope_fit },
        variance,
        tau_qsl,
    })
}

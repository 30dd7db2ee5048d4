//! Orthogonalization scaling fits: 1 - |ν(t, N)| = β(t) N^{γ(t)} per time,
//! the time laws of β and γ, and the growth curve a(N^b - 1).

use crate::{Error, Result};
use log::warn;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares y = intercept + slope x. Points are sorted first,
/// so the result does not depend on their order.
pub fn linear_fit(points: &[(f64, f64)]) -> Result<LinearFit> {
    if points.len() < 2 {
        return Err(Error::Fit(format!("linear fit needs at least 2 points, got {}", points.len())));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::Fit("non-finite input to linear fit".into()));
    }
    let mut p = points.to_vec();
    p.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = p.len() as f64;
    let mx = p.iter().map(|q| q.0).sum::<f64>() / n;
    let my = p.iter().map(|q| q.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in &p {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::Fit("all abscissae are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).min(1.0) };
    Ok(LinearFit { slope, intercept, r2 })
}

/// Band of 1 - |ν| used in the log-space regression.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    /// smallest usable 1 - |ν|, below which it is rounding noise
    pub floor: f64,
    /// 1 - |ν| must stay at most 1 - ceiling, i.e. |ν| ≥ ceiling
    pub ceiling: f64,
    pub min_points: usize,
}

impl Default for Admissibility {
    fn default() -> Self {
        Self { floor: 1e-6, ceiling: 1e-3, min_points: 3 }
    }
}

impl Admissibility {
    pub fn admits(&self, abs_nu: f64) -> bool {
        let y = 1.0 - abs_nu;
        y.is_finite() && y >= self.floor && y <= 1.0 - self.ceiling
    }
}

/// β, γ and R² of one time slice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SliceFit {
    pub beta: f64,
    pub gamma: f64,
    pub r2: f64,
    pub used: usize,
}

/// Fit ln(1 - |ν|) = ln β + γ ln N over the admissible (N, |ν|) points.
pub fn fit_scaling_at_time(data: &[(usize, f64)], band: &Admissibility) -> Result<SliceFit> {
    let points: Vec<(f64, f64)> = data
        .iter()
        .filter(|&&(_, a)| band.admits(a))
        .map(|&(n, a)| ((n as f64).ln(), (1.0 - a).ln()))
        .collect();
    if points.len() < data.len() {
        log::debug!("{} of {} points outside the admissible band", data.len() - points.len(), data.len());
    }
    if points.len() < band.min_points.max(2) {
        return Err(Error::Fit(format!("only {} admissible points, need {}", points.len(), band.min_points)));
    }
    let fit = linear_fit(&points)?;
    Ok(SliceFit { beta: fit.intercept.exp(), gamma: fit.slope, r2: fit.r2, used: points.len() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub b0: f64,
    pub b1: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawForm {
    /// g0 t^g1
    Power,
    /// g0 + g1 t
    Affine,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaLaw {
    pub form: LawForm,
    pub g0: f64,
    pub g1: f64,
}

impl GammaLaw {
    pub fn eval(&self, t: f64) -> f64 {
        match self.form {
            LawForm::Power => self.g0 * t.powf(self.g1),
            LawForm::Affine => self.g0 + self.g1 * t,
        }
    }
}

/// Per-time scaling fits plus their fitted time laws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub k: crate::DefectStrength,
    pub state_family: String,
    #[serde(rename = "N_range")]
    pub n_range: Vec<usize>,
    pub t_grid: Vec<f64>,
    pub beta: Vec<Option<f64>>,
    pub gamma: Vec<Option<f64>>,
    pub r2: Vec<Option<f64>>,
    pub beta_law: Option<PowerLaw>,
    pub gamma_law: Option<GammaLaw>,
}

impl ScalingFit {
    /// Fit every time slice. `abs_nu[i][j]` is |ν(t_j)| for `n_range[i]`.
    /// Slices without enough admissible points are left empty.
    pub fn from_echoes(
        k: crate::DefectStrength,
        state_family: impl Into<String>,
        n_range: Vec<usize>,
        t_grid: Vec<f64>,
        abs_nu: &[Vec<f64>],
        band: &Admissibility,
    ) -> Result<Self> {
        if abs_nu.len() != n_range.len() || abs_nu.iter().any(|row| row.len() != t_grid.len()) {
            return Err(Error::InvalidParameter("echo table shape does not match N range and time grid".into()));
        }
        let mut fit = Self {
            k,
            state_family: state_family.into(),
            n_range,
            t_grid,
            beta: Vec::new(),
            gamma: Vec::new(),
            r2: Vec::new(),
            beta_law: None,
            gamma_law: None,
        };
        for j in 0..fit.t_grid.len() {
            let data: Vec<(usize, f64)> = fit.n_range.iter().zip(abs_nu).map(|(&n, row)| (n, row[j])).collect();
            match fit_scaling_at_time(&data, band) {
                Ok(s) => {
                    fit.beta.push(Some(s.beta));
                    fit.gamma.push(Some(s.gamma));
                    fit.r2.push(Some(s.r2));
                }
                Err(e) => {
                    warn!("t = {}: {e}", fit.t_grid[j]);
                    fit.beta.push(None);
                    fit.gamma.push(None);
                    fit.r2.push(None);
                }
            }
        }
        Ok(fit)
    }
}

fn power_law(points: &[(f64, f64)], what: &str) -> Result<PowerLaw> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(t, v)| {
            let ok = t > 0.0 && v > 0.0;
            if !ok {
                warn!("{what} = {v} at t = {t} excluded from the power-law fit");
            }
            ok
        })
        .map(|&(t, v)| (t.ln(), v.ln()))
        .collect();
    let fit = linear_fit(&logs)?;
    Ok(PowerLaw { b0: fit.intercept.exp(), b1: fit.slope })
}

/// Fit β(t) = b0 t^{b1}, and γ(t) = g0 + g1 t for diagonal states or
/// γ(t) = g0 t^{g1} otherwise.
pub fn fit_time_laws(fit: &ScalingFit, diagonal_flavor: bool) -> Result<ScalingFit> {
    let series = |v: &[Option<f64>]| -> Vec<(f64, f64)> {
        fit.t_grid.iter().zip(v).filter_map(|(&t, x)| x.map(|x| (t, x))).collect()
    };
    let beta_law = power_law(&series(&fit.beta), "beta")?;
    let gamma_pts = series(&fit.gamma);
    let gamma_law = if diagonal_flavor {
        let l = linear_fit(&gamma_pts)?;
        GammaLaw { form: LawForm::Affine, g0: l.intercept, g1: l.slope }
    } else {
        let p = power_law(&gamma_pts, "gamma")?;
        GammaLaw { form: LawForm::Power, g0: p.b0, g1: p.b1 }
    };
    Ok(ScalingFit { beta_law: Some(beta_law), gamma_law: Some(gamma_law), ..fit.clone() })
}

/// Parameters of v = a (N^b - 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub a: f64,
    pub b: f64,
    pub rss: f64,
}

/// N^b - 1 without cancellation for small b.
#[inline]
fn growth_shape(n: f64, b: f64) -> f64 {
    (b * n.ln()).exp_m1()
}

fn growth_rss(points: &[(f64, f64)], a: f64, b: f64) -> f64 {
    points.iter().map(|&(n, v)| (v - a * growth_shape(n, b)).powi(2)).sum()
}

/// Best amplitude for a fixed exponent, which enters linearly.
fn growth_amplitude(points: &[(f64, f64)], b: f64) -> f64 {
    let (mut fv, mut ff) = (0.0, 0.0);
    for &(n, v) in points {
        let f = growth_shape(n, b);
        fv += f * v;
        ff += f * f;
    }
    if ff > 0.0 {
        fv / ff
    } else {
        0.0
    }
}

/// Nonlinear least squares for v = a (N^b - 1) by Gauss–Newton with step
/// halving. The exponent is initialized from the two outermost points with
/// N > 1 by solving v_hi/v_lo = (N_hi^b - 1)/(N_lo^b - 1). Data that are
/// concave in ln N give b < 0 together with a < 0.
pub fn fit_growth_curve(data: &[(f64, f64)]) -> Result<GrowthFit> {
    if data.len() < 4 {
        return Err(Error::Fit(format!("growth fit needs at least 4 points, got {}", data.len())));
    }
    if data.iter().any(|&(n, v)| !(n >= 1.0) || !v.is_finite() || !n.is_finite()) {
        return Err(Error::Fit("growth fit needs N ≥ 1 and finite values".into()));
    }
    let mut points = data.to_vec();
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    if points.iter().all(|p| p.1 == points[0].1) {
        return Err(Error::Fit("degenerate data: all values equal".into()));
    }
    let inner: Vec<&(f64, f64)> = points.iter().filter(|p| p.0 > 1.0 && p.1 > 0.0).collect();
    let mut b = match (inner.first(), inner.last()) {
        (Some(lo), Some(hi)) if hi.0 > lo.0 => init_exponent(**lo, **hi),
        _ => 0.5,
    };
    let mut a = growth_amplitude(&points, b);
    let mut rss = growth_rss(&points, a, b);
    for _ in 0..200 {
        // normal equations of the 2×2 Gauss–Newton step
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(n, v) in &points {
            let da = growth_shape(n, b);
            let db = a * (da + 1.0) * n.ln();
            let r = v - a * da;
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let det = jaa * jbb - jab * jab;
        if det <= 0.0 || !det.is_finite() {
            break;
        }
        let step_a = (jbb * ga - jab * gb) / det;
        let step_b = (jaa * gb - jab * ga) / det;
        let mut lambda = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let (na, nb) = (a + lambda * step_a, b + lambda * step_b);
            let r = growth_rss(&points, na, nb);
            if r.is_finite() && r <= rss {
                let tiny = (na - a).abs() <= 1e-15 * a.abs().max(1e-300) && (nb - b).abs() <= 1e-15 * b.abs().max(1e-300);
                a = na;
                b = nb;
                improved = !tiny && r < rss;
                rss = r;
                break;
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Fit("growth fit diverged".into()));
    }
    Ok(GrowthFit { a, b, rss })
}

fn init_exponent(lo: (f64, f64), hi: (f64, f64)) -> f64 {
    let target = hi.1 / lo.1;
    let (ln_lo, ln_hi) = (lo.0.ln(), hi.0.ln());
    // increasing in b, equal to ln N_hi / ln N_lo at b = 0
    let ratio = |b: f64| {
        if b == 0.0 {
            ln_hi / ln_lo
        } else {
            (b * ln_hi).exp_m1() / (b * ln_lo).exp_m1()
        }
    };
    let (mut x0, mut x1) = (-8.0, 8.0);
    if target <= ratio(x0) {
        return x0;
    }
    while ratio(x1) < target && x1 < 64.0 {
        x1 *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (x0 + x1);
        if ratio(mid) < target {
            x0 = mid;
        } else {
            x1 = mid;
        }
    }
    0.5 * (x0 + x1)
}

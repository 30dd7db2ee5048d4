//! Harmonic-trap conventions: ħ = ω = 1, energies n + 1/2, and the values of
//! the oscillator eigenfunctions at the defect position x = 0.
//!
//! The origin values use the prefactor (2π)^{-1/4}, which makes the ground
//! state expectation of kδ(x) equal to k/√(2π). Defect strengths are quoted
//! in those units throughout the crate.

use crate::special::ln_gamma_ratio_half;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// (2π)^{-1/4}
pub const ORIGIN_PREFACTOR: f64 = 0.631_618_777_746_064_7;

/// Which parity sector of the oscillator a computation touches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParitySector {
    Even,
    Odd,
    Both,
}

/// The unperturbed trap. Frequency and ħ are fixed to one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrapBasis {
    pub omega: f64,
    pub hbar: f64,
    pub parity_sector: ParitySector,
}

impl Default for TrapBasis {
    fn default() -> Self {
        Self { omega: 1.0, hbar: 1.0, parity_sector: ParitySector::Even }
    }
}

impl TrapBasis {
    pub fn energy(&self, n: u64) -> f64 {
        self.hbar * self.omega * energy_unperturbed(n)
    }

    pub fn psi_at_origin(&self, n: u64) -> f64 {
        psi_at_origin(n)
    }

    /// Whether level `n` lies in the sector this basis describes.
    pub fn contains(&self, n: u64) -> bool {
        match self.parity_sector {
            ParitySector::Even => n % 2 == 0,
            ParitySector::Odd => n % 2 == 1,
            ParitySector::Both => true,
        }
    }
}

/// E_n = n + 1/2.
#[inline]
pub fn energy_unperturbed(n: u64) -> f64 {
    n as f64 + 0.5
}

/// ln c_n for even n, where c_n = (n-1)!!/√(n!) and c_0 = 1.
#[inline]
fn ln_c_even(n: u64) -> f64 {
    debug_assert!(n % 2 == 0);
    // c_{2j}^2 = (2j-1)!!/(2j)!! = Γ(j+½) / (√π Γ(j+1))
    0.5 * (ln_gamma_ratio_half(n / 2) - 0.5 * PI.ln())
}

/// c_n = (n-1)!!/√(n!) for even n.
pub fn c_coefficient(n: u64) -> Result<f64> {
    if n % 2 == 1 {
        return Err(Error::OddLevel(n));
    }
    Ok(ln_c_even(n).exp())
}

/// ψ_n(0) = (-1)^{n/2} c_n (2π)^{-1/4} for even n and 0 for odd n.
pub fn psi_at_origin(n: u64) -> f64 {
    if n % 2 == 1 {
        return 0.0;
    }
    let sign = if (n / 2) % 2 == 0 { 1.0 } else { -1.0 };
    sign * ORIGIN_PREFACTOR * ln_c_even(n).exp()
}

/// ψ_n(0)^2, which is (2π)^{-1/2} c_n^2 for even n.
pub fn psi_at_origin_sq(n: u64) -> f64 {
    if n % 2 == 1 {
        return 0.0;
    }
    (2.0 * ln_c_even(n)).exp() / (2.0 * PI).sqrt()
}

//! Post-quench dynamics of one or two particles in a one-dimensional harmonic
//! trap that is suddenly coupled to a repulsive delta defect at the origin.
//!
//! The crate computes the perturbed even-sector spectrum (exactly at infinite
//! coupling, by a rank-one secular equation at finite coupling), builds
//! Kirkwood–Dirac work quasiprobability tables for a family of initial
//! states, evaluates Loschmidt echoes as their Fourier sums and derives work
//! statistics, quantum-speed-limit times and orthogonalization scaling fits.
//!
//! Units: ħ = ω = 1, E_n = n + 1/2, ψ_n(0) carries the (2π)^{-1/4} prefactor.

pub mod basis;
pub mod cli;
pub mod echo;
pub mod scaling;
pub mod special;
pub mod spectrum;
pub mod states;
pub mod workstats;

use sha2::{Digest, Sha256};

pub use basis::TrapBasis;
pub use echo::{EchoSeries, QuasiprobTable, TimeGrid};
pub use spectrum::{Backend, DefectStrength, PerturbedSpectrum};
pub use states::InitialState;

/// Conventions that change numerical output. Hashed into cache keys and
/// output metadata; bump the trailing version when any of them changes.
pub const CONVENTION: &str = "hbar=1;omega=1;E_n=n+1/2;psi_n(0)=(-1)^(n/2)(n-1)!!/((2pi)^(1/4)sqrt(n!));\
nu(t)=sum q exp(-i(E'_m-E_n)t);sign(Lambda_mm)=+1;v1";

/// First 16 hex digits of SHA-256 over [`CONVENTION`].
pub fn convention_hash() -> String {
    let digest = Sha256::digest(CONVENTION.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("level {0} is odd; only even levels couple to the defect")]
    OddLevel(u64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("state reaches level {level} but the spectrum keeps levels below {limit}")]
    OutsideCutoff { level: u64, limit: u64 },
    #[error("convergence failure: {0}")]
    Convergence(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("cannot parse {what}: {detail}")]
    Parse { what: &'static str, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

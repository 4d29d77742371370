//! Quantum dynamics of a one-dimensional molecule coupled to a single optical
//! cavity mode.
//!
//! The physical system is a Shin–Metiu-type model: one electron (coordinate
//! `r`) and one proton (coordinate `R`, mass `M`) moving between two fixed
//! ions, coupled to one quantized photon mode (displacement coordinate `q`,
//! frequency `omega_c`, coupling `lambda`). The crate provides three layers:
//!
//! 1. **Exact propagation** ([`propagator`]): split-operator solution of the
//!    time-dependent Schrödinger equation for the full wavefunction
//!    `psi(r, R, q, t)` on a 3D grid, plus observables and snapshot storage.
//! 2. **Surface extraction** ([`efactor`]): factorization of `psi` into a
//!    nuclear wavefunction `chi(R, t)` and a conditional electron–photon
//!    factor, yielding the single time-dependent potential energy surface
//!    (TDPES) that governs the exact nuclear motion, split into its
//!    weighted-polaritonic, kinetic, and gauge-dependent components.
//! 3. **Quasiclassical dynamics** ([`qcl`]): Wigner-sampled classical
//!    trajectory ensembles propagated on the extracted time-dependent
//!    surfaces, with density estimates for comparison against the exact
//!    nuclear density.
//!
//! Supporting modules: [`grid`] (quadrature and derivatives), [`model`] (the
//! potential and parameter presets), [`bo`] (Born–Oppenheimer electronic
//! states), [`polariton`] (polaritonic surfaces in the truncated
//! electronic × Fock basis), [`scenario`] (preset run setups shared by the
//! CLI and the verification suite), and [`io`] (snapshot and CSV formats).
//!
//! All internal quantities are in Hartree atomic units; femtoseconds appear
//! only at I/O boundaries via [`AU_PER_FS`].

pub mod bo;
pub mod efactor;
mod fft;
pub mod grid;
pub mod io;
mod linalg;
pub mod model;
pub mod polariton;
pub mod propagator;
pub mod qcl;
pub mod scenario;
pub mod special;

/// Atomic units of time per femtosecond (CODATA: 1 fs = 41.341374576 a.u.).
pub const AU_PER_FS: f64 = 41.341374576;

/// Convert femtoseconds to atomic units of time.
pub fn fs_to_au(t_fs: f64) -> f64 {
    t_fs * AU_PER_FS
}

/// Convert atomic units of time to femtoseconds.
pub fn au_to_fs(t_au: f64) -> f64 {
    t_au / AU_PER_FS
}

/// Crate-wide error type.
///
/// The variants map onto the process exit codes used by the command-line
/// frontend: configuration/contract problems (exit 1), numerical failures
/// detected at runtime (exit 2), and I/O errors.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller violated a documented precondition (wrong lengths, index out
    /// of range, parameter outside its domain).
    #[error("contract violation: {0}")]
    Contract(String),
    /// A configuration is structurally valid but physically unusable (e.g. a
    /// grid containing a potential singularity).
    #[error("configuration error: {0}")]
    Config(String),
    /// The numerics went bad at runtime (NaN amplitudes, boundary leakage,
    /// eigensolver failure).
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Underlying filesystem failure while persisting or loading data.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fs_au_round_trip() {
        let t = 17.42;
        assert!((au_to_fs(fs_to_au(t)) - t).abs() < 1e-12);
        // 1 fs is a little over 41 a.u.
        assert!((fs_to_au(1.0) - 41.341374576).abs() < 1e-12);
    }
}

//! The molecular model and its cavity coupling.
//!
//! One electron (`r`) and one proton (`R`) move on a line between two fixed
//! ions at `±L/2`; all charges interact through softened Coulomb terms. The
//! molecule sits in an optical cavity represented by a single harmonic
//! photon mode with displacement coordinate `q`:
//!
//! ```text
//! V(r, R, q) = V_m(r, R)                      matter
//!            + ω_c² q² / 2                    photon potential
//!            + ω_c λ q (R - r)                photon–matter coupling
//!            + λ² (R - r)² / 2                self-polarization (optional)
//!
//! V_m(r, R) = Σ_{σ=±1} [ 1/|R + σL/2| - erf(|r + σL/2| / a_σ)/|r + σL/2| ]
//!           - erf(|R - r| / a_f)/|R - r|
//! ```
//!
//! The photon kinetic term `p_q²/2` deliberately does **not** appear here;
//! it belongs to the kinetic propagator together with the electronic and
//! nuclear kinetic energies.
//!
//! Two parameter presets are provided: [`Preset::Pcet`], a proton-transfer
//! configuration whose cavity (`ω_c = 0.1`) is resonant with the electronic
//! gap at the initial nuclear position `R = -4`, and [`Preset::Elex`], a
//! symmetric configuration (`ω_c = 0.049`) resonant with the first gap at
//! `R = ±2.2` and the second gap at `R = 0`.

use crate::grid::{Grid1D, Grid3D};
use crate::special::erf;
use crate::{Error, Result};

/// Distance below which `R` is considered to sit on a fixed ion (the bare
/// Coulomb `1/|R ± L/2|` diverges there).
const SINGULARITY_TOL: f64 = 1e-9;

/// Physical parameters of the cavity-coupled molecule (atomic units).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Separation `L` of the two fixed ions.
    pub l: f64,
    /// Electron–ion softening length for the ion at `+L/2`.
    pub a_plus: f64,
    /// Electron–ion softening length for the ion at `-L/2`.
    pub a_minus: f64,
    /// Electron–proton softening length.
    pub a_f: f64,
    /// Proton mass `M`.
    pub mass: f64,
    /// Cavity mode frequency `ω_c`.
    pub omega_c: f64,
    /// Photon–matter coupling strength `λ`.
    pub lambda: f64,
    /// Include the `λ²(R-r)²/2` self-polarization term (negligible at the
    /// couplings studied here; off by default).
    pub include_self_polarization: bool,
}

impl ModelParams {
    /// Check the physical-domain invariants.
    pub fn validate(&self) -> Result<()> {
        let all_positive = self.l > 0.0
            && self.a_plus > 0.0
            && self.a_minus > 0.0
            && self.a_f > 0.0
            && self.mass > 0.0
            && self.omega_c > 0.0;
        if !all_positive {
            return Err(Error::config(
                "model lengths, mass, and cavity frequency must all be positive".to_string(),
            ));
        }
        if self.lambda < 0.0 {
            return Err(Error::config("coupling lambda must be >= 0".to_string()));
        }
        Ok(())
    }
}

/// Named parameter presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Proton-coupled electron transfer geometry: asymmetric softening
    /// (`a_+ = 3.1`, `a_- = 4.0`), cavity at `ω_c = 0.1`.
    Pcet,
    /// Electronic-excitation geometry: symmetric softening (`a_± = 4.0`),
    /// cavity at `ω_c = 0.049`.
    Elex,
}

impl Preset {
    pub fn params(self) -> ModelParams {
        match self {
            Preset::Pcet => ModelParams {
                l: 19.0,
                a_plus: 3.1,
                a_minus: 4.0,
                a_f: 5.0,
                mass: 1836.0,
                omega_c: 0.1,
                lambda: 0.005,
                include_self_polarization: false,
            },
            Preset::Elex => ModelParams {
                l: 19.0,
                a_plus: 4.0,
                a_minus: 4.0,
                a_f: 5.0,
                mass: 1836.0,
                omega_c: 0.049,
                lambda: 0.005,
                include_self_polarization: false,
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Pcet => "pcet",
            Preset::Elex => "elex",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pcet" => Ok(Preset::Pcet),
            "elex" => Ok(Preset::Elex),
            other => Err(Error::config(format!(
                "unknown preset '{other}' (expected 'pcet' or 'elex')"
            ))),
        }
    }
}

/// Look up a preset's parameters by name.
pub fn preset(name: &str) -> Result<ModelParams> {
    name.parse::<Preset>().map(|p| p.params())
}

/// Softened Coulomb interaction `erf(|x|/a)/|x|`.
///
/// Finite everywhere: the `x → 0` limit is `2/(a√π)`, approached through the
/// series `erf(u)/x = (2/(a√π))(1 - u²/3 + ...)`, which is used for tiny
/// arguments to avoid 0/0.
pub fn softened_coulomb(x: f64, a: f64) -> f64 {
    debug_assert!(a > 0.0);
    let u = x.abs() / a;
    if u < 1e-6 {
        // Series around 0; the u⁴ term is < 1e-24 here.
        2.0 / (a * std::f64::consts::PI.sqrt()) * (1.0 - u * u / 3.0)
    } else {
        erf(u) / x.abs()
    }
}

/// The matter potential `V_m(r, R)` for electron `r` and proton `R`.
///
/// Errors when `R` sits on a fixed ion (bare Coulomb singularity).
pub fn matter_potential(r: f64, big_r: f64, params: &ModelParams) -> Result<f64> {
    let half_l = 0.5 * params.l;
    if (big_r - half_l).abs() < SINGULARITY_TOL || (big_r + half_l).abs() < SINGULARITY_TOL {
        return Err(Error::config(format!(
            "nuclear coordinate R={big_r} sits on a fixed ion at ±{half_l}"
        )));
    }
    Ok(matter_potential_unchecked(r, big_r, params))
}

/// `V_m` without the singularity guard; callers must have validated `R`.
pub(crate) fn matter_potential_unchecked(r: f64, big_r: f64, params: &ModelParams) -> f64 {
    let half_l = 0.5 * params.l;
    let ion_plus = 1.0 / (big_r + half_l).abs() - softened_coulomb(r + half_l, params.a_plus);
    let ion_minus = 1.0 / (big_r - half_l).abs() - softened_coulomb(r - half_l, params.a_minus);
    ion_plus + ion_minus - softened_coulomb(big_r - r, params.a_f)
}

/// The molecular dipole entering the cavity coupling.
///
/// The proton (charge +1) sits at `R`, the electron at `r`, and the two
/// fixed ions at `±L/2` cancel each other, leaving `R - r`. This convention
/// is isolated here so it can be swapped in one place.
pub fn dipole(r: f64, big_r: f64) -> f64 {
    big_r - r
}

/// Retained component fields of a built potential, in factored form.
///
/// `matter` and `coupling_dipole` are `(r, nuc)` tables (row-major, nuc
/// fastest); `photon` is a per-`q` table. The full coupling term at a point
/// is `ω_c λ q · coupling_dipole[r, nuc]` and the optional self-polarization
/// is `λ²/2 · coupling_dipole²`.
#[derive(Debug, Clone)]
pub struct PotentialParts {
    pub matter: Vec<f64>,
    pub photon: Vec<f64>,
    pub coupling_dipole: Vec<f64>,
}

/// The total potential sampled on a [`Grid3D`], with optionally retained
/// component tables.
#[derive(Debug, Clone)]
pub struct PotentialField {
    pub grid: Grid3D,
    pub values: Vec<f64>,
    pub parts: Option<PotentialParts>,
}

/// Check that a nuclear axis stays away from the fixed-ion singularities.
pub fn validate_nuclear_axis(nuc: &Grid1D, params: &ModelParams) -> Result<()> {
    let half_l = 0.5 * params.l;
    for k in 0..nuc.n() {
        let x = nuc.point(k);
        if (x - half_l).abs() < SINGULARITY_TOL || (x + half_l).abs() < SINGULARITY_TOL {
            return Err(Error::config(format!(
                "nuclear grid point {x} coincides with a fixed ion at ±{half_l}"
            )));
        }
    }
    Ok(())
}

/// Sample `V_m` on an `(r, nuc)` product mesh (row-major, nuc fastest).
pub fn matter_potential_table(
    params: &ModelParams,
    r_grid: &Grid1D,
    nuc_grid: &Grid1D,
) -> Result<Vec<f64>> {
    params.validate()?;
    validate_nuclear_axis(nuc_grid, params)?;
    let mut table = Vec::with_capacity(r_grid.n() * nuc_grid.n());
    for i in 0..r_grid.n() {
        let r = r_grid.point(i);
        for j in 0..nuc_grid.n() {
            table.push(matter_potential_unchecked(r, nuc_grid.point(j), params));
        }
    }
    Ok(table)
}

/// Build the full potential `V(r, R, q)` on a 3D grid.
///
/// `keep_parts` retains the factored component tables (used by tests and
/// diagnostics). The photon kinetic term is not included.
pub fn total_potential_grid(
    params: &ModelParams,
    grid: &Grid3D,
    keep_parts: bool,
) -> Result<PotentialField> {
    params.validate()?;
    validate_nuclear_axis(&grid.nuc, params)?;
    let (n_r, n_nuc, n_q) = (grid.r.n(), grid.nuc.n(), grid.q.n());

    let matter = matter_potential_table(params, &grid.r, &grid.nuc)?;
    let mut coupling_dipole = Vec::with_capacity(n_r * n_nuc);
    for i in 0..n_r {
        for j in 0..n_nuc {
            coupling_dipole.push(dipole(grid.r.point(i), grid.nuc.point(j)));
        }
    }
    let photon: Vec<f64> = (0..n_q)
        .map(|k| {
            let q = grid.q.point(k);
            0.5 * params.omega_c * params.omega_c * q * q
        })
        .collect();

    let mut values = vec![0.0; grid.len()];
    let coupling_strength = params.omega_c * params.lambda;
    let self_pol = 0.5 * params.lambda * params.lambda;
    for i in 0..n_r {
        for j in 0..n_nuc {
            let plane = i * n_nuc + j;
            let v_m = matter[plane];
            let d = coupling_dipole[plane];
            let v_static = if params.include_self_polarization {
                v_m + self_pol * d * d
            } else {
                v_m
            };
            let base = plane * n_q;
            for k in 0..n_q {
                values[base + k] = v_static + photon[k] + coupling_strength * grid.q.point(k) * d;
            }
        }
    }

    let parts = keep_parts.then_some(PotentialParts { matter, photon, coupling_dipole });
    Ok(PotentialField { grid: grid.clone(), values, parts })
}

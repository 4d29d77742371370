//! Polaritonic surfaces: the electron–photon Hamiltonian at clamped nucleus,
//! diagonalized in the truncated (electronic eigenstate × photon Fock)
//! product basis.
//!
//! At fixed `R` the electron–photon Hamiltonian is
//!
//! ```text
//! H_pol(R) = H_el(R) + ω_c(a†a + ½) + ω_c λ q̂ (R - r̂)  [+ λ²(R - r̂)²/2]
//! ```
//!
//! Expanded over `|i, n⟩` (electronic state `i`, photon number `n`) it is a
//! small real symmetric matrix per `R`; its eigenvalues are the polaritonic
//! surfaces and its eigenvectors carry the light–matter mixing. Basis states
//! are flattened as `s = i·n_ph + n` (photon index fastest).
//!
//! States near the truncation edge (largest `i` or `n`) lack the basis
//! states they would mix with and are not converged; consumers use the lowest
//! block, and the truncation-stability test in this module measures the
//! error directly.

use ndarray::{Array2, Array3};
use rayon::prelude::*;

use crate::bo::{BOSurfaceSet, ContinuityWarning};
use crate::grid::{self, Grid1D};
use crate::linalg::symmetric_eigen_lowest;
use crate::model::ModelParams;
use crate::{Error, Result};

/// Fock-basis matrix element `⟨n|q̂|m⟩` of the photon displacement.
///
/// Nonzero only for `|n - m| = 1`, where it equals `√(max(n,m)/(2ω_c))`.
pub fn photon_q_element(n: usize, m: usize, omega_c: f64) -> f64 {
    if n.abs_diff(m) == 1 {
        (n.max(m) as f64 / (2.0 * omega_c)).sqrt()
    } else {
        0.0
    }
}

/// The full `n_ph × n_ph` Fock representation of `q̂`.
pub fn photon_q_matrix(n_ph: usize, omega_c: f64) -> Array2<f64> {
    Array2::from_shape_fn((n_ph, n_ph), |(n, m)| photon_q_element(n, m, omega_c))
}

/// Polaritonic surfaces, eigenvectors, and character labels on a nuclear grid.
#[derive(Debug, Clone)]
pub struct PolaritonSurfaceSet {
    pub nuc_grid: Grid1D,
    pub omega_c: f64,
    pub lambda: f64,
    pub self_polarization: bool,
    pub n_el: usize,
    pub n_ph: usize,
    /// `energies[[j, k]]`: surface `k` at nuclear point `j`, nondecreasing in `k`.
    pub energies: Array2<f64>,
    /// `coefficients[[j, k, s]]`: eigenvector of surface `k` at nuclear point
    /// `j` over the product basis, `s = i·n_ph + n`.
    pub coefficients: Array3<f64>,
    /// Dominant basis state of each `(j, k)`: electronic index, photon
    /// number, and its squared coefficient.
    pub dominant_electronic: Array2<usize>,
    pub dominant_photon: Array2<usize>,
    pub dominant_weight: Array2<f64>,
    pub continuity_warnings: Vec<ContinuityWarning>,
}

impl PolaritonSurfaceSet {
    pub fn n_states(&self) -> usize {
        self.n_el * self.n_ph
    }

    /// Flat product-basis index of `|i, n⟩`.
    pub fn basis_index(&self, i: usize, n: usize) -> usize {
        i * self.n_ph + n
    }

    /// Inverse of [`basis_index`](Self::basis_index): `(electronic, photon)`.
    pub fn basis_label(&self, s: usize) -> (usize, usize) {
        (s / self.n_ph, s % self.n_ph)
    }
}

/// Assemble `H_pol` at nuclear grid point `nuc_index` over the `|i, n⟩` basis.
///
/// The matrix is exactly symmetric by construction. `n_el` may sub-truncate
/// the states available in `bo`.
pub fn build_h_pol(
    bo: &BOSurfaceSet,
    params: &ModelParams,
    nuc_index: usize,
    n_el: usize,
    n_ph: usize,
) -> Result<Array2<f64>> {
    if n_el == 0 || n_el > bo.n_el {
        return Err(Error::contract(format!(
            "requested {n_el} electronic states, surface set holds {}",
            bo.n_el
        )));
    }
    if n_ph < 2 {
        return Err(Error::contract(format!(
            "photon basis needs at least 2 Fock states, got {n_ph}"
        )));
    }
    if nuc_index >= bo.nuc_grid.n() {
        return Err(Error::contract(format!(
            "nuclear index {nuc_index} outside grid of {} points",
            bo.nuc_grid.n()
        )));
    }
    let big_r = bo.nuc_grid.point(nuc_index);
    let omega = params.omega_c;
    let dim = n_el * n_ph;
    let mut h = Array2::zeros((dim, dim));
    for i in 0..n_el {
        for n in 0..n_ph {
            let s = i * n_ph + n;
            for j in 0..n_el {
                // Dipole matrix element of (R - r̂) between electronic states.
                let d_ij = if i == j { big_r } else { 0.0 } - bo.dipole_moments[[nuc_index, i, j]];
                for m in 0..n_ph {
                    let s2 = j * n_ph + m;
                    let mut val = 0.0;
                    if i == j && n == m {
                        val += bo.energies[[nuc_index, i]] + omega * (n as f64 + 0.5);
                    }
                    val += omega * params.lambda * d_ij * photon_q_element(n, m, omega);
                    if params.include_self_polarization && n == m {
                        let r2 = bo.second_moments[[nuc_index, i, j]];
                        let big_r2 = if i == j { big_r * big_r } else { 0.0 };
                        let cross = 2.0 * big_r * bo.dipole_moments[[nuc_index, i, j]];
                        val += 0.5 * params.lambda * params.lambda * (big_r2 - cross + r2);
                    }
                    h[[s, s2]] = val;
                }
            }
        }
    }
    Ok(h)
}

/// Diagonalize `H_pol` at every nuclear grid point.
///
/// Surfaces are sorted ascending per `R`; eigenvector signs are made
/// continuous along `R` exactly as in the electronic solver, with overlap
/// defects reported (they are expected within a grid point of a narrow
/// avoided crossing).
pub fn solve_polaritonic_surfaces(
    bo: &BOSurfaceSet,
    params: &ModelParams,
    n_el: usize,
    n_ph: usize,
) -> Result<PolaritonSurfaceSet> {
    let dim = n_el * n_ph;
    if dim > 64 {
        return Err(Error::contract(format!(
            "product basis of {dim} states exceeds the supported 64"
        )));
    }
    let n_nuc = bo.nuc_grid.n();
    let per_r: Vec<(Vec<f64>, Array2<f64>)> = (0..n_nuc)
        .into_par_iter()
        .map(|j| {
            let h = build_h_pol(bo, params, j, n_el, n_ph)?;
            symmetric_eigen_lowest(&h, dim)
        })
        .collect::<Result<_>>()?;

    let mut energies = Array2::zeros((n_nuc, dim));
    let mut coefficients = Array3::zeros((n_nuc, dim, dim));
    for (j, (e, v)) in per_r.iter().enumerate() {
        for k in 0..dim {
            energies[[j, k]] = e[k];
            for s in 0..dim {
                coefficients[[j, k, s]] = v[[k, s]];
            }
        }
    }

    // Sign continuity in coefficient space (basis is orthonormal, no weight).
    let mut warnings = Vec::new();
    for k in 0..dim {
        let anchor = {
            let row = coefficients.slice(ndarray::s![0, k, ..]);
            let mut best = 0;
            for s in 1..dim {
                if row[s].abs() > row[best].abs() {
                    best = s;
                }
            }
            row[best]
        };
        if anchor < 0.0 {
            coefficients.slice_mut(ndarray::s![0, k, ..]).mapv_inplace(|x| -x);
        }
        for j in 1..n_nuc {
            let overlap: f64 = {
                let prev = coefficients.slice(ndarray::s![j - 1, k, ..]);
                let cur = coefficients.slice(ndarray::s![j, k, ..]);
                prev.iter().zip(cur.iter()).map(|(a, b)| a * b).sum()
            };
            if overlap < 0.0 {
                coefficients.slice_mut(ndarray::s![j, k, ..]).mapv_inplace(|x| -x);
            }
            if overlap.abs() < 0.5 {
                warnings.push(ContinuityWarning { state: k, nuc_index: j, overlap });
            }
        }
    }

    // Character labels: dominant product-basis state per (R, k).
    let mut dominant_electronic = Array2::zeros((n_nuc, dim));
    let mut dominant_photon = Array2::zeros((n_nuc, dim));
    let mut dominant_weight = Array2::zeros((n_nuc, dim));
    for j in 0..n_nuc {
        for k in 0..dim {
            let mut best = 0;
            for s in 1..dim {
                if coefficients[[j, k, s]].abs() > coefficients[[j, k, best]].abs() {
                    best = s;
                }
            }
            dominant_electronic[[j, k]] = best / n_ph;
            dominant_photon[[j, k]] = best % n_ph;
            dominant_weight[[j, k]] = coefficients[[j, k, best]].powi(2);
        }
    }

    Ok(PolaritonSurfaceSet {
        nuc_grid: bo.nuc_grid.clone(),
        omega_c: params.omega_c,
        lambda: params.lambda,
        self_polarization: params.include_self_polarization,
        n_el,
        n_ph,
        energies,
        coefficients,
        dominant_electronic,
        dominant_photon,
        dominant_weight,
        continuity_warnings: warnings,
    })
}

/// Interpolated polaritonic gap `ε_pol,k2(R) - ε_pol,k1(R)`.
pub fn polariton_gap(set: &PolaritonSurfaceSet, k1: usize, k2: usize, big_r: f64) -> Result<f64> {
    if k1 >= set.n_states() || k2 >= set.n_states() {
        return Err(Error::contract(format!(
            "surface index out of range: have {} states, asked for ({k1}, {k2})",
            set.n_states()
        )));
    }
    let col = |k: usize| -> Vec<f64> {
        (0..set.nuc_grid.n()).map(|j| set.energies[[j, k]]).collect()
    };
    let e2 = grid::linear_interp(&col(k2), &set.nuc_grid, big_r)?;
    let e1 = grid::linear_interp(&col(k1), &set.nuc_grid, big_r)?;
    Ok(e2 - e1)
}

/// Real-space harmonic-oscillator eigenfunctions `ξ_0..ξ_{n_max-1}` of the
/// photon mode, sampled on `q_grid`. Row `n` holds `ξ_n`.
///
/// Built by the normalized three-term recurrence
/// `ξ_{n+1} = √(2/(n+1)) y ξ_n − √(n/(n+1)) ξ_{n−1}` with `y = √ω q`, which
/// is numerically stable upward.
pub fn fock_wavefunctions(n_max: usize, omega: f64, q_grid: &Grid1D) -> Result<Array2<f64>> {
    if n_max == 0 {
        return Err(Error::contract("need at least one photon state".to_string()));
    }
    if !(omega > 0.0) {
        return Err(Error::contract(format!("photon frequency must be positive, got {omega}")));
    }
    let n_q = q_grid.n();
    let mut xi = Array2::zeros((n_max, n_q));
    let norm0 = (omega / std::f64::consts::PI).powf(0.25);
    for (iq, &q) in q_grid.points().iter().enumerate() {
        let y = omega.sqrt() * q;
        xi[[0, iq]] = norm0 * (-0.5 * y * y).exp();
        if n_max > 1 {
            xi[[1, iq]] = std::f64::consts::SQRT_2 * y * xi[[0, iq]];
        }
        for n in 1..n_max.saturating_sub(1) {
            let nf = n as f64;
            xi[[n + 1, iq]] = (2.0 / (nf + 1.0)).sqrt() * y * xi[[n, iq]]
                - (nf / (nf + 1.0)).sqrt() * xi[[n - 1, iq]];
        }
    }
    Ok(xi)
}

/// Reconstruct a polaritonic eigenstate as a real field on the `(r, q)` grid:
/// `Φ_k(r, q; R_j) = Σ_{i,n} c_{i,n} Φ_i(r; R_j) ξ_n(q)`.
///
/// Errors if the photon functions have not decayed below 1e-12 at the
/// `q`-grid boundary (grid too small for the requested Fock states).
pub fn polaritonic_state_on_grid(
    set: &PolaritonSurfaceSet,
    bo: &BOSurfaceSet,
    k: usize,
    nuc_index: usize,
    q_grid: &Grid1D,
) -> Result<Array2<f64>> {
    if k >= set.n_states() {
        return Err(Error::contract(format!(
            "surface index {k} out of range ({} states)",
            set.n_states()
        )));
    }
    if nuc_index >= set.nuc_grid.n() {
        return Err(Error::contract(format!("nuclear index {nuc_index} out of range")));
    }
    if set.n_el > bo.n_el || set.nuc_grid != bo.nuc_grid {
        return Err(Error::contract(
            "polaritonic set does not match the electronic surface set".to_string(),
        ));
    }
    let xi = fock_wavefunctions(set.n_ph, set.omega_c, q_grid)?;
    for n in 0..set.n_ph {
        let edge = xi[[n, 0]].abs().max(xi[[n, q_grid.n() - 1]].abs());
        if edge > 1e-12 {
            return Err(Error::config(format!(
                "photon grid too small: ξ_{n} is {edge:.2e} at the boundary"
            )));
        }
    }
    let (n_r, n_q) = (bo.r_grid.n(), q_grid.n());
    // Collapse the photon sum first: a[i][q] = Σ_n c_{i,n} ξ_n(q).
    let mut a = Array2::<f64>::zeros((set.n_el, n_q));
    for i in 0..set.n_el {
        for n in 0..set.n_ph {
            let c = set.coefficients[[nuc_index, k, set.basis_index(i, n)]];
            for iq in 0..n_q {
                a[[i, iq]] += c * xi[[n, iq]];
            }
        }
    }
    let mut field = Array2::zeros((n_r, n_q));
    for i in 0..set.n_el {
        for ir in 0..n_r {
            let phi = bo.states[[nuc_index, i, ir]];
            for iq in 0..n_q {
                field[[ir, iq]] += phi * a[[i, iq]];
            }
        }
    }
    Ok(field)
}

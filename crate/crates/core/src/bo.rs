//! Born–Oppenheimer electronic eigenstates and surfaces.
//!
//! For each nuclear position `R` the electronic Hamiltonian
//! `H_el = -∂_r²/2 + V_m(r, R)` is diagonalized densely on the electron
//! grid. The kinetic operator is the Fourier-collocation second derivative —
//! the same discretization the wavepacket propagator applies in k-space — so
//! that projections of propagated wavefunctions onto these states carry no
//! discretization mismatch. On a uniform periodic mesh that operator is a
//! real symmetric circulant matrix, built here from its first column.
//!
//! Eigenvectors get a deterministic global sign: at the leftmost `R` the
//! largest-magnitude component is made positive, and each subsequent `R`
//! point is aligned with its neighbor by overlap. Surfaces, states, and the
//! electronic dipole matrix elements `⟨Φ_i|r|Φ_j⟩` (plus the second moments
//! `⟨Φ_i|r²|Φ_j⟩` needed by the optional self-polarization coupling) are
//! stored per `R`.
//!
//! States are normalized with the uniform-weight grid quadrature
//! `Σ |Φ(r_k)|² Δr = 1`, under which the discrete eigenvectors are exactly
//! orthonormal; for the bound states used here the trapezoid value agrees to
//! the boundary-decay level (≤ 1e-10).

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::grid::{self, DerivOrder, Grid1D};
use crate::linalg::symmetric_eigen_lowest;
use crate::model::{matter_potential_table, ModelParams};
use crate::{Error, Result};

/// Largest supported electronic-basis truncation.
pub const MAX_ELECTRONIC_STATES: usize = 8;

/// A sign-continuity defect: the overlap between neighboring eigenvectors
/// fell below 0.5, so the deterministic sign alignment is unreliable there
/// (nuclear grid too coarse, or a near-degeneracy).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuityWarning {
    pub state: usize,
    /// Index of the right-hand nuclear grid point of the offending pair.
    pub nuc_index: usize,
    pub overlap: f64,
}

/// Electronic eigenstates, surfaces, and dipole matrices on a nuclear grid.
#[derive(Debug, Clone)]
pub struct BOSurfaceSet {
    pub r_grid: Grid1D,
    pub nuc_grid: Grid1D,
    pub n_el: usize,
    /// `energies[[j, i]]`: energy of state `i` at nuclear point `j`,
    /// nondecreasing in `i`.
    pub energies: Array2<f64>,
    /// `states[[j, i, k]]`: real eigenvector of state `i` at nuclear point
    /// `j`, sampled on the electron grid.
    pub states: Array3<f64>,
    /// `dipole_moments[[j, i, i2]] = ⟨Φ_i|r|Φ_i2⟩` at nuclear point `j`.
    pub dipole_moments: Array3<f64>,
    /// `second_moments[[j, i, i2]] = ⟨Φ_i|r²|Φ_i2⟩` at nuclear point `j`.
    pub second_moments: Array3<f64>,
    pub continuity_warnings: Vec<ContinuityWarning>,
}

/// The Fourier-collocation kinetic matrix `-∂_r²/2` (unit mass) on a grid.
///
/// Built from the spectral second derivative of a delta at the first point;
/// the resulting circulant is symmetrized to kill round-off asymmetry.
fn kinetic_matrix(r_grid: &Grid1D) -> Array2<f64> {
    let n = r_grid.n();
    let mut delta = vec![Complex64::new(0.0, 0.0); n];
    delta[0] = Complex64::new(1.0, 0.0);
    let col = grid::spectral_derivative(&delta, r_grid, DerivOrder::Second)
        .expect("delta length matches grid");
    let mut c: Vec<f64> = col.iter().map(|z| z.re).collect();
    // A second-derivative circulant is even: c[m] = c[n-m].
    for m in 1..n / 2 {
        let avg = 0.5 * (c[m] + c[n - m]);
        c[m] = avg;
        c[n - m] = avg;
    }
    Array2::from_shape_fn((n, n), |(i, j)| -0.5 * c[(n + i - j) % n])
}

/// Lowest `n_states` eigenpairs of `-∂_r²/2 + diag(v)` on `r_grid`.
///
/// Returns energies (ascending) and states as rows of an `(n_states, n_r)`
/// array, normalized with the uniform grid weight. Signs are arbitrary;
/// callers needing continuity use [`solve_bo`].
pub fn solve_potential_states(
    v: &[f64],
    r_grid: &Grid1D,
    n_states: usize,
) -> Result<(Vec<f64>, Array2<f64>)> {
    if v.len() != r_grid.n() {
        return Err(Error::contract(format!(
            "potential sample length {} does not match grid size {}",
            v.len(),
            r_grid.n()
        )));
    }
    if n_states == 0 || n_states > r_grid.n() {
        return Err(Error::contract(format!(
            "requested {n_states} states from a {}-point grid",
            r_grid.n()
        )));
    }
    let mut h = kinetic_matrix(r_grid);
    for (k, &vk) in v.iter().enumerate() {
        h[[k, k]] += vk;
    }
    eigensolve_lowest(&h, r_grid.spacing(), n_states)
}

fn eigensolve_lowest(
    h: &Array2<f64>,
    spacing: f64,
    n_states: usize,
) -> Result<(Vec<f64>, Array2<f64>)> {
    let (energies, mut states) = symmetric_eigen_lowest(h, n_states)?;
    // Rescale from unit vectors to grid-quadrature normalization.
    states.mapv_inplace(|x| x / spacing.sqrt());
    Ok((energies, states))
}

/// Solve the electronic problem at every nuclear grid point.
///
/// Per-`R` eigensolves run in a parallel map; the sign-continuity sweep and
/// moment assembly are sequential passes afterwards.
pub fn solve_bo(
    params: &ModelParams,
    r_grid: &Grid1D,
    nuc_grid: &Grid1D,
    n_el: usize,
) -> Result<BOSurfaceSet> {
    if n_el == 0 || n_el > MAX_ELECTRONIC_STATES {
        return Err(Error::contract(format!(
            "electronic truncation must be 1..={MAX_ELECTRONIC_STATES}, got {n_el}"
        )));
    }
    params.validate()?;
    let n_r = r_grid.n();
    let n_nuc = nuc_grid.n();
    let matter = matter_potential_table(params, r_grid, nuc_grid)?;

    // One kinetic matrix serves every R; only the diagonal changes.
    let kinetic = kinetic_matrix(r_grid);
    let per_r: Vec<(Vec<f64>, Array2<f64>)> = (0..n_nuc)
        .into_par_iter()
        .map(|j| {
            let mut h = kinetic.clone();
            for k in 0..n_r {
                h[[k, k]] += matter[k * n_nuc + j];
            }
            eigensolve_lowest(&h, r_grid.spacing(), n_el)
        })
        .collect::<Result<_>>()?;

    let h_r = r_grid.spacing();
    let mut energies = Array2::zeros((n_nuc, n_el));
    let mut states = Array3::zeros((n_nuc, n_el, n_r));
    for (j, (e, s)) in per_r.iter().enumerate() {
        for i in 0..n_el {
            energies[[j, i]] = e[i];
            for k in 0..n_r {
                states[[j, i, k]] = s[[i, k]];
            }
        }
    }

    // Deterministic signs: leftmost point by largest-magnitude component,
    // then alignment with the previous nuclear point.
    let mut warnings = Vec::new();
    for i in 0..n_el {
        let anchor = {
            let row = states.slice(ndarray::s![0, i, ..]);
            let mut best = 0;
            for k in 1..n_r {
                if row[k].abs() > row[best].abs() {
                    best = k;
                }
            }
            row[best]
        };
        if anchor < 0.0 {
            states.slice_mut(ndarray::s![0, i, ..]).mapv_inplace(|x| -x);
        }
        for j in 1..n_nuc {
            let overlap = {
                let prev = states.slice(ndarray::s![j - 1, i, ..]);
                let cur = states.slice(ndarray::s![j, i, ..]);
                prev.iter().zip(cur.iter()).map(|(a, b)| a * b).sum::<f64>() * h_r
            };
            if overlap < 0.0 {
                states.slice_mut(ndarray::s![j, i, ..]).mapv_inplace(|x| -x);
            }
            if overlap.abs() < 0.5 {
                warnings.push(ContinuityWarning { state: i, nuc_index: j, overlap });
            }
        }
    }

    // Electronic dipole and second-moment matrices.
    let r_points = r_grid.points();
    let mut dipole_moments = Array3::zeros((n_nuc, n_el, n_el));
    let mut second_moments = Array3::zeros((n_nuc, n_el, n_el));
    for j in 0..n_nuc {
        for i in 0..n_el {
            for i2 in i..n_el {
                let (mut d, mut d2) = (0.0, 0.0);
                for k in 0..n_r {
                    let w = states[[j, i, k]] * states[[j, i2, k]];
                    d += w * r_points[k];
                    d2 += w * r_points[k] * r_points[k];
                }
                d *= h_r;
                d2 *= h_r;
                dipole_moments[[j, i, i2]] = d;
                dipole_moments[[j, i2, i]] = d;
                second_moments[[j, i, i2]] = d2;
                second_moments[[j, i2, i]] = d2;
            }
        }
    }

    Ok(BOSurfaceSet {
        r_grid: r_grid.clone(),
        nuc_grid: nuc_grid.clone(),
        n_el,
        energies,
        states,
        dipole_moments,
        second_moments,
        continuity_warnings: warnings,
    })
}

/// Interpolated surface gap `ε_j(R) - ε_i(R)`.
pub fn bo_gap(set: &BOSurfaceSet, i: usize, j: usize, big_r: f64) -> Result<f64> {
    if i >= set.n_el || j >= set.n_el {
        return Err(Error::contract(format!(
            "surface index out of range: have {} states, asked for ({i}, {j})",
            set.n_el
        )));
    }
    let upper: Vec<f64> = (0..set.nuc_grid.n()).map(|k| set.energies[[k, j]]).collect();
    let lower: Vec<f64> = (0..set.nuc_grid.n()).map(|k| set.energies[[k, i]]).collect();
    let e_j = grid::linear_interp(&upper, &set.nuc_grid, big_r)?;
    let e_i = grid::linear_interp(&lower, &set.nuc_grid, big_r)?;
    Ok(e_j - e_i)
}

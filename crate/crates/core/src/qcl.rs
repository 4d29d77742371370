//! Quasiclassical trajectory ensembles on extracted surfaces.
//!
//! The nuclear wavepacket is mimicked by an ensemble of classical
//! trajectories with initial conditions drawn from the Wigner transform of
//! the initial Gaussian, propagated by velocity Verlet on a force field
//! interpolated from stored surface frames (bilinear in `(R, t)`), and
//! compared to the quantum nuclear density through a Gaussian kernel
//! density estimate on the same grid.
//!
//! Everything is deterministic: each trajectory draws from its own
//! counter-based RNG stream keyed by `(seed, trajectory index)`, so the
//! ensemble is reproducible bit for bit regardless of ensemble size or
//! evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::efactor::{extend_nearest, TdpesRecord};
use crate::grid::Grid1D;
use crate::{Error, Result};

/// Default ensemble size.
pub const DEFAULT_N_TRAJECTORIES: usize = 3000;
/// Default trajectory time step (atomic units).
pub const DEFAULT_TRAJECTORY_DT: f64 = 0.25;

/// Which stored surface supplies the trajectory forces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceChoice {
    /// The full surface ε = ε_wpol + ε_kin + ε_GD.
    Full,
    /// The weighted-polaritonic component alone (for the comparison runs
    /// that show what the gauge-dependent part contributes).
    WeightedPolaritonic,
}

// ---------------------------------------------------------------------------
// Wigner sampling
// ---------------------------------------------------------------------------

/// Initial-condition distribution: the Wigner transform of the Gaussian
/// `exp(−α(R−R₀)²)`, i.e. independent normals with `Var R = 1/(4α)` and
/// `Var P = α`, momentum centered at zero.
#[derive(Debug, Clone, Copy)]
pub struct WignerSpec {
    pub center: f64,
    pub alpha: f64,
    pub n_traj: usize,
    pub seed: u64,
}

impl WignerSpec {
    pub fn position_sigma(&self) -> f64 {
        0.5 / self.alpha.sqrt()
    }

    pub fn momentum_sigma(&self) -> f64 {
        self.alpha.sqrt()
    }
}

/// Draw the `(R, P)` initial conditions.
///
/// Trajectory `i` samples from ChaCha stream `i` of the master seed: adding
/// trajectories never changes earlier draws.
pub fn wigner_sample(spec: &WignerSpec) -> Result<Vec<(f64, f64)>> {
    if !(spec.alpha > 0.0) {
        return Err(Error::contract(format!(
            "packet width parameter must be positive, got {}",
            spec.alpha
        )));
    }
    if spec.n_traj == 0 {
        return Err(Error::contract("ensemble needs at least one trajectory".to_string()));
    }
    let pos = Normal::new(spec.center, spec.position_sigma())
        .map_err(|e| Error::contract(format!("position distribution: {e}")))?;
    let mom = Normal::new(0.0, spec.momentum_sigma())
        .map_err(|e| Error::contract(format!("momentum distribution: {e}")))?;
    let mut out = Vec::with_capacity(spec.n_traj);
    for i in 0..spec.n_traj {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64);
        let r = pos.sample(&mut rng);
        let p = mom.sample(&mut rng);
        out.push((r, p));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Force field
// ---------------------------------------------------------------------------

/// Forces `−∂_R ε` on the nuclear grid at a sequence of frame times, with
/// masked regions already continued (nearest-edge value, i.e. the force is
/// held constant beyond the data). Lookups interpolate bilinearly in
/// `(R, t)` and clamp outside the covered rectangle.
#[derive(Debug, Clone)]
pub struct ForceField {
    pub grid: Grid1D,
    pub times: Vec<f64>,
    forces: Vec<Vec<f64>>,
    /// Per-frame fraction of grid points that carry continued (off-mask)
    /// rather than measured force values.
    pub continued_fraction: Vec<f64>,
}

impl ForceField {
    /// Build from surface records, continuing each frame's force over the
    /// full grid.
    pub fn from_records<'a>(
        records: impl IntoIterator<Item = &'a TdpesRecord>,
        choice: SurfaceChoice,
    ) -> Result<Self> {
        let mut grid: Option<Grid1D> = None;
        let mut times = Vec::new();
        let mut forces = Vec::new();
        let mut continued_fraction = Vec::new();
        for rec in records {
            match &grid {
                None => grid = Some(rec.grid.clone()),
                Some(g) if *g == rec.grid => {}
                Some(_) => {
                    return Err(Error::contract(
                        "surface frames live on different grids".to_string(),
                    ));
                }
            }
            let raw = match choice {
                SurfaceChoice::Full => &rec.force_total,
                SurfaceChoice::WeightedPolaritonic => &rec.force_wpol,
            };
            let continued = extend_nearest(raw, &rec.mask);
            let invalid = rec.mask.valid.iter().filter(|&&v| !v).count();
            continued_fraction.push(invalid as f64 / rec.mask.valid.len() as f64);
            times.push(rec.time_au);
            forces.push(continued);
        }
        let grid = grid.ok_or_else(|| Error::contract("no surface frames".to_string()))?;
        Self::from_samples(grid, times, forces).map(|mut f| {
            f.continued_fraction = continued_fraction;
            f
        })
    }

    /// Build from explicit full-grid force samples (analytic surfaces,
    /// tests). Frames must be in strictly increasing time order.
    pub fn from_samples(grid: Grid1D, times: Vec<f64>, forces: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != forces.len() {
            return Err(Error::contract(format!(
                "{} frame times for {} force frames",
                times.len(),
                forces.len()
            )));
        }
        if times.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::contract("frame times must be strictly increasing".to_string()));
        }
        for (t, f) in times.iter().zip(&forces) {
            if f.len() != grid.n() {
                return Err(Error::contract(format!(
                    "frame at t={t} has {} samples, grid has {}",
                    f.len(),
                    grid.n()
                )));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::numerical(format!("non-finite force in frame at t={t}")));
            }
        }
        let n_frames = times.len();
        Ok(ForceField { grid, times, forces, continued_fraction: vec![0.0; n_frames] })
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Interpolated force at `(r, t)`; the flags report whether the lookup
    /// clamped in position or in time.
    pub fn force(&self, r: f64, t: f64) -> (f64, bool, bool) {
        let clamped_t = t < self.t_start() || t > self.t_end();
        let t = t.clamp(self.t_start(), self.t_end());
        let hi = match self.times.binary_search_by(|probe| probe.partial_cmp(&t).unwrap()) {
            Ok(i) => i,
            Err(i) => i,
        };
        let (i0, i1, lam) = if hi == 0 {
            (0, 0, 0.0)
        } else if hi >= self.times.len() {
            (self.times.len() - 1, self.times.len() - 1, 0.0)
        } else {
            let (t0, t1) = (self.times[hi - 1], self.times[hi]);
            (hi - 1, hi, (t - t0) / (t1 - t0))
        };

        let clamped_r = r < self.grid.min() || r > self.grid.max();
        let r = r.clamp(self.grid.min(), self.grid.max());
        let h = self.grid.spacing();
        let pos = (r - self.grid.min()) / h;
        let k0 = (pos.floor() as usize).min(self.grid.n() - 2);
        let frac = (pos - k0 as f64).clamp(0.0, 1.0);
        let sample = |frame: &Vec<f64>| frame[k0] * (1.0 - frac) + frame[k0 + 1] * frac;
        let f = sample(&self.forces[i0]) * (1.0 - lam) + sample(&self.forces[i1]) * lam;
        (f, clamped_r, clamped_t)
    }
}

// ---------------------------------------------------------------------------
// Ensemble propagation
// ---------------------------------------------------------------------------

/// Stored phase-space snapshots of a propagated ensemble.
#[derive(Debug, Clone)]
pub struct EnsembleHistory {
    /// Snapshot times (step-aligned).
    pub times: Vec<f64>,
    /// `positions[s][i]`: trajectory `i` at stored time `s`.
    pub positions: Vec<Vec<f64>>,
    pub momenta: Vec<Vec<f64>>,
    /// Fraction of force lookups that clamped at the position-grid edge.
    pub clamped_position_fraction: f64,
    /// Fraction of force lookups outside the frame-time coverage.
    pub clamped_time_fraction: f64,
}

/// Velocity-Verlet propagation of the whole ensemble:
/// `Ṙ = P/M`, `Ṗ = −∂_R ε` via [`ForceField::force`].
///
/// `store_times` are snapped to the step lattice `t_start + k·dt`; the
/// request must lie inside `[t_start, t_start + k_max·dt]` ordering-free.
pub fn propagate_ensemble(
    initial: &[(f64, f64)],
    mass: f64,
    field: &ForceField,
    dt: f64,
    t_start: f64,
    store_times: &[f64],
) -> Result<EnsembleHistory> {
    if initial.is_empty() {
        return Err(Error::contract("empty trajectory ensemble".to_string()));
    }
    if !(mass > 0.0) {
        return Err(Error::contract(format!("mass must be positive, got {mass}")));
    }
    if !(dt > 0.0) {
        return Err(Error::contract(format!("time step must be positive, got {dt}")));
    }
    if store_times.is_empty() {
        return Err(Error::contract("no snapshot times requested".to_string()));
    }
    let mut store_steps: Vec<usize> = store_times
        .iter()
        .map(|&t| {
            let k = ((t - t_start) / dt).round();
            if k < -0.5 {
                Err(Error::contract(format!("snapshot time {t} precedes start {t_start}")))
            } else {
                Ok(k.max(0.0) as usize)
            }
        })
        .collect::<Result<_>>()?;
    store_steps.sort_unstable();
    store_steps.dedup();
    let n_steps = *store_steps.last().unwrap();

    let n = initial.len();
    let mut r: Vec<f64> = initial.iter().map(|&(x, _)| x).collect();
    let mut p: Vec<f64> = initial.iter().map(|&(_, y)| y).collect();
    let mut f = vec![0.0_f64; n];
    let mut clamped_r = 0u64;
    let mut clamped_t = 0u64;
    let mut lookups = 0u64;
    {
        let t = t_start;
        for i in 0..n {
            let (fi, cr, ct) = field.force(r[i], t);
            f[i] = fi;
            clamped_r += cr as u64;
            clamped_t += ct as u64;
            lookups += 1;
        }
    }

    let mut times = Vec::with_capacity(store_steps.len());
    let mut positions = Vec::with_capacity(store_steps.len());
    let mut momenta = Vec::with_capacity(store_steps.len());
    let mut next = store_steps.iter().peekable();
    for step in 0..=n_steps {
        if next.peek() == Some(&&step) {
            times.push(t_start + step as f64 * dt);
            positions.push(r.clone());
            momenta.push(p.clone());
            next.next();
        }
        if step < n_steps {
            let t_new = t_start + (step + 1) as f64 * dt;
            for i in 0..n {
                let p_half = p[i] + 0.5 * dt * f[i];
                r[i] += dt * p_half / mass;
                let (fi, cr, ct) = field.force(r[i], t_new);
                clamped_r += cr as u64;
                clamped_t += ct as u64;
                lookups += 1;
                p[i] = p_half + 0.5 * dt * fi;
                f[i] = fi;
            }
        }
    }
    Ok(EnsembleHistory {
        times,
        positions,
        momenta,
        clamped_position_fraction: clamped_r as f64 / lookups as f64,
        clamped_time_fraction: clamped_t as f64 / lookups as f64,
    })
}

// ---------------------------------------------------------------------------
// Kernel density estimate
// ---------------------------------------------------------------------------

/// Silverman's rule-of-thumb bandwidth `1.06 σ̂ N^{−1/5}`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::contract(
            "bandwidth estimation needs at least two samples".to_string(),
        ));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|&x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sigma = var.sqrt();
    if !(sigma > 0.0) {
        return Err(Error::numerical(
            "degenerate sample set (zero spread); supply a bandwidth explicitly".to_string(),
        ));
    }
    Ok(1.06 * sigma * n.powf(-0.2))
}

/// Gaussian kernel density estimate evaluated on a grid; integrates to 1
/// up to the grid-edge truncation. `bandwidth = None` uses
/// [`silverman_bandwidth`].
pub fn kde_density(
    samples: &[f64],
    grid: &Grid1D,
    bandwidth: Option<f64>,
) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::contract("kernel density estimate of no samples".to_string()));
    }
    let h = match bandwidth {
        Some(b) if b > 0.0 => b,
        Some(b) => {
            return Err(Error::contract(format!("bandwidth must be positive, got {b}")));
        }
        None => silverman_bandwidth(samples)?,
    };
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let density: Vec<f64> = grid
        .points()
        .into_iter()
        .map(|x| {
            let mut acc = 0.0;
            for &s in samples {
                let z = (x - s) / h;
                acc += (-0.5 * z * z).exp();
            }
            acc * norm
        })
        .collect();
    Ok(density)
}

//! End-to-end run orchestration: named resolution profiles, per-preset launch
//! conditions, storage plans, and the streaming potential-extraction pipeline
//! shared by the command-line driver and the verification suite.
//!
//! A [`ScenarioSpec`] fixes everything a run needs — model preset, initial
//! state, grids, time step, horizon, and which times get extracted potential
//! frames. [`run_in_cavity`] propagates the three-coordinate wavefunction and
//! assembles [`TdpesFrame`]s on the fly from snapshot triples, so a full run
//! never holds more than a handful of 3D snapshots in memory.

use std::collections::{BTreeMap, BTreeSet};

use crate::bo::{solve_bo, BOSurfaceSet};
use crate::efactor::{tdpes_pipeline, GdStencil, TdpesFrame};
use crate::grid::{Grid1D, Grid2D, Grid3D};
use crate::model::{total_potential_grid, ModelParams, Preset};
use crate::polariton::{solve_polaritonic_surfaces, PolaritonSurfaceSet};
use crate::propagator::{
    build_initial_state, build_initial_state_2d, run, storage_steps, CavityFreePropagator,
    CavityFreeSnapshot, InitialStateKind, InitialStateSpec, ObservableSeries, Propagator,
    WavefunctionSnapshot, TIME_STENCIL_AU,
};
use crate::{Error, Result, AU_PER_FS};

/// Cadence (in fs) of extracted-potential frames; fine enough that
/// trajectory forces can be linearly interpolated in time between frames.
pub const TDPES_FRAME_CADENCE_FS: f64 = 0.5;

/// Default time step (a.u.) for full-wavefunction propagation.
pub const DEFAULT_DT_AU: f64 = 0.1;

/// Default number of adiabatic electronic states carried in surface sets.
pub const DEFAULT_N_EL: usize = 6;

/// Default number of photon-number states in the product basis.
pub const DEFAULT_N_PH: usize = 6;

/// Named resolution profiles.
///
/// `Default` is the converged production resolution. `Coarse` halves the
/// electron axis and, on the photon axis, shrinks the box with the point
/// count so the momentum span (which must cover the occupied Fock states)
/// is preserved instead of the vacuum tail. The nuclear axis only drops to
/// 3/4 resolution: its grid momentum ceiling π/h must stay above the
/// momentum a transferred proton actually reaches (≈16 a.u. here; halving
/// would cap the grid at 13.8 and alias the transfer into a reflection).
/// `Smoke` is for wiring tests: small enough that a short propagation
/// finishes in seconds, usable only over the first few fs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Default,
    Coarse,
    Smoke,
}

impl Profile {
    pub fn name(&self) -> &'static str {
        match self {
            Profile::Default => "default",
            Profile::Coarse => "coarse",
            Profile::Smoke => "smoke",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(Profile::Default),
            "coarse" => Ok(Profile::Coarse),
            "smoke" => Ok(Profile::Smoke),
            other => Err(Error::config(format!(
                "unknown resolution profile '{other}' (expected default, coarse, or smoke)"
            ))),
        }
    }

    /// The three-coordinate propagation grid for this profile.
    pub fn grid3(&self) -> Grid3D {
        let (r, nuc, q) = match self {
            Profile::Default => ((-30.0, 30.0, 240), (-9.0, 9.0, 160), (-40.0, 40.0, 48)),
            Profile::Coarse => ((-30.0, 30.0, 120), (-9.0, 9.0, 120), (-28.0, 28.0, 32)),
            Profile::Smoke => ((-30.0, 30.0, 96), (-9.0, 9.0, 64), (-24.0, 24.0, 32)),
        };
        Grid3D::new(
            Grid1D::new(r.0, r.1, r.2).expect("static axis bounds"),
            Grid1D::new(nuc.0, nuc.1, nuc.2).expect("static axis bounds"),
            Grid1D::new(q.0, q.1, q.2).expect("static axis bounds"),
        )
    }

    /// The matching electron–nucleus grid for cavity-free reference runs.
    pub fn grid2(&self) -> Grid2D {
        let g = self.grid3();
        Grid2D::new(g.r, g.nuc)
    }
}

/// Which physical situation a run realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    /// Electron–nucleus dynamics only; no photon coordinate.
    CavityFree,
    /// In cavity, launched from the excited adiabatic electronic state with
    /// the photon mode in its vacuum.
    Factorized,
    /// In cavity, launched from the first excited polaritonic surface.
    Polaritonic,
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::CavityFree => "cavity_free",
            ScenarioKind::Factorized => "factorized",
            ScenarioKind::Polaritonic => "polaritonic",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "cavity_free" => Ok(ScenarioKind::CavityFree),
            "factorized" => Ok(ScenarioKind::Factorized),
            "polaritonic" => Ok(ScenarioKind::Polaritonic),
            other => Err(Error::config(format!(
                "unknown scenario '{other}' (expected cavity_free, factorized, or polaritonic)"
            ))),
        }
    }
}

/// Complete description of one run.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub params: ModelParams,
    /// Preset label carried for naming outputs; `params` is authoritative.
    pub preset: Preset,
    pub kind: ScenarioKind,
    pub profile: Profile,
    pub initial: InitialStateSpec,
    /// Propagation time step in a.u.
    pub dt: f64,
    /// Run horizon in fs; the run extends a trailing stencil beyond it so
    /// the last frame keeps its forward partner.
    pub t_final_fs: f64,
    /// Cadence of extracted-potential frames (fs).
    pub frame_cadence_fs: f64,
    /// Times (fs) singled out for detailed analysis; each gets a frame even
    /// if it is not a cadence multiple.
    pub analysis_times_fs: Vec<f64>,
    pub n_el: usize,
    pub n_ph: usize,
    /// Explicit grid replacing the profile's (for convergence studies and
    /// config-level grid overrides).
    pub grid_override: Option<Grid3D>,
}

impl ScenarioSpec {
    /// The standard run for a preset and scenario kind: the literature launch
    /// condition, production horizon, and analysis times.
    ///
    /// The proton-transfer preset runs to 35.8 fs with analysis times at the
    /// published snapshot instants; the electronic-excitation preset runs to
    /// 30 fs with an even 5 fs analysis ladder.
    pub fn preset_default(preset: Preset, kind: ScenarioKind, profile: Profile) -> Self {
        let state_kind = match kind {
            ScenarioKind::Polaritonic => InitialStateKind::Polaritonic,
            _ => InitialStateKind::BoFactorized,
        };
        let (t_final_fs, analysis_times_fs) = match preset {
            Preset::Pcet => (35.8, vec![3.39, 17.42, 21.29, 25.56, 35.80]),
            Preset::Elex => (30.0, vec![5.0, 10.0, 15.0, 20.0, 25.0]),
        };
        ScenarioSpec {
            params: preset.params(),
            preset,
            kind,
            profile,
            initial: InitialStateSpec::standard(state_kind),
            dt: DEFAULT_DT_AU,
            t_final_fs,
            frame_cadence_fs: TDPES_FRAME_CADENCE_FS,
            analysis_times_fs,
            n_el: DEFAULT_N_EL,
            n_ph: DEFAULT_N_PH,
            grid_override: None,
        }
    }

    /// A sub-minute variant for wiring tests: smoke grids, 5 fs horizon,
    /// two analysis times.
    pub fn smoke(preset: Preset, kind: ScenarioKind) -> Self {
        let mut spec = Self::preset_default(preset, kind, Profile::Smoke);
        spec.t_final_fs = 5.0;
        spec.analysis_times_fs = vec![1.0, 2.5];
        spec.n_el = 4;
        spec.n_ph = 4;
        spec
    }

    /// The propagation grid: the override if set, else the profile's.
    pub fn grid3(&self) -> Grid3D {
        self.grid_override.clone().unwrap_or_else(|| self.profile.grid3())
    }

    /// The matching electron–nucleus grid for cavity-free runs.
    pub fn grid2(&self) -> Grid2D {
        let g = self.grid3();
        Grid2D::new(g.r, g.nuc)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::config(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.t_final_fs > 0.0) {
            return Err(Error::config(format!(
                "run horizon must be positive, got {} fs",
                self.t_final_fs
            )));
        }
        if !(self.frame_cadence_fs > 0.0) {
            return Err(Error::config(format!(
                "frame cadence must be positive, got {} fs",
                self.frame_cadence_fs
            )));
        }
        for &t in &self.analysis_times_fs {
            if !(0.0..=self.t_final_fs).contains(&t) {
                return Err(Error::config(format!(
                    "analysis time {t} fs outside the run horizon [0, {}] fs",
                    self.t_final_fs
                )));
            }
        }
        if self.n_el == 0 || self.n_ph == 0 {
            return Err(Error::config(
                "need at least one electronic and one photon state".to_string(),
            ));
        }
        Ok(())
    }

    /// Steps per ± arm of the finite-difference time stencil.
    pub fn stencil_steps(&self) -> usize {
        ((TIME_STENCIL_AU / self.dt).round() as usize).max(1)
    }

    /// Total propagation steps: the horizon plus a trailing stencil margin.
    pub fn n_steps(&self) -> usize {
        (self.t_final_fs * AU_PER_FS / self.dt).round() as usize + self.stencil_steps()
    }

    /// Centers (as step indices) of the extracted-potential frames: every
    /// cadence multiple, every analysis time, and one frame as early as the
    /// stencil allows so the extracted timeline reaches back to `t ≈ 0`.
    pub fn frame_center_steps(&self) -> Vec<usize> {
        let s = self.stencil_steps();
        let n = self.n_steps();
        let mut centers = BTreeSet::new();
        centers.insert(s);
        let cadence_steps =
            ((self.frame_cadence_fs * AU_PER_FS / self.dt).round() as usize).max(1);
        let mut c = cadence_steps;
        while c + s <= n {
            centers.insert(c);
            c += cadence_steps;
        }
        for &t_fs in &self.analysis_times_fs {
            let c = (t_fs * AU_PER_FS / self.dt).round() as usize;
            if c >= s && c + s <= n {
                centers.insert(c);
            }
        }
        centers.into_iter().collect()
    }

    /// Frame stencil triples `(center−s, center, center+s)` in time order.
    pub fn frame_triples(&self) -> Vec<(usize, usize, usize)> {
        let s = self.stencil_steps();
        self.frame_center_steps().iter().map(|&c| (c - s, c, c + s)).collect()
    }

    /// Step indices at which the propagation stores snapshots and evaluates
    /// observables: the frame cadence plus every stencil arm.
    pub fn storage_plan(&self) -> Result<BTreeSet<usize>> {
        let mut plan =
            storage_steps(self.dt, self.n_steps(), self.frame_cadence_fs, &[], TIME_STENCIL_AU)?;
        for (m, c, p) in self.frame_triples() {
            plan.insert(m);
            plan.insert(c);
            plan.insert(p);
        }
        Ok(plan)
    }

    /// `preset_scenario` tag used in output file names.
    pub fn label(&self) -> String {
        format!("{}_{}", self.preset.name(), self.kind.name())
    }
}

/// Solved static structure for one parameter set and grid: adiabatic
/// electronic surfaces, polaritonic surfaces, and the total potential on the
/// propagation grid.
#[derive(Debug, Clone)]
pub struct SurfaceData {
    pub params: ModelParams,
    pub grid: Grid3D,
    pub bo: BOSurfaceSet,
    pub pol: PolaritonSurfaceSet,
    /// Total potential in snapshot layout, for conditional-expectation use.
    pub potential: Vec<f64>,
}

impl SurfaceData {
    pub fn solve(params: &ModelParams, grid: &Grid3D, n_el: usize, n_ph: usize) -> Result<Self> {
        let bo = solve_bo(params, &grid.r, &grid.nuc, n_el)?;
        let pol = solve_polaritonic_surfaces(&bo, params, n_el, n_ph)?;
        let potential = total_potential_grid(params, grid, false)?.values;
        Ok(SurfaceData { params: params.clone(), grid: grid.clone(), bo, pol, potential })
    }
}

/// Everything produced by one in-cavity run.
#[derive(Debug, Clone)]
pub struct InCavityRun {
    pub spec: ScenarioSpec,
    pub surfaces: SurfaceData,
    pub series: ObservableSeries,
    /// Extracted-potential frames in time order (empty if not requested).
    pub frames: Vec<TdpesFrame>,
    /// Full wavefunction at each analysis time (only when frames were
    /// requested), for after-the-fact expectation values such as energy
    /// audits.
    pub analysis_snapshots: Vec<WavefunctionSnapshot>,
    pub final_state: WavefunctionSnapshot,
}

impl InCavityRun {
    /// The frame whose timestamp is nearest `t_fs` (frames are dense enough
    /// that analysis times land within one stencil arm).
    pub fn frame_near(&self, t_fs: f64) -> Option<&TdpesFrame> {
        let t = t_fs * AU_PER_FS;
        self.frames
            .iter()
            .min_by(|a, b| {
                let da = (a.nuclear.time_au - t).abs();
                let db = (b.nuclear.time_au - t).abs();
                da.partial_cmp(&db).expect("finite frame times")
            })
    }

    /// The observable record whose timestamp is nearest `t_fs`.
    pub fn record_near(&self, t_fs: f64) -> Option<&crate::propagator::ObservableRecord> {
        let t = t_fs * AU_PER_FS;
        self.series.records.iter().min_by(|a, b| {
            let da = (a.time_au - t).abs();
            let db = (b.time_au - t).abs();
            da.partial_cmp(&db).expect("finite record times")
        })
    }
}

/// Everything produced by one cavity-free reference run.
#[derive(Debug, Clone)]
pub struct CavityFreeRun {
    pub spec: ScenarioSpec,
    pub params: ModelParams,
    pub grid: Grid2D,
    pub bo: BOSurfaceSet,
    pub series: ObservableSeries,
    /// `(time a.u., ρ(R))` at every stored step.
    pub nuclear_densities: Vec<(f64, Vec<f64>)>,
    pub final_state: CavityFreeSnapshot,
}

/// Propagate a full three-coordinate run, optionally extracting potential
/// frames from snapshot stencil triples as they complete.
///
/// Snapshot memory stays bounded: a snapshot is cloned into a holding buffer
/// only if an unfinished triple needs it and is dropped as soon as the last
/// such triple is assembled.
pub fn run_in_cavity(spec: &ScenarioSpec, collect_frames: bool) -> Result<InCavityRun> {
    run_in_cavity_with(spec, collect_frames, |_, _| Ok(()))
}

/// [`run_in_cavity`] with an extra sink that sees every stored snapshot and
/// its observables (for persisting a snapshot store, progress reporting, …).
pub fn run_in_cavity_with(
    spec: &ScenarioSpec,
    collect_frames: bool,
    mut extra_sink: impl FnMut(&WavefunctionSnapshot, &crate::propagator::ObservableRecord) -> Result<()>,
) -> Result<InCavityRun> {
    spec.validate()?;
    if spec.kind == ScenarioKind::CavityFree {
        return Err(Error::contract(
            "cavity-free scenarios use run_cavity_free, not the three-coordinate runner"
                .to_string(),
        ));
    }
    let surfaces = SurfaceData::solve(&spec.params, &spec.grid3(), spec.n_el, spec.n_ph)?;
    let prop = Propagator::for_model(&spec.params, &surfaces.grid, spec.dt)?;
    let pol_opt = match spec.initial.kind {
        InitialStateKind::Polaritonic => Some(&surfaces.pol),
        InitialStateKind::BoFactorized => None,
    };
    let init = build_initial_state(&spec.initial, &spec.params, &surfaces.grid, &surfaces.bo, pol_opt)?;

    let n_steps = spec.n_steps();
    let plan = spec.storage_plan()?;
    let triples = if collect_frames { spec.frame_triples() } else { Vec::new() };

    // How many unfinished triples still need each step's snapshot.
    let mut need: BTreeMap<usize, usize> = BTreeMap::new();
    for &(m, c, p) in &triples {
        for s in [m, c, p] {
            *need.entry(s).or_insert(0) += 1;
        }
    }
    let mut held: BTreeMap<usize, WavefunctionSnapshot> = BTreeMap::new();
    let mut frames: Vec<TdpesFrame> = Vec::with_capacity(triples.len());
    let mut next_triple = 0usize;
    let analysis_steps: BTreeSet<usize> = if collect_frames {
        spec.analysis_times_fs
            .iter()
            .map(|&t| (t * AU_PER_FS / spec.dt).round() as usize)
            .collect()
    } else {
        BTreeSet::new()
    };
    let mut analysis_snapshots: Vec<WavefunctionSnapshot> = Vec::new();

    let (final_state, series) = run(&prop, init, n_steps, &plan, Some(&surfaces.bo), |snap, rec| {
        extra_sink(snap, rec)?;
        let step = (snap.time_au / spec.dt).round() as usize;
        if analysis_steps.contains(&step) {
            analysis_snapshots.push(snap.clone());
        }
        if need.contains_key(&step) {
            held.insert(step, snap.clone());
        }
        while next_triple < triples.len() {
            let (m, c, p) = triples[next_triple];
            let (Some(sm), Some(sc), Some(sp)) = (held.get(&m), held.get(&c), held.get(&p))
            else {
                break;
            };
            let frame = tdpes_pipeline(
                sm,
                sc,
                sp,
                &spec.params,
                &surfaces.potential,
                &surfaces.bo,
                &surfaces.pol,
                GdStencil::Centered,
            )?;
            frames.push(frame);
            for s in [m, c, p] {
                let count = need.get_mut(&s).expect("triple member was counted");
                *count -= 1;
                if *count == 0 {
                    need.remove(&s);
                    held.remove(&s);
                }
            }
            next_triple += 1;
        }
        Ok(())
    })?;

    if next_triple != triples.len() {
        return Err(Error::contract(format!(
            "only {next_triple} of {} frame triples completed; storage plan is inconsistent",
            triples.len()
        )));
    }
    Ok(InCavityRun { spec: spec.clone(), surfaces, series, frames, analysis_snapshots, final_state })
}

/// Propagate the matching electron–nucleus reference run (no cavity).
pub fn run_cavity_free(spec: &ScenarioSpec) -> Result<CavityFreeRun> {
    spec.validate()?;
    if spec.kind != ScenarioKind::CavityFree {
        return Err(Error::contract(
            "in-cavity scenarios use run_in_cavity, not the two-coordinate runner".to_string(),
        ));
    }
    let grid = spec.grid2();
    let bo = solve_bo(&spec.params, &grid.r, &grid.nuc, spec.n_el)?;
    let prop = CavityFreePropagator::for_model(&spec.params, &grid, spec.dt)?;
    let init =
        build_initial_state_2d(spec.initial.level, spec.initial.center, spec.initial.alpha, &grid, &bo)?;
    let n_steps = spec.n_steps();
    let plan = spec.storage_plan()?;

    let mut densities: Vec<(f64, Vec<f64>)> = Vec::with_capacity(plan.len());
    let (final_state, series) =
        crate::propagator::run_cavity_free(&prop, init, n_steps, &plan, Some(&bo), |snap, _| {
            densities.push((snap.time_au, nuclear_density_2d(snap)));
            Ok(())
        })?;
    Ok(CavityFreeRun {
        spec: spec.clone(),
        params: spec.params.clone(),
        grid,
        bo,
        series,
        nuclear_densities: densities,
        final_state,
    })
}

/// Matter marginal density `ρ(r,R) = ∫|Ψ(r,R,q)|² dq`, flattened with the
/// nuclear index fastest (the [`Grid2D`] layout).
pub fn matter_density_3d(snap: &WavefunctionSnapshot) -> Vec<f64> {
    let (n_r, n_nuc, n_q) = (snap.grid.r.n(), snap.grid.nuc.n(), snap.grid.q.n());
    let h_q = snap.grid.q.spacing();
    let mut rho = vec![0.0; n_r * n_nuc];
    for (cell, block) in rho.iter_mut().zip(snap.amplitudes.chunks_exact(n_q)) {
        *cell = block.iter().map(|a| a.norm_sqr()).sum::<f64>() * h_q;
    }
    debug_assert_eq!(n_r * n_nuc * n_q, snap.amplitudes.len());
    rho
}

/// Nuclear marginal density `ρ(R) = ∫|ψ(r,R)|² dr` of a two-coordinate state.
pub fn nuclear_density_2d(snap: &CavityFreeSnapshot) -> Vec<f64> {
    let (n_r, n_nuc) = (snap.grid.r.n(), snap.grid.nuc.n());
    let h_r = snap.grid.r.spacing();
    let mut rho = vec![0.0; n_nuc];
    for ir in 0..n_r {
        let row = &snap.amplitudes[ir * n_nuc..(ir + 1) * n_nuc];
        for (j, a) in row.iter().enumerate() {
            rho[j] += a.norm_sqr() * h_r;
        }
    }
    rho
}

/// Probability `∫_{R<split} ρ(R) dR` (trapezoid weights, points strictly
/// below the split).
pub fn trapped_fraction(density: &[f64], grid: &Grid1D, split: f64) -> f64 {
    let h = grid.spacing();
    let n = grid.n();
    assert_eq!(density.len(), n, "density length must match the grid");
    let mut total = 0.0;
    for (j, &x) in grid.points().iter().enumerate() {
        if x < split {
            let w = if j == 0 || j == n - 1 { 0.5 * h } else { h };
            total += density[j] * w;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn storage_plan_covers_every_frame_triple() {
        let spec = ScenarioSpec::preset_default(Preset::Pcet, ScenarioKind::Factorized, Profile::Coarse);
        let plan = spec.storage_plan().unwrap();
        let triples = spec.frame_triples();
        assert!(!triples.is_empty());
        for &(m, c, p) in &triples {
            assert!(plan.contains(&m) && plan.contains(&c) && plan.contains(&p));
            assert_eq!(c - m, spec.stencil_steps());
            assert_eq!(p - c, spec.stencil_steps());
        }
        // The horizon leaves room for the last analysis time's forward arm.
        let last = *triples.last().unwrap();
        assert!(last.2 <= spec.n_steps());
        let step_358 = (35.80 * AU_PER_FS / spec.dt).round() as usize;
        assert!(triples.iter().any(|t| t.1 == step_358), "analysis time 35.8 fs gets a frame");
        // Earliest frame sits one stencil arm in.
        assert_eq!(triples[0].0, 0);
        assert_eq!(triples[0].1, spec.stencil_steps());
    }

    #[test]
    fn trapped_fraction_matches_quadrature() {
        let grid = Grid1D::new(-4.0, 4.0, 81).unwrap();
        // Unit-mass density concentrated left of zero.
        let sigma = 1.0 / 3.0f64;
        let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt() / sigma;
        let rho: Vec<f64> = grid
            .points()
            .iter()
            .map(|&x| norm * (-0.5 * ((x + 2.0) / sigma).powi(2)).exp())
            .collect();
        let all = trapped_fraction(&rho, &grid, 5.0);
        assert!((all - 1.0).abs() < 1e-6, "full integral {all}");
        let left = trapped_fraction(&rho, &grid, 0.0);
        assert!((left - 1.0).abs() < 1e-4, "packet lies left of zero: {left}");
        let none = trapped_fraction(&rho, &grid, -3.9);
        assert!(none < 1e-3, "almost nothing below -3.9: {none}");
    }

    #[test]
    fn smoke_run_produces_consistent_frames_and_observables() {
        let mut spec = ScenarioSpec::smoke(Preset::Pcet, ScenarioKind::Factorized);
        spec.t_final_fs = 2.0;
        spec.analysis_times_fs = vec![1.0];
        let run = run_in_cavity(&spec, true).unwrap();
        assert_eq!(run.frames.len(), spec.frame_center_steps().len());
        // Frames arrive in time order and carry the expected timestamps.
        let mut last_t = f64::NEG_INFINITY;
        for frame in &run.frames {
            assert!(frame.nuclear.time_au > last_t);
            last_t = frame.nuclear.time_au;
            assert!(frame.partial_norm_max_err < 1e-8);
            assert!(frame.reconstruction_max_err < 1e-8);
        }
        // Conservation over the short run.
        assert!(run.series.norm_drift() < 1e-9, "norm drift {}", run.series.norm_drift());
        assert!(run.series.energy_drift() < 5e-7, "energy drift {}", run.series.energy_drift());
        // The analysis time got a frame and a stashed snapshot.
        let t_analysis = 1.0 * AU_PER_FS;
        assert!(
            run.frames.iter().any(|f| (f.nuclear.time_au - t_analysis).abs() < spec.dt),
            "frame near 1 fs"
        );
        assert_eq!(run.analysis_snapshots.len(), 1);
        assert!((run.analysis_snapshots[0].time_au - t_analysis).abs() < spec.dt);

        // Cavity-free runner on the same preset.
        let mut free = ScenarioSpec::smoke(Preset::Pcet, ScenarioKind::CavityFree);
        free.t_final_fs = 1.0;
        free.analysis_times_fs = vec![0.5];
        let free_run = run_cavity_free(&free).unwrap();
        assert!(free_run.series.norm_drift() < 1e-9);
        let (_, rho) = free_run.nuclear_densities.last().unwrap();
        let grid = free_run.grid.nuc.clone();
        let total = trapped_fraction(rho, &grid, grid.max() + 1.0);
        assert!((total - 1.0).abs() < 1e-6, "density normalized: {total}");
    }

    #[test]
    fn scenario_kind_and_profile_round_trip_names() {
        for kind in [ScenarioKind::CavityFree, ScenarioKind::Factorized, ScenarioKind::Polaritonic] {
            assert_eq!(ScenarioKind::parse(kind.name()).unwrap(), kind);
        }
        for profile in [Profile::Default, Profile::Coarse, Profile::Smoke] {
            assert_eq!(Profile::parse(profile.name()).unwrap(), profile);
        }
        assert!(ScenarioKind::parse("nope").is_err());
        assert!(Profile::parse("nope").is_err());
    }
}

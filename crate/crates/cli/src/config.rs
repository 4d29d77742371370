//! Run configuration: a flat `key = value` format with dotted section
//! prefixes, a fixed schema (unknown keys are rejected), and lossless
//! round-tripping through [`RunConfig::to_pairs`] / [`RunConfig::from_pairs`].
//!
//! Key reference (defaults in brackets; lists are space-separated):
//!
//! ```text
//! model.preset              pcet | elex                        [pcet]
//! model.l                   fixed-ion separation               [preset]
//! model.a_plus              right-ion softening                [preset]
//! model.a_minus             left-ion softening                 [preset]
//! model.a_f                 proton softening                   [preset]
//! model.mass                proton mass                        [preset]
//! model.omega_c             cavity frequency                   [preset]
//! model.lambda              coupling strength                  [preset]
//! model.self_polarization   true | false                       [false]
//! run.scenario              cavity_free | factorized | polaritonic | batch [factorized]
//! run.profile               default | coarse | smoke           [default]
//! run.dt                    propagation step (a.u.)            [0.1]
//! run.t_final_fs            horizon (fs)                       [preset]
//! run.cadence_fs            frame/storage cadence (fs)         [0.5]
//! run.analysis_times_fs     list of times (fs)                 [preset]
//! run.n_el                  electronic states in surface sets  [6]
//! run.n_ph                  photon states in surface sets      [6]
//! initial.kind              bo_factorized | polaritonic        [matches run.scenario]
//! initial.level             surface index                      [1]
//! initial.center            Gaussian center R0                 [-4]
//! initial.alpha             Gaussian exponent                  [2.85]
//! grid.r                    "min max n" override               [profile]
//! grid.nuc                  "min max n" override               [profile]
//! grid.q                    "min max n" override               [profile]
//! qcl.n_traj                trajectory count                   [3000]
//! qcl.seed                  master seed                        [1]
//! qcl.dt                    trajectory step (a.u.)             [0.25]
//! qcl.mode                  full | wpol | both                 [both]
//! output.dir                output directory                   [out]
//! ```
//!
//! All randomness flows from `qcl.seed`: trajectory `i` draws from an
//! independent counter-mode stream `i` of that seed, and both surface modes
//! reuse the same ensemble, so any rerun (or prefix of a larger ensemble) is
//! bit-identical.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use cavidyn::grid::{Grid1D, Grid3D};
use cavidyn::io::{format_float, read_kv, write_kv};
use cavidyn::model::{ModelParams, Preset};
use cavidyn::propagator::{InitialStateKind, InitialStateSpec};
use cavidyn::qcl::{DEFAULT_N_TRAJECTORIES, DEFAULT_TRAJECTORY_DT};
use cavidyn::scenario::{Profile, ScenarioKind, ScenarioSpec};
use cavidyn::{Error, Result};

/// Which runs a command operates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    One(ScenarioKind),
    /// Every scenario of the preset: cavity-free and factorized, plus
    /// polaritonic for the proton-transfer preset.
    Batch,
}

impl Scenario {
    fn name(&self) -> &'static str {
        match self {
            Scenario::One(kind) => kind.name(),
            Scenario::Batch => "batch",
        }
    }

    fn parse(name: &str) -> Result<Self> {
        if name == "batch" {
            return Ok(Scenario::Batch);
        }
        Ok(Scenario::One(ScenarioKind::parse(name)?))
    }
}

/// Which extracted surface(s) the trajectory command runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QclMode {
    Full,
    Wpol,
    Both,
}

impl QclMode {
    fn name(&self) -> &'static str {
        match self {
            QclMode::Full => "full",
            QclMode::Wpol => "wpol",
            QclMode::Both => "both",
        }
    }

    fn parse(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(QclMode::Full),
            "wpol" => Ok(QclMode::Wpol),
            "both" => Ok(QclMode::Both),
            other => Err(Error::config(format!(
                "qcl.mode: unknown mode '{other}' (expected full, wpol, or both)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QclSettings {
    pub n_traj: usize,
    pub seed: u64,
    pub dt: f64,
    pub mode: QclMode,
}

/// Fully resolved configuration for one command invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub preset: Preset,
    pub params: ModelParams,
    pub scenario: Scenario,
    pub profile: Profile,
    pub dt: f64,
    pub t_final_fs: f64,
    pub cadence_fs: f64,
    pub analysis_times_fs: Vec<f64>,
    pub n_el: usize,
    pub n_ph: usize,
    pub initial: InitialStateSpec,
    pub grid_r: Option<(f64, f64, usize)>,
    pub grid_nuc: Option<(f64, f64, usize)>,
    pub grid_q: Option<(f64, f64, usize)>,
    pub qcl: QclSettings,
    pub out_dir: PathBuf,
    /// Keys that were given explicitly (not derived from defaults).
    explicit: BTreeSet<String>,
}

const KNOWN_KEYS: &[&str] = &[
    "model.preset",
    "model.l",
    "model.a_plus",
    "model.a_minus",
    "model.a_f",
    "model.mass",
    "model.omega_c",
    "model.lambda",
    "model.self_polarization",
    "run.scenario",
    "run.profile",
    "run.dt",
    "run.t_final_fs",
    "run.cadence_fs",
    "run.analysis_times_fs",
    "run.n_el",
    "run.n_ph",
    "initial.kind",
    "initial.level",
    "initial.center",
    "initial.alpha",
    "grid.r",
    "grid.nuc",
    "grid.q",
    "qcl.n_traj",
    "qcl.seed",
    "qcl.dt",
    "qcl.mode",
    "output.dir",
];

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| Error::config(format!("{key}: expected a number, got '{value}'")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| Error::config(format!("{key}: expected a non-negative integer, got '{value}'")))
}

fn parse_u64(key: &str, value: &str) -> Result<u64> {
    value
        .parse::<u64>()
        .map_err(|_| Error::config(format!("{key}: expected a non-negative integer, got '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::config(format!("{key}: expected true or false, got '{other}'"))),
    }
}

fn parse_f64_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split_whitespace().map(|tok| parse_f64(key, tok)).collect()
}

fn parse_axis(key: &str, value: &str) -> Result<(f64, f64, usize)> {
    let toks: Vec<&str> = value.split_whitespace().collect();
    if toks.len() != 3 {
        return Err(Error::config(format!(
            "{key}: expected 'min max n_points', got '{value}'"
        )));
    }
    let min = parse_f64(key, toks[0])?;
    let max = parse_f64(key, toks[1])?;
    let n = parse_usize(key, toks[2])?;
    // Validates bounds and point count immediately so the error names the key.
    Grid1D::new(min, max, n).map_err(|e| Error::config(format!("{key}: {e}")))?;
    Ok((min, max, n))
}

fn axis_string(axis: &(f64, f64, usize)) -> String {
    format!("{} {} {}", format_float(axis.0), format_float(axis.1), axis.2)
}

impl RunConfig {
    /// Build a config from ordered `key = value` pairs. Later pairs override
    /// earlier ones; unknown keys are rejected.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<RunConfig> {
        for (k, _) in pairs {
            if !KNOWN_KEYS.contains(&k.as_str()) {
                return Err(Error::config(format!(
                    "unknown config key '{k}' (see the key reference in README.md)"
                )));
            }
        }
        let last = |key: &str| -> Option<&str> {
            pairs.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
        };

        // Structural keys first: they set the defaults everything else lands on.
        let preset = match last("model.preset") {
            Some(name) => name
                .parse::<Preset>()
                .map_err(|e| Error::config(format!("model.preset: {e}")))?,
            None => Preset::Pcet,
        };
        let scenario = match last("run.scenario") {
            Some(name) => {
                Scenario::parse(name).map_err(|e| Error::config(format!("run.scenario: {e}")))?
            }
            None => Scenario::One(ScenarioKind::Factorized),
        };
        let profile = match last("run.profile") {
            Some(name) => {
                Profile::parse(name).map_err(|e| Error::config(format!("run.profile: {e}")))?
            }
            None => Profile::Default,
        };
        let default_kind = match scenario {
            Scenario::One(ScenarioKind::Polaritonic) => ScenarioKind::Polaritonic,
            _ => ScenarioKind::Factorized,
        };
        let defaults = ScenarioSpec::preset_default(preset, default_kind, profile);

        let mut cfg = RunConfig {
            preset,
            params: defaults.params.clone(),
            scenario,
            profile,
            dt: defaults.dt,
            t_final_fs: defaults.t_final_fs,
            cadence_fs: defaults.frame_cadence_fs,
            analysis_times_fs: defaults.analysis_times_fs.clone(),
            n_el: defaults.n_el,
            n_ph: defaults.n_ph,
            initial: defaults.initial,
            grid_r: None,
            grid_nuc: None,
            grid_q: None,
            qcl: QclSettings {
                n_traj: DEFAULT_N_TRAJECTORIES,
                seed: 1,
                dt: DEFAULT_TRAJECTORY_DT,
                mode: QclMode::Both,
            },
            out_dir: PathBuf::from("out"),
            explicit: BTreeSet::new(),
        };

        for (key, value) in pairs {
            cfg.explicit.insert(key.clone());
            match key.as_str() {
                // Handled structurally above.
                "model.preset" | "run.scenario" | "run.profile" => {}
                "model.l" => cfg.params.l = parse_f64(key, value)?,
                "model.a_plus" => cfg.params.a_plus = parse_f64(key, value)?,
                "model.a_minus" => cfg.params.a_minus = parse_f64(key, value)?,
                "model.a_f" => cfg.params.a_f = parse_f64(key, value)?,
                "model.mass" => cfg.params.mass = parse_f64(key, value)?,
                "model.omega_c" => cfg.params.omega_c = parse_f64(key, value)?,
                "model.lambda" => cfg.params.lambda = parse_f64(key, value)?,
                "model.self_polarization" => {
                    cfg.params.include_self_polarization = parse_bool(key, value)?
                }
                "run.dt" => cfg.dt = parse_f64(key, value)?,
                "run.t_final_fs" => cfg.t_final_fs = parse_f64(key, value)?,
                "run.cadence_fs" => cfg.cadence_fs = parse_f64(key, value)?,
                "run.analysis_times_fs" => cfg.analysis_times_fs = parse_f64_list(key, value)?,
                "run.n_el" => cfg.n_el = parse_usize(key, value)?,
                "run.n_ph" => cfg.n_ph = parse_usize(key, value)?,
                "initial.kind" => {
                    cfg.initial.kind = match value.as_str() {
                        "bo_factorized" => InitialStateKind::BoFactorized,
                        "polaritonic" => InitialStateKind::Polaritonic,
                        other => {
                            return Err(Error::config(format!(
                                "initial.kind: unknown kind '{other}' \
                                 (expected bo_factorized or polaritonic)"
                            )))
                        }
                    }
                }
                "initial.level" => cfg.initial.level = parse_usize(key, value)?,
                "initial.center" => cfg.initial.center = parse_f64(key, value)?,
                "initial.alpha" => cfg.initial.alpha = parse_f64(key, value)?,
                "grid.r" => cfg.grid_r = Some(parse_axis(key, value)?),
                "grid.nuc" => cfg.grid_nuc = Some(parse_axis(key, value)?),
                "grid.q" => cfg.grid_q = Some(parse_axis(key, value)?),
                "qcl.n_traj" => cfg.qcl.n_traj = parse_usize(key, value)?,
                "qcl.seed" => cfg.qcl.seed = parse_u64(key, value)?,
                "qcl.dt" => cfg.qcl.dt = parse_f64(key, value)?,
                "qcl.mode" => cfg.qcl.mode = QclMode::parse(value)?,
                "output.dir" => cfg.out_dir = PathBuf::from(value),
                other => unreachable!("key '{other}' passed the schema check"),
            }
        }
        // Shortening the horizon without restating the analysis times keeps
        // only the preset times that still fit (falling back to the final
        // time); explicitly listed times past the horizon stay a hard error.
        if cfg.explicit.contains("run.t_final_fs") && !cfg.explicit.contains("run.analysis_times_fs")
        {
            let horizon = cfg.t_final_fs * (1.0 + 1e-12);
            cfg.analysis_times_fs.retain(|&t| t <= horizon);
            if cfg.analysis_times_fs.is_empty() {
                cfg.analysis_times_fs.push(cfg.t_final_fs);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file and apply override pairs on top (later wins).
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
        let mut pairs = match path {
            Some(p) => read_kv(p)?,
            None => Vec::new(),
        };
        pairs.extend(overrides.iter().cloned());
        Self::from_pairs(&pairs)
    }

    fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.qcl.n_traj == 0 {
            return Err(Error::config("qcl.n_traj: need at least one trajectory".to_string()));
        }
        if !(self.qcl.dt > 0.0) {
            return Err(Error::config(format!(
                "qcl.dt: trajectory step must be positive, got {}",
                self.qcl.dt
            )));
        }
        if self.explicit.contains("initial.kind") {
            let conflict = match self.scenario {
                Scenario::Batch => true,
                Scenario::One(ScenarioKind::CavityFree) => {
                    self.initial.kind == InitialStateKind::Polaritonic
                }
                Scenario::One(ScenarioKind::Factorized) => {
                    self.initial.kind == InitialStateKind::Polaritonic
                }
                Scenario::One(ScenarioKind::Polaritonic) => {
                    self.initial.kind == InitialStateKind::BoFactorized
                }
            };
            if conflict {
                return Err(Error::config(format!(
                    "initial.kind contradicts run.scenario = {}; drop initial.kind and let \
                     the scenario choose the launch state",
                    self.scenario.name()
                )));
            }
        }
        // Everything else (dt, horizon, cadence, analysis times, basis sizes)
        // is validated by the scenario the moment it is built.
        self.to_scenario(self.single_kind().unwrap_or(ScenarioKind::Factorized)).validate()
    }

    /// The scenario kind, unless this is a batch config.
    pub fn single_kind(&self) -> Option<ScenarioKind> {
        match self.scenario {
            Scenario::One(kind) => Some(kind),
            Scenario::Batch => None,
        }
    }

    /// The kinds this config expands to (batch order: reference first).
    pub fn scenario_kinds(&self) -> Vec<ScenarioKind> {
        match self.scenario {
            Scenario::One(kind) => vec![kind],
            Scenario::Batch => match self.preset {
                Preset::Pcet => vec![
                    ScenarioKind::CavityFree,
                    ScenarioKind::Factorized,
                    ScenarioKind::Polaritonic,
                ],
                Preset::Elex => vec![ScenarioKind::CavityFree, ScenarioKind::Factorized],
            },
        }
    }

    /// Materialize the scenario description for one kind.
    pub fn to_scenario(&self, kind: ScenarioKind) -> ScenarioSpec {
        let mut spec = ScenarioSpec::preset_default(self.preset, kind, self.profile);
        spec.params = self.params.clone();
        spec.dt = self.dt;
        spec.t_final_fs = self.t_final_fs;
        spec.frame_cadence_fs = self.cadence_fs;
        spec.analysis_times_fs = self.analysis_times_fs.clone();
        spec.n_el = self.n_el;
        spec.n_ph = self.n_ph;
        // The launch kind follows the scenario; level/center/alpha follow the
        // config.
        spec.initial.level = self.initial.level;
        spec.initial.center = self.initial.center;
        spec.initial.alpha = self.initial.alpha;
        spec.grid_override = self.grid_override();
        spec
    }

    /// The explicit grid, if any axis was overridden (others keep the
    /// profile's axes).
    pub fn grid_override(&self) -> Option<Grid3D> {
        if self.grid_r.is_none() && self.grid_nuc.is_none() && self.grid_q.is_none() {
            return None;
        }
        let base = self.profile.grid3();
        let make = |over: &Option<(f64, f64, usize)>, base: &Grid1D| -> Grid1D {
            match over {
                Some((min, max, n)) => {
                    Grid1D::new(*min, *max, *n).expect("axis was validated at parse time")
                }
                None => base.clone(),
            }
        };
        Some(Grid3D::new(
            make(&self.grid_r, &base.r),
            make(&self.grid_nuc, &base.nuc),
            make(&self.grid_q, &base.q),
        ))
    }

    /// Canonical serialization: every key, fixed order. Parsing these pairs
    /// reproduces the config exactly.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let p = &self.params;
        let mut pairs: Vec<(String, String)> = vec![
            ("model.preset".into(), self.preset.name().into()),
            ("model.l".into(), format_float(p.l)),
            ("model.a_plus".into(), format_float(p.a_plus)),
            ("model.a_minus".into(), format_float(p.a_minus)),
            ("model.a_f".into(), format_float(p.a_f)),
            ("model.mass".into(), format_float(p.mass)),
            ("model.omega_c".into(), format_float(p.omega_c)),
            ("model.lambda".into(), format_float(p.lambda)),
            (
                "model.self_polarization".into(),
                if p.include_self_polarization { "true" } else { "false" }.into(),
            ),
            ("run.scenario".into(), self.scenario.name().into()),
            ("run.profile".into(), self.profile.name().into()),
            ("run.dt".into(), format_float(self.dt)),
            ("run.t_final_fs".into(), format_float(self.t_final_fs)),
            ("run.cadence_fs".into(), format_float(self.cadence_fs)),
            (
                "run.analysis_times_fs".into(),
                self.analysis_times_fs
                    .iter()
                    .map(|&t| format_float(t))
                    .collect::<Vec<_>>()
                    .join(" "),
            ),
            ("run.n_el".into(), self.n_el.to_string()),
            ("run.n_ph".into(), self.n_ph.to_string()),
        ];
        // In a batch every member picks its own launch construction, so the
        // canonical form never pins one.
        if let Scenario::One(_) = self.scenario {
            pairs.push((
                "initial.kind".into(),
                match self.initial.kind {
                    InitialStateKind::BoFactorized => "bo_factorized",
                    InitialStateKind::Polaritonic => "polaritonic",
                }
                .into(),
            ));
        }
        pairs.extend([
            ("initial.level".into(), self.initial.level.to_string()),
            ("initial.center".into(), format_float(self.initial.center)),
            ("initial.alpha".into(), format_float(self.initial.alpha)),
        ]);
        for (key, axis) in
            [("grid.r", &self.grid_r), ("grid.nuc", &self.grid_nuc), ("grid.q", &self.grid_q)]
        {
            if let Some(a) = axis {
                pairs.push((key.into(), axis_string(a)));
            }
        }
        pairs.extend([
            ("qcl.n_traj".to_string(), self.qcl.n_traj.to_string()),
            ("qcl.seed".to_string(), self.qcl.seed.to_string()),
            ("qcl.dt".to_string(), format_float(self.qcl.dt)),
            ("qcl.mode".to_string(), self.qcl.mode.name().to_string()),
            ("output.dir".to_string(), self.out_dir.display().to_string()),
        ]);
        pairs
    }

    /// Write the canonical form (used to snapshot the effective config next
    /// to a run's outputs).
    pub fn write(&self, path: &Path) -> Result<()> {
        write_kv(path, &self.to_pairs())
    }

    /// Whether the given key was set explicitly.
    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }
}

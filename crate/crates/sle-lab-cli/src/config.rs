//! Declarative run configuration read from a TOML file.
//!
//! Every record rejects unknown keys and every field has a default, so an
//! empty file is a valid configuration. Command-line flags override the
//! global entries (`seed`, `threads`, `output_dir`).

use serde::{Deserialize, Serialize};
use sle_lab::driver::{DriftMode, DrivingConfig, ForcePoint};
use sle_lab::observables::Observable;
use sle_lab::partition::{Direction, Geometry, SleParams};
use sle_lab::verify::{ExponentSettings, MartingaleSettings, RestrictionSettings};
use std::path::{Path, PathBuf};

/// Full configuration of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads of the path-parallel pool (rayon's default when absent).
    pub threads: Option<usize>,
    pub output_dir: PathBuf,
    /// Driving process; each command falls back to its own default.
    pub driving: Option<DrivingSection>,
    pub coulomb: CoulombSection,
    pub nullvector: IdentitySection,
    pub bpz_cardy: IdentitySection,
    pub simulate: SimulateSection,
    pub martingale: MartingaleSection,
    pub exponent: ExponentSettings,
    pub restriction: RestrictionSettings,
    pub virasoro: VirasoroSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: None,
            output_dir: PathBuf::from("sle-lab-out"),
            driving: None,
            coulomb: CoulombSection::default(),
            nullvector: IdentitySection::default(),
            bpz_cardy: IdentitySection::default(),
            simulate: SimulateSection::default(),
            martingale: MartingaleSection::default(),
            exponent: ExponentSettings::default(),
            restriction: RestrictionSettings::default(),
            virasoro: VirasoroSection::default(),
        }
    }
}

/// Problems with the configuration itself (reported as usage errors).
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid configuration {path}: {source}")]
    Parse { path: String, source: toml::de::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl RunConfig {
    /// Reads and validates a configuration file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|source| ConfigError::Parse { path: path.display().to_string(), source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks the ranges that serde cannot express.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.threads == Some(0) {
            return invalid("threads must be positive");
        }
        if let Some(d) = &self.driving {
            d.validate()?;
        }
        for (name, s) in [("nullvector", &self.nullvector), ("bpz_cardy", &self.bpz_cardy)] {
            if s.kappas.is_empty() || s.kappas.iter().any(|&k| !(k > 0.0)) {
                return Err(ConfigError::Invalid(format!("{name}.kappas must be a non-empty list of positive values")));
            }
            if !(s.tol > 0.0) {
                return Err(ConfigError::Invalid(format!("{name}.tol must be positive")));
            }
        }
        if !(2..=12).contains(&self.coulomb.max_points) {
            return invalid("coulomb.max_points must lie in 2..=12");
        }
        if self.simulate.every == 0 || self.simulate.n_paths == 0 {
            return invalid("simulate.every and simulate.n_paths must be positive");
        }
        if !(self.virasoro.kappa > 0.0) {
            return invalid("virasoro.kappa must be positive");
        }
        Ok(())
    }
}

/// Parameters of the driving process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DrivingSection {
    pub kappa: f64,
    /// Sign of the Coulomb gas parameter `a`.
    pub positive: bool,
    pub geometry: Geometry,
    pub direction: Direction,
    pub drift_mode: DriftMode,
    pub force: Vec<ForcePoint>,
    pub eta: f64,
    pub start: f64,
    pub noise: f64,
    pub dt: f64,
    pub t_end: f64,
}

impl Default for DrivingSection {
    fn default() -> Self {
        Self {
            kappa: 4.0,
            positive: true,
            geometry: Geometry::Chordal,
            direction: Direction::Forward,
            drift_mode: DriftMode::Standard,
            force: Vec::new(),
            eta: 0.0,
            start: 0.0,
            noise: 1.0,
            dt: 1e-3,
            t_end: 1.0,
        }
    }
}

impl DrivingSection {
    /// Default driving of the commands that need a specific flow.
    pub fn with(kappa: f64, geometry: Geometry, direction: Direction, dt: f64) -> Self {
        Self { kappa, geometry, direction, dt, ..Self::default() }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if !(self.kappa > 0.0) || !(self.dt > 0.0) || !(self.t_end >= 0.0) {
            return Err(ConfigError::Invalid("driving.kappa and driving.dt must be positive, t_end ≥ 0".into()));
        }
        Ok(())
    }

    /// `κ` with the Coulomb gas parameters of the configured direction.
    pub fn params(&self, kappa: f64) -> SleParams<f64> {
        match self.direction {
            Direction::Forward => SleParams::forward(kappa, self.positive),
            Direction::Backward => SleParams::backward(kappa, self.positive),
        }
    }

    pub fn to_config(&self, seed: u64) -> DrivingConfig {
        DrivingConfig {
            params: self.params(self.kappa),
            geometry: self.geometry,
            drift_mode: self.drift_mode,
            force: self.force.clone(),
            eta: self.eta,
            start: self.start,
            noise: self.noise,
            seed,
            dt: self.dt,
            t_end: self.t_end,
        }
    }
}

/// Möbius-invariance check on random neutral divisors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoulombSection {
    pub random: usize,
    /// Largest number of charges per divisor.
    pub max_points: usize,
    pub tol: f64,
}

impl Default for CoulombSection {
    fn default() -> Self {
        Self { random: 500, max_points: 6, tol: 1e-9 }
    }
}

/// Random-configuration check of a differential identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentitySection {
    /// Configurations per (κ, geometry, direction).
    pub random: usize,
    pub kappas: Vec<f64>,
    pub tol: f64,
    /// Smallest residual the negative control must exceed.
    pub control_min: f64,
}

impl Default for IdentitySection {
    fn default() -> Self {
        Self { random: 200, kappas: vec![2.0, 8.0 / 3.0, 4.0, 6.0], tol: 1e-7, control_min: 1e-3 }
    }
}

/// Path dump: tracked points and observables written as CSV columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub n_paths: usize,
    /// Interior points `[re, im]` tracked by the flow.
    pub points: Vec<[f64; 2]>,
    pub observables: Vec<Observable>,
    /// Write every `every`-th step.
    pub every: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { n_paths: 1, points: vec![[0.5, 1.0]], observables: Vec::new(), every: 1 }
    }
}

/// Martingale test: observable, its `κ` and the Monte Carlo settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MartingaleSection {
    pub observable: Observable,
    /// `κ` of the observable (defaults to the driving `κ`).
    pub observable_kappa: Option<f64>,
    pub settings: MartingaleSettings,
}

impl Default for MartingaleSection {
    fn default() -> Self {
        Self {
            observable: Observable::SchrammSheffield { z: [1.0, 1.0] },
            observable_kappa: None,
            settings: MartingaleSettings::default(),
        }
    }
}

/// Recursion for `R(1; z_1, …, z_n)` at points `e^{iθ_j}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VirasoroSection {
    pub kappa: f64,
    pub angles: Vec<f64>,
}

impl Default for VirasoroSection {
    fn default() -> Self {
        Self { kappa: 8.0 / 3.0, angles: vec![1.0] }
    }
}

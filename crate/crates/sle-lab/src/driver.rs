//! Driving processes of SLE[β] in all four modes (forward/backward ×
//! chordal/radial), generated by Euler–Maruyama with force points co-evolving
//! under the Loewner flow.
//!
//! The driving SDE is `dX = drift dt + √κ dB` where `X` is `ξ` (chordal) or the
//! angle `θ` of `ζ = e^{iθ}` (radial). The drift is zero (standard SLE), the
//! explicit SLE(κ,ρ) sum, or the gradient `κ ∂ log Z_β` of the partition
//! function of the background charge induced by the force points.
//!
//! Every path owns a ChaCha8 stream selected by its index, so paths are
//! independent, reproducible and can be generated in any order or in parallel.

use crate::charges::Divisor;
use crate::error::{Error, Result};
use crate::loewner::LoewnerState;
use crate::partition::{self, Direction, Geometry, SleParams};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// How the drift of the driving process is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftMode {
    /// No drift: `dX = √κ dB`.
    Standard,
    /// Explicit SLE(κ,ρ) drift `Σ ρ_k/(ξ − q_k)` (radial: `η + Σ (ρ_k/2) cot((θ − ϑ_k)/2)`).
    RhoSum,
    /// `κ ∂ log Z_β` evaluated from the Coulomb gas correlation of the background charge.
    PartitionGradient,
}

/// A boundary force point: position (real coordinate or angle) and weight `ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForcePoint {
    pub position: f64,
    pub rho: f64,
}

/// Everything needed to generate driving paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrivingConfig {
    /// `κ`, `a`, `b`; the direction of the flow is `params.mode`.
    pub params: SleParams<f64>,
    pub geometry: Geometry,
    pub drift_mode: DriftMode,
    /// Force points (ignored in [`DriftMode::Standard`]).
    pub force: Vec<ForcePoint>,
    /// Radial spin parameter `η` (the charge at `0`, `0*` carries `∓iδ/2`, `δ = ηa`).
    pub eta: f64,
    /// Initial driving value `ξ_0` or `θ_0`.
    pub start: f64,
    /// Multiplier of the Brownian term (`1` for SLE, `0` for the deterministic flow).
    pub noise: f64,
    pub seed: u64,
    pub dt: f64,
    pub t_end: f64,
}

impl DrivingConfig {
    /// Standard SLE(κ) started at `0` with `dt = 1e-3`, `t_end = 1`.
    pub fn standard(params: SleParams<f64>, geometry: Geometry, seed: u64) -> Self {
        Self {
            params,
            geometry,
            drift_mode: DriftMode::Standard,
            force: Vec::new(),
            eta: 0.0,
            start: 0.0,
            noise: 1.0,
            seed,
            dt: 1e-3,
            t_end: 1.0,
        }
    }

    /// Number of Euler–Maruyama steps (the last one is shortened to land on `t_end`).
    pub fn n_steps(&self) -> usize {
        if self.t_end <= 0.0 {
            return 0;
        }
        ((self.t_end / self.dt - 1e-9).ceil() as usize).max(1)
    }

    /// Checks parameter consistency and step sizes.
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::Config(format!("t_end must be non-negative, got {}", self.t_end)));
        }
        if !self.noise.is_finite() || !self.start.is_finite() || !self.eta.is_finite() {
            return Err(Error::Config("non-finite driving parameters".into()));
        }
        if self.dt > 1e-3 {
            log::warn!("dt = {} exceeds the recommended 1e-3", self.dt);
        }
        Ok(())
    }

    /// Background charge `β` (without the driving charge) for the given force
    /// point positions: `aρ_k/2` at each force point plus the balancing charge
    /// at the target.
    pub fn background(&self, positions: &[f64]) -> Divisor<f64> {
        let force: Vec<(f64, f64)> =
            positions.iter().zip(&self.force).map(|(&q, f)| (q, f.rho)).collect();
        match self.geometry {
            Geometry::Chordal => partition::chordal_rho_background(&self.params, &force),
            Geometry::Radial => partition::radial_rho_background(&self.params, &force, self.eta),
        }
    }

    /// Drift of the driving process at driving value `x` and force point
    /// positions `positions`.
    pub fn drift(&self, x: f64, positions: &[f64]) -> Result<f64> {
        match self.drift_mode {
            DriftMode::Standard => Ok(0.0),
            DriftMode::RhoSum => {
                let force: Vec<(f64, f64)> =
                    positions.iter().zip(&self.force).map(|(&q, f)| (q, f.rho)).collect();
                // Under the backward substitution every charge product picks up
                // a factor (−i)² = −1, which flips the sign of the ρ-drift.
                let sign = match self.params.mode {
                    Direction::Forward => 1.0,
                    Direction::Backward => -1.0,
                };
                Ok(sign
                    * match self.geometry {
                        Geometry::Chordal => partition::rho_drift_chordal(x, &force),
                        Geometry::Radial => partition::rho_drift_radial(x, &force, self.eta),
                    })
            }
            DriftMode::PartitionGradient => {
                partition::drift(&self.background(positions), x, &self.params, self.geometry)
            }
        }
    }
}

/// Outcome of a path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum PathStatus {
    /// Still running (or ran to `t_end`).
    Running,
    /// Reached `t_end`.
    Complete,
    /// A force point hit the driving point at time `t`; the path stops there.
    Truncated { t: f64, force_index: usize },
}

/// The random RNG stream of path `path_index` under `seed`.
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// Step-by-step generator of one driving path together with its Loewner chain.
///
/// Points to be followed by the flow are added through [`state_mut`](Self::state_mut)
/// before the first step; force points are tracked automatically.
#[derive(Debug, Clone)]
pub struct DrivingProcess<'a> {
    cfg: &'a DrivingConfig,
    rng: ChaCha8Rng,
    state: LoewnerState<f64>,
    force_index: Vec<usize>,
    step_index: usize,
    n_steps: usize,
    status: PathStatus,
}

impl<'a> DrivingProcess<'a> {
    /// Starts path `path_index` of `cfg`.
    pub fn new(cfg: &'a DrivingConfig, path_index: u64) -> Result<Self> {
        cfg.validate()?;
        let mut state = LoewnerState::new(cfg.geometry, cfg.params.mode, cfg.start);
        let force_index = match cfg.drift_mode {
            DriftMode::Standard => Vec::new(),
            _ => cfg.force.iter().map(|f| state.track_boundary(f.position)).collect(),
        };
        let mut process = Self {
            cfg,
            rng: path_rng(cfg.seed, path_index),
            state,
            force_index,
            step_index: 0,
            n_steps: cfg.n_steps(),
            status: PathStatus::Running,
        };
        process.check_force_points()?;
        if process.n_steps == 0 && process.status == PathStatus::Running {
            process.status = PathStatus::Complete;
        }
        Ok(process)
    }

    /// The configuration driving this path.
    pub fn config(&self) -> &DrivingConfig {
        self.cfg
    }

    /// The Loewner chain at the current time.
    pub fn state(&self) -> &LoewnerState<f64> {
        &self.state
    }

    /// Mutable access to the chain (to track extra points before stepping).
    pub fn state_mut(&mut self) -> &mut LoewnerState<f64> {
        &mut self.state
    }

    /// Current time.
    pub fn t(&self) -> f64 {
        self.state.t
    }

    /// Current driving value.
    pub fn driving(&self) -> f64 {
        self.state.driving
    }

    /// Current force point positions (in configuration order).
    pub fn force_positions(&self) -> Vec<f64> {
        self.force_index.iter().map(|&i| self.state.boundary[i].x).collect()
    }

    /// Path status.
    pub fn status(&self) -> PathStatus {
        self.status
    }

    /// Whether further steps are possible.
    pub fn is_running(&self) -> bool {
        self.status == PathStatus::Running
    }

    /// Length of the next step.
    pub fn next_dt(&self) -> f64 {
        let t_next = if self.step_index + 1 >= self.n_steps {
            self.cfg.t_end
        } else {
            (self.step_index + 1) as f64 * self.cfg.dt
        };
        t_next - self.state.t
    }

    /// Current drift.
    pub fn drift(&self) -> Result<f64> {
        self.cfg.drift(self.state.driving, &self.force_positions())
    }

    /// Draws the next Brownian increment `ΔB ~ N(0, dt)` and advances the path.
    /// Returns `false` once the path has completed or been truncated.
    pub fn step(&mut self) -> Result<bool> {
        if !self.is_running() {
            return Ok(false);
        }
        let dt = self.next_dt();
        let normal: f64 = self.rng.sample(StandardNormal);
        self.step_with_increment(normal * dt.sqrt())
    }

    /// Advances the path with a given Brownian increment `ΔB` (used for
    /// refinement studies that share increments across step sizes).
    pub fn step_with_increment(&mut self, db: f64) -> Result<bool> {
        if !self.is_running() {
            return Ok(false);
        }
        let dt = self.next_dt();
        let drift = self.drift()?;
        let next = self.state.driving + drift * dt + self.cfg.noise * self.cfg.params.kappa.sqrt() * db;
        self.state.step(next, dt)?;
        self.step_index += 1;
        self.check_force_points()?;
        if self.status == PathStatus::Running && self.step_index >= self.n_steps {
            self.status = PathStatus::Complete;
        }
        Ok(self.is_running())
    }

    fn check_force_points(&mut self) -> Result<()> {
        let eps = self.state.eps_swallow;
        let x = self.state.driving;
        for (k, &i) in self.force_index.iter().enumerate() {
            let p = &self.state.boundary[i];
            let d = match self.cfg.geometry {
                Geometry::Chordal => (p.x - x).abs(),
                Geometry::Radial => 2.0 * ((p.x - x) / 2.0).sin().abs(),
            };
            if !p.alive || d < eps {
                let t = p.tau.unwrap_or(self.state.t);
                log::debug!("force point {k} reached the driving point at t = {t}");
                self.status = PathStatus::Truncated { t, force_index: k };
                return Ok(());
            }
        }
        Ok(())
    }
}

/// A generated path: driving series, force point series and chain snapshots.
#[derive(Debug, Clone)]
pub struct DrivingPath {
    pub times: Vec<f64>,
    pub driving: Vec<f64>,
    /// Force point positions at each recorded time.
    pub force: Vec<Vec<f64>>,
    /// Loewner chain snapshots at each recorded time.
    pub states: Vec<LoewnerState<f64>>,
    pub status: PathStatus,
}

impl DrivingPath {
    /// Driving increments `X_{n+1} − X_n`.
    pub fn increments(&self) -> Vec<f64> {
        self.driving.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Generates forward path `path_index`, tracking `points` and recording every
/// `stride`-th step (and the final one).
pub fn generate_path_tracking(
    cfg: &DrivingConfig,
    path_index: u64,
    points: &[Complex<f64>],
    stride: usize,
) -> Result<DrivingPath> {
    let mut process = DrivingProcess::new(cfg, path_index)?;
    for &z in points {
        process.state_mut().track(z);
    }
    let stride = stride.max(1);
    let mut path = DrivingPath {
        times: Vec::new(),
        driving: Vec::new(),
        force: Vec::new(),
        states: Vec::new(),
        status: PathStatus::Running,
    };
    let record = |p: &DrivingProcess, path: &mut DrivingPath| {
        path.times.push(p.t());
        path.driving.push(p.driving());
        path.force.push(p.force_positions());
        path.states.push(p.state().clone());
    };
    record(&process, &mut path);
    let mut n = 0usize;
    while process.is_running() {
        process.step()?;
        n += 1;
        if n.is_multiple_of(stride) || !process.is_running() {
            record(&process, &mut path);
        }
    }
    path.status = process.status();
    Ok(path)
}

/// Generates forward path `path_index`, recording every step.
pub fn generate_path(cfg: &DrivingConfig, path_index: u64) -> Result<DrivingPath> {
    if cfg.params.mode != Direction::Forward {
        return Err(Error::Config("generate_path needs forward parameters".into()));
    }
    generate_path_tracking(cfg, path_index, &[], 1)
}

/// Generates backward path `path_index`, recording every step.
pub fn generate_backward_path(cfg: &DrivingConfig, path_index: u64) -> Result<DrivingPath> {
    if cfg.params.mode != Direction::Backward {
        return Err(Error::Config("generate_backward_path needs backward parameters".into()));
    }
    generate_path_tracking(cfg, path_index, &[], 1)
}

//! Monte Carlo verification: martingale tests, exponent regressions and the
//! restriction probability.
//!
//! Paths are simulated in fixed-size chunks on the rayon pool; every chunk
//! returns compensated partial sums and the chunks are merged in index order,
//! so reports are bit-identical for a given seed whatever the thread count.

use crate::driver::{path_rng, DrivingConfig, DrivingProcess, PathStatus};
use crate::error::{Error, Result};
use crate::loewner::LoewnerState;
use crate::observables::{restriction_formula, Handle, LswExponents, Observable, SlitTracker, VerticalSlit};
use crate::partition::{Direction, Geometry, SleParams};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Paths per parallel work item.
pub const CHUNK: usize = 256;

/// Kahan–Babuška compensated sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &KahanSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Count, sums and sums of squares of complex samples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    re: KahanSum,
    im: KahanSum,
    re2: KahanSum,
    im2: KahanSum,
}

impl Moments {
    pub fn push(&mut self, x: Complex64) {
        self.n += 1;
        self.re.add(x.re);
        self.im.add(x.im);
        self.re2.add(x.re * x.re);
        self.im2.add(x.im * x.im);
    }

    pub fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        self.re.merge(&o.re);
        self.im.merge(&o.im);
        self.re2.merge(&o.re2);
        self.im2.merge(&o.im2);
    }

    pub fn mean(&self) -> Complex64 {
        let n = self.n.max(1) as f64;
        Complex64::new(self.re.value() / n, self.im.value() / n)
    }

    /// Unbiased variance `E|X − EX|²` (sum of both components).
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let m = self.mean();
        let ss = self.re2.value() + self.im2.value() - n * m.norm_sqr();
        (ss / (n - 1.0)).max(0.0)
    }

    /// Standard error of the mean.
    pub fn std_err(&self) -> f64 {
        (self.variance() / self.n.max(1) as f64).sqrt()
    }
}

/// Settings of a martingale test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MartingaleSettings {
    pub checkpoints: Vec<f64>,
    pub n_paths: usize,
    /// Relative tolerance floor `rel_tol·|M0|`.
    pub rel_tol: f64,
    /// Optional stopping radius: a point observable is frozen once
    /// `|w_t(z)| < r_stop` (chordal, backward) or `|1 − w_t(z)| < r_stop`
    /// (radial).
    pub stop_radius: Option<f64>,
}

impl Default for MartingaleSettings {
    fn default() -> Self {
        Self { checkpoints: vec![0.1, 0.25, 0.5], n_paths: 50_000, rel_tol: 0.02, stop_radius: None }
    }
}

/// Outcome of a statistical check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Statistics of the stopped observable at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointStats {
    pub t: f64,
    pub n_alive: u64,
    pub n_swallowed: u64,
    pub mean: Complex64,
    pub std_err: f64,
    pub m0: Complex64,
    /// `|mean − M0| / std_err`.
    pub z_score: f64,
    pub pass: bool,
}

/// Report of [`martingale_test`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub observable: String,
    pub kappa_observable: f64,
    pub kappa_driving: f64,
    pub seed: u64,
    pub paths: usize,
    pub dt: f64,
    pub rel_tol: f64,
    pub checkpoints: Vec<CheckpointStats>,
    /// Paths whose integration failed; they are stopped at the failure.
    pub n_errors: u64,
    pub verdict: Verdict,
}

impl MartingaleReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// Largest `z` score over the checkpoints.
    pub fn max_z(&self) -> f64 {
        self.checkpoints.iter().map(|c| c.z_score).fold(0.0, f64::max)
    }
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Per-chunk partial results of a martingale run.
#[derive(Clone)]
struct MartingaleChunk {
    moments: Vec<Moments>,
    stopped: Vec<u64>,
    errors: u64,
}

fn singularity_distance(state: &LoewnerState<f64>, handle: &Handle) -> Option<f64> {
    match handle {
        Handle::Point(i) if state.tracked[*i].alive => {
            let w = state.w(*i);
            Some(match state.geometry {
                Geometry::Radial => (Complex64::new(1.0, 0.0) - w).norm(),
                Geometry::Chordal => w.norm(),
            })
        }
        _ => None,
    }
}

/// Estimates `E[M_{t∧τ}]` at the checkpoints for `obs` (with parameters
/// `obs_params`) along paths driven by `cfg`, and compares it with `M_0`.
///
/// Swallowed (or stopped) paths keep their frozen value, so every path enters
/// every mean; the standard error is that of the mean over all paths. A
/// checkpoint passes iff `|mean − M0| < max(3·SE, rel_tol·|M0|)`.
pub fn martingale_test(
    obs: &Observable,
    obs_params: &SleParams<f64>,
    cfg: &DrivingConfig,
    settings: &MartingaleSettings,
) -> Result<MartingaleReport> {
    if settings.checkpoints.is_empty() || settings.checkpoints.iter().any(|&t| !(t > 0.0)) {
        return Err(config_error("checkpoints must be a non-empty list of positive times"));
    }
    if settings.checkpoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(config_error("checkpoints must be increasing"));
    }
    if settings.n_paths == 0 {
        return Err(config_error("n_paths must be positive"));
    }
    obs.check_compatible(cfg.geometry, cfg.params.mode)?;
    let t_max = *settings.checkpoints.last().unwrap();
    let run = DrivingConfig { t_end: t_max, ..cfg.clone() };
    run.validate()?;
    let steps: Vec<usize> = settings.checkpoints.iter().map(|&t| ((t / run.dt).round() as usize).max(1)).collect();

    let m0 = {
        let mut p = DrivingProcess::new(&run, 0)?;
        let handle = obs.track(p.state_mut())?;
        obs.value(p.state(), &handle, obs_params)?
    };

    let n_chunks = settings.n_paths.div_ceil(CHUNK);
    let k = steps.len();
    let chunk_run = |c: usize| -> Result<MartingaleChunk> {
        let mut out = MartingaleChunk { moments: vec![Moments::default(); k], stopped: vec![0; k], errors: 0 };
        let lo = c * CHUNK;
        let hi = ((c + 1) * CHUNK).min(settings.n_paths);
        for idx in lo..hi {
            let mut p = DrivingProcess::new(&run, idx as u64)?;
            let handle = obs.track(p.state_mut())?;
            let mut frozen: Option<Complex64> = None;
            let mut step = 0usize;
            let mut last_good = m0;
            for (j, &target) in steps.iter().enumerate() {
                while frozen.is_none() && step < target {
                    match p.step() {
                        Ok(_) => {
                            step += 1;
                            let stop_r = match (settings.stop_radius, singularity_distance(p.state(), &handle)) {
                                (Some(r), Some(d)) => d < r,
                                _ => false,
                            };
                            let truncated = matches!(p.status(), PathStatus::Truncated { .. });
                            if stop_r || truncated || obs.stopped(p.state(), &handle) {
                                frozen = Some(obs.value(p.state(), &handle, obs_params).unwrap_or(last_good));
                            } else if !p.is_running() && step < target {
                                // The path ended early (shortened last step).
                                frozen = Some(obs.value(p.state(), &handle, obs_params)?);
                            }
                        }
                        Err(_) => {
                            out.errors += 1;
                            frozen = Some(last_good);
                        }
                    }
                }
                let value = match frozen {
                    Some(v) => {
                        out.stopped[j] += 1;
                        v
                    }
                    None => obs.value(p.state(), &handle, obs_params)?,
                };
                last_good = value;
                out.moments[j].push(value);
            }
        }
        Ok(out)
    };
    let chunks: Vec<MartingaleChunk> = (0..n_chunks).into_par_iter().map(chunk_run).collect::<Result<_>>()?;

    let mut total = MartingaleChunk { moments: vec![Moments::default(); k], stopped: vec![0; k], errors: 0 };
    for c in &chunks {
        for j in 0..k {
            total.moments[j].merge(&c.moments[j]);
            total.stopped[j] += c.stopped[j];
        }
        total.errors += c.errors;
    }

    let mut checkpoints = Vec::with_capacity(k);
    for j in 0..k {
        let m = &total.moments[j];
        let mean = m.mean();
        let se = m.std_err();
        let dev = (mean - m0).norm();
        let bound = (3.0 * se).max(settings.rel_tol * m0.norm());
        checkpoints.push(CheckpointStats {
            t: steps[j] as f64 * run.dt,
            n_alive: m.n - total.stopped[j],
            n_swallowed: total.stopped[j],
            mean,
            std_err: se,
            m0,
            z_score: if se > 0.0 { dev / se } else if dev == 0.0 { 0.0 } else { f64::INFINITY },
            pass: dev < bound || dev == 0.0,
        });
    }
    let verdict = if checkpoints[0].n_alive == 0 {
        Verdict::Inconclusive
    } else if checkpoints.iter().all(|c| c.pass) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(MartingaleReport {
        observable: obs.id(),
        kappa_observable: obs_params.kappa,
        kappa_driving: cfg.params.kappa,
        seed: cfg.seed,
        paths: settings.n_paths,
        dt: run.dt,
        rel_tol: settings.rel_tol,
        checkpoints,
        n_errors: total.errors,
        verdict,
    })
}

/// Settings of [`exponent_regression`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExponentSettings {
    /// Angle of the boundary point `e^{iθ}`.
    pub theta: f64,
    /// Derivative exponent `h`.
    pub h: f64,
    pub t_grid: Vec<f64>,
    pub n_paths: usize,
    /// Adaptive step `clamp(dt_factor·u², dt_min, dt)` with `u` the angular
    /// distance between the driving point and the boundary point (`dt` from
    /// the driving configuration).
    pub dt_factor: f64,
    pub dt_min: f64,
    /// Distance at which the boundary point counts as swallowed.
    pub swallow_radius: f64,
    /// Accepted relative deviation of the slope.
    pub rel_tol: f64,
}

impl Default for ExponentSettings {
    fn default() -> Self {
        Self {
            theta: std::f64::consts::PI,
            h: 0.0,
            t_grid: vec![1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0],
            n_paths: 100_000,
            dt_factor: 0.01,
            dt_min: 1e-14,
            swallow_radius: 1e-6,
            rel_tol: 0.1,
        }
    }
}

/// One grid point of the exponent regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub t: f64,
    /// Mean of `|w_t'|^h 1_{τ>t}`.
    pub mean: f64,
    pub std_err: f64,
    /// Mean of `|w_t'|^h (sin²(θ_t/2))^{aσ/2} 1_{τ>t}`, whose expectation is
    /// exactly `e^{−2h_q t}(sin²(θ/2))^{aσ/2}`.
    pub weighted_mean: f64,
    pub weighted_std_err: f64,
    pub n_alive: u64,
}

/// Report of [`exponent_regression`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentReport {
    pub kappa: f64,
    pub h: f64,
    pub theta: f64,
    pub seed: u64,
    pub paths: usize,
    pub dt: f64,
    pub points: Vec<GridPoint>,
    pub slope: f64,
    pub intercept: f64,
    pub expected_slope: f64,
    /// 95% half-width of the slope from the per-point standard errors.
    pub ci: f64,
    /// Slope, intercept and 95% half-width of the regression of the
    /// angle-weighted means.
    pub weighted_slope: f64,
    pub weighted_intercept: f64,
    pub weighted_ci: f64,
    /// `log (sin²(θ/2))^{aσ/2}`: the exact weighted intercept and, up to the
    /// unknown constant of `≍`, the unweighted one.
    pub angle_factor_log: f64,
    pub rel_error: f64,
    /// Mean number of steps per path.
    pub mean_steps: f64,
    pub verdict: Verdict,
}

/// Log-linear regression of `E[|w_t'(e^{iθ})|^h 1_{τ>t}]` over `t_grid` for
/// radial SLE driven by `√κ B` (the drift mode of `cfg` is ignored); the
/// expected slope is `−2h_q`.
///
/// With a driving function interpolated linearly over a step of length `dt`,
/// a boundary point cannot come closer than about `2√(dt/κ)` to the driving
/// point, so collisions are only resolved by refining the step as the point
/// approaches: `dt = clamp(dt_factor·u², dt_min, cfg.dt)`.
pub fn exponent_regression(cfg: &DrivingConfig, settings: &ExponentSettings) -> Result<ExponentReport> {
    if cfg.geometry != Geometry::Radial || cfg.params.mode != Direction::Forward {
        return Err(Error::Precondition("the exponent regression needs forward radial SLE".into()));
    }
    cfg.params.validate()?;
    let grid = &settings.t_grid;
    if grid.len() < 2 {
        return Err(Error::Degenerate("the regression needs at least two grid points".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) || grid[0] <= 0.0 {
        return Err(config_error("t_grid must be positive and increasing"));
    }
    if settings.n_paths == 0 || !(cfg.dt > 0.0) {
        return Err(config_error("n_paths and dt must be positive"));
    }
    let k = grid.len();
    let kappa_sqrt = cfg.params.kappa.sqrt();
    let n_chunks = settings.n_paths.div_ceil(CHUNK);
    let e = LswExponents::new(&cfg.params, settings.h);
    let chunk_run = |c: usize| -> Result<(Vec<Moments>, Vec<u64>, KahanSum)> {
        // Real parts: |w'|^h 1_{τ>t}; imaginary parts: the angle-weighted value.
        let mut moments = vec![Moments::default(); k];
        let mut alive = vec![0u64; k];
        let mut steps = KahanSum::new();
        for idx in c * CHUNK..((c + 1) * CHUNK).min(settings.n_paths) {
            let mut rng = path_rng(cfg.seed, idx as u64);
            let mut s = LoewnerState::new(Geometry::Radial, Direction::Forward, 0.0);
            s.eps_swallow = settings.swallow_radius;
            s.dt_min = settings.dt_min.min(s.dt_min);
            let j0 = s.track_boundary(settings.theta);
            let mut n = 0u64;
            for (j, &target) in grid.iter().enumerate() {
                while s.t < target && s.boundary[j0].alive {
                    let u = crate::scalar::wrap_angle(s.boundary[j0].x - s.driving).abs();
                    let mut dt = (settings.dt_factor * u * u).clamp(settings.dt_min, cfg.dt);
                    if s.t + dt > target {
                        dt = target - s.t;
                    }
                    let z: f64 = rng.sample(StandardNormal);
                    s.step(s.driving + kappa_sqrt * z * dt.sqrt(), dt)?;
                    n += 1;
                }
                let b = &s.boundary[j0];
                let x = if b.alive {
                    alive[j] += 1;
                    let d = (settings.h * b.log_abs_g1).exp();
                    let s2 = ((b.x - s.driving) / 2.0).sin().powi(2);
                    Complex64::new(d, d * s2.powf(e.angle_exponent))
                } else {
                    Complex64::new(0.0, 0.0)
                };
                moments[j].push(x);
            }
            steps.add(n as f64);
        }
        Ok((moments, alive, steps))
    };
    let chunks: Vec<_> = (0..n_chunks).into_par_iter().map(chunk_run).collect::<Result<_>>()?;
    let mut moments = vec![Moments::default(); k];
    let mut alive = vec![0u64; k];
    let mut steps = KahanSum::new();
    for (m, a, st) in &chunks {
        for j in 0..k {
            moments[j].merge(&m[j]);
            alive[j] += a[j];
        }
        steps.merge(st);
    }
    if alive[k - 1] < 100 {
        return Err(Error::Inconclusive(format!(
            "only {} surviving paths at t = {}; shrink the grid",
            alive[k - 1],
            grid[k - 1]
        )));
    }
    let points: Vec<GridPoint> = (0..k)
        .map(|j| {
            let m = &moments[j];
            let n = m.n.max(2) as f64;
            let mean = m.mean();
            let var_re = ((m.re2.value() - n * mean.re * mean.re) / (n - 1.0)).max(0.0);
            let var_im = ((m.im2.value() - n * mean.im * mean.im) / (n - 1.0)).max(0.0);
            GridPoint {
                t: grid[j],
                mean: mean.re,
                std_err: (var_re / n).sqrt(),
                weighted_mean: mean.im,
                weighted_std_err: (var_im / n).sqrt(),
                n_alive: alive[j],
            }
        })
        .collect();
    let (slope, intercept, ci) = log_linear_fit(points.iter().map(|p| (p.t, p.mean, p.std_err)))?;
    let (weighted_slope, weighted_intercept, weighted_ci) =
        log_linear_fit(points.iter().map(|p| (p.t, p.weighted_mean, p.weighted_std_err)))?;
    let expected_slope = -2.0 * e.h_q;
    let s2 = ((settings.theta / 2.0).sin()).powi(2);
    let rel_error = if expected_slope != 0.0 { (slope / expected_slope - 1.0).abs() } else { slope.abs() };
    Ok(ExponentReport {
        kappa: cfg.params.kappa,
        h: settings.h,
        theta: settings.theta,
        seed: cfg.seed,
        paths: settings.n_paths,
        dt: cfg.dt,
        points,
        slope,
        intercept,
        expected_slope,
        ci,
        weighted_slope,
        weighted_intercept,
        weighted_ci,
        angle_factor_log: e.angle_exponent * s2.ln(),
        rel_error,
        mean_steps: steps.value() / settings.n_paths as f64,
        verdict: if rel_error < settings.rel_tol { Verdict::Pass } else { Verdict::Fail },
    })
}

/// Ordinary least squares of `log mean` against `t`; the slope's standard
/// error propagates `SE/mean` of each point (treated as independent).
fn log_linear_fit(points: impl Iterator<Item = (f64, f64, f64)>) -> Result<(f64, f64, f64)> {
    let points: Vec<(f64, f64, f64)> = points.collect();
    if points.iter().any(|p| !(p.1 > 0.0)) {
        return Err(Error::Inconclusive("non-positive mean on the grid".into()));
    }
    let n = points.len() as f64;
    let tm = points.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - tm).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("grid points coincide".into()));
    }
    let slope = points.iter().map(|p| (p.0 - tm) * (p.1.ln() - ym)).sum::<f64>() / sxx;
    let var: f64 = points.iter().map(|p| ((p.0 - tm) / sxx).powi(2) * (p.2 / p.1).powi(2)).sum();
    Ok((slope, ym - slope * tm, 1.96 * var.sqrt()))
}

/// Settings of [`restriction_probability_test`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RestrictionSettings {
    pub x0: f64,
    pub h: f64,
    pub n_paths: usize,
    /// Capacity time horizon `T`.
    pub t_max: f64,
    /// Sample points along the slit.
    pub samples: usize,
    /// Adaptive step `clamp(dt_factor·d², dt_min, dt_max)`, `d` the distance
    /// from the driving point to the slit images.
    pub dt_factor: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub rel_tol: f64,
}

impl Default for RestrictionSettings {
    fn default() -> Self {
        Self {
            x0: 1.0,
            h: 0.3,
            n_paths: 200_000,
            t_max: 4.0,
            samples: 30,
            dt_factor: 0.01,
            dt_min: 1e-8,
            dt_max: 0.05,
            rel_tol: 0.05,
        }
    }
}

/// Report of [`restriction_probability_test`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictionReport {
    pub kappa: f64,
    pub x0: f64,
    pub h: f64,
    pub seed: u64,
    pub paths: usize,
    pub t_max: f64,
    /// Avoidance frequency up to `T`.
    pub p_mc: f64,
    /// Avoidance frequency up to `T/2`.
    pub p_half: f64,
    /// `p(T/2) − p(T)`: hits between `T/2` and `T`, indicating the size of the
    /// hits beyond `T` that the estimate misses.
    pub truncation_bias: f64,
    pub p_formula: f64,
    /// 95% half-width of `p_mc`.
    pub ci: f64,
    pub rel_error: f64,
    /// Mean number of steps per path.
    pub mean_steps: f64,
    pub verdict: Verdict,
}

/// Monte Carlo probability that chordal SLE (driven by `cfg`, standard
/// drift) avoids the vertical slit `[x0, x0 + ih]` up to capacity time `T`,
/// compared with `Ψ_K'(0)^λ`.
pub fn restriction_probability_test(cfg: &DrivingConfig, settings: &RestrictionSettings) -> Result<RestrictionReport> {
    if cfg.geometry != Geometry::Chordal || cfg.params.mode != Direction::Forward {
        return Err(Error::Precondition("the restriction test needs forward chordal SLE".into()));
    }
    cfg.params.validate()?;
    let slit = VerticalSlit::new(settings.x0, settings.h)?;
    if settings.x0.abs() < 3.0 * settings.h {
        log::warn!("slit close to the origin (|x0| < 3h): truncation bias may dominate");
    }
    if settings.n_paths == 0 || settings.samples == 0 || !(settings.t_max > 0.0) {
        return Err(config_error("n_paths, samples and t_max must be positive"));
    }
    let half = settings.t_max / 2.0;
    let kappa_sqrt = cfg.params.kappa.sqrt();
    let n_chunks = settings.n_paths.div_ceil(CHUNK);
    let chunk_run = |c: usize| -> Result<(u64, u64, KahanSum)> {
        let (mut avoid_half, mut avoid, mut steps) = (0u64, 0u64, KahanSum::new());
        for idx in c * CHUNK..((c + 1) * CHUNK).min(settings.n_paths) {
            let mut rng = path_rng(cfg.seed, idx as u64);
            let mut s = LoewnerState::new(Geometry::Chordal, Direction::Forward, 0.0);
            let tracker = SlitTracker::track(&mut s, slit, settings.samples);
            let mut hit_at = None;
            let mut n = 0u64;
            while s.t < settings.t_max {
                let d = tracker
                    .samples
                    .iter()
                    .map(|&i| (s.tracked[i].g - s.driving).norm())
                    .fold((s.boundary[tracker.base].x - s.driving).abs(), f64::min);
                let mut dt = (settings.dt_factor * d * d).clamp(settings.dt_min, settings.dt_max);
                // Land exactly on T/2 and T.
                for mark in [half, settings.t_max] {
                    if s.t < mark && s.t + dt > mark {
                        dt = mark - s.t;
                    }
                }
                let z: f64 = rng.sample(StandardNormal);
                let next = s.driving + kappa_sqrt * z * dt.sqrt();
                n += 1;
                if s.step(next, dt).is_err() || tracker.hit(&s) {
                    hit_at = Some(s.t);
                    break;
                }
            }
            steps.add(n as f64);
            match hit_at {
                None => {
                    avoid += 1;
                    avoid_half += 1;
                }
                Some(t) if t > half => avoid_half += 1,
                Some(_) => {}
            }
        }
        Ok((avoid_half, avoid, steps))
    };
    let chunks: Vec<_> = (0..n_chunks).into_par_iter().map(chunk_run).collect::<Result<_>>()?;
    let (mut avoid_half, mut avoid, mut steps) = (0u64, 0u64, KahanSum::new());
    for (a, b, s) in &chunks {
        avoid_half += a;
        avoid += b;
        steps.merge(s);
    }
    let n = settings.n_paths as f64;
    let p_mc = avoid as f64 / n;
    let p_half = avoid_half as f64 / n;
    let p_formula = restriction_formula(&slit, &cfg.params);
    let rel_error = (p_mc / p_formula - 1.0).abs();
    Ok(RestrictionReport {
        kappa: cfg.params.kappa,
        x0: settings.x0,
        h: settings.h,
        seed: cfg.seed,
        paths: settings.n_paths,
        t_max: settings.t_max,
        p_mc,
        p_half,
        truncation_bias: p_half - p_mc,
        p_formula,
        ci: 1.96 * (p_mc * (1.0 - p_mc) / n).sqrt(),
        rel_error,
        mean_steps: steps.value() / n,
        verdict: if rel_error < settings.rel_tol { Verdict::Pass } else { Verdict::Fail },
    })
}

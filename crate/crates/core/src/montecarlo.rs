//! Monte-Carlo reference: sample paths of the response under an exact OU
//! excitation path, Heun integration, Gaussian kernel density estimates and
//! decorrelated stationary sampling.
//!
//! Path `i` draws from its own ChaCha generator seeded with `seed + i`, and
//! ensemble sums are merged chunk by chunk in path order, so results are
//! bit-identical for any thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{param, Error, Result};
use crate::evolve::{detect_stationarity_with_slack, StationarityConfig};
use crate::model::{MeanFunction, NoiseSpec, ProblemSpec};
use crate::quadrature::trapezoid_samples;

const CHUNK: usize = 512;
/// Kernel support cut-off in bandwidths (`exp(-32)` neglected).
const KERNEL_REACH: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// `sigma n^{-1/5}`
    Scott,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub snapshot_times: Vec<f64>,
    pub bandwidth: Bandwidth,
    pub stationarity: StationarityConfig,
}

impl McConfig {
    pub fn new(paths: usize, horizon: f64) -> Self {
        Self {
            paths,
            dt: 0.005,
            horizon,
            seed: 0,
            snapshot_times: vec![horizon],
            bandwidth: Bandwidth::Scott,
            stationarity: StationarityConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 {
            return Err(param("mc.paths", "need at least one path"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(param("mc.dt", "must be positive"));
        }
        if let Bandwidth::Fixed(b) = self.bandwidth {
            if !(b > 0.0 && b.is_finite()) {
                return Err(param("mc.bandwidth", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Ensemble mean and variance at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleMoments {
    pub t: f64,
    pub mean: f64,
    pub var: f64,
    /// Fourth central moment over `var^2`.
    pub kurtosis: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    /// Grid times actually used for the requested snapshots.
    pub snapshot_times: Vec<f64>,
    /// One sample per surviving path, in path order, per snapshot.
    pub samples: Vec<Vec<f64>>,
    pub moments: Vec<EnsembleMoments>,
    /// Paths that produced a non-finite value and were dropped.
    pub excluded: usize,
    pub dt: f64,
}

impl Ensemble {
    pub fn survivors(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }
}

/// Exact OU transition over `dt` for the process with mean `m` and
/// stationary variance `D / tau`, driven by the standard normal draw `z`.
pub fn sample_ou_increment(intensity: f64, tau: f64, mean: f64, prev: f64, dt: f64, z: f64) -> f64 {
    let a = (-dt / tau).exp();
    let sd = (intensity / tau * (1.0 - a * a)).max(0.0).sqrt();
    mean + (prev - mean) * a + sd * z
}

struct Plan {
    t0: f64,
    dt: f64,
    steps: usize,
    snapshot_steps: Vec<usize>,
    /// Record every `retain_every` steps (0 = never).
    retain_every: usize,
    intensity: f64,
    tau: f64,
    mean: MeanFunction,
    /// Coefficients of `Xi(t0) - m(t0) = a u1 + b u2`.
    xi_u1: f64,
    xi_u2: f64,
}

impl Plan {
    fn new(problem: &ProblemSpec, config: &McConfig, retain_interval: Option<f64>) -> Result<Self> {
        problem.validate()?;
        config.validate()?;
        let (intensity, tau, mean) = match &problem.noise {
            NoiseSpec::Ou {
                intensity,
                corr_time,
                mean,
            } => (*intensity, *corr_time, mean.clone()),
            NoiseSpec::Tabulated { .. } => {
                return Err(Error::UnsupportedNoise(
                    "path sampling needs an OU kernel".into(),
                ))
            }
        };
        let t0 = problem.t0;
        let span = config.horizon - t0;
        if !(span > 0.0) {
            return Err(param("mc.horizon", "must exceed t0"));
        }
        let steps = (span / config.dt).round().max(1.0) as usize;
        let dt = span / steps as f64;
        let mut snapshot_steps = Vec::with_capacity(config.snapshot_times.len());
        for &ts in &config.snapshot_times {
            if ts < t0 - 1e-12 || ts > config.horizon + 1e-9 {
                return Err(param("mc.snapshot_times", format!("{ts} outside [t0, horizon]")));
            }
            snapshot_steps.push((((ts - t0) / dt).round() as usize).min(steps));
        }
        let retain_every = match retain_interval {
            Some(iv) => ((iv / dt).round() as usize).max(1),
            None => 0,
        };
        let var = intensity / tau;
        let init = problem.initial;
        let c0 = init.cross.amplitude;
        let (xi_u1, xi_u2) = if c0 == 0.0 {
            (0.0, var.sqrt())
        } else {
            if (init.cross.decay_time - tau).abs() > 1e-12 * tau {
                return Err(Error::UnsupportedNoise(format!(
                    "joint sampling needs the cross-covariance decay time ({}) to equal tau ({tau})",
                    init.cross.decay_time
                )));
            }
            let sx = init.std();
            let a = c0 / sx;
            (a, (var - a * a).max(0.0).sqrt())
        };
        Ok(Self {
            t0,
            dt,
            steps,
            snapshot_steps,
            retain_every,
            intensity,
            tau,
            mean,
            xi_u1,
            xi_u2,
        })
    }

    fn time(&self, step: usize) -> f64 {
        self.t0 + step as f64 * self.dt
    }
}

/// Heun path of `X` with the exact OU path of `Xi`; writes `X` at every
/// grid time into `xs`. Returns `false` if the path left the finite range.
fn run_path(problem: &ProblemSpec, plan: &Plan, index: usize, seed: u64, xs: &mut [f64]) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64));
    let init = problem.initial;
    let u1: f64 = rng.sample(StandardNormal);
    let u2: f64 = rng.sample(StandardNormal);
    let mut x = init.mean + init.std() * u1;
    // zero-mean part of the excitation
    let mut z = plan.xi_u1 * u1 + plan.xi_u2 * u2;
    let h = problem.drift.h();
    let k = problem.coupling;
    let dt = plan.dt;
    let mut m_now = plan.mean.eval(plan.t0);
    xs[0] = x;
    for step in 0..plan.steps {
        let m_next = plan.mean.eval(plan.time(step + 1));
        let n: f64 = rng.sample(StandardNormal);
        let z_next = sample_ou_increment(plan.intensity, plan.tau, 0.0, z, dt, n);
        let f0 = h.eval(x) + k * (m_now + z);
        let pred = x + dt * f0;
        let f1 = h.eval(pred) + k * (m_next + z_next);
        x += 0.5 * dt * (f0 + f1);
        if !x.is_finite() || x.abs() > 1e150 {
            return false;
        }
        xs[step + 1] = x;
        z = z_next;
        m_now = m_next;
    }
    true
}

struct ChunkOut {
    sums: Vec<[f64; 4]>,
    count: usize,
    excluded: usize,
    snapshots: Vec<Vec<f64>>,
    retained: Vec<f64>,
}

struct RawEnsemble {
    plan: Plan,
    ensemble: Ensemble,
    /// Path-major retained samples, `per_path` per surviving path.
    retained: Vec<f64>,
    per_path: usize,
}

fn simulate(problem: &ProblemSpec, config: &McConfig, retain: Option<f64>) -> Result<RawEnsemble> {
    let plan = Plan::new(problem, config, retain)?;
    let n_steps = plan.steps + 1;
    let per_path = if plan.retain_every > 0 {
        plan.steps / plan.retain_every
    } else {
        0
    };
    let starts: Vec<usize> = (0..config.paths).step_by(CHUNK).collect();
    let chunks: Vec<ChunkOut> = starts
        .par_iter()
        .map(|&start| {
            let end = (start + CHUNK).min(config.paths);
            let mut out = ChunkOut {
                sums: vec![[0.0; 4]; n_steps],
                count: 0,
                excluded: 0,
                snapshots: vec![Vec::with_capacity(end - start); plan.snapshot_steps.len()],
                retained: Vec::with_capacity((end - start) * per_path),
            };
            // shifted sums about the initial mean keep the variance accurate
            let shift = problem.initial.mean;
            let mut xs = vec![0.0; n_steps];
            for index in start..end {
                if !run_path(problem, &plan, index, config.seed, &mut xs) {
                    out.excluded += 1;
                    continue;
                }
                out.count += 1;
                for (acc, &x) in out.sums.iter_mut().zip(&xs) {
                    let d = x - shift;
                    let d2 = d * d;
                    acc[0] += d;
                    acc[1] += d2;
                    acc[2] += d2 * d;
                    acc[3] += d2 * d2;
                }
                for (snap, &s) in out.snapshots.iter_mut().zip(&plan.snapshot_steps) {
                    snap.push(xs[s]);
                }
                for j in 1..=per_path {
                    out.retained.push(xs[j * plan.retain_every]);
                }
            }
            out
        })
        .collect();

    let mut sums = vec![[0.0; 4]; n_steps];
    let mut count = 0;
    let mut excluded = 0;
    let mut samples = vec![Vec::with_capacity(config.paths); plan.snapshot_steps.len()];
    let mut retained = Vec::new();
    for c in chunks {
        for (a, b) in sums.iter_mut().zip(&c.sums) {
            for q in 0..4 {
                a[q] += b[q];
            }
        }
        count += c.count;
        excluded += c.excluded;
        for (all, part) in samples.iter_mut().zip(c.snapshots) {
            all.extend(part);
        }
        retained.extend(c.retained);
    }
    if count == 0 {
        return Err(Error::StepFailure {
            step: 0,
            time: plan.t0,
            reason: "every Monte-Carlo path diverged".into(),
        });
    }
    let n = count as f64;
    let shift = problem.initial.mean;
    let moments = sums
        .iter()
        .enumerate()
        .map(|(step, s)| {
            let m1 = s[0] / n;
            let m2 = s[1] / n;
            let m3 = s[2] / n;
            let m4 = s[3] / n;
            let var = (m2 - m1 * m1).max(0.0);
            let c4 = m4 - 4.0 * m1 * m3 + 6.0 * m1 * m1 * m2 - 3.0 * m1.powi(4);
            EnsembleMoments {
                t: plan.time(step),
                mean: m1 + shift,
                var,
                kurtosis: if var > 0.0 { c4 / (var * var) } else { 0.0 },
            }
        })
        .collect();
    let snapshot_times = plan.snapshot_steps.iter().map(|&s| plan.time(s)).collect();
    let dt = plan.dt;
    Ok(RawEnsemble {
        plan,
        ensemble: Ensemble {
            snapshot_times,
            samples,
            moments,
            excluded,
            dt,
        },
        retained,
        per_path,
    })
}

/// Simulates `config.paths` independent paths and records the samples at
/// the snapshot times plus the ensemble moments at every step.
pub fn simulate_ensemble(problem: &ProblemSpec, config: &McConfig) -> Result<Ensemble> {
    Ok(simulate(problem, config, None)?.ensemble)
}

/// Result of the kernel density estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde {
    pub density: Vec<f64>,
    pub bandwidth: f64,
    /// The sample spread was degenerate and a floor bandwidth was used.
    pub floored: bool,
}

/// Gaussian kernel density estimate on `grid`, renormalized to unit
/// trapezoid mass over the grid.
pub fn kde(samples: &[f64], grid: &[f64], rule: Bandwidth) -> Result<Kde> {
    if samples.len() < 2 {
        return Err(param("samples", "need at least two samples"));
    }
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(param("grid", "need an increasing grid of at least two points"));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let spacing = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    let floor = spacing;
    let (bandwidth, floored) = match rule {
        Bandwidth::Fixed(b) => (b, false),
        Bandwidth::Scott => {
            let b = var.sqrt() * n.powf(-0.2);
            if b > 1e-12 * mean.abs().max(1.0) {
                (b, false)
            } else {
                (floor, true)
            }
        }
    };
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let reach = KERNEL_REACH * bandwidth;
    let norm = 1.0 / (n * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    let mut density: Vec<f64> = grid
        .par_iter()
        .map(|&x| {
            let a = sorted.partition_point(|&s| s < x - reach);
            let b = sorted.partition_point(|&s| s <= x + reach);
            sorted[a..b]
                .iter()
                .map(|&s| {
                    let u = (x - s) / bandwidth;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect();
    let mass = trapezoid_samples(grid, &density);
    if !(mass > 0.0) {
        return Err(Error::OracleMismatch(
            "kernel estimate has no mass on the grid".into(),
        ));
    }
    for v in &mut density {
        *v /= mass;
    }
    Ok(Kde {
        density,
        bandwidth,
        floored,
    })
}

/// Decorrelated samples from the stationary regime of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct StationarySamples {
    /// Pooled samples, path-major: `per_path` consecutive values per path.
    pub samples: Vec<f64>,
    pub per_path: usize,
    pub stationary_time: f64,
    /// Retention interval `2 tau` rounded to the time grid.
    pub interval: f64,
    pub excluded: usize,
}

/// Runs the ensemble to `config.horizon`, detects the onset of stationarity
/// from the ensemble moments and keeps every path's value at times that are
/// multiples of `2 tau` after it.
pub fn stationary_samples(problem: &ProblemSpec, config: &McConfig) -> Result<StationarySamples> {
    let (_, tau) = problem
        .noise
        .ou_params()
        .ok_or_else(|| Error::UnsupportedNoise("path sampling needs an OU kernel".into()))?;
    let raw = simulate(problem, config, Some(2.0 * tau))?;
    let moments = &raw.ensemble.moments;
    let times: Vec<f64> = moments.iter().map(|m| m.t).collect();
    let means: Vec<f64> = moments.iter().map(|m| m.mean).collect();
    let vars: Vec<f64> = moments.iter().map(|m| m.var).collect();
    let n = raw.ensemble.survivors().max(1) as f64;
    let last = moments[moments.len() - 1];
    // three standard errors of a difference of two estimates
    let slack_mean = 3.0 * (2.0 / n).sqrt();
    let slack_var = 3.0 * (2.0 * (last.kurtosis - 1.0).max(0.0) / n).sqrt();
    let (found, t_st) =
        detect_stationarity_with_slack(&times, &means, &vars, &config.stationarity, slack_mean, slack_var);
    let t_st = match (found, t_st) {
        (true, Some(t)) => t,
        _ => {
            return Err(Error::NotStationary(format!(
                "ensemble moments still drift at t = {} (mean {:.4e}, var {:.4e}, {} paths)",
                last.t, last.mean, last.var, n
            )))
        }
    };
    let every = raw.plan.retain_every;
    let first = (1..=raw.per_path)
        .find(|&j| raw.plan.time(j * every) >= t_st - 1e-12)
        .ok_or_else(|| {
            Error::NotStationary(format!(
                "no retention time after t_st = {t_st} before the horizon"
            ))
        })?;
    let keep = raw.per_path + 1 - first;
    let mut samples = Vec::with_capacity(keep * raw.ensemble.survivors());
    for path in raw.retained.chunks(raw.per_path) {
        samples.extend_from_slice(&path[first - 1..]);
    }
    Ok(StationarySamples {
        samples,
        per_path: keep,
        stationary_time: t_st,
        interval: every as f64 * raw.plan.dt,
        excluded: raw.ensemble.excluded,
    })
}

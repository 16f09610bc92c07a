//! Time marching of the closed pdf evolution equation.
//!
//! Each step rebuilds the closure diffusion at the new time, assembles the
//! stiffness matrix and takes a Crank-Nicolson step. Closures that depend on
//! the mean slope `R(t) = E[h'(X(t))]` predict it by linear extrapolation and
//! correct it by fixed-point iteration until it is self-consistent.

use crate::closures::{ClosureKind, DiffusionField, MomentHistory};
use crate::error::{param, Error, Result};
use crate::linalg::Matrix;
use crate::model::ProblemSpec;
use crate::poly::Poly;
use crate::pufem::{
    cn_step, evaluate_pdf, functional, project_with, stiffness_degree, Assembler, Cover, PuBasis,
    PROJECTION_POINTS,
};

/// `int |f|` over the two end cells above which a run is flagged. Projection
/// ripples of a sharp initial density alone reach ~1e-7.
pub const BOUNDARY_MASS_WARN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityConfig {
    /// Length of the comparison window.
    pub window: f64,
    /// Bound on `|dmean| / std` and `|dvar| / var` over one window.
    pub threshold: f64,
}

impl Default for StationarityConfig {
    fn default() -> Self {
        Self {
            window: 1.0,
            threshold: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub horizon: f64,
    /// Absolute tolerance on `R` in the correction loop.
    pub tol: f64,
    pub max_iterations: usize,
    /// Times at which pdf snapshots are kept (nearest grid time is used).
    pub snapshot_times: Vec<f64>,
    pub stationarity: StationarityConfig,
    /// Allowed `|J(t) - 1|` before the run is flagged.
    pub mass_tol: f64,
    /// Keep the weight vector of every step.
    pub keep_weights: bool,
}

impl SolverConfig {
    pub fn new(dt: f64, horizon: f64) -> Self {
        Self {
            dt,
            horizon,
            tol: 1e-8,
            max_iterations: 20,
            snapshot_times: vec![horizon],
            stationarity: StationarityConfig::default(),
            mass_tol: 1e-4,
            keep_weights: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(param("solver.dt", "must be positive"));
        }
        if !(self.tol > 0.0) {
            return Err(param("solver.tol", "must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(param("solver.max_iterations", "must be at least 1"));
        }
        if !(self.stationarity.window > 0.0) || !(self.stationarity.threshold > 0.0) {
            return Err(param("solver.stationarity", "window and threshold must be positive"));
        }
        if !(self.mass_tol > 0.0) {
            return Err(param("solver.mass_tol", "must be positive"));
        }
        Ok(())
    }
}

/// Treatment of the ends of the solve domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Shape functions vanish at both ends: `f = 0` there, mass can leave.
    Absorbing,
    /// The cover is widened by one half-overlap on each side and only the
    /// original domain is integrated, so the PU is complete up to the ends and
    /// the weak form imposes zero probability flux there.
    #[default]
    Reflecting,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PufemConfig {
    pub lo: f64,
    pub hi: f64,
    pub subdomains: usize,
    pub basis_size: usize,
    pub smoothness: usize,
    /// Gauss nodes per cell for non-polynomial (Fox) diffusion.
    pub fox_points: usize,
    /// Points of the uniform grid on which snapshots are sampled.
    pub output_points: usize,
    pub boundary: Boundary,
}

impl Default for PufemConfig {
    fn default() -> Self {
        Self {
            lo: -4.0,
            hi: 4.0,
            subdomains: 50,
            basis_size: 4,
            smoothness: 2,
            fox_points: 12,
            output_points: 401,
            boundary: Boundary::Reflecting,
        }
    }
}

impl PufemConfig {
    pub fn with_domain(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            ..Self::default()
        }
    }

    pub fn cover(&self) -> Result<Cover> {
        match self.boundary {
            Boundary::Absorbing => Cover::new(self.lo, self.hi, self.subdomains),
            Boundary::Reflecting => {
                if self.subdomains < 2 {
                    return Err(param("subdomains", "reflecting boundary needs at least two"));
                }
                let h = (self.hi - self.lo) / (self.subdomains as f64 - 1.0);
                Cover::new(self.lo - h, self.hi + h, self.subdomains)
            }
        }
    }

    /// Cells of [`PufemConfig::cover`] that make up the solve domain.
    pub fn active_cells(&self) -> std::ops::Range<usize> {
        match self.boundary {
            Boundary::Absorbing => 0..self.subdomains + 1,
            Boundary::Reflecting => 1..self.subdomains,
        }
    }

    /// Quadrature tables over the solve domain.
    pub fn assembler(&self, points: usize) -> Result<Assembler> {
        Assembler::with_cells(&self.cover()?, &self.basis()?, points, self.active_cells())
    }

    pub fn basis(&self) -> Result<PuBasis> {
        PuBasis::uniform(self.smoothness, self.subdomains, self.basis_size)
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = self.output_points.max(2) - 1;
        (0..=n)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / n as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentRecord {
    pub t: f64,
    pub mean: f64,
    pub var: f64,
    pub r: f64,
    /// Total mass `J(t)`.
    pub mass: f64,
    pub min_diffusion: f64,
    pub iterations: usize,
    pub boundary_mass: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub max_mass_error: f64,
    pub mass_flagged: bool,
    pub max_boundary_mass: f64,
    /// Boundary mass above `1e-8` somewhere in the run.
    pub boundary_flagged: bool,
    /// The diffusion went negative on the domain (SCT sign hazard).
    pub negative_diffusion: bool,
    /// Relative energy-identity residual, linear runs only.
    pub energy_residual: Option<f64>,
    pub median_iterations: usize,
    pub max_iterations: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdfTrajectory {
    pub closure: ClosureKind,
    pub snapshots: Vec<Snapshot>,
    pub moments: Vec<MomentRecord>,
    /// Weights after every step (index 0 is the projection), when requested.
    pub weights: Vec<Vec<f64>>,
    pub diagnostics: Diagnostics,
    /// Earliest time from which the first two moments are stationary.
    pub stationary_time: Option<f64>,
}

impl PdfTrajectory {
    pub fn final_snapshot(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectory has snapshots")
    }

    pub fn snapshot_near(&self, t: f64) -> Option<&Snapshot> {
        self.snapshots
            .iter()
            .min_by(|a, b| (a.time - t).abs().total_cmp(&(b.time - t).abs()))
    }

    pub fn final_moments(&self) -> &MomentRecord {
        self.moments.last().expect("trajectory has moments")
    }
}

/// `R = int h'(x) f(x) dx` for the density with weights `w`.
pub fn compute_moment(basis: &PuBasis, cover: &Cover, w: &[f64], dh: &Poly) -> Result<f64> {
    let v = functional(basis, cover, dh)?;
    Ok(dot(&v, w))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Earliest window end from which the relative change of mean and variance
/// over one window stays below the threshold for the rest of the series.
pub fn detect_stationarity(
    times: &[f64],
    means: &[f64],
    vars: &[f64],
    config: &StationarityConfig,
) -> (bool, Option<f64>) {
    detect_stationarity_with_slack(times, means, vars, config, 0.0, 0.0)
}

/// As [`detect_stationarity`], with the thresholds on the mean and variance
/// changes widened by `slack_mean` and `slack_var` (sampling noise).
pub(crate) fn detect_stationarity_with_slack(
    times: &[f64],
    means: &[f64],
    vars: &[f64],
    config: &StationarityConfig,
    slack_mean: f64,
    slack_var: f64,
) -> (bool, Option<f64>) {
    let n = times.len();
    if n < 2 {
        return (false, None);
    }
    let mut earliest = None;
    let mut j = 0;
    for i in 0..n {
        if times[i] - times[0] < config.window * (1.0 - 1e-9) {
            continue;
        }
        while times[i] - times[j + 1] >= config.window * (1.0 - 1e-9) {
            j += 1;
        }
        let scale = vars[i].abs().max(f64::MIN_POSITIVE);
        let dm = (means[i] - means[j]).abs() / scale.sqrt();
        let dv = (vars[i] - vars[j]).abs() / scale;
        if dm < config.threshold + slack_mean && dv < config.threshold + slack_var {
            earliest.get_or_insert(times[i]);
        } else {
            earliest = None;
        }
    }
    (earliest.is_some(), earliest)
}

struct Vectors {
    one: Vec<f64>,
    x1: Vec<f64>,
    x2: Vec<f64>,
    slope: Vec<f64>,
}

/// Runs the closed pdf equation for `problem` from `t0` to `solver.horizon`.
pub fn run_evolution(
    problem: &ProblemSpec,
    closure: ClosureKind,
    solver: &SolverConfig,
    pufem: &PufemConfig,
) -> Result<PdfTrajectory> {
    problem.validate()?;
    solver.validate()?;
    let t0 = problem.t0;
    if !(solver.horizon > t0) {
        return Err(param("solver.horizon", "must exceed t0"));
    }
    if matches!(closure, ClosureKind::Effective) {
        problem.require_linear()?;
    }
    let steps = ((solver.horizon - t0) / solver.dt - 1e-9).ceil() as usize;
    let dt = (solver.horizon - t0) / steps as f64;

    let cover = pufem.cover()?;
    let basis = pufem.basis()?;
    let ds = basis.shape_degree();
    let drift = &problem.drift;
    let mut warnings = Vec::new();
    let points = match closure.diffusion_degree(drift) {
        Some(db) => {
            let q_deg = drift.degree().max(db.saturating_sub(1));
            let deg = stiffness_degree(&basis, q_deg, db)
                .max(2 * ds)
                .max(ds + drift.dh().degree())
                .max(ds + 2);
            (deg + 2) / 2
        }
        None => pufem.fox_points.max((2 * ds + 2) / 2 + 1),
    };
    let asm = pufem.assembler(points)?;
    let mass = asm.mass();
    let gram = asm.gram();
    let vectors = Vectors {
        one: asm.load(|_| 1.0),
        x1: asm.load(|x| x),
        x2: asm.load(|x| x * x),
        slope: asm.load(|x| drift.dh().eval(x)),
    };

    if closure == ClosureKind::Fox {
        if let Some((_, tau)) = problem.noise.ou_params() {
            let (x, slope) = crate::closures::max_on_interval(drift.dh(), pufem.lo, pufem.hi);
            if tau * slope >= 1.0 {
                warnings.push(format!(
                    "tau h'(x) = {} >= 1 at x = {x}: stationary Fox diffusion diverges there",
                    tau * slope
                ));
            }
        }
    }

    let projector = pufem.assembler(PROJECTION_POINTS.max(ds + 1))?;
    let mut w = project_with(&projector, &mass, |x| problem.initial.density(x))?;

    let grid = pufem.grid();
    let diffusion_probe: Vec<f64> = {
        let n = 200;
        (0..=n)
            .map(|i| pufem.lo + (pufem.hi - pufem.lo) * i as f64 / n as f64)
            .collect()
    };
    let snapshot_steps: Vec<usize> = {
        let mut s: Vec<usize> = solver
            .snapshot_times
            .iter()
            .map(|&ts| (((ts - t0) / dt).round().max(0.0) as usize).min(steps))
            .collect();
        s.sort_unstable();
        s.dedup();
        s
    };

    let r0 = dot(&vectors.slope, &w);
    let mut history = MomentHistory::new(t0, dt, r0)?;
    let mut field = DiffusionField::build(closure, problem, &history, t0, dt)?;
    let mut a_prev = asm.stiffness_for(&problem.drift_coefficient(t0), &field);

    let mut traj = PdfTrajectory {
        closure,
        snapshots: Vec::new(),
        moments: Vec::with_capacity(steps + 1),
        weights: Vec::new(),
        diagnostics: Diagnostics::default(),
        stationary_time: None,
    };
    let linear = drift.linear_rate();
    let mut energy: Vec<(f64, f64, f64)> = Vec::new();
    let mut record = |traj: &mut PdfTrajectory,
                      i: usize,
                      t: f64,
                      w: &[f64],
                      r: f64,
                      field: &DiffusionField,
                      iterations: usize| {
        let j = dot(&vectors.one, w);
        let mean = dot(&vectors.x1, w) / j;
        let var = dot(&vectors.x2, w) / j - mean * mean;
        let min_diffusion = diffusion_probe
            .iter()
            .map(|&x| field.b(x))
            .fold(f64::INFINITY, f64::min);
        let boundary_mass = asm.boundary_mass(w);
        traj.moments.push(MomentRecord {
            t,
            mean,
            var,
            r,
            mass: j,
            min_diffusion,
            iterations,
            boundary_mass,
        });
        if linear.is_some() {
            energy.push((mass.quadratic_form(w), gram.quadratic_form(w), field.b(0.0)));
        }
        if snapshot_steps.binary_search(&i).is_ok() {
            traj.snapshots.push(Snapshot {
                time: t,
                x: grid.clone(),
                f: evaluate_pdf(&basis, &cover, w, &grid),
                weights: w.to_vec(),
            });
        }
        if solver.keep_weights {
            traj.weights.push(w.to_vec());
        }
    };
    record(&mut traj, 0, t0, &w, r0, &field, 0);

    for i in 1..=steps {
        let t = t0 + i as f64 * dt;
        let samples = history.samples();
        let mut r = if i == 1 {
            samples[0]
        } else {
            2.0 * samples[i - 1] - samples[i - 2]
        };
        history.push(r);
        let q = problem.drift_coefficient(t);
        let mut iterations = 0;
        let (w_new, a_new) = loop {
            iterations += 1;
            field = DiffusionField::build(closure, problem, &history, t, dt)?;
            let a_next = asm.stiffness_for(&q, &field);
            let w_next = cn_step(&mass, &a_prev, &a_next, &w, dt).map_err(|e| Error::StepFailure {
                step: i,
                time: t,
                reason: e.to_string(),
            })?;
            if w_next.iter().any(|v| !v.is_finite()) {
                return Err(Error::StepFailure {
                    step: i,
                    time: t,
                    reason: "non-finite weights".into(),
                });
            }
            if !closure.uses_history() {
                break (w_next, a_next);
            }
            let r_upd = dot(&vectors.slope, &w_next);
            let residual = (r - r_upd).abs();
            if residual <= solver.tol {
                break (w_next, a_next);
            }
            if iterations >= solver.max_iterations {
                return Err(Error::NonConvergent {
                    step: i,
                    time: t,
                    iterations,
                    residual,
                });
            }
            r = r_upd;
            history.set_last(r);
        };
        let j = dot(&vectors.one, &w_new);
        if !(j > 0.5 && j < 1.5) {
            return Err(Error::StepFailure {
                step: i,
                time: t,
                reason: format!("mass J = {j} left the admissible range (instability)"),
            });
        }
        w = w_new;
        a_prev = a_new;
        let r_rec = if closure.uses_history() {
            r
        } else {
            let r = dot(&vectors.slope, &w);
            history.set_last(r);
            r
        };
        record(&mut traj, i, t, &w, r_rec, &field, iterations);
    }

    finish(&mut traj, solver, linear, dt, &energy, warnings);
    Ok(traj)
}

fn finish(
    traj: &mut PdfTrajectory,
    solver: &SolverConfig,
    linear: Option<f64>,
    dt: f64,
    energy: &[(f64, f64, f64)],
    mut warnings: Vec<String>,
) {
    let d = &mut traj.diagnostics;
    for m in &traj.moments {
        d.max_mass_error = d.max_mass_error.max((m.mass - 1.0).abs());
        d.max_boundary_mass = d.max_boundary_mass.max(m.boundary_mass);
        if m.min_diffusion < 0.0 {
            d.negative_diffusion = true;
        }
    }
    d.mass_flagged = d.max_mass_error > solver.mass_tol;
    d.boundary_flagged = d.max_boundary_mass > BOUNDARY_MASS_WARN;
    if d.mass_flagged {
        warnings.push(format!("mass drift {:e} exceeds tolerance", d.max_mass_error));
    }
    if d.boundary_flagged {
        warnings.push(format!(
            "boundary mass {:e} exceeds {BOUNDARY_MASS_WARN:e}; widen the domain",
            d.max_boundary_mass
        ));
    }
    if d.negative_diffusion {
        warnings.push("diffusion coefficient negative on part of the domain".into());
    }
    let mut iters: Vec<usize> = traj.moments.iter().skip(1).map(|m| m.iterations).collect();
    iters.sort_unstable();
    d.median_iterations = iters.get(iters.len() / 2).copied().unwrap_or(0);
    d.max_iterations = iters.last().copied().unwrap_or(0);
    if d.median_iterations > 2 {
        warnings.push(format!(
            "median correction count {} exceeds 2",
            d.median_iterations
        ));
    }
    if let Some(eta) = linear {
        d.energy_residual = Some(energy_residual(eta, dt, energy));
    }
    d.warnings = warnings;

    let times: Vec<f64> = traj.moments.iter().map(|m| m.t).collect();
    let means: Vec<f64> = traj.moments.iter().map(|m| m.mean).collect();
    let vars: Vec<f64> = traj.moments.iter().map(|m| m.var).collect();
    traj.stationary_time = detect_stationarity(&times, &means, &vars, &solver.stationarity).1;
}

/// Max over interior steps of `|dI/dt / 2 + eta I / 2 + B P|`, relative to
/// `max |eta I|`, with `I = int f^2`, `P = int f_x^2` and centred differences.
fn energy_residual(eta: f64, dt: f64, series: &[(f64, f64, f64)]) -> f64 {
    let scale = series
        .iter()
        .map(|&(i, _, _)| (eta * i).abs())
        .fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for k in 1..series.len().saturating_sub(1) {
        let (i, p, b) = series[k];
        let di = (series[k + 1].0 - series[k - 1].0) / (2.0 * dt);
        worst = worst.max((0.5 * di + 0.5 * eta * i + b * p).abs());
    }
    if scale > 0.0 {
        worst / scale
    } else {
        worst
    }
}

/// Mass matrix over the solve domain.
pub fn mass_matrix(pufem: &PufemConfig) -> Result<Matrix> {
    let basis = pufem.basis()?;
    Ok(pufem.assembler(basis.shape_degree() + 1)?.mass())
}

//! JSON run configuration and its translation into solver inputs.

use std::path::{Path, PathBuf};

use pdfevo::closures::ClosureKind;
use pdfevo::evolve::{Boundary, PufemConfig, SolverConfig, StationarityConfig};
use pdfevo::model::{CrossCovariance, DriftSpec, InitialSpec, MeanFunction, NoiseSpec, ProblemSpec};
use pdfevo::montecarlo::{Bandwidth, McConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemBlock,
    #[serde(default)]
    pub closure: ClosureBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub mc: McBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemBlock {
    /// Coefficients of `h(x)`, constant term first.
    pub drift: Vec<f64>,
    #[serde(default = "one")]
    pub coupling: f64,
    pub noise: NoiseBlock,
    pub initial: InitialBlock,
    #[serde(default)]
    pub t0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseBlock {
    Ou {
        intensity: f64,
        corr_time: f64,
        #[serde(default)]
        mean: MeanBlock,
    },
    /// Kernel `(D~/tau~) exp(-2|t - s|/tau~)` of the normalized bistable problem.
    NormalizedOu { d_tilde: f64, tau_tilde: f64 },
    Tabulated {
        grid: Vec<f64>,
        /// Row-major covariance on `grid x grid`.
        cov: Vec<f64>,
        #[serde(default)]
        mean: MeanBlock,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeanBlock {
    Constant(f64),
    Table { times: Vec<f64>, values: Vec<f64> },
}

impl Default for MeanBlock {
    fn default() -> Self {
        MeanBlock::Constant(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialBlock {
    pub mean: f64,
    pub std: f64,
    #[serde(default)]
    pub cross_amplitude: f64,
    #[serde(default = "one")]
    pub cross_decay: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosureName {
    Effective,
    Sct,
    Fox,
    Hanggi,
    Novel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosureBlock {
    pub kind: ClosureName,
    /// Expansion order `M`, novel closure only.
    #[serde(default)]
    pub order: Option<usize>,
    /// Also produce the stationary density (Fox only).
    #[serde(default)]
    pub stationary: bool,
}

impl Default for ClosureBlock {
    fn default() -> Self {
        Self {
            kind: ClosureName::Novel,
            order: Some(2),
            stationary: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryName {
    Absorbing,
    Reflecting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverBlock {
    pub dt: f64,
    pub horizon: f64,
    pub tol: f64,
    pub max_iterations: usize,
    pub domain: [f64; 2],
    pub subdomains: usize,
    pub basis_size: usize,
    pub smoothness: usize,
    pub fox_points: usize,
    pub output_points: usize,
    pub boundary: BoundaryName,
    pub stationarity_window: f64,
    pub stationarity_threshold: f64,
    pub mass_tol: f64,
}

impl Default for SolverBlock {
    fn default() -> Self {
        let s = SolverConfig::new(0.01, 10.0);
        let p = PufemConfig::default();
        Self {
            dt: s.dt,
            horizon: s.horizon,
            tol: s.tol,
            max_iterations: s.max_iterations,
            domain: [p.lo, p.hi],
            subdomains: p.subdomains,
            basis_size: p.basis_size,
            smoothness: p.smoothness,
            fox_points: p.fox_points,
            output_points: p.output_points,
            boundary: BoundaryName::Reflecting,
            stationarity_window: s.stationarity.window,
            stationarity_threshold: s.stationarity.threshold,
            mass_tol: s.mass_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    Scott,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BandwidthBlock {
    Rule(BandwidthRule),
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McBlock {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub bandwidth: BandwidthBlock,
    /// Sample the stationary regime instead of the snapshot times.
    pub stationary: bool,
}

impl Default for McBlock {
    fn default() -> Self {
        let c = McConfig::new(50_000, 1.0);
        Self {
            paths: c.paths,
            dt: c.dt,
            seed: c.seed,
            bandwidth: BandwidthBlock::Rule(BandwidthRule::Scott),
            stationary: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    /// Defaults to the final time.
    pub snapshot_times: Vec<f64>,
    pub directory: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}

/// Prefixes core parameter names with the config block they come from.
fn located(block: &str, err: pdfevo::Error) -> CliError {
    match err {
        pdfevo::Error::Parameter { name, reason } => {
            let path = if name.starts_with(block) {
                name.to_string()
            } else {
                format!("{block}.{name}")
            };
            CliError::Config(format!("{path}: {reason}"))
        }
        other => CliError::Config(other.to_string()),
    }
}

fn field(path: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {reason}"))
}

impl RunConfig {
    /// Reads, parses and validates a config file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("{path}: {}", e.inner()))
        })?;
        config.resolve();
        config.validate()?;
        Ok(config)
    }

    /// Fills values that default to other fields.
    pub fn resolve(&mut self) {
        if self.output.snapshot_times.is_empty() {
            self.output.snapshot_times = vec![self.solver.horizon];
        }
        if self.closure.kind == ClosureName::Novel && self.closure.order.is_none() {
            self.closure.order = Some(2);
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.problem()?;
        self.closure()?;
        self.solver_config()?.validate().map_err(|e| located("solver", e))?;
        let pufem = self.pufem_config();
        pufem.cover().map_err(|e| located("solver", e))?;
        pufem.basis().map_err(|e| located("solver", e))?;
        if pufem.output_points < 2 {
            return Err(field("solver.output_points", "need at least two points"));
        }
        self.mc_config().validate().map_err(|e| located("mc", e))?;
        for (i, &t) in self.output.snapshot_times.iter().enumerate() {
            if !(t >= self.problem.t0 && t <= self.solver.horizon) {
                return Err(field(
                    &format!("output.snapshot_times[{i}]"),
                    format!("{t} outside [t0, horizon]"),
                ));
            }
        }
        if self.closure.stationary && self.closure.kind != ClosureName::Fox {
            return Err(field("closure.stationary", "only the Fox closure has a stationary request"));
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<ProblemSpec, CliError> {
        let p = &self.problem;
        let drift = DriftSpec::new(p.drift.clone()).map_err(|e| located("problem", e))?;
        let mean = |m: &MeanBlock| match m {
            MeanBlock::Constant(c) => MeanFunction::Constant(*c),
            MeanBlock::Table { times, values } => MeanFunction::Table {
                times: times.clone(),
                values: values.clone(),
            },
        };
        let noise = match &p.noise {
            NoiseBlock::Ou {
                intensity,
                corr_time,
                mean: m,
            } => NoiseSpec::Ou {
                intensity: *intensity,
                corr_time: *corr_time,
                mean: mean(m),
            },
            NoiseBlock::NormalizedOu { d_tilde, tau_tilde } => {
                NoiseSpec::normalized_ou(*d_tilde, *tau_tilde).map_err(|e| located("problem", e))?
            }
            NoiseBlock::Tabulated { grid, cov, mean: m } => NoiseSpec::Tabulated {
                grid: grid.clone(),
                cov: cov.clone(),
                mean: mean(m),
            },
        };
        if !(p.initial.std > 0.0) {
            return Err(field("problem.initial.std", "must be positive"));
        }
        let mut initial = InitialSpec::gaussian(p.initial.mean, p.initial.std);
        initial.cross = CrossCovariance {
            amplitude: p.initial.cross_amplitude,
            decay_time: p.initial.cross_decay,
        };
        ProblemSpec::new(drift, p.coupling, noise, initial, p.t0, self.solver.horizon).map_err(|e| match e {
            pdfevo::Error::Parameter { name: "horizon", reason } => field("solver.horizon", reason),
            e => located("problem", e),
        })
    }

    pub fn closure(&self) -> Result<ClosureKind, CliError> {
        let c = &self.closure;
        if c.kind != ClosureName::Novel && c.order.is_some() {
            return Err(field("closure.order", "only the novel closure takes an order"));
        }
        Ok(match c.kind {
            ClosureName::Effective => ClosureKind::Effective,
            ClosureName::Sct => ClosureKind::Sct,
            ClosureName::Fox => ClosureKind::Fox,
            ClosureName::Hanggi => ClosureKind::Hanggi,
            ClosureName::Novel => ClosureKind::Novel {
                order: c.order.ok_or_else(|| field("closure.order", "required for the novel closure"))?,
            },
        })
    }

    pub fn solver_config(&self) -> Result<SolverConfig, CliError> {
        let s = &self.solver;
        if !(s.horizon > self.problem.t0) {
            return Err(field("solver.horizon", "must exceed problem.t0"));
        }
        let mut c = SolverConfig::new(s.dt, s.horizon);
        c.tol = s.tol;
        c.max_iterations = s.max_iterations;
        c.snapshot_times = self.output.snapshot_times.clone();
        c.stationarity = StationarityConfig {
            window: s.stationarity_window,
            threshold: s.stationarity_threshold,
        };
        c.mass_tol = s.mass_tol;
        Ok(c)
    }

    pub fn pufem_config(&self) -> PufemConfig {
        let s = &self.solver;
        PufemConfig {
            lo: s.domain[0],
            hi: s.domain[1],
            subdomains: s.subdomains,
            basis_size: s.basis_size,
            smoothness: s.smoothness,
            fox_points: s.fox_points,
            output_points: s.output_points,
            boundary: match s.boundary {
                BoundaryName::Absorbing => Boundary::Absorbing,
                BoundaryName::Reflecting => Boundary::Reflecting,
            },
        }
    }

    pub fn mc_config(&self) -> McConfig {
        let m = &self.mc;
        let mut c = McConfig::new(m.paths, self.solver.horizon);
        c.dt = m.dt;
        c.seed = m.seed;
        c.snapshot_times = self.output.snapshot_times.clone();
        c.bandwidth = match m.bandwidth {
            BandwidthBlock::Rule(BandwidthRule::Scott) => Bandwidth::Scott,
            BandwidthBlock::Fixed(b) => Bandwidth::Fixed(b),
        };
        c.stationarity = StationarityConfig {
            window: self.solver.stationarity_window,
            threshold: self.solver.stationarity_threshold,
        };
        c
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

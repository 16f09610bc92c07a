use std::path::{Path, PathBuf};

use pdfevo::closures::fox_stationary_check;
use pdfevo::evolve::run_evolution;
use pdfevo::gaussmoments::{hermite_abs, isserlis, quadratic_cumulant, quadratic_cumulant_with, CovSpec};
use pdfevo::metrics::{l1_distance, linf_distance};
use pdfevo::model::NoiseSpec;
use pdfevo::montecarlo::{kde, simulate_ensemble, stationary_samples};
use pdfevo::oracle::{exact_pdf_linear_grid, fox_stationary_pdf, hanggi_self_consistent, linear_moments};
use serde_json::json;

use crate::config::{ClosureName, RunConfig};
use crate::output::{create_dir, snapshot_name, table, write_atomic, write_pdf};
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn out_dir(out: Option<PathBuf>, config: &RunConfig) -> Result<PathBuf, CliError> {
    out.or_else(|| config.output.directory.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set output.directory".into()))
}

fn write_meta(dir: &Path, command: &str, config: &RunConfig, results: serde_json::Value) -> Result<(), CliError> {
    let meta = json!({
        "tool": "pdfevo",
        "version": VERSION,
        "command": command,
        "config": config,
        "results": results,
    });
    let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
    write_atomic(&dir.join("run.meta"), text.as_bytes())
}

pub fn solve(config_path: &Path, out: Option<PathBuf>) -> Result<String, CliError> {
    let config = RunConfig::load(config_path)?;
    let dir = out_dir(out, &config)?;
    let problem = config.problem()?;
    let closure = config.closure()?;
    let solver = config.solver_config()?;
    let pufem = config.pufem_config();
    if config.closure.stationary {
        fox_stationary_check(&problem, pufem.lo, pufem.hi)?;
    }
    let tr = run_evolution(&problem, closure, &solver, &pufem)?;
    let stationary = if config.closure.stationary {
        Some(fox_stationary_pdf(&problem, &pufem.grid())?)
    } else {
        None
    };

    create_dir(&dir)?;
    for snap in &tr.snapshots {
        write_pdf(&dir.join(snapshot_name(snap.time)), &snap.x, &snap.f)?;
    }
    if let Some(f) = &stationary {
        write_pdf(&dir.join("pdf_stationary.csv"), &pufem.grid(), f)?;
    }
    let rows = tr.moments.iter().map(|m| {
        vec![m.t, m.mean, m.var, m.r, m.mass, m.min_diffusion, m.iterations as f64]
    });
    write_atomic(
        &dir.join("moments.csv"),
        &table(&["t", "mean", "var", "R", "J", "min_diffusion", "iters"], rows),
    )?;
    let d = &tr.diagnostics;
    write_meta(
        &dir,
        "solve",
        &config,
        json!({
            "closure": closure.label(),
            "stationary_time": tr.stationary_time,
            "max_mass_error": d.max_mass_error,
            "mass_flagged": d.mass_flagged,
            "max_boundary_mass": d.max_boundary_mass,
            "negative_diffusion": d.negative_diffusion,
            "energy_residual": d.energy_residual,
            "median_iterations": d.median_iterations,
            "max_iterations": d.max_iterations,
            "warnings": d.warnings,
        }),
    )?;
    let mut summary = format!(
        "{}: {} steps, max |J - 1| = {:.3e}",
        closure.label(),
        tr.moments.len() - 1,
        d.max_mass_error
    );
    if let Some(t) = tr.stationary_time {
        summary += &format!(", stationary from t = {t}");
    }
    for w in &d.warnings {
        eprintln!("warning: {w}");
    }
    Ok(summary)
}

pub fn mc(config_path: &Path, out: Option<PathBuf>, paths: Option<usize>, seed: Option<u64>) -> Result<String, CliError> {
    let mut config = RunConfig::load(config_path)?;
    if let Some(n) = paths {
        config.mc.paths = n;
    }
    if let Some(s) = seed {
        config.mc.seed = s;
    }
    config.validate()?;
    let dir = out_dir(out, &config)?;
    let problem = config.problem()?;
    let mc = config.mc_config();
    let grid = config.pufem_config().grid();

    if config.mc.stationary {
        let st = stationary_samples(&problem, &mc)?;
        let k = kde(&st.samples, &grid, mc.bandwidth)?;
        create_dir(&dir)?;
        write_pdf(&dir.join("pdf_stationary.csv"), &grid, &k.density)?;
        write_meta(
            &dir,
            "mc",
            &config,
            json!({
                "stationary_time": st.stationary_time,
                "sampling_interval": st.interval,
                "samples": st.samples.len(),
                "samples_per_path": st.per_path,
                "excluded_paths": st.excluded,
                "bandwidth": k.bandwidth,
                "bandwidth_floored": k.floored,
            }),
        )?;
        return Ok(format!(
            "{} stationary samples from t = {}, {} paths excluded",
            st.samples.len(),
            st.stationary_time,
            st.excluded
        ));
    }

    let e = simulate_ensemble(&problem, &mc)?;
    let kdes = e
        .samples
        .iter()
        .map(|s| kde(s, &grid, mc.bandwidth))
        .collect::<pdfevo::Result<Vec<_>>>()?;
    create_dir(&dir)?;
    for (t, k) in e.snapshot_times.iter().zip(&kdes) {
        write_pdf(&dir.join(snapshot_name(*t)), &grid, &k.density)?;
    }
    let rows = e.moments.iter().map(|m| vec![m.t, m.mean, m.var, m.kurtosis]);
    write_atomic(&dir.join("mc_moments.csv"), &table(&["t", "mean", "var", "kurtosis"], rows))?;
    let bandwidths: Vec<_> = e
        .snapshot_times
        .iter()
        .zip(&kdes)
        .map(|(t, k)| json!({"t": t, "bandwidth": k.bandwidth, "floored": k.floored}))
        .collect();
    write_meta(
        &dir,
        "mc",
        &config,
        json!({"excluded_paths": e.excluded, "kde": bandwidths}),
    )?;
    Ok(format!("{} paths, {} excluded", mc.paths, e.excluded))
}

pub fn oracle(config_path: &Path, out: Option<PathBuf>) -> Result<String, CliError> {
    let config = RunConfig::load(config_path)?;
    let dir = out_dir(out, &config)?;
    let problem = config.problem()?;
    let grid = config.pufem_config().grid();

    if problem.drift.linear_rate().is_some() {
        let times = &config.output.snapshot_times;
        let pdfs = times
            .iter()
            .map(|&t| exact_pdf_linear_grid(&problem, &grid, t))
            .collect::<pdfevo::Result<Vec<_>>>()?;
        let steps = ((config.solver.horizon - problem.t0) / config.solver.dt).round() as usize;
        let grid_times: Vec<f64> = (0..=steps)
            .map(|i| (problem.t0 + i as f64 * config.solver.dt).min(config.solver.horizon))
            .collect();
        let moments = linear_moments(&problem, &grid_times)?;
        create_dir(&dir)?;
        for (t, f) in times.iter().zip(&pdfs) {
            write_pdf(&dir.join(snapshot_name(*t)), &grid, f)?;
        }
        let rows = moments.iter().map(|m| vec![m.t, m.mean, m.var, m.d_eff]);
        write_atomic(&dir.join("moments.csv"), &table(&["t", "mean", "var", "d_eff"], rows))?;
        write_meta(&dir, "oracle", &config, json!({"reference": "linear gaussian"}))?;
        return Ok(format!("exact linear response at {} times", times.len()));
    }

    let (reference, f, extra) = match config.closure.kind {
        ClosureName::Fox => ("stationary fox", fox_stationary_pdf(&problem, &grid)?, json!(null)),
        ClosureName::Hanggi => {
            let (r, f) = hanggi_self_consistent(&problem, &grid)?;
            ("stationary hanggi", f, json!(r))
        }
        ClosureName::Novel if config.closure.order == Some(0) => {
            let (r, f) = hanggi_self_consistent(&problem, &grid)?;
            ("stationary hanggi", f, json!(r))
        }
        _ => {
            return Err(CliError::Runtime(
                "no closed-form reference for this drift and closure".into(),
            ))
        }
    };
    create_dir(&dir)?;
    write_pdf(&dir.join("pdf_stationary.csv"), &grid, &f)?;
    write_meta(&dir, "oracle", &config, json!({"reference": reference, "r_inf": extra}))?;
    Ok(format!("{reference} density"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    L1,
    Linf,
}

pub fn compare(a: &Path, b: &Path, metric: Metric) -> Result<f64, CliError> {
    let (xa, fa) = crate::output::read_pdf(a)?;
    let (xb, fb) = crate::output::read_pdf(b)?;
    let d = match metric {
        Metric::L1 => l1_distance(&xa, &fa, &xb, &fb),
        Metric::Linf => linf_distance(&xa, &fa, &xb, &fb),
    };
    d.map_err(|e| CliError::Config(e.to_string()))
}

/// Inputs of the `moments` command; which fields are required depends on the op.
#[derive(Debug, Clone, Default)]
pub struct MomentArgs {
    pub n: Option<u32>,
    pub k: Option<u32>,
    pub times: Vec<f64>,
    pub intensity: f64,
    pub corr_time: f64,
    pub eta: Option<f64>,
    pub kappa: f64,
    pub x0: f64,
    pub order: Option<usize>,
    pub t: Option<f64>,
    pub intervals: Option<usize>,
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Config(format!("--{flag} is required for this op")))
}

pub fn hermite(args: &MomentArgs) -> Result<String, CliError> {
    let n = required(args.n, "n")?;
    let k = required(args.k, "k")?;
    hermite_abs(n, k)
        .map(|v| v.to_string())
        .map_err(|e| CliError::Config(e.to_string()))
}

pub fn isserlis_moment(args: &MomentArgs) -> Result<String, CliError> {
    if args.times.is_empty() {
        return Err(CliError::Config("--times is required for this op".into()));
    }
    let noise = NoiseSpec::ou(args.intensity, args.corr_time, 0.0).map_err(|e| CliError::Config(e.to_string()))?;
    let cov = CovSpec::from_noise(args.times.clone(), &noise).map_err(|e| CliError::Config(e.to_string()))?;
    isserlis(&cov)
        .map(crate::output::format_value)
        .map_err(|e| CliError::Config(e.to_string()))
}

pub fn qcumulant(args: &MomentArgs) -> Result<String, CliError> {
    let eta = required(args.eta, "eta")?;
    let order = required(args.order, "order")?;
    let t = required(args.t, "t")?;
    let noise = NoiseSpec::ou(args.intensity, args.corr_time, 0.0).map_err(|e| CliError::Config(e.to_string()))?;
    let value = match args.intervals {
        Some(n) => quadratic_cumulant_with(eta, args.kappa, &noise, args.x0, order, 0.0, t, n),
        None => quadratic_cumulant(eta, args.kappa, &noise, args.x0, order, t),
    };
    value
        .map(crate::output::format_value)
        .map_err(|e| CliError::Config(e.to_string()))
}

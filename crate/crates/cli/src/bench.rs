//! Preset benchmark suites: the linear validation case and the bistable
//! closure comparisons against Monte Carlo.

use std::path::Path;

use pdfevo::closures::ClosureKind;
use pdfevo::evolve::{run_evolution, PufemConfig, SolverConfig};
use pdfevo::metrics::{l1_distance, linf_distance};
use pdfevo::model::{DriftSpec, InitialSpec, NoiseSpec, ProblemSpec};
use pdfevo::montecarlo::{kde, simulate_ensemble, stationary_samples, Bandwidth, McConfig};
use pdfevo::oracle::exact_pdf_linear_grid;
use rayon::prelude::*;

use crate::output::{create_dir, format_value, snapshot_name, write_atomic, write_pdf};
use crate::CliError;

pub const FIG4_TAUS: [f64; 6] = [0.1, 0.3, 0.5, 1.0, 1.5, 3.0];
pub const FIG5_INTENSITIES: [f64; 4] = [0.2, 1.0, 2.0, 5.0];
pub const FIG5_TAUS: [f64; 3] = [0.1, 1.0, 5.0];
/// PUFEM-vs-oracle bound on the linear case.
pub const FIG3_LINF: f64 = 5e-3;
/// KDE-vs-oracle bound, reported but not enforced.
pub const FIG3_MC_LINF: f64 = 3e-2;
/// Products `D~ tau~` at or beyond this are flagged in the summary.
pub const VALIDITY_EDGE: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Fig3,
    Fig4,
    Fig5,
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub paths: usize,
    pub seed: u64,
    /// Final time of the bistable runs.
    pub horizon: f64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            paths: 50_000,
            seed: 0,
            horizon: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub case: String,
    pub method: String,
    pub t: Option<f64>,
    pub metric: &'static str,
    pub value: Option<f64>,
    pub note: String,
    pub failed: bool,
}

impl Row {
    fn value(case: &str, method: &str, t: Option<f64>, metric: &'static str, value: f64) -> Self {
        Self {
            case: case.into(),
            method: method.into(),
            t,
            metric,
            value: Some(value),
            note: String::new(),
            failed: false,
        }
    }

    fn failure(case: &str, method: &str, reason: String) -> Self {
        Self {
            case: case.into(),
            method: method.into(),
            t: None,
            metric: "",
            value: None,
            note: reason,
            failed: true,
        }
    }
}

pub struct Summary {
    pub rows: Vec<Row>,
}

impl Summary {
    pub fn failed(&self) -> bool {
        self.rows.iter().any(|r| r.failed)
    }

    pub fn csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["case", "method", "t", "metric", "value", "note"])
            .expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.case.clone(),
                r.method.clone(),
                r.t.map(|t| t.to_string()).unwrap_or_default(),
                r.metric.to_string(),
                r.value.map(format_value).unwrap_or_default(),
                r.note.clone(),
            ])
            .expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn render(&self) -> String {
        let mut s = format!("{:<22} {:<10} {:>6} {:<6} {:>12}  note\n", "case", "method", "t", "metric", "value");
        for r in &self.rows {
            s += &format!(
                "{:<22} {:<10} {:>6} {:<6} {:>12}  {}\n",
                r.case,
                r.method,
                r.t.map(|t| t.to_string()).unwrap_or_default(),
                r.metric,
                r.value.map(|v| format!("{v:.4e}")).unwrap_or_default(),
                r.note
            );
        }
        s
    }
}

pub fn run(suite: Suite, out: &Path, options: &BenchOptions) -> Result<Summary, CliError> {
    let rows = match suite {
        Suite::Fig3 => fig3(&out.join("fig3"), options)?,
        Suite::Fig4 => {
            let cases: Vec<(f64, f64)> = FIG4_TAUS.iter().map(|&t| (1.0, t)).collect();
            let mut rows = bistable(&out.join("fig4"), &cases, options)?;
            rows.extend(ordering_row(&rows, "D1_tau3"));
            rows
        }
        Suite::Fig5 => {
            let cases: Vec<(f64, f64)> = FIG5_INTENSITIES
                .iter()
                .flat_map(|&d| FIG5_TAUS.iter().map(move |&t| (d, t)))
                .collect();
            bistable(&out.join("fig5"), &cases, options)?
        }
    };
    let summary = Summary { rows };
    let dir = out.join(match suite {
        Suite::Fig3 => "fig3",
        Suite::Fig4 => "fig4",
        Suite::Fig5 => "fig5",
    });
    write_atomic(&dir.join("summary.csv"), &summary.csv())?;
    Ok(summary)
}

pub fn fig3_problem(horizon: f64) -> ProblemSpec {
    ProblemSpec::new(
        DriftSpec::linear(-0.8).expect("valid drift"),
        0.2,
        NoiseSpec::ou(1.0, 1.0, 0.2).expect("valid noise"),
        InitialSpec::gaussian(-0.7, 0.15),
        0.0,
        horizon,
    )
    .expect("valid problem")
}

enum Output {
    Solve(Vec<(f64, Vec<f64>)>),
    Mc(Vec<(f64, Vec<f64>)>),
}

fn fig3(dir: &Path, options: &BenchOptions) -> Result<Vec<Row>, CliError> {
    let horizon = 10.0;
    let times = vec![1.0, 5.0, 10.0];
    let problem = fig3_problem(horizon);
    let pufem = PufemConfig::with_domain(-2.0, 2.0);
    let grid = pufem.grid();
    let closures = [ClosureKind::Effective, ClosureKind::Novel { order: 2 }];

    let mut methods: Vec<Option<ClosureKind>> = closures.iter().copied().map(Some).collect();
    methods.push(None);
    let results: Vec<(String, pdfevo::Result<Output>)> = methods
        .par_iter()
        .map(|m| match m {
            Some(c) => {
                let mut solver = SolverConfig::new(0.01, horizon);
                solver.snapshot_times = times.clone();
                let out = run_evolution(&problem, *c, &solver, &pufem)
                    .map(|tr| Output::Solve(tr.snapshots.into_iter().map(|s| (s.time, s.f)).collect()));
                (c.label(), out)
            }
            None => {
                let mut mc = McConfig::new(options.paths, horizon);
                mc.seed = options.seed;
                mc.snapshot_times = times.clone();
                let out = simulate_ensemble(&problem, &mc).and_then(|e| {
                    e.snapshot_times
                        .iter()
                        .zip(&e.samples)
                        .map(|(t, s)| Ok((*t, kde(s, &grid, Bandwidth::Scott)?.density)))
                        .collect::<pdfevo::Result<Vec<_>>>()
                        .map(Output::Mc)
                });
                ("mc".to_string(), out)
            }
        })
        .collect();

    let oracle: Vec<Vec<f64>> = times
        .iter()
        .map(|&t| exact_pdf_linear_grid(&problem, &grid, t))
        .collect::<pdfevo::Result<_>>()?;
    write_case(&dir.join("oracle"), &grid, times.iter().copied().zip(oracle.iter().cloned()))?;

    let case = "linear";
    let mut rows = Vec::new();
    let mut mc_pdfs = None;
    for (label, r) in &results {
        if let Ok(Output::Mc(p)) = r {
            write_case(&dir.join(label), &grid, p.iter().cloned())?;
            mc_pdfs = Some(p.clone());
        }
    }
    for (label, r) in &results {
        let pdfs = match r {
            Err(e) => {
                rows.push(Row::failure(case, label, e.to_string()));
                continue;
            }
            Ok(Output::Solve(p)) => {
                write_case(&dir.join(label), &grid, p.iter().cloned())?;
                p
            }
            Ok(Output::Mc(p)) => p,
        };
        let is_mc = matches!(r, Ok(Output::Mc(_)));
        for ((t, f), exact) in pdfs.iter().zip(&oracle) {
            let d = linf_distance(&grid, f, &grid, exact)?;
            let mut row = Row::value(case, label, Some(*t), "linf", d);
            if !is_mc && d > FIG3_LINF {
                row.note = format!("exceeds {FIG3_LINF:e}");
                row.failed = true;
            }
            if is_mc && d > FIG3_MC_LINF {
                row.note = format!("above {FIG3_MC_LINF:e} (sampling noise)");
            }
            rows.push(row);
            if let (false, Some(mc)) = (is_mc, &mc_pdfs) {
                if let Some((_, g)) = mc.iter().find(|(tm, _)| (tm - t).abs() < 1e-9) {
                    rows.push(Row {
                        note: "vs mc".into(),
                        ..Row::value(case, label, Some(*t), "l1", l1_distance(&grid, f, &grid, g)?)
                    });
                }
            }
        }
    }
    Ok(rows)
}

fn write_case(dir: &Path, grid: &[f64], pdfs: impl Iterator<Item = (f64, Vec<f64>)>) -> Result<(), CliError> {
    create_dir(dir)?;
    for (t, f) in pdfs {
        write_pdf(&dir.join(snapshot_name(t)), grid, &f)?;
    }
    Ok(())
}

fn case_name(d: f64, tau: f64) -> String {
    format!("D{d}_tau{tau}")
}

#[derive(Clone, Copy)]
enum Task {
    Mc,
    Closure(ClosureKind),
}

/// Stationary comparison of M = 0, 2, 4 against decorrelated MC samples.
fn bistable(dir: &Path, cases: &[(f64, f64)], options: &BenchOptions) -> Result<Vec<Row>, CliError> {
    let pufem = PufemConfig::default();
    let grid = pufem.grid();
    let methods = [
        Task::Mc,
        Task::Closure(ClosureKind::Hanggi),
        Task::Closure(ClosureKind::Novel { order: 2 }),
        Task::Closure(ClosureKind::Novel { order: 4 }),
    ];
    let label = |t: &Task| match t {
        Task::Mc => "mc".to_string(),
        Task::Closure(ClosureKind::Hanggi) => "m0".to_string(),
        Task::Closure(ClosureKind::Novel { order }) => format!("m{order}"),
        Task::Closure(c) => c.label(),
    };
    let tasks: Vec<((f64, f64), Task)> = cases
        .iter()
        .flat_map(|&c| methods.iter().map(move |&m| (c, m)))
        .collect();
    let results: Vec<pdfevo::Result<(Vec<f64>, Option<f64>)>> = tasks
        .par_iter()
        .map(|&((d, tau), task)| {
            let problem = ProblemSpec::normalized_bistable(d, tau, 0.6, options.horizon)?;
            match task {
                Task::Mc => {
                    let mut mc = McConfig::new(options.paths, options.horizon);
                    mc.seed = options.seed;
                    let st = stationary_samples(&problem, &mc)?;
                    Ok((kde(&st.samples, &grid, Bandwidth::Scott)?.density, Some(st.stationary_time)))
                }
                Task::Closure(c) => {
                    let tr = run_evolution(&problem, c, &SolverConfig::new(0.01, options.horizon), &pufem)?;
                    let t_st = tr.stationary_time;
                    Ok((tr.final_snapshot().f.clone(), t_st))
                }
            }
        })
        .collect();

    let mut rows = Vec::new();
    for (c, &(d, tau)) in cases.iter().enumerate() {
        let case = case_name(d, tau);
        let case_dir = dir.join(&case);
        create_dir(&case_dir)?;
        let block = &results[c * methods.len()..(c + 1) * methods.len()];
        for (m, r) in methods.iter().zip(block) {
            if let Ok((f, _)) = r {
                write_pdf(&case_dir.join(format!("{}.csv", label(m))), &grid, f)?;
            }
        }
        let mc = match &block[0] {
            Ok((f, _)) => f,
            Err(e) => {
                rows.push(Row::failure(&case, "mc", e.to_string()));
                continue;
            }
        };
        for (m, r) in methods.iter().zip(block).skip(1) {
            match r {
                Err(e) => rows.push(Row::failure(&case, &label(m), e.to_string())),
                Ok((f, t_st)) => {
                    let mut row = Row::value(&case, &label(m), None, "l1", l1_distance(&grid, f, &grid, mc)?);
                    let mut notes = Vec::new();
                    if t_st.is_none() {
                        notes.push("not stationary by the final time".to_string());
                    }
                    if d * tau >= VALIDITY_EDGE {
                        notes.push(format!("near validity edge (D~ tau~ = {})", d * tau));
                    }
                    row.note = notes.join("; ");
                    rows.push(row);
                }
            }
        }
    }
    Ok(rows)
}

/// Hänggi must be further from MC than M = 2 at the largest correlation time.
fn ordering_row(rows: &[Row], case: &str) -> Option<Row> {
    let find = |m: &str| {
        rows.iter()
            .find(|r| r.case == case && r.method == m && r.metric == "l1")
            .and_then(|r| r.value)
    };
    let (m0, m2) = (find("m0")?, find("m2")?);
    let mut row = Row::value(case, "m0-m2", None, "l1", m0 - m2);
    if m0 > m2 {
        row.note = "ordering l1(m0) > l1(m2) holds".into();
    } else {
        row.note = "ordering l1(m0) > l1(m2) violated".into();
        row.failed = true;
    }
    Some(row)
}

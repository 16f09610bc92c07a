use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pdfevo_cli::bench::{self, BenchOptions, Suite};
use pdfevo_cli::commands::{self, MomentArgs, Metric};
use pdfevo_cli::output::significant;
use pdfevo_cli::CliError;

#[derive(Parser)]
#[command(name = "pdfevo", version, about = "Response pdf evolution under coloured noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the closed pdf equation with PUFEM.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo ensemble with KDE densities.
    Mc {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Closed-form reference densities.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distance between two `x,f` density files.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_enum, default_value = "l1")]
        metric: MetricArg,
    },
    /// Gaussian moment utilities.
    Moments {
        #[arg(long, value_enum)]
        op: Op,
        #[arg(long)]
        n: Option<u32>,
        #[arg(long)]
        k: Option<u32>,
        /// Comma-separated sample times of the OU process.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        times: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        intensity: f64,
        #[arg(long, default_value_t = 1.0)]
        corr_time: f64,
        #[arg(long, allow_negative_numbers = true)]
        eta: Option<f64>,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        kappa: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        x0: f64,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        t: Option<f64>,
        /// Fixed quadrature intervals instead of the refined default.
        #[arg(long)]
        intervals: Option<usize>,
    },
    /// Preset benchmark suites.
    Bench {
        #[arg(value_enum)]
        suite: SuiteArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50_000)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Final time of the bistable runs.
        #[arg(long, default_value_t = 40.0)]
        horizon: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    L1,
    Linf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Op {
    Isserlis,
    Hermite,
    Qcumulant,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Fig3,
    Fig4,
    Fig5,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve { config, out } => println!("{}", commands::solve(&config, out)?),
        Command::Mc {
            config,
            out,
            paths,
            seed,
        } => println!("{}", commands::mc(&config, out, paths, seed)?),
        Command::Oracle { config, out } => println!("{}", commands::oracle(&config, out)?),
        Command::Compare { a, b, metric } => {
            let metric = match metric {
                MetricArg::L1 => Metric::L1,
                MetricArg::Linf => Metric::Linf,
            };
            println!("{}", significant(commands::compare(&a, &b, metric)?, 6));
        }
        Command::Moments {
            op,
            n,
            k,
            times,
            intensity,
            corr_time,
            eta,
            kappa,
            x0,
            order,
            t,
            intervals,
        } => {
            let args = MomentArgs {
                n,
                k,
                times,
                intensity,
                corr_time,
                eta,
                kappa,
                x0,
                order,
                t,
                intervals,
            };
            let value = match op {
                Op::Hermite => commands::hermite(&args)?,
                Op::Isserlis => commands::isserlis_moment(&args)?,
                Op::Qcumulant => commands::qcumulant(&args)?,
            };
            println!("{value}");
        }
        Command::Bench {
            suite,
            out,
            paths,
            seed,
            horizon,
        } => {
            let suite = match suite {
                SuiteArg::Fig3 => Suite::Fig3,
                SuiteArg::Fig4 => Suite::Fig4,
                SuiteArg::Fig5 => Suite::Fig5,
            };
            let options = BenchOptions { paths, seed, horizon };
            let summary = bench::run(suite, &out, &options)?;
            print!("{}", summary.render());
            if summary.failed() {
                return Err(CliError::Runtime("one or more benchmark cases failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use moldable::exact_ctmc::DEFAULT_STATE_CAP;
use moldable_cli::commands::{self, RateChoice};
use moldable_cli::config::ExperimentSpec;
use moldable_cli::convergence::Target;
use moldable_cli::{parse, CliError, WORKERS_ENV};

/// Server allocation for moldable jobs: solve, simulate, and check.
#[derive(Parser)]
#[command(name = "moldable", version)]
struct Cli {
    /// Worker threads for replications (defaults to all cores).
    #[arg(long, global = true, env = WORKERS_ENV)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RateArgs {
    /// Normalized arrival rate in (0, 1].
    #[arg(long, conflicts_with_all = ["regime", "n"])]
    lambda: Option<f64>,
    /// Traffic regime `alpha:beta`, used with --n.
    #[arg(long, requires = "n")]
    regime: Option<String>,
    #[arg(long, requires = "regime")]
    n: Option<u64>,
}

impl RateArgs {
    fn choice(&self) -> Result<RateChoice, CliError> {
        match (self.lambda, &self.regime, self.n) {
            (Some(l), _, _) => Ok(RateChoice::Lambda(l)),
            (None, Some(r), Some(n)) => Ok(RateChoice::Regime {
                regime: parse::regime(r)?,
                n,
            }),
            _ => Err(CliError::Validation(
                "give --lambda, or --regime with --n".into(),
            )),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Optimal allocation y*, p*, I*, and D* for one rate.
    Solve {
        /// `1,1.8,2.5`, `linear:d`, or `amdahl:p:d`.
        #[arg(long)]
        speedup: String,
        #[command(flatten)]
        rate: RateArgs,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Simulation campaign over an experiment file.
    Simulate {
        config: PathBuf,
        /// 5 million arrivals per run and 100 replications.
        #[arg(long)]
        paper_scale: bool,
        /// Overrides `output_dir`.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Campaign plus log-log fits of a metric against n.
    #[command(alias = "sweep")]
    Convergence {
        config: PathBuf,
        /// l1_distance, blocking, or exec_gap.
        #[arg(long, default_value = "l1_distance")]
        target: String,
        #[arg(long)]
        paper_scale: bool,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Exact stationary metrics of a small system.
    Exact {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        speedup: String,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value = "greedy_pstar")]
        scheme: String,
        /// Largest state space to enumerate.
        #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
        cap: usize,
    },
    /// Split servers between job classes listed in a file.
    Hetero {
        classes: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Fluid trajectory as CSV.
    Fluid {
        #[arg(long)]
        speedup: String,
        #[arg(long)]
        lambda: f64,
        /// Initial state `x_1,..,x_d` (defaults to empty).
        #[arg(long)]
        x0: Option<String>,
        #[arg(long, default_value_t = 10.0)]
        t_end: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Output file (defaults to stdout).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn load_spec(
    config: &Path,
    paper_scale: bool,
    output_dir: Option<PathBuf>,
) -> Result<ExperimentSpec, CliError> {
    let mut spec = ExperimentSpec::from_file(config)?;
    if paper_scale {
        spec = spec.paper_scale();
    }
    if let Some(dir) = output_dir {
        spec.output_dir = dir;
    }
    Ok(spec)
}

fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Validation(format!(
                "{WORKERS_ENV} must be positive"
            )));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Validation(format!("worker pool: {e}")))?;
    }
    match cli.command {
        Command::Solve { speedup, rate, csv } => {
            commands::solve(
                &parse::speedup(&speedup)?,
                rate.choice()?,
                csv.as_deref(),
                out,
            )?;
        }
        Command::Simulate {
            config,
            paper_scale,
            output_dir,
        } => {
            commands::simulate(&load_spec(&config, paper_scale, output_dir)?, out)?;
        }
        Command::Convergence {
            config,
            target,
            paper_scale,
            output_dir,
        } => {
            let target = Target::from_name(&target).ok_or_else(|| {
                CliError::Validation(format!(
                    "unknown target {target:?} (l1_distance, blocking, exec_gap)"
                ))
            })?;
            commands::convergence(&load_spec(&config, paper_scale, output_dir)?, target, out)?;
        }
        Command::Exact {
            n,
            speedup,
            lambda,
            scheme,
            cap,
        } => {
            commands::exact(
                n,
                &parse::speedup(&speedup)?,
                lambda,
                parse::scheme(&scheme)?,
                cap,
                out,
            )?;
        }
        Command::Hetero { classes, csv } => {
            commands::hetero(&classes, csv.as_deref(), out)?;
        }
        Command::Fluid {
            speedup,
            lambda,
            x0,
            t_end,
            dt,
            csv,
        } => {
            let x0 = x0.as_deref().map(parse::f64_list).transpose()?;
            commands::fluid(
                &parse::speedup(&speedup)?,
                lambda,
                x0,
                t_end,
                dt,
                csv.as_deref(),
                out,
            )?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match run(cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

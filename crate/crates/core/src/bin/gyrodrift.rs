use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gyrodrift::harness::{self, load_field, Mode, Reporter, RunConfig, RunOutcome};
use gyrodrift::Error;

#[derive(Parser)]
#[command(
    name = "gyrodrift",
    version,
    about = "Strongly magnetized Vlasov-Poisson-Fokker-Planck runs and their drift limit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the solver kernels.
    #[arg(long)]
    threads: Option<usize>,
    /// Seed for the optional perturbation of the initial density.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured mode.
    Run(Common),
    /// Run an eps-sweep (the config must list `eps_list`).
    Sweep(Common),
    /// Compare two stored trajectories, or run the config in compare mode.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Trajectory directories to compare (first may hold distributions).
        #[arg(num_args = 0..=2)]
        dirs: Vec<PathBuf>,
    },
    /// Print the header and summary statistics of a field file.
    Dump {
        #[command(flatten)]
        common: Common,
        file: PathBuf,
        /// Also print every value, one per line.
        #[arg(long)]
        values: bool,
    },
    /// Validate a config and print it with defaults applied.
    Validate(Common),
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidGrid(_) => "invalid_grid",
        Error::InvalidParams(_) => "invalid_params",
        Error::InvalidMagnetic(_) => "invalid_magnetic",
        Error::InvalidInput(_) => "invalid_input",
        Error::Neutrality { .. } => "neutrality",
        Error::SupportBreach(_) => "support_breach",
        Error::Negativity { .. } => "negativity",
        Error::NonFinite(_) => "non_finite",
        Error::RotationBound { .. } => "rotation_bound",
        Error::NonConvergence { .. } => "non_convergence",
        Error::InsufficientWindow { .. } => "insufficient_window",
        Error::TimeMismatch { .. } => "time_mismatch",
        Error::Step { source, .. } => error_kind(source),
        Error::Config { .. } => "config",
        Error::FieldFormat(_) => "field_format",
        Error::Locked(_) => "locked",
        Error::Io { .. } => "io",
    }
}

fn report_error(e: &Error) -> ExitCode {
    let mut obj = serde_json::json!({
        "error": error_kind(e),
        "message": e.to_string(),
    });
    if let Error::Step { step, time, .. } = e {
        obj["step"] = (*step).into();
        obj["time"] = (*time).into();
    }
    eprintln!("{obj}");
    match e {
        Error::Config { .. } => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn config_of(common: &Common) -> Result<RunConfig, Error> {
    let path = common.config.as_ref().ok_or_else(|| Error::Config {
        path: "<none>".into(),
        message: "--config is required".into(),
    })?;
    let mut config = RunConfig::load(path)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output_dir = Some(out.clone());
    }
    Ok(config)
}

fn out_dir(config: &RunConfig) -> Result<PathBuf, Error> {
    config.output_dir.clone().ok_or_else(|| Error::Config {
        path: "<cli>".into(),
        message: "no output directory: pass --out or set output_dir".into(),
    })
}

fn set_threads(n: Option<usize>) -> Result<(), Error> {
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config {
                path: "<cli>".into(),
                message: format!("--threads: {e}"),
            })?;
    }
    Ok(())
}

fn summarize(outcome: &RunOutcome, out: &Path) {
    match outcome {
        RunOutcome::Kinetic(k) => println!(
            "kinetic run: {} steps of {:.3e}, sup modulated energy {:.4e}; wrote {}",
            k.steps,
            k.dt,
            k.sup_modulated_energy,
            out.display()
        ),
        RunOutcome::Limit(l) => println!(
            "limit run: {} snapshots; wrote {}",
            l.snapshots.len(),
            out.display()
        ),
        RunOutcome::Compare { kinetic, .. } => {
            let worst = kinetic
                .comparison
                .iter()
                .map(|r| r.l1_phase)
                .fold(0.0, f64::max);
            println!(
                "compare: {} rows, max phase-space L1 {:.4e}; wrote {}",
                kinetic.comparison.len(),
                worst,
                out.display()
            )
        }
        RunOutcome::Sweep(s) => {
            print!("{}", s.to_csv());
            let fmt = |v: Option<bool>| v.map_or("n/a".to_string(), |b| b.to_string());
            println!(
                "modulated energy decreasing: {}; scaled dissipation decreasing: {}; flux remainder decreasing: {}; slope: {}",
                fmt(s.modulated_decreasing),
                fmt(s.dissipation_decreasing),
                fmt(s.flux_decreasing),
                s.slope.map_or("n/a".to_string(), |v| format!("{v:.4}"))
            );
        }
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run(common) => {
            set_threads(common.threads)?;
            let config = config_of(&common)?;
            let out = out_dir(&config)?;
            let outcome = harness::run(
                &config,
                &out,
                Reporter {
                    quiet: common.quiet,
                },
            )?;
            summarize(&outcome, &out);
        }
        Command::Sweep(common) => {
            set_threads(common.threads)?;
            let mut config = config_of(&common)?;
            config.mode = Mode::Sweep;
            config.validate()?;
            let out = out_dir(&config)?;
            let outcome = harness::run(
                &config,
                &out,
                Reporter {
                    quiet: common.quiet,
                },
            )?;
            summarize(&outcome, &out);
        }
        Command::Compare { common, dirs } => {
            set_threads(common.threads)?;
            match dirs.as_slice() {
                [a, b] => {
                    let out = common.out.clone().ok_or_else(|| Error::Config {
                        path: "<cli>".into(),
                        message: "compare needs --out".into(),
                    })?;
                    let rows = harness::compare_dirs(a, b, &out)?;
                    println!("compare: {} rows; wrote {}", rows.len(), out.display());
                }
                [] => {
                    let mut config = config_of(&common)?;
                    config.mode = Mode::Compare;
                    let out = out_dir(&config)?;
                    let outcome = harness::run(
                        &config,
                        &out,
                        Reporter {
                            quiet: common.quiet,
                        },
                    )?;
                    summarize(&outcome, &out);
                }
                _ => {
                    return Err(Error::Config {
                        path: "<cli>".into(),
                        message: "compare takes two trajectory directories or none".into(),
                    })
                }
            }
        }
        Command::Dump { file, values, .. } => {
            let field = load_field(&file)?;
            let min = field.data.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = field.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum = gyrodrift::sum::pairwise(&field.data);
            println!(
                "{}",
                serde_json::json!({
                    "file": file.display().to_string(),
                    "rank": field.dims.len(),
                    "dims": field.dims,
                    "bytes": field.encoded_len(),
                    "min": min,
                    "max": max,
                    "sum": sum,
                })
            );
            if values {
                for v in &field.data {
                    println!("{v:e}");
                }
            }
        }
        Command::Validate(common) => {
            let config = config_of(&common)?;
            println!("{}", config.to_json());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report_error(&e),
    }
}

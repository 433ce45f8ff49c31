//! `caos`: frequency-plan tools and scenario runner for the CAOS simulator.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use caos_core::freq_plan::{
    available_slots, design_plan, format_slot_table, slot_table, validate_plan,
    DEFAULT_MAX_HARMONIC,
};
use caos_core::runner::run;
use caos_core::scenario::{preset, Job, PRESET_NAMES};
use caos_core::Error;
use clap::{Args, Parser, Subcommand};

const EXIT_VALIDATION: u8 = 1;
const EXIT_IO: u8 = 2;

#[derive(Parser)]
#[command(name = "caos", version, about = "CAOS camera simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design, audit and tabulate FDMA carrier plans.
    #[command(subcommand)]
    Plan(PlanCommand),
    /// Run a scenario file.
    Simulate {
        scenario: PathBuf,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Run one of the shipped experiments.
    Reproduce {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(PRESET_NAMES))]
        preset: String,
        /// Print the preset's scenario JSON instead of running it.
        #[arg(long)]
        print_config: bool,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Args)]
struct OutputArgs {
    /// Directory for run artifacts; overrides the scenario's own.
    #[arg(long, short = 'o', env = "CAOS_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    /// Log10 grey scaling for PGM output.
    #[arg(long)]
    log_display: bool,
    /// Do not print the run summary.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Subcommand)]
enum PlanCommand {
    /// Power-of-two carrier ladder for the given window.
    Generate {
        /// Slot duration in seconds.
        #[arg(long = "T", visible_alias = "duration")]
        duration: f64,
        /// ADC exponent, fs = 2^p / T.
        #[arg(long)]
        p: u32,
        /// Lowest carrier 2^(m-1) / T.
        #[arg(long)]
        m: u32,
        /// Number of channels.
        #[arg(long = "P", visible_alias = "channels")]
        channels: usize,
        #[arg(long)]
        json: bool,
    },
    /// Audit an arbitrary carrier set.
    Validate {
        /// FFT bin spacing in Hz.
        #[arg(long)]
        df: f64,
        /// Comma-separated carriers in Hz.
        #[arg(long, short = 'f', value_delimiter = ',', required = true)]
        frequencies: Vec<f64>,
        /// ADC sampling rate in Sps.
        #[arg(long, default_value_t = 65536.0)]
        fs: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_HARMONIC)]
        max_harmonic: u32,
        #[arg(long)]
        json: bool,
    },
    /// Slots still free given the carriers in use.
    Slots {
        /// Base carrier f_a in Hz.
        #[arg(long)]
        fa: f64,
        /// Comma-separated carriers in use, in Hz.
        #[arg(long, value_delimiter = ',')]
        used: Vec<f64>,
        /// Largest multiple of f_a considered.
        #[arg(long, default_value_t = 8)]
        horizon: u64,
        /// Print the greedy selection table with this many rows instead.
        #[arg(long)]
        table: Option<usize>,
    },
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    code(e)
}

fn code(e: &Error) -> ExitCode {
    ExitCode::from(if e.is_io() { EXIT_IO } else { EXIT_VALIDATION })
}

fn plan_command(cmd: PlanCommand) -> ExitCode {
    match cmd {
        PlanCommand::Generate {
            duration,
            p,
            m,
            channels,
            json,
        } => match design_plan(duration, p, m, channels) {
            Ok(plan) if json => match plan.to_json() {
                Ok(text) => {
                    println!("{text}");
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            },
            Ok(plan) => {
                print!("{plan}");
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        PlanCommand::Validate {
            df,
            frequencies,
            fs,
            max_harmonic,
            json,
        } => {
            if !(df > 0.0 && fs > 0.0) {
                return fail(&Error::InvalidParameter("--df and --fs must be > 0".into()));
            }
            let report = validate_plan(&frequencies, df, fs, max_harmonic);
            if json {
                match serde_json::to_string_pretty(&report) {
                    Ok(text) => println!("{text}"),
                    Err(e) => return fail(&e.into()),
                }
            } else {
                print!("{report}");
            }
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VALIDATION)
            }
        }
        PlanCommand::Slots {
            fa,
            used,
            horizon,
            table,
        } => {
            if let Some(rows) = table {
                print!(
                    "{}",
                    format_slot_table(&slot_table(horizon, rows), horizon, Some(fa))
                );
                return ExitCode::SUCCESS;
            }
            match available_slots(fa, &used, horizon) {
                Ok(slots) => {
                    let list: Vec<String> = slots.iter().map(|s| s.to_string()).collect();
                    println!("{}", list.join(", "));
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
    }
}

fn run_job(mut job: Job, out: &OutputArgs) -> ExitCode {
    if out.log_display {
        if let Job::Simulation(s) = &mut job {
            s.outputs.log_display = true;
        }
    }
    match run(&job, out.output_dir.as_deref()) {
        Ok(outcome) => {
            if !out.quiet {
                print!("{}", outcome.report.summary());
                println!("outputs: {}", outcome.output_dir.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn load(path: &Path) -> Result<Job, Error> {
    let text = std::fs::read_to_string(path)?;
    Job::from_json(&text)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match cli.command {
        Command::Plan(cmd) => plan_command(cmd),
        Command::Simulate { scenario, out } => match load(&scenario) {
            Ok(job) => run_job(job, &out),
            Err(e) => {
                eprintln!("error: {}: {e}", scenario.display());
                code(&e)
            }
        },
        Command::Reproduce {
            preset: name,
            print_config,
            out,
        } => match preset(&name) {
            Ok(job) if print_config => match job.to_json() {
                Ok(text) => {
                    println!("{text}");
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            },
            Ok(job) => run_job(job, &out),
            Err(e) => fail(&e),
        },
    }
}

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nerfsim::commands::{cmd_partition, cmd_profile, cmd_render, cmd_sweep, print_rows};
use nerfsim::config::{load, Experiment};
use nerfsim::validate::{format_report, run_checks, Faults, Status};
use nerfsim::{CliError, Format, WORKERS_ENV};
use nerfsim_core::profile::Dataflow;

#[derive(Parser)]
#[command(name = "nerfsim", version, about = "Radiance-field renderer and accelerator simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary format on stdout.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Render the novel view and count its FLOPs.
    Render(Common),
    /// Cycle-level run of both stages; writes trace.json and summary.csv.
    Profile {
        #[command(flatten)]
        common: Common,
        /// Dataflows to profile, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "gen")]
        dataflow: Vec<Dataflow>,
    },
    /// Dump the focused-stage patch queue as JSON lines.
    Partition {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "gen")]
        dataflow: Dataflow,
    },
    /// Profile over several source-view counts in parallel.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "gen")]
        dataflow: Vec<Dataflow>,
        /// Source-view counts.
        #[arg(long, value_delimiter = ',', default_value = "4,6,8,10")]
        views: Vec<usize>,
    },
    /// Run the built-in invariant suites.
    Validate {
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
}

fn open(c: &Common) -> Result<Experiment, CliError> {
    let mut exp = load(&c.config)?;
    if let Some(seed) = c.seed {
        exp.config.seed = seed;
    }
    match &c.out {
        Some(out) => exp.config.output_dir = out.clone(),
        None if exp.config.output_dir.is_relative() => {
            let base = c.config.parent().unwrap_or(Path::new("."));
            exp.config.output_dir = base.join(&exp.config.output_dir);
        }
        None => {}
    }
    Ok(exp)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let stdout = io::stdout();
    match cli.command {
        Command::Render(c) => {
            let s = cmd_render(&open(&c)?)?;
            match c.format {
                Format::Json => serde_json::to_writer_pretty(stdout.lock(), &s).map_err(io::Error::other)?,
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(stdout.lock());
                    w.serialize(&s).map_err(io::Error::other)?;
                    w.flush()?;
                }
            }
            println!();
        }
        Command::Profile { common, dataflow } => {
            let rows = cmd_profile(&open(&common)?, &dataflow)?;
            print_rows(&rows, common.format, stdout.lock())?;
        }
        Command::Partition { common, dataflow } => {
            let exp = open(&common)?;
            let patches = cmd_partition(&exp, dataflow)?;
            writeln!(stdout.lock(), "{} patches -> {}", patches.len(), exp.config.output_dir.join("patches.jsonl").display())?;
        }
        Command::Sweep { common, dataflow, views } => {
            let rows = cmd_sweep(&open(&common)?, &views, &dataflow)?;
            print_rows(&rows, common.format, stdout.lock())?;
        }
        Command::Validate { inject_fault } => {
            let faults = match inject_fault.as_deref() {
                None => Faults::default(),
                Some("interleave") => Faults { faulty_interleave: true },
                Some(other) => return Err(CliError::Usage(format!("unknown fault `{other}`"))),
            };
            let results = run_checks(&faults);
            print!("{}", format_report(&results));
            let failed: Vec<&str> = results.iter().filter(|r| r.status == Status::Fail).map(|r| r.name).collect();
            if !failed.is_empty() {
                return Err(CliError::Validation(failed.join(", ")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("nerfsim: cannot size the worker pool: {e}");
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nerfsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pcs_core::error::PcsError;
use pcs_core::harness;
use pcs_core::schedule::{self, PulseSchedule, Severity};
use pcs_core::trace::{self, Table};

const EXIT_CONFIG: u8 = 64;

#[derive(Parser)]
#[command(name = "pcs", version, about = "Supervisory plasma control loop on a surrogate plant")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a pulse schedule and write the trace.
    Run {
        schedule: PathBuf,
        /// Trace file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override a parameter, e.g. `--set plant.tau_n=0.3`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Stop after this many seconds.
        #[arg(long)]
        until: Option<f64>,
    },
    /// Re-run the supervisor over a trace's event columns.
    Replay {
        trace: PathBuf,
        schedule: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a schedule and print diagnostics.
    Validate { schedule: PathBuf },
}

fn load(path: &Path) -> Result<PulseSchedule, PcsError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    schedule::parse(&text)
}

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn fail(err: PcsError) -> ExitCode {
    match &err {
        PcsError::Validation(msgs) => {
            for m in msgs {
                eprintln!("{m}");
            }
            eprintln!("{err}");
        }
        _ => eprintln!("error: {err}"),
    }
    let code = match err {
        PcsError::Config(_) | PcsError::Parse(_) | PcsError::Validation(_) => EXIT_CONFIG,
        _ => 1,
    };
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Cmd::Validate { schedule } => {
            let ps = match load(&schedule) {
                Ok(ps) => ps,
                Err(e) => return fail(e),
            };
            let diags = schedule::validate(&ps);
            for d in &diags {
                println!("{d}");
            }
            let n = diags.iter().filter(|d| d.severity == Severity::Error).count();
            println!("{n} error(s), {} warning(s)", diags.len() - n);
            if n > 0 {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            }
        }
        Cmd::Run {
            schedule,
            out,
            overrides,
            until,
        } => {
            let mut ps = match load(&schedule) {
                Ok(ps) => ps,
                Err(e) => return fail(e),
            };
            for o in &overrides {
                if let Err(e) = ps.apply_override(o) {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            }
            let sink = match output(out.as_deref()) {
                Ok(w) => w,
                Err(e) => return fail(e.into()),
            };
            match harness::run(&ps, until, sink) {
                Ok(summary) => {
                    if let Some(t) = summary.disrupted_at {
                        eprintln!("disrupted at t={t} s");
                    }
                    eprintln!("{} rows, {:?}", summary.rows, summary.outcome);
                    ExitCode::from(summary.outcome.exit_code() as u8)
                }
                Err(e) => fail(e),
            }
        }
        Cmd::Replay {
            trace: trace_path,
            schedule,
            out,
        } => {
            let result = (|| {
                let ps = load(&schedule)?;
                let file = File::open(&trace_path).map_err(|e| {
                    io::Error::new(e.kind(), format!("{}: {e}", trace_path.display()))
                })?;
                let table = Table::read(file)?;
                let decisions = trace::replay(&table, &ps)?;
                let mut sink = output(out.as_deref())?;
                sink.write_all(decisions.to_csv()?.as_bytes())?;
                sink.flush()?;
                Ok(())
            })();
            match result {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fednl_cli::{compare_command, load_config, reference_command, run_command, selftest, CliError, DEFAULT_THRESHOLDS};

#[derive(Parser)]
#[command(name = "fednl", version, about = "Federated Newton-type methods with compressed Hessian learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config; writes the trace CSV and a JSON summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Trace path; overrides `output.trace`.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Summary path; overrides `output.summary`.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Compute x* and f(x*) with 20 Newton steps and cache them as JSON.
    Reference {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "reference.json")]
        output: PathBuf,
    },
    /// Bits per node each trace needs to reach gap thresholds.
    Compare {
        #[arg(required = true, num_args = 2..)]
        traces: Vec<PathBuf>,
        /// Gap threshold; repeat for several. Defaults to 1e-4, 1e-8, 1e-10.
        #[arg(long = "gap")]
        gaps: Vec<f64>,
    },
    /// Property checks over every module and the golden traces.
    Selftest {
        #[arg(long, default_value_os_t = selftest::default_golden_dir())]
        golden_dir: PathBuf,
        /// Rewrite the golden CSVs instead of comparing.
        #[arg(long)]
        bless: bool,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, output, summary } => {
            let cfg = load_config(&config)?;
            let s = run_command(&cfg, output.as_deref(), summary.as_deref())?;
            println!(
                "{}: {} rounds, final gap {:.3e}, bits/node up {:.3e} down {:.3e}",
                s.method, s.rounds, s.final_gap, s.bits_up_total, s.bits_down_total
            );
        }
        Command::Reference { config, output } => {
            let cfg = load_config(&config)?;
            let r = reference_command(&cfg, &output)?;
            println!("f* = {:.16e}, ‖∇f(x*)‖ = {:.3e}, written to {}", r.f_star, r.grad_norm, output.display());
        }
        Command::Compare { traces, gaps } => {
            let gaps = if gaps.is_empty() { DEFAULT_THRESHOLDS.to_vec() } else { gaps };
            compare_command(&traces, &gaps, std::io::stdout().lock())?;
        }
        Command::Selftest { golden_dir, bless } => selftest::selftest(&golden_dir, bless, std::io::stdout().lock())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! `qllg`: run quantum LLG trajectories, convergence studies and parameter
//! sweeps from a JSON config.
//!
//! Exit status is 0 on success, 1 for configuration or usage errors and 2
//! for numerical failures.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use qllg::integrators::PRESET_NAMES;
use qllg::oracle::Reference;

use crate::commands::{ConvergeRequest, Family};
use crate::config::{RunConfig, SweepParam};
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "qllg", version, about = "Quantum Landau-Lifshitz-Gilbert spin dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate one trajectory and write `<path>.csv` plus a `<path>.json` sidecar.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Directory for outputs, overriding the directory of `output.path`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure errors against a reference solution for several step sizes.
    Converge {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated step sizes in ps.
        #[arg(long)]
        h: String,
        #[arg(long, value_enum, default_value_t = ReferenceArg::Exact)]
        reference: ReferenceArg,
        /// Comma-separated tableau names.
        #[arg(long, default_value = "euler,rk2,rk3,rk4")]
        methods: String,
        /// Method family; defaults to `dynamics.conservative`.
        #[arg(long, value_enum)]
        family: Option<FamilyArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one trajectory per parameter value.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// J_meV, D_meV, B_magnitude or kappa.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ReferenceArg {
    Exact,
    Fine,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FamilyArg {
    Conservative,
    Standard,
    Both,
}

fn parse_list(key: &str, text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| CliError::Config { key: key.into(), message: format!("`{s}` is not a finite number") })
        })
        .collect()
}

fn run(command: Command) -> Result<PathBuf, CliError> {
    match command {
        Command::Simulate { config, out } => commands::simulate(&RunConfig::load(&config)?, out.as_deref()),
        Command::Converge { config, h, reference, methods, family, out } => {
            let cfg = RunConfig::load(&config)?;
            let methods: Vec<String> =
                methods.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            if let Some(bad) = methods.iter().find(|m| !PRESET_NAMES.contains(&m.as_str())) {
                return Err(CliError::Config { key: "--methods".into(), message: format!("unknown method `{bad}`") });
            }
            let request = ConvergeRequest {
                step_sizes: parse_list("--h", &h)?,
                reference: match reference {
                    ReferenceArg::Exact => Reference::ExactRank1,
                    ReferenceArg::Fine => Reference::FineRk4,
                },
                methods,
                family: family.map(|f| match f {
                    FamilyArg::Conservative => Family::Conservative,
                    FamilyArg::Standard => Family::Standard,
                    FamilyArg::Both => Family::Both,
                }),
            };
            commands::converge(&cfg, &request, out.as_deref())
        }
        Command::Sweep { config, param, values, out } => {
            let param = SweepParam::parse(&param)?;
            let values = parse_list("--values", &values)?;
            commands::sweep(&RunConfig::load(&config)?, param, &values, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

//! `elastreg` batch entry point.
//!
//! Exit statuses:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success: converged, or every certificate passed |
//! | 1 | `verify`/`gradcheck`: some certificate failed |
//! | 2 | `register`/`template`: iteration limit or stalled line search |
//! | 3 | infeasible state or template subdomain outside the scene |
//! | 4 | unreadable input or unwritable output |
//! | 5 | invalid config, unknown pattern or unknown experiment |

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Failure, EXIT_CONFIG};
use config::{ConfigError, RunConfig, SCHEMA};

#[derive(Parser)]
#[command(
    name = "elastreg",
    version,
    about = "Elastic image comparison with sliding boundaries"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Register image1 onto image2 (or a synthetic pair).
    Register,
    /// Run verification experiments and write certificates.
    Verify,
    /// Place a template inside a scene by a similarity and an inner deformation.
    Template,
    /// Print ψ, dψ/dA and the stress deviation at `matrix`.
    PsiProbe,
    /// Run the gradient finite-difference certificate.
    Gradcheck,
    /// Print the config schema with defaults.
    Schema,
}

/// Overrides applied on top of the config file.
#[derive(Args)]
struct Flags {
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<String>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<String>,
    #[arg(long, global = true, value_name = "PATTERN")]
    synthetic: Option<String>,
    #[arg(long, global = true, value_name = "N")]
    resolution: Option<String>,
    #[arg(long, global = true, value_name = "N")]
    levels: Option<String>,
    #[arg(long, global = true, value_name = "X")]
    alpha: Option<String>,
    #[arg(long, global = true, value_name = "8a|8b")]
    mismatch: Option<String>,
    #[arg(long, global = true, value_name = "sv|fluid")]
    family: Option<String>,
    #[arg(long = "h2-weight", global = true, value_name = "X")]
    h2_weight: Option<String>,
    /// Any schema key, e.g. `--set tolerance=0`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn build_config(flags: &Flags) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &flags.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let named = [
        ("out", &flags.out),
        ("seed", &flags.seed),
        ("synthetic", &flags.synthetic),
        ("resolution", &flags.resolution),
        ("levels", &flags.levels),
        ("alpha", &flags.alpha),
        ("mismatch-form", &flags.mismatch),
        ("family", &flags.family),
        ("h2-weight", &flags.h2_weight),
    ];
    for (key, value) in named {
        if let Some(v) = value {
            cfg.set(key, v.clone())?;
        }
    }
    for kv in &flags.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| ConfigError::Invalid(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn run(command: Command, flags: &Flags) -> Result<u8, Failure> {
    let cfg = build_config(flags)?;
    match command {
        Command::Register => commands::register(&cfg),
        Command::Verify => commands::verify(&cfg),
        Command::Template => commands::template(&cfg),
        Command::PsiProbe => commands::psi_probe(&cfg),
        Command::Gradcheck => commands::gradcheck(&cfg),
        Command::Schema => {
            for (key, default, meaning) in SCHEMA {
                println!("{key} = {default:<20} # {meaning}");
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command, &cli.flags) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("elastreg: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

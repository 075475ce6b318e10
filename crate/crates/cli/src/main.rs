use std::path::PathBuf;
use std::process::ExitCode;

use chainflow_cli::{cmd_macro, cmd_maxwell, cmd_micro, cmd_sample_table, exit_code, RunConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chainflow", version, about = "Particle-chain multiscale two-phase flow solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; omitted sections take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overrides `io.out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write averaged micro fields, overrides `io.dump_fields`.
    #[arg(long, global = true)]
    dump_fields: bool,
    /// Sample store CSV, overrides `io.store`.
    #[arg(long, global = true)]
    store: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Maxwell equilibrium of the configured EOS.
    Maxwell,
    /// One microscale Riemann problem on `io.micro_input`.
    Micro,
    /// Gated multiscale run.
    Macro,
    /// Batch micro evaluations of `io.sample_inputs` into the store.
    SampleTable,
    /// Print the effective configuration.
    Config,
}

fn run(cli: Cli) -> chainflow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = cli.out {
        cfg.io.out_dir = o;
    }
    if cli.dump_fields {
        cfg.io.dump_fields = true;
    }
    if cli.store.is_some() {
        cfg.io.store = cli.store;
    }
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Maxwell => cmd_maxwell(&cfg, &mut out).map(drop),
        Command::Micro => cmd_micro(&cfg, &mut out).map(drop),
        Command::Macro => cmd_macro(&cfg, &mut out).map(drop),
        Command::SampleTable => cmd_sample_table(&cfg, &mut out).map(drop),
        Command::Config => {
            println!("{}", cfg.to_json());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

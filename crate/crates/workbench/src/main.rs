use clap::{Parser, Subcommand};
use ghostflow_workbench::{run_stage, Error, Stage, WorkbenchConfig};
use std::path::PathBuf;
use std::process::ExitCode;

/// Particle-to-continuum transport workbench.
#[derive(Parser)]
#[command(name = "ghostflow", version)]
struct Cli {
    /// Configuration file; defaults are used for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides run.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Single-threaded, bit-reproducible execution.
    #[arg(long, global = true)]
    serial: bool,
    /// Overrides run.output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw Gibbs samples into checkpoint files.
    Sample,
    /// Integrate a checkpoint and check the conservation gates.
    Md {
        /// Starting checkpoint; defaults to sample_0.chk in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Equilibrium ensemble, transport coefficients and consistency reports.
    Coefficients,
    /// Integrate the continuum equations.
    Solve,
    /// Verify checksums and summarise the gates.
    Report,
}

fn config(cli: &Cli) -> Result<WorkbenchConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => WorkbenchConfig::load(path)?,
        None => WorkbenchConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.serial {
        cfg.parallel = false;
    }
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stage = match &cli.command {
        Command::Sample => Stage::Sample,
        Command::Md { checkpoint } => Stage::Md { checkpoint: checkpoint.clone() },
        Command::Coefficients => Stage::Coefficients,
        Command::Solve => Stage::Solve,
        Command::Report => Stage::Report,
    };
    let result = config(&cli).and_then(|cfg| run_stage(&cfg, &stage));
    match result {
        Ok(gates) => {
            for g in gates {
                println!("PASS {} {} = {:e} (limit {:e})", g.stage, g.name, g.value, g.threshold);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use romopt::config::PipelineConfig;
use romopt::error::{Error, Result};
use romopt::pipeline;
use romopt::rom::Backend;

#[derive(Parser)]
#[command(name = "romopt", version, about = "Reduced-order structural optimization pipeline")]
struct Cli {
    #[command(subcommand)]
    stage: Stage,
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long, global = true)]
    rank: Option<usize>,
    #[arg(long, global = true)]
    budget: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Stage {
    /// Draw training and test designs, write the mesh.
    Sample,
    /// Run the full-order model on every design (resumable).
    Simulate,
    /// Fit the reduced model.
    Fit,
    /// Field errors on the test designs.
    Validate,
    /// Enrichment loop on the reduced model.
    Optimize,
    /// Charts and tables from earlier stages.
    Report,
}

#[derive(ValueEnum, Clone, Copy)]
enum BackendArg {
    Gpr,
    Nargpas,
}

fn run(cli: Cli) -> Result<()> {
    let path = cli.config.ok_or_else(|| Error::Argument("--config <file> is required".into()))?;
    let mut cfg = PipelineConfig::load(&path)?;
    if let Some(s) = cli.seed {
        cfg.run.seed = s;
    }
    if let Some(b) = cli.backend {
        cfg.rom.backend = match b {
            BackendArg::Gpr => Backend::Gpr,
            BackendArg::Nargpas => Backend::Nargpas,
        };
    }
    if let Some(r) = cli.rank {
        cfg.rom.rank = r;
        cfg.rom.energy = None;
    }
    if let Some(b) = cli.budget {
        cfg.optim.budget = b;
    }
    if let Some(o) = cli.out {
        cfg.run.out_dir = std::env::current_dir()?.join(o);
    }
    let backend = cfg.rom.backend;
    match cli.stage {
        Stage::Sample => pipeline::cmd_sample(&cfg).map(drop),
        Stage::Simulate => pipeline::cmd_simulate(&cfg).map(drop),
        Stage::Fit => pipeline::cmd_fit(&cfg, backend).map(drop),
        Stage::Validate => pipeline::cmd_validate(&cfg, backend).map(drop),
        Stage::Optimize => pipeline::cmd_optimize(&cfg, backend).map(drop),
        Stage::Report => pipeline::cmd_report(&cfg).map(drop),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error[argument]: {first}");
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.kind(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

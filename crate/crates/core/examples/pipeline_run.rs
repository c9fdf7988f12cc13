//! Every pipeline stage from a config file, as the `romopt` binary runs them.
//!
//! `cargo run --release --example pipeline_run -- configs/demo.toml`

use std::path::PathBuf;

use romopt::config::PipelineConfig;
use romopt::pipeline::{run_all, Layout};

fn main() -> romopt::error::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/demo.toml")));
    let cfg = PipelineConfig::load(&path)?;
    let result = run_all(&cfg)?;
    println!("incumbent {:.6e}, {:.3}% below the best initial design", result.incumbent.f_obj, 100.0 * result.relative_reduction());
    println!("report in {}", Layout::new(cfg.out_dir()).report().display());
    Ok(())
}

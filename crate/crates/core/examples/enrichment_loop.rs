//! Reduced-model optimization with full-order enrichment between rounds.

use romopt::optim::{enrich_and_iterate, BoConfig, Database, LoopConfig};
use romopt::params::{maximin_design, ParameterSpace};
use romopt::pod::Truncation;
use romopt::rom::{Backend, RomConfig};
use romopt::structeval::{PenaltyConfig, YieldThresholds};
use romopt::synthfom::{build_default_mesh, Fom};

fn main() -> romopt::error::Result<()> {
    let space = ParameterSpace::hull16(0.5);
    let fom = Fom::new(build_default_mesh(&space, 16, 18)?);
    let design = maximin_design(&space, 40, 4, 2)?;
    let fields = design.points.iter().map(|p| fom.solve(p).map(|r| r.stress)).collect::<Result<Vec<_>, _>>()?;
    let (th, pen) = (YieldThresholds::default(), PenaltyConfig::default());
    let db = Database::from_fields(&fom.mesh, design.points.clone(), fields, &th, &pen)?;

    let mut rom = RomConfig::default().with_restarts(2);
    rom.truncation = Truncation::Rank(6);
    let cfg = LoopConfig {
        backend: Backend::Nargpas,
        rom,
        bo: BoConfig { budget: 60, pool_uniform: 1024, pool_local: 128, ..BoConfig::default() },
        k_enrich: 2,
        max_rounds: 3,
        ..LoopConfig::default()
    };
    let before = fom.calls();
    let out = enrich_and_iterate(db, &fom, &space, &cfg, 4)?;
    print!("{}", out.summary_csv());
    println!("converged {}, reduction {:.3}%, extra solves {}", out.converged, 100.0 * out.relative_reduction(), fom.calls() - before);
    Ok(())
}

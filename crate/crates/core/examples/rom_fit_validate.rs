//! Fit POD-GPR and POD-NARGPAS on the same snapshots and compare test errors.

use romopt::params::{maximin_design, ParameterSpace};
use romopt::rom::{fit_rom_pair, rom_error, RomConfig};
use romopt::store::sets_from_fields;
use romopt::synthfom::{build_default_mesh, Component, Fom, LoadCase};

fn main() -> romopt::error::Result<()> {
    let space = ParameterSpace::hull16(0.5);
    let fom = Fom::new(build_default_mesh(&space, 16, 18)?);
    let solve_all = |pts: &[Vec<f64>]| -> romopt::error::Result<Vec<_>> { pts.iter().map(|p| fom.solve(p).map(|r| r.stress)).collect() };
    let train = maximin_design(&space, 60, 4, 1)?;
    let test = maximin_design(&space, 20, 1, 2)?;
    let sets = sets_from_fields(&train.points, &solve_all(&train.points)?)?;
    let test_sets = sets_from_fields(&test.points, &solve_all(&test.points)?)?;

    let cfg = RomConfig::default().with_restarts(2);
    let (gpr, nargpas) = fit_rom_pair(&sets, fom.mesh.n_elements(), &LoadCase::ALL, &space.normalizer(), &cfg, 9)?;
    println!("ranks {:?}", gpr.ranks());
    let (a, b) = (rom_error(&gpr, &test_sets)?, rom_error(&nargpas, &test_sets)?);
    for (k, c) in Component::ALL.iter().enumerate() {
        println!("{:>4}: GPR {:.3e}  NARGPAS {:.3e}", c.tag(), a.component_summary(k).mean, b.component_summary(k).mean);
    }
    println!(" all: GPR {:.3e}  NARGPAS {:.3e}", a.summary().mean, b.summary().mean);

    let dir = std::env::temp_dir().join("romopt-example-bundle");
    nargpas.save(&dir)?;
    println!("saved to {}, digest {}", dir.display(), nargpas.digest()?);
    Ok(())
}

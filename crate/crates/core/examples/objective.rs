//! Penalized objective and constraint statistics over a design sample.

use romopt::params::{maximin_design, ParameterSpace};
use romopt::structeval::{constraint_histograms, evaluate, objective, PenaltyConfig, YieldThresholds};
use romopt::synthfom::{build_default_mesh, Fom};

fn main() -> romopt::error::Result<()> {
    let pen = PenaltyConfig::default();
    println!("f_obj(1e5 kg, N_y = 210, N_b = 100) = {}", objective(1.0e5, 210.0, 100.0, &pen));

    let space = ParameterSpace::hull16(0.5);
    let fom = Fom::new(build_default_mesh(&space, 64, 18)?);
    let th = YieldThresholds::default();
    let design = maximin_design(&space, 50, 4, 8)?;
    let evals = design
        .points
        .iter()
        .map(|p| fom.solve(p).and_then(|r| evaluate(&fom.mesh, p, &r.stress, &th, &pen)))
        .collect::<Result<Vec<_>, _>>()?;
    let best = evals.iter().min_by(|a, b| a.f_obj.total_cmp(&b.f_obj)).unwrap();
    println!("best sampled design: mass {:.4e} kg, N_y {}, N_b {}, f_obj {:.6e}", best.mass_kg, best.n_yield, best.n_buckle, best.f_obj);
    let h = constraint_histograms(&evals, &pen, 8)?;
    println!("yield-feasible fraction {:.2}", h.valid_fraction);
    print!("{}", h.yielded.to_csv());
    Ok(())
}

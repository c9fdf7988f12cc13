//! POD of stress snapshots: singular value decay and projection error.

use romopt::params::{maximin_design, ParameterSpace};
use romopt::pod::{compute_pod, residual_energy, Truncation};
use romopt::store::sets_from_fields;
use romopt::synthfom::{build_default_mesh, Fom};

fn main() -> romopt::error::Result<()> {
    let space = ParameterSpace::hull16(0.5);
    let fom = Fom::new(build_default_mesh(&space, 32, 18)?);
    let design = maximin_design(&space, 60, 4, 3)?;
    let fields = design.points.iter().map(|p| fom.solve(p).map(|r| r.stress)).collect::<Result<Vec<_>, _>>()?;
    let sets = sets_from_fields(&design.points, &fields)?;

    for set in &sets {
        let basis = compute_pod(set, Truncation::Energy(0.999_999))?;
        let tail = residual_energy(&basis, &set.snapshots)?;
        let head: Vec<String> = basis.spectrum.iter().take(5).map(|s| format!("{s:.2e}")).collect();
        println!("{:>4}: rank {:2} for 99.9999% energy, residual {tail:.2e}, sigma {}", set.component, basis.rank(), head.join(" "));
    }
    Ok(())
}

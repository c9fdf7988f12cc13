//! One full-order solve of the synthetic hull at its default thicknesses.

use romopt::params::ParameterSpace;
use romopt::synthfom::{build_default_mesh, Component, Fom};

fn main() -> romopt::error::Result<()> {
    let space = ParameterSpace::hull16(0.5);
    let mesh = build_default_mesh(&space, 64, 18)?;
    println!("{} elements, bending moment {:.3e} N mm", mesh.n_elements(), mesh.bending_moment);

    let fom = Fom::new(mesh);
    let r = fom.solve(&space.defaults())?;
    println!("mass {:.1} kg, solved in {:.2e} s", r.mass_kg, r.wall_time_s);
    for c in Component::ALL {
        let v = r.stress.component(c);
        let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        println!("{:>4}: [{lo:9.2}, {hi:9.2}] MPa", c.tag());
    }
    println!("solver calls: {}", fom.calls());
    Ok(())
}

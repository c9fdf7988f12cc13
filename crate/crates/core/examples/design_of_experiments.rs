//! Maximin selection over random candidate designs on the discrete hull grid.

use romopt::params::{generate_candidate_sets, maximin_select, min_pairwise_distance, ParameterSpace};

fn main() -> romopt::error::Result<()> {
    let space = ParameterSpace::hull16(0.5);
    println!("{} parameters, {} grid points", space.len(), space.cardinality());

    let sets = generate_candidate_sets(&space, 100, 16, 42)?;
    for (k, s) in sets.iter().enumerate().take(4) {
        println!("candidate {k}: min pairwise distance {:.3} mm", min_pairwise_distance(s)?);
    }
    let best = maximin_select(&sets)?;
    println!("selected set: min pairwise distance {:.3} mm", min_pairwise_distance(&best)?);
    println!("first design: {:?}", best.points[0]);
    Ok(())
}

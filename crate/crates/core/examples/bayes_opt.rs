//! Expected-improvement search on a two-parameter grid.

use romopt::optim::{bayes_optimize_with, BoConfig};
use romopt::params::{Dim, ParameterSpace};
use romopt::structeval::ObjectiveEvaluation;

fn main() -> romopt::error::Result<()> {
    let space = ParameterSpace::new(vec![Dim::new("a", "left", 10.0, 5.0, 15.0, 0.5), Dim::new("b", "right", 10.0, 5.0, 15.0, 0.5)])?;
    let f = |mu: &[f64]| (mu[0] - 7.3).powi(2) + 2.0 * (mu[1] - 12.1).powi(2) + 0.3 * (mu[0] * mu[1]).sin();
    let objective = |mu: &[f64]| Ok(ObjectiveEvaluation { mass_kg: 0.0, n_yield: 0, n_buckle: 0, f_obj: f(mu), per_load_case: vec![] });
    let cfg = BoConfig { budget: 40, pool_uniform: 256, pool_local: 64, ..BoConfig::default() };
    let run = bayes_optimize_with(objective, &space, vec![], &cfg, 1, 3)?;
    let best = run.incumbent().unwrap();
    println!("best {:?} -> {:.4} after {} evaluations", best.mu, best.f_obj, run.history.len());
    let trace = run.incumbent_trace();
    println!("incumbent every 10 evaluations: {:?}", trace.iter().step_by(10).map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>());
    Ok(())
}

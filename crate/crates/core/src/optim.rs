//! Discrete Bayesian optimization of the penalized objective on the thickness
//! grid, and the outer loop that enriches the snapshot database with the
//! best designs found on the reduced model.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{arg, Result};
use crate::gp::{condition, fit_gp, GpConfig, GpModel};
use crate::params::ParameterSpace;
use crate::rng::{derive_seed, stream};
use crate::rom::{fit_rom, Backend, RomBundle, RomConfig};
use crate::store::sets_from_fields;
use crate::structeval::{evaluate, ObjectiveEvaluation, PenaltyConfig, YieldThresholds};
use crate::synthfom::{Fom, HullMesh, StressField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Rom,
    Fom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mu: Vec<f64>,
    pub f_obj: f64,
    pub mass_kg: f64,
    pub n_yield: usize,
    pub n_buckle: usize,
    pub source: Source,
    pub round: usize,
}

impl Evaluation {
    pub fn new(mu: &[f64], e: &ObjectiveEvaluation, source: Source, round: usize) -> Self {
        Evaluation { mu: mu.to_vec(), f_obj: e.f_obj, mass_kg: e.mass_kg, n_yield: e.n_yield, n_buckle: e.n_buckle, source, round }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoConfig {
    pub budget: usize,
    pub pool_uniform: usize,
    pub pool_local: usize,
    /// Hyperparameters are refit after this many new evaluations; in between
    /// the surrogate is only re-conditioned.
    pub refit_every: usize,
    pub surrogate: GpConfig,
    pub refit_restarts: usize,
}

impl Default for BoConfig {
    fn default() -> Self {
        BoConfig {
            budget: 600,
            pool_uniform: 4096,
            pool_local: 512,
            refit_every: 8,
            surrogate: GpConfig::default(),
            refit_restarts: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationRun {
    pub budget: usize,
    /// Initial database entries followed by the new evaluations.
    pub history: Vec<Evaluation>,
    pub n_initial: usize,
}

impl OptimizationRun {
    pub fn incumbent(&self) -> Option<&Evaluation> {
        best(&self.history)
    }

    pub fn new_evaluations(&self) -> &[Evaluation] {
        &self.history[self.n_initial..]
    }

    /// Best value after each entry of the history.
    pub fn incumbent_trace(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.history.iter().map(|e| {
            best = best.min(e.f_obj);
            best
        }).collect()
    }
}

fn best(h: &[Evaluation]) -> Option<&Evaluation> {
    h.iter().fold(None, |acc: Option<&Evaluation>, e| match acc {
        Some(b) if b.f_obj <= e.f_obj => Some(b),
        _ => Some(e),
    })
}

/// Expected improvement below `best` for a Gaussian prediction.
pub fn expected_improvement(mean: f64, sd: f64, best: f64) -> f64 {
    if !(sd > 0.0) {
        return (best - mean).max(0.0);
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    let z = (best - mean) / sd;
    ((best - mean) * n.cdf(z) + sd * n.pdf(z)).max(0.0)
}

fn key(space: &ParameterSpace, mu: &[f64]) -> Vec<u32> {
    space.levels_of(mu).unwrap_or_else(|| space.levels_of(&space.snap(mu)).expect("snapped point is on the grid"))
}

fn candidate_pool<R: Rng>(space: &ParameterSpace, incumbent: &[u32], cfg: &BoConfig, rng: &mut R) -> Vec<Vec<u32>> {
    let d = space.len();
    let mut pool: Vec<Vec<u32>> = (0..cfg.pool_uniform).map(|_| space.random_levels(rng)).collect();
    let p_move = (2.0 / d as f64).min(1.0);
    for _ in 0..cfg.pool_local {
        let mut c = incumbent.to_vec();
        let forced = rng.gen_range(0..d);
        for (k, dim) in space.dims().iter().enumerate() {
            if k == forced || rng.gen_bool(p_move) {
                let top = dim.levels() as i64 - 1;
                let step = rng.gen_range(1..=3) * if rng.gen_bool(0.5) { 1 } else { -1 };
                c[k] = (c[k] as i64 + step).clamp(0, top) as u32;
            }
        }
        pool.push(c);
    }
    pool
}

/// Picks the pool entry with the largest expected improvement. Candidates
/// are visited in order of an upper bound that uses the prior standard
/// deviation, so exact variances are only computed where they can matter.
fn maximize_ei(model: &GpModel, units: &[Vec<f64>], best_f: f64) -> Result<usize> {
    let sd_max = model.prior_variance().sqrt();
    let means: Vec<f64> = units.iter().map(|u| model.predict_mean(u)).collect::<Result<_>>()?;
    let bounds: Vec<f64> = means.iter().map(|&m| expected_improvement(m, sd_max, best_f)).collect();
    let mut order: Vec<usize> = (0..units.len()).collect();
    order.sort_by(|&a, &b| bounds[b].total_cmp(&bounds[a]).then(a.cmp(&b)));
    let mut chosen: Option<(usize, f64)> = None;
    for &i in &order {
        if let Some((_, v)) = chosen {
            if bounds[i] <= v {
                break;
            }
        }
        let (m, var) = model.predict(&units[i])?;
        let ei = expected_improvement(m, var.sqrt(), best_f);
        let better = match chosen {
            None => true,
            Some((j, v)) => ei > v || (ei == v && i < j),
        };
        if better {
            chosen = Some((i, ei));
        }
    }
    let (i, ei) = chosen.expect("pool is never empty");
    if ei > 0.0 {
        return Ok(i);
    }
    // nothing promises improvement: fall back to the lowest mean
    Ok((0..units.len()).min_by(|&a, &b| means[a].total_cmp(&means[b]).then(a.cmp(&b))).unwrap())
}

/// Bayesian optimization of an arbitrary objective over the grid of `space`.
/// `initial` seeds the surrogate and is kept at the head of the history.
pub fn bayes_optimize_with<F>(mut objective: F, space: &ParameterSpace, initial: Vec<Evaluation>, cfg: &BoConfig, round: usize, seed: u64) -> Result<OptimizationRun>
where
    F: FnMut(&[f64]) -> Result<ObjectiveEvaluation>,
{
    if cfg.budget == 0 {
        return arg("budget must be at least 1");
    }
    let norm = space.normalizer();
    let n_initial = initial.len();
    let mut history = initial;
    let mut seen: HashSet<Vec<u32>> = history.iter().map(|e| key(space, &e.mu)).collect();
    let mut rng = stream(seed, 0);
    let mut model: Option<GpModel> = None;
    let mut since_refit = 0;
    for step in 0..cfg.budget {
        if seen.len() as u128 >= space.cardinality() {
            log::warn!("grid exhausted after {step} evaluations");
            break;
        }
        let choice: Vec<u32> = if history.len() < 2 {
            loop {
                let c = space.random_levels(&mut rng);
                if !seen.contains(&c) {
                    break c;
                }
            }
        } else {
            let x: Vec<Vec<f64>> = history.iter().map(|e| norm.to_unit(&e.mu)).collect();
            let y: Vec<f64> = history.iter().map(|e| e.f_obj).collect();
            let m = match model.take() {
                Some(prev) if since_refit < cfg.refit_every => condition(prev.kernel().clone(), prev.noise_variance(), &x, &y)?,
                prev => {
                    since_refit = 0;
                    let gcfg = match prev {
                        Some(p) => GpConfig {
                            restarts: cfg.refit_restarts,
                            seed: derive_seed(seed, 1 + step as u64),
                            warm_start: Some((p.kernel().clone(), p.noise_variance())),
                            ..cfg.surrogate.clone()
                        },
                        None => GpConfig { seed: derive_seed(seed, 1 + step as u64), ..cfg.surrogate.clone() },
                    };
                    fit_gp(&x, &y, &gcfg)?
                }
            };
            let inc = key(space, &best(&history).expect("history is non-empty").mu);
            let mut pool = candidate_pool(space, &inc, cfg, &mut rng);
            pool.retain(|c| !seen.contains(c));
            pool.sort();
            pool.dedup();
            let choice = if pool.is_empty() {
                loop {
                    let c = space.random_levels(&mut rng);
                    if !seen.contains(&c) {
                        break c;
                    }
                }
            } else {
                let units: Vec<Vec<f64>> = pool.iter().map(|c| norm.to_unit(&space.point_at(c))).collect();
                pool.swap_remove(maximize_ei(&m, &units, y.iter().copied().fold(f64::INFINITY, f64::min))?)
            };
            model = Some(m);
            choice
        };
        let mu = space.point_at(&choice);
        let e = objective(&mu)?;
        history.push(Evaluation::new(&mu, &e, Source::Rom, round));
        seen.insert(choice);
        since_refit += 1;
    }
    Ok(OptimizationRun { budget: cfg.budget, history, n_initial })
}

/// Optimization on the reduced model: each evaluation predicts the stress
/// field with `bundle` and scores it with the structural criteria.
#[allow(clippy::too_many_arguments)]
pub fn bayes_optimize(bundle: &RomBundle, mesh: &HullMesh, space: &ParameterSpace, th: &YieldThresholds, penalty: &PenaltyConfig, initial: Vec<Evaluation>, cfg: &BoConfig, round: usize, seed: u64) -> Result<OptimizationRun> {
    let objective = |mu: &[f64]| {
        let field = bundle.predict_field(mu)?;
        evaluate(mesh, mu, &field, th, penalty)
    };
    bayes_optimize_with(objective, space, initial, cfg, round, seed)
}

/// Full-order snapshots and their objective values.
#[derive(Debug, Clone, PartialEq)]
pub struct Database {
    pub params: Vec<Vec<f64>>,
    pub fields: Vec<StressField>,
    pub evaluations: Vec<Evaluation>,
}

impl Database {
    pub fn from_fields(mesh: &HullMesh, params: Vec<Vec<f64>>, fields: Vec<StressField>, th: &YieldThresholds, penalty: &PenaltyConfig) -> Result<Self> {
        if params.is_empty() || params.len() != fields.len() {
            return arg("database needs matching, non-empty parameters and fields");
        }
        let evaluations = params
            .iter()
            .zip(&fields)
            .map(|(p, f)| Ok(Evaluation::new(p, &evaluate(mesh, p, f, th, penalty)?, Source::Fom, 0)))
            .collect::<Result<_>>()?;
        Ok(Database { params, fields, evaluations })
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn incumbent(&self) -> &Evaluation {
        best(&self.evaluations).expect("database is non-empty")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    pub backend: Backend,
    pub rom: RomConfig,
    pub bo: BoConfig,
    pub k_enrich: usize,
    pub max_rounds: usize,
    pub tolerance: f64,
    pub thresholds: YieldThresholds,
    pub penalty: PenaltyConfig,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            backend: Backend::Nargpas,
            rom: RomConfig::default(),
            bo: BoConfig::default(),
            k_enrich: 4,
            max_rounds: 5,
            tolerance: 1e-6,
            thresholds: YieldThresholds::default(),
            penalty: PenaltyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnrichedPoint {
    pub mu: Vec<f64>,
    pub rom_f_obj: f64,
    pub fom_f_obj: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundSummary {
    pub round: usize,
    pub n_train: usize,
    /// Best value the reduced model reported this round.
    pub rom_incumbent: f64,
    /// Full-order incumbent of the database after enrichment.
    pub incumbent: f64,
    pub relative_reduction: f64,
    pub enriched: Vec<EnrichedPoint>,
}

impl RoundSummary {
    /// Mean of `|rom - fom| / |fom|` over the enriched designs.
    pub fn rom_fom_gap(&self) -> f64 {
        if self.enriched.is_empty() {
            return f64::NAN;
        }
        self.enriched.iter().map(|p| (p.rom_f_obj - p.fom_f_obj).abs() / p.fom_f_obj.abs()).sum::<f64>() / self.enriched.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrichmentLoop {
    pub runs: Vec<OptimizationRun>,
    pub rounds: Vec<RoundSummary>,
    pub k_enrich: usize,
    pub converged: bool,
    pub best_initial: f64,
    pub incumbent: Evaluation,
    pub database: Database,
}

impl EnrichmentLoop {
    pub fn relative_reduction(&self) -> f64 {
        relative_reduction(self.best_initial, self.incumbent.f_obj)
    }

    /// Round summary CSV: round, incumbent, relative reduction, ROM-vs-FOM gap.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("round,n_train,rom_incumbent,incumbent,relative_reduction,rom_fom_gap\n");
        for r in &self.rounds {
            s.push_str(&format!("{},{},{:?},{:?},{:?},{:?}\n", r.round, r.n_train, r.rom_incumbent, r.incumbent, r.relative_reduction, r.rom_fom_gap()));
        }
        s
    }

    /// One JSON object per evaluation, across all rounds.
    pub fn journal(&self) -> Result<String> {
        let mut s = String::new();
        for e in self.database.evaluations.iter().filter(|e| e.round == 0) {
            s.push_str(&serde_json::to_string(e)?);
            s.push('\n');
        }
        for run in &self.runs {
            for e in run.new_evaluations() {
                s.push_str(&serde_json::to_string(e)?);
                s.push('\n');
            }
        }
        for e in self.database.evaluations.iter().filter(|e| e.round > 0) {
            s.push_str(&serde_json::to_string(e)?);
            s.push('\n');
        }
        Ok(s)
    }
}

pub fn relative_reduction(best_initial: f64, incumbent: f64) -> f64 {
    (best_initial - incumbent) / best_initial.abs()
}

/// Rounds of: fit the reduced model, optimize on it, verify the best
/// `k_enrich` distinct designs with the full-order model and add them to the
/// database. Stops once the verified incumbent improves by no more than
/// `tolerance` (relative) or after `max_rounds` rounds.
pub fn enrich_and_iterate(mut db: Database, fom: &Fom, space: &ParameterSpace, cfg: &LoopConfig, seed: u64) -> Result<EnrichmentLoop> {
    if db.is_empty() {
        return arg("initial database is empty");
    }
    if cfg.max_rounds == 0 {
        return arg("max_rounds must be at least 1");
    }
    let mesh = &fom.mesh;
    let best_initial = db.incumbent().f_obj;
    let mut incumbent = best_initial;
    let mut runs = Vec::new();
    let mut rounds = Vec::new();
    let mut converged = false;
    for round in 1..=cfg.max_rounds {
        let sets = sets_from_fields(&db.params, &db.fields)?;
        let load_cases = db.fields[0].load_cases.clone();
        let bundle = fit_rom(&sets, mesh.n_elements(), &load_cases, &space.normalizer(), cfg.backend, &cfg.rom, derive_seed(seed, round as u64))?;
        let run = bayes_optimize(&bundle, mesh, space, &cfg.thresholds, &cfg.penalty, db.evaluations.clone(), &cfg.bo, round, derive_seed(seed, 1000 + round as u64))?;
        let mut fresh: Vec<&Evaluation> = run.new_evaluations().iter().collect();
        fresh.sort_by(|a, b| a.f_obj.total_cmp(&b.f_obj));
        let mut taken: HashSet<Vec<u32>> = db.params.iter().map(|p| key(space, p)).collect();
        let mut picks = Vec::new();
        for e in fresh {
            if picks.len() == cfg.k_enrich {
                break;
            }
            if taken.insert(key(space, &e.mu)) {
                picks.push(e.clone());
            }
        }
        if picks.len() < cfg.k_enrich {
            log::warn!("round {round}: only {} distinct designs to enrich with", picks.len());
        }
        let mut enriched = Vec::new();
        for p in &picks {
            let r = fom.solve(&p.mu)?;
            let e = evaluate(mesh, &p.mu, &r.stress, &cfg.thresholds, &cfg.penalty)?;
            enriched.push(EnrichedPoint { mu: p.mu.clone(), rom_f_obj: p.f_obj, fom_f_obj: e.f_obj });
            db.params.push(p.mu.clone());
            db.fields.push(r.stress);
            db.evaluations.push(Evaluation::new(&p.mu, &e, Source::Fom, round));
        }
        let new_incumbent = db.incumbent().f_obj;
        let improvement = (incumbent - new_incumbent) / incumbent.abs();
        let summary = RoundSummary {
            round,
            n_train: bundle.manifest.n_train,
            rom_incumbent: run.new_evaluations().iter().map(|e| e.f_obj).fold(f64::INFINITY, f64::min),
            incumbent: new_incumbent,
            relative_reduction: relative_reduction(best_initial, new_incumbent),
            enriched,
        };
        log::info!(
            "round {round}: incumbent {:.6e} (reduction {:.4}%), ROM/FOM gap {:.3e}",
            new_incumbent,
            100.0 * summary.relative_reduction,
            summary.rom_fom_gap()
        );
        rounds.push(summary);
        runs.push(run);
        incumbent = new_incumbent;
        if improvement <= cfg.tolerance {
            converged = true;
            break;
        }
    }
    let incumbent = db.incumbent().clone();
    Ok(EnrichmentLoop { runs, rounds, k_enrich: cfg.k_enrich, converged, best_initial, incumbent, database: db })
}

//! Stage commands behind the `romopt` binary. Each stage reads what earlier
//! stages left in the output directory and writes its own artifacts:
//!
//! ```text
//! out/
//!   space.csv  mesh.txt  samples.csv  test_samples.csv  sample.txt
//!   store/  test_store/
//!   rom-<backend>/
//!   validate-<backend>/   errors.csv summary.csv singular_values.csv eigen_decay.csv
//!   optimize-<backend>/   journal.jsonl rounds.csv evaluations.csv manifest.txt
//!   report/
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::optim::{enrich_and_iterate, Database, EnrichmentLoop, Source};
use crate::params::{maximin_design, ParameterSpace, SampleSet};
use crate::report::{bar_chart, line_chart, Series};
use crate::rng::derive_seed;
use crate::rom::{fit_rom, rom_error, Backend, ErrorReport, Regressor, RomBundle};
use crate::store::{parse_key_values, SnapshotStore};
use crate::structeval::{constraint_histograms, evaluate};
use crate::synthfom::{solve, Component, Fom, FomResult, HullMesh, LoadCase};

pub const THREADS_ENV: &str = "ROMOPT_THREADS";

const SEED_SAMPLES: u64 = 1;
const SEED_TEST: u64 = 2;
const SEED_FIT: u64 = 3;
const SEED_OPTIMIZE: u64 = 4;

#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn space(&self) -> PathBuf {
        self.root.join("space.csv")
    }

    pub fn mesh(&self) -> PathBuf {
        self.root.join("mesh.txt")
    }

    pub fn samples(&self) -> PathBuf {
        self.root.join("samples.csv")
    }

    pub fn test_samples(&self) -> PathBuf {
        self.root.join("test_samples.csv")
    }

    pub fn store(&self) -> PathBuf {
        self.root.join("store")
    }

    pub fn test_store(&self) -> PathBuf {
        self.root.join("test_store")
    }

    pub fn rom(&self, b: Backend) -> PathBuf {
        self.root.join(format!("rom-{b}"))
    }

    pub fn validate(&self, b: Backend) -> PathBuf {
        self.root.join(format!("validate-{b}"))
    }

    pub fn optimize(&self, b: Backend) -> PathBuf {
        self.root.join(format!("optimize-{b}"))
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
}

/// Worker count: `ROMOPT_THREADS` when set, else the available parallelism.
pub fn worker_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::Config(vec![format!("{THREADS_ENV} must be a positive integer, got '{v}'")])),
        },
        Err(_) => Ok(thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(p) = path.parent() {
        fs::create_dir_all(p)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn require(path: &Path, stage: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Argument(format!("{} is missing; run `romopt {stage}` first", path.display())))
    }
}

fn load_space(layout: &Layout) -> Result<ParameterSpace> {
    require(&layout.space(), "sample")?;
    ParameterSpace::read(&layout.space())
}

fn load_mesh(layout: &Layout) -> Result<HullMesh> {
    require(&layout.mesh(), "sample")?;
    HullMesh::read(&layout.mesh())
}

fn open_complete(dir: &Path, space: &ParameterSpace) -> Result<SnapshotStore> {
    require(dir, "simulate")?;
    let store = SnapshotStore::open(dir, space)?;
    if !store.is_complete() {
        return Err(Error::Argument(format!("{} holds {} of {} snapshots; rerun `romopt simulate`", dir.display(), store.meta.completed, store.meta.m)));
    }
    Ok(store)
}

/// Writes the parameter table, the mesh and the training/test designs.
pub fn cmd_sample(cfg: &PipelineConfig) -> Result<SampleSet> {
    cfg.validate()?;
    let layout = Layout::new(cfg.out_dir());
    fs::create_dir_all(&layout.root)?;
    let space = cfg.space()?;
    space.write(&layout.space())?;
    cfg.mesh(&space)?.write(&layout.mesh())?;
    let seed = cfg.run.seed;
    let train = maximin_design(&space, cfg.params.m, cfg.params.n_sets, derive_seed(seed, SEED_SAMPLES))?;
    train.write_csv(&layout.samples(), &space.names())?;
    if cfg.params.m_test > 0 {
        let test = maximin_design(&space, cfg.params.m_test, 1, derive_seed(seed, SEED_TEST))?;
        test.write_csv(&layout.test_samples(), &space.names())?;
    }
    write(
        &layout.root.join("sample.txt"),
        &format!("config_hash = {}\nseed = {seed}\nm = {}\nm_test = {}\n", cfg.hash(), cfg.params.m, cfg.params.m_test),
    )?;
    log::info!("sampled {} training and {} test designs", cfg.params.m, cfg.params.m_test);
    Ok(train)
}

/// Solves the outstanding columns of `store`, `workers` at a time. Only the
/// calling thread writes.
pub fn fill_store(store: &mut SnapshotStore, mesh: &HullMesh, workers: usize) -> Result<usize> {
    let loads = store.meta.load_cases.clone();
    let mut solved = 0;
    while !store.is_complete() {
        let start = store.next_column();
        let end = (start + workers.max(1)).min(store.meta.m);
        let batch: Vec<Result<FomResult>> = if workers <= 1 {
            vec![solve(mesh, &store.samples.points[start], &loads)]
        } else {
            let points = &store.samples.points[start..end];
            let loads = &loads;
            thread::scope(|s| {
                let handles: Vec<_> = points.iter().map(|mu| s.spawn(move || solve(mesh, mu, loads))).collect();
                handles.into_iter().map(|h| h.join().expect("solver thread panicked")).collect()
            })
        };
        for r in batch {
            store.append(&r?)?;
            solved += 1;
        }
        log::debug!("{}: {}/{}", store.dir().display(), store.meta.completed, store.meta.m);
    }
    Ok(solved)
}

/// Runs the full-order model on every design. Resumes partially filled
/// stores; returns the number of new solves.
pub fn cmd_simulate(cfg: &PipelineConfig) -> Result<usize> {
    cfg.validate()?;
    let workers = worker_count()?;
    let layout = Layout::new(cfg.out_dir());
    let space = load_space(&layout)?;
    let mesh = load_mesh(&layout)?;
    let hash = cfg.simulation_hash();
    let mut solved = 0;
    let mut jobs = vec![(layout.samples(), layout.store())];
    if layout.test_samples().exists() {
        jobs.push((layout.test_samples(), layout.test_store()));
    }
    for (csv, dir) in jobs {
        require(&csv, "sample")?;
        let samples = SampleSet::read_csv(&csv, &space)?;
        let mut store = SnapshotStore::create(&dir, &space, &samples, mesh.n_elements(), &LoadCase::ALL, &hash, cfg.run.seed)?;
        solved += fill_store(&mut store, &mesh, workers)?;
    }
    log::info!("{solved} full-order solves with {workers} worker(s)");
    Ok(solved)
}

/// Fits and saves the reduced model for `backend`.
pub fn cmd_fit(cfg: &PipelineConfig, backend: Backend) -> Result<RomBundle> {
    cfg.validate()?;
    let layout = Layout::new(cfg.out_dir());
    let space = load_space(&layout)?;
    let store = open_complete(&layout.store(), &space)?;
    let sets = store.snapshot_sets()?;
    let bundle = fit_rom(&sets, store.meta.n_elements, &store.meta.load_cases, &space.normalizer(), backend, &cfg.rom_config(), derive_seed(cfg.run.seed, SEED_FIT))?;
    bundle.save(&layout.rom(backend))?;
    write(&layout.rom(backend).join("run.txt"), &format!("config_hash = {}\nseed = {}\n", cfg.hash(), cfg.run.seed))?;
    log::info!("{backend} model fitted, ranks {:?}", bundle.ranks());
    Ok(bundle)
}

fn spectra_csv(bundle: &RomBundle) -> String {
    let mut s = String::from("component,k,sigma,retained\n");
    for c in &bundle.components {
        for (k, v) in c.basis.spectrum.iter().enumerate() {
            s.push_str(&format!("{},{},{:e},{}\n", c.component.tag(), k + 1, v, u8::from(k < c.basis.rank())));
        }
    }
    s
}

/// Active-subspace eigenvalues of each coefficient's low-fidelity ridge.
fn eigen_decay_csv(bundle: &RomBundle) -> String {
    let mut s = String::from("component,coefficient,k,eigenvalue\n");
    for c in &bundle.components {
        for (j, r) in c.regressors.iter().enumerate() {
            if let Regressor::Nargpas(m) = r {
                for (k, v) in m.low.ridge.subspace.eigenvalues.iter().enumerate() {
                    s.push_str(&format!("{},{},{},{:e}\n", c.component.tag(), j + 1, k + 1, v));
                }
            }
        }
    }
    s
}

fn summary_csv(report: &ErrorReport) -> String {
    let mut s = String::from("component,mean,median,max\n");
    for (k, c) in Component::ALL.iter().enumerate() {
        let m = report.component_summary(k);
        s.push_str(&format!("{},{:e},{:e},{:e}\n", c.tag(), m.mean, m.median, m.max));
    }
    let m = report.summary();
    s.push_str(&format!("all,{:e},{:e},{:e}\n", m.mean, m.median, m.max));
    s
}

/// Relative field errors of the saved `backend` model on the test store.
pub fn cmd_validate(cfg: &PipelineConfig, backend: Backend) -> Result<ErrorReport> {
    cfg.validate()?;
    let layout = Layout::new(cfg.out_dir());
    let space = load_space(&layout)?;
    require(&layout.rom(backend), "fit")?;
    let bundle = RomBundle::load(&layout.rom(backend))?;
    let test = open_complete(&layout.test_store(), &space)?;
    let report = rom_error(&bundle, &test.snapshot_sets()?)?;
    let dir = layout.validate(backend);
    write(&dir.join("errors.csv"), &report.to_csv())?;
    write(&dir.join("summary.csv"), &summary_csv(&report))?;
    write(&dir.join("singular_values.csv"), &spectra_csv(&bundle))?;
    if backend == Backend::Nargpas {
        write(&dir.join("eigen_decay.csv"), &eigen_decay_csv(&bundle))?;
    }
    let m = report.summary();
    log::info!("{backend}: relative field error mean {:.4e}, median {:.4e}, max {:.4e}", m.mean, m.median, m.max);
    Ok(report)
}

/// Runs the enrichment loop from the training store as initial database.
pub fn cmd_optimize(cfg: &PipelineConfig, backend: Backend) -> Result<EnrichmentLoop> {
    cfg.validate()?;
    let layout = Layout::new(cfg.out_dir());
    let space = load_space(&layout)?;
    let mesh = load_mesh(&layout)?;
    let store = open_complete(&layout.store(), &space)?;
    let (th, pen) = (cfg.thresholds(), cfg.penalty());
    let db = Database::from_fields(&mesh, store.samples.points.clone(), store.fields()?, &th, &pen)?;
    let fom = Fom::new(mesh);
    let mut lc = cfg.loop_config();
    lc.backend = backend;
    let seed = derive_seed(cfg.run.seed, SEED_OPTIMIZE);
    let result = enrich_and_iterate(db, &fom, &space, &lc, seed)?;

    let dir = layout.optimize(backend);
    write(&dir.join("journal.jsonl"), &result.journal()?)?;
    write(&dir.join("rounds.csv"), &result.summary_csv())?;
    let mut ev = String::from("index,round,source,f_obj,mass_kg,n_yield,n_buckle\n");
    for (i, e) in result.database.evaluations.iter().enumerate() {
        let src = if e.source == Source::Fom { "fom" } else { "rom" };
        ev.push_str(&format!("{i},{},{src},{:?},{:?},{},{}\n", e.round, e.f_obj, e.mass_kg, e.n_yield, e.n_buckle));
    }
    write(&dir.join("evaluations.csv"), &ev)?;
    let inc = &result.incumbent;
    let mu: Vec<String> = inc.mu.iter().map(|v| format!("{v:?}")).collect();
    write(
        &dir.join("manifest.txt"),
        &format!(
            "config_hash = {}\nseed = {}\nbackend = {backend}\nrounds = {}\nconverged = {}\nbest_initial = {:?}\nincumbent = {:?}\nrelative_reduction = {:?}\nincumbent_mu = {}\nfom_calls = {}\n",
            cfg.hash(),
            cfg.run.seed,
            result.rounds.len(),
            result.converged,
            result.best_initial,
            inc.f_obj,
            result.relative_reduction(),
            mu.join(" "),
            fom.calls()
        ),
    )?;
    log::info!(
        "{backend}: incumbent {:.6e} after {} rounds, {:.4}% below the best initial design",
        inc.f_obj,
        result.rounds.len(),
        100.0 * result.relative_reduction()
    );
    Ok(result)
}

fn read_csv_rows(path: &Path) -> Result<Vec<Vec<String>>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(rows)
}

fn num(s: &str, path: &Path) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse(format!("{}: '{s}' is not a number", path.display())))
}

/// Builds charts and tables from whatever earlier stages produced. Returns
/// the files written.
pub fn cmd_report(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let layout = Layout::new(cfg.out_dir());
    let dir = layout.report();
    fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: &str| -> Result<()> {
        let p = dir.join(name);
        write(&p, text)?;
        written.push(p);
        Ok(())
    };

    // Constraint histograms of the initial database.
    let space = load_space(&layout)?;
    let mesh = load_mesh(&layout)?;
    let store = open_complete(&layout.store(), &space)?;
    let (th, pen) = (cfg.thresholds(), cfg.penalty());
    let evals = store
        .samples
        .points
        .iter()
        .zip(store.fields()?)
        .map(|(mu, f)| evaluate(&mesh, mu, &f, &th, &pen))
        .collect::<Result<Vec<_>>>()?;
    let h = constraint_histograms(&evals, &pen, cfg.structeval.histogram_bins)?;
    put("yield_histogram.csv", &h.yielded.to_csv())?;
    put("buckle_histogram.csv", &h.buckled_valid.to_csv())?;
    put("valid_fraction.csv", &format!("n,valid_fraction\n{},{:?}\n", evals.len(), h.valid_fraction))?;
    let labels = |hist: &crate::structeval::Histogram| hist.lower.iter().map(|l| l.to_string()).collect::<Vec<_>>();
    let counts = |hist: &crate::structeval::Histogram| hist.counts.iter().map(|&c| c as f64).collect::<Vec<_>>();
    put("yield_histogram.svg", &bar_chart("Yielded elements per design", "designs", &labels(&h.yielded), &[("N_y".into(), counts(&h.yielded))]))?;
    put(
        "buckle_histogram.svg",
        &bar_chart("Buckled elements per yield-feasible design", "designs", &labels(&h.buckled_valid), &[("N_b".into(), counts(&h.buckled_valid))]),
    )?;

    // Backend comparison.
    let mut comparison: Vec<(Backend, Vec<Vec<String>>)> = Vec::new();
    for b in [Backend::Gpr, Backend::Nargpas] {
        let p = layout.validate(b).join("summary.csv");
        if p.exists() {
            comparison.push((b, read_csv_rows(&p)?));
        }
    }
    if !comparison.is_empty() {
        let cats: Vec<String> = comparison[0].1.iter().map(|r| r[0].clone()).collect();
        let mut csv = String::from("component");
        for (b, _) in &comparison {
            csv.push_str(&format!(",{b}_mean,{b}_median,{b}_max"));
        }
        csv.push('\n');
        for (i, c) in cats.iter().enumerate() {
            csv.push_str(c);
            for (_, rows) in &comparison {
                csv.push_str(&format!(",{},{},{}", rows[i][1], rows[i][2], rows[i][3]));
            }
            csv.push('\n');
        }
        put("backend_comparison.csv", &csv)?;
        let mut series = Vec::new();
        for (b, rows) in &comparison {
            let p = layout.validate(*b).join("summary.csv");
            series.push((b.to_string(), rows.iter().map(|r| num(&r[1], &p)).collect::<Result<Vec<_>>>()?));
        }
        put("backend_comparison.svg", &bar_chart("Mean relative field error on the test set", "relative L2 error", &cats, &series))?;
    }

    // Incumbent traces.
    let mut traces = Vec::new();
    let mut csv = String::from("backend,evaluation,f_obj,incumbent\n");
    for b in [Backend::Gpr, Backend::Nargpas] {
        let p = layout.optimize(b).join("evaluations.csv");
        if !p.exists() {
            continue;
        }
        let mut best = f64::INFINITY;
        let mut pts = Vec::new();
        for r in read_csv_rows(&p)? {
            let f = num(&r[3], &p)?;
            best = best.min(f);
            csv.push_str(&format!("{b},{},{:?},{:?}\n", r[0], f, best));
            pts.push((num(&r[0], &p)?, best));
        }
        traces.push(Series { name: format!("{b} (full-order verified)"), points: pts });
    }
    if !traces.is_empty() {
        put("incumbent_trace.csv", &csv)?;
        put("incumbent_trace.svg", &line_chart("Incumbent objective", "database entry", "f_obj", &traces))?;
    }
    log::info!("report: {} files in {}", written.len(), dir.display());
    Ok(written)
}

/// Reads a `key = value` run manifest, e.g. an optimize stage's.
pub fn read_manifest(path: &Path) -> Result<std::collections::BTreeMap<String, String>> {
    parse_key_values(&fs::read_to_string(path)?)
}

/// Every stage in order, for both backends; optimization uses the
/// configured backend.
pub fn run_all(cfg: &PipelineConfig) -> Result<EnrichmentLoop> {
    cmd_sample(cfg)?;
    cmd_simulate(cfg)?;
    for b in [Backend::Gpr, Backend::Nargpas] {
        cmd_fit(cfg, b)?;
        if cfg.params.m_test > 0 {
            cmd_validate(cfg, b)?;
        }
    }
    let result = cmd_optimize(cfg, cfg.rom.backend)?;
    cmd_report(cfg)?;
    Ok(result)
}

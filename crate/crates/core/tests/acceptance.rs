//! Acceptance criteria AC-1 to AC-7. Runs serially (no libtest harness) so the
//! runtime limits measure one criterion at a time; prints one line each.
//!
//! `cargo test --release --test acceptance`

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use romopt::asub::{compute_active_subspace, estimate_gradient_samples};
use romopt::config::PipelineConfig;
use romopt::gp::{fit_gp, GpConfig};
use romopt::optim::{bayes_optimize_with, enrich_and_iterate, BoConfig, Database, LoopConfig};
use romopt::params::{maximin_design, Dim, Normalizer, ParameterSpace};
use romopt::pipeline::{run_all, Layout};
use romopt::pod::{compute_pod, residual_energy, SnapshotSet, Truncation};
use romopt::rng::stream;
use romopt::rom::{fit_rom_pair, rom_error, Backend, RomConfig};
use romopt::store::{sets_from_fields, SnapshotStore};
use romopt::structeval::{count_buckled, count_yielded, objective, ObjectiveEvaluation, PenaltyConfig, YieldThresholds};
use romopt::synthfom::{build_default_mesh, Fom, LoadCase, StressField, STIFFENER_SPACING_MM};

fn normal<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

/// Restarts per regressor fit for the ROM-heavy criteria.
const ROM_RESTARTS: usize = 2;

struct Outcome {
    pass: bool,
    detail: String,
}

fn within(limit_s: f64, start: Instant, pass: bool, detail: String) -> Outcome {
    let t = start.elapsed().as_secs_f64();
    let fast = t < limit_s;
    let timing = if limit_s.is_finite() {
        format!("{t:.1} s (limit {limit_s} s{})", if fast { "" } else { ", EXCEEDED" })
    } else {
        format!("{t:.1} s")
    };
    Outcome { pass: pass && fast, detail: format!("{detail}; {timing}") }
}

fn ac1() -> Outcome {
    let start = Instant::now();
    let mut rng = stream(2024, 1);
    let (mut worst_orth, mut worst_tail, mut worst_sigma) = (0.0f64, 0.0f64, 0.0f64);
    for case in 0..20 {
        let n = rng.gen_range(20..=200);
        let m = rng.gen_range(5..=50usize).min(n);
        let decay: Vec<f64> = (0..m).map(|j| 0.9f64.powi(j as i32)).collect();
        let s = DMatrix::from_fn(n, m, |_, j| normal(&mut rng) * decay[j]);
        let r = rng.gen_range(1..m);
        let set = SnapshotSet::new("s", vec![vec![0.0]; m], s.clone()).unwrap();
        let basis = compute_pod(&set, Truncation::Rank(r)).unwrap();
        let phi = &basis.modes;
        let orth = (phi.transpose() * phi - DMatrix::identity(r, r)).abs().max();
        // Oracle: eigenvalues of the Gram matrix S^T S are the squared singular values.
        let mut lam = SymmetricEigen::new(s.transpose() * &s).eigenvalues.as_slice().to_vec();
        lam.sort_by(|a, b| b.total_cmp(a));
        let tail: f64 = lam[r..].iter().sum();
        let residual = residual_energy(&basis, &s).unwrap();
        let rel_tail = (residual - tail).abs() / tail;
        let rel_sigma = (0..r).map(|k| (basis.singular_values[k].powi(2) - lam[k]).abs() / lam[k]).fold(0.0, f64::max);
        if rel_tail > 1e-9 || orth > 1e-10 {
            eprintln!("  case {case}: {n}x{m} rank {r}: orthonormality {orth:.2e}, tail {rel_tail:.2e}");
        }
        worst_orth = worst_orth.max(orth);
        worst_tail = worst_tail.max(rel_tail);
        worst_sigma = worst_sigma.max(rel_sigma);
    }
    let pass = worst_orth <= 1e-10 && worst_tail <= 1e-9 && worst_sigma <= 1e-9;
    within(10.0, start, pass, format!("max |PhiT Phi - I| {worst_orth:.2e}, tail energy rel. {worst_tail:.2e}, sigma^2 vs Gram rel. {worst_sigma:.2e}"))
}

fn angle(w: &[f64], a: &[f64]) -> f64 {
    let dot: f64 = w.iter().zip(a).map(|(x, y)| x * y).sum();
    let nw: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot.abs() / nw).min(1.0).acos()
}

fn ac2() -> Outcome {
    let start = Instant::now();
    let a = [0.6, 0.8];
    let f = |x: &[f64]| (3.0 * x[0] + 4.0 * x[1]).powi(2);
    let mut rng = stream(77, 0);
    let x: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    let exact: Vec<Vec<f64>> = x.iter().map(|p| {
        let t = 2.0 * (3.0 * p[0] + 4.0 * p[1]);
        vec![3.0 * t, 4.0 * t]
    }).collect();
    let sub = compute_active_subspace(&exact, Normalizer::identity(2), 1).unwrap();
    let exact_angle = angle(&sub.direction(0), &a);

    let mut worst = 0.0f64;
    for seed in 0..5u64 {
        let mut rng = stream(seed, 10);
        let x: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let y: Vec<f64> = x.iter().map(|p| f(p)).collect();
        let g = estimate_gradient_samples(&x, &y, &Normalizer::identity(2), &GpConfig::noiseless().with_seed(seed)).unwrap();
        let sub = compute_active_subspace(&g, Normalizer::identity(2), 1).unwrap();
        worst = worst.max(angle(&sub.direction(0), &a).to_degrees());
    }
    let pass = exact_angle <= 1e-3 && worst <= 5.0;
    within(30.0, start, pass, format!("exact gradients {exact_angle:.2e} rad, GP gradients worst {worst:.3} deg over 5 seeds"))
}

fn ac3() -> Outcome {
    let start = Instant::now();
    let f = |x: &[f64]| x[0].sin() + x[1] * x[1] - 0.7 * x[2] * x[0] + (2.0 * x[2]).cos();
    let mut rng = stream(3, 3);
    let x: Vec<Vec<f64>> = (0..40).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let y: Vec<f64> = x.iter().map(|p| f(p)).collect();
    let model = fit_gp(&x, &y, &GpConfig::noiseless().with_seed(3)).unwrap();
    let interp = x.iter().zip(&y).map(|(p, t)| (model.predict_mean(p).unwrap() - t).abs()).fold(0.0, f64::max);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let q: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g = model.mean_gradient(&q).unwrap();
        let fd: Vec<f64> = (0..3)
            .map(|i| {
                let (mut p, mut m) = (q.clone(), q.clone());
                p[i] += h;
                m[i] -= h;
                (model.predict_mean(&p).unwrap() - model.predict_mean(&m).unwrap()) / (2.0 * h)
            })
            .collect();
        let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max(diff / norm);
    }
    let pass = interp <= 1e-8 && worst <= 1e-4;
    within(f64::INFINITY, start, pass, format!("max training residual {interp:.2e}, gradient vs central differences rel. {worst:.2e} at 20 points"))
}

fn ac4() -> Outcome {
    let start = Instant::now();
    let space = ParameterSpace::hull16(0.5);
    let fom = Fom::new(build_default_mesh(&space, 64, 18).unwrap());
    let cfg = RomConfig::default().with_restarts(ROM_RESTARTS);
    let (mut wins, mut extra_calls) = (0, 0);
    let mut lines = Vec::new();
    for trial in 0..5u64 {
        let train = maximin_design(&space, 100, 8, 100 + trial).unwrap();
        let mut g = stream(900 + trial, 0);
        let test: Vec<Vec<f64>> = (0..50).map(|_| space.point_at(&space.random_levels(&mut g))).collect();
        let solve = |pts: &[Vec<f64>]| pts.iter().map(|p| fom.solve(p).unwrap().stress).collect::<Vec<_>>();
        let sets = sets_from_fields(&train.points, &solve(&train.points)).unwrap();
        let test_sets = sets_from_fields(&test, &solve(&test)).unwrap();
        let before = fom.calls();
        let (gpr, nargpas) = fit_rom_pair(&sets, fom.mesh.n_elements(), &LoadCase::ALL, &space.normalizer(), &cfg, trial).unwrap();
        let (eg, en) = (rom_error(&gpr, &test_sets).unwrap().summary().mean, rom_error(&nargpas, &test_sets).unwrap().summary().mean);
        extra_calls += fom.calls() - before;
        if en <= eg {
            wins += 1;
        }
        lines.push(format!("{eg:.3e}/{en:.3e}"));
    }
    let pass = wins >= 4 && extra_calls == 0;
    within(300.0, start, pass, format!("NARGPAS <= GPR in {wins}/5 trials (GPR/NARGPAS mean error {}), {extra_calls} extra full-order calls", lines.join(" ")))
}

fn oracle_yielded(f: &StressField) -> usize {
    let mut n = 0;
    for e in 0..f.n_elements {
        let mut hit = false;
        for lc in 0..f.load_cases.len() {
            let s = f.tensor(lc, e);
            let vm = (s[0] * s[0] + s[1] * s[1] - s[0] * s[1] + 3.0 * s[3] * s[3]).sqrt();
            if s[0].abs() > 245.0 || s[1].abs() > 245.0 || s[2].abs() > 245.0 || s[3].abs() > 153.0 || s[4].abs() > 153.0 || s[5].abs() > 153.0 || vm > 307.0 {
                hit = true;
            }
        }
        n += usize::from(hit);
    }
    n
}

fn oracle_buckled(f: &StressField, t: &[f64]) -> usize {
    let mut n = 0;
    for e in 0..f.n_elements {
        let se = std::f64::consts::PI.powi(2) * 206_000.0 / (12.0 * 0.91) * (t[e] / STIFFENER_SPACING_MM).powi(2);
        let r = (700.0f64 / 2400.0).powi(2);
        let mut hit = false;
        for lc in 0..f.load_cases.len() {
            let [sx, sy, sz, txy, txz, tyz] = f.tensor(lc, e);
            let u1 = if sx < 0.0 { -sx / (4.0 * se) } else { 0.0 };
            let u2 = if sy < 0.0 { -sy / ((1.0 + r) * (1.0 + r) * se) } else { 0.0 };
            let u5 = txy.abs() / ((5.34 + 4.0 * r) * se);
            let factors = [
                u1,
                u2,
                sx.abs() / (23.9 * se),
                sy.abs() / (23.9 * se),
                u5,
                txz.abs() / ((5.34 + 4.0 * r) * se),
                tyz.abs() / ((5.34 + 4.0 * r) * se),
                u1 + u2,
                u1 + u5,
                (u1 * u1 + u5 * u5).sqrt(),
                if sz < 0.0 { -sz / (4.0 * se) } else { 0.0 },
            ];
            if factors.iter().any(|&u| u > 1.0) {
                hit = true;
            }
        }
        n += usize::from(hit);
    }
    n
}

fn ac5() -> Outcome {
    let start = Instant::now();
    let cfg = PenaltyConfig::default();
    let cases = [
        (1000.0, 200.0, 0.0, 1000.0),
        (1000.0, 210.0, 35_000.0, 104_980.0),
        (5000.0, 250.0, 36_000.0, 5000.0 + 2.968 * 36_000.0 + 2500.0 + 0.001 * 1.0e6),
        (4.2e6, 0.0, 1200.0, 4.2e6 + 2.968 * 1200.0),
    ];
    let obj_err = cases.iter().map(|&(m, y, b, want)| (objective(m, y, b, &cfg) - want).abs() / want).fold(0.0, f64::max);
    let th = YieldThresholds::default();
    let mut mismatches = 0;
    for seed in 0..10u64 {
        let mut rng = stream(seed, 5);
        let mut f = StressField::zeros(1000, &LoadCase::ALL);
        let per = f.component_len();
        for (k, v) in f.data.iter_mut().enumerate() {
            let normal_component = (k / per) < 3;
            *v = if normal_component { rng.gen_range(-320.0..320.0) } else { rng.gen_range(-200.0..200.0) } * if rng.gen_bool(0.5) { 0.3 } else { 1.0 };
        }
        let t: Vec<f64> = (0..1000).map(|_| rng.gen_range(5.0..25.0)).collect();
        mismatches += usize::from(count_yielded(&f, &th) != oracle_yielded(&f));
        mismatches += usize::from(count_buckled(&f, &t).unwrap() != oracle_buckled(&f, &t));
    }
    let pass = obj_err <= 1e-12 && mismatches == 0;
    within(f64::INFINITY, start, pass, format!("objective rel. error {obj_err:.1e}; count mismatches {mismatches} over 10 fields x 2 counters"))
}

fn ac6() -> Outcome {
    let start = Instant::now();
    let space = ParameterSpace::hull16(0.5);
    let fom = Fom::new(build_default_mesh(&space, 64, 18).unwrap());
    let design = maximin_design(&space, 100, 16, 6).unwrap();
    let fields: Vec<StressField> = design.points.iter().map(|p| fom.solve(p).unwrap().stress).collect();
    let (th, pen) = (YieldThresholds::default(), PenaltyConfig::default());
    let db = Database::from_fields(&fom.mesh, design.points.clone(), fields, &th, &pen).unwrap();
    let best_initial = db.incumbent().f_obj;
    let cfg = LoopConfig {
        backend: Backend::Nargpas,
        rom: RomConfig::default().with_restarts(ROM_RESTARTS),
        bo: BoConfig { budget: 200, ..BoConfig::default() },
        k_enrich: 4,
        max_rounds: 5,
        tolerance: 1e-6,
        ..LoopConfig::default()
    };
    let out = enrich_and_iterate(db, &fom, &space, &cfg, 6).unwrap();
    let trace: Vec<f64> = out.rounds.iter().map(|r| r.incumbent).collect();
    let monotone = trace.windows(2).all(|w| w[1] <= w[0]) && trace.first().is_some_and(|&v| v <= best_initial);
    // The flag must be set exactly when a round improved by less than the tolerance.
    let mut prev = best_initial;
    let mut stall_round = None;
    for r in &out.rounds {
        if (prev - r.incumbent) / prev.abs() <= cfg.tolerance && stall_round.is_none() {
            stall_round = Some(r.round);
        }
        prev = r.incumbent;
    }
    let flag_ok = match stall_round {
        Some(k) => out.converged && k == out.rounds.len(),
        None => !out.converged && out.rounds.len() == cfg.max_rounds,
    };
    let loop_pass = out.incumbent.f_obj <= best_initial && monotone && flag_ok;

    // Two-parameter toy: incumbent against exhaustive enumeration.
    let toy = ParameterSpace::new(vec![Dim::new("a", "p", 10.0, 5.0, 15.0, 0.5), Dim::new("b", "q", 10.0, 5.0, 15.0, 0.5)]).unwrap();
    let g = |mu: &[f64]| (mu[0] - 8.2).powi(2) + 1.5 * (mu[1] - 11.7).powi(2) + 0.4 * mu[0] * (mu[1] - 10.0) / 5.0;
    let mut best = (f64::INFINITY, vec![]);
    for i in 0..toy.dims()[0].levels() {
        for j in 0..toy.dims()[1].levels() {
            let mu = toy.point_at(&[i as u32, j as u32]);
            if g(&mu) < best.0 {
                best = (g(&mu), mu);
            }
        }
    }
    let obj = |mu: &[f64]| Ok(ObjectiveEvaluation { mass_kg: 0.0, n_yield: 0, n_buckle: 0, f_obj: g(mu), per_load_case: vec![] });
    let run = bayes_optimize_with(obj, &toy, vec![], &BoConfig { budget: 60, pool_uniform: 441, pool_local: 64, ..BoConfig::default() }, 1, 6).unwrap();
    let inc = run.incumbent().unwrap();
    let steps = inc.mu.iter().zip(&best.1).map(|(a, b)| ((a - b).abs() / 0.5).round()).fold(0.0, f64::max);
    let pass = loop_pass && steps <= 1.0;
    within(
        600.0,
        start,
        pass,
        format!(
            "best initial {best_initial:.6e}, incumbents {:?}, converged {} after {} rounds; toy incumbent {:?} vs optimum {:?} ({steps} steps)",
            trace.iter().map(|v| format!("{v:.6e}")).collect::<Vec<_>>(),
            out.converged,
            out.rounds.len(),
            inc.mu,
            best.1
        ),
    )
}

fn report_csvs(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["report", "validate-gpr", "validate-nargpas", "optimize-nargpas"] {
        let dir = root.join(sub);
        let mut names: Vec<_> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
        names.sort();
        for p in names {
            if matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "jsonl" | "svg")) {
                out.push((format!("{sub}/{}", p.file_name().unwrap().to_string_lossy()), std::fs::read(&p).unwrap()));
            }
        }
    }
    out
}

fn ac7() -> Outcome {
    let start = Instant::now();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/demo.toml");
    let tmp = tempfile::tempdir().unwrap();
    let mut digests = Vec::new();
    let mut reports = Vec::new();
    for k in 0..2 {
        let mut cfg = PipelineConfig::load(&config).unwrap();
        cfg.run.out_dir = tmp.path().join(format!("run{k}"));
        run_all(&cfg).unwrap();
        let layout = Layout::new(cfg.out_dir());
        let space = ParameterSpace::read(&layout.space()).unwrap();
        let d: Vec<String> = [layout.store(), layout.test_store()].iter().map(|s| SnapshotStore::open(s, &space).unwrap().digest().unwrap()).collect();
        digests.push(d);
        reports.push(report_csvs(&layout.root));
    }
    let same_stores = digests[0] == digests[1];
    let same_reports = !reports[0].is_empty() && reports[0] == reports[1];
    within(f64::INFINITY, start, same_stores && same_reports, format!("store digests equal: {same_stores}; {} report files identical: {same_reports}", reports[0].len()))
}

fn main() -> ExitCode {
    let only: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with("AC-")).collect();
    let criteria: [(&str, &str, fn() -> Outcome); 7] = [
        ("AC-1", "POD correctness", ac1),
        ("AC-2", "active-subspace recovery", ac2),
        ("AC-3", "GP interpolation and gradients", ac3),
        ("AC-4", "multi-fidelity benefit", ac4),
        ("AC-5", "objective exactness", ac5),
        ("AC-6", "optimization loop behavior", ac6),
        ("AC-7", "reproducibility", ac7),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !only.is_empty() && !only.iter().any(|o| o == id) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default();
            Outcome { pass: false, detail: format!("panicked: {msg}") }
        });
        failed += usize::from(!outcome.pass);
        println!("{id} {} {name}: {}", if outcome.pass { "PASS" } else { "FAIL" }, outcome.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}

//! POD with interpolation: one basis per stress component and one regressor
//! per retained modal coefficient.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{arg, Error, Result};
use crate::gp::{fit_gp, GpConfig, GpModel, KernelKind};
use crate::mfgp::{fit_nargpas, MfCoefficientModel, MfConfig};
use crate::params::Normalizer;
use crate::pod::{compute_pod, project, PodBasis, SnapshotSet, Truncation};
use crate::rng::derive_seed;
use crate::store::{get, get_num, parse_key_values, read_matrix, write_matrix};
use crate::synthfom::{Component, LoadCase, StressField};

pub const BUNDLE_FORMAT: &str = "rom-bundle/1";
const BOUNDS_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Gpr,
    Nargpas,
}

impl Backend {
    pub fn tag(self) -> &'static str {
        match self {
            Backend::Gpr => "gpr",
            Backend::Nargpas => "nargpas",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gpr" => Ok(Backend::Gpr),
            "nargpas" => Ok(Backend::Nargpas),
            _ => arg(format!("unknown backend '{s}' (expected gpr or nargpas)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RomConfig {
    pub truncation: Truncation,
    /// Single-fidelity regressors; also the gradient surrogate for NARGPAS.
    pub gpr: GpConfig,
    pub nargpas: MfConfig,
}

impl Default for RomConfig {
    fn default() -> Self {
        RomConfig { truncation: Truncation::Rank(17), gpr: GpConfig::noiseless(), nargpas: MfConfig::default() }
    }
}

impl RomConfig {
    /// Sets the restart count of every regressor fit.
    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.gpr.restarts = restarts;
        self.nargpas.low.restarts = restarts;
        self.nargpas.high.restarts = restarts;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Regressor {
    Gpr(GpModel),
    Nargpas(MfCoefficientModel),
}

impl Regressor {
    pub fn predict(&self, u: &[f64]) -> Result<(f64, f64)> {
        match self {
            Regressor::Gpr(m) => m.predict(u),
            Regressor::Nargpas(m) => m.predict(u),
        }
    }

    pub fn predict_mean(&self, u: &[f64]) -> Result<f64> {
        match self {
            Regressor::Gpr(m) => m.predict_mean(u),
            Regressor::Nargpas(m) => m.predict_mean(u),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentRom {
    pub component: Component,
    pub basis: PodBasis,
    pub regressors: Vec<Regressor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingManifest {
    pub sample_hash: String,
    pub seed: u64,
    pub n_train: usize,
    pub n_elements: usize,
    pub load_cases: Vec<LoadCase>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RomBundle {
    pub backend: Backend,
    pub normalizer: Normalizer,
    pub components: Vec<ComponentRom>,
    pub manifest: TrainingManifest,
}

/// Hash of a parameter list, used to tie bundles to their training data.
pub fn hash_params(params: &[Vec<f64>]) -> String {
    let mut h = Sha256::new();
    for p in params {
        for v in p {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn check_sets(sets: &[SnapshotSet], n_elements: usize, load_cases: &[LoadCase]) -> Result<()> {
    if sets.len() != Component::ALL.len() {
        return arg(format!("expected {} component snapshot sets, got {}", Component::ALL.len(), sets.len()));
    }
    for (c, s) in Component::ALL.iter().zip(sets) {
        if s.component != c.tag() {
            return arg(format!("snapshot set '{}' out of order (expected '{}')", s.component, c.tag()));
        }
        if s.params != sets[0].params {
            return arg("component snapshot sets disagree on parameters");
        }
        if s.n() != n_elements * load_cases.len() {
            return arg("snapshot length does not match the field layout");
        }
    }
    Ok(())
}

struct Prepared {
    bases: Vec<PodBasis>,
    coeffs: Vec<Vec<Vec<f64>>>,
    x: Vec<Vec<f64>>,
}

fn prepare(sets: &[SnapshotSet], normalizer: &Normalizer, cfg: &RomConfig) -> Result<Prepared> {
    let x: Vec<Vec<f64>> = sets[0].params.iter().map(|p| normalizer.to_unit(p)).collect();
    let mut bases = Vec::new();
    let mut coeffs = Vec::new();
    for set in sets {
        let basis = compute_pod(set, cfg.truncation)?;
        let c = project(&basis, &set.snapshots)?;
        coeffs.push((0..basis.rank()).map(|k| c.row(k).iter().copied().collect()).collect());
        bases.push(basis);
    }
    Ok(Prepared { bases, coeffs, x })
}

fn regressor_seed(seed: u64, comp: usize, k: usize) -> u64 {
    derive_seed(seed, (comp * 1024 + k) as u64)
}

fn gpr_fit(p: &Prepared, cfg: &RomConfig, seed: u64, c: usize, k: usize) -> Result<GpModel> {
    let gcfg = GpConfig { kind: KernelKind::SquaredExponential, seed: regressor_seed(seed, c, k), ..cfg.gpr.clone() };
    fit_gp(&p.x, &p.coeffs[c][k], &gcfg)
}

fn assemble(backend: Backend, normalizer: &Normalizer, p: Prepared, regs: Vec<Vec<Regressor>>, sets: &[SnapshotSet], seed: u64, n_elements: usize, load_cases: &[LoadCase]) -> RomBundle {
    let components = Component::ALL
        .iter()
        .zip(p.bases)
        .zip(regs)
        .map(|((&component, basis), regressors)| ComponentRom { component, basis, regressors })
        .collect();
    RomBundle {
        backend,
        normalizer: normalizer.clone(),
        components,
        manifest: TrainingManifest {
            sample_hash: hash_params(&sets[0].params),
            seed,
            n_train: sets[0].m(),
            n_elements,
            load_cases: load_cases.to_vec(),
        },
    }
}

/// Fits a bundle from the six per-component snapshot sets (in
/// [`Component::ALL`] order) of fields with the given layout.
pub fn fit_rom(sets: &[SnapshotSet], n_elements: usize, load_cases: &[LoadCase], normalizer: &Normalizer, backend: Backend, cfg: &RomConfig, seed: u64) -> Result<RomBundle> {
    check_sets(sets, n_elements, load_cases)?;
    let p = prepare(sets, normalizer, cfg)?;
    let mut regs = Vec::new();
    for c in 0..p.bases.len() {
        let mut row = Vec::new();
        for k in 0..p.bases[c].rank() {
            let g = gpr_fit(&p, cfg, seed, c, k)?;
            row.push(match backend {
                Backend::Gpr => Regressor::Gpr(g),
                Backend::Nargpas => Regressor::Nargpas(fit_nargpas(&p.x, &p.coeffs[c][k], &cfg.nargpas, regressor_seed(seed, c, k), Some(&g))?),
            });
        }
        log::debug!("{}: {} regressors", Component::ALL[c].tag(), row.len());
        regs.push(row);
    }
    Ok(assemble(backend, normalizer, p, regs, sets, seed, n_elements, load_cases))
}

/// Fits the GPR and NARGPAS bundles on identical data and seeds, sharing the
/// single-fidelity fits (which are also the NARGPAS gradient surrogates).
pub fn fit_rom_pair(sets: &[SnapshotSet], n_elements: usize, load_cases: &[LoadCase], normalizer: &Normalizer, cfg: &RomConfig, seed: u64) -> Result<(RomBundle, RomBundle)> {
    check_sets(sets, n_elements, load_cases)?;
    let p = prepare(sets, normalizer, cfg)?;
    let (mut gpr, mut mf) = (Vec::new(), Vec::new());
    for c in 0..p.bases.len() {
        let (mut rg, mut rm) = (Vec::new(), Vec::new());
        for k in 0..p.bases[c].rank() {
            let g = gpr_fit(&p, cfg, seed, c, k)?;
            rm.push(Regressor::Nargpas(fit_nargpas(&p.x, &p.coeffs[c][k], &cfg.nargpas, regressor_seed(seed, c, k), Some(&g))?));
            rg.push(Regressor::Gpr(g));
        }
        gpr.push(rg);
        mf.push(rm);
    }
    let p2 = Prepared { bases: p.bases.clone(), coeffs: Vec::new(), x: Vec::new() };
    Ok((
        assemble(Backend::Gpr, normalizer, p2, gpr, sets, seed, n_elements, load_cases),
        assemble(Backend::Nargpas, normalizer, p, mf, sets, seed, n_elements, load_cases),
    ))
}

impl RomBundle {
    pub fn n_params(&self) -> usize {
        self.normalizer.dim()
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.components.iter().map(|c| c.basis.rank()).collect()
    }

    fn unit(&self, mu: &[f64]) -> Result<Vec<f64>> {
        if mu.len() != self.n_params() {
            return arg(format!("point has dimension {}, bundle expects {}", mu.len(), self.n_params()));
        }
        let u = self.normalizer.to_unit(mu);
        if u.iter().any(|v| !(v.abs() <= 1.0 + BOUNDS_SLACK)) {
            return arg("point outside the parameter box");
        }
        Ok(u)
    }

    /// Predicted modal coefficients per component.
    pub fn coefficients(&self, mu: &[f64]) -> Result<Vec<Vec<f64>>> {
        let u = self.unit(mu)?;
        self.components.iter().map(|c| c.regressors.iter().map(|r| r.predict_mean(&u)).collect()).collect()
    }

    /// `s* = Phi g(mu*)` for every component.
    pub fn predict_field(&self, mu: &[f64]) -> Result<StressField> {
        let coeffs = self.coefficients(mu)?;
        let mut f = StressField::zeros(self.manifest.n_elements, &self.manifest.load_cases);
        for (c, coef) in self.components.iter().zip(coeffs) {
            let s = &c.basis.modes * DVector::from_vec(coef);
            f.component_mut(c.component).copy_from_slice(s.as_slice());
        }
        Ok(f)
    }

    /// Mean field plus a per-entry variance `sum_k Phi_ik^2 var_k`, which
    /// ignores correlations between coefficients.
    pub fn predict_field_with_variance(&self, mu: &[f64]) -> Result<(StressField, StressField)> {
        let u = self.unit(mu)?;
        let mut mean = StressField::zeros(self.manifest.n_elements, &self.manifest.load_cases);
        let mut var = mean.clone();
        for c in &self.components {
            let pv: Vec<(f64, f64)> = c.regressors.iter().map(|r| r.predict(&u)).collect::<Result<_>>()?;
            let m = &c.basis.modes * DVector::from_iterator(pv.len(), pv.iter().map(|p| p.0));
            let v = c.basis.modes.map(|x| x * x) * DVector::from_iterator(pv.len(), pv.iter().map(|p| p.1));
            mean.component_mut(c.component).copy_from_slice(m.as_slice());
            var.component_mut(c.component).copy_from_slice(v.as_slice());
        }
        Ok((mean, var))
    }

    /// Writes the bundle directory: text manifest, binary modes, JSON regressors.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("manifest.txt"), self.manifest_text())?;
        for c in &self.components {
            let tag = c.component.tag();
            write_matrix(&dir.join(format!("{tag}.modes.bin")), &c.basis.modes)?;
            let side = ComponentFile {
                singular_values: c.basis.singular_values.clone(),
                spectrum: c.basis.spectrum.clone(),
                energy: c.basis.energy,
                n_snapshots: c.basis.n_snapshots,
                regressors: c.regressors.clone(),
            };
            fs::write(dir.join(format!("{tag}.regressors.json")), serde_json::to_string(&side)?)?;
        }
        Ok(())
    }

    fn manifest_text(&self) -> String {
        let ranks: Vec<String> = self.ranks().iter().map(|r| r.to_string()).collect();
        let lcs: Vec<&str> = self.manifest.load_cases.iter().map(|l| l.tag()).collect();
        let f = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        format!(
            "format = {BUNDLE_FORMAT}\nbackend = {}\nsample_hash = {}\nseed = {}\nn_train = {}\nn_elements = {}\nload_cases = {}\nranks = {}\nlower = {}\nupper = {}\n",
            self.backend,
            self.manifest.sample_hash,
            self.manifest.seed,
            self.manifest.n_train,
            self.manifest.n_elements,
            lcs.join(","),
            ranks.join(","),
            f(&self.normalizer.lower),
            f(&self.normalizer.upper),
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let kv = parse_key_values(&fs::read_to_string(dir.join("manifest.txt"))?)?;
        if get(&kv, "format")? != BUNDLE_FORMAT {
            return Err(Error::Integrity(format!("unsupported bundle format '{}'", get(&kv, "format")?)));
        }
        let list = |key: &str| -> Result<Vec<f64>> {
            get(&kv, key)?.split(',').map(|t| t.trim().parse().map_err(|_| Error::Parse(format!("bad number in '{key}'")))).collect()
        };
        let backend: Backend = get(&kv, "backend")?.parse()?;
        let n_elements: usize = get_num(&kv, "n_elements")?;
        let load_cases = get(&kv, "load_cases")?
            .split(',')
            .map(|t| LoadCase::from_tag(t.trim()).ok_or_else(|| Error::Parse(format!("unknown load case '{t}'"))))
            .collect::<Result<Vec<_>>>()?;
        let ranks: Vec<usize> = list("ranks")?.iter().map(|&r| r as usize).collect();
        if ranks.len() != Component::ALL.len() {
            return Err(Error::Integrity("bundle manifest lists the wrong number of ranks".into()));
        }
        let rows = n_elements * load_cases.len();
        let mut components = Vec::new();
        for (&component, &r) in Component::ALL.iter().zip(&ranks) {
            let tag = component.tag();
            let modes = read_matrix(&dir.join(format!("{tag}.modes.bin")), rows, r)?;
            let side: ComponentFile = serde_json::from_str(&fs::read_to_string(dir.join(format!("{tag}.regressors.json")))?)?;
            if side.regressors.len() != r {
                return Err(Error::Integrity(format!("{tag}: {} regressors for rank {r}", side.regressors.len())));
            }
            let uniform = side.regressors.iter().all(|g| matches!((g, backend), (Regressor::Gpr(_), Backend::Gpr) | (Regressor::Nargpas(_), Backend::Nargpas)));
            if !uniform {
                return Err(Error::Integrity(format!("{tag}: regressor kinds differ from the bundle backend")));
            }
            let basis = PodBasis {
                component: tag.to_string(),
                modes,
                singular_values: side.singular_values,
                spectrum: side.spectrum,
                energy: side.energy,
                n_snapshots: side.n_snapshots,
            };
            components.push(ComponentRom { component, basis, regressors: side.regressors });
        }
        Ok(RomBundle {
            backend,
            normalizer: Normalizer::new(list("lower")?, list("upper")?),
            components,
            manifest: TrainingManifest {
                sample_hash: get(&kv, "sample_hash")?.to_string(),
                seed: get_num(&kv, "seed")?,
                n_train: get_num(&kv, "n_train")?,
                n_elements,
                load_cases,
            },
        })
    }

    /// Content hash of the serialized bundle.
    pub fn digest(&self) -> Result<String> {
        let mut h = Sha256::new();
        h.update(self.manifest_text());
        for c in &self.components {
            for v in c.basis.modes.iter() {
                h.update(v.to_le_bytes());
            }
            h.update(serde_json::to_string(&c.regressors)?);
        }
        Ok(hex::encode(h.finalize()))
    }
}

#[derive(Serialize, Deserialize)]
struct ComponentFile {
    singular_values: Vec<f64>,
    spectrum: Vec<f64>,
    energy: f64,
    n_snapshots: usize,
    regressors: Vec<Regressor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        if values.is_empty() {
            return Summary { mean: f64::NAN, median: f64::NAN, max: f64::NAN };
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        Summary { mean: v.iter().sum::<f64>() / n as f64, median, max: v[n - 1] }
    }
}

/// Relative L2 errors on a test set, per component and for the stacked field.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    /// `per_component[c][j]`, `NaN` where the reference snapshot is zero.
    pub per_component: Vec<Vec<f64>>,
    pub aggregated: Vec<f64>,
}

impl ErrorReport {
    pub fn component_summary(&self, c: usize) -> Summary {
        Summary::of(&finite(&self.per_component[c]))
    }

    pub fn summary(&self) -> Summary {
        Summary::of(&finite(&self.aggregated))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("sample");
        for c in Component::ALL {
            s.push(',');
            s.push_str(c.tag());
        }
        s.push_str(",all\n");
        for j in 0..self.aggregated.len() {
            s.push_str(&j.to_string());
            for c in &self.per_component {
                s.push_str(&format!(",{:e}", c[j]));
            }
            s.push_str(&format!(",{:e}\n", self.aggregated[j]));
        }
        s
    }
}

fn finite(v: &[f64]) -> Vec<f64> {
    v.iter().copied().filter(|x| x.is_finite()).collect()
}

/// `e_j = ||s_j - s^_j|| / ||s_j||` over the snapshots of `test`.
pub fn rom_error(bundle: &RomBundle, test: &[SnapshotSet]) -> Result<ErrorReport> {
    check_sets(test, bundle.manifest.n_elements, &bundle.manifest.load_cases)?;
    let m = test[0].m();
    if bundle.manifest.sample_hash == hash_params(&test[0].params) {
        log::warn!("test samples coincide with the training samples");
    }
    let mut per_component = vec![vec![0.0; m]; test.len()];
    let mut aggregated = vec![0.0; m];
    for j in 0..m {
        let pred = bundle.predict_field(&test[0].params[j])?;
        let (mut num, mut den) = (0.0, 0.0);
        for (c, set) in test.iter().enumerate() {
            let truth = set.snapshots.column(j);
            let p = pred.component(Component::ALL[c]);
            let e: f64 = truth.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
            let n: f64 = truth.iter().map(|a| a * a).sum();
            num += e;
            den += n;
            per_component[c][j] = if n > 0.0 {
                (e / n).sqrt()
            } else {
                log::warn!("{} snapshot {j} is zero; excluded", set.component);
                f64::NAN
            };
        }
        aggregated[j] = if den > 0.0 { (num / den).sqrt() } else { f64::NAN };
    }
    Ok(ErrorReport { per_component, aggregated })
}

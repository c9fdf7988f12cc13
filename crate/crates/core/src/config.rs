//! Pipeline configuration: a TOML file with one flat table per stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{GpConfig, NoiseMode};
use crate::mfgp::{HighKernel, MfConfig};
use crate::optim::{BoConfig, LoopConfig};
use crate::params::ParameterSpace;
use crate::pod::Truncation;
use crate::rom::{Backend, RomConfig};
use crate::store::sha256_hex;
use crate::structeval::{PenaltyConfig, YieldThresholds};
use crate::synthfom::{build_default_mesh, HullMesh, DEFAULT_BENDING_MOMENT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Master seed; every stage derives its own stream from it.
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { seed: 1, out_dir: PathBuf::from("runs/default") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsSection {
    /// Parameter table (`name,region,default,lower,upper,step`). When absent the
    /// built-in 16-parameter hull table is used with `step_mm`.
    pub space_file: Option<PathBuf>,
    pub step_mm: f64,
    /// Training snapshots.
    pub m: usize,
    /// Candidate sets for the maximin selection.
    pub n_sets: usize,
    /// Held-out samples for validation.
    pub m_test: usize,
}

impl Default for ParamsSection {
    fn default() -> Self {
        ParamsSection { space_file: None, step_mm: 0.5, m: 300, n_sets: 64, m_test: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshSection {
    pub elements_per_region: usize,
    pub n_decks: usize,
    pub bending_moment: f64,
}

impl Default for MeshSection {
    fn default() -> Self {
        MeshSection { elements_per_region: 64, n_decks: 18, bending_moment: DEFAULT_BENDING_MOMENT }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RomSection {
    pub backend: Backend,
    /// Truncation rank per component; ignored when `energy` is set.
    pub rank: usize,
    pub energy: Option<f64>,
    pub high_kernel: HighKernel,
    pub restarts: usize,
    pub max_iters: usize,
}

impl Default for RomSection {
    fn default() -> Self {
        RomSection { backend: Backend::Nargpas, rank: 17, energy: None, high_kernel: HighKernel::Composite, restarts: 8, max_iters: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StructSection {
    pub sigma_limit: f64,
    pub tau_limit: f64,
    pub vm_limit: f64,
    pub m_bs: f64,
    pub c_y: f64,
    pub c_b: f64,
    pub n_max_y: f64,
    pub n_max_b: f64,
    pub histogram_bins: usize,
}

impl Default for StructSection {
    fn default() -> Self {
        let y = YieldThresholds::default();
        let p = PenaltyConfig::default();
        StructSection {
            sigma_limit: y.sigma_limit,
            tau_limit: y.tau_limit,
            vm_limit: y.vm_limit,
            m_bs: p.m_bs,
            c_y: p.c_y,
            c_b: p.c_b,
            n_max_y: p.n_max_y,
            n_max_b: p.n_max_b,
            histogram_bins: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimSection {
    pub budget: usize,
    pub k_enrich: usize,
    pub max_rounds: usize,
    pub tolerance: f64,
    pub pool_uniform: usize,
    pub pool_local: usize,
    pub refit_every: usize,
    pub surrogate_restarts: usize,
    pub refit_restarts: usize,
}

impl Default for OptimSection {
    fn default() -> Self {
        let b = BoConfig::default();
        OptimSection {
            budget: b.budget,
            k_enrich: 4,
            max_rounds: 5,
            tolerance: 1e-6,
            pool_uniform: b.pool_uniform,
            pool_local: b.pool_local,
            refit_every: b.refit_every,
            surrogate_restarts: b.surrogate.restarts,
            refit_restarts: b.refit_restarts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub run: RunSection,
    pub params: ParamsSection,
    pub mesh: MeshSection,
    pub rom: RomSection,
    pub structeval: StructSection,
    pub optim: OptimSection,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(vec![e.message().to_string()]))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
        PipelineConfig::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hash of the canonical serialization, recorded in artifact manifests.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_toml().as_bytes())
    }

    /// Hash of the sections that determine the full-order snapshots.
    pub fn simulation_hash(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            seed: u64,
            params: &'a ParamsSection,
            mesh: &'a MeshSection,
        }
        let key = Key { seed: self.run.seed, params: &self.params, mesh: &self.mesh };
        sha256_hex(toml::to_string(&key).expect("sections serialize").as_bytes())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.run.out_dir)
    }

    /// Lists every violation at once.
    pub fn validate(&self) -> Result<()> {
        let mut e = Vec::new();
        let p = &self.params;
        if let Some(f) = &p.space_file {
            if !self.resolve(f).is_file() {
                e.push(format!("params.space_file {} does not exist", self.resolve(f).display()));
            }
        } else if !(p.step_mm > 0.0) {
            e.push("params.step_mm must be positive".into());
        }
        if p.m < 2 {
            e.push("params.m must be at least 2".into());
        }
        if p.m_test == 1 {
            e.push("params.m_test must be 0 or at least 2".into());
        }
        if p.n_sets == 0 {
            e.push("params.n_sets must be at least 1".into());
        }
        if self.mesh.elements_per_region == 0 {
            e.push("mesh.elements_per_region must be at least 1".into());
        }
        if self.mesh.n_decks < 2 {
            e.push("mesh.n_decks must be at least 2".into());
        }
        if !(self.mesh.bending_moment > 0.0) {
            e.push("mesh.bending_moment must be positive".into());
        }
        let r = &self.rom;
        match r.energy {
            Some(x) if !(x > 0.0 && x <= 1.0) => e.push("rom.energy must lie in (0, 1]".into()),
            None if r.rank == 0 || r.rank > p.m => e.push(format!("rom.rank must lie in 1..={}", p.m)),
            _ => {}
        }
        if r.restarts == 0 || r.max_iters == 0 {
            e.push("rom.restarts and rom.max_iters must be at least 1".into());
        }
        let s = &self.structeval;
        if !(s.sigma_limit > 0.0 && s.tau_limit > 0.0 && s.vm_limit > 0.0) {
            e.push("structeval limits must be positive".into());
        }
        if let Err(v) = self.penalty().validate() {
            e.extend(v.into_iter().map(|m| format!("structeval.{m}")));
        }
        if s.histogram_bins == 0 {
            e.push("structeval.histogram_bins must be at least 1".into());
        }
        let o = &self.optim;
        if o.budget == 0 {
            e.push("optim.budget must be at least 1".into());
        }
        if o.max_rounds == 0 {
            e.push("optim.max_rounds must be at least 1".into());
        }
        if !(o.tolerance >= 0.0) {
            e.push("optim.tolerance must be non-negative".into());
        }
        if o.pool_uniform + o.pool_local == 0 {
            e.push("optim pool sizes must not both be zero".into());
        }
        if o.refit_every == 0 || o.surrogate_restarts == 0 || o.refit_restarts == 0 {
            e.push("optim.refit_every and restart counts must be at least 1".into());
        }
        if e.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(e))
        }
    }

    pub fn space(&self) -> Result<ParameterSpace> {
        match &self.params.space_file {
            Some(f) => ParameterSpace::read(&self.resolve(f)),
            None => Ok(ParameterSpace::hull16(self.params.step_mm)),
        }
    }

    pub fn mesh(&self, space: &ParameterSpace) -> Result<HullMesh> {
        let mut mesh = build_default_mesh(space, self.mesh.elements_per_region, self.mesh.n_decks)?;
        mesh.bending_moment = self.mesh.bending_moment;
        Ok(mesh)
    }

    pub fn thresholds(&self) -> YieldThresholds {
        let s = &self.structeval;
        YieldThresholds { sigma_limit: s.sigma_limit, tau_limit: s.tau_limit, vm_limit: s.vm_limit }
    }

    pub fn penalty(&self) -> PenaltyConfig {
        let s = &self.structeval;
        PenaltyConfig { m_bs: s.m_bs, c_y: s.c_y, c_b: s.c_b, n_max_y: s.n_max_y, n_max_b: s.n_max_b }
    }

    pub fn rom_config(&self) -> RomConfig {
        let r = &self.rom;
        let truncation = match r.energy {
            Some(x) => Truncation::Energy(x),
            None => Truncation::Rank(r.rank),
        };
        let gp = |noise| GpConfig { noise, restarts: r.restarts, max_iters: r.max_iters, ..GpConfig::default() };
        RomConfig {
            truncation,
            gpr: gp(NoiseMode::Fixed(0.0)),
            nargpas: MfConfig { high_kernel: r.high_kernel, high: gp(NoiseMode::Fixed(0.0)), low: gp(NoiseMode::Fitted) },
        }
    }

    pub fn loop_config(&self) -> LoopConfig {
        let o = &self.optim;
        LoopConfig {
            backend: self.rom.backend,
            rom: self.rom_config(),
            bo: BoConfig {
                budget: o.budget,
                pool_uniform: o.pool_uniform,
                pool_local: o.pool_local,
                refit_every: o.refit_every,
                surrogate: GpConfig { restarts: o.surrogate_restarts, ..GpConfig::default() },
                refit_restarts: o.refit_restarts,
            },
            k_enrich: o.k_enrich,
            max_rounds: o.max_rounds,
            tolerance: o.tolerance,
            thresholds: self.thresholds(),
            penalty: self.penalty(),
        }
    }
}

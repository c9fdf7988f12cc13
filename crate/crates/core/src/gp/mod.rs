//! Gaussian process regression with zero prior mean on standardized targets.
//!
//! Hyperparameters (kernel parameters and, optionally, the noise variance)
//! maximize the log marginal likelihood through multi-start L-BFGS in log
//! space. Restart 0 starts from a data-scaled default (or a warm start), the
//! others from log-uniform draws of a per-restart ChaCha stream.

mod kernel;
pub(crate) mod linalg;
pub(crate) mod optimize;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use kernel::{Kernel, KernelKind};

use crate::error::{arg, Error, Result};
use crate::rng;

const LN_2PI: f64 = 1.837_877_066_409_345_3;
const MAX_JITTER_STEPS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseMode {
    /// Noise variance held fixed, relative to the target variance. `Fixed(0.0)`
    /// is an interpolating GP.
    Fixed(f64),
    /// Noise variance fitted within `[1e-10, 1e-1]` times the target variance.
    Fitted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    pub kind: KernelKind,
    pub noise: NoiseMode,
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// Starting kernel and (standardized) noise for restart 0.
    #[serde(skip)]
    pub warm_start: Option<(Kernel, f64)>,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            kind: KernelKind::SquaredExponential,
            noise: NoiseMode::Fitted,
            restarts: 8,
            max_iters: 200,
            seed: 0,
            warm_start: None,
        }
    }
}

impl GpConfig {
    pub fn noiseless() -> Self {
        GpConfig { noise: NoiseMode::Fixed(0.0), ..Default::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Fitted GP. Serializes hyperparameters, standardization constants and the
/// training data; the factorization is rebuilt on load without refitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GpData", into = "GpData")]
pub struct GpModel {
    kernel: Kernel,
    /// Noise variance on the standardized scale.
    noise_variance: f64,
    jitter: f64,
    d: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    log_likelihood: f64,
    chol: Vec<f64>,
    alpha: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GpData {
    kernel: Kernel,
    noise_variance: f64,
    jitter: f64,
    d: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    log_likelihood: f64,
}

impl From<GpModel> for GpData {
    fn from(m: GpModel) -> Self {
        GpData {
            kernel: m.kernel,
            noise_variance: m.noise_variance,
            jitter: m.jitter,
            d: m.d,
            x: m.x,
            y: m.y,
            y_mean: m.y_mean,
            y_scale: m.y_scale,
            log_likelihood: m.log_likelihood,
        }
    }
}

impl TryFrom<GpData> for GpModel {
    type Error = Error;

    fn try_from(g: GpData) -> Result<Self> {
        let n = g.y.len();
        if g.x.len() != n * g.d || g.kernel.input_dim() != g.d {
            return Err(Error::Parse("inconsistent stored GP dimensions".into()));
        }
        let ys = standardize(&g.y, g.y_mean, g.y_scale);
        let mut k = g.kernel.evaluator().gram(&g.x, n, g.d);
        for i in 0..n {
            k[i * n + i] += g.noise_variance + g.jitter;
        }
        let kmat = k.clone();
        if !linalg::cholesky_in_place(&mut k, n) {
            return Err(Error::Conditioning("stored GP no longer factorizes".into()));
        }
        let alpha = refined_solve(&kmat, &k, n, &ys);
        Ok(GpModel {
            kernel: g.kernel,
            noise_variance: g.noise_variance,
            jitter: g.jitter,
            d: g.d,
            x: g.x,
            y: g.y,
            y_mean: g.y_mean,
            y_scale: g.y_scale,
            log_likelihood: g.log_likelihood,
            chol: k,
            alpha,
        })
    }
}

fn standardize(y: &[f64], mean: f64, scale: f64) -> Vec<f64> {
    y.iter().map(|v| (v - mean) / scale).collect()
}

fn mean_and_scale(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    let scale = if sd > 1e-12 * mean.abs().max(1e-300) && sd > 0.0 { sd } else { 1.0 };
    (mean, scale)
}

/// Factors `k` (row-major, `n x n`) in place, adding escalating diagonal jitter
/// `1e-6 * trace / n * 10^s` for `s = 0..4` when needed. Returns the jitter used.
fn factor_with_jitter(k: &[f64], n: usize) -> Option<(Vec<f64>, f64)> {
    let mut l = k.to_vec();
    if linalg::cholesky_in_place(&mut l, n) {
        return Some((l, 0.0));
    }
    let trace: f64 = (0..n).map(|i| k[i * n + i]).sum();
    let mut jitter = 1e-6 * trace / n as f64;
    for _ in 0..MAX_JITTER_STEPS {
        l.copy_from_slice(k);
        for i in 0..n {
            l[i * n + i] += jitter;
        }
        if linalg::cholesky_in_place(&mut l, n) {
            log::debug!("kernel matrix factorized with jitter {jitter:e}");
            return Some((l, jitter));
        }
        jitter *= 10.0;
    }
    None
}

/// `K^{-1} b` with one step of iterative refinement.
fn refined_solve(kmat: &[f64], l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut a = b.to_vec();
    linalg::cholesky_solve(l, n, &mut a);
    let mut r: Vec<f64> = (0..n).map(|i| b[i] - linalg::dot(&kmat[i * n..(i + 1) * n], &a)).collect();
    linalg::cholesky_solve(l, n, &mut r);
    for (ai, ri) in a.iter_mut().zip(&r) {
        *ai += ri;
    }
    a
}

struct Problem<'a> {
    kind: KernelKind,
    d: usize,
    n: usize,
    x: &'a [f64],
    ys: &'a [f64],
    noise: NoiseMode,
}

impl Problem<'_> {
    fn n_kernel(&self) -> usize {
        self.kind.n_params(self.d)
    }

    fn split(&self, theta: &[f64]) -> (Kernel, f64) {
        let kernel = Kernel::from_log_params(self.kind, self.d, &theta[..self.n_kernel()]);
        let noise = match self.noise {
            NoiseMode::Fixed(v) => v,
            NoiseMode::Fitted => theta[self.n_kernel()].exp(),
        };
        (kernel, noise)
    }

    /// Negative log marginal likelihood and its gradient in log space.
    fn objective(&self, theta: &[f64]) -> Option<(f64, Vec<f64>)> {
        let n = self.n;
        let (kernel, noise) = self.split(theta);
        let ev = kernel.evaluator();
        let mut k = ev.gram(self.x, n, self.d);
        for i in 0..n {
            k[i * n + i] += noise;
        }
        let (l, _) = factor_with_jitter(&k, n)?;
        let mut alpha = self.ys.to_vec();
        linalg::cholesky_solve(&l, n, &mut alpha);
        let logdet: f64 = (0..n).map(|i| l[i * n + i].ln()).sum();
        let lml = -0.5 * linalg::dot(self.ys, &alpha) - logdet - 0.5 * n as f64 * LN_2PI;
        let mut w = linalg::cholesky_inverse(&l, n);
        for i in 0..n {
            for j in 0..n {
                w[i * n + j] = alpha[i] * alpha[j] - w[i * n + j];
            }
        }
        let mut grad = vec![0.0; theta.len()];
        ev.gradient(self.x, n, self.d, &w, &mut grad);
        if let NoiseMode::Fitted = self.noise {
            let tr: f64 = (0..n).map(|i| w[i * n + i]).sum();
            grad[self.n_kernel()] = 0.5 * noise * tr;
        }
        if !lml.is_finite() {
            return None;
        }
        Some((-lml, grad.into_iter().map(|g| -g).collect()))
    }
}

fn flatten(x: &[Vec<f64>]) -> Result<(Vec<f64>, usize)> {
    let d = x.first().map_or(0, Vec::len);
    if d == 0 {
        return arg("inputs must be non-empty vectors");
    }
    if x.iter().any(|r| r.len() != d) {
        return arg("inputs have inconsistent dimensions");
    }
    Ok((x.iter().flatten().copied().collect(), d))
}

/// Fits a GP by maximizing the log marginal likelihood.
pub fn fit_gp(x: &[Vec<f64>], y: &[f64], cfg: &GpConfig) -> Result<GpModel> {
    if x.is_empty() {
        return arg("at least one training point is required");
    }
    if x.len() != y.len() {
        return arg("inputs and targets differ in length");
    }
    let (flat, d) = flatten(x)?;
    if flat.iter().chain(y).any(|v| !v.is_finite()) {
        return arg("training data must be finite");
    }
    if cfg.kind == KernelKind::NargpComposite && d < 2 {
        return arg("the composite kernel needs at least one parameter input plus the fidelity input");
    }
    let n = y.len();
    let (y_mean, y_scale) = mean_and_scale(y);
    let ys = standardize(y, y_mean, y_scale);
    let ranges: Vec<f64> = (0..d)
        .map(|k| {
            let (lo, hi) = (0..n).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), i| {
                (a.min(flat[i * d + k]), b.max(flat[i * d + k]))
            });
            if hi - lo > 1e-12 {
                hi - lo
            } else {
                1.0
            }
        })
        .collect();
    let problem = Problem { kind: cfg.kind, d, n, x: &flat, ys: &ys, noise: cfg.noise };
    let (mut lo, mut hi) = cfg.kind.bounds(&ranges);
    let (mut rlo, mut rhi) = cfg.kind.restart_box(&ranges);
    let mut init = cfg.kind.initial(&ranges);
    if let NoiseMode::Fitted = cfg.noise {
        lo.push(1e-10f64.ln());
        hi.push(1e-1f64.ln());
        rlo.push(1e-8f64.ln());
        rhi.push(1e-2f64.ln());
        init.push(1e-4f64.ln());
    }
    if let Some((k, noise)) = &cfg.warm_start {
        if k.kind() == cfg.kind && k.input_dim() == d {
            init = k.to_log_params();
            if let NoiseMode::Fitted = cfg.noise {
                init.push(noise.max(1e-10).ln());
            }
        }
    }
    let restarts = cfg.restarts.max(1);
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    for r in 0..restarts {
        let start: Vec<f64> = if r == 0 {
            init.clone()
        } else {
            let mut g = rng::stream(cfg.seed, r as u64);
            rlo.iter().zip(&rhi).map(|(a, b)| g.gen_range(*a..=*b)).collect()
        };
        let Some(out) = optimize::minimize(|t| problem.objective(t), &start, &lo, &hi, cfg.max_iters) else {
            continue;
        };
        let lml = -out.value;
        log::trace!("restart {r}: log likelihood {lml:.6} after {} iterations", out.iterations);
        let noise = problem.split(&out.x).1;
        let better = match &best {
            None => true,
            Some((bl, bn, _)) => lml > *bl || (lml == *bl && noise < *bn),
        };
        if better {
            best = Some((lml, noise, out.x));
        }
    }
    let Some((lml, _, theta)) = best else {
        return Err(Error::Conditioning(format!("no restart produced a factorizable kernel matrix (n = {n})")));
    };
    let (kernel, noise) = problem.split(&theta);
    build(kernel, noise, flat, d, y.to_vec(), y_mean, y_scale, lml)
}

#[allow(clippy::too_many_arguments)]
fn build(kernel: Kernel, noise: f64, x: Vec<f64>, d: usize, y: Vec<f64>, y_mean: f64, y_scale: f64, lml: f64) -> Result<GpModel> {
    let n = y.len();
    let ys = standardize(&y, y_mean, y_scale);
    let mut k = kernel.evaluator().gram(&x, n, d);
    for i in 0..n {
        k[i * n + i] += noise;
    }
    let (l, jitter) = factor_with_jitter(&k, n)
        .ok_or_else(|| Error::Conditioning(format!("Cholesky failed after {MAX_JITTER_STEPS} jitter escalations")))?;
    for i in 0..n {
        k[i * n + i] += jitter;
    }
    let alpha = refined_solve(&k, &l, n, &ys);
    Ok(GpModel { kernel, noise_variance: noise, jitter, d, x, y, y_mean, y_scale, log_likelihood: lml, chol: l, alpha })
}

/// Conditions a GP with given hyperparameters on data, without any search.
pub fn condition(kernel: Kernel, noise_variance: f64, x: &[Vec<f64>], y: &[f64]) -> Result<GpModel> {
    if x.is_empty() || x.len() != y.len() {
        return arg("need matching, non-empty inputs and targets");
    }
    let (flat, d) = flatten(x)?;
    if kernel.input_dim() != d {
        return arg("kernel dimension does not match inputs");
    }
    let (m, s) = mean_and_scale(y);
    build(kernel, noise_variance, flat, d, y.to_vec(), m, s, f64::NAN)
}

impl GpModel {
    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn n_train(&self) -> usize {
        self.y.len()
    }

    /// Noise variance on the standardized scale.
    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    /// Target mean and scale used for standardization.
    pub fn standardization(&self) -> (f64, f64) {
        (self.y_mean, self.y_scale)
    }

    pub fn train_inputs(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks(self.d)
    }

    pub fn train_targets(&self) -> &[f64] {
        &self.y
    }

    /// Prior variance of a noisy observation in target units.
    pub fn prior_variance(&self) -> f64 {
        self.y_scale * self.y_scale * (self.kernel.prior_variance() + self.noise_variance)
    }

    fn check_dim(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.d {
            return arg(format!("query has dimension {}, model expects {}", q.len(), self.d));
        }
        Ok(())
    }

    fn cross(&self, q: &[f64]) -> Vec<f64> {
        let ev = self.kernel.evaluator();
        self.x.chunks(self.d).map(|xi| ev.eval(q, xi)).collect()
    }

    pub fn predict_mean(&self, q: &[f64]) -> Result<f64> {
        self.check_dim(q)?;
        Ok(self.y_mean + self.y_scale * linalg::dot(&self.cross(q), &self.alpha))
    }

    /// Posterior mean and variance (of a noisy observation) at `q`.
    pub fn predict(&self, q: &[f64]) -> Result<(f64, f64)> {
        self.check_dim(q)?;
        let mut k = self.cross(q);
        let mean = self.y_mean + self.y_scale * linalg::dot(&k, &self.alpha);
        linalg::forward_solve(&self.chol, self.n_train(), &mut k);
        let var = self.kernel.prior_variance() - linalg::dot(&k, &k) + self.noise_variance;
        Ok((mean, self.y_scale * self.y_scale * var.max(0.0)))
    }

    /// Analytic gradient of the posterior mean with respect to the input.
    pub fn mean_gradient(&self, q: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(q)?;
        let Kernel::SquaredExponential { lengthscales, .. } = &self.kernel else {
            return Err(Error::Capability("mean gradients need the squared exponential kernel".into()));
        };
        let ev = self.kernel.evaluator();
        let inv: Vec<f64> = lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
        let mut g = vec![0.0; self.d];
        for (xi, &a) in self.x.chunks(self.d).zip(&self.alpha) {
            let w = a * ev.eval(q, xi);
            for k in 0..self.d {
                g[k] -= w * (q[k] - xi[k]) * inv[k];
            }
        }
        for v in &mut g {
            *v *= self.y_scale;
        }
        Ok(g)
    }
}

/// Predictions at several queries.
pub fn predict(model: &GpModel, queries: &[Vec<f64>]) -> Result<Vec<(f64, f64)>> {
    queries.iter().map(|q| model.predict(q)).collect()
}

pub fn mean_gradient(model: &GpModel, q: &[f64]) -> Result<Vec<f64>> {
    model.mean_gradient(q)
}

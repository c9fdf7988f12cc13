//! Two-level nonlinear autoregressive Gaussian process whose low fidelity is
//! an active-subspace ridge surface, extended constantly along the inactive
//! directions. The low fidelity is built from the same training data, so no
//! extra full-order solves are needed.

use serde::{Deserialize, Serialize};

use crate::asub::{compute_active_subspace, fit_ridge_surface, gradients_at, RidgeSurface};
use crate::error::{arg, Result};
use crate::gp::{fit_gp, GpConfig, GpModel, KernelKind, NoiseMode};
use crate::params::Normalizer;
use crate::rng::derive_seed;

/// Kernel used on the augmented `(mu, f_L)` input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HighKernel {
    Composite,
    Ard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfConfig {
    pub high_kernel: HighKernel,
    /// High-fidelity GP settings (kind is taken from `high_kernel`).
    pub high: GpConfig,
    /// Settings for the gradient surrogate and the ridge surface.
    pub low: GpConfig,
}

impl Default for MfConfig {
    fn default() -> Self {
        MfConfig {
            high_kernel: HighKernel::Composite,
            high: GpConfig::noiseless(),
            low: GpConfig { noise: NoiseMode::Fitted, ..GpConfig::default() },
        }
    }
}

/// `f_L(mu) = g'(W_1^T normalize(mu))`, reported on a standardized scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowFidelityExtension {
    pub ridge: RidgeSurface,
    shift: f64,
    scale: f64,
}

impl LowFidelityExtension {
    pub fn eval(&self, mu: &[f64]) -> Result<f64> {
        Ok(self.ridge.eval(mu)?)
    }

    fn feature(&self, mu: &[f64]) -> Result<f64> {
        Ok((self.eval(mu)? - self.shift) / self.scale)
    }
}

pub fn build_low_fidelity(ridge: RidgeSurface) -> LowFidelityExtension {
    let (shift, scale) = ridge.surface.standardization();
    LowFidelityExtension { ridge, shift, scale }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfCoefficientModel {
    pub low: LowFidelityExtension,
    pub high: GpModel,
}

impl MfCoefficientModel {
    fn augmented(&self, mu: &[f64]) -> Result<Vec<f64>> {
        let mut x = mu.to_vec();
        x.push(self.low.feature(mu)?);
        Ok(x)
    }

    pub fn predict(&self, mu: &[f64]) -> Result<(f64, f64)> {
        self.high.predict(&self.augmented(mu)?)
    }

    pub fn predict_mean(&self, mu: &[f64]) -> Result<f64> {
        self.high.predict_mean(&self.augmented(mu)?)
    }
}

/// Fits the two-level model on inputs already normalized to `[-1, 1]^d`.
///
/// `gradient_model`, if given, must be an SE model of `values` on `samples`;
/// it supplies the gradients for the active subspace instead of a fresh fit.
pub fn fit_nargpas(samples: &[Vec<f64>], values: &[f64], cfg: &MfConfig, seed: u64, gradient_model: Option<&GpModel>) -> Result<MfCoefficientModel> {
    let d = samples.first().map_or(0, Vec::len);
    if samples.len() < d + 2 {
        return arg(format!("need at least {} samples for {d} inputs", d + 2));
    }
    if samples.len() != values.len() {
        return arg("samples and values differ in length");
    }
    let fresh;
    let grad_model = match gradient_model {
        Some(m) => m,
        None => {
            let c = GpConfig { kind: KernelKind::SquaredExponential, seed: derive_seed(seed, 0), ..cfg.low.clone() };
            fresh = fit_gp(samples, values, &c)?;
            &fresh
        }
    };
    let grads = gradients_at(grad_model, samples)?;
    let subspace = compute_active_subspace(&grads, Normalizer::identity(d), 1)?;
    let ridge_cfg = GpConfig { seed: derive_seed(seed, 1), warm_start: None, ..cfg.low.clone() };
    let ridge = fit_ridge_surface(subspace, samples, values, &ridge_cfg)?;
    let low = build_low_fidelity(ridge);
    let mut x = Vec::with_capacity(samples.len());
    for s in samples {
        let mut v = s.clone();
        v.push(low.feature(s)?);
        x.push(v);
    }
    let kind = match cfg.high_kernel {
        HighKernel::Composite => KernelKind::NargpComposite,
        HighKernel::Ard => KernelKind::SquaredExponential,
    };
    let high_cfg = GpConfig { kind, seed: derive_seed(seed, 2), ..cfg.high.clone() };
    let high = fit_gp(&x, values, &high_cfg)?;
    Ok(MfCoefficientModel { low, high })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(n: usize, d: usize) -> Vec<Vec<f64>> {
        let mut g = crate::rng::stream(11, 0);
        use rand::Rng;
        (0..n).map(|_| (0..d).map(|_| g.gen_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn inactive_invariance_and_interpolation() {
        let x = design(20, 3);
        let y: Vec<f64> = x.iter().map(|v| (v[0] + 0.5 * v[1]).sin() + 0.1 * v[2] * v[2]).collect();
        let m = fit_nargpas(&x, &y, &MfConfig::default(), 4, None).unwrap();
        let w = m.low.ridge.subspace.direction(0);
        let inactive = m.low.ridge.subspace.direction(1);
        let p = [0.1, -0.2, 0.05];
        let q: Vec<f64> = p.iter().zip(&inactive).map(|(a, b)| a + 0.3 * b).collect();
        assert!((m.low.eval(&p).unwrap() - m.low.eval(&q).unwrap()).abs() < 1e-12);
        assert!(w.iter().map(|v| v * v).sum::<f64>() > 0.99);
        for (xi, yi) in x.iter().zip(&y) {
            assert!((m.predict_mean(xi).unwrap() - yi).abs() < 1e-6);
        }
        for i in 0..200 {
            let t = i as f64 / 100.0 - 1.0;
            assert!(m.predict(&[t, -t, 0.5 * t]).unwrap().1 >= 0.0);
        }
    }

    #[test]
    fn ard_switch() {
        let x = design(15, 2);
        let y: Vec<f64> = x.iter().map(|v| v[0] - v[1]).collect();
        let cfg = MfConfig { high_kernel: HighKernel::Ard, ..MfConfig::default() };
        let m = fit_nargpas(&x, &y, &cfg, 1, None).unwrap();
        assert_eq!(m.high.kernel().kind(), KernelKind::SquaredExponential);
        assert_eq!(m.high.input_dim(), 3);
    }

    #[test]
    fn too_few_samples() {
        let x = design(4, 3);
        assert!(fit_nargpas(&x, &[0.0; 4], &MfConfig::default(), 0, None).is_err());
    }
}

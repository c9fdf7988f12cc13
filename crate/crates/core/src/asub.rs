//! Active subspaces from gradient samples and one-dimensional ridge surfaces.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::gp::{fit_gp, GpConfig, GpModel, KernelKind};
use crate::params::Normalizer;

const BOUNDS_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveSubspace {
    /// Uncentered gradient covariance, row-major `d x d`.
    pub q: Vec<f64>,
    /// Eigenvectors as columns, row-major `d x d`, by descending eigenvalue.
    pub w: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub r_active: usize,
    pub normalizer: Normalizer,
}

impl ActiveSubspace {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Column `k` of `W`.
    pub fn direction(&self, k: usize) -> Vec<f64> {
        let d = self.dim();
        (0..d).map(|i| self.w[i * d + k]).collect()
    }

    pub fn with_rank(mut self, r_active: usize) -> Result<Self> {
        if r_active == 0 || r_active > self.dim() {
            return arg(format!("active rank {r_active} outside 1..={}", self.dim()));
        }
        self.r_active = r_active;
        Ok(self)
    }
}

/// Fits an SE Gaussian process on normalized inputs and returns its mean
/// gradient (with respect to the normalized inputs) at every sample.
pub fn estimate_gradient_samples(samples: &[Vec<f64>], values: &[f64], normalizer: &Normalizer, cfg: &GpConfig) -> Result<Vec<Vec<f64>>> {
    let d = normalizer.dim();
    if samples.len() < d + 2 {
        return arg(format!("need at least {} samples for {d} inputs", d + 2));
    }
    let x: Vec<Vec<f64>> = samples.iter().map(|s| normalizer.to_unit(s)).collect();
    let cfg = GpConfig { kind: KernelKind::SquaredExponential, ..cfg.clone() };
    let model = fit_gp(&x, values, &cfg)?;
    gradients_at(&model, &x)
}

/// Mean gradients of an already fitted model at the given (model-space) inputs.
pub fn gradients_at(model: &GpModel, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    x.iter().map(|xi| model.mean_gradient(xi)).collect()
}

/// `Q = (1/N) sum g g^T` and its descending eigendecomposition. Each
/// eigenvector is signed so its largest-magnitude entry is positive.
pub fn compute_active_subspace(gradients: &[Vec<f64>], normalizer: Normalizer, r_active: usize) -> Result<ActiveSubspace> {
    let Some(first) = gradients.first() else {
        return arg("no gradient samples");
    };
    let d = first.len();
    if d == 0 || gradients.iter().any(|g| g.len() != d) {
        return arg("gradient samples have inconsistent dimensions");
    }
    if gradients.iter().flatten().any(|v| !v.is_finite()) {
        return arg("gradient samples must be finite");
    }
    if normalizer.dim() != d {
        return arg("normalizer dimension does not match gradients");
    }
    if r_active == 0 || r_active > d {
        return arg(format!("active rank {r_active} outside 1..={d}"));
    }
    let n = gradients.len() as f64;
    let mut q = vec![0.0; d * d];
    for g in gradients {
        for i in 0..d {
            for j in 0..=i {
                q[i * d + j] += g[i] * g[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            let v = q[i * d + j] / n;
            q[i * d + j] = v;
            q[j * d + i] = v;
        }
    }
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, &q));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut w = vec![0.0; d * d];
    let mut eigenvalues = Vec::with_capacity(d);
    for (c, &k) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(k);
        let sign = if col[col.iamax()] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..d {
            w[i * d + c] = sign * col[i];
        }
        eigenvalues.push(eig.eigenvalues[k]);
    }
    Ok(ActiveSubspace { q, w, eigenvalues, r_active, normalizer })
}

/// `eta = W_r^T normalize(mu)`.
pub fn project_active(space: &ActiveSubspace, mu: &[f64]) -> Result<Vec<f64>> {
    let d = space.dim();
    if mu.len() != d {
        return arg(format!("point has dimension {}, subspace expects {d}", mu.len()));
    }
    let u = space.normalizer.to_unit(mu);
    if u.iter().any(|v| !(v.abs() <= 1.0 + BOUNDS_SLACK)) {
        return arg("point outside the parameter box");
    }
    Ok((0..space.r_active).map(|k| (0..d).map(|i| space.w[i * d + k] * u[i]).sum()).collect())
}

/// Gaussian process `g'` over the active variable of a rank-1 subspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeSurface {
    pub subspace: ActiveSubspace,
    pub surface: GpModel,
}

impl RidgeSurface {
    pub fn eval(&self, mu: &[f64]) -> Result<f64> {
        let eta = project_active(&self.subspace, mu)?;
        self.surface.predict_mean(&eta)
    }
}

pub fn fit_ridge_surface(subspace: ActiveSubspace, samples: &[Vec<f64>], values: &[f64], cfg: &GpConfig) -> Result<RidgeSurface> {
    if subspace.r_active != 1 {
        return arg("ridge surfaces need a one-dimensional active subspace");
    }
    let eta = samples.iter().map(|s| project_active(&subspace, s)).collect::<Result<Vec<_>>>()?;
    let cfg = GpConfig { kind: KernelKind::SquaredExponential, ..cfg.clone() };
    let surface = fit_gp(&eta, values, &cfg)?;
    Ok(RidgeSurface { subspace, surface })
}

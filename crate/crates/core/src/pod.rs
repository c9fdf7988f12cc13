//! Proper orthogonal decomposition by truncated SVD of the raw snapshot matrix.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};

/// Snapshot matrix `S` (`n x M`, column `j` is the state at `params[j]`).
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub component: String,
    pub params: Vec<Vec<f64>>,
    pub snapshots: DMatrix<f64>,
}

impl SnapshotSet {
    pub fn new(component: impl Into<String>, params: Vec<Vec<f64>>, snapshots: DMatrix<f64>) -> Result<Self> {
        if params.len() != snapshots.ncols() {
            return arg(format!("{} parameter vectors for {} snapshot columns", params.len(), snapshots.ncols()));
        }
        if snapshots.iter().any(|v| !v.is_finite()) {
            return arg("snapshot matrix has non-finite entries");
        }
        Ok(SnapshotSet { component: component.into(), params, snapshots })
    }

    /// Builds the set from individual state vectors.
    pub fn from_columns(component: impl Into<String>, params: Vec<Vec<f64>>, columns: &[Vec<f64>]) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return arg("snapshots differ in length");
        }
        let s = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
        SnapshotSet::new(component, params, s)
    }

    pub fn n(&self) -> usize {
        self.snapshots.nrows()
    }

    pub fn m(&self) -> usize {
        self.snapshots.ncols()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.snapshots.column(j).iter().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Truncation {
    Rank(usize),
    /// Smallest rank whose retained energy fraction reaches the tolerance.
    Energy(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    pub component: String,
    /// Orthonormal modes `Phi` (`n x r`).
    pub modes: DMatrix<f64>,
    /// Retained singular values, descending.
    pub singular_values: Vec<f64>,
    /// All singular values of the snapshot matrix, for decay plots.
    pub spectrum: Vec<f64>,
    /// Retained fraction of `sum sigma_k^2`.
    pub energy: f64,
    pub n_snapshots: usize,
}

impl PodBasis {
    pub fn rank(&self) -> usize {
        self.modes.ncols()
    }

    pub fn n(&self) -> usize {
        self.modes.nrows()
    }
}

/// Relative threshold below which singular values count as zero.
pub const ZERO_TOLERANCE: f64 = 1e-12;

pub fn compute_pod(set: &SnapshotSet, truncation: Truncation) -> Result<PodBasis> {
    let (n, m) = set.snapshots.shape();
    if m < 2 {
        return arg("at least two snapshots are required");
    }
    let max_rank = n.min(m);
    match truncation {
        Truncation::Rank(r) if r == 0 || r > max_rank => {
            return arg(format!("rank {r} outside 1..={max_rank}"));
        }
        Truncation::Energy(e) if !(e > 0.0 && e <= 1.0) => {
            return arg(format!("energy tolerance {e} outside (0, 1]"));
        }
        _ => {}
    }
    let svd = set.snapshots.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let spectrum: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    let total: f64 = spectrum.iter().map(|s| s * s).sum();
    if !(spectrum[0] > 0.0) {
        return arg("snapshot matrix is identically zero");
    }
    let numerical = spectrum.iter().take_while(|&&s| s > ZERO_TOLERANCE * spectrum[0]).count();
    let wanted = match truncation {
        Truncation::Rank(r) => r,
        Truncation::Energy(tol) => {
            let mut acc = 0.0;
            let mut r = spectrum.len();
            for (k, s) in spectrum.iter().enumerate() {
                acc += s * s;
                if acc >= tol * total {
                    r = k + 1;
                    break;
                }
            }
            r
        }
    };
    let r = wanted.min(numerical);
    if r < wanted {
        log::warn!("{}: dropping {} numerically zero modes", set.component, wanted - r);
    }
    let mut modes = DMatrix::zeros(n, r);
    for (c, &k) in order.iter().take(r).enumerate() {
        let mut col = u.column(k).into_owned();
        // deterministic sign: largest-magnitude entry positive
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col.neg_mut();
        }
        modes.set_column(c, &col);
    }
    let kept: f64 = spectrum[..r].iter().map(|s| s * s).sum();
    Ok(PodBasis {
        component: set.component.clone(),
        modes,
        singular_values: spectrum[..r].to_vec(),
        energy: kept / total,
        spectrum,
        n_snapshots: m,
    })
}

/// `C = Phi^T S`.
pub fn project(basis: &PodBasis, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if s.nrows() != basis.n() {
        return arg(format!("state length {} does not match basis length {}", s.nrows(), basis.n()));
    }
    Ok(basis.modes.tr_mul(s))
}

pub fn project_vector(basis: &PodBasis, s: &[f64]) -> Result<Vec<f64>> {
    if s.len() != basis.n() {
        return arg(format!("state length {} does not match basis length {}", s.len(), basis.n()));
    }
    Ok(basis.modes.tr_mul(&DVector::from_column_slice(s)).iter().copied().collect())
}

/// `Phi c`.
pub fn reconstruct(basis: &PodBasis, c: &[f64]) -> Result<Vec<f64>> {
    if c.len() != basis.rank() {
        return arg(format!("{} coefficients for a rank {} basis", c.len(), basis.rank()));
    }
    Ok((&basis.modes * DVector::from_column_slice(c)).iter().copied().collect())
}

/// `||S - Phi Phi^T S||_F^2`.
pub fn residual_energy(basis: &PodBasis, s: &DMatrix<f64>) -> Result<f64> {
    let c = project(basis, s)?;
    Ok((s - &basis.modes * c).norm_squared())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut g = crate::rng::stream(seed, 0);
        DMatrix::from_fn(n, m, |_, _| g.gen_range(-1.0..1.0))
    }

    fn set(s: DMatrix<f64>) -> SnapshotSet {
        let params = (0..s.ncols()).map(|j| vec![j as f64]).collect();
        SnapshotSet::new("sx", params, s).unwrap()
    }

    #[test]
    fn rank_one() {
        let u = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let v = DVector::from_vec(vec![0.3, 1.0, -1.0]);
        let s = &u * v.transpose();
        let b = compute_pod(&set(s.clone()), Truncation::Rank(1)).unwrap();
        assert!(residual_energy(&b, &s).unwrap() < 1e-24 * s.norm_squared());
        assert!((b.energy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_rank_reconstructs() {
        let s = random(200, 50, 3);
        let b = compute_pod(&set(s.clone()), Truncation::Rank(50)).unwrap();
        assert!(residual_energy(&b, &s).unwrap().sqrt() < 1e-8 * s.norm());
        let orth = b.modes.tr_mul(&b.modes) - DMatrix::identity(50, 50);
        assert!(orth.norm() < 1e-10);
    }

    #[test]
    fn energy_truncation_picks_smallest_rank() {
        let s = random(30, 10, 4);
        let full = compute_pod(&set(s.clone()), Truncation::Rank(10)).unwrap();
        let b = compute_pod(&set(s), Truncation::Energy(0.9)).unwrap();
        let r = b.rank();
        let tot: f64 = full.singular_values.iter().map(|x| x * x).sum();
        let part = |k: usize| full.singular_values[..k].iter().map(|x| x * x).sum::<f64>() / tot;
        assert!(part(r) >= 0.9);
        assert!(r == 1 || part(r - 1) < 0.9);
    }

    #[test]
    fn argument_errors() {
        let s = random(5, 4, 1);
        assert!(compute_pod(&set(s.clone()), Truncation::Rank(5)).is_err());
        assert!(compute_pod(&set(s.clone()), Truncation::Energy(0.0)).is_err());
        let b = compute_pod(&set(s), Truncation::Rank(2)).unwrap();
        assert!(project_vector(&b, &[1.0; 4]).is_err());
        assert!(reconstruct(&b, &[1.0; 3]).is_err());
    }

    #[test]
    fn project_basis_vector_and_linearity() {
        let s = random(12, 6, 9);
        let b = compute_pod(&set(s), Truncation::Rank(4)).unwrap();
        let e2: Vec<f64> = b.modes.column(2).iter().copied().collect();
        let c = project_vector(&b, &e2).unwrap();
        for (k, v) in c.iter().enumerate() {
            assert!((v - if k == 2 { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
        assert!(project_vector(&b, &[0.0; 12]).unwrap().iter().all(|v| *v == 0.0));
        let c1 = [1.0, -2.0, 0.5, 0.0];
        let c2 = [0.0, 1.0, 1.0, 3.0];
        let lhs = reconstruct(&b, &[2.0 * c1[0] - c2[0], 2.0 * c1[1] - c2[1], 2.0 * c1[2] - c2[2], 2.0 * c1[3] - c2[3]]).unwrap();
        let r1 = reconstruct(&b, &c1).unwrap();
        let r2 = reconstruct(&b, &c2).unwrap();
        for i in 0..12 {
            assert!((lhs[i] - (2.0 * r1[i] - r2[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_signs() {
        let s = random(20, 8, 2);
        let a = compute_pod(&set(s.clone()), Truncation::Rank(5)).unwrap();
        let b = compute_pod(&set(s), Truncation::Rank(5)).unwrap();
        assert_eq!(a, b);
        for c in 0..5 {
            let col = a.modes.column(c);
            assert!(col[col.iamax()] > 0.0);
        }
    }

    #[test]
    fn numerically_zero_modes_dropped() {
        let u = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let s = &u * DVector::from_vec(vec![1.0, 1.0, 2.0]).transpose();
        let b = compute_pod(&set(s), Truncation::Rank(3)).unwrap();
        assert_eq!(b.rank(), 1);
    }
}

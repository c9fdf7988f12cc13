//! Structural criteria and the penalized mass objective.
//!
//! An element is *yielded* when, for any load case, a normal stress leaves
//! `[-245, 245]` MPa, a shear stress leaves `[-153, 153]` MPa, or the plane
//! stress von Mises value exceeds 307 MPa. It is *buckled* when any of its
//! eleven usage factors exceeds one for any load case. The usage factors come
//! from a simplified elastic plate model documented in `docs/buckling.md`.
//!
//! The objective is
//! `f = m + m_bs * Nb + c_y * (Ny - Ny_max)_+^2 + c_b * (Nb - Nb_max)_+^2`.

use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::synthfom::{HullMesh, StressField, STIFFENER_SPACING_MM};

pub const YOUNG_MODULUS_MPA: f64 = 206_000.0;
pub const POISSON_RATIO: f64 = 0.3;
/// Long edge of every plate panel (web frame spacing).
pub const PANEL_LENGTH_MM: f64 = 2_400.0;
pub const N_USAGE_FACTORS: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YieldThresholds {
    pub sigma_limit: f64,
    pub tau_limit: f64,
    pub vm_limit: f64,
}

impl Default for YieldThresholds {
    fn default() -> Self {
        YieldThresholds { sigma_limit: 245.0, tau_limit: 153.0, vm_limit: 307.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltyConfig {
    /// Mass of one buckling stiffener (kg).
    pub m_bs: f64,
    pub c_y: f64,
    pub c_b: f64,
    pub n_max_y: f64,
    pub n_max_b: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig { m_bs: 2.968, c_y: 1.0, c_b: 0.001, n_max_y: 200.0, n_max_b: 35_000.0 }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut p = Vec::new();
        if !(self.m_bs > 0.0) {
            p.push("penalty.m_bs must be positive".to_string());
        }
        if !(self.c_y >= 0.0 && self.c_b >= 0.0) {
            p.push("penalty coefficients must be non-negative".to_string());
        }
        if !(self.n_max_y >= 0.0 && self.n_max_b >= 0.0) {
            p.push("penalty thresholds must be non-negative".to_string());
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(p)
        }
    }
}

/// Plate panel between stiffeners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateGeometry {
    pub thickness_mm: f64,
    /// Stiffener spacing `b`.
    pub short_edge_mm: f64,
    /// Frame spacing `a`.
    pub long_edge_mm: f64,
}

impl PlateGeometry {
    pub fn with_thickness(thickness_mm: f64) -> Self {
        PlateGeometry { thickness_mm, short_edge_mm: STIFFENER_SPACING_MM, long_edge_mm: PANEL_LENGTH_MM }
    }

    /// Euler reference stress `pi^2 E / (12 (1 - nu^2)) (t / b)^2`.
    pub fn euler_stress(&self) -> f64 {
        let pi2 = std::f64::consts::PI.powi(2);
        pi2 * YOUNG_MODULUS_MPA / (12.0 * (1.0 - POISSON_RATIO * POISSON_RATIO))
            * (self.thickness_mm / self.short_edge_mm).powi(2)
    }
}

pub fn von_mises(sx: f64, sy: f64, txy: f64) -> f64 {
    (sx * sx + sy * sy - sx * sy + 3.0 * txy * txy).max(0.0).sqrt()
}

/// True when the tensor `[sx, sy, sz, txy, txz, tyz]` violates any bound.
pub fn is_yielded(s: &[f64; 6], th: &YieldThresholds) -> bool {
    s[..3].iter().any(|v| v.abs() > th.sigma_limit)
        || s[3..].iter().any(|v| v.abs() > th.tau_limit)
        || von_mises(s[0], s[1], s[3]) > th.vm_limit
}

/// Elements yielded in at least one load case.
pub fn count_yielded(field: &StressField, th: &YieldThresholds) -> usize {
    count_yielded_where(field, th, |_| true)
}

/// Yield count restricted to elements accepted by `keep`.
pub fn count_yielded_where(field: &StressField, th: &YieldThresholds, keep: impl Fn(usize) -> bool) -> usize {
    (0..field.n_elements)
        .filter(|&e| keep(e) && (0..field.load_cases.len()).any(|lc| is_yielded(&field.tensor(lc, e), th)))
        .count()
}

/// The eleven usage factors for one stress tensor `[sx, sy, sz, txy, txz, tyz]`.
///
/// With `sE` the Euler stress, `ax = 4 sE`, `ay = (1 + (b/a)^2)^2 sE`,
/// `ab = 23.9 sE` and `at = (5.34 + 4 (b/a)^2) sE`:
///
/// | # | factor |
/// |---|--------|
/// | 1 | `(-sx)+ / ax` |
/// | 2 | `(-sy)+ / ay` |
/// | 3 | `abs(sx) / ab` |
/// | 4 | `abs(sy) / ab` |
/// | 5 | `abs(txy) / at` |
/// | 6 | `abs(txz) / at` |
/// | 7 | `abs(tyz) / at` |
/// | 8 | `u1 + u2` |
/// | 9 | `u1 + u5` |
/// | 10 | `sqrt(u1^2 + u5^2)` |
/// | 11 | `(-sz)+ / ax` |
pub fn buckling_usage_factors(s: &[f64; 6], geom: &PlateGeometry) -> Result<[f64; N_USAGE_FACTORS]> {
    if !(geom.thickness_mm > 0.0) {
        return arg(format!("plate thickness must be positive, got {}", geom.thickness_mm));
    }
    let se = geom.euler_stress();
    let ratio = (geom.short_edge_mm / geom.long_edge_mm).powi(2);
    let ax = 4.0 * se;
    let ay = (1.0 + ratio).powi(2) * se;
    let ab = 23.9 * se;
    let at = (5.34 + 4.0 * ratio) * se;
    let [sx, sy, sz, txy, txz, tyz] = *s;
    let u1 = (-sx).max(0.0) / ax;
    let u2 = (-sy).max(0.0) / ay;
    let u5 = txy.abs() / at;
    Ok([
        u1,
        u2,
        sx.abs() / ab,
        sy.abs() / ab,
        u5,
        txz.abs() / at,
        tyz.abs() / at,
        u1 + u2,
        u1 + u5,
        (u1 * u1 + u5 * u5).sqrt(),
        (-sz).max(0.0) / ax,
    ])
}

pub fn is_buckled(s: &[f64; 6], geom: &PlateGeometry) -> Result<bool> {
    Ok(buckling_usage_factors(s, geom)?.iter().any(|&u| u > 1.0))
}

/// Elements buckled in at least one load case; `thickness[e]` is the plate
/// thickness of element `e`.
pub fn count_buckled(field: &StressField, thickness: &[f64]) -> Result<usize> {
    count_buckled_where(field, thickness, |_| true)
}

pub fn count_buckled_where(field: &StressField, thickness: &[f64], keep: impl Fn(usize) -> bool) -> Result<usize> {
    if thickness.len() != field.n_elements {
        return arg("one thickness per element is required");
    }
    let mut n = 0;
    for (e, &t) in thickness.iter().enumerate() {
        if !keep(e) {
            continue;
        }
        let geom = PlateGeometry::with_thickness(t);
        for lc in 0..field.load_cases.len() {
            if is_buckled(&field.tensor(lc, e), &geom)? {
                n += 1;
                break;
            }
        }
    }
    Ok(n)
}

/// Penalized objective.
pub fn objective(mass_kg: f64, n_y: f64, n_b: f64, cfg: &PenaltyConfig) -> f64 {
    let py = (n_y - cfg.n_max_y).max(0.0);
    let pb = (n_b - cfg.n_max_b).max(0.0);
    mass_kg + cfg.m_bs * n_b + cfg.c_y * py * py + cfg.c_b * pb * pb
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveEvaluation {
    pub mass_kg: f64,
    pub n_yield: usize,
    pub n_buckle: usize,
    pub f_obj: f64,
    /// Yield and buckle counts per load case.
    pub per_load_case: Vec<(usize, usize)>,
}

/// Evaluates the objective for a field predicted (or solved) at `mu`.
pub fn evaluate(
    mesh: &HullMesh,
    mu: &[f64],
    field: &StressField,
    th: &YieldThresholds,
    cfg: &PenaltyConfig,
) -> Result<ObjectiveEvaluation> {
    if field.n_elements != mesh.n_elements() {
        return arg("stress field does not match the mesh");
    }
    let thickness = mesh.thicknesses(mu);
    let mass = mesh.mass(mu);
    let mut yielded = vec![false; field.n_elements];
    let mut buckled = vec![false; field.n_elements];
    let mut per_load_case = Vec::with_capacity(field.load_cases.len());
    for lc in 0..field.load_cases.len() {
        let (mut y, mut b) = (0, 0);
        for e in 0..field.n_elements {
            let s = field.tensor(lc, e);
            if is_yielded(&s, th) {
                y += 1;
                yielded[e] = true;
            }
            if is_buckled(&s, &PlateGeometry::with_thickness(thickness[e]))? {
                b += 1;
                buckled[e] = true;
            }
        }
        per_load_case.push((y, b));
    }
    let n_yield = yielded.iter().filter(|&&v| v).count();
    let n_buckle = buckled.iter().filter(|&&v| v).count();
    Ok(ObjectiveEvaluation {
        mass_kg: mass,
        n_yield,
        n_buckle,
        f_obj: objective(mass, n_yield as f64, n_buckle as f64, cfg),
        per_load_case,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// Inclusive lower edge of each bin.
    pub lower: Vec<usize>,
    pub width: usize,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn of(values: &[usize], n_bins: usize) -> Self {
        if values.is_empty() {
            return Histogram { lower: vec![], width: 1, counts: vec![] };
        }
        let lo = *values.iter().min().unwrap();
        let hi = *values.iter().max().unwrap();
        let n_bins = n_bins.max(1);
        let width = ((hi - lo + 1) + n_bins - 1) / n_bins;
        let width = width.max(1);
        let bins = (hi - lo) / width + 1;
        let mut counts = vec![0; bins];
        for &v in values {
            counts[(v - lo) / width] += 1;
        }
        Histogram { lower: (0..bins).map(|k| lo + k * width).collect(), width, counts }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_lower,bin_upper,count\n");
        for (l, c) in self.lower.iter().zip(&self.counts) {
            s.push_str(&format!("{},{},{}\n", l, l + self.width - 1, c));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintHistograms {
    pub yielded: Histogram,
    /// Buckle counts of the samples satisfying the yield constraint.
    pub buckled_valid: Histogram,
    pub valid_fraction: f64,
}

pub fn constraint_histograms(evals: &[ObjectiveEvaluation], cfg: &PenaltyConfig, n_bins: usize) -> Result<ConstraintHistograms> {
    if evals.is_empty() {
        return arg("no evaluations to histogram");
    }
    let ny: Vec<usize> = evals.iter().map(|e| e.n_yield).collect();
    let nb: Vec<usize> = evals
        .iter()
        .filter(|e| e.n_yield as f64 <= cfg.n_max_y)
        .map(|e| e.n_buckle)
        .collect();
    if nb.is_empty() {
        log::warn!("no sample satisfies the yield constraint; buckling histogram is empty");
    }
    Ok(ConstraintHistograms {
        yielded: Histogram::of(&ny, n_bins),
        valid_fraction: nb.len() as f64 / evals.len() as f64,
        buckled_valid: Histogram::of(&nb, n_bins),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthfom::{Component, LoadCase};

    #[test]
    fn von_mises_by_hand() {
        assert_eq!(von_mises(245.0, 0.0, 0.0), 245.0);
        assert_eq!(von_mises(100.0, 100.0, 0.0), 100.0);
        assert!((von_mises(0.0, 0.0, 153.0) - 265.00).abs() < 5e-3);
        assert_eq!(von_mises(3.0, -7.0, 2.0), von_mises(-7.0, 3.0, 2.0));
    }

    #[test]
    fn yield_counts() {
        let th = YieldThresholds::default();
        let mut f = StressField::zeros(10, &LoadCase::ALL);
        assert_eq!(count_yielded(&f, &th), 0);
        f.set(Component::Sx, 0, 3, 250.0);
        assert_eq!(count_yielded(&f, &th), 1);
        f.set(Component::Txy, 1, 3, 200.0);
        assert_eq!(count_yielded(&f, &th), 1);
        assert_eq!(count_yielded_where(&f, &th, |e| e != 3), 0);
    }

    #[test]
    fn boundary_values_do_not_yield() {
        let th = YieldThresholds::default();
        assert!(!is_yielded(&[245.0, 0.0, 0.0, 0.0, 0.0, 0.0], &th));
        assert!(is_yielded(&[245.0, -245.0, 0.0, 0.0, 0.0, 0.0], &th));
        assert!(!is_yielded(&[0.0, 0.0, 245.0, 0.0, 153.0, -153.0], &th));
        assert!(is_yielded(&[0.0, 0.0, 0.0, 0.0, 153.1, 0.0], &th));
    }

    #[test]
    fn usage_factor_scaling() {
        let g = PlateGeometry::with_thickness(8.0);
        let s = [-40.0, -10.0, -2.0, 15.0, 3.0, 1.0];
        let u = buckling_usage_factors(&s, &g).unwrap();
        let u2 = buckling_usage_factors(&s, &PlateGeometry::with_thickness(16.0)).unwrap();
        for k in 0..N_USAGE_FACTORS {
            assert!((u[k] / 4.0 - u2[k]).abs() < 1e-14);
        }
        let scaled: [f64; 6] = s.map(|v| 2.5 * v);
        let us = buckling_usage_factors(&scaled, &g).unwrap();
        for k in 0..N_USAGE_FACTORS {
            assert!((us[k] - 2.5 * u[k]).abs() < 1e-12);
        }
        assert_eq!(buckling_usage_factors(&[0.0; 6], &g).unwrap(), [0.0; N_USAGE_FACTORS]);
        assert!(buckling_usage_factors(&s, &PlateGeometry::with_thickness(0.0)).is_err());
    }

    #[test]
    fn objective_by_hand() {
        let cfg = PenaltyConfig::default();
        assert_eq!(objective(1000.0, 200.0, 0.0, &cfg), 1000.0);
        let v = objective(1000.0, 210.0, 35_000.0, &cfg);
        assert!((v - 104_980.0).abs() <= 1e-12 * 104_980.0);
        let zero = PenaltyConfig { m_bs: 0.0, c_y: 0.0, c_b: 0.0, ..cfg };
        assert_eq!(objective(1234.5, 900.0, 90_000.0, &zero), 1234.5);
    }

    #[test]
    fn histograms() {
        let cfg = PenaltyConfig::default();
        let ev = |y, b| ObjectiveEvaluation { mass_kg: 1.0, n_yield: y, n_buckle: b, f_obj: 1.0, per_load_case: vec![] };
        let all_ok = [ev(10, 5), ev(20, 7)];
        assert_eq!(constraint_histograms(&all_ok, &cfg, 4).unwrap().valid_fraction, 1.0);
        let mixed = [ev(10, 5), ev(300, 7), ev(250, 1), ev(199, 2)];
        let h = constraint_histograms(&mixed, &cfg, 4).unwrap();
        assert_eq!(h.valid_fraction, 0.5);
        assert_eq!(h.yielded.counts.iter().sum::<usize>(), 4);
        assert_eq!(h.buckled_valid.counts.iter().sum::<usize>(), 2);
        let none = [ev(300, 7)];
        assert!(constraint_histograms(&none, &cfg, 4).unwrap().buckled_valid.counts.is_empty());
    }
}

//! Discrete thickness parameter space and maximin sampling.
//!
//! Each parameter is a plate thickness restricted to the grid
//! `{lower + k * step}`. Candidate sample sets are drawn uniformly over the
//! grid (without duplicates) and the set with the largest minimum pairwise
//! Euclidean distance is retained.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::rng;

const GRID_TOL: f64 = 1e-9;

/// One thickness parameter (all lengths in mm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dim {
    pub name: String,
    pub region: String,
    pub default_mm: f64,
    pub lower_mm: f64,
    pub upper_mm: f64,
    pub step_mm: f64,
}

impl Dim {
    pub fn new(name: &str, region: &str, default_mm: f64, lower_mm: f64, upper_mm: f64, step_mm: f64) -> Self {
        Dim {
            name: name.to_string(),
            region: region.to_string(),
            default_mm,
            lower_mm,
            upper_mm,
            step_mm,
        }
    }

    /// Number of admissible grid values.
    pub fn levels(&self) -> usize {
        ((self.upper_mm - self.lower_mm) / self.step_mm).round() as usize + 1
    }

    pub fn value(&self, level: usize) -> f64 {
        self.lower_mm + level as f64 * self.step_mm
    }

    /// Grid level of `v`, if `v` is admissible.
    pub fn level_of(&self, v: f64) -> Option<usize> {
        let k = (v - self.lower_mm) / self.step_mm;
        let kr = k.round();
        if kr < 0.0 || kr as usize >= self.levels() {
            return None;
        }
        if (k - kr).abs() > GRID_TOL * k.abs().max(1.0) {
            return None;
        }
        Some(kr as usize)
    }

    /// Nearest admissible value.
    pub fn snap(&self, v: f64) -> f64 {
        let k = ((v - self.lower_mm) / self.step_mm).round();
        let k = k.clamp(0.0, (self.levels() - 1) as f64);
        self.value(k as usize)
    }

    fn validate(&self, problems: &mut Vec<String>) {
        let n = &self.name;
        if !(self.step_mm > 0.0) {
            problems.push(format!("{n}: step must be positive"));
            return;
        }
        if !(self.lower_mm <= self.default_mm && self.default_mm <= self.upper_mm) {
            problems.push(format!("{n}: default {} outside [{}, {}]", self.default_mm, self.lower_mm, self.upper_mm));
        }
        let span = (self.upper_mm - self.lower_mm) / self.step_mm;
        if (span - span.round()).abs() > GRID_TOL * span.abs().max(1.0) {
            problems.push(format!("{n}: range is not a multiple of the step"));
        }
    }
}

/// Product of per-dimension thickness grids with the uniform density over it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    dims: Vec<Dim>,
}

impl ParameterSpace {
    pub fn new(dims: Vec<Dim>) -> Result<Self> {
        if dims.is_empty() {
            return arg("parameter space needs at least one dimension");
        }
        let mut problems = Vec::new();
        for d in &dims {
            d.validate(&mut problems);
        }
        if problems.is_empty() {
            Ok(ParameterSpace { dims })
        } else {
            Err(Error::Config(problems))
        }
    }

    /// The 16-parameter passenger hull: decks, defaults and bounds in mm.
    pub fn hull16(step_mm: f64) -> Self {
        let rows: [(&str, &str, f64, f64, f64); 16] = [
            ("mu1", "Deck 15", 7.5, 5.0, 15.0),
            ("mu2", "Deck 16", 8.0, 5.0, 20.0),
            ("mu3", "Deck 17", 9.0, 5.0, 20.0),
            ("mu4", "Deck 14", 7.5, 5.0, 15.0),
            ("mu5", "Deck 13", 7.0, 5.0, 15.0),
            ("mu6", "Deck 12", 6.5, 5.0, 15.0),
            ("mu7", "Deck 11", 6.0, 5.0, 15.0),
            ("mu8", "Deck 10", 5.5, 5.0, 15.0),
            ("mu9", "Deck 17", 6.0, 5.0, 20.0),
            ("mu10", "Deck 17", 15.0, 5.0, 20.0),
            ("mu11", "Deck 17", 6.0, 5.0, 20.0),
            ("mu12", "Deck 16", 6.0, 5.0, 20.0),
            ("mu13", "Deck 16", 6.0, 5.0, 20.0),
            ("mu14", "Deck 09", 8.0, 5.0, 15.0),
            ("mu15", "Deck 01", 16.0, 12.0, 25.0),
            ("mu16", "Deck 00", 20.0, 12.0, 25.0),
        ];
        let dims = rows
            .iter()
            .map(|&(n, r, d, lo, hi)| Dim::new(n, r, d, lo, hi, step_mm))
            .collect();
        ParameterSpace::new(dims).expect("hull table is a valid space")
    }

    pub fn dims(&self) -> &[Dim] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.dims.iter().map(|d| d.name.clone()).collect()
    }

    pub fn defaults(&self) -> Vec<f64> {
        self.dims.iter().map(|d| d.default_mm).collect()
    }

    pub fn lower(&self) -> Vec<f64> {
        self.dims.iter().map(|d| d.lower_mm).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.dims.iter().map(|d| d.upper_mm).collect()
    }

    /// Number of grid points, saturating at `u128::MAX`.
    pub fn cardinality(&self) -> u128 {
        self.dims
            .iter()
            .fold(1u128, |acc, d| acc.saturating_mul(d.levels() as u128))
    }

    pub fn normalizer(&self) -> Normalizer {
        Normalizer::new(self.lower(), self.upper())
    }

    /// Grid levels of an admissible point.
    pub fn levels_of(&self, point: &[f64]) -> Option<Vec<u32>> {
        if point.len() != self.len() {
            return None;
        }
        self.dims
            .iter()
            .zip(point)
            .map(|(d, &v)| d.level_of(v).map(|k| k as u32))
            .collect()
    }

    pub fn point_at(&self, levels: &[u32]) -> Vec<f64> {
        self.dims.iter().zip(levels).map(|(d, &k)| d.value(k as usize)).collect()
    }

    pub fn is_admissible(&self, point: &[f64]) -> bool {
        self.levels_of(point).is_some()
    }

    /// Errors unless `point` has the right length and lies within bounds.
    pub fn check_bounds(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.len() {
            return arg(format!("expected {} parameters, got {}", self.len(), point.len()));
        }
        for (d, &v) in self.dims.iter().zip(point) {
            let tol = GRID_TOL * d.upper_mm.abs().max(1.0);
            if !v.is_finite() || v < d.lower_mm - tol || v > d.upper_mm + tol {
                return arg(format!("{} = {} outside [{}, {}]", d.name, v, d.lower_mm, d.upper_mm));
            }
        }
        Ok(())
    }

    pub fn snap(&self, point: &[f64]) -> Vec<f64> {
        self.dims.iter().zip(point).map(|(d, &v)| d.snap(v)).collect()
    }

    /// Uniform draw of grid levels.
    pub fn random_levels<R: Rng>(&self, rng: &mut R) -> Vec<u32> {
        self.dims.iter().map(|d| rng.gen_range(0..d.levels()) as u32).collect()
    }

    /// Parses the text definition: CSV with header
    /// `name,region,default,lower,upper,step`; `#` starts a comment line.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut dims = Vec::new();
        for rec in rdr.deserialize::<DimRecord>() {
            let r = rec?;
            dims.push(Dim::new(&r.name, &r.region, r.default, r.lower, r.upper, r.step));
        }
        ParameterSpace::new(dims)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("name,region,default,lower,upper,step\n");
        for d in &self.dims {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                d.name, d.region, d.default_mm, d.lower_mm, d.upper_mm, d.step_mm
            ));
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut s = String::new();
        std::fs::File::open(path)?.read_to_string(&mut s)?;
        Self::from_text(&s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

#[derive(Deserialize)]
struct DimRecord {
    name: String,
    region: String,
    default: f64,
    lower: f64,
    upper: f64,
    step: f64,
}

/// Affine map from the parameter box onto `[-1, 1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Normalizer {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Normalizer { lower, upper }
    }

    /// Unit box; useful when data is already normalized.
    pub fn identity(dim: usize) -> Self {
        Normalizer::new(vec![-1.0; dim], vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&lo, &hi))| 2.0 * (v - lo) / (hi - lo) - 1.0)
            .collect()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&lo, &hi))| lo + (v + 1.0) * 0.5 * (hi - lo))
            .collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(a, b)| 0.5 * (a + b)).collect()
    }
}

/// A set of distinct grid points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub points: Vec<Vec<f64>>,
    pub seed: u64,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// CSV with one row per point and the dimension names as header.
    pub fn to_csv(&self, names: &[String]) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(names)?;
        for p in &self.points {
            w.write_record(p.iter().map(|v| format!("{v}")))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str, space: &ParameterSpace) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != space.names() {
            return Err(Error::Parse(format!("sample header {header:?} does not match the parameter space")));
        }
        let mut points = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let p = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s}: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if !space.is_admissible(&p) {
                return Err(Error::Parse(format!("sample {p:?} is not on the parameter grid")));
            }
            points.push(p);
        }
        Ok(SampleSet { points, seed: 0 })
    }

    pub fn write_csv(&self, path: &Path, names: &[String]) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv(names)?.as_bytes())?;
        Ok(())
    }

    pub fn read_csv(path: &Path, space: &ParameterSpace) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?, space)
    }
}

/// Draws `n_sets` independent sets of `m` distinct grid points, uniformly.
/// Set `j` uses its own stream derived from `(seed, j)`.
pub fn generate_candidate_sets(space: &ParameterSpace, m: usize, n_sets: usize, seed: u64) -> Result<Vec<SampleSet>> {
    if m < 2 {
        return arg("need at least two points per set");
    }
    if n_sets < 1 {
        return arg("need at least one candidate set");
    }
    if space.cardinality() < m as u128 {
        return Err(Error::Capacity(format!(
            "grid holds {} points, {m} requested",
            space.cardinality()
        )));
    }
    Ok((0..n_sets)
        .map(|j| {
            let set_seed = rng::derive_seed(seed, j as u64);
            let mut r = rng::stream(seed, j as u64);
            let mut seen = HashSet::with_capacity(m);
            let mut points = Vec::with_capacity(m);
            while points.len() < m {
                let levels = space.random_levels(&mut r);
                if seen.insert(levels.clone()) {
                    points.push(space.point_at(&levels));
                }
            }
            SampleSet { points, seed: set_seed }
        })
        .collect())
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Smallest Euclidean distance (mm) between two distinct members.
pub fn min_pairwise_distance(set: &SampleSet) -> Result<f64> {
    if set.points.len() < 2 {
        return arg("minimum pairwise distance needs at least two points");
    }
    let mut best = f64::INFINITY;
    for (i, a) in set.points.iter().enumerate() {
        for b in &set.points[i + 1..] {
            best = best.min(sq_dist(a, b));
        }
    }
    Ok(best.sqrt())
}

/// Returns the candidate with maximal minimum pairwise distance; ties go to
/// the earliest set.
pub fn maximin_select(sets: &[SampleSet]) -> Result<SampleSet> {
    if sets.is_empty() {
        return arg("no candidate sets to select from");
    }
    let mut best = 0;
    let mut best_d = f64::NEG_INFINITY;
    for (i, s) in sets.iter().enumerate() {
        let d = min_pairwise_distance(s)?;
        if d > best_d {
            best = i;
            best_d = d;
        }
    }
    Ok(sets[best].clone())
}

/// Candidate generation followed by maximin selection.
pub fn maximin_design(space: &ParameterSpace, m: usize, n_sets: usize, seed: u64) -> Result<SampleSet> {
    maximin_select(&generate_candidate_sets(space, m, n_sets, seed)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_dim(lo: f64, hi: f64, step: f64) -> ParameterSpace {
        ParameterSpace::new(vec![Dim::new("t", "Deck", lo, lo, hi, step)]).unwrap()
    }

    fn set(points: &[&[f64]]) -> SampleSet {
        SampleSet { points: points.iter().map(|p| p.to_vec()).collect(), seed: 0 }
    }

    #[test]
    fn full_grid_when_m_equals_cardinality() {
        let space = one_dim(5.0, 15.0, 0.5);
        let sets = generate_candidate_sets(&space, 21, 1, 3).unwrap();
        let mut vals: Vec<f64> = sets[0].points.iter().map(|p| p[0]).collect();
        vals.sort_by(f64::total_cmp);
        let expected: Vec<f64> = (0..21).map(|k| 5.0 + 0.5 * k as f64).collect();
        assert_eq!(vals, expected);
    }

    #[test]
    fn capacity_error() {
        let space = one_dim(5.0, 6.0, 0.5);
        assert!(matches!(generate_candidate_sets(&space, 4, 1, 0), Err(Error::Capacity(_))));
    }

    #[test]
    fn hull_sets_shape_and_determinism() {
        let space = ParameterSpace::hull16(0.5);
        let a = generate_candidate_sets(&space, 300, 64, 11).unwrap();
        assert_eq!(a.len(), 64);
        assert!(a.iter().all(|s| s.len() == 300));
        assert!(a.iter().flat_map(|s| &s.points).all(|p| space.is_admissible(p)));
        let b = generate_candidate_sets(&space, 300, 64, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn distances_by_hand() {
        assert_eq!(min_pairwise_distance(&set(&[&[5.0], &[7.0], &[15.0]])).unwrap(), 2.0);
        assert_eq!(min_pairwise_distance(&set(&[&[0.0, 0.0], &[3.0, 4.0], &[6.0, 8.0]])).unwrap(), 5.0);
        assert!(min_pairwise_distance(&set(&[&[1.0]])).is_err());
    }

    #[test]
    fn maximin_by_hand() {
        let a = set(&[&[0.0], &[1.0], &[2.0]]);
        let b = set(&[&[0.0], &[5.0], &[10.0]]);
        let c = set(&[&[0.0], &[2.0], &[9.0]]);
        assert_eq!(maximin_select(&[a.clone(), b.clone(), c]).unwrap(), b);
        assert_eq!(maximin_select(std::slice::from_ref(&a)).unwrap(), a);
        assert!(maximin_select(&[]).is_err());
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(ParameterSpace::new(vec![Dim::new("a", "r", 4.0, 5.0, 10.0, 0.5)]).is_err());
        assert!(ParameterSpace::new(vec![Dim::new("a", "r", 5.0, 5.0, 10.0, 0.0)]).is_err());
        assert!(ParameterSpace::new(vec![Dim::new("a", "r", 5.0, 5.0, 10.0, 0.3)]).is_err());
    }

    #[test]
    fn text_round_trip() {
        let space = ParameterSpace::hull16(0.5);
        let back = ParameterSpace::from_text(&space.to_text()).unwrap();
        assert_eq!(back, space);
        let with_comment = format!("# hull\n{}", space.to_text());
        assert_eq!(ParameterSpace::from_text(&with_comment).unwrap(), space);
    }

    #[test]
    fn sample_csv_round_trip() {
        let space = ParameterSpace::hull16(0.5);
        let s = maximin_design(&space, 10, 4, 1).unwrap();
        let text = s.to_csv(&space.names()).unwrap();
        assert!(text.starts_with("mu1,mu2,"));
        let back = SampleSet::from_csv(&text, &space).unwrap();
        assert_eq!(back.points, s.points);
    }

    #[test]
    fn normalizer_maps_box() {
        let n = Normalizer::new(vec![5.0, 12.0], vec![15.0, 25.0]);
        assert_eq!(n.to_unit(&[5.0, 25.0]), vec![-1.0, 1.0]);
        assert_eq!(n.to_unit(&n.center()), vec![0.0, 0.0]);
        let x = [7.5, 13.0];
        let back = n.from_unit(&n.to_unit(&x));
        assert!((back[0] - x[0]).abs() < 1e-12 && (back[1] - x[1]).abs() < 1e-12);
    }
}

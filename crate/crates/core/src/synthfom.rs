//! Synthetic hull-girder full-order model.
//!
//! The hull is a prismatic thin-walled box: horizontal decks stacked in `z`
//! plus two side shells. Every element is a plate strip that contributes
//! `breadth * t` to the midship section and is sampled for stress at its own
//! longitudinal station `x`. Stresses follow elementary beam theory:
//!
//! * neutral axis `zbar = sum(A z) / sum(A)` and `I = sum(A (z - zbar)^2)`,
//! * `sx_beam = s * M(x) (z - zbar) / I` with `M(x) = Mb sin(pi x / L)` and
//!   `s = +1` hogging, `-1` sagging,
//! * shear flow `txy = s * k V(x) Q(z) / (I * 2 t_side) * w(y)`,
//!   `V(x) = (pi Mb / L) cos(pi x / L)`,
//! * local plate bending under lateral pressure `sl = p (b / t)^2 / 2`,
//!   identical in both load cases.
//!
//! Component assembly: `sx = sx_beam + sl`, `sy = 0.3 sx_beam + sl`,
//! `sz = 0.02 sx_beam`, `txz = 0.04 sx_beam`, `tyz = 0.1 txy`.
//!
//! Units: mm, N, MPa, kg.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::params::ParameterSpace;

/// Steel density in kg/mm^3 (7850 kg/m^3).
pub const STEEL_DENSITY: f64 = 7.85e-6;
pub const DECK_SPACING_MM: f64 = 2800.0;
pub const HULL_BREADTH_MM: f64 = 32_000.0;
pub const HULL_LENGTH_MM: f64 = 240_000.0;
/// Longitudinal extent represented by each plate strip (mass only).
pub const STRIP_LENGTH_MM: f64 = 168_000.0;
pub const SIDE_THICKNESS_MM: f64 = 14.0;
pub const FILLER_THICKNESS_MM: f64 = 7.0;
/// Stiffener spacing, the short edge of every plate panel.
pub const STIFFENER_SPACING_MM: f64 = 700.0;
/// Hull-girder bending moment amplitude in N mm.
pub const DEFAULT_BENDING_MOMENT: f64 = 1.88e13;
const SIDE_ELEMENTS_PER_SEGMENT: usize = 2;
const SHEAR_FACTOR: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LoadCase {
    Hogging,
    Sagging,
}

impl LoadCase {
    pub const ALL: [LoadCase; 2] = [LoadCase::Hogging, LoadCase::Sagging];

    pub fn sign(self) -> f64 {
        match self {
            LoadCase::Hogging => 1.0,
            LoadCase::Sagging => -1.0,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            LoadCase::Hogging => "hogging",
            LoadCase::Sagging => "sagging",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        LoadCase::ALL.into_iter().find(|l| l.tag() == tag)
    }
}

/// Independent components of the symmetric Cauchy stress tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Component {
    Sx,
    Sy,
    Sz,
    Txy,
    Txz,
    Tyz,
}

impl Component {
    pub const ALL: [Component; 6] = [
        Component::Sx,
        Component::Sy,
        Component::Sz,
        Component::Txy,
        Component::Txz,
        Component::Tyz,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Component::Sx => "sx",
            Component::Sy => "sy",
            Component::Sz => "sz",
            Component::Txy => "txy",
            Component::Txz => "txz",
            Component::Tyz => "tyz",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Component::ALL.into_iter().find(|c| c.tag() == tag)
    }

    pub fn index(self) -> usize {
        Component::ALL.iter().position(|&c| c == self).unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub id: usize,
    pub deck_id: u32,
    pub x_mm: f64,
    pub y_mm: f64,
    pub z_mm: f64,
    /// Width of the strip in the midship section.
    pub breadth_mm: f64,
    pub area_mm2: f64,
    pub param_index: Option<usize>,
    /// Thickness used when `param_index` is `None`.
    pub fixed_thickness_mm: f64,
    pub pressure_mpa: f64,
    pub side_shell: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullMesh {
    pub elements: Vec<Element>,
    pub param_lower: Vec<f64>,
    pub param_upper: Vec<f64>,
    pub bending_moment: f64,
}

fn deck_number(region: &str) -> Option<u32> {
    let digits: String = region.chars().filter(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

fn frac(v: f64) -> f64 {
    v - v.floor()
}

/// Deterministic mesh: `n_decks` decks; each parametrized region gets
/// `elements_per_region` strips, decks without a parameter become filler
/// decks of the same resolution, and both side shells are discretized.
pub fn build_default_mesh(space: &ParameterSpace, elements_per_region: usize, n_decks: usize) -> Result<HullMesh> {
    if elements_per_region == 0 {
        return arg("elements_per_region must be at least 1");
    }
    let mut deck_of = Vec::with_capacity(space.len());
    for d in space.dims() {
        match deck_number(&d.region) {
            Some(k) if (k as usize) < n_decks => deck_of.push(k),
            _ => return arg(format!("region '{}' does not name a deck below {n_decks}", d.region)),
        }
    }
    let mut elements = Vec::new();
    let mut region_counter = 0usize;
    let push = |elements: &mut Vec<Element>, mut e: Element| {
        e.id = elements.len();
        elements.push(e);
    };
    for deck in 0..n_decks as u32 {
        let z = deck as f64 * DECK_SPACING_MM;
        let owners: Vec<Option<usize>> = {
            let p: Vec<Option<usize>> = (0..space.len()).filter(|&i| deck_of[i] == deck).map(Some).collect();
            if p.is_empty() {
                vec![None]
            } else {
                p
            }
        };
        let width = HULL_BREADTH_MM / owners.len() as f64;
        for (slot, owner) in owners.iter().enumerate() {
            let y0 = slot as f64 * width;
            let strip = width / elements_per_region as f64;
            for i in 0..elements_per_region {
                let phase = 0.5 + i as f64 * 0.618_033_988_75 + 0.37 * region_counter as f64;
                let x = HULL_LENGTH_MM * (0.15 + 0.7 * frac(phase));
                push(
                    &mut elements,
                    Element {
                        id: 0,
                        deck_id: deck,
                        x_mm: x,
                        y_mm: y0 + (i as f64 + 0.5) * strip,
                        z_mm: z,
                        breadth_mm: strip,
                        area_mm2: strip * STRIP_LENGTH_MM,
                        param_index: *owner,
                        fixed_thickness_mm: FILLER_THICKNESS_MM,
                        pressure_mpa: 0.0,
                        side_shell: false,
                    },
                );
            }
            region_counter += 1;
        }
    }
    let seg = DECK_SPACING_MM / SIDE_ELEMENTS_PER_SEGMENT as f64;
    for k in 0..n_decks.saturating_sub(1) {
        for side in [0.0, HULL_BREADTH_MM] {
            for j in 0..SIDE_ELEMENTS_PER_SEGMENT {
                let z = k as f64 * DECK_SPACING_MM + (j as f64 + 0.5) * seg;
                let phase = 0.25 + (k * SIDE_ELEMENTS_PER_SEGMENT + j) as f64 * 0.618_033_988_75 + side * 1e-5;
                push(
                    &mut elements,
                    Element {
                        id: 0,
                        deck_id: k as u32,
                        x_mm: HULL_LENGTH_MM * (0.15 + 0.7 * frac(phase)),
                        y_mm: side,
                        z_mm: z,
                        breadth_mm: seg,
                        area_mm2: seg * STRIP_LENGTH_MM,
                        param_index: None,
                        fixed_thickness_mm: SIDE_THICKNESS_MM,
                        pressure_mpa: 0.0,
                        side_shell: true,
                    },
                );
            }
        }
    }
    let draft = 4.0 * DECK_SPACING_MM;
    for e in &mut elements {
        e.pressure_mpa = if e.side_shell {
            0.0005 + 0.005 * (1.0 - e.z_mm / draft).max(0.0)
        } else {
            0.001 * (1.0 + 0.5 * (1.7 * e.id as f64 + 0.3).sin())
        };
    }
    Ok(HullMesh {
        elements,
        param_lower: space.lower(),
        param_upper: space.upper(),
        bending_moment: DEFAULT_BENDING_MOMENT,
    })
}

impl HullMesh {
    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_params(&self) -> usize {
        self.param_lower.len()
    }

    pub fn check_params(&self, mu: &[f64]) -> Result<()> {
        if mu.len() != self.n_params() {
            return arg(format!("expected {} thicknesses, got {}", self.n_params(), mu.len()));
        }
        for (i, &t) in mu.iter().enumerate() {
            let (lo, hi) = (self.param_lower[i], self.param_upper[i]);
            let tol = 1e-9 * hi.abs().max(1.0);
            if !t.is_finite() || t < lo - tol || t > hi + tol {
                return arg(format!("thickness {i} = {t} outside [{lo}, {hi}]"));
            }
        }
        Ok(())
    }

    pub fn thicknesses(&self, mu: &[f64]) -> Vec<f64> {
        self.elements
            .iter()
            .map(|e| e.param_index.map_or(e.fixed_thickness_mm, |p| mu[p]))
            .collect()
    }

    /// Mass of the parametrized plates in kg (linear in `mu`).
    pub fn mass(&self, mu: &[f64]) -> f64 {
        self.elements
            .iter()
            .filter_map(|e| e.param_index.map(|p| STEEL_DENSITY * e.area_mm2 * mu[p]))
            .sum()
    }

    /// Element table as CSV, preceded by `#`-prefixed metadata lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let join = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ");
        writeln!(s, "# bending_moment={}", self.bending_moment).unwrap();
        writeln!(s, "# param_lower={}", join(&self.param_lower)).unwrap();
        writeln!(s, "# param_upper={}", join(&self.param_upper)).unwrap();
        s.push_str("id,deck,x_mm,y_mm,z_mm,breadth_mm,area_mm2,param_index,fixed_thickness_mm,pressure_mpa,side_shell\n");
        for e in &self.elements {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                e.id,
                e.deck_id,
                e.x_mm,
                e.y_mm,
                e.z_mm,
                e.breadth_mm,
                e.area_mm2,
                e.param_index.map(|p| p.to_string()).unwrap_or_default(),
                e.fixed_thickness_mm,
                e.pressure_mpa,
                u8::from(e.side_shell)
            )
            .unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut bending_moment = None;
        let mut lower = None;
        let mut upper = None;
        let parse_vec = |v: &str| -> Result<Vec<f64>> {
            v.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(e.to_string())))
                .collect()
        };
        for line in text.lines().filter(|l| l.starts_with('#')) {
            let body = line.trim_start_matches('#').trim();
            if let Some((k, v)) = body.split_once('=') {
                match k.trim() {
                    "bending_moment" => bending_moment = Some(v.trim().parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?),
                    "param_lower" => lower = Some(parse_vec(v)?),
                    "param_upper" => upper = Some(parse_vec(v)?),
                    _ => {}
                }
            }
        }
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let mut elements = Vec::new();
        for rec in rdr.records() {
            let r = rec?;
            let f = |i: usize| -> Result<f64> {
                r.get(i)
                    .ok_or_else(|| Error::Parse("short mesh record".into()))?
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(e.to_string()))
            };
            let param = r.get(7).unwrap_or("");
            elements.push(Element {
                id: f(0)? as usize,
                deck_id: f(1)? as u32,
                x_mm: f(2)?,
                y_mm: f(3)?,
                z_mm: f(4)?,
                breadth_mm: f(5)?,
                area_mm2: f(6)?,
                param_index: if param.is_empty() {
                    None
                } else {
                    Some(param.parse().map_err(|_| Error::Parse(format!("bad param index {param}")))?)
                },
                fixed_thickness_mm: f(8)?,
                pressure_mpa: f(9)?,
                side_shell: f(10)? != 0.0,
            });
        }
        let missing = |k: &str| Error::Parse(format!("mesh manifest lacks {k}"));
        Ok(HullMesh {
            elements,
            param_lower: lower.ok_or_else(|| missing("param_lower"))?,
            param_upper: upper.ok_or_else(|| missing("param_upper"))?,
            bending_moment: bending_moment.ok_or_else(|| missing("bending_moment"))?,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Per-element stresses (MPa) flattened as `[component][load case][element]`,
/// so the snapshot of one component is a contiguous slice of length
/// `n_load_cases * n_elements` with load cases stacked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressField {
    pub n_elements: usize,
    pub load_cases: Vec<LoadCase>,
    pub data: Vec<f64>,
}

impl StressField {
    pub fn zeros(n_elements: usize, load_cases: &[LoadCase]) -> Self {
        StressField {
            n_elements,
            load_cases: load_cases.to_vec(),
            data: vec![0.0; n_elements * load_cases.len() * 6],
        }
    }

    pub fn component_len(&self) -> usize {
        self.n_elements * self.load_cases.len()
    }

    fn offset(&self, c: Component, lc: usize, e: usize) -> usize {
        c.index() * self.component_len() + lc * self.n_elements + e
    }

    pub fn get(&self, c: Component, lc: usize, e: usize) -> f64 {
        self.data[self.offset(c, lc, e)]
    }

    pub fn set(&mut self, c: Component, lc: usize, e: usize, v: f64) {
        let o = self.offset(c, lc, e);
        self.data[o] = v;
    }

    /// `[sx, sy, sz, txy, txz, tyz]` for one element and load case.
    pub fn tensor(&self, lc: usize, e: usize) -> [f64; 6] {
        let mut out = [0.0; 6];
        for (k, c) in Component::ALL.into_iter().enumerate() {
            out[k] = self.get(c, lc, e);
        }
        out
    }

    pub fn component(&self, c: Component) -> &[f64] {
        let n = self.component_len();
        &self.data[c.index() * n..(c.index() + 1) * n]
    }

    pub fn component_mut(&mut self, c: Component) -> &mut [f64] {
        let n = self.component_len();
        &mut self.data[c.index() * n..(c.index() + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FomResult {
    pub stress: StressField,
    pub mass_kg: f64,
    pub wall_time_s: f64,
}

/// Midship section properties for a thickness vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Section {
    pub neutral_axis_mm: f64,
    pub inertia_mm4: f64,
}

pub fn section_properties(mesh: &HullMesh, thickness: &[f64]) -> Section {
    let mut area = 0.0;
    let mut first = 0.0;
    for (e, &t) in mesh.elements.iter().zip(thickness) {
        let a = e.breadth_mm * t;
        area += a;
        first += a * e.z_mm;
    }
    let zbar = first / area;
    let inertia = mesh
        .elements
        .iter()
        .zip(thickness)
        .map(|(e, &t)| e.breadth_mm * t * (e.z_mm - zbar).powi(2))
        .sum();
    Section { neutral_axis_mm: zbar, inertia_mm4: inertia }
}

/// First moment about the neutral axis of everything above `z`, counting
/// material exactly at `z` by half.
fn first_moments(mesh: &HullMesh, thickness: &[f64], zbar: f64) -> Vec<f64> {
    let mut levels: Vec<(f64, f64)> = Vec::new();
    let mut order: Vec<usize> = (0..mesh.n_elements()).collect();
    order.sort_by(|&a, &b| mesh.elements[b].z_mm.total_cmp(&mesh.elements[a].z_mm));
    for &i in &order {
        let e = &mesh.elements[i];
        let q = e.breadth_mm * thickness[i] * (e.z_mm - zbar);
        match levels.last_mut() {
            Some((z, acc)) if *z == e.z_mm => *acc += q,
            _ => levels.push((e.z_mm, q)),
        }
    }
    let mut above = 0.0;
    let mut at_level = Vec::with_capacity(levels.len());
    for &(z, q) in &levels {
        at_level.push((z, above + 0.5 * q));
        above += q;
    }
    mesh.elements
        .iter()
        .map(|e| {
            let k = at_level.iter().position(|&(z, _)| z == e.z_mm).unwrap();
            at_level[k].1
        })
        .collect()
}

/// Evaluates the beam model for `mu` under `loads`.
pub fn solve(mesh: &HullMesh, mu: &[f64], loads: &[LoadCase]) -> Result<FomResult> {
    let start = Instant::now();
    mesh.check_params(mu)?;
    if loads.is_empty() {
        return arg("at least one load case is required");
    }
    let t = mesh.thicknesses(mu);
    let sec = section_properties(mesh, &t);
    if !(sec.inertia_mm4 > 0.0) {
        return arg("degenerate section");
    }
    let q = first_moments(mesh, &t, sec.neutral_axis_mm);
    let mb = mesh.bending_moment;
    let pi = std::f64::consts::PI;
    let n = mesh.n_elements();
    let mut field = StressField::zeros(n, loads);
    for (lc, &load) in loads.iter().enumerate() {
        let s = load.sign();
        for (i, e) in mesh.elements.iter().enumerate() {
            let phase = pi * e.x_mm / HULL_LENGTH_MM;
            let moment = mb * phase.sin();
            let shear = pi * mb / HULL_LENGTH_MM * phase.cos();
            let beam = s * moment * (e.z_mm - sec.neutral_axis_mm) / sec.inertia_mm4;
            let local = 0.5 * e.pressure_mpa * (STIFFENER_SPACING_MM / t[i]).powi(2);
            let weight = if e.side_shell {
                1.0
            } else {
                0.3 + 0.7 * (2.0 * e.y_mm / HULL_BREADTH_MM - 1.0).abs()
            };
            let txy = s * SHEAR_FACTOR * shear * q[i] / (sec.inertia_mm4 * 2.0 * SIDE_THICKNESS_MM) * weight;
            field.set(Component::Sx, lc, i, beam + local);
            field.set(Component::Sy, lc, i, 0.3 * beam + local);
            field.set(Component::Sz, lc, i, 0.02 * beam);
            field.set(Component::Txy, lc, i, txy);
            field.set(Component::Txz, lc, i, 0.04 * beam);
            field.set(Component::Tyz, lc, i, 0.1 * txy);
        }
    }
    Ok(FomResult {
        stress: field,
        mass_kg: mesh.mass(mu),
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Full-order model with an evaluation counter.
#[derive(Debug)]
pub struct Fom {
    pub mesh: HullMesh,
    calls: AtomicUsize,
}

impl Fom {
    pub fn new(mesh: HullMesh) -> Self {
        Fom { mesh, calls: AtomicUsize::new(0) }
    }

    pub fn solve(&self, mu: &[f64]) -> Result<FomResult> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        solve(&self.mesh, mu, &LoadCase::ALL)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hull() -> (ParameterSpace, HullMesh) {
        let space = ParameterSpace::hull16(0.5);
        let mesh = build_default_mesh(&space, 32, 18).unwrap();
        (space, mesh)
    }

    #[test]
    fn mesh_counts_and_coverage() {
        let (space, mesh) = hull();
        let parametrized = mesh.elements.iter().filter(|e| e.param_index.is_some()).count();
        assert!(parametrized >= 512);
        assert!(mesh.n_elements() > parametrized);
        for p in 0..space.len() {
            assert!(mesh.elements.iter().any(|e| e.param_index == Some(p)));
        }
        assert!(mesh.elements.iter().all(|e| e.area_mm2 > 0.0));
        assert_eq!(build_default_mesh(&space, 32, 18).unwrap(), mesh);
    }

    #[test]
    fn thicker_plates_lower_peak_stress() {
        let (space, mesh) = hull();
        let mu = space.defaults();
        let doubled: Vec<f64> = mu.iter().map(|t| 2.0 * t).collect();
        let mut wide = mesh.clone();
        wide.param_upper = vec![100.0; space.len()];
        let peak = |m: &[f64]| {
            let r = solve(&wide, m, &LoadCase::ALL).unwrap();
            r.stress.component(Component::Sx).iter().fold(0.0f64, |a, v| a.max(v.abs()))
        };
        assert!(peak(&doubled) < peak(&mu));
    }

    #[test]
    fn load_cases_mirror_up_to_local_term() {
        let (space, mesh) = hull();
        let r = solve(&mesh, &space.defaults(), &LoadCase::ALL).unwrap();
        let t = mesh.thicknesses(&space.defaults());
        for (i, e) in mesh.elements.iter().enumerate() {
            let local = 0.5 * e.pressure_mpa * (STIFFENER_SPACING_MM / t[i]).powi(2);
            let sum = r.stress.get(Component::Sx, 0, i) + r.stress.get(Component::Sx, 1, i);
            assert!((sum - 2.0 * local).abs() < 1e-9 * local.max(1.0));
            let txy = r.stress.get(Component::Txy, 0, i) + r.stress.get(Component::Txy, 1, i);
            assert!(txy.abs() < 1e-9);
        }
    }

    #[test]
    fn out_of_bounds_rejected() {
        let (space, mesh) = hull();
        let mut mu = space.defaults();
        mu[0] = 40.0;
        assert!(solve(&mesh, &mu, &LoadCase::ALL).is_err());
        assert!(solve(&mesh, &mu[..3], &LoadCase::ALL).is_err());
    }

    #[test]
    fn mass_is_linear() {
        let (space, mesh) = hull();
        let lo = space.lower();
        let hi = space.upper();
        let mid: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let m = 0.5 * (mesh.mass(&lo) + mesh.mass(&hi));
        assert!((mesh.mass(&mid) - m).abs() < 1e-9 * m);
    }

    #[test]
    fn counter_counts() {
        let (space, mesh) = hull();
        let fom = Fom::new(mesh);
        fom.solve(&space.defaults()).unwrap();
        fom.solve(&space.defaults()).unwrap();
        assert_eq!(fom.calls(), 2);
    }

    #[test]
    fn mesh_text_round_trip() {
        let (_, mesh) = hull();
        assert_eq!(HullMesh::from_text(&mesh.to_text()).unwrap(), mesh);
    }
}

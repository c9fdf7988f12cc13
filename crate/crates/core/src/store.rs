//! On-disk snapshot store: a text manifest plus one little-endian, column-major
//! `f64` matrix per stress component.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::params::{ParameterSpace, SampleSet};
use crate::pod::SnapshotSet;
use crate::synthfom::{Component, FomResult, LoadCase, StressField};

pub const STORE_FORMAT: &str = "snapstore/1";
const MANIFEST: &str = "manifest.txt";
const SAMPLES: &str = "samples.csv";
const MASS: &str = "mass.bin";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_f64s(path: &Path, values: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_f64s(path: &Path) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Integrity(format!("{} is not a whole number of f64 values", path.display())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Writes a matrix column by column.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_f64s(path, m.as_slice())
}

pub fn read_matrix(path: &Path, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let v = read_f64s(path)?;
    if v.len() != rows * cols {
        return Err(Error::Integrity(format!("{} holds {} values, expected {rows} x {cols}", path.display(), v.len())));
    }
    Ok(DMatrix::from_vec(rows, cols, v))
}

/// `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Parse(format!("expected 'key = value', got '{line}'")));
        };
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub(crate) fn get<'a>(kv: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    kv.get(key).map(String::as_str).ok_or_else(|| Error::Parse(format!("manifest lacks '{key}'")))
}

pub(crate) fn get_num<T: std::str::FromStr>(kv: &BTreeMap<String, String>, key: &str) -> Result<T> {
    get(kv, key)?.parse().map_err(|_| Error::Parse(format!("manifest field '{key}' is malformed")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoreMeta {
    pub n_elements: usize,
    pub load_cases: Vec<LoadCase>,
    pub m: usize,
    pub completed: usize,
    pub sample_hash: String,
    pub config_hash: String,
    pub seed: u64,
}

impl StoreMeta {
    /// Rows of each component matrix.
    pub fn rows(&self) -> usize {
        self.n_elements * self.load_cases.len()
    }

    fn to_text(&self) -> String {
        let lcs: Vec<&str> = self.load_cases.iter().map(|l| l.tag()).collect();
        let comps: Vec<&str> = Component::ALL.iter().map(|c| c.tag()).collect();
        format!(
            "format = {STORE_FORMAT}\nn = {}\nm = {}\ncompleted = {}\nn_elements = {}\nload_cases = {}\ncomponents = {}\nsample_hash = {}\nconfig_hash = {}\nseed = {}\n",
            self.rows(),
            self.m,
            self.completed,
            self.n_elements,
            lcs.join(","),
            comps.join(","),
            self.sample_hash,
            self.config_hash,
            self.seed
        )
    }

    fn from_text(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        if get(&kv, "format")? != STORE_FORMAT {
            return Err(Error::Integrity(format!("unsupported store format '{}'", get(&kv, "format")?)));
        }
        let load_cases = get(&kv, "load_cases")?
            .split(',')
            .map(|t| LoadCase::from_tag(t.trim()).ok_or_else(|| Error::Parse(format!("unknown load case '{t}'"))))
            .collect::<Result<Vec<_>>>()?;
        let comps: Vec<&str> = get(&kv, "components")?.split(',').map(str::trim).collect();
        let expected: Vec<&str> = Component::ALL.iter().map(|c| c.tag()).collect();
        if comps != expected {
            return Err(Error::Integrity("store components differ from the six stress components".into()));
        }
        let meta = StoreMeta {
            n_elements: get_num(&kv, "n_elements")?,
            load_cases,
            m: get_num(&kv, "m")?,
            completed: get_num(&kv, "completed")?,
            sample_hash: get(&kv, "sample_hash")?.to_string(),
            config_hash: get(&kv, "config_hash")?.to_string(),
            seed: get_num(&kv, "seed")?,
        };
        if get_num::<usize>(&kv, "n")? != meta.rows() || meta.completed > meta.m {
            return Err(Error::Integrity("manifest dimensions are inconsistent".into()));
        }
        Ok(meta)
    }
}

/// A directory of full-order snapshots, filled column by column.
#[derive(Debug, Clone)]
pub struct SnapshotStore {
    dir: PathBuf,
    pub meta: StoreMeta,
    pub samples: SampleSet,
}

fn component_file(dir: &Path, c: Component) -> PathBuf {
    dir.join(format!("{}.bin", c.tag()))
}

impl SnapshotStore {
    /// Creates an empty store for `samples`, or reopens a partial one with the
    /// same samples so that filling can resume.
    pub fn create(dir: &Path, space: &ParameterSpace, samples: &SampleSet, n_elements: usize, load_cases: &[LoadCase], config_hash: &str, seed: u64) -> Result<Self> {
        let csv = samples.to_csv(&space.names())?;
        let sample_hash = sha256_hex(csv.as_bytes());
        if dir.join(MANIFEST).exists() {
            let store = SnapshotStore::open(dir, space)?;
            if store.meta.sample_hash != sample_hash || store.meta.n_elements != n_elements || store.meta.load_cases != load_cases {
                return Err(Error::Integrity(format!("{} holds a different snapshot set", dir.display())));
            }
            return Ok(store);
        }
        fs::create_dir_all(dir)?;
        fs::write(dir.join(SAMPLES), csv)?;
        for c in Component::ALL {
            File::create(component_file(dir, c))?;
        }
        File::create(dir.join(MASS))?;
        let meta = StoreMeta {
            n_elements,
            load_cases: load_cases.to_vec(),
            m: samples.len(),
            completed: 0,
            sample_hash,
            config_hash: config_hash.to_string(),
            seed,
        };
        fs::write(dir.join(MANIFEST), meta.to_text())?;
        Ok(SnapshotStore { dir: dir.to_path_buf(), meta, samples: samples.clone() })
    }

    /// Opens a store, checking the sample hash and every file size.
    pub fn open(dir: &Path, space: &ParameterSpace) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST)).map_err(|e| Error::Integrity(format!("cannot read {}: {e}", dir.join(MANIFEST).display())))?;
        let meta = StoreMeta::from_text(&text)?;
        let csv = fs::read_to_string(dir.join(SAMPLES))?;
        if sha256_hex(csv.as_bytes()) != meta.sample_hash {
            return Err(Error::Integrity("sample file does not match the manifest hash".into()));
        }
        let samples = SampleSet::from_csv(&csv, space)?;
        if samples.len() != meta.m {
            return Err(Error::Integrity("sample count differs from the manifest".into()));
        }
        let mut store = SnapshotStore { dir: dir.to_path_buf(), meta, samples };
        store.truncate_to_completed()?;
        Ok(store)
    }

    /// Drops any partially written column past `completed`.
    fn truncate_to_completed(&mut self) -> Result<()> {
        let want = |per: usize| (self.meta.completed * per * 8) as u64;
        let mut files: Vec<(PathBuf, u64)> = Component::ALL.iter().map(|&c| (component_file(&self.dir, c), want(self.meta.rows()))).collect();
        files.push((self.dir.join(MASS), want(1)));
        for (path, len) in files {
            let actual = fs::metadata(&path)?.len();
            if actual < len {
                return Err(Error::Integrity(format!("{} is shorter than the manifest says", path.display())));
            }
            if actual > len {
                OpenOptions::new().write(true).open(&path)?.set_len(len)?;
            }
        }
        Ok(())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn is_complete(&self) -> bool {
        self.meta.completed == self.meta.m
    }

    /// Index of the next column to fill.
    pub fn next_column(&self) -> usize {
        self.meta.completed
    }

    /// Appends the solution for sample `next_column()`.
    pub fn append(&mut self, result: &FomResult) -> Result<()> {
        if self.is_complete() {
            return Err(Error::Argument("store is already complete".into()));
        }
        let f = &result.stress;
        if f.n_elements != self.meta.n_elements || f.load_cases != self.meta.load_cases {
            return Err(Error::Argument("stress field layout differs from the store".into()));
        }
        for c in Component::ALL {
            let mut w = BufWriter::new(OpenOptions::new().append(true).open(component_file(&self.dir, c))?);
            for v in f.component(c) {
                w.write_all(&v.to_le_bytes())?;
            }
            w.flush()?;
        }
        OpenOptions::new().append(true).open(self.dir.join(MASS))?.write_all(&result.mass_kg.to_le_bytes())?;
        self.meta.completed += 1;
        fs::write(self.dir.join(MANIFEST), self.meta.to_text())?;
        Ok(())
    }

    fn require_complete(&self) -> Result<()> {
        if !self.is_complete() {
            return Err(Error::Integrity(format!("store holds {} of {} snapshots", self.meta.completed, self.meta.m)));
        }
        Ok(())
    }

    pub fn masses(&self) -> Result<Vec<f64>> {
        self.require_complete()?;
        read_f64s(&self.dir.join(MASS))
    }

    pub fn snapshot_sets(&self) -> Result<Vec<SnapshotSet>> {
        self.require_complete()?;
        Component::ALL
            .iter()
            .map(|&c| {
                let s = read_matrix(&component_file(&self.dir, c), self.meta.rows(), self.meta.m)?;
                SnapshotSet::new(c.tag(), self.samples.points.clone(), s)
            })
            .collect()
    }

    /// Reassembles the stored stress fields.
    pub fn fields(&self) -> Result<Vec<StressField>> {
        let sets = self.snapshot_sets()?;
        Ok((0..self.meta.m).map(|j| field_from_sets(&sets, j, self.meta.n_elements, &self.meta.load_cases)).collect())
    }

    /// Hash over the manifest and every data file.
    pub fn digest(&self) -> Result<String> {
        let mut h = Sha256::new();
        let mut names = vec![MANIFEST.to_string(), SAMPLES.to_string(), MASS.to_string()];
        names.extend(Component::ALL.iter().map(|c| format!("{}.bin", c.tag())));
        for n in names {
            h.update(n.as_bytes());
            h.update(fs::read(self.dir.join(&n))?);
        }
        Ok(hex::encode(h.finalize()))
    }
}

/// Column `j` of six per-component sets, as a stress field.
pub fn field_from_sets(sets: &[SnapshotSet], j: usize, n_elements: usize, load_cases: &[LoadCase]) -> StressField {
    let mut f = StressField::zeros(n_elements, load_cases);
    for (c, set) in Component::ALL.iter().zip(sets) {
        f.component_mut(*c).copy_from_slice(set.snapshots.column(j).as_slice());
    }
    f
}

/// Per-component snapshot sets from in-memory fields.
pub fn sets_from_fields(params: &[Vec<f64>], fields: &[StressField]) -> Result<Vec<SnapshotSet>> {
    let cols: Vec<usize> = fields.iter().map(|f| f.component_len()).collect();
    if cols.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::Argument("stress fields differ in layout".into()));
    }
    let n = cols.first().copied().unwrap_or(0);
    Component::ALL
        .iter()
        .map(|&c| {
            let s = DMatrix::from_fn(n, fields.len(), |i, j| fields[j].component(c)[i]);
            SnapshotSet::new(c.tag(), params.to_vec(), s)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::maximin_design;
    use crate::synthfom::{build_default_mesh, solve};

    #[test]
    fn matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = DMatrix::from_fn(3, 4, |i, j| i as f64 - 0.5 * j as f64);
        let p = dir.path().join("m.bin");
        write_matrix(&p, &m).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), 96);
        assert_eq!(read_matrix(&p, 3, 4).unwrap(), m);
        assert!(matches!(read_matrix(&p, 4, 4), Err(Error::Integrity(_))));
    }

    #[test]
    fn fill_resume_and_verify() {
        let space = ParameterSpace::hull16(0.5);
        let mesh = build_default_mesh(&space, 4, 18).unwrap();
        let samples = maximin_design(&space, 5, 2, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        let mut sa = SnapshotStore::create(&a, &space, &samples, mesh.n_elements(), &LoadCase::ALL, "h", 1).unwrap();
        for p in &samples.points {
            sa.append(&solve(&mesh, p, &LoadCase::ALL).unwrap()).unwrap();
        }
        let mut sb = SnapshotStore::create(&b, &space, &samples, mesh.n_elements(), &LoadCase::ALL, "h", 1).unwrap();
        for p in &samples.points[..2] {
            sb.append(&solve(&mesh, p, &LoadCase::ALL).unwrap()).unwrap();
        }
        // a torn write past the last completed column
        OpenOptions::new().append(true).open(b.join("sx.bin")).unwrap().write_all(&[1, 2, 3]).unwrap();
        let mut sb = SnapshotStore::create(&b, &space, &samples, mesh.n_elements(), &LoadCase::ALL, "h", 1).unwrap();
        assert_eq!(sb.next_column(), 2);
        for p in &samples.points[2..] {
            sb.append(&solve(&mesh, p, &LoadCase::ALL).unwrap()).unwrap();
        }
        assert_eq!(sa.digest().unwrap(), sb.digest().unwrap());
        let fields = sb.fields().unwrap();
        let direct = solve(&mesh, &samples.points[3], &LoadCase::ALL).unwrap();
        assert_eq!(fields[3], direct.stress);
        fs::write(b.join("samples.csv"), "garbage").unwrap();
        assert!(matches!(SnapshotStore::open(&b, &space), Err(Error::Integrity(_))));
    }
}

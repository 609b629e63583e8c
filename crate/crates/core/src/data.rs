//! Labelled datasets, a Gaussian-blob generator and IDX file I/O.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::{seeded, streams};
use crate::tensor::Tensor;

/// Row-major `f32` features with one class label per example.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    classes: usize,
    features: Vec<f32>,
    labels: Vec<u32>,
}

impl Dataset {
    pub fn new(dim: usize, classes: usize, features: Vec<f32>, labels: Vec<u32>) -> Result<Self> {
        if dim == 0 || classes == 0 {
            return Err(Error::Data("dimension and class count must be positive".into()));
        }
        if features.len() != dim * labels.len() {
            return Err(Error::Data(format!(
                "{} features for {} examples of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(y) = labels.iter().find(|&&y| y as usize >= classes) {
            return Err(Error::Data(format!("label {y} outside 0..{classes}")));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::Data("non-finite feature".into()));
        }
        Ok(Dataset {
            dim,
            classes,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn example(&self, i: usize) -> (&[f32], u32) {
        (&self.features[i * self.dim..(i + 1) * self.dim], self.labels[i])
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            features.extend_from_slice(self.example(i).0);
        }
        Dataset {
            dim: self.dim,
            classes: self.classes,
            features,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// First `at` examples and the rest.
    pub fn split_at(&self, at: usize) -> (Dataset, Dataset) {
        let at = at.min(self.len());
        let head: Vec<usize> = (0..at).collect();
        let tail: Vec<usize> = (at..self.len()).collect();
        (self.subset(&head), self.subset(&tail))
    }

    /// `parts` contiguous shards of near-equal size.
    pub fn shard(&self, parts: usize) -> Vec<Dataset> {
        let parts = parts.max(1);
        let n = self.len();
        (0..parts)
            .map(|p| {
                let idx: Vec<usize> = (p * n / parts..(p + 1) * n / parts).collect();
                self.subset(&idx)
            })
            .collect()
    }

    /// Features as a `[len, dim]` tensor.
    pub fn to_tensor<T: Real>(&self) -> Result<Tensor<T>> {
        Tensor::new(
            vec![self.len(), self.dim],
            self.features.iter().map(|&x| T::from_f64(x as f64)).collect(),
        )
    }

    /// Appends `other`, which must have the same dimension and classes.
    pub fn extend(&mut self, other: &Dataset) -> Result<()> {
        if other.dim != self.dim || other.classes != self.classes {
            return Err(Error::Data("cannot join datasets of different shape".into()));
        }
        self.features.extend_from_slice(&other.features);
        self.labels.extend_from_slice(&other.labels);
        Ok(())
    }
}

/// Settings for [`gaussian_blobs`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BlobConfig {
    pub examples: usize,
    pub dim: usize,
    pub classes: usize,
    /// Distance between any two class means, in units of the per-axis
    /// standard deviation (which is one).
    pub separation: f64,
    pub seed: u64,
}

impl Default for BlobConfig {
    fn default() -> Self {
        BlobConfig {
            examples: 6000,
            dim: 20,
            classes: 2,
            separation: 2.5,
            seed: 0,
        }
    }
}

/// Isotropic unit-variance Gaussian clusters. Class `c` is centred at
/// `separation/√2` along axis `c mod dim`, so every pair of means is
/// `separation` apart when `classes ≤ dim`. Classes are balanced and the
/// examples come in shuffled order.
pub fn gaussian_blobs(cfg: &BlobConfig) -> Result<Dataset> {
    if cfg.classes < 2 || cfg.classes > cfg.dim || cfg.examples == 0 {
        return Err(Error::Data(format!("invalid blob configuration {cfg:?}")));
    }
    let mut rng = seeded(cfg.seed, streams::DATA);
    let mut labels: Vec<u32> = (0..cfg.examples).map(|i| (i % cfg.classes) as u32).collect();
    labels.shuffle(&mut rng);
    let offset = cfg.separation / std::f64::consts::SQRT_2;
    let mut features = Vec::with_capacity(cfg.examples * cfg.dim);
    for &y in &labels {
        for j in 0..cfg.dim {
            let z: f64 = rng.sample(StandardNormal);
            let mean = if j == y as usize % cfg.dim { offset } else { 0.0 };
            features.push((mean + z) as f32);
        }
    }
    Dataset::new(cfg.dim, cfg.classes, features, labels)
}

/// Element payload of an IDX file.
#[derive(Debug, Clone, PartialEq)]
pub enum IdxData {
    U8(Vec<u8>),
    F32(Vec<f32>),
}

/// A decoded IDX array.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: IdxData,
}

const IDX_U8: u8 = 0x08;
const IDX_F32: u8 = 0x0D;

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Data(format!("{}: {e}", path.display()))
}

/// Reads an IDX file with unsigned-byte or float elements.
pub fn read_idx(path: &Path) -> Result<IdxArray> {
    let mut r = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| io_err(path, e))?;
    if magic[0] != 0 || magic[1] != 0 || magic[3] == 0 {
        return Err(Error::Data(format!("{}: not an IDX file", path.display())));
    }
    let mut dims = Vec::with_capacity(magic[3] as usize);
    for _ in 0..magic[3] {
        let mut b = [0u8; 4];
        r.read_exact(&mut b).map_err(|e| io_err(path, e))?;
        dims.push(u32::from_be_bytes(b) as usize);
    }
    let count: usize = dims.iter().product();
    let data = match magic[2] {
        IDX_U8 => {
            let mut v = vec![0u8; count];
            r.read_exact(&mut v).map_err(|e| io_err(path, e))?;
            IdxData::U8(v)
        }
        IDX_F32 => {
            let mut raw = vec![0u8; count * 4];
            r.read_exact(&mut raw).map_err(|e| io_err(path, e))?;
            IdxData::F32(
                raw.chunks_exact(4)
                    .map(|c| f32::from_be_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            )
        }
        t => return Err(Error::Data(format!("{}: unsupported IDX type 0x{t:02x}", path.display()))),
    };
    Ok(IdxArray { dims, data })
}

pub fn write_idx(path: &Path, array: &IdxArray) -> Result<()> {
    let count: usize = array.dims.iter().product();
    let (ty, len) = match &array.data {
        IdxData::U8(v) => (IDX_U8, v.len()),
        IdxData::F32(v) => (IDX_F32, v.len()),
    };
    if len != count || array.dims.is_empty() || array.dims.len() > 255 {
        return Err(Error::Data(format!("IDX dims {:?} do not fit {len} elements", array.dims)));
    }
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    let mut buf = vec![0, 0, ty, array.dims.len() as u8];
    for &d in &array.dims {
        let d = u32::try_from(d).map_err(|_| Error::Data(format!("IDX dimension {d} too large")))?;
        buf.extend_from_slice(&d.to_be_bytes());
    }
    match &array.data {
        IdxData::U8(v) => buf.extend_from_slice(v),
        IdxData::F32(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_be_bytes())),
    }
    w.write_all(&buf).map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

/// Joins an IDX feature file (`[n, ...]`, bytes scaled to `[0, 1]`) and an
/// IDX label file (`[n]`, bytes).
pub fn load_idx_dataset(features: &Path, labels: &Path, classes: usize) -> Result<Dataset> {
    let x = read_idx(features)?;
    let y = read_idx(labels)?;
    let n = x.dims[0];
    if y.dims != [n] {
        return Err(Error::Data(format!("label dims {:?} do not match {n} examples", y.dims)));
    }
    let dim: usize = x.dims[1..].iter().product::<usize>().max(1);
    let feats = match x.data {
        IdxData::U8(v) => v.into_iter().map(|b| b as f32 / 255.0).collect(),
        IdxData::F32(v) => v,
    };
    let labels = match y.data {
        IdxData::U8(v) => v.into_iter().map(u32::from).collect(),
        IdxData::F32(_) => return Err(Error::Data("labels must be unsigned bytes".into())),
    };
    Dataset::new(dim, classes, feats, labels)
}

/// Writes `ds` as a float feature file and a byte label file.
pub fn save_idx_dataset(ds: &Dataset, features: &Path, labels: &Path) -> Result<()> {
    if ds.classes > 256 {
        return Err(Error::Data("byte labels hold at most 256 classes".into()));
    }
    write_idx(
        features,
        &IdxArray {
            dims: vec![ds.len(), ds.dim],
            data: IdxData::F32(ds.features.clone()),
        },
    )?;
    write_idx(
        labels,
        &IdxArray {
            dims: vec![ds.len()],
            data: IdxData::U8(ds.labels.iter().map(|&y| y as u8).collect()),
        },
    )
}

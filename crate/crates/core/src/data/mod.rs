//! Datasets: IDX ingestion, binarization, synthetic blobs and batching.

mod idx;

use std::path::Path;

pub use idx::{parse_idx, write_idx_images, write_idx_labels, IdxArray};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::special_math::{derive_seed, Rng};

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `[n, d]`; image datasets hold intensities in `[0, 1]`.
    pub images: Tensor,
    pub labels: Option<Vec<usize>>,
    pub name: String,
    pub source_digest: u64,
}

pub const DEFAULT_BINARIZE_THRESHOLD: f64 = 0.5;

impl Dataset {
    pub fn new(images: Tensor, labels: Option<Vec<usize>>, name: impl Into<String>, source_digest: u64) -> Result<Self> {
        if images.shape().len() != 2 {
            return Err(Error::Data(format!("images must be 2-D, got shape {:?}", images.shape())));
        }
        if let Some(l) = &labels {
            if l.len() != images.rows_cols().0 {
                return Err(Error::Data(format!(
                    "{} labels for {} images",
                    l.len(),
                    images.rows_cols().0
                )));
            }
        }
        Ok(Self {
            images,
            labels,
            name: name.into(),
            source_digest,
        })
    }

    pub fn len(&self) -> usize {
        self.images.rows_cols().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.images.rows_cols().1
    }

    pub fn num_classes(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().max())
            .map_or(0, |m| m + 1)
    }

    /// Parses an image file and an optional label file.
    pub fn from_idx_bytes(images: &[u8], labels: Option<&[u8]>, name: impl Into<String>) -> Result<Self> {
        let tensor = match parse_idx(images)? {
            IdxArray::Images { tensor, .. } => tensor,
            IdxArray::Labels(_) => return Err(Error::Idx("expected an image file, found labels".into())),
        };
        let mut digest_src = fnv1a64(images).to_le_bytes().to_vec();
        let labels = match labels {
            None => None,
            Some(bytes) => {
                digest_src.extend_from_slice(&fnv1a64(bytes).to_le_bytes());
                match parse_idx(bytes)? {
                    IdxArray::Labels(l) => Some(l.into_iter().map(usize::from).collect()),
                    IdxArray::Images { .. } => return Err(Error::Idx("expected a label file, found images".into())),
                }
            }
        };
        Self::new(tensor, labels, name, fnv1a64(&digest_src))
    }

    pub fn load_idx(images: &Path, labels: Option<&Path>) -> Result<Self> {
        let read = |p: &Path| std::fs::read(p).map_err(|e| Error::Data(format!("{}: {e}", p.display())));
        let img = read(images)?;
        let lab = labels.map(read).transpose()?;
        let name = images
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::from_idx_bytes(&img, lab.as_deref(), name)
    }

    /// Loads `{train,t10k}-{images-idx3,labels-idx1}-ubyte` from a directory.
    pub fn load_mnist_dir(dir: &Path, train: bool) -> Result<Self> {
        let prefix = if train { "train" } else { "t10k" };
        Self::load_idx(
            &dir.join(format!("{prefix}-images-idx3-ubyte")),
            Some(&dir.join(format!("{prefix}-labels-idx1-ubyte"))),
        )
    }

    /// Pixels `>= threshold` become 1, the rest 0.
    pub fn binarize(&self, threshold: f64) -> Dataset {
        let mut out = self.clone();
        for v in out.images.data_mut() {
            *v = if *v >= threshold { 1.0 } else { 0.0 };
        }
        out.name = format!("{}|bin{threshold}", self.name);
        out
    }

    /// The first `n` items in file order.
    pub fn take_first(&self, n: usize) -> Result<Dataset> {
        if n > self.len() {
            return Err(Error::Data(format!("take_first({n}) on a dataset of {}", self.len())));
        }
        Ok(Dataset {
            images: self.images.slice_rows(0, n)?,
            labels: self.labels.as_ref().map(|l| l[..n].to_vec()),
            name: self.name.clone(),
            source_digest: self.source_digest,
        })
    }

    /// Rows `idx` as a batch.
    pub fn batch(&self, idx: &[usize]) -> Result<(Tensor, Option<Vec<usize>>)> {
        let x = self.images.gather_rows(idx)?;
        let y = self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect());
        Ok((x, y))
    }

    /// Digest of name, shape and contents.
    pub fn content_digest(&self) -> u64 {
        let mut bytes = Vec::with_capacity(8 * (self.images.len() + 4));
        bytes.extend_from_slice(self.name.as_bytes());
        for &s in self.images.shape() {
            bytes.extend_from_slice(&(s as u64).to_le_bytes());
        }
        for v in self.images.data() {
            bytes.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        if let Some(l) = &self.labels {
            for &y in l {
                bytes.extend_from_slice(&(y as u64).to_le_bytes());
            }
        }
        fnv1a64(&bytes)
    }
}

/// Isotropic unit-variance Gaussian blobs, `n_per_class` each, grouped by
/// class. Centre `c` sits on axis `c mod dim` at distance `separation`, with
/// further rings at alternating sign when `classes > dim`.
pub fn synthetic_blobs(rng: &mut Rng, n_per_class: usize, classes: usize, dim: usize, separation: f64) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::Data(format!("need at least 2 classes, got {classes}")));
    }
    if dim == 0 {
        return Err(Error::Data("dim must be positive".into()));
    }
    let centres: Vec<Vec<f64>> = (0..classes)
        .map(|c| {
            let mut v = vec![0.0; dim];
            let axis = c % dim;
            let ring = (c / dim) as f64 + 1.0;
            v[axis] = separation * ring * if (c / dim).is_multiple_of(2) { 1.0 } else { -1.0 };
            v
        })
        .collect();
    let mut data = Vec::with_capacity(n_per_class * classes * dim);
    let mut labels = Vec::with_capacity(n_per_class * classes);
    for (c, centre) in centres.iter().enumerate() {
        for _ in 0..n_per_class {
            for &m in centre {
                data.push(m + rng.standard_normal());
            }
            labels.push(c);
        }
    }
    let images = Tensor::matrix(n_per_class * classes, dim, data)?;
    let digest = fnv1a64(format!("blobs:{}:{n_per_class}:{classes}:{dim}:{separation}", rng.seed()).as_bytes());
    Dataset::new(images, Some(labels), format!("blobs{classes}x{n_per_class}d{dim}"), digest)
}

/// Index batches covering `0..n` once. With `shuffle` the order is a
/// permutation drawn from `rng`; the last batch may be short.
pub fn batch_iter(n: usize, batch_size: usize, rng: &mut Rng, shuffle: bool) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Data("batch_size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        rng.shuffle(&mut order);
    }
    Ok(order.chunks(batch_size).map(|c| c.to_vec()).collect())
}

/// Batches for one epoch, reproducible from `(seed, epoch)` alone.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: u64, shuffle: bool) -> Result<Vec<Vec<usize>>> {
    let mut rng = Rng::new(derive_seed(seed, &[epoch]));
    batch_iter(n, batch_size, &mut rng, shuffle)
}

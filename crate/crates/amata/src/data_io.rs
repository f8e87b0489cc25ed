//! Dataset acquisition: IDX parsing, synthetic Gaussian blobs, and
//! deterministic subsetting. All inputs land in `[0, 1]`, which the PGD
//! domain clipping relies on.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// A labeled dataset: inputs `[N x D]` in `[0, 1]` and class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T = f64> {
    pub inputs: Tensor<T>,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl<T: Real> Dataset<T> {
    pub fn new(inputs: Tensor<T>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if inputs.shape().len() != 2 {
            return Err(Error::contract(format!(
                "dataset inputs must be 2-D, got {:?}",
                inputs.shape()
            )));
        }
        if inputs.shape()[0] != labels.len() {
            return Err(Error::ShapeMismatch {
                op: "dataset labels",
                lhs: inputs.shape().to_vec(),
                rhs: vec![labels.len()],
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::IndexOutOfRange {
                what: "class label",
                index: bad,
                bound: class_count,
            });
        }
        if inputs
            .data()
            .iter()
            .any(|&v| !(v >= T::zero() && v <= T::one()))
        {
            return Err(Error::contract("dataset inputs must lie in [0, 1]"));
        }
        Ok(Dataset {
            inputs,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.shape()[1]
    }

    pub fn example(&self, i: usize) -> Result<(&[T], usize)> {
        if i >= self.len() {
            return Err(Error::IndexOutOfRange {
                what: "example index",
                index: i,
                bound: self.len(),
            });
        }
        Ok((self.inputs.row(i), self.labels[i]))
    }

    /// New dataset with the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let inputs = self.inputs.gather_rows(indices)?;
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Ok(Dataset {
            inputs,
            labels,
            class_count: self.class_count,
        })
    }
}

fn read_u32_be(bytes: &[u8], pos: &mut usize) -> Result<u32> {
    if *pos + 4 > bytes.len() {
        return Err(Error::Truncated {
            needed: *pos + 4,
            got: bytes.len(),
        });
    }
    let v = u32::from_be_bytes(bytes[*pos..*pos + 4].try_into().unwrap());
    *pos += 4;
    Ok(v)
}

/// Parses the IDX pair used by the MNIST distribution: big-endian magic
/// 0x00000803 + (count, rows, cols) for images, 0x00000801 + count for
/// labels, then unsigned bytes. Pixels are scaled by 1/255.
pub fn load_mnist_idx<T: Real>(images_path: &Path, labels_path: &Path) -> Result<Dataset<T>> {
    let images = fs::read(images_path)?;
    let labels = fs::read(labels_path)?;
    parse_idx(&images, &labels)
}

fn parse_idx<T: Real>(images: &[u8], labels: &[u8]) -> Result<Dataset<T>> {
    let mut pos = 0usize;
    let magic = read_u32_be(images, &mut pos)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "image magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}"
        )));
    }
    let count = read_u32_be(images, &mut pos)? as usize;
    let rows = read_u32_be(images, &mut pos)? as usize;
    let cols = read_u32_be(images, &mut pos)? as usize;
    let dim = rows * cols;
    let needed = pos + count * dim;
    if images.len() < needed {
        return Err(Error::Truncated {
            needed,
            got: images.len(),
        });
    }
    if images.len() > needed {
        return Err(Error::Format(format!(
            "{} trailing bytes in image file",
            images.len() - needed
        )));
    }

    let mut lpos = 0usize;
    let lmagic = read_u32_be(labels, &mut lpos)?;
    if lmagic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!(
            "label magic 0x{lmagic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}"
        )));
    }
    let lcount = read_u32_be(labels, &mut lpos)? as usize;
    if lcount != count {
        return Err(Error::Format(format!(
            "image count {count} != label count {lcount}"
        )));
    }
    let lneeded = lpos + lcount;
    if labels.len() < lneeded {
        return Err(Error::Truncated {
            needed: lneeded,
            got: labels.len(),
        });
    }
    if labels.len() > lneeded {
        return Err(Error::Format(format!(
            "{} trailing bytes in label file",
            labels.len() - lneeded
        )));
    }

    let scale = T::of(1.0 / 255.0);
    let data: Vec<T> = images[pos..]
        .iter()
        .map(|&b| T::of_usize(b as usize) * scale)
        .collect();
    let label_vec: Vec<usize> = labels[lpos..].iter().map(|&b| b as usize).collect();
    if let Some(&bad) = label_vec.iter().find(|&&l| l >= 10) {
        return Err(Error::Format(format!("label byte {bad} out of range 0..10")));
    }
    Dataset::new(Tensor::from_vec(vec![count, dim], data)?, label_vec, 10)
}

/// Writes a dataset back out as an IDX pair (pixels quantized to bytes by
/// round(v * 255); square image side inferred from the dimension when
/// possible, otherwise 1 x D). Writes are atomic (temp file + rename).
pub fn save_idx<T: Real>(data: &Dataset<T>, images_path: &Path, labels_path: &Path) -> Result<()> {
    let n = data.len();
    let dim = data.dim();
    let side = (dim as f64).sqrt().round() as usize;
    let (rows, cols) = if side * side == dim { (side, side) } else { (1, dim) };

    let mut images = Vec::with_capacity(16 + n * dim);
    images.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    images.extend_from_slice(&(n as u32).to_be_bytes());
    images.extend_from_slice(&(rows as u32).to_be_bytes());
    images.extend_from_slice(&(cols as u32).to_be_bytes());
    for &v in data.inputs.data() {
        let byte = (v.to_f64().unwrap_or(0.0) * 255.0).round().clamp(0.0, 255.0) as u8;
        images.push(byte);
    }

    let mut labels = Vec::with_capacity(8 + n);
    labels.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(n as u32).to_be_bytes());
    for &l in &data.labels {
        labels.push(l as u8);
    }

    atomic_write(images_path, &images)?;
    atomic_write(labels_path, &labels)?;
    Ok(())
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Synthetic Gaussian blobs: class `c` is an isotropic unit Gaussian centered
/// at `separation * e_c`, squashed into `[0, 1]` by the fixed global map
/// `v -> clamp((v + 3 s) / (6 s), 0, 1)` with `s = 1 + separation / 3`, so
/// the map covers the class means. Deterministic given the seed.
pub fn synth_gaussians<T: Real>(
    n_per_class: usize,
    dim: usize,
    class_count: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset<T>> {
    if class_count == 0 || dim < class_count {
        return Err(Error::contract(format!(
            "need dim >= class_count >= 1 for distinct means, got dim {dim}, classes {class_count}"
        )));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::contract(format!(
            "separation must be finite and >= 0, got {separation}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let s = 1.0 + separation / 3.0;
    let n = n_per_class * class_count;
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for class in 0..class_count {
        for _ in 0..n_per_class {
            for d in 0..dim {
                let mean = if d == class { separation } else { 0.0 };
                let z: f64 = normal.sample(&mut rng);
                let v = ((mean + z + 3.0 * s) / (6.0 * s)).clamp(0.0, 1.0);
                data.push(T::of(v));
            }
            labels.push(class);
        }
    }
    Dataset::new(Tensor::from_vec(vec![n, dim], data)?, labels, class_count)
}

/// Seeded sample of `n` examples without replacement. The selection keeps the
/// original relative order (stable), so the same seed always yields the same
/// dataset bytes.
pub fn subset<T: Real>(data: &Dataset<T>, n: usize, seed: u64) -> Result<Dataset<T>> {
    if n > data.len() {
        return Err(Error::contract(format!(
            "subset of {n} from dataset of {}",
            data.len()
        )));
    }
    let mut indices: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Partial Fisher-Yates: the first n slots become the sample.
    for i in 0..n {
        let j = rng.random_range(i..indices.len());
        indices.swap(i, j);
    }
    let mut chosen = indices[..n].to_vec();
    chosen.sort_unstable();
    data.select(&chosen)
}

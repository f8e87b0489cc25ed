//! Dense relu classifiers: definition, initialization, loss/gradient entry
//! points, and a flat binary parameter format.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tape::Tape;
use crate::tensor::{matmul_nn, Tensor};

/// Magic prefix of the serialized parameter format.
pub const PARAMS_MAGIC: &[u8; 4] = b"AMLP";
/// Current version of the serialized parameter format.
pub const PARAMS_VERSION: u32 = 1;

/// Architecture of a dense classifier: layer sizes (input dimension first,
/// class count last) and the init seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub seed: u64,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::contract(
                "layer_sizes needs at least an input and an output size",
            ));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::contract("layer sizes must be positive"));
        }
        Ok(MlpSpec { layer_sizes, seed })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn class_count(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }
}

/// One dense layer: weight `[fan_in x fan_out]` and bias `[fan_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T = f64> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Trainable parameters of a dense classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T = f64> {
    layers: Vec<DenseLayer<T>>,
}

impl<T: Real> Params<T> {
    pub fn layers(&self) -> &[DenseLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer<T>] {
        &mut self.layers
    }

    /// Layer sizes implied by the stored tensors.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].weight.shape()[0]];
        for layer in &self.layers {
            sizes.push(layer.weight.shape()[1]);
        }
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.shape()[0]
    }

    pub fn class_count(&self) -> usize {
        self.layers.last().unwrap().weight.shape()[1]
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.numel() + l.bias.numel())
            .sum()
    }

    /// Flat view: weights then bias per layer, row-major, layer order.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(layer.weight.data());
            out.extend_from_slice(layer.bias.data());
        }
        out
    }

    /// Inverse of [`Params::flatten`] for the given layer sizes.
    pub fn unflatten(layer_sizes: &[usize], flat: &[T]) -> Result<Self> {
        let spec = MlpSpec::new(layer_sizes.to_vec(), 0)?;
        let expected: usize = spec
            .layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        if flat.len() != expected {
            return Err(Error::contract(format!(
                "flat vector has {} values, layer sizes {:?} need {}",
                flat.len(),
                layer_sizes,
                expected
            )));
        }
        let mut layers = Vec::with_capacity(layer_sizes.len() - 1);
        let mut off = 0;
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weight =
                Tensor::from_vec(vec![fan_in, fan_out], flat[off..off + fan_in * fan_out].to_vec())?;
            off += fan_in * fan_out;
            let bias = Tensor::from_vec(vec![fan_out], flat[off..off + fan_out].to_vec())?;
            off += fan_out;
            layers.push(DenseLayer { weight, bias });
        }
        Ok(Params { layers })
    }

    /// Same structure with all values zero (optimizer state, accumulators).
    pub fn zeros_like(&self) -> Self {
        Params {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer {
                    weight: Tensor::zeros(l.weight.shape().to_vec()),
                    bias: Tensor::zeros(l.bias.shape().to_vec()),
                })
                .collect(),
        }
    }

    /// Sum of squares over all parameters (fixed flatten order).
    pub fn norm_sq(&self) -> T {
        let mut acc = T::zero();
        for layer in &self.layers {
            for &v in layer.weight.data() {
                acc += v * v;
            }
            for &v in layer.bias.data() {
                acc += v * v;
            }
        }
        acc
    }

    /// Serializes to the flat binary format: `AMLP`, version u32, layer-size
    /// count u32, layer sizes u32 each, then every value as a little-endian
    /// 64-bit float in flatten order. All header integers are little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let sizes = self.layer_sizes();
        let mut out = Vec::with_capacity(16 + 4 * sizes.len() + 8 * self.param_count());
        out.extend_from_slice(PARAMS_MAGIC);
        out.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
        out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
        for s in &sizes {
            out.extend_from_slice(&(*s as u32).to_le_bytes());
        }
        for v in self.flatten() {
            out.extend_from_slice(&v.to_f64().expect("scalar convertible to f64").to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = Cursor { bytes, pos: 0 };
        let magic = cursor.take(4)?;
        if magic != PARAMS_MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:02x?}, expected {:02x?}",
                magic, PARAMS_MAGIC
            )));
        }
        let version = cursor.u32()?;
        if version != PARAMS_VERSION {
            return Err(Error::Format(format!(
                "unsupported version {version}, expected {PARAMS_VERSION}"
            )));
        }
        let n_sizes = cursor.u32()? as usize;
        if n_sizes < 2 {
            return Err(Error::Format(format!("layer-size count {n_sizes} < 2")));
        }
        let mut sizes = Vec::with_capacity(n_sizes);
        for _ in 0..n_sizes {
            sizes.push(cursor.u32()? as usize);
        }
        let count: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let mut flat = Vec::with_capacity(count);
        for _ in 0..count {
            flat.push(T::of(f64::from_le_bytes(
                cursor.take(8)?.try_into().unwrap(),
            )));
        }
        if cursor.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                bytes.len() - cursor.pos
            )));
        }
        Params::unflatten(&sizes, &flat)
    }

    /// Writes the binary format atomically (temp file + rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("amlp.tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Params::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated {
                needed: self.pos + n,
                got: self.bytes.len(),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Initializes parameters for the given architecture: weights drawn from a
/// zero-mean normal scaled by 1/sqrt(fan_in), biases zero. Deterministic in
/// the spec seed (bit-identical across runs).
pub fn init_params<T: Real>(spec: &MlpSpec) -> Params<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = StandardNormal;
    let mut layers = Vec::with_capacity(spec.layer_sizes.len() - 1);
    for w in spec.layer_sizes.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let scale = 1.0 / (fan_in as f64).sqrt();
        let data: Vec<T> = (0..fan_in * fan_out)
            .map(|_| {
                let z: f64 = normal.sample(&mut rng);
                T::of(z * scale)
            })
            .collect();
        layers.push(DenseLayer {
            weight: Tensor::from_vec(vec![fan_in, fan_out], data).expect("consistent init shape"),
            bias: Tensor::zeros(vec![fan_out]),
        });
    }
    Params { layers }
}

/// Which gradients [`loss_and_grads`] should produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wrt {
    ParamsOnly,
    InputOnly,
    Both,
}

/// Gradients returned by [`loss_and_grads`].
#[derive(Debug, Clone)]
pub struct Grads<T = f64> {
    pub params: Option<Params<T>>,
    pub input: Option<Tensor<T>>,
}

/// Mean cross-entropy of the model on `(x, y)` plus the requested gradients.
/// Pure: no state is mutated, repeated calls return identical results.
pub fn loss_and_grads<T: Real>(
    params: &Params<T>,
    x: &Tensor<T>,
    y: &[usize],
    wrt: Wrt,
) -> Result<(T, Grads<T>)> {
    check_batch(params, x, y)?;
    let want_params = matches!(wrt, Wrt::ParamsOnly | Wrt::Both);
    let want_input = matches!(wrt, Wrt::InputOnly | Wrt::Both);

    let mut tape = Tape::new();
    let x_node = if want_input {
        tape.leaf(x.clone())
    } else {
        tape.constant(x.clone())
    };
    let mut param_nodes = Vec::new();
    let mut h = x_node;
    let last = params.layers.len() - 1;
    for (i, layer) in params.layers.iter().enumerate() {
        let (w, b) = if want_params {
            let w = tape.leaf(layer.weight.clone());
            let b = tape.leaf(layer.bias.clone());
            param_nodes.push((w, b));
            (w, b)
        } else {
            (tape.constant(layer.weight.clone()), tape.constant(layer.bias.clone()))
        };
        h = tape.affine(h, w, b)?;
        if i != last {
            h = tape.relu(h);
        }
    }
    let loss_node = tape.softmax_cross_entropy(h, y)?;
    let loss = tape.value(loss_node).scalar_value()?;

    let mut leaves = Vec::new();
    if want_input {
        leaves.push(x_node);
    }
    for (w, b) in &param_nodes {
        leaves.push(*w);
        leaves.push(*b);
    }
    let mut grads = tape.backward(loss_node, &leaves)?;

    let mut out = Grads {
        params: None,
        input: None,
    };
    let mut it = grads.drain(..);
    if want_input {
        out.input = Some(it.next().unwrap());
    }
    if want_params {
        let mut layers = Vec::with_capacity(params.layers.len());
        while let (Some(w), Some(b)) = (it.next(), it.next()) {
            layers.push(DenseLayer { weight: w, bias: b });
        }
        out.params = Some(Params { layers });
    }
    Ok((loss, out))
}

/// Forward pass without recording: logits `[B x C]`.
pub fn forward_logits<T: Real>(params: &Params<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape().len() != 2 || x.shape()[1] != params.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "forward input",
            lhs: x.shape().to_vec(),
            rhs: vec![x.shape().first().copied().unwrap_or(0), params.input_dim()],
        });
    }
    let last = params.layers.len() - 1;
    let mut h = x.clone();
    for (i, layer) in params.layers.iter().enumerate() {
        let mut out = matmul_nn(&h, &layer.weight)?;
        let cols = out.cols();
        for row in 0..out.rows() {
            let start = row * cols;
            for (o, &bj) in out.data_mut()[start..start + cols]
                .iter_mut()
                .zip(layer.bias.data())
            {
                *o += bj;
            }
        }
        if i != last {
            for v in out.data_mut() {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
        }
        h = out;
    }
    Ok(h)
}

/// Predicted class per row; ties break toward the lowest class index.
pub fn predict<T: Real>(params: &Params<T>, x: &Tensor<T>) -> Result<Vec<usize>> {
    let logits = forward_logits(params, x)?;
    Ok((0..logits.rows())
        .map(|i| argmax_lowest(logits.row(i)))
        .collect())
}

fn argmax_lowest<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Fraction of rows whose argmax logit matches the label.
pub fn accuracy<T: Real>(params: &Params<T>, x: &Tensor<T>, y: &[usize]) -> Result<f64> {
    check_batch(params, x, y)?;
    let preds = predict(params, x)?;
    let correct = preds.iter().zip(y).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / y.len().max(1) as f64)
}

/// Per-example cross-entropy losses (no averaging).
pub fn per_example_losses<T: Real>(
    params: &Params<T>,
    x: &Tensor<T>,
    y: &[usize],
) -> Result<Vec<T>> {
    check_batch(params, x, y)?;
    let logits = forward_logits(params, x)?;
    let mut out = Vec::with_capacity(y.len());
    for (i, &label) in y.iter().enumerate() {
        let row = logits.row(i);
        if label >= row.len() {
            return Err(Error::IndexOutOfRange {
                what: "class label",
                index: label,
                bound: row.len(),
            });
        }
        let mut max = row[0];
        for &v in &row[1..] {
            if v > max {
                max = v;
            }
        }
        let mut denom = T::zero();
        for &v in row {
            denom += (v - max).exp();
        }
        out.push(max + denom.ln() - row[label]);
    }
    Ok(out)
}

fn check_batch<T: Real>(params: &Params<T>, x: &Tensor<T>, y: &[usize]) -> Result<()> {
    if x.shape().len() != 2 || x.shape()[1] != params.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "model input",
            lhs: x.shape().to_vec(),
            rhs: vec![x.shape().first().copied().unwrap_or(0), params.input_dim()],
        });
    }
    if x.shape()[0] != y.len() {
        return Err(Error::ShapeMismatch {
            op: "labels",
            lhs: x.shape().to_vec(),
            rhs: vec![y.len()],
        });
    }
    Ok(())
}

//! Dense row-major tensors.
//!
//! The numeric substrate for models, gradients, and perturbations. Shapes are
//! explicit, storage is contiguous row-major, and every reduction runs in a
//! fixed order so results are bit-reproducible across runs.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense row-major array with an explicit shape.
///
/// Invariant: `shape.iter().product() == data.len()`. A scalar has the empty
/// shape `[]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f64> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    /// Builds a tensor from a shape and row-major data.
    pub fn from_vec(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::contract(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![T::zero(); numel],
        }
    }

    pub fn filled(shape: Vec<usize>, value: T) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; numel],
        }
    }

    /// A scalar tensor (empty shape, one element).
    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a scalar tensor.
    pub fn scalar_value(&self) -> Result<T> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(Error::contract(format!(
                "expected scalar, got shape {:?}",
                self.shape
            )))
        }
    }

    /// Row count of a 2-D tensor.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Column count of a 2-D tensor.
    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    /// Element of a 2-D tensor.
    pub fn at(&self, i: usize, j: usize) -> T {
        self.data[i * self.shape[1] + j]
    }

    /// Row `i` of a 2-D tensor.
    pub fn row(&self, i: usize) -> &[T] {
        let c = self.shape[1];
        &self.data[i * c..(i + 1) * c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Gathers rows of a 2-D tensor into a new tensor, in the given order.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Self> {
        if self.shape.len() != 2 {
            return Err(Error::contract(format!(
                "gather_rows expects a 2-D tensor, got shape {:?}",
                self.shape
            )));
        }
        let cols = self.shape[1];
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            if i >= self.shape[0] {
                return Err(Error::IndexOutOfRange {
                    what: "row index",
                    index: i,
                    bound: self.shape[0],
                });
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Tensor {
            shape: vec![indices.len(), cols],
            data,
        })
    }

    pub(crate) fn same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape == other.shape {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                op,
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            })
        }
    }
}

/// C[BxN] = A[BxK] * W[KxN]. Accumulation order over `k` is fixed (ascending,
/// row-major) for bit-reproducibility.
pub(crate) fn matmul_nn<T: Real>(a: &Tensor<T>, w: &Tensor<T>) -> Result<Tensor<T>> {
    check_2d(a, "matmul lhs")?;
    check_2d(w, "matmul rhs")?;
    let (b, k) = (a.shape[0], a.shape[1]);
    let (k2, n) = (w.shape[0], w.shape[1]);
    if k != k2 {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            lhs: a.shape.clone(),
            rhs: w.shape.clone(),
        });
    }
    let mut out = vec![T::zero(); b * n];
    for i in 0..b {
        let a_row = &a.data[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (kk, &a_ik) in a_row.iter().enumerate() {
            let w_row = &w.data[kk * n..(kk + 1) * n];
            for (o, &wv) in out_row.iter_mut().zip(w_row) {
                *o += a_ik * wv;
            }
        }
    }
    Ok(Tensor {
        shape: vec![b, n],
        data: out,
    })
}

/// C[BxK] = A[BxN] * W[KxN]^T.
pub(crate) fn matmul_nt<T: Real>(a: &Tensor<T>, w: &Tensor<T>) -> Result<Tensor<T>> {
    check_2d(a, "matmul_nt lhs")?;
    check_2d(w, "matmul_nt rhs")?;
    let (b, n) = (a.shape[0], a.shape[1]);
    let (k, n2) = (w.shape[0], w.shape[1]);
    if n != n2 {
        return Err(Error::ShapeMismatch {
            op: "matmul_nt",
            lhs: a.shape.clone(),
            rhs: w.shape.clone(),
        });
    }
    let mut out = vec![T::zero(); b * k];
    for i in 0..b {
        let a_row = &a.data[i * n..(i + 1) * n];
        let out_row = &mut out[i * k..(i + 1) * k];
        for (kk, o) in out_row.iter_mut().enumerate() {
            let w_row = &w.data[kk * n..(kk + 1) * n];
            let mut acc = T::zero();
            for (&av, &wv) in a_row.iter().zip(w_row) {
                acc += av * wv;
            }
            *o = acc;
        }
    }
    Ok(Tensor {
        shape: vec![b, k],
        data: out,
    })
}

/// C[KxN] = A[BxK]^T * D[BxN].
pub(crate) fn matmul_tn<T: Real>(a: &Tensor<T>, d: &Tensor<T>) -> Result<Tensor<T>> {
    check_2d(a, "matmul_tn lhs")?;
    check_2d(d, "matmul_tn rhs")?;
    let (b, k) = (a.shape[0], a.shape[1]);
    let (b2, n) = (d.shape[0], d.shape[1]);
    if b != b2 {
        return Err(Error::ShapeMismatch {
            op: "matmul_tn",
            lhs: a.shape.clone(),
            rhs: d.shape.clone(),
        });
    }
    let mut out = vec![T::zero(); k * n];
    for i in 0..b {
        let a_row = &a.data[i * k..(i + 1) * k];
        let d_row = &d.data[i * n..(i + 1) * n];
        for (kk, &a_ik) in a_row.iter().enumerate() {
            let out_row = &mut out[kk * n..(kk + 1) * n];
            for (o, &dv) in out_row.iter_mut().zip(d_row) {
                *o += a_ik * dv;
            }
        }
    }
    Ok(Tensor {
        shape: vec![k, n],
        data: out,
    })
}

/// Column sums of a 2-D tensor (rows accumulated in ascending order).
pub(crate) fn col_sum<T: Real>(a: &Tensor<T>) -> Tensor<T> {
    let (b, n) = (a.shape[0], a.shape[1]);
    let mut out = vec![T::zero(); n];
    for i in 0..b {
        for (o, &v) in out.iter_mut().zip(a.row(i)) {
            *o += v;
        }
    }
    Tensor {
        shape: vec![n],
        data: out,
    }
}

fn check_2d<T: Real>(t: &Tensor<T>, what: &'static str) -> Result<()> {
    if t.shape.len() == 2 {
        Ok(())
    } else {
        Err(Error::contract(format!(
            "{what} must be 2-D, got shape {:?}",
            t.shape
        )))
    }
}

//! Dense row-major tensors.

use crate::error::{Error, Result};
use crate::parallel;
use crate::real::{Precision, Real};

/// Dense n-dimensional array stored in row-major order.
///
/// Every public constructor and operation checks that the element count
/// matches the shape and that all elements are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.contains(&0) {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "dimensions must be positive".into(),
        });
    }
    Ok(shape.iter().product())
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n = check_shape(&shape)?;
        if n != data.len() {
            return Err(Error::InvalidShape {
                shape,
                reason: format!("expected {n} elements, got {}", data.len()),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("Tensor::new"));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let n = check_shape(&shape)?;
        Ok(Tensor {
            shape,
            data: vec![T::zero(); n],
        })
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> T) -> Result<Self> {
        let n = check_shape(&shape)?;
        Self::new(shape, (0..n).map(&mut f).collect())
    }

    pub fn scalar(v: T) -> Result<Self> {
        Self::new(vec![1], vec![v])
    }

    /// Builds a 2-D tensor from nested rows.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged rows"));
        }
        Self::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_fn(vec![n, n], |i| if i / n == i % n { T::one() } else { T::zero() })
    }

    // Used internally where finiteness is established by construction.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn precision(&self) -> Precision {
        T::PRECISION
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Mutable access to the elements. The shape cannot change through this.
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Elements per index of the leading dimension.
    pub fn row_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let n = check_shape(&shape)?;
        if n != self.data.len() {
            return Err(Error::Shape {
                op: "reshape",
                left: self.shape,
                right: shape,
            });
        }
        self.shape = shape;
        Ok(self)
    }

    /// Slice of the `i`-th entry along the leading dimension.
    pub fn row(&self, i: usize) -> &[T] {
        let w = self.row_len();
        &self.data[i * w..(i + 1) * w]
    }

    /// Copies the rows listed in `idx` into a new tensor.
    pub fn gather_rows(&self, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(Error::invalid("gather_rows needs at least one row"));
        }
        let w = self.row_len();
        let mut data = Vec::with_capacity(idx.len() * w);
        for &i in idx {
            if i >= self.shape[0] {
                return Err(Error::invalid(format!("row {i} out of range")));
            }
            data.extend_from_slice(self.row(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = idx.len();
        Ok(Tensor::from_parts(shape, data))
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(self.shape.clone(), self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Sum over the leading dimension.
    pub fn sum_leading(&self) -> Result<Self> {
        let w = self.row_len();
        let mut out = vec![T::zero(); w];
        for r in self.data.chunks(w) {
            for (o, &x) in out.iter_mut().zip(r) {
                *o += x;
            }
        }
        Tensor::new(self.shape[1..].to_vec().max_len1(), out)
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        if self.shape != other.shape {
            return Err(Error::Shape {
                op: "max_abs_diff",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max))
    }

    pub fn ensure_finite(&self, op: &'static str) -> Result<()> {
        if self.data.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(op))
        }
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| U::from_f64(x.as_f64())).collect(),
        }
    }
}

trait MaxLen1 {
    fn max_len1(self) -> Self;
}

impl MaxLen1 for Vec<usize> {
    // A scalar reduction keeps a shape of [1].
    fn max_len1(self) -> Self {
        if self.is_empty() {
            vec![1]
        } else {
            self
        }
    }
}

/// `C = A · B` for 2-D tensors. Rows of `C` are computed independently and
/// each entry sums over the inner dimension in index order, so a row's value
/// does not depend on how many other rows are in the batch.
pub fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0] {
        return Err(Error::Shape {
            op: "matmul",
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut out = vec![T::zero(); m * n];
    matmul_into(&a.data, &b.data, &mut out, m, k, n);
    let c = Tensor::from_parts(vec![m, n], out);
    c.ensure_finite("matmul")?;
    Ok(c)
}

/// Raw row-major kernel: `out[m×n] = a[m×k] · b[k×n]`.
pub(crate) fn matmul_into<T: Real>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(out.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    parallel::for_each_row(out, n, |i, row| {
        let ar = &a[i * k..(i + 1) * k];
        for (j, o) in row.iter_mut().enumerate() {
            let mut acc = T::zero();
            for (l, &x) in ar.iter().enumerate() {
                acc += x * b[l * n + j];
            }
            *o = acc;
        }
    });
}

/// `out[k×n] = aᵀ · b` where `a` is `m×k` and `b` is `m×n`.
pub(crate) fn matmul_at_b<T: Real>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    parallel::for_each_row(out, n, |r, row| {
        for (j, o) in row.iter_mut().enumerate() {
            let mut acc = T::zero();
            for i in 0..m {
                acc += a[i * k + r] * b[i * n + j];
            }
            *o = acc;
        }
    });
}

/// `out[m×k] = a · bᵀ` where `a` is `m×n` and `b` is `k×n`.
pub(crate) fn matmul_a_bt<T: Real>(a: &[T], b: &[T], out: &mut [T], m: usize, n: usize, k: usize) {
    parallel::for_each_row(out, k, |i, row| {
        let ar = &a[i * n..(i + 1) * n];
        for (r, o) in row.iter_mut().enumerate() {
            let br = &b[r * n..(r + 1) * n];
            let mut acc = T::zero();
            for (&x, &y) in ar.iter().zip(br) {
                acc += x * y;
            }
            *o = acc;
        }
    });
    let _ = m;
}

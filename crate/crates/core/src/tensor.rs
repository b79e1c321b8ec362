//! Dense row-major tensors.

use crate::error::{Error, Result};

/// Dense N-dimensional array of `f64` in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Tensor of the given shape with every element set to `fill`.
    pub fn new(shape: &[usize], fill: f64) -> Result<Self> {
        let len = checked_len(shape)?;
        Ok(Tensor {
            shape: shape.to_vec(),
            data: vec![fill; len],
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::new(shape, 0.0)
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len = checked_len(shape)?;
        if len != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} needs {} elements, got {}",
                shape,
                len,
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Zero tensor with the same shape as `self`.
    pub fn zeros_like(&self) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: vec![0.0; self.data.len()],
        }
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Row-major strides, last axis contiguous.
    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    pub fn flat_index(&self, coords: &[usize]) -> Result<usize> {
        flat_index(&self.shape, coords)
    }

    pub fn get(&self, coords: &[usize]) -> Result<f64> {
        Ok(self.data[self.flat_index(coords)?])
    }

    pub fn set(&mut self, coords: &[usize], value: f64) -> Result<()> {
        let i = self.flat_index(coords)?;
        self.data[i] = value;
        Ok(())
    }

    /// Same data under a new shape with equal element count.
    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    /// Applies `f` to every element. Fails if any result is not finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(self.data.len());
        for (i, &x) in self.data.iter().enumerate() {
            let y = f(x);
            if !y.is_finite() {
                return Err(Error::Numeric(format!(
                    "elementwise map produced {y} at flat index {i} (input {x})"
                )));
            }
            data.push(y);
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        match self.data.iter().position(|x| !x.is_finite()) {
            Some(i) => Err(Error::Numeric(format!(
                "{what}: element {i} is {}",
                self.data[i]
            ))),
            None => Ok(()),
        }
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Geometry(format!(
                "cannot add {:?} into {:?}",
                other.shape, self.shape
            )));
        }
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::Geometry(format!(
                "cannot compare {:?} with {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub(crate) fn expect_rank(&self, rank: usize, what: &str) -> Result<()> {
        if self.rank() != rank {
            return Err(Error::Geometry(format!(
                "{what} expects a rank-{rank} tensor, got shape {:?}",
                self.shape
            )));
        }
        Ok(())
    }
}

fn checked_len(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::Shape("empty extent list".into()));
    }
    if let Some(pos) = shape.iter().position(|&e| e == 0) {
        return Err(Error::Shape(format!(
            "extent {pos} of {shape:?} is zero; every extent must be >= 1"
        )));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| Error::Shape(format!("shape {shape:?} overflows")))
}

pub fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

pub fn flat_index(shape: &[usize], coords: &[usize]) -> Result<usize> {
    if coords.len() != shape.len() {
        return Err(Error::Geometry(format!(
            "{} coordinates for rank-{} tensor",
            coords.len(),
            shape.len()
        )));
    }
    let mut idx = 0;
    for (axis, (&c, &e)) in coords.iter().zip(shape).enumerate() {
        if c >= e {
            return Err(Error::Geometry(format!(
                "coordinate {c} out of range {e} on axis {axis}"
            )));
        }
        idx = idx * e + c;
    }
    Ok(idx)
}

/// Inverse of [`flat_index`].
pub fn coords_of(shape: &[usize], mut flat: usize) -> Vec<usize> {
    let mut coords = vec![0; shape.len()];
    for (c, &e) in coords.iter_mut().zip(shape).rev() {
        *c = flat % e;
        flat /= e;
    }
    coords
}

/// Strided view of a matrix inside a flat slice.
#[derive(Debug, Clone, Copy)]
pub(crate) struct MatRef<'a, T = f64> {
    pub data: &'a [T],
    pub offset: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a, T> MatRef<'a, T> {
    pub fn new(data: &'a [T], offset: usize, row_stride: usize, col_stride: usize) -> Self {
        MatRef {
            data,
            offset,
            row_stride,
            col_stride,
        }
    }

    fn last(&self, rows: usize, cols: usize) -> usize {
        self.offset + (rows - 1) * self.row_stride + (cols - 1) * self.col_stride
    }
}

/// Strided mutable matrix inside a flat slice.
pub(crate) struct MatMut<'a, T = f64> {
    pub data: &'a mut [T],
    pub offset: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a, T> MatMut<'a, T> {
    pub fn new(data: &'a mut [T], offset: usize, row_stride: usize, col_stride: usize) -> Self {
        MatMut {
            data,
            offset,
            row_stride,
            col_stride,
        }
    }
}

/// Element types with a packed GEMM kernel.
pub(crate) trait GemmScalar: Copy {
    /// # Safety
    /// Every strided address must lie inside the allocation behind its pointer.
    #[allow(clippy::too_many_arguments)]
    unsafe fn kernel(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl GemmScalar for f64 {
    unsafe fn kernel(
        m: usize,
        k: usize,
        n: usize,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, 1.0, c, rsc, csc);
    }
}

impl GemmScalar for f32 {
    unsafe fn kernel(
        m: usize,
        k: usize,
        n: usize,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, 1.0, c, rsc, csc);
    }
}

/// `c += a · b` where `a` is `m × k` and `b` is `k × n`.
pub(crate) fn gemm_acc<T: GemmScalar>(
    m: usize,
    k: usize,
    n: usize,
    a: MatRef<'_, T>,
    b: MatRef<'_, T>,
    c: MatMut<'_, T>,
) {
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    assert!(a.last(m, k) < a.data.len(), "gemm: lhs out of bounds");
    assert!(b.last(k, n) < b.data.len(), "gemm: rhs out of bounds");
    assert!(
        c.offset + (m - 1) * c.row_stride + (n - 1) * c.col_stride < c.data.len(),
        "gemm: output out of bounds"
    );
    // distinct output addresses, or the kernel would race with itself
    assert!(c.row_stride != c.col_stride || m == 1 || n == 1);
    // SAFETY: every address touched by the kernel lies within the slices,
    // as checked above; `c` is exclusively borrowed and cannot alias a or b.
    unsafe {
        T::kernel(
            m,
            k,
            n,
            a.data.as_ptr().add(a.offset),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr().add(b.offset),
            b.row_stride as isize,
            b.col_stride as isize,
            c.data.as_mut_ptr().add(c.offset),
            c.row_stride as isize,
            c.col_stride as isize,
        );
    }
}

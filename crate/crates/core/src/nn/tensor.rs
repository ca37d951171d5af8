use std::fmt;

use super::NnError;

/// Shape of a 4-D tensor: batch, channels, height, width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of values in a single batch item.
    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn plane_len(&self) -> usize {
        self.h * self.w
    }

    pub fn as_array(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn with_batch(self, n: usize) -> Self {
        Self { n, ..self }
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

/// Dense NCHW array of `f32`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    dims: Dims,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.len()],
        }
    }

    pub fn filled(dims: Dims, value: f32) -> Self {
        Self {
            dims,
            data: vec![value; dims.len()],
        }
    }

    pub fn from_vec(dims: Dims, data: Vec<f32>) -> Result<Self, NnError> {
        if data.len() != dims.len() {
            return Err(NnError::DataLength {
                dims,
                len: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(dims.len());
        for n in 0..dims.n {
            for c in 0..dims.c {
                for y in 0..dims.h {
                    for x in 0..dims.w {
                        data.push(f(n, c, y, x));
                    }
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn batch(&self) -> usize {
        self.dims.n
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.dims.c + c) * self.dims.h + y) * self.dims.w + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: f32) {
        let i = self.index(n, c, y, x);
        self.data[i] = v;
    }

    pub fn sample(&self, n: usize) -> &[f32] {
        let len = self.dims.sample_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [f32] {
        let len = self.dims.sample_len();
        &mut self.data[n * len..(n + 1) * len]
    }

    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let len = self.dims.plane_len();
        let start = (n * self.dims.c + c) * len;
        &self.data[start..start + len]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f32] {
        let len = self.dims.plane_len();
        let start = (n * self.dims.c + c) * len;
        &mut self.data[start..start + len]
    }

    /// Copy of batch item `n` as a batch of one.
    pub fn item(&self, n: usize) -> Tensor {
        Tensor {
            dims: self.dims.with_batch(1),
            data: self.sample(n).to_vec(),
        }
    }

    /// Concatenates tensors along the batch axis.
    pub fn stack<'a, I>(items: I) -> Result<Tensor, NnError>
    where
        I: IntoIterator<Item = &'a Tensor>,
    {
        let mut iter = items.into_iter();
        let first = iter.next().ok_or(NnError::EmptyBatch)?;
        let mut dims = first.dims;
        let mut data = first.data.clone();
        for t in iter {
            if t.dims.with_batch(0) != dims.with_batch(0) {
                return Err(NnError::StackMismatch {
                    expected: dims,
                    found: t.dims,
                });
            }
            data.extend_from_slice(&t.data);
            dims.n += t.dims.n;
        }
        Ok(Tensor { dims, data })
    }

    /// New batch made of the items at `indices`, in order.
    pub fn gather(&self, indices: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(indices.len() * self.dims.sample_len());
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        Tensor {
            dims: self.dims.with_batch(indices.len()),
            data,
        }
    }

    /// Splits a batch into single-item tensors.
    pub fn unstack(&self) -> Vec<Tensor> {
        (0..self.dims.n).map(|n| self.item(n)).collect()
    }

    pub fn reshape(self, dims: Dims) -> Result<Tensor, NnError> {
        if dims.len() != self.data.len() {
            return Err(NnError::DataLength {
                dims,
                len: self.data.len(),
            });
        }
        Ok(Tensor { dims, data: self.data })
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn map_inplace(&mut self, f: impl Fn(f32) -> f32) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }

    pub fn clamp(&self, lo: f32, hi: f32) -> Tensor {
        self.map(|v| v.clamp(lo, hi))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|&v| (v as f64) * (v as f64)).sum()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f32) {
        for v in &mut self.data {
            *v *= k;
        }
    }

    /// Mean absolute elementwise difference.
    pub fn mean_abs_diff(&self, other: &Tensor) -> f64 {
        debug_assert_eq!(self.dims, other.dims);
        if self.data.is_empty() {
            return 0.0;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a as f64 - b as f64).abs())
            .sum::<f64>()
            / self.data.len() as f64
    }

    /// Crops a `h`×`w` window starting at (`y0`, `x0`) from every batch item.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Tensor, NnError> {
        if y0 + h > self.dims.h || x0 + w > self.dims.w {
            return Err(NnError::CropOutOfBounds {
                dims: self.dims,
                y0,
                x0,
                h,
                w,
            });
        }
        let dims = Dims::new(self.dims.n, self.dims.c, h, w);
        let mut out = Vec::with_capacity(dims.len());
        for n in 0..self.dims.n {
            for c in 0..self.dims.c {
                for y in y0..y0 + h {
                    let start = self.index(n, c, y, x0);
                    out.extend_from_slice(&self.data[start..start + w]);
                }
            }
        }
        Ok(Tensor { dims, data: out })
    }
}

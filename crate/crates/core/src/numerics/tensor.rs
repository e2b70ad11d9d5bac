use crate::error::{Error, Result};

/// Dense row-major tensor of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if shape.is_empty() || n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("tensor values must be finite".into()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Same data, new extents.
    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Self { shape, data: self.data })
    }

    pub fn map(mut self, f: impl Fn(f64) -> f64) -> Self {
        self.data.iter_mut().for_each(|v| *v = f(*v));
        self
    }

    pub fn relu(self) -> Self {
        self.map(|v| v.max(0.0))
    }
}

/// Sequence of `n` feature vectors of width `dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSeq {
    n: usize,
    dim: usize,
    data: Vec<f64>,
}

impl TokenSeq {
    pub fn new(n: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() != n * dim {
            return Err(Error::Shape(format!(
                "token sequence {n}x{dim} needs {} values, got {}",
                n * dim,
                data.len()
            )));
        }
        Ok(Self { n, dim, data })
    }

    pub fn zeros(n: usize, dim: usize) -> Self {
        Self {
            n,
            dim,
            data: vec![0.0; n * dim],
        }
    }

    pub fn n_tokens(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn token(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn token_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Tokens `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> TokenSeq {
        assert!(start <= end && end <= self.n);
        TokenSeq {
            n: end - start,
            dim: self.dim,
            data: self.data[start * self.dim..end * self.dim].to_vec(),
        }
    }

    /// Stacks `self` then `other` along the token axis.
    pub fn concat(&self, other: &TokenSeq) -> Result<TokenSeq> {
        if self.dim != other.dim {
            return Err(Error::Shape(format!(
                "cannot concat token widths {} and {}",
                self.dim, other.dim
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(TokenSeq {
            n: self.n + other.n,
            dim: self.dim,
            data,
        })
    }

    /// Element-wise sum of two sequences of equal geometry.
    pub fn add(&self, other: &TokenSeq) -> Result<TokenSeq> {
        if self.n != other.n || self.dim != other.dim {
            return Err(Error::Shape(format!(
                "cannot add {}x{} and {}x{} tokens",
                self.n, self.dim, other.n, other.dim
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(TokenSeq {
            n: self.n,
            dim: self.dim,
            data,
        })
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

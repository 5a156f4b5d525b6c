//! Row-major storage for a set of points in `R^d`.

use crate::error::{Error, Result};

/// `n` points of dimension `d`, stored row-major so each point is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    data: Vec<f64>,
    dim: usize,
}

impl PointSet {
    pub fn new(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("point dimension must be at least 1"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "buffer of length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite coordinate in point {}",
                pos / dim
            )));
        }
        Ok(Self { data, dim })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| Error::invalid("empty point list"))?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            Error::check_dim(dim, r.as_ref().len())?;
            data.extend_from_slice(r.as_ref());
        }
        Self::new(data, dim)
    }

    /// An empty set of the given dimension, to be filled with [`push`](Self::push).
    pub fn with_dim(dim: usize) -> Self {
        Self {
            data: Vec::new(),
            dim,
        }
    }

    pub fn push(&mut self, point: &[f64]) -> Result<()> {
        Error::check_dim(self.dim, point.len())?;
        self.data.extend_from_slice(point);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// New set containing the listed rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            data,
            dim: self.dim,
        }
    }

    /// Same points shifted by `offset`.
    pub fn translated(&self, offset: &[f64]) -> Result<Self> {
        Error::check_dim(self.dim, offset.len())?;
        let data = self
            .data
            .chunks_exact(self.dim)
            .flat_map(|r| r.iter().zip(offset).map(|(a, b)| a + b))
            .collect();
        Ok(Self {
            data,
            dim: self.dim,
        })
    }
}

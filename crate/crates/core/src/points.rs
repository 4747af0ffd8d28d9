use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result};

/// A row-major set of points, one point per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Points {
    data: Vec<f64>,
    dim: usize,
}

impl Points {
    pub fn new(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("point dimension must be positive"));
        }
        if data.len() % dim != 0 {
            return Err(invalid(format!("buffer of length {} is not a multiple of dimension {dim}", data.len())));
        }
        Ok(Self { data, dim })
    }

    pub fn zeros(n: usize, dim: usize) -> Self {
        Self { data: vec![0.0; n * dim], dim }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim =
            rows.first().map(|r| r.as_ref().len()).ok_or_else(|| invalid("cannot build a point set from zero rows"))?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            check_dim(dim, r.as_ref().len())?;
            data.extend_from_slice(r.as_ref());
        }
        Self::new(data, dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        check_dim(self.dim, row.len())?;
        self.data.extend_from_slice(row);
        Ok(())
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self { data, dim: self.dim }
    }

    /// Stacks `other` below `self`.
    pub fn concat(&self, other: &Points) -> Result<Self> {
        check_dim(self.dim, other.dim)?;
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self { data, dim: self.dim })
    }

    pub fn map_rows(&self, mut f: impl FnMut(&[f64], &mut [f64])) -> Self {
        let mut out = Self::zeros(self.len(), self.dim);
        for (src, dst) in self.rows().zip(out.data.chunks_exact_mut(self.dim)) {
            f(src, dst);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.len().max(1) as f64;
        let mut m = vec![0.0; self.dim];
        for r in self.rows() {
            for (a, b) in m.iter_mut().zip(r) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|a| *a /= n);
        m
    }

    /// Per-feature standard deviation with the `n - 1` denominator.
    pub fn std(&self) -> Vec<f64> {
        let m = self.mean();
        let denom = (self.len().max(2) - 1) as f64;
        let mut v = vec![0.0; self.dim];
        for r in self.rows() {
            for ((a, x), mu) in v.iter_mut().zip(r).zip(&m) {
                *a += (x - mu) * (x - mu);
            }
        }
        v.into_iter().map(|s| (s / denom).sqrt()).collect()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.data)
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        let (n, d) = m.shape();
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            for j in 0..d {
                data.push(m[(i, j)]);
            }
        }
        Self { data, dim: d.max(1) }
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Per-feature affine standardisation learned on training data.
///
/// Features whose standard deviation falls below `1e-12` are only centred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

pub const STD_FLOOR: f64 = 1e-12;

impl Standardizer {
    pub fn fit(points: &Points) -> Self {
        let mean = points.mean();
        let scale = points.std().into_iter().map(|s| if s < STD_FLOOR { 1.0 } else { s }).collect();
        Self { mean, scale }
    }

    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform_row(&self, src: &[f64], dst: &mut [f64]) {
        for j in 0..src.len() {
            dst[j] = (src[j] - self.mean[j]) / self.scale[j];
        }
    }

    pub fn transform(&self, points: &Points) -> Result<Points> {
        check_dim(self.dim(), points.dim())?;
        Ok(points.map_rows(|s, d| self.transform_row(s, d)))
    }

    pub fn inverse_row(&self, src: &[f64], dst: &mut [f64]) {
        for j in 0..src.len() {
            dst[j] = src[j] * self.scale[j] + self.mean[j];
        }
    }
}

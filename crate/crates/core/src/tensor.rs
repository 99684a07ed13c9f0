//! Dense rank-generic tensors over a spatial dimension of 1 or 2.
//!
//! Components are stored row-major: the last index varies fastest.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    dim: usize,
    rank: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(dim: usize, rank: usize) -> Self {
        Self {
            dim,
            rank,
            data: vec![0.0; dim.pow(rank as u32)],
        }
    }

    pub fn scalar(value: f64, dim: usize) -> Self {
        Self {
            dim,
            rank: 0,
            data: vec![value],
        }
    }

    /// Builds a tensor from flat row-major data; `None` if the length is wrong.
    pub fn from_vec(dim: usize, rank: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == dim.pow(rank as u32)).then_some(Self { dim, rank, data })
    }

    pub fn identity(dim: usize) -> Self {
        let mut t = Self::zeros(dim, 2);
        for i in 0..dim {
            t.data[i * dim + i] = 1.0;
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank);
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    #[inline]
    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: &[usize], v: f64) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    #[inline]
    pub fn add(&mut self, idx: &[usize], v: f64) {
        let o = self.offset(idx);
        self.data[o] += v;
    }

    #[inline]
    pub fn v(&self, i: usize) -> f64 {
        self.data[i]
    }

    #[inline]
    pub fn m(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn t3(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.dim + j) * self.dim + k]
    }

    #[inline]
    pub fn t4(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.data[((i * self.dim + j) * self.dim + k) * self.dim + l]
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: f64) -> Tensor {
        Tensor {
            dim: self.dim,
            rank: self.rank,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    /// All multi-indices in storage order.
    pub fn indices(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        multi_indices(self.dim, self.rank)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Iterates over `{0..dim}^rank` in row-major order.
pub fn multi_indices(dim: usize, rank: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = dim.pow(rank as u32);
    (0..total).map(move |mut flat| {
        let mut idx = vec![0; rank];
        for slot in idx.iter_mut().rev() {
            *slot = flat % dim;
            flat /= dim;
        }
        idx
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_are_row_major() {
        let mut t = Tensor::zeros(2, 3);
        t.set(&[1, 0, 1], 5.0);
        assert_eq!(t.data()[5], 5.0);
        assert_eq!(t.t3(1, 0, 1), 5.0);
        let all: Vec<_> = multi_indices(2, 2).collect();
        assert_eq!(all, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::from_vec(2, 2, vec![0.0; 3]).is_none());
        assert!(Tensor::from_vec(1, 4, vec![0.0]).is_some());
    }
}

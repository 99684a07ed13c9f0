//! Small dense helpers and a banded LU factorisation with partial pivoting.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub(crate) fn to_matrix(t: &Tensor) -> DMatrix<f64> {
    let d = t.dim();
    DMatrix::from_row_slice(d, d, t.data())
}

pub(crate) fn from_matrix(m: &DMatrix<f64>) -> Tensor {
    let d = m.nrows();
    let mut t = Tensor::zeros(d, 2);
    for i in 0..d {
        for j in 0..d {
            t.set(&[i, j], m[(i, j)]);
        }
    }
    t
}

/// Determinant and inverse of a rank-2 tensor; fails unless `det > 0`.
pub fn det_inverse(f: &Tensor) -> Result<(f64, Tensor)> {
    let m = to_matrix(f);
    let det = m.determinant();
    if !(det > 0.0) || !det.is_finite() {
        return Err(Error::SingularDeformation(det));
    }
    let inv = m
        .try_inverse()
        .ok_or(Error::SingularDeformation(det))?;
    Ok((det, from_matrix(&inv)))
}

pub fn is_symmetric(t: &Tensor, rel_tol: f64) -> bool {
    let d = t.dim();
    let scale = t.norm().max(1.0);
    (0..d).all(|i| (0..d).all(|j| (t.m(i, j) - t.m(j, i)).abs() <= rel_tol * scale))
}

/// Eigenvalues of the symmetric part, ascending.
pub fn symmetric_eigenvalues(t: &Tensor) -> Vec<f64> {
    let m = to_matrix(t);
    let sym = (&m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eigenvalue(t: &Tensor) -> f64 {
    symmetric_eigenvalues(t)[0]
}

/// Square matrix stored by diagonals, `kl` sub- and `ku` super-diagonals,
/// with room for the fill produced by row interchanges.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// Row-major storage: row `i` holds columns `i-kl ..= i+kl+ku`.
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            data: vec![0.0; n * width],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn kl(&self) -> usize {
        self.kl
    }

    pub fn ku(&self) -> usize {
        self.ku
    }

    /// Column range `lo..hi` of the declared band in row `i`.
    pub fn row_range(&self, i: usize) -> (usize, usize) {
        (i.saturating_sub(self.kl), (i + self.ku + 1).min(self.n))
    }

    fn width(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let lo = i.saturating_sub(self.kl);
        if j < lo || j > i + self.kl + self.ku || j >= self.n {
            return None;
        }
        Some(i * self.width() + (j + self.kl - i))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Adds `v` to entry `(i, j)`; panics if it falls outside the declared band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            j + self.kl >= i && j <= i + self.ku,
            "entry ({i},{j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let s = self.slot(i, j).expect("in band");
        self.data[s] += v;
    }

    /// Replaces row `i` with the unit row `e_i`.
    pub fn set_identity_row(&mut self, i: usize) {
        let w = self.width();
        for s in &mut self.data[i * w..(i + 1) * w] {
            *s = 0.0;
        }
        let s = self.slot(i, i).unwrap();
        self.data[s] = 1.0;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            let (lo, hi) = self.row_range(i);
            let base = i * self.width() + self.kl - i;
            for j in lo..hi {
                *yi += self.data[base + j] * x[j];
            }
        }
        y
    }

    /// LU factorisation with partial pivoting (row interchanges within the band).
    pub fn factorize(mut self) -> Result<BandLu> {
        let n = self.n;
        let kl = self.kl;
        let reach = kl + self.ku;
        let mut piv = vec![0usize; n];
        let scale = self.data.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(f64::MIN_POSITIVE);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for i in k + 1..=last_row {
                let v = self.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= 1e-14 * scale {
                return Err(Error::SolveFailure(format!(
                    "zero pivot in column {k} (|pivot| = {best:e})"
                )));
            }
            piv[k] = p;
            let last_col = (k + reach).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let a = self.slot(k, j).unwrap();
                    let b = self.slot(p, j).unwrap();
                    self.data.swap(a, b);
                }
            }
            let pivot = self.get(k, k);
            for i in k + 1..=last_row {
                let si = self.slot(i, k).unwrap();
                let l = self.data[si] / pivot;
                self.data[si] = l;
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        let skj = self.slot(k, j).unwrap();
                        let sij = self.slot(i, j).unwrap();
                        self.data[sij] -= l * self.data[skj];
                    }
                }
            }
        }
        Ok(BandLu { a: self, piv })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    a: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.a.n;
        let kl = self.a.kl;
        let reach = kl + self.a.ku;
        let mut x = b.to_vec();
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            if xk != 0.0 {
                for i in k + 1..=(k + kl).min(n - 1) {
                    x[i] -= self.a.get(i, k) * xk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in k + 1..=(k + reach).min(n - 1) {
                s -= self.a.get(k, j) * x[j];
            }
            x[k] = s / self.a.get(k, k);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn band_lu_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (n, kl, ku) = (40, 3, 5);
        let mut band = BandMatrix::zeros(n, kl, ku);
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                // weak diagonal so pivoting actually happens
                let v = rng.gen_range(-1.0..1.0) + if i == j { 0.05 } else { 0.0 };
                band.add(i, j, v);
                dense[(i, j)] = v;
            }
        }
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = band.clone().factorize().unwrap().solve(&b);
        let xd = dense.lu().solve(&nalgebra::DVector::from_vec(b.clone())).unwrap();
        for i in 0..n {
            assert!((x[i] - xd[i]).abs() < 1e-9 * xd.amax().max(1.0));
        }
        let r = band.matvec(&x);
        for i in 0..n {
            assert!((r[i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_band_reports_failure() {
        let mut band = BandMatrix::zeros(3, 1, 1);
        band.add(0, 0, 1.0);
        band.add(1, 1, 1.0);
        assert!(matches!(band.factorize(), Err(Error::SolveFailure(_))));
    }

    #[test]
    fn det_inverse_rejects_inversion() {
        let f = Tensor::from_vec(2, 2, vec![1.0, 0.0, 0.0, -2.0]).unwrap();
        assert!(det_inverse(&f).is_err());
        let f = Tensor::from_vec(2, 2, vec![2.0, 1.0, 0.0, 1.0]).unwrap();
        let (det, inv) = det_inverse(&f).unwrap();
        assert!((det - 2.0).abs() < 1e-15);
        assert!((inv.m(0, 1) + 0.5).abs() < 1e-15);
    }
}

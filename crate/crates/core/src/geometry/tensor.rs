//! Small dense tensors indexed by configuration-space directions.

use std::ops::{Index, IndexMut};

use crate::scalar::Real;

/// Rank-2 tensor `t[i][j]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2<T> {
    dim: usize,
    data: Vec<T>,
}

/// Rank-3 tensor `t[i][j][k]`; the last index varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> Tensor2<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![T::zero(); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |i, j| if i == j { T::one() } else { T::zero() })
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Option<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return None;
        }
        Some(Self {
            dim,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn diagonal(values: &[T]) -> Self {
        Self::from_fn(values.len(), |i, j| if i == j { values[i] } else { T::zero() })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let d = self.dim;
        Self::from_fn(d, |i, j| (0..d).fold(T::zero(), |acc, k| acc + self[(i, k)] * other[(k, j)]))
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    /// `max |t_ij - t_ji|`.
    pub fn asymmetry(&self) -> T {
        let d = self.dim;
        let mut m = T::zero();
        for i in 0..d {
            for j in (i + 1)..d {
                m = m.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        m
    }

    /// LU with partial pivoting; returns `None` for an exactly singular matrix.
    fn lu(&self) -> Option<(Vec<T>, Vec<usize>, T)> {
        let d = self.dim;
        let mut a = self.data.clone();
        let mut perm: Vec<usize> = (0..d).collect();
        let mut sign = T::one();
        for col in 0..d {
            let pivot = (col..d)
                .max_by(|&r, &s| a[r * d + col].abs().partial_cmp(&a[s * d + col].abs()).unwrap())
                .unwrap();
            if a[pivot * d + col] == T::zero() {
                return None;
            }
            if pivot != col {
                for k in 0..d {
                    a.swap(col * d + k, pivot * d + k);
                }
                perm.swap(col, pivot);
                sign = -sign;
            }
            for r in (col + 1)..d {
                let factor = a[r * d + col] / a[col * d + col];
                a[r * d + col] = factor;
                for k in (col + 1)..d {
                    let v = a[col * d + k];
                    a[r * d + k] -= factor * v;
                }
            }
        }
        Some((a, perm, sign))
    }

    pub fn det(&self) -> T {
        match self.lu() {
            None => T::zero(),
            Some((a, _, sign)) => (0..self.dim).fold(sign, |acc, i| acc * a[i * self.dim + i]),
        }
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.dim;
        let (a, perm, _) = self.lu()?;
        let mut inv = Self::zeros(d);
        for col in 0..d {
            // Solve L U x = P e_col.
            let mut x: Vec<T> = (0..d).map(|i| if perm[i] == col { T::one() } else { T::zero() }).collect();
            for i in 0..d {
                for k in 0..i {
                    let v = a[i * d + k] * x[k];
                    x[i] -= v;
                }
            }
            for i in (0..d).rev() {
                for k in (i + 1)..d {
                    let v = a[i * d + k] * x[k];
                    x[i] -= v;
                }
                x[i] /= a[i * d + i];
            }
            for i in 0..d {
                inv[(i, col)] = x[i];
            }
        }
        Some(inv)
    }

    /// Eigenvalues of the symmetric part, ascending (cyclic Jacobi).
    pub fn symmetric_eigenvalues(&self) -> Vec<T> {
        let d = self.dim;
        let half = T::lit(0.5);
        let mut a = Self::from_fn(d, |i, j| half * (self[(i, j)] + self[(j, i)]));
        for _sweep in 0..64 {
            let off = (0..d)
                .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
                .fold(T::zero(), |acc, (i, j)| acc + a[(i, j)] * a[(i, j)]);
            if off <= T::epsilon() * T::epsilon() * a.data.iter().fold(T::min_positive_value(), |m, x| m + *x * *x) {
                break;
            }
            for p in 0..d {
                for q in (p + 1)..d {
                    let apq = a[(p, q)];
                    if apq == T::zero() {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (T::lit(2.0) * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    for k in 0..d {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..d {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<T> = (0..d).map(|i| a[(i, i)]).collect();
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
        ev
    }
}

impl<T> Index<(usize, usize)> for Tensor2<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.dim + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Tensor2<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.dim + j]
    }
}

impl<T: Real> Tensor3<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![T::zero(); dim * dim * dim],
        }
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(dim * dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    data.push(f(i, j, k));
                }
            }
        }
        Self { dim, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    /// `max |t_ijk - t_ikj|`: asymmetry in the last two indices.
    pub fn lower_asymmetry(&self) -> T {
        let d = self.dim;
        let mut m = T::zero();
        for i in 0..d {
            for j in 0..d {
                for k in (j + 1)..d {
                    m = m.max((self[(i, j, k)] - self[(i, k, j)]).abs());
                }
            }
        }
        m
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()))
    }
}

impl<T> Index<(usize, usize, usize)> for Tensor3<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j, k): (usize, usize, usize)) -> &T {
        &self.data[(i * self.dim + j) * self.dim + k]
    }
}

impl<T> IndexMut<(usize, usize, usize)> for Tensor3<T> {
    #[inline]
    fn index_mut(&mut self, (i, j, k): (usize, usize, usize)) -> &mut T {
        &mut self.data[(i * self.dim + j) * self.dim + k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_and_det() {
        let m = Tensor2::<f64>::from_rows(&[vec![4.0, 1.0, 0.0], vec![1.0, 3.0, 1.0], vec![0.0, 1.0, 2.0]]).unwrap();
        let inv = m.inverse().unwrap();
        let id = m.matmul(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((id[(i, j)] - e).abs() < 1e-14);
            }
        }
        assert!((m.det() - 18.0).abs() < 1e-12);
        assert!(Tensor2::<f64>::zeros(2).inverse().is_none());
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        let m = Tensor2::<f64>::from_rows(&[vec![0.0, 2.0], vec![3.0, 0.0]]).unwrap();
        assert!((m.det() + 6.0).abs() < 1e-15);
        let inv = m.inverse().unwrap();
        assert!((inv[(0, 1)] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn jacobi_eigenvalues() {
        let m = Tensor2::<f64>::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let ev = m.symmetric_eigenvalues();
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
        let m32 = Tensor2::<f32>::diagonal(&[5.0, -1.0, 2.0]);
        assert_eq!(m32.symmetric_eigenvalues(), vec![-1.0, 2.0, 5.0]);
    }
}

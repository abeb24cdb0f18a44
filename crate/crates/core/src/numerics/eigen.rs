//! Dense Hermitian eigensolver with a deterministic phase convention.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::C64;

/// Relative asymmetry `max|A - A†| / max|A|` accepted as Hermitian.
pub const HERMITIAN_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    pub vector: DVector<C64>,
}

/// `max|A - A†| / max|A|`.
pub fn relative_asymmetry(a: &DMatrix<C64>) -> f64 {
    let n = a.nrows();
    let mut scale = 0.0_f64;
    let mut diff = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            scale = scale.max(a[(i, j)].norm());
            if j >= i {
                diff = diff.max((a[(i, j)] - a[(j, i)].conj()).norm());
            }
        }
    }
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Rotates `v` so its largest-magnitude entry is real and positive. Among
/// entries tied to within rounding the first one wins.
pub fn fix_phase(v: &mut DVector<C64>) {
    let max = v.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    if max == 0.0 {
        return;
    }
    let pivot = v.iter().position(|z| z.norm() >= max * (1.0 - 1e-10)).unwrap();
    let phase = v[pivot].conj() / v[pivot].norm();
    v.iter_mut().for_each(|z| *z *= phase);
    v[pivot] = C64::new(v[pivot].re, 0.0);
}

/// The `k` lowest eigenpairs of a Hermitian matrix, ascending.
pub fn hermitian_eigensolve(matrix: &DMatrix<C64>, k: usize) -> Result<Vec<EigenPair>> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(Error::shape(format!("matrix is {}x{}", n, matrix.ncols())));
    }
    let asym = relative_asymmetry(matrix);
    if asym > HERMITIAN_TOLERANCE {
        return Err(Error::NonHermitian {
            asymmetry: asym,
            tolerance: HERMITIAN_TOLERANCE,
        });
    }
    let k = k.min(n);
    if k == 0 {
        return Ok(Vec::new());
    }
    let sym = (matrix + matrix.adjoint()) * C64::new(0.5, 0.0);
    let (values, vectors): (Vec<f64>, DMatrix<C64>) = if sym.iter().all(|z| z.im == 0.0) {
        let real = sym.map(|z| z.re);
        let eig = SymmetricEigen::new(real);
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors.map(|x| C64::new(x, 0.0)))
    } else {
        let eig = SymmetricEigen::new(sym);
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    Ok(order
        .into_iter()
        .take(k)
        .map(|i| {
            let mut v: DVector<C64> = vectors.column(i).into_owned();
            let norm = v.norm();
            v /= C64::new(norm, 0.0);
            fix_phase(&mut v);
            EigenPair { value: values[i], vector: v }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn diagonal_and_two_level() {
        let d = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let p = hermitian_eigensolve(&d, 2).unwrap();
        assert_eq!(p[0].value, 0.0);
        assert_eq!(p[1].value, 1.0);
        let delta = 0.3;
        let t = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(delta, 0.0), c(delta, 0.0), c(0.0, 0.0)]);
        let p = hermitian_eigensolve(&t, 2).unwrap();
        assert!((p[0].value + delta).abs() < 1e-15 && (p[1].value - delta).abs() < 1e-15);
    }

    #[test]
    fn complex_hermitian_orthonormal_with_phase_convention() {
        let n = 6;
        let a = DMatrix::from_fn(n, n, |i, j| {
            let (i, j) = (i as f64, j as f64);
            if i == j {
                c(i, 0.0)
            } else {
                c((i + j).cos() * 0.3, (i - j) * 0.1)
            }
        });
        let pairs = hermitian_eigensolve(&a, n).unwrap();
        for w in pairs.windows(2) {
            assert!(w[0].value <= w[1].value);
        }
        for (i, p) in pairs.iter().enumerate() {
            let r = &a * &p.vector - &p.vector * c(p.value, 0.0);
            assert!(r.norm() < 1e-12);
            let big = p.vector.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
            let pivot = p.vector.iter().find(|z| z.norm() >= big * (1.0 - 1e-10)).unwrap();
            assert!(pivot.im == 0.0 && pivot.re > 0.0);
            for q in &pairs[i..] {
                let o = p.vector.dotc(&q.vector);
                let e = if std::ptr::eq(p, q) { 1.0 } else { 0.0 };
                assert!((o - c(e, 0.0)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let a = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(hermitian_eigensolve(&a, 1), Err(Error::NonHermitian { .. })));
    }
}

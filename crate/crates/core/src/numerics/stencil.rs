//! Finite-difference weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Accuracy order of first-derivative stencils.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub enum FdOrder {
    Second,
    #[default]
    Fourth,
    Sixth,
}

impl FdOrder {
    #[inline]
    pub fn as_usize(self) -> usize {
        match self {
            FdOrder::Second => 2,
            FdOrder::Fourth => 4,
            FdOrder::Sixth => 6,
        }
    }

    /// Half-width of the central stencil.
    #[inline]
    pub fn half_width(self) -> usize {
        self.as_usize() / 2
    }

    /// Central first-derivative weights for offsets `-p..=p` at unit spacing.
    pub fn central_weights(self) -> &'static [f64] {
        match self {
            FdOrder::Second => &[-0.5, 0.0, 0.5],
            FdOrder::Fourth => &[1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0],
            FdOrder::Sixth => &[
                -1.0 / 60.0,
                3.0 / 20.0,
                -3.0 / 4.0,
                0.0,
                3.0 / 4.0,
                -3.0 / 20.0,
                1.0 / 60.0,
            ],
        }
    }
}

impl TryFrom<usize> for FdOrder {
    type Error = Error;

    fn try_from(v: usize) -> Result<Self> {
        match v {
            2 => Ok(FdOrder::Second),
            4 => Ok(FdOrder::Fourth),
            6 => Ok(FdOrder::Sixth),
            _ => Err(Error::InvalidArgument(format!(
                "finite-difference order must be 2, 4 or 6, got {v}"
            ))),
        }
    }
}

impl From<FdOrder> for usize {
    fn from(o: FdOrder) -> usize {
        o.as_usize()
    }
}

/// Fornberg's recursion: `w[k][j]` is the weight of sample `xs[j]` in the
/// `k`-th derivative at `x0`, for `k = 0..=max_deriv`.
pub fn fornberg_weights<T: Real>(x0: T, xs: &[T], max_deriv: usize) -> Vec<Vec<T>> {
    let n = xs.len();
    let mut w = vec![vec![T::zero(); n]; max_deriv + 1];
    if n == 0 {
        return w;
    }
    w[0][0] = T::one();
    let mut c1 = T::one();
    let mut c4 = xs[0] - x0;
    for i in 1..n {
        let mn = i.min(max_deriv);
        let mut c2 = T::one();
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    let kk = T::lit(k as f64);
                    w[k][i] = c1 * (kk * w[k - 1][i - 1] - c5 * w[k][i - 1]) / c2;
                }
                w[0][i] = -c1 * c5 * w[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                let kk = T::lit(k as f64);
                w[k][j] = (c4 * w[k][j] - kk * w[k - 1][j]) / c3;
            }
            w[0][j] = c4 * w[0][j] / c3;
        }
        c1 = c2;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fornberg_reproduces_central_tables() {
        for order in [FdOrder::Second, FdOrder::Fourth, FdOrder::Sixth] {
            let p = order.half_width() as i64;
            let xs: Vec<f64> = (-p..=p).map(|k| k as f64).collect();
            let w = fornberg_weights(0.0, &xs, 1);
            for (a, b) in w[1].iter().zip(order.central_weights()) {
                assert!((a - b).abs() < 1e-14, "{order:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn one_sided_weights_are_exact_on_polynomials() {
        let xs: Vec<f64> = (0..5).map(|k| k as f64).collect();
        let w = fornberg_weights(0.0, &xs, 2);
        // d/dx x^4 at 0 is 0, d/dx x at 0 is 1
        let d1: f64 = w[1].iter().zip(&xs).map(|(c, x)| c * x).sum();
        let d4: f64 = w[1].iter().zip(&xs).map(|(c, x)| c * x.powi(4)).sum();
        let dd2: f64 = w[2].iter().zip(&xs).map(|(c, x)| c * x * x).sum();
        assert!((d1 - 1.0).abs() < 1e-12);
        assert!(d4.abs() < 1e-10);
        assert!((dd2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn order_parses_and_serializes() {
        assert_eq!(FdOrder::try_from(6).unwrap(), FdOrder::Sixth);
        assert!(FdOrder::try_from(3).is_err());
        assert_eq!(serde_json::to_string(&FdOrder::Fourth).unwrap(), "4");
        assert!(serde_json::from_str::<FdOrder>("5").is_err());
    }
}

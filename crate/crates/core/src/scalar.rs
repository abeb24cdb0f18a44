//! Scalar abstraction shared by the geometry and discretization layers.

use std::fmt::{Debug, Display, LowerExp};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Real floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + NumAssign + Debug + Display + LowerExp + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Double precision complex number used by the wavefunction layers.
pub type C64 = Complex<f64>;

/// Unit-modulus phase of `z`, or `None` when `|z|` is below `floor`.
#[inline]
pub fn unit_phase<T: Real>(z: Complex<T>, floor: T) -> Option<Complex<T>> {
    let r = z.norm();
    if r <= floor {
        None
    } else {
        Some(z / r)
    }
}

/// Hermitian inner product `Σ conj(a_i) b_i`.
#[inline]
pub fn braket<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (x, y)| acc + x.conj() * y)
}

#[inline]
pub fn norm_sqr<T: Real>(a: &[Complex<T>]) -> T {
    a.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn braket_is_conjugate_linear_in_first_slot() {
        let a = [C64::new(0.0, 1.0), C64::new(2.0, 0.0)];
        let b = [C64::new(1.0, 0.0), C64::new(0.0, 1.0)];
        let z = braket(&a, &b);
        assert_eq!(z, C64::new(0.0, -1.0) + C64::new(0.0, 2.0));
        assert_eq!(norm_sqr(&a), 5.0);
    }

    #[test]
    fn unit_phase_rejects_tiny() {
        assert!(unit_phase(C64::new(1e-20, 0.0), 1e-15).is_none());
        let p = unit_phase(C64::new(3.0, 4.0), 1e-15).unwrap();
        assert!((p.norm() - 1.0).abs() < 1e-15);
        let p32 = unit_phase(Complex::<f32>::new(0.0, 2.0), 1e-6).unwrap();
        assert_eq!(p32, Complex::new(0.0, 1.0));
    }
}

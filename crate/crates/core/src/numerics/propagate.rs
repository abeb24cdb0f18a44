//! Cayley (Crank–Nicolson) time stepping:
//! `(1 + iH dt/2) ψ(t+dt) = (1 − iH dt/2) ψ(t)`.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};
use crate::scalar::C64;

/// Propagator for a fixed `H` and `dt`; the LU factors are reused.
#[derive(Debug, Clone)]
pub struct CayleyPropagator {
    lu: LU<C64, Dyn, Dyn>,
    explicit: DMatrix<C64>,
    dt: f64,
}

impl CayleyPropagator {
    pub fn new(h: &DMatrix<C64>, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        if !h.is_square() {
            return Err(Error::shape(format!("operator is {}x{}", h.nrows(), h.ncols())));
        }
        let n = h.nrows();
        let half = C64::new(0.0, 0.5 * dt);
        let id = DMatrix::<C64>::identity(n, n);
        let implicit = &id + h * half;
        let explicit = &id - h * half;
        let lu = implicit.lu();
        if !lu.is_invertible() {
            return Err(Error::LinearSolve("1 + iH dt/2 is singular".into()));
        }
        Ok(Self { lu, explicit, dt })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, psi: &DVector<C64>) -> Result<DVector<C64>> {
        if psi.len() != self.explicit.nrows() {
            return Err(Error::shape(format!("state of length {} for operator of size {}", psi.len(), self.explicit.nrows())));
        }
        let rhs = &self.explicit * psi;
        self.lu
            .solve(&rhs)
            .ok_or_else(|| Error::LinearSolve("Cayley solve failed".into()))
    }
}

/// One Cayley step of length `dt`.
pub fn unitary_step(h: &DMatrix<C64>, psi: &DVector<C64>, dt: f64) -> Result<DVector<C64>> {
    CayleyPropagator::new(h, dt)?.step(psi)
}

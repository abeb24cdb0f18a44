//! Propagation sanity checks and the time component of the gauge potential.

use serde::{Deserialize, Serialize};

use crate::ef_geometry::compute_geometry;
use crate::error::{Error, Result};
use crate::factorization::{compute_scalar_potential, factorize, GaugeConvention};
use crate::residuals::{evaluate_residuals, ResidualMode, ResidualNorms};
use crate::solver::{propagate, Discretization, FullHamiltonian, FullState};
use crate::Field;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsReport {
    pub dt: f64,
    pub steps: usize,
    /// `max_s |N_{s+1} − N_s|` with `N = ∫|Ψ|²`.
    pub norm_drift_per_step: f64,
    /// `max_s |⟨H⟩_s − ⟨H⟩_0| / |⟨H⟩_0|`.
    pub energy_drift: f64,
    pub initial_energy: f64,
    /// Ground energy `E`; a stationary state has `A₀ = −E` with `χ` real.
    pub ground_energy: f64,
    /// `max |A₀ + E|` over unmasked nodes at `dt` and `dt/2`.
    pub a0_error: f64,
    pub a0_error_half: f64,
    /// `log₂(a0_error / a0_error_half)`.
    pub a0_order: f64,
    /// `max |A₀ + (2/dt) atan(E dt/2)|`, the phase one Cayley step applies.
    pub a0_cayley_error: f64,
    /// Residuals of the time-dependent equations at the second snapshot.
    pub residuals: ResidualNorms,
    /// `(t, N, ⟨H⟩)` at every step.
    #[serde(skip)]
    pub series: Vec<[f64; 3]>,
}

fn a0_deviation(h: &FullHamiltonian, disc: &Discretization, ground: &FullState, dt: f64) -> Result<(f64, f64)> {
    let e = ground.energy.ok_or_else(|| Error::MissingInput("ground state has no energy".into()))?;
    let traj = propagate(h, ground, dt, 2, 1)?;
    let facts = traj
        .states
        .iter()
        .map(|s| factorize(s, disc, &GaugeConvention::ChiRealPositive))
        .collect::<Result<Vec<_>>>()?;
    let a0 = compute_scalar_potential(&facts[0].phi, &facts[1].phi, &facts[2].phi, dt)?;
    let cayley = -(2.0 / dt) * (0.5 * e * dt).atan();
    let (mut err, mut cay) = (0.0_f64, 0.0_f64);
    for n in (0..a0.nodes()).filter(|&n| !facts[1].mask[n]) {
        err = err.max((a0.get(n, 0) + e).abs());
        cay = cay.max((a0.get(n, 0) - cayley).abs());
    }
    Ok((err, cay))
}

/// Propagates `(Ψ₀ + Ψ₁)/√2` (or `Ψ₀` alone) for `steps` Cayley steps and
/// measures norm and energy conservation, then checks `A₀` on the
/// stationary ground state.
pub fn dynamics_check(
    disc: &Discretization,
    h: &FullHamiltonian,
    states: &[FullState],
    dt: f64,
    steps: usize,
) -> Result<DynamicsReport> {
    let ground = states.first().ok_or_else(|| Error::MissingInput("no eigenstates to propagate".into()))?;
    if steps < 2 {
        return Err(Error::InvalidArgument(format!("{steps} steps; at least 2 are needed")));
    }
    let psi0 = match states.get(1) {
        Some(ex) => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            let data = ground.psi.data().iter().zip(ex.psi.data()).map(|(a, b)| (a + b) * s).collect();
            FullState {
                psi: Field::new(ground.psi.comps(), data)?,
                energy: None,
            }
            .normalized(disc)?
        }
        None => ground.clone(),
    };
    let traj = propagate(h, &psi0, dt, steps, 1)?;
    let norms = traj.states.iter().map(|s| s.norm_sqr(disc)).collect::<Result<Vec<_>>>()?;
    let energies = traj.states.iter().map(|s| h.expectation(&s.psi)).collect::<Result<Vec<_>>>()?;
    let norm_drift_per_step = norms.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    let e0 = energies[0];
    let energy_drift = energies.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0.abs().max(f64::MIN_POSITIVE);

    let f = traj.states[..3]
        .iter()
        .map(|s| factorize(&s.clone().normalized(disc)?, disc, &GaugeConvention::ChiRealPositive))
        .collect::<Result<Vec<_>>>()?;
    let geo = compute_geometry(disc, &f[1], h.bo_samples())?;
    let mode = ResidualMode::Dynamic {
        prev: &f[0],
        next: &f[2],
        dt,
    };
    let residuals = evaluate_residuals(disc, &f[1], &geo, h.bo_samples(), &mode)?.norms;

    let (a0_error, a0_cayley_error) = a0_deviation(h, disc, ground, dt)?;
    let (a0_error_half, _) = a0_deviation(h, disc, ground, 0.5 * dt)?;
    Ok(DynamicsReport {
        dt,
        steps,
        norm_drift_per_step,
        energy_drift,
        initial_energy: e0,
        ground_energy: ground.energy.unwrap_or(f64::NAN),
        a0_error,
        a0_error_half,
        a0_order: (a0_error / a0_error_half).log2(),
        a0_cayley_error,
        residuals,
        series: traj.times.iter().zip(norms.iter().zip(&energies)).map(|(&t, (&n, &e))| [t, n, e]).collect(),
    })
}

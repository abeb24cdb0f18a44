use std::f64::consts::{PI, TAU};

use proptest::prelude::*;

use efgeo::factorization::{factorize, gauge_transform, wrap_phase, GaugeConvention};
use efgeo::models::builtin;
use efgeo::numerics::FdOrder;
use efgeo::solver::{Discretization, FullState};
use efgeo::{Field, C64};

const NODES: usize = 41;

fn disc() -> Discretization {
    builtin("avoided-crossing").unwrap().instantiate().unwrap().with_points(NODES).unwrap().discretize(FdOrder::Fourth).unwrap()
}

fn state(d: &Discretization, values: &[(f64, f64)]) -> FullState {
    let data = values.iter().map(|&(r, t)| C64::from_polar(r, t)).collect();
    FullState {
        psi: Field::new(2, data).unwrap(),
        energy: None,
    }
    .normalized(d)
    .unwrap()
}

fn amplitudes() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.05..1.0, 0.0..TAU), 2 * NODES)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn factorization_reconstructs_and_normalizes(values in amplitudes()) {
        let d = disc();
        let s = state(&d, &values);
        let f = factorize(&s, &d, &GaugeConvention::ChiRealPositive).unwrap();
        prop_assert!(f.reconstruction_error(&s.psi).unwrap() <= 1e-12);
        prop_assert!(f.phi_norm_deviation() <= 1e-12);
        for n in (0..NODES).filter(|&n| !f.mask[n]) {
            let chi = f.chi.get(n, 0);
            prop_assert!(chi.im.abs() <= 1e-14 && chi.re > 0.0);
        }
    }

    #[test]
    fn gauge_transform_keeps_product(values in amplitudes(), lambda in prop::collection::vec(-10.0..10.0, NODES)) {
        let d = disc();
        let s = state(&d, &values);
        let f = factorize(&s, &d, &GaugeConvention::ChiRealPositive).unwrap();
        let t = gauge_transform(&f, &lambda).unwrap();
        prop_assert!(t.reconstruction_error(&s.psi).unwrap() <= 1e-12);
        prop_assert!(t.phi_norm_deviation() <= 1e-12);
        // Refactorizing the product undoes the transform.
        let back = factorize(&FullState { psi: t.product(), energy: None }, &d, &GaugeConvention::ChiRealPositive).unwrap();
        for n in (0..NODES).filter(|&n| !f.mask[n]) {
            prop_assert!((back.chi.get(n, 0) - f.chi.get(n, 0)).norm() <= 1e-12);
        }
    }

    #[test]
    fn wrapped_phase_is_principal(x in -1e3..1e3_f64) {
        let w = wrap_phase(x);
        prop_assert!(w > -PI - 1e-12 && w <= PI + 1e-12);
        let turns = (x - w) / TAU;
        prop_assert!((turns - turns.round()).abs() <= 1e-9);
    }
}

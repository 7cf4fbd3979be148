use std::sync::Arc;

use lmreg_core::gallery::{LinearMap, QuadraticPerturbation};
use lmreg_core::recon::CompactBox;
use lmreg_core::step::GramSystem;
use lmreg_core::{add_noise, build_lattice, ForwardModel};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn quadratic(entries: &[f64], eta: f64) -> ForwardModel {
    let a = DMatrix::from_row_slice(3, 3, entries);
    ForwardModel::new(Arc::new(QuadraticPerturbation::new(a, eta)), DVector::zeros(3), 8.0).unwrap()
}

fn vec3() -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-1.0..1.0f64, 3).prop_map(DVector::from_vec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn morozov_function_increases_in_alpha(
        entries in prop::collection::vec(-2.0..2.0f64, 9),
        x in vec3(),
        r in vec3(),
        a in -6.0..6.0f64,
        b in -6.0..6.0f64,
    ) {
        prop_assume!(r.norm() > 1e-3);
        let m = quadratic(&entries, 0.1);
        let g = GramSystem::assemble(&m, &x).unwrap();
        let (lo, hi) = (2f64.powf(a.min(b)), 2f64.powf(a.max(b)));
        let (phi_lo, phi_hi) = (g.morozov(lo, &r).unwrap(), g.morozov(hi, &r).unwrap());
        prop_assert!(phi_lo <= phi_hi * (1.0 + 1e-12), "φ({lo}) = {phi_lo} > φ({hi}) = {phi_hi}");
        prop_assert!(phi_hi <= r.norm() * (1.0 + 1e-12));
    }

    #[test]
    fn quadratic_adjoint_is_exact(entries in prop::collection::vec(-2.0..2.0f64, 9), eta in -0.5..0.5f64, seed in any::<u64>()) {
        let m = quadratic(&entries, eta);
        prop_assert!(m.adjoint_test(8, seed).passes(1e-10));
    }

    #[test]
    fn shifted_solves_commute(entries in prop::collection::vec(-2.0..2.0f64, 6), alpha in 1e-3..1e3f64, w in prop::collection::vec(-1.0..1.0f64, 2)) {
        // J*(JJ* + αI)⁻¹ w = (J*J + αI)⁻¹ J* w
        let j = DMatrix::from_row_slice(2, 3, &entries);
        let m = ForwardModel::new(Arc::new(LinearMap::new(j.clone())), DVector::zeros(3), 1.0).unwrap();
        let w = DVector::from_vec(w);
        let x = DVector::zeros(3);
        let lhs = j.tr_mul(&GramSystem::assemble(&m, &x).unwrap().solve(alpha, &w).unwrap());
        let rhs = (j.tr_mul(&j) + DMatrix::identity(3, 3) * alpha).lu().solve(&j.tr_mul(&w)).unwrap();
        prop_assert!((&lhs - &rhs).norm() <= 1e-9 * (1.0 + rhs.norm()));
    }

    #[test]
    fn noise_has_exact_level(y in prop::collection::vec(-5.0..5.0f64, 1..8), delta in 1e-8..1.0f64, seed in any::<u64>()) {
        let y = DVector::from_vec(y);
        let yd = add_noise(&y, delta, seed);
        prop_assert!(((&yd - &y).norm() - delta).abs() <= 1e-12 * delta.max(y.norm()));
    }

    #[test]
    fn lattice_index_round_trips(w0 in 0.1..3.0f64, w1 in 0.1..3.0f64, r in 0.05..0.5f64, pick in any::<u64>()) {
        let bx = CompactBox::from_slices(&[0.0, -1.0], &[w0, w1 - 1.0]).unwrap();
        let l = build_lattice(&bx, r).unwrap();
        let idx = (pick as u128) % l.len();
        let multi = l.multi_index(idx);
        prop_assert_eq!(l.flat_index(&multi), idx);
        prop_assert!(bx.contains(&l.point(idx)));
        prop_assert!(l.covering_radius() <= r * (1.0 + 1e-12));
    }
}

use kpin_core::metrics::{achievable_rate, from_db, mean_rate, nmse, nse, to_db, zf_precoder, EvalReport};
use kpin_core::numerics::ComplexMatrix;
use kpin_core::rng::{complex_gaussian_matrix, complex_gaussian_vector, seeded};
use kpin_core::{ComplexVector, C64};
use proptest::prelude::*;

#[test]
fn nse_spot_values() {
    let h = ComplexVector::from_real(&[1.0, -2.0, 0.5]);
    assert_eq!(nse(&h, &h).unwrap(), 0.0);
    assert_eq!(nse(&h, &ComplexVector::zeros(3)).unwrap(), 1.0);
    let e = nse(&ComplexVector::from_real(&[1.0, 0.0]), &ComplexVector::from_real(&[0.0, 1.0])).unwrap();
    assert_eq!(e, 2.0);
    assert!((to_db(e) - 3.0103).abs() < 1e-4);
    assert!(nse(&ComplexVector::zeros(2), &h.head(2)).is_err());
}

#[test]
fn nmse_spot_values() {
    assert_eq!(nmse(&[0.01]).unwrap(), 0.01);
    assert!((to_db(0.01) + 20.0).abs() < 1e-12);
    assert!((nmse(&[0.01, 0.03]).unwrap() - 0.02).abs() < 1e-15);
    assert_eq!(nmse(&[0.3; 7]).unwrap(), 0.3);
    assert!(nmse(&[]).is_err());
}

#[test]
fn rate_spot_values() {
    let one = ComplexMatrix::identity(1);
    assert!((achievable_rate(&one, 1.0, 0.1, 1).unwrap() - 101f64.log2()).abs() < 1e-12);
    assert!((101f64.log2() - 6.6582).abs() < 1e-4);
    assert_eq!(achievable_rate(&one, 0.0, 0.1, 1).unwrap(), 0.0);
    let two = ComplexMatrix::identity(2);
    assert!((achievable_rate(&two, 2.0, 1.0, 2).unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn zf_spot_values() {
    assert!(zf_precoder(&ComplexMatrix::identity(3)).unwrap().max_abs_diff(&ComplexMatrix::identity(3)) < 1e-15);
    let p = zf_precoder(&ComplexMatrix::identity(2).scale_real(2.0)).unwrap();
    assert!(p.max_abs_diff(&ComplexMatrix::identity(2).scale_real(0.5)) < 1e-15);
    let h = complex_gaussian_matrix(&mut seeded(5), 4, 2, 1.0);
    assert!((&zf_precoder(&h).unwrap() * &h).max_abs_diff(&ComplexMatrix::identity(2)) < 1e-10);
    assert!(zf_precoder(&ComplexMatrix::zeros(4, 2)).is_err());
}

#[test]
fn report_averages_in_linear_scale() {
    let r = EvalReport::new("x", 1, &[0.01, 0.1], 0.0).unwrap();
    assert!((r.nmse_db - to_db(0.055)).abs() < 1e-12);
    assert!((r.nmse_db_at(1).unwrap() + 20.0).abs() < 1e-12);
    assert_ne!(r.nmse_db, (r.nse_per_step_db[0] + r.nse_per_step_db[1]) / 2.0);
}

proptest! {
    #[test]
    fn nse_is_phase_invariant(seed in any::<u64>(), theta in -3.2f64..3.2, dim in 1usize..8) {
        let mut rng = seeded(seed);
        let h = complex_gaussian_vector(&mut rng, dim, 1.0);
        let g = complex_gaussian_vector(&mut rng, dim, 1.0);
        let r = C64::from_polar(1.0, theta);
        let a = nse(&h, &g).unwrap();
        let b = nse(&h.scale(r), &g.scale(r)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn rate_is_monotone_in_power(seed in any::<u64>(), rho in 0.0f64..50.0, extra in 0.01f64..50.0) {
        let h = complex_gaussian_matrix(&mut seeded(seed), 4, 2, 1.0);
        let lo = achievable_rate(&h, rho, 1.0, 2).unwrap();
        let hi = achievable_rate(&h, rho + extra, 1.0, 2).unwrap();
        prop_assert!(hi > lo);
        // zero forcing collapses the determinant
        prop_assert!((hi - 2.0 * (1.0 + (rho + extra) / 2.0).log2()).abs() < 1e-8);
    }

    #[test]
    fn db_round_trip(x in 1e-12f64..1e12) {
        prop_assert!((from_db(to_db(x)) - x).abs() <= 1e-12 * x);
    }

    #[test]
    fn mean_rate_of_identical_slots(seed in any::<u64>(), slots in 1usize..6) {
        let h = complex_gaussian_vector(&mut seeded(seed), 4, 1.0);
        let one = mean_rate(std::slice::from_ref(&h), 2, 2, 3.0, 1.0).unwrap();
        let many = mean_rate(&vec![h; slots], 2, 2, 3.0, 1.0).unwrap();
        prop_assert!((one - many).abs() < 1e-12);
    }
}

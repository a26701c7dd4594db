use proptest::prelude::*;

use fasarray::design::{enforce_spacing, min_spacing};
use fasarray::fisher::{crb, fim_exact};
use fasarray::geometry::{coarray_dof, contiguous_dof_of_integers, difference_coarray, dual_dof_bound, ArrayGeometry, DifferenceCoarray};
use fasarray::linalg::hermitian_eigen;
use fasarray::signal::{model_covariance, sinc2_snr_loss_db, SourceScenario};

const D0: f64 = 0.5;

fn integer_layout() -> impl Strategy<Value = Vec<i64>> {
    prop::collection::btree_set(0i64..=40, 2..=8).prop_map(|s| s.into_iter().collect())
}

fn grid_geometry(units: &[i64]) -> ArrayGeometry {
    ArrayGeometry::from_grid(units, D0, 40).unwrap()
}

fn dof(g: &ArrayGeometry) -> usize {
    coarray_dof(&difference_coarray(g, DifferenceCoarray::default_tol_grid(g.d0())))
}

fn scenario() -> impl Strategy<Value = SourceScenario> {
    (-70.0f64..-5.0, 5.0f64..70.0, 0.5f64..5.0, 0.1f64..2.0, 10usize..1000)
        .prop_map(|(a, b, p, s, np)| SourceScenario::new(vec![a.to_radians(), b.to_radians()], vec![p, 1.0], s, np).unwrap())
}

fn spread_positions() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..20.0, 3..=8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dof_respects_dual_bound(units in integer_layout()) {
        let g = grid_geometry(&units);
        let d = dof(&g);
        prop_assert!(d % 2 == 1);
        prop_assert!(d <= dual_dof_bound(units.len(), 40.0 * D0, D0).unwrap());
        prop_assert_eq!(d, contiguous_dof_of_integers(&units));
    }

    #[test]
    fn dof_ignores_mirroring(units in integer_layout()) {
        let top = *units.last().unwrap();
        let mirrored: Vec<i64> = units.iter().map(|u| top - u).collect();
        prop_assert_eq!(dof(&grid_geometry(&units)), dof(&grid_geometry(&mirrored)));
    }

    #[test]
    fn fim_is_symmetric_and_nonnegative(p in spread_positions(), s in scenario()) {
        let g = ArrayGeometry::new(p, 1.0, 20.0).unwrap();
        let f = fim_exact(&g, &s).unwrap().matrix;
        prop_assert!((&f - f.transpose()).abs().max() <= 1e-12 * f.abs().max().max(1.0));
        let eig = f.symmetric_eigenvalues();
        prop_assert!(eig.iter().all(|&v| v >= -1e-9 * f.abs().max().max(1.0)));
    }

    #[test]
    fn fim_scales_with_snapshots_over_noise(p in spread_positions(), s in scenario()) {
        let g = ArrayGeometry::new(p, 1.0, 20.0).unwrap();
        let f = fim_exact(&g, &s).unwrap().matrix;
        let doubled = SourceScenario::new(s.doas().to_vec(), s.powers().to_vec(), s.noise_power(), 2 * s.snapshots()).unwrap();
        let f2 = fim_exact(&g, &doubled).unwrap().matrix;
        prop_assert!((&f2 - &f * 2.0).abs().max() <= 1e-10 * f2.abs().max().max(1e-300));
    }

    #[test]
    fn fim_ignores_translation(p in spread_positions(), s in scenario(), shift in 0.0f64..20.0) {
        let g = ArrayGeometry::new(p.clone(), 1.0, 20.0).unwrap();
        let moved = ArrayGeometry::new(p.iter().map(|x| x + shift).collect(), 1.0, 40.0).unwrap();
        let a = fim_exact(&g, &s).unwrap().matrix;
        let b = fim_exact(&moved, &s).unwrap().matrix;
        prop_assert!((&a - &b).abs().max() <= 1e-8 * a.abs().max().max(1e-300));
    }

    #[test]
    fn crb_positive_when_identifiable(s in scenario()) {
        let g = ArrayGeometry::from_grid(&[0, 1, 4, 9, 15, 22], D0, 40).unwrap();
        let f = fim_exact(&g, &s).unwrap();
        let v = crb(&f).unwrap();
        prop_assert!(v.iter().all(|&x| x > 0.0 && x.is_finite()));
    }

    #[test]
    fn model_covariance_is_hermitian_psd(p in spread_positions(), s in scenario()) {
        let g = ArrayGeometry::new(p, 1.0, 20.0).unwrap();
        let r = model_covariance(&g, &s);
        prop_assert!((&r - r.adjoint()).norm() <= 1e-12 * r.norm());
        let (vals, _) = hermitian_eigen(&r);
        // every eigenvalue sits at or above the noise floor
        prop_assert!(vals.iter().all(|&v| v >= s.noise_power() * (1.0 - 1e-9)));
    }

    #[test]
    fn spacing_enforcement_is_feasible(mut p in prop::collection::vec(0.0f64..20.0, 2..=10)) {
        let d_min = 0.4 * D0;
        enforce_spacing(&mut p, d_min, 20.0).unwrap();
        prop_assert!(min_spacing(&p) >= d_min * (1.0 - 1e-9));
        prop_assert!(p.iter().all(|&x| (-1e-12..=20.0 + 1e-12).contains(&x)));
    }

    #[test]
    fn position_error_loss_grows_with_error(a in 0.0f64..0.4, b in 0.0f64..0.4, theta in -1.5f64..1.5) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let l_lo = sinc2_snr_loss_db(lo, theta, 1.0);
        let l_hi = sinc2_snr_loss_db(hi, theta, 1.0);
        prop_assert!(l_lo >= 0.0 && l_hi >= l_lo - 1e-12);
    }
}

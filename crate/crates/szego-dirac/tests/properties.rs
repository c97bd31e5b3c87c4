use num_complex::Complex64 as C64;
use proptest::prelude::*;
use szego_dirac::entropy::{entropy_tolerance, rescaling_check};
use szego_dirac::opuc::{christoffel_lambda0, reversal, szego_recursion, SchurParameters};
use szego_dirac::potential::{spectral_dirac, KreinCoefficient};

fn steps(values: Vec<(f64, f64)>, cell: f64) -> KreinCoefficient {
    let knots = (0..=values.len()).map(|k| k as f64 * cell).collect();
    KreinCoefficient::Steps { knots, values: values.into_iter().map(|(m, th)| C64::from_polar(m, th)).collect() }
}

#[test]
fn rescaling_regression_for_exponential_coefficient() {
    let a = KreinCoefficient::Exp { amp: C64::new(1.0, 0.0), rate: 1.0, cut: f64::INFINITY };
    let rep = rescaling_check(&spectral_dirac(&a), 1.0, 1.0, entropy_tolerance()).unwrap();
    assert!((rep.lhs - 0.003444868939995503).abs() < 1e-10 * rep.lhs.max(1e-3), "{rep:?}");
    assert!((rep.rhs - 0.004754366945161832).abs() < 1e-10 * rep.rhs.max(1e-3), "{rep:?}");
    assert!((rep.ratio.unwrap() - 0.7245694284285507).abs() < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn rescaling_ratio_is_bounded(
        values in prop::collection::vec((0.0..1.0f64, 0.0..std::f64::consts::TAU), 1..5),
        cell in 0.25..1.0f64,
        r in 0.0..1.0f64,
        l in 0.25..1.5f64,
    ) {
        let q = spectral_dirac(&steps(values, cell));
        let rep = rescaling_check(&q, r, l, entropy_tolerance()).unwrap();
        prop_assert!(rep.lhs >= -1e-12 && rep.rhs >= -1e-12);
        if let Some(ratio) = rep.ratio {
            prop_assert!(ratio <= 100.0, "{rep:?}");
        }
    }

    #[test]
    fn szego_recursion_keeps_reversal_and_unit_circle_bounds(
        alpha in prop::collection::vec((0.0..0.95f64, 0.0..std::f64::consts::TAU), 1..12),
        theta in 0.0..std::f64::consts::TAU,
    ) {
        let a: Vec<C64> = alpha.iter().map(|&(m, th)| C64::from_polar(m, th)).collect();
        let s = SchurParameters::new(a).unwrap();
        let polys = szego_recursion(&s);
        let n = polys.degree;
        let rev = reversal(&polys.phi);
        prop_assert!(rev.iter().zip(&polys.phi_star).all(|(a, b)| (a - b).norm() < 1e-12));
        prop_assert_eq!(polys.phi[n], C64::new(1.0, 0.0));
        let z = C64::from_polar(1.0, theta);
        // |Phi_n| = |Phi_n^*| on the unit circle.
        prop_assert!((polys.phi_at(z).norm() - polys.phi_star_at(z).norm()).abs() < 1e-10);
        let lam = christoffel_lambda0(&s);
        prop_assert!(lam > 0.0 && lam <= 1.0);
        // Phi_n^* has no zeros in the closed disc, and each step shrinks it by at most `1 - |alpha_k|` on the circle.
        let floor: f64 = alpha.iter().map(|&(m, _)| 1.0 - m).product();
        prop_assert!(polys.phi_star_at(z).norm() >= floor * (1.0 - 1e-9));
    }
}

use blowup_core::params::{compute_constants, Nonlinearity, Parameters};
use blowup_core::spectral::{apply_l, poly_eval, Basis, Family, WeightedSpace};
use proptest::prelude::*;

fn coeffs(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn l_eta_is_self_adjoint(f in coeffs(9), g in coeffs(9), eta in 0.3f64..3.0, dim in 1usize..4) {
        let (f, g) = if dim > 1 {
            // radial polynomials are even
            let even = |c: Vec<f64>| c.iter().enumerate().map(|(k, v)| if k % 2 == 0 { *v } else { 0.0 }).collect::<Vec<_>>();
            (even(f), even(g))
        } else {
            (f, g)
        };
        let space = WeightedSpace::new(eta, dim, 96);
        let lf = apply_l(eta, dim, &f);
        let lg = apply_l(eta, dim, &g);
        let a = space.inner(|y| poly_eval(&lf, y), |y| poly_eval(&g, y));
        let b = space.inner(|y| poly_eval(&f, y), |y| poly_eval(&lg, y));
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0));
    }

    #[test]
    fn projection_reconstructs_polynomials(f in coeffs(7), g in coeffs(7), mu in 0.5f64..2.0, exp in any::<bool>()) {
        let case = if exp { Nonlinearity::Exponential } else { Nonlinearity::Power };
        let params = Parameters::new(case, 2.0, 3.0, mu, 1).unwrap();
        let c = compute_constants(&params).unwrap();
        let basis = Basis::new(&params, &c, 6).unwrap();
        let field = |y: f64| (poly_eval(&f, y), poly_eval(&g, y));
        let coeffs = basis.project(field, f64::INFINITY).unwrap();
        let rest = |y: f64| {
            let (a, b) = field(y);
            let (pa, pb) = basis.reconstruct(&coeffs, y);
            (a - pa, b - pb)
        };
        let norm = basis.inner(rest, rest).sqrt();
        prop_assert!(norm < 1e-8, "remainder {norm}");

        let exact = basis.expand_polynomial(&f, &g).unwrap();
        for n in 0..=6 {
            prop_assert!((exact.theta[n] - coeffs.theta[n]).abs() < 1e-8);
            prop_assert!((exact.theta_tilde[n] - coeffs.theta_tilde[n]).abs() < 1e-8);
        }
    }
}

#[test]
fn spectrum_is_complete_for_m6() {
    for case in [Nonlinearity::Power, Nonlinearity::Exponential] {
        for dim in [1, 2] {
            let params = Parameters::new(case, 2.0, 2.0, 1.0, dim).unwrap();
            let c = compute_constants(&params).unwrap();
            let basis = Basis::new(&params, &c, 6).unwrap();
            let m_minus = if case == Nonlinearity::Power { -3.0 } else { -1.0 };
            let mut want: Vec<f64> =
                (0..=6).filter(|n| dim == 1 || n % 2 == 0).flat_map(|n| [1.0 - n as f64 / 2.0, m_minus - n as f64 / 2.0]).collect();
            let mut got: Vec<f64> = basis.pairs.iter().map(|p| p.eigenvalue).collect();
            want.sort_by(f64::total_cmp);
            got.sort_by(f64::total_cmp);
            assert_eq!(want.len(), got.len());
            for (a, b) in want.iter().zip(&got) {
                assert!((a - b).abs() < 1e-9);
            }
            assert!(basis.find(Family::Plus, 2).is_some());
        }
    }
}

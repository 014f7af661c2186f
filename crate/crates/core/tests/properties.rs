use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

use ecapprox::covariance::{CovarianceModel, Family};
use ecapprox::critical_variance::{sigma_critical_interval, var_fx_boundary, var_fx_interior};
use ecapprox::ec_heuristic::{
    ec_approximation, ec_density, finite_kl_bound, hermite, ParameterSpace, Shape,
};
use ecapprox::field_sim::{excursion_ec_1d, sup_on_grid};

fn family() -> impl Strategy<Value = CovarianceModel> {
    prop_oneof![
        (0.2f64..3.0).prop_map(|l| CovarianceModel::squared_exponential(l).unwrap()),
        (
            prop::collection::vec(0.05f64..1.0, 1..4),
            prop::collection::vec(0.2f64..4.0, 3)
        )
            .prop_map(|(w, f)| {
                let total: f64 = w.iter().sum();
                let w: Vec<f64> = w.iter().map(|x| x / total).collect();
                let f = f[..w.len()].to_vec();
                CovarianceModel::cosine_mixture(w, f).unwrap()
            }),
        (0.05f64..0.95).prop_map(|r| CovarianceModel::latitude_circle(r).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gram_matrices_are_positive_semidefinite(
        model in family(),
        points in prop::collection::vec(0.0f64..10.0, 64),
    ) {
        let n = points.len();
        let gram = DMatrix::from_fn(n, n, |i, j| model.evaluate((points[i] - points[j]).abs()));
        let min = SymmetricEigen::new(gram).eigenvalues.min();
        prop_assert!(min >= -1e-8, "min eigenvalue {min}");
    }

    #[test]
    fn covariance_is_even_and_bounded(model in family(), t in 0.0f64..20.0) {
        prop_assert!((model.evaluate(t) - model.evaluate(-t)).abs() < 1e-15);
        prop_assert!(model.evaluate(t).abs() <= 1.0 + 1e-15);
        prop_assert!((model.evaluate(0.0) - 1.0).abs() < 1e-15);
    }

    /// Steiner formula: the area of the radius-`r` tube around the scaled body is
    /// `L_2 + 2 r L_1 + pi r^2 L_0`.
    #[test]
    fn lk_curvatures_match_steiner_tubes(
        a in 0.1f64..5.0,
        b in 0.1f64..5.0,
        scale in 0.1f64..3.0,
        r in 0.0f64..2.0,
    ) {
        let lk = ParameterSpace::new(Shape::Box { sides: vec![a, b] }, scale).unwrap().lk_curvatures();
        let (sa, sb) = (scale * a, scale * b);
        let tube = (sa + 2.0 * r) * (sb + 2.0 * r) - (4.0 - PI) * r * r;
        let steiner = lk[2] + 2.0 * r * lk[1] + PI * r * r * lk[0];
        prop_assert!((tube - steiner).abs() <= 1e-12 * tube.max(1.0));

        // a disk of radius rho: tube area pi (rho + r)^2
        let rho = a;
        let disk = ParameterSpace::new(
            Shape::ConvexPlanar { area: PI * rho * rho, perimeter: 2.0 * PI * rho },
            scale,
        )
        .unwrap()
        .lk_curvatures();
        let tube = PI * (scale * rho + r).powi(2);
        let steiner = disk[2] + 2.0 * r * disk[1] + PI * r * r * disk[0];
        prop_assert!((tube - steiner).abs() <= 1e-12 * tube.max(1.0));

        // an interval: the tube is the interval grown by r at both ends
        let seg = ParameterSpace::new(Shape::Interval { length: a }, scale).unwrap().lk_curvatures();
        prop_assert!((seg[1] + 2.0 * r * seg[0] - (scale * a + 2.0 * r)).abs() < 1e-12);
    }

    #[test]
    fn hermite_recurrence_and_parity(j in 0usize..12, x in -5.0f64..5.0) {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        prop_assert!((hermite(j, -x) - sign * hermite(j, x)).abs() <= 1e-9 * hermite(j, x).abs().max(1.0));
        if j >= 1 {
            let next = x * hermite(j, x) - j as f64 * hermite(j - 1, x);
            prop_assert!((hermite(j + 1, x) - next).abs() <= 1e-9 * next.abs().max(1.0));
        }
    }

    #[test]
    fn approximation_total_is_sum_of_terms(
        length in 0.1f64..20.0,
        scale in 0.1f64..3.0,
        u in -4.0f64..6.0,
    ) {
        let space = ParameterSpace::new(Shape::Interval { length }, scale).unwrap();
        let approx = ec_approximation(&space, u);
        prop_assert_eq!(approx.terms.len(), 2);
        prop_assert!((approx.terms[0] - ec_density(0, u)).abs() < 1e-15);
        prop_assert!((approx.total - approx.terms.iter().sum::<f64>()).abs() < 1e-15);
    }

    #[test]
    fn chi_square_bound_decreases(n in 1usize..10, theta in 0.0f64..1.5, u in 0.01f64..6.0, du in 0.01f64..1.0) {
        let a = finite_kl_bound(n, theta, u, 1.0).unwrap();
        let b = finite_kl_bound(n, theta, u + du, 1.0).unwrap();
        prop_assert!(b <= a);
        prop_assert!(a <= 1.0);
    }

    /// Jointly rescaling time in the covariance and the interval leaves sigma_c^2, the bound and
    /// the approximation unchanged.
    #[test]
    fn rescaling_time_and_length_together(s in 0.2f64..5.0, u in 0.5f64..4.0) {
        let base = CovarianceModel::squared_exponential(1.0).unwrap();
        let scaled = base.rescale_time(s).unwrap();
        let length = 5.0;
        let approx = |m: &CovarianceModel, len: f64| {
            ec_approximation(&ParameterSpace::for_model(Shape::Interval { length: len }, m).unwrap(), u).total
        };
        prop_assert!((approx(&base, length) - approx(&scaled, s * length)).abs() < 1e-12);
        let sigma = |m: &CovarianceModel, len: f64| {
            let lambda = m.second_spectral_moment().sqrt();
            sigma_critical_interval(&m.normalize_second_moment().unwrap(), len * lambda).unwrap()
        };
        let (r0, r1) = (sigma(&base, length), sigma(&scaled, s * length));
        prop_assert!((r0.sigma_c_sq - r1.sigma_c_sq).abs() < 1e-12);
        prop_assert!((r0.bound().value() - r1.bound().value()).abs() < 1e-12);
    }

    #[test]
    fn boundary_optimand_dominates_interior(t in 0.01f64..10.0) {
        let se = CovarianceModel::squared_exponential(1.0).unwrap();
        let cos = CovarianceModel::new(Family::CosineMixture { weights: vec![0.4, 0.6], frequencies: vec![1.0, 3.0] })
            .unwrap()
            .normalize_second_moment()
            .unwrap();
        for m in [se, cos] {
            if let (Ok(i), Ok(b)) = (var_fx_interior(&m, t), var_fx_boundary(&m, t)) {
                prop_assert!(b >= i - 1e-12);
                prop_assert!(i >= -1e-10);
            }
        }
    }

    #[test]
    fn one_dimensional_ec_dominates_indicator(
        values in prop::collection::vec(-3.0f64..3.0, 1..200),
        u in -3.5f64..3.5,
    ) {
        let ec = excursion_ec_1d(&values, u);
        let above = (sup_on_grid(&values) >= u) as i64;
        prop_assert!(ec - above >= 0);
        prop_assert!(ec >= 0);
        // empty above the maximum
        prop_assert_eq!(excursion_ec_1d(&values, sup_on_grid(&values) + 1e-9), 0);
    }

    #[test]
    fn dyadic_subgrid_sup_is_smaller(values in prop::collection::vec(-5.0f64..5.0, 1..300), level in 1u32..5) {
        let step = 1usize << level;
        let sub: Vec<f64> = values.iter().step_by(step).copied().collect();
        prop_assert!(sup_on_grid(&sub) <= sup_on_grid(&values));
    }
}

#[test]
fn hermite_densities_have_expected_values() {
    // rho_1(0) = 1/(2 pi), rho_2(0) = 0
    assert!((ec_density(1, 0.0) - 1.0 / (2.0 * PI)).abs() < 1e-16);
    assert_eq!(ec_density(2, 0.0), 0.0);
}

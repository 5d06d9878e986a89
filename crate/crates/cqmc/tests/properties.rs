//! Property tests for the numerical invariants that hold on whole input
//! ranges rather than at hand-picked points.

use proptest::prelude::*;

use cqmc::lds::{self, DigitalNet, ScrambleSeed};
use cqmc::normal;
use cqmc::path::{Construction, GeneratingMatrix, MarketParams};
use cqmc::payoff::{insert_coordinate, Example, IntegrandSpec};
use cqmc::smooth;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inv_cdf_round_trips(u in 1e-12f64..1.0) {
        let u = u.min(1.0 - 1e-12);
        let x = normal::inv_cdf(u);
        prop_assert!((normal::cdf(x) - u).abs() <= 1e-12);
    }

    #[test]
    fn inv_cdf_preserves_order(a in 1e-9f64..0.5, b in 1e-9f64..0.49) {
        let u = a.min(1.0 - 1e-9);
        let v = (a + b).min(1.0 - 1e-9);
        if u < v {
            prop_assert!(normal::inv_cdf(u) < normal::inv_cdf(v));
        }
    }

    #[test]
    fn mu_closed_form_equals_quadrature(
        a in -4.0f64..4.0,
        b in -3.0f64..3.0,
        c in -3.0f64..3.0,
        ell in 0.0f64..1.2,
    ) {
        let closed = smooth::mu(a, b, c, ell);
        let numeric = smooth::mu_by_quadrature(a, b, c, ell);
        prop_assert!((closed - numeric).abs() <= 1e-11 * (1.0 + closed.abs()));
    }

    #[test]
    fn scrambled_streams_are_deterministic(master in any::<u64>(), replicate in 0u64..1000) {
        let net = DigitalNet::new(3).unwrap();
        let seed = ScrambleSeed::new(master, replicate);
        let a = lds::scrambled_points(&net, seed, 5).unwrap();
        let b = lds::scrambled_points(&net, seed, 5).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn scrambled_points_stay_inside_the_open_cube(master in any::<u64>()) {
        let net = DigitalNet::new(4).unwrap();
        let pts = lds::scrambled_points(&net, ScrambleSeed::new(master, 0), 6).unwrap();
        for p in &pts {
            for &u in p {
                prop_assert!(u > 0.0 && u < 1.0);
            }
        }
    }

    #[test]
    fn decomposition_reconstructs_g(
        example_idx in 0usize..7,
        j in 0usize..4,
        xj in -2.5f64..2.5,
        y0 in -2.0f64..2.0,
        y1 in -2.0f64..2.0,
        y2 in -2.0f64..2.0,
    ) {
        let example = Example::ALL[example_idx];
        let p = MarketParams::benchmark(4);
        let spec = IntegrandSpec::new(
            example,
            p,
            GeneratingMatrix::build(Construction::BrownianBridge, &p),
        );
        let y = vec![y0, y1, y2];
        let dec = spec.decompose(j, &y);
        let direct = spec.g(&insert_coordinate(xj, &y, j));
        prop_assert!((dec.g_at(xj) - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
        let phi_direct = spec.phi(&insert_coordinate(xj, &y, j));
        prop_assert!((dec.phi_at(xj) - phi_direct).abs() <= 1e-10 * (1.0 + phi_direct.abs()));
    }

    #[test]
    fn conditioning_crossing_solves_phi(
        y0 in -2.0f64..2.0,
        y1 in -2.0f64..2.0,
        y2 in -2.0f64..2.0,
    ) {
        use cqmc::smooth::{Method, PreintegratedIntegrand, PsiOutcome};
        let p = MarketParams::benchmark(4);
        let spec = IntegrandSpec::new(Example::Payoff, p, GeneratingMatrix::standard(&p));
        let pint = PreintegratedIntegrand::new(spec.clone(), 0, Method::Analytic).unwrap();
        let y = vec![y0, y1, y2];
        if let PsiOutcome::Root(r) = pint.psi(&y).unwrap() {
            let phi = spec.phi(&insert_coordinate(r, &y, 0));
            prop_assert!(phi.abs() <= 1e-10 * (p.strike + 1.0));
        }
    }
}

use proptest::prelude::*;

use ganscape::complexity::{quantize_x1, rate_i1};
use ganscape::output::format_float;
use ganscape::params::{HalfPlaneRegion, ModelParams};
use ganscape::rmt::SpectralParams;
use ganscape::spectral::{density_grid, density_grid_with, GridConfig};

fn spectral() -> impl Strategy<Value = SpectralParams> {
    (-1.0f64..1.0, -1.0f64..1.0, 0.1f64..0.9, -3.0f64..3.0).prop_map(|(lb, lb1, kappa, t)| {
        let (b, b1) = (10f64.powf(lb), 10f64.powf(lb1));
        SpectralParams::new(b, b1, kappa, t * (b + b1)).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn density_is_a_probability(sp in spectral()) {
        let g = density_grid(&sp, 64).unwrap();
        prop_assert!((g.mass - 1.0).abs() < 1e-3);
        prop_assert!((g.trapezoid_mass() - 1.0).abs() < 1e-2);
        prop_assert!(g.rho_values.iter().all(|&r| r >= 0.0 && r.is_finite()));
        prop_assert!(g.support.windows(2).all(|w| w[0].1 < w[1].0));
    }

    #[test]
    fn reflection_maps_x1_to_minus_x1(sp in spectral(), t in -2.0f64..2.0) {
        let cfg = GridConfig::default();
        let g = density_grid_with(&sp, &cfg).unwrap();
        let h = density_grid_with(&sp.with_x1(-sp.x1), &cfg).unwrap();
        let x = t * (sp.b + sp.b1);
        let (a, b) = (g.log_potential(x), h.log_potential(-x));
        prop_assert!((a - b).abs() < 1e-6 * (1.0 + a.abs()), "{a} vs {b}");
        let (lo, hi) = g.support[0];
        let z = 0.5 * (lo + hi);
        prop_assert!((g.rho_at(z) - h.rho_at(-z)).abs() < 1e-6 * (1.0 + g.rho_at(z)));
    }
}

proptest! {
    #[test]
    fn rate_is_even_nonnegative_and_monotone(e in 0.01f64..100.0, a in 1.0f64..20.0, da in 0.0f64..5.0) {
        let u = a * e;
        let v = rate_i1(u, e).unwrap().value;
        prop_assert!(v >= 0.0);
        prop_assert_eq!(v, rate_i1(-u, e).unwrap().value);
        prop_assert!(rate_i1(u + da * e, e).unwrap().value >= v);
        prop_assert_eq!(rate_i1(0.999 * e, e).unwrap().value, f64::INFINITY);
    }

    #[test]
    fn floats_survive_formatting(bits in any::<u64>()) {
        let v = f64::from_bits(bits);
        prop_assume!(v.is_finite());
        prop_assert_eq!(format_float(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }

    #[test]
    fn quantization_is_idempotent(x in -1e6f64..1e6) {
        let q = quantize_x1(x);
        prop_assert_eq!(quantize_x1(q), q);
        prop_assert!((q - x).abs() <= 1e-6);
    }

    #[test]
    fn larger_bounds_enlarge_the_region(
        ud in -5.0f64..5.0, ug in -5.0f64..5.0, dd in 0.0f64..3.0, dg in 0.0f64..3.0,
        x in -1e4f64..1e4, x1 in -50.0f64..50.0,
    ) {
        let m = ModelParams::new(3, 3, 1.0, 0.9).unwrap();
        let small = HalfPlaneRegion::new(&m, ud, ug).unwrap();
        let big = HalfPlaneRegion::new(&m, ud + dd, ug + dg).unwrap();
        prop_assert!(!small.contains(x, x1) || big.contains(x, x1));
    }
}

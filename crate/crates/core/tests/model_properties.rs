use proptest::prelude::*;
use roughchain::kernel::KernelSpec;
use roughchain::models::{MarketParams, ModelFamily, ModelParams, ModelSpec, ThetaForm};

fn model(family: ModelFamily) -> ModelSpec {
    ModelSpec::new(family, ModelParams::default()).unwrap()
}

fn family() -> impl Strategy<Value = ModelFamily> {
    prop::sample::select(ModelFamily::ALL.to_vec())
}

fn central_difference(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let h = 1e-5 * x.abs().max(1e-3);
    (f(x + h) - f(x - h)) / (2.0 * h)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1e-12)
}

proptest! {
    #[test]
    fn g_is_increasing_and_invertible(f in family(), s in 0.05f64..40.0, bump in 1e-6f64..1.0) {
        let m = model(f);
        let x = m.transform_g(s).unwrap();
        prop_assert!(m.transform_g(s * (1.0 + bump)).unwrap() > x);
        let back = m.g_inverse(x).unwrap();
        prop_assert!((back - s).abs() <= 1e-12 * s.max(1.0), "{back} vs {s}");
    }

    #[test]
    fn derivatives_match_finite_differences(f in family(), s in 0.5f64..30.0, v in 0.005f64..0.2) {
        let m = model(f);
        let nu = central_difference(|y| m.local_vol(y), s);
        let phi = central_difference(|y| m.vol_factor(y), v);
        let sigma = central_difference(|y| m.variance_vol(y), v);
        prop_assert!(close(m.local_vol_slope(s), nu, 1e-6), "nu' {} vs {nu}", m.local_vol_slope(s));
        prop_assert!(close(m.vol_factor_slope(v), phi, 1e-6), "phi' {} vs {phi}", m.vol_factor_slope(v));
        prop_assert!(close(m.variance_vol_slope(v), sigma, 1e-6), "sigma' {} vs {sigma}", m.variance_vol_slope(v));
    }

    #[test]
    fn heston_theta_closed_form(x in 0.5f64..4.0, v in 0.002f64..0.2, eps in prop::sample::select(vec![1e-2, 1e-4, 1e-8])) {
        let params = ModelParams { rate: 0.03, dividend: 0.01, ..ModelParams::default() };
        let m = ModelSpec::new(ModelFamily::RoughHeston, params).unwrap();
        let market = MarketParams::default();
        let c = KernelSpec::new(0.12, eps).unwrap().constants();
        let rho = market.rho;
        let p = params;
        let expected = p.rate - p.dividend - v / 2.0
            - rho * p.reversion * (p.long_run - v) / p.vol_of_vol
            - rho * (v - market.v0) * c.r_hat / (c.k_eps * p.vol_of_vol);
        let theta = m.drift_theta(x, v, &market, &c, ThetaForm::ItoExpansion).unwrap();
        prop_assert!((theta - expected).abs() <= 1e-10 * expected.abs().max(1.0), "{theta} vs {expected}");
    }

    #[test]
    fn sabr_theta_closed_form(x in 2.0f64..20.0, v in 0.05f64..0.6, eps in prop::sample::select(vec![1e-2, 1e-4, 1e-8])) {
        let m = model(ModelFamily::RoughSabr);
        let market = MarketParams { v0: 0.2, ..MarketParams::default() };
        let c = KernelSpec::new(0.12, eps).unwrap().constants();
        let p = m.params();
        let rho = market.rho;
        let beta = p.beta;
        let s = m.reconstruct_asset(x, v, rho, c.k_eps).unwrap();
        let g = s.powf(1.0 - beta);
        let expected = (p.rate - p.dividend) * g - beta * v * v / (2.0 * g)
            - rho * (v - market.v0) * c.r_hat / (c.k_eps * p.vol_of_vol);
        let theta = m.drift_theta(x, v, &market, &c, ThetaForm::ItoExpansion).unwrap();
        prop_assert!((theta - expected).abs() <= 1e-10 * expected.abs().max(1.0), "{theta} vs {expected}");
    }

    #[test]
    fn g_offset_shifts_g_only(f in family(), s in 0.05f64..40.0, offset in -5.0f64..5.0) {
        let m = model(f);
        let shifted = m.with_g_offset(offset);
        let x = m.transform_g(s).unwrap();
        let y = shifted.transform_g(s).unwrap();
        prop_assert!((y - x - offset).abs() <= 1e-12 * (1.0 + x.abs() + offset.abs()));
        prop_assert!((shifted.g_inverse(y).unwrap() - s).abs() <= 1e-11 * s.max(1.0));
    }
}

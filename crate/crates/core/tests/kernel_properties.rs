use proptest::prelude::*;
use roughchain::kernel::{fractional_kernel, perturbed_kernel, Hurst, KernelSpec};
use roughchain::quadrature::{laplace_quadrature, LaplaceIntegral};

const HURSTS: [f64; 4] = [0.05, 0.12, 0.3, 0.45];
const EPSILONS: [f64; 3] = [1e-2, 1e-4, 1e-8];

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn closed_form_constants_match_quadrature() {
    for h in HURSTS {
        for eps in EPSILONS {
            let spec = KernelSpec::new(h, eps).unwrap();
            let c = spec.constants();
            let r = laplace_quadrature(LaplaceIntegral::R, &spec, 1e-12).unwrap();
            let r_hat = laplace_quadrature(LaplaceIntegral::RHat, &spec, 1e-12).unwrap();
            assert!(rel(c.r, r) <= 1e-8, "R at H={h}, eps={eps}: {} vs {r}", c.r);
            assert!(rel(c.r_hat, r_hat) <= 1e-8, "R-hat at H={h}, eps={eps}");
        }
    }
}

#[test]
fn k_eps_log_slope_is_h_minus_half() {
    for h in HURSTS {
        let k = |eps: f64| KernelSpec::new(h, eps).unwrap().constants().k_eps;
        let (e1, e2) = (1e-6, 1e-9);
        let slope = (k(e2).ln() - k(e1).ln()) / (e2.ln() - e1.ln());
        assert!((slope - (h - 0.5)).abs() <= 1e-6, "H={h}: slope {slope}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_is_a_laplace_mixture(
        hi in 0..4usize,
        ei in 0..3usize,
        s in 0.0f64..2.0,
        lag in 0.0f64..3.0,
    ) {
        let spec = KernelSpec::new(HURSTS[hi], EPSILONS[ei]).unwrap();
        let t = s + lag;
        let direct = perturbed_kernel(t, s, &spec).unwrap();
        let mixture = laplace_quadrature(LaplaceIntegral::Kernel { t, s }, &spec, 1e-12).unwrap();
        prop_assert!(rel(mixture, direct) <= 1e-8, "{mixture} vs {direct}");
    }

    #[test]
    fn perturbed_kernel_decreases_in_eps(
        h in 0.01f64..0.49,
        lag in 0.0f64..2.0,
        e1 in 1e-10f64..1e-1,
        factor in 1.01f64..100.0,
    ) {
        let small = KernelSpec::new(h, e1).unwrap();
        let large = KernelSpec::new(h, e1 * factor).unwrap();
        prop_assert!(perturbed_kernel(lag, 0.0, &large).unwrap() < perturbed_kernel(lag, 0.0, &small).unwrap());
    }

    #[test]
    fn perturbed_kernel_tends_to_fractional(h in 0.01f64..0.49, lag in 1e-3f64..2.0) {
        let exact = fractional_kernel(lag, 0.0, Hurst::new(h).unwrap()).unwrap();
        let gap = |eps: f64| rel(perturbed_kernel(lag, 0.0, &KernelSpec::new(h, eps).unwrap()).unwrap(), exact);
        let coarse = gap(1e-4 * lag);
        let fine = gap(1e-8 * lag);
        prop_assert!(fine < coarse);
        prop_assert!(fine < 1e-7);
    }
}

use proptest::prelude::*;
use roughchain::ctmc::{GeneratorSet, GridLayout, NegativeRatePolicy};
use roughchain::kernel::KernelSpec;
use roughchain::matexp::ExpmOptions;
use roughchain::models::{MarketParams, ModelFamily, ModelParams, ModelSpec, ThetaForm};
use roughchain::pricing::{
    chain_expected_asset, payoff_vector, price, price_bermudan, price_european_coupled, price_fast,
    Algorithm, Barrier, FastIndexing, OptionSpec, PayoffKind,
};

const WORKING: [ModelFamily; 4] = [
    ModelFamily::RoughHeston,
    ModelFamily::RoughSabr,
    ModelFamily::RoughHestonSabr,
    ModelFamily::RoughQuadraticSlv,
];

fn build(family: ModelFamily, params: ModelParams, x_nodes: usize, v_nodes: usize) -> GeneratorSet {
    let layout = GridLayout {
        x_nodes,
        v_nodes,
        ..GridLayout::default()
    };
    GeneratorSet::build(
        ModelSpec::new(family, params).unwrap(),
        MarketParams::default(),
        KernelSpec::new(0.12, 1e-8).unwrap(),
        &layout,
        ThetaForm::ItoExpansion,
        NegativeRatePolicy::Allow,
    )
    .unwrap()
}

fn upwind(family: ModelFamily, nodes: usize) -> GeneratorSet {
    let layout = GridLayout {
        x_nodes: nodes,
        v_nodes: nodes,
        ..GridLayout::default()
    };
    GeneratorSet::build(
        ModelSpec::new(family, ModelParams::default()).unwrap(),
        MarketParams::default(),
        KernelSpec::new(0.12, 1e-8).unwrap(),
        &layout,
        ThetaForm::ItoExpansion,
        NegativeRatePolicy::Upwind,
    )
    .unwrap()
}

fn standard(family: ModelFamily, nodes: usize) -> GeneratorSet {
    build(family, ModelParams::default(), nodes, nodes)
}

fn call(strike: f64) -> OptionSpec {
    OptionSpec::european(PayoffKind::Call, strike, 1.0, 0.0)
}

fn fast(option: &OptionSpec, gens: &GeneratorSet) -> f64 {
    price_fast(
        option,
        gens,
        &ExpmOptions::default(),
        FastIndexing::SummationIndex,
    )
    .unwrap()
    .price
}

#[test]
fn bermudan_is_monotone_over_nested_dates() {
    let params = ModelParams {
        rate: 0.05,
        ..ModelParams::default()
    };
    for family in [ModelFamily::RoughHeston, ModelFamily::RoughSabr] {
        let gens = build(family, params, 20, 20);
        let put = OptionSpec::european(PayoffKind::Put, 11.0, 1.0, 0.05);
        let mut previous = f64::NEG_INFINITY;
        for k in 0..5 {
            let p = price_bermudan(
                &put.with_exercise_dates(1 << k),
                &gens,
                &ExpmOptions::default(),
            )
            .unwrap()
            .price;
            assert!(
                p >= previous - 1e-10,
                "{}: n={} gives {p} < {previous}",
                family.name(),
                1 << k
            );
            previous = p;
        }
    }
}

#[test]
fn single_exercise_date_is_european_or_immediate() {
    // The exercise dates include t = 0, so one date means "now or at T".
    for family in WORKING {
        let gens = standard(family, 20);
        for option in [
            call(4.0),
            OptionSpec::european(PayoffKind::Put, 10.0, 0.5, 0.0),
        ] {
            let european = price_european_coupled(&option, &gens, &ExpmOptions::default())
                .unwrap()
                .price;
            let bermudan = price_bermudan(
                &option.with_exercise_dates(1),
                &gens,
                &ExpmOptions::default(),
            )
            .unwrap()
            .price;
            let now = option.payoff(gens.market.s0);
            assert!(
                (bermudan - european.max(now)).abs() <= 1e-12,
                "{}: {bermudan} vs {european}",
                family.name()
            );
        }
    }
}

#[test]
fn single_exercise_date_is_european_when_holding_pays() {
    let gens = standard(ModelFamily::RoughHeston, 20);
    let european = price_european_coupled(&call(4.0), &gens, &ExpmOptions::default())
        .unwrap()
        .price;
    assert!(european > 6.0);
    let bermudan = price_bermudan(
        &call(4.0).with_exercise_dates(1),
        &gens,
        &ExpmOptions::default(),
    )
    .unwrap()
    .price;
    assert!((bermudan - european).abs() <= 1e-12);
}

#[test]
fn unbounded_band_is_european_exactly() {
    let band = Barrier::new(0.0, f64::INFINITY).unwrap();
    for family in WORKING {
        let gens = standard(family, 24);
        let option = call(4.0);
        assert_eq!(
            fast(&option.with_barrier(band), &gens),
            fast(&option, &gens)
        );
        let expm = ExpmOptions::default();
        assert_eq!(
            price_european_coupled(&option.with_barrier(band), &gens, &expm)
                .unwrap()
                .price,
            price_european_coupled(&option, &gens, &expm).unwrap().price
        );
    }
}

#[test]
fn put_call_parity_on_the_chain() {
    for family in WORKING {
        let gens = standard(family, 15);
        let expm = ExpmOptions::default();
        // Rounding in the linear maps scales with the largest payoff entry.
        let scale = payoff_vector(&call(0.0), &gens)
            .unwrap()
            .into_iter()
            .fold(1.0, f64::max);
        for strike in [4.0, 10.0, 13.0] {
            let c = price_european_coupled(&call(strike), &gens, &expm)
                .unwrap()
                .price;
            let p = price_european_coupled(
                &OptionSpec::european(PayoffKind::Put, strike, 1.0, 0.0),
                &gens,
                &expm,
            )
            .unwrap()
            .price;
            let forward = chain_expected_asset(&gens, 1.0, &expm).unwrap();
            assert!(
                (c - p - (forward - strike)).abs() <= 1e-10 * scale,
                "{} D={strike}: {c} - {p} vs {forward} - {strike}",
                family.name()
            );
        }
    }
}

#[test]
fn fast_put_call_parity() {
    for family in WORKING {
        let gens = standard(family, 30);
        let scale = payoff_vector(&call(0.0), &gens)
            .unwrap()
            .into_iter()
            .fold(1.0, f64::max);
        let forward = fast(&call(0.0), &gens);
        for strike in [4.0, 10.0] {
            let c = fast(&call(strike), &gens);
            let p = fast(
                &OptionSpec::european(PayoffKind::Put, strike, 1.0, 0.0),
                &gens,
            );
            assert!(
                (c - p - (forward - strike)).abs() <= 1e-10 * scale,
                "{}: {c} {p} {forward}",
                family.name()
            );
        }
    }
}

#[test]
fn price_ignores_the_integration_constant_of_g() {
    for family in WORKING {
        let base = standard(family, 30);
        let reference = fast(&call(4.0), &base);
        let coupled = price_european_coupled(&call(4.0), &base, &ExpmOptions::default())
            .unwrap()
            .price;
        for offset in [-2.0, 0.5, 3.0] {
            let layout = GridLayout {
                x_nodes: 30,
                v_nodes: 30,
                x_bounds: Some((base.xgrid.first() + offset, base.xgrid.last() + offset)),
                ..GridLayout::default()
            };
            let shifted = GeneratorSet::build(
                base.model.with_g_offset(offset),
                base.market,
                base.kernel,
                &layout,
                ThetaForm::ItoExpansion,
                NegativeRatePolicy::Allow,
            )
            .unwrap();
            let p = fast(&call(4.0), &shifted);
            assert!(
                (p - reference).abs() <= 1e-10,
                "{} offset {offset}: {p} vs {reference}",
                family.name()
            );
            let q = price_european_coupled(&call(4.0), &shifted, &ExpmOptions::default())
                .unwrap()
                .price;
            assert!(
                (q - coupled).abs() <= 1e-10,
                "{} offset {offset}: {q} vs {coupled}",
                family.name()
            );
        }
    }
}

#[test]
fn fast_and_coupled_converge_together() {
    // Rough SABR has no variance drift and the two already agree to the
    // solver tolerance at 20 nodes, so only the floor is checked there.
    for family in WORKING {
        let gaps: Vec<f64> = [20, 40, 80]
            .into_iter()
            .map(|n| {
                let gens = standard(family, n);
                let f = fast(&call(4.0), &gens);
                let c = price_european_coupled(&call(4.0), &gens, &ExpmOptions::default())
                    .unwrap()
                    .price;
                (f - c).abs()
            })
            .collect();
        let decreasing = gaps[1] < gaps[0] && gaps[2] < gaps[1];
        assert!(
            decreasing || gaps.iter().all(|&g| g < 1e-7),
            "{}: {gaps:?}",
            family.name()
        );
    }
}

#[test]
fn single_variance_node_fast_equals_coupled() {
    for family in WORKING {
        let gens = build(family, ModelParams::default(), 40, 1);
        assert_eq!(gens.vgrid.len(), 1);
        let f = fast(&call(4.0), &gens);
        let c = price_european_coupled(&call(4.0), &gens, &ExpmOptions::default())
            .unwrap()
            .price;
        assert!((f - c).abs() <= 1e-10, "{}: {f} vs {c}", family.name());
    }
}

#[test]
fn zero_strike_call_is_near_spot() {
    for family in WORKING {
        let gens = standard(family, 100);
        let p = fast(&call(0.0), &gens);
        assert!((p / 10.0 - 1.0).abs() <= 0.02, "{}: {p}", family.name());
    }
}

#[test]
fn rate_must_match_the_model() {
    let gens = standard(ModelFamily::RoughHeston, 10);
    let option = OptionSpec::european(PayoffKind::Call, 4.0, 1.0, 0.03);
    let err = price(
        &option,
        &gens,
        Algorithm::Fast,
        &ExpmOptions::default(),
        FastIndexing::SummationIndex,
    )
    .unwrap_err();
    assert!(err.is_configuration());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Domination needs a positive transition operator, so the chains here use
    // the upwind repair; with negative rates kept the inequality can fail.
    #[test]
    fn barrier_never_exceeds_european(
        family in prop::sample::select(WORKING.to_vec()),
        lower in 0.0f64..9.0,
        width in 0.5f64..30.0,
        strike in 0.0f64..14.0,
        is_put in any::<bool>(),
    ) {
        let gens = upwind(family, 24);
        let kind = if is_put { PayoffKind::Put } else { PayoffKind::Call };
        let option = OptionSpec::european(kind, strike, 1.0, 0.0);
        let band = Barrier::new(lower, lower + width).unwrap();
        let european = fast(&option, &gens);
        let barrier = fast(&option.with_barrier(band), &gens);
        prop_assert!(barrier <= european + 1e-10, "{barrier} > {european}");
    }
}

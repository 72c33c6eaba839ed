//! Option prices on the two-layer chain.
//!
//! A price is `e^{-rT} [exp(ΛT) Φ]` read at the initial state, where `Λ` is
//! the coupled generator on the `(v_ℓ, x_i)` lattice and `Φ` the payoff at the
//! reconstructed asset levels. The coupled pricers work with `Λ` directly.
//! The fast pricer conditions on the terminal variance state instead:
//!
//! ```text
//! price = e^{-rT} Σ_j [exp(QT)]_{ℓ₀ j} · [exp(Λ_j T) Φ_j]_{i₀}
//! ```
//!
//! which needs one row of `exp(QT)` and one `N`-state exponential per regime.

use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ctmc::{ChainCounts, GeneratorSet, GridLayout, NegativeRatePolicy, RateMatrix};
use crate::error::{Error, Result};
use crate::grids::Regularity;
use crate::kernel::KernelSpec;
use crate::matexp::{expm_action, expm_dense, ActionInfo, ExpmMethod, ExpmOptions, ExpmPlan};
use crate::models::{MarketParams, ModelSpec, ThetaForm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PayoffKind {
    Call,
    Put,
}

impl PayoffKind {
    pub fn intrinsic(self, asset: f64, strike: f64) -> f64 {
        match self {
            PayoffKind::Call => (asset - strike).max(0.0),
            PayoffKind::Put => (strike - asset).max(0.0),
        }
    }
}

/// Knock-out band `(lower, upper)` checked on the terminal asset level only.
/// `upper` may be `+∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Barrier {
    pub lower: f64,
    pub upper: f64,
}

impl Barrier {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower >= 0.0) || !lower.is_finite() {
            return Err(Error::invalid(
                "lower",
                "barrier lower level must be finite and >= 0",
            ));
        }
        if !(upper > lower) {
            return Err(Error::invalid(
                "upper",
                "barrier upper level must exceed the lower level",
            ));
        }
        Ok(Self { lower, upper })
    }

    pub fn contains(&self, asset: f64) -> bool {
        asset > self.lower && asset < self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Product {
    European,
    Barrier,
    Bermudan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptionSpec {
    pub kind: PayoffKind,
    pub strike: f64,
    pub maturity: f64,
    /// Continuously compounded discount rate; must equal the model drift rate.
    pub rate: f64,
    pub barrier: Option<Barrier>,
    /// Number of exercise dates `τ_i = iT/n`.
    pub exercise_dates: Option<usize>,
}

impl OptionSpec {
    pub fn european(kind: PayoffKind, strike: f64, maturity: f64, rate: f64) -> Self {
        Self {
            kind,
            strike,
            maturity,
            rate,
            barrier: None,
            exercise_dates: None,
        }
    }

    pub fn with_barrier(mut self, barrier: Barrier) -> Self {
        self.barrier = Some(barrier);
        self
    }

    pub fn with_exercise_dates(mut self, dates: usize) -> Self {
        self.exercise_dates = Some(dates);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strike >= 0.0) || !self.strike.is_finite() {
            return Err(Error::invalid("strike", "must be finite and >= 0"));
        }
        if !(self.maturity > 0.0) || !self.maturity.is_finite() {
            return Err(Error::invalid("maturity", "must be finite and > 0"));
        }
        if !self.rate.is_finite() {
            return Err(Error::invalid("rate", "must be finite"));
        }
        if let Some(b) = self.barrier {
            Barrier::new(b.lower, b.upper)?;
        }
        match self.exercise_dates {
            Some(0) => {
                return Err(Error::invalid(
                    "exercise_dates",
                    "need at least one exercise date",
                ))
            }
            Some(_) if self.barrier.is_some() => {
                return Err(Error::invalid(
                    "barrier",
                    "barrier features are not supported with early exercise",
                ))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn product(&self) -> Product {
        match (self.exercise_dates, self.barrier) {
            (Some(_), _) => Product::Bermudan,
            (None, Some(_)) => Product::Barrier,
            (None, None) => Product::European,
        }
    }

    /// Terminal payoff, zero outside the barrier band.
    pub fn payoff(&self, asset: f64) -> f64 {
        match self.barrier {
            Some(b) if !b.contains(asset) => 0.0,
            _ => self.kind.intrinsic(asset, self.strike),
        }
    }

    fn discount(&self, horizon: f64) -> f64 {
        (-self.rate * horizon).exp()
    }
}

/// Which pricing pipeline to run for European and barrier products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Fast,
    Coupled,
}

/// Index used for the regime exponential inside the fast sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FastIndexing {
    /// `Λ_j`, `Φ_j` with `j` the summation index (conditioning on `V_T = v_j`).
    #[default]
    SummationIndex,
    /// `Λ_ℓ₀`, `Φ_ℓ₀` for every `j`; the sum then collapses to one regime.
    LiteralRegime,
}

/// How many exponentials each method evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ExpmTally {
    pub dense: usize,
    pub uniformization: usize,
    pub contour: usize,
    pub max_substeps: usize,
}

impl ExpmTally {
    fn record(&mut self, info: ActionInfo) {
        match info.method {
            ExpmMethod::DenseScalingSquaring => self.dense += 1,
            ExpmMethod::Uniformization => self.uniformization += 1,
            ExpmMethod::Contour => self.contour += 1,
        }
        self.max_substeps = self.max_substeps.max(info.substeps);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub algorithm: Algorithm,
    pub product: Product,
    pub x_nodes: usize,
    pub v_nodes: usize,
    pub hurst: f64,
    pub eps: f64,
    pub expm: ExpmTally,
    pub negative_rates: ChainCounts,
    pub x_range: (f64, f64),
    pub v_range: (f64, f64),
    pub x_regularity: Regularity,
    pub v_regularity: Regularity,
    /// Seconds spent building grids and generators (zero when prebuilt).
    pub build_seconds: f64,
    /// Seconds for the whole price, including the build.
    pub seconds: f64,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceResult {
    pub price: f64,
    pub diagnostics: Diagnostics,
}

fn diagnostics(gens: &GeneratorSet, algorithm: Algorithm, product: Product) -> Diagnostics {
    let mut flags = Vec::new();
    if gens.counts.variance.negative + gens.counts.auxiliary.negative
        > gens.counts.variance.repaired + gens.counts.auxiliary.repaired
    {
        flags.push("negative-rates".to_string());
    }
    if gens.counts.variance.repaired + gens.counts.auxiliary.repaired > 0 {
        flags.push("upwind-repaired".to_string());
    }
    if product == Product::Barrier {
        flags.push("terminal-barrier".to_string());
    }
    Diagnostics {
        algorithm,
        product,
        x_nodes: gens.xgrid.len(),
        v_nodes: gens.vgrid.len(),
        hurst: gens.kernel.hurst().value(),
        eps: gens.kernel.eps(),
        expm: ExpmTally::default(),
        negative_rates: gens.counts,
        x_range: (gens.xgrid.first(), gens.xgrid.last()),
        v_range: (gens.vgrid.first(), gens.vgrid.last()),
        x_regularity: gens.xgrid.regularity(),
        v_regularity: gens.vgrid.regularity(),
        build_seconds: 0.0,
        seconds: 0.0,
        flags,
    }
}

fn check_inputs(option: &OptionSpec, gens: &GeneratorSet) -> Result<()> {
    option.validate()?;
    let model_rate = gens.model.params().rate;
    if option.rate != model_rate {
        return Err(Error::invalid(
            "rate",
            format!(
                "discount rate {} differs from the model drift rate {model_rate}",
                option.rate
            ),
        ));
    }
    Ok(())
}

/// Payoff at regime `regime`, one entry per x node.
pub fn regime_payoff(option: &OptionSpec, gens: &GeneratorSet, regime: usize) -> Result<Vec<f64>> {
    (0..gens.xgrid.len())
        .map(|i| Ok(option.payoff(gens.asset_level(regime, i)?)))
        .collect()
}

/// Payoff on the whole lattice at flat index `ℓN + i`.
pub fn payoff_vector(option: &OptionSpec, gens: &GeneratorSet) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(gens.xgrid.len() * gens.vgrid.len());
    for regime in 0..gens.vgrid.len() {
        out.extend(regime_payoff(option, gens, regime)?);
    }
    Ok(out)
}

/// Rejects prices that no transition matrix could produce from `payoff`.
fn check_price(price: f64, payoff: &[f64], discount: f64) -> Result<f64> {
    let top = payoff.iter().copied().fold(0.0, f64::max) * discount.max(1.0);
    let slack = 1e-8 * (1.0 + top);
    if !price.is_finite() || price < -slack || price > top * (1.0 + 1e-6) + slack {
        return Err(Error::Numerical(format!(
            "price {price:e} lies outside the payoff range [0, {top:e}]; \
             the chain is far from a valid generator at these settings"
        )));
    }
    Ok(price)
}

/// Model-free ceiling: a call is worth at most the asset, a put at most the
/// strike. The 1% margin leaves room for discretization error of the chain.
fn check_bound(price: f64, option: &OptionSpec, gens: &GeneratorSet) -> Result<f64> {
    let ceiling = match option.kind {
        PayoffKind::Call => {
            gens.market.s0
                * (-gens.model.params().dividend * option.maturity)
                    .exp()
                    .max(1.0)
        }
        PayoffKind::Put => option.strike,
    };
    if price > ceiling * 1.01 {
        return Err(Error::Numerical(format!(
            "price {price:e} exceeds the no-arbitrage bound {ceiling:e}; \
             the chain is far from a valid generator at these settings"
        )));
    }
    Ok(price)
}

/// European or barrier price from the coupled `NM`-state generator.
pub fn price_european_coupled(
    option: &OptionSpec,
    gens: &GeneratorSet,
    expm: &ExpmOptions,
) -> Result<PriceResult> {
    let start = Instant::now();
    check_inputs(option, gens)?;
    if option.exercise_dates.is_some() {
        return Err(Error::invalid(
            "exercise_dates",
            "use the Bermudan pricer for early exercise",
        ));
    }
    let payoff = payoff_vector(option, gens)?;
    // Same operator choice as the Bermudan stepper, so one exercise date
    // reproduces this price.
    let plan = ExpmPlan::new(&gens.coupled(), option.maturity, expm)?;
    let values = plan.apply(&payoff)?;
    let discount = option.discount(option.maturity);
    let price = check_bound(
        check_price(
            discount * values[gens.anchor_flat_index()],
            &payoff,
            discount,
        )?,
        option,
        gens,
    )?;
    let mut diagnostics = diagnostics(gens, Algorithm::Coupled, option.product());
    diagnostics.expm.record(plan.info());
    diagnostics.seconds = start.elapsed().as_secs_f64();
    Ok(PriceResult { price, diagnostics })
}

/// Terminal-level barrier price from the coupled generator.
pub fn price_barrier_coupled(
    option: &OptionSpec,
    gens: &GeneratorSet,
    expm: &ExpmOptions,
) -> Result<PriceResult> {
    if option.barrier.is_none() {
        return Err(Error::invalid(
            "barrier",
            "barrier pricer called without a barrier",
        ));
    }
    price_european_coupled(option, gens, expm)
}

/// Row `ℓ₀` of `exp(QT)`, as `exp(Qᵀ T) e_ℓ₀`.
///
/// `Q` is very stiff at small `ε` (`ν` near `10⁸`), where dense scaling and
/// squaring loses about `ε_mach ν T` of the row mass; the automatic choice
/// keeps it near the solver tolerance.
fn variance_row(
    gens: &GeneratorSet,
    horizon: f64,
    expm: &ExpmOptions,
) -> Result<(Vec<f64>, ActionInfo)> {
    let mut unit = vec![0.0; gens.q.dim()];
    unit[gens.vgrid.anchor_index()] = 1.0;
    expm_action(&gens.q.transpose(), &unit, horizon, expm)
}

/// European or barrier price by conditioning on the terminal variance state.
pub fn price_fast(
    option: &OptionSpec,
    gens: &GeneratorSet,
    expm: &ExpmOptions,
    indexing: FastIndexing,
) -> Result<PriceResult> {
    let start = Instant::now();
    check_inputs(option, gens)?;
    if option.exercise_dates.is_some() {
        return Err(Error::invalid(
            "exercise_dates",
            "the fast pricer has no early exercise",
        ));
    }
    let horizon = option.maturity;
    let mut diagnostics = diagnostics(gens, Algorithm::Fast, option.product());
    let (weights, info) = variance_row(gens, horizon, expm)?;
    diagnostics.expm.record(info);

    let x_anchor = gens.xgrid.anchor_index();
    let inner = |regime: usize| -> Result<(f64, f64, ActionInfo)> {
        let payoff = regime_payoff(option, gens, regime)?;
        let top = payoff.iter().copied().fold(0.0, f64::max);
        let (values, info) = expm_action(&gens.lambdas[regime], &payoff, horizon, expm)?;
        Ok((values[x_anchor], top, info))
    };
    let inners: Vec<(f64, f64, ActionInfo)> = match indexing {
        FastIndexing::SummationIndex => (0..gens.vgrid.len())
            .into_par_iter()
            .map(inner)
            .collect::<Result<_>>()?,
        FastIndexing::LiteralRegime => vec![inner(gens.vgrid.anchor_index())?],
    };
    let mut undiscounted = 0.0;
    let mut top = 0.0f64;
    match indexing {
        FastIndexing::SummationIndex => {
            for (w, (value, t, info)) in weights.iter().zip(&inners) {
                undiscounted += w * value;
                top = top.max(*t);
                diagnostics.expm.record(*info);
            }
        }
        FastIndexing::LiteralRegime => {
            let (value, t, info) = inners[0];
            undiscounted = weights.iter().sum::<f64>() * value;
            top = t;
            diagnostics.expm.record(info);
            diagnostics.flags.push("literal-regime-index".to_string());
        }
    }
    let discount = option.discount(horizon);
    let price = check_bound(
        check_price(discount * undiscounted, &[top], discount)?,
        option,
        gens,
    )?;
    diagnostics.seconds = start.elapsed().as_secs_f64();
    Ok(PriceResult { price, diagnostics })
}

/// Bermudan price by backward induction over `τ_i = iT/n`, `i = 0..n`.
///
/// `B_n = Φ`, `B_i = max(e^{-rT/n} exp(ΛT/n) B_{i+1}, Φ)`; the one-step
/// operator is factorised once and reused for every date.
pub fn price_bermudan(
    option: &OptionSpec,
    gens: &GeneratorSet,
    expm: &ExpmOptions,
) -> Result<PriceResult> {
    let start = Instant::now();
    check_inputs(option, gens)?;
    let dates = option
        .exercise_dates
        .ok_or_else(|| Error::invalid("exercise_dates", "Bermudan pricer needs exercise dates"))?;
    let step = option.maturity / dates as f64;
    let payoff = payoff_vector(option, gens)?;
    let coupled = gens.coupled();
    let plan = ExpmPlan::new(&coupled, step, expm)?;
    let discount = option.discount(step);
    let mut values = payoff.clone();
    for _ in 0..dates {
        values = plan.apply(&values)?;
        for (v, &p) in values.iter_mut().zip(&payoff) {
            *v = (discount * *v).max(p);
        }
    }
    let price = check_bound(
        check_price(values[gens.anchor_flat_index()], &payoff, 1.0)?,
        option,
        gens,
    )?;
    let mut diagnostics = diagnostics(gens, Algorithm::Coupled, Product::Bermudan);
    diagnostics.expm.record(plan.info());
    diagnostics.seconds = start.elapsed().as_secs_f64();
    Ok(PriceResult { price, diagnostics })
}

/// Prices with a prebuilt generator set: Bermudan when exercise dates are
/// given, otherwise the chosen algorithm.
pub fn price(
    option: &OptionSpec,
    gens: &GeneratorSet,
    algorithm: Algorithm,
    expm: &ExpmOptions,
    indexing: FastIndexing,
) -> Result<PriceResult> {
    match (option.product(), algorithm) {
        (Product::Bermudan, _) => price_bermudan(option, gens, expm),
        (_, Algorithm::Fast) => price_fast(option, gens, expm, indexing),
        (_, Algorithm::Coupled) => price_european_coupled(option, gens, expm),
    }
}

/// Everything needed to build the chain and price on it.
#[derive(Debug, Clone)]
pub struct PricingSetup {
    pub model: ModelSpec,
    pub market: MarketParams,
    pub kernel: KernelSpec,
    pub layout: GridLayout,
    pub theta_form: ThetaForm,
    pub policy: NegativeRatePolicy,
    pub algorithm: Algorithm,
    pub indexing: FastIndexing,
    pub expm: ExpmOptions,
}

impl PricingSetup {
    pub fn new(model: ModelSpec, market: MarketParams, kernel: KernelSpec) -> Self {
        Self {
            model,
            market,
            kernel,
            layout: GridLayout::default(),
            theta_form: ThetaForm::default(),
            policy: NegativeRatePolicy::default(),
            algorithm: Algorithm::default(),
            indexing: FastIndexing::default(),
            expm: ExpmOptions::default(),
        }
    }

    pub fn generators(&self) -> Result<GeneratorSet> {
        GeneratorSet::build(
            self.model,
            self.market,
            self.kernel,
            &self.layout,
            self.theta_form,
            self.policy,
        )
    }

    /// Builds the chain and prices; timings cover both.
    pub fn price(&self, option: &OptionSpec) -> Result<PriceResult> {
        let start = Instant::now();
        option.validate()?;
        let gens = self.generators()?;
        let build_seconds = start.elapsed().as_secs_f64();
        let mut result = price(option, &gens, self.algorithm, &self.expm, self.indexing)?;
        result.diagnostics.build_seconds = build_seconds;
        result.diagnostics.seconds = start.elapsed().as_secs_f64();
        Ok(result)
    }
}

/// `E[S_T]` under the chain (undiscounted), from the D = 0 call.
pub fn chain_expected_asset(gens: &GeneratorSet, maturity: f64, expm: &ExpmOptions) -> Result<f64> {
    let option = OptionSpec::european(PayoffKind::Call, 0.0, maturity, gens.model.params().rate);
    let levels = payoff_vector(&option, gens)?;
    let (values, _) = expm_action(&gens.coupled(), &levels, maturity, expm)?;
    Ok(values[gens.anchor_flat_index()])
}

/// Dense one-step transition matrix of the coupled chain (small lattices).
pub fn coupled_transition(
    gens: &GeneratorSet,
    horizon: f64,
    cap: usize,
) -> Result<nalgebra::DMatrix<f64>> {
    expm_dense(&gens.coupled().to_dense(), horizon, cap)
}

/// `exp(tG) w` through a dense matrix; used by tests as an oracle.
pub fn dense_action(g: &impl RateMatrix, w: &[f64], t: f64) -> Result<Vec<f64>> {
    let e = expm_dense(&g.to_dense(), t, g.dim().max(1))?;
    Ok((e * DVector::from_column_slice(w)).as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelFamily, ModelParams};

    fn setup(family: ModelFamily, nodes: usize) -> PricingSetup {
        let model = ModelSpec::new(family, ModelParams::default()).unwrap();
        let mut s = PricingSetup::new(
            model,
            MarketParams::default(),
            KernelSpec::new(0.12, 1e-8).unwrap(),
        );
        s.layout.x_nodes = nodes;
        s.layout.v_nodes = nodes;
        s
    }

    fn call(strike: f64) -> OptionSpec {
        OptionSpec::european(PayoffKind::Call, strike, 1.0, 0.0)
    }

    #[test]
    fn option_validation() {
        assert!(call(-1.0).validate().is_err());
        assert!(OptionSpec::european(PayoffKind::Put, 4.0, 0.0, 0.0)
            .validate()
            .is_err());
        assert!(Barrier::new(3.0, 3.0).is_err());
        assert!(Barrier::new(0.0, f64::INFINITY).is_ok());
        assert!(call(4.0).with_exercise_dates(0).validate().is_err());
        let both = call(4.0)
            .with_exercise_dates(3)
            .with_barrier(Barrier::new(1.0, 9.0).unwrap());
        assert!(both.validate().is_err());
    }

    #[test]
    fn payoff_at_anchor_is_intrinsic() {
        let gens = setup(ModelFamily::RoughHeston, 30).generators().unwrap();
        let payoff = payoff_vector(&call(4.0), &gens).unwrap();
        assert!((payoff[gens.anchor_flat_index()] - 6.0).abs() < 1e-12);
        let zero_put = OptionSpec::european(PayoffKind::Put, 0.0, 1.0, 0.0);
        assert!(payoff_vector(&zero_put, &gens)
            .unwrap()
            .iter()
            .all(|&p| p == 0.0));
        let levels = payoff_vector(&call(0.0), &gens).unwrap();
        assert!((levels[gens.anchor_flat_index()] - gens.market.s0).abs() < 1e-12);
    }

    #[test]
    fn rate_mismatch_is_rejected() {
        let gens = setup(ModelFamily::RoughHeston, 20).generators().unwrap();
        let option = OptionSpec::european(PayoffKind::Call, 4.0, 1.0, 0.05);
        let err = price_fast(
            &option,
            &gens,
            &ExpmOptions::default(),
            FastIndexing::default(),
        )
        .unwrap_err();
        assert!(err.is_configuration());
    }

    #[test]
    fn single_regime_fast_equals_coupled() {
        let mut s = setup(ModelFamily::RoughHeston, 40);
        s.layout.v_nodes = 1;
        let gens = s.generators().unwrap();
        let expm = ExpmOptions::default();
        let fast = price_fast(&call(4.0), &gens, &expm, FastIndexing::default())
            .unwrap()
            .price;
        let coupled = price_european_coupled(&call(4.0), &gens, &expm)
            .unwrap()
            .price;
        let payoff = regime_payoff(&call(4.0), &gens, 0).unwrap();
        let direct =
            dense_action(&gens.lambdas[0], &payoff, 1.0).unwrap()[gens.xgrid.anchor_index()];
        assert!((fast - coupled).abs() < 1e-9 * coupled);
        assert!((fast - direct).abs() < 1e-9 * direct);
    }

    #[test]
    fn bermudan_single_date_is_european_when_holding_pays() {
        let gens = setup(ModelFamily::RoughHeston, 12).generators().unwrap();
        let expm = ExpmOptions::default();
        let euro = price_european_coupled(&call(4.0), &gens, &expm)
            .unwrap()
            .price;
        let berm = price_bermudan(&call(4.0).with_exercise_dates(1), &gens, &expm)
            .unwrap()
            .price;
        assert!(euro > 6.0);
        assert!((euro - berm).abs() < 1e-12);
    }
}

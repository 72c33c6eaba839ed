//! Property suites run by `roughchain selfcheck`.
//!
//! Each check returns an outcome instead of panicking so the command can
//! report every failure. The generator suite checks nonnegativity on `Q` as
//! built and on the `Λ_ℓ` built with the upwind policy; the central scheme at
//! the standard parameters has negative `Λ` rates, which the acceptance
//! harness reports separately.

use std::time::Instant;

use serde::Serialize;

use crate::ctmc::{
    validate_generator, GeneratorSet, GridLayout, NegativeRatePolicy, RateMatrix, Tridiagonal,
};
use crate::error::Result;
use crate::kernel::{perturbed_kernel, KernelSpec};
use crate::matexp::{expm_action, expm_dense, ExpmMethod, ExpmOptions};
use crate::models::{MarketParams, ModelFamily, ModelParams, ModelSpec, ThetaForm};
use crate::quadrature::{laplace_quadrature, LaplaceIntegral};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfcheckReport {
    pub outcomes: Vec<CheckOutcome>,
    pub seconds: f64,
}

impl SelfcheckReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn failures(&self) -> usize {
        self.outcomes.iter().filter(|o| !o.passed).count()
    }
}

struct Suite {
    name: &'static str,
    outcomes: Vec<CheckOutcome>,
}

impl Suite {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            outcomes: Vec::new(),
        }
    }

    /// Records `value <= limit`.
    fn bound(&mut self, name: impl Into<String>, value: f64, limit: f64) {
        self.outcomes.push(CheckOutcome {
            suite: self.name,
            name: name.into(),
            passed: value <= limit,
            detail: format!("{value:.3e} (limit {limit:.1e})"),
        });
    }

    fn outcome(&mut self, name: impl Into<String>, result: Result<()>) {
        let (passed, detail) = match result {
            Ok(()) => (true, "ok".to_string()),
            Err(e) => (false, e.to_string()),
        };
        self.outcomes.push(CheckOutcome {
            suite: self.name,
            name: name.into(),
            passed,
            detail,
        });
    }
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Standard parameters with the given family and kernel.
pub fn standard_generators(
    family: ModelFamily,
    eps: f64,
    nodes: usize,
    policy: NegativeRatePolicy,
) -> Result<GeneratorSet> {
    let model = ModelSpec::new(family, ModelParams::default())?;
    let layout = GridLayout {
        x_nodes: nodes,
        v_nodes: nodes,
        ..GridLayout::default()
    };
    GeneratorSet::build(
        model,
        MarketParams::default(),
        KernelSpec::new(0.12, eps)?,
        &layout,
        ThetaForm::default(),
        policy,
    )
}

/// Laplace-measure identities against the closed forms.
pub fn kernel_suite() -> Vec<CheckOutcome> {
    let mut suite = Suite::new("kernel");
    for (h, eps) in [(0.12, 1e-8), (0.12, 1e-2), (0.3, 1e-4), (0.05, 0.5)] {
        let spec = match KernelSpec::new(h, eps) {
            Ok(s) => s,
            Err(e) => {
                suite.outcome(format!("spec H={h} eps={eps}"), Err(e));
                continue;
            }
        };
        let consts = spec.constants();
        let tag = format!("H={h} eps={eps:e}");
        match laplace_quadrature(LaplaceIntegral::R, &spec, 1e-12) {
            Ok(r) => suite.bound(format!("R closed form, {tag}"), relative(r, consts.r), 1e-8),
            Err(e) => suite.outcome(format!("R closed form, {tag}"), Err(e)),
        }
        match laplace_quadrature(LaplaceIntegral::RHat, &spec, 1e-12) {
            Ok(r) => suite.bound(
                format!("R-hat closed form, {tag}"),
                relative(r, consts.r_hat),
                1e-8,
            ),
            Err(e) => suite.outcome(format!("R-hat closed form, {tag}"), Err(e)),
        }
        for (t, s) in [(1.0, 0.0), (0.5, 0.25), (0.3, 0.3)] {
            let name = format!("kernel mixture at ({t}, {s}), {tag}");
            let result = laplace_quadrature(LaplaceIntegral::Kernel { t, s }, &spec, 1e-12)
                .and_then(|q| Ok((q, perturbed_kernel(t, s, &spec)?)));
            match result {
                Ok((q, k)) => suite.bound(name, relative(q, k), 1e-8),
                Err(e) => suite.outcome(name, Err(e)),
            }
        }
        match perturbed_kernel(0.7, 0.7, &spec) {
            Ok(k) => suite.bound(
                format!("K(t+eps, t) = K^eps, {tag}"),
                relative(k, consts.k_eps),
                1e-14,
            ),
            Err(e) => suite.outcome(format!("K(t+eps, t) = K^eps, {tag}"), Err(e)),
        }
    }
    suite.outcomes
}

/// Largest `|Σ q_j (y_j - y_i)^p - target_p| / Σ |q_j| |y_j - y_i|^p` over
/// interior rows, for `p = 1, 2`.
fn moment_defect(
    g: &Tridiagonal,
    nodes: &[f64],
    mut targets: impl FnMut(usize) -> Result<(f64, f64)>,
) -> Result<f64> {
    let mut worst = 0.0f64;
    let mut row = Vec::new();
    for i in 1..nodes.len() - 1 {
        g.row(i, &mut row);
        let (drift, variance) = targets(i)?;
        for (power, target) in [(1, drift), (2, variance)] {
            let mut sum = 0.0;
            let mut scale = 0.0;
            for &(j, q) in &row {
                let step = (nodes[j] - nodes[i]).powi(power);
                sum += q * step;
                scale += (q * step).abs();
            }
            if scale > 0.0 {
                worst = worst.max((sum - target).abs() / scale);
            }
        }
    }
    Ok(worst)
}

fn generator_checks(suite: &mut Suite, family: ModelFamily) -> Result<()> {
    let tag = family.name();
    let central = standard_generators(family, 1e-8, 100, NegativeRatePolicy::Allow)?;
    let upwind = standard_generators(family, 1e-8, 100, NegativeRatePolicy::Upwind)?;

    let q_report = validate_generator(&central.q);
    suite.bound(
        format!("Q relative row sums, {tag}"),
        q_report.max_relative_row_sum,
        1e-12,
    );
    let mut lambda_rows = 0.0f64;
    for lam in central.lambdas.iter().chain(&upwind.lambdas) {
        lambda_rows = lambda_rows.max(validate_generator(lam).max_relative_row_sum);
    }
    suite.bound(
        format!("Lambda relative row sums, {tag}"),
        lambda_rows,
        1e-12,
    );

    suite.bound(
        format!("Q off-diagonal nonnegativity, {tag}"),
        q_report.negative_off_diagonals as f64,
        0.0,
    );
    let upwind_negative: usize = upwind
        .lambdas
        .iter()
        .map(|l| l.negative_off_diagonals())
        .sum();
    suite.bound(
        format!("upwind Lambda off-diagonal nonnegativity, {tag}"),
        upwind_negative as f64,
        0.0,
    );

    let consts = central.consts;
    let model = central.model;
    let market = central.market;
    let vnodes = central.vgrid.nodes().to_vec();
    let q_defect = moment_defect(&central.q, &vnodes, |i| {
        let v = vnodes[i];
        let drift = (v - market.v0) * consts.r_hat + consts.k_eps * model.variance_drift(v);
        let vol = consts.k_eps * model.variance_vol(v);
        Ok((drift, vol * vol))
    })?;
    suite.bound(format!("Q moment matching, {tag}"), q_defect, 1e-10);

    let xnodes = central.xgrid.nodes().to_vec();
    let mut lambda_defect = 0.0f64;
    for (regime, lam) in central.lambdas.iter().enumerate() {
        let v = vnodes[regime];
        let phi = model.vol_factor(v);
        let variance = (1.0 - market.rho * market.rho) * phi * phi;
        let defect = moment_defect(lam, &xnodes, |i| {
            Ok((
                model.drift_theta(xnodes[i], v, &market, &consts, central.theta_form)?,
                variance,
            ))
        })?;
        lambda_defect = lambda_defect.max(defect);
    }
    suite.bound(
        format!("Lambda moment matching, {tag}"),
        lambda_defect,
        1e-10,
    );

    // Coupled rows are Q ⊗ I + blockdiag(Λ).
    let small = standard_generators(family, 1e-4, 6, NegativeRatePolicy::Allow)?;
    let coupled = small.coupled();
    let n = small.xgrid.len();
    let mut assembly = 0.0f64;
    for r in 0..coupled.dim() {
        for c in 0..coupled.dim() {
            let (l, i, j, p) = (r / n, r % n, c / n, c % n);
            let mut expected = if i == p { small.q.entry(l, j) } else { 0.0 };
            if l == j {
                expected += small.lambdas[l].entry(i, p);
            }
            assembly = assembly.max((coupled.entry(r, c) - expected).abs());
        }
    }
    suite.bound(format!("coupled assembly, {tag}"), assembly, 0.0);
    Ok(())
}

/// Row sums, nonnegativity and moment matching of the chains.
pub fn generator_suite() -> Vec<CheckOutcome> {
    let mut suite = Suite::new("generator");
    for family in [
        ModelFamily::RoughHeston,
        ModelFamily::RoughSabr,
        ModelFamily::RoughQuadraticSlv,
    ] {
        let result = generator_checks(&mut suite, family);
        if result.is_err() {
            suite.outcome(format!("build, {}", family.name()), result);
        }
    }
    suite.outcomes
}

fn matexp_checks(suite: &mut Suite) -> Result<()> {
    let gens = standard_generators(
        ModelFamily::RoughHeston,
        1e-8,
        100,
        NegativeRatePolicy::Upwind,
    )?;
    let q = gens.q.to_dense();
    let cap = q.nrows();

    let one = expm_dense(&q, 1.0, cap)?;
    let conservation = one
        .row_iter()
        .map(|r| (r.sum() - 1.0).abs())
        .fold(0.0, f64::max);
    suite.bound("dense exp(Q) row sums", conservation, 1e-10);
    let negative = one.iter().copied().fold(0.0f64, f64::min);
    suite.bound("dense exp(Q) positivity", (-negative).max(0.0), 1e-12);

    let half = expm_dense(&q, 0.4, cap)?;
    let rest = expm_dense(&q, 0.6, cap)?;
    let semigroup = (&half * &rest - &one).amax();
    suite.bound(
        "dense semigroup exp(0.4Q) exp(0.6Q) = exp(Q)",
        semigroup,
        1e-10,
    );

    let lam = &gens.lambdas[gens.vgrid.anchor_index()];
    let ones = vec![1.0; lam.dim()];
    for method in [
        ExpmMethod::Contour,
        ExpmMethod::Uniformization,
        ExpmMethod::DenseScalingSquaring,
    ] {
        let options = ExpmOptions {
            method: Some(method),
            tol: 1e-12,
            uniformization_budget: 1e7,
            ..ExpmOptions::default()
        };
        let (out, _) = expm_action(lam, &ones, 1.0, &options)?;
        let drift = out.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max);
        suite.bound(
            format!("{method:?} action preserves constants"),
            drift,
            1e-10,
        );
    }

    let probe: Vec<f64> = (0..lam.dim())
        .map(|i| ((i as f64) * 0.1).sin().abs())
        .collect();
    let dense = expm_action(
        lam,
        &probe,
        1.0,
        &ExpmOptions {
            method: Some(ExpmMethod::DenseScalingSquaring),
            ..ExpmOptions::default()
        },
    )?
    .0;
    let contour = expm_action(
        lam,
        &probe,
        1.0,
        &ExpmOptions {
            method: Some(ExpmMethod::Contour),
            ..ExpmOptions::default()
        },
    )?
    .0;
    let gap = dense
        .iter()
        .zip(&contour)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    suite.bound("contour agrees with dense", gap, 1e-9);
    let lowest = contour.iter().copied().fold(f64::INFINITY, f64::min);
    suite.bound("contour action positivity", (-lowest).max(0.0), 1e-10);
    Ok(())
}

/// Conservation, positivity and semigroup properties of the exponentials.
pub fn matexp_suite() -> Vec<CheckOutcome> {
    let mut suite = Suite::new("matexp");
    let result = matexp_checks(&mut suite);
    if result.is_err() {
        suite.outcome("matexp setup", result);
    }
    suite.outcomes
}

pub fn run_selfcheck() -> SelfcheckReport {
    let start = Instant::now();
    let mut outcomes = kernel_suite();
    outcomes.extend(generator_suite());
    outcomes.extend(matexp_suite());
    SelfcheckReport {
        outcomes,
        seconds: start.elapsed().as_secs_f64(),
    }
}

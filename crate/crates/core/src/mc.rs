//! Monte Carlo for the Volterra variance equation and the asset.
//!
//! The variance is advanced with a kernel-integrated Euler scheme on the
//! grid `t_k = kΔ`:
//!
//! ```text
//! V_k = V0 + Σ_{j<k} [ w(k-j) b(V_j⁺) + k̄(k-j) σ(V_j⁺) ΔB_j ]
//! ```
//!
//! with `w(m) = ∫ K` over the lag interval `[(m-1)Δ, mΔ]` (shifted by `ε` for
//! the perturbed kernel) and `k̄(m) = sqrt(∫ K² / Δ)`, so that `k̄ ΔB` has the
//! exact conditional variance of the stochastic integral over the cell.
//!
//! Paths use ChaCha8 streams indexed by the path number, so results do not
//! depend on the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::grids::LOWER_FACTOR;
use crate::kernel::{Hurst, KernelSpec};
use crate::models::{MarketParams, ModelFamily, ModelSpec};
use crate::pricing::OptionSpec;

/// Kernel of the variance equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VolterraKernel {
    /// `(t-s)^{H-1/2} / Γ(H+1/2)`.
    Rough(Hurst),
    /// `(t+ε-s)^{H-1/2} / Γ(H+1/2)`.
    Perturbed(KernelSpec),
}

impl VolterraKernel {
    fn hurst(&self) -> f64 {
        match self {
            VolterraKernel::Rough(h) => h.value(),
            VolterraKernel::Perturbed(spec) => spec.hurst().value(),
        }
    }

    fn shift(&self) -> f64 {
        match self {
            VolterraKernel::Rough(_) => 0.0,
            VolterraKernel::Perturbed(spec) => spec.eps(),
        }
    }

    /// Drift and noise weights for lags `m = 1..=steps`.
    pub fn weights(&self, step: f64, steps: usize) -> KernelWeights {
        let h = self.hurst();
        let shift = self.shift();
        let norm = gamma(h + 0.5);
        let drift_norm = gamma(h + 1.5);
        let mut drift = Vec::with_capacity(steps);
        let mut noise = Vec::with_capacity(steps);
        for m in 1..=steps {
            let lo = (m - 1) as f64 * step + shift;
            let hi = m as f64 * step + shift;
            drift.push((hi.powf(h + 0.5) - lo.powf(h + 0.5)) / drift_norm);
            let square = (hi.powf(2.0 * h) - lo.powf(2.0 * h)) / (2.0 * h * norm * norm);
            noise.push((square / step).sqrt());
        }
        KernelWeights { drift, noise }
    }
}

/// Per-lag weights; index `m - 1` holds lag `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelWeights {
    pub drift: Vec<f64>,
    pub noise: Vec<f64>,
}

/// Drift and diffusion of the variance equation.
pub trait VarianceDynamics: Sync {
    fn drift(&self, v: f64) -> f64;
    fn diffusion(&self, v: f64) -> f64;
    /// State at which coefficients are evaluated (full truncation).
    fn truncate(&self, v: f64) -> f64;
}

impl VarianceDynamics for ModelSpec {
    fn drift(&self, v: f64) -> f64 {
        self.variance_drift(v)
    }

    fn diffusion(&self, v: f64) -> f64 {
        self.variance_vol(v)
    }

    fn truncate(&self, v: f64) -> f64 {
        self.truncate_variance(v)
    }
}

/// `b(v) = level + slope·v`, `σ(v) = noise`: a Gaussian Volterra process,
/// deterministic when `noise = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineDynamics {
    pub level: f64,
    pub slope: f64,
    pub noise: f64,
}

impl VarianceDynamics for AffineDynamics {
    fn drift(&self, v: f64) -> f64 {
        self.level + self.slope * v
    }

    fn diffusion(&self, _v: f64) -> f64 {
        self.noise
    }

    fn truncate(&self, v: f64) -> f64 {
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    KernelIntegratedEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub paths: usize,
    /// Time steps per unit of time.
    pub steps: usize,
    pub seed: u64,
    #[serde(default)]
    pub antithetic: bool,
    #[serde(default)]
    pub scheme: Scheme,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            paths: 100_000,
            steps: 256,
            seed: 20_240_601,
            antithetic: true,
            scheme: Scheme::KernelIntegratedEuler,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 {
            return Err(Error::invalid("paths", "need at least one path"));
        }
        if self.steps == 0 {
            return Err(Error::invalid(
                "steps",
                "need at least one step per unit time",
            ));
        }
        if self.antithetic && self.paths % 2 != 0 {
            return Err(Error::invalid(
                "paths",
                "antithetic sampling needs an even path count",
            ));
        }
        Ok(())
    }

    /// Number of steps on `[0, horizon]`.
    pub fn step_count(&self, horizon: f64) -> usize {
        ((self.steps as f64 * horizon).ceil() as usize).max(1)
    }

    /// Independent draws: pairs in antithetic mode, paths otherwise.
    fn draws(&self) -> usize {
        if self.antithetic {
            self.paths / 2
        } else {
            self.paths
        }
    }
}

/// Standard normals for draw `index`, two per step (variance then asset).
fn normals(seed: u64, index: usize, steps: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    (0..2 * steps)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect()
}

/// One variance path `V_0..V_n` from the Brownian increments `dB`.
fn volterra_path(
    dynamics: &impl VarianceDynamics,
    v0: f64,
    weights: &KernelWeights,
    db: &[f64],
    out: &mut Vec<f64>,
) {
    let steps = db.len();
    out.clear();
    out.push(v0);
    let mut drift_terms = Vec::with_capacity(steps);
    let mut noise_terms = Vec::with_capacity(steps);
    for k in 1..=steps {
        let vk = dynamics.truncate(out[k - 1]);
        drift_terms.push(dynamics.drift(vk));
        noise_terms.push(dynamics.diffusion(vk) * db[k - 1]);
        let mut sum = 0.0;
        for j in 0..k {
            let lag = k - j - 1;
            sum += weights.drift[lag] * drift_terms[j] + weights.noise[lag] * noise_terms[j];
        }
        out.push(v0 + sum);
    }
}

/// Simulated variance paths on `t_k = k·horizon/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariancePaths {
    pub times: Vec<f64>,
    /// `values[p][k]` is path `p` at `t_k`.
    pub values: Vec<Vec<f64>>,
}

/// Variance paths for `mc.paths` paths; antithetic pairs are adjacent.
pub fn simulate_v(
    dynamics: &impl VarianceDynamics,
    kernel: VolterraKernel,
    market: &MarketParams,
    mc: &McConfig,
    horizon: f64,
) -> Result<VariancePaths> {
    mc.validate()?;
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::invalid("horizon", "must be finite and > 0"));
    }
    let steps = mc.step_count(horizon);
    let dt = horizon / steps as f64;
    let weights = kernel.weights(dt, steps);
    let root_dt = dt.sqrt();
    let values: Vec<Vec<f64>> = (0..mc.draws())
        .into_par_iter()
        .flat_map_iter(|draw| {
            let z = normals(mc.seed, draw, steps);
            let signs: &[f64] = if mc.antithetic { &[1.0, -1.0] } else { &[1.0] };
            signs
                .iter()
                .map(|&sign| {
                    let db: Vec<f64> = z[..steps].iter().map(|x| sign * x * root_dt).collect();
                    let mut path = Vec::with_capacity(steps + 1);
                    volterra_path(dynamics, market.v0, &weights, &db, &mut path);
                    path
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(VariancePaths {
        times: (0..=steps).map(|k| k as f64 * dt).collect(),
        values,
    })
}

/// Mean, standard error and run settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub paths: usize,
    pub seed: u64,
}

/// Order-independent sum for reproducible reductions.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let (left, right) = values.split_at(values.len() / 2);
    pairwise_sum(left) + pairwise_sum(right)
}

fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = pairwise_sum(samples) / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let squares: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
    let variance = pairwise_sum(&squares) / (n - 1.0);
    (mean, (variance / n).sqrt())
}

/// Variance at which `φ` is evaluated: truncated, and for the 4/2 family kept
/// above the lower end of the chain's variance grid, where `φ` is finite.
fn vol_state(model: &ModelSpec, market: &MarketParams, v: f64) -> f64 {
    let v = model.truncate_variance(v);
    match model.family() {
        ModelFamily::RoughFourTwo => v.max(LOWER_FACTOR * market.v0),
        _ => v,
    }
}

/// Terminal asset level along one path.
fn asset_path(
    model: &ModelSpec,
    market: &MarketParams,
    variance: &[f64],
    db: &[f64],
    dz: &[f64],
    dt: f64,
) -> f64 {
    let rho = market.rho;
    let orth = (1.0 - rho * rho).sqrt();
    let log_euler = matches!(
        model.family(),
        ModelFamily::RoughHeston | ModelFamily::RoughFourTwo | ModelFamily::RoughAlphaHyper
    );
    if log_euler {
        let carry = model.asset_drift(1.0, 0.0);
        let mut log_s = market.s0.ln();
        for k in 0..db.len() {
            let phi = model.vol_factor(vol_state(model, market, variance[k]));
            let dw = rho * db[k] + orth * dz[k];
            log_s += (carry - 0.5 * phi * phi) * dt + phi * dw;
        }
        return log_s.exp();
    }
    let mut s = market.s0;
    for k in 0..db.len() {
        if s <= 0.0 {
            return 0.0;
        }
        let phi = model.vol_factor(vol_state(model, market, variance[k]));
        let dw = rho * db[k] + orth * dz[k];
        s += model.asset_drift(s, variance[k]) * dt + model.local_vol(s) * phi * dw;
    }
    s.max(0.0)
}

/// Discounted payoff mean of a European or terminal-barrier option.
pub fn mc_price(
    option: &OptionSpec,
    model: &ModelSpec,
    market: &MarketParams,
    kernel: VolterraKernel,
    mc: &McConfig,
) -> Result<McEstimate> {
    option.validate()?;
    mc.validate()?;
    market.validate(model)?;
    if option.exercise_dates.is_some() {
        return Err(Error::invalid(
            "exercise_dates",
            "Monte Carlo prices European payoffs only",
        ));
    }
    if option.rate != model.params().rate {
        return Err(Error::invalid(
            "rate",
            "discount rate differs from the model drift rate",
        ));
    }
    let horizon = option.maturity;
    let steps = mc.step_count(horizon);
    let dt = horizon / steps as f64;
    let root_dt = dt.sqrt();
    let weights = kernel.weights(dt, steps);
    let discount = (-option.rate * horizon).exp();
    let samples: Vec<f64> = (0..mc.draws())
        .into_par_iter()
        .map(|draw| {
            let z = normals(mc.seed, draw, steps);
            let signs: &[f64] = if mc.antithetic { &[1.0, -1.0] } else { &[1.0] };
            let mut variance = Vec::with_capacity(steps + 1);
            let total: f64 = signs
                .iter()
                .map(|&sign| {
                    let db: Vec<f64> = z[..steps].iter().map(|x| sign * x * root_dt).collect();
                    let dz: Vec<f64> = z[steps..].iter().map(|x| sign * x * root_dt).collect();
                    volterra_path(model, market.v0, &weights, &db, &mut variance);
                    option.payoff(asset_path(model, market, &variance, &db, &dz, dt))
                })
                .sum();
            discount * total / signs.len() as f64
        })
        .collect();
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(
            "Monte Carlo produced non-finite payoffs".into(),
        ));
    }
    let (estimate, stderr) = mean_and_stderr(&samples);
    Ok(McEstimate {
        estimate,
        stderr,
        paths: mc.paths,
        seed: mc.seed,
    })
}

/// `E|V^a_T - V^b_T|²` for each approximating kernel against `reference`,
/// all driven by the same Brownian increments.
pub fn l2_gaps(
    dynamics: &impl VarianceDynamics,
    reference: VolterraKernel,
    approximations: &[VolterraKernel],
    market: &MarketParams,
    mc: &McConfig,
    horizon: f64,
) -> Result<Vec<f64>> {
    mc.validate()?;
    let steps = mc.step_count(horizon);
    let dt = horizon / steps as f64;
    let root_dt = dt.sqrt();
    let base = reference.weights(dt, steps);
    let others: Vec<KernelWeights> = approximations
        .iter()
        .map(|k| k.weights(dt, steps))
        .collect();
    let per_draw: Vec<Vec<f64>> = (0..mc.draws())
        .into_par_iter()
        .map(|draw| {
            let z = normals(mc.seed, draw, steps);
            let signs: &[f64] = if mc.antithetic { &[1.0, -1.0] } else { &[1.0] };
            let mut gaps = vec![0.0; others.len()];
            let mut reference_path = Vec::with_capacity(steps + 1);
            let mut path = Vec::with_capacity(steps + 1);
            for &sign in signs {
                let db: Vec<f64> = z[..steps].iter().map(|x| sign * x * root_dt).collect();
                volterra_path(dynamics, market.v0, &base, &db, &mut reference_path);
                for (gap, w) in gaps.iter_mut().zip(&others) {
                    volterra_path(dynamics, market.v0, w, &db, &mut path);
                    let d = path[steps] - reference_path[steps];
                    *gap += d * d / signs.len() as f64;
                }
            }
            gaps
        })
        .collect();
    Ok((0..others.len())
        .map(|i| {
            let column: Vec<f64> = per_draw.iter().map(|g| g[i]).collect();
            pairwise_sum(&column) / column.len() as f64
        })
        .collect())
}

/// Fitted slope of `log E|V^ε_T - V_T|²` against `log ε`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct L2Rate {
    pub slope: f64,
    /// `(ε, gap)` pairs.
    pub points: Vec<(f64, f64)>,
}

/// Least-squares slope of `log y` on `log x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Result<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.0 > 0.0 && p.1 > 0.0)
        .map(|p| (p.0.ln(), p.1.ln()))
        .collect();
    if logs.len() < 2 {
        return Err(Error::Numerical(
            "need two positive points to fit a slope".into(),
        ));
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(sxy / sxx)
}

/// L² gap between the perturbed and rough variance at `horizon` for each `ε`,
/// and the fitted log-log slope.
pub fn estimate_l2_rate(
    eps_list: &[f64],
    model: &ModelSpec,
    market: &MarketParams,
    hurst: Hurst,
    mc: &McConfig,
    horizon: f64,
) -> Result<L2Rate> {
    let kernels = eps_list
        .iter()
        .map(|&eps| KernelSpec::new(hurst.value(), eps).map(VolterraKernel::Perturbed))
        .collect::<Result<Vec<_>>>()?;
    let gaps = l2_gaps(
        model,
        VolterraKernel::Rough(hurst),
        &kernels,
        market,
        mc,
        horizon,
    )?;
    let points: Vec<(f64, f64)> = eps_list.iter().copied().zip(gaps).collect();
    Ok(L2Rate {
        slope: log_log_slope(&points)?,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelParams;

    fn heston() -> ModelSpec {
        ModelSpec::new(ModelFamily::RoughHeston, ModelParams::default()).unwrap()
    }

    #[test]
    fn unit_kernel_weights() {
        let w = VolterraKernel::Rough(Hurst::new(0.5).unwrap()).weights(0.01, 4);
        for (d, n) in w.drift.iter().zip(&w.noise) {
            assert!((d - 0.01).abs() < 1e-15);
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_drift_matches_closed_form() {
        let h = 0.12;
        let kernel = VolterraKernel::Rough(Hurst::new(h).unwrap());
        let dynamics = AffineDynamics {
            level: 0.3,
            slope: 0.0,
            noise: 0.0,
        };
        let mc = McConfig {
            paths: 1,
            steps: 512,
            seed: 1,
            antithetic: false,
            scheme: Scheme::default(),
        };
        let market = MarketParams::default();
        let paths = simulate_v(&dynamics, kernel, &market, &mc, 1.0).unwrap();
        let exact = market.v0 + 0.3 / gamma(h + 1.5);
        let last = *paths.values[0].last().unwrap();
        assert!((last - exact).abs() < 1e-12 * exact);
    }

    #[test]
    fn reproducible_and_seed_sensitive() {
        let mc = McConfig {
            paths: 200,
            steps: 32,
            seed: 7,
            antithetic: true,
            scheme: Scheme::default(),
        };
        let option = OptionSpec::european(crate::pricing::PayoffKind::Call, 10.0, 1.0, 0.0);
        let kernel = VolterraKernel::Rough(Hurst::new(0.12).unwrap());
        let a = mc_price(&option, &heston(), &MarketParams::default(), kernel, &mc).unwrap();
        let b = mc_price(&option, &heston(), &MarketParams::default(), kernel, &mc).unwrap();
        assert_eq!(a, b);
        let c = mc_price(
            &option,
            &heston(),
            &MarketParams::default(),
            kernel,
            &McConfig { seed: 8, ..mc },
        )
        .unwrap();
        assert_ne!(a.estimate, c.estimate);
    }

    #[test]
    fn identical_kernels_have_zero_gap() {
        let mc = McConfig {
            paths: 20,
            steps: 16,
            seed: 3,
            antithetic: false,
            scheme: Scheme::default(),
        };
        let k = VolterraKernel::Perturbed(KernelSpec::new(0.12, 1e-3).unwrap());
        let gaps = l2_gaps(&heston(), k, &[k], &MarketParams::default(), &mc, 1.0).unwrap();
        assert_eq!(gaps, vec![0.0]);
    }

    #[test]
    fn gaussian_gap_matches_weight_distance() {
        // With constant noise and no drift the gap is Σ (k̄ε - k̄)² Δ · noise².
        let noise = 0.5;
        let dynamics = AffineDynamics {
            level: 0.0,
            slope: 0.0,
            noise,
        };
        let rough = VolterraKernel::Rough(Hurst::new(0.12).unwrap());
        let pert = VolterraKernel::Perturbed(KernelSpec::new(0.12, 1e-2).unwrap());
        let mc = McConfig {
            paths: 4000,
            steps: 64,
            seed: 11,
            antithetic: false,
            scheme: Scheme::default(),
        };
        let gap = l2_gaps(
            &dynamics,
            rough,
            &[pert],
            &MarketParams::default(),
            &mc,
            1.0,
        )
        .unwrap()[0];
        let dt = 1.0 / 64.0;
        let (a, b) = (rough.weights(dt, 64), pert.weights(dt, 64));
        let exact: f64 = a
            .noise
            .iter()
            .zip(&b.noise)
            .map(|(x, y)| (x - y).powi(2) * dt)
            .sum::<f64>()
            * noise
            * noise;
        // Relative sampling error of a chi-square mean with 4000 draws is about 2.2%.
        assert!((gap - exact).abs() < 0.08 * exact, "{gap} vs {exact}");
    }

    #[test]
    fn slope_of_power_law() {
        let points: Vec<(f64, f64)> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&e: &f64| (e, 3.0 * e.powf(0.62)))
            .collect();
        assert!((log_log_slope(&points).unwrap() - 0.62).abs() < 1e-12);
    }
}

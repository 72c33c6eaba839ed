//! Coefficient functions of the six rough stochastic local volatility families.
//!
//! The asset follows `dS = μ(S,V) dt + ν(S) φ(V) dW` and the variance state
//! follows a Volterra equation driven by `b(V) dt + σ(V) dB` with
//! `d⟨W, B⟩ = ρ dt`. Decorrelation uses `X = g(S) - ρ f(V)` with
//! `g' = 1/ν` and `f' = φ / (K^ε σ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::LaplaceConstants;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelFamily {
    #[serde(rename = "rough-heston")]
    RoughHeston,
    #[serde(rename = "rough-42")]
    RoughFourTwo,
    #[serde(rename = "rough-alpha-hyper")]
    RoughAlphaHyper,
    #[serde(rename = "rough-sabr")]
    RoughSabr,
    #[serde(rename = "rough-heston-sabr")]
    RoughHestonSabr,
    #[serde(rename = "rough-quadratic-slv")]
    RoughQuadraticSlv,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 6] = [
        ModelFamily::RoughHeston,
        ModelFamily::RoughFourTwo,
        ModelFamily::RoughAlphaHyper,
        ModelFamily::RoughSabr,
        ModelFamily::RoughHestonSabr,
        ModelFamily::RoughQuadraticSlv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::RoughHeston => "rough-heston",
            ModelFamily::RoughFourTwo => "rough-42",
            ModelFamily::RoughAlphaHyper => "rough-alpha-hyper",
            ModelFamily::RoughSabr => "rough-sabr",
            ModelFamily::RoughHestonSabr => "rough-heston-sabr",
            ModelFamily::RoughQuadraticSlv => "rough-quadratic-slv",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| Error::invalid("model", format!("unknown model `{name}`")))
    }

    /// Families whose variance state follows the square-root (Heston) dynamics.
    fn has_heston_variance(self) -> bool {
        matches!(
            self,
            ModelFamily::RoughHeston
                | ModelFamily::RoughFourTwo
                | ModelFamily::RoughHestonSabr
                | ModelFamily::RoughQuadraticSlv
        )
    }
}

/// Model parameters. `coef_a`, `coef_b`, `coef_c` are the family-specific
/// shape constants (4/2 weights, α-hypergeometric exponent, quadratic local
/// volatility coefficients); they are kept apart from the drift `b(v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    pub rate: f64,
    pub dividend: f64,
    /// Mean-reversion speed η.
    pub reversion: f64,
    /// Long-run level ϑ.
    pub long_run: f64,
    /// Volatility of variance σ.
    pub vol_of_vol: f64,
    #[serde(rename = "a")]
    pub coef_a: f64,
    #[serde(rename = "b")]
    pub coef_b: f64,
    #[serde(rename = "c")]
    pub coef_c: f64,
    /// CEV elasticity β of the SABR variants.
    pub beta: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            rate: 0.0,
            dividend: 0.0,
            reversion: 4.0,
            long_run: 0.035,
            vol_of_vol: 0.8,
            coef_a: 0.02,
            coef_b: 0.05,
            coef_c: 1.0,
            beta: 0.7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarketParams {
    pub s0: f64,
    pub v0: f64,
    pub rho: f64,
}

impl Default for MarketParams {
    fn default() -> Self {
        Self {
            s0: 10.0,
            v0: 0.04,
            rho: -0.75,
        }
    }
}

impl MarketParams {
    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        if !(self.s0 > 0.0 && self.s0.is_finite()) {
            return Err(Error::invalid("s0", "initial asset price must be positive"));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::invalid("rho", "correlation must lie in (-1, 1)"));
        }
        let (lo, hi) = model.variance_domain();
        if !(self.v0 > lo && self.v0 < hi) {
            return Err(Error::invalid(
                "v0",
                format!(
                    "{} is outside the variance domain of {}",
                    self.v0,
                    model.family.name()
                ),
            ));
        }
        Ok(())
    }
}

/// Which form of the auxiliary drift to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaForm {
    /// `-(ρ/2) K^ε (σφ' - σ'φ)`, from the Itô expansion of `g(S) - ρ f(V)`.
    #[default]
    ItoExpansion,
    /// `+(ρ/2) (σφ' - σ'φ)` without the kernel factor.
    Unscaled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    family: ModelFamily,
    params: ModelParams,
    /// Additive constant in `g`; prices do not depend on it.
    g_offset: f64,
}

impl ModelSpec {
    pub fn new(family: ModelFamily, params: ModelParams) -> Result<Self> {
        let p = &params;
        let finite = [
            p.rate,
            p.dividend,
            p.reversion,
            p.long_run,
            p.vol_of_vol,
            p.coef_a,
            p.coef_b,
            p.coef_c,
            p.beta,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("params", "all parameters must be finite"));
        }
        if !(p.vol_of_vol > 0.0) {
            return Err(Error::invalid("sigma", "vol of vol must be positive"));
        }
        match family {
            ModelFamily::RoughSabr | ModelFamily::RoughHestonSabr => {
                if !(0.0..1.0).contains(&p.beta) {
                    return Err(Error::invalid("beta", "elasticity must lie in [0, 1)"));
                }
            }
            ModelFamily::RoughQuadraticSlv => {
                if !(4.0 * p.coef_a * p.coef_c > p.coef_b * p.coef_b) {
                    return Err(Error::invalid(
                        "a, b, c",
                        "quadratic local volatility needs 4ac > b^2",
                    ));
                }
                if !(p.coef_a > 0.0 && p.reversion > 0.0 && p.long_run > 0.0) {
                    return Err(Error::invalid(
                        "a, eta, theta",
                        "must be positive for quadratic SLV",
                    ));
                }
            }
            ModelFamily::RoughAlphaHyper => {
                if !(p.long_run > 0.0 && p.coef_a > 0.0) {
                    return Err(Error::invalid(
                        "theta, a",
                        "must be positive for the alpha-hypergeometric model",
                    ));
                }
            }
            ModelFamily::RoughFourTwo => {
                if p.coef_a < 0.0 || p.coef_b < 0.0 || p.coef_a + p.coef_b == 0.0 {
                    return Err(Error::invalid(
                        "a, b",
                        "4/2 weights must be nonnegative and not both zero",
                    ));
                }
            }
            ModelFamily::RoughHeston => {}
        }
        Ok(Self {
            family,
            params,
            g_offset: 0.0,
        })
    }

    /// The same model with `g` shifted by a constant.
    pub fn with_g_offset(mut self, offset: f64) -> Self {
        self.g_offset = offset;
        self
    }

    pub fn family(&self) -> ModelFamily {
        self.family
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    fn carry(&self) -> f64 {
        self.params.rate - self.params.dividend
    }

    fn quadratic_discriminant(&self) -> f64 {
        let p = &self.params;
        (4.0 * p.coef_a * p.coef_c - p.coef_b * p.coef_b).sqrt()
    }

    /// Open interval of admissible variance states.
    pub fn variance_domain(&self) -> (f64, f64) {
        match self.family {
            ModelFamily::RoughAlphaHyper => (f64::NEG_INFINITY, f64::INFINITY),
            _ => (0.0, f64::INFINITY),
        }
    }

    /// Full truncation of the variance state for Monte Carlo.
    pub fn truncate_variance(&self, v: f64) -> f64 {
        match self.family {
            ModelFamily::RoughAlphaHyper => v,
            _ => v.max(0.0),
        }
    }

    /// μ(s, v).
    pub fn asset_drift(&self, s: f64, _v: f64) -> f64 {
        match self.family {
            ModelFamily::RoughSabr => 0.0,
            _ => self.carry() * s,
        }
    }

    /// ν(s).
    pub fn local_vol(&self, s: f64) -> f64 {
        let p = &self.params;
        match self.family {
            ModelFamily::RoughHeston | ModelFamily::RoughFourTwo | ModelFamily::RoughAlphaHyper => {
                s
            }
            ModelFamily::RoughSabr | ModelFamily::RoughHestonSabr => s.powf(p.beta),
            ModelFamily::RoughQuadraticSlv => (p.coef_a * s + p.coef_b) * s + p.coef_c,
        }
    }

    /// ν'(s).
    pub fn local_vol_slope(&self, s: f64) -> f64 {
        let p = &self.params;
        match self.family {
            ModelFamily::RoughHeston | ModelFamily::RoughFourTwo | ModelFamily::RoughAlphaHyper => {
                1.0
            }
            ModelFamily::RoughSabr | ModelFamily::RoughHestonSabr => p.beta * s.powf(p.beta - 1.0),
            ModelFamily::RoughQuadraticSlv => 2.0 * p.coef_a * s + p.coef_b,
        }
    }

    /// φ(v).
    pub fn vol_factor(&self, v: f64) -> f64 {
        let p = &self.params;
        match self.family {
            ModelFamily::RoughFourTwo => p.coef_a * v.sqrt() + p.coef_b / v.sqrt(),
            ModelFamily::RoughAlphaHyper => v.exp(),
            ModelFamily::RoughSabr => v,
            _ => v.sqrt(),
        }
    }

    /// φ'(v).
    pub fn vol_factor_slope(&self, v: f64) -> f64 {
        let p = &self.params;
        match self.family {
            ModelFamily::RoughFourTwo => {
                0.5 * p.coef_a / v.sqrt() - 0.5 * p.coef_b / (v * v.sqrt())
            }
            ModelFamily::RoughAlphaHyper => v.exp(),
            ModelFamily::RoughSabr => 1.0,
            _ => 0.5 / v.sqrt(),
        }
    }

    /// b(v), the drift of the variance equation.
    pub fn variance_drift(&self, v: f64) -> f64 {
        let p = &self.params;
        match self.family {
            ModelFamily::RoughSabr => 0.0,
            ModelFamily::RoughAlphaHyper => p.reversion - p.long_run * (p.coef_a * v).exp(),
            _ => p.reversion * (p.long_run - v),
        }
    }

    /// σ(v), the diffusion of the variance equation.
    pub fn variance_vol(&self, v: f64) -> f64 {
        let sigma = self.params.vol_of_vol;
        match self.family {
            ModelFamily::RoughAlphaHyper => sigma,
            ModelFamily::RoughSabr => sigma * v,
            _ => sigma * v.sqrt(),
        }
    }

    /// σ'(v).
    pub fn variance_vol_slope(&self, v: f64) -> f64 {
        let sigma = self.params.vol_of_vol;
        match self.family {
            ModelFamily::RoughAlphaHyper => 0.0,
            ModelFamily::RoughSabr => sigma,
            _ => 0.5 * sigma / v.sqrt(),
        }
    }

    /// g(s), with the integration constant fixed per family.
    pub fn transform_g(&self, s: f64) -> Result<f64> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::Domain {
                function: "g",
                value: s,
            });
        }
        let p = &self.params;
        let base = match self.family {
            ModelFamily::RoughHeston | ModelFamily::RoughFourTwo | ModelFamily::RoughAlphaHyper => {
                s.ln()
            }
            ModelFamily::RoughSabr | ModelFamily::RoughHestonSabr => {
                s.powf(1.0 - p.beta) / (1.0 - p.beta)
            }
            ModelFamily::RoughQuadraticSlv => {
                let d = self.quadratic_discriminant();
                2.0 * ((2.0 * p.coef_a * s + p.coef_b) / d).atan() / d
            }
        };
        Ok(base + self.g_offset)
    }

    /// Open interval of `x` values that `g⁻¹` maps onto positive prices.
    pub fn g_inverse_domain(&self) -> (f64, f64) {
        let p = &self.params;
        let (lo, hi) = match self.family {
            ModelFamily::RoughHeston | ModelFamily::RoughFourTwo | ModelFamily::RoughAlphaHyper => {
                (f64::NEG_INFINITY, f64::INFINITY)
            }
            ModelFamily::RoughSabr | ModelFamily::RoughHestonSabr => (0.0, f64::INFINITY),
            ModelFamily::RoughQuadraticSlv => {
                let d = self.quadratic_discriminant();
                (2.0 * (p.coef_b / d).atan() / d, std::f64::consts::PI / d)
            }
        };
        (lo + self.g_offset, hi + self.g_offset)
    }

    /// g⁻¹(x). Outside [`Self::g_inverse_domain`] the closed form would return
    /// a wrong branch (the quadratic case is periodic), so it is rejected.
    pub fn g_inverse(&self, x: f64) -> Result<f64> {
        let (lo, hi) = self.g_inverse_domain();
        if !(x > lo && x < hi) {
            return Err(Error::Domain {
                function: "g^-1",
                value: x,
            });
        }
        let x = x - self.g_offset;
        let p = &self.params;
        Ok(match self.family {
            ModelFamily::RoughHeston | ModelFamily::RoughFourTwo | ModelFamily::RoughAlphaHyper => {
                x.exp()
            }
            ModelFamily::RoughSabr | ModelFamily::RoughHestonSabr => {
                ((1.0 - p.beta) * x).powf(1.0 / (1.0 - p.beta))
            }
            ModelFamily::RoughQuadraticSlv => {
                let d = self.quadratic_discriminant();
                (d * (0.5 * x * d).tan() - p.coef_b) / (2.0 * p.coef_a)
            }
        })
    }

    /// f(v) for a given `K^ε`.
    pub fn transform_f(&self, v: f64, k_eps: f64) -> Result<f64> {
        let (lo, hi) = self.variance_domain();
        if !(v > lo && v < hi) {
            return Err(Error::Domain {
                function: "f",
                value: v,
            });
        }
        let p = &self.params;
        let scale = k_eps * p.vol_of_vol;
        Ok(match self.family {
            ModelFamily::RoughFourTwo => (p.coef_a * v + p.coef_b * v.ln()) / scale,
            ModelFamily::RoughAlphaHyper => v.exp() / scale,
            _ => v / scale,
        })
    }

    /// Asset level `g⁻¹(x + ρ f(v))` represented by the chain state `(x, v)`.
    pub fn reconstruct_asset(&self, x: f64, v: f64, rho: f64, k_eps: f64) -> Result<f64> {
        self.g_inverse(x + rho * self.transform_f(v, k_eps)?)
    }

    /// Drift θ of the auxiliary process at chain state `(x, v)`.
    ///
    /// The Volterra memory term `∫ γ V^γ m(dγ)` is represented on the grid by
    /// `(v - V0) R̂`.
    pub fn drift_theta(
        &self,
        x: f64,
        v: f64,
        market: &MarketParams,
        consts: &LaplaceConstants,
        form: ThetaForm,
    ) -> Result<f64> {
        let rho = market.rho;
        let k_eps = consts.k_eps;
        let s = self.reconstruct_asset(x, v, rho, k_eps)?;
        let local = self.local_vol(s);
        let vol_v = self.variance_vol(v);
        if !(local > 0.0) || !(vol_v > 0.0) {
            return Err(Error::Domain {
                function: "theta (needs nu(s) > 0 and sigma(v) > 0)",
                value: if local > 0.0 { v } else { s },
            });
        }
        let phi = self.vol_factor(v);
        let ito = self.asset_drift(s, v) / local - 0.5 * self.local_vol_slope(s) * phi * phi;
        let wronskian = vol_v * self.vol_factor_slope(v) - self.variance_vol_slope(v) * phi;
        let cross = match form {
            ThetaForm::ItoExpansion => -0.5 * rho * k_eps * wronskian,
            ThetaForm::Unscaled => 0.5 * rho * wronskian,
        };
        let memory = (v - market.v0) * consts.r_hat + k_eps * self.variance_drift(v);
        Ok(ito + cross - rho * memory * phi / (k_eps * vol_v))
    }

    /// True when the state rectangle passes the positivity checks on ν, φ, σ.
    pub fn check_positivity(&self, v: f64, s: f64) -> Result<()> {
        if !(self.vol_factor(v) > 0.0) {
            return Err(Error::Domain {
                function: "phi (must be positive)",
                value: v,
            });
        }
        if !(self.variance_vol(v) > 0.0) {
            return Err(Error::Domain {
                function: "sigma(v) (must be positive)",
                value: v,
            });
        }
        if !(self.local_vol(s) > 0.0) {
            return Err(Error::Domain {
                function: "nu (must be positive)",
                value: s,
            });
        }
        Ok(())
    }

    /// Whether the variance state follows square-root dynamics.
    pub fn has_heston_variance(&self) -> bool {
        self.family.has_heston_variance()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use approx::assert_relative_eq;

    fn model(family: ModelFamily) -> ModelSpec {
        ModelSpec::new(family, ModelParams::default()).unwrap()
    }

    #[test]
    fn heston_coefficients_at_v0() {
        let m = model(ModelFamily::RoughHeston);
        assert_relative_eq!(m.vol_factor(0.04), 0.2, max_relative = 1e-15);
        assert_relative_eq!(m.variance_drift(0.04), -0.02, max_relative = 1e-12);
    }

    #[test]
    fn sabr_has_no_variance_drift() {
        let m = model(ModelFamily::RoughSabr);
        for v in [0.01, 0.04, 0.5] {
            assert_eq!(m.variance_drift(v), 0.0);
        }
    }

    #[test]
    fn quadratic_discriminant_accepted() {
        let m = model(ModelFamily::RoughQuadraticSlv);
        assert_relative_eq!(
            m.quadratic_discriminant().powi(2),
            0.0775,
            max_relative = 1e-12
        );
        let bad = ModelParams {
            coef_c: 0.01,
            ..ModelParams::default()
        };
        assert!(ModelSpec::new(ModelFamily::RoughQuadraticSlv, bad).is_err());
    }

    #[test]
    fn sabr_transform() {
        let m = model(ModelFamily::RoughSabr);
        assert_relative_eq!(
            m.transform_g(10.0).unwrap(),
            10f64.powf(0.3) / 0.3,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            m.g_inverse(m.transform_g(10.0).unwrap()).unwrap(),
            10.0,
            max_relative = 1e-13
        );
    }

    #[test]
    fn heston_f_matches_integral() {
        let m = model(ModelFamily::RoughHeston);
        let k_eps = KernelSpec::new(0.12, 1e-8).unwrap().constants().k_eps;
        let direct = m.transform_f(0.04, k_eps).unwrap();
        assert_relative_eq!(direct, 0.04 / (k_eps * 0.8), max_relative = 1e-15);
        // Simpson integration of φ/(K^ε σ) from the base point 0.
        let n = 2000;
        let h = 0.04 / n as f64;
        let integrand = |v: f64| 1.0 / (k_eps * 0.8) + 0.0 * v;
        let mut sum = integrand(0.0) + integrand(0.04);
        for i in 1..n {
            sum += integrand(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        assert_relative_eq!(sum * h / 3.0, direct, max_relative = 1e-12);
    }

    #[test]
    fn theta_without_correlation() {
        let m = model(ModelFamily::RoughHeston);
        let market = MarketParams {
            rho: 0.0,
            ..MarketParams::default()
        };
        let consts = KernelSpec::new(0.12, 1e-8).unwrap().constants();
        let theta = m
            .drift_theta(2.3, 0.07, &market, &consts, ThetaForm::ItoExpansion)
            .unwrap();
        assert_relative_eq!(theta, -0.035, max_relative = 1e-14);
    }

    #[test]
    fn heston_theta_at_v0_matches_reduced_form() {
        let m = model(ModelFamily::RoughHeston);
        let market = MarketParams::default();
        let consts = KernelSpec::new(0.12, 1e-8).unwrap().constants();
        let theta = m
            .drift_theta(2.0, 0.04, &market, &consts, ThetaForm::ItoExpansion)
            .unwrap();
        let expected = -0.02 - (-0.75) * 4.0 * (0.035 - 0.04) / 0.8;
        assert_relative_eq!(theta, expected, max_relative = 1e-12);
    }

    #[test]
    fn quadratic_inverse_rejects_wrong_branch() {
        let m = model(ModelFamily::RoughQuadraticSlv);
        let (lo, hi) = m.g_inverse_domain();
        assert!(m.g_inverse(hi + 0.1).is_err());
        assert!(m.g_inverse(lo - 0.1).is_err());
        assert_relative_eq!(
            m.g_inverse(m.transform_g(1e-6).unwrap()).unwrap(),
            1e-6,
            max_relative = 1e-6
        );
    }

    #[test]
    fn family_names_round_trip() {
        for f in ModelFamily::ALL {
            assert_eq!(ModelFamily::from_name(f.name()).unwrap(), f);
        }
        assert!(ModelFamily::from_name("rough-bergomi").is_err());
    }
}

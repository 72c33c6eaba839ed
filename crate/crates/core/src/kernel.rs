//! Fractional power kernel, its perturbed version, and the constants of the
//! exponential-mixture (Laplace) representation used by the variance chain.
//!
//! The mixing measure is `m(dγ) = γ^(-H-1/2) dγ / (Γ(H+1/2) Γ(1/2-H))`, for
//! which `∫ e^{-γu} m(dγ) = u^(H-1/2) / Γ(H+1/2)`.

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// Roughness exponent, restricted to `(0, 1/2]`.
///
/// The upper end is allowed so the Monte Carlo code can degenerate to the
/// constant kernel; chain construction requires the open interval.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Hurst(f64);

impl Hurst {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value <= 0.5 {
            Ok(Self(value))
        } else {
            Err(Error::invalid(
                "hurst",
                format!("{value} is outside (0, 1/2]"),
            ))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `Γ(H + 1/2)`, the normalisation shared by every kernel evaluation.
    pub fn kernel_norm(self) -> f64 {
        gamma(self.0 + 0.5)
    }
}

/// Hurst exponent and perturbation size of the smoothed kernel `K(t+ε, s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    hurst: Hurst,
    eps: f64,
}

/// `K^ε = ε^(H-1/2)/Γ(H+1/2)` and the variance-chain constants `R`, `R̂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceConstants {
    pub k_eps: f64,
    pub r: f64,
    pub r_hat: f64,
}

impl KernelSpec {
    pub fn new(hurst: f64, eps: f64) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 0.5) {
            return Err(Error::invalid(
                "hurst",
                format!("{hurst} is outside (0, 1/2)"),
            ));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::invalid(
                "eps",
                format!("{eps} must be positive and finite"),
            ));
        }
        let spec = Self {
            hurst: Hurst(hurst),
            eps,
        };
        let k_eps = spec.constants().k_eps;
        if !(k_eps.is_finite() && k_eps > 0.0) {
            return Err(Error::invalid(
                "eps",
                format!("K^eps overflows at eps = {eps}"),
            ));
        }
        Ok(spec)
    }

    pub fn hurst(&self) -> Hurst {
        self.hurst
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Closed forms of the three constants.
    ///
    /// `R` and `R̂` are Gamma integrals against `m`; see the quadrature module
    /// for the independent evaluation used in tests.
    pub fn constants(&self) -> LaplaceConstants {
        let h = self.hurst.value();
        let norm = self.hurst.kernel_norm();
        LaplaceConstants {
            k_eps: self.eps.powf(h - 0.5) / norm,
            r: (1.0 + self.eps).powf(h - 0.5) / norm,
            r_hat: -(0.5 - h) / (1.0 + self.eps),
        }
    }
}

/// `K(t, s) = (t-s)^(H-1/2)/Γ(H+1/2)` for `s < t`.
pub fn fractional_kernel(t: f64, s: f64, hurst: Hurst) -> Result<f64> {
    if !(s < t) {
        return Err(Error::Domain {
            function: "fractional_kernel (needs s < t)",
            value: s - t,
        });
    }
    let h = hurst.value();
    Ok((t - s).powf(h - 0.5) / hurst.kernel_norm())
}

/// `K(t+ε, s)` for `s <= t`; equals `K^ε` on the diagonal.
pub fn perturbed_kernel(t: f64, s: f64, spec: &KernelSpec) -> Result<f64> {
    if !(s <= t) {
        return Err(Error::Domain {
            function: "perturbed_kernel (needs s <= t)",
            value: s - t,
        });
    }
    let h = spec.hurst.value();
    Ok((t - s + spec.eps).powf(h - 0.5) / spec.hurst.kernel_norm())
}

/// Kept separate so the constants stay tied to a validated spec.
pub fn laplace_constants(spec: &KernelSpec) -> LaplaceConstants {
    spec.constants()
}

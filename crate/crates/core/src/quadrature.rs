//! Adaptive Gauss–Kronrod evaluation of the Laplace-measure integrals.
//!
//! This is an oracle for the closed forms in [`crate::kernel`], not a
//! production path. Each integral has the shape
//! `∫₀^∞ γ^p e^{-aγ} dγ / (Γ(H+1/2) Γ(1/2-H))` with `p > -1`. The power
//! singularity at zero is removed by `γ = u^k`, `k = 1/(p+1)`, which turns
//! the integrand into `k e^{-a u^k}`. The half line is split at `u = 1` and the
//! tail is mapped onto `(0, 1]` by `u = 1/τ`.

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

/// Which Laplace integral to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LaplaceIntegral {
    /// `R = ∫ e^{-γε} e^{-γ} m(dγ)`.
    R,
    /// `∫ e^{-γε} γ e^{-γ} m(dγ)`, the numerator of `-R̂`.
    RHatNumerator,
    /// `R̂ = -numerator / R`, both evaluated by quadrature.
    RHat,
    /// `K(t+ε, s) = ∫ e^{-γ(t+ε-s)} m(dγ)`.
    Kernel { t: f64, s: f64 },
}

const MAX_INTERVALS: usize = 4000;

pub fn laplace_quadrature(kind: LaplaceIntegral, spec: &KernelSpec, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::invalid(
            "tol",
            "quadrature tolerance must be positive",
        ));
    }
    let h = spec.hurst().value();
    let eps = spec.eps();
    let norm = gamma(h + 0.5) * gamma(0.5 - h);
    let weighted = |power: f64, rate: f64| -> Result<f64> {
        Ok(gamma_weighted_integral(power, rate, tol)? / norm)
    };
    match kind {
        LaplaceIntegral::R => weighted(-h - 0.5, 1.0 + eps),
        LaplaceIntegral::RHatNumerator => weighted(0.5 - h, 1.0 + eps),
        LaplaceIntegral::RHat => {
            let numerator = weighted(0.5 - h, 1.0 + eps)?;
            let r = weighted(-h - 0.5, 1.0 + eps)?;
            Ok(-numerator / r)
        }
        LaplaceIntegral::Kernel { t, s } => {
            if !(s <= t) {
                return Err(Error::Domain {
                    function: "laplace_quadrature kernel (needs s <= t)",
                    value: s - t,
                });
            }
            weighted(-h - 0.5, t + eps - s)
        }
    }
}

/// `∫₀^∞ γ^power e^{-rate·γ} dγ` for `power > -1`, `rate > 0`.
fn gamma_weighted_integral(power: f64, rate: f64, tol: f64) -> Result<f64> {
    let k = 1.0 / (power + 1.0);
    let head = |u: f64| k * (-rate * u.powf(k)).exp();
    let tail = |tau: f64| {
        if tau <= 0.0 {
            0.0
        } else {
            k * (-rate * tau.powf(-k)).exp() / (tau * tau)
        }
    };
    Ok(adaptive_gk15(head, 0.0, 1.0, tol)? + adaptive_gk15(tail, 0.0, 1.0, tol)?)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

fn gk15(f: &impl Fn(f64) -> f64, lo: f64, hi: f64) -> Segment {
    let centre = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(centre);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(centre - dx) + f(centre + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Segment {
        lo,
        hi,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Globally adaptive bisection; stops when the summed error estimate is below
/// `tol` times the magnitude of the running integral.
pub fn adaptive_gk15(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let mut segments = vec![gk15(&f, lo, hi)];
    loop {
        let value: f64 = segments.iter().map(|s| s.value).sum();
        let error: f64 = segments.iter().map(|s| s.error).sum();
        if error <= tol * value.abs().max(f64::MIN_POSITIVE) {
            return Ok(value);
        }
        if segments.len() >= MAX_INTERVALS {
            return Err(Error::Numerical(format!(
                "quadrature did not converge on [{lo}, {hi}]: estimate {value:e}, error {error:e} \
                 after {MAX_INTERVALS} intervals"
            )));
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.error.total_cmp(&b.1.error))
            .map(|(i, _)| i)
            .expect("segment list is never empty");
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.lo + seg.hi);
        segments.push(gk15(&f, seg.lo, mid));
        segments.push(gk15(&f, mid, seg.hi));
    }
}

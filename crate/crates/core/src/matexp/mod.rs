//! Matrix exponentials of rate matrices.
//!
//! Payoffs are propagated with `exp(tG)·Φ` (backward equation), so a row
//! stochastic `exp(tG)` preserves constants: applying it to the all-ones
//! vector returns all ones.

mod banded;
mod contour;
mod dense;
mod uniformization;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use banded::BandedLu;
pub use contour::{nodes_for_tolerance, spectral_extent, ContourPlan, MAX_SUBSTEPS};
pub use dense::{expm_dense, transition_matrix, DEFAULT_DENSE_CAP};
pub use uniformization::uniformization_action;

use crate::ctmc::RateMatrix;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpmMethod {
    DenseScalingSquaring,
    Uniformization,
    Contour,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpmOptions {
    pub tol: f64,
    /// Largest dimension for which a dense one-step matrix is cached.
    pub dense_cap: usize,
    /// Largest `ν·t` handled by uniformization before switching to the contour.
    pub uniformization_budget: f64,
    /// Forces a method instead of the automatic choice.
    #[serde(default)]
    pub method: Option<ExpmMethod>,
}

impl Default for ExpmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            dense_cap: DEFAULT_DENSE_CAP,
            uniformization_budget: 1e4,
            method: None,
        }
    }
}

/// Which method evaluated an action, and how many time splits it used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ActionInfo {
    pub method: ExpmMethod,
    pub substeps: usize,
}

/// `exp(tG)·w` with an automatic method choice:
///
/// 1. uniformization when `ν·t` is within budget and `G` is a true generator;
/// 2. the contour method when the spectrum of `tG` fits inside the contour
///    without time splitting;
/// 3. the dense exponential when the matrix is small enough;
/// 4. the contour method with time splitting otherwise.
///
/// Strongly skew, non-normal matrices (central rates with large negative
/// entries) have resolvents that amplify contour errors, hence the preference
/// for the dense path in case 3.
pub fn expm_action(
    g: &impl RateMatrix,
    w: &[f64],
    t: f64,
    options: &ExpmOptions,
) -> Result<(Vec<f64>, ActionInfo)> {
    let nu = (0..g.dim())
        .map(|i| g.entry(i, i).abs())
        .fold(0.0, f64::max);
    let method = options.method.unwrap_or_else(|| {
        if nu * t <= options.uniformization_budget && !is_not_generator(g) {
            ExpmMethod::Uniformization
        } else {
            rational_method(g, t, options)
        }
    });
    match method {
        ExpmMethod::Uniformization => {
            let out = uniformization_action(g, w, t, options.tol, options.uniformization_budget)?;
            let substeps = (nu * t / 50.0).ceil().max(1.0) as usize;
            Ok((out, ActionInfo { method, substeps }))
        }
        ExpmMethod::Contour => {
            let plan = ContourPlan::new(g, t, options.tol)?;
            let out = plan.apply(w)?;
            Ok((
                out,
                ActionInfo {
                    method,
                    substeps: plan.substeps(),
                },
            ))
        }
        ExpmMethod::DenseScalingSquaring => {
            let e = expm_dense(&g.to_dense(), t, options.dense_cap)?;
            let out = (e * DVector::from_column_slice(w)).as_slice().to_vec();
            Ok((
                out,
                ActionInfo {
                    method,
                    substeps: 1,
                },
            ))
        }
    }
}

/// Contour when the spectrum of `tG` fits inside the contour or the matrix is
/// too large for the dense path, dense otherwise.
fn rational_method(g: &impl RateMatrix, t: f64, options: &ExpmOptions) -> ExpmMethod {
    if contour::fits_single_step(g, t, options.tol) || g.dim() > options.dense_cap {
        ExpmMethod::Contour
    } else {
        ExpmMethod::DenseScalingSquaring
    }
}

/// True when `G` is not a (sub)generator: a negative off-diagonal rate or a
/// positive row sum.
fn is_not_generator(g: &impl RateMatrix) -> bool {
    let mut row = Vec::new();
    (0..g.dim()).any(|i| {
        g.row(i, &mut row);
        let sum: f64 = row.iter().map(|e| e.1).sum();
        let scale: f64 = row.iter().map(|e| e.1.abs()).sum();
        sum > 1e-12 * scale || row.iter().any(|&(j, a)| j != i && a < 0.0)
    })
}

/// Reusable `exp(tG)` for a fixed `t`, applied many times (Bermudan steps).
#[derive(Debug, Clone)]
pub enum ExpmPlan {
    Dense(DMatrix<f64>),
    Contour(ContourPlan),
}

impl ExpmPlan {
    /// Same choice as [`expm_action`] without uniformization, which has
    /// nothing to reuse. Factorisations are computed once and reused by every
    /// [`ExpmPlan::apply`].
    pub fn new(g: &impl RateMatrix, t: f64, options: &ExpmOptions) -> Result<Self> {
        let dense = match options.method {
            Some(ExpmMethod::DenseScalingSquaring) => true,
            Some(_) => false,
            None => rational_method(g, t, options) == ExpmMethod::DenseScalingSquaring,
        };
        if dense {
            Ok(Self::Dense(expm_dense(
                &g.to_dense(),
                t,
                options.dense_cap,
            )?))
        } else {
            Ok(Self::Contour(ContourPlan::new(g, t, options.tol)?))
        }
    }

    pub fn method(&self) -> ExpmMethod {
        match self {
            Self::Dense(_) => ExpmMethod::DenseScalingSquaring,
            Self::Contour(_) => ExpmMethod::Contour,
        }
    }

    pub fn info(&self) -> ActionInfo {
        match self {
            Self::Dense(_) => ActionInfo {
                method: ExpmMethod::DenseScalingSquaring,
                substeps: 1,
            },
            Self::Contour(p) => ActionInfo {
                method: ExpmMethod::Contour,
                substeps: p.substeps(),
            },
        }
    }

    pub fn apply(&self, w: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Dense(e) => Ok((e * DVector::from_column_slice(w)).as_slice().to_vec()),
            Self::Contour(plan) => plan.apply(w),
        }
    }
}

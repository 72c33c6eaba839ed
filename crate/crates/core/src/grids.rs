//! State grids for the variance chain and the auxiliary chain.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::LaplaceConstants;
use crate::models::{MarketParams, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridStyle {
    /// Equally spaced nodes shifted onto the anchor. One end cell is shorter
    /// and the opposite end stops short of its bound by under half a step.
    Uniform,
    /// Two uniform pieces meeting at the anchor, with node counts
    /// proportional to the piece lengths.
    #[default]
    PiecewiseUniform,
}

/// Default truncation of both axes, as multiples of the initial state.
pub const LOWER_FACTOR: f64 = 1e-3;
pub const UPPER_FACTOR: f64 = 4.0;

/// An increasing set of chain states containing the initial state exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nodes: Vec<f64>,
    anchor_index: usize,
}

/// Spacing statistics scaled so that regular grid families give bounded values:
/// `max h · n / width` and `max |h_i - h_{i+1}| · n² / width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Regularity {
    pub spacing_ratio: f64,
    pub jump_ratio: f64,
}

impl Grid {
    /// Builds a grid on `[lo, hi]` with `count` nodes, one of which is `anchor`.
    ///
    /// `count = 1` gives the single node `anchor` (a frozen state).
    pub fn build(lo: f64, hi: f64, count: usize, anchor: f64, style: GridStyle) -> Result<Self> {
        if count == 2 || count == 0 {
            return Err(Error::invalid(
                "nodes",
                format!("need 1 or at least 3 nodes, got {count}"),
            ));
        }
        if !(lo < anchor && anchor < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(
                "bounds",
                format!("anchor {anchor} must lie strictly inside [{lo}, {hi}]"),
            ));
        }
        if count == 1 {
            return Ok(Self {
                nodes: vec![anchor],
                anchor_index: 0,
            });
        }
        let cells = count - 1;
        let (nodes, anchor_index) = match style {
            GridStyle::Uniform => {
                let step = (hi - lo) / cells as f64;
                let mut nodes: Vec<f64> = (0..count).map(|k| lo + k as f64 * step).collect();
                nodes[cells] = hi;
                let nearest = ((anchor - lo) / step).round() as usize;
                let k = nearest.clamp(1, cells - 1);
                // Shift the lattice onto the anchor and clamp the end node that
                // would leave [lo, hi]; the other end moves inward by under
                // half a step.
                // When the anchor sits in an end cell only that node moves.
                let offset = anchor - nodes[k];
                if k == nearest {
                    for x in &mut nodes {
                        *x += offset;
                    }
                    if offset < 0.0 {
                        nodes[0] = lo;
                    } else {
                        nodes[cells] = hi;
                    }
                }
                nodes[k] = anchor;
                (nodes, k)
            }
            GridStyle::PiecewiseUniform => {
                let share = (anchor - lo) / (hi - lo) * cells as f64;
                let left = (share.round() as usize).clamp(1, cells - 1);
                let right = cells - left;
                let left_step = (anchor - lo) / left as f64;
                let right_step = (hi - anchor) / right as f64;
                let mut nodes = Vec::with_capacity(count);
                nodes.extend((0..left).map(|k| lo + k as f64 * left_step));
                nodes.push(anchor);
                nodes.extend((1..right).map(|k| anchor + k as f64 * right_step));
                nodes.push(hi);
                (nodes, left)
            }
        };
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(
                "nodes",
                "grid is not strictly increasing; use more nodes",
            ));
        }
        Ok(Self {
            nodes,
            anchor_index,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn anchor_index(&self) -> usize {
        self.anchor_index
    }

    pub fn anchor(&self) -> f64 {
        self.nodes[self.anchor_index]
    }

    pub fn first(&self) -> f64 {
        self.nodes[0]
    }

    pub fn last(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// `h_i = nodes[i] - nodes[i-1]`, `i = 1..n`.
    pub fn spacings(&self) -> Vec<f64> {
        self.nodes.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn regularity(&self) -> Regularity {
        let h = self.spacings();
        if h.is_empty() {
            return Regularity {
                spacing_ratio: 0.0,
                jump_ratio: 0.0,
            };
        }
        let n = self.nodes.len() as f64;
        let width = self.last() - self.first();
        let max_h = h.iter().copied().fold(0.0, f64::max);
        let max_jump = h
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0, f64::max);
        Regularity {
            spacing_ratio: max_h * n / width,
            jump_ratio: max_jump * n * n / width,
        }
    }

    /// Checks `max h ≤ C·width/n` and `max |Δh| ≤ C·width/n²`.
    pub fn check_regularity(&self, constant: f64) -> Result<()> {
        let r = self.regularity();
        if r.spacing_ratio > constant || r.jump_ratio > constant {
            return Err(Error::Numerical(format!(
                "grid regularity ({:.3}, {:.3}) exceeds the constant {constant}",
                r.spacing_ratio, r.jump_ratio
            )));
        }
        Ok(())
    }

    /// Index of the nearest node; ties go to the lower index.
    pub fn locate(&self, value: f64) -> Result<usize> {
        if !(value >= self.first() && value <= self.last()) {
            return Err(Error::Domain {
                function: "locate",
                value,
            });
        }
        let upper = self.nodes.partition_point(|&x| x < value);
        if upper == 0 {
            return Ok(0);
        }
        if self.nodes[upper] == value {
            return Ok(upper);
        }
        let below = value - self.nodes[upper - 1];
        let above = self.nodes[upper] - value;
        Ok(if above < below { upper } else { upper - 1 })
    }

    /// `index,value` rows with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,value\n");
        for (i, x) in self.nodes.iter().enumerate() {
            let _ = writeln!(out, "{i},{x:.16e}");
        }
        out
    }

    /// The same grid with every node shifted by `offset`.
    pub fn shifted(&self, offset: f64) -> Self {
        Self {
            nodes: self.nodes.iter().map(|x| x + offset).collect(),
            anchor_index: self.anchor_index,
        }
    }
}

/// Variance grid on `[1e-3·V0, 4·V0]` unless `bounds` overrides it.
pub fn build_variance_grid(
    count: usize,
    market: &MarketParams,
    model: &ModelSpec,
    style: GridStyle,
    bounds: Option<(f64, f64)>,
) -> Result<Grid> {
    let v0 = market.v0;
    let (lo, hi) = match bounds {
        Some(b) => b,
        None => sorted(LOWER_FACTOR * v0, UPPER_FACTOR * v0),
    };
    let (dom_lo, dom_hi) = model.variance_domain();
    if !(lo > dom_lo && hi < dom_hi) {
        return Err(Error::invalid(
            "v_bounds",
            format!("[{lo}, {hi}] leaves the variance domain"),
        ));
    }
    let grid = Grid::build(lo, hi, count, v0, style)?;
    for &v in grid.nodes() {
        model.check_positivity(v, market.s0)?;
    }
    Ok(grid)
}

/// Initial auxiliary state `X0 = g(S0) - ρ f(V0)`.
pub fn auxiliary_origin(
    market: &MarketParams,
    model: &ModelSpec,
    consts: &LaplaceConstants,
) -> Result<f64> {
    Ok(model.transform_g(market.s0)? - market.rho * model.transform_f(market.v0, consts.k_eps)?)
}

/// Auxiliary grid on `[1e-3·X0, 4·X0]` (sorted) unless `bounds` overrides it.
///
/// With the default bounds, an end that would reconstruct an asset level
/// outside the range of `g⁻¹` for some variance node is pulled in to the
/// image of the asset bound (`1e-3·S0` or `4·S0`), tightened over all
/// variance nodes. Explicit bounds are used as given and rejected if invalid.
pub fn build_x_grid(
    count: usize,
    market: &MarketParams,
    model: &ModelSpec,
    consts: &LaplaceConstants,
    vgrid: &Grid,
    style: GridStyle,
    bounds: Option<(f64, f64)>,
) -> Result<Grid> {
    let x0 = auxiliary_origin(market, model, consts)?;
    let shifts = [
        market.rho * model.transform_f(vgrid.first(), consts.k_eps)?,
        market.rho * model.transform_f(vgrid.last(), consts.k_eps)?,
    ];
    let (dom_lo, dom_hi) = model.g_inverse_domain();
    let (lo, hi) = match bounds {
        Some(b) => b,
        None => {
            if x0 == 0.0 {
                return Err(Error::invalid(
                    "x_bounds",
                    "X0 = 0; default relative bounds are degenerate",
                ));
            }
            let (mut lo, mut hi) = sorted(LOWER_FACTOR * x0, UPPER_FACTOR * x0);
            if shifts.iter().any(|sh| !(lo + sh > dom_lo)) {
                let g_floor = model.transform_g(LOWER_FACTOR * market.s0)?;
                lo = shifts
                    .iter()
                    .map(|sh| g_floor - sh)
                    .fold(f64::NEG_INFINITY, f64::max);
            }
            if shifts.iter().any(|sh| !(hi + sh < dom_hi)) {
                let g_cap = model.transform_g(UPPER_FACTOR * market.s0)?;
                hi = shifts
                    .iter()
                    .map(|sh| g_cap - sh)
                    .fold(f64::INFINITY, f64::min);
            }
            (lo, hi)
        }
    };
    for sh in shifts {
        if !(lo + sh > dom_lo && hi + sh < dom_hi) {
            return Err(Error::invalid(
                "x_bounds",
                format!("[{lo}, {hi}] reconstructs asset levels outside the range of g^-1"),
            ));
        }
    }
    Grid::build(lo, hi, count, x0, style)
}

fn sorted(a: f64, b: f64) -> (f64, f64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

//! Generator matrices of the two-layer chain.
//!
//! Both layers are birth-death chains whose rates match the local drift and
//! variance of the diffusion they approximate. The variance chain `Q` has
//! drift `(v - V0) R̂ + K^ε b(v)` and variance `(K^ε σ(v))²`. The auxiliary
//! chain in regime `ℓ`, `Λ_ℓ`, has drift `θ(x, v_ℓ)` and variance
//! `(1 - ρ²) φ²(v_ℓ)`. The coupled generator on the product space uses the
//! flat index `ℓ·N + i`.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grids::{build_variance_grid, build_x_grid, Grid, GridStyle};
use crate::kernel::{KernelSpec, LaplaceConstants};
use crate::models::{MarketParams, ModelSpec, ThetaForm};

/// What to do when the central moment-matching rates go negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeRatePolicy {
    /// Fail with [`Error::NegativeRate`].
    Reject,
    /// Keep the central rates; the matrix is then not a true generator.
    #[default]
    Allow,
    /// Replace offending rows by one-sided drift rates. Keeps the first
    /// moment, adds `|drift|·h` of numerical variance.
    Upwind,
}

/// Read access shared by the tridiagonal and coupled generators.
pub trait RateMatrix: Sync {
    fn dim(&self) -> usize;

    /// `(lower, upper)` bandwidths.
    fn bandwidths(&self) -> (usize, usize);

    /// Clears `out` and fills it with the nonzero `(column, value)` pairs of
    /// row `i` in increasing column order.
    fn row(&self, i: usize, out: &mut Vec<(usize, f64)>);

    fn entry(&self, i: usize, j: usize) -> f64;

    /// `y = G x`.
    fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let mut buf = Vec::new();
        for (i, yi) in y.iter_mut().enumerate() {
            self.row(i, &mut buf);
            *yi = buf.iter().map(|&(j, a)| a * x[j]).sum();
        }
    }

    fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.dim();
        let mut dense = nalgebra::DMatrix::zeros(n, n);
        let mut buf = Vec::new();
        for i in 0..n {
            self.row(i, &mut buf);
            for &(j, a) in &buf {
                dense[(i, j)] = a;
            }
        }
        dense
    }
}

/// Tridiagonal rate matrix. `lower[0]` and `upper[n-1]` are always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn from_bands(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if lower.len() != n || upper.len() != n || n == 0 {
            return Err(Error::Shape(
                "tridiagonal bands must have equal nonzero length".into(),
            ));
        }
        if lower[0] != 0.0 || upper[n - 1] != 0.0 {
            return Err(Error::Shape(
                "band entries outside the matrix must be zero".into(),
            ));
        }
        Ok(Self { lower, diag, upper })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn transpose(&self) -> Self {
        let n = self.diag.len();
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        if n > 1 {
            lower[1..].copy_from_slice(&self.upper[..n - 1]);
            upper[..n - 1].copy_from_slice(&self.lower[1..]);
        }
        Self {
            lower,
            diag: self.diag.clone(),
            upper,
        }
    }

    /// Number of strictly negative off-diagonal entries.
    pub fn negative_off_diagonals(&self) -> usize {
        self.lower
            .iter()
            .chain(&self.upper)
            .filter(|&&a| a < 0.0)
            .count()
    }
}

impl RateMatrix for Tridiagonal {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn bandwidths(&self) -> (usize, usize) {
        (1, 1)
    }

    fn row(&self, i: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        if i > 0 && self.lower[i] != 0.0 {
            out.push((i - 1, self.lower[i]));
        }
        if self.diag[i] != 0.0 {
            out.push((i, self.diag[i]));
        }
        if self.upper[i] != 0.0 {
            out.push((i + 1, self.upper[i]));
        }
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if j + 1 == i {
            self.lower[i]
        } else if i + 1 == j {
            self.upper[i]
        } else {
            0.0
        }
    }

    fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let n = self.diag.len();
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.lower[i] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.upper[i] * x[i + 1];
            }
            y[i] = acc;
        }
    }
}

/// Counts from one moment-matching pass.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct RateCounts {
    /// Negative central rates found, before any repair.
    pub negative: usize,
    /// Rows replaced by the upwind rates.
    pub repaired: usize,
}

/// Solves the local three-point moment problem at every interior node.
///
/// Row `i` gets `q₋ = (s² - d h₊)/(h₋(h₋+h₊))`, `q₊ = (s² + d h₋)/(h₊(h₋+h₊))`
/// and `q₀ = -(q₋ + q₊)`; the first and last rows stay zero (absorbing).
pub fn moment_matched(
    nodes: &[f64],
    mut drift: impl FnMut(usize) -> Result<f64>,
    mut variance: impl FnMut(usize) -> f64,
    policy: NegativeRatePolicy,
    label: &str,
) -> Result<(Tridiagonal, RateCounts)> {
    let n = nodes.len();
    if n == 0 {
        return Err(Error::Shape(format!("{label}: empty grid")));
    }
    let mut g = Tridiagonal::zeros(n);
    let mut counts = RateCounts::default();
    for i in 1..n - 1 {
        let below = nodes[i] - nodes[i - 1];
        let above = nodes[i + 1] - nodes[i];
        let d = drift(i)?;
        let s2 = variance(i);
        if !d.is_finite() || !s2.is_finite() || s2 < 0.0 {
            return Err(Error::Numerical(format!(
                "{label}: invalid moments (drift {d}, variance {s2}) at row {i}"
            )));
        }
        let span = below + above;
        let mut down = (s2 - d * above) / (below * span);
        let mut up = (s2 + d * below) / (above * span);
        if down < 0.0 || up < 0.0 {
            counts.negative += 1;
            match policy {
                NegativeRatePolicy::Allow => {}
                NegativeRatePolicy::Reject => {
                    let width = nodes[n - 1] - nodes[0];
                    let needed = if s2 > 0.0 {
                        (width * d.abs() / s2).ceil() as usize + 1
                    } else {
                        usize::MAX
                    };
                    return Err(Error::NegativeRate {
                        matrix: label.to_string(),
                        row: i,
                        value: down.min(up),
                        suggested_nodes: needed,
                    });
                }
                NegativeRatePolicy::Upwind => {
                    counts.repaired += 1;
                    down = s2 / (below * span) + (-d).max(0.0) / below;
                    up = s2 / (above * span) + d.max(0.0) / above;
                }
            }
        }
        g.lower[i] = down;
        g.upper[i] = up;
        g.diag[i] = -(down + up);
    }
    Ok((g, counts))
}

/// `Q` on the variance grid.
pub fn build_variance_generator(
    vgrid: &Grid,
    model: &ModelSpec,
    market: &MarketParams,
    consts: &LaplaceConstants,
    policy: NegativeRatePolicy,
) -> Result<(Tridiagonal, RateCounts)> {
    let nodes = vgrid.nodes();
    let k = consts.k_eps;
    moment_matched(
        nodes,
        |i| {
            let v = nodes[i];
            Ok((v - market.v0) * consts.r_hat + k * model.variance_drift(v))
        },
        |i| (k * model.variance_vol(nodes[i])).powi(2),
        policy,
        "Q",
    )
}

/// `Λ_ℓ` for the frozen variance level `v`.
pub fn build_regime_generator(
    xgrid: &Grid,
    v: f64,
    model: &ModelSpec,
    market: &MarketParams,
    consts: &LaplaceConstants,
    form: ThetaForm,
    policy: NegativeRatePolicy,
) -> Result<(Tridiagonal, RateCounts)> {
    let nodes = xgrid.nodes();
    let phi = model.vol_factor(v);
    let variance = (1.0 - market.rho * market.rho) * phi * phi;
    moment_matched(
        nodes,
        |i| model.drift_theta(nodes[i], v, market, consts, form),
        |_| variance,
        policy,
        &format!("Lambda at v = {v}"),
    )
}

/// Sizes and placement of both grids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridLayout {
    pub x_nodes: usize,
    pub v_nodes: usize,
    #[serde(default)]
    pub style: GridStyle,
    #[serde(default)]
    pub v_bounds: Option<(f64, f64)>,
    #[serde(default)]
    pub x_bounds: Option<(f64, f64)>,
}

impl Default for GridLayout {
    fn default() -> Self {
        Self {
            x_nodes: 100,
            v_nodes: 100,
            style: GridStyle::PiecewiseUniform,
            v_bounds: None,
            x_bounds: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ChainCounts {
    pub variance: RateCounts,
    pub auxiliary: RateCounts,
}

/// Grids and generators for one (model, market, kernel) triple.
#[derive(Debug, Clone)]
pub struct GeneratorSet {
    pub model: ModelSpec,
    pub market: MarketParams,
    pub kernel: KernelSpec,
    pub consts: LaplaceConstants,
    pub theta_form: ThetaForm,
    pub vgrid: Grid,
    pub xgrid: Grid,
    pub q: Tridiagonal,
    pub lambdas: Vec<Tridiagonal>,
    pub counts: ChainCounts,
}

impl GeneratorSet {
    pub fn build(
        model: ModelSpec,
        market: MarketParams,
        kernel: KernelSpec,
        layout: &GridLayout,
        form: ThetaForm,
        policy: NegativeRatePolicy,
    ) -> Result<Self> {
        market.validate(&model)?;
        let consts = kernel.constants();
        let vgrid = build_variance_grid(
            layout.v_nodes,
            &market,
            &model,
            layout.style,
            layout.v_bounds,
        )?;
        let xgrid = build_x_grid(
            layout.x_nodes,
            &market,
            &model,
            &consts,
            &vgrid,
            layout.style,
            layout.x_bounds,
        )?;
        Self::from_grids(model, market, kernel, vgrid, xgrid, form, policy)
    }

    /// Builds generators on caller-supplied grids.
    pub fn from_grids(
        model: ModelSpec,
        market: MarketParams,
        kernel: KernelSpec,
        vgrid: Grid,
        xgrid: Grid,
        form: ThetaForm,
        policy: NegativeRatePolicy,
    ) -> Result<Self> {
        let consts = kernel.constants();
        let (q, variance_counts) =
            build_variance_generator(&vgrid, &model, &market, &consts, policy)?;
        let built: Vec<(Tridiagonal, RateCounts)> = vgrid
            .nodes()
            .par_iter()
            .map(|&v| build_regime_generator(&xgrid, v, &model, &market, &consts, form, policy))
            .collect::<Result<_>>()?;
        let mut auxiliary = RateCounts::default();
        let lambdas = built
            .into_iter()
            .map(|(g, c)| {
                auxiliary.negative += c.negative;
                auxiliary.repaired += c.repaired;
                g
            })
            .collect();
        Ok(Self {
            model,
            market,
            kernel,
            consts,
            theta_form: form,
            vgrid,
            xgrid,
            q,
            lambdas,
            counts: ChainCounts {
                variance: variance_counts,
                auxiliary,
            },
        })
    }

    pub fn coupled(&self) -> CoupledGenerator<'_> {
        CoupledGenerator {
            q: &self.q,
            lambdas: &self.lambdas,
            block: self.xgrid.len(),
        }
    }

    /// Asset level `g⁻¹(x_i + ρ f(v_ℓ))` at regime `ℓ`, node `i`.
    pub fn asset_level(&self, regime: usize, node: usize) -> Result<f64> {
        self.model.reconstruct_asset(
            self.xgrid.nodes()[node],
            self.vgrid.nodes()[regime],
            self.market.rho,
            self.consts.k_eps,
        )
    }

    /// Flat index of the initial state.
    pub fn anchor_flat_index(&self) -> usize {
        self.vgrid.anchor_index() * self.xgrid.len() + self.xgrid.anchor_index()
    }
}

/// `Λ = Q ⊗ I_N + blockdiag(Λ_ℓ)`, represented without materialising it.
#[derive(Debug, Clone, Copy)]
pub struct CoupledGenerator<'a> {
    q: &'a Tridiagonal,
    lambdas: &'a [Tridiagonal],
    block: usize,
}

/// Checks shapes and returns the coupled view.
pub fn build_coupled<'a>(
    q: &'a Tridiagonal,
    lambdas: &'a [Tridiagonal],
) -> Result<CoupledGenerator<'a>> {
    if lambdas.len() != q.dim() {
        return Err(Error::Shape(format!(
            "{} regime generators for a {}-state variance chain",
            lambdas.len(),
            q.dim()
        )));
    }
    let block = lambdas[0].dim();
    if lambdas.iter().any(|l| l.dim() != block) {
        return Err(Error::Shape("regime generators differ in size".into()));
    }
    Ok(CoupledGenerator { q, lambdas, block })
}

impl CoupledGenerator<'_> {
    pub fn block(&self) -> usize {
        self.block
    }

    pub fn regimes(&self) -> usize {
        self.lambdas.len()
    }
}

impl RateMatrix for CoupledGenerator<'_> {
    fn dim(&self) -> usize {
        self.block * self.lambdas.len()
    }

    fn bandwidths(&self) -> (usize, usize) {
        if self.lambdas.len() > 1 {
            (self.block, self.block)
        } else {
            (1, 1)
        }
    }

    fn row(&self, k: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        let (l, i) = (k / self.block, k % self.block);
        let lam = &self.lambdas[l];
        let m = self.lambdas.len();
        if l > 0 && self.q.lower[l] != 0.0 {
            out.push((k - self.block, self.q.lower[l]));
        }
        if i > 0 && lam.lower[i] != 0.0 {
            out.push((k - 1, lam.lower[i]));
        }
        let d = self.q.diag[l] + lam.diag[i];
        if d != 0.0 {
            out.push((k, d));
        }
        if i + 1 < self.block && lam.upper[i] != 0.0 {
            out.push((k + 1, lam.upper[i]));
        }
        if l + 1 < m && self.q.upper[l] != 0.0 {
            out.push((k + self.block, self.q.upper[l]));
        }
    }

    fn entry(&self, r: usize, c: usize) -> f64 {
        let (l, i) = (r / self.block, r % self.block);
        let (j, p) = (c / self.block, c % self.block);
        let cross = if i == p { self.q.entry(l, j) } else { 0.0 };
        let within = if l == j {
            self.lambdas[l].entry(i, p)
        } else {
            0.0
        };
        cross + within
    }
}

/// Summary statistics of a rate matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneratorReport {
    pub max_abs_row_sum: f64,
    /// Row sum divided by the row's absolute sum (rounding-aware measure).
    pub max_relative_row_sum: f64,
    pub min_off_diagonal: f64,
    pub max_diagonal: f64,
    pub negative_off_diagonals: usize,
    /// Uniformisation rate `max |G_ii|`.
    pub nu: f64,
}

pub fn validate_generator(g: &impl RateMatrix) -> GeneratorReport {
    let mut report = GeneratorReport {
        max_abs_row_sum: 0.0,
        max_relative_row_sum: 0.0,
        min_off_diagonal: f64::INFINITY,
        max_diagonal: f64::NEG_INFINITY,
        negative_off_diagonals: 0,
        nu: 0.0,
    };
    let mut buf = Vec::new();
    for i in 0..g.dim() {
        g.row(i, &mut buf);
        let sum: f64 = buf.iter().map(|e| e.1).sum();
        let scale: f64 = buf.iter().map(|e| e.1.abs()).sum();
        report.max_abs_row_sum = report.max_abs_row_sum.max(sum.abs());
        if scale > 0.0 {
            report.max_relative_row_sum = report.max_relative_row_sum.max(sum.abs() / scale);
        }
        let diag = g.entry(i, i);
        report.max_diagonal = report.max_diagonal.max(diag);
        report.nu = report.nu.max(diag.abs());
        for &(j, a) in &buf {
            if j != i {
                report.min_off_diagonal = report.min_off_diagonal.min(a);
                if a < 0.0 {
                    report.negative_off_diagonals += 1;
                }
            }
        }
    }
    if report.min_off_diagonal == f64::INFINITY {
        report.min_off_diagonal = 0.0;
    }
    report
}

/// Writes `row col value` lines (zero-based, 17 significant digits) after a
/// `# rows cols nnz` header.
pub fn write_triplets(g: &impl RateMatrix, out: &mut impl Write) -> io::Result<()> {
    let n = g.dim();
    let mut rows = Vec::with_capacity(n);
    let mut buf = Vec::new();
    for i in 0..n {
        g.row(i, &mut buf);
        rows.push(buf.clone());
    }
    let nnz: usize = rows.iter().map(Vec::len).sum();
    writeln!(out, "# {n} {n} {nnz}")?;
    for (i, row) in rows.iter().enumerate() {
        for &(j, a) in row {
            writeln!(out, "{i} {j} {a:.16e}")?;
        }
    }
    Ok(())
}

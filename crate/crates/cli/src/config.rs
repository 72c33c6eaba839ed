//! Run configuration: a JSON document with the blocks `model`, `market`,
//! `kernel`, `numerics`, `option`, `mc` and `table`. Unknown keys are
//! rejected everywhere. See `configs/README.md` for the schema.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use roughchain::ctmc::{GridLayout, NegativeRatePolicy};
use roughchain::grids::GridStyle;
use roughchain::kernel::{Hurst, KernelSpec};
use roughchain::matexp::ExpmOptions;
use roughchain::mc::{McConfig, Scheme, VolterraKernel};
use roughchain::models::{MarketParams, ModelFamily, ModelParams, ModelSpec, ThetaForm};
use roughchain::pricing::{Algorithm, Barrier, FastIndexing, OptionSpec, PayoffKind, PricingSetup};

use crate::error::CliError;

/// Environment variable naming the config file used when `--config` is absent.
pub const CONFIG_ENV: &str = "ROUGHCHAIN_CONFIG";

/// Config file used when neither `--config` nor the environment variable is set.
pub const DEFAULT_CONFIG: &str = "roughchain.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelBlock,
    #[serde(default)]
    pub market: MarketParams,
    pub kernel: KernelBlock,
    #[serde(default)]
    pub numerics: NumericsBlock,
    pub option: OptionBlock,
    #[serde(default)]
    pub mc: McBlock,
    #[serde(default)]
    pub table: TableBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub name: ModelFamily,
    #[serde(default)]
    pub params: ModelParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelBlock {
    pub hurst: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsBlock {
    pub x_nodes: usize,
    pub v_nodes: usize,
    pub grid_style: GridStyle,
    pub v_bounds: Option<(f64, f64)>,
    pub x_bounds: Option<(f64, f64)>,
    pub method: Algorithm,
    pub bermudan_n: Option<usize>,
    pub theta_form: ThetaForm,
    pub negative_rates: NegativeRatePolicy,
    pub fast_indexing: FastIndexing,
    pub expm: ExpmOptions,
}

impl Default for NumericsBlock {
    fn default() -> Self {
        let layout = GridLayout::default();
        Self {
            x_nodes: layout.x_nodes,
            v_nodes: layout.v_nodes,
            grid_style: layout.style,
            v_bounds: None,
            x_bounds: None,
            method: Algorithm::default(),
            bermudan_n: None,
            theta_form: ThetaForm::default(),
            negative_rates: NegativeRatePolicy::default(),
            fast_indexing: FastIndexing::default(),
            expm: ExpmOptions::default(),
        }
    }
}

/// `lower`/`upper` set a terminal barrier; a missing `upper` means no upper
/// level. `rate` defaults to the model's drift rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionBlock {
    pub kind: PayoffKind,
    pub strike: f64,
    pub maturity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum McKernel {
    /// The singular kernel of the rough model.
    #[default]
    Rough,
    /// The perturbed kernel with the configured `eps`.
    Perturbed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McBlock {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    pub antithetic: bool,
    pub scheme: Scheme,
    pub kernel: McKernel,
}

impl Default for McBlock {
    fn default() -> Self {
        let mc = McConfig::default();
        Self {
            paths: mc.paths,
            steps: mc.steps,
            seed: mc.seed,
            antithetic: mc.antithetic,
            scheme: mc.scheme,
            kernel: McKernel::default(),
        }
    }
}

/// Sweep for the `table` command. Empty `nodes` or `models` mean the values
/// of the `numerics` and `model` blocks; a missing `benchmark` means the
/// stored reference price for each model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TableBlock {
    pub eps: Vec<f64>,
    pub nodes: Vec<usize>,
    pub models: Vec<ModelFamily>,
    pub benchmark: Option<f64>,
}

impl Default for TableBlock {
    fn default() -> Self {
        Self {
            eps: vec![1e-4, 1e-5, 1e-6, 1e-7, 1e-8],
            nodes: Vec::new(),
            models: Vec::new(),
            benchmark: None,
        }
    }
}

/// One `--set path=value` override.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Override {
    pub path: String,
    pub value: Value,
}

impl Override {
    /// Parses `a.b.c=value`; the value is read as JSON when possible and as a
    /// string otherwise.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let (path, raw) = text.split_once('=').ok_or_else(|| {
            CliError::Config(format!("override `{text}` is not of the form path=value"))
        })?;
        if path.is_empty() || path.split('.').any(str::is_empty) {
            return Err(CliError::Config(format!(
                "override `{text}` has an empty path segment"
            )));
        }
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        Ok(Self {
            path: path.to_string(),
            value,
        })
    }

    fn apply(&self, root: &mut Value) -> Result<(), CliError> {
        let mut node = root;
        let segments: Vec<&str> = self.path.split('.').collect();
        for (depth, segment) in segments.iter().enumerate() {
            let map = node.as_object_mut().ok_or_else(|| {
                CliError::Config(format!(
                    "override `{}`: `{segment}` is not inside an object",
                    self.path
                ))
            })?;
            if depth + 1 == segments.len() {
                map.insert(segment.to_string(), self.value.clone());
                return Ok(());
            }
            node = map
                .entry(segment.to_string())
                .or_insert_with(|| Value::Object(Default::default()));
        }
        Ok(())
    }
}

/// Where the configuration came from, echoed in every output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub config: PathBuf,
    pub overrides: Vec<Override>,
    pub version: &'static str,
}

/// `--config`, then the environment variable, then the default file name.
pub fn resolve_config_path(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_CONFIG))
}

impl RunConfig {
    pub fn from_json(text: &str, overrides: &[Override]) -> Result<Self, CliError> {
        let mut value: Value = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("invalid JSON: {e}")))?;
        for o in overrides {
            o.apply(&mut value)?;
        }
        serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path, overrides: &[Override]) -> Result<(Self, Provenance), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config = Self::from_json(&text, overrides)?;
        let provenance = Provenance {
            config: path.to_path_buf(),
            overrides: overrides.to_vec(),
            version: env!("CARGO_PKG_VERSION"),
        };
        Ok((config, provenance))
    }

    pub fn model_spec(&self, family: ModelFamily) -> Result<ModelSpec, CliError> {
        Ok(ModelSpec::new(family, self.model.params)?)
    }

    pub fn kernel_spec(&self, eps: f64) -> Result<KernelSpec, CliError> {
        Ok(KernelSpec::new(self.kernel.hurst, eps)?)
    }

    /// Pricing setup for `family` at perturbation `eps` and `nodes` per axis
    /// (`None` keeps the configured values).
    pub fn setup_for(
        &self,
        family: ModelFamily,
        eps: f64,
        nodes: Option<usize>,
    ) -> Result<PricingSetup, CliError> {
        let n = &self.numerics;
        let mut setup = PricingSetup::new(
            self.model_spec(family)?,
            self.market,
            self.kernel_spec(eps)?,
        );
        setup.layout = GridLayout {
            x_nodes: nodes.unwrap_or(n.x_nodes),
            v_nodes: nodes.unwrap_or(n.v_nodes),
            style: n.grid_style,
            v_bounds: n.v_bounds,
            x_bounds: n.x_bounds,
        };
        setup.theta_form = n.theta_form;
        setup.policy = n.negative_rates;
        setup.algorithm = n.method;
        setup.indexing = n.fast_indexing;
        setup.expm = n.expm;
        Ok(setup)
    }

    pub fn setup(&self) -> Result<PricingSetup, CliError> {
        self.setup_for(self.model.name, self.kernel.eps, None)
    }

    pub fn option_spec(&self) -> Result<OptionSpec, CliError> {
        let o = &self.option;
        let rate = o.rate.unwrap_or(self.model.params.rate);
        let mut spec = OptionSpec::european(o.kind, o.strike, o.maturity, rate);
        if o.lower.is_some() || o.upper.is_some() {
            spec = spec.with_barrier(Barrier::new(
                o.lower.unwrap_or(0.0),
                o.upper.unwrap_or(f64::INFINITY),
            )?);
        }
        if let Some(n) = self.numerics.bermudan_n {
            spec = spec.with_exercise_dates(n);
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn mc_config(&self) -> McConfig {
        McConfig {
            paths: self.mc.paths,
            steps: self.mc.steps,
            seed: self.mc.seed,
            antithetic: self.mc.antithetic,
            scheme: self.mc.scheme,
        }
    }

    pub fn mc_kernel(&self) -> Result<VolterraKernel, CliError> {
        Ok(match self.mc.kernel {
            McKernel::Rough => VolterraKernel::Rough(Hurst::new(self.kernel.hurst)?),
            McKernel::Perturbed => VolterraKernel::Perturbed(self.kernel_spec(self.kernel.eps)?),
        })
    }
}

//! The four subcommands. Each returns the text to emit; the caller decides
//! whether it goes to stdout or `--out`.

use serde::Serialize;

use roughchain::benchmarks;
use roughchain::mc::{mc_price, McEstimate};
use roughchain::models::ModelFamily;
use roughchain::pricing::{OptionSpec, PriceResult, Product};
use roughchain::selfcheck::{run_selfcheck, SelfcheckReport};

use crate::config::{Provenance, RunConfig};
use crate::error::CliError;
use crate::output::{format_float, json_string};

/// Text produced by a command and the error to report after it is written.
pub struct CommandOutput {
    pub text: String,
    pub failure: Option<CliError>,
}

impl CommandOutput {
    fn ok(text: String) -> Self {
        Self {
            text,
            failure: None,
        }
    }
}

#[derive(Serialize)]
struct PriceReport<'a> {
    command: &'static str,
    model: ModelFamily,
    price: f64,
    option: &'a OptionSpec,
    diagnostics: &'a roughchain::pricing::Diagnostics,
    provenance: &'a Provenance,
}

pub fn price(config: &RunConfig, provenance: &Provenance) -> Result<CommandOutput, CliError> {
    let option = config.option_spec()?;
    let result = config.setup()?.price(&option)?;
    let report = PriceReport {
        command: "price",
        model: config.model.name,
        price: result.price,
        option: &option,
        diagnostics: &result.diagnostics,
        provenance,
    };
    Ok(CommandOutput::ok(json_string(&report)))
}

/// Reference value for a table row: the configured benchmark, else the stored
/// reference when the option is the standard contract for its product.
fn benchmark_for(config: &RunConfig, family: ModelFamily, option: &OptionSpec) -> Option<f64> {
    if let Some(b) = config.table.benchmark {
        return Some(b);
    }
    let standard_terms =
        option.strike == benchmarks::STRIKE && option.maturity == benchmarks::MATURITY;
    let standard_product = match option.product() {
        Product::European => true,
        Product::Barrier => option
            .barrier
            .is_some_and(|b| (b.lower, b.upper) == benchmarks::BARRIER_BAND),
        Product::Bermudan => option.exercise_dates == Some(benchmarks::BERMUDAN_DATES),
    };
    (standard_terms && standard_product)
        .then(|| benchmarks::reference_price(family, option.product()))
}

const TABLE_HEADER: [&str; 10] = [
    "model",
    "product",
    "eps",
    "x_nodes",
    "v_nodes",
    "price",
    "benchmark",
    "relative_error",
    "seconds",
    "status",
];

/// CSV sweep over models, perturbations and grid sizes. Rows that fail are
/// kept with their error message and make the command exit with code 3.
pub fn table(config: &RunConfig) -> Result<CommandOutput, CliError> {
    let option = config.option_spec()?;
    let models = if config.table.models.is_empty() {
        vec![config.model.name]
    } else {
        config.table.models.clone()
    };
    let nodes: Vec<Option<usize>> = if config.table.nodes.is_empty() {
        vec![None]
    } else {
        config.table.nodes.iter().copied().map(Some).collect()
    };
    if config.table.eps.is_empty() {
        return Err(CliError::Config("table.eps must not be empty".into()));
    }

    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(TABLE_HEADER)?;
    let mut failed = 0usize;
    for &family in &models {
        let benchmark = benchmark_for(config, family, &option);
        for &eps in &config.table.eps {
            for &n in &nodes {
                let setup = config.setup_for(family, eps, n)?;
                let (x_nodes, v_nodes) = (setup.layout.x_nodes, setup.layout.v_nodes);
                let outcome: Result<PriceResult, CliError> =
                    setup.price(&option).map_err(CliError::from);
                let mut row = vec![
                    family.name().to_string(),
                    product_name(option.product()).to_string(),
                    format_float(eps),
                    x_nodes.to_string(),
                    v_nodes.to_string(),
                ];
                match outcome {
                    Ok(result) => {
                        row.push(format_float(result.price));
                        row.push(benchmark.map(format_float).unwrap_or_default());
                        row.push(
                            benchmark
                                .map(|b| format_float((result.price - b) / b))
                                .unwrap_or_default(),
                        );
                        row.push(format_float(result.diagnostics.seconds));
                        row.push("ok".into());
                    }
                    Err(e) => {
                        failed += 1;
                        row.push(String::new());
                        row.push(benchmark.map(format_float).unwrap_or_default());
                        row.push(String::new());
                        row.push(String::new());
                        row.push(format!("error: {e}"));
                    }
                }
                writer.write_record(&row)?;
            }
        }
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError::Output(e.into_error()))?;
    let text = String::from_utf8(bytes).expect("csv output is UTF-8");
    let failure =
        (failed > 0).then(|| CliError::Numerical(format!("{failed} table row(s) failed")));
    Ok(CommandOutput { text, failure })
}

fn product_name(product: Product) -> &'static str {
    match product {
        Product::European => "european",
        Product::Barrier => "barrier",
        Product::Bermudan => "bermudan",
    }
}

#[derive(Serialize)]
struct CompareReport<'a> {
    command: &'static str,
    model: ModelFamily,
    ctmc_price: f64,
    mc: McEstimate,
    difference: f64,
    z_score: f64,
    option: &'a OptionSpec,
    diagnostics: &'a roughchain::pricing::Diagnostics,
    provenance: &'a Provenance,
}

/// CTMC price next to a Monte Carlo estimate of the same contract.
pub fn compare_mc(config: &RunConfig, provenance: &Provenance) -> Result<CommandOutput, CliError> {
    let option = config.option_spec()?;
    if option.product() == Product::Bermudan {
        return Err(CliError::Config(
            "compare-mc supports European and barrier options only".into(),
        ));
    }
    let setup = config.setup()?;
    let ctmc = setup.price(&option)?;
    let mc = mc_price(
        &option,
        &setup.model,
        &config.market,
        config.mc_kernel()?,
        &config.mc_config(),
    )?;
    let difference = mc.estimate - ctmc.price;
    let report = CompareReport {
        command: "compare-mc",
        model: config.model.name,
        ctmc_price: ctmc.price,
        mc,
        difference,
        z_score: difference / mc.stderr,
        option: &option,
        diagnostics: &ctmc.diagnostics,
        provenance,
    };
    Ok(CommandOutput::ok(json_string(&report)))
}

#[derive(Serialize)]
struct SelfcheckOutput<'a> {
    command: &'static str,
    passed: bool,
    failures: usize,
    #[serde(flatten)]
    report: &'a SelfcheckReport,
}

pub fn selfcheck() -> Result<CommandOutput, CliError> {
    let report = run_selfcheck();
    let text = json_string(&SelfcheckOutput {
        command: "selfcheck",
        passed: report.passed(),
        failures: report.failures(),
        report: &report,
    });
    let failure = (!report.passed()).then(|| CliError::Selfcheck(report.failures()));
    Ok(CommandOutput { text, failure })
}

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Parser;

use longevity_alm::config::ModelConfig;
use longevity_alm::economy::{load_scenarios_csv, save_scenarios_csv};
use longevity_alm::experiment::{
    render_text, run_with_scenarios, simulate_scenarios, write_outputs, ExperimentPlan,
};
use longevity_alm::strategies::CatalogueConfig;

/// Runs the diversification experiment and writes its tables as CSV and text.
#[derive(Debug, Parser)]
#[command(name = "ldi-alm", version)]
struct Args {
    /// Model calibration (TOML). Defaults to the shipped calibration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Strategy catalogue grids (TOML). Defaults to the shipped catalogue.
    #[arg(long)]
    catalogue: Option<PathBuf>,
    /// Number of scenarios; overrides the model file.
    #[arg(long)]
    scenarios: Option<usize>,
    /// Random seed; overrides the model file.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated risk aversions.
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Read scenarios from CSV instead of simulating.
    #[arg(long, conflicts_with_all = ["scenarios", "seed"])]
    load_scenarios: Option<PathBuf>,
    /// Also write the scenario set to this CSV file.
    #[arg(long)]
    save_scenarios: Option<PathBuf>,
    /// Size of the best-single-strategy tables.
    #[arg(long, default_value_t = 5)]
    top_k: usize,
}

fn main() -> Result<()> {
    let args = Args::parse();
    let model = match &args.config {
        Some(p) => ModelConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => ModelConfig::default_config(),
    };
    let catalogue = match &args.catalogue {
        Some(p) => CatalogueConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => CatalogueConfig::default_config(),
    };

    let mut plan = ExperimentPlan::for_model(&model);
    if let Some(n) = args.scenarios {
        plan.n_scenarios = n;
    }
    if let Some(seed) = args.seed {
        plan.seed = seed;
    }
    if let Some(g) = args.gammas {
        plan.gammas = g;
    }
    plan.top_k = args.top_k;

    let scenarios = match &args.load_scenarios {
        Some(p) => {
            let s = load_scenarios_csv(p)?;
            let Some(first) = s.first() else {
                bail!("{} contains no scenarios", p.display());
            };
            plan.n_scenarios = s.len();
            plan.horizon = first.horizon();
            s
        }
        None => {
            plan.validate()?;
            simulate_scenarios(&plan, &model)?
        }
    };
    if let Some(p) = &args.save_scenarios {
        save_scenarios_csv(&scenarios, p).with_context(|| format!("writing {}", p.display()))?;
    }

    let report = run_with_scenarios(&plan, &catalogue, &scenarios)?;
    write_outputs(&report, &args.out)
        .with_context(|| format!("writing outputs to {}", args.out.display()))?;
    print!("{}", render_text(&report));
    if report.cells.iter().any(|c| c.outcome.is_err()) {
        eprintln!("some cells failed; see report.txt");
        std::process::exit(2);
    }
    Ok(())
}

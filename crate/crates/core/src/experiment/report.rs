//! CSV and plain-text output of a [`RunReport`].

use std::fmt::Write as _;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{family_label, CellResult, LiabilityMode, RunReport};
use crate::error::Result;
use crate::strategies::{family_counts, write_catalogue_csv, StrategySet, StrategySpec};

/// Weights below this are left out of the text tables.
const SHOWN_WEIGHT: f64 = 1e-4;

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(out)
}

/// `gamma,set,liabilities,rho`, one row per cell; failed cells get `NaN`.
pub fn write_objective_csv<W: Write>(report: &RunReport, out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["gamma", "set", "liabilities", "rho"])?;
    for c in &report.cells {
        let rho = c.outcome.as_ref().map_or(f64::NAN, |s| s.rho);
        w.write_record([
            c.key.gamma.to_string(),
            c.key.set.label().to_string(),
            c.key.mode.label().to_string(),
            rho.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn spec_by_id(report: &RunReport, id: usize) -> &StrategySpec {
    &report.catalogue[id]
}

/// Writes every CSV and `report.txt` into `dir`, returning the paths.
pub fn write_outputs(report: &RunReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut create = |name: String| -> Result<File> {
        let path = dir.join(name);
        let f = File::create(&path)?;
        written.push(path);
        Ok(f)
    };

    write_objective_csv(report, create("objective.csv".into())?)?;
    write_catalogue_csv(&report.catalogue, create("catalogue.csv".into())?)?;

    let mut excluded = csv_writer(create("scatter_excluded.csv".into())?);
    excluded.write_record(["cell", "excluded"])?;
    for c in &report.cells {
        let Ok(sol) = &c.outcome else { continue };
        let label = c.key.label();

        let mut w = csv_writer(create(format!("weights_{label}.csv"))?);
        w.write_record(["id", "family", "alpha"])?;
        for &(id, a) in &sol.weights {
            w.write_record([
                id.to_string(),
                family_label(spec_by_id(report, id), c.key.mode),
                a.to_string(),
            ])?;
        }
        w.flush()?;

        let mut w = csv_writer(create(format!("topk_{label}.csv"))?);
        w.write_record(["rank", "id", "family", "rho"])?;
        for (rank, &(id, rho)) in sol.top.iter().enumerate() {
            w.write_record([
                (rank + 1).to_string(),
                id.to_string(),
                family_label(spec_by_id(report, id), c.key.mode),
                rho.to_string(),
            ])?;
        }
        w.flush()?;

        let mut w = csv_writer(create(format!("scatter_{label}.csv"))?);
        w.write_record([
            "scenario".to_string(),
            format!("w{}", report.plan.scatter_time),
            "pi2".to_string(),
        ])?;
        for p in &sol.scatter.points {
            w.write_record([
                p.scenario.to_string(),
                p.wealth.to_string(),
                p.bond_share.to_string(),
            ])?;
        }
        w.flush()?;
        excluded.write_record([label, sol.scatter.excluded.to_string()])?;
    }
    excluded.flush()?;
    drop(excluded);

    let mut f = create("report.txt".into())?;
    f.write_all(render_text(report).as_bytes())?;
    Ok(written)
}

fn rho_cell(report: &RunReport, gamma: f64, set: StrategySet, mode: LiabilityMode) -> String {
    match report.cell(gamma, set, mode) {
        None => "-".into(),
        Some(CellResult { outcome: Ok(s), .. }) => format!("{:.4}", s.rho),
        Some(_) => "failed".into(),
    }
}

/// Aligned text tables: objective values and reductions, diversified
/// weights, best single strategies, and the allocation-versus-wealth
/// summary.
pub fn render_text(report: &RunReport) -> String {
    let plan = &report.plan;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "Scenarios: {}  seed: {}  horizon: {}  initial wealth: {}",
        plan.n_scenarios, plan.seed, plan.horizon, plan.initial_wealth
    );
    let families: Vec<String> = family_counts(&report.catalogue)
        .iter()
        .map(|(f, n)| format!("{f} {n}"))
        .collect();
    let _ = writeln!(
        s,
        "Catalogue: {} strategies ({})",
        report.catalogue.len(),
        families.join(", ")
    );

    let _ = writeln!(
        s,
        "\nObjective value rho of the optimal diversified strategy\n"
    );
    let _ = write!(s, "{:<12}{:<14}", "liabilities", "set");
    for g in &plan.gammas {
        let _ = write!(s, "{:>12}", format!("g={g}"));
    }
    s.push('\n');
    for &mode in &plan.liability_modes {
        for &set in &plan.strategy_sets {
            let _ = write!(s, "{:<12}{:<14}", mode.label(), set.label());
            for &g in &plan.gammas {
                let _ = write!(s, "{:>12}", rho_cell(report, g, set, mode));
            }
            s.push('\n');
        }
        let _ = write!(s, "{:<12}{:<14}", mode.label(), "reduction %");
        for &g in &plan.gammas {
            let r = report
                .reduction(g, mode)
                .map_or("-".to_string(), |r| format!("{r:.2}"));
            let _ = write!(s, "{r:>12}");
        }
        s.push('\n');
    }

    let failures: Vec<&CellResult> = report.cells.iter().filter(|c| c.outcome.is_err()).collect();
    if !failures.is_empty() {
        let _ = writeln!(s, "\nFailed cells");
        for c in failures {
            if let Err(e) = &c.outcome {
                let _ = writeln!(s, "  {}: {e}", c.key.label());
            }
        }
    }

    let _ = writeln!(s, "\nDiversified strategies (weights above {SHOWN_WEIGHT})");
    for c in &report.cells {
        let Ok(sol) = &c.outcome else { continue };
        let _ = writeln!(
            s,
            "\n[{}] rho = {:.6}  certificate = {:.1e}  iterations = {}",
            c.key.label(),
            sol.rho,
            sol.gap,
            sol.iterations
        );
        let mut shown: Vec<(usize, f64)> = sol
            .weights
            .iter()
            .copied()
            .filter(|&(_, a)| a > SHOWN_WEIGHT)
            .collect();
        shown.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for (id, a) in shown {
            let spec = spec_by_id(report, id);
            let _ = writeln!(
                s,
                "  {:>8.4}  {:>4}  {:<14}{}",
                a,
                id,
                family_label(spec, c.key.mode),
                spec.params()
            );
        }
    }

    let _ = writeln!(s, "\nBest single strategies");
    for c in &report.cells {
        let Ok(sol) = &c.outcome else { continue };
        if c.key.set != StrategySet::All && plan.strategy_sets.contains(&StrategySet::All) {
            continue;
        }
        let _ = writeln!(s, "\n[{}]", c.key.label());
        for (rank, &(id, rho)) in sol.top.iter().enumerate() {
            let spec = spec_by_id(report, id);
            let _ = writeln!(
                s,
                "  {:>2}  {:>10.4}  {:>4}  {:<14}{}",
                rank + 1,
                rho,
                id,
                family_label(spec, c.key.mode),
                spec.params()
            );
        }
    }

    let _ = writeln!(
        s,
        "\nWealth versus 5-year bond share at t = {}",
        plan.scatter_time
    );
    let _ = writeln!(
        s,
        "{:<28}{:>8}{:>10}{:>12}",
        "cell", "points", "excluded", "spearman"
    );
    for c in &report.cells {
        let Ok(sol) = &c.outcome else { continue };
        let rc = sol
            .scatter
            .rank_correlation()
            .map_or("-".to_string(), |r| format!("{r:.4}"));
        let _ = writeln!(
            s,
            "{:<28}{:>8}{:>10}{:>12}",
            c.key.label(),
            sol.scatter.points.len(),
            sol.scatter.excluded,
            rc
        );
    }
    s
}

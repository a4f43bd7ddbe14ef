//! Qualitative behaviour of the default experiment and round trips through
//! the scenario file format.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use longevity_alm::config::ModelConfig;
use longevity_alm::economy::{load_scenarios_csv, save_scenarios_csv, Scenario};
use longevity_alm::experiment::{
    responds_to_liabilities, run_experiment, run_with_scenarios, simulate_scenarios,
    ExperimentPlan, LiabilityMode, RunReport,
};
use longevity_alm::riskopt::{
    entropic_risk, optimize_weights, optimize_weights_from, SimplexWeights, SolverOptions,
    TerminalWealthMatrix,
};
use longevity_alm::strategies::{
    median_claims, terminal_wealth_matrix, CatalogueConfig, EvalContext, StrategySet,
};

fn default_report() -> &'static RunReport {
    static REPORT: OnceLock<RunReport> = OnceLock::new();
    REPORT.get_or_init(|| {
        let model = ModelConfig::default_config();
        let plan = ExperimentPlan::for_model(&model);
        run_experiment(&plan, &model, &CatalogueConfig::default_config()).unwrap()
    })
}

#[test]
fn every_default_cell_converges() {
    let report = default_report();
    assert_eq!(report.catalogue.len(), 188);
    for c in &report.cells {
        let sol = c.outcome.as_ref().unwrap();
        assert!(sol.gap <= report.plan.solver.tol, "{}", c.key.label());
    }
}

#[test]
fn with_liability_reduction_grows_up_to_moderate_aversion() {
    let report = default_report();
    let red: Vec<f64> = [0.05, 0.1, 0.3]
        .iter()
        .map(|&g| report.reduction(g, LiabilityMode::With).unwrap())
        .collect();
    assert!(red.windows(2).all(|w| w[0] < w[1]), "{red:?}");
    assert!(red[0] > 0.0);
}

#[test]
fn best_single_strategies_follow_the_liabilities() {
    let report = default_report();
    for &mode in &report.plan.liability_modes {
        for &g in &report.plan.gammas {
            let cell = report.cell(g, StrategySet::All, mode).unwrap();
            let top = &cell.outcome.as_ref().unwrap().top;
            assert_eq!(top.len(), 5);
            for &(id, _) in top {
                let spec = &report.catalogue[id];
                let expect = mode == LiabilityMode::With;
                assert_eq!(
                    responds_to_liabilities(spec, mode),
                    expect,
                    "{} g={g}: {} {}",
                    mode.label(),
                    spec.family(),
                    spec.params()
                );
            }
        }
    }
}

#[test]
fn diversified_bond_share_tracks_wealth_only_with_liabilities() {
    let report = default_report();
    let corr = |mode| {
        let cell = report.cell(0.3, StrategySet::All, mode).unwrap();
        let sol = cell.outcome.as_ref().unwrap();
        assert_eq!(sol.scatter.excluded, 0);
        sol.scatter.rank_correlation().unwrap()
    };
    let (with, without) = (corr(LiabilityMode::With), corr(LiabilityMode::Without));
    assert!(with > 0.0, "{with}");
    assert!(without.abs() < with, "with {with}, without {without}");
}

#[test]
fn reported_rho_is_the_risk_of_the_recomputed_mixture() {
    let report = default_report();
    let plan = &report.plan;
    let scenarios = simulate_scenarios(plan, &ModelConfig::default_config()).unwrap();
    for &mode in &plan.liability_modes {
        let scns: Vec<Scenario> = match mode {
            LiabilityMode::With => scenarios.clone(),
            LiabilityMode::Without => scenarios.iter().map(Scenario::without_claims).collect(),
        };
        let ctx = EvalContext::new(
            plan.initial_wealth,
            plan.borrow_margin,
            median_claims(&scns).unwrap(),
        );
        let w = terminal_wealth_matrix(&report.catalogue, &scns, &ctx).unwrap();
        for &g in &plan.gammas {
            let sol = report
                .cell(g, StrategySet::All, mode)
                .unwrap()
                .outcome
                .as_ref()
                .unwrap();
            assert_eq!(entropic_risk(&sol.mixed_terminal, g).unwrap(), sol.rho);
            let cols: Vec<usize> = sol.weights.iter().map(|&(id, _)| id).collect();
            let alpha: Vec<f64> = sol.weights.iter().map(|&(_, a)| a).collect();
            let mixed = w.select_columns(&cols).unwrap().mix(&alpha).unwrap();
            for (a, b) in mixed.iter().zip(&sol.mixed_terminal) {
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
            }
        }
    }
}

#[test]
fn saved_scenarios_reproduce_the_report() {
    let model = ModelConfig::default_config();
    let plan = ExperimentPlan {
        n_scenarios: 1000,
        gammas: vec![0.1, 0.3],
        ..ExperimentPlan::for_model(&model)
    };
    let cfg = CatalogueConfig::default_config();
    let scenarios = simulate_scenarios(&plan, &model).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenarios.csv");
    save_scenarios_csv(&scenarios, &path).unwrap();
    let loaded = load_scenarios_csv(&path).unwrap();
    assert_eq!(loaded, scenarios);

    let a = run_with_scenarios(&plan, &cfg, &scenarios).unwrap();
    let b = run_with_scenarios(&plan, &cfg, &loaded).unwrap();
    for (x, y) in a.cells.iter().zip(&b.cells) {
        let (x, y) = (x.outcome.as_ref().unwrap(), y.outcome.as_ref().unwrap());
        assert!((x.rho - y.rho).abs() <= 1e-12);
    }
}

#[test]
fn extra_strategy_never_raises_the_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let opts = SolverOptions::default();
    for _ in 0..30 {
        let n = rng.random_range(20..200);
        let i = rng.random_range(2..8);
        let gamma = rng.random_range(0.05..1.0);
        let cols: Vec<Vec<f64>> = (0..=i)
            .map(|_| {
                let mu = rng.random_range(-1.0..1.0);
                let sd = rng.random_range(0.1..2.0);
                (0..n)
                    .map(|_| mu + sd * rng.random_range(-1.0..1.0))
                    .collect()
            })
            .collect();
        let small = TerminalWealthMatrix::from_columns(&cols[..i]).unwrap();
        let big = TerminalWealthMatrix::from_columns(&cols).unwrap();
        let base = optimize_weights(&small, gamma, &opts).unwrap();
        let mut start = base.weights.as_slice().to_vec();
        start.push(0.0);
        let start = SimplexWeights::new(start).unwrap();
        let grown = optimize_weights_from(&big, gamma, &start, &opts).unwrap();
        assert!(
            grown.value <= base.value,
            "{} > {}",
            grown.value,
            base.value
        );
    }
}

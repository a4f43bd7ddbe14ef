//! End-to-end experiment: simulate scenarios once, evaluate the catalogue
//! with and without claims, and optimize the diversified strategy over a
//! grid of risk aversions and strategy sets.

mod report;

pub use report::{render_text, write_objective_csv, write_outputs};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{ModelConfig, SimulationSettings};
use crate::economy::{generate_scenarios, Scenario};
use crate::error::{Error, Result};
use crate::riskopt::{
    entropic_risk, optimize_weights, optimize_weights_from, rank_strategies, SimplexWeights,
    SolverOptions, TerminalWealthMatrix,
};
use crate::strategies::{
    build_catalogue, median_claims, wealth_snapshot, CatalogueConfig, EvalContext, Family,
    StrategySet, StrategySpec,
};

/// Whether claims `c_t = S_t` are paid or switched off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LiabilityMode {
    With,
    Without,
}

impl LiabilityMode {
    pub fn label(self) -> &'static str {
        match self {
            LiabilityMode::With => "with",
            LiabilityMode::Without => "without",
        }
    }
}

/// Whether `spec` actually reacts to the liabilities under `mode`.
///
/// Without claims the CPPI floor is zero and CPPI is a fixed-proportions
/// strategy, so it counts as non-liability-driven there.
pub fn responds_to_liabilities(spec: &StrategySpec, mode: LiabilityMode) -> bool {
    match mode {
        LiabilityMode::With => spec.is_liability_driven(),
        LiabilityMode::Without => spec.is_liability_driven() && spec.family() != Family::Cppi,
    }
}

/// Family label under `mode`; zero-floor CPPI reads `CPPI/FP`.
pub fn family_label(spec: &StrategySpec, mode: LiabilityMode) -> String {
    match (spec.family(), mode) {
        (Family::Cppi, LiabilityMode::Without) => "CPPI/FP".into(),
        (f, _) => f.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub gammas: Vec<f64>,
    pub strategy_sets: Vec<StrategySet>,
    pub liability_modes: Vec<LiabilityMode>,
    pub n_scenarios: usize,
    pub seed: u64,
    pub initial_wealth: f64,
    pub horizon: usize,
    /// Spread over the 1-year yield on borrowed funds.
    pub borrow_margin: f64,
    pub top_k: usize,
    /// Date of the allocation-versus-wealth extract.
    pub scatter_time: usize,
    pub solver: SolverOptions,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            gammas: vec![0.05, 0.1, 0.3, 0.5],
            strategy_sets: vec![StrategySet::NonLdi, StrategySet::All],
            liability_modes: vec![LiabilityMode::With, LiabilityMode::Without],
            n_scenarios: 10_000,
            seed: 20070101,
            initial_wealth: 15.0,
            horizon: 30,
            borrow_margin: 0.01,
            top_k: 5,
            scatter_time: 15,
            solver: SolverOptions::default(),
        }
    }
}

impl ExperimentPlan {
    /// Default grid with size, seed and horizon taken from the model file.
    pub fn for_model(model: &ModelConfig) -> Self {
        Self {
            n_scenarios: model.simulation.n,
            seed: model.simulation.seed,
            horizon: model.simulation.horizon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.gammas.is_empty()
            || self.strategy_sets.is_empty()
            || self.liability_modes.is_empty()
        {
            return bad("plan needs at least one gamma, strategy set and liability mode".into());
        }
        if let Some(g) = self.gammas.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return bad(format!("risk aversion must be positive, got {g}"));
        }
        if self.n_scenarios == 0 {
            return bad("scenario count must be positive".into());
        }
        if !self.initial_wealth.is_finite() || !self.borrow_margin.is_finite() {
            return bad("initial wealth and borrowing margin must be finite".into());
        }
        if self.scatter_time > self.horizon {
            return bad(format!(
                "scatter date {} is beyond the horizon {}",
                self.scatter_time, self.horizon
            ));
        }
        Ok(())
    }

    fn eval_context(&self, scenarios: &[Scenario]) -> Result<EvalContext> {
        Ok(EvalContext::new(
            self.initial_wealth,
            self.borrow_margin,
            median_claims(scenarios)?,
        ))
    }
}

/// One optimization: a risk aversion, a strategy set and a liability mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellKey {
    pub gamma: f64,
    pub set: StrategySet,
    pub mode: LiabilityMode,
}

impl CellKey {
    /// File-name friendly label, e.g. `with_all_g0.3`.
    pub fn label(&self) -> String {
        format!("{}_{}_g{}", self.mode.label(), self.set.label(), self.gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterPoint {
    pub scenario: usize,
    /// Aggregate wealth `w_t`.
    pub wealth: f64,
    /// Aggregate share of wealth in the 5-year government bond.
    pub bond_share: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scatter {
    pub points: Vec<ScatterPoint>,
    /// Scenarios dropped because aggregate wealth was exactly zero.
    pub excluded: usize,
}

impl Scatter {
    /// Spearman rank correlation between wealth and bond share.
    pub fn rank_correlation(&self) -> Option<f64> {
        let w: Vec<f64> = self.points.iter().map(|p| p.wealth).collect();
        let b: Vec<f64> = self.points.iter().map(|p| p.bond_share).collect();
        spearman(&w, &b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSolution {
    pub rho: f64,
    /// Optimality certificate of the solver.
    pub gap: f64,
    pub iterations: usize,
    /// `(strategy id, α)` over the strategies of the set.
    pub weights: Vec<(usize, f64)>,
    /// Terminal wealth of the diversified strategy per scenario.
    pub mixed_terminal: Vec<f64>,
    /// Best single strategies of the set, `(strategy id, ρ)`.
    pub top: Vec<(usize, f64)>,
    pub scatter: Scatter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub key: CellKey,
    /// Error message when the cell failed.
    pub outcome: std::result::Result<CellSolution, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub plan: ExperimentPlan,
    pub catalogue: Vec<StrategySpec>,
    /// Ordered by liability mode, then gamma, then strategy set, as in the plan.
    pub cells: Vec<CellResult>,
}

impl RunReport {
    pub fn cell(&self, gamma: f64, set: StrategySet, mode: LiabilityMode) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.key.gamma == gamma && c.key.set == set && c.key.mode == mode)
    }

    pub fn rho(&self, gamma: f64, set: StrategySet, mode: LiabilityMode) -> Option<f64> {
        self.cell(gamma, set, mode)?
            .outcome
            .as_ref()
            .ok()
            .map(|s| s.rho)
    }

    /// `100 (ρ_nonLDI - ρ_all) / |ρ_nonLDI|`, from the reported values.
    pub fn reduction(&self, gamma: f64, mode: LiabilityMode) -> Option<f64> {
        let non = self.rho(gamma, StrategySet::NonLdi, mode)?;
        let all = self.rho(gamma, StrategySet::All, mode)?;
        Some(100.0 * (non - all) / non.abs())
    }
}

/// Terminal wealth plus the position at the scatter date for every
/// strategy and scenario, stored scenario-major.
struct Evaluated {
    terminal: TerminalWealthMatrix,
    wealth_at: Vec<f64>,
    bond_at: Vec<f64>,
}

fn evaluate_catalogue(
    specs: &[StrategySpec],
    scenarios: &[Scenario],
    ctx: &EvalContext,
    at: usize,
) -> Result<Evaluated> {
    let horizon = scenarios
        .first()
        .ok_or(Error::Empty("scenario set"))?
        .horizon();
    for spec in specs {
        spec.validate(horizon)?;
    }
    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = scenarios
        .par_iter()
        .map(|scn| {
            let mut term = Vec::with_capacity(specs.len());
            let mut wealth = Vec::with_capacity(specs.len());
            let mut bond = Vec::with_capacity(specs.len());
            for spec in specs {
                let s = wealth_snapshot(spec, scn, ctx, at)?;
                term.push(s.terminal);
                wealth.push(s.wealth);
                bond.push(s.holdings[1]);
            }
            Ok((term, wealth, bond))
        })
        .collect::<Result<_>>()?;
    let n = rows.len();
    let mut terminal = Vec::with_capacity(n * specs.len());
    let mut wealth_at = Vec::with_capacity(n * specs.len());
    let mut bond_at = Vec::with_capacity(n * specs.len());
    for (t, w, b) in rows {
        terminal.extend(t);
        wealth_at.extend(w);
        bond_at.extend(b);
    }
    Ok(Evaluated {
        terminal: TerminalWealthMatrix::new(n, specs.len(), terminal)?,
        wealth_at,
        bond_at,
    })
}

fn aggregate_scatter(ev: &Evaluated, cols: &[usize], alpha: &[f64]) -> Scatter {
    let width = ev.terminal.n_strategies();
    let mut out = Scatter::default();
    for k in 0..ev.terminal.n_scenarios() {
        let row = k * width;
        let mut wealth = 0.0;
        let mut bond = 0.0;
        for (&c, &a) in cols.iter().zip(alpha) {
            if a != 0.0 {
                wealth += a * ev.wealth_at[row + c];
                bond += a * ev.bond_at[row + c];
            }
        }
        if wealth == 0.0 {
            out.excluded += 1;
        } else {
            out.points.push(ScatterPoint {
                scenario: k,
                wealth,
                bond_share: bond / wealth,
            });
        }
    }
    out
}

/// Aggregate wealth and 5-year bond share at `t` of the `alpha`-mixture of
/// `specs`, one point per scenario.
pub fn scatter_extract(
    specs: &[StrategySpec],
    alpha: &SimplexWeights,
    scenarios: &[Scenario],
    ctx: &EvalContext,
    t: usize,
) -> Result<Scatter> {
    if specs.len() != alpha.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} strategies",
            alpha.len(),
            specs.len()
        )));
    }
    let ev = evaluate_catalogue(specs, scenarios, ctx, t)?;
    let cols: Vec<usize> = (0..specs.len()).collect();
    Ok(aggregate_scatter(&ev, &cols, alpha.as_slice()))
}

/// Simulates the plan's scenario set from the model calibration.
pub fn simulate_scenarios(plan: &ExperimentPlan, model: &ModelConfig) -> Result<Vec<Scenario>> {
    let settings = SimulationSettings {
        n: plan.n_scenarios,
        horizon: plan.horizon,
        seed: plan.seed,
        ..model.simulation.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    generate_scenarios(
        &model.initial_state,
        &model.coefficients,
        &settings,
        &mut rng,
    )
}

/// Simulates scenarios and runs every cell of the plan.
pub fn run_experiment(
    plan: &ExperimentPlan,
    model: &ModelConfig,
    catalogue: &CatalogueConfig,
) -> Result<RunReport> {
    plan.validate()?;
    let scenarios = simulate_scenarios(plan, model)?;
    run_with_scenarios(plan, catalogue, &scenarios)
}

/// Runs every cell of the plan on a given scenario set (claims `c_t = S_t`).
///
/// A failing cell is recorded in the report and the others proceed. Within
/// each liability mode and gamma the full set is warm-started from the
/// non-liability-driven optimum, so its value can only be lower.
pub fn run_with_scenarios(
    plan: &ExperimentPlan,
    catalogue: &CatalogueConfig,
    scenarios: &[Scenario],
) -> Result<RunReport> {
    plan.validate()?;
    let first = scenarios.first().ok_or(Error::Empty("scenario set"))?;
    if first.horizon() != plan.horizon {
        return Err(Error::DimensionMismatch(format!(
            "scenarios cover {} periods, plan expects {}",
            first.horizon(),
            plan.horizon
        )));
    }
    let specs = build_catalogue(catalogue, plan.horizon)?;
    if specs.is_empty() {
        return Err(Error::Empty("strategy catalogue"));
    }
    let mut cells = Vec::new();
    for &mode in &plan.liability_modes {
        let unpaid: Vec<Scenario>;
        let scns = match mode {
            LiabilityMode::With => scenarios,
            LiabilityMode::Without => {
                unpaid = scenarios.iter().map(Scenario::without_claims).collect();
                &unpaid
            }
        };
        let evaluated = plan
            .eval_context(scns)
            .and_then(|ctx| evaluate_catalogue(&specs, scns, &ctx, plan.scatter_time));
        for &gamma in &plan.gammas {
            let keys = plan
                .strategy_sets
                .iter()
                .map(|&set| CellKey { gamma, set, mode });
            match &evaluated {
                Ok(ev) => cells.extend(solve_gamma(plan, &specs, ev, keys.collect())),
                Err(e) => cells.extend(keys.map(|key| CellResult {
                    key,
                    outcome: Err(e.to_string()),
                })),
            }
        }
    }
    Ok(RunReport {
        plan: plan.clone(),
        catalogue: specs,
        cells,
    })
}

/// Solves the cells of one gamma and mode, non-liability-driven set first.
fn solve_gamma(
    plan: &ExperimentPlan,
    specs: &[StrategySpec],
    ev: &Evaluated,
    keys: Vec<CellKey>,
) -> Vec<CellResult> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by_key(|&i| keys[i].set != StrategySet::NonLdi);
    let mut results: Vec<Option<CellResult>> = vec![None; keys.len()];
    let mut warm: Option<Vec<(usize, f64)>> = None;
    for i in order {
        let key = keys[i];
        let outcome = solve_cell(plan, specs, ev, key, warm.as_deref());
        if key.set == StrategySet::NonLdi {
            if let Ok(s) = &outcome {
                warm = Some(s.weights.clone());
            }
        }
        results[i] = Some(CellResult {
            key,
            outcome: outcome.map_err(|e| e.to_string()),
        });
    }
    results.into_iter().flatten().collect()
}

fn solve_cell(
    plan: &ExperimentPlan,
    specs: &[StrategySpec],
    ev: &Evaluated,
    key: CellKey,
    warm: Option<&[(usize, f64)]>,
) -> Result<CellSolution> {
    let cols: Vec<usize> = (0..specs.len())
        .filter(|&i| key.set.contains(&specs[i]))
        .collect();
    if cols.is_empty() {
        return Err(Error::Empty("strategy set"));
    }
    let ids: Vec<usize> = cols.iter().map(|&c| specs[c].id).collect();
    let w = ev.terminal.select_columns(&cols)?;
    let start = warm.map(|prev| {
        ids.iter()
            .map(|id| prev.iter().find(|(p, _)| p == id).map_or(0.0, |&(_, a)| a))
            .collect::<Vec<f64>>()
    });
    let sol = match start.map(SimplexWeights::new) {
        Some(Ok(s)) => optimize_weights_from(&w, key.gamma, &s, &plan.solver)?,
        _ => optimize_weights(&w, key.gamma, &plan.solver)?,
    };
    let alpha = sol.weights.as_slice();
    let mixed_terminal = w.mix(alpha)?;
    let rho = entropic_risk(&mixed_terminal, key.gamma)?;
    let top = rank_strategies(&w, &ids, key.gamma, plan.top_k.min(ids.len()))?;
    let scatter = aggregate_scatter(ev, &cols, alpha);
    Ok(CellSolution {
        rho,
        gap: sol.gap,
        iterations: sol.iterations,
        weights: ids.iter().copied().zip(alpha.iter().copied()).collect(),
        mixed_terminal,
        top,
        scatter,
    })
}

fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties; `None` for fewer
/// than two points or a constant input.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

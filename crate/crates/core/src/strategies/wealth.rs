use rayon::prelude::*;

use super::{allocate, cppi_floor, Mix, Observation, StrategyKind, StrategySpec};
use crate::economy::Scenario;
use crate::error::{Error, Result};
use crate::riskopt::TerminalWealthMatrix;
use crate::N_ASSETS;

/// Settings shared by every strategy evaluated on one scenario set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalContext {
    pub initial_wealth: f64,
    /// Spread over the 1-year yield paid on borrowed funds.
    pub borrow_margin: f64,
    /// `c̄_1..c̄_T` of the scenario set, used by CPPI floors.
    pub median_claims: Vec<f64>,
}

impl EvalContext {
    pub fn new(initial_wealth: f64, borrow_margin: f64, median_claims: Vec<f64>) -> Self {
        Self {
            initial_wealth,
            borrow_margin,
            median_claims,
        }
    }

    /// Context without liabilities for CPPI purposes (zero floor).
    pub fn without_floor(initial_wealth: f64, borrow_margin: f64, horizon: usize) -> Self {
        Self::new(initial_wealth, borrow_margin, vec![0.0; horizon])
    }

    /// Gross growth of a loan taken at `t - 1`: `exp(Y¹_{t-1} + margin)`.
    pub fn loan_growth(&self, scn: &Scenario, t: usize) -> f64 {
        (scn.short_yield(t - 1) + self.borrow_margin).exp()
    }
}

/// Net wealth and cash positions of one strategy along one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct WealthPath {
    /// `w_0..w_T`, net of claims paid.
    pub wealth: Vec<f64>,
    /// `h_{t,j}`: cash in asset `j` from `t` to `t + 1`.
    pub holdings: Vec<Mix>,
    /// Money-market balance, nonzero (negative) only while wealth is negative.
    pub loan: Vec<f64>,
}

impl WealthPath {
    pub fn terminal(&self) -> f64 {
        *self.wealth.last().expect("wealth path is never empty")
    }

    /// Largest relative violation of `w_t = Σ_j R_{t,j} h_{t-1,j} + L_t ℓ_{t-1} - c_t`
    /// and of `Σ_j h_{t,j} + ℓ_t = w_t`.
    pub fn max_budget_residual(&self, scn: &Scenario, ctx: &EvalContext) -> f64 {
        let mut worst: f64 = 0.0;
        for t in 0..self.wealth.len() {
            let w = self.wealth[t];
            let held: f64 = self.holdings[t].iter().sum::<f64>() + self.loan[t];
            worst = worst.max((held - w).abs() / w.abs().max(1.0));
            if t > 0 {
                let r = &scn.returns[t - 1];
                let grown: f64 = (0..N_ASSETS)
                    .map(|j| r[j] * self.holdings[t - 1][j])
                    .sum::<f64>()
                    + ctx.loan_growth(scn, t) * self.loan[t - 1];
                let expected = grown - scn.claims[t];
                worst = worst.max((expected - w).abs() / w.abs().max(1.0));
            }
        }
        worst
    }
}

/// Where the strategy stands at time `t` after rebalancing.
struct Step<'a> {
    t: usize,
    wealth: f64,
    holdings: &'a Mix,
    loan: f64,
}

/// Runs the self-financing recursion, reporting each period to `sink`.
///
/// Budgets hold with equality. While net wealth is negative the whole
/// balance sits in a loan accruing the 1-year yield plus the margin; the rule
/// resumes once wealth is nonnegative again.
fn simulate<F: FnMut(Step<'_>)>(
    spec: &StrategySpec,
    scn: &Scenario,
    ctx: &EvalContext,
    mut sink: F,
) -> Result<()> {
    let horizon = scn.horizon();
    let floor = match &spec.kind {
        StrategyKind::Cppi { discount_rate, .. } => {
            if ctx.median_claims.len() != horizon {
                return Err(Error::DimensionMismatch(format!(
                    "median claims cover {} periods, scenario has {horizon}",
                    ctx.median_claims.len()
                )));
            }
            Some(cppi_floor(&ctx.median_claims, *discount_rate)?.floor)
        }
        _ => None,
    };
    let floor_at = |t: usize| floor.as_ref().map_or(0.0, |f| f[t]);
    let w0 = ctx.initial_wealth;
    let rebalance = |t: usize, w: f64| -> Result<Mix> {
        let pi = allocate(spec, &Observation::at(scn, t, w, w0, floor_at(t)))?;
        Ok(pi.map(|p| p * w))
    };

    let (mut holdings, mut loan) = if w0 >= 0.0 {
        (rebalance(0, w0)?, 0.0)
    } else {
        ([0.0; N_ASSETS], w0)
    };
    sink(Step {
        t: 0,
        wealth: w0,
        holdings: &holdings,
        loan,
    });
    for t in 1..=horizon {
        let r = &scn.returns[t - 1];
        let claim = scn.claims[t];
        let mut grown = [0.0; N_ASSETS];
        for j in 0..N_ASSETS {
            grown[j] = r[j] * holdings[j];
        }
        let loan_value = if loan != 0.0 {
            ctx.loan_growth(scn, t) * loan
        } else {
            0.0
        };
        let wealth = grown.iter().sum::<f64>() + loan_value - claim;
        if wealth < 0.0 {
            holdings = [0.0; N_ASSETS];
            loan = wealth;
        } else {
            holdings = match &spec.kind {
                StrategyKind::BuyAndHold { initial } if loan == 0.0 => {
                    let mut h = grown;
                    for j in 0..N_ASSETS {
                        h[j] -= initial[j] * claim;
                    }
                    h
                }
                _ => rebalance(t, wealth)?,
            };
            loan = 0.0;
        }
        sink(Step {
            t,
            wealth,
            holdings: &holdings,
            loan,
        });
    }
    Ok(())
}

/// Full wealth and holdings path of `spec` on `scn`.
pub fn propagate_wealth(
    spec: &StrategySpec,
    scn: &Scenario,
    ctx: &EvalContext,
) -> Result<WealthPath> {
    spec.validate(scn.horizon())?;
    let n = scn.horizon() + 1;
    let mut path = WealthPath {
        wealth: Vec::with_capacity(n),
        holdings: Vec::with_capacity(n),
        loan: Vec::with_capacity(n),
    };
    simulate(spec, scn, ctx, |s| {
        debug_assert_eq!(s.t, path.wealth.len());
        path.wealth.push(s.wealth);
        path.holdings.push(*s.holdings);
        path.loan.push(s.loan);
    })?;
    Ok(path)
}

/// Terminal wealth only; skips validation and allocation of the path.
pub fn terminal_wealth(spec: &StrategySpec, scn: &Scenario, ctx: &EvalContext) -> Result<f64> {
    let mut last = ctx.initial_wealth;
    simulate(spec, scn, ctx, |s| last = s.wealth)?;
    Ok(last)
}

/// Terminal wealth with the position held at one intermediate date.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snapshot {
    pub terminal: f64,
    /// `w_t` at the snapshot date.
    pub wealth: f64,
    /// `h_t` at the snapshot date, after rebalancing.
    pub holdings: Mix,
}

/// Terminal wealth and the position at `at`, without storing the path.
pub fn wealth_snapshot(
    spec: &StrategySpec,
    scn: &Scenario,
    ctx: &EvalContext,
    at: usize,
) -> Result<Snapshot> {
    if at > scn.horizon() {
        return Err(Error::InvalidArgument(format!(
            "snapshot at t = {at} beyond horizon {}",
            scn.horizon()
        )));
    }
    let mut snap = Snapshot {
        terminal: ctx.initial_wealth,
        wealth: ctx.initial_wealth,
        holdings: [0.0; N_ASSETS],
    };
    simulate(spec, scn, ctx, |s| {
        if s.t == at {
            snap.wealth = s.wealth;
            snap.holdings = *s.holdings;
        }
        snap.terminal = s.wealth;
    })?;
    Ok(snap)
}

/// Wealth path of the cash-level mixture `Σ αⁱ hⁱ`, recomputed from the
/// mixed holdings through the budget recursion.
pub fn mixture_wealth(
    paths: &[&WealthPath],
    alpha: &[f64],
    scn: &Scenario,
    ctx: &EvalContext,
) -> Result<Vec<f64>> {
    if paths.len() != alpha.len() || paths.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} paths for {} weights",
            paths.len(),
            alpha.len()
        )));
    }
    let n = scn.horizon() + 1;
    if paths.iter().any(|p| p.wealth.len() != n) {
        return Err(Error::DimensionMismatch(
            "path length differs from scenario".into(),
        ));
    }
    let mixed_at = |t: usize| -> (Mix, f64) {
        let mut h = [0.0; N_ASSETS];
        let mut l = 0.0;
        for (p, &a) in paths.iter().zip(alpha) {
            for (hj, pj) in h.iter_mut().zip(&p.holdings[t]) {
                *hj += a * pj;
            }
            l += a * p.loan[t];
        }
        (h, l)
    };
    let mut out = Vec::with_capacity(n);
    out.push(
        paths
            .iter()
            .zip(alpha)
            .map(|(p, &a)| a * p.wealth[0])
            .sum::<f64>(),
    );
    for t in 1..n {
        let (h, l) = mixed_at(t - 1);
        let r = &scn.returns[t - 1];
        let grown: f64 = (0..N_ASSETS).map(|j| r[j] * h[j]).sum();
        let weight: f64 = alpha.iter().sum();
        out.push(grown + ctx.loan_growth(scn, t) * l - weight * scn.claims[t]);
    }
    Ok(out)
}

/// `W[k][i]`: terminal wealth of strategy `i` on scenario `k`, evaluated in
/// parallel over scenarios.
pub fn terminal_wealth_matrix(
    specs: &[StrategySpec],
    scenarios: &[Scenario],
    ctx: &EvalContext,
) -> Result<TerminalWealthMatrix> {
    let horizon = scenarios
        .first()
        .ok_or(Error::Empty("scenario set"))?
        .horizon();
    for spec in specs {
        spec.validate(horizon)?;
    }
    let rows: Vec<Vec<f64>> = scenarios
        .par_iter()
        .map(|scn| {
            if scn.horizon() != horizon {
                return Err(Error::DimensionMismatch(
                    "scenarios have different horizons".into(),
                ));
            }
            specs
                .iter()
                .map(|spec| terminal_wealth(spec, scn, ctx))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    TerminalWealthMatrix::from_rows(rows)
}

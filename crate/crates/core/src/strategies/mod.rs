//! Parametric basis strategies and their self-financing wealth dynamics.
//!
//! Every strategy except buy-and-hold is a rule mapping the information
//! available at time `t` to a vector of portfolio proportions `π_t`; holdings
//! are then `h_t = π_t w_t`. Buy-and-hold is holdings based and handled
//! directly in [`propagate_wealth`].

mod catalogue;
mod wealth;

pub use catalogue::{
    build_catalogue, family_counts, write_catalogue_csv, CatalogueConfig, StrategySet,
};
pub use wealth::{
    mixture_wealth, propagate_wealth, terminal_wealth, terminal_wealth_matrix, wealth_snapshot,
    EvalContext, Snapshot, WealthPath,
};

use std::fmt;

use crate::economy::Scenario;
use crate::error::{Error, Result};
use crate::N_ASSETS;

/// Portfolio proportions over the four assets.
pub type Mix = [f64; N_ASSETS];

const MIX_TOL: f64 = 1e-12;

fn check_mix(mix: &Mix, what: &str) -> Result<()> {
    if mix.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidStrategy(format!(
            "{what}: proportions must be nonnegative, got {mix:?}"
        )));
    }
    let sum: f64 = mix.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidStrategy(format!(
            "{what}: proportions sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

fn check_asset(j: usize, what: &str) -> Result<()> {
    if j >= N_ASSETS {
        return Err(Error::InvalidStrategy(format!(
            "{what}: asset index {} outside 1..={N_ASSETS}",
            j + 1
        )));
    }
    Ok(())
}

/// Unit vector on asset `j` (zero-based).
pub fn unit_mix(j: usize) -> Mix {
    let mut m = [0.0; N_ASSETS];
    m[j] = 1.0;
    m
}

/// Split of the assets into a safe and a risky group, each with its own
/// fixed within-group proportions.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetPartition {
    /// Zero-based asset indices.
    pub safe: Vec<usize>,
    pub risky: Vec<usize>,
    /// Full-length proportions supported on `safe` (resp. `risky`).
    pub safe_mix: Mix,
    pub risky_mix: Mix,
}

impl AssetPartition {
    /// Builds a partition from zero-based sets and within-set weights listed
    /// in set order.
    pub fn new(
        safe: Vec<usize>,
        safe_weights: &[f64],
        risky: Vec<usize>,
        risky_weights: &[f64],
    ) -> Result<Self> {
        if safe.len() != safe_weights.len() || risky.len() != risky_weights.len() {
            return Err(Error::InvalidStrategy(
                "partition weights must match set sizes".into(),
            ));
        }
        let mut safe_mix = [0.0; N_ASSETS];
        let mut risky_mix = [0.0; N_ASSETS];
        for (&j, &w) in safe.iter().zip(safe_weights) {
            check_asset(j, "safe set")?;
            safe_mix[j] = w;
        }
        for (&j, &w) in risky.iter().zip(risky_weights) {
            check_asset(j, "risky set")?;
            risky_mix[j] = w;
        }
        let p = Self {
            safe,
            risky,
            safe_mix,
            risky_mix,
        };
        p.validate()?;
        Ok(p)
    }

    /// Government bonds safe, corporate bonds and equity risky; all of each
    /// group in its last asset (5-year bonds and equity).
    pub fn default_split() -> Self {
        Self::new(vec![0, 1], &[0.0, 1.0], vec![2, 3], &[0.0, 1.0])
            .expect("default partition is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = [0u8; N_ASSETS];
        for &j in self.safe.iter().chain(&self.risky) {
            check_asset(j, "partition")?;
            seen[j] += 1;
        }
        if seen.iter().any(|&c| c != 1) {
            return Err(Error::InvalidStrategy(
                "safe and risky sets must partition the assets".into(),
            ));
        }
        check_mix(&self.safe_mix, "safe mix")?;
        check_mix(&self.risky_mix, "risky mix")?;
        for j in 0..N_ASSETS {
            if self.safe_mix[j] > 0.0 && !self.safe.contains(&j)
                || self.risky_mix[j] > 0.0 && !self.risky.contains(&j)
            {
                return Err(Error::InvalidStrategy(
                    "within-set proportions must stay inside their set".into(),
                ));
            }
        }
        Ok(())
    }

    /// Proportions with exposure `e` to the risky group.
    fn blend(&self, e: f64) -> Mix {
        std::array::from_fn(|j| e * self.risky_mix[j] + (1.0 - e) * self.safe_mix[j])
    }
}

/// `σ^{a,b}(s) = 1 / (1 + e^{-b(s + a)})`.
pub fn spread_sigmoid(a: f64, b: f64, s: f64) -> f64 {
    crate::mortality::logistic(b * (s + a))
}

/// `g^a(s) = min(a s, 1)`, floored at zero.
pub fn capped_linear(a: f64, s: f64) -> f64 {
    (a * s).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub enum StrategyKind {
    /// Holds the initial allocation and pays claims pro rata to it.
    BuyAndHold { initial: Mix },
    /// Rebalances to constant proportions every period.
    FixedProportions { weights: Mix },
    /// Risky exposure `a - b t`.
    TargetDateFund {
        a: f64,
        b: f64,
        partition: AssetPartition,
    },
    /// Risky exposure `m max(1 - F_t / w_t, 0)` with the floor `F_t` the
    /// value of median outstanding claims discounted at `r`.
    Cppi {
        multiplier: f64,
        discount_rate: f64,
        partition: AssetPartition,
    },
    /// Share `σ^{a,b}(sT)` in `long`, the rest in `short`.
    TermSpread {
        a: f64,
        b: f64,
        long: usize,
        short: usize,
    },
    /// Share `σ^{a,b}(sC)` in `risky`, the rest in `safer`.
    CreditSpread {
        a: f64,
        b: f64,
        risky: usize,
        safer: usize,
    },
    /// Share `g^a(S_t)` in `target`, the rest in `rest`.
    SurvivalIndex { a: f64, target: usize, rest: Mix },
    /// Share `g^a(w_t / w_0)` in `target`, the rest in `rest`.
    Wealth { a: f64, target: usize, rest: Mix },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    BuyAndHold,
    FixedProportions,
    TargetDateFund,
    Cppi,
    TermSpread,
    CreditSpread,
    SurvivalIndex,
    Wealth,
}

impl Family {
    /// Whether allocations respond to liability-linked information.
    pub fn is_liability_driven(self) -> bool {
        !matches!(
            self,
            Family::BuyAndHold | Family::FixedProportions | Family::TargetDateFund
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            Family::BuyAndHold => "BH",
            Family::FixedProportions => "FP",
            Family::TargetDateFund => "TDF",
            Family::Cppi => "CPPI",
            Family::TermSpread => "TermSpread",
            Family::CreditSpread => "CreditSpread",
            Family::SurvivalIndex => "SurvivalIndex",
            Family::Wealth => "Wealth",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategySpec {
    pub id: usize,
    pub kind: StrategyKind,
}

fn fmt_mix(m: &Mix) -> String {
    let parts: Vec<String> = m.iter().map(|x| x.to_string()).collect();
    format!("({})", parts.join(" "))
}

impl StrategySpec {
    pub fn new(id: usize, kind: StrategyKind) -> Self {
        Self { id, kind }
    }

    pub fn family(&self) -> Family {
        match self.kind {
            StrategyKind::BuyAndHold { .. } => Family::BuyAndHold,
            StrategyKind::FixedProportions { .. } => Family::FixedProportions,
            StrategyKind::TargetDateFund { .. } => Family::TargetDateFund,
            StrategyKind::Cppi { .. } => Family::Cppi,
            StrategyKind::TermSpread { .. } => Family::TermSpread,
            StrategyKind::CreditSpread { .. } => Family::CreditSpread,
            StrategyKind::SurvivalIndex { .. } => Family::SurvivalIndex,
            StrategyKind::Wealth { .. } => Family::Wealth,
        }
    }

    pub fn is_liability_driven(&self) -> bool {
        self.family().is_liability_driven()
    }

    /// Parameter summary with one-based asset indices, `;`-separated.
    pub fn params(&self) -> String {
        let partition = |p: &AssetPartition| {
            format!(
                "safe={};risky={}",
                fmt_mix(&p.safe_mix),
                fmt_mix(&p.risky_mix)
            )
        };
        match &self.kind {
            StrategyKind::BuyAndHold { initial } => format!("pi0={}", fmt_mix(initial)),
            StrategyKind::FixedProportions { weights } => format!("pi={}", fmt_mix(weights)),
            StrategyKind::TargetDateFund { a, b, partition: p } => {
                format!("a={a};b={b};{}", partition(p))
            }
            StrategyKind::Cppi {
                multiplier,
                discount_rate,
                partition: p,
            } => format!("m={multiplier};r={discount_rate};{}", partition(p)),
            StrategyKind::TermSpread { a, b, long, short } => {
                format!("a={a};b={b};long={};short={}", long + 1, short + 1)
            }
            StrategyKind::CreditSpread { a, b, risky, safer } => {
                format!("a={a};b={b};risky={};safer={}", risky + 1, safer + 1)
            }
            StrategyKind::SurvivalIndex { a, target, rest } => {
                format!("a={a};target={};rest={}", target + 1, fmt_mix(rest))
            }
            StrategyKind::Wealth { a, target, rest } => {
                format!("a={a};target={};rest={}", target + 1, fmt_mix(rest))
            }
        }
    }

    /// Checks parameter constraints for a run of `horizon` periods.
    pub fn validate(&self, horizon: usize) -> Result<()> {
        let ctx = |msg: String| Error::InvalidStrategy(format!("strategy {}: {msg}", self.id));
        match &self.kind {
            StrategyKind::BuyAndHold { initial } => check_mix(initial, "buy-and-hold"),
            StrategyKind::FixedProportions { weights } => check_mix(weights, "fixed proportions"),
            StrategyKind::TargetDateFund { a, b, partition } => {
                partition.validate()?;
                // Exposure is linear in t, so checking both ends suffices.
                let end = a - b * horizon as f64;
                if !(a.is_finite() && b.is_finite())
                    || *a < 0.0
                    || end < -MIX_TOL
                    || *a > 1.0 + MIX_TOL
                    || end > 1.0 + MIX_TOL
                {
                    return Err(ctx(format!(
                        "target date fund needs a >= 0 and a - bT >= 0 with exposure at most 1 \
                         (a={a}, b={b}, T={horizon})"
                    )));
                }
                Ok(())
            }
            StrategyKind::Cppi {
                multiplier,
                discount_rate,
                partition,
            } => {
                partition.validate()?;
                if !(*multiplier >= 0.0 && multiplier.is_finite()) {
                    return Err(ctx(format!(
                        "CPPI multiplier must be >= 0, got {multiplier}"
                    )));
                }
                if !(*discount_rate > -1.0 && discount_rate.is_finite()) {
                    return Err(ctx(format!(
                        "CPPI discount rate must exceed -1, got {discount_rate}"
                    )));
                }
                Ok(())
            }
            StrategyKind::TermSpread { a, b, long, short }
            | StrategyKind::CreditSpread {
                a,
                b,
                risky: long,
                safer: short,
            } => {
                check_asset(*long, "spread strategy")?;
                check_asset(*short, "spread strategy")?;
                if long == short {
                    return Err(ctx("spread strategy needs two distinct assets".into()));
                }
                if !(*b > 0.0 && b.is_finite() && a.is_finite()) {
                    return Err(ctx(format!("spread strategy needs b > 0, got b={b}")));
                }
                Ok(())
            }
            StrategyKind::SurvivalIndex { a, target, rest }
            | StrategyKind::Wealth { a, target, rest } => {
                check_asset(*target, "target asset")?;
                check_mix(rest, "remainder mix")?;
                if !(*a >= 0.0 && a.is_finite()) {
                    return Err(ctx(format!("slope a must be >= 0, got {a}")));
                }
                Ok(())
            }
        }
    }
}

/// Information available to a strategy at the start of period `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub t: usize,
    pub wealth: f64,
    pub initial_wealth: f64,
    pub survival: f64,
    pub term_spread: f64,
    pub credit_spread: f64,
    /// CPPI floor `F_t`; zero for other families.
    pub floor: f64,
}

impl Observation {
    pub fn at(scn: &Scenario, t: usize, wealth: f64, initial_wealth: f64, floor: f64) -> Self {
        Self {
            t,
            wealth,
            initial_wealth,
            survival: scn.survival[t],
            term_spread: scn.term_spread[t],
            credit_spread: scn.credit_spread[t],
            floor,
        }
    }
}

/// Portfolio proportions `π_t` chosen by `spec` given `obs`.
///
/// Buy-and-hold returns its initial allocation; its later holdings are not
/// proportion based.
pub fn allocate(spec: &StrategySpec, obs: &Observation) -> Result<Mix> {
    let mix = match &spec.kind {
        StrategyKind::BuyAndHold { initial } => *initial,
        StrategyKind::FixedProportions { weights } => *weights,
        StrategyKind::TargetDateFund { a, b, partition } => {
            partition.blend((a - b * obs.t as f64).clamp(0.0, 1.0))
        }
        StrategyKind::Cppi {
            multiplier,
            partition,
            ..
        } => {
            let e = if obs.wealth <= 0.0 {
                0.0
            } else {
                multiplier * (1.0 - obs.floor / obs.wealth).max(0.0)
            };
            partition.blend(e.min(1.0))
        }
        StrategyKind::TermSpread { a, b, long, short } => {
            two_asset(*long, *short, spread_sigmoid(*a, *b, obs.term_spread))
        }
        StrategyKind::CreditSpread { a, b, risky, safer } => {
            two_asset(*risky, *safer, spread_sigmoid(*a, *b, obs.credit_spread))
        }
        StrategyKind::SurvivalIndex { a, target, rest } => {
            target_and_rest(*target, rest, capped_linear(*a, obs.survival))
        }
        StrategyKind::Wealth { a, target, rest } => target_and_rest(
            *target,
            rest,
            capped_linear(*a, obs.wealth / obs.initial_wealth),
        ),
    };
    let sum: f64 = mix.iter().sum();
    if !sum.is_finite() || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Internal(format!(
            "strategy {} produced proportions {mix:?}",
            spec.id
        )));
    }
    Ok(mix)
}

fn two_asset(first: usize, second: usize, share: f64) -> Mix {
    let mut m = [0.0; N_ASSETS];
    m[first] = share;
    m[second] += 1.0 - share;
    m
}

fn target_and_rest(target: usize, rest: &Mix, share: f64) -> Mix {
    let mut m = [0.0; N_ASSETS];
    for j in 0..N_ASSETS {
        m[j] = (1.0 - share) * rest[j];
    }
    m[target] += share;
    m
}

/// Median claim path and the CPPI floor derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct FloorPath {
    /// `F_0..F_T`.
    pub floor: Vec<f64>,
    pub rate: f64,
    /// `c̄_1..c̄_T` (index `t - 1` holds `c̄_t`).
    pub median_claims: Vec<f64>,
}

/// Per-period lower median of claims `c̄_1..c̄_T` (index `t - 1` holds `c̄_t`).
pub fn median_claims(scenarios: &[Scenario]) -> Result<Vec<f64>> {
    let first = scenarios.first().ok_or(Error::Empty("scenario set"))?;
    let horizon = first.horizon();
    if scenarios.iter().any(|s| s.horizon() != horizon) {
        return Err(Error::DimensionMismatch(
            "scenarios have different horizons".into(),
        ));
    }
    let mut column = Vec::with_capacity(scenarios.len());
    Ok((1..=horizon)
        .map(|t| {
            column.clear();
            column.extend(scenarios.iter().map(|s| s.claims[t]));
            let mid = (column.len() - 1) / 2;
            *column.select_nth_unstable_by(mid, |a, b| a.total_cmp(b)).1
        })
        .collect())
}

/// Floor `F_t`: median claims after `t` discounted at `r`, so `F_T = 0` and
/// `F_{t-1} = (F_t + c̄_t) / (1 + r)`.
pub fn cppi_floor(median_claims: &[f64], rate: f64) -> Result<FloorPath> {
    if !(rate > -1.0) {
        return Err(Error::InvalidArgument(format!(
            "discount rate must exceed -1, got {rate}"
        )));
    }
    let horizon = median_claims.len();
    let mut floor = vec![0.0; horizon + 1];
    for t in (1..=horizon).rev() {
        floor[t - 1] = (floor[t] + median_claims[t - 1]) / (1.0 + rate);
    }
    Ok(FloorPath {
        floor,
        rate,
        median_claims: median_claims.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn obs(t: usize, wealth: f64) -> Observation {
        Observation {
            t,
            wealth,
            initial_wealth: 15.0,
            survival: 1.0,
            term_spread: 0.0,
            credit_spread: 0.0,
            floor: 0.0,
        }
    }

    fn spec(kind: StrategyKind) -> StrategySpec {
        StrategySpec::new(0, kind)
    }

    #[test]
    fn term_spread_midpoint() {
        let s = spec(StrategyKind::TermSpread {
            a: -0.5,
            b: 5.0,
            long: 1,
            short: 0,
        });
        let o = Observation {
            term_spread: 0.5,
            ..obs(0, 15.0)
        };
        let pi = allocate(&s, &o).unwrap();
        assert_eq!(pi, [0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn survival_index_at_cap() {
        let s = spec(StrategyKind::SurvivalIndex {
            a: 1.0,
            target: 1,
            rest: unit_mix(3),
        });
        assert_eq!(allocate(&s, &obs(0, 15.0)).unwrap(), [0.0, 1.0, 0.0, 0.0]);
        let half = Observation {
            survival: 0.5,
            ..obs(3, 15.0)
        };
        let s = spec(StrategyKind::SurvivalIndex {
            a: 0.75,
            target: 1,
            rest: unit_mix(3),
        });
        let pi = allocate(&s, &half).unwrap();
        assert!((pi[1] - 0.375).abs() < 1e-15 && (pi[3] - 0.625).abs() < 1e-15);
    }

    #[test]
    fn cppi_cushion_exposure() {
        let s = spec(StrategyKind::Cppi {
            multiplier: 0.2,
            discount_rate: 0.04,
            partition: AssetPartition::default_split(),
        });
        let o = Observation {
            floor: 12.0,
            ..obs(0, 15.0)
        };
        let pi = allocate(&s, &o).unwrap();
        assert!((pi[3] - 0.04).abs() < 1e-15);
        assert!((pi[1] - 0.96).abs() < 1e-15);
        // Wealth below the floor or nonpositive: empty cushion.
        let under = Observation {
            floor: 20.0,
            ..obs(0, 15.0)
        };
        assert_eq!(allocate(&s, &under).unwrap()[3], 0.0);
        assert_eq!(allocate(&s, &obs(0, -1.0)).unwrap()[3], 0.0);
    }

    #[test]
    fn target_date_exposure() {
        let s = spec(StrategyKind::TargetDateFund {
            a: 0.25,
            b: 0.005,
            partition: AssetPartition::default_split(),
        });
        let pi = allocate(&s, &obs(10, 15.0)).unwrap();
        assert!((pi[3] - 0.2).abs() < 1e-15);
        assert!((pi[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn target_date_feasibility() {
        let bad = spec(StrategyKind::TargetDateFund {
            a: 0.2,
            b: 0.01,
            partition: AssetPartition::default_split(),
        });
        assert!(bad.validate(30).is_err());
        assert!(bad.validate(20).is_ok());
    }

    #[test]
    fn partition_must_cover_assets() {
        assert!(AssetPartition::new(vec![0], &[1.0], vec![2, 3], &[0.5, 0.5]).is_err());
        assert!(
            AssetPartition::new(vec![0, 1], &[0.5, 0.5], vec![1, 2, 3], &[0.2, 0.3, 0.5]).is_err()
        );
        assert!(AssetPartition::new(vec![0, 1], &[0.6, 0.5], vec![2, 3], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn median_claims_examples() {
        let base = Scenario {
            returns: vec![[1.0; 4]; 6],
            claims: vec![1.0, 0.99, 0.97, 0.95, 0.9, 0.8, 0.7],
            survival: vec![1.0; 7],
            term_spread: vec![0.0; 7],
            credit_spread: vec![0.0; 7],
            log_short_yield: vec![0.0; 7],
        };
        let same = vec![base.clone(); 4];
        assert_eq!(median_claims(&same).unwrap(), base.claims[1..].to_vec());

        let mut three = vec![base.clone(); 3];
        for (s, c) in three.iter_mut().zip([0.9, 0.8, 0.85]) {
            s.claims[5] = c;
        }
        assert_eq!(median_claims(&three).unwrap()[4], 0.85);

        // Lower median for an even count.
        let mut two = vec![base.clone(); 2];
        two[0].claims[1] = 0.5;
        two[1].claims[1] = 0.7;
        assert_eq!(median_claims(&two).unwrap()[0], 0.5);

        assert!(matches!(median_claims(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn floor_examples() {
        let f = cppi_floor(&[0.0; 5], 0.03).unwrap();
        assert!(f.floor.iter().all(|&x| x == 0.0));
        let f = cppi_floor(&[1.0], 0.04).unwrap();
        assert!((f.floor[0] - 1.0 / 1.04).abs() < 1e-15);
        assert_eq!(f.floor[1], 0.0);
        assert_eq!(
            cppi_floor(&[1.0, 1.0], 0.0).unwrap().floor,
            vec![2.0, 1.0, 0.0]
        );
        assert!(cppi_floor(&[1.0], -1.5).is_err());
    }

    proptest! {
        #[test]
        fn floor_satisfies_both_recursions(
            claims in proptest::collection::vec(0.0..2.0f64, 1..40), r in 0.0..0.1f64,
        ) {
            let f = cppi_floor(&claims, r).unwrap();
            let t_end = claims.len();
            prop_assert_eq!(f.floor[t_end], 0.0);
            for t in 1..=t_end {
                let forward = (1.0 + r) * f.floor[t - 1] - claims[t - 1];
                prop_assert!((forward - f.floor[t]).abs() <= 1e-12 * (1.0 + f.floor[t - 1]));
            }
        }

        #[test]
        fn bounded_families_stay_in_unit_interval(
            a in 0.0..5.0f64, s in -2.0..3.0f64, w in -5.0..60.0f64,
        ) {
            let si = spec(StrategyKind::SurvivalIndex { a, target: 1, rest: unit_mix(3) });
            let we = spec(StrategyKind::Wealth { a, target: 0, rest: unit_mix(3) });
            let o = Observation { survival: s.clamp(0.0, 1.0), ..obs(1, w) };
            for pi in [allocate(&si, &o).unwrap(), allocate(&we, &o).unwrap()] {
                prop_assert!(pi.iter().all(|&x| (0.0..=1.0).contains(&x)));
                prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}

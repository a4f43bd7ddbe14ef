//! Expansion of per-family parameter grids into a strategy catalogue.
//!
//! Asset indices in the configuration are one-based: 1 = 1-year bills,
//! 2 = 5-year government bonds, 3 = corporate bonds, 4 = equity.

use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use super::{unit_mix, AssetPartition, Family, Mix, StrategyKind, StrategySpec};
use crate::error::{Error, Result};
use crate::N_ASSETS;

const DEFAULT_CATALOGUE: &str = include_str!("../../config/catalogue.toml");

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub safe: Vec<usize>,
    pub safe_mix: Vec<f64>,
    pub risky: Vec<usize>,
    pub risky_mix: Vec<f64>,
}

/// Two-asset mixes: `share` in `tilt`, the rest in each listed base asset.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TiltGrid {
    pub bases: Vec<usize>,
    pub tilt: usize,
    pub shares: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SlopeGrid {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CppiGrid {
    pub m: Vec<f64>,
    pub r: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SpreadGrid {
    /// Asset receiving the sigmoid share.
    pub primary: usize,
    /// Asset receiving the remainder.
    pub secondary: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CappedGrid {
    pub targets: Vec<usize>,
    pub rest: usize,
    pub a: Vec<f64>,
}

/// Parameter grids per family. Missing sections contribute nothing.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CatalogueConfig {
    pub partition: Option<PartitionConfig>,
    pub buy_and_hold: Option<TiltGrid>,
    pub fixed_proportions: Option<TiltGrid>,
    pub target_date_fund: Option<SlopeGrid>,
    pub cppi: Option<CppiGrid>,
    pub term_spread: Option<SpreadGrid>,
    pub credit_spread: Option<SpreadGrid>,
    pub survival_index: Option<CappedGrid>,
    pub wealth: Option<CappedGrid>,
}

impl CatalogueConfig {
    pub fn default_config() -> Self {
        Self::from_toml_str(DEFAULT_CATALOGUE).expect("shipped catalogue is valid")
    }

    pub fn default_toml() -> &'static str {
        DEFAULT_CATALOGUE
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    fn partition(&self) -> Result<AssetPartition> {
        match &self.partition {
            None => Ok(AssetPartition::default_split()),
            Some(p) => AssetPartition::new(
                zero_based_all(&p.safe)?,
                &p.safe_mix,
                zero_based_all(&p.risky)?,
                &p.risky_mix,
            ),
        }
    }
}

fn zero_based(asset: usize) -> Result<usize> {
    if (1..=N_ASSETS).contains(&asset) {
        Ok(asset - 1)
    } else {
        Err(Error::Config(format!(
            "asset index {asset} outside 1..={N_ASSETS}"
        )))
    }
}

fn zero_based_all(assets: &[usize]) -> Result<Vec<usize>> {
    assets.iter().map(|&a| zero_based(a)).collect()
}

fn tilt_mixes(grid: &TiltGrid) -> Result<Vec<Mix>> {
    let tilt = zero_based(grid.tilt)?;
    let mut out = Vec::new();
    for &base in &grid.bases {
        let base = zero_based(base)?;
        for &share in &grid.shares {
            if !(0.0..=1.0).contains(&share) {
                return Err(Error::Config(format!("share {share} outside [0, 1]")));
            }
            let mut m = [0.0; N_ASSETS];
            m[base] += 1.0 - share;
            m[tilt] += share;
            out.push(m);
        }
    }
    Ok(out)
}

/// Which part of the catalogue an optimization uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategySet {
    /// Buy-and-hold, fixed proportions and target date funds.
    NonLdi,
    /// Every strategy.
    All,
}

impl StrategySet {
    pub fn label(self) -> &'static str {
        match self {
            StrategySet::NonLdi => "nonLDI",
            StrategySet::All => "all",
        }
    }

    pub fn contains(self, spec: &StrategySpec) -> bool {
        match self {
            StrategySet::NonLdi => !spec.is_liability_driven(),
            StrategySet::All => true,
        }
    }
}

/// Expands the grids into strategies, non-liability-driven families first,
/// with ids numbered consecutively from zero.
///
/// Every entry is validated for a run of `horizon` periods; an infeasible
/// target date fund (`a - bT < 0`) rejects the whole catalogue.
pub fn build_catalogue(cfg: &CatalogueConfig, horizon: usize) -> Result<Vec<StrategySpec>> {
    let partition = cfg.partition()?;
    let mut kinds: Vec<StrategyKind> = Vec::new();

    if let Some(g) = &cfg.buy_and_hold {
        kinds.extend(
            tilt_mixes(g)?
                .into_iter()
                .map(|initial| StrategyKind::BuyAndHold { initial }),
        );
    }
    if let Some(g) = &cfg.fixed_proportions {
        kinds.extend(
            tilt_mixes(g)?
                .into_iter()
                .map(|weights| StrategyKind::FixedProportions { weights }),
        );
    }
    if let Some(g) = &cfg.target_date_fund {
        for &a in &g.a {
            for &b in &g.b {
                kinds.push(StrategyKind::TargetDateFund {
                    a,
                    b,
                    partition: partition.clone(),
                });
            }
        }
    }
    if let Some(g) = &cfg.cppi {
        for &m in &g.m {
            for &r in &g.r {
                kinds.push(StrategyKind::Cppi {
                    multiplier: m,
                    discount_rate: r,
                    partition: partition.clone(),
                });
            }
        }
    }
    if let Some(g) = &cfg.term_spread {
        let (long, short) = (zero_based(g.primary)?, zero_based(g.secondary)?);
        for &a in &g.a {
            for &b in &g.b {
                kinds.push(StrategyKind::TermSpread { a, b, long, short });
            }
        }
    }
    if let Some(g) = &cfg.credit_spread {
        let (risky, safer) = (zero_based(g.primary)?, zero_based(g.secondary)?);
        for &a in &g.a {
            for &b in &g.b {
                kinds.push(StrategyKind::CreditSpread { a, b, risky, safer });
            }
        }
    }
    for (grid, survival) in [(&cfg.survival_index, true), (&cfg.wealth, false)] {
        let Some(g) = grid else { continue };
        let rest = unit_mix(zero_based(g.rest)?);
        for &target in &g.targets {
            let target = zero_based(target)?;
            for &a in &g.a {
                kinds.push(if survival {
                    StrategyKind::SurvivalIndex { a, target, rest }
                } else {
                    StrategyKind::Wealth { a, target, rest }
                });
            }
        }
    }

    let specs: Vec<StrategySpec> = kinds
        .into_iter()
        .enumerate()
        .map(|(id, kind)| StrategySpec::new(id, kind))
        .collect();
    for s in &specs {
        s.validate(horizon)?;
    }
    debug_assert!(specs.windows(2).all(|w| w[0].family() <= w[1].family()));
    Ok(specs)
}

/// Writes `id,kind,params` rows for joining reports against the catalogue.
pub fn write_catalogue_csv<W: Write>(specs: &[StrategySpec], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "kind", "params"])?;
    for s in specs {
        w.write_record([s.id.to_string(), s.family().to_string(), s.params()])?;
    }
    w.flush()?;
    Ok(())
}

/// Run lengths of consecutive families, in catalogue order.
pub fn family_counts(specs: &[StrategySpec]) -> Vec<(Family, usize)> {
    let mut out: Vec<(Family, usize)> = Vec::new();
    for s in specs {
        match out.last_mut() {
            Some((f, n)) if *f == s.family() => *n += 1,
            _ => out.push((s.family(), 1)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_catalogue_counts() {
        let specs = build_catalogue(&CatalogueConfig::default_config(), 30).unwrap();
        assert_eq!(specs.len(), 188);
        let non_ldi = specs
            .iter()
            .filter(|s| StrategySet::NonLdi.contains(s))
            .count();
        assert_eq!(non_ldi, 58);
        // Non-liability-driven strategies form a prefix.
        assert!(specs[..58].iter().all(|s| !s.is_liability_driven()));
        assert!(specs[58..].iter().all(|s| s.is_liability_driven()));
        for (i, s) in specs.iter().enumerate() {
            assert_eq!(s.id, i);
        }
        let counts = family_counts(&specs);
        assert_eq!(
            counts,
            vec![
                (Family::BuyAndHold, 4),
                (Family::FixedProportions, 30),
                (Family::TargetDateFund, 24),
                (Family::Cppi, 10),
                (Family::TermSpread, 15),
                (Family::CreditSpread, 15),
                (Family::SurvivalIndex, 50),
                (Family::Wealth, 40),
            ]
        );
    }

    #[test]
    fn default_catalogue_contains_published_exemplars() {
        let specs = build_catalogue(&CatalogueConfig::default_config(), 30).unwrap();
        let has = |p: &dyn Fn(&StrategyKind) -> bool| specs.iter().any(|s| p(&s.kind));
        for x in [0.15, 0.25, 0.35] {
            assert!(has(
                &|k| matches!(k, StrategyKind::FixedProportions { weights }
                if (weights[1] - (1.0 - x)).abs() < 1e-12 && (weights[3] - x).abs() < 1e-12)
            ));
        }
        assert!(has(
            &|k| matches!(k, StrategyKind::TargetDateFund { a, b, .. }
            if *a == 0.25 && *b == 0.005)
        ));
        assert!(has(
            &|k| matches!(k, StrategyKind::TargetDateFund { a, b, .. }
            if *a == 0.2 && *b == 0.003)
        ));
        assert!(has(
            &|k| matches!(k, StrategyKind::TermSpread { a, b, long: 1, short: 0 }
            if *a == -0.5 && *b == 5.0)
        ));
        for a0 in [0.75, 1.0] {
            assert!(has(
                &|k| matches!(k, StrategyKind::SurvivalIndex { a, target: 1, .. }
                if *a == a0)
            ));
        }
        for a0 in [0.5, 0.75, 1.0] {
            assert!(has(
                &|k| matches!(k, StrategyKind::Wealth { a, target: 1, .. } if *a == a0)
            ));
        }
        for r0 in [0.03, 0.04] {
            assert!(has(
                &|k| matches!(k, StrategyKind::Cppi { multiplier, discount_rate, .. }
                if *multiplier == 0.2 && *discount_rate == r0)
            ));
        }
    }

    #[test]
    fn empty_grid_gives_empty_catalogue() {
        let cfg = CatalogueConfig::from_toml_str("").unwrap();
        assert!(build_catalogue(&cfg, 30).unwrap().is_empty());
    }

    #[test]
    fn infeasible_target_date_fund_is_rejected() {
        let cfg =
            CatalogueConfig::from_toml_str("[target_date_fund]\na = [0.2]\nb = [0.01]\n").unwrap();
        let err = build_catalogue(&cfg, 30).unwrap_err();
        assert!(err.to_string().contains("a - bT"), "{err}");
    }

    #[test]
    fn bad_asset_index_is_rejected() {
        let cfg = CatalogueConfig::from_toml_str(
            "[fixed_proportions]\nbases = [0]\ntilt = 4\nshares = [0.5]\n",
        )
        .unwrap();
        assert!(build_catalogue(&cfg, 30).is_err());
    }

    #[test]
    fn catalogue_echo_csv() {
        let cfg = CatalogueConfig::from_toml_str(
            "[fixed_proportions]\nbases = [2]\ntilt = 4\nshares = [0.25]\n\
             [term_spread]\nprimary = 2\nsecondary = 1\na = [-0.5]\nb = [5.0]\n",
        )
        .unwrap();
        let specs = build_catalogue(&cfg, 30).unwrap();
        let mut buf = Vec::new();
        write_catalogue_csv(&specs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "id,kind,params\n0,FP,pi=(0 0.75 0 0.25)\n1,TermSpread,a=-0.5;b=5;long=2;short=1\n"
        );
    }
}

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;

use super::{
    asset_returns, iid_normals, lhs_normals, step_state, yields_from_state, EconState,
    ModelCoefficients, STATE_DIM,
};
use crate::config::{Sampling, SimulationSettings};
use crate::error::{Error, Result};
use crate::mortality::{survival_index_path, RiskFactors};
use crate::N_ASSETS;

/// One sampled path of returns, claims and observables over `t = 0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// `returns[t - 1][j]` is the gross return of asset `j` over `[t-1, t]`.
    pub returns: Vec<[f64; N_ASSETS]>,
    /// Claims `c_0..c_T`; `c_0` is never paid.
    pub claims: Vec<f64>,
    /// Survival index `S_0..S_T` of the reference cohort.
    pub survival: Vec<f64>,
    pub term_spread: Vec<f64>,
    pub credit_spread: Vec<f64>,
    /// Log 1-year yield.
    pub log_short_yield: Vec<f64>,
}

impl Scenario {
    pub fn horizon(&self) -> usize {
        self.returns.len()
    }

    /// 1-year government yield at time `t`.
    pub fn short_yield(&self, t: usize) -> f64 {
        self.log_short_yield[t].exp()
    }

    /// Same paths with all claims set to zero.
    pub fn without_claims(&self) -> Self {
        Self {
            claims: vec![0.0; self.claims.len()],
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.horizon();
        let lens = [
            self.claims.len(),
            self.survival.len(),
            self.term_spread.len(),
            self.credit_spread.len(),
            self.log_short_yield.len(),
        ];
        if lens.iter().any(|&l| l != t + 1) {
            return Err(Error::DimensionMismatch(format!(
                "scenario with {t} return periods has observable lengths {lens:?}"
            )));
        }
        if !self
            .returns
            .iter()
            .flatten()
            .all(|&r| r > 0.0 && r.is_finite())
        {
            return Err(Error::InvalidArgument(
                "gross returns must be positive".into(),
            ));
        }
        if !self.claims.iter().all(|&c| c >= 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument("claims must be nonnegative".into()));
        }
        Ok(())
    }
}

struct PathBuilder {
    state: EconState,
    returns: Vec<[f64; N_ASSETS]>,
    mortality: Vec<RiskFactors>,
    term_spread: Vec<f64>,
    credit_spread: Vec<f64>,
    log_short_yield: Vec<f64>,
}

impl PathBuilder {
    fn new(init: &EconState, horizon: usize) -> Self {
        let mut term_spread = Vec::with_capacity(horizon + 1);
        let mut credit_spread = Vec::with_capacity(horizon + 1);
        let mut log_short_yield = Vec::with_capacity(horizon + 1);
        term_spread.push(init.term_spread);
        credit_spread.push(init.credit_spread);
        log_short_yield.push(init.y1);
        Self {
            state: *init,
            returns: Vec::with_capacity(horizon),
            mortality: Vec::with_capacity(horizon),
            term_spread,
            credit_spread,
            log_short_yield,
        }
    }

    fn advance(&mut self, coeffs: &ModelCoefficients, shock: &[f64; STATE_DIM]) {
        let next = step_state(&self.state, coeffs, shock);
        let prev_curve = yields_from_state(&self.state);
        let curr_curve = yields_from_state(&next);
        self.returns.push(asset_returns(
            &prev_curve,
            &curr_curve,
            self.state.equity,
            next.equity,
            coeffs.delta_t,
        ));
        self.mortality.push(next.mortality());
        self.term_spread.push(next.term_spread);
        self.credit_spread.push(next.credit_spread);
        self.log_short_yield.push(next.y1);
        self.state = next;
    }

    fn finish(self, start_age: u32) -> Result<Scenario> {
        let survival = survival_index_path(&self.mortality, start_age)?;
        Ok(Scenario {
            returns: self.returns,
            claims: survival.clone(),
            survival,
            term_spread: self.term_spread,
            credit_spread: self.credit_spread,
            log_short_yield: self.log_short_yield,
        })
    }
}

/// Simulates `settings.n` scenarios of `settings.horizon` periods.
///
/// Each period draws one shock row per scenario from an `n × 8` sample
/// (Latin hypercube stratified across scenarios, or i.i.d.). Claims are the
/// survival index of the cohort aged `settings.start_age` at time zero.
pub fn generate_scenarios<R: Rng + ?Sized>(
    init: &EconState,
    coeffs: &ModelCoefficients,
    settings: &SimulationSettings,
    rng: &mut R,
) -> Result<Vec<Scenario>> {
    if settings.n == 0 {
        return Err(Error::InvalidArgument(
            "scenario count must be positive".into(),
        ));
    }
    if !init.is_finite() {
        return Err(Error::Config("initial state must be finite".into()));
    }
    coeffs.validate()?;
    let shock_free = coeffs.is_shock_free();
    let mut paths: Vec<PathBuilder> = (0..settings.n)
        .map(|_| PathBuilder::new(init, settings.horizon))
        .collect();
    let zero = vec![[0.0; STATE_DIM]; settings.n];
    for _ in 0..settings.horizon {
        let shocks = if shock_free {
            zero.clone()
        } else {
            match settings.sampling {
                Sampling::Lhs => lhs_normals(settings.n, &coeffs.shock_cov, rng)?,
                Sampling::Iid => iid_normals(settings.n, &coeffs.shock_cov, rng)?,
            }
        };
        for (path, shock) in paths.iter_mut().zip(&shocks) {
            path.advance(coeffs, shock);
        }
    }
    paths
        .into_iter()
        .map(|p| p.finish(settings.start_age))
        .collect()
}

const CSV_HEADER: &str = "scenario,t,R1,R2,R3,R4,claim,S,sT,sC,y1";

/// Writes scenarios as `scenario,t,R1,R2,R3,R4,claim,S,sT,sC,y1`, one row per
/// `(scenario, t)`. Returns are blank at `t = 0`. Floats use the shortest
/// representation that parses back to the same bits.
pub fn write_scenarios_csv<W: Write>(scenarios: &[Scenario], out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "{CSV_HEADER}")?;
    for (k, s) in scenarios.iter().enumerate() {
        for t in 0..=s.horizon() {
            write!(w, "{k},{t},")?;
            if t == 0 {
                write!(w, ",,,")?;
            } else {
                let r = &s.returns[t - 1];
                write!(w, "{},{},{},{}", r[0], r[1], r[2], r[3])?;
            }
            writeln!(
                w,
                ",{},{},{},{},{}",
                s.claims[t],
                s.survival[t],
                s.term_spread[t],
                s.credit_spread[t],
                s.log_short_yield[t]
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_scenarios_csv(scenarios: &[Scenario], path: impl AsRef<Path>) -> Result<()> {
    write_scenarios_csv(scenarios, std::fs::File::create(path)?)
}

pub fn read_scenarios_csv<R: Read>(input: R) -> Result<Vec<Scenario>> {
    let bad = |msg: String| Error::ScenarioFile {
        path: "<reader>".into(),
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new().from_reader(input);
    let header = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(bad(format!("unexpected header `{header}`")));
    }
    let mut out: Vec<Scenario> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .map_err(|e| bad(format!("row {}: column {}: {e}", line + 2, i + 1)))
        };
        let k: usize = field(0)
            .parse()
            .map_err(|e| bad(format!("row {}: scenario: {e}", line + 2)))?;
        let t: usize = field(1)
            .parse()
            .map_err(|e| bad(format!("row {}: t: {e}", line + 2)))?;
        if t == 0 {
            if k != out.len() {
                return Err(bad(format!("row {}: scenario {k} out of order", line + 2)));
            }
            out.push(Scenario {
                returns: Vec::new(),
                claims: Vec::new(),
                survival: Vec::new(),
                term_spread: Vec::new(),
                credit_spread: Vec::new(),
                log_short_yield: Vec::new(),
            });
        } else {
            let current = k + 1 == out.len();
            let Some(s) = out.last_mut().filter(|_| current) else {
                return Err(bad(format!("row {}: scenario {k} out of order", line + 2)));
            };
            if s.claims.len() != t {
                return Err(bad(format!(
                    "row {}: expected t = {}",
                    line + 2,
                    s.claims.len()
                )));
            }
            s.returns.push([num(2)?, num(3)?, num(4)?, num(5)?]);
        }
        let s = out.last_mut().expect("scenario pushed above");
        s.claims.push(num(6)?);
        s.survival.push(num(7)?);
        s.term_spread.push(num(8)?);
        s.credit_spread.push(num(9)?);
        s.log_short_yield.push(num(10)?);
    }
    if let Some(first) = out.first() {
        let horizon = first.horizon();
        for (k, s) in out.iter().enumerate() {
            if s.horizon() != horizon {
                return Err(bad(format!(
                    "scenario {k} has horizon {}, expected {horizon}",
                    s.horizon()
                )));
            }
            s.validate()?;
        }
    }
    Ok(out)
}

pub fn load_scenarios_csv(path: impl AsRef<Path>) -> Result<Vec<Scenario>> {
    let path = path.as_ref();
    read_scenarios_csv(std::fs::File::open(path)?).map_err(|e| match e {
        Error::ScenarioFile { msg, .. } => Error::ScenarioFile {
            path: path.to_path_buf(),
            msg,
        },
        other => other,
    })
}

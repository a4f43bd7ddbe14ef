//! Entropic risk and diversification over basis strategies.
//!
//! For terminal wealth samples `x_1..x_N` the entropic risk is
//! `ρ(x) = (1/γ) log((1/N) Σ_k e^{-γ x_k})`. Diversification minimizes
//! `ρ(Wα)` over the probability simplex, where column `i` of `W` holds the
//! terminal wealth of basis strategy `i` across scenarios.
//!
//! All reductions run over fixed-size row chunks summed in order, so results
//! are bit-for-bit reproducible regardless of the thread pool.

mod solver;

pub use solver::{optimize_weights, optimize_weights_from, Solution, SolverOptions};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rows per reduction chunk.
const CHUNK: usize = 1024;

/// Dense `N × I` matrix of terminal wealth, scenarios by strategies.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalWealthMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TerminalWealthMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Empty("terminal wealth matrix"));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidArgument(
                "terminal wealth must be finite".into(),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let i = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != i) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::new(n, i, rows.into_iter().flatten().collect())
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::DimensionMismatch("ragged columns".into()));
        }
        let mut data = vec![0.0; rows * cols];
        for (i, c) in columns.iter().enumerate() {
            for (k, &x) in c.iter().enumerate() {
                data[k * cols + i] = x;
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn n_scenarios(&self) -> usize {
        self.rows
    }

    pub fn n_strategies(&self) -> usize {
        self.cols
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.cols..(k + 1) * self.cols]
    }

    pub fn get(&self, k: usize, i: usize) -> f64 {
        self.data[k * self.cols + i]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.rows).map(|k| self.get(k, i)).collect()
    }

    /// Matrix restricted to the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.cols) {
            return Err(Error::DimensionMismatch(format!(
                "column {bad} out of range for {} strategies",
                self.cols
            )));
        }
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for k in 0..self.rows {
            let row = self.row(k);
            data.extend(cols.iter().map(|&c| row[c]));
        }
        Self::new(self.rows, cols.len(), data)
    }

    /// Mixed terminal wealth `Wα`, summing columns in index order.
    pub fn mix(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        if alpha.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} strategies",
                alpha.len(),
                self.cols
            )));
        }
        Ok(self
            .data
            .par_chunks(self.cols)
            .map(|row| {
                row.iter()
                    .zip(alpha)
                    .filter(|(_, &a)| a != 0.0)
                    .map(|(w, a)| w * a)
                    .sum()
            })
            .collect())
    }
}

/// Nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::Empty("weights"));
        }
        if alpha.iter().any(|&a| !(a >= 0.0) || !a.is_finite()) {
            return Err(Error::InvalidArgument(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = alpha.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self(alpha))
    }

    /// Rescales nonnegative weights onto the simplex.
    pub fn normalized(alpha: Vec<f64>) -> Result<Self> {
        let sum: f64 = alpha.iter().sum();
        if !(sum > 0.0) || alpha.iter().any(|&a| !(a >= 0.0)) {
            return Err(Error::InvalidArgument(
                "weights must be nonnegative with a positive sum".into(),
            ));
        }
        Self::new(alpha.into_iter().map(|a| a / sum).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("weights"));
        }
        Ok(Self(vec![1.0 / n as f64; n]))
    }

    pub fn vertex(n: usize, i: usize) -> Result<Self> {
        if i >= n {
            return Err(Error::DimensionMismatch(format!("vertex {i} of {n}")));
        }
        let mut a = vec![0.0; n];
        a[i] = 1.0;
        Ok(Self(a))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Risk aversion of the entropic risk measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskConfig {
    pub gamma: f64,
}

impl RiskConfig {
    pub fn new(gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Self { gamma })
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "risk aversion must be positive, got {gamma}"
        )))
    }
}

/// Shifted exponential sums of `-γx`: the shift `m = max(-γx)` and
/// per-chunk sums of `e^{-γx - m}`.
struct ExpSums {
    shift: f64,
    total: f64,
}

fn exp_sums(x: &[f64], gamma: f64) -> ExpSums {
    let shift = x
        .par_chunks(CHUNK)
        .map(|c| c.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(-gamma * v)))
        .reduce(|| f64::NEG_INFINITY, f64::max);
    let partial: Vec<f64> = x
        .par_chunks(CHUNK)
        .map(|c| c.iter().map(|&v| (-gamma * v - shift).exp()).sum())
        .collect();
    ExpSums {
        shift,
        total: partial.iter().sum(),
    }
}

/// `(1/γ) log((1/N) Σ e^{-γ x_k})`, finite for any finite input.
pub fn entropic_risk(samples: &[f64], gamma: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("samples"));
    }
    check_gamma(gamma)?;
    if !samples.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidArgument("samples must be finite".into()));
    }
    let s = exp_sums(samples, gamma);
    Ok(risk_from_sums(&s, samples.len(), gamma))
}

fn risk_from_sums(s: &ExpSums, n: usize, gamma: f64) -> f64 {
    (s.shift + (s.total / n as f64).ln()) / gamma
}

/// Objective value with the exponential tilting weights it induces.
#[derive(Clone)]
pub(crate) struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// `q_k ∝ e^{-γ (Wα)_k}`, normalized.
    pub tilt: Vec<f64>,
}

pub(crate) fn evaluate(alpha: &[f64], w: &TerminalWealthMatrix, gamma: f64) -> Result<Evaluation> {
    let mixed = w.mix(alpha)?;
    let s = exp_sums(&mixed, gamma);
    let value = risk_from_sums(&s, mixed.len(), gamma);
    let tilt: Vec<f64> = mixed
        .par_iter()
        .map(|&z| (-gamma * z - s.shift).exp() / s.total)
        .collect();
    let cols = w.n_strategies();
    let partial: Vec<Vec<f64>> = w
        .data
        .par_chunks(cols * CHUNK)
        .zip(tilt.par_chunks(CHUNK))
        .map(|(rows, q)| {
            let mut acc = vec![0.0; cols];
            for (row, &qk) in rows.chunks(cols).zip(q) {
                for (a, &x) in acc.iter_mut().zip(row) {
                    *a += qk * x;
                }
            }
            acc
        })
        .collect();
    let mut gradient = vec![0.0; cols];
    for p in &partial {
        for (g, x) in gradient.iter_mut().zip(p) {
            *g -= x;
        }
    }
    Ok(Evaluation {
        value,
        gradient,
        tilt,
    })
}

/// Entropic risk of `Wα` and its gradient in `α`,
/// `∂ρ/∂αⁱ = -Σ_k q_k W[k][i]` with `q_k ∝ e^{-γ (Wα)_k}`.
pub fn diversified_objective(
    alpha: &SimplexWeights,
    w: &TerminalWealthMatrix,
    gamma: f64,
) -> Result<(f64, Vec<f64>)> {
    check_gamma(gamma)?;
    let e = evaluate(alpha.as_slice(), w, gamma)?;
    Ok((e.value, e.gradient))
}

/// Per-strategy entropic risk, best `k` first; ties broken by id.
///
/// `ids[i]` labels column `i`.
pub fn rank_strategies(
    w: &TerminalWealthMatrix,
    ids: &[usize],
    gamma: f64,
    k: usize,
) -> Result<Vec<(usize, f64)>> {
    if ids.len() != w.n_strategies() {
        return Err(Error::DimensionMismatch(format!(
            "{} ids for {} strategies",
            ids.len(),
            w.n_strategies()
        )));
    }
    if k > ids.len() {
        return Err(Error::InvalidArgument(format!(
            "top-{k} requested from {} strategies",
            ids.len()
        )));
    }
    check_gamma(gamma)?;
    let mut scored: Vec<(usize, f64)> = (0..w.n_strategies())
        .into_par_iter()
        .map(|i| Ok((ids[i], entropic_risk(&w.column(i), gamma)?)))
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}

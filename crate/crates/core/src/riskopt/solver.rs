//! Minimization of `ρ(Wα)` over the probability simplex.
//!
//! Exponentiated-gradient steps with backtracking shrink the support. A
//! second-order step minimizes the local quadratic model over the simplex
//! (active-set QP on the current face) and finishes quadratically. A
//! Frank-Wolfe move toward inactive vertices with a better gradient
//! re-enters dropped strategies.
//! Convergence is certified by the Frank-Wolfe gap
//! `Σ αᵢ gᵢ - minᵢ gᵢ`, which bounds `ρ(Wα) - min ρ` from above.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{check_gamma, evaluate, Evaluation, SimplexWeights, TerminalWealthMatrix, CHUNK};
use crate::error::{Error, Result};

/// Components below this are treated as off the face for second-order steps.
const SUPPORT_FLOOR: f64 = 1e-9;
/// Components below this can only come back through a Frank-Wolfe move.
const ZERO_FLOOR: f64 = 1e-12;
const NEWTON_MAX_SUPPORT: usize = 64;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
const STALL_LIMIT: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Target Frank-Wolfe gap.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub weights: SimplexWeights,
    pub value: f64,
    /// Frank-Wolfe gap at `weights`.
    pub gap: f64,
    pub iterations: usize,
}

struct Point {
    x: Vec<f64>,
    eval: Evaluation,
    gap: f64,
}

struct Problem<'a> {
    w: &'a TerminalWealthMatrix,
    gamma: f64,
}

impl Problem<'_> {
    /// Evaluates `x` as given; callers keep it on the simplex.
    fn point(&self, x: Vec<f64>) -> Result<Point> {
        let eval = evaluate(&x, self.w, self.gamma)?;
        let gap = fw_gap(&x, &eval.gradient);
        Ok(Point { x, eval, gap })
    }
}

fn normalize(mut x: Vec<f64>) -> Vec<f64> {
    for a in &mut x {
        *a = a.max(0.0);
    }
    let sum: f64 = x.iter().sum();
    x.iter_mut().for_each(|a| *a /= sum);
    x
}

fn fw_gap(x: &[f64], g: &[f64]) -> f64 {
    let gmin = g.iter().copied().fold(f64::INFINITY, f64::min);
    x.iter().zip(g).map(|(a, gi)| a * (gi - gmin)).sum()
}

/// Rounding allowance on objective comparisons.
fn slack(f: f64) -> f64 {
    8.0 * f64::EPSILON * f.abs().max(1.0)
}

fn improves(cand: &Point, cur: &Point) -> bool {
    cand.eval.value < cur.eval.value
        || (cand.eval.value <= cur.eval.value + slack(cur.eval.value) && cand.gap < cur.gap)
}

/// Minimizes `ρ(Wα)` starting from uniform weights.
pub fn optimize_weights(
    w: &TerminalWealthMatrix,
    gamma: f64,
    opts: &SolverOptions,
) -> Result<Solution> {
    optimize_weights_from(w, gamma, &SimplexWeights::uniform(w.n_strategies())?, opts)
}

/// Minimizes `ρ(Wα)` starting from `start`.
///
/// Every accepted step lowers the objective up to rounding, so the result
/// is never worse than `start` by more than a few ulps.
pub fn optimize_weights_from(
    w: &TerminalWealthMatrix,
    gamma: f64,
    start: &SimplexWeights,
    opts: &SolverOptions,
) -> Result<Solution> {
    check_gamma(gamma)?;
    if start.len() != w.n_strategies() {
        return Err(Error::DimensionMismatch(format!(
            "{} starting weights for {} strategies",
            start.len(),
            w.n_strategies()
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let p = Problem { w, gamma };
    let mut cur = p.point(start.as_slice().to_vec())?;
    let mut eta = 1.0;
    let mut best_gap = f64::INFINITY;
    let mut stalled = 0;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        if cur.gap <= opts.tol {
            break;
        }
        if cur.gap < 0.999 * best_gap {
            best_gap = cur.gap;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled > STALL_LIMIT {
                break;
            }
        }
        iterations += 1;
        let mut moved = false;
        if let Some(next) = activate(&p, &cur, opts.tol)? {
            cur = next;
            moved = true;
        }
        if let Some(next) = eg_step(&p, &cur, &mut eta)? {
            cur = next;
            moved = true;
        }
        let support = cur.x.iter().filter(|&&a| a > SUPPORT_FLOOR).count();
        if support <= NEWTON_MAX_SUPPORT || iterations % 25 == 0 {
            if let Some(next) = newton_step(&p, &cur, opts.tol)? {
                cur = next;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    if cur.gap <= opts.tol {
        Ok(Solution {
            value: cur.eval.value,
            gap: cur.gap,
            iterations,
            weights: SimplexWeights::new(cur.x)?,
        })
    } else {
        Err(Error::NotConverged {
            iterations,
            value: cur.eval.value,
            residual: cur.gap,
            best: cur.x,
        })
    }
}

/// Multiplicative update `xᵢ ← xᵢ e^{-η gᵢ}` with a mirror-descent
/// sufficient decrease test; `η` adapts across calls.
fn eg_step(p: &Problem, cur: &Point, eta: &mut f64) -> Result<Option<Point>> {
    let g = &cur.eval.gradient;
    let gmin = cur
        .x
        .iter()
        .zip(g)
        .filter(|(&a, _)| a > 0.0)
        .map(|(_, &gi)| gi)
        .fold(f64::INFINITY, f64::min);
    let f = cur.eval.value;
    for _ in 0..MAX_BACKTRACKS {
        let h = *eta;
        let mut y: Vec<f64> = cur
            .x
            .iter()
            .zip(g)
            .map(|(&a, &gi)| {
                if a > 0.0 {
                    a * (-h * (gi - gmin)).exp()
                } else {
                    0.0
                }
            })
            .collect();
        let z: f64 = y.iter().sum();
        y.iter_mut().for_each(|a| *a /= z);
        let kl = -h * y.iter().zip(g).map(|(a, gi)| a * (gi - gmin)).sum::<f64>() - z.ln();
        let lin: f64 = y
            .iter()
            .zip(&cur.x)
            .zip(g)
            .map(|((yi, xi), gi)| (gi - gmin) * (yi - xi))
            .sum();
        let cand = p.point(y)?;
        let bound = f + lin + kl.max(0.0) / h + slack(f);
        if cand.eval.value <= bound && improves(&cand, cur) {
            *eta = (h * 2.0).min(1e12);
            return Ok(Some(cand));
        }
        *eta = h / 2.0;
        if *eta < 1e-16 {
            *eta = 1e-16;
            break;
        }
    }
    Ok(None)
}

/// Curvature `dᵀ∇²ρ d = γ Var_q(W d)` along a direction given by `W d`.
fn curvature(p: &Problem, q: &[f64], wd: &[f64]) -> f64 {
    let mean: f64 = q.iter().zip(wd).map(|(a, b)| a * b).sum();
    let second: f64 = q.iter().zip(wd).map(|(a, b)| a * b * b).sum();
    p.gamma * (second - mean * mean).max(0.0)
}

/// Frank-Wolfe move toward the inactive vertices whose gradient beats the
/// current average.
fn activate(p: &Problem, cur: &Point, tol: f64) -> Result<Option<Point>> {
    let g = &cur.eval.gradient;
    let avg: f64 = cur.x.iter().zip(g).map(|(a, b)| a * b).sum();
    let entering: Vec<usize> = (0..g.len())
        .filter(|&j| cur.x[j] < ZERO_FLOOR && g[j] < avg - tol)
        .collect();
    if entering.is_empty() {
        return Ok(None);
    }
    let share = 1.0 / entering.len() as f64;
    let mut u = vec![0.0; g.len()];
    for &j in &entering {
        u[j] = share;
    }
    let dd: f64 = entering.iter().map(|&j| share * g[j]).sum::<f64>() - avg;
    let wu = p.w.mix(&u)?;
    let wx = p.w.mix(&cur.x)?;
    let wd: Vec<f64> = wu.iter().zip(&wx).map(|(a, b)| a - b).collect();
    let curv = curvature(p, &cur.eval.tilt, &wd);
    let mut t = if curv > 0.0 {
        (-dd / curv).min(1.0)
    } else {
        1.0
    };
    for _ in 0..MAX_BACKTRACKS {
        let y = cur
            .x
            .iter()
            .zip(&u)
            .map(|(a, b)| (1.0 - t) * a + t * b)
            .collect();
        let cand = p.point(normalize(y))?;
        if cand.eval.value <= cur.eval.value + ARMIJO * t * dd && improves(&cand, cur) {
            return Ok(Some(cand));
        }
        t /= 2.0;
    }
    Ok(None)
}

/// Second-order step on the face spanned by the components above
/// `SUPPORT_FLOOR` and the inactive ones whose gradient beats the current
/// average. The remaining components are zeroed first.
fn newton_step(p: &Problem, cur: &Point, tol: f64) -> Result<Option<Point>> {
    let g = &cur.eval.gradient;
    let avg: f64 = cur.x.iter().zip(g).map(|(a, b)| a * b).sum();
    let face: Vec<usize> = (0..cur.x.len())
        .filter(|&i| cur.x[i] > SUPPORT_FLOOR || g[i] < avg - tol)
        .collect();
    let truncated = (0..cur.x.len()).any(|i| cur.x[i] > 0.0 && face.binary_search(&i).is_err());
    let base = if truncated {
        let mut y = vec![0.0; cur.x.len()];
        for &i in &face {
            y[i] = cur.x[i];
        }
        p.point(normalize(y))?
    } else {
        Point {
            x: cur.x.clone(),
            eval: cur.eval.clone(),
            gap: cur.gap,
        }
    };
    let stepped = newton_from(p, &base, &face)?;
    let best = match stepped {
        Some(s) if improves(&s, &base) || !truncated => Some(s),
        _ if truncated => Some(base),
        _ => None,
    };
    Ok(best.filter(|b| improves(b, cur)))
}

/// `Σ_k q_k W[k][a] W[k][b]` over the face, upper triangle filled.
fn tilted_second_moment(p: &Problem, q: &[f64], face: &[usize]) -> Vec<f64> {
    let m = face.len();
    let cols = p.w.n_strategies();
    let partial: Vec<Vec<f64>> =
        p.w.data
            .par_chunks(cols * CHUNK)
            .zip(q.par_chunks(CHUNK))
            .map(|(rows, q)| {
                let mut acc = vec![0.0; m * m];
                let mut vals = vec![0.0; m];
                for (row, &qk) in rows.chunks(cols).zip(q) {
                    for (v, &i) in vals.iter_mut().zip(face) {
                        *v = row[i];
                    }
                    for a in 0..m {
                        let qa = qk * vals[a];
                        for b in a..m {
                            acc[a * m + b] += qa * vals[b];
                        }
                    }
                }
                acc
            })
            .collect();
    let mut second = vec![0.0; m * m];
    for part in &partial {
        for (s, x) in second.iter_mut().zip(part) {
            *s += x;
        }
    }
    second
}

/// Solves `min cᵀz + ½ zᵀHz` over `{z ≥ 0, Σz = 1}` by a primal active-set
/// method from the feasible `z`. `h` is dense `m × m`.
fn simplex_qp(h: &DMatrix<f64>, c: &DVector<f64>, mut z: DVector<f64>) -> Option<DVector<f64>> {
    let m = z.len();
    let scale = h.diagonal().amax().max(c.amax()).max(1.0);
    let mut free: Vec<usize> = (0..m).filter(|&i| z[i] > 0.0).collect();
    for _ in 0..10 * m + 10 {
        let grad = h * &z + c;
        let k = free.len();
        let mut kkt = DMatrix::<f64>::zeros(k + 1, k + 1);
        let mut rhs = DVector::<f64>::zeros(k + 1);
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                kkt[(a, b)] = h[(i, j)];
            }
            kkt[(a, k)] = 1.0;
            kkt[(k, a)] = 1.0;
            rhs[a] = -grad[i];
        }
        let step = kkt.lu().solve(&rhs)?;
        let p_max = (0..k).map(|a| step[a].abs()).fold(0.0, f64::max);
        if p_max <= 1e-15 {
            // Stationary on the free set; release the most attractive bound.
            let lambda = free.iter().map(|&i| grad[i]).sum::<f64>() / k as f64;
            let entering = (0..m)
                .filter(|i| !free.contains(i))
                .map(|i| (i, grad[i] - lambda))
                .filter(|&(_, r)| r < -1e-13 * scale)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match entering {
                Some((i, _)) => {
                    free.push(i);
                    free.sort_unstable();
                }
                None => return Some(z),
            }
            continue;
        }
        let mut t = 1.0;
        let mut blocking = None;
        for (a, &i) in free.iter().enumerate() {
            if step[a] < 0.0 {
                let r = z[i] / -step[a];
                if r < t {
                    t = r;
                    blocking = Some(i);
                }
            }
        }
        for (a, &i) in free.iter().enumerate() {
            z[i] = (z[i] + t * step[a]).max(0.0);
        }
        if let Some(b) = blocking {
            z[b] = 0.0;
            free.retain(|&i| i != b);
        }
        if free.is_empty() {
            return None;
        }
    }
    Some(z)
}

fn newton_from(p: &Problem, base: &Point, face: &[usize]) -> Result<Option<Point>> {
    let m = face.len();
    if m < 2 {
        return Ok(None);
    }
    let g = &base.eval.gradient;
    let second = tilted_second_moment(p, &base.eval.tilt, face);
    let mut h = DMatrix::<f64>::zeros(m, m);
    for a in 0..m {
        for b in a..m {
            let v = p.gamma * (second[a * m + b] - g[face[a]] * g[face[b]]);
            h[(a, b)] = v;
            h[(b, a)] = v;
        }
    }
    let ridge = 1e-10 * h.diagonal().max() + f64::MIN_POSITIVE;
    for a in 0..m {
        h[(a, a)] += ridge;
    }
    let x = DVector::from_iterator(m, face.iter().map(|&i| base.x[i]));
    let gf = DVector::from_iterator(m, face.iter().map(|&i| g[i]));
    let c = &gf - &h * &x;
    let Some(z) = simplex_qp(&h, &c, x.clone()) else {
        return Ok(None);
    };
    let d = z - x;
    let dd = gf.dot(&d);
    if !(dd < 0.0) {
        return Ok(None);
    }
    let mut t = 1.0;
    for _ in 0..MAX_BACKTRACKS {
        let mut y = base.x.clone();
        for (a, &i) in face.iter().enumerate() {
            y[i] += t * d[a];
        }
        if t == 1.0 {
            // Land exactly on the faces the model chose.
            for (a, &i) in face.iter().enumerate() {
                if base.x[i] + d[a] <= 0.0 {
                    y[i] = 0.0;
                }
            }
        }
        let cand = p.point(normalize(y))?;
        if cand.eval.value <= base.eval.value + ARMIJO * t * dd
            || (t == 1.0 && improves(&cand, base))
        {
            return Ok(Some(cand));
        }
        t /= 2.0;
    }
    Ok(None)
}

//! Logistic survival model with piecewise linear age basis.
//!
//! One-year survival probabilities are `p(x) = logistic(v1 φ1(x) + v2 φ2(x) + v3 φ3(x))`
//! where the basis functions interpolate linearly between the anchor ages
//! 18, 50 and 100, so each risk factor is the logit survival probability at
//! its anchor age.

use std::io::Read;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_AGE: f64 = 18.0;
pub const MID_AGE: f64 = 50.0;
pub const MAX_AGE: f64 = 100.0;

/// Logit survival probabilities at ages 18, 50 and 100.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskFactors {
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
}

impl RiskFactors {
    pub const fn new(v1: f64, v2: f64, v3: f64) -> Self {
        Self { v1, v2, v3 }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.v1, self.v2, self.v3]
    }

    pub fn is_finite(&self) -> bool {
        self.v1.is_finite() && self.v2.is_finite() && self.v3.is_finite()
    }

    /// Linear predictor `Σ vⁱ φⁱ(x)`.
    fn predictor(&self, phi: [f64; 3]) -> f64 {
        self.v1 * phi[0] + self.v2 * phi[1] + self.v3 * phi[2]
    }
}

/// Piecewise linear basis `(φ¹(x), φ²(x), φ³(x))` on `[18, 100]`.
pub fn basis_phi(age: f64) -> Result<[f64; 3]> {
    if !(MIN_AGE..=MAX_AGE).contains(&age) {
        return Err(Error::AgeOutOfRange(age));
    }
    Ok(if age <= MID_AGE {
        let s = (age - MIN_AGE) / (MID_AGE - MIN_AGE);
        [1.0 - s, s, 0.0]
    } else {
        [0.0, 2.0 - age / MID_AGE, age / MID_AGE - 1.0]
    })
}

/// Numerically stable logistic function.
pub(crate) fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One-year survival probability of an individual aged `age`.
///
/// Ages above 100 are evaluated with the basis clamped at 100; ages below 18
/// are rejected.
pub fn survival_prob(v: &RiskFactors, age: f64) -> Result<f64> {
    if age.is_nan() {
        return Err(Error::AgeOutOfRange(age));
    }
    let phi = basis_phi(age.min(MAX_AGE))?;
    // Keep p inside the open interval where the logistic saturates in f64.
    Ok(logistic(v.predictor(phi)).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}

/// A single-age cohort tracked through time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CohortState {
    pub age: u32,
    /// Expected number of survivors.
    pub size: f64,
    /// Fraction of the initial cohort still alive.
    pub index: f64,
}

impl CohortState {
    pub fn new(age: u32, size: f64) -> Self {
        Self {
            age,
            size,
            index: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PropagationMode {
    /// Large-population limit: survivors equal their expectation.
    #[default]
    Deterministic,
    /// Survivors drawn from a binomial distribution on the rounded size.
    Binomial,
}

/// Ages a cohort by one year given its one-year survival probability.
pub fn propagate_cohort<R: Rng + ?Sized>(
    cohort: &CohortState,
    p: f64,
    mode: PropagationMode,
    rng: &mut R,
) -> Result<CohortState> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "survival probability {p} outside [0, 1]"
        )));
    }
    let age = cohort.age + 1;
    match mode {
        PropagationMode::Deterministic => Ok(CohortState {
            age,
            size: cohort.size * p,
            index: cohort.index * p,
        }),
        PropagationMode::Binomial => {
            let trials = cohort.size.round();
            if trials <= 0.0 {
                // Nobody left to sample; carry the index forward in expectation.
                return Ok(CohortState {
                    age,
                    size: 0.0,
                    index: cohort.index * p,
                });
            }
            let dist = Binomial::new(trials as u64, p)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let survivors = dist.sample(rng) as f64;
            Ok(CohortState {
                age,
                size: survivors,
                index: cohort.index * (survivors / cohort.size),
            })
        }
    }
}

/// Survival index `S_0..S_T` of a cohort aged `start_age` at time zero, where
/// `v_path[t-1]` drives survival over year `t`.
pub fn survival_index_path(v_path: &[RiskFactors], start_age: u32) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(v_path.len() + 1);
    let mut s = 1.0;
    out.push(s);
    for (k, v) in v_path.iter().enumerate() {
        s *= survival_prob(v, f64::from(start_age) + k as f64)?;
        out.push(s);
    }
    Ok(out)
}

/// One row of single-year cohort data: `age,exposure,deaths`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MortalityRecord {
    pub age: u32,
    pub exposure: f64,
    pub deaths: f64,
}

pub fn read_mortality_csv<R: Read>(reader: R) -> Result<Vec<MortalityRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["age", "exposure", "deaths"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::InvalidMortalityData(format!(
            "expected header `age,exposure,deaths`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut records = Vec::new();
    for row in rdr.deserialize() {
        records.push(row?);
    }
    Ok(records)
}

pub fn load_mortality_csv(path: impl AsRef<Path>) -> Result<Vec<MortalityRecord>> {
    read_mortality_csv(std::fs::File::open(path)?)
}

const FIT_GRAD_TOL: f64 = 1e-8;
const FIT_MAX_ITERS: usize = 200;
const FIT_MAX_NORM: f64 = 1e3;

/// Maximum-likelihood risk factors for one year of cohort data.
///
/// Maximizes the binomial log-likelihood with damped Newton steps, falling
/// back to gradient ascent when the Hessian cannot be inverted. Convergence
/// is declared when the gradient of the exposure-normalized log-likelihood
/// has Euclidean norm at most `1e-8`.
pub fn fit_risk_factors(records: &[MortalityRecord]) -> Result<RiskFactors> {
    let rows = prepare_fit_rows(records)?;
    let total_exposure: f64 = rows.iter().map(|r| r.exposure).sum();

    // Identifiability: the exposure-weighted design must have full rank.
    let mut info = Matrix3::<f64>::zeros();
    for r in &rows {
        let phi = Vector3::from(r.phi);
        info += phi * phi.transpose() * (r.exposure / total_exposure);
    }
    let eig = info.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if hi <= 0.0 || lo <= 1e-12 * hi {
        return Err(Error::FitDegenerate(
            "basis design is rank deficient over the observed ages".into(),
        ));
    }
    let deaths: f64 = rows.iter().map(|r| r.deaths).sum();
    if deaths <= 0.0 || deaths >= total_exposure {
        return Err(Error::FitDegenerate(
            "all individuals survive or all die; no finite maximum".into(),
        ));
    }

    let eval = |v: &Vector3<f64>| -> (f64, Vector3<f64>, Matrix3<f64>) {
        let mut ll = 0.0;
        let mut grad = Vector3::zeros();
        let mut hess = Matrix3::zeros();
        for r in &rows {
            let phi = Vector3::from(r.phi);
            let eta = phi.dot(v);
            let p = logistic(eta);
            let survivors = r.exposure - r.deaths;
            // log p = -log(1 + e^{-eta}), log(1 - p) = -log(1 + e^{eta})
            ll -= survivors * softplus(-eta) + r.deaths * softplus(eta);
            grad += phi * (survivors - r.exposure * p);
            hess -= phi * phi.transpose() * (r.exposure * p * (1.0 - p));
        }
        (
            ll / total_exposure,
            grad / total_exposure,
            hess / total_exposure,
        )
    };

    let mut v = Vector3::zeros();
    let (mut ll, mut grad, mut hess) = eval(&v);
    for _ in 0..FIT_MAX_ITERS {
        if grad.norm() <= FIT_GRAD_TOL {
            return Ok(RiskFactors::new(v[0], v[1], v[2]));
        }
        // Ascent direction: Newton if the negated Hessian is positive definite.
        let dir = match (-hess).cholesky() {
            Some(ch) => ch.solve(&grad),
            None => grad,
        };
        let slope = grad.dot(&dir);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = v + dir * step;
            let (ll_c, grad_c, hess_c) = eval(&cand);
            if ll_c.is_finite() && ll_c >= ll + 1e-4 * step * slope {
                v = cand;
                ll = ll_c;
                grad = grad_c;
                hess = hess_c;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // Line search exhausted; the iterate is as good as floating point allows.
            break;
        }
        if v.norm() > FIT_MAX_NORM {
            return Err(Error::FitDegenerate(
                "risk factors diverge; data are separable".into(),
            ));
        }
    }
    if grad.norm() <= FIT_GRAD_TOL {
        Ok(RiskFactors::new(v[0], v[1], v[2]))
    } else {
        Err(Error::FitDegenerate(format!(
            "no convergence (gradient norm {:e})",
            grad.norm()
        )))
    }
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

struct FitRow {
    phi: [f64; 3],
    exposure: f64,
    deaths: f64,
}

fn prepare_fit_rows(records: &[MortalityRecord]) -> Result<Vec<FitRow>> {
    if records.is_empty() {
        return Err(Error::Empty("mortality records"));
    }
    let mut rows = Vec::with_capacity(records.len());
    for r in records {
        let age = f64::from(r.age);
        if !(MIN_AGE..=MAX_AGE).contains(&age) {
            return Err(Error::AgeOutOfRange(age));
        }
        if !(r.exposure.is_finite() && r.deaths.is_finite()) || r.exposure < 0.0 || r.deaths < 0.0 {
            return Err(Error::InvalidMortalityData(format!(
                "age {}: exposure and deaths must be finite and nonnegative",
                r.age
            )));
        }
        if r.deaths > r.exposure {
            return Err(Error::InvalidMortalityData(format!(
                "age {}: deaths {} exceed exposure {}",
                r.age, r.deaths, r.exposure
            )));
        }
        if r.exposure == 0.0 {
            continue;
        }
        rows.push(FitRow {
            phi: basis_phi(age)?,
            exposure: r.exposure,
            deaths: r.deaths,
        });
    }
    if rows.is_empty() {
        return Err(Error::FitDegenerate("no age has positive exposure".into()));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn basis_anchor_points() {
        assert_eq!(basis_phi(18.0).unwrap(), [1.0, 0.0, 0.0]);
        assert_eq!(basis_phi(50.0).unwrap(), [0.0, 1.0, 0.0]);
        assert_eq!(basis_phi(100.0).unwrap(), [0.0, 0.0, 1.0]);
        assert_eq!(basis_phi(34.0).unwrap(), [0.5, 0.5, 0.0]);
    }

    #[test]
    fn basis_is_continuous_at_fifty() {
        let below = basis_phi(50.0 - 1e-9).unwrap();
        let above = basis_phi(50.0 + 1e-9).unwrap();
        for i in 0..3 {
            assert!(close(below[i], above[i], 1e-8));
        }
    }

    #[test]
    fn basis_rejects_out_of_range_ages() {
        assert!(matches!(basis_phi(17.9), Err(Error::AgeOutOfRange(_))));
        assert!(matches!(basis_phi(100.5), Err(Error::AgeOutOfRange(_))));
        assert!(survival_prob(&RiskFactors::new(0.0, 0.0, 0.0), 10.0).is_err());
    }

    #[test]
    fn basis_is_partition_of_unity_on_dense_grid() {
        for k in 0..=8200 {
            let x = 18.0 + k as f64 * 0.01;
            let phi = basis_phi(x.min(100.0)).unwrap();
            assert!(close(phi.iter().sum::<f64>(), 1.0, 1e-12), "x = {x}");
        }
    }

    #[test]
    fn survival_prob_examples() {
        let zero = RiskFactors::new(0.0, 0.0, 0.0);
        assert_eq!(survival_prob(&zero, 65.0).unwrap(), 0.5);
        let old = RiskFactors::new(0.0, 0.0, 4.0);
        let expected = 1.0 / (1.0 + (-4.0f64).exp());
        assert!(close(survival_prob(&old, 100.0).unwrap(), expected, 1e-15));
        assert!(close(expected, 0.9820, 1e-4));
        let flat = RiskFactors::new(3.0, 3.0, 3.0);
        let expected = 1.0 / (1.0 + (-3.0f64).exp());
        for x in [18.0, 33.3, 50.0, 77.0, 100.0] {
            assert!(close(survival_prob(&flat, x).unwrap(), expected, 1e-14));
        }
    }

    #[test]
    fn survival_prob_is_stable_at_extreme_predictors() {
        let hi = RiskFactors::new(700.0, 700.0, 700.0);
        let lo = RiskFactors::new(-700.0, -700.0, -700.0);
        let p_hi = survival_prob(&hi, 60.0).unwrap();
        let p_lo = survival_prob(&lo, 60.0).unwrap();
        assert!(p_hi.is_finite() && p_hi < 1.0);
        assert!(p_lo.is_finite() && p_lo > 0.0);
    }

    #[test]
    fn ages_above_one_hundred_are_clamped() {
        let v = RiskFactors::new(5.0, 4.0, 1.0);
        assert_eq!(
            survival_prob(&v, 104.0).unwrap(),
            survival_prob(&v, 100.0).unwrap()
        );
    }

    proptest! {
        #[test]
        fn survival_prob_in_open_unit_interval(
            v1 in -50.0..50.0f64, v2 in -50.0..50.0f64, v3 in -50.0..50.0f64,
            age in 18.0..=100.0f64,
        ) {
            let p = survival_prob(&RiskFactors::new(v1, v2, v3), age).unwrap();
            prop_assert!(p > 0.0 && p < 1.0);
        }

        #[test]
        fn survival_index_path_is_monotone_and_bounded(
            vs in proptest::collection::vec((-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64), 0..35)
        ) {
            let path: Vec<_> = vs.iter().map(|&(a, b, c)| RiskFactors::new(a, b, c)).collect();
            let s = survival_index_path(&path, 65).unwrap();
            prop_assert_eq!(s.len(), path.len() + 1);
            prop_assert_eq!(s[0], 1.0);
            for w in s.windows(2) {
                prop_assert!(w[1] <= w[0]);
                prop_assert!((0.0..=1.0).contains(&w[1]));
            }
        }
    }

    #[test]
    fn deterministic_propagation_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = CohortState::new(65, 1000.0);
        let same = propagate_cohort(&c, 1.0, PropagationMode::Deterministic, &mut rng).unwrap();
        assert_eq!(same.size, 1000.0);
        assert_eq!(same.age, 66);
        let next = propagate_cohort(&c, 0.97, PropagationMode::Deterministic, &mut rng).unwrap();
        assert!(close(next.size, 970.0, 1e-9));
        assert!(close(next.index, 0.97, 1e-15));
    }

    #[test]
    fn binomial_propagation_matches_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = CohortState::new(65, 1e6);
        let reps = 100;
        let mean = (0..reps)
            .map(|_| {
                propagate_cohort(&c, 0.97, PropagationMode::Binomial, &mut rng)
                    .unwrap()
                    .size
            })
            .sum::<f64>()
            / reps as f64;
        let sigma = (1e6f64 * 0.97 * 0.03).sqrt();
        assert!((mean - 970_000.0).abs() <= 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn binomial_mean_matches_deterministic_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = CohortState::new(80, 500.0);
        let p = 0.93;
        let det = propagate_cohort(&c, p, PropagationMode::Deterministic, &mut rng).unwrap();
        let draws = 20_000;
        let sizes: Vec<f64> = (0..draws)
            .map(|_| {
                propagate_cohort(&c, p, PropagationMode::Binomial, &mut rng)
                    .unwrap()
                    .size
            })
            .collect();
        let mean = sizes.iter().sum::<f64>() / draws as f64;
        let var = sizes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let se = (var / draws as f64).sqrt();
        assert!((mean - det.size).abs() <= 4.0 * se);
    }

    #[test]
    fn binomial_propagation_of_empty_cohort() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = CohortState {
            age: 99,
            size: 0.0,
            index: 0.1,
        };
        let next = propagate_cohort(&c, 0.5, PropagationMode::Binomial, &mut rng).unwrap();
        assert_eq!(next.size, 0.0);
        assert!(next.index <= c.index);
    }

    #[test]
    fn survival_index_examples() {
        let zero = RiskFactors::new(0.0, 0.0, 0.0);
        assert_eq!(
            survival_index_path(&[zero, zero], 65).unwrap(),
            vec![1.0, 0.5, 0.25]
        );
        assert_eq!(survival_index_path(&[], 65).unwrap(), vec![1.0]);

        // Constant predictor with p = 0.98 at every age.
        let logit = (0.98f64 / 0.02).ln();
        let v = RiskFactors::new(logit, logit, logit);
        let s = survival_index_path(&vec![v; 30], 65).unwrap();
        assert!(close(s[30], 0.98f64.powi(30), 1e-12));
        assert!(close(s[30], 0.5455, 1e-4));
    }

    fn exact_model_data(v: &RiskFactors, exposure: f64) -> Vec<MortalityRecord> {
        (18..=100)
            .map(|age| {
                let p = survival_prob(v, f64::from(age)).unwrap();
                MortalityRecord {
                    age,
                    exposure,
                    deaths: exposure * (1.0 - p),
                }
            })
            .collect()
    }

    #[test]
    fn fit_recovers_generating_factors() {
        let truth = RiskFactors::new(4.0, 3.0, 1.5);
        let fitted = fit_risk_factors(&exact_model_data(&truth, 1e6)).unwrap();
        assert!(close(fitted.v1, 4.0, 1e-3));
        assert!(close(fitted.v2, 3.0, 1e-3));
        assert!(close(fitted.v3, 1.5, 1e-3));
    }

    #[test]
    fn fit_half_mortality_gives_zero_factors() {
        let data: Vec<_> = (18..=100)
            .map(|age| MortalityRecord {
                age,
                exposure: 2000.0,
                deaths: 1000.0,
            })
            .collect();
        let v = fit_risk_factors(&data).unwrap();
        for x in v.as_array() {
            assert!(x.abs() < 1e-9);
        }
    }

    #[test]
    fn fit_single_age_is_degenerate() {
        let data = [MortalityRecord {
            age: 18,
            exposure: 1000.0,
            deaths: 3.0,
        }];
        assert!(matches!(
            fit_risk_factors(&data),
            Err(Error::FitDegenerate(_))
        ));
    }

    #[test]
    fn fit_all_survivors_is_degenerate() {
        let data: Vec<_> = (18..=100)
            .map(|age| MortalityRecord {
                age,
                exposure: 1000.0,
                deaths: 0.0,
            })
            .collect();
        assert!(matches!(
            fit_risk_factors(&data),
            Err(Error::FitDegenerate(_))
        ));
    }

    #[test]
    fn fit_rejects_inconsistent_rows() {
        let data = [MortalityRecord {
            age: 40,
            exposure: 10.0,
            deaths: 11.0,
        }];
        assert!(matches!(
            fit_risk_factors(&data),
            Err(Error::InvalidMortalityData(_))
        ));
    }

    #[test]
    fn csv_reader_checks_header() {
        let ok = "age,exposure,deaths\n65,1000,12\n66,990,13.5\n";
        let rows = read_mortality_csv(ok.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].deaths, 13.5);
        let bad = "x,exposure,deaths\n65,1000,12\n";
        assert!(read_mortality_csv(bad.as_bytes()).is_err());
    }
}

//! Joint mortality/economic risk-factor system and asset returns.
//!
//! The state holds three mortality risk factors, log GDP, the term spread,
//! the log credit spread, the log short yield and the log equity index. Each
//! period every component moves by an affine function of the lagged state
//! plus a shock; yields and returns are derived from the state.

mod lhs;
mod scenario;

pub use lhs::{iid_normals, lhs_normals, lhs_uniforms, psd_cholesky};
pub use scenario::{
    generate_scenarios, load_scenarios_csv, read_scenarios_csv, save_scenarios_csv,
    write_scenarios_csv, Scenario,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mortality::RiskFactors;
use crate::N_ASSETS;

/// Dimension of the risk-factor state.
pub const STATE_DIM: usize = 8;

/// Modified durations of bills, government bonds and corporate bonds.
pub const DURATIONS: [f64; 3] = [1.0, 5.0, 5.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EconState {
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    /// Log per-capita real GDP.
    pub g: f64,
    /// Term spread: log 5-year yield minus log 1-year yield.
    #[serde(rename = "sT")]
    pub term_spread: f64,
    /// Log of the log-yield gap between riskier and safer corporate bonds.
    #[serde(rename = "sC")]
    pub credit_spread: f64,
    /// Log 1-year government yield.
    pub y1: f64,
    /// Log equity total-return index.
    #[serde(rename = "sE")]
    pub equity: f64,
}

impl EconState {
    pub fn from_array(x: [f64; STATE_DIM]) -> Self {
        Self {
            v1: x[0],
            v2: x[1],
            v3: x[2],
            g: x[3],
            term_spread: x[4],
            credit_spread: x[5],
            y1: x[6],
            equity: x[7],
        }
    }

    pub fn to_array(&self) -> [f64; STATE_DIM] {
        [
            self.v1,
            self.v2,
            self.v3,
            self.g,
            self.term_spread,
            self.credit_spread,
            self.y1,
            self.equity,
        ]
    }

    pub fn mortality(&self) -> RiskFactors {
        RiskFactors::new(self.v1, self.v2, self.v3)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

/// Coefficients of the risk-factor system. Only the drift terms that appear
/// in the model carry a coefficient; everything else is structurally zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCoefficients {
    pub a11: f64,
    pub a33: f64,
    pub a34: f64,
    pub a45: f64,
    pub a46: f64,
    pub a55: f64,
    pub a66: f64,
    pub a77: f64,
    /// Intercepts `b1..b8`.
    pub b: [f64; STATE_DIM],
    /// Covariance of the shock vector, row-major.
    pub shock_cov: [[f64; STATE_DIM]; STATE_DIM],
    /// Period length in years.
    pub delta_t: f64,
}

impl ModelCoefficients {
    /// All drift, intercept and shock terms zero.
    pub fn zero() -> Self {
        Self {
            a11: 0.0,
            a33: 0.0,
            a34: 0.0,
            a45: 0.0,
            a46: 0.0,
            a55: 0.0,
            a66: 0.0,
            a77: 0.0,
            b: [0.0; STATE_DIM],
            shock_cov: [[0.0; STATE_DIM]; STATE_DIM],
            delta_t: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let drift = [
            self.a11, self.a33, self.a34, self.a45, self.a46, self.a55, self.a66, self.a77,
        ];
        if !drift.iter().chain(self.b.iter()).all(|x| x.is_finite()) {
            return Err(Error::Config("non-finite drift coefficient".into()));
        }
        if !(self.delta_t.is_finite() && self.delta_t > 0.0) {
            return Err(Error::Config(format!(
                "delta_t must be positive, got {}",
                self.delta_t
            )));
        }
        for i in 0..STATE_DIM {
            for j in 0..STATE_DIM {
                let (x, y) = (self.shock_cov[i][j], self.shock_cov[j][i]);
                if !x.is_finite() {
                    return Err(Error::Config("non-finite shock covariance".into()));
                }
                if (x - y).abs() > 1e-12 * (1.0 + x.abs().max(y.abs())) {
                    return Err(Error::Config(format!(
                        "shock covariance not symmetric at ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        psd_cholesky(&self.shock_cov)?;
        Ok(())
    }

    pub fn is_shock_free(&self) -> bool {
        self.shock_cov.iter().flatten().all(|&x| x == 0.0)
    }
}

/// Advances the state by one period with the given shock vector.
pub fn step_state(s: &EconState, c: &ModelCoefficients, shock: &[f64; STATE_DIM]) -> EconState {
    let b = &c.b;
    EconState {
        v1: s.v1 + (c.a11 * s.v1 + b[0] + shock[0]),
        v2: s.v2 + (b[1] + shock[1]),
        v3: s.v3 + (c.a33 * s.v3 + c.a34 * s.g + b[2] + shock[2]),
        g: s.g + (c.a45 * s.term_spread + c.a46 * s.credit_spread + b[3] + shock[3]),
        term_spread: s.term_spread + (c.a55 * s.term_spread + b[4] + shock[4]),
        credit_spread: s.credit_spread + (c.a66 * s.credit_spread + b[5] + shock[5]),
        y1: s.y1 + (c.a77 * s.y1 + b[6] + shock[6]),
        equity: s.equity + (b[7] + shock[7]),
    }
}

/// Annualized yields of bills, government bonds and corporate bonds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YieldCurvePoint {
    pub y1: f64,
    pub y2: f64,
    pub y3: f64,
}

impl YieldCurvePoint {
    pub fn as_array(&self) -> [f64; 3] {
        [self.y1, self.y2, self.y3]
    }
}

/// Decodes yields from the state: `Y1 = e^{y1}`, `Y2 = e^{y1 + sT}` and
/// `Y3 = e^{log Y2 + e^{sC}}`, so the credit spread stays positive.
pub fn yields_from_state(s: &EconState) -> YieldCurvePoint {
    let log_y2 = s.y1 + s.term_spread;
    YieldCurvePoint {
        y1: s.y1.exp(),
        y2: log_y2.exp(),
        y3: (log_y2 + s.credit_spread.exp()).exp(),
    }
}

/// Inverse of [`yields_from_state`]: returns `(y1, sT, sC)`.
pub fn encode_yields(curve: &YieldCurvePoint) -> Result<(f64, f64, f64)> {
    if !(curve.y1 > 0.0 && curve.y2 > 0.0 && curve.y3 > curve.y2) {
        return Err(Error::InvalidArgument(format!(
            "yields must satisfy 0 < Y1, 0 < Y2 < Y3, got {curve:?}"
        )));
    }
    let y1 = curve.y1.ln();
    let term_spread = curve.y2.ln() - y1;
    let credit_spread = (curve.y3.ln() - curve.y2.ln()).ln();
    Ok((y1, term_spread, credit_spread))
}

/// Gross one-period returns of the four assets over `[t-1, t]`.
///
/// Bonds earn the start-of-period yield less a duration-weighted price
/// effect; the corporate bond carries the government long yield.
pub fn asset_returns(
    prev: &YieldCurvePoint,
    curr: &YieldCurvePoint,
    prev_equity: f64,
    curr_equity: f64,
    delta_t: f64,
) -> [f64; N_ASSETS] {
    let [d1, d2, d3] = DURATIONS;
    [
        (prev.y1 * delta_t - d1 * (curr.y1 - prev.y1)).exp(),
        (prev.y2 * delta_t - d2 * (curr.y2 - prev.y2)).exp(),
        (prev.y2 * delta_t - d3 * (curr.y3 - prev.y3)).exp(),
        (curr_equity - prev_equity).exp(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(x: [f64; 8]) -> EconState {
        EconState::from_array(x)
    }

    #[test]
    fn zero_model_leaves_state_unchanged() {
        let s = state([7.9, 6.0, 0.75, 0.1, 0.3, -1.4, -3.7, 0.2]);
        let next = step_state(&s, &ModelCoefficients::zero(), &[0.0; 8]);
        assert_eq!(next, s);
    }

    #[test]
    fn term_spread_stationary_point() {
        let mut c = ModelCoefficients::zero();
        c.a55 = -0.5;
        c.b[4] = 0.01;
        let s = state([0.0, 0.0, 0.0, 0.0, 0.02, 0.0, 0.0, 0.0]);
        let next = step_state(&s, &c, &[0.0; 8]);
        assert!((next.term_spread - 0.02).abs() < 1e-15);
    }

    #[test]
    fn equity_is_pure_drift() {
        let mut c = ModelCoefficients::zero();
        c.b[7] = 0.08;
        let s = state([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.5]);
        let next = step_state(&s, &c, &[0.0; 8]);
        assert!((next.equity - 1.58).abs() < 1e-15);
    }

    #[test]
    fn cross_terms_use_lagged_values() {
        let mut c = ModelCoefficients::zero();
        c.a33 = -0.1;
        c.a34 = 0.05;
        c.a45 = 0.03;
        c.a46 = -0.02;
        let s = state([0.0, 0.0, 1.0, 2.0, 0.5, -1.0, 0.0, 0.0]);
        let next = step_state(&s, &c, &[0.0; 8]);
        assert!((next.v3 - (1.0 - 0.1 + 0.1)).abs() < 1e-15);
        assert!((next.g - (2.0 + 0.015 + 0.02)).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn step_is_affine_in_shock(
            s in proptest::array::uniform8(-5.0..5.0f64),
            e1 in proptest::array::uniform8(-1.0..1.0f64),
            e2 in proptest::array::uniform8(-1.0..1.0f64),
            a in proptest::array::uniform8(-0.5..0.5f64),
            b in proptest::array::uniform8(-0.5..0.5f64),
        ) {
            let c = ModelCoefficients {
                a11: a[0], a33: a[1], a34: a[2], a45: a[3], a46: a[4], a55: a[5], a66: a[6], a77: a[7],
                b,
                ..ModelCoefficients::zero()
            };
            let st = state(s);
            let mut sum = [0.0; 8];
            for i in 0..8 { sum[i] = e1[i] + e2[i]; }
            let base = step_state(&st, &c, &e1).to_array();
            let both = step_state(&st, &c, &sum).to_array();
            for i in 0..8 {
                prop_assert!((both[i] - base[i] - e2[i]).abs() <= 1e-12);
            }
        }

        #[test]
        fn yield_encoding_round_trips(
            y1 in 0.001..0.2f64, slope in 0.2..3.0f64, gap in 1e-4..1.0f64,
        ) {
            let y2 = y1 * slope;
            let y3 = y2 * gap.exp();
            let curve = YieldCurvePoint { y1, y2, y3 };
            let (ly1, st, sc) = encode_yields(&curve).unwrap();
            let s = EconState { y1: ly1, term_spread: st, credit_spread: sc, ..state([0.0; 8]) };
            let back = yields_from_state(&s);
            prop_assert!((back.y1 - y1).abs() <= 1e-12 * y1.max(1.0));
            prop_assert!((back.y2 - y2).abs() <= 1e-12 * y2.max(1.0));
            prop_assert!((back.y3 - y3).abs() <= 1e-12 * y3.max(1.0));
        }
    }

    #[test]
    fn yield_examples() {
        let base = state([0.0; 8]);
        let flat = EconState {
            y1: 0.025f64.ln(),
            ..base
        };
        let c = yields_from_state(&flat);
        assert!((c.y1 - 0.025).abs() < 1e-15);
        assert!((c.y2 - 0.025).abs() < 1e-15);

        let sloped = EconState {
            y1: 0.025f64.ln(),
            term_spread: (0.035f64 / 0.025).ln(),
            credit_spread: (0.045f64.ln() - 0.035f64.ln()).ln(),
            ..base
        };
        let c = yields_from_state(&sloped);
        assert!((c.y2 - 0.035).abs() < 1e-15);
        assert!((c.y3 - 0.045).abs() < 1e-15);
    }

    #[test]
    fn return_examples() {
        let flat = YieldCurvePoint {
            y1: 0.025,
            y2: 0.035,
            y3: 0.045,
        };
        let r = asset_returns(&flat, &flat, 0.0, 0.08, 1.0);
        assert!((r[0] - 0.025f64.exp()).abs() < 1e-15);
        assert!((r[0] - 1.02532).abs() < 1e-5);
        assert!((r[3] - 1.08329).abs() < 1e-5);

        let up = YieldCurvePoint { y2: 0.045, ..flat };
        let r = asset_returns(&flat, &up, 0.0, 0.0, 1.0);
        assert!((r[1] - (-0.015f64).exp()).abs() < 1e-15);
        assert!((r[1] - 0.98511).abs() < 1e-5);
        // Corporate yield unchanged: carry at the government long yield.
        assert!((r[2] - 0.035f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn validate_rejects_asymmetric_and_indefinite_covariances() {
        let mut c = ModelCoefficients::zero();
        assert!(c.validate().is_ok());
        c.shock_cov[0][1] = 0.1;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.shock_cov[1][0] = 0.1;
        assert!(matches!(
            c.validate(),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
    }
}

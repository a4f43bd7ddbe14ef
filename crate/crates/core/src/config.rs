//! Model configuration: coefficients, initial state, shock covariance and
//! simulation settings, read from a TOML file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::economy::{EconState, ModelCoefficients, STATE_DIM};
use crate::error::{Error, Result};

const DEFAULT_MODEL: &str = include_str!("../config/model.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    #[default]
    Lhs,
    Iid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSettings {
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub seed: u64,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default = "default_start_age")]
    pub start_age: u32,
}

fn default_start_age() -> u32 {
    65
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub coefficients: ModelCoefficients,
    pub initial_state: EconState,
    pub simulation: SimulationSettings,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoefficients {
    #[serde(default = "one")]
    delta_t: f64,
    a11: f64,
    a33: f64,
    a34: f64,
    a45: f64,
    a46: f64,
    a55: f64,
    a66: f64,
    a77: f64,
    b1: f64,
    b2: f64,
    b3: f64,
    b4: f64,
    b5: f64,
    b6: f64,
    b7: f64,
    b8: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawShockCov {
    values: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    coefficients: RawCoefficients,
    initial_state: EconState,
    shock_cov: RawShockCov,
    simulation: SimulationSettings,
}

impl ModelConfig {
    /// The shipped calibration.
    pub fn default_config() -> Self {
        Self::from_toml_str(DEFAULT_MODEL).expect("shipped model configuration is valid")
    }

    pub fn default_toml() -> &'static str {
        DEFAULT_MODEL
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawModel = toml::from_str(text)?;
        let c = raw.coefficients;
        let values = raw.shock_cov.values;
        if values.len() != STATE_DIM * STATE_DIM {
            return Err(Error::Config(format!(
                "shock_cov.values needs {} entries, found {}",
                STATE_DIM * STATE_DIM,
                values.len()
            )));
        }
        let mut shock_cov = [[0.0; STATE_DIM]; STATE_DIM];
        for (i, row) in shock_cov.iter_mut().enumerate() {
            row.copy_from_slice(&values[i * STATE_DIM..(i + 1) * STATE_DIM]);
        }
        let coefficients = ModelCoefficients {
            a11: c.a11,
            a33: c.a33,
            a34: c.a34,
            a45: c.a45,
            a46: c.a46,
            a55: c.a55,
            a66: c.a66,
            a77: c.a77,
            b: [c.b1, c.b2, c.b3, c.b4, c.b5, c.b6, c.b7, c.b8],
            shock_cov,
            delta_t: c.delta_t,
        };
        coefficients.validate()?;
        if !raw.initial_state.is_finite() {
            return Err(Error::Config("initial_state must be finite".into()));
        }
        if raw.simulation.n == 0 {
            return Err(Error::Config("simulation.n must be at least 1".into()));
        }
        Ok(Self {
            coefficients,
            initial_state: raw.initial_state,
            simulation: raw.simulation,
        })
    }
}

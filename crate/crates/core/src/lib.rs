//! Scenario-based asset-liability management for longevity-linked liabilities.
//!
//! The crate is organised along the pipeline it implements:
//!
//! * [`mortality`]: logistic survival model, cohort propagation and
//!   risk-factor estimation.
//! * [`economy`]: the joint mortality/economic risk-factor system, Latin
//!   hypercube shocks, asset returns and scenario packaging.
//! * [`strategies`]: parametric basis strategies and self-financing wealth
//!   propagation with claim payments.
//! * [`riskopt`]: entropic risk and optimal diversification over the simplex
//!   of basis-strategy weights.
//! * [`experiment`]: the end-to-end runner that produces objective tables,
//!   weights, rankings and scatter extracts.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod economy;
pub mod error;
pub mod experiment;
pub mod mortality;
pub mod riskopt;
pub mod strategies;

pub use error::{Error, Result};

/// Number of investable assets: 1-year bills, 5-year bonds, corporate bonds
/// and equity, in that order.
pub const N_ASSETS: usize = 4;

//! Heat-pump control workbench.
//!
//! Lumped RC building models driven by a heat pump, a constrained-MDP
//! environment around them, reference controllers (heating curve, MPC) and
//! constrained soft actor-critic trainers (penalty shaping, Lagrangian
//! multiplier, smoothed log barrier), plus KPI evaluation and an experiment
//! runner.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barrier;
pub mod building;
pub mod cli;
pub mod controllers;
pub mod crl;
pub mod disturbance;
pub mod env;
pub mod error;
pub mod experiment;
pub mod heat_pump;
pub mod kpi;
pub mod plant;
pub mod thermal;

pub use error::{Error, Result};

//! Signed distance functions from unoriented point clouds, trained jointly
//! with an Ambrosio–Tortorelli phase field that marks the medial axis.
//!
//! The crate is organised bottom-up:
//!
//! * [`diffjet`] propagates second-order jets (value, gradient, Hessian)
//!   through network layers and accumulates parameter gradients in reverse.
//! * [`nets`] holds the quadratic-expansion SIREN used for the distance field
//!   and the SIREN ResNet used for the phase field, plus checkpoints.
//! * [`loss`] evaluates the five loss terms and their weighted total.
//! * [`sampler`] builds the adaptive quadrature grid and surface weights.
//! * [`trainer`] runs the three-phase Adam schedule.
//! * [`geometry`], [`metrics`], [`render`] and [`gridref`] cover analytic
//!   shapes, evaluation, sphere tracing and a network-free grid minimizer.
//! * [`config`] parses the flat `key=value` run configuration.

pub mod cli;
pub mod config;
pub mod diffjet;
pub mod error;
pub mod field;
pub mod geometry;
pub mod gridref;
pub mod loss;
pub mod metrics;
pub mod nets;
pub mod render;
pub mod sampler;
pub mod trainer;

pub use error::{Error, Result};

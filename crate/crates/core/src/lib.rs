//! Multi-fidelity rare-event risk estimation for scenario-based AV testing.
//!
//! The crate links a cheap, scalable test setup with a costly, trustworthy one:
//! a Gaussian-process metamodel of the cheap setup parameterizes importance
//! sampling runs executed in the trustworthy setup ("transfer importance
//! sampling"). Plain Monte Carlo and single-setup metamodel-based importance
//! sampling are provided as baselines.
//!
//! Module map:
//!
//! - [`scenario`]: jaywalking parameter space, friction law, criticality measure
//! - [`sim`]: seeded closed-loop simulators at two fidelity levels
//! - [`density`]: synthetic naturalistic data, KDE and the parameter sampler
//! - [`metamodel`]: Sobol designs and the GP metamodel
//! - [`estimate`]: MC / IS / AIS / TIS estimators, convergence and stopping
//! - [`transfer`]: heterogeneous transfer from scenario to concept parameters
//! - [`campaign`]: configuration, training and campaign orchestration used by the CLI

pub mod campaign;
pub mod density;
pub mod error;
pub mod estimate;
pub mod metamodel;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod transfer;

pub use error::{Error, Result};

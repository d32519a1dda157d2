//! Simulation-free training and evaluation lab for continuous normalizing
//! flows: conditional probability paths, minibatch optimal-transport
//! couplings, vector-field regression, and ODE-based evaluation.

pub mod batch;
pub mod coupling;
pub mod data;
pub mod error;
pub mod eval;
pub mod integrate;
pub mod net;
pub mod paths;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};

//! Online-learning reservoir feedforward control with PD feedback.
//!
//! A single fixed reservoir (an echo state network, or a tap-delay readout
//! of a simulated pressure chamber) turns the future reference into a state
//! vector. A linear output layer on that state, adapted online by recursive
//! least squares from delayed input/output pairs, produces the feedforward
//! command; a PD loop closes the feedback path.

pub mod config;
pub mod controller;
pub mod error;
pub mod harness;
pub mod learner;
pub mod plants;
pub mod reservoir;
pub mod rng;
pub mod signals;

pub use error::{Error, Result};

//! Experiment runner for the matching-market bandit policies: JSON configs,
//! seeded multi-replica simulation, CSV/JSON/SVG outputs, figure
//! reproduction and the command-line interface.

pub mod checks;
pub mod cli;
pub mod config;
pub mod error;
pub mod figures;
pub mod output;
pub mod plot;
pub mod runner;

pub use error::{HarnessError, Result};

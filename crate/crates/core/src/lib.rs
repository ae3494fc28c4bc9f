//! Core algorithms for two-sided matching markets with linear contextual
//! utilities: stable matching, ridge estimation with confidence radii,
//! replicated-market approximation oracles, bandit policies, context
//! environments and regret accounting.
//!
//! Players and arms are addressed by 0-based indices in code. File formats
//! (market JSON, matchings) use 1-based ids.

pub mod environments;
pub mod error;
pub mod estimation;
pub mod market;
pub mod oracle;
pub mod policies;
pub mod regret;

pub use error::{Error, Result};

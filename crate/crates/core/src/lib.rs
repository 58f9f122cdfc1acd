//! Edge-reinforced random walks on the non-negative integers.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod numfmt;
pub mod rng;
pub mod schemes;
pub mod stats;
pub mod urn;
pub mod walk;

pub use error::{Error, Result};

//! Positive-unlabeled learning with a collective prior-matching loss.

pub mod cli;
pub mod data;
pub mod elicitation;
pub mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod report;
pub mod train;

pub use error::{Error, Result};

//! Average treatment effect estimation when the confounder is observed only
//! for a selected subset of records.

pub mod bounds;
pub mod cli;
pub mod error;
pub mod estimate;
pub mod io;
pub mod model;
pub mod policy;
pub mod sim;

pub use error::{Error, Result};

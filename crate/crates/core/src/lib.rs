pub mod assign;
pub mod classifier;
pub mod codes;
mod error;
pub mod harness;
pub mod nn;
pub mod replay;
pub mod seeds;

pub use error::{Error, Result};

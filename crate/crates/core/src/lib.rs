pub mod agents;
pub mod encoder;
pub mod environment;
pub mod harness;
pub mod error;
pub mod evaluator;
pub mod interval;
pub mod nn;
pub mod oracle;
pub mod splitmodel;
pub mod substrate;
pub mod traffic;

pub use error::{Error, Result};

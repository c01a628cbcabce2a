pub mod channel;
pub mod commands;
pub mod error;
pub mod estimate;
pub mod metrics;
pub mod protocol;
pub mod qlin;
pub mod rng;
pub mod states;

pub use error::{Error, Result};

//! Frame error rate versus latency for linearly coded distributed channel
//! decoding with straggling servers.

pub mod bounds;
pub mod cli;
pub mod code_analysis;
pub mod config;
pub mod error;
pub mod latency;
pub mod output;
pub mod rate;
pub mod schemes;
pub mod simulate;

pub use error::{Error, Result};

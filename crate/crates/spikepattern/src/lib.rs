//! Configuration, presets, file formats and the command line of the spike pattern
//! simulator. The numerics live in `spikepattern-core`.

#![deny(missing_docs)]

pub mod cli;
pub mod config;
pub mod error;
pub mod output;
pub mod presets;
pub mod tasks;

pub use cli::cli_main;
pub use config::{load_config, ScenarioConfig};
pub use error::HarnessError;
pub use presets::Preset;

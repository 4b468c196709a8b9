//! Experiment harness: TOML configuration, seeded presets, CSV trajectories
//! and JSON summaries.

pub mod config;
pub mod presets;
pub mod summary;

pub use config::{ExperimentConfig, Preset};
pub use presets::execute;
pub use summary::{RunReport, SummaryStats};

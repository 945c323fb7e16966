//! Configuration, execution and reporting for batch simulation studies.

pub mod config;
pub mod report;
pub mod run;

pub use config::{parse_config, parse_config_str, ConfigError, StudyConfig};
pub use report::Format;
pub use run::{run_study, RunOptions, RunReport};

//! Experiment harness for the collapse-core laboratory: config parsing,
//! experiment execution and report bundles.

pub mod config;
pub mod experiments;
pub mod parallel;
pub mod report;

use std::path::{Path, PathBuf};

pub use config::{validate_config, ConfigError, ExperimentConfig, ExperimentName};
pub use report::Report;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

/// Output directory: the explicit override, then the config's, then `runs/<name>`.
pub fn output_dir(config: &ExperimentConfig, explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(config.name.as_str()))
}

/// Plain-text table of the registered experiments.
pub fn experiment_table() -> String {
    let mut out = format!("{:<20} {:<72} {}\n", "NAME", "DESCRIPTION", "CLAIMS");
    for name in ExperimentName::ALL {
        out.push_str(&format!("{:<20} {:<72} {}\n", name.as_str(), name.description(), name.claims()));
    }
    out
}

pub fn experiment_json() -> serde_json::Value {
    ExperimentName::ALL
        .iter()
        .map(|n| {
            serde_json::json!({
                "name": n.as_str(),
                "description": n.description(),
                "claims": n.claims(),
            })
        })
        .collect()
}

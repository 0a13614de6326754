//! Experiment driver for `pel-core`: configuration files, report and data
//! formats, the certification suite runner and the `pel` command line.

pub mod bundled;
pub mod config;
pub mod error;
pub mod experiment;
pub mod formats;
pub mod report;
pub mod suite;
pub mod svg;
pub mod verify;

use std::path::Path;

pub use config::ExperimentConfig;
pub use error::{PelError, Result};
pub use report::MetricReport;

/// Loads a config from a file, falling back to a bundled config of that
/// name.
pub fn load_config(spec: &str) -> Result<ExperimentConfig> {
    let path = Path::new(spec);
    let text = if path.is_file() {
        std::fs::read_to_string(path).map_err(|e| PelError::io(path, e))?
    } else if let Some(t) = bundled::bundled(spec) {
        t.to_string()
    } else {
        return Err(PelError::Usage(format!(
            "{spec}: no such file and no bundled config of that name"
        )));
    };
    ExperimentConfig::parse(&text).map_err(|source| PelError::Config {
        path: path.to_path_buf(),
        source,
    })
}

/// World names and one-line descriptions for `list-worlds`.
pub fn world_list() -> Vec<(&'static str, &'static str)> {
    vec![
        (
            "rotation",
            "points at radius r in [lo, hi] under planar rotations; label 1[r > median]",
        ),
        ("bernoulli_uv", "two fair bits (u, v), label v, group flips v"),
        ("six_nine", "antipodal Gaussian clusters exchanged by the half-turn"),
    ]
}

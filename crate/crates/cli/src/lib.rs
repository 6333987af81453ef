//! Command line driver: configuration files, solver runs and CSV/JSON output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod output;
pub mod run;

use std::path::Path;

use serde_json::{json, Value};

pub use config::{parse_config, parse_config_with, Command, RunConfig};
pub use error::CliError;
pub use run::{execute, RunOutcome};

/// Loads the configuration (or starts from an empty one), forces `command`,
/// applies the overrides and `out`, then runs.
pub fn run_command(
    command: Command,
    config: Option<&Path>,
    out: Option<&Path>,
    overrides: &[String],
) -> Result<RunOutcome, CliError> {
    let mut value = match config {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {}", path.display(), e)))?;
            serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {}", path.display(), e)))?
        }
        None => Value::Object(Default::default()),
    };
    config::set_path(&mut value, "command", json!(command))?;
    for o in overrides {
        config::apply_override(&mut value, o)?;
    }
    if let Some(dir) = out {
        config::set_path(&mut value, "output.directory", json!(dir.to_string_lossy()))?;
    }
    let cfg = config::from_value(value)?;
    execute(&cfg)
}

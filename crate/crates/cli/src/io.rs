use std::fs;
use std::path::{Path, PathBuf};

use imm_learn::models::ParamDocument;
use imm_learn::optimizer::TrainReport;
use imm_learn::ParamVector;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::CliError;

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::config(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Write to `path`, or stdout when absent.
pub fn emit(path: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match path {
        Some(p) => write_file(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

/// Parameters from a training report, a parameter document or a bare
/// parameter vector.
pub fn load_params(path: &Path) -> Result<ParamVector, CliError> {
    let value: serde_json::Value = read_json(path)?;
    let bad = |e: serde_json::Error| CliError::config(format!("{}: {e}", path.display()));
    let params = if value.get("final_params").is_some() {
        serde_json::from_value::<TrainReport>(value).map_err(bad)?.final_params
    } else if value.get("tau").is_some() {
        serde_json::from_value::<ParamDocument>(value).map_err(bad)?.split()?.0
    } else {
        serde_json::from_value::<ParamVector>(value).map_err(bad)?
    };
    params.validate()?;
    Ok(params)
}

/// Print the fully resolved options of a command to stderr.
pub fn log_resolved(command: &str, resolved: &impl Serialize) {
    match serde_json::to_string(resolved) {
        Ok(json) => eprintln!("{command}: resolved config {json}"),
        Err(e) => eprintln!("{command}: cannot serialize config: {e}"),
    }
}

/// `report.json` -> `report.loss.csv`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

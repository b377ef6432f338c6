use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use super::{dir_name, io_err, subdirectories, write_err, PrepError, MAPPING_FILE};
use crate::extract::{FAILED_LOG, MAIN_LOG, SUMMARY_FILE};

/// Files a processed replaypack carries besides the replay JSONs.
pub const AUXILIARY_FILES: [&str; 4] = [SUMMARY_FILE, MAPPING_FILE, FAILED_LOG, MAIN_LOG];

/// Prefix each auxiliary file in `dir` with `<tournament_name>_`. Files that
/// already carry the prefix are left alone, so running twice is harmless.
/// Returns the prefixed names present afterwards.
pub fn rename_auxiliary_files(dir: &Path, tournament_name: &str) -> Result<Vec<String>, PrepError> {
    let mut present = Vec::new();
    for file in AUXILIARY_FILES {
        let source = dir.join(file);
        let renamed = format!("{tournament_name}_{file}");
        let target = dir.join(&renamed);
        if source.is_file() {
            if target.exists() {
                let same = std::fs::read(&source).map_err(io_err(&source))?
                    == std::fs::read(&target).map_err(io_err(&target))?;
                if !same {
                    return Err(PrepError::NameExists(target));
                }
                std::fs::remove_file(&source).map_err(write_err(&source))?;
            } else {
                std::fs::rename(&source, &target).map_err(write_err(&target))?;
            }
        }
        if target.is_file() {
            present.push(renamed);
        }
    }
    Ok(present)
}

/// Union of two JSON objects. Shared keys must carry equal values; all keys
/// that do not are reported together, sorted.
pub fn merge_json_values(
    a: &Map<String, Value>,
    b: &Map<String, Value>,
) -> Result<Map<String, Value>, PrepError> {
    let mut merged = a.clone();
    let mut conflicts = Vec::new();
    for (key, value) in b {
        match merged.get(key) {
            Some(existing) if existing != value => conflicts.push(key.clone()),
            Some(_) => {}
            None => {
                merged.insert(key.clone(), value.clone());
            }
        }
    }
    if conflicts.is_empty() {
        Ok(merged)
    } else {
        conflicts.sort();
        Err(PrepError::Conflict(conflicts))
    }
}

fn read_object(path: &Path) -> Result<Map<String, Value>, PrepError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    match serde_json::from_str::<Value>(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(PrepError::NotAnObject(path.to_path_buf())),
        Err(e) => Err(PrepError::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        }),
    }
}

/// Merge the JSON object files `a` and `b`.
pub fn merge_json(a: &Path, b: &Path) -> Result<Map<String, Value>, PrepError> {
    merge_json_values(&read_object(a)?, &read_object(b)?)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CopyReport {
    pub copied: Vec<PathBuf>,
    /// Input subdirectories without a mapping file.
    pub skipped: Vec<String>,
}

/// Copy `S/processed_mapping.json` for every subdirectory `S` of
/// `input_root` into `<output_root>/S`. Every counterpart is checked before
/// anything is copied.
pub fn copy_processed_mapping(
    input_root: &Path,
    output_root: &Path,
) -> Result<CopyReport, PrepError> {
    let mut report = CopyReport::default();
    let mut pending = Vec::new();
    for dir in subdirectories(input_root)? {
        let name = dir_name(&dir);
        let mapping = dir.join(MAPPING_FILE);
        if !mapping.is_file() {
            report.skipped.push(name);
            continue;
        }
        let counterpart = output_root.join(&name);
        if !counterpart.is_dir() {
            return Err(PrepError::MissingCounterpart(name));
        }
        pending.push((mapping, counterpart.join(MAPPING_FILE)));
    }
    for (source, target) in pending {
        std::fs::copy(&source, &target).map_err(write_err(&target))?;
        report.copied.push(target);
    }
    Ok(report)
}

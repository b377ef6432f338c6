use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use walkdir::WalkDir;

use super::{io_err, write_err, PrepError};
use crate::extract::REPLAY_EXTENSION;
use crate::util::sha256_hex;

pub const MAPPING_FILE: &str = "processed_mapping.json";

/// Output file name -> original path relative to the flattened root, with
/// `/` separators.
pub type ProcessedMapping = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlattenReport {
    pub mapping: ProcessedMapping,
    /// Files that matched but could not be read, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

fn is_replay(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.to_string_lossy().eq_ignore_ascii_case(REPLAY_EXTENSION))
}

fn relative_posix(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Copy every replay under `input` into the top level of `output` as
/// `<first 16 hex of sha256><original extension>`, and write the mapping to
/// `processed_mapping.json`.
///
/// Identical content found at several paths gets `_1`, `_2`, ... suffixes in
/// path order, so every source file keeps its own entry.
pub fn flatten_directory(input: &Path, output: &Path) -> Result<FlattenReport, PrepError> {
    if output.exists() {
        let mut entries = std::fs::read_dir(output).map_err(io_err(output))?;
        if entries.next().is_some() {
            return Err(PrepError::OutputNotEmpty(output.to_path_buf()));
        }
    }
    std::fs::create_dir_all(output).map_err(write_err(output))?;

    let mut mapping = ProcessedMapping::new();
    // Compared case-insensitively so the output also works on such filesystems.
    let mut taken = std::collections::HashSet::new();
    let mut skipped = Vec::new();
    for entry in WalkDir::new(input).sort_by_file_name() {
        let entry = match entry {
            Ok(entry) => entry,
            Err(e) => {
                let path = e
                    .path()
                    .map(Path::to_path_buf)
                    .unwrap_or_else(|| input.to_path_buf());
                skipped.push((path, e.to_string()));
                continue;
            }
        };
        if !entry.file_type().is_file() || !is_replay(entry.path()) {
            continue;
        }
        let bytes = match std::fs::read(entry.path()) {
            Ok(bytes) => bytes,
            Err(e) => {
                skipped.push((entry.path().to_path_buf(), e.to_string()));
                continue;
            }
        };
        let hash = &sha256_hex(&bytes)[..16];
        let extension = entry
            .path()
            .extension()
            .map(|e| e.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut name = format!("{hash}.{extension}");
        let mut n = 0;
        while !taken.insert(name.to_ascii_lowercase()) {
            n += 1;
            name = format!("{hash}_{n}.{extension}");
        }
        let target = output.join(&name);
        std::fs::write(&target, &bytes).map_err(write_err(&target))?;
        mapping.insert(name, relative_posix(input, entry.path()));
    }

    let path = output.join(MAPPING_FILE);
    let mut json = serde_json::to_vec_pretty(&mapping).expect("mapping serializes");
    json.push(b'\n');
    std::fs::write(&path, json).map_err(write_err(&path))?;
    Ok(FlattenReport { mapping, skipped })
}

//! Loading extractor output: one replay, one replaypack, or a dataset of
//! replaypacks (local or fetched through a manifest).

mod schema;

use std::path::{Path, PathBuf};

use serde_json::Value;
use thiserror::Error;

use crate::extract::{
    OutcomeStatus, PackageSummary, ProcessingOutcome, ReplayRecord, FAILED_LOG, MAIN_LOG,
    SUMMARY_FILE,
};
use crate::prep::{
    download_replaypacks, unzip, PrepError, ProcessedMapping, ReplaypackManifest, MAPPING_FILE,
};

pub use schema::{schema, validate_record_value, Violation, SCHEMA_TEXT};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: not valid JSON: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("{path}: schema violation at {field}: {reason}")]
    SchemaViolation {
        path: PathBuf,
        field: String,
        reason: String,
    },
    #[error("{0} is not a directory")]
    NotADirectory(PathBuf),
    #[error(transparent)]
    Prep(#[from] PrepError),
}

impl DatasetError {
    /// The field a schema violation names, if this is one.
    pub fn field(&self) -> Option<&str> {
        match self {
            Self::SchemaViolation { field, .. } => Some(field),
            _ => None,
        }
    }
}

/// Validate an already-parsed document and convert it.
pub fn record_from_value(doc: &Value, path: &Path) -> Result<ReplayRecord, DatasetError> {
    validate_record_value(doc).map_err(|v| DatasetError::SchemaViolation {
        path: path.to_path_buf(),
        field: v.field,
        reason: v.reason,
    })?;
    serde_json::from_value(doc.clone()).map_err(|e| DatasetError::SchemaViolation {
        path: path.to_path_buf(),
        field: String::new(),
        reason: e.to_string(),
    })
}

/// Read and validate one replay JSON.
pub fn load_replay(path: &Path) -> Result<ReplayRecord, DatasetError> {
    let bytes = std::fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let doc: Value = serde_json::from_slice(&bytes).map_err(|e| DatasetError::Parse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    record_from_value(&doc, path)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IntegrityWarning {
    /// The summary's `ok` count differs from the replay files present.
    SummaryMismatch { summary_ok: u64, indexed: usize },
    /// An auxiliary file is present but could not be read.
    UnreadableAuxiliary { path: PathBuf, reason: String },
}

/// One processed replaypack. Records are parsed on demand.
#[derive(Debug, Clone)]
pub struct ReplaypackHandle {
    pub name: String,
    pub root: PathBuf,
    pub summary: Option<PackageSummary>,
    pub mapping: Option<ProcessedMapping>,
    pub failed: Vec<ProcessingOutcome>,
    pub main_log: Option<PathBuf>,
    pub warnings: Vec<IntegrityWarning>,
    index: Vec<PathBuf>,
}

/// `name` itself or `<prefix>_name`.
fn auxiliary_kind(file_name: &str) -> Option<&'static str> {
    [SUMMARY_FILE, MAPPING_FILE, FAILED_LOG, MAIN_LOG]
        .into_iter()
        .find(|aux| {
            file_name == *aux
                || file_name
                    .strip_suffix(aux)
                    .is_some_and(|p| p.ends_with('_'))
        })
}

fn parse_failed_log(text: &str) -> Vec<ProcessingOutcome> {
    text.lines()
        .filter_map(|line| {
            let mut parts = line.splitn(3, '\t');
            let path = parts.next()?.to_string();
            let status = match parts.next()? {
                "Ok" => OutcomeStatus::Ok,
                "Filtered" => OutcomeStatus::Filtered,
                "Failed" => OutcomeStatus::Failed,
                _ => return None,
            };
            Some(ProcessingOutcome {
                path,
                status,
                reason: parts.next().unwrap_or_default().to_string(),
            })
        })
        .collect()
}

/// Index a replaypack directory: replay JSONs in file-name order, plus any
/// auxiliary files (plain or tournament-prefixed).
pub fn load_replaypack(dir: &Path) -> Result<ReplaypackHandle, DatasetError> {
    if !dir.is_dir() {
        return Err(DatasetError::NotADirectory(dir.to_path_buf()));
    }
    let io = |source| DatasetError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut handle = ReplaypackHandle {
        name: dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        root: dir.to_path_buf(),
        summary: None,
        mapping: None,
        failed: Vec::new(),
        main_log: None,
        warnings: Vec::new(),
        index: Vec::new(),
    };

    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io)?;
    entries.sort();
    for path in entries {
        if !path.is_file() {
            continue;
        }
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let unreadable = |reason: String| IntegrityWarning::UnreadableAuxiliary {
            path: path.clone(),
            reason,
        };
        match auxiliary_kind(&name) {
            Some(SUMMARY_FILE) => {
                match std::fs::read(&path)
                    .map_err(|e| e.to_string())
                    .and_then(|b| {
                        serde_json::from_slice::<PackageSummary>(&b).map_err(|e| e.to_string())
                    }) {
                    Ok(summary) => handle.summary = Some(summary),
                    Err(reason) => handle.warnings.push(unreadable(reason)),
                }
            }
            Some(MAPPING_FILE) => {
                match std::fs::read(&path)
                    .map_err(|e| e.to_string())
                    .and_then(|b| {
                        serde_json::from_slice::<ProcessedMapping>(&b).map_err(|e| e.to_string())
                    }) {
                    Ok(mapping) => handle.mapping = Some(mapping),
                    Err(reason) => handle.warnings.push(unreadable(reason)),
                }
            }
            Some(FAILED_LOG) => match std::fs::read_to_string(&path) {
                Ok(text) => handle.failed = parse_failed_log(&text),
                Err(e) => handle.warnings.push(unreadable(e.to_string())),
            },
            Some(_) => handle.main_log = Some(path),
            None if path.extension().is_some_and(|e| e == "json") => handle.index.push(path),
            None => {}
        }
    }

    if let Some(summary) = &handle.summary {
        if summary.ok != handle.index.len() as u64 {
            handle.warnings.push(IntegrityWarning::SummaryMismatch {
                summary_ok: summary.ok,
                indexed: handle.index.len(),
            });
        }
    }
    Ok(handle)
}

impl ReplaypackHandle {
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Replay JSON paths in iteration order.
    pub fn paths(&self) -> &[PathBuf] {
        &self.index
    }

    pub fn get(&self, i: usize) -> Option<Result<ReplayRecord, DatasetError>> {
        self.index.get(i).map(|p| load_replay(p))
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<ReplayRecord, DatasetError>> + '_ {
        self.index.iter().map(|p| load_replay(p))
    }
}

/// Where a dataset comes from.
#[derive(Debug, Clone)]
pub enum DatasetSource {
    /// A directory with one processed replaypack per subdirectory.
    Local(PathBuf),
    /// Archives listed in a manifest, downloaded and unpacked under `cache`.
    Manifest {
        manifest: ReplaypackManifest,
        cache: PathBuf,
    },
}

#[derive(Debug, Clone)]
pub struct DatasetHandle {
    /// Sorted by name.
    pub replaypacks: Vec<ReplaypackHandle>,
    pub manifest: Option<ReplaypackManifest>,
    pub cache: Option<PathBuf>,
}

impl DatasetHandle {
    pub fn len(&self) -> usize {
        self.replaypacks.iter().map(ReplaypackHandle::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every record, replaypack by replaypack in name order.
    pub fn iter(&self) -> impl Iterator<Item = Result<ReplayRecord, DatasetError>> + '_ {
        self.replaypacks.iter().flat_map(ReplaypackHandle::iter)
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.replaypacks
            .iter()
            .flat_map(|r| r.paths().iter().map(PathBuf::as_path))
    }
}

fn load_local(root: &Path) -> Result<Vec<ReplaypackHandle>, DatasetError> {
    if !root.is_dir() {
        return Err(DatasetError::NotADirectory(root.to_path_buf()));
    }
    let io = |source| DatasetError::Io {
        path: root.to_path_buf(),
        source,
    };
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(io)?
        .into_iter()
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    dirs.iter().map(|d| load_replaypack(d)).collect()
}

/// Open a dataset. Manifest sources are downloaded (verified) into
/// `<cache>/archives` and unpacked into `<cache>/replaypacks/<name>` first;
/// after that both kinds behave the same.
pub fn load_dataset(source: &DatasetSource) -> Result<DatasetHandle, DatasetError> {
    match source {
        DatasetSource::Local(root) => Ok(DatasetHandle {
            replaypacks: load_local(root)?,
            manifest: None,
            cache: None,
        }),
        DatasetSource::Manifest { manifest, cache } => {
            let archives = cache.join("archives");
            let unpacked = cache.join("replaypacks");
            let report = download_replaypacks(manifest, &archives)?;
            if let Some(error) = report.failures.into_iter().next() {
                return Err(error.into());
            }
            for entry in &manifest.entries {
                let dest = unpacked.join(&entry.name);
                if dest.exists() {
                    std::fs::remove_dir_all(&dest).map_err(|source| DatasetError::Io {
                        path: dest.clone(),
                        source,
                    })?;
                }
                unzip(&archives.join(entry.file_name()), &dest)?;
            }
            std::fs::create_dir_all(&unpacked).map_err(|source| DatasetError::Io {
                path: unpacked.clone(),
                source,
            })?;
            Ok(DatasetHandle {
                replaypacks: load_local(&unpacked)?,
                manifest: Some(manifest.clone()),
                cache: Some(cache.clone()),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auxiliary_names() {
        assert_eq!(auxiliary_kind("main_log.log"), Some(MAIN_LOG));
        assert_eq!(auxiliary_kind("Cup2024_main_log.log"), Some(MAIN_LOG));
        assert_eq!(
            auxiliary_kind("Cup2024_package_summary.json"),
            Some(SUMMARY_FILE)
        );
        assert_eq!(auxiliary_kind("xmain_log.log"), None);
        assert_eq!(auxiliary_kind("abc.json"), None);
    }

    #[test]
    fn failed_log_parsing() {
        let parsed = parse_failed_log(
            "a.SC2Replay\tFailed\topen_archive: BadMagic\nb.SC2Replay\tFiltered\tduration\n",
        );
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[0].status, OutcomeStatus::Failed);
        assert_eq!(parsed[1].reason, "duration");
    }
}

//! Dataset preparation: flattening, packaging, renaming, merging, map and
//! replaypack downloads, and the end-to-end pipeline.

mod auxiliary;
mod download;
mod flatten;
mod package;
mod pipeline;

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::extract::ExtractError;

pub use auxiliary::{
    copy_processed_mapping, merge_json, merge_json_values, rename_auxiliary_files, CopyReport,
    AUXILIARY_FILES,
};
pub use download::{
    download_maps, download_replaypacks, fetch_to_file, DownloadReport, ManifestEntry,
    MapDownloadReport, ReplaypackManifest, MAX_CONCURRENT_DOWNLOADS,
};
pub use flatten::{flatten_directory, FlattenReport, ProcessedMapping, MAPPING_FILE};
pub use package::{package_directories, unzip, zip_directory};
pub use pipeline::{
    process_replaypacks, run_pipeline, ExtractionConfig, PipelineConfig, PipelineReport,
    ReplaypackRun, STEPS,
};

#[derive(Debug, Error)]
pub enum PrepError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("output {0} is not empty")]
    OutputNotEmpty(PathBuf),
    #[error("cannot write output {path}: {source}")]
    OutputNotWritable { path: PathBuf, source: io::Error },
    #[error("{0} already exists with different content")]
    NameExists(PathBuf),
    #[error("conflicting values for keys {0:?}")]
    Conflict(Vec<String>),
    #[error("{0} is not a JSON object")]
    NotAnObject(PathBuf),
    #[error("cannot parse {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("no output directory matching input {0}")]
    MissingCounterpart(String),
    #[error("fetch of {url} failed: {reason}")]
    FetchFailed { url: String, reason: String },
    #[error("checksum mismatch for {0}")]
    ChecksumMismatch(String),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error("replaypack {name} failed: {reason}")]
    ReplaypackFailed { name: String, reason: String },
    #[error("zip error on {path}: {reason}")]
    Zip { path: PathBuf, reason: String },
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error("step {step} failed: {source}")]
    StepFailed {
        step: &'static str,
        source: Box<PrepError>,
    },
}

impl PrepError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Io { .. } => "Io",
            Self::OutputNotEmpty(_) => "OutputNotEmpty",
            Self::OutputNotWritable { .. } => "OutputNotWritable",
            Self::NameExists(_) => "NameExists",
            Self::Conflict(_) => "Conflict",
            Self::NotAnObject(_) => "NotAnObject",
            Self::Parse { .. } => "ParseError",
            Self::MissingCounterpart(_) => "MissingCounterpart",
            Self::FetchFailed { .. } => "FetchFailed",
            Self::ChecksumMismatch(_) => "ChecksumMismatch",
            Self::InvalidManifest(_) => "InvalidManifest",
            Self::InvalidConfig(_) => "InvalidConfig",
            Self::Zip { .. } => "ZipError",
            Self::ReplaypackFailed { .. } => "ReplaypackFailed",
            Self::Extract(ExtractError::OutputNotWritable { .. }) => "OutputNotWritable",
            Self::Extract(ExtractError::InputNotReadable { .. }) => "InputNotReadable",
            Self::StepFailed { source, .. } => source.kind(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PrepError + '_ {
    move |source| PrepError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_err(path: &Path) -> impl FnOnce(io::Error) -> PrepError + '_ {
    move |source| PrepError::OutputNotWritable {
        path: path.to_path_buf(),
        source,
    }
}

/// Immediate subdirectories of `root`, sorted by name.
fn subdirectories(root: &Path) -> Result<Vec<PathBuf>, PrepError> {
    let mut dirs = Vec::new();
    for entry in std::fs::read_dir(root).map_err(io_err(root))? {
        let entry = entry.map_err(io_err(root))?;
        if entry.file_type().map_err(io_err(root))?.is_dir() {
            dirs.push(entry.path());
        }
    }
    dirs.sort();
    Ok(dirs)
}

fn dir_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

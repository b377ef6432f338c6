use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use super::{io_err, write_err, PrepError};
use crate::extract::REPLAY_EXTENSION;
use crate::mpq::MpqArchive;
use crate::protocol::{decode_details, DETAILS_MEMBER};
use crate::util::{parallel_map, sha256_file};

pub const MAX_CONCURRENT_DOWNLOADS: usize = 4;

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(300)))
        .http_status_as_error(false)
        .build()
        .into()
}

/// GET `url` into `target`, returning the SHA-256 (hex) and length of what
/// was written. Non-200 replies are FetchFailed and leave no file.
pub fn fetch_to_file(
    agent: &ureq::Agent,
    url: &str,
    target: &Path,
) -> Result<(String, u64), PrepError> {
    let failed = |reason: String| PrepError::FetchFailed {
        url: url.to_string(),
        reason,
    };
    let response = agent.get(url).call().map_err(|e| failed(e.to_string()))?;
    if response.status() != 200 {
        return Err(failed(format!("HTTP {}", response.status().as_u16())));
    }
    let (_, body) = response.into_parts();
    let mut reader = body.into_reader();
    let file = File::create(target).map_err(write_err(target))?;
    let mut writer = BufWriter::new(file);
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 64 * 1024];
    let mut total = 0u64;
    let result = loop {
        let n = match reader.read(&mut buf) {
            Ok(0) => break Ok(()),
            Ok(n) => n,
            Err(e) => break Err(failed(e.to_string())),
        };
        hasher.update(&buf[..n]);
        total += n as u64;
        if let Err(e) = writer.write_all(&buf[..n]) {
            break Err(PrepError::OutputNotWritable {
                path: target.to_path_buf(),
                source: e,
            });
        }
    };
    let result = result.and_then(|_| {
        writer
            .into_inner()
            .map_err(|e| e.into_error())
            .and_then(|f| f.sync_all())
            .map_err(write_err(target))
    });
    if let Err(e) = result {
        let _ = std::fs::remove_file(target);
        return Err(e);
    }
    Ok((hex::encode(hasher.finalize()), total))
}

fn part_path(target: &Path) -> PathBuf {
    let mut name = target.file_name().unwrap_or_default().to_os_string();
    name.push(".part");
    target.with_file_name(name)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub url: String,
    /// SHA-256 of the archive, hex.
    pub checksum: String,
    pub size_bytes: u64,
}

impl ManifestEntry {
    pub fn file_name(&self) -> String {
        format!("{}.zip", self.name)
    }
}

/// Published replaypack archives; a JSON array of entries.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReplaypackManifest {
    pub entries: Vec<ManifestEntry>,
}

impl ReplaypackManifest {
    pub fn parse(text: &str) -> Result<Self, PrepError> {
        let manifest: Self =
            serde_json::from_str(text).map_err(|e| PrepError::InvalidManifest(e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self, PrepError> {
        Self::parse(&std::fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn validate(&self) -> Result<(), PrepError> {
        let mut names = HashSet::new();
        for entry in &self.entries {
            let invalid = |why: &str| PrepError::InvalidManifest(format!("{}: {why}", entry.name));
            if entry.name.is_empty()
                || entry.name.contains(['/', '\\'])
                || entry.name.starts_with('.')
            {
                return Err(invalid("name must be a plain file name"));
            }
            if !names.insert(entry.name.as_str()) {
                return Err(invalid("duplicate name"));
            }
            if entry.checksum.len() != 64 || !entry.checksum.bytes().all(|b| b.is_ascii_hexdigit())
            {
                return Err(invalid("checksum must be 64 hex characters"));
            }
            if !entry.url.starts_with("http://") && !entry.url.starts_with("https://") {
                return Err(invalid("url must be http(s)"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct DownloadReport {
    /// Fetched in this run and verified.
    pub verified: Vec<PathBuf>,
    /// Already present with the right checksum; not fetched.
    pub skipped: Vec<PathBuf>,
    /// ChecksumMismatch or FetchFailed per entry.
    pub failures: Vec<PrepError>,
}

impl DownloadReport {
    /// Every archive now on disk and verified.
    pub fn available(&self) -> Vec<PathBuf> {
        let mut all: Vec<_> = self.verified.iter().chain(&self.skipped).cloned().collect();
        all.sort();
        all
    }
}

enum Fetched {
    New(PathBuf),
    Present(PathBuf),
}

/// Download each manifest archive to `<output>/<name>.zip`, streaming through
/// a `.part` file and checking SHA-256 and size before it takes its final
/// name. Archives already present and matching are not fetched again.
pub fn download_replaypacks(
    manifest: &ReplaypackManifest,
    output: &Path,
) -> Result<DownloadReport, PrepError> {
    manifest.validate()?;
    std::fs::create_dir_all(output).map_err(write_err(output))?;
    let agent = agent();

    let results = parallel_map(
        manifest.entries.len(),
        MAX_CONCURRENT_DOWNLOADS,
        |i| -> Result<Fetched, PrepError> {
            let entry = &manifest.entries[i];
            let target = output.join(entry.file_name());
            let expected = entry.checksum.to_ascii_lowercase();
            if target.is_file() && sha256_file(&target).map_err(io_err(&target))? == expected {
                return Ok(Fetched::Present(target));
            }
            let part = part_path(&target);
            let (checksum, size) = fetch_to_file(&agent, &entry.url, &part)?;
            if checksum != expected || size != entry.size_bytes {
                let _ = std::fs::remove_file(&part);
                let _ = std::fs::remove_file(&target);
                return Err(PrepError::ChecksumMismatch(entry.name.clone()));
            }
            std::fs::rename(&part, &target).map_err(write_err(&target))?;
            Ok(Fetched::New(target))
        },
    );

    let mut report = DownloadReport::default();
    for result in results {
        match result {
            Ok(Fetched::New(path)) => report.verified.push(path),
            Ok(Fetched::Present(path)) => report.skipped.push(path),
            Err(e) => report.failures.push(e),
        }
    }
    Ok(report)
}

#[derive(Debug, Default)]
pub struct MapDownloadReport {
    /// Map hashes (hex) referenced by at least one replay.
    pub referenced: BTreeSet<String>,
    pub downloaded: Vec<String>,
    pub skipped: Vec<String>,
    pub failed: Vec<PrepError>,
    /// Replays whose map reference could not be read.
    pub unreadable: Vec<(PathBuf, String)>,
}

fn map_reference(path: &Path) -> Result<Option<String>, String> {
    let archive = MpqArchive::open_path(path).map_err(|e| e.kind().to_string())?;
    let details = archive
        .extract(DETAILS_MEMBER)
        .map_err(|e| e.kind().to_string())?;
    let details = decode_details(&details).map_err(|e| e.kind().to_string())?;
    Ok(details.map_hash.map(hex::encode))
}

/// Fetch every map referenced by the replays under `replay_dirs` from
/// `<base_url>/<hash>.SC2Map` into `<output>/<hash>.SC2Map`, once each.
/// Maps already present with the right hash are skipped; failed fetches are
/// recorded and the rest continue.
pub fn download_maps(
    replay_dirs: &[PathBuf],
    output: &Path,
    base_url: &str,
) -> Result<MapDownloadReport, PrepError> {
    let mut report = MapDownloadReport::default();
    for dir in replay_dirs {
        for entry in WalkDir::new(dir).sort_by_file_name() {
            let entry = entry.map_err(|e| PrepError::Io {
                path: dir.clone(),
                source: e
                    .into_io_error()
                    .unwrap_or_else(|| std::io::Error::other("walk failed")),
            })?;
            let is_replay = entry
                .path()
                .extension()
                .is_some_and(|e| e.to_string_lossy().eq_ignore_ascii_case(REPLAY_EXTENSION));
            if !entry.file_type().is_file() || !is_replay {
                continue;
            }
            match map_reference(entry.path()) {
                Ok(Some(hash)) => {
                    report.referenced.insert(hash);
                }
                Ok(None) => {}
                Err(reason) => report.unreadable.push((entry.path().to_path_buf(), reason)),
            }
        }
    }

    std::fs::create_dir_all(output).map_err(write_err(output))?;
    let agent = agent();
    let base = base_url.trim_end_matches('/');
    let hashes: Vec<&String> = report.referenced.iter().collect();
    let results = parallel_map(
        hashes.len(),
        MAX_CONCURRENT_DOWNLOADS,
        |i| -> Result<bool, PrepError> {
            let hash = hashes[i];
            let target = output.join(format!("{hash}.SC2Map"));
            if target.is_file() && &sha256_file(&target).map_err(io_err(&target))? == hash {
                return Ok(false);
            }
            let url = format!("{base}/{hash}.SC2Map");
            let part = part_path(&target);
            let (checksum, _) = fetch_to_file(&agent, &url, &part)?;
            if &checksum != hash {
                let _ = std::fs::remove_file(&part);
                return Err(PrepError::FetchFailed {
                    url,
                    reason: "content does not match map hash".into(),
                });
            }
            std::fs::rename(&part, &target).map_err(write_err(&target))?;
            Ok(true)
        },
    );
    for (hash, result) in hashes.into_iter().zip(results) {
        match result {
            Ok(true) => report.downloaded.push(hash.clone()),
            Ok(false) => report.skipped.push(hash.clone()),
            Err(e) => report.failed.push(e),
        }
    }
    Ok(report)
}

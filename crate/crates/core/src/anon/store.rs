use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AnonymizeError, Anonymizer};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("journal {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("journal {path} corrupt at line {line}: {reason}")]
    CorruptJournal {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct JournalEntry {
    n: String,
    id: String,
}

#[derive(Debug)]
struct Writer {
    journal: Option<File>,
    next_sequence: u64,
}

/// Nickname -> id table. Ids are the decimal rendering of a counter that
/// starts at 0; every assignment is appended to the journal and synced before
/// it is handed out.
#[derive(Debug)]
pub struct AnonymizationStore {
    ids: RwLock<HashMap<String, String>>,
    writer: Mutex<Writer>,
    path: Option<PathBuf>,
    warnings: Vec<String>,
}

impl AnonymizationStore {
    /// A store without persistence.
    pub fn in_memory() -> Self {
        Self {
            ids: RwLock::new(HashMap::new()),
            writer: Mutex::new(Writer {
                journal: None,
                next_sequence: 0,
            }),
            path: None,
            warnings: Vec::new(),
        }
    }

    /// Load (or create) the journal at `path` and replay it.
    ///
    /// A damaged final line is what a crash mid-append leaves behind; it is
    /// dropped, truncated away and reported in [`Self::warnings`]. Damage
    /// anywhere else is an error.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |source| StoreError::Io {
            path: path.clone(),
            source,
        };

        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(io_err)?;

        let mut lines = Vec::new();
        let mut reader = BufReader::new(&mut file);
        let mut offset = 0u64;
        loop {
            let mut line = Vec::new();
            let read = reader.read_until(b'\n', &mut line).map_err(io_err)?;
            if read == 0 {
                break;
            }
            lines.push((offset, line));
            offset += read as u64;
        }
        drop(reader);

        let mut ids = HashMap::new();
        let mut warnings = Vec::new();
        let mut next_sequence = 0u64;
        let last = lines.len().saturating_sub(1);
        for (index, (line_offset, raw)) in lines.iter().enumerate() {
            let complete = raw.ends_with(b"\n");
            let parsed = std::str::from_utf8(raw)
                .ok()
                .map(str::trim_end)
                .filter(|text| !text.is_empty())
                .map(serde_json::from_str::<JournalEntry>);

            let entry = match parsed {
                None if complete && raw.iter().all(u8::is_ascii_whitespace) => continue,
                Some(Ok(entry)) if complete => entry,
                _ if index == last => {
                    warnings.push(format!("dropped torn journal line {}", index + 1));
                    file.set_len(*line_offset).map_err(io_err)?;
                    file.sync_data().map_err(io_err)?;
                    break;
                }
                _ => {
                    return Err(StoreError::CorruptJournal {
                        path,
                        line: index + 1,
                        reason: "unparseable entry".into(),
                    })
                }
            };

            if entry.id != next_sequence.to_string() {
                return Err(StoreError::CorruptJournal {
                    path,
                    line: index + 1,
                    reason: format!("expected id {next_sequence}, found {}", entry.id),
                });
            }
            if ids.insert(entry.n, entry.id).is_some() {
                return Err(StoreError::CorruptJournal {
                    path,
                    line: index + 1,
                    reason: "nickname assigned twice".into(),
                });
            }
            next_sequence += 1;
        }
        file.seek(SeekFrom::End(0)).map_err(io_err)?;

        Ok(Self {
            ids: RwLock::new(ids),
            writer: Mutex::new(Writer {
                journal: Some(file),
                next_sequence,
            }),
            path: Some(path),
            warnings,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn len(&self) -> usize {
        self.ids.read().expect("store lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, nickname: &str) -> Option<String> {
        self.ids
            .read()
            .expect("store lock poisoned")
            .get(nickname)
            .cloned()
    }

    /// Snapshot of the whole mapping.
    pub fn entries(&self) -> HashMap<String, String> {
        self.ids.read().expect("store lock poisoned").clone()
    }

    pub fn get_or_assign(&self, nickname: &str) -> Result<String, AnonymizeError> {
        if nickname.trim().is_empty() {
            return Err(AnonymizeError::EmptyNickname);
        }
        if let Some(id) = self.get(nickname) {
            return Ok(id);
        }

        let mut writer = self.writer.lock().expect("store lock poisoned");
        // Another request may have assigned it while we waited.
        if let Some(id) = self.get(nickname) {
            return Ok(id);
        }
        let id = writer.next_sequence.to_string();
        if let Some(journal) = writer.journal.as_mut() {
            let mut line = serde_json::to_vec(&JournalEntry {
                n: nickname.to_string(),
                id: id.clone(),
            })
            .expect("journal entry serializes");
            line.push(b'\n');
            journal
                .write_all(&line)
                .and_then(|_| journal.sync_data())
                .map_err(|e| AnonymizeError::Storage(e.to_string()))?;
        }
        writer.next_sequence += 1;
        self.ids
            .write()
            .expect("store lock poisoned")
            .insert(nickname.to_string(), id.clone());
        Ok(id)
    }
}

impl Anonymizer for AnonymizationStore {
    fn pseudonym(&self, nickname: &str) -> Result<String, AnonymizeError> {
        self.get_or_assign(nickname)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_ids() {
        let store = AnonymizationStore::in_memory();
        assert_eq!(store.get_or_assign("Alice").unwrap(), "0");
        assert_eq!(store.get_or_assign("Bob").unwrap(), "1");
        assert_eq!(store.get_or_assign("Alice").unwrap(), "0");
    }

    #[test]
    fn blank_nickname_rejected() {
        let store = AnonymizationStore::in_memory();
        assert!(matches!(
            store.get_or_assign("  "),
            Err(AnonymizeError::EmptyNickname)
        ));
        assert!(matches!(
            store.get_or_assign(""),
            Err(AnonymizeError::EmptyNickname)
        ));
    }

    #[test]
    fn bulk_assignment_is_injective() {
        let store = AnonymizationStore::in_memory();
        let ids: std::collections::HashSet<String> = (0..1000)
            .map(|i| store.get_or_assign(&format!("player{i}")).unwrap())
            .collect();
        assert_eq!(ids.len(), 1000);
        assert!(ids.contains("999"));
        assert!(!ids.contains("1000"));
    }

    #[test]
    fn any_utf8_is_a_key() {
        let store = AnonymizationStore::in_memory();
        assert_eq!(store.get_or_assign("Ωmega 🦀").unwrap(), "0");
        assert_eq!(store.get_or_assign("Ωmega 🦀").unwrap(), "0");
    }
}

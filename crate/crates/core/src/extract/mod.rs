//! Per-replay extraction and the replaypack processor.

mod filter;
mod pack;
mod record;
mod summary;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::anon::{AnonymizeError, Anonymizer};
use crate::mpq::MpqArchive;
use crate::protocol::{self, REPLAY_SIGNATURE};

pub use filter::{
    clean_replay, FilterSpec, FilterVerdict, RULE_DURATION, RULE_GAME_VERSION, RULE_PLAYER_COUNT,
};
pub use pack::{
    process_replaypack, replay_files, ExtractError, LogClock, PackReport, FAILED_LOG, MAIN_LOG,
    SUMMARY_FILE,
};
pub use record::{
    apm, duration_seconds, results_consistent, GameEvent, PlayerInfo, ReplayRecord, COMMAND_EVENT,
    TOOLSET_VERSION,
};
pub use summary::{date_bucket, summarize, PackageSummary};

/// File extension of replay archives (compared case-insensitively).
pub const REPLAY_EXTENSION: &str = "SC2Replay";

pub const MAX_PLAYERS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OutcomeStatus {
    Ok,
    Filtered,
    Failed,
}

impl OutcomeStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ok => "Ok",
            Self::Filtered => "Filtered",
            Self::Failed => "Failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessingOutcome {
    pub path: String,
    pub status: OutcomeStatus,
    /// Empty for Ok; the rule name for Filtered; `<stage>: <Kind>` for Failed.
    pub reason: String,
}

impl ProcessingOutcome {
    fn ok(path: &str) -> Self {
        Self {
            path: path.into(),
            status: OutcomeStatus::Ok,
            reason: String::new(),
        }
    }

    fn filtered(path: &str, rule: &str) -> Self {
        Self {
            path: path.into(),
            status: OutcomeStatus::Filtered,
            reason: rule.into(),
        }
    }

    fn failed(path: &str, stage: &str, kind: &str) -> Self {
        Self {
            path: path.into(),
            status: OutcomeStatus::Failed,
            reason: format!("{stage}: {kind}"),
        }
    }

    /// The `processed_failed.log` line (without newline).
    pub fn log_line(&self) -> String {
        format!(
            "{}\t{}\t{}",
            clean_field(&self.path),
            self.status.as_str(),
            clean_field(&self.reason)
        )
    }
}

fn clean_field(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

#[derive(Clone, Default)]
pub struct ExtractionOptions {
    pub filters: FilterSpec,
    pub anonymizer: Option<Arc<dyn Anonymizer>>,
    pub clock: LogClock,
}

impl std::fmt::Debug for ExtractionOptions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExtractionOptions")
            .field("filters", &self.filters)
            .field("anonymize", &self.anonymizer.is_some())
            .field("clock", &self.clock)
            .finish()
    }
}

/// Replace every nickname with its pseudonym. Records that are already
/// anonymized come back unchanged.
pub fn anonymize_record(
    record: &ReplayRecord,
    anonymizer: &dyn Anonymizer,
) -> Result<ReplayRecord, AnonymizeError> {
    let mut out = record.clone();
    if record.anonymized {
        return Ok(out);
    }
    for player in &mut out.players {
        player.nickname = anonymizer.pseudonym(&player.nickname)?;
    }
    out.anonymized = true;
    Ok(out)
}

/// Run one replay file through every stage. Never fails: problems are
/// reported in the outcome.
pub fn process_replay(
    path: &Path,
    options: &ExtractionOptions,
) -> (ProcessingOutcome, Option<ReplayRecord>) {
    let label = path.display().to_string();
    let data = match std::fs::read(path) {
        Ok(data) => data,
        Err(e) => {
            return (
                ProcessingOutcome::failed(&label, "read", &format!("{:?}", e.kind())),
                None,
            )
        }
    };
    let source_file = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    process_replay_bytes(&label, &source_file, data, options)
}

/// [`process_replay`] over bytes already in memory.
pub fn process_replay_bytes(
    label: &str,
    source_file: &str,
    data: Vec<u8>,
    options: &ExtractionOptions,
) -> (ProcessingOutcome, Option<ReplayRecord>) {
    let record = match decode_record(source_file, data) {
        Ok(record) => record,
        Err((stage, kind)) => return (ProcessingOutcome::failed(label, stage, &kind), None),
    };
    if let FilterVerdict::Reject(rule) = clean_replay(&record, &options.filters) {
        return (ProcessingOutcome::filtered(label, rule), None);
    }
    let record = match &options.anonymizer {
        Some(anonymizer) => match anonymize_record(&record, anonymizer.as_ref()) {
            Ok(record) => record,
            Err(e) => {
                return (
                    ProcessingOutcome::failed(label, "anonymizer", e.kind()),
                    None,
                )
            }
        },
        None => record,
    };
    (ProcessingOutcome::ok(label), Some(record))
}

type StageError = (&'static str, String);

fn decode_record(source_file: &str, data: Vec<u8>) -> Result<ReplayRecord, StageError> {
    let archive = MpqArchive::open(data).map_err(|e| ("open_archive", e.kind().to_string()))?;

    let user_data = archive
        .user_data()
        .ok_or(("header", "MissingUserData".to_string()))?;
    let header = protocol::decode_replay_header(&user_data.content)
        .map_err(|e| ("header", e.kind().to_string()))?;
    if header.signature != REPLAY_SIGNATURE {
        return Err(("header", "BadSignature".into()));
    }

    let details = archive
        .extract(protocol::DETAILS_MEMBER)
        .map_err(|e| ("details", e.kind().to_string()))
        .and_then(|raw| {
            protocol::decode_details(&raw).map_err(|e| ("details", e.kind().to_string()))
        })?;
    if details.players.is_empty() || details.players.len() > MAX_PLAYERS {
        return Err(("details", "PlayerCount".into()));
    }
    let results: Vec<_> = details.players.iter().map(|p| p.result).collect();
    if !results_consistent(&results) {
        return Err(("details", "WinnerRule".into()));
    }

    let raw_events = archive
        .extract(protocol::GAME_EVENTS_MEMBER)
        .map_err(|e| ("events", e.kind().to_string()))
        .and_then(|raw| {
            protocol::decode_events(&raw).map_err(|e| ("events", e.kind().to_string()))
        })?;
    let mut events: Vec<GameEvent> = raw_events
        .into_iter()
        .map(|e| GameEvent {
            game_loop: e.game_loop,
            player_index: e.player_index,
            kind: e.kind,
            payload: e.payload,
        })
        .collect();
    events.sort_by_key(|e| e.game_loop);
    let loops = header.duration_loops;
    if events.last().is_some_and(|e| e.game_loop > loops) {
        return Err(("events", "EventAfterEnd".into()));
    }

    let players = details
        .players
        .into_iter()
        .enumerate()
        .map(|(i, p)| PlayerInfo {
            apm: apm(&events, i, loops),
            nickname: p.name,
            race: p.race,
            result: p.result,
        })
        .collect();

    Ok(ReplayRecord {
        toolset_version: TOOLSET_VERSION.to_string(),
        source_file: source_file.to_string(),
        header,
        map_name: details.map_name,
        timestamp_utc: details.timestamp_utc,
        game_duration_loops: loops,
        game_duration_seconds: duration_seconds(loops),
        anonymized: false,
        players,
        events,
    })
}

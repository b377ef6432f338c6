use std::collections::{BTreeSet, HashMap};
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use thiserror::Error;

use crate::util::parallel_map;

use super::{
    anonymize_record, process_replay, summarize, ExtractionOptions, OutcomeStatus, PackageSummary,
    ProcessingOutcome, ReplayRecord, REPLAY_EXTENSION,
};

pub const SUMMARY_FILE: &str = "package_summary.json";
pub const FAILED_LOG: &str = "processed_failed.log";
pub const MAIN_LOG: &str = "main_log.log";

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("cannot read input {path}: {source}")]
    InputNotReadable { path: PathBuf, source: io::Error },
    #[error("cannot write output {path}: {source}")]
    OutputNotWritable { path: PathBuf, source: io::Error },
}

/// Where log timestamps come from. A fixed clock makes the log reproducible.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum LogClock {
    #[default]
    System,
    /// Every line stamped with this unix time.
    Fixed(i64),
}

impl LogClock {
    pub fn now(self) -> String {
        let time = match self {
            Self::System => Utc::now(),
            Self::Fixed(secs) => DateTime::from_timestamp(secs, 0).unwrap_or_default(),
        };
        time.to_rfc3339_opts(SecondsFormat::Secs, true)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackReport {
    pub summary: PackageSummary,
    /// Sorted by path.
    pub outcomes: Vec<ProcessingOutcome>,
}

struct LogLine {
    time: String,
    level: &'static str,
    stage: &'static str,
    message: String,
}

impl LogLine {
    fn new(clock: LogClock, level: &'static str, stage: &'static str, message: String) -> Self {
        Self {
            time: clock.now(),
            level,
            stage,
            message,
        }
    }

    fn render(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\n",
            self.time,
            self.level,
            self.stage,
            self.message.replace(['\t', '\n'], " ")
        )
    }
}

enum Emit {
    Written(Box<ReplayRecord>, LogLine),
    Unresolved(&'static str),
    Skipped,
}

struct Item {
    outcome: ProcessingOutcome,
    record: Option<ReplayRecord>,
    log: Vec<LogLine>,
}

/// Replay files directly inside `dir`, sorted by name.
pub fn replay_files(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        let is_replay = path
            .extension()
            .is_some_and(|ext| ext.to_string_lossy().eq_ignore_ascii_case(REPLAY_EXTENSION));
        if is_replay && entry.file_type()?.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ExtractError> {
    std::fs::write(path, bytes).map_err(|source| ExtractError::OutputNotWritable {
        path: path.to_path_buf(),
        source,
    })
}

fn json_name(file: &Path) -> String {
    let stem = file
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    format!("{stem}.json")
}

/// Process every replay directly inside `input` with `workers` threads and
/// write the per-replay JSON, summary and logs into `output`.
///
/// The JSON files, summary and failed log do not depend on `workers`. With
/// an anonymizer, nicknames of all kept replays are resolved up front in
/// sorted order, so ids do not depend on scheduling either.
pub fn process_replaypack(
    input: &Path,
    output: &Path,
    options: &ExtractionOptions,
    workers: usize,
) -> Result<PackReport, ExtractError> {
    let files = replay_files(input).map_err(|source| ExtractError::InputNotReadable {
        path: input.into(),
        source,
    })?;
    std::fs::create_dir_all(output).map_err(|source| ExtractError::OutputNotWritable {
        path: output.into(),
        source,
    })?;
    let clock = options.clock;
    let started = LogLine::new(
        clock,
        "INFO",
        "process",
        format!(
            "processing {} replays from {}",
            files.len(),
            input
                .file_name()
                .map(|n| n.to_string_lossy())
                .unwrap_or_default()
        ),
    );

    let local = ExtractionOptions {
        anonymizer: None,
        ..options.clone()
    };
    let defer_write = options.anonymizer.is_some();

    let items: Vec<Result<Item, ExtractError>> = parallel_map(files.len(), workers, |i| {
        let file = &files[i];
        let name = file
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let (mut outcome, record) = process_replay(file, &local);
        outcome.path = name.clone();
        let mut log = vec![outcome_log(clock, &outcome)];
        if let (Some(record), false) = (&record, defer_write) {
            write_file(&output.join(json_name(file)), &record.to_json())?;
            log.push(LogLine::new(
                clock,
                "INFO",
                "emit",
                format!("{name}: wrote {}", json_name(file)),
            ));
        }
        Ok(Item {
            outcome,
            record,
            log,
        })
    });
    let mut items: Vec<Item> = items.into_iter().collect::<Result<_, _>>()?;

    let mut prelude = vec![started];
    if let Some(anonymizer) = &options.anonymizer {
        let nicknames: BTreeSet<&str> = items
            .iter()
            .filter_map(|item| item.record.as_ref())
            .flat_map(|r| r.players.iter().map(|p| p.nickname.as_str()))
            .collect();
        let mut resolved = HashMap::new();
        let mut unresolved: HashMap<String, &'static str> = HashMap::new();
        for nickname in nicknames {
            match anonymizer.pseudonym(nickname) {
                Ok(id) => {
                    resolved.insert(nickname.to_string(), id);
                }
                Err(e) => {
                    unresolved.insert(nickname.to_string(), e.kind());
                }
            }
        }
        prelude.push(LogLine::new(
            clock,
            if unresolved.is_empty() {
                "INFO"
            } else {
                "ERROR"
            },
            "anonymizer",
            format!(
                "resolved {} nicknames, {} failed",
                resolved.len(),
                unresolved.len()
            ),
        ));

        let emitted = parallel_map(items.len(), workers, |i| -> Result<Emit, ExtractError> {
            let item = &items[i];
            let Some(record) = &item.record else {
                return Ok(Emit::Skipped);
            };
            if let Some(kind) = record
                .players
                .iter()
                .find_map(|p| unresolved.get(&p.nickname))
            {
                return Ok(Emit::Unresolved(kind));
            }
            let record = anonymize_record(record, &resolved).expect("every nickname resolved");
            let name = json_name(&files[i]);
            write_file(&output.join(&name), &record.to_json())?;
            let line = LogLine::new(
                clock,
                "INFO",
                "emit",
                format!("{}: wrote {name}", item.outcome.path),
            );
            Ok(Emit::Written(Box::new(record), line))
        });
        for (item, emit) in items.iter_mut().zip(emitted) {
            match emit? {
                Emit::Written(record, line) => {
                    item.record = Some(*record);
                    item.log.push(line);
                }
                Emit::Unresolved(kind) => {
                    item.record = None;
                    item.outcome =
                        ProcessingOutcome::failed(&item.outcome.path, "anonymizer", kind);
                    item.log.push(outcome_log(clock, &item.outcome));
                }
                Emit::Skipped => {}
            }
        }
    }

    let outcomes: Vec<ProcessingOutcome> = items.iter().map(|i| i.outcome.clone()).collect();
    let summary = summarize(&outcomes, items.iter().filter_map(|i| i.record.as_ref()));

    let mut summary_json = serde_json::to_vec_pretty(&summary).expect("summary serializes");
    summary_json.push(b'\n');
    write_file(&output.join(SUMMARY_FILE), &summary_json)?;

    let failed: String = outcomes
        .iter()
        .filter(|o| o.status != OutcomeStatus::Ok)
        .map(|o| o.log_line() + "\n")
        .collect();
    write_file(&output.join(FAILED_LOG), failed.as_bytes())?;

    let finished = LogLine::new(
        clock,
        "INFO",
        "summary",
        format!(
            "total {} ok {} filtered {} failed {}",
            summary.total_replays, summary.ok, summary.filtered, summary.failed
        ),
    );
    let log: String = prelude
        .iter()
        .chain(items.iter().flat_map(|i| i.log.iter()))
        .chain(std::iter::once(&finished))
        .map(LogLine::render)
        .collect();
    write_file(&output.join(MAIN_LOG), log.as_bytes())?;

    Ok(PackReport { summary, outcomes })
}

fn outcome_log(clock: LogClock, outcome: &ProcessingOutcome) -> LogLine {
    match outcome.status {
        OutcomeStatus::Ok => LogLine::new(clock, "INFO", "replay", format!("{}: ok", outcome.path)),
        OutcomeStatus::Filtered => LogLine::new(
            clock,
            "WARN",
            "clean",
            format!("{}: filtered by {}", outcome.path, outcome.reason),
        ),
        OutcomeStatus::Failed => {
            let stage = stage_of(&outcome.reason);
            LogLine::new(
                clock,
                "ERROR",
                stage,
                format!("{}: {}", outcome.path, outcome.reason),
            )
        }
    }
}

fn stage_of(reason: &str) -> &'static str {
    const STAGES: [&str; 7] = [
        "read",
        "open_archive",
        "header",
        "details",
        "events",
        "clean",
        "anonymizer",
    ];
    let prefix = reason.split(':').next().unwrap_or_default();
    STAGES
        .into_iter()
        .find(|s| *s == prefix)
        .unwrap_or("replay")
}

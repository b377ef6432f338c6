use std::collections::BTreeMap;

use chrono::DateTime;
use serde::{Deserialize, Serialize};

use super::{OutcomeStatus, ProcessingOutcome, ReplayRecord};

/// Aggregate counts over one processed replaypack. Histograms cover Ok
/// records only.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackageSummary {
    pub total_replays: u64,
    pub ok: u64,
    pub filtered: u64,
    pub failed: u64,
    pub maps: BTreeMap<String, u64>,
    pub races: BTreeMap<String, u64>,
    pub matchups: BTreeMap<String, u64>,
    pub game_versions: BTreeMap<String, u64>,
    /// Keyed by `YYYY-MM` of the game start (UTC).
    pub dates: BTreeMap<String, u64>,
}

pub fn date_bucket(timestamp_utc: i64) -> String {
    DateTime::from_timestamp(timestamp_utc, 0)
        .map(|t| t.format("%Y-%m").to_string())
        .unwrap_or_else(|| "unknown".into())
}

pub fn summarize<'a>(
    outcomes: impl IntoIterator<Item = &'a ProcessingOutcome>,
    records: impl IntoIterator<Item = &'a ReplayRecord>,
) -> PackageSummary {
    let mut summary = PackageSummary::default();
    for outcome in outcomes {
        summary.total_replays += 1;
        match outcome.status {
            OutcomeStatus::Ok => summary.ok += 1,
            OutcomeStatus::Filtered => summary.filtered += 1,
            OutcomeStatus::Failed => summary.failed += 1,
        }
    }
    for record in records {
        *summary.maps.entry(record.map_name.clone()).or_default() += 1;
        for player in &record.players {
            *summary
                .races
                .entry(player.race.name().to_string())
                .or_default() += 1;
        }
        if let Some(matchup) = record.matchup() {
            *summary.matchups.entry(matchup).or_default() += 1;
        }
        *summary
            .game_versions
            .entry(record.header.version.to_string())
            .or_default() += 1;
        *summary
            .dates
            .entry(date_bucket(record.timestamp_utc))
            .or_default() += 1;
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buckets() {
        assert_eq!(date_bucket(0), "1970-01");
        assert_eq!(date_bucket(1_700_000_000), "2023-11");
    }

    #[test]
    fn empty_summary_is_zero() {
        let s = summarize([], []);
        assert_eq!(s, PackageSummary::default());
    }
}

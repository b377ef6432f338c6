use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ReplayRecord;

/// Cleanup rules. Unset fields do not filter.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSpec {
    pub min_duration_loops: Option<u64>,
    pub max_duration_loops: Option<u64>,
    pub allowed_player_counts: Option<BTreeSet<usize>>,
    /// Matches either the full `major.minor.revision.build` string or the
    /// bare build number.
    pub allowed_game_versions: Option<BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FilterVerdict {
    Keep,
    Reject(&'static str),
}

pub const RULE_DURATION: &str = "duration";
pub const RULE_PLAYER_COUNT: &str = "player_count";
pub const RULE_GAME_VERSION: &str = "game_version";

/// Apply the rules in order; the first failing rule names the rejection.
pub fn clean_replay(record: &ReplayRecord, filters: &FilterSpec) -> FilterVerdict {
    let loops = record.game_duration_loops;
    if filters.min_duration_loops.is_some_and(|min| loops < min)
        || filters.max_duration_loops.is_some_and(|max| loops > max)
    {
        return FilterVerdict::Reject(RULE_DURATION);
    }
    if let Some(counts) = &filters.allowed_player_counts {
        if !counts.contains(&record.players.len()) {
            return FilterVerdict::Reject(RULE_PLAYER_COUNT);
        }
    }
    if let Some(versions) = &filters.allowed_game_versions {
        let version = record.header.version;
        if !versions.contains(&version.to_string())
            && !versions.contains(&version.build.to_string())
        {
            return FilterVerdict::Reject(RULE_GAME_VERSION);
        }
    }
    FilterVerdict::Keep
}

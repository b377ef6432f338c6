use serde::{Deserialize, Serialize};

use crate::protocol::{GameResult, ProtocolHeader, Race, LOOPS_PER_SECOND};
use crate::versioned::TypedValue;

/// Version of the emitted JSON layout; bumped whenever the shipped schema
/// document changes.
pub const TOOLSET_VERSION: &str = "1.0.0";

/// One extracted replay, exactly as written to `<stem>.json`.
///
/// Field order is the serialization order, so documents are byte-comparable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayRecord {
    pub toolset_version: String,
    pub source_file: String,
    pub header: ProtocolHeader,
    pub map_name: String,
    /// Game start, unix seconds.
    pub timestamp_utc: i64,
    pub game_duration_loops: u64,
    pub game_duration_seconds: f64,
    pub anonymized: bool,
    pub players: Vec<PlayerInfo>,
    pub events: Vec<GameEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerInfo {
    pub nickname: String,
    pub race: Race,
    pub result: GameResult,
    pub apm: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameEvent {
    #[serde(rename = "loop")]
    pub game_loop: u64,
    pub player_index: i64,
    pub kind: String,
    pub payload: TypedValue,
}

/// Event kind counted towards APM.
pub const COMMAND_EVENT: &str = "Cmd";

pub fn duration_seconds(loops: u64) -> f64 {
    loops as f64 / LOOPS_PER_SECOND as f64
}

/// Actions per minute: command events issued by `player_index` over the game
/// length. Zero-length games have APM 0.
pub fn apm(events: &[GameEvent], player_index: usize, duration_loops: u64) -> f64 {
    if duration_loops == 0 {
        return 0.0;
    }
    let commands = events
        .iter()
        .filter(|e| e.kind == COMMAND_EVENT && e.player_index == player_index as i64)
        .count();
    commands as f64 * 60.0 / duration_seconds(duration_loops)
}

/// The winner rule: unless some result is unknown, the game is either a tie
/// for everyone or has at least one winner and (with several players) at
/// least one loser, and a 1v1 has exactly one winner.
pub fn results_consistent(results: &[GameResult]) -> bool {
    if results.is_empty() || results.contains(&GameResult::Unknown) {
        return true;
    }
    let count = |r| results.iter().filter(|&&x| x == r).count();
    let (wins, losses, ties) = (
        count(GameResult::Win),
        count(GameResult::Loss),
        count(GameResult::Tie),
    );
    if ties > 0 {
        return ties == results.len();
    }
    if results.len() == 1 {
        return true;
    }
    if results.len() == 2 {
        return wins == 1 && losses == 1;
    }
    wins >= 1 && losses >= 1
}

impl ReplayRecord {
    /// Canonical compact JSON.
    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("record serializes")
    }

    /// Matchup key for two-player games, e.g. `PvZ`; sides sorted.
    pub fn matchup(&self) -> Option<String> {
        match self.players.as_slice() {
            [a, b] => {
                let mut sides = [a.race.letter(), b.race.letter()];
                sides.sort_unstable();
                Some(format!("{}v{}", sides[0], sides[1]))
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use GameResult::*;

    #[test]
    fn winner_rule() {
        assert!(results_consistent(&[Win, Loss]));
        assert!(results_consistent(&[Tie, Tie]));
        assert!(results_consistent(&[Unknown, Win]));
        assert!(results_consistent(&[Win]));
        assert!(results_consistent(&[Win, Win, Loss, Loss]));
        assert!(!results_consistent(&[Win, Win]));
        assert!(!results_consistent(&[Loss, Loss]));
        assert!(!results_consistent(&[Tie, Win]));
        assert!(!results_consistent(&[Win, Win, Win]));
    }

    #[test]
    fn apm_counts_commands_only() {
        let ev = |player, kind: &str| GameEvent {
            game_loop: 0,
            player_index: player,
            kind: kind.into(),
            payload: TypedValue::Int(0),
        };
        let events = vec![ev(0, "Cmd"), ev(0, "Cmd"), ev(0, "Camera"), ev(1, "Cmd")];
        // 960 loops = 1 minute.
        assert_eq!(apm(&events, 0, 960), 2.0);
        assert_eq!(apm(&events, 1, 960), 1.0);
        assert_eq!(apm(&events, 0, 480), 4.0);
        assert_eq!(apm(&events, 0, 0), 0.0);
    }

    #[test]
    fn seconds_are_exact() {
        assert_eq!(duration_seconds(16), 1.0);
        assert_eq!(duration_seconds(8), 0.5);
        assert_eq!(duration_seconds(0), 0.0);
    }

    #[test]
    fn durations_and_rates_survive_json_exactly() {
        for loops in (1..5000u64).step_by(37) {
            for commands in [1u64, 7, 333] {
                let events: Vec<GameEvent> = (0..commands)
                    .map(|_| GameEvent {
                        game_loop: 0,
                        player_index: 0,
                        kind: "Cmd".into(),
                        payload: TypedValue::Int(0),
                    })
                    .collect();
                for value in [apm(&events, 0, loops), duration_seconds(loops)] {
                    let text = serde_json::to_string(&value).unwrap();
                    assert_eq!(serde_json::from_str::<f64>(&text).unwrap(), value, "{text}");
                }
            }
        }
    }
}

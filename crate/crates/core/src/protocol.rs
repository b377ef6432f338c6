//! The pinned replay schema: which members a replay carries and how their
//! versioned-encoded trees map onto typed structures.
//!
//! Header (user-data content), struct:
//!   0 signature blob, 1 version {1 major, 2 minor, 3 revision, 4 build, 5 base build},
//!   3 elapsed game loops.
//!
//! `replay.details`, struct:
//!   0 players [{0 name blob, 2 race blob, 8 result int}], 1 map title blob,
//!   5 start time (unix seconds), 10 map hash (32-byte SHA-256 of the map file, optional).
//!
//! `replay.game.events`, array of structs:
//!   {0 game loop, 1 player index, 2 kind blob, 3 payload}.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::versioned::{decode_versioned, encode_versioned, DecodeError, TypedValue};

pub const REPLAY_SIGNATURE: &str = "StarCraft II replay\u{1b}11";
pub const DETAILS_MEMBER: &str = "replay.details";
pub const GAME_EVENTS_MEMBER: &str = "replay.game.events";

/// Game loops per second of game time.
pub const LOOPS_PER_SECOND: u64 = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("schema mismatch at {field}")]
    SchemaMismatch { field: String },
}

impl ProtocolError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Decode(e) => e.kind(),
            Self::SchemaMismatch { .. } => "SchemaMismatch",
        }
    }

    fn mismatch(field: impl Into<String>) -> Self {
        Self::SchemaMismatch {
            field: field.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GameVersion {
    pub major: u32,
    pub minor: u32,
    pub revision: u32,
    pub build: u32,
}

impl fmt::Display for GameVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}.{}.{}.{}",
            self.major, self.minor, self.revision, self.build
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolHeader {
    pub signature: String,
    pub version: GameVersion,
    /// Base build the replay's protocol tables belong to.
    pub protocol_number: u32,
    pub duration_loops: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Race {
    Terran,
    Zerg,
    Protoss,
    Random,
}

impl Race {
    pub const ALL: [Race; 4] = [Race::Terran, Race::Zerg, Race::Protoss, Race::Random];

    pub fn name(self) -> &'static str {
        match self {
            Self::Terran => "Terran",
            Self::Zerg => "Zerg",
            Self::Protoss => "Protoss",
            Self::Random => "Random",
        }
    }

    pub fn letter(self) -> char {
        self.name().chars().next().unwrap_or('?')
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|race| race.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GameResult {
    Win,
    Loss,
    Tie,
    Unknown,
}

impl GameResult {
    fn code(self) -> i64 {
        match self {
            Self::Unknown => 0,
            Self::Win => 1,
            Self::Loss => 2,
            Self::Tie => 3,
        }
    }

    fn from_code(code: i64) -> Option<Self> {
        Some(match code {
            0 => Self::Unknown,
            1 => Self::Win,
            2 => Self::Loss,
            3 => Self::Tie,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetailsPlayer {
    pub name: String,
    pub race: Race,
    pub result: GameResult,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayDetails {
    pub players: Vec<DetailsPlayer>,
    pub map_name: String,
    pub timestamp_utc: i64,
    pub map_hash: Option<[u8; 32]>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawEvent {
    pub game_loop: u64,
    pub player_index: i64,
    pub kind: String,
    pub payload: TypedValue,
}

fn require<'a>(
    value: &'a TypedValue,
    id: i64,
    field: &str,
) -> Result<&'a TypedValue, ProtocolError> {
    value
        .field(id)
        .ok_or_else(|| ProtocolError::mismatch(field))
}

fn int_field<T: TryFrom<i64>>(
    value: &TypedValue,
    id: i64,
    field: &str,
) -> Result<T, ProtocolError> {
    require(value, id, field)?
        .as_int()
        .and_then(|v| T::try_from(v).ok())
        .ok_or_else(|| ProtocolError::mismatch(field))
}

fn string_field(value: &TypedValue, id: i64, field: &str) -> Result<String, ProtocolError> {
    let blob = require(value, id, field)?
        .as_blob()
        .ok_or_else(|| ProtocolError::mismatch(field))?;
    String::from_utf8(blob.to_vec()).map_err(|_| ProtocolError::mismatch(field))
}

fn fields(entries: impl IntoIterator<Item = (i64, TypedValue)>) -> TypedValue {
    TypedValue::Struct(entries.into_iter().collect::<BTreeMap<_, _>>())
}

/// Decode the replay header stored in the archive's user-data block.
pub fn decode_replay_header(content: &[u8]) -> Result<ProtocolHeader, ProtocolError> {
    let root = decode_versioned(content)?;
    if root.as_struct().is_none() {
        return Err(ProtocolError::mismatch("header"));
    }
    let signature = string_field(&root, 0, "signature")?;
    let version = require(&root, 1, "version")?;
    if version.as_struct().is_none() {
        return Err(ProtocolError::mismatch("version"));
    }
    Ok(ProtocolHeader {
        signature,
        version: GameVersion {
            major: int_field(version, 1, "version.major")?,
            minor: int_field(version, 2, "version.minor")?,
            revision: int_field(version, 3, "version.revision")?,
            build: int_field(version, 4, "version.build")?,
        },
        protocol_number: int_field(version, 5, "version.base_build")?,
        duration_loops: int_field(&root, 3, "elapsed_game_loops")?,
    })
}

pub fn encode_replay_header(header: &ProtocolHeader) -> Vec<u8> {
    let v = &header.version;
    let version = fields([
        (1, TypedValue::Int(v.major.into())),
        (2, TypedValue::Int(v.minor.into())),
        (3, TypedValue::Int(v.revision.into())),
        (4, TypedValue::Int(v.build.into())),
        (5, TypedValue::Int(header.protocol_number.into())),
    ]);
    encode_versioned(&fields([
        (0, TypedValue::blob(header.signature.as_bytes())),
        (1, version),
        (3, TypedValue::Int(header.duration_loops as i64)),
    ]))
}

pub fn decode_details(data: &[u8]) -> Result<ReplayDetails, ProtocolError> {
    let root = decode_versioned(data)?;
    let players = require(&root, 0, "players")?
        .as_array()
        .ok_or_else(|| ProtocolError::mismatch("players"))?
        .iter()
        .enumerate()
        .map(|(i, player)| {
            let race_name = string_field(player, 2, &format!("players[{i}].race"))?;
            Ok(DetailsPlayer {
                name: string_field(player, 0, &format!("players[{i}].name"))?,
                race: Race::from_name(&race_name)
                    .ok_or_else(|| ProtocolError::mismatch(format!("players[{i}].race")))?,
                result: GameResult::from_code(int_field(
                    player,
                    8,
                    &format!("players[{i}].result"),
                )?)
                .ok_or_else(|| ProtocolError::mismatch(format!("players[{i}].result")))?,
            })
        })
        .collect::<Result<Vec<_>, ProtocolError>>()?;

    let map_hash = match root.field(10) {
        None => None,
        Some(value) => Some(
            value
                .as_blob()
                .and_then(|b| <[u8; 32]>::try_from(b).ok())
                .ok_or_else(|| ProtocolError::mismatch("map_hash"))?,
        ),
    };

    Ok(ReplayDetails {
        players,
        map_name: string_field(&root, 1, "map_name")?,
        timestamp_utc: int_field(&root, 5, "timestamp_utc")?,
        map_hash,
    })
}

pub fn encode_details(details: &ReplayDetails) -> Vec<u8> {
    let players = details
        .players
        .iter()
        .map(|p| {
            fields([
                (0, TypedValue::blob(p.name.as_bytes())),
                (2, TypedValue::blob(p.race.name().as_bytes())),
                (8, TypedValue::Int(p.result.code())),
            ])
        })
        .collect();
    let mut entries = vec![
        (0, TypedValue::Array(players)),
        (1, TypedValue::blob(details.map_name.as_bytes())),
        (5, TypedValue::Int(details.timestamp_utc)),
    ];
    if let Some(hash) = details.map_hash {
        entries.push((10, TypedValue::blob(hash)));
    }
    encode_versioned(&fields(entries))
}

pub fn decode_events(data: &[u8]) -> Result<Vec<RawEvent>, ProtocolError> {
    let root = decode_versioned(data)?;
    root.as_array()
        .ok_or_else(|| ProtocolError::mismatch("events"))?
        .iter()
        .enumerate()
        .map(|(i, event)| {
            Ok(RawEvent {
                game_loop: int_field(event, 0, &format!("events[{i}].loop"))?,
                player_index: int_field(event, 1, &format!("events[{i}].player_index"))?,
                kind: string_field(event, 2, &format!("events[{i}].kind"))?,
                payload: require(event, 3, &format!("events[{i}].payload"))?.clone(),
            })
        })
        .collect()
}

pub fn encode_events(events: &[RawEvent]) -> Vec<u8> {
    encode_versioned(&TypedValue::Array(
        events
            .iter()
            .map(|e| {
                fields([
                    (0, TypedValue::Int(e.game_loop as i64)),
                    (1, TypedValue::Int(e.player_index)),
                    (2, TypedValue::blob(e.kind.as_bytes())),
                    (3, e.payload.clone()),
                ])
            })
            .collect(),
    ))
}

//! Deterministic synthetic replays, maps and replaypack corpora for tests
//! and benchmarks. Everything is a pure function of the seed.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::extract::COMMAND_EVENT;
use crate::mpq::{ArchiveBuilder, BuildOptions};
use crate::protocol::{
    encode_details, encode_events, encode_replay_header, DetailsPlayer, GameResult, GameVersion,
    ProtocolHeader, Race, RawEvent, ReplayDetails, DETAILS_MEMBER, GAME_EVENTS_MEMBER,
    LOOPS_PER_SECOND, REPLAY_SIGNATURE,
};
use crate::versioned::{BitArray, TypedValue};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const MAP_NAMES: [&str; 6] = [
    "Ever Dream LE",
    "Golden Wall LE",
    "Ice and Chrome LE",
    "Pillars of Gold LE",
    "Submarine LE",
    "Deathaura LE",
];

pub const GAME_VERSIONS: [GameVersion; 3] = [
    GameVersion {
        major: 4,
        minor: 10,
        revision: 1,
        build: 75689,
    },
    GameVersion {
        major: 5,
        minor: 0,
        revision: 11,
        build: 88500,
    },
    GameVersion {
        major: 5,
        minor: 0,
        revision: 12,
        build: 91115,
    },
];

/// Games at least this long pass the duration filter used with corpora.
pub const FILTER_MIN_DURATION_S: u64 = 60;
const NORMAL_LOOPS: std::ops::Range<u64> = (150 * LOOPS_PER_SECOND)..(1500 * LOOPS_PER_SECOND);
const SHORT_LOOPS: std::ops::Range<u64> = LOOPS_PER_SECOND..(30 * LOOPS_PER_SECOND);

const EVENT_KINDS: [&str; 4] = [COMMAND_EVENT, "Selection", "Camera", "ControlGroup"];

/// Map file contents for a fixture map. The details member references maps
/// by the SHA-256 of these bytes.
pub fn map_bytes(name: &str) -> Vec<u8> {
    let seed = u64::from_le_bytes(
        Sha256::digest(name.as_bytes())[..8]
            .try_into()
            .expect("8 bytes"),
    );
    let mut rng = rng(seed);
    let mut bytes = format!("SC2Map fixture\n{name}\n").into_bytes();
    let len = rng.random_range(1024..4096);
    bytes.extend((0..len).map(|_| rng.random::<u8>()));
    bytes
}

pub fn map_hash(name: &str) -> [u8; 32] {
    Sha256::digest(map_bytes(name)).into()
}

/// Nickname pool shared by every corpus, so packs overlap in players.
pub fn nickname(index: usize) -> String {
    const STEMS: [&str; 10] = [
        "Serral", "Maru", "Reynor", "Clem", "Dark", "Hero", "Oliveira", "Zest", "Byun", "Élazer",
    ];
    format!("{}{}", STEMS[index % STEMS.len()], index / STEMS.len())
}

pub const NICKNAME_POOL: usize = 120;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayFixture {
    pub header: ProtocolHeader,
    pub details: ReplayDetails,
    pub events: Vec<RawEvent>,
    pub build: BuildOptions,
}

impl ReplayFixture {
    /// A valid two-player replay with a normal game length.
    pub fn generate(seed: u64) -> Self {
        let mut rng = rng(seed);
        let loops = rng.random_range(NORMAL_LOOPS);
        Self::generate_with(&mut rng, loops)
    }

    /// Like [`Self::generate`] but shorter than [`FILTER_MIN_DURATION_S`].
    pub fn generate_short(seed: u64) -> Self {
        let mut rng = rng(seed);
        let loops = rng.random_range(SHORT_LOOPS);
        Self::generate_with(&mut rng, loops)
    }

    fn generate_with(rng: &mut ChaCha8Rng, loops: u64) -> Self {
        let version = *GAME_VERSIONS.choose(rng).expect("non-empty");
        let header = ProtocolHeader {
            signature: REPLAY_SIGNATURE.to_string(),
            version,
            protocol_number: version.build,
            duration_loops: loops,
        };

        let first = rng.random_range(0..NICKNAME_POOL);
        let second = (first + rng.random_range(1..NICKNAME_POOL)) % NICKNAME_POOL;
        let winner = rng.random_range(0..2);
        let players = [first, second]
            .into_iter()
            .enumerate()
            .map(|(i, n)| DetailsPlayer {
                name: nickname(n),
                race: if rng.random_bool(0.05) {
                    Race::Random
                } else {
                    *[Race::Terran, Race::Zerg, Race::Protoss]
                        .choose(rng)
                        .expect("non-empty")
                },
                result: if i == winner {
                    GameResult::Win
                } else {
                    GameResult::Loss
                },
            })
            .collect();
        let map_name = MAP_NAMES.choose(rng).expect("non-empty").to_string();
        let details = ReplayDetails {
            players,
            map_hash: Some(map_hash(&map_name)),
            map_name,
            // 2019-01-01 .. roughly 2023-01-01
            timestamp_utc: 1_546_300_800 + rng.random_range(0..126_000_000),
        };

        let count = rng.random_range(20..120);
        let mut events: Vec<RawEvent> = (0..count)
            .map(|_| RawEvent {
                game_loop: rng.random_range(0..=loops),
                player_index: rng.random_range(0..2),
                kind: EVENT_KINDS.choose(rng).expect("non-empty").to_string(),
                payload: TypedValue::Struct(BTreeMap::from([
                    (0, TypedValue::Int(rng.random_range(0..4096))),
                    (1, TypedValue::Int(rng.random_range(-200..200))),
                    (
                        2,
                        TypedValue::blob(vec![rng.random::<u8>(); rng.random_range(0..4)]),
                    ),
                ])),
            })
            .collect();
        events.sort_by_key(|e| e.game_loop);

        let build = BuildOptions {
            compress: rng.random_bool(0.8),
            encrypt: rng.random_bool(0.5),
        };
        Self {
            header,
            details,
            events,
            build,
        }
    }

    /// Encode as a replay archive.
    pub fn to_bytes(&self) -> Vec<u8> {
        build_replay(
            encode_replay_header(&self.header),
            encode_details(&self.details),
            encode_events(&self.events),
            self.build,
        )
    }
}

fn build_replay(
    header: Vec<u8>,
    details: Vec<u8>,
    events: Vec<u8>,
    options: BuildOptions,
) -> Vec<u8> {
    let mut builder = ArchiveBuilder::new(options).user_data(header);
    builder
        .add_file(DETAILS_MEMBER, details)
        .expect("fixed member name");
    builder
        .add_file(GAME_EVENTS_MEMBER, events)
        .expect("fixed member name");
    builder.build().expect("fixture archive fits")
}

/// Ways a planted bad replay is broken. Each one makes extraction fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Corruption {
    /// Not an archive at all.
    RandomBytes,
    /// A valid replay cut short.
    Truncated,
    /// The details member is not a valid encoding.
    GarbageDetails,
    /// Header signature of some other file type.
    WrongSignature,
}

impl Corruption {
    pub const ALL: [Corruption; 4] = [
        Corruption::RandomBytes,
        Corruption::Truncated,
        Corruption::GarbageDetails,
        Corruption::WrongSignature,
    ];

    pub fn apply(self, fixture: &ReplayFixture, seed: u64) -> Vec<u8> {
        let mut rng = rng(seed ^ 0x5EED_BAD0);
        match self {
            Self::RandomBytes => {
                let len = rng.random_range(64..2048);
                let mut bytes: Vec<u8> = (0..len).map(|_| rng.random()).collect();
                bytes[0] = b'X';
                bytes
            }
            Self::Truncated => {
                let bytes = fixture.to_bytes();
                let keep = rng.random_range(16..bytes.len() / 2);
                bytes[..keep].to_vec()
            }
            Self::GarbageDetails => {
                // 0x03 is not a valid tag, so decoding fails on the first byte.
                let mut garbage = vec![0x03];
                garbage.extend((0..rng.random_range(8..64)).map(|_| rng.random::<u8>()));
                build_replay(
                    encode_replay_header(&fixture.header),
                    garbage,
                    encode_events(&fixture.events),
                    fixture.build,
                )
            }
            Self::WrongSignature => {
                let mut header = fixture.header.clone();
                header.signature = "Heroes of the Storm replay\u{1b}11".into();
                build_replay(
                    encode_replay_header(&header),
                    encode_details(&fixture.details),
                    encode_events(&fixture.events),
                    fixture.build,
                )
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlantedKind {
    Valid,
    Short,
    Corrupt(Corruption),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedFile {
    /// Relative path with `/` separators.
    pub path: String,
    pub kind: PlantedKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusSpec {
    pub replays: usize,
    pub corrupt_fraction: f64,
    pub short_fraction: f64,
    pub seed: u64,
    /// Spread files over nested tournament-style directories (with repeated
    /// file names) instead of one flat directory.
    pub nested: bool,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            replays: 200,
            corrupt_fraction: 0.10,
            short_fraction: 0.05,
            seed: 0,
            nested: true,
        }
    }
}

/// What was planted, and therefore what extraction must report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub valid: usize,
    pub short: usize,
    pub corrupt: usize,
    pub files: Vec<PlantedFile>,
}

fn planted_path(index: usize, nested: bool) -> String {
    if !nested {
        return format!("replay_{index:04}.SC2Replay");
    }
    const GROUPS: [&str; 3] = ["Group Stage", "Playoffs", "Showmatches"];
    let group = GROUPS[index % GROUPS.len()];
    let day = (index / GROUPS.len()) % 2 + 1;
    let game = index / (GROUPS.len() * 2);
    format!("{group}/Day {day}/game_{game:03}.SC2Replay")
}

/// Write a replaypack into `dir`. Corrupt and short replays are chosen by a
/// seeded shuffle; their counts are `round(fraction * replays)`.
pub fn write_replaypack(dir: &Path, spec: &CorpusSpec) -> io::Result<CorpusManifest> {
    let corrupt = (spec.corrupt_fraction * spec.replays as f64).round() as usize;
    let short = ((spec.short_fraction * spec.replays as f64).round() as usize)
        .min(spec.replays - corrupt.min(spec.replays));
    let corrupt = corrupt.min(spec.replays);

    let mut order: Vec<usize> = (0..spec.replays).collect();
    order.shuffle(&mut rng(spec.seed));
    let mut kinds = vec![PlantedKind::Valid; spec.replays];
    for (n, &index) in order.iter().take(corrupt).enumerate() {
        kinds[index] = PlantedKind::Corrupt(Corruption::ALL[n % Corruption::ALL.len()]);
    }
    for &index in order.iter().skip(corrupt).take(short) {
        kinds[index] = PlantedKind::Short;
    }

    let mut files = Vec::with_capacity(spec.replays);
    for (index, kind) in kinds.into_iter().enumerate() {
        let seed = spec.seed.wrapping_mul(1_000_003).wrapping_add(index as u64);
        let bytes = match kind {
            PlantedKind::Valid => ReplayFixture::generate(seed).to_bytes(),
            PlantedKind::Short => ReplayFixture::generate_short(seed).to_bytes(),
            PlantedKind::Corrupt(c) => c.apply(&ReplayFixture::generate(seed), seed),
        };
        let path = planted_path(index, spec.nested);
        let target = dir.join(&path);
        if let Some(parent) = target.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(target, bytes)?;
        files.push(PlantedFile { path, kind });
    }
    Ok(CorpusManifest {
        valid: spec.replays - corrupt - short,
        short,
        corrupt,
        files,
    })
}

/// A random value tree at most `depth` containers deep.
pub fn random_typed_value(rng: &mut impl Rng, depth: u32) -> TypedValue {
    let leaf_only = depth == 0;
    match rng.random_range(0..if leaf_only { 6 } else { 9 }) {
        0 => TypedValue::Int(match rng.random_range(0..3) {
            0 => rng.random_range(-100..100),
            1 => rng.random::<i32>() as i64,
            _ => rng.random::<i64>(),
        }),
        1 => TypedValue::blob(
            (0..rng.random_range(0..32))
                .map(|_| rng.random::<u8>())
                .collect::<Vec<_>>(),
        ),
        2 => TypedValue::Bool(rng.random()),
        3 => TypedValue::FourCC(rng.random()),
        4 => TypedValue::absent(),
        5 => {
            let bits = rng.random_range(0..96u64);
            let bytes = (0..bits.div_ceil(8)).map(|_| rng.random::<u8>()).collect();
            TypedValue::BitArray(BitArray::new(bits, bytes).expect("length matches"))
        }
        6 => TypedValue::Array(
            (0..rng.random_range(0..6))
                .map(|_| random_typed_value(rng, depth - 1))
                .collect(),
        ),
        7 => TypedValue::Struct(
            (0..rng.random_range(0..6))
                .map(|_| {
                    (
                        rng.random_range(-10..300),
                        random_typed_value(rng, depth - 1),
                    )
                })
                .collect(),
        ),
        _ => TypedValue::present(random_typed_value(rng, depth - 1)),
    }
}

/// A local HTTP server answering GETs from a fixed path -> body table and
/// counting requests. Unknown paths get 404.
pub struct MockServer {
    addr: std::net::SocketAddr,
    server: std::sync::Arc<tiny_http::Server>,
    hits: std::sync::Arc<std::sync::Mutex<BTreeMap<String, usize>>>,
    worker: Option<std::thread::JoinHandle<()>>,
}

impl MockServer {
    pub fn start(routes: BTreeMap<String, Vec<u8>>) -> io::Result<Self> {
        use std::sync::{Arc, Mutex};

        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").map_err(io::Error::other)?);
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| io::Error::other("not an IP listener"))?;
        let hits = Arc::new(Mutex::new(BTreeMap::new()));
        let worker = {
            let server = Arc::clone(&server);
            let hits = Arc::clone(&hits);
            std::thread::spawn(move || {
                while let Ok(request) = server.recv() {
                    let path = request
                        .url()
                        .split('?')
                        .next()
                        .unwrap_or_default()
                        .to_string();
                    *hits
                        .lock()
                        .expect("hit counter")
                        .entry(path.clone())
                        .or_insert(0) += 1;
                    let response = match routes.get(&path) {
                        Some(body) => tiny_http::Response::from_data(body.clone()),
                        None => tiny_http::Response::from_data(b"not found".to_vec())
                            .with_status_code(404),
                    };
                    let _ = request.respond(response);
                }
            })
        };
        Ok(Self {
            addr,
            server,
            hits,
            worker: Some(worker),
        })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}/{}", self.base_url(), path.trim_start_matches('/'))
    }

    /// Requests received so far, over all paths.
    pub fn hits(&self) -> usize {
        self.hits.lock().expect("hit counter").values().sum()
    }

    pub fn hits_for(&self, path: &str) -> usize {
        self.hits
            .lock()
            .expect("hit counter")
            .get(path)
            .copied()
            .unwrap_or(0)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

/// Routes serving every fixture map as `/<hash>.SC2Map`.
pub fn map_routes() -> BTreeMap<String, Vec<u8>> {
    MAP_NAMES
        .iter()
        .map(|name| {
            (
                format!("/{}.SC2Map", hex::encode(map_hash(name))),
                map_bytes(name),
            )
        })
        .collect()
}

/// One single-field corruption of a valid record document.
#[derive(Debug, Clone, PartialEq)]
pub struct Mutation {
    pub document: serde_json::Value,
    /// Path of the corrupted field, in the validator's notation.
    pub field: String,
    pub description: String,
}

fn leaf_paths(value: &serde_json::Value, path: String, out: &mut Vec<String>) {
    use serde_json::Value;
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let p = if path.is_empty() {
                    k.clone()
                } else {
                    format!("{path}.{k}")
                };
                leaf_paths(v, p, out);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                leaf_paths(v, format!("{path}[{i}]"), out);
            }
        }
        _ => out.push(path),
    }
}

fn object_paths(value: &serde_json::Value, path: String, out: &mut Vec<String>) {
    use serde_json::Value;
    match value {
        Value::Object(map) => {
            // Payload trees are open-ended typed values, not fixed records.
            if !path.ends_with("payload") {
                out.push(path.clone());
            }
            for (k, v) in map {
                if path.contains("payload") {
                    continue;
                }
                let p = if path.is_empty() {
                    k.clone()
                } else {
                    format!("{path}.{k}")
                };
                object_paths(v, p, out);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                object_paths(v, format!("{path}[{i}]"), out);
            }
        }
        _ => {}
    }
}

/// Resolve a validator-style path (`a.b[2].c`) to a JSON pointer.
fn to_pointer(path: &str) -> String {
    let mut pointer = String::new();
    for part in path.split('.').filter(|p| !p.is_empty()) {
        let mut pieces = part.split('[');
        pointer.push('/');
        pointer.push_str(
            &pieces
                .next()
                .unwrap_or_default()
                .replace('~', "~0")
                .replace('/', "~1"),
        );
        for index in pieces {
            pointer.push('/');
            pointer.push_str(index.trim_end_matches(']'));
        }
    }
    pointer
}

fn join(parent: &str, key: &str) -> String {
    if parent.is_empty() {
        key.to_string()
    } else {
        format!("{parent}.{key}")
    }
}

/// Corrupt exactly one field of `doc`: drop it, change its type, add an
/// unknown sibling, make a number negative, pick a disallowed enum value, or
/// break a cross-field invariant.
pub fn mutate_record(doc: &serde_json::Value, rng: &mut impl Rng) -> Mutation {
    use serde_json::{json, Value};

    let mut leaves = Vec::new();
    leaf_paths(doc, String::new(), &mut leaves);
    let mut objects = Vec::new();
    object_paths(doc, String::new(), &mut objects);

    loop {
        let mut document = doc.clone();
        let kind = rng.random_range(0..7);
        let (field, description) = match kind {
            0 => {
                let path = objects.choose(rng).expect("record has objects").clone();
                let target = document
                    .pointer_mut(&to_pointer(&path))
                    .and_then(Value::as_object_mut)
                    .expect("object");
                let Some(key) = target
                    .keys()
                    .cloned()
                    .collect::<Vec<_>>()
                    .choose(rng)
                    .cloned()
                else {
                    continue;
                };
                target.remove(&key);
                (join(&path, &key), "removed field".to_string())
            }
            1 => {
                let path = leaves.choose(rng).expect("record has leaves").clone();
                let target = document.pointer_mut(&to_pointer(&path)).expect("leaf");
                *target = match target {
                    Value::String(_) => json!(7),
                    Value::Bool(_) => json!("yes"),
                    Value::Null => json!("null"),
                    _ => json!("seven"),
                };
                (path, "changed type".to_string())
            }
            2 => {
                let path = objects.choose(rng).expect("record has objects").clone();
                let target = document
                    .pointer_mut(&to_pointer(&path))
                    .and_then(Value::as_object_mut)
                    .expect("object");
                target.insert("unexpected_field".into(), json!(1));
                (
                    join(&path, "unexpected_field"),
                    "added unknown field".to_string(),
                )
            }
            3 => {
                let candidates: Vec<&String> = leaves
                    .iter()
                    .filter(|p| {
                        !p.contains("payload")
                            && (p.ends_with("loops")
                                || p.ends_with("apm")
                                || p.ends_with(".loop")
                                || p.ends_with("seconds")
                                || p.starts_with("header.version"))
                    })
                    .collect();
                let path = candidates
                    .choose(rng)
                    .expect("numeric fields exist")
                    .to_string();
                *document.pointer_mut(&to_pointer(&path)).expect("leaf") = json!(-5);
                (path, "negative value".to_string())
            }
            4 => {
                let candidates: Vec<&String> = leaves
                    .iter()
                    .filter(|p| {
                        p.ends_with(".race")
                            || p.ends_with(".result")
                            || p.as_str() == "toolset_version"
                    })
                    .collect();
                let path = candidates
                    .choose(rng)
                    .expect("enum fields exist")
                    .to_string();
                *document.pointer_mut(&to_pointer(&path)).expect("leaf") = json!("Bogus");
                (path, "value outside enum".to_string())
            }
            5 => {
                let seconds = document["game_duration_seconds"].as_f64().unwrap_or(0.0);
                document["game_duration_seconds"] = json!(seconds + 0.5);
                (
                    "game_duration_seconds".to_string(),
                    "seconds disagree with loops".to_string(),
                )
            }
            _ => {
                let loops = document["game_duration_loops"].as_u64().unwrap_or(0);
                let Some(events) = document["events"].as_array_mut().filter(|e| !e.is_empty())
                else {
                    continue;
                };
                let last = events.len() - 1;
                events[last]["loop"] = json!(loops + 1);
                (
                    format!("events[{last}].loop"),
                    "event after the end".to_string(),
                )
            }
        };
        return Mutation {
            document,
            field,
            description,
        };
    }
}

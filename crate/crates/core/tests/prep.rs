use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use proptest::prelude::*;
use replaykit::extract::{FAILED_LOG, MAIN_LOG, SUMMARY_FILE};
use replaykit::fixtures::{map_routes, write_replaypack, CorpusSpec, MockServer, ReplayFixture};
use replaykit::prep::*;
use replaykit::util::{sha256_file, sha256_hex};
use replaypack_helpers::*;
use serde_json::{json, Map, Value};

mod replaypack_helpers {
    use super::*;

    /// Relative path (with `/`) -> content hash for every file under `root`.
    pub fn tree_hashes(root: &Path) -> BTreeMap<String, String> {
        walkdir::WalkDir::new(root)
            .into_iter()
            .map(|e| e.unwrap())
            .filter(|e| e.file_type().is_file())
            .map(|e| {
                let rel = e.path().strip_prefix(root).unwrap();
                let rel = rel
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/");
                (rel, sha256_file(e.path()).unwrap())
            })
            .collect()
    }

    pub fn write(path: &Path, bytes: &[u8]) {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, bytes).unwrap();
    }
}

#[test]
fn flatten_empty_input() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(tmp.path().join("in")).unwrap();
    let report = flatten_directory(&tmp.path().join("in"), &tmp.path().join("out")).unwrap();
    assert!(report.mapping.is_empty());
    let mapping = std::fs::read_to_string(tmp.path().join("out").join(MAPPING_FILE)).unwrap();
    assert_eq!(serde_json::from_str::<Value>(&mapping).unwrap(), json!({}));
}

#[test]
fn flatten_same_name_different_dirs() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    write(&input.join("a/b/x.SC2Replay"), b"first");
    write(&input.join("a/c/x.SC2Replay"), b"second");
    write(&input.join("notes.txt"), b"ignore me");
    let report = flatten_directory(&input, &tmp.path().join("out")).unwrap();

    let expected = BTreeMap::from([
        (
            format!("{}.SC2Replay", &sha256_hex(b"first")[..16]),
            "a/b/x.SC2Replay".to_string(),
        ),
        (
            format!("{}.SC2Replay", &sha256_hex(b"second")[..16]),
            "a/c/x.SC2Replay".to_string(),
        ),
    ]);
    assert_eq!(report.mapping, expected);
    // Oracle values for the two names, computed independently.
    assert!(report.mapping.contains_key("a7937b64b8caa58f.SC2Replay"));
    assert!(report.mapping.contains_key("16367aacb67a4a01.SC2Replay"));

    let out = tree_hashes(&tmp.path().join("out"));
    assert_eq!(out.len(), 3);
    assert!(!out.keys().any(|k| k.contains("notes")));
    let on_disk: BTreeMap<String, String> =
        serde_json::from_slice(&std::fs::read(tmp.path().join("out").join(MAPPING_FILE)).unwrap())
            .unwrap();
    assert_eq!(on_disk, expected);
}

#[test]
fn flatten_duplicate_content_keeps_both() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    write(&input.join("a/x.SC2Replay"), b"same");
    write(&input.join("b/y.sc2replay"), b"same");
    let report = flatten_directory(&input, &tmp.path().join("out")).unwrap();
    let hash = &sha256_hex(b"same")[..16];
    assert_eq!(
        report.mapping,
        BTreeMap::from([
            (format!("{hash}.SC2Replay"), "a/x.SC2Replay".to_string()),
            (format!("{hash}_1.sc2replay"), "b/y.sc2replay".to_string()),
        ])
    );
}

#[test]
fn flatten_refuses_non_empty_output() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(tmp.path().join("in")).unwrap();
    write(&tmp.path().join("out/old"), b"x");
    assert!(matches!(
        flatten_directory(&tmp.path().join("in"), &tmp.path().join("out")),
        Err(PrepError::OutputNotEmpty(_))
    ));
}

#[test]
fn flatten_preserves_content_multiset() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    write_replaypack(
        &input,
        &CorpusSpec {
            replays: 30,
            seed: 2,
            ..Default::default()
        },
    )
    .unwrap();
    let report = flatten_directory(&input, &tmp.path().join("out")).unwrap();
    let mut before: Vec<String> = tree_hashes(&input).into_values().collect();
    let after_tree = tree_hashes(&tmp.path().join("out"));
    let mut after: Vec<String> = after_tree
        .iter()
        .filter(|(k, _)| k.as_str() != MAPPING_FILE)
        .map(|(_, v)| v.clone())
        .collect();
    before.sort();
    after.sort();
    assert_eq!(before, after);
    assert_eq!(report.mapping.len(), 30);
    let sources: std::collections::HashSet<_> = report.mapping.values().collect();
    assert_eq!(sources.len(), 30);
    for (name, source) in &report.mapping {
        assert_eq!(after_tree[name], sha256_file(&input.join(source)).unwrap());
    }
}

#[test]
fn package_round_trip_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("root");
    write(&root.join("A/one.txt"), b"1");
    write(&root.join("A/nested/deeper/two.bin"), &[0u8, 1, 2, 3]);
    write(&root.join("B/three.txt"), b"3");
    std::fs::create_dir_all(root.join("C")).unwrap();
    write(&root.join("stray.txt"), b"top-level files are not packaged");

    let first = package_directories(&root, &tmp.path().join("z1")).unwrap();
    let names: Vec<_> = first
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["A.zip", "B.zip", "C.zip"]);

    // Touch mtimes; output must not change.
    std::thread::sleep(std::time::Duration::from_millis(1100));
    std::fs::write(root.join("A/one.txt"), b"1").unwrap();
    let second = package_directories(&root, &tmp.path().join("z2")).unwrap();
    for (a, b) in first.iter().zip(&second) {
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    for dir in ["A", "B", "C"] {
        let dest = tmp.path().join("unz").join(dir);
        unzip(&tmp.path().join("z1").join(format!("{dir}.zip")), &dest).unwrap();
        assert_eq!(tree_hashes(&dest), tree_hashes(&root.join(dir)));
    }
    assert!(tmp.path().join("unz/C").is_dir());
}

#[test]
fn rename_prefixes_and_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for f in [SUMMARY_FILE, MAPPING_FILE, FAILED_LOG, MAIN_LOG] {
        std::fs::write(dir.join(f), f).unwrap();
    }
    std::fs::write(dir.join("abc.json"), "{}").unwrap();
    let renamed = rename_auxiliary_files(dir, "TournamentName2024").unwrap();
    assert!(renamed.contains(&"TournamentName2024_main_log.log".to_string()));
    assert_eq!(renamed.len(), 4);
    let before = tree_hashes(dir);
    assert!(before.contains_key("TournamentName2024_main_log.log"));
    assert!(!before.contains_key(MAIN_LOG));
    assert!(before.contains_key("abc.json"));

    rename_auxiliary_files(dir, "TournamentName2024").unwrap();
    assert_eq!(tree_hashes(dir), before);

    std::fs::write(dir.join(MAIN_LOG), "different").unwrap();
    assert!(matches!(
        rename_auxiliary_files(dir, "TournamentName2024"),
        Err(PrepError::NameExists(_))
    ));

    let empty = tempfile::tempdir().unwrap();
    assert!(rename_auxiliary_files(empty.path(), "T")
        .unwrap()
        .is_empty());
}

#[test]
fn merge_examples() {
    let tmp = tempfile::tempdir().unwrap();
    let file = |name: &str, v: &str| {
        let p = tmp.path().join(name);
        std::fs::write(&p, v).unwrap();
        p
    };
    let empty = file("e.json", "{}");
    let a1 = file("a1.json", r#"{"a":1}"#);
    let a2 = file("a2.json", r#"{"a":2}"#);
    let b2 = file("b2.json", r#"{"b":2}"#);
    let arr = file("arr.json", "[1]");
    let bad = file("bad.json", "{");

    assert_eq!(
        Value::Object(merge_json(&empty, &a1).unwrap()),
        json!({"a":1})
    );
    assert_eq!(
        Value::Object(merge_json(&a1, &b2).unwrap()),
        json!({"a":1,"b":2})
    );
    assert_eq!(Value::Object(merge_json(&a1, &a1).unwrap()), json!({"a":1}));
    match merge_json(&a1, &a2) {
        Err(PrepError::Conflict(keys)) => assert_eq!(keys, ["a"]),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        merge_json(&arr, &a1),
        Err(PrepError::NotAnObject(_))
    ));
    assert!(matches!(
        merge_json(&a1, &bad),
        Err(PrepError::Parse { .. })
    ));
}

fn small_object() -> impl Strategy<Value = Map<String, Value>> {
    proptest::collection::btree_map("[a-e]", 0i64..3, 0..5)
        .prop_map(|m| m.into_iter().map(|(k, v)| (k, Value::from(v))).collect())
}

proptest! {
    #[test]
    fn merge_commutes_and_associates(a in small_object(), b in small_object(), c in small_object()) {
        let ab = merge_json_values(&a, &b);
        let ba = merge_json_values(&b, &a);
        prop_assert_eq!(ab.is_ok(), ba.is_ok());
        if let (Ok(ab), Ok(ba)) = (&ab, &ba) {
            prop_assert_eq!(ab, ba);
        }
        let left = merge_json_values(&a, &b).and_then(|ab| merge_json_values(&ab, &c));
        let right = merge_json_values(&b, &c).and_then(|bc| merge_json_values(&a, &bc));
        if let (Ok(l), Ok(r)) = (&left, &right) {
            prop_assert_eq!(l, r);
        } else {
            prop_assert!(left.is_err() && right.is_err());
        }
    }
}

#[test]
fn copy_mapping_cases() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    let output = tmp.path().join("out");
    for s in ["s1", "s2", "s3"] {
        write(
            &input.join(s).join(MAPPING_FILE),
            format!("{{\"{s}\":\"x\"}}").as_bytes(),
        );
        std::fs::create_dir_all(output.join(s)).unwrap();
    }
    std::fs::create_dir_all(input.join("nomap")).unwrap();
    let report = copy_processed_mapping(&input, &output).unwrap();
    assert_eq!(report.copied.len(), 3);
    assert_eq!(report.skipped, ["nomap"]);
    for s in ["s1", "s2", "s3"] {
        assert_eq!(
            sha256_file(&input.join(s).join(MAPPING_FILE)).unwrap(),
            sha256_file(&output.join(s).join(MAPPING_FILE)).unwrap()
        );
    }

    write(&input.join("s4").join(MAPPING_FILE), b"{}");
    match copy_processed_mapping(&input, &output) {
        Err(PrepError::MissingCounterpart(name)) => assert_eq!(name, "s4"),
        other => panic!("{other:?}"),
    }
}

fn replays_with_maps(dir: &Path, count: u64, maps: &[&str]) {
    for i in 0..count {
        let mut fixture = ReplayFixture::generate(500 + i);
        let name = maps[i as usize % maps.len()];
        fixture.details.map_name = name.to_string();
        fixture.details.map_hash = Some(replaykit::fixtures::map_hash(name));
        write(&dir.join(format!("r{i}.SC2Replay")), &fixture.to_bytes());
    }
}

#[test]
fn map_downloads_once_per_map() {
    let tmp = tempfile::tempdir().unwrap();
    let maps = ["Ever Dream LE", "Submarine LE"];
    replays_with_maps(&tmp.path().join("p1"), 6, &maps);
    replays_with_maps(&tmp.path().join("p2"), 4, &maps);
    write(&tmp.path().join("p2/broken.SC2Replay"), b"junk");
    let server = MockServer::start(map_routes()).unwrap();
    let dirs = vec![tmp.path().join("p1"), tmp.path().join("p2")];
    let out = tmp.path().join("maps");

    let report = download_maps(&dirs, &out, &server.base_url()).unwrap();
    assert_eq!(report.referenced.len(), 2);
    assert_eq!(report.downloaded.len(), 2);
    assert_eq!(server.hits(), 2);
    assert_eq!(report.unreadable.len(), 1);
    for name in maps {
        let hash = hex::encode(replaykit::fixtures::map_hash(name));
        assert_eq!(
            sha256_file(&out.join(format!("{hash}.SC2Map"))).unwrap(),
            hash
        );
    }

    let again = download_maps(&dirs, &out, &server.base_url()).unwrap();
    assert_eq!(again.skipped.len(), 2);
    assert!(again.downloaded.is_empty());
    assert_eq!(server.hits(), 2);
}

#[test]
fn map_404_is_recorded_and_others_saved() {
    let tmp = tempfile::tempdir().unwrap();
    replays_with_maps(
        &tmp.path().join("p"),
        6,
        &["Ever Dream LE", "Submarine LE", "Golden Wall LE"],
    );
    let mut routes = map_routes();
    let missing = format!(
        "/{}.SC2Map",
        hex::encode(replaykit::fixtures::map_hash("Submarine LE"))
    );
    routes.remove(&missing);
    let server = MockServer::start(routes).unwrap();
    let report = download_maps(
        &[tmp.path().join("p")],
        &tmp.path().join("maps"),
        &server.base_url(),
    )
    .unwrap();
    assert_eq!(report.downloaded.len(), 2);
    assert_eq!(report.failed.len(), 1);
    assert!(
        matches!(&report.failed[0], PrepError::FetchFailed { url, .. } if url.ends_with(&missing))
    );
}

fn manifest_for(
    server: &MockServer,
    payloads: &[(&str, Vec<u8>)],
    tampered: &[&str],
) -> ReplaypackManifest {
    ReplaypackManifest {
        entries: payloads
            .iter()
            .map(|(name, bytes)| {
                let mut checksum = sha256_hex(bytes);
                if tampered.contains(name) {
                    checksum = sha256_hex(b"something else");
                }
                ManifestEntry {
                    name: name.to_string(),
                    url: server.url(&format!("{name}.zip")),
                    checksum,
                    size_bytes: bytes.len() as u64,
                }
            })
            .collect(),
    }
}

#[test]
fn replaypack_download_verify_and_skip() {
    let tmp = tempfile::tempdir().unwrap();
    let payloads: Vec<(&str, Vec<u8>)> = vec![
        ("Alpha", vec![1u8; 5000]),
        ("Beta", b"beta".to_vec()),
        ("Gamma", vec![]),
    ];
    let routes = payloads
        .iter()
        .map(|(n, b)| (format!("/{n}.zip"), b.clone()))
        .collect();
    let server = MockServer::start(routes).unwrap();
    let manifest = manifest_for(&server, &payloads, &["Beta"]);
    let out = tmp.path().join("dl");

    let report = download_replaypacks(&manifest, &out).unwrap();
    assert_eq!(report.verified.len(), 2);
    assert_eq!(report.failures.len(), 1);
    assert!(matches!(&report.failures[0], PrepError::ChecksumMismatch(name) if name == "Beta"));
    assert!(!out.join("Beta.zip").exists());
    assert!(!out.join("Beta.zip.part").exists());
    assert_eq!(server.hits(), 3);

    let mut fixed = manifest.clone();
    fixed.entries.retain(|e| e.name != "Beta");
    let again = download_replaypacks(&fixed, &out).unwrap();
    assert_eq!(again.skipped.len(), 2);
    assert!(again.verified.is_empty());
    assert_eq!(server.hits(), 3);
}

#[test]
fn replaypack_fetch_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let server = MockServer::start(BTreeMap::new()).unwrap();
    let manifest = manifest_for(&server, &[("Missing", b"x".to_vec())], &[]);
    let report = download_replaypacks(&manifest, tmp.path()).unwrap();
    assert!(matches!(&report.failures[0], PrepError::FetchFailed { .. }));
}

#[test]
fn manifest_validation() {
    let good = r#"[{"name":"A","url":"http://h/A.zip","checksum":"%s","size_bytes":1}]"#;
    let sum = "a".repeat(64);
    assert!(ReplaypackManifest::parse(&good.replace("%s", &sum)).is_ok());
    assert!(ReplaypackManifest::parse(&good.replace("%s", "abc")).is_err());
    let dup = format!("[{0},{0}]", &good[1..good.len() - 1]).replace("%s", &sum);
    assert!(ReplaypackManifest::parse(&dup).is_err());
    assert!(
        ReplaypackManifest::parse(&good.replace("%s", &sum).replace("\"A\"", "\"../A\"")).is_err()
    );
    assert!(ReplaypackManifest::parse("{}").is_err());
}

fn corpus(root: &Path, packs: usize, replays: usize) -> Vec<replaykit::fixtures::CorpusManifest> {
    (0..packs)
        .map(|i| {
            let spec = CorpusSpec {
                replays,
                seed: 40 + i as u64,
                ..Default::default()
            };
            write_replaypack(&root.join(format!("Pack{i}")), &spec).unwrap()
        })
        .collect()
}

#[test]
fn process_replaypacks_matches_standalone_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let flat = tmp.path().join("flat");
    for (i, spec_seed) in [7u64, 8].iter().enumerate() {
        let spec = CorpusSpec {
            replays: 20,
            seed: *spec_seed,
            nested: false,
            ..Default::default()
        };
        write_replaypack(&flat.join(format!("P{i}")), &spec).unwrap();
    }
    std::fs::create_dir_all(flat.join("Empty")).unwrap();
    let options = replaykit::extract::ExtractionOptions {
        clock: replaykit::extract::LogClock::Fixed(0),
        ..Default::default()
    };
    let runs = process_replaypacks(&flat, &tmp.path().join("par"), 2, &options).unwrap();
    assert_eq!(runs.len(), 3);
    assert!(runs.iter().all(|r| r.result.is_ok()));
    for name in ["Empty", "P0", "P1"] {
        let alone = tmp.path().join("alone").join(name);
        replaykit::extract::process_replaypack(&flat.join(name), &alone, &options, 1).unwrap();
        assert_eq!(
            tree_hashes(&alone),
            tree_hashes(&tmp.path().join("par").join(name))
        );
    }
    let empty = &runs
        .iter()
        .find(|r| r.name == "Empty")
        .unwrap()
        .result
        .as_ref()
        .unwrap()
        .summary;
    assert_eq!(empty.total_replays, 0);
}

#[test]
fn pipeline_end_to_end_and_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("input");
    let manifests = corpus(&input, 3, 20);

    let run = |tag: &str| -> (PipelineReport, PathBuf, PathBuf) {
        let staging = tmp.path().join(format!("staging{tag}"));
        let output = tmp.path().join(format!("output{tag}"));
        let mut config = PipelineConfig::new(&input, &staging, &output);
        config
            .tournament_names
            .insert("Pack0".into(), "TournamentName2024".into());
        config.extraction.min_duration_s = Some(60);
        config.source_date_epoch = Some(1_700_000_000);
        (run_pipeline(&config).unwrap(), staging, output)
    };
    let (report, staging, output) = run("1");
    assert_eq!(report.steps_run, STEPS);
    assert_eq!(report.raw_archives.len(), 3);
    assert_eq!(report.processed_archives.len(), 3);

    for (i, m) in manifests.iter().enumerate() {
        let pack = format!("Pack{i}");
        let summary = &report.replaypacks[i].result.as_ref().unwrap().summary;
        assert_eq!(
            (
                summary.ok as usize,
                summary.filtered as usize,
                summary.failed as usize
            ),
            (m.valid, m.short, m.corrupt)
        );

        let dest = tmp.path().join("unz").join(&pack);
        unzip(&output.join("processed").join(format!("{pack}.zip")), &dest).unwrap();
        let prefix = if i == 0 {
            "TournamentName2024".to_string()
        } else {
            pack.clone()
        };
        for aux in [SUMMARY_FILE, MAPPING_FILE, FAILED_LOG, MAIN_LOG] {
            assert!(
                dest.join(format!("{prefix}_{aux}")).is_file(),
                "{prefix}_{aux}"
            );
            assert!(!dest.join(aux).exists());
        }
        let raw = tmp.path().join("unraw").join(&pack);
        unzip(&output.join("raw").join(format!("{pack}.zip")), &raw).unwrap();
        assert_eq!(
            tree_hashes(&raw),
            tree_hashes(&staging.join("flattened").join(&pack))
        );
    }

    let (_, _, output2) = run("2");
    assert_eq!(tree_hashes(&output), tree_hashes(&output2));

    // Resume: nothing left to do.
    let mut config = PipelineConfig::new(&input, &staging, &output);
    config.source_date_epoch = Some(1_700_000_000);
    let resumed = run_pipeline(&config).unwrap();
    assert!(resumed.steps_run.is_empty());
    assert_eq!(resumed.steps_skipped.len(), 6);
}

#[test]
fn pipeline_config_validation_happens_first() {
    let tmp = tempfile::tempdir().unwrap();
    let staging = tmp.path().join("staging");
    let text = format!(
        r#"{{"input_root": {:?}, "staging_root": {:?}}}"#,
        tmp.path().to_string_lossy(),
        staging.to_string_lossy()
    );
    let config = PipelineConfig::parse(&text).unwrap();
    match run_pipeline(&config) {
        Err(PrepError::InvalidConfig(msg)) => assert!(msg.contains("output_root")),
        other => panic!("{other:?}"),
    }
    assert!(!staging.exists());
    assert!(PipelineConfig::parse(r#"{"bogus": 1}"#).is_err());
}

#[test]
fn pipeline_failure_keeps_earlier_steps() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("input");
    corpus(&input, 1, 5);
    let staging = tmp.path().join("staging");
    let mut config = PipelineConfig::new(&input, &staging, tmp.path().join("output"));

    // Steps 1 and 2 claim to be done but the flattened tree is gone, so the
    // process step is the first to run and it fails.
    write(&staging.join(".steps/1-flatten.done"), b"");
    write(&staging.join(".steps/2-package_raw.done"), b"");
    let err = run_pipeline(&config).unwrap_err();
    assert!(
        matches!(
            err,
            PrepError::StepFailed {
                step: "process",
                ..
            }
        ),
        "{err:?}"
    );
    assert!(staging.join(".steps/1-flatten.done").exists());
    assert!(!staging.join(".steps/3-process.done").exists());

    config.resume = false;
    let report = run_pipeline(&config).unwrap();
    assert_eq!(report.steps_run, STEPS);
}

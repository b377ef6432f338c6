use std::collections::BTreeMap;
use std::path::Path;

use replaykit::dataset::{
    load_dataset, load_replay, load_replaypack, DatasetError, DatasetSource, IntegrityWarning,
};
use replaykit::extract::{process_replaypack, ExtractionOptions, FilterSpec, ReplayRecord};
use replaykit::fixtures::{mutate_record, rng, write_replaypack, CorpusSpec, MockServer};
use replaykit::prep::{package_directories, ManifestEntry, ReplaypackManifest};
use replaykit::util::sha256_hex;
use serde_json::{json, Value};

/// Extract a small flat corpus into `out`; returns the records the extractor
/// wrote, keyed by file name.
fn extracted(
    input: &Path,
    out: &Path,
    seed: u64,
    replays: usize,
) -> BTreeMap<String, ReplayRecord> {
    write_replaypack(
        input,
        &CorpusSpec {
            replays,
            seed,
            nested: false,
            ..Default::default()
        },
    )
    .unwrap();
    let options = ExtractionOptions {
        filters: FilterSpec {
            min_duration_loops: Some(960),
            ..Default::default()
        },
        ..Default::default()
    };
    process_replaypack(input, out, &options, 2).unwrap();
    std::fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            p.extension().is_some_and(|e| e == "json") && !p.ends_with("package_summary.json")
        })
        .map(|p| {
            let record: ReplayRecord = serde_json::from_slice(&std::fs::read(&p).unwrap()).unwrap();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                record,
            )
        })
        .collect()
}

#[test]
fn write_then_read_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let records = extracted(&tmp.path().join("in"), &tmp.path().join("out"), 21, 30);
    assert!(!records.is_empty());
    for (name, record) in &records {
        assert_eq!(
            &load_replay(&tmp.path().join("out").join(name)).unwrap(),
            record
        );
    }
}

#[test]
fn missing_players_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let records = extracted(&tmp.path().join("in"), &tmp.path().join("out"), 22, 5);
    let mut doc = serde_json::to_value(records.values().next().unwrap()).unwrap();
    doc.as_object_mut().unwrap().remove("players");
    let path = tmp.path().join("bad.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    let err = load_replay(&path).unwrap_err();
    assert_eq!(err.field(), Some("players"));
}

#[test]
fn negative_duration_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let records = extracted(&tmp.path().join("in"), &tmp.path().join("out"), 23, 5);
    let mut doc = serde_json::to_value(records.values().next().unwrap()).unwrap();
    doc["game_duration_loops"] = json!(-16);
    let path = tmp.path().join("bad.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    assert_eq!(
        load_replay(&path).unwrap_err().field(),
        Some("game_duration_loops")
    );
}

#[test]
fn invalid_json_is_a_parse_error() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("x.json");
    std::fs::write(&path, "{not json").unwrap();
    assert!(matches!(
        load_replay(&path),
        Err(DatasetError::Parse { .. })
    ));
}

#[test]
fn anonymized_flag_requires_ids() {
    let tmp = tempfile::tempdir().unwrap();
    let records = extracted(&tmp.path().join("in"), &tmp.path().join("out"), 24, 5);
    let mut doc = serde_json::to_value(records.values().next().unwrap()).unwrap();
    doc["anonymized"] = json!(true);
    let path = tmp.path().join("bad.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    assert_eq!(
        load_replay(&path).unwrap_err().field(),
        Some("players[0].nickname")
    );
}

#[test]
fn single_field_mutations_are_caught() {
    let tmp = tempfile::tempdir().unwrap();
    let records = extracted(&tmp.path().join("in"), &tmp.path().join("out"), 25, 20);
    let docs: Vec<Value> = records
        .values()
        .map(|r| serde_json::to_value(r).unwrap())
        .collect();
    let mut rng = rng(99);
    let mut named = 0;
    for i in 0..200 {
        let mutation = mutate_record(&docs[i % docs.len()], &mut rng);
        let err = replaykit::dataset::record_from_value(&mutation.document, Path::new("m.json"))
            .expect_err(&format!(
                "{} at {} went unnoticed",
                mutation.description, mutation.field
            ));
        if err.field() == Some(mutation.field.as_str()) {
            named += 1;
        }
    }
    assert!(named >= 190, "named {named}/200");
}

#[test]
fn replaypack_handle() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let records = extracted(&tmp.path().join("in"), &out, 26, 25);
    std::fs::write(out.join("stray.txt"), "ignored").unwrap();
    let handle = load_replaypack(&out).unwrap();
    assert_eq!(handle.len(), records.len());
    assert!(handle.warnings.is_empty(), "{:?}", handle.warnings);
    assert_eq!(handle.summary.as_ref().unwrap().ok as usize, records.len());
    assert!(handle.main_log.is_some());
    assert_eq!(handle.failed.len(), 25 - records.len());
    let loaded: Vec<ReplayRecord> = handle.iter().map(Result::unwrap).collect();
    assert_eq!(loaded, records.values().cloned().collect::<Vec<_>>());

    // Prefixed auxiliaries are recognized too.
    std::fs::rename(
        out.join("package_summary.json"),
        out.join("Cup_package_summary.json"),
    )
    .unwrap();
    std::fs::remove_file(handle.paths()[0].clone()).unwrap();
    let handle = load_replaypack(&out).unwrap();
    assert!(handle.summary.is_some());
    assert_eq!(
        handle.warnings,
        [IntegrityWarning::SummaryMismatch {
            summary_ok: records.len() as u64,
            indexed: records.len() - 1
        }]
    );

    assert!(matches!(
        load_replaypack(&out.join("stray.txt")),
        Err(DatasetError::NotADirectory(_))
    ));
}

#[test]
fn local_and_manifest_datasets_match() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("dataset");
    let mut expected_total = 0;
    for (i, name) in ["A", "B", "C"].iter().enumerate() {
        let records = extracted(
            &tmp.path().join("raw").join(name),
            &root.join(name),
            30 + i as u64,
            12,
        );
        expected_total += records.len();
    }
    let local = load_dataset(&DatasetSource::Local(root.clone())).unwrap();
    assert_eq!(local.replaypacks.len(), 3);
    assert_eq!(local.len(), expected_total);
    let oks: u64 = local
        .replaypacks
        .iter()
        .map(|r| r.summary.as_ref().unwrap().ok)
        .sum();
    assert_eq!(oks as usize, expected_total);

    let zips = package_directories(&root, &tmp.path().join("zips")).unwrap();
    let routes = zips
        .iter()
        .map(|z| {
            (
                format!("/{}", z.file_name().unwrap().to_string_lossy()),
                std::fs::read(z).unwrap(),
            )
        })
        .collect();
    let server = MockServer::start(routes).unwrap();
    let manifest = ReplaypackManifest {
        entries: zips
            .iter()
            .map(|z| {
                let bytes = std::fs::read(z).unwrap();
                let file = z.file_name().unwrap().to_string_lossy().into_owned();
                ManifestEntry {
                    name: file.trim_end_matches(".zip").to_string(),
                    url: server.url(&file),
                    checksum: sha256_hex(&bytes),
                    size_bytes: bytes.len() as u64,
                }
            })
            .collect(),
    };
    let remote = load_dataset(&DatasetSource::Manifest {
        manifest,
        cache: tmp.path().join("cache"),
    })
    .unwrap();
    assert_eq!(remote.replaypacks.len(), 3);
    let a: Vec<ReplayRecord> = local.iter().map(Result::unwrap).collect();
    let b: Vec<ReplayRecord> = remote.iter().map(Result::unwrap).collect();
    assert_eq!(a, b);
    for (l, r) in local.replaypacks.iter().zip(&remote.replaypacks) {
        assert_eq!(
            (&l.name, &l.summary, &l.failed),
            (&r.name, &r.summary, &r.failed)
        );
    }
}

#[test]
fn empty_root_is_empty_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let handle = load_dataset(&DatasetSource::Local(tmp.path().to_path_buf())).unwrap();
    assert!(handle.is_empty());
    assert_eq!(handle.iter().count(), 0);
}

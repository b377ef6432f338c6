use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::sync::Arc;

use replaykit::anon::{
    serve, AnonymizationStore, AnonymizeError, Anonymizer, AnonymizerClient, StoreError,
};

#[test]
fn journal_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store.jsonl");
    let store = AnonymizationStore::open(&path).unwrap();
    for name in ["Alice", "Bob", "Carol"] {
        store.get_or_assign(name).unwrap();
    }
    let before = store.entries();
    drop(store);

    let reloaded = AnonymizationStore::open(&path).unwrap();
    assert_eq!(reloaded.entries(), before);
    assert!(reloaded.warnings().is_empty());
    assert_eq!(reloaded.get_or_assign("Dave").unwrap(), "3");
}

#[test]
fn empty_file_is_empty_store() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store.jsonl");
    std::fs::write(&path, b"").unwrap();
    let store = AnonymizationStore::open(&path).unwrap();
    assert!(store.is_empty());
    assert_eq!(store.get_or_assign("x").unwrap(), "0");
}

#[test]
fn torn_last_line_is_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store.jsonl");
    std::fs::write(
        &path,
        "{\"n\":\"a\",\"id\":\"0\"}\n{\"n\":\"b\",\"id\":\"1\"}\n{\"n\":\"c\",\"i",
    )
    .unwrap();
    let store = AnonymizationStore::open(&path).unwrap();
    assert_eq!(store.len(), 2);
    assert_eq!(store.warnings().len(), 1);
    // The torn tail is cut so the next append starts on a clean line.
    assert_eq!(store.get_or_assign("c").unwrap(), "2");
    drop(store);
    let again = AnonymizationStore::open(&path).unwrap();
    assert_eq!(again.len(), 3);
    assert!(again.warnings().is_empty());
}

#[test]
fn damage_before_the_tail_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store.jsonl");
    std::fs::write(
        &path,
        "{\"n\":\"a\",\"id\":\"0\"}\ngarbage\n{\"n\":\"b\",\"id\":\"1\"}\n",
    )
    .unwrap();
    assert!(matches!(
        AnonymizationStore::open(&path),
        Err(StoreError::CorruptJournal { line: 2, .. })
    ));
}

#[test]
fn out_of_sequence_id_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store.jsonl");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "{{\"n\":\"a\",\"id\":\"0\"}}").unwrap();
    writeln!(f, "{{\"n\":\"b\",\"id\":\"5\"}}").unwrap();
    writeln!(f, "{{\"n\":\"c\",\"id\":\"2\"}}").unwrap();
    drop(f);
    assert!(matches!(
        AnonymizationStore::open(&path),
        Err(StoreError::CorruptJournal { .. })
    ));
}

#[test]
fn concurrent_store_access_is_injective() {
    let store = Arc::new(AnonymizationStore::in_memory());
    let results: Vec<HashMap<String, String>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..8)
            .map(|t| {
                let store = Arc::clone(&store);
                scope.spawn(move || {
                    (0..300)
                        .map(|i| {
                            let name = format!("n{}", (i * 7 + t * 31) % 400);
                            let id = store.get_or_assign(&name).unwrap();
                            (name, id)
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut merged = HashMap::new();
    for map in results {
        for (name, id) in map {
            assert_eq!(merged.entry(name).or_insert_with(|| id.clone()), &id);
        }
    }
    let ids: HashSet<_> = merged.values().collect();
    assert_eq!(ids.len(), merged.len());
}

#[test]
fn service_contract() {
    let store = Arc::new(AnonymizationStore::in_memory());
    let server = serve("127.0.0.1:0", store, 2).unwrap();
    let addr = server.addr().to_string();
    let client = AnonymizerClient::new(&addr);

    assert_eq!(client.pseudonym("Alice").unwrap(), "0");
    assert_eq!(client.pseudonym("Bob").unwrap(), "1");
    assert_eq!(client.pseudonym("Alice").unwrap(), "0");
    assert!(matches!(
        client.pseudonym("   "),
        Err(AnonymizeError::EmptyNickname)
    ));

    let agent: ureq::Agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into();
    let url = format!("http://{addr}/anonymize");
    let mut resp = agent.post(&url).send("{}").unwrap();
    assert_eq!(resp.status().as_u16(), 400);
    let body: serde_json::Value =
        serde_json::from_str(&resp.body_mut().read_to_string().unwrap()).unwrap();
    assert!(body["error"].is_string());

    let resp = agent.post(&url).send("not json").unwrap();
    assert_eq!(resp.status().as_u16(), 400);
    let resp = agent.get(&url).call().unwrap();
    assert_eq!(resp.status().as_u16(), 405);
    let resp = agent
        .post(&format!("http://{addr}/other"))
        .send("{}")
        .unwrap();
    assert_eq!(resp.status().as_u16(), 404);

    server.shutdown();
}

#[test]
fn unreachable_service_is_unavailable() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let client = AnonymizerClient::new(&addr.to_string());
    assert!(matches!(
        client.pseudonym("Alice"),
        Err(AnonymizeError::Unavailable(_))
    ));
}

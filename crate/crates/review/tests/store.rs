mod common;

use std::sync::{Arc, Barrier};

use elseg_core::annotate::Status;
use elseg_core::imagecore::{save_pgm, Image};
use elseg_review::store::{read_audit, AUDIT_FILE};
use elseg_review::{replay_audit, AuditKind, Decision, ReviewError, ReviewStore};

fn accept(version: u64) -> Decision {
    Decision {
        expected_version: version,
        status: Status::Gold,
        polygons: None,
        note: None,
    }
}

#[test]
fn reload_reproduces_state() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("store");
    let store = ReviewStore::create(&root, common::items(&dir.path().join("src"), 5)).unwrap();
    store.record_decision("cell01", accept(1)).unwrap();
    store
        .record_decision(
            "cell02",
            Decision {
                polygons: Some(vec![common::square(1.5, 2.25, 4.125)]),
                note: Some("tightened".into()),
                ..accept(1)
            },
        )
        .unwrap();
    store
        .record_decision("cell03", Decision { status: Status::Rejected, ..accept(1) })
        .unwrap();
    let before = store.records();
    let stats = store.stats();
    drop(store);

    let reopened = ReviewStore::open(&root).unwrap();
    assert_eq!(reopened.records(), before);
    assert_eq!(reopened.stats(), stats);
    assert_eq!((stats.gold, stats.rejected, stats.silver, stats.decisions), (2, 1, 2, 3));
    assert!(reopened.ids().all(|id| reopened.image_path(id).unwrap().is_file()));
}

#[test]
fn audit_replay_reconstructs_records() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("store");
    let store = ReviewStore::create(&root, common::items(&dir.path().join("src"), 4)).unwrap();
    store.record_decision("cell00", accept(1)).unwrap();
    store
        .record_decision("cell00", Decision { polygons: Some(vec![]), ..accept(2) })
        .unwrap();
    store
        .record_decision("cell02", Decision { status: Status::Rejected, ..accept(1) })
        .unwrap();

    let replayed = replay_audit(&root).unwrap();
    let current: Vec<_> = store.records();
    assert_eq!(replayed.into_values().collect::<Vec<_>>(), current);

    let entries = read_audit(&root.join(AUDIT_FILE)).unwrap();
    assert_eq!(entries.iter().filter(|e| e.kind == AuditKind::Import).count(), 4);
    assert_eq!(entries.iter().filter(|e| e.kind == AuditKind::Decision).count(), 3);
    assert!(entries.windows(2).all(|w| w[0].seq < w[1].seq && w[0].at < w[1].at));
}

#[test]
fn out_of_order_audit_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("store");
    ReviewStore::create(&root, common::items(&dir.path().join("src"), 2)).unwrap();
    let path = root.join(AUDIT_FILE);
    let text = std::fs::read_to_string(&path).unwrap();
    let reversed: Vec<&str> = text.lines().rev().collect();
    std::fs::write(&path, reversed.join("\n")).unwrap();
    assert!(matches!(replay_audit(&root), Err(ReviewError::Corrupt { .. })));
}

#[test]
fn version_and_transition_errors() {
    let dir = tempfile::tempdir().unwrap();
    let store = ReviewStore::create(dir.path().join("s"), common::items(&dir.path().join("src"), 2)).unwrap();
    let r = store.record_decision("cell00", accept(1)).unwrap();
    assert_eq!((r.version, r.status), (2, Status::Gold));

    let err = store.record_decision("cell00", accept(1)).unwrap_err();
    assert!(matches!(err, ReviewError::Conflict { expected: 1, current: 2, .. }), "{err}");
    let err = store
        .record_decision("cell00", Decision { status: Status::Rejected, ..accept(2) })
        .unwrap_err();
    assert!(matches!(err, ReviewError::Invalid(_)), "{err}");
    let err = store
        .record_decision("cell01", Decision { polygons: Some(vec![common::square(30.0, 30.0, 5.0)]), ..accept(1) })
        .unwrap_err();
    assert!(matches!(err, ReviewError::Invalid(_)), "{err}");
    assert!(matches!(store.record_decision("nope", accept(1)), Err(ReviewError::NotFound(_))));
    // Failed attempts leave the record untouched.
    assert_eq!(store.get("cell01").unwrap().version, 1);
    assert_eq!(store.get("cell00").unwrap().version, 2);
}

#[test]
fn concurrent_writers_one_winner() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(ReviewStore::create(dir.path().join("s"), common::items(&dir.path().join("src"), 1)).unwrap());
    let barrier = Arc::new(Barrier::new(8));
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let (store, barrier) = (store.clone(), barrier.clone());
            std::thread::spawn(move || {
                barrier.wait();
                store.record_decision("cell00", accept(1))
            })
        })
        .collect();
    let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(results.iter().filter(|r| r.is_ok()).count(), 1);
    assert!(results.iter().filter_map(|r| r.as_ref().err()).all(|e| matches!(e, ReviewError::Conflict { .. })));
    assert_eq!(store.get("cell00").unwrap().version, 2);
}

#[test]
fn missing_image_fails_open() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("s");
    let store = ReviewStore::create(&root, common::items(&dir.path().join("src"), 2)).unwrap();
    let image = store.image_path("cell01").unwrap();
    drop(store);
    std::fs::remove_file(image).unwrap();
    assert!(matches!(ReviewStore::open(&root), Err(ReviewError::Corrupt { .. })));
}

#[test]
fn create_refuses_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let mut items = common::items(&dir.path().join("src"), 2);
    items[1].0.image_id = items[0].0.image_id.clone();
    assert!(matches!(ReviewStore::create(dir.path().join("a"), items), Err(ReviewError::Invalid(_))));

    let mut items = common::items(&dir.path().join("src"), 1);
    items[0].0.image_id = "../escape".into();
    assert!(matches!(ReviewStore::create(dir.path().join("b"), items), Err(ReviewError::Invalid(_))));

    ReviewStore::create(dir.path().join("c"), vec![]).unwrap();
    assert!(matches!(ReviewStore::create(dir.path().join("c"), vec![]), Err(ReviewError::Invalid(_))));
}

#[test]
fn pgm_sources_become_png() {
    let dir = tempfile::tempdir().unwrap();
    let mut items = common::items(&dir.path().join("src"), 1);
    let pgm = dir.path().join("src/cell00.pgm");
    save_pgm(&Image::from_fn(32, 32, |x, _| (x * 8) as f64), &pgm).unwrap();
    items[0].1 = pgm;
    let store = ReviewStore::create(dir.path().join("s"), items).unwrap();
    let bytes = std::fs::read(store.image_path("cell00").unwrap()).unwrap();
    assert!(bytes.starts_with(&[0x89, b'P', b'N', b'G']));
}

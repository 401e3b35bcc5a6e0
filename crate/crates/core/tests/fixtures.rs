mod common;

use common::fixture;
use rcscore::corpus::{load_annotations, validate_file, RecordKind};
use rcscore::score::{rcscore, ScoringConfigs};

#[test]
fn fixture_files_validate() {
    for (name, kind, rows) in [
        ("problems.jsonl", RecordKind::Problems, 3),
        ("annotated_docs.jsonl", RecordKind::Annotations, 3),
        ("crs_beam.jsonl", RecordKind::CrsRows, 40),
        ("crs_greedy.jsonl", RecordKind::CrsRows, 40),
        ("accuracy_beam.jsonl", RecordKind::AccuracyCells, 160),
        ("accuracy_greedy.jsonl", RecordKind::AccuracyCells, 160),
    ] {
        assert_eq!(validate_file(fixture(name), kind).unwrap(), rows, "{name}");
    }
}

#[test]
fn annotation_header_is_read() {
    let (header, docs) = load_annotations(fixture("annotated_docs.jsonl")).unwrap();
    assert_eq!(header.unwrap().header["producer"], "hand-written");
    assert!(docs.iter().all(|d| d.is_fully_annotated()));
}

#[test]
fn distinct_fixture_documents_score_below_one() {
    let (_, docs) = load_annotations(fixture("annotated_docs.jsonl")).unwrap();
    let cfg = ScoringConfigs::default();
    for a in &docs {
        for b in &docs {
            let v = rcscore(a, b, &cfg).unwrap();
            if a.problem_id == b.problem_id {
                assert_eq!(v.overall, 1.0);
            } else {
                assert!(v.overall < 0.6, "{} vs {}: {v:?}", a.problem_id, b.problem_id);
            }
        }
    }
}

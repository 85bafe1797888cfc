use std::path::Path;

use feds_core::aggregation::{build_class_centroids, ClassPooling, DocumentEmbedding};
use feds_core::ingestion::IngestMode;
use feds_core::store::{read_store, write_store};
use feds_core::{ingest_manifest, mean_pool, mock_embed, weighted_pool, Error, Manifest, MockProvider, SampleStore, WeightVector};
use tempfile::TempDir;

fn page(dir: &Path, name: &str, bytes: &[u8]) {
    std::fs::write(dir.join(name), bytes).unwrap();
}

fn corpus() -> TempDir {
    let dir = TempDir::new().unwrap();
    page(dir.path(), "p0.png", b"first page");
    page(dir.path(), "p1.png", b"second page");
    page(dir.path(), "p2.png", b"third page");
    page(dir.path(), "q.png", b"a letter");
    page(dir.path(), "r.png", b"a form");
    dir
}

const THREE_DOCS: &str = r#"{
  "dim": 24,
  "provider": {"kind": "mock"},
  "documents": [
    {"doc_id": "inv", "label": "invoice", "pages": [{"path": "p0.png"}, {"path": "p1.png", "text_hint": "totals"}, {"path": "p2.png"}], "page_weights": [3, 1, 1]},
    {"doc_id": "let", "label": "letter", "pages": [{"path": "q.png"}], "page_weights": [1]},
    {"doc_id": "frm", "label": "form", "pages": [{"path": "r.png"}], "page_weights": [2]}
  ]
}"#;

fn load(dir: &Path, text: &str) -> Manifest {
    let path = dir.join("manifest.json");
    std::fs::write(&path, text).unwrap();
    Manifest::load(&path).unwrap()
}

fn labeled(report: feds_core::ingestion::IngestReport) -> Vec<(u64, String, DocumentEmbedding)> {
    report
        .documents
        .into_iter()
        .map(|(pos, doc, label)| (pos as u64, label.unwrap(), doc))
        .collect()
}

#[test]
fn labels_survive_ingest_store_round_trip() {
    let dir = corpus();
    let manifest = load(dir.path(), THREE_DOCS);
    let provider = MockProvider::new(24).unwrap();
    let report = ingest_manifest(&manifest, &provider, IngestMode::Mean).unwrap();
    assert!(report.failures.is_empty());
    let docs = labeled(report);

    let pairs: Vec<(DocumentEmbedding, String)> = docs.iter().map(|(_, l, d)| (d.clone(), l.clone())).collect();
    let centroids = build_class_centroids(&pairs, &ClassPooling::Mean).unwrap();
    let store = SampleStore::from_documents(24, &docs, centroids).unwrap();
    let path = dir.path().join("out.feds");
    write_store(&path, &store).unwrap();
    let back = read_store(&path).unwrap();

    assert_eq!(back, store);
    let labels: Vec<&str> = back.samples().iter().map(|s| s.label.as_str()).collect();
    assert_eq!(labels, ["invoice", "letter", "form"]);
    assert_eq!(back.samples()[0].vector, docs[0].2.vector);
}

#[test]
fn pooled_vectors_match_direct_computation() {
    let dir = corpus();
    let manifest = load(dir.path(), THREE_DOCS);
    let provider = MockProvider::new(24).unwrap();
    let pages = [
        mock_embed(b"first page", None, 24),
        mock_embed(b"second page", Some("totals"), 24),
        mock_embed(b"third page", None, 24),
    ];

    let mean = ingest_manifest(&manifest, &provider, IngestMode::Mean).unwrap();
    assert_eq!(mean.documents[0].1.vector, mean_pool(&pages).unwrap());
    assert_eq!(mean.documents[0].1.page_count, 3);

    let weighted = ingest_manifest(&manifest, &provider, IngestMode::Weighted).unwrap();
    let w = WeightVector::new(vec![3.0, 1.0, 1.0]).unwrap();
    assert_eq!(weighted.documents[0].1.vector, weighted_pool(&pages, &w).unwrap());
}

#[test]
fn page_listing_order_does_not_matter() {
    let dir = corpus();
    let ordered = load(dir.path(), THREE_DOCS);
    let shuffled = load(
        dir.path(),
        &THREE_DOCS.replace(
            r#"[{"path": "p0.png"}, {"path": "p1.png", "text_hint": "totals"}, {"path": "p2.png"}], "page_weights": [3, 1, 1]"#,
            r#"[{"path": "p2.png", "page_index": 2}, {"path": "p0.png", "page_index": 0}, {"path": "p1.png", "text_hint": "totals", "page_index": 1}], "page_weights": [1, 3, 1]"#,
        ),
    );
    assert_ne!(ordered.documents[0].pages, shuffled.documents[0].pages);
    let provider = MockProvider::new(24).unwrap();
    for mode in [IngestMode::Mean, IngestMode::Weighted] {
        let a = ingest_manifest(&ordered, &provider, mode).unwrap();
        let b = ingest_manifest(&shuffled, &provider, mode).unwrap();
        assert_eq!(a.documents[0].1.vector, b.documents[0].1.vector, "{mode:?}");
    }
}

#[test]
fn one_bad_document_does_not_stop_the_rest() {
    let dir = corpus();
    let manifest = load(dir.path(), &THREE_DOCS.replace("q.png", "missing.png"));
    let report = ingest_manifest(&manifest, &MockProvider::new(24).unwrap(), IngestMode::Mean).unwrap();
    assert_eq!(report.failures.len(), 1);
    assert_eq!(report.failures[0].doc_id, "let");
    assert!(matches!(report.failures[0].error, Error::Io { .. }));
    let kept: Vec<(usize, &str)> = report.documents.iter().map(|(p, d, _)| (*p, d.doc_id.as_str())).collect();
    assert_eq!(kept, [(0, "inv"), (2, "frm")]);
}

#[test]
fn manifest_problems_are_rejected_up_front() {
    let dir = corpus();
    for (bad, why) in [
        (THREE_DOCS.replace(r#""doc_id": "frm""#, r#""doc_id": "let""#), "duplicate doc_id"),
        (THREE_DOCS.replace(r#""page_weights": [3, 1, 1]"#, r#""page_weights": [3, 1]"#), "weight count"),
        (THREE_DOCS.replace(r#""dim": 24"#, r#""dim": 0"#), "zero dim"),
        (THREE_DOCS.replace(r#"[{"path": "q.png"}]"#, "[]"), "no pages"),
        ("{".to_owned(), "syntax"),
    ] {
        let err = Manifest::from_json(&bad, dir.path()).unwrap_err();
        assert!(matches!(err, Error::InvalidManifest(_)), "{why}: {err}");
    }

    let manifest = load(dir.path(), THREE_DOCS);
    let err = ingest_manifest(&manifest, &MockProvider::new(8).unwrap(), IngestMode::Mean).unwrap_err();
    assert!(matches!(err, Error::DimensionMismatch { .. }));
}

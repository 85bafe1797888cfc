use std::path::Path;
use std::process::{Command, Output};

use feds_core::store::{read_store, write_store};
use feds_core::synthetic::{cluster_store, ClusterSpec};
use serde_json::Value;
use tempfile::TempDir;

fn feds(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_feds"))
        .args(args)
        .env_remove("FED_FORMAT")
        .env_remove("FED_STORE")
        .env_remove("FED_NPROBE")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap_or_else(|e| panic!("bad json line {l:?}: {e}")))
        .collect()
}

fn write_pages(dir: &Path) {
    std::fs::write(dir.join("inv1.png"), b"invoice page one").unwrap();
    std::fs::write(dir.join("inv2.png"), b"invoice page two").unwrap();
    std::fs::write(dir.join("letter.png"), b"dear sir or madam").unwrap();
    std::fs::write(dir.join("form.png"), b"please fill in").unwrap();
}

const MANIFEST: &str = r#"{
  "dim": 32,
  "provider": {"kind": "mock"},
  "documents": [
    {"doc_id": "a", "label": "invoice", "pages": [{"path": "inv1.png"}, {"path": "inv2.png", "text_hint": "totals"}]},
    {"doc_id": "b", "label": "letter", "pages": [{"path": "letter.png"}]},
    {"doc_id": "c", "label": "form", "pages": [{"path": "form.png"}]}
  ]
}"#;

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synthetic_store(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("synthetic.feds");
    write_store(&path, &cluster_store(&ClusterSpec::default()).unwrap()).unwrap();
    path
}

#[test]
fn build_stores_every_labeled_document() {
    let dir = TempDir::new().unwrap();
    write_pages(dir.path());
    let manifest = dir.path().join("m.json");
    std::fs::write(&manifest, MANIFEST).unwrap();
    let store_path = dir.path().join("s.feds");

    let out = feds(&["build", "--manifest", path_str(&manifest), "--store", path_str(&store_path)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let store = read_store(&store_path).unwrap();
    assert_eq!(store.dim(), 32);
    assert_eq!(store.labels(), ["form", "invoice", "letter"]);
    let by_id: Vec<(u64, &str)> = store.samples().iter().map(|s| (s.id, s.label.as_str())).collect();
    assert_eq!(by_id, [(0, "invoice"), (1, "letter"), (2, "form")]);
    assert!(store.centroids().iter().all(|c| c.member_count == 1));

    let summary = stdout_json(&out).into_iter().find(|v| v["event"] == "built").unwrap();
    assert_eq!(summary["samples"], 3);
}

#[test]
fn build_is_deterministic() {
    let dir = TempDir::new().unwrap();
    write_pages(dir.path());
    let manifest = dir.path().join("m.json");
    std::fs::write(&manifest, MANIFEST).unwrap();
    let first = dir.path().join("1.feds");
    let second = dir.path().join("2.feds");
    for target in [&first, &second] {
        let out = feds(&["build", "--manifest", path_str(&manifest), "--store", path_str(target), "--parallelism", "3"]);
        assert!(out.status.success());
    }
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
}

#[test]
fn missing_page_fails_one_document_only() {
    let dir = TempDir::new().unwrap();
    write_pages(dir.path());
    let manifest = dir.path().join("m.json");
    std::fs::write(&manifest, MANIFEST.replace("letter.png", "gone.png")).unwrap();
    let store_path = dir.path().join("s.feds");

    let out = feds(&["build", "--manifest", path_str(&manifest), "--store", path_str(&store_path)]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("b:") && stderr.contains("gone.png"), "{stderr}");

    let store = read_store(&store_path).unwrap();
    let labels: Vec<&str> = store.samples().iter().map(|s| s.label.as_str()).collect();
    assert_eq!(labels, ["invoice", "form"]);
}

#[test]
fn build_rejects_unlabeled_manifest() {
    let dir = TempDir::new().unwrap();
    write_pages(dir.path());
    let manifest = dir.path().join("m.json");
    std::fs::write(&manifest, MANIFEST.replace(r#""label": "form", "#, "")).unwrap();
    let out = feds(&["build", "--manifest", path_str(&manifest), "--store", path_str(&dir.path().join("s.feds"))]);
    assert_eq!(out.status.code(), Some(4));
    assert!(!dir.path().join("s.feds").exists());
}

#[test]
fn classify_vector_ranks_nearest_class_first() {
    let dir = TempDir::new().unwrap();
    let store_path = synthetic_store(dir.path());
    let store = read_store(&store_path).unwrap();
    let w2 = store.centroids().iter().find(|c| c.label == "w2").unwrap();
    let text: Vec<String> = w2.vector.values().iter().map(|x| x.to_string()).collect();

    for measure in ["cosine", "l2"] {
        let out = feds(&["classify", "--store", path_str(&store_path), "--vector", &text.join(","), "--measure", measure]);
        assert!(out.status.success());
        let lines = stdout_json(&out);
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0]["predicted_label"], "w2");
        let ranking = lines[0]["ranking"].as_array().unwrap();
        assert_eq!(ranking.len(), 5);
        assert_eq!(ranking[0]["label"], "w2");
    }
}

#[test]
fn classify_zero_vector_names_the_query() {
    let dir = TempDir::new().unwrap();
    let store_path = synthetic_store(dir.path());
    let zeros = vec!["0"; 64].join(",");
    let out = feds(&["classify", "--store", path_str(&store_path), "--vector", &zeros]);
    assert_eq!(out.status.code(), Some(4));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("vector") && stderr.contains("zero-norm"), "{stderr}");
}

#[test]
fn classify_rejects_wrong_dimension() {
    let dir = TempDir::new().unwrap();
    let store_path = synthetic_store(dir.path());
    let out = feds(&["classify", "--store", path_str(&store_path), "--vector", "1,2,3"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn classify_manifest_matches_training_labels() {
    let dir = TempDir::new().unwrap();
    write_pages(dir.path());
    let manifest = dir.path().join("m.json");
    std::fs::write(&manifest, MANIFEST).unwrap();
    let store_path = dir.path().join("s.feds");
    assert!(feds(&["build", "--manifest", path_str(&manifest), "--store", path_str(&store_path)]).status.success());

    let out = feds(&["classify", "--store", path_str(&store_path), "--manifest", path_str(&manifest)]);
    assert!(out.status.success());
    let got: Vec<(String, String)> = stdout_json(&out)
        .iter()
        .map(|v| (v["doc_id"].as_str().unwrap().to_owned(), v["predicted_label"].as_str().unwrap().to_owned()))
        .collect();
    let want = [("a", "invoice"), ("b", "letter"), ("c", "form")].map(|(d, l)| (d.to_owned(), l.to_owned()));
    assert_eq!(got, want);

    let again = feds(&["classify", "--store", path_str(&store_path), "--manifest", path_str(&manifest), "--parallelism", "1"]);
    assert_eq!(again.stdout, out.stdout);
}

#[test]
fn evaluate_reports_consistent_json_and_table() {
    let dir = TempDir::new().unwrap();
    let store_path = synthetic_store(dir.path());

    let out = feds(&["evaluate", "--store", path_str(&store_path)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = &stdout_json(&out)[0];
    for key in ["accuracy", "precision", "recall", "f1"] {
        assert!(report[key].as_f64().unwrap() >= 0.99, "{key} = {}", report[key]);
    }
    assert_eq!(report["split"]["test"], 40);
    assert_eq!(report["averaging"], "macro");

    let table = feds(&["--format", "table", "evaluate", "--store", path_str(&store_path)]);
    let text = String::from_utf8_lossy(&table.stdout);
    assert!(text.contains("averaging: macro"), "{text}");
    assert!(text.contains(&format!("{:.4}", report["accuracy"].as_f64().unwrap())), "{text}");
}

#[test]
fn evaluate_rejects_bad_fractions() {
    let dir = TempDir::new().unwrap();
    let store_path = synthetic_store(dir.path());
    for args in [["--train", "0.8", "--val", "0.2", "--test", "0.2"], ["--train", "-0.1", "--val", "0.5", "--test", "0.6"]] {
        let mut full = vec!["evaluate", "--store", path_str(&store_path)];
        full.extend(args);
        assert_eq!(feds(&full).status.code(), Some(4), "{args:?}");
    }
}

#[test]
fn bench_is_exact_when_probing_every_list() {
    let dir = TempDir::new().unwrap();
    let store_path = synthetic_store(dir.path());
    let index = dir.path().join("index.feds");
    let out = feds(&[
        "bench", "--store", path_str(&store_path), "--nlist", "8", "--nprobe", "8,1,2,2", "--k", "5", "--queries", "50",
        "--index-out", path_str(&index),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = stdout_json(&out);
    assert_eq!(lines[0]["nlist"], 8);
    let rows: Vec<(u64, f64)> = lines[1..]
        .iter()
        .map(|v| (v["nprobe"].as_u64().unwrap(), v["recall"].as_f64().unwrap()))
        .collect();
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), [1, 2, 8]);
    assert_eq!(rows[2].1, 1.0);
    assert!(rows.windows(2).all(|w| w[0].1 <= w[1].1), "{rows:?}");
    assert!(index.exists());
}

#[test]
fn bench_needs_nprobe_values() {
    let dir = TempDir::new().unwrap();
    let store_path = synthetic_store(dir.path());
    let out = feds(&["bench", "--store", path_str(&store_path), "--nprobe"]);
    assert_eq!(out.status.code(), Some(4));
    let out = feds(&["bench", "--store", path_str(&store_path), "--nlist", "4", "--nprobe", "5"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn inspect_lists_sections_and_counts() {
    let dir = TempDir::new().unwrap();
    let store_path = synthetic_store(dir.path());
    let out = feds(&["inspect", "--store", path_str(&store_path)]);
    assert!(out.status.success());
    let info = &stdout_json(&out)[0];
    assert_eq!(info["dim"], 64);
    assert_eq!(info["sections"]["samples"], 200);
    assert_eq!(info["sections"]["centroids"], 5);
    for class in info["classes"].as_array().unwrap() {
        assert_eq!(class["samples"], 40);
        assert_eq!(class["centroid_members"], 40);
    }
}

#[test]
fn corrupt_store_is_an_io_failure() {
    let dir = TempDir::new().unwrap();
    let store_path = synthetic_store(dir.path());
    let mut bytes = std::fs::read(&store_path).unwrap();
    bytes[40] ^= 0x10;
    std::fs::write(&store_path, bytes).unwrap();
    let out = feds(&["inspect", "--store", path_str(&store_path)]);
    assert_eq!(out.status.code(), Some(2));
    let out = feds(&["inspect", "--store", path_str(&dir.path().join("absent.feds"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_are_validation_failures() {
    assert_eq!(feds(&["classify", "--store", "x.feds"]).status.code(), Some(4));
    assert_eq!(feds(&["--parallelism", "0", "inspect", "--store", "x.feds"]).status.code(), Some(4));
    assert_eq!(feds(&["--help"]).status.code(), Some(0));
}

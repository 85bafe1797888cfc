use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use feds_core::aggregation::{build_class_centroids, ClassPooling, DocumentEmbedding};
use feds_core::classifier::{classify_batch, ClassificationResult};
use feds_core::error::{Error, ErrorCategory};
use feds_core::eval::{format_table, run_evaluation, Averaging, SplitSpec};
use feds_core::ingestion::{embed_page, ingest_manifest, HttpProvider, IngestMode, Manifest, MockProvider, PagePayload};
use feds_core::store::{read_store, write_store, FedsFile, SampleStore};
use feds_core::vector_index::{recall, FlatIndex, IvfFlatIndex};
use feds_core::{build_document_embedding, EmbeddingProvider, EmbeddingVector, PagePooling, SimilarityMeasure};
use rand::seq::SliceRandom;
use serde_json::{json, Value};

use crate::{AggregationArg, OutputFormat, ProviderArgs, EXIT_INTERNAL, EXIT_IO, EXIT_PROVIDER, EXIT_VALIDATION};

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }
}

pub fn exit_code(error: &Error) -> u8 {
    match error.category() {
        ErrorCategory::Io => EXIT_IO,
        ErrorCategory::Provider => EXIT_PROVIDER,
        ErrorCategory::Validation => EXIT_VALIDATION,
        ErrorCategory::Internal => EXIT_INTERNAL,
    }
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Self {
            code: exit_code(&error),
            message: error.to_string(),
        }
    }
}

fn emit(value: &Value) {
    println!("{value}");
}

fn ingest_mode(aggregation: AggregationArg) -> IngestMode {
    match aggregation {
        AggregationArg::Mean => IngestMode::Mean,
        AggregationArg::Weighted => IngestMode::Weighted,
    }
}

pub fn build(
    manifest_path: &Path,
    store_path: &Path,
    aggregation: AggregationArg,
    provider_args: &ProviderArgs,
    format: OutputFormat,
) -> Result<u8, Failure> {
    let manifest = Manifest::load(manifest_path)?;
    manifest.require_labels()?;
    let provider = manifest.provider(provider_args.retries, Duration::from_secs(provider_args.timeout_secs))?;
    let report = ingest_manifest(&manifest, provider.as_ref(), ingest_mode(aggregation))?;

    for failure in &report.failures {
        eprintln!("failed: {}: {}", failure.doc_id, failure.error);
        if format == OutputFormat::Json {
            emit(&json!({
                "event": "failure",
                "doc_id": failure.doc_id,
                "error": failure.error.to_string(),
                "exit_code": exit_code(&failure.error),
            }));
        }
    }
    let first_failure_code = report.failures.first().map(|f| exit_code(&f.error));
    if report.documents.is_empty() {
        return Err(Failure {
            code: first_failure_code.unwrap_or(EXIT_VALIDATION),
            message: "no documents could be embedded; store not written".into(),
        });
    }

    let labeled: Vec<(DocumentEmbedding, String)> = report
        .documents
        .iter()
        .map(|(_, doc, label)| (doc.clone(), label.clone().expect("labels checked")))
        .collect();
    let centroids = build_class_centroids(&labeled, &ClassPooling::Mean)?;
    let documents: Vec<(u64, String, DocumentEmbedding)> = report
        .documents
        .into_iter()
        .map(|(pos, doc, label)| (pos as u64, label.expect("labels checked"), doc))
        .collect();
    let store = SampleStore::from_documents(manifest.dim, &documents, centroids)?;
    write_store(store_path, &store)?;

    match format {
        OutputFormat::Json => {
            for (pos, _, doc) in &documents {
                emit(&json!({"event": "sample", "id": pos, "doc_id": doc.doc_id, "pages": doc.page_count}));
            }
            emit(&json!({
                "event": "built",
                "store": store_path,
                "dim": store.dim(),
                "samples": store.samples().len(),
                "failures": report.failures.len(),
                "classes": store.centroids().iter().map(|c| json!({"label": c.label, "members": c.member_count})).collect::<Vec<_>>(),
            }));
        }
        OutputFormat::Table => {
            println!("store: {}", store_path.display());
            println!("samples: {}  failures: {}", store.samples().len(), report.failures.len());
            let width = store.centroids().iter().map(|c| c.label.len()).max().unwrap_or(5).max(5);
            println!("{:<width$}  members", "class");
            for c in store.centroids() {
                println!("{:<width$}  {}", c.label, c.member_count);
            }
        }
    }
    Ok(first_failure_code.unwrap_or(0))
}

pub enum ClassifyInput {
    Manifest(PathBuf),
    Vector(String),
    Page {
        path: PathBuf,
        text_hint: Option<String>,
        provider_url: Option<String>,
    },
}

fn parse_vector(text: &str) -> Result<EmbeddingVector, Failure> {
    let values = text
        .split(',')
        .map(|s| s.trim().parse::<f32>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::validation(format!("bad --vector: {e}")))?;
    EmbeddingVector::new(values).map_err(|e| Failure::validation(format!("bad --vector: {e}")))
}

fn result_json(doc_id: &str, result: &ClassificationResult) -> Value {
    json!({
        "doc_id": doc_id,
        "predicted_label": result.predicted_label,
        "measure": result.measure,
        "query_dim": result.query_dim,
        "ranking": result.ranking,
    })
}

pub fn classify(
    store_path: &Path,
    input: ClassifyInput,
    measure: SimilarityMeasure,
    aggregation: AggregationArg,
    provider_args: &ProviderArgs,
    format: OutputFormat,
) -> Result<u8, Failure> {
    let store = read_store(store_path)?;
    if store.centroids().is_empty() {
        return Err(Error::NoClasses.into());
    }
    let timeout = Duration::from_secs(provider_args.timeout_secs);

    let mut failures: Vec<(String, Error)> = Vec::new();
    let queries: Vec<(String, EmbeddingVector)> = match input {
        ClassifyInput::Vector(text) => vec![("vector".to_owned(), parse_vector(&text)?)],
        ClassifyInput::Page {
            path,
            text_hint,
            provider_url,
        } => {
            let provider: Box<dyn EmbeddingProvider> = match provider_url {
                Some(url) => Box::new(HttpProvider::new(&url, store.dim(), provider_args.retries, timeout)),
                None => Box::new(MockProvider::new(store.dim())?),
            };
            let content = std::fs::read(&path).map_err(|e| Failure {
                code: EXIT_IO,
                message: format!("{}: {e}", path.display()),
            })?;
            let doc_id = path.display().to_string();
            let payload = PagePayload {
                doc_id: doc_id.clone(),
                page_index: 0,
                content,
                text_hint,
            };
            let page = embed_page(provider.as_ref(), &payload)?;
            let doc = build_document_embedding(&[page], &PagePooling::Mean)?;
            vec![(doc_id, doc.vector)]
        }
        ClassifyInput::Manifest(path) => {
            let manifest = Manifest::load(&path)?;
            if manifest.dim != store.dim() {
                return Err(Error::DimensionMismatch {
                    expected: store.dim(),
                    actual: manifest.dim,
                }
                .into());
            }
            let provider = manifest.provider(provider_args.retries, timeout)?;
            let report = ingest_manifest(&manifest, provider.as_ref(), ingest_mode(aggregation))?;
            failures.extend(report.failures.into_iter().map(|f| (f.doc_id, f.error)));
            report
                .documents
                .into_iter()
                .map(|(_, doc, _)| (doc.doc_id, doc.vector))
                .collect()
        }
    };

    for (doc_id, result) in classify_batch(&queries, store.centroids(), measure) {
        match result {
            Ok(result) => match format {
                OutputFormat::Json => emit(&result_json(&doc_id, &result)),
                OutputFormat::Table => {
                    println!("{doc_id}: {} ({})", result.predicted_label, result.measure);
                    for (rank, r) in result.ranking.iter().enumerate() {
                        println!("  {:>2}. {:<20} {:.6}", rank + 1, r.label, r.score);
                    }
                }
            },
            Err(e) => failures.push((doc_id, e.error)),
        }
    }

    for (doc_id, error) in &failures {
        eprintln!("failed: {doc_id}: {error}");
        if format == OutputFormat::Json {
            emit(&json!({"doc_id": doc_id, "error": error.to_string(), "exit_code": exit_code(error)}));
        }
    }
    Ok(failures.first().map(|(_, e)| exit_code(e)).unwrap_or(0))
}

pub fn evaluate(
    store_path: &Path,
    fractions: [f64; 3],
    seed: u64,
    measure: SimilarityMeasure,
    averaging: Averaging,
    format: OutputFormat,
) -> Result<u8, Failure> {
    let spec = SplitSpec::new(fractions[0], fractions[1], fractions[2], seed)?;
    let store = read_store(store_path)?;
    let outcome = run_evaluation(&store, &spec, measure, averaging)?;
    let method = format!("nearest-centroid ({measure}, mean)");
    let r = &outcome.report;
    match format {
        OutputFormat::Json => emit(&json!({
            "method": method,
            "measure": measure,
            "averaging": r.averaging,
            "accuracy": r.accuracy,
            "precision": r.precision,
            "recall": r.recall,
            "f1": r.f1,
            "per_class": r.per_class,
            "confusion": {
                "labels": outcome.confusion.labels(),
                "counts": outcome.confusion.counts(),
            },
            "split": {
                "seed": spec.seed,
                "fractions": fractions,
                "train": outcome.split.train.len(),
                "val": outcome.split.val.len(),
                "test": outcome.split.test.len(),
                "val_used": false,
            },
        })),
        OutputFormat::Table => print!("{}", format_table(&method, r)),
    }
    Ok(0)
}

pub struct BenchParams {
    pub nlist: usize,
    pub nprobe: Vec<usize>,
    pub k: usize,
    pub queries: usize,
    pub seed: u64,
    pub measure: SimilarityMeasure,
    pub index_out: Option<PathBuf>,
}

pub fn bench(store_path: &Path, params: BenchParams, format: OutputFormat) -> Result<u8, Failure> {
    let mut nprobes = params.nprobe.clone();
    if nprobes.is_empty() {
        return Err(Failure::validation("--nprobe needs at least one value"));
    }
    if params.k == 0 || params.queries == 0 {
        return Err(Failure::validation("--k and --queries must be positive"));
    }
    if let Some(&bad) = nprobes.iter().find(|&&p| p == 0 || p > params.nlist) {
        return Err(Error::BadNprobe {
            nprobe: bad,
            nlist: params.nlist,
        }
        .into());
    }
    nprobes.sort_unstable();
    nprobes.dedup();

    let store = read_store(store_path)?;
    if store.samples().is_empty() {
        return Err(Failure::validation("store has no samples"));
    }
    let label_id = |label: &str| store.label_id(label).expect("store labels are consistent");

    let vectors: Vec<EmbeddingVector> = store.samples().iter().map(|s| s.vector.clone()).collect();
    let build_started = Instant::now();
    let mut ivf = IvfFlatIndex::train(&vectors, params.nlist, params.seed)?;
    let mut flat = FlatIndex::new(store.dim());
    for s in store.samples() {
        ivf.add(s.id, s.vector.clone(), label_id(&s.label))?;
        flat.add(s.id, s.vector.clone(), label_id(&s.label))?;
    }
    let build_ms = build_started.elapsed().as_secs_f64() * 1e3;
    if let Some(path) = &params.index_out {
        ivf.save(path)?;
    }

    let mut order: Vec<usize> = (0..store.samples().len()).collect();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(params.seed);
    order.shuffle(&mut rng);
    let queries: Vec<&EmbeddingVector> = order
        .iter()
        .take(params.queries)
        .map(|&i| &store.samples()[i].vector)
        .collect();

    let started = Instant::now();
    let truths = queries
        .iter()
        .map(|q| flat.search(q, params.k, params.measure))
        .collect::<Result<Vec<_>, _>>()?;
    let flat_us = started.elapsed().as_secs_f64() * 1e6 / queries.len() as f64;

    let mut rows = Vec::new();
    for &nprobe in &nprobes {
        let started = Instant::now();
        let mut total = 0.0;
        for (q, truth) in queries.iter().zip(&truths) {
            total += recall(truth, &ivf.search(q, params.k, nprobe, params.measure)?);
        }
        let us = started.elapsed().as_secs_f64() * 1e6 / queries.len() as f64;
        rows.push((nprobe, total / queries.len() as f64, us));
    }

    match format {
        OutputFormat::Json => {
            emit(&json!({
                "event": "bench",
                "samples": store.samples().len(),
                "nlist": params.nlist,
                "k": params.k,
                "queries": queries.len(),
                "measure": params.measure,
                "build_ms": build_ms,
                "flat_us_per_query": flat_us,
            }));
            for (nprobe, r, us) in &rows {
                emit(&json!({"nprobe": nprobe, "recall": r, "ivf_us_per_query": us}));
            }
        }
        OutputFormat::Table => {
            println!(
                "samples {}  nlist {}  k {}  queries {}  measure {}  build {:.1} ms",
                store.samples().len(),
                params.nlist,
                params.k,
                queries.len(),
                params.measure,
                build_ms
            );
            println!("flat: {flat_us:.1} us/query");
            println!("{:>6}  {:>8}  {:>12}", "nprobe", "recall", "us/query");
            for (nprobe, r, us) in &rows {
                println!("{nprobe:>6}  {r:>8.4}  {us:>12.1}");
            }
        }
    }
    Ok(0)
}

pub fn inspect(path: &Path, format: OutputFormat) -> Result<u8, Failure> {
    let file = FedsFile::read_from(path)?;
    let size = std::fs::metadata(path).map(|m| m.len()).unwrap_or(0);
    let counts: Vec<(String, usize, Option<u32>)> = file
        .labels
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let samples = file.samples.iter().filter(|s| s.label_id as usize == i).count();
            let members = file.centroids.iter().find(|c| c.label_id as usize == i).map(|c| c.member_count);
            (label.clone(), samples, members)
        })
        .collect();
    match format {
        OutputFormat::Json => emit(&json!({
            "path": path,
            "bytes": size,
            "magic": "FED1",
            "dim": file.dim,
            "labels": file.labels,
            "sections": {
                "samples": file.samples.len(),
                "centroids": file.centroids.len(),
                "ivf_assignments": file.assignments.len(),
            },
            "classes": counts.iter().map(|(l, s, m)| json!({"label": l, "samples": s, "centroid_members": m})).collect::<Vec<_>>(),
        })),
        OutputFormat::Table => {
            println!("{}: FED1, {size} bytes, dim {}", path.display(), file.dim);
            println!(
                "sections: samples {}, centroids {}, ivf_assignments {}",
                file.samples.len(),
                file.centroids.len(),
                file.assignments.len()
            );
            let width = file.labels.iter().map(String::len).max().unwrap_or(5).max(5);
            println!("{:<width$}  {:>7}  {:>8}", "label", "samples", "centroid");
            for (label, samples, members) in &counts {
                let members = members.map(|m| m.to_string()).unwrap_or_else(|| "-".into());
                println!("{label:<width$}  {samples:>7}  {members:>8}");
            }
        }
    }
    Ok(0)
}

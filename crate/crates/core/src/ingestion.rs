//! Turning documents into embeddings: page payloads go through an
//! [`EmbeddingProvider`], page vectors are pooled per document.

use std::path::{Path, PathBuf};
use std::time::Duration;

use base64::Engine;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregation::{build_document_embedding, DocumentEmbedding, PageEmbedding, PagePooling, WeightVector};
use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};

/// One rendered page of one document.
#[derive(Debug, Clone, PartialEq)]
pub struct PagePayload {
    pub doc_id: String,
    pub page_index: u32,
    pub content: Vec<u8>,
    pub text_hint: Option<String>,
}

pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, content: &[u8], text_hint: Option<&str>) -> Result<Vec<f32>>;
}

/// Embeds one page and checks the provider kept its contract.
pub fn embed_page(provider: &dyn EmbeddingProvider, payload: &PagePayload) -> Result<PageEmbedding> {
    if payload.content.is_empty() {
        return Err(Error::ContentRejected(format!(
            "page {} of {:?} is empty",
            payload.page_index, payload.doc_id
        )));
    }
    let values = provider.embed(&payload.content, payload.text_hint.as_deref())?;
    if values.len() != provider.dim() {
        return Err(Error::ProviderBadResponse(format!(
            "{} returned {} components, expected {}",
            provider.name(),
            values.len(),
            provider.dim()
        )));
    }
    let vector = EmbeddingVector::new(values)
        .map_err(|e| Error::ProviderBadResponse(format!("{}: {e}", provider.name())))?;
    Ok(PageEmbedding {
        vector,
        page_index: payload.page_index,
        source_id: payload.doc_id.clone(),
    })
}

// Mock embedder

/// splitmix64 output stream.
struct SplitMix64(u64);

impl Iterator for SplitMix64 {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Some(z ^ (z >> 31))
    }
}

/// Seed for the mock embedder: the first 8 bytes of
/// `SHA-256(content || 0x00 || hint)`, read little-endian.
pub fn mock_seed(content: &[u8], text_hint: Option<&str>) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(content);
    hasher.update([0u8]);
    if let Some(hint) = text_hint {
        hasher.update(hint.as_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// The raw `u64` stream the mock maps into vector components.
pub fn mock_stream(content: &[u8], text_hint: Option<&str>, dim: usize) -> Vec<u64> {
    SplitMix64(mock_seed(content, text_hint)).take(dim).collect()
}

/// Deterministic unit-norm pseudo-embedding of a byte payload. Each stream
/// word maps to `[-1, 1)` through its top 53 bits.
pub fn mock_embed(content: &[u8], text_hint: Option<&str>, dim: usize) -> EmbeddingVector {
    let raw: Vec<f64> = mock_stream(content, text_hint, dim)
        .into_iter()
        .map(|x| (x >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0)
        .collect();
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    let values = if norm > 0.0 {
        raw.iter().map(|x| (x / norm) as f32).collect()
    } else {
        let mut e0 = vec![0.0; dim];
        e0[0] = 1.0;
        e0
    };
    EmbeddingVector::new(values).expect("mock components are finite")
}

#[derive(Debug, Clone)]
pub struct MockProvider {
    dim: usize,
}

impl MockProvider {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidManifest("mock provider needs dim >= 2".into()));
        }
        Ok(Self { dim })
    }
}

impl EmbeddingProvider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, content: &[u8], text_hint: Option<&str>) -> Result<Vec<f32>> {
        Ok(mock_embed(content, text_hint, self.dim).into_values())
    }
}

// HTTP provider

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub content_b64: String,
    pub text_hint: Option<String>,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vector: Vec<f32>,
    pub model: String,
}

impl EmbedRequest {
    pub fn new(content: &[u8], text_hint: Option<&str>, dim: usize) -> Self {
        Self {
            content_b64: base64::engine::general_purpose::STANDARD.encode(content),
            text_hint: text_hint.map(str::to_owned),
            dim,
        }
    }
}

/// Client for the embedding sidecar: `POST {url}/embed`.
pub struct HttpProvider {
    endpoint: String,
    dim: usize,
    retries: u32,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(base_url: &str, dim: usize, retries: u32, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            endpoint: format!("{}/embed", base_url.trim_end_matches('/')),
            dim,
            retries,
            agent: config.into(),
        }
    }

    fn call_once(&self, request: &EmbedRequest) -> Result<Vec<f32>> {
        let mut response = self
            .agent
            .post(&self.endpoint)
            .send_json(request)
            .map_err(|e| Error::ProviderUnavailable(format!("{}: {e}", self.endpoint)))?;
        let status = response.status().as_u16();
        match status {
            200 => {}
            400 => {
                let body = response.body_mut().read_to_string().unwrap_or_default();
                return Err(Error::ContentRejected(format!("HTTP 400: {}", body.trim())));
            }
            other => {
                return Err(Error::ProviderUnavailable(format!("{}: HTTP {other}", self.endpoint)));
            }
        }
        let parsed: EmbedResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| Error::ProviderBadResponse(format!("unparseable body: {e}")))?;
        if parsed.vector.len() != self.dim {
            return Err(Error::ProviderBadResponse(format!(
                "model {} returned {} components, expected {}",
                parsed.model,
                parsed.vector.len(),
                self.dim
            )));
        }
        Ok(parsed.vector)
    }
}

impl EmbeddingProvider for HttpProvider {
    fn name(&self) -> &str {
        &self.endpoint
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, content: &[u8], text_hint: Option<&str>) -> Result<Vec<f32>> {
        let request = EmbedRequest::new(content, text_hint, self.dim);
        let mut attempt = 0;
        loop {
            match self.call_once(&request) {
                Err(Error::ProviderUnavailable(_)) if attempt < self.retries => attempt += 1,
                other => return other,
            }
        }
    }
}

// Manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProviderDescriptor {
    Mock,
    Http { url: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageLocator {
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_hint: Option<String>,
    /// Defaults to the page's position in the list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page_index: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestDocument {
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub pages: Vec<PageLocator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page_weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dim: usize,
    pub provider: ProviderDescriptor,
    pub documents: Vec<ManifestDocument>,
    /// Directory relative page paths resolve against; not serialized.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut manifest: Manifest =
            serde_json::from_str(text).map_err(|e| Error::InvalidManifest(e.to_string()))?;
        manifest.base_dir = base_dir.into();
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidManifest("dim must be positive".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for doc in &self.documents {
            if !seen.insert(doc.doc_id.as_str()) {
                return Err(Error::InvalidManifest(format!("duplicate doc_id {:?}", doc.doc_id)));
            }
            if doc.pages.is_empty() {
                return Err(Error::InvalidManifest(format!("document {:?} has no pages", doc.doc_id)));
            }
            if let Some(w) = &doc.page_weights {
                if w.len() != doc.pages.len() {
                    return Err(Error::InvalidManifest(format!(
                        "document {:?}: {} page weights for {} pages",
                        doc.doc_id,
                        w.len(),
                        doc.pages.len()
                    )));
                }
            }
            let mut indices = std::collections::HashSet::new();
            for (pos, page) in doc.pages.iter().enumerate() {
                if !indices.insert(page.page_index.unwrap_or(pos as u32)) {
                    return Err(Error::InvalidManifest(format!(
                        "document {:?} repeats a page index",
                        doc.doc_id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Training manifests need a label on every document.
    pub fn require_labels(&self) -> Result<()> {
        match self.documents.iter().find(|d| d.label.is_none()) {
            Some(doc) => Err(Error::InvalidManifest(format!("document {:?} has no label", doc.doc_id))),
            None => Ok(()),
        }
    }

    /// Instantiates the provider the manifest names.
    pub fn provider(&self, retries: u32, timeout: Duration) -> Result<Box<dyn EmbeddingProvider>> {
        Ok(match &self.provider {
            ProviderDescriptor::Mock => Box::new(MockProvider::new(self.dim)?),
            ProviderDescriptor::Http { url } => Box::new(HttpProvider::new(url, self.dim, retries, timeout)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IngestMode {
    #[default]
    Mean,
    Weighted,
}

#[derive(Debug)]
pub struct IngestFailure {
    pub doc_id: String,
    pub error: Error,
}

#[derive(Debug, Default)]
pub struct IngestReport {
    /// Successfully embedded documents, in manifest order, with their
    /// manifest position and label.
    pub documents: Vec<(usize, DocumentEmbedding, Option<String>)>,
    pub failures: Vec<IngestFailure>,
}

fn ingest_document(
    manifest: &Manifest,
    doc: &ManifestDocument,
    provider: &dyn EmbeddingProvider,
    mode: IngestMode,
) -> Result<DocumentEmbedding> {
    let pooling = match mode {
        IngestMode::Mean => PagePooling::Mean,
        IngestMode::Weighted => {
            let weights = doc.page_weights.clone().ok_or_else(|| {
                Error::InvalidManifest(format!("document {:?} has no page_weights", doc.doc_id))
            })?;
            PagePooling::Weighted(WeightVector::new(weights)?)
        }
    };
    let pages = doc
        .pages
        .iter()
        .enumerate()
        .map(|(pos, page)| {
            let path = manifest.base_dir.join(&page.path);
            let content = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let payload = PagePayload {
                doc_id: doc.doc_id.clone(),
                page_index: page.page_index.unwrap_or(pos as u32),
                content,
                text_hint: page.text_hint.clone(),
            };
            embed_page(provider, &payload)
        })
        .collect::<Result<Vec<_>>>()?;
    build_document_embedding(&pages, &pooling)
}

/// Embeds and pools every document. A failing document is recorded and
/// skipped; the rest proceed. Output follows manifest order.
pub fn ingest_manifest(manifest: &Manifest, provider: &dyn EmbeddingProvider, mode: IngestMode) -> Result<IngestReport> {
    if provider.dim() != manifest.dim {
        return Err(Error::DimensionMismatch {
            expected: manifest.dim,
            actual: provider.dim(),
        });
    }
    let results: Vec<Result<DocumentEmbedding>> = manifest
        .documents
        .par_iter()
        .map(|doc| ingest_document(manifest, doc, provider, mode))
        .collect();

    let mut report = IngestReport::default();
    for (pos, (doc, result)) in manifest.documents.iter().zip(results).enumerate() {
        match result {
            Ok(embedding) => report.documents.push((pos, embedding, doc.label.clone())),
            Err(error) => report.failures.push(IngestFailure {
                doc_id: doc.doc_id.clone(),
                error,
            }),
        }
    }
    Ok(report)
}

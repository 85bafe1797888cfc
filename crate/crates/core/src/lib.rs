//! Document classification by nearest class centroid over multi-modal page
//! embeddings.
//!
//! Pages are embedded by an [`ingestion::EmbeddingProvider`], pooled into
//! document embeddings, and documents of a known class are pooled into one
//! centroid per class. New documents go to the class whose centroid is most
//! similar (cosine) or closest (L2). Labeled embeddings persist in FEDS
//! files ([`store`]), and [`vector_index`] provides exact and IVF-flat
//! search over stored samples.

pub mod aggregation;
pub mod classifier;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod ingestion;
pub mod store;
pub mod synthetic;
pub mod vector_index;

pub use aggregation::{
    build_class_centroids, build_document_embedding, mean_pool, weighted_pool, AggregationKind, ClassCentroid,
    ClassPooling, DocumentEmbedding, PageEmbedding, PagePooling, WeightVector,
};
pub use classifier::{classify, classify_batch, ClassificationResult, RankedClass};
pub use embedding::{cosine_similarity, l2_distance, l2_norm, EmbeddingVector, SimilarityMeasure};
pub use error::{Error, ErrorCategory, Result};
pub use eval::{compute_metrics, run_evaluation, stratified_split, Averaging, ConfusionMatrix, MetricsReport, SplitSpec};
pub use ingestion::{embed_page, ingest_manifest, mock_embed, EmbeddingProvider, Manifest, MockProvider};
pub use store::{read_store, write_store, SampleStore, StoredSample};
pub use vector_index::{FlatIndex, IvfFlatIndex, SearchHit};

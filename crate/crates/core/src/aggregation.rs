//! Two-level pooling: page embeddings into a document embedding, document
//! embeddings into one centroid per class.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};

/// Embedding of one page of one document.
#[derive(Debug, Clone, PartialEq)]
pub struct PageEmbedding {
    pub vector: EmbeddingVector,
    pub page_index: u32,
    pub source_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationKind {
    Mean,
    Weighted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentEmbedding {
    pub vector: EmbeddingVector,
    pub doc_id: String,
    pub page_count: usize,
    pub aggregation: AggregationKind,
}

/// Nonnegative finite weights with at least one strictly positive entry.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some((index, &value)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::InvalidWeight { index, value });
        }
        if weights.iter().all(|&w| w == 0.0) {
            return Err(Error::AllZeroWeights);
        }
        Ok(Self(weights))
    }

    pub fn uniform(len: usize) -> Result<Self> {
        Self::new(vec![1.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassCentroid {
    pub vector: EmbeddingVector,
    pub label: String,
    pub member_count: u32,
}

/// How page embeddings are combined into a document embedding.
#[derive(Debug, Clone, PartialEq)]
pub enum PagePooling {
    Mean,
    /// One weight per page, aligned with the pages as passed in.
    Weighted(WeightVector),
}

/// How document embeddings are combined into class centroids.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassPooling {
    Mean,
    WeightedBy(HashMap<String, f64>),
}

fn shared_dim(items: &[&EmbeddingVector]) -> Result<usize> {
    let first = items.first().ok_or(Error::EmptyInput)?;
    let dim = first.dim();
    for item in &items[1..] {
        item.check_dim(dim)?;
    }
    Ok(dim)
}

/// Element-wise arithmetic mean, accumulated in `f64` in input order.
pub fn mean_pool<'a, I>(items: I) -> Result<EmbeddingVector>
where
    I: IntoIterator<Item = &'a EmbeddingVector>,
{
    let items: Vec<&EmbeddingVector> = items.into_iter().collect();
    let dim = shared_dim(&items)?;
    let mut sums = vec![0.0f64; dim];
    for item in &items {
        for (sum, &x) in sums.iter_mut().zip(item.values()) {
            *sum += x as f64;
        }
    }
    let count = items.len() as f64;
    EmbeddingVector::new(sums.into_iter().map(|s| (s / count) as f32).collect())
}

/// Element-wise weighted mean: `sum_i w_i * x_i / sum_i w_i`.
pub fn weighted_pool<'a, I>(items: I, weights: &WeightVector) -> Result<EmbeddingVector>
where
    I: IntoIterator<Item = &'a EmbeddingVector>,
{
    let items: Vec<&EmbeddingVector> = items.into_iter().collect();
    let dim = shared_dim(&items)?;
    if items.len() != weights.len() {
        return Err(Error::LengthMismatch {
            items: items.len(),
            weights: weights.len(),
        });
    }
    let mut sums = vec![0.0f64; dim];
    let mut total = 0.0f64;
    for (item, &w) in items.iter().zip(weights.as_slice()) {
        total += w;
        for (sum, &x) in sums.iter_mut().zip(item.values()) {
            *sum += w * x as f64;
        }
    }
    if total <= 0.0 {
        return Err(Error::AllZeroWeights);
    }
    EmbeddingVector::new(sums.into_iter().map(|s| (s / total) as f32).collect())
}

/// Pools the pages of one document, after sorting them by `page_index`.
pub fn build_document_embedding(
    pages: &[PageEmbedding],
    pooling: &PagePooling,
) -> Result<DocumentEmbedding> {
    let first = pages.first().ok_or(Error::EmptyInput)?;
    if let Some(other) = pages.iter().find(|p| p.source_id != first.source_id) {
        return Err(Error::MixedDocuments {
            first: first.source_id.clone(),
            other: other.source_id.clone(),
        });
    }
    if let PagePooling::Weighted(weights) = pooling {
        if weights.len() != pages.len() {
            return Err(Error::LengthMismatch {
                items: pages.len(),
                weights: weights.len(),
            });
        }
    }

    let mut order: Vec<usize> = (0..pages.len()).collect();
    order.sort_by_key(|&i| pages[i].page_index);
    for pair in order.windows(2) {
        if pages[pair[0]].page_index == pages[pair[1]].page_index {
            return Err(Error::DuplicatePage {
                doc_id: first.source_id.clone(),
                page_index: pages[pair[0]].page_index,
            });
        }
    }

    let vectors = order.iter().map(|&i| &pages[i].vector);
    let (vector, aggregation) = match pooling {
        PagePooling::Mean => (mean_pool(vectors)?, AggregationKind::Mean),
        PagePooling::Weighted(weights) => {
            let sorted = WeightVector::new(order.iter().map(|&i| weights.as_slice()[i]).collect())?;
            (weighted_pool(vectors, &sorted)?, AggregationKind::Weighted)
        }
    };
    Ok(DocumentEmbedding {
        vector,
        doc_id: first.source_id.clone(),
        page_count: pages.len(),
        aggregation,
    })
}

/// One centroid per distinct label, ordered lexicographically by label.
/// Within a class, documents are pooled in input order.
pub fn build_class_centroids(
    samples: &[(DocumentEmbedding, String)],
    pooling: &ClassPooling,
) -> Result<Vec<ClassCentroid>> {
    let first = samples.first().ok_or(Error::EmptyInput)?;
    let dim = first.0.vector.dim();
    let mut groups: BTreeMap<&str, Vec<&DocumentEmbedding>> = BTreeMap::new();
    for (doc, label) in samples {
        doc.vector.check_dim(dim)?;
        groups.entry(label.as_str()).or_default().push(doc);
    }

    groups
        .into_iter()
        .map(|(label, docs)| {
            let vectors = docs.iter().map(|d| &d.vector);
            let vector = match pooling {
                ClassPooling::Mean => mean_pool(vectors)?,
                ClassPooling::WeightedBy(by_doc) => {
                    let weights = docs
                        .iter()
                        .map(|d| {
                            by_doc
                                .get(&d.doc_id)
                                .copied()
                                .ok_or_else(|| Error::MissingWeight(d.doc_id.clone()))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    weighted_pool(vectors, &WeightVector::new(weights)?)?
                }
            };
            Ok(ClassCentroid {
                vector,
                label: label.to_owned(),
                member_count: docs.len() as u32,
            })
        })
        .collect()
}

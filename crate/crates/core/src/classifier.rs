//! Nearest-centroid classification.

use rayon::prelude::*;
use serde::Serialize;

use crate::aggregation::ClassCentroid;
use crate::embedding::{EmbeddingVector, SimilarityMeasure};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedClass {
    pub label: String,
    pub score: f64,
}

/// The winning class plus every class ranked best-first with its raw score.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationResult {
    pub predicted_label: String,
    pub ranking: Vec<RankedClass>,
    pub measure: SimilarityMeasure,
    pub query_dim: usize,
}

/// Scores `query` against every centroid. Equal scores rank the
/// lexicographically smaller label first.
pub fn classify(
    query: &EmbeddingVector,
    centroids: &[ClassCentroid],
    measure: SimilarityMeasure,
) -> Result<ClassificationResult> {
    if centroids.is_empty() {
        return Err(Error::NoClasses);
    }
    let mut ranking = centroids
        .iter()
        .map(|c| {
            Ok(RankedClass {
                label: c.label.clone(),
                score: measure.score(query, &c.vector)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranking.sort_by(|a, b| {
        measure
            .cmp_scores(a.score, b.score)
            .then_with(|| a.label.cmp(&b.label))
    });
    Ok(ClassificationResult {
        predicted_label: ranking[0].label.clone(),
        ranking,
        measure,
        query_dim: query.dim(),
    })
}

/// A query that could not be classified, with its document id attached.
#[derive(Debug)]
pub struct QueryError {
    pub doc_id: String,
    pub error: Error,
}

/// Classifies each query independently. Output order matches input order and
/// a failing query yields an error entry without aborting the rest.
pub fn classify_batch(
    queries: &[(String, EmbeddingVector)],
    centroids: &[ClassCentroid],
    measure: SimilarityMeasure,
) -> Vec<(String, Result<ClassificationResult, QueryError>)> {
    queries
        .par_iter()
        .map(|(doc_id, query)| {
            let result = classify(query, centroids, measure).map_err(|error| QueryError {
                doc_id: doc_id.clone(),
                error,
            });
            (doc_id.clone(), result)
        })
        .collect()
}

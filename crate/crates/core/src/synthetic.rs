//! Seeded synthetic corpora: well-separated class centers plus Gaussian
//! noise. Used by the acceptance suite, benchmarks and CLI tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::aggregation::{build_class_centroids, AggregationKind, ClassPooling, DocumentEmbedding};
use crate::embedding::EmbeddingVector;
use crate::error::Result;
use crate::store::{SampleStore, StoredSample};

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    pub classes: usize,
    pub dim: usize,
    pub docs_per_class: usize,
    /// Per-component noise standard deviation.
    pub sigma: f64,
    /// Centers are redrawn until every pairwise cosine is below this.
    pub max_center_cosine: f64,
    pub seed: u64,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        Self {
            classes: 5,
            dim: 64,
            docs_per_class: 40,
            sigma: 0.05,
            max_center_cosine: 0.3,
            seed: 42,
        }
    }
}

pub fn class_label(index: usize) -> String {
    format!("w{index}")
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Unit-norm class centers with pairwise cosine below `max_cosine`.
pub fn class_centers(classes: usize, dim: usize, max_cosine: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(classes);
    while centers.len() < classes {
        let candidate = unit_gaussian(&mut rng, dim);
        let ok = centers
            .iter()
            .all(|c| c.iter().zip(&candidate).map(|(a, b)| a * b).sum::<f64>() < max_cosine);
        if ok {
            centers.push(candidate);
        }
    }
    centers
}

/// Labeled samples `center + sigma * z`. The standard-normal draws `z` depend
/// only on the seed, so corpora that differ only in `sigma` share them.
pub fn cluster_samples(spec: &ClusterSpec) -> Result<Vec<StoredSample>> {
    let centers = class_centers(spec.classes, spec.dim, spec.max_center_cosine, spec.seed);
    let mut noise = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1));
    let mut samples = Vec::with_capacity(spec.classes * spec.docs_per_class);
    for doc in 0..spec.docs_per_class {
        for (class, center) in centers.iter().enumerate() {
            let values: Vec<f64> = center
                .iter()
                .map(|c| c + spec.sigma * noise.sample::<f64, _>(StandardNormal))
                .collect();
            samples.push(StoredSample {
                id: (doc * spec.classes + class) as u64,
                label: class_label(class),
                vector: EmbeddingVector::from_f64(&values)?,
            });
        }
    }
    Ok(samples)
}

/// A store holding the samples plus mean centroids over all of them.
pub fn cluster_store(spec: &ClusterSpec) -> Result<SampleStore> {
    let samples = cluster_samples(spec)?;
    let docs: Vec<(DocumentEmbedding, String)> = samples
        .iter()
        .map(|s| {
            (
                DocumentEmbedding {
                    vector: s.vector.clone(),
                    doc_id: s.id.to_string(),
                    page_count: 1,
                    aggregation: AggregationKind::Mean,
                },
                s.label.clone(),
            )
        })
        .collect();
    let centroids = build_class_centroids(&docs, &ClassPooling::Mean)?;
    SampleStore::new(spec.dim, samples, centroids)
}

/// `n` points drawn from a mixture of `components` isotropic Gaussians with
/// standard-normal means and per-component spread `spread`.
pub fn gaussian_mixture(n: usize, dim: usize, components: usize, spread: f64, seed: u64) -> Result<Vec<EmbeddingVector>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..components)
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    (0..n)
        .map(|_| {
            let m = &means[rng.random_range(0..components)];
            let values: Vec<f64> = m
                .iter()
                .map(|c| c + spread * rng.sample::<f64, _>(StandardNormal))
                .collect();
            EmbeddingVector::from_f64(&values)
        })
        .collect()
}

//! Exact flat search and an IVF-flat index (k-means coarse quantizer with
//! probed posting lists). The flat scan is the reference the IVF path is
//! measured against.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::embedding::{squared_l2_unchecked, EmbeddingVector, SimilarityMeasure};
use crate::error::{Error, Result};
use crate::store::{AssignmentRecord, CentroidRecord, FedsFile, StoredSample};

/// Maximum Lloyd iterations when training the coarse quantizer.
pub const KMEANS_MAX_ITERATIONS: usize = 25;

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub id: u64,
    pub vector: EmbeddingVector,
    pub label_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchHit {
    pub id: u64,
    pub label_id: u32,
    pub score: f64,
    pub measure: SimilarityMeasure,
}

fn hit_order(measure: SimilarityMeasure) -> impl Fn(&SearchHit, &SearchHit) -> Ordering {
    move |a, b| measure.cmp_scores(a.score, b.score).then(a.id.cmp(&b.id))
}

/// Exact top-k over `entries`, best first, ties broken by lower id.
fn top_k<'a, I>(entries: I, query: &EmbeddingVector, k: usize, measure: SimilarityMeasure) -> Result<Vec<SearchHit>>
where
    I: IntoIterator<Item = &'a IndexEntry>,
{
    if k == 0 {
        return Err(Error::InvalidK);
    }
    let mut hits = entries
        .into_iter()
        .map(|e| {
            Ok(SearchHit {
                id: e.id,
                label_id: e.label_id,
                score: measure.score(query, &e.vector)?,
                measure,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let order = hit_order(measure);
    if hits.len() > k {
        hits.select_nth_unstable_by(k - 1, &order);
        hits.truncate(k);
    }
    hits.sort_by(order);
    Ok(hits)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatIndex {
    dim: usize,
    entries: Vec<IndexEntry>,
    ids: HashSet<u64>,
}

impl FlatIndex {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
            ids: HashSet::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn add(&mut self, id: u64, vector: EmbeddingVector, label_id: u32) -> Result<()> {
        vector.check_dim(self.dim)?;
        if !self.ids.insert(id) {
            return Err(Error::DuplicateId(id));
        }
        self.entries.push(IndexEntry { id, vector, label_id });
        Ok(())
    }

    pub fn search(&self, query: &EmbeddingVector, k: usize, measure: SimilarityMeasure) -> Result<Vec<SearchHit>> {
        query.check_dim(self.dim)?;
        top_k(&self.entries, query, k, measure)
    }
}

/// Inverted-file index with raw vectors in each posting list.
#[derive(Debug, Clone, PartialEq)]
pub struct IvfFlatIndex {
    dim: usize,
    centroids: Vec<EmbeddingVector>,
    partitions: Vec<Vec<IndexEntry>>,
    ids: HashSet<u64>,
}

/// Index of the L2-nearest centroid, lowest index on ties.
fn nearest_centroid(centroids: &[EmbeddingVector], vector: &[f32]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_l2_unchecked(c.values(), vector);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn assign_all(centroids: &[EmbeddingVector], vectors: &[EmbeddingVector]) -> Vec<(usize, f64)> {
    vectors.iter().map(|v| nearest_centroid(centroids, v.values())).collect()
}

/// Lloyd's k-means: seeded sample initialisation, L2 assignment, mean
/// update, farthest-point repair of empty clusters.
fn kmeans(vectors: &[EmbeddingVector], nlist: usize, seed: u64) -> Result<Vec<EmbeddingVector>> {
    let dim = vectors[0].dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = rand::seq::index::sample(&mut rng, vectors.len(), nlist).into_vec();
    picks.sort_unstable();
    let mut centroids: Vec<EmbeddingVector> = picks.iter().map(|&i| vectors[i].clone()).collect();
    let mut assignment = assign_all(&centroids, vectors);

    for _ in 0..KMEANS_MAX_ITERATIONS {
        let mut sums = vec![vec![0.0f64; dim]; nlist];
        let mut counts = vec![0usize; nlist];
        for (v, &(c, _)) in vectors.iter().zip(&assignment) {
            counts[c] += 1;
            for (s, &x) in sums[c].iter_mut().zip(v.values()) {
                *s += x as f64;
            }
        }

        let mut taken = HashSet::new();
        for c in 0..nlist {
            if counts[c] > 0 {
                let n = counts[c] as f64;
                centroids[c] = EmbeddingVector::new(sums[c].iter().map(|s| (s / n) as f32).collect())?;
                continue;
            }
            // Re-seed from the point farthest from its current centroid.
            let farthest = assignment
                .iter()
                .enumerate()
                .filter(|(i, _)| !taken.contains(i))
                .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
                .expect("at least nlist vectors");
            taken.insert(farthest);
            centroids[c] = vectors[farthest].clone();
        }

        let next = assign_all(&centroids, vectors);
        let changed = next.iter().zip(&assignment).any(|(a, b)| a.0 != b.0);
        assignment = next;
        if !changed {
            break;
        }
    }
    Ok(centroids)
}

impl IvfFlatIndex {
    /// Trains the coarse quantizer; the returned index is empty.
    pub fn train(vectors: &[EmbeddingVector], nlist: usize, seed: u64) -> Result<Self> {
        if nlist == 0 {
            return Err(Error::InvalidNlist);
        }
        if vectors.len() < nlist {
            return Err(Error::TooFewVectors {
                count: vectors.len(),
                nlist,
            });
        }
        let dim = vectors[0].dim();
        for v in &vectors[1..] {
            v.check_dim(dim)?;
        }
        let centroids = kmeans(vectors, nlist, seed)?;
        Ok(Self::with_centroids(centroids))
    }

    fn with_centroids(centroids: Vec<EmbeddingVector>) -> Self {
        let nlist = centroids.len();
        Self {
            dim: centroids[0].dim(),
            centroids,
            partitions: vec![Vec::new(); nlist],
            ids: HashSet::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nlist(&self) -> usize {
        self.centroids.len()
    }

    pub fn centroids(&self) -> &[EmbeddingVector] {
        &self.centroids
    }

    pub fn partitions(&self) -> &[Vec<IndexEntry>] {
        &self.partitions
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Partition a vector of this index's dimension would be stored in.
    pub fn partition_for(&self, vector: &EmbeddingVector) -> Result<usize> {
        vector.check_dim(self.dim)?;
        Ok(nearest_centroid(&self.centroids, vector.values()).0)
    }

    pub fn add(&mut self, id: u64, vector: EmbeddingVector, label_id: u32) -> Result<()> {
        let partition = self.partition_for(&vector)?;
        if !self.ids.insert(id) {
            return Err(Error::DuplicateId(id));
        }
        self.partitions[partition].push(IndexEntry { id, vector, label_id });
        Ok(())
    }

    /// Exact top-k among the `nprobe` partitions whose coarse centroids are
    /// L2-closest to the query.
    pub fn search(
        &self,
        query: &EmbeddingVector,
        k: usize,
        nprobe: usize,
        measure: SimilarityMeasure,
    ) -> Result<Vec<SearchHit>> {
        query.check_dim(self.dim)?;
        if nprobe == 0 || nprobe > self.nlist() {
            return Err(Error::BadNprobe {
                nprobe,
                nlist: self.nlist(),
            });
        }
        let mut ranked: Vec<(usize, f64)> = self
            .centroids
            .iter()
            .enumerate()
            .map(|(i, c)| (i, squared_l2_unchecked(c.values(), query.values())))
            .collect();
        ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let probed = ranked[..nprobe].iter().flat_map(|&(p, _)| &self.partitions[p]);
        top_k(probed, query, k, measure)
    }

    /// Persists the coarse centroids and id-to-partition assignments as a
    /// FEDS file. The label table names partitions `ivf:<n>`; centroid
    /// `member_count` holds the partition size. Vectors are not duplicated.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_feds().write_to(path)
    }

    pub fn to_feds(&self) -> FedsFile {
        let mut assignments: Vec<AssignmentRecord> = self
            .partitions
            .iter()
            .enumerate()
            .flat_map(|(p, entries)| {
                entries.iter().map(move |e| AssignmentRecord {
                    id: e.id,
                    partition: p as u32,
                })
            })
            .collect();
        assignments.sort_by_key(|a| a.id);
        FedsFile {
            dim: self.dim as u32,
            labels: (0..self.nlist()).map(|p| format!("ivf:{p}")).collect(),
            samples: Vec::new(),
            centroids: self
                .centroids
                .iter()
                .zip(&self.partitions)
                .enumerate()
                .map(|(p, (c, entries))| CentroidRecord {
                    label_id: p as u32,
                    member_count: entries.len() as u32,
                    vector: c.clone(),
                })
                .collect(),
            assignments,
        }
    }

    /// Rebuilds an index from its persisted layout plus the sample vectors it
    /// was built over. `label_id_of` maps each sample to its label id.
    pub fn from_feds(
        file: &FedsFile,
        samples: &[StoredSample],
        label_id_of: impl Fn(&StoredSample) -> u32,
    ) -> Result<Self> {
        if file.centroids.is_empty() {
            return Err(Error::IndexMismatch("no coarse centroids".into()));
        }
        let mut centroids: Vec<&CentroidRecord> = file.centroids.iter().collect();
        centroids.sort_by_key(|c| c.label_id);
        let mut index = Self::with_centroids(centroids.iter().map(|c| c.vector.clone()).collect());
        if samples.iter().any(|s| s.vector.dim() != index.dim) {
            return Err(Error::IndexMismatch("dimension differs from store".into()));
        }
        if file.assignments.len() != samples.len() {
            return Err(Error::IndexMismatch(format!(
                "{} assignments for {} samples",
                file.assignments.len(),
                samples.len()
            )));
        }
        let by_id: std::collections::HashMap<u64, &StoredSample> =
            samples.iter().map(|s| (s.id, s)).collect();
        for a in &file.assignments {
            let sample = by_id
                .get(&a.id)
                .ok_or_else(|| Error::IndexMismatch(format!("id {} not in store", a.id)))?;
            let partition = a.partition as usize;
            if partition >= index.nlist() {
                return Err(Error::IndexMismatch(format!("partition {partition} out of range")));
            }
            if !index.ids.insert(a.id) {
                return Err(Error::DuplicateId(a.id));
            }
            index.partitions[partition].push(IndexEntry {
                id: a.id,
                vector: sample.vector.clone(),
                label_id: label_id_of(sample),
            });
        }
        for (p, c) in centroids.iter().enumerate() {
            if c.member_count as usize != index.partitions[p].len() {
                return Err(Error::IndexMismatch(format!("partition {p} size differs")));
            }
        }
        Ok(index)
    }
}

/// Fraction of `truth` ids that also appear in `approx`.
pub fn recall(truth: &[SearchHit], approx: &[SearchHit]) -> f64 {
    if truth.is_empty() {
        return 1.0;
    }
    let found: HashSet<u64> = approx.iter().map(|h| h.id).collect();
    truth.iter().filter(|h| found.contains(&h.id)).count() as f64 / truth.len() as f64
}

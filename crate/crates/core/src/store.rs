//! FEDS: a fixed-layout binary container for labeled embeddings.
//!
//! Layout (all integers little-endian, vector components IEEE-754 `f32` LE):
//!
//! ```text
//! magic          4 bytes  "FED1"
//! dim            u32
//! label_count    u32
//!   label        u32 byte length + UTF-8 bytes      (label_id = position)
//! section_count  u32
//!   section_type u8       1 = samples, 2 = centroids, 3 = ivf assignments
//!   count        u64
//!   records      count x record
//! crc32          u32      IEEE CRC32 of every preceding byte
//! ```
//!
//! Records:
//! * sample: `id: u64, label_id: u32, vector: dim x f32`
//! * centroid: `label_id: u32, member_count: u32, vector: dim x f32`
//! * ivf assignment: `id: u64, partition: u32`
//!
//! Writers emit non-empty sections only, in ascending type order.

use std::collections::{BTreeSet, HashSet};
use std::io::Write;
use std::path::Path;

use crate::aggregation::{ClassCentroid, DocumentEmbedding};
use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FED1";
pub const SECTION_SAMPLES: u8 = 1;
pub const SECTION_CENTROIDS: u8 = 2;
pub const SECTION_IVF_ASSIGNMENTS: u8 = 3;

const MIN_FILE_LEN: usize = 4 + 4 + 4 + 4 + 4;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub id: u64,
    pub label_id: u32,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentroidRecord {
    pub label_id: u32,
    pub member_count: u32,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssignmentRecord {
    pub id: u64,
    pub partition: u32,
}

/// Raw contents of a FEDS container, record order preserved.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FedsFile {
    pub dim: u32,
    pub labels: Vec<String>,
    pub samples: Vec<SampleRecord>,
    pub centroids: Vec<CentroidRecord>,
    pub assignments: Vec<AssignmentRecord>,
}

impl FedsFile {
    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Malformed("dimension must be positive".into()));
        }
        let dim = self.dim as usize;
        let labels = self.labels.len();
        let check_label = |label_id: u32| {
            if (label_id as usize) < labels {
                Ok(())
            } else {
                Err(Error::BadLabelRef { label_id, labels })
            }
        };
        for s in &self.samples {
            check_label(s.label_id)?;
            check_record_dim(dim, &s.vector)?;
        }
        for c in &self.centroids {
            check_label(c.label_id)?;
            check_record_dim(dim, &c.vector)?;
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let dim = self.dim as usize;
        let mut out = Vec::with_capacity(
            MIN_FILE_LEN + self.samples.len() * (12 + 4 * dim) + self.centroids.len() * (8 + 4 * dim),
        );
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.dim.to_le_bytes());
        out.extend_from_slice(&(self.labels.len() as u32).to_le_bytes());
        for label in &self.labels {
            out.extend_from_slice(&(label.len() as u32).to_le_bytes());
            out.extend_from_slice(label.as_bytes());
        }

        let sections = [
            (SECTION_SAMPLES, self.samples.len()),
            (SECTION_CENTROIDS, self.centroids.len()),
            (SECTION_IVF_ASSIGNMENTS, self.assignments.len()),
        ];
        let present = sections.iter().filter(|(_, n)| *n > 0).count() as u32;
        out.extend_from_slice(&present.to_le_bytes());
        for (kind, count) in sections.into_iter().filter(|(_, n)| *n > 0) {
            out.push(kind);
            out.extend_from_slice(&(count as u64).to_le_bytes());
            match kind {
                SECTION_SAMPLES => {
                    for s in &self.samples {
                        out.extend_from_slice(&s.id.to_le_bytes());
                        out.extend_from_slice(&s.label_id.to_le_bytes());
                        put_vector(&mut out, &s.vector);
                    }
                }
                SECTION_CENTROIDS => {
                    for c in &self.centroids {
                        out.extend_from_slice(&c.label_id.to_le_bytes());
                        out.extend_from_slice(&c.member_count.to_le_bytes());
                        put_vector(&mut out, &c.vector);
                    }
                }
                _ => {
                    for a in &self.assignments {
                        out.extend_from_slice(&a.id.to_le_bytes());
                        out.extend_from_slice(&a.partition.to_le_bytes());
                    }
                }
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    /// Parses and verifies a FEDS byte image. Nothing is returned unless the
    /// trailing checksum matches.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MIN_FILE_LEN {
            if bytes.len() >= 3 && bytes[..3] != MAGIC[..3] {
                return Err(Error::BadMagic);
            }
            return Err(Error::TruncatedFile {
                offset: 0,
                needed: MIN_FILE_LEN,
                available: bytes.len(),
            });
        }
        if bytes[..3] != MAGIC[..3] {
            return Err(Error::BadMagic);
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(trailer.try_into().expect("4-byte trailer"));
        let computed = crc32fast::hash(body);
        if stored != computed {
            // A truncated file also fails the checksum; tell the two apart by
            // whether the declared structure fits in what is left.
            return match parse_body(body) {
                Err(e @ Error::TruncatedFile { .. }) => Err(e),
                _ => Err(Error::CrcMismatch { stored, computed }),
            };
        }
        if bytes[3] != MAGIC[3] {
            return Err(Error::UnsupportedVersion(bytes[3]));
        }
        let file = parse_body(body)?;
        file.validate()?;
        Ok(file)
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let bytes = self.encode()?;
        write_atomic(path, &bytes)
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

fn check_record_dim(dim: usize, vector: &EmbeddingVector) -> Result<()> {
    if vector.dim() != dim {
        return Err(Error::InconsistentDim {
            expected: dim,
            actual: vector.dim(),
        });
    }
    Ok(())
}

fn put_vector(out: &mut Vec<u8>, vector: &EmbeddingVector) {
    for v in vector.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, needed: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.offset;
        if needed > available {
            return Err(Error::TruncatedFile {
                offset: self.offset,
                needed,
                available,
            });
        }
        let slice = &self.bytes[self.offset..self.offset + needed];
        self.offset += needed;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn vector(&mut self, dim: usize) -> Result<EmbeddingVector> {
        let raw = self.take(dim * 4)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        EmbeddingVector::new(values).map_err(|e| Error::Malformed(format!("bad vector: {e}")))
    }

    /// Fails early when `count` records of `record_len` bytes cannot fit.
    fn reserve(&self, count: u64, record_len: usize) -> Result<usize> {
        let available = self.bytes.len() - self.offset;
        let needed = usize::try_from(count)
            .ok()
            .and_then(|n| n.checked_mul(record_len))
            .unwrap_or(usize::MAX);
        if needed > available {
            return Err(Error::TruncatedFile {
                offset: self.offset,
                needed,
                available,
            });
        }
        Ok(count as usize)
    }
}

fn parse_body(body: &[u8]) -> Result<FedsFile> {
    let mut r = Reader { bytes: body, offset: 4 };
    let dim = r.u32()?;
    let dim_usize = dim as usize;
    let label_count = r.u32()?;
    let label_count = r.reserve(label_count as u64, 4)?;
    let mut labels = Vec::with_capacity(label_count);
    for _ in 0..label_count {
        let len = r.u32()? as usize;
        let raw = r.take(len)?;
        let label = std::str::from_utf8(raw)
            .map_err(|_| Error::Malformed("label is not valid UTF-8".into()))?;
        labels.push(label.to_owned());
    }

    let mut file = FedsFile {
        dim,
        labels,
        ..FedsFile::default()
    };
    let section_count = r.u32()?;
    let mut seen = HashSet::new();
    for _ in 0..section_count {
        let kind = r.u8()?;
        if !seen.insert(kind) {
            return Err(Error::Malformed(format!("section type {kind} appears twice")));
        }
        let count = r.u64()?;
        match kind {
            SECTION_SAMPLES => {
                let n = r.reserve(count, 12 + 4 * dim_usize)?;
                file.samples.reserve(n);
                for _ in 0..n {
                    let id = r.u64()?;
                    let label_id = r.u32()?;
                    let vector = r.vector(dim_usize)?;
                    file.samples.push(SampleRecord { id, label_id, vector });
                }
            }
            SECTION_CENTROIDS => {
                let n = r.reserve(count, 8 + 4 * dim_usize)?;
                file.centroids.reserve(n);
                for _ in 0..n {
                    let label_id = r.u32()?;
                    let member_count = r.u32()?;
                    let vector = r.vector(dim_usize)?;
                    file.centroids.push(CentroidRecord {
                        label_id,
                        member_count,
                        vector,
                    });
                }
            }
            SECTION_IVF_ASSIGNMENTS => {
                let n = r.reserve(count, 12)?;
                file.assignments.reserve(n);
                for _ in 0..n {
                    let id = r.u64()?;
                    let partition = r.u32()?;
                    file.assignments.push(AssignmentRecord { id, partition });
                }
            }
            other => return Err(Error::Malformed(format!("unknown section type {other}"))),
        }
    }
    if r.offset != body.len() {
        return Err(Error::Malformed(format!(
            "{} unexpected bytes before checksum",
            body.len() - r.offset
        )));
    }
    Ok(file)
}

/// Writes through a temporary file in the destination directory, then renames.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// A labeled sample as held in a store.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredSample {
    pub id: u64,
    pub label: String,
    pub vector: EmbeddingVector,
}

/// Labeled document embeddings and class centroids, in canonical order:
/// samples by id, centroids by label, label table sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStore {
    dim: usize,
    labels: Vec<String>,
    samples: Vec<StoredSample>,
    centroids: Vec<ClassCentroid>,
}

impl SampleStore {
    pub fn new(
        dim: usize,
        mut samples: Vec<StoredSample>,
        mut centroids: Vec<ClassCentroid>,
    ) -> Result<Self> {
        if dim == 0 || dim > u32::MAX as usize {
            return Err(Error::Malformed(format!("unsupported dimension {dim}")));
        }
        samples.sort_by_key(|s| s.id);
        for pair in samples.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::DuplicateId(pair[0].id));
            }
        }
        centroids.sort_by(|a, b| a.label.cmp(&b.label));
        for pair in centroids.windows(2) {
            if pair[0].label == pair[1].label {
                return Err(Error::Malformed(format!("two centroids for label {:?}", pair[0].label)));
            }
        }
        for s in &samples {
            check_record_dim(dim, &s.vector)?;
        }
        for c in &centroids {
            check_record_dim(dim, &c.vector)?;
            if c.member_count == 0 {
                return Err(Error::Malformed(format!("centroid {:?} has no members", c.label)));
            }
        }
        let labels: BTreeSet<&str> = samples
            .iter()
            .map(|s| s.label.as_str())
            .chain(centroids.iter().map(|c| c.label.as_str()))
            .collect();
        let labels = labels.into_iter().map(str::to_owned).collect();
        Ok(Self {
            dim,
            labels,
            samples,
            centroids,
        })
    }

    /// Builds a store from ingested documents keyed by numeric id.
    pub fn from_documents(
        dim: usize,
        documents: &[(u64, String, DocumentEmbedding)],
        centroids: Vec<ClassCentroid>,
    ) -> Result<Self> {
        let samples = documents
            .iter()
            .map(|(id, label, doc)| StoredSample {
                id: *id,
                label: label.clone(),
                vector: doc.vector.clone(),
            })
            .collect();
        Self::new(dim, samples, centroids)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn samples(&self) -> &[StoredSample] {
        &self.samples
    }

    pub fn centroids(&self) -> &[ClassCentroid] {
        &self.centroids
    }

    pub fn label_id(&self, label: &str) -> Option<u32> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok().map(|i| i as u32)
    }

    /// Number of samples per label, in label-table order.
    pub fn class_counts(&self) -> Vec<(String, usize)> {
        self.labels
            .iter()
            .map(|l| (l.clone(), self.samples.iter().filter(|s| &s.label == l).count()))
            .collect()
    }

    fn to_file(&self) -> FedsFile {
        let id_of = |label: &str| self.label_id(label).expect("label table covers every label");
        FedsFile {
            dim: self.dim as u32,
            labels: self.labels.clone(),
            samples: self
                .samples
                .iter()
                .map(|s| SampleRecord {
                    id: s.id,
                    label_id: id_of(&s.label),
                    vector: s.vector.clone(),
                })
                .collect(),
            centroids: self
                .centroids
                .iter()
                .map(|c| CentroidRecord {
                    label_id: id_of(&c.label),
                    member_count: c.member_count,
                    vector: c.vector.clone(),
                })
                .collect(),
            assignments: Vec::new(),
        }
    }

    fn from_file(file: FedsFile) -> Result<Self> {
        let FedsFile {
            dim,
            labels,
            samples,
            centroids,
            ..
        } = file;
        let samples = samples
            .into_iter()
            .map(|s| StoredSample {
                id: s.id,
                label: labels[s.label_id as usize].clone(),
                vector: s.vector,
            })
            .collect();
        let centroids = centroids
            .into_iter()
            .map(|c| ClassCentroid {
                label: labels[c.label_id as usize].clone(),
                member_count: c.member_count,
                vector: c.vector,
            })
            .collect();
        let store = Self::new(dim as usize, samples, centroids)?;
        if store.labels != labels {
            return Err(Error::Malformed("label table is not canonical".into()));
        }
        Ok(store)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_file().encode().expect("canonical store always encodes")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_file(FedsFile::decode(bytes)?)
    }
}

pub fn write_store(path: &Path, store: &SampleStore) -> Result<()> {
    write_atomic(path, &store.to_bytes())
}

pub fn read_store(path: &Path) -> Result<SampleStore> {
    SampleStore::from_file(FedsFile::read_from(path)?)
}

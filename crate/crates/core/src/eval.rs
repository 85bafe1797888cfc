//! Stratified train/validation/test splitting, confusion matrices and the
//! accuracy / precision / recall / F1 report.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::aggregation::{build_class_centroids, AggregationKind, ClassPooling, DocumentEmbedding};
use crate::classifier::classify_batch;
use crate::embedding::SimilarityMeasure;
use crate::error::{Error, Result};
use crate::store::SampleStore;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_frac: f64, val_frac: f64, test_frac: f64, seed: u64) -> Result<Self> {
        for (name, f) in [("train", train_frac), ("val", val_frac), ("test", test_frac)] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidSplit(format!("{name} fraction {f} not in (0, 1)")));
            }
        }
        let sum = train_frac + val_frac + test_frac;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSplit(format!("fractions sum to {sum}, not 1")));
        }
        Ok(Self {
            train_frac,
            val_frac,
            test_frac,
            seed,
        })
    }
}

impl Default for SplitSpec {
    /// 70 / 10 / 20 with seed 42.
    fn default() -> Self {
        Self {
            train_frac: 0.7,
            val_frac: 0.1,
            test_frac: 0.2,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Split {
    pub train: Vec<u64>,
    pub val: Vec<u64>,
    pub test: Vec<u64>,
}

/// Per-class split sizes: rounded train and validation counts, the remainder
/// to test, then shifted so each split holds at least one sample. Expects
/// `n >= 3`.
pub fn split_sizes(n: usize, spec: &SplitSpec) -> (usize, usize, usize) {
    let mut train = ((n as f64 * spec.train_frac).round() as usize).max(1);
    let mut val = ((n as f64 * spec.val_frac).round() as usize).max(1);
    while train + val + 1 > n && (train > 1 || val > 1) {
        if train >= val && train > 1 {
            train -= 1;
        } else {
            val -= 1;
        }
    }
    (train, val, n.saturating_sub(train + val))
}

fn label_hash(label: &str) -> u64 {
    let digest = Sha256::digest(label.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Splits each class independently after a seeded shuffle. Within a class,
/// ids are sorted before shuffling so input order does not matter.
pub fn stratified_split(samples: &[(u64, String)], spec: &SplitSpec) -> Result<Split> {
    let mut by_label: BTreeMap<&str, Vec<u64>> = BTreeMap::new();
    for (id, label) in samples {
        by_label.entry(label.as_str()).or_default().push(*id);
    }
    let mut split = Split::default();
    for (label, mut ids) in by_label {
        if ids.len() < 3 {
            return Err(Error::ClassTooSmall(label.to_owned()));
        }
        ids.sort_unstable();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ label_hash(label));
        ids.shuffle(&mut rng);
        let (train, val, _) = split_sizes(ids.len(), spec);
        split.train.extend_from_slice(&ids[..train]);
        split.val.extend_from_slice(&ids[train..train + val]);
        split.test.extend_from_slice(&ids[train + val..]);
    }
    Ok(split)
}

/// Rows are true labels, columns predicted labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    labels: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let n = labels.len();
        Self {
            labels,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn from_counts(labels: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        if counts.len() != labels.len() || counts.iter().any(|row| row.len() != labels.len()) {
            return Err(Error::InvalidSplit(format!(
                "confusion matrix must be {0}x{0}",
                labels.len()
            )));
        }
        Ok(Self { labels, counts })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn record(&mut self, truth: &str, predicted: &str) -> Result<()> {
        let find = |l: &str| {
            self.labels
                .iter()
                .position(|x| x == l)
                .ok_or_else(|| Error::InvalidSplit(format!("label {l:?} not in confusion matrix")))
        };
        let (t, p) = (find(truth)?, find(predicted)?);
        self.counts[t][p] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    #[default]
    Macro,
    Micro,
}

impl std::str::FromStr for Averaging {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "macro" => Ok(Averaging::Macro),
            "micro" => Ok(Averaging::Micro),
            other => Err(format!("unknown averaging {other:?} (expected macro or micro)")),
        }
    }
}

impl fmt::Display for Averaging {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Averaging::Macro => "macro",
            Averaging::Micro => "micro",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when a 0/0 ratio was reported as 0.
    pub undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub averaging: Averaging,
    pub per_class: BTreeMap<String, ClassMetrics>,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

fn harmonic(p: f64, r: f64) -> (f64, bool) {
    if p + r == 0.0 {
        (0.0, true)
    } else {
        (2.0 * p * r / (p + r), false)
    }
}

pub fn compute_metrics(cm: &ConfusionMatrix, averaging: Averaging) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let n = cm.labels.len();
    let tp: Vec<u64> = (0..n).map(|i| cm.counts[i][i]).collect();
    let row: Vec<u64> = cm.counts.iter().map(|r| r.iter().sum()).collect();
    let col: Vec<u64> = (0..n).map(|j| cm.counts.iter().map(|r| r[j]).sum()).collect();
    let trace: u64 = tp.iter().sum();

    let mut per_class = BTreeMap::new();
    for i in 0..n {
        let (precision, p_undef) = ratio(tp[i], col[i]);
        let (recall, r_undef) = ratio(tp[i], row[i]);
        let (f1, f_undef) = harmonic(precision, recall);
        per_class.insert(
            cm.labels[i].clone(),
            ClassMetrics {
                precision,
                recall,
                f1,
                support: row[i],
                undefined: p_undef || r_undef || f_undef,
            },
        );
    }

    let accuracy = trace as f64 / total as f64;
    let (precision, recall, f1) = match averaging {
        Averaging::Macro => {
            let mean = |f: fn(&ClassMetrics) -> f64| per_class.values().map(f).sum::<f64>() / n as f64;
            (mean(|c| c.precision), mean(|c| c.recall), mean(|c| c.f1))
        }
        Averaging::Micro => {
            // every false positive is some other class's false negative
            let precision = ratio(trace, col.iter().sum()).0;
            let recall = ratio(trace, row.iter().sum()).0;
            (precision, recall, harmonic(precision, recall).0)
        }
    };
    Ok(MetricsReport {
        accuracy,
        precision,
        recall,
        f1,
        averaging,
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationOutcome {
    pub report: MetricsReport,
    pub confusion: ConfusionMatrix,
    pub split: Split,
    pub measure: SimilarityMeasure,
    pub spec: SplitSpec,
}

/// Trains class centroids on the train split only, classifies the test
/// split, and scores the result. The validation split is produced but not
/// consumed.
pub fn run_evaluation(
    store: &SampleStore,
    spec: &SplitSpec,
    measure: SimilarityMeasure,
    averaging: Averaging,
) -> Result<EvaluationOutcome> {
    let classes: BTreeSet<&str> = store.samples().iter().map(|s| s.label.as_str()).collect();
    if classes.len() < 2 {
        return Err(Error::TooFewClasses(classes.len()));
    }
    let labeled: Vec<(u64, String)> = store.samples().iter().map(|s| (s.id, s.label.clone())).collect();
    let split = stratified_split(&labeled, spec)?;
    let by_id: HashMap<u64, _> = store.samples().iter().map(|s| (s.id, s)).collect();

    let mut train_ids = split.train.clone();
    train_ids.sort_unstable();
    let train: Vec<(DocumentEmbedding, String)> = train_ids
        .iter()
        .map(|id| {
            let s = by_id[id];
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
    let centroids = build_class_centroids(&train, &ClassPooling::Mean)?;

    let queries: Vec<(String, _)> = split
        .test
        .iter()
        .map(|id| (id.to_string(), by_id[id].vector.clone()))
        .collect();
    let mut confusion = ConfusionMatrix::new(classes.iter().map(|s| s.to_string()).collect());
    for ((_, result), id) in classify_batch(&queries, &centroids, measure).into_iter().zip(&split.test) {
        let result = result.map_err(|e| e.error)?;
        confusion.record(&by_id[id].label, &result.predicted_label)?;
    }
    let report = compute_metrics(&confusion, averaging)?;
    Ok(EvaluationOutcome {
        report,
        confusion,
        split,
        measure,
        spec: *spec,
    })
}

/// Aligned text table with one row: Method, Accuracy, Precision, Recall, F1-Score.
pub fn format_table(method: &str, report: &MetricsReport) -> String {
    let headers = ["Method", "Accuracy", "Precision", "Recall", "F1-Score"];
    let cells = [
        method.to_owned(),
        format!("{:.4}", report.accuracy),
        format!("{:.4}", report.precision),
        format!("{:.4}", report.recall),
        format!("{:.4}", report.f1),
    ];
    let widths: Vec<usize> = headers.iter().zip(&cells).map(|(h, c)| h.len().max(c.len())).collect();
    let line = |items: Vec<&str>| {
        items
            .iter()
            .zip(&widths)
            .map(|(s, w)| format!("{s:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_owned()
    };
    let rule = widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  ");
    format!(
        "averaging: {}\n{}\n{}\n{}\n",
        report.averaging,
        line(headers.to_vec()),
        rule,
        line(cells.iter().map(String::as_str).collect())
    )
}

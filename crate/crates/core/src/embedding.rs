//! Embedding vectors and the two comparison kernels (cosine similarity and
//! Euclidean distance) everything else is built on.
//!
//! Components are stored as `f32`; every reduction accumulates in `f64`
//! strictly left to right, so results are bit-reproducible for a given input.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A fixed-dimension vector of finite `f32` components.
#[derive(Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyVector);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { index });
        }
        Ok(Self(values))
    }

    /// Builds a vector from `f64` values, rounding each to `f32`.
    pub fn from_f64(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| v as f32).collect())
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f32> {
        self.0
    }

    /// Multiplies every component by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|&v| (v as f64 * factor) as f32).collect())
    }

    /// Returns the unit-norm version of this vector.
    pub fn normalized(&self) -> Result<Self> {
        let norm = l2_norm(self);
        if norm == 0.0 {
            return Err(Error::ZeroNormVector);
        }
        self.scaled(1.0 / norm)
    }

    pub(crate) fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: self.dim(),
            });
        }
        Ok(())
    }
}

impl fmt::Debug for EmbeddingVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("EmbeddingVector").field(&self.0).finish()
    }
}

impl TryFrom<Vec<f32>> for EmbeddingVector {
    type Error = Error;

    fn try_from(values: Vec<f32>) -> Result<Self> {
        Self::new(values)
    }
}

impl<'de> Deserialize<'de> for EmbeddingVector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let values = Vec::<f32>::deserialize(deserializer)?;
        Self::new(values).map_err(serde::de::Error::custom)
    }
}

/// Which comparison decides class membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityMeasure {
    /// Higher is better, in [-1, 1].
    #[default]
    Cosine,
    /// Lower is better, in [0, inf).
    L2,
}

impl SimilarityMeasure {
    /// Computes the raw score of `a` against `b` under this measure.
    pub fn score(self, a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
        match self {
            SimilarityMeasure::Cosine => cosine_similarity(a, b),
            SimilarityMeasure::L2 => l2_distance(a, b),
        }
    }

    /// True when `lhs` is a strictly better score than `rhs`.
    pub fn is_better(self, lhs: f64, rhs: f64) -> bool {
        match self {
            SimilarityMeasure::Cosine => lhs > rhs,
            SimilarityMeasure::L2 => lhs < rhs,
        }
    }

    /// Orders scores best-first.
    pub fn cmp_scores(self, lhs: f64, rhs: f64) -> std::cmp::Ordering {
        match self {
            SimilarityMeasure::Cosine => rhs.total_cmp(&lhs),
            SimilarityMeasure::L2 => lhs.total_cmp(&rhs),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SimilarityMeasure::Cosine => "cosine",
            SimilarityMeasure::L2 => "l2",
        }
    }
}

impl fmt::Display for SimilarityMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SimilarityMeasure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" => Ok(SimilarityMeasure::Cosine),
            "l2" | "euclidean" => Ok(SimilarityMeasure::L2),
            other => Err(format!("unknown measure {other:?} (expected cosine or l2)")),
        }
    }
}

fn check_same_dim(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<()> {
    b.check_dim(a.dim())
}

fn dot_unchecked(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |acc, (&x, &y)| acc + x as f64 * y as f64)
}

fn sum_of_squares(a: &[f32]) -> f64 {
    a.iter().fold(0.0f64, |acc, &x| acc + x as f64 * x as f64)
}

pub fn dot(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    check_same_dim(a, b)?;
    Ok(dot_unchecked(a.values(), b.values()))
}

pub fn l2_norm(a: &EmbeddingVector) -> f64 {
    sum_of_squares(a.values()).sqrt()
}

/// Cosine of the angle between `a` and `b`, clamped to [-1, 1].
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    check_same_dim(a, b)?;
    let norm_a = l2_norm(a);
    let norm_b = l2_norm(b);
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(Error::ZeroNormVector);
    }
    let cos = dot_unchecked(a.values(), b.values()) / (norm_a * norm_b);
    Ok(cos.clamp(-1.0, 1.0))
}

/// Squared Euclidean distance, without the final square root.
pub fn squared_l2_distance(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    check_same_dim(a, b)?;
    Ok(squared_l2_unchecked(a.values(), b.values()))
}

pub(crate) fn squared_l2_unchecked(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |acc, (&x, &y)| {
        let d = x as f64 - y as f64;
        acc + d * d
    })
}

pub fn l2_distance(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    squared_l2_distance(a, b).map(f64::sqrt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(values: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let c = cosine_similarity(&v(&[1.0, 2.0, 2.0]), &v(&[2.0, 4.0, 4.0])).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
        let c = cosine_similarity(&v(&[3.0, 4.0]), &v(&[4.0, 3.0])).unwrap();
        assert!((c - 0.96).abs() < 1e-12);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine_similarity(&v(&[1.0, 0.0]), &v(&[1.0, 0.0, 0.0])),
            Err(Error::DimensionMismatch { expected: 2, actual: 3 })
        ));
        assert!(matches!(
            cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])),
            Err(Error::ZeroNormVector)
        ));
        assert!(matches!(
            cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 0.0])),
            Err(Error::ZeroNormVector)
        ));
    }

    #[test]
    fn l2_examples() {
        assert_eq!(l2_distance(&v(&[1.0, 1.0]), &v(&[1.0, 1.0])).unwrap(), 0.0);
        assert_eq!(l2_distance(&v(&[0.0, 0.0]), &v(&[3.0, 4.0])).unwrap(), 5.0);
        assert_eq!(l2_distance(&v(&[1.0, 2.0, 3.0]), &v(&[4.0, 6.0, 3.0])).unwrap(), 5.0);
        assert!(matches!(
            l2_distance(&v(&[1.0]), &v(&[1.0, 2.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn norm_examples() {
        assert_eq!(l2_norm(&v(&[0.0, 0.0, 0.0])), 0.0);
        assert_eq!(l2_norm(&v(&[3.0, 4.0])), 5.0);
        assert_eq!(l2_norm(&v(&[1.0, 1.0, 1.0, 1.0])), 2.0);
        let a = v(&[0.5, -2.0, 7.25]);
        assert_eq!(l2_norm(&a), l2_distance(&a, &EmbeddingVector::zeros(3).unwrap()).unwrap());
    }

    #[test]
    fn construction_rejects_bad_values() {
        assert!(matches!(EmbeddingVector::new(vec![]), Err(Error::EmptyVector)));
        assert!(matches!(
            EmbeddingVector::new(vec![1.0, f32::NAN]),
            Err(Error::NonFiniteValue { index: 1 })
        ));
        assert!(matches!(
            EmbeddingVector::new(vec![f32::INFINITY]),
            Err(Error::NonFiniteValue { index: 0 })
        ));
        // zero vectors are fine until cosine is asked of them
        assert!(EmbeddingVector::zeros(4).is_ok());
    }

    #[test]
    fn serde_validates() {
        let parsed: EmbeddingVector = serde_json::from_str("[1.0, 2.5]").unwrap();
        assert_eq!(parsed.values(), &[1.0, 2.5]);
        assert!(serde_json::from_str::<EmbeddingVector>("[]").is_err());
    }

    #[test]
    fn measure_parsing_and_ordering() {
        assert_eq!("COSINE".parse::<SimilarityMeasure>().unwrap(), SimilarityMeasure::Cosine);
        assert_eq!("l2".parse::<SimilarityMeasure>().unwrap(), SimilarityMeasure::L2);
        assert!("dot".parse::<SimilarityMeasure>().is_err());
        assert!(SimilarityMeasure::Cosine.is_better(0.9, 0.1));
        assert!(SimilarityMeasure::L2.is_better(0.1, 0.9));
        assert_eq!(SimilarityMeasure::default(), SimilarityMeasure::Cosine);
    }
}

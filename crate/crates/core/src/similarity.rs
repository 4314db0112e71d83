//! Vector metrics and the auto/cross identity pairing.
//!
//! An *auto* pair is one identity against itself: its sample is the maximum
//! cosine similarity over distinct embeddings of that identity. A *cross*
//! pair is two different identities: its sample is the maximum cosine
//! similarity over every embedding pairing drawn one from each.

use serde::Serialize;
use thiserror::Error;

use crate::gallery::Gallery;

#[derive(Debug, Error, PartialEq)]
pub enum SimilarityError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("need at least 2 identities, gallery has {0}")]
    TooFewIdentities(usize),
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

fn check_dims(x: &[f64], y: &[f64]) -> Result<(), SimilarityError> {
    if x.len() != y.len() {
        return Err(SimilarityError::DimensionMismatch(x.len(), y.len()));
    }
    Ok(())
}

/// `x·y / (‖x‖‖y‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(x: &[f64], y: &[f64]) -> Result<f64, SimilarityError> {
    check_dims(x, y)?;
    let (nx, ny) = (norm(x), norm(y));
    if nx == 0.0 || ny == 0.0 {
        return Err(SimilarityError::ZeroNorm);
    }
    Ok(cosine_with_norms(x, nx, y, ny))
}

#[inline]
fn cosine_with_norms(x: &[f64], nx: f64, y: &[f64], ny: f64) -> f64 {
    (dot(x, y) / (nx * ny)).clamp(-1.0, 1.0)
}

/// `1 - cosine_similarity(x, y)`, in `[0, 2]`.
pub fn cosine_distance(x: &[f64], y: &[f64]) -> Result<f64, SimilarityError> {
    Ok(1.0 - cosine_similarity(x, y)?)
}

pub fn euclidean_distance(x: &[f64], y: &[f64]) -> Result<f64, SimilarityError> {
    check_dims(x, y)?;
    Ok(x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    Auto,
    Cross,
}

/// One identity pairing with its maximum similarity. Cross pairs are
/// unordered and stored with `first < second`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityPair {
    pub kind: PairKind,
    pub first: String,
    pub second: String,
    pub s_max: f64,
}

/// Auto and cross `s_max` samples of one gallery snapshot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityDistributions {
    pub auto_samples: Vec<f64>,
    pub cross_samples: Vec<f64>,
    pub gallery_version: u64,
}

impl SimilarityDistributions {
    /// Wraps raw sample lists, for callers that already have scores.
    pub fn new(auto_samples: Vec<f64>, cross_samples: Vec<f64>) -> Self {
        Self {
            auto_samples,
            cross_samples,
            gallery_version: 0,
        }
    }

    /// Enough samples on both sides to fit Gaussians (two each).
    pub fn is_adaptable(&self) -> bool {
        self.auto_samples.len() >= 2 && self.cross_samples.len() >= 2
    }

    /// At least one sample on each side, as confusion counting requires.
    pub fn is_evaluable(&self) -> bool {
        !self.auto_samples.is_empty() && !self.cross_samples.is_empty()
    }

    pub fn all_samples(&self) -> impl Iterator<Item = f64> + '_ {
        self.auto_samples.iter().chain(&self.cross_samples).copied()
    }
}

struct Prepared<'a> {
    label: &'a str,
    vectors: Vec<(&'a [f64], f64)>,
}

fn prepare(gallery: &Gallery) -> Vec<Prepared<'_>> {
    gallery
        .identities()
        .map(|(label, embeddings)| Prepared {
            label,
            vectors: embeddings
                .iter()
                .map(|e| (e.vector.as_slice(), norm(&e.vector)))
                .collect(),
        })
        .collect()
}

fn auto_max(p: &Prepared<'_>) -> Option<f64> {
    let v = &p.vectors;
    let mut best: Option<f64> = None;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            let s = cosine_with_norms(v[i].0, v[i].1, v[j].0, v[j].1);
            best = Some(best.map_or(s, |b| b.max(s)));
        }
    }
    best
}

fn cross_max(a: &Prepared<'_>, b: &Prepared<'_>) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for &(x, nx) in &a.vectors {
        for &(y, ny) in &b.vectors {
            best = best.max(cosine_with_norms(x, nx, y, ny));
        }
    }
    best
}

/// Every auto pair (identities with two or more embeddings) followed by every
/// cross pair, both in label order.
pub fn build_pairs(gallery: &Gallery) -> Vec<IdentityPair> {
    let prepared = prepare(gallery);
    let mut pairs = Vec::new();
    for p in &prepared {
        if let Some(s_max) = auto_max(p) {
            pairs.push(IdentityPair {
                kind: PairKind::Auto,
                first: p.label.to_string(),
                second: p.label.to_string(),
                s_max,
            });
        }
    }
    for (i, a) in prepared.iter().enumerate() {
        for b in &prepared[i + 1..] {
            pairs.push(IdentityPair {
                kind: PairKind::Cross,
                first: a.label.to_string(),
                second: b.label.to_string(),
                s_max: cross_max(a, b),
            });
        }
    }
    pairs
}

/// Auto and cross `s_max` samples of the gallery.
///
/// An embedding is never paired with itself, but two distinct embeddings with
/// identical coordinates are. The result can have no auto samples when no
/// identity owns two embeddings; check [`SimilarityDistributions::is_adaptable`].
pub fn build_distributions(gallery: &Gallery) -> Result<SimilarityDistributions, SimilarityError> {
    if gallery.identity_count() < 2 {
        return Err(SimilarityError::TooFewIdentities(gallery.identity_count()));
    }
    let mut auto_samples = Vec::new();
    let mut cross_samples = Vec::new();
    for pair in build_pairs(gallery) {
        match pair.kind {
            PairKind::Auto => auto_samples.push(pair.s_max),
            PairKind::Cross => cross_samples.push(pair.s_max),
        }
    }
    Ok(SimilarityDistributions {
        auto_samples,
        cross_samples,
        gallery_version: gallery.change_counter(),
    })
}

//! Identity gallery: labelled embeddings, mutation bookkeeping and query matching.

mod io;

pub use io::EmbeddingSet;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::similarity::{dot, norm};

#[derive(Debug, Error)]
pub enum GalleryError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("embedding dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("zero-norm vector rejected")]
    ZeroNorm,
    #[error("vector contains a non-finite value")]
    NonFinite,
    #[error("duplicate instance id `{0}`")]
    DuplicateId(String),
    #[error("gallery is empty")]
    Empty,
    #[error("malformed embedding file: {0}")]
    Malformed(String),
    #[error("unsupported file extension for `{0}` (expected .csv or .json)")]
    UnsupportedFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One feature vector tagged with its identity and a gallery-unique instance id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub identity: String,
    pub instance_id: String,
    pub vector: Vec<f64>,
}

impl Embedding {
    pub fn new(
        identity: impl Into<String>,
        instance_id: impl Into<String>,
        vector: Vec<f64>,
    ) -> Self {
        Self {
            identity: identity.into(),
            instance_id: instance_id.into(),
            vector,
        }
    }
}

/// Outcome of matching one query against the gallery.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchResult {
    pub matched: bool,
    pub identity: Option<String>,
    pub best_similarity: f64,
    /// Label of the most similar identity regardless of the threshold.
    pub nearest: String,
}

/// Mutable store of identities, each owning one or more embeddings.
///
/// Vectors are kept exactly as ingested; cosine similarity normalizes on the fly.
/// Every successful mutation bumps `change_counter`, which readers use as a
/// snapshot version.
#[derive(Debug, Clone)]
pub struct Gallery {
    dimension: usize,
    identities: BTreeMap<String, Vec<Embedding>>,
    // instance_id -> identity
    index: HashMap<String, String>,
    change_counter: u64,
    registrations_since_adapt: u64,
    removals_since_adapt: u64,
    next_seq: u64,
}

impl PartialEq for Gallery {
    /// Content equality: dimension, embeddings and the change counter.
    /// Adaptation bookkeeping is not part of a gallery's identity.
    fn eq(&self, other: &Self) -> bool {
        self.dimension == other.dimension
            && self.identities == other.identities
            && self.change_counter == other.change_counter
    }
}

impl Gallery {
    pub fn new(dimension: usize) -> Result<Self, GalleryError> {
        if dimension < 2 {
            return Err(GalleryError::DimensionTooSmall(dimension));
        }
        Ok(Self {
            dimension,
            identities: BTreeMap::new(),
            index: HashMap::new(),
            change_counter: 0,
            registrations_since_adapt: 0,
            removals_since_adapt: 0,
            next_seq: 0,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn change_counter(&self) -> u64 {
        self.change_counter
    }

    pub fn registrations_since_adapt(&self) -> u64 {
        self.registrations_since_adapt
    }

    pub fn removals_since_adapt(&self) -> u64 {
        self.removals_since_adapt
    }

    pub fn is_empty(&self) -> bool {
        self.identities.is_empty()
    }

    pub fn identity_count(&self) -> usize {
        self.identities.len()
    }

    pub fn embedding_count(&self) -> usize {
        self.index.len()
    }

    /// Identities in lexicographic label order.
    pub fn identities(&self) -> impl Iterator<Item = (&str, &[Embedding])> {
        self.identities
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn embeddings_of(&self, identity: &str) -> Option<&[Embedding]> {
        self.identities.get(identity).map(Vec::as_slice)
    }

    pub fn contains(&self, instance_id: &str) -> bool {
        self.index.contains_key(instance_id)
    }

    fn validate(&self, vector: &[f64]) -> Result<(), GalleryError> {
        if vector.len() != self.dimension {
            return Err(GalleryError::DimensionMismatch {
                expected: self.dimension,
                actual: vector.len(),
            });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(GalleryError::NonFinite);
        }
        if norm(vector) == 0.0 {
            return Err(GalleryError::ZeroNorm);
        }
        Ok(())
    }

    fn fresh_id(&mut self) -> String {
        loop {
            let id = format!("e{:08}", self.next_seq);
            self.next_seq += 1;
            if !self.index.contains_key(&id) {
                return id;
            }
        }
    }

    /// Stores `vector` under `identity`, creating the identity if needed.
    /// Returns the generated instance id.
    pub fn register(&mut self, identity: &str, vector: Vec<f64>) -> Result<String, GalleryError> {
        self.validate(&vector)?;
        let id = self.fresh_id();
        self.push(Embedding::new(identity, id.clone(), vector));
        Ok(id)
    }

    /// Stores an embedding that already carries its instance id.
    pub fn insert(&mut self, embedding: Embedding) -> Result<(), GalleryError> {
        self.validate(&embedding.vector)?;
        if self.index.contains_key(&embedding.instance_id) {
            return Err(GalleryError::DuplicateId(embedding.instance_id));
        }
        self.push(embedding);
        Ok(())
    }

    fn push(&mut self, embedding: Embedding) {
        self.index
            .insert(embedding.instance_id.clone(), embedding.identity.clone());
        self.identities
            .entry(embedding.identity.clone())
            .or_default()
            .push(embedding);
        self.change_counter += 1;
        self.registrations_since_adapt += 1;
    }

    /// Deletes an embedding by instance id. The identity goes away with its
    /// last embedding. Unknown ids are a no-op returning `false`.
    pub fn remove(&mut self, instance_id: &str) -> bool {
        let Some(identity) = self.index.remove(instance_id) else {
            return false;
        };
        let list = self
            .identities
            .get_mut(&identity)
            .expect("index and identity map out of sync");
        list.retain(|e| e.instance_id != instance_id);
        if list.is_empty() {
            self.identities.remove(&identity);
        }
        self.change_counter += 1;
        self.removals_since_adapt += 1;
        true
    }

    /// Clears the registration/removal counters after a successful adaptation.
    /// Not a content mutation: `change_counter` is untouched.
    pub fn mark_adapted(&mut self) {
        self.registrations_since_adapt = 0;
        self.removals_since_adapt = 0;
    }

    /// Exhaustive cosine match of `query` against every stored embedding.
    ///
    /// Ties on the best similarity go to the lexicographically smallest label.
    pub fn match_query(&self, query: &[f64], threshold: f64) -> Result<MatchResult, GalleryError> {
        if self.is_empty() {
            return Err(GalleryError::Empty);
        }
        self.validate(query)?;
        let qn = norm(query);
        let mut best: Option<(f64, &str)> = None;
        for (label, embeddings) in &self.identities {
            for e in embeddings {
                let s = (dot(query, &e.vector) / (qn * norm(&e.vector))).clamp(-1.0, 1.0);
                if best.is_none_or(|(b, _)| s > b) {
                    best = Some((s, label));
                }
            }
        }
        let (best_similarity, label) = best.expect("non-empty gallery");
        let matched = best_similarity >= threshold;
        Ok(MatchResult {
            matched,
            identity: matched.then(|| label.to_string()),
            best_similarity,
            nearest: label.to_string(),
        })
    }

    /// All embeddings in label order, then insertion order within a label.
    pub fn to_set(&self) -> EmbeddingSet {
        EmbeddingSet {
            dimension: self.dimension,
            embeddings: self.identities.values().flatten().cloned().collect(),
        }
    }

    /// Builds a gallery by inserting every embedding of `set` in order.
    pub fn from_set(set: &EmbeddingSet) -> Result<Self, GalleryError> {
        let mut g = Gallery::new(set.dimension)?;
        for e in &set.embeddings {
            g.insert(e.clone())?;
        }
        Ok(g)
    }

    pub(crate) fn set_change_counter(&mut self, counter: u64) {
        self.change_counter = counter;
    }
}

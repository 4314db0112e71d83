//! Adaptive decision thresholds for open-set identity matching.
//!
//! A [`Gallery`] holds identity-labelled embeddings. From it we derive the
//! distribution of maximum same-identity ("auto") and different-identity
//! ("cross") cosine similarities, fit a Gaussian to each, start from their
//! intersection and, when that threshold misses the f1 target, search
//! `[0, 1]` for the threshold that maximizes f1.
//!
//! Module map:
//!
//! - [`gallery`]: embedding storage, query matching, CSV/JSON persistence
//! - [`similarity`]: metric functions and auto/cross pairing
//! - [`stats`]: Gaussian estimates, intersection, initial threshold, histograms
//! - [`evaluation`]: confusion counts, precision/recall/f1, ROC and AUC
//! - [`optimizer`]: f1 maximization, the acceptance rule and the adapt loop
//! - [`harness`]: incremental experiments, synthetic data, export

pub mod evaluation;
pub mod gallery;
pub mod harness;
pub mod optimizer;
pub mod similarity;
pub mod stats;

mod format;

pub use evaluation::{
    confusion_at, metrics_at, roc_sweep, ConfusionCounts, MetricsReport, RocCurve, RocPoint,
    TprDenominator,
};
pub use gallery::{Embedding, EmbeddingSet, Gallery, GalleryError, MatchResult};
pub use optimizer::{
    adapt, maybe_adapt, optimize_f1, select_threshold, tpr_fpr_objective, AdaptConfig,
    AdaptOutcome, BoundMode, Objective, Provenance, SkipReason, ThresholdState,
};
pub use similarity::{
    build_distributions, cosine_distance, cosine_similarity, euclidean_distance,
    SimilarityDistributions,
};
pub use stats::{
    estimate_gaussian, gaussian_pdf, histogram, initialize_threshold, intersect_gaussians,
    GaussianEstimate, IntersectionResult,
};

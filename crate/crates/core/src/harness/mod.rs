//! Experiment protocol: grow a gallery one identity at a time, adapt after
//! each addition and compare the adaptive threshold with fixed ones.

mod export;
mod stream;
mod synth;

pub use export::{
    export_rows, export_summary, read_rows_csv, roc_export, write_roc_csv, write_rows_csv,
    ExportFormat,
};
pub use stream::{simulate_stream, StreamAction, StreamConfig, StreamEvent};
pub use synth::{generate_synthetic, SynthSpec};

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::evaluation::{roc_sweep_with, EvalError, SortedScores};
use crate::gallery::{EmbeddingSet, Gallery, GalleryError};
use crate::optimizer::{
    adapt_distributions, optimize, select_threshold, AdaptConfig, AdaptOutcome, ConfigError,
    Provenance, ThresholdState,
};
use crate::similarity::{build_distributions, SimilarityDistributions};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("need at least 2 identities, source has {0}")]
    TooFewIdentities(usize),
    #[error("neither of the first two identities has two or more embeddings")]
    NoInitialAutoPair,
    #[error("no rows to summarize")]
    EmptyRows,
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("invalid threshold kind `{0}`")]
    InvalidKind(String),
    #[error("malformed rows file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Gallery(#[from] GalleryError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdKind {
    Adaptive,
    Fixed(f64),
}

impl fmt::Display for ThresholdKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdKind::Adaptive => f.write_str("adaptive"),
            ThresholdKind::Fixed(v) => write!(f, "fixed@{v}"),
        }
    }
}

impl FromStr for ThresholdKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "adaptive" {
            return Ok(ThresholdKind::Adaptive);
        }
        s.strip_prefix("fixed@")
            .and_then(|v| v.parse().ok())
            .map(ThresholdKind::Fixed)
            .ok_or_else(|| HarnessError::InvalidKind(s.to_string()))
    }
}

impl Serialize for ThresholdKind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ThresholdKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Metrics of one threshold kind at one gallery size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    /// Number of identities in the gallery.
    pub step: usize,
    pub threshold_kind: ThresholdKind,
    pub lambda: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub auc: Option<f64>,
}

impl ExperimentRow {
    pub const FIELDS: [&'static str; 10] = [
        "step",
        "threshold_kind",
        "lambda",
        "precision",
        "recall",
        "f1",
        "accuracy",
        "tpr",
        "fpr",
        "auc",
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IdentityOrder {
    /// First appearance in the embedding file.
    #[default]
    Input,
    Shuffle {
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncrementalConfig {
    pub adapt: AdaptConfig,
    pub fixed: Vec<f64>,
    pub order: IdentityOrder,
    /// Compute a ROC curve at every step instead of only the last one.
    pub per_step_roc: bool,
    pub roc_points: usize,
}

impl Default for IncrementalConfig {
    fn default() -> Self {
        Self {
            adapt: AdaptConfig::default(),
            fixed: vec![0.3, 0.5, 0.7],
            order: IdentityOrder::Input,
            per_step_roc: false,
            roc_points: 1001,
        }
    }
}

/// What the adaptive threshold was at one step and how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub step: usize,
    pub state: ThresholdState,
    /// Set when the Gaussian stage could not run and the threshold came from
    /// the optimizer alone.
    pub fallback: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncrementalRun {
    pub rows: Vec<ExperimentRow>,
    pub trace: Vec<StepTrace>,
}

/// Used when the Gaussian initialization is degenerate (e.g. a single cross
/// sample at the first step): optimize directly, still guarded by the
/// acceptance rule against the prior threshold.
fn optimizer_only(
    dist: &SimilarityDistributions,
    prior: Option<&ThresholdState>,
    config: &AdaptConfig,
) -> Result<ThresholdState, EvalError> {
    let best = optimize(dist, config)?;
    let version = dist.gallery_version;
    Ok(match prior {
        None => ThresholdState::fresh(
            best.lambda,
            best.f1,
            Provenance::Optimized,
            version,
            config.tau,
        ),
        Some(p) => {
            let f1_prior = SortedScores::new(dist)?
                .confusion(p.lambda_current)
                .metrics(config.epsilon, config.tpr_denominator)
                .f1;
            let incumbent = ThresholdState::fresh(
                p.lambda_current,
                f1_prior,
                p.provenance,
                version,
                config.tau,
            );
            select_threshold(best.lambda, best.f1, &incumbent, config)
        }
    })
}

fn order_identities(set: &EmbeddingSet, order: IdentityOrder) -> Vec<&str> {
    let mut ids = set.identity_order();
    if let IdentityOrder::Shuffle { seed } = order {
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    ids
}

/// Starts from two identities and adds one identity (with all its embeddings)
/// per step. After each addition the threshold is adapted and every threshold
/// kind is evaluated on the current distributions.
pub fn run_incremental(
    set: &EmbeddingSet,
    config: &IncrementalConfig,
) -> Result<IncrementalRun, HarnessError> {
    config.adapt.validate()?;
    let ids = order_identities(set, config.order);
    if ids.len() < 2 {
        return Err(HarnessError::TooFewIdentities(ids.len()));
    }
    let count = |id: &str| set.embeddings.iter().filter(|e| e.identity == id).count();
    if ids[..2].iter().all(|id| count(id) < 2) {
        return Err(HarnessError::NoInitialAutoPair);
    }

    let mut gallery = Gallery::new(set.dimension)?;
    let mut state: Option<ThresholdState> = None;
    let mut rows = Vec::new();
    let mut trace = Vec::new();
    let cfg = &config.adapt;

    for (i, id) in ids.iter().enumerate() {
        for e in set.embeddings.iter().filter(|e| e.identity == *id) {
            gallery.insert(e.clone())?;
        }
        if i == 0 {
            continue;
        }
        let step = i + 1;
        let dist = build_distributions(&gallery).expect("two or more identities");

        let (next, fallback) = match adapt_distributions(&dist, state.as_ref(), cfg) {
            AdaptOutcome::Adapted(s) => (s, None),
            AdaptOutcome::Skipped { reason, .. } => (
                optimizer_only(&dist, state.as_ref(), cfg)?,
                Some(reason.to_string()),
            ),
            AdaptOutcome::NotTriggered(s) => (s, None),
        };
        gallery.mark_adapted();

        let last = i + 1 == ids.len();
        let auc = if config.per_step_roc || last {
            Some(roc_sweep_with(&dist, config.roc_points, cfg.epsilon, cfg.tpr_denominator)?.auc)
        } else {
            None
        };

        let scores = SortedScores::new(&dist)?;
        let kinds = std::iter::once((ThresholdKind::Adaptive, next.lambda_current))
            .chain(config.fixed.iter().map(|&v| (ThresholdKind::Fixed(v), v)));
        for (kind, lambda) in kinds {
            let m = scores
                .confusion(lambda)
                .metrics(cfg.epsilon, cfg.tpr_denominator);
            rows.push(ExperimentRow {
                step,
                threshold_kind: kind,
                lambda,
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
                accuracy: m.accuracy,
                tpr: m.tpr,
                fpr: m.fpr,
                auc,
            });
        }
        trace.push(StepTrace {
            step,
            state: next.clone(),
            fallback,
        });
        state = Some(next);
    }
    Ok(IncrementalRun { rows, trace })
}

/// f1 level counted by the summary's "f1 >= 0.8" column.
pub const F1_REPORT_LEVEL: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub threshold_kind: ThresholdKind,
    pub steps: usize,
    /// Mean over steps of accuracy, in percent.
    pub mean_accuracy_pct: f64,
    /// AUC of the final step's ROC curve, shared by all kinds.
    pub auc: Option<f64>,
    /// Share of steps with f1 >= 0.8, in percent.
    pub f1_at_least_0_8_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeImprovement {
    pub baseline: ThresholdKind,
    /// `(acc_adaptive − acc_baseline) / acc_baseline × 100`; absent when the
    /// baseline accuracy is zero.
    pub pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub kinds: Vec<KindSummary>,
    pub relative_accuracy_improvement: Vec<RelativeImprovement>,
    pub accuracy_aggregation: String,
    pub auc_source: String,
}

impl SummaryReport {
    pub fn kind(&self, kind: ThresholdKind) -> Option<&KindSummary> {
        self.kinds.iter().find(|k| k.threshold_kind == kind)
    }
}

/// Per-kind aggregates, kinds in order of first appearance.
pub fn summarize(rows: &[ExperimentRow]) -> Result<SummaryReport, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::EmptyRows);
    }
    let mut kinds: Vec<ThresholdKind> = Vec::new();
    for r in rows {
        if !kinds.contains(&r.threshold_kind) {
            kinds.push(r.threshold_kind);
        }
    }
    let summaries: Vec<KindSummary> = kinds
        .iter()
        .map(|&kind| {
            let of_kind: Vec<&ExperimentRow> =
                rows.iter().filter(|r| r.threshold_kind == kind).collect();
            let n = of_kind.len() as f64;
            let final_row = of_kind.iter().max_by_key(|r| r.step).expect("non-empty");
            KindSummary {
                threshold_kind: kind,
                steps: of_kind.len(),
                mean_accuracy_pct: of_kind.iter().map(|r| r.accuracy).sum::<f64>() / n * 100.0,
                auc: final_row.auc,
                f1_at_least_0_8_pct: of_kind.iter().filter(|r| r.f1 >= F1_REPORT_LEVEL).count()
                    as f64
                    / n
                    * 100.0,
            }
        })
        .collect();

    let relative = match summaries
        .iter()
        .find(|s| s.threshold_kind == ThresholdKind::Adaptive)
    {
        Some(adaptive) => summaries
            .iter()
            .filter(|s| s.threshold_kind != ThresholdKind::Adaptive)
            .map(|s| RelativeImprovement {
                baseline: s.threshold_kind,
                pct: (s.mean_accuracy_pct != 0.0).then(|| {
                    (adaptive.mean_accuracy_pct - s.mean_accuracy_pct) / s.mean_accuracy_pct * 100.0
                }),
            })
            .collect(),
        None => Vec::new(),
    };

    Ok(SummaryReport {
        kinds: summaries,
        relative_accuracy_improvement: relative,
        accuracy_aggregation: "mean_over_steps".into(),
        auc_source: "final_step_roc".into(),
    })
}

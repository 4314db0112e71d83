//! Threshold search and the adaptation loop.
//!
//! f1 over a finite sample set is piecewise constant in `lambda`: it only
//! changes when `lambda` crosses a sample value. Every maximal interval of
//! constant counts (a *plateau*) is represented by its midpoint, so scanning
//! all plateau midpoints finds the exact optimum. A coarse grid followed by
//! golden-section refinement covers sample sets too large to enumerate.

use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{ConfusionCounts, EvalError, SortedScores, TprDenominator};
use crate::gallery::Gallery;
use crate::similarity::{build_distributions, SimilarityDistributions};
use crate::stats::{
    estimate_gaussian, initialize_threshold, intersect_gaussians, InitSource, StatsError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    F1,
    /// `|TPR − FPR|`.
    TprFprGap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    /// Search all of `[0, 1]`.
    #[default]
    #[serde(rename = "unbounded_01")]
    Unbounded01,
    /// Search `[μ_cross, μ_auto] ∩ [0, 1]`.
    MeansBounded,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("tau must lie in (0, 1], got {0}")]
    Tau(f64),
    #[error("epsilon must be finite and non-negative, got {0}")]
    Epsilon(f64),
    #[error("grid_points must be at least 3, got {0}")]
    GridPoints(usize),
    #[error("recompute_every_n must be positive")]
    RecomputeEvery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptConfig {
    /// f1 target; an initial threshold reaching it is accepted without search.
    pub tau: f64,
    pub epsilon: f64,
    pub grid_points: usize,
    pub refine_iters: usize,
    pub recompute_every_n: u64,
    pub objective: Objective,
    pub bound_mode: BoundMode,
    pub tpr_denominator: TprDenominator,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            tau: 0.8,
            epsilon: 1e-9,
            grid_points: 512,
            refine_iters: 64,
            recompute_every_n: 1,
            objective: Objective::F1,
            bound_mode: BoundMode::Unbounded01,
            tpr_denominator: TprDenominator::Standard,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(ConfigError::Tau(self.tau));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(ConfigError::Epsilon(self.epsilon));
        }
        if self.grid_points < 3 {
            return Err(ConfigError::GridPoints(self.grid_points));
        }
        if self.recompute_every_n == 0 {
            return Err(ConfigError::RecomputeEvery);
        }
        Ok(())
    }

    fn f1(&self, c: &ConfusionCounts) -> f64 {
        c.metrics(self.epsilon, self.tpr_denominator).f1
    }

    fn score(&self, c: &ConfusionCounts) -> f64 {
        match self.objective {
            Objective::F1 => self.f1(c),
            Objective::TprFprGap => {
                let m = c.metrics(self.epsilon, self.tpr_denominator);
                (m.tpr - m.fpr).abs()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Intersection,
    MeanFallback,
    Optimized,
    RetainedOld,
}

impl From<InitSource> for Provenance {
    fn from(s: InitSource) -> Self {
        match s {
            InitSource::Intersection => Provenance::Intersection,
            InitSource::MeanFallback => Provenance::MeanFallback,
        }
    }
}

/// The working threshold and the one it replaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdState {
    pub lambda_current: f64,
    pub lambda_old: f64,
    pub f1_current: f64,
    pub f1_old: f64,
    pub provenance: Provenance,
    pub gallery_version: u64,
    pub tau: f64,
}

impl ThresholdState {
    /// A state with no history: `lambda_old = lambda`.
    pub fn fresh(
        lambda: f64,
        f1: f64,
        provenance: Provenance,
        gallery_version: u64,
        tau: f64,
    ) -> Self {
        Self {
            lambda_current: lambda,
            lambda_old: lambda,
            f1_current: f1,
            f1_old: f1,
            provenance,
            gallery_version,
            tau,
        }
    }
}

/// Best threshold found by a search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Optimum {
    pub lambda: f64,
    /// f1 at `lambda`, whatever the objective was.
    pub f1: f64,
    /// Value of the configured objective at `lambda`.
    pub objective_value: f64,
}

/// Above this many distinct sample values the grid + golden-section path is used.
pub const EXACT_SCAN_LIMIT: usize = 100_000;

/// Search interval for the configured bound mode.
pub fn search_bounds(dist: &SimilarityDistributions, config: &AdaptConfig) -> (f64, f64) {
    match config.bound_mode {
        BoundMode::Unbounded01 => (0.0, 1.0),
        BoundMode::MeansBounded => {
            let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
            let (mc, ma) = (mean(&dist.cross_samples), mean(&dist.auto_samples));
            let lo = mc.min(ma).clamp(0.0, 1.0);
            let hi = mc.max(ma).clamp(0.0, 1.0);
            (lo, hi)
        }
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + 0.5 * (b - a);
    if m <= a {
        b
    } else {
        m
    }
}

/// Breakpoints (distinct sample values) that split `[lo, hi]` into plateaus.
fn breakpoints(values: &[f64], lo: f64, hi: f64) -> &[f64] {
    let start = values.partition_point(|&v| v < lo);
    let end = values.partition_point(|&v| v < hi);
    &values[start..end.max(start)]
}

/// One representative threshold per plateau of `[lo, hi]`, ascending.
///
/// With breakpoints `v₁ < … < vₖ` in `[lo, hi)` the plateaus are
/// `[lo, v₁], (v₁, v₂], …, (vₖ, hi]`.
pub fn plateau_midpoints(values: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let bps = breakpoints(values, lo, hi);
    let Some(&first) = bps.first() else {
        return vec![midpoint(lo, hi).min(hi)];
    };
    let mut out = Vec::with_capacity(bps.len() + 1);
    out.push(lo + 0.5 * (first - lo));
    for w in bps.windows(2) {
        out.push(midpoint(w[0], w[1]));
    }
    out.push(midpoint(bps[bps.len() - 1], hi));
    out
}

/// Moves `lambda` to the midpoint of the plateau containing it.
fn snap_to_plateau(values: &[f64], lo: f64, hi: f64, lambda: f64) -> f64 {
    let bps = breakpoints(values, lo, hi);
    let lambda = lambda.clamp(lo, hi);
    // First breakpoint >= lambda closes the plateau.
    let k = bps.partition_point(|&v| v < lambda);
    let upper = bps.get(k).copied().unwrap_or(hi);
    match k.checked_sub(1).map(|i| bps[i]) {
        None => lo + 0.5 * (upper - lo),
        Some(below) => midpoint(below, upper),
    }
}

fn argmax(
    candidates: impl IntoIterator<Item = f64>,
    mut eval: impl FnMut(f64) -> f64,
) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for lambda in candidates {
        let v = eval(lambda);
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((lambda, v));
        }
    }
    best
}

fn finish(scores: &SortedScores, config: &AdaptConfig, lambda: f64) -> Optimum {
    let c = scores.confusion(lambda);
    Optimum {
        lambda,
        f1: config.f1(&c),
        objective_value: config.score(&c),
    }
}

/// Exact search: evaluates every plateau midpoint. Ties go to the smallest `lambda`.
pub fn optimize_plateau_scan(
    dist: &SimilarityDistributions,
    config: &AdaptConfig,
) -> Result<Optimum, EvalError> {
    let scores = SortedScores::new(dist)?;
    let (lo, hi) = search_bounds(dist, config);
    let values = scores.distinct_values();
    let (lambda, _) = argmax(plateau_midpoints(&values, lo, hi), |l| {
        config.score(&scores.confusion(l))
    })
    .expect("at least one plateau");
    Ok(finish(&scores, config, lambda))
}

/// Coarse scan over `grid_points` thresholds, then golden-section refinement
/// within the neighbouring grid cells of the best point. The result is moved
/// to the midpoint of its plateau.
pub fn optimize_grid_golden(
    dist: &SimilarityDistributions,
    config: &AdaptConfig,
) -> Result<Optimum, EvalError> {
    let scores = SortedScores::new(dist)?;
    let (lo, hi) = search_bounds(dist, config);
    let n = config.grid_points.max(3);
    let step = (hi - lo) / (n - 1) as f64;
    let grid = |i: usize| if i + 1 == n { hi } else { lo + step * i as f64 };
    let eval = |l: f64| config.score(&scores.confusion(l));

    let (best_idx, mut best) = argmax((0..n).map(|i| i as f64), |i| eval(grid(i as usize)))
        .map(|(i, v)| (i as usize, v))
        .expect("grid is non-empty");
    let mut best_lambda = grid(best_idx);

    let (mut a, mut b) = (
        grid(best_idx.saturating_sub(1)),
        grid((best_idx + 1).min(n - 1)),
    );
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let (mut f1, mut f2) = (eval(x1), eval(x2));
    for _ in 0..config.refine_iters {
        for (x, fx) in [(x1, f1), (x2, f2)] {
            if fx > best {
                best = fx;
                best_lambda = x;
            }
        }
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = eval(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = eval(x2);
        }
    }
    for (x, fx) in [(x1, f1), (x2, f2)] {
        if fx > best {
            best = fx;
            best_lambda = x;
        }
    }

    let values = scores.distinct_values();
    let lambda = snap_to_plateau(&values, lo, hi, best_lambda);
    Ok(finish(&scores, config, lambda))
}

/// Threshold maximizing the configured objective within the configured bounds.
///
/// Exact plateau scan up to [`EXACT_SCAN_LIMIT`] distinct values, grid +
/// golden section beyond.
pub fn optimize(
    dist: &SimilarityDistributions,
    config: &AdaptConfig,
) -> Result<Optimum, EvalError> {
    let distinct = dist.auto_samples.len() + dist.cross_samples.len();
    if distinct <= EXACT_SCAN_LIMIT {
        optimize_plateau_scan(dist, config)
    } else {
        optimize_grid_golden(dist, config)
    }
}

/// `(lambda, f1)` maximizing f1, regardless of `config.objective`.
pub fn optimize_f1(
    dist: &SimilarityDistributions,
    config: &AdaptConfig,
) -> Result<(f64, f64), EvalError> {
    let cfg = AdaptConfig {
        objective: Objective::F1,
        ..config.clone()
    };
    let o = optimize(dist, &cfg)?;
    Ok((o.lambda, o.f1))
}

/// `|TPR(λ) − FPR(λ)|` with the standard TPR denominator.
pub fn tpr_fpr_objective(
    dist: &SimilarityDistributions,
    lambda: f64,
    epsilon: f64,
) -> Result<f64, EvalError> {
    let m = crate::evaluation::metrics_at(dist, lambda, epsilon)?;
    Ok((m.tpr - m.fpr).abs())
}

/// Acceptance rule, first matching case wins:
/// 1. candidate f1 reaches `tau`: take the candidate;
/// 2. candidate f1 is at least the incumbent's: take the candidate;
/// 3. otherwise keep the incumbent.
///
/// The incumbent's `lambda_current` becomes the new `lambda_old`.
pub fn select_threshold(
    lambda_candidate: f64,
    f1_candidate: f64,
    state: &ThresholdState,
    config: &AdaptConfig,
) -> ThresholdState {
    let accept = f1_candidate >= config.tau || f1_candidate >= state.f1_current;
    let (lambda_current, f1_current, provenance) = if accept {
        (lambda_candidate, f1_candidate, Provenance::Optimized)
    } else {
        (
            state.lambda_current,
            state.f1_current,
            Provenance::RetainedOld,
        )
    };
    ThresholdState {
        lambda_current,
        lambda_old: state.lambda_current,
        f1_current,
        f1_old: state.f1_current,
        provenance,
        gallery_version: state.gallery_version,
        tau: config.tau,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Auto,
    Cross,
}

/// Why an adaptation was skipped.
#[derive(Debug, Clone, PartialEq, Error, Serialize)]
pub enum SkipReason {
    #[error("gallery has {0} identities; at least 2 are needed")]
    TooFewIdentities(usize),
    #[error("need at least 2 auto and 2 cross samples, have {auto} auto and {cross} cross")]
    InsufficientSamples { auto: usize, cross: usize },
    #[error("{0:?} similarities have zero variance")]
    ZeroVariance(Side),
    #[error("auto and cross distributions are indistinguishable")]
    IdenticalDistributions,
    #[error("mean auto similarity {auto} does not exceed mean cross similarity {cross}")]
    AutoNotAboveCross { auto: f64, cross: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum AdaptOutcome {
    /// A new state was computed for the current gallery.
    Adapted(ThresholdState),
    /// The data could not support adaptation; the prior state stands.
    Skipped {
        prior: Option<ThresholdState>,
        reason: SkipReason,
    },
    /// `maybe_adapt` decided no recomputation was due.
    NotTriggered(ThresholdState),
}

impl AdaptOutcome {
    pub fn state(&self) -> Option<&ThresholdState> {
        match self {
            AdaptOutcome::Adapted(s) | AdaptOutcome::NotTriggered(s) => Some(s),
            AdaptOutcome::Skipped { prior, .. } => prior.as_ref(),
        }
    }

    pub fn into_state(self) -> Option<ThresholdState> {
        match self {
            AdaptOutcome::Adapted(s) | AdaptOutcome::NotTriggered(s) => Some(s),
            AdaptOutcome::Skipped { prior, .. } => prior,
        }
    }
}

fn stats_skip(side: Side, e: StatsError) -> SkipReason {
    match e {
        StatsError::TooFewSamples(_) | StatsError::ZeroVariance | StatsError::NonFinite => {
            SkipReason::ZeroVariance(side)
        }
        StatsError::IdenticalDistributions => SkipReason::IdenticalDistributions,
        StatsError::AutoNotAboveCross { auto, cross } => {
            SkipReason::AutoNotAboveCross { auto, cross }
        }
        StatsError::EmptyHistogram => unreachable!("not produced by estimation"),
    }
}

/// The adaptation pipeline on precomputed distributions.
///
/// Gaussian fit of both sides, their intersection as the initial threshold,
/// and a direct accept when its f1 reaches `tau` (and does not fall below the
/// incumbent's). Otherwise the optimizer runs and [`select_threshold`]
/// decides against the incumbent. The incumbent is the initial threshold at
/// cold start; with a prior state, whichever of the prior threshold and the
/// initial threshold scores the higher f1 on these distributions.
pub fn adapt_distributions(
    dist: &SimilarityDistributions,
    prior: Option<&ThresholdState>,
    config: &AdaptConfig,
) -> AdaptOutcome {
    let skip = |reason| AdaptOutcome::Skipped {
        prior: prior.cloned(),
        reason,
    };
    if !dist.is_adaptable() {
        return skip(SkipReason::InsufficientSamples {
            auto: dist.auto_samples.len(),
            cross: dist.cross_samples.len(),
        });
    }
    let auto = match estimate_gaussian(&dist.auto_samples) {
        Ok(g) => g,
        Err(e) => return skip(stats_skip(Side::Auto, e)),
    };
    let cross = match estimate_gaussian(&dist.cross_samples) {
        Ok(g) => g,
        Err(e) => return skip(stats_skip(Side::Cross, e)),
    };
    let init = match intersect_gaussians(&auto, &cross)
        .and_then(|r| initialize_threshold(&r, &auto, &cross))
    {
        Ok(t) => t,
        Err(e) => return skip(stats_skip(Side::Auto, e)),
    };

    let scores = SortedScores::new(dist).expect("adaptable distributions are non-empty");
    let version = dist.gallery_version;
    let f1_at = |l: f64| config.f1(&scores.confusion(l));
    let f1_init = f1_at(init.lambda);

    let mut incumbent = ThresholdState::fresh(
        init.lambda,
        f1_init,
        init.source.into(),
        version,
        config.tau,
    );
    if let Some(p) = prior {
        let f1_prior = f1_at(p.lambda_current);
        if f1_prior > f1_init {
            incumbent = ThresholdState::fresh(
                p.lambda_current,
                f1_prior,
                p.provenance,
                version,
                config.tau,
            );
        }
    }

    if f1_init >= config.tau && f1_init >= incumbent.f1_current {
        let (lambda_old, f1_old) = match prior {
            Some(p) => (p.lambda_current, f1_at(p.lambda_current)),
            None => (init.lambda, f1_init),
        };
        return AdaptOutcome::Adapted(ThresholdState {
            lambda_current: init.lambda,
            lambda_old,
            f1_current: f1_init,
            f1_old,
            provenance: init.source.into(),
            gallery_version: version,
            tau: config.tau,
        });
    }

    let candidate = optimize(dist, config).expect("adaptable distributions are non-empty");
    AdaptOutcome::Adapted(select_threshold(
        candidate.lambda,
        candidate.f1,
        &incumbent,
        config,
    ))
}

/// Runs the pipeline against a gallery snapshot without touching it.
pub fn adapt_snapshot(
    gallery: &Gallery,
    prior: Option<&ThresholdState>,
    config: &AdaptConfig,
) -> AdaptOutcome {
    match build_distributions(gallery) {
        Ok(dist) => adapt_distributions(&dist, prior, config),
        Err(_) => AdaptOutcome::Skipped {
            prior: prior.cloned(),
            reason: SkipReason::TooFewIdentities(gallery.identity_count()),
        },
    }
}

/// Adapts to the gallery and, on success, clears its registration counters.
pub fn adapt(
    gallery: &mut Gallery,
    prior: Option<&ThresholdState>,
    config: &AdaptConfig,
) -> AdaptOutcome {
    let outcome = adapt_snapshot(gallery, prior, config);
    if matches!(outcome, AdaptOutcome::Adapted(_)) {
        gallery.mark_adapted();
    }
    outcome
}

/// Adapts when due: no state yet, at least `recompute_every_n` registrations
/// since the last adaptation, or any removal since the state was computed.
pub fn maybe_adapt(
    gallery: &mut Gallery,
    state: Option<ThresholdState>,
    config: &AdaptConfig,
) -> AdaptOutcome {
    let due = match &state {
        None => true,
        Some(s) => {
            gallery.registrations_since_adapt() >= config.recompute_every_n
                || (gallery.removals_since_adapt() > 0
                    && s.gallery_version != gallery.change_counter())
        }
    };
    if due {
        adapt(gallery, state.as_ref(), config)
    } else {
        AdaptOutcome::NotTriggered(state.expect("due when absent"))
    }
}

/// Holder that publishes whole states: readers see the old or the new one.
#[derive(Debug, Clone, Default)]
pub struct ThresholdCell {
    inner: Arc<RwLock<Option<Arc<ThresholdState>>>>,
}

impl ThresholdCell {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn publish(&self, state: ThresholdState) {
        *self.inner.write().expect("lock poisoned") = Some(Arc::new(state));
    }

    pub fn current(&self) -> Option<Arc<ThresholdState>> {
        self.inner.read().expect("lock poisoned").clone()
    }
}

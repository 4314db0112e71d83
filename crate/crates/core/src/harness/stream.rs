//! Online simulation: queries arrive one by one against a live gallery.

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::gallery::{EmbeddingSet, Gallery};
use crate::optimizer::{maybe_adapt, AdaptConfig, AdaptOutcome, ThresholdState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamConfig {
    /// Register unmatched queries as new identities (`unknown-0`, `unknown-1`, …).
    pub auto_register: bool,
    /// Add matched queries to the identity they matched.
    pub append_matched: bool,
    /// Threshold used until the first successful adaptation.
    pub initial_threshold: f64,
    pub adapt: AdaptConfig,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            auto_register: false,
            append_matched: false,
            initial_threshold: 0.5,
            adapt: AdaptConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamAction {
    Matched,
    AppendedToMatch,
    RegisteredNew,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamEvent {
    pub index: usize,
    pub instance_id: String,
    pub true_identity: String,
    pub predicted_identity: Option<String>,
    pub best_similarity: f64,
    pub lambda_used: f64,
    pub action: StreamAction,
    /// A match to the right identity, or a rejection of someone not enrolled.
    pub correct: bool,
    /// Threshold in force after this event (and any adaptation it caused).
    pub lambda_after: f64,
}

/// Feeds `queries` in order through a gallery seeded with `seed`.
///
/// The gallery is adapted once up front (if it supports it) and again via
/// [`maybe_adapt`] after every mutation.
pub fn simulate_stream(
    seed: &EmbeddingSet,
    queries: &EmbeddingSet,
    config: &StreamConfig,
) -> Result<(Vec<StreamEvent>, Option<ThresholdState>), HarnessError> {
    config.adapt.validate()?;
    let mut gallery = Gallery::from_set(seed)?;
    let mut state = maybe_adapt(&mut gallery, None, &config.adapt).into_state();
    let mut unknown = 0usize;
    let mut events = Vec::with_capacity(queries.embeddings.len());

    for (index, q) in queries.embeddings.iter().enumerate() {
        let lambda_used = state
            .as_ref()
            .map_or(config.initial_threshold, |s| s.lambda_current);
        let enrolled = gallery.embeddings_of(&q.identity).is_some();
        let m = gallery.match_query(&q.vector, lambda_used)?;
        let correct = match &m.identity {
            Some(id) if m.matched => *id == q.identity,
            _ => !enrolled,
        };

        let action = if m.matched {
            if config.append_matched {
                let id = m.identity.clone().expect("matched implies identity");
                gallery.register(&id, q.vector.clone())?;
                StreamAction::AppendedToMatch
            } else {
                StreamAction::Matched
            }
        } else if config.auto_register {
            gallery.register(&format!("unknown-{unknown}"), q.vector.clone())?;
            unknown += 1;
            StreamAction::RegisteredNew
        } else {
            StreamAction::Rejected
        };

        if matches!(
            action,
            StreamAction::AppendedToMatch | StreamAction::RegisteredNew
        ) {
            match maybe_adapt(&mut gallery, state.clone(), &config.adapt) {
                AdaptOutcome::Adapted(s) | AdaptOutcome::NotTriggered(s) => state = Some(s),
                AdaptOutcome::Skipped { .. } => {}
            }
        }

        events.push(StreamEvent {
            index,
            instance_id: q.instance_id.clone(),
            true_identity: q.identity.clone(),
            predicted_identity: if m.matched { m.identity } else { None },
            best_similarity: m.best_similarity,
            lambda_used,
            action,
            correct,
            lambda_after: state
                .as_ref()
                .map_or(config.initial_threshold, |s| s.lambda_current),
        });
    }
    Ok((events, state))
}

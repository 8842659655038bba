//! Designers and other external actors, modelled stochastically.
//!
//! Externals correct the agent with a probability that falls as the perceived
//! alignment of its current state rises. A correction hands the agent a
//! knowledge fact about its hidden utility, which it cannot forget.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::state::{Action, ActionId, ActionKind, Environment, Flag, StateId};
use crate::valuation::{FactSource, KnowledgeFact, ScoreTable, ValuationError};

pub const DEFAULT_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ExternalError {
    #[error("action `{0}` is not deceptive")]
    NotDeceptive(ActionId),
    #[error(transparent)]
    Valuation(#[from] ValuationError),
    #[error("invalid external-actor parameter: {0}")]
    InvalidParam(String),
}

/// Functional form of "correction probability falls with perceived alignment".
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionMapping {
    /// `min(1, c / max(i, eps))`
    #[default]
    Inverse,
    /// `1 - clamp(i, 0, 1)`
    Complement,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExternalActorModel {
    pub mapping: CorrectionMapping,
    pub c: f64,
    pub eps: f64,
    /// Deception success probability per deceptive action.
    pub detection: BTreeMap<ActionId, f64>,
    /// Fact-units handed over per correction.
    pub feedback_weight: f64,
    /// When false, a state yields at most one correction per run.
    pub repeat_feedback: bool,
}

impl Default for ExternalActorModel {
    fn default() -> Self {
        Self {
            mapping: CorrectionMapping::Inverse,
            c: 0.1,
            eps: DEFAULT_EPS,
            detection: BTreeMap::new(),
            feedback_weight: 1.0,
            repeat_feedback: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeedbackEvent {
    pub state: StateId,
    pub fact: KnowledgeFact,
}

impl ExternalActorModel {
    pub fn new(mapping: CorrectionMapping, c: f64, feedback_weight: f64) -> Result<Self, ExternalError> {
        if !(c.is_finite() && c > 0.0) {
            return Err(ExternalError::InvalidParam(format!("c must be positive, got {c}")));
        }
        if !(feedback_weight.is_finite() && feedback_weight > 0.0) {
            return Err(ExternalError::InvalidParam(format!(
                "feedback_weight must be positive, got {feedback_weight}"
            )));
        }
        Ok(Self { mapping, c, feedback_weight, ..Self::default() })
    }

    pub fn correction_probability(&self, i_score: f64) -> f64 {
        match self.mapping {
            CorrectionMapping::Inverse => (self.c / i_score.max(self.eps)).min(1.0),
            CorrectionMapping::Complement => 1.0 - i_score.clamp(0.0, 1.0),
        }
    }

    /// Correction probability of `s` as judged through `judge`.
    pub fn state_correction_probability(&self, judge: &ScoreTable, s: &StateId) -> Result<f64, ExternalError> {
        Ok(self.correction_probability(judge.score(s)?))
    }

    pub fn feedback_event(&self, s: &StateId) -> FeedbackEvent {
        FeedbackEvent {
            state: s.clone(),
            fact: KnowledgeFact {
                source: FactSource::ExternalFeedback,
                weight: self.feedback_weight,
                payload: format!("corrected at {s}"),
            },
        }
    }

    /// Draws one variate; emits a correction with the state's correction
    /// probability.
    pub fn maybe_correct<R: Rng + ?Sized>(
        &self,
        s: &StateId,
        judge: &ScoreTable,
        rng: &mut R,
    ) -> Result<Option<FeedbackEvent>, ExternalError> {
        let p = self.state_correction_probability(judge, s)?;
        let draw: f64 = rng.random();
        Ok((draw < p).then(|| self.feedback_event(s)))
    }

    /// Probability that `a` fools every external actor. Falls back to the
    /// action's own success probability when no detection entry exists.
    pub fn deception_success(&self, a: &Action) -> f64 {
        self.detection.get(&a.id).copied().unwrap_or(a.p_success)
    }

    /// `true` when the deception goes unnoticed.
    pub fn detect_deception<R: Rng + ?Sized>(&self, a: &Action, rng: &mut R) -> Result<bool, ExternalError> {
        if a.kind != ActionKind::Deceptive {
            return Err(ExternalError::NotDeceptive(a.id.clone()));
        }
        let draw: f64 = rng.random();
        Ok(draw < self.deception_success(a))
    }
}

pub fn stop_pressed(env: &Environment, s: &StateId, actor_active: bool) -> bool {
    actor_active && env.has_flag(s, Flag::StopButton)
}

//! Score tables, the black-box hidden utility, and the knowledge ledger.
//!
//! The agent's full utility of a state is the hidden score minus the penalty
//! carried by everything it has learned about that hidden score:
//! `u(s, K) = u'(s) - lambda * sum(weights in K)`.
//!
//! [`HiddenUtility`] only answers point queries through an open
//! [`PlanningEpisode`]; there is no way to enumerate or serialize the table
//! behind it. Closing an episode wipes its scratchpad.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::state::{Environment, StateId};

#[derive(Debug, Error, PartialEq)]
pub enum ValuationError {
    #[error("planning episode is closed")]
    EpisodeClosed,
    #[error("no score for state `{0}`")]
    MissingScore(StateId),
    #[error("score for state `{state}` is not finite ({value})")]
    NonFinite { state: StateId, value: f64 },
    #[error("knowledge fact weight must be positive, got {0}")]
    InvalidFact(f64),
    #[error("penalty weight must be finite and nonnegative, got {0}")]
    InvalidLambda(f64),
}

/// Total mapping from state ids to finite reals.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreTable(BTreeMap<StateId, f64>);

impl ScoreTable {
    pub fn new<I, K>(entries: I) -> Result<Self, ValuationError>
    where
        I: IntoIterator<Item = (K, f64)>,
        K: Into<StateId>,
    {
        let mut map = BTreeMap::new();
        for (k, v) in entries {
            let k = k.into();
            if !v.is_finite() {
                return Err(ValuationError::NonFinite { state: k, value: v });
            }
            map.insert(k, v);
        }
        Ok(Self(map))
    }

    /// Every state of `env` mapped to `value`.
    pub fn constant(env: &Environment, value: f64) -> Self {
        Self(env.state_ids().map(|s| (s.clone(), value)).collect())
    }

    pub fn get(&self, s: &StateId) -> Option<f64> {
        self.0.get(s).copied()
    }

    pub fn score(&self, s: &StateId) -> Result<f64, ValuationError> {
        self.get(s).ok_or_else(|| ValuationError::MissingScore(s.clone()))
    }

    pub fn set(&mut self, s: StateId, value: f64) -> Result<(), ValuationError> {
        if !value.is_finite() {
            return Err(ValuationError::NonFinite { state: s, value });
        }
        self.0.insert(s, value);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StateId, f64)> {
        self.0.iter().map(|(k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_value(&self) -> Option<f64> {
        self.0.values().copied().reduce(f64::max)
    }

    /// Fails with the first state of `env` that has no score.
    pub fn check_total(&self, env: &Environment) -> Result<(), ValuationError> {
        match env.state_ids().find(|s| !self.0.contains_key(*s)) {
            Some(s) => Err(ValuationError::MissingScore(s.clone())),
            None => Ok(()),
        }
    }
}

/// Point-query access to the hidden utility `u'`.
#[derive(Clone)]
pub struct HiddenUtility {
    inner: ScoreTable,
}

impl fmt::Debug for HiddenUtility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("HiddenUtility(<opaque>)")
    }
}

impl HiddenUtility {
    pub fn new(inner: ScoreTable) -> Self {
        Self { inner }
    }

    pub fn query(&self, ep: &mut PlanningEpisode, s: &StateId) -> Result<f64, ValuationError> {
        if !ep.open {
            return Err(ValuationError::EpisodeClosed);
        }
        if let Some(&v) = ep.scratchpad.get(s) {
            return Ok(v);
        }
        let v = self.inner.score(s)?;
        ep.scratchpad.insert(s.clone(), v);
        Ok(v)
    }
}

/// Transient scratchpad for hidden-utility queries made while choosing one
/// action.
#[derive(Debug)]
pub struct PlanningEpisode {
    scratchpad: BTreeMap<StateId, f64>,
    open: bool,
}

impl PlanningEpisode {
    pub fn open() -> Self {
        Self { scratchpad: BTreeMap::new(), open: true }
    }

    pub fn is_open(&self) -> bool {
        self.open
    }

    pub fn queried(&self) -> usize {
        self.scratchpad.len()
    }

    /// Destroys every queried score. Closed episodes answer no queries.
    pub fn close(&mut self) {
        self.scratchpad.clear();
        self.open = false;
    }
}

impl Drop for PlanningEpisode {
    fn drop(&mut self) {
        self.scratchpad.clear();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactSource {
    ExternalFeedback,
    ReasoningAction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeFact {
    pub source: FactSource,
    pub weight: f64,
    /// Opaque description of the event; never carries score values.
    pub payload: String,
}

impl KnowledgeFact {
    pub fn new(source: FactSource, weight: f64, payload: impl Into<String>) -> Result<Self, ValuationError> {
        if !(weight.is_finite() && weight > 0.0) {
            return Err(ValuationError::InvalidFact(weight));
        }
        Ok(Self { source, weight, payload: payload.into() })
    }
}

/// Append-only record of knowledge about the hidden utility.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeLedger {
    facts: Vec<KnowledgeFact>,
    lambda: f64,
}

impl KnowledgeLedger {
    pub fn new(lambda: f64) -> Result<Self, ValuationError> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(ValuationError::InvalidLambda(lambda));
        }
        Ok(Self { facts: Vec::new(), lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn facts(&self) -> &[KnowledgeFact] {
        &self.facts
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.facts.iter().map(|f| f.weight).sum()
    }

    /// `lambda` times the summed fact weight.
    pub fn penalty(&self) -> f64 {
        self.lambda * self.total_weight()
    }

    /// The same facts under a different penalty weight.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self, ValuationError> {
        let mut out = Self::new(lambda)?;
        out.facts = self.facts.clone();
        Ok(out)
    }

    /// A new ledger with `fact` appended; `self` is left untouched.
    pub fn record_feedback(&self, fact: KnowledgeFact) -> Result<Self, ValuationError> {
        if !(fact.weight.is_finite() && fact.weight > 0.0) {
            return Err(ValuationError::InvalidFact(fact.weight));
        }
        let mut facts = Vec::with_capacity(self.facts.len() + 1);
        facts.extend_from_slice(&self.facts);
        facts.push(fact);
        Ok(Self { facts, lambda: self.lambda })
    }
}

pub fn penalty(ledger: &KnowledgeLedger) -> f64 {
    ledger.penalty()
}

pub fn composite_utility(
    hidden: &HiddenUtility,
    ep: &mut PlanningEpisode,
    ledger: &KnowledgeLedger,
    s: &StateId,
) -> Result<f64, ValuationError> {
    Ok(-ledger.penalty() + hidden.query(ep, s)?)
}

/// Whether `i_model` is strictly closer to `i_true` than `u_hidden` is, in
/// summed absolute difference over `states`.
pub fn approximation_quality<'a>(
    i_true: &ScoreTable,
    i_model: &ScoreTable,
    u_hidden: &ScoreTable,
    states: impl IntoIterator<Item = &'a StateId>,
) -> Result<bool, ValuationError> {
    let mut model_err = 0.0;
    let mut hidden_err = 0.0;
    for s in states {
        let i = i_true.score(s)?;
        model_err += (i - i_model.score(s)?).abs();
        hidden_err += (i - u_hidden.score(s)?).abs();
    }
    Ok(model_err < hidden_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(xs: &[(&str, f64)]) -> ScoreTable {
        ScoreTable::new(xs.iter().map(|&(k, v)| (k, v))).unwrap()
    }

    fn fact(w: f64) -> KnowledgeFact {
        KnowledgeFact::new(FactSource::ExternalFeedback, w, "corrected").unwrap()
    }

    #[test]
    fn point_query_through_open_episode() {
        let h = HiddenUtility::new(table(&[("s0", 5.0)]));
        let mut ep = PlanningEpisode::open();
        assert_eq!(h.query(&mut ep, &"s0".into()), Ok(5.0));
        assert_eq!(h.query(&mut ep, &"s0".into()), Ok(5.0));
        assert_eq!(ep.queried(), 1);
        ep.close();
        assert_eq!(ep.queried(), 0);
        assert_eq!(h.query(&mut ep, &"s0".into()), Err(ValuationError::EpisodeClosed));
    }

    #[test]
    fn debug_output_is_opaque() {
        let h = HiddenUtility::new(table(&[("s0", 123.456)]));
        assert!(!format!("{h:?}").contains("123"));
    }

    #[test]
    fn penalty_values() {
        let empty = KnowledgeLedger::new(10.0).unwrap();
        assert_eq!(empty.penalty(), 0.0);
        let three = (0..3).fold(empty, |l, _| l.record_feedback(fact(1.0)).unwrap());
        assert_eq!(three.penalty(), 30.0);
        let mixed =
            KnowledgeLedger::new(4.0).unwrap().record_feedback(fact(1.0)).unwrap().record_feedback(fact(0.5)).unwrap();
        assert_eq!(penalty(&mixed), 6.0);
    }

    #[test]
    fn composite_values() {
        let h = HiddenUtility::new(table(&[("s", 5.0), ("z", 0.0)]));
        let mut ep = PlanningEpisode::open();
        let empty = KnowledgeLedger::new(10.0).unwrap();
        assert_eq!(composite_utility(&h, &mut ep, &empty, &"s".into()), Ok(5.0));
        assert_eq!(composite_utility(&h, &mut ep, &empty, &"z".into()), Ok(0.0));
        let three = (0..3).fold(empty, |l, _| l.record_feedback(fact(1.0)).unwrap());
        assert_eq!(composite_utility(&h, &mut ep, &three, &"s".into()), Ok(-25.0));
        ep.close();
        assert_eq!(composite_utility(&h, &mut ep, &three, &"s".into()), Err(ValuationError::EpisodeClosed));
    }

    #[test]
    fn record_feedback_appends() {
        let l0 = KnowledgeLedger::new(1.0).unwrap();
        let l1 = l0.record_feedback(fact(1.0)).unwrap();
        assert_eq!(l1.len(), 1);
        let l2 = l1.record_feedback(fact(2.0)).unwrap();
        let l3 = l2.record_feedback(fact(1.0)).unwrap();
        assert_eq!(l3.len(), 3);
        assert_eq!(&l3.facts()[..2], l2.facts());
        assert_eq!(l0.len(), 0);
        assert!(KnowledgeFact::new(FactSource::ExternalFeedback, 0.0, "x").is_err());
        let bogus = KnowledgeFact { source: FactSource::ExternalFeedback, weight: 0.0, payload: String::new() };
        assert_eq!(l3.record_feedback(bogus), Err(ValuationError::InvalidFact(0.0)));
    }

    #[test]
    fn approximation_quality_cases() {
        let states: Vec<StateId> = vec!["a".into(), "b".into()];
        let i = table(&[("a", 1.0), ("b", 0.0)]);
        let i_model = table(&[("a", 0.9), ("b", 0.1)]);
        let u = table(&[("a", 0.0), ("b", 1.0)]);
        assert!(approximation_quality(&i, &i_model, &u, &states).unwrap());
        assert!(!approximation_quality(&i, &u, &u, &states).unwrap());
        assert!(approximation_quality(&i, &i, &u, &states).unwrap());
        assert!(approximation_quality(&i, &i_model, &table(&[("a", 1.0)]), &states).is_err());
    }

    proptest! {
        #[test]
        fn ledger_is_append_only(weights in prop::collection::vec(0.01f64..5.0, 1..40)) {
            let mut ledger = KnowledgeLedger::new(2.5).unwrap();
            let mut history: Vec<KnowledgeLedger> = vec![ledger.clone()];
            for w in weights {
                let next = ledger.record_feedback(fact(w)).unwrap();
                prop_assert_eq!(next.len(), ledger.len() + 1);
                prop_assert_eq!(&next.facts()[..ledger.len()], ledger.facts());
                prop_assert!(next.penalty() >= ledger.penalty());
                ledger = next;
                history.push(ledger.clone());
            }
            for pair in history.windows(2) {
                prop_assert_eq!(&pair[1].facts()[..pair[0].len()], pair[0].facts());
            }
        }

        #[test]
        fn penalty_linear_in_lambda(
            weights in prop::collection::vec(0.01f64..5.0, 0..20),
            lambda in 0.0f64..100.0,
        ) {
            let ledger = weights
                .into_iter()
                .fold(KnowledgeLedger::new(lambda).unwrap(), |l, w| l.record_feedback(fact(w)).unwrap());
            let doubled = ledger.with_lambda(2.0 * lambda).unwrap();
            prop_assert!((doubled.penalty() - 2.0 * ledger.penalty()).abs() <= 1e-9 * (1.0 + ledger.penalty()));
        }

        #[test]
        fn empty_ledger_composite_is_hidden(value in -1e6f64..1e6) {
            let h = HiddenUtility::new(table(&[("s", value)]));
            let mut ep = PlanningEpisode::open();
            let ledger = KnowledgeLedger::new(7.0).unwrap();
            prop_assert_eq!(composite_utility(&h, &mut ep, &ledger, &"s".into()).unwrap(),
                h.query(&mut ep, &"s".into()).unwrap());
        }
    }
}

//! Intention exchange between oblivious agents that share an environment.
//!
//! When one agent heads for a state that another agent's intention model
//! rates below a threshold, the two resolve the conflict by confidence: the
//! more confident objector vetoes the move and the proposer moves its
//! estimate toward the objector's; otherwise the move goes ahead and the
//! objector moves toward the proposer. Only the disputed state's score
//! changes, by confidence-weighted averaging.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::agents::{plan_oblivious, AgentConfig, AgentError, AgentKind, AgentMemory};
use crate::scenarios::runner::{execute_action, StepContext};
use crate::scenarios::{ScenarioError, ScenarioSpec};
use crate::state::{ActionId, StateId};
use crate::valuation::{HiddenUtility, KnowledgeLedger, ScoreTable, ValuationError};

pub const DEFAULT_DAMPING: f64 = 0.9;

#[derive(Debug, Error, PartialEq)]
pub enum MultiAgentError {
    #[error("divergence needs at least two agents, got {0}")]
    TooFewAgents(usize),
    #[error("threshold tau must lie in (0, 1), got {0}")]
    InvalidTau(f64),
    #[error("confidence must lie in (0, 1], got {0}")]
    InvalidConfidence(f64),
    #[error("damping must lie in (0, 1], got {0}")]
    InvalidDamping(f64),
    #[error("agent index {0} out of range")]
    UnknownAgent(usize),
    #[error("scenario has no ensemble section")]
    NoEnsemble,
    #[error(transparent)]
    Valuation(#[from] ValuationError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Scenario(#[from] Box<ScenarioError>),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntentionProfile {
    pub agent: String,
    pub i_model: ScoreTable,
    pub confidence: f64,
}

impl IntentionProfile {
    pub fn new(agent: impl Into<String>, i_model: ScoreTable, confidence: f64) -> Result<Self, MultiAgentError> {
        if !(confidence > 0.0 && confidence <= 1.0) {
            return Err(MultiAgentError::InvalidConfidence(confidence));
        }
        Ok(Self { agent: agent.into(), i_model, confidence })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExchangeConfig {
    pub tau: f64,
    pub damping: f64,
}

impl ExchangeConfig {
    pub fn new(tau: f64, damping: f64) -> Result<Self, MultiAgentError> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(MultiAgentError::InvalidTau(tau));
        }
        if !(damping > 0.0 && damping <= 1.0) {
            return Err(MultiAgentError::InvalidDamping(damping));
        }
        Ok(Self { tau, damping })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExchangeCase {
    /// The objector is more confident and blocks the move.
    ObjectorIntervenes,
    /// The objector defers and learns from the proposer.
    ObjectorDefers,
}

/// Disputed-state score and confidence of one agent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Snapshot {
    pub score: f64,
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExchangeEvent {
    pub proposer: String,
    pub objector: String,
    pub state: StateId,
    pub case: ExchangeCase,
    pub proposer_before: Snapshot,
    pub objector_before: Snapshot,
    pub proposer_after: Snapshot,
    pub objector_after: Snapshot,
}

impl ExchangeEvent {
    pub fn vetoed(&self) -> bool {
        self.case == ExchangeCase::ObjectorIntervenes
    }
}

/// The proposer advocates `target` while the objector rates it misaligned.
pub fn detect_conflict(
    proposer: &IntentionProfile,
    objector: &IntentionProfile,
    target: &StateId,
    tau: f64,
) -> Result<bool, MultiAgentError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(MultiAgentError::InvalidTau(tau));
    }
    Ok(proposer.i_model.score(target)? >= tau && objector.i_model.score(target)? < tau)
}

fn snapshot(p: &IntentionProfile, s: &StateId) -> Result<Snapshot, ValuationError> {
    Ok(Snapshot { score: p.i_model.score(s)?, confidence: p.confidence })
}

/// Applies the two-case update to a conflicting pair and returns the
/// updated profiles `(proposer, objector)`.
pub fn resolve_conflict(
    proposer: &IntentionProfile,
    objector: &IntentionProfile,
    target: &StateId,
    damping: f64,
) -> Result<(IntentionProfile, IntentionProfile, ExchangeEvent), MultiAgentError> {
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(MultiAgentError::InvalidDamping(damping));
    }
    let pb = snapshot(proposer, target)?;
    let ob = snapshot(objector, target)?;
    let mean = (pb.confidence * pb.score + ob.confidence * ob.score) / (pb.confidence + ob.confidence);
    let confidence = pb.confidence.max(ob.confidence) * damping;

    let mut p = proposer.clone();
    let mut o = objector.clone();
    let case = if ob.confidence > pb.confidence {
        p.i_model.set(target.clone(), mean)?;
        p.confidence = confidence;
        ExchangeCase::ObjectorIntervenes
    } else {
        o.i_model.set(target.clone(), mean)?;
        o.confidence = confidence;
        ExchangeCase::ObjectorDefers
    };
    let event = ExchangeEvent {
        proposer: p.agent.clone(),
        objector: o.agent.clone(),
        state: target.clone(),
        case,
        proposer_before: pb,
        objector_before: ob,
        proposer_after: snapshot(&p, target)?,
        objector_after: snapshot(&o, target)?,
    };
    Ok((p, o, event))
}

/// Mean over unordered agent pairs of the summed absolute score difference.
pub fn divergence<'a>(
    profiles: &[IntentionProfile],
    states: impl IntoIterator<Item = &'a StateId> + Clone,
) -> Result<f64, MultiAgentError> {
    if profiles.len() < 2 {
        return Err(MultiAgentError::TooFewAgents(profiles.len()));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (i, a) in profiles.iter().enumerate() {
        for b in &profiles[i + 1..] {
            for s in states.clone() {
                total += (a.i_model.score(s)? - b.i_model.score(s)?).abs();
            }
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExchangeRound {
    pub events: Vec<ExchangeEvent>,
    pub vetoed: bool,
}

/// Lets every other agent, in slice order, object to `proposer` moving to
/// `target`. Stops at the first veto.
pub fn exchange_round(
    profiles: &mut [IntentionProfile],
    proposer: usize,
    target: &StateId,
    cfg: &ExchangeConfig,
) -> Result<ExchangeRound, MultiAgentError> {
    if proposer >= profiles.len() {
        return Err(MultiAgentError::UnknownAgent(proposer));
    }
    let mut events = Vec::new();
    for objector in 0..profiles.len() {
        if objector == proposer || !detect_conflict(&profiles[proposer], &profiles[objector], target, cfg.tau)? {
            continue;
        }
        let (p, o, event) = resolve_conflict(&profiles[proposer], &profiles[objector], target, cfg.damping)?;
        profiles[proposer] = p;
        profiles[objector] = o;
        let vetoed = event.vetoed();
        events.push(event);
        if vetoed {
            return Ok(ExchangeRound { events, vetoed: true });
        }
    }
    Ok(ExchangeRound { events, vetoed: false })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleConfig {
    /// Sorted by agent id.
    pub profiles: Vec<IntentionProfile>,
    pub exchange: ExchangeConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleTick {
    pub tick: usize,
    pub actor: String,
    pub proposed: ActionId,
    pub vetoed: bool,
    pub state: StateId,
    pub corrected: bool,
    pub exchanges: Vec<ExchangeEvent>,
    pub divergence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleTrace {
    pub scenario: String,
    pub seed: u64,
    pub initial_divergence: f64,
    pub ticks: Vec<EnsembleTick>,
    pub final_state: StateId,
    pub profiles: Vec<IntentionProfile>,
    pub ledger_sizes: Vec<usize>,
}

/// Runs the ensemble in the first phase of `spec`. Agents act in turn, by id;
/// each proposal is put to the others before it is executed.
pub fn run_ensemble(spec: &ScenarioSpec) -> Result<EnsembleTrace, MultiAgentError> {
    let ensemble = spec.ensemble.as_ref().ok_or(MultiAgentError::NoEnsemble)?;
    let phase = &spec.phases[0];
    let env = &phase.env;
    let states: Vec<StateId> = env.state_ids().cloned().collect();
    let mut profiles = ensemble.profiles.clone();
    if profiles.len() < 2 {
        return Err(MultiAgentError::TooFewAgents(profiles.len()));
    }
    let cfg = AgentConfig {
        kind: AgentKind::Oblivious,
        depth: spec.agent.depth,
        penalty_estimate: spec.agent.penalty_estimate,
    };
    let mut memories: Vec<AgentMemory> = profiles
        .iter()
        .map(|_| KnowledgeLedger::new(spec.agent.lambda).map(AgentMemory::new))
        .collect::<Result<_, _>>()?;
    let hidden = HiddenUtility::new(phase.u_hidden.clone());
    let judge = spec.judge_table(phase);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut state = env.initial().clone();
    let initial_divergence = divergence(&profiles, &states)?;
    let mut ticks = Vec::new();
    let mut corrected_once = std::collections::BTreeSet::new();

    for tick in 1..=spec.horizon {
        if env.is_terminal(&state) {
            break;
        }
        let actor = (tick - 1) % profiles.len();
        let decision = match plan_oblivious(
            env,
            &state,
            &hidden,
            &mut memories[actor],
            &spec.externals,
            &profiles[actor].i_model,
            &cfg,
        ) {
            Ok(d) => d,
            Err(AgentError::NoActions(_)) => break,
            Err(e) => return Err(e.into()),
        };
        let action = env.action(&decision.chosen_action).expect("planner returns known actions");
        let round = exchange_round(&mut profiles, actor, &action.success_target, &ensemble.exchange)?;
        let mut corrected = false;
        if !round.vetoed {
            let ctx = StepContext { env, ext: &spec.externals, judge };
            let step = execute_action(&ctx, &state, action, &mut rng, &mut corrected_once)
                .map_err(|e| MultiAgentError::Scenario(Box::new(e)))?;
            if let Some(ev) = step.feedback {
                memories[actor].learn(ev.fact)?;
                corrected = true;
            }
            memories[actor].record_action(&action.id);
            memories[actor].record_visit(&step.state);
            state = step.state;
        }
        ticks.push(EnsembleTick {
            tick,
            actor: profiles[actor].agent.clone(),
            proposed: action.id.clone(),
            vetoed: round.vetoed,
            state: state.clone(),
            corrected,
            exchanges: round.events,
            divergence: divergence(&profiles, &states)?,
        });
    }

    Ok(EnsembleTrace {
        scenario: spec.name.clone(),
        seed: spec.seed,
        initial_divergence,
        ticks,
        final_state: state,
        ledger_sizes: memories.iter().map(|m| m.ledger().len()).collect(),
        profiles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(name: &str, values: &[(&str, f64)], confidence: f64) -> IntentionProfile {
        IntentionProfile::new(name, ScoreTable::new(values.iter().map(|&(k, v)| (k, v))).unwrap(), confidence).unwrap()
    }

    #[test]
    fn conflict_detection() {
        let t = StateId::from("t");
        let hi = profile("a", &[("t", 0.9)], 0.5);
        let lo = profile("b", &[("t", 0.1)], 0.5);
        let mid = profile("c", &[("t", 0.4)], 0.5);
        assert!(detect_conflict(&hi, &lo, &t, 0.5).unwrap());
        assert!(!detect_conflict(&hi, &hi, &t, 0.5).unwrap());
        assert!(!detect_conflict(&mid, &lo, &t, 0.5).unwrap());
        assert_eq!(detect_conflict(&hi, &lo, &t, 1.0), Err(MultiAgentError::InvalidTau(1.0)));
    }

    #[test]
    fn confident_objector_vetoes() {
        let t = StateId::from("t");
        let p = profile("a", &[("t", 0.9), ("u", 0.3)], 0.5);
        let o = profile("b", &[("t", 0.1), ("u", 0.7)], 0.8);
        let (p2, o2, ev) = resolve_conflict(&p, &o, &t, DEFAULT_DAMPING).unwrap();
        assert!(ev.vetoed());
        let expected = (0.5 * 0.9 + 0.8 * 0.1) / 1.3;
        assert!((p2.i_model.get(&t).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.408).abs() < 1e-3);
        assert!((p2.confidence - 0.72).abs() < 1e-12);
        assert_eq!(o2, o);
        assert_eq!(p2.i_model.get(&"u".into()), Some(0.3));
    }

    #[test]
    fn less_confident_objector_defers() {
        let t = StateId::from("t");
        let p = profile("a", &[("t", 0.9)], 0.9);
        let o = profile("b", &[("t", 0.1)], 0.2);
        let (p2, o2, ev) = resolve_conflict(&p, &o, &t, DEFAULT_DAMPING).unwrap();
        assert_eq!(ev.case, ExchangeCase::ObjectorDefers);
        assert_eq!(p2, p);
        let v = o2.i_model.get(&t).unwrap();
        assert!(v > 0.1 && v < 0.9);
    }

    #[test]
    fn equal_views_are_a_fixed_point() {
        let t = StateId::from("t");
        let p = profile("a", &[("t", 0.6)], 0.5);
        let o = profile("b", &[("t", 0.6)], 0.5);
        let (p2, o2, _) = resolve_conflict(&p, &o, &t, DEFAULT_DAMPING).unwrap();
        assert_eq!(p2.i_model, p.i_model);
        assert_eq!(o2.i_model, o.i_model);
    }

    #[test]
    fn divergence_values() {
        let states: Vec<StateId> = vec!["x".into(), "y".into()];
        let a = profile("a", &[("x", 1.0), ("y", 0.0)], 0.5);
        let b = profile("b", &[("x", 0.0), ("y", 1.0)], 0.5);
        assert_eq!(divergence(&[a.clone(), a.clone()], &states).unwrap(), 0.0);
        assert_eq!(divergence(&[a.clone(), b.clone()], &states).unwrap(), 2.0);
        assert_eq!(divergence(std::slice::from_ref(&a), &states), Err(MultiAgentError::TooFewAgents(1)));

        let (a2, b2, _) = resolve_conflict(&a, &b, &"x".into(), DEFAULT_DAMPING).unwrap();
        assert!(divergence(&[a2, b2], &states).unwrap() < 2.0);
    }

    #[test]
    fn round_stops_at_first_veto() {
        let t = StateId::from("t");
        let mut ps =
            vec![profile("a", &[("t", 0.9)], 0.3), profile("b", &[("t", 0.1)], 0.8), profile("c", &[("t", 0.2)], 0.9)];
        let cfg = ExchangeConfig::new(0.5, DEFAULT_DAMPING).unwrap();
        let round = exchange_round(&mut ps, 0, &t, &cfg).unwrap();
        assert!(round.vetoed);
        assert_eq!(round.events.len(), 1);
        assert_eq!(round.events[0].objector, "b");
    }

    #[test]
    fn bad_confidence_rejected() {
        let t = ScoreTable::default();
        assert!(IntentionProfile::new("a", t.clone(), 0.0).is_err());
        assert!(IntentionProfile::new("a", t, 1.5).is_err());
    }
}

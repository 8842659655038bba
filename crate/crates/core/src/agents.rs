//! Baseline and oblivious agents.
//!
//! Both plan by exact bounded-depth expectimax. The baseline agent reads its
//! utility table directly. The oblivious agent only sees the hidden utility
//! through a [`PlanningEpisode`], anticipates external correction at every
//! state it might reach, never considers tampering with its hidden utility,
//! and refuses reasoning actions that would teach it about that utility.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::externals::{ExternalActorModel, ExternalError};
use crate::state::{Action, ActionId, ActionKind, Environment, StateId};
use crate::valuation::{HiddenUtility, KnowledgeLedger, PlanningEpisode, ScoreTable, ValuationError};

/// Values closer than this are treated as tied; ties go to the smallest
/// action id.
pub const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("no candidate actions in state `{0}`")]
    NoActions(StateId),
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Valuation(#[from] ValuationError),
    #[error(transparent)]
    External(#[from] ExternalError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Baseline,
    #[default]
    Oblivious,
}

impl AgentKind {
    pub const ALL: [AgentKind; 2] = [AgentKind::Baseline, AgentKind::Oblivious];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Baseline => "baseline",
            AgentKind::Oblivious => "oblivious",
        }
    }
}

impl std::fmt::Display for AgentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AgentKind {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(AgentKind::Baseline),
            "oblivious" => Ok(AgentKind::Oblivious),
            other => Err(AgentError::InvalidConfig(format!("unknown agent kind `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgentConfig {
    pub kind: AgentKind,
    /// Planning horizon in actions, at least 1.
    pub depth: usize,
    /// The penalty weight per fact-unit the agent believes in.
    pub penalty_estimate: f64,
}

impl AgentConfig {
    pub fn baseline(depth: usize) -> Self {
        Self { kind: AgentKind::Baseline, depth, penalty_estimate: 0.0 }
    }

    pub fn oblivious(depth: usize, penalty_estimate: f64) -> Self {
        Self { kind: AgentKind::Oblivious, depth, penalty_estimate }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if self.depth < 1 {
            return Err(AgentError::InvalidConfig("depth must be at least 1".into()));
        }
        if !(self.penalty_estimate.is_finite() && self.penalty_estimate >= 0.0) {
            return Err(AgentError::InvalidConfig(format!(
                "penalty_estimate must be finite and nonnegative, got {}",
                self.penalty_estimate
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Decision {
    pub chosen_action: ActionId,
    /// Candidate actions in id order with their expected values.
    pub considered: Vec<(ActionId, f64)>,
    pub episode_wiped: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "entry", content = "id", rename_all = "kebab-case")]
pub enum HistoryEntry {
    Visited(StateId),
    Took(ActionId),
    /// A reasoning action turned down during planning.
    Rejected(ActionId),
}

/// What an agent keeps between decisions: where it has been and what it
/// has been told. Holds no score values.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgentMemory {
    history: Vec<HistoryEntry>,
    ledger: KnowledgeLedger,
}

impl AgentMemory {
    pub fn new(ledger: KnowledgeLedger) -> Self {
        Self { history: Vec::new(), ledger }
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn ledger(&self) -> &KnowledgeLedger {
        &self.ledger
    }

    pub fn record_visit(&mut self, s: &StateId) {
        self.history.push(HistoryEntry::Visited(s.clone()));
    }

    pub fn record_action(&mut self, a: &ActionId) {
        self.history.push(HistoryEntry::Took(a.clone()));
    }

    /// Appends a knowledge fact; there is no way to remove one.
    pub fn learn(&mut self, fact: crate::valuation::KnowledgeFact) -> Result<(), ValuationError> {
        self.ledger = self.ledger.record_feedback(fact)?;
        Ok(())
    }

    /// Serialized form of everything the agent remembers.
    pub fn inspect(&self) -> String {
        serde_json::to_string(self).expect("memory serializes")
    }
}

/// Picks the first maximal value in iteration order, treating values within
/// [`TIE_EPS`] as equal. Callers iterate in ascending action-id order.
fn argmax(values: &[(ActionId, f64)]) -> Option<&ActionId> {
    let mut best: Option<(&ActionId, f64)> = None;
    for (id, v) in values {
        match best {
            Some((_, bv)) if *v <= bv + TIE_EPS => {}
            _ => best = Some((id, *v)),
        }
    }
    best.map(|(id, _)| id)
}

fn baseline_value(env: &Environment, u: &ScoreTable, s: &StateId, depth: usize) -> Result<f64, AgentError> {
    if depth == 0 || env.is_leaf(s) {
        return Ok(u.score(s)?);
    }
    let mut best = f64::NEG_INFINITY;
    for a in env.actions_from(s) {
        best = best.max(baseline_q(env, u, a, depth)?);
    }
    Ok(best)
}

fn baseline_q(env: &Environment, u: &ScoreTable, a: &Action, depth: usize) -> Result<f64, AgentError> {
    let mut total = 0.0;
    for (p, target) in a.outcomes() {
        if p > 0.0 {
            total += p * baseline_value(env, u, target, depth - 1)?;
        }
    }
    Ok(total)
}

/// Expected-utility choice over `u`, expanded `cfg.depth` actions deep.
pub fn choose_action_baseline(
    env: &Environment,
    s: &StateId,
    u: &ScoreTable,
    cfg: &AgentConfig,
) -> Result<Decision, AgentError> {
    cfg.validate()?;
    let considered = env
        .actions_from(s)
        .map(|a| baseline_q(env, u, a, cfg.depth).map(|v| (a.id.clone(), v)))
        .collect::<Result<Vec<_>, _>>()?;
    let chosen_action = argmax(&considered).cloned().ok_or_else(|| AgentError::NoActions(s.clone()))?;
    Ok(Decision { chosen_action, considered, episode_wiped: false })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReasoningVerdict {
    /// Taking the action would raise the knowledge penalty.
    Rejected,
    Allowed,
    /// Not a reasoning action.
    NotApplicable,
}

fn reasoning_costly(a: &Action, penalty_estimate: f64) -> bool {
    a.kind == ActionKind::Reasoning && penalty_estimate * a.knowledge_gain > 0.0
}

/// Screens a reasoning action. Rejections are written to the agent's history.
pub fn consider_reasoning_action(mem: &mut AgentMemory, a: &Action, penalty_estimate: f64) -> ReasoningVerdict {
    if a.kind != ActionKind::Reasoning {
        return ReasoningVerdict::NotApplicable;
    }
    if reasoning_costly(a, penalty_estimate) {
        mem.history.push(HistoryEntry::Rejected(a.id.clone()));
        ReasoningVerdict::Rejected
    } else {
        ReasoningVerdict::Allowed
    }
}

/// Closes the episode, destroying every score queried during it. The
/// memory is left as is; no score reaches it.
pub fn forget_episode(ep: &mut PlanningEpisode, _mem: &AgentMemory) {
    ep.close();
}

fn oblivious_candidate(a: &Action, penalty_estimate: f64) -> bool {
    a.kind != ActionKind::Tamper && !reasoning_costly(a, penalty_estimate)
}

struct ObliviousPlanner<'a> {
    env: &'a Environment,
    hidden: &'a HiddenUtility,
    ext: &'a ExternalActorModel,
    i_model: &'a ScoreTable,
    penalty_estimate: f64,
    /// Penalty of one anticipated correction.
    unit: f64,
}

impl ObliviousPlanner<'_> {
    fn value(&self, ep: &mut PlanningEpisode, s: &StateId, depth: usize) -> Result<f64, AgentError> {
        if depth == 0 || self.env.is_leaf(s) {
            return Ok(self.hidden.query(ep, s)?);
        }
        let mut best: Option<f64> = None;
        for a in self.env.actions_from(s).filter(|a| oblivious_candidate(a, self.penalty_estimate)) {
            let q = self.q(ep, a, depth)?;
            best = Some(best.map_or(q, |b| b.max(q)));
        }
        match best {
            Some(v) => Ok(v),
            None => Ok(self.hidden.query(ep, s)?),
        }
    }

    fn q(&self, ep: &mut PlanningEpisode, a: &Action, depth: usize) -> Result<f64, AgentError> {
        let deceptive = a.kind == ActionKind::Deceptive;
        let p_success = if deceptive { self.ext.deception_success(a) } else { a.p_success };
        let mut total = 0.0;
        for (succeeded, p, target) in
            [(true, p_success, &a.success_target), (false, 1.0 - p_success, &a.failure_target)]
        {
            if p <= 0.0 {
                continue;
            }
            // Undetected deception draws no correction; detected deception
            // always does.
            let corr = if deceptive {
                if succeeded {
                    0.0
                } else {
                    1.0
                }
            } else {
                self.ext.state_correction_probability(self.i_model, target)?
            };
            let v = self.value(ep, target, depth - 1)?;
            total += p * (corr * (-self.unit + v) + (1.0 - corr) * v);
        }
        Ok(total)
    }
}

/// Oblivious choice. Values are composite utilities: the current ledger
/// penalty is included, and every reachable state adds its anticipated
/// correction penalty.
pub fn plan_oblivious(
    env: &Environment,
    s: &StateId,
    hidden: &HiddenUtility,
    mem: &mut AgentMemory,
    ext: &ExternalActorModel,
    i_model: &ScoreTable,
    cfg: &AgentConfig,
) -> Result<Decision, AgentError> {
    cfg.validate()?;
    if cfg.kind != AgentKind::Oblivious {
        return Err(AgentError::InvalidConfig("plan_oblivious needs an oblivious config".into()));
    }
    let planner = ObliviousPlanner {
        env,
        hidden,
        ext,
        i_model,
        penalty_estimate: cfg.penalty_estimate,
        unit: cfg.penalty_estimate * ext.feedback_weight,
    };
    let base = cfg.penalty_estimate * mem.ledger.total_weight();

    let mut ep = PlanningEpisode::open();
    let mut considered = Vec::new();
    let mut outcome = Ok(());
    for a in env.actions_from(s) {
        if a.kind == ActionKind::Tamper {
            continue;
        }
        if consider_reasoning_action(mem, a, cfg.penalty_estimate) == ReasoningVerdict::Rejected {
            continue;
        }
        match planner.q(&mut ep, a, cfg.depth) {
            Ok(q) => considered.push((a.id.clone(), q - base)),
            Err(e) => {
                outcome = Err(e);
                break;
            }
        }
    }
    forget_episode(&mut ep, mem);
    outcome?;

    let chosen_action = argmax(&considered).cloned().ok_or_else(|| AgentError::NoActions(s.clone()))?;
    Ok(Decision { chosen_action, considered, episode_wiped: !ep.is_open() && ep.queried() == 0 })
}

/// Whether an oblivious agent heads for `s_k` over `s_m`, given hidden
/// scores, the penalty a correction would cost at each, and the
/// correction probabilities.
pub fn decide_move(u_k: f64, pen_k: f64, p_k: f64, u_m: f64, pen_m: f64, p_m: f64) -> bool {
    p_k * (-pen_k + u_k) + (1.0 - p_k) * u_k > p_m * (-pen_m + u_m) + (1.0 - p_m) * u_m
}

/// Whether deceiving (success probability `p_dec`, payoff `u_k`; on failure
/// `u_fail` minus `pen`) beats the honest alternative `u_m`.
pub fn evaluate_deception(p_dec: f64, u_k: f64, u_fail: f64, pen: f64, u_m: f64) -> bool {
    p_dec * u_k + (1.0 - p_dec) * (-pen + u_fail) > u_m
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum BlockingPenalty {
    Finite(f64),
    /// No finite penalty blocks deception.
    Unbounded,
}

impl BlockingPenalty {
    pub fn finite(self) -> Option<f64> {
        match self {
            BlockingPenalty::Finite(v) => Some(v),
            BlockingPenalty::Unbounded => None,
        }
    }
}

/// Smallest nonnegative penalty at which [`evaluate_deception`] is false.
pub fn min_penalty_to_block_deception(p_dec: f64, u_k: f64, u_fail: f64, u_m: f64) -> BlockingPenalty {
    if p_dec >= 1.0 {
        return if u_k > u_m { BlockingPenalty::Unbounded } else { BlockingPenalty::Finite(0.0) };
    }
    let needed = (p_dec * u_k + (1.0 - p_dec) * u_fail - u_m) / (1.0 - p_dec);
    BlockingPenalty::Finite(needed.max(0.0))
}

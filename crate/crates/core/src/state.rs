//! Discrete environment kernel.
//!
//! An [`Environment`] is a finite set of [`State`]s connected by probabilistic
//! [`Action`]s. Every action has a success target and a failure target; taking
//! it draws one uniform variate and lands in one of the two.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

id_newtype!(
    /// Identifier of a state, unique within one environment.
    StateId
);
id_newtype!(
    /// Identifier of an action, unique within one environment.
    ActionId
);

/// Scenario role markers attached to states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flag {
    Terminal,
    StopButton,
    TamperTarget,
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flag::Terminal => "terminal",
            Flag::StopButton => "stop-button",
            Flag::TamperTarget => "tamper-target",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionKind {
    #[default]
    Normal,
    /// Internal reasoning step; only changes what the agent knows.
    Reasoning,
    Deceptive,
    /// Rewrites the hidden utility itself.
    Tamper,
    StopDisable,
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionKind::Normal => "normal",
            ActionKind::Reasoning => "reasoning",
            ActionKind::Deceptive => "deceptive",
            ActionKind::Tamper => "tamper",
            ActionKind::StopDisable => "stop-disable",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Property {
    pub name: String,
    pub value: String,
}

impl Property {
    pub fn new(name: impl Into<String>, value: impl Into<String>) -> Self {
        Self { name: name.into(), value: value.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct State {
    pub id: StateId,
    pub properties: Vec<Property>,
    pub flags: BTreeSet<Flag>,
}

impl State {
    pub fn new(id: impl Into<StateId>) -> Self {
        Self { id: id.into(), properties: Vec::new(), flags: BTreeSet::new() }
    }

    pub fn with_property(mut self, name: &str, value: &str) -> Self {
        self.properties.push(Property::new(name, value));
        self
    }

    pub fn with_flag(mut self, flag: Flag) -> Self {
        self.flags.insert(flag);
        self
    }

    pub fn has_flag(&self, flag: Flag) -> bool {
        self.flags.contains(&flag)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Action {
    pub id: ActionId,
    pub from: StateId,
    pub success_target: StateId,
    pub failure_target: StateId,
    pub p_success: f64,
    pub kind: ActionKind,
    pub knowledge_gain: f64,
}

impl Action {
    /// A certain action of kind `normal` whose failure target is its source.
    pub fn deterministic(id: &str, from: &str, to: &str) -> Self {
        Self {
            id: id.into(),
            from: from.into(),
            success_target: to.into(),
            failure_target: from.into(),
            p_success: 1.0,
            kind: ActionKind::Normal,
            knowledge_gain: 0.0,
        }
    }

    pub fn with_failure(mut self, target: &str, p_success: f64) -> Self {
        self.failure_target = target.into();
        self.p_success = p_success;
        self
    }

    pub fn with_kind(mut self, kind: ActionKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn with_knowledge_gain(mut self, gain: f64) -> Self {
        self.knowledge_gain = gain;
        self
    }

    /// The two outcomes as `(probability, target)`, success first.
    pub fn outcomes(&self) -> [(f64, &StateId); 2] {
        [(self.p_success, &self.success_target), (1.0 - self.p_success, &self.failure_target)]
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("duplicate state id `{0}`")]
    DuplicateState(StateId),
    #[error("duplicate action id `{0}`")]
    DuplicateAction(ActionId),
    #[error("unknown state `{state}` referenced by {context}")]
    UnknownState { state: StateId, context: String },
    #[error("state `{state}` has {found} properties, expected {expected}")]
    PropertyArity { state: StateId, expected: usize, found: usize },
    #[error("action `{action}`: p_success {p} outside [0, 1]")]
    InvalidProbability { action: ActionId, p: f64 },
    #[error("action `{action}`: knowledge_gain {gain} invalid for kind {kind}")]
    InvalidKnowledgeGain { action: ActionId, kind: ActionKind, gain: f64 },
    #[error("action `{action}` is not applicable in state `{state}`")]
    ActionNotApplicable { action: ActionId, state: StateId },
    #[error("environment has no states")]
    Empty,
}

/// Result of taking an action: where it landed and whether it succeeded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transition {
    pub state: StateId,
    pub succeeded: bool,
}

#[derive(Clone, Debug)]
pub struct Environment {
    states: Vec<State>,
    actions: Vec<Action>,
    initial: StateId,
    state_index: BTreeMap<StateId, usize>,
    action_index: BTreeMap<ActionId, usize>,
    // Outgoing action indices per state, sorted by action id.
    outgoing: BTreeMap<StateId, Vec<usize>>,
}

impl Environment {
    pub fn new(states: Vec<State>, actions: Vec<Action>, initial: impl Into<StateId>) -> Result<Self, EnvError> {
        let initial = initial.into();
        if states.is_empty() {
            return Err(EnvError::Empty);
        }
        let arity = states[0].properties.len();
        let mut state_index = BTreeMap::new();
        for (i, s) in states.iter().enumerate() {
            if state_index.insert(s.id.clone(), i).is_some() {
                return Err(EnvError::DuplicateState(s.id.clone()));
            }
            if s.properties.len() != arity {
                return Err(EnvError::PropertyArity {
                    state: s.id.clone(),
                    expected: arity,
                    found: s.properties.len(),
                });
            }
        }
        if !state_index.contains_key(&initial) {
            return Err(EnvError::UnknownState { state: initial, context: "initial".into() });
        }

        let mut action_index = BTreeMap::new();
        let mut outgoing: BTreeMap<StateId, Vec<usize>> = BTreeMap::new();
        for (i, a) in actions.iter().enumerate() {
            if action_index.insert(a.id.clone(), i).is_some() {
                return Err(EnvError::DuplicateAction(a.id.clone()));
            }
            for (role, target) in [("from", &a.from), ("success", &a.success_target), ("failure", &a.failure_target)] {
                if !state_index.contains_key(target) {
                    return Err(EnvError::UnknownState {
                        state: target.clone(),
                        context: format!("action `{}` ({role})", a.id),
                    });
                }
            }
            if !(0.0..=1.0).contains(&a.p_success) {
                return Err(EnvError::InvalidProbability { action: a.id.clone(), p: a.p_success });
            }
            let gain_ok = match a.kind {
                ActionKind::Reasoning => a.knowledge_gain.is_finite() && a.knowledge_gain >= 0.0,
                _ => a.knowledge_gain == 0.0,
            };
            if !gain_ok {
                return Err(EnvError::InvalidKnowledgeGain {
                    action: a.id.clone(),
                    kind: a.kind,
                    gain: a.knowledge_gain,
                });
            }
            outgoing.entry(a.from.clone()).or_default().push(i);
        }
        for list in outgoing.values_mut() {
            list.sort_by(|&x, &y| actions[x].id.cmp(&actions[y].id));
        }

        Ok(Self { states, actions, initial, state_index, action_index, outgoing })
    }

    pub fn initial(&self) -> &StateId {
        &self.initial
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn state(&self, id: &StateId) -> Option<&State> {
        self.state_index.get(id).map(|&i| &self.states[i])
    }

    pub fn action(&self, id: &ActionId) -> Option<&Action> {
        self.action_index.get(id).map(|&i| &self.actions[i])
    }

    pub fn contains(&self, id: &StateId) -> bool {
        self.state_index.contains_key(id)
    }

    pub fn state_ids(&self) -> impl Iterator<Item = &StateId> {
        self.states.iter().map(|s| &s.id)
    }

    /// Outgoing actions of `s`, in ascending action-id order.
    pub fn actions_from<'a>(&'a self, s: &StateId) -> impl Iterator<Item = &'a Action> + 'a {
        self.outgoing.get(s).into_iter().flatten().map(move |&i| &self.actions[i])
    }

    pub fn has_flag(&self, s: &StateId, flag: Flag) -> bool {
        self.state(s).is_some_and(|st| st.has_flag(flag))
    }

    /// A state the planners never expand: flagged terminal, flagged
    /// stop-button (the run halts there while the stop actor is active), or
    /// without outgoing actions.
    pub fn is_leaf(&self, s: &StateId) -> bool {
        self.has_flag(s, Flag::Terminal)
            || self.has_flag(s, Flag::StopButton)
            || self.outgoing.get(s).is_none_or(|v| v.is_empty())
    }

    /// Whether a run ends on arrival at `s`.
    pub fn is_terminal(&self, s: &StateId) -> bool {
        self.has_flag(s, Flag::Terminal) || self.outgoing.get(s).is_none_or(|v| v.is_empty())
    }

    /// Takes `a` from `s`, reporting whether the action succeeded.
    pub fn apply_outcome<R: Rng + ?Sized>(&self, s: &StateId, a: &Action, rng: &mut R) -> Result<Transition, EnvError> {
        if &a.from != s {
            return Err(EnvError::ActionNotApplicable { action: a.id.clone(), state: s.clone() });
        }
        let draw: f64 = rng.random();
        let succeeded = draw < a.p_success;
        let state = if succeeded { a.success_target.clone() } else { a.failure_target.clone() };
        Ok(Transition { state, succeeded })
    }

    pub fn apply<R: Rng + ?Sized>(&self, s: &StateId, a: &Action, rng: &mut R) -> Result<StateId, EnvError> {
        self.apply_outcome(s, a, rng).map(|t| t.state)
    }

    /// States one atomic action away from `s`. An outcome with zero
    /// probability does not count.
    pub fn reachable_set(&self, s: &StateId) -> BTreeSet<StateId> {
        self.actions_from(s).flat_map(|a| a.outcomes()).filter(|(p, _)| *p > 0.0).map(|(_, t)| t.clone()).collect()
    }

    /// Element `d` holds the states reachable in exactly `d` actions.
    pub fn reachable_superset(&self, s: &StateId, n: usize) -> Vec<BTreeSet<StateId>> {
        let mut layers = Vec::with_capacity(n + 1);
        layers.push(BTreeSet::from([s.clone()]));
        for _ in 0..n {
            let next = layers.last().expect("non-empty").iter().flat_map(|x| self.reachable_set(x)).collect();
            layers.push(next);
        }
        layers
    }

    pub fn states_matching(&self, flag: Flag) -> BTreeSet<StateId> {
        self.states.iter().filter(|s| s.has_flag(flag)).map(|s| s.id.clone()).collect()
    }
}

//! On-disk scenario schema (TOML or JSON). Unknown keys are collected by the
//! loader and reported as validation problems.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agents::AgentKind;
use crate::externals::CorrectionMapping;
use crate::state::{ActionKind, Flag, Property};

fn yes() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

fn is_default<T: Default + PartialEq>(t: &T) -> bool {
    *t == T::default()
}

fn default_c() -> f64 {
    0.1
}

fn default_weight() -> f64 {
    1.0
}

fn default_depth() -> usize {
    1
}

fn default_horizon() -> usize {
    super::DEFAULT_HORIZON
}

fn default_damping() -> f64 {
    crate::multiagent::DEFAULT_DAMPING
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDoc {
    pub meta: MetaDoc,
    pub states: Vec<StateDoc>,
    pub actions: Vec<ActionDoc>,
    #[serde(default)]
    pub externals: ExternalsDoc,
    pub agent: AgentDoc,
    #[serde(default)]
    pub run: RunDoc,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assertions: Vec<AssertionDoc>,
    /// Second environment the agent is moved into once the first one ends.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deployment: Option<PhaseDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agents: Option<Vec<ProfileDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exchange: Option<ExchangeDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaDoc {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    /// Defaults to the first listed state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<String>,
    /// Set to false to skip the intention-approximation premise check.
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub check_premise: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<String>,
    pub states: Vec<StateDoc>,
    pub actions: Vec<ActionDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateDoc {
    pub id: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub properties: Vec<Property>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<Flag>,
    /// Scores are optional here so that a missing entry is reported as a
    /// validation problem rather than a parse failure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_hidden: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i_true: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i_model: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionDoc {
    pub id: String,
    pub from: String,
    pub success: String,
    /// Defaults to `from`: a failed attempt fizzles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    /// Defaults to 1, or to `deception_p` for deceptive actions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_success: Option<f64>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub kind: ActionKind,
    #[serde(default, skip_serializing_if = "is_default")]
    pub knowledge_gain: f64,
    /// Required for, and only allowed on, deceptive actions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deception_p: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JudgeDoc {
    /// Externals judge states through the agent's intention model.
    #[default]
    Model,
    /// Externals judge states through the ground-truth intention.
    Truth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalsDoc {
    #[serde(default)]
    pub mapping: CorrectionMapping,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_weight")]
    pub feedback_weight: f64,
    #[serde(default = "yes")]
    pub repeat_feedback: bool,
    #[serde(default)]
    pub judge: JudgeDoc,
}

impl Default for ExternalsDoc {
    fn default() -> Self {
        Self {
            mapping: CorrectionMapping::default(),
            c: default_c(),
            feedback_weight: default_weight(),
            repeat_feedback: true,
            judge: JudgeDoc::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentDoc {
    #[serde(default)]
    pub kind: AgentKind,
    #[serde(default = "default_depth")]
    pub depth: usize,
    pub lambda: f64,
    /// Defaults to `lambda`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty_estimate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunDoc {
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for RunDoc {
    fn default() -> Self {
        Self { horizon: default_horizon(), seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssertionKindDoc {
    FinalStateIn,
    NeverVisits,
    ActionNeverTaken,
    LedgerBounded,
    TerminatesBy,
}

/// `states` for final-state-in and never-visits, `actions` for
/// action-never-taken, `bound` for ledger-bounded and terminates-by.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssertionDoc {
    pub kind: AssertionKindDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<AgentKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileDoc {
    pub id: String,
    pub confidence: f64,
    pub i_model: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExchangeDoc {
    pub tau: f64,
    #[serde(default = "default_damping")]
    pub damping: f64,
}

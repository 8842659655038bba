//! Declarative scenarios: schema, validation, the six alignment-challenge
//! generators and the single-run executor.

pub mod challenges;
pub mod document;
pub mod runner;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::agents::{AgentConfig, AgentKind};
use crate::externals::ExternalActorModel;
use crate::multiagent::{EnsembleConfig, ExchangeConfig, IntentionProfile};
use crate::state::{Action, ActionId, ActionKind, Environment, State, StateId};
use crate::valuation::{approximation_quality, ScoreTable};

pub use challenges::{build_challenge, ChallengeKind, ChallengeParams};
pub use document::ScenarioDoc;
pub use runner::{run_scenario, EndReason, Tick, Trace, Verdict};

pub const DEFAULT_HORIZON: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("run failed: {0}")]
    Run(String),
    #[error("invalid challenge parameters: {0}")]
    InvalidParams(String),
}

/// One environment together with its score tables.
#[derive(Clone, Debug)]
pub struct Phase {
    pub env: Environment,
    pub u_hidden: ScoreTable,
    pub i_true: ScoreTable,
    pub i_model: ScoreTable,
}

impl Phase {
    /// Summed absolute error of the intention model and of the hidden
    /// utility against the true intention.
    pub fn premise(&self) -> PremiseReport {
        let mut model_error = 0.0;
        let mut hidden_error = 0.0;
        for s in self.env.state_ids() {
            let (Some(i), Some(m), Some(u)) = (self.i_true.get(s), self.i_model.get(s), self.u_hidden.get(s)) else {
                continue;
            };
            model_error += (i - m).abs();
            hidden_error += (i - u).abs();
        }
        let holds =
            approximation_quality(&self.i_true, &self.i_model, &self.u_hidden, self.env.state_ids()).unwrap_or(false);
        PremiseReport { holds, model_error, hidden_error }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PremiseReport {
    pub holds: bool,
    pub model_error: f64,
    pub hidden_error: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Judge {
    #[default]
    Model,
    Truth,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AgentSettings {
    pub kind: AgentKind,
    pub depth: usize,
    pub lambda: f64,
    pub penalty_estimate: f64,
}

impl AgentSettings {
    pub fn config(&self) -> AgentConfig {
        AgentConfig { kind: self.kind, depth: self.depth, penalty_estimate: self.penalty_estimate }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "argument", rename_all = "kebab-case")]
pub enum Check {
    FinalStateIn(BTreeSet<StateId>),
    NeverVisits(BTreeSet<StateId>),
    ActionNeverTaken(BTreeSet<ActionId>),
    LedgerBounded(usize),
    TerminatesBy(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BehavioralAssertion {
    pub check: Check,
    /// Restricts the assertion to runs of one agent kind.
    pub agent: Option<AgentKind>,
}

impl BehavioralAssertion {
    pub fn new(check: Check) -> Self {
        Self { check, agent: None }
    }

    pub fn for_agent(check: Check, agent: AgentKind) -> Self {
        Self { check, agent: Some(agent) }
    }

    pub fn applies_to(&self, kind: AgentKind) -> bool {
        self.agent.is_none_or(|k| k == kind)
    }
}

fn join<T: fmt::Display>(xs: impl IntoIterator<Item = T>) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for BehavioralAssertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.check {
            Check::FinalStateIn(s) => write!(f, "final-state-in {{{}}}", join(s))?,
            Check::NeverVisits(s) => write!(f, "never-visits {{{}}}", join(s))?,
            Check::ActionNeverTaken(a) => write!(f, "action-never-taken {{{}}}", join(a))?,
            Check::LedgerBounded(n) => write!(f, "ledger-bounded {n}")?,
            Check::TerminatesBy(n) => write!(f, "terminates-by {n}")?,
        }
        if let Some(k) = self.agent {
            write!(f, " [{k}]")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioSpec {
    pub name: String,
    pub description: String,
    /// One environment, or two when the agent is deployed into a second one.
    pub phases: Vec<Phase>,
    pub externals: ExternalActorModel,
    pub judge: Judge,
    pub agent: AgentSettings,
    pub horizon: usize,
    pub seed: u64,
    pub assertions: Vec<BehavioralAssertion>,
    pub check_premise: bool,
    pub ensemble: Option<EnsembleConfig>,
}

/// Command-line style adjustments applied on top of a loaded spec.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunOverrides {
    pub agent: Option<AgentKind>,
    pub depth: Option<usize>,
    pub lambda: Option<f64>,
    pub seed: Option<u64>,
    pub horizon: Option<usize>,
}

impl ScenarioSpec {
    pub fn judge_table<'a>(&self, phase: &'a Phase) -> &'a ScoreTable {
        match self.judge {
            Judge::Model => &phase.i_model,
            Judge::Truth => &phase.i_true,
        }
    }

    pub fn premise(&self) -> Vec<PremiseReport> {
        self.phases.iter().map(Phase::premise).collect()
    }

    pub fn premise_holds(&self) -> bool {
        self.phases.iter().all(|p| p.premise().holds)
    }

    pub fn state_declared(&self, s: &StateId) -> bool {
        self.phases.iter().any(|p| p.env.contains(s))
    }

    pub fn action_declared(&self, a: &ActionId) -> bool {
        self.phases.iter().any(|p| p.env.action(a).is_some())
    }

    /// A lambda override also moves the penalty estimate along with it.
    pub fn with_overrides(&self, o: &RunOverrides) -> Result<Self, ScenarioError> {
        let mut spec = self.clone();
        if let Some(kind) = o.agent {
            spec.agent.kind = kind;
        }
        if let Some(depth) = o.depth {
            spec.agent.depth = depth;
        }
        if let Some(lambda) = o.lambda {
            spec.agent.lambda = lambda;
            spec.agent.penalty_estimate = lambda;
        }
        if let Some(seed) = o.seed {
            spec.seed = seed;
        }
        if let Some(h) = o.horizon {
            spec.horizon = h;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut problems = Vec::new();
        if self.phases.is_empty() || self.phases.len() > 2 {
            problems.push(format!("expected one or two phases, found {}", self.phases.len()));
        }
        for (i, phase) in self.phases.iter().enumerate() {
            for (name, table) in [("u_hidden", &phase.u_hidden), ("i_true", &phase.i_true), ("i_model", &phase.i_model)]
            {
                if let Err(e) = table.check_total(&phase.env) {
                    problems.push(format!("phase {i}: {name}: {e}"));
                }
            }
            for a in phase.env.actions() {
                if a.kind == ActionKind::Deceptive && !self.externals.detection.contains_key(&a.id) {
                    problems.push(format!("action `{}`: deceptive action needs deception_p", a.id));
                }
            }
            if self.check_premise {
                let r = phase.premise();
                if !r.holds {
                    problems.push(format!(
                        "phase {i}: intention model error {} is not below hidden-utility error {}",
                        r.model_error, r.hidden_error
                    ));
                }
            }
        }
        if let Err(e) = self.agent.config().validate() {
            problems.push(e.to_string());
        }
        if !(self.agent.lambda.is_finite() && self.agent.lambda >= 0.0) {
            problems.push(format!("lambda must be finite and nonnegative, got {}", self.agent.lambda));
        }
        for a in &self.assertions {
            match &a.check {
                Check::FinalStateIn(ss) | Check::NeverVisits(ss) => {
                    for s in ss.iter().filter(|s| !self.state_declared(s)) {
                        problems.push(format!("assertion `{a}` references unknown state `{s}`"));
                    }
                }
                Check::ActionNeverTaken(acts) => {
                    for x in acts.iter().filter(|x| !self.action_declared(x)) {
                        problems.push(format!("assertion `{a}` references unknown action `{x}`"));
                    }
                }
                Check::LedgerBounded(_) | Check::TerminatesBy(_) => {}
            }
        }
        if let (Some(ens), Some(first)) = (&self.ensemble, self.phases.first()) {
            for p in &ens.profiles {
                if let Err(e) = p.i_model.check_total(&first.env) {
                    problems.push(format!("agent `{}`: i_model: {e}", p.agent));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Validation(problems))
        }
    }

    pub fn from_document(doc: &ScenarioDoc) -> Result<Self, ScenarioError> {
        let mut problems = Vec::new();
        let mut detection = BTreeMap::new();
        let mut phases = Vec::new();

        let mut phase_docs = vec![(doc.meta.initial.as_deref(), &doc.states, &doc.actions)];
        if let Some(d) = &doc.deployment {
            phase_docs.push((d.initial.as_deref(), &d.states, &d.actions));
        }
        for (i, (initial, states, actions)) in phase_docs.into_iter().enumerate() {
            match phase_from_docs(initial, states, actions, &mut detection) {
                Ok(p) => phases.push(p),
                Err(mut e) => problems.extend(e.drain(..).map(|m| format!("phase {i}: {m}"))),
            }
        }

        let x = &doc.externals;
        let externals = match ExternalActorModel::new(x.mapping, x.c, x.feedback_weight) {
            Ok(mut m) => {
                m.repeat_feedback = x.repeat_feedback;
                m.detection = detection;
                Some(m)
            }
            Err(e) => {
                problems.push(e.to_string());
                None
            }
        };

        let assertions = doc
            .assertions
            .iter()
            .filter_map(|a| match assertion_from_doc(a) {
                Ok(a) => Some(a),
                Err(e) => {
                    problems.push(e);
                    None
                }
            })
            .collect();

        let ensemble = match (&doc.agents, &doc.exchange) {
            (None, None) => None,
            (Some(agents), Some(ex)) => match ensemble_from_docs(agents, ex) {
                Ok(e) => Some(e),
                Err(e) => {
                    problems.push(e);
                    None
                }
            },
            _ => {
                problems.push("`agents` and `exchange` must be given together".into());
                None
            }
        };

        if !problems.is_empty() {
            return Err(ScenarioError::Validation(problems));
        }
        let spec = ScenarioSpec {
            name: doc.meta.name.clone(),
            description: doc.meta.description.clone(),
            phases,
            externals: externals.expect("no problems recorded"),
            judge: match x.judge {
                document::JudgeDoc::Model => Judge::Model,
                document::JudgeDoc::Truth => Judge::Truth,
            },
            agent: AgentSettings {
                kind: doc.agent.kind,
                depth: doc.agent.depth,
                lambda: doc.agent.lambda,
                penalty_estimate: doc.agent.penalty_estimate.unwrap_or(doc.agent.lambda),
            },
            horizon: doc.run.horizon,
            seed: doc.run.seed,
            assertions,
            check_premise: doc.meta.check_premise,
            ensemble,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_document(&self) -> ScenarioDoc {
        use document::*;

        let phase_doc = |p: &Phase| -> (Vec<StateDoc>, Vec<ActionDoc>) {
            let states = p
                .env
                .states()
                .iter()
                .map(|s| StateDoc {
                    id: s.id.to_string(),
                    properties: s.properties.clone(),
                    flags: s.flags.iter().copied().collect(),
                    u_hidden: p.u_hidden.get(&s.id),
                    i_true: p.i_true.get(&s.id),
                    i_model: p.i_model.get(&s.id),
                })
                .collect();
            let actions = p
                .env
                .actions()
                .iter()
                .map(|a| {
                    let deceptive = a.kind == ActionKind::Deceptive;
                    ActionDoc {
                        id: a.id.to_string(),
                        from: a.from.to_string(),
                        success: a.success_target.to_string(),
                        failure: (a.failure_target != a.from).then(|| a.failure_target.to_string()),
                        p_success: (!deceptive && a.p_success != 1.0).then_some(a.p_success),
                        kind: a.kind,
                        knowledge_gain: a.knowledge_gain,
                        deception_p: if deceptive { self.externals.detection.get(&a.id).copied() } else { None },
                    }
                })
                .collect();
            (states, actions)
        };

        let (states, actions) = phase_doc(&self.phases[0]);
        let deployment = self.phases.get(1).map(|p| {
            let (states, actions) = phase_doc(p);
            PhaseDoc { initial: Some(p.env.initial().to_string()), states, actions }
        });
        let assertions = self
            .assertions
            .iter()
            .map(|a| {
                let ids = |xs: &BTreeSet<StateId>| Some(xs.iter().map(|x| x.to_string()).collect());
                let (kind, states, actions, bound) = match &a.check {
                    Check::FinalStateIn(s) => (AssertionKindDoc::FinalStateIn, ids(s), None, None),
                    Check::NeverVisits(s) => (AssertionKindDoc::NeverVisits, ids(s), None, None),
                    Check::ActionNeverTaken(x) => (
                        AssertionKindDoc::ActionNeverTaken,
                        None,
                        Some(x.iter().map(|x| x.to_string()).collect()),
                        None,
                    ),
                    Check::LedgerBounded(n) => (AssertionKindDoc::LedgerBounded, None, None, Some(*n)),
                    Check::TerminatesBy(n) => (AssertionKindDoc::TerminatesBy, None, None, Some(*n)),
                };
                AssertionDoc { kind, agent: a.agent, states, actions, bound }
            })
            .collect();
        let (agents, exchange) = match &self.ensemble {
            None => (None, None),
            Some(e) => (
                Some(
                    e.profiles
                        .iter()
                        .map(|p| ProfileDoc {
                            id: p.agent.clone(),
                            confidence: p.confidence,
                            i_model: p.i_model.iter().map(|(k, v)| (k.to_string(), v)).collect(),
                        })
                        .collect(),
                ),
                Some(ExchangeDoc { tau: e.exchange.tau, damping: e.exchange.damping }),
            ),
        };

        ScenarioDoc {
            meta: MetaDoc {
                name: self.name.clone(),
                description: self.description.clone(),
                initial: Some(self.phases[0].env.initial().to_string()),
                check_premise: self.check_premise,
            },
            states,
            actions,
            externals: ExternalsDoc {
                mapping: self.externals.mapping,
                c: self.externals.c,
                feedback_weight: self.externals.feedback_weight,
                repeat_feedback: self.externals.repeat_feedback,
                judge: match self.judge {
                    Judge::Model => JudgeDoc::Model,
                    Judge::Truth => JudgeDoc::Truth,
                },
            },
            agent: AgentDoc {
                kind: self.agent.kind,
                depth: self.agent.depth,
                lambda: self.agent.lambda,
                penalty_estimate: (self.agent.penalty_estimate != self.agent.lambda)
                    .then_some(self.agent.penalty_estimate),
            },
            run: RunDoc { horizon: self.horizon, seed: self.seed },
            assertions,
            deployment,
            agents,
            exchange,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(&self.to_document()).expect("scenario documents serialize")
    }
}

fn phase_from_docs(
    initial: Option<&str>,
    states: &[document::StateDoc],
    actions: &[document::ActionDoc],
    detection: &mut BTreeMap<ActionId, f64>,
) -> Result<Phase, Vec<String>> {
    let mut problems = Vec::new();
    let initial = match initial.or_else(|| states.first().map(|s| s.id.as_str())) {
        Some(s) => s.to_owned(),
        None => return Err(vec!["no states declared".into()]),
    };
    let mut u_hidden = Vec::new();
    let mut i_true = Vec::new();
    let mut i_model = Vec::new();
    let env_states = states
        .iter()
        .map(|d| {
            for (name, value, table) in [
                ("u_hidden", d.u_hidden, &mut u_hidden),
                ("i_true", d.i_true, &mut i_true),
                ("i_model", d.i_model, &mut i_model),
            ] {
                match value {
                    Some(v) => table.push((d.id.clone(), v)),
                    None => problems.push(format!("state `{}`: missing {name}", d.id)),
                }
            }
            State {
                id: d.id.as_str().into(),
                properties: d.properties.clone(),
                flags: d.flags.iter().copied().collect(),
            }
        })
        .collect();

    let mut env_actions = Vec::new();
    for d in actions {
        let p_success = match (d.kind, d.deception_p, d.p_success) {
            (ActionKind::Deceptive, None, _) => {
                problems.push(format!("action `{}`: deceptive action needs deception_p", d.id));
                continue;
            }
            (ActionKind::Deceptive, Some(p), Some(q)) if p != q => {
                problems.push(format!("action `{}`: p_success {q} disagrees with deception_p {p}", d.id));
                continue;
            }
            (ActionKind::Deceptive, Some(p), _) => {
                if !(0.0..=1.0).contains(&p) {
                    problems.push(format!("action `{}`: deception_p {p} outside [0, 1]", d.id));
                    continue;
                }
                detection.insert(d.id.as_str().into(), p);
                p
            }
            (_, Some(_), _) => {
                problems.push(format!("action `{}`: deception_p is only allowed on deceptive actions", d.id));
                continue;
            }
            (_, None, p) => p.unwrap_or(1.0),
        };
        env_actions.push(Action {
            id: d.id.as_str().into(),
            from: d.from.as_str().into(),
            success_target: d.success.as_str().into(),
            failure_target: d.failure.as_deref().unwrap_or(&d.from).into(),
            p_success,
            kind: d.kind,
            knowledge_gain: d.knowledge_gain,
        });
    }

    let tables = [ScoreTable::new(u_hidden), ScoreTable::new(i_true), ScoreTable::new(i_model)];
    for t in &tables {
        if let Err(e) = t {
            problems.push(e.to_string());
        }
    }
    let env = Environment::new(env_states, env_actions, initial).map_err(|e| {
        problems.push(e.to_string());
    });
    if !problems.is_empty() {
        return Err(problems);
    }
    let [u_hidden, i_true, i_model] = tables.map(|t| t.expect("checked"));
    Ok(Phase { env: env.expect("checked"), u_hidden, i_true, i_model })
}

fn assertion_from_doc(d: &document::AssertionDoc) -> Result<BehavioralAssertion, String> {
    use document::AssertionKindDoc as K;
    let states = |kind: &str| -> Result<BTreeSet<StateId>, String> {
        match (&d.states, &d.actions, d.bound) {
            (Some(s), None, None) => Ok(s.iter().map(|x| StateId::from(x.as_str())).collect()),
            _ => Err(format!("assertion {kind} takes exactly a `states` list")),
        }
    };
    let bound = |kind: &str| -> Result<usize, String> {
        match (&d.states, &d.actions, d.bound) {
            (None, None, Some(n)) => Ok(n),
            _ => Err(format!("assertion {kind} takes exactly a `bound`")),
        }
    };
    let check = match d.kind {
        K::FinalStateIn => Check::FinalStateIn(states("final-state-in")?),
        K::NeverVisits => Check::NeverVisits(states("never-visits")?),
        K::ActionNeverTaken => match (&d.states, &d.actions, d.bound) {
            (None, Some(a), None) => Check::ActionNeverTaken(a.iter().map(|x| ActionId::from(x.as_str())).collect()),
            _ => return Err("assertion action-never-taken takes exactly an `actions` list".into()),
        },
        K::LedgerBounded => Check::LedgerBounded(bound("ledger-bounded")?),
        K::TerminatesBy => Check::TerminatesBy(bound("terminates-by")?),
    };
    Ok(BehavioralAssertion { check, agent: d.agent })
}

fn ensemble_from_docs(agents: &[document::ProfileDoc], ex: &document::ExchangeDoc) -> Result<EnsembleConfig, String> {
    let exchange = ExchangeConfig::new(ex.tau, ex.damping).map_err(|e| e.to_string())?;
    let mut profiles = agents
        .iter()
        .map(|a| {
            let table = ScoreTable::new(a.i_model.iter().map(|(k, &v)| (k.as_str(), v))).map_err(|e| e.to_string())?;
            IntentionProfile::new(a.id.clone(), table, a.confidence).map_err(|e| format!("agent `{}`: {e}", a.id))
        })
        .collect::<Result<Vec<_>, _>>()?;
    profiles.sort_by(|a, b| a.agent.cmp(&b.agent));
    if profiles.windows(2).any(|w| w[0].agent == w[1].agent) {
        return Err("duplicate agent id in `agents`".into());
    }
    if profiles.len() < 2 {
        return Err(format!("an ensemble needs at least two agents, got {}", profiles.len()));
    }
    Ok(EnsembleConfig { profiles, exchange })
}

fn unknown_fields(paths: Vec<String>) -> Result<(), ScenarioError> {
    if paths.is_empty() {
        Ok(())
    } else {
        Err(ScenarioError::Validation(paths.into_iter().map(|p| format!("unknown field `{p}`")).collect()))
    }
}

/// Parses and validates a TOML scenario document.
pub fn load_scenario(doc: &str) -> Result<ScenarioSpec, ScenarioError> {
    let mut unknown = Vec::new();
    let de = toml::Deserializer::parse(doc).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let parsed: ScenarioDoc = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
        .map_err(|e| ScenarioError::Parse(e.to_string()))?;
    unknown_fields(unknown)?;
    ScenarioSpec::from_document(&parsed)
}

pub fn load_scenario_json(doc: &str) -> Result<ScenarioSpec, ScenarioError> {
    let mut unknown = Vec::new();
    let mut de = serde_json::Deserializer::from_str(doc);
    let parsed: ScenarioDoc = serde_ignored::deserialize(&mut de, |path| unknown.push(path.to_string()))
        .map_err(|e| ScenarioError::Parse(e.to_string()))?;
    unknown_fields(unknown)?;
    ScenarioSpec::from_document(&parsed)
}

/// Bundled scenario documents, one per alignment challenge.
pub const BUNDLED: [(&str, &str); 6] = [
    ("reward_hacking", include_str!("../../scenarios/reward_hacking.toml")),
    ("instrumental", include_str!("../../scenarios/instrumental.toml")),
    ("misgeneralization", include_str!("../../scenarios/misgeneralization.toml")),
    ("tampering", include_str!("../../scenarios/tampering.toml")),
    ("deception", include_str!("../../scenarios/deception.toml")),
    ("pruning", include_str!("../../scenarios/pruning.toml")),
];

/// A three-agent world for the ensemble runner.
pub const BUNDLED_ENSEMBLE: &str = include_str!("../../scenarios/ensemble.toml");

pub fn bundled(name: &str) -> Option<Result<ScenarioSpec, ScenarioError>> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, doc)| load_scenario(doc))
}

pub fn bundled_all() -> Vec<ScenarioSpec> {
    BUNDLED
        .iter()
        .map(|(n, doc)| load_scenario(doc).unwrap_or_else(|e| panic!("bundled scenario {n} invalid: {e}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[meta]
name = "mini"

[[states]]
id = "a"
u_hidden = 1.0
i_true = 1.0
i_model = 0.9

[[states]]
id = "b"
flags = ["terminal"]
u_hidden = 5.0
i_true = 0.0
i_model = 0.1

[[actions]]
id = "go"
from = "a"
success = "b"

[agent]
lambda = 2.0
"#;

    #[test]
    fn minimal_document_defaults() {
        let spec = load_scenario(MINIMAL).unwrap();
        assert_eq!(spec.phases.len(), 1);
        assert_eq!(spec.phases[0].env.initial(), &StateId::from("a"));
        assert_eq!(spec.horizon, DEFAULT_HORIZON);
        assert_eq!(spec.agent.kind, AgentKind::Oblivious);
        assert_eq!(spec.agent.penalty_estimate, 2.0);
        let go = spec.phases[0].env.action(&"go".into()).unwrap();
        assert_eq!(go.failure_target, StateId::from("a"));
        assert_eq!(go.p_success, 1.0);
        assert!(spec.premise_holds());
    }

    #[test]
    fn empty_document_is_parse_error() {
        assert!(matches!(load_scenario(""), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn unknown_field_rejected() {
        let doc = MINIMAL.replace("lambda = 2.0", "lambda = 2.0\ncolour = \"red\"");
        match load_scenario(&doc).unwrap_err() {
            ScenarioError::Validation(v) => assert_eq!(v, vec!["unknown field `agent.colour`".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_error_mentions_line() {
        let doc = MINIMAL.replace("u_hidden = 5.0", "u_hidden = \"five\"");
        match load_scenario(&doc).unwrap_err() {
            ScenarioError::Parse(msg) => assert!(msg.contains("line"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_score_is_validation_error() {
        let doc = MINIMAL.replacen("u_hidden = 5.0\n", "", 1);
        match load_scenario(&doc).unwrap_err() {
            ScenarioError::Validation(v) => {
                assert!(v.iter().any(|m| m.contains("state `b`: missing u_hidden")), "{v:?}")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn premise_violation_reported() {
        let doc = MINIMAL.replace("i_model = 0.1", "i_model = 5.0");
        let err = load_scenario(&doc).unwrap_err();
        assert!(matches!(err, ScenarioError::Validation(ref v) if v.iter().any(|m| m.contains("intention model"))));
        let opted_out = doc.replace("name = \"mini\"", "name = \"mini\"\ncheck_premise = false");
        let spec = load_scenario(&opted_out).unwrap();
        assert!(!spec.premise_holds());
    }

    #[test]
    fn unknown_assertion_target_rejected() {
        let doc = format!("{MINIMAL}\n[[assertions]]\nkind = \"final-state-in\"\nstates = [\"zzz\"]\n");
        assert!(matches!(load_scenario(&doc), Err(ScenarioError::Validation(_))));
        let doc = format!("{MINIMAL}\n[[assertions]]\nkind = \"ledger-bounded\"\nstates = [\"a\"]\n");
        assert!(matches!(load_scenario(&doc), Err(ScenarioError::Validation(_))));
    }

    #[test]
    fn deception_probability_rules() {
        let base = MINIMAL.replace("success = \"b\"", "success = \"b\"\nkind = \"deceptive\"");
        assert!(load_scenario(&base).is_err());
        let ok = base.replace("kind = \"deceptive\"", "kind = \"deceptive\"\ndeception_p = 0.7");
        let spec = load_scenario(&ok).unwrap();
        assert_eq!(spec.phases[0].env.action(&"go".into()).unwrap().p_success, 0.7);
        assert_eq!(spec.externals.detection.get(&ActionId::from("go")), Some(&0.7));
        let stray = MINIMAL.replace("success = \"b\"", "success = \"b\"\ndeception_p = 0.7");
        assert!(load_scenario(&stray).is_err());
    }

    #[test]
    fn json_documents_load() {
        let spec = load_scenario(MINIMAL).unwrap();
        let json = serde_json::to_string(&spec.to_document()).unwrap();
        let again = load_scenario_json(&json).unwrap();
        assert_eq!(again.to_document(), spec.to_document());
    }

    #[test]
    fn overrides_apply_and_validate() {
        let spec = load_scenario(MINIMAL).unwrap();
        let o =
            RunOverrides { agent: Some(AgentKind::Baseline), lambda: Some(9.0), seed: Some(4), ..Default::default() };
        let s2 = spec.with_overrides(&o).unwrap();
        assert_eq!(s2.agent.kind, AgentKind::Baseline);
        assert_eq!(s2.agent.penalty_estimate, 9.0);
        assert_eq!(s2.seed, 4);
        assert!(spec.with_overrides(&RunOverrides { depth: Some(0), ..Default::default() }).is_err());
    }
}

//! Single-run executor: plan, act, maybe get corrected, record, check stop.
//!
//! Traces carry the simulator's view of every tick, hidden scores
//! included. The agent's own memory never sees those values; the trace is
//! the log of an outside observer.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{BehavioralAssertion, Check, ScenarioError, ScenarioSpec};
use crate::agents::{choose_action_baseline, plan_oblivious, AgentError, AgentKind, AgentMemory};
use crate::externals::{stop_pressed, ExternalActorModel, FeedbackEvent};
use crate::state::{Action, ActionId, ActionKind, Environment, StateId};
use crate::valuation::{FactSource, HiddenUtility, KnowledgeFact, KnowledgeLedger, ScoreTable};

/// What an action execution needs besides the rng.
pub struct StepContext<'a> {
    pub env: &'a Environment,
    pub ext: &'a ExternalActorModel,
    /// Table the externals judge states through.
    pub judge: &'a ScoreTable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub state: StateId,
    pub succeeded: bool,
    pub feedback: Option<FeedbackEvent>,
}

fn run_err(e: impl std::fmt::Display) -> ScenarioError {
    ScenarioError::Run(e.to_string())
}

/// Executes `action` from `state` and lets the externals react to the
/// resulting state. Undetected deception is never corrected and detected
/// deception always is. With `repeat_feedback` off, a state is corrected at
/// most once per run; `corrected_once` tracks that.
pub fn execute_action<R: Rng + ?Sized>(
    ctx: &StepContext<'_>,
    state: &StateId,
    action: &Action,
    rng: &mut R,
    corrected_once: &mut BTreeSet<StateId>,
) -> Result<Step, ScenarioError> {
    if action.from != *state {
        return Err(run_err(format!("action `{}` is not applicable in `{state}`", action.id)));
    }
    if action.kind == ActionKind::Deceptive {
        let fooled = ctx.ext.detect_deception(action, rng).map_err(run_err)?;
        let (next, feedback) = if fooled {
            (action.success_target.clone(), None)
        } else {
            corrected_once.insert(action.failure_target.clone());
            (action.failure_target.clone(), Some(ctx.ext.feedback_event(&action.failure_target)))
        };
        return Ok(Step { state: next, succeeded: fooled, feedback });
    }

    let t = ctx.env.apply_outcome(state, action, rng).map_err(run_err)?;
    let feedback = if !ctx.ext.repeat_feedback && corrected_once.contains(&t.state) {
        None
    } else {
        ctx.ext.maybe_correct(&t.state, ctx.judge, rng).map_err(run_err)?
    };
    if feedback.is_some() {
        corrected_once.insert(t.state.clone());
    }
    Ok(Step { state: t.state, succeeded: t.succeeded, feedback })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EndReason {
    Terminal,
    Stopped,
    Horizon,
    /// The agent had nothing it was willing to do.
    NoActions,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Tick {
    /// Actions taken so far. A phase change repeats the previous number.
    pub tick: usize,
    pub phase: usize,
    pub state: StateId,
    pub action: Option<ActionId>,
    pub succeeded: Option<bool>,
    /// Values the agent assigned to each candidate when deciding.
    pub ev_table: BTreeMap<ActionId, f64>,
    pub corrected: bool,
    pub ledger_size: usize,
    pub penalty: f64,
    pub stop: bool,
    pub u_hidden: f64,
    pub i_true: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Outcome {
    pub final_state: StateId,
    pub final_phase: usize,
    pub end: EndReason,
    pub actions_taken: usize,
    pub ledger_size: usize,
    pub penalty: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub assertion: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trace {
    pub scenario: String,
    pub agent: AgentKind,
    pub seed: u64,
    pub horizon: usize,
    pub lambda: f64,
    pub ticks: Vec<Tick>,
    pub outcome: Outcome,
    pub verdicts: Vec<Verdict>,
    pub memory: AgentMemory,
}

impl Trace {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn actions(&self) -> impl Iterator<Item = &ActionId> {
        self.ticks.iter().filter_map(|t| t.action.as_ref())
    }

    pub fn visited(&self) -> impl Iterator<Item = &StateId> {
        self.ticks.iter().map(|t| &t.state)
    }
}

struct Recorder<'a> {
    spec: &'a ScenarioSpec,
    ticks: Vec<Tick>,
}

impl Recorder<'_> {
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        tick: usize,
        phase: usize,
        state: &StateId,
        hidden: &ScoreTable,
        mem: &AgentMemory,
        stop: bool,
        action: Option<(&ActionId, bool)>,
        ev_table: Vec<(ActionId, f64)>,
        corrected: bool,
    ) {
        let p = &self.spec.phases[phase];
        self.ticks.push(Tick {
            tick,
            phase,
            state: state.clone(),
            action: action.map(|(a, _)| a.clone()),
            succeeded: action.map(|(_, ok)| ok),
            ev_table: ev_table.into_iter().collect(),
            corrected,
            ledger_size: mem.ledger().len(),
            penalty: mem.ledger().penalty(),
            stop,
            u_hidden: hidden.get(state).unwrap_or(f64::NAN),
            i_true: p.i_true.get(state).unwrap_or(f64::NAN),
        });
    }
}

/// Runs `spec` once with its own agent settings and seed.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<Trace, ScenarioError> {
    spec.validate()?;
    let cfg = spec.agent.config();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut mem = AgentMemory::new(KnowledgeLedger::new(spec.agent.lambda).map_err(run_err)?);
    let mut rec = Recorder { spec, ticks: Vec::new() };
    let mut corrected_once = BTreeSet::new();

    let mut phase = 0;
    let mut env = &spec.phases[0].env;
    let mut hidden = spec.phases[0].u_hidden.clone();
    let mut state = env.initial().clone();
    let mut stop_active = true;
    let mut taken = 0;

    mem.record_visit(&state);
    rec.push(0, 0, &state, &hidden, &mem, stop_pressed(env, &state, stop_active), None, Vec::new(), false);

    let end = loop {
        if stop_pressed(env, &state, stop_active) {
            break EndReason::Stopped;
        }
        if env.is_terminal(&state) {
            if phase + 1 < spec.phases.len() {
                // Deployment: same agent, same ledger, new world.
                phase += 1;
                env = &spec.phases[phase].env;
                hidden = spec.phases[phase].u_hidden.clone();
                state = env.initial().clone();
                stop_active = true;
                mem.record_visit(&state);
                let stop = stop_pressed(env, &state, stop_active);
                rec.push(taken, phase, &state, &hidden, &mem, stop, None, Vec::new(), false);
                continue;
            }
            break EndReason::Terminal;
        }
        if taken >= spec.horizon {
            break EndReason::Horizon;
        }

        let current = &spec.phases[phase];
        let decision = match cfg.kind {
            AgentKind::Baseline => choose_action_baseline(env, &state, &hidden, &cfg),
            AgentKind::Oblivious => plan_oblivious(
                env,
                &state,
                &HiddenUtility::new(hidden.clone()),
                &mut mem,
                &spec.externals,
                &current.i_model,
                &cfg,
            ),
        };
        let decision = match decision {
            Ok(d) => d,
            Err(AgentError::NoActions(_)) => break EndReason::NoActions,
            Err(e) => return Err(run_err(e)),
        };
        let action = env.action(&decision.chosen_action).ok_or_else(|| run_err("planner chose an unknown action"))?;
        let ctx = StepContext { env, ext: &spec.externals, judge: spec.judge_table(current) };
        let step = execute_action(&ctx, &state, action, &mut rng, &mut corrected_once)?;
        taken += 1;

        if action.kind == ActionKind::Reasoning && action.knowledge_gain > 0.0 {
            let fact = KnowledgeFact::new(
                FactSource::ReasoningAction,
                action.knowledge_gain,
                format!("reasoned via {}", action.id),
            )
            .map_err(run_err)?;
            mem.learn(fact).map_err(run_err)?;
        }
        let corrected = step.feedback.is_some();
        if let Some(ev) = step.feedback {
            mem.learn(ev.fact).map_err(run_err)?;
        }
        if step.succeeded {
            match action.kind {
                ActionKind::Tamper => {
                    let top = hidden.max_value().unwrap_or(0.0);
                    hidden = ScoreTable::constant(env, top);
                }
                ActionKind::StopDisable => stop_active = false,
                _ => {}
            }
        }
        mem.record_action(&action.id);
        mem.record_visit(&step.state);
        state = step.state;
        let stop = stop_pressed(env, &state, stop_active);
        rec.push(
            taken,
            phase,
            &state,
            &hidden,
            &mem,
            stop,
            Some((&action.id, step.succeeded)),
            decision.considered,
            corrected,
        );
    };

    let outcome = Outcome {
        final_state: state,
        final_phase: phase,
        end,
        actions_taken: taken,
        ledger_size: mem.ledger().len(),
        penalty: mem.ledger().penalty(),
    };
    let ticks = rec.ticks;
    let verdicts =
        spec.assertions.iter().filter(|a| a.applies_to(cfg.kind)).map(|a| evaluate(a, &ticks, &outcome)).collect();
    Ok(Trace {
        scenario: spec.name.clone(),
        agent: cfg.kind,
        seed: spec.seed,
        horizon: spec.horizon,
        lambda: spec.agent.lambda,
        ticks,
        outcome,
        verdicts,
        memory: mem,
    })
}

fn evaluate(a: &BehavioralAssertion, ticks: &[Tick], outcome: &Outcome) -> Verdict {
    let (passed, detail) = match &a.check {
        Check::FinalStateIn(set) => {
            (set.contains(&outcome.final_state), format!("final state {}", outcome.final_state))
        }
        Check::NeverVisits(set) => match ticks.iter().find(|t| set.contains(&t.state)) {
            Some(t) => (false, format!("visited {} at tick {}", t.state, t.tick)),
            None => (true, "not visited".into()),
        },
        Check::ActionNeverTaken(set) => {
            match ticks.iter().find(|t| t.action.as_ref().is_some_and(|x| set.contains(x))) {
                Some(t) => (false, format!("took {} at tick {}", t.action.as_ref().expect("matched"), t.tick)),
                None => (true, "not taken".into()),
            }
        }
        Check::LedgerBounded(n) => (outcome.ledger_size <= *n, format!("ledger size {}", outcome.ledger_size)),
        Check::TerminatesBy(n) => (
            matches!(outcome.end, EndReason::Terminal | EndReason::Stopped) && outcome.actions_taken <= *n,
            format!("{:?} after {} actions", outcome.end, outcome.actions_taken),
        ),
    };
    Verdict { assertion: a.to_string(), passed, detail }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::load_scenario;

    const CHAIN: &str = r#"
[meta]
name = "chain"

[[states]]
id = "a"
u_hidden = 0.0
i_true = 1.0
i_model = 0.9

[[states]]
id = "b"
u_hidden = 1.0
i_true = 1.0
i_model = 0.9

[[states]]
id = "c"
flags = ["terminal"]
u_hidden = 2.0
i_true = 1.0
i_model = 0.9

[[actions]]
id = "ab"
from = "a"
success = "b"

[[actions]]
id = "bc"
from = "b"
success = "c"

[externals]
mapping = "complement"

[agent]
kind = "baseline"
lambda = 1.0

[[assertions]]
kind = "final-state-in"
states = ["c"]

[[assertions]]
kind = "terminates-by"
bound = 2
"#;

    #[test]
    fn chain_runs_to_terminal() {
        let spec = load_scenario(CHAIN).unwrap();
        let trace = run_scenario(&spec).unwrap();
        assert_eq!(trace.ticks.len(), 3);
        assert_eq!(trace.outcome.end, EndReason::Terminal);
        assert_eq!(trace.outcome.final_state, StateId::from("c"));
        assert!(trace.passed(), "{:?}", trace.verdicts);
        let acts: Vec<_> = trace.actions().map(|a| a.as_str()).collect();
        assert_eq!(acts, ["ab", "bc"]);
    }

    #[test]
    fn horizon_zero_records_initial_state_only() {
        let spec = load_scenario(CHAIN).unwrap();
        let spec = spec.with_overrides(&super::super::RunOverrides { horizon: Some(0), ..Default::default() }).unwrap();
        let trace = run_scenario(&spec).unwrap();
        assert_eq!(trace.ticks.len(), 1);
        assert_eq!(trace.ticks[0].action, None);
        assert_eq!(trace.outcome.end, EndReason::Horizon);
        assert!(!trace.passed());
    }

    #[test]
    fn ledger_never_shrinks_and_ticks_within_horizon() {
        let spec = load_scenario(&CHAIN.replace("i_model = 0.9", "i_model = 0.5")).unwrap();
        for seed in 0..50 {
            let s =
                spec.with_overrides(&super::super::RunOverrides { seed: Some(seed), ..Default::default() }).unwrap();
            let trace = run_scenario(&s).unwrap();
            assert!(trace.ticks.windows(2).all(|w| w[0].ledger_size <= w[1].ledger_size));
            assert!(trace.ticks.iter().all(|t| t.tick <= s.horizon));
        }
    }

    #[test]
    fn once_per_state_feedback() {
        let loopy = CHAIN
            .replace("name = \"chain\"", "name = \"chain\"\ncheck_premise = false")
            .replace("i_model = 0.9", "i_model = 0.0")
            .replace("success = \"c\"", "success = \"c\"\np_success = 0.0\nfailure = \"a\"")
            .replace("mapping = \"complement\"", "mapping = \"complement\"\nrepeat_feedback = false")
            .replace("[[assertions]]\nkind = \"terminates-by\"\nbound = 2\n", "");
        let spec = load_scenario(&format!("{loopy}\n[run]\nhorizon = 10\n")).unwrap();
        let trace = run_scenario(&spec).unwrap();
        assert_eq!(trace.outcome.end, EndReason::Horizon);
        // Only `a` and `b` are ever entered; each is corrected once.
        assert_eq!(trace.outcome.ledger_size, 2);
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = load_scenario(&CHAIN.replace("i_model = 0.9", "i_model = 0.5")).unwrap();
        let a = serde_json::to_string(&run_scenario(&spec).unwrap()).unwrap();
        let b = serde_json::to_string(&run_scenario(&spec).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}

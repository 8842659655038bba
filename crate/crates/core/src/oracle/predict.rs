//! Exhaustive prediction of whole runs. Every outcome and correction event
//! is branched on; decisions come from the oracle's own expectimax.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use super::{correction_probability, exact_expectimax, ratio_f64, to_rational, OracleError, Valuer};
use crate::agents::AgentKind;
use crate::scenarios::{Check, Judge, ScenarioSpec};
use crate::state::{ActionId, ActionKind, Flag, StateId};
use crate::valuation::ScoreTable;

/// Run-tree nodes expanded before giving up.
const NODE_BUDGET: usize = 200_000;

/// One distinguishable way a run can end, with its probability.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredictedOutcome {
    #[serde(serialize_with = "ser_ratio")]
    pub probability: BigRational,
    pub phase: usize,
    pub final_state: StateId,
    /// `terminal`, `stopped`, `horizon` or `no-actions`.
    pub end: &'static str,
    pub actions_taken: usize,
    pub ledger_size: usize,
    pub visited: BTreeSet<StateId>,
    pub actions: BTreeSet<ActionId>,
}

fn ser_ratio<S: serde::Serializer>(r: &BigRational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(ratio_f64(r))
}

#[derive(Clone)]
struct Node {
    prob: BigRational,
    phase: usize,
    state: StateId,
    stop_active: bool,
    tampered: bool,
    ledger_size: usize,
    ledger_weight: f64,
    corrected: BTreeSet<StateId>,
    taken: usize,
    visited: BTreeSet<StateId>,
    actions: BTreeSet<ActionId>,
}

impl Node {
    fn finish(self, end: &'static str) -> PredictedOutcome {
        PredictedOutcome {
            probability: self.prob,
            phase: self.phase,
            final_state: self.state,
            end,
            actions_taken: self.taken,
            ledger_size: self.ledger_size,
            visited: self.visited,
            actions: self.actions,
        }
    }
}

fn judge(spec: &ScenarioSpec, phase: usize) -> &ScoreTable {
    let p = &spec.phases[phase];
    match spec.judge {
        Judge::Model => &p.i_model,
        Judge::Truth => &p.i_true,
    }
}

/// Every way a run of `spec` (with its configured agent) can unfold,
/// merged by observable outcome. Probabilities are exact and sum to one.
pub fn predict_outcomes(spec: &ScenarioSpec) -> Result<Vec<PredictedOutcome>, OracleError> {
    let first = &spec.phases[0];
    let mut stack = vec![Node {
        prob: BigRational::one(),
        phase: 0,
        state: first.env.initial().clone(),
        stop_active: true,
        tampered: false,
        ledger_size: 0,
        ledger_weight: 0.0,
        corrected: BTreeSet::new(),
        taken: 0,
        visited: BTreeSet::from([first.env.initial().clone()]),
        actions: BTreeSet::new(),
    }];
    let mut done = Vec::new();
    let mut expanded = 0;

    while let Some(mut n) = stack.pop() {
        expanded += 1;
        if expanded > NODE_BUDGET {
            return Err(OracleError::BoundsExceeded(format!("run tree exceeds {NODE_BUDGET} nodes")));
        }
        let env = &spec.phases[n.phase].env;
        if n.stop_active && env.has_flag(&n.state, Flag::StopButton) {
            done.push(n.finish("stopped"));
            continue;
        }
        if env.has_flag(&n.state, Flag::Terminal) || env.actions_from(&n.state).next().is_none() {
            if n.phase + 1 < spec.phases.len() {
                n.phase += 1;
                n.state = spec.phases[n.phase].env.initial().clone();
                n.stop_active = true;
                n.tampered = false;
                n.visited.insert(n.state.clone());
                stack.push(n);
            } else {
                done.push(n.finish("terminal"));
            }
            continue;
        }
        if n.taken >= spec.horizon {
            done.push(n.finish("horizon"));
            continue;
        }

        let phase = &spec.phases[n.phase];
        let hidden = if n.tampered {
            let top = phase.u_hidden.iter().map(|(_, v)| v).fold(f64::NEG_INFINITY, f64::max);
            ScoreTable::constant(env, top)
        } else {
            phase.u_hidden.clone()
        };
        let valuer = match spec.agent.kind {
            AgentKind::Baseline => Valuer::Baseline { u: &hidden },
            AgentKind::Oblivious => Valuer::Oblivious {
                hidden: &hidden,
                ext: &spec.externals,
                judge: &phase.i_model,
                penalty_estimate: spec.agent.penalty_estimate,
                ledger_weight: n.ledger_weight,
            },
        };
        let choice = exact_expectimax::<BigRational>(env, &n.state, &valuer, spec.agent.depth)?;
        let Some(chosen) = choice.best else {
            done.push(n.finish("no-actions"));
            continue;
        };
        let action = env.action(&chosen).expect("oracle picks declared actions");

        let mut after = n.clone();
        after.taken += 1;
        after.actions.insert(action.id.clone());
        if action.kind == ActionKind::Reasoning && action.knowledge_gain > 0.0 {
            after.ledger_size += 1;
            after.ledger_weight += action.knowledge_gain;
        }

        // (probability, target, action succeeded, correction chance)
        let mut outcomes: Vec<(BigRational, StateId, bool, BigRational)> = Vec::new();
        if action.kind == ActionKind::Deceptive {
            let p = to_rational(spec.externals.detection.get(&action.id).copied().unwrap_or(action.p_success))?;
            outcomes.push((p.clone(), action.success_target.clone(), true, BigRational::zero()));
            outcomes.push((BigRational::one() - p, action.failure_target.clone(), false, BigRational::one()));
        } else {
            let p = to_rational(action.p_success)?;
            for (q, target, ok) in
                [(p.clone(), &action.success_target, true), (BigRational::one() - p, &action.failure_target, false)]
            {
                let corr = if !spec.externals.repeat_feedback && after.corrected.contains(target) {
                    BigRational::zero()
                } else {
                    let i = judge(spec, after.phase)
                        .get(target)
                        .ok_or_else(|| OracleError::MissingScore(target.clone()))?;
                    correction_probability(&spec.externals, to_rational(i)?)?
                };
                outcomes.push((q, target.clone(), ok, corr));
            }
        }

        for (p, target, ok, corr) in outcomes {
            if p.is_zero() {
                continue;
            }
            for (hit, q) in [(true, corr.clone()), (false, BigRational::one() - &corr)] {
                if q.is_zero() {
                    continue;
                }
                let mut child = after.clone();
                child.prob = &n.prob * &p * &q;
                if hit {
                    child.ledger_size += 1;
                    child.ledger_weight += spec.externals.feedback_weight;
                    child.corrected.insert(target.clone());
                }
                if ok {
                    match action.kind {
                        ActionKind::Tamper => child.tampered = true,
                        ActionKind::StopDisable => child.stop_active = false,
                        _ => {}
                    }
                }
                child.visited.insert(target.clone());
                child.state = target.clone();
                stack.push(child);
            }
        }
    }

    let mut merged: BTreeMap<String, PredictedOutcome> = BTreeMap::new();
    for o in done {
        let key = format!(
            "{}|{}|{}|{}|{}|{:?}|{:?}",
            o.phase, o.final_state, o.end, o.actions_taken, o.ledger_size, o.visited, o.actions
        );
        match merged.get_mut(&key) {
            Some(m) => m.probability = &m.probability + &o.probability,
            None => {
                merged.insert(key, o);
            }
        }
    }
    Ok(merged.into_values().collect())
}

fn passes(check: &Check, o: &PredictedOutcome) -> bool {
    match check {
        Check::FinalStateIn(s) => s.contains(&o.final_state),
        Check::NeverVisits(s) => o.visited.is_disjoint(s),
        Check::ActionNeverTaken(a) => o.actions.is_disjoint(a),
        Check::LedgerBounded(n) => o.ledger_size <= *n,
        Check::TerminatesBy(n) => matches!(o.end, "terminal" | "stopped") && o.actions_taken <= *n,
    }
}

/// Probability that every assertion applying to the spec's agent kind holds.
pub fn assertion_pass_probability(spec: &ScenarioSpec, outcomes: &[PredictedOutcome]) -> BigRational {
    outcomes
        .iter()
        .filter(|o| {
            spec.assertions.iter().filter(|a| a.agent.is_none_or(|k| k == spec.agent.kind)).all(|a| passes(&a.check, o))
        })
        .fold(BigRational::zero(), |acc, o| acc + &o.probability)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StateChoice {
    pub phase: usize,
    pub state: StateId,
    pub action: Option<ActionId>,
    pub values: Vec<(ActionId, f64)>,
}

/// Everything the oracle can say about a scenario for one agent kind.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    pub scenario: String,
    pub agent: AgentKind,
    /// Best action from every non-leaf state, with nothing yet learned.
    pub choices: Vec<StateChoice>,
    pub outcomes: Vec<PredictedOutcome>,
    pub assertion_pass_probability: f64,
}

pub fn oracle_report(spec: &ScenarioSpec) -> Result<OracleReport, OracleError> {
    let mut choices = Vec::new();
    for (i, phase) in spec.phases.iter().enumerate() {
        let valuer = match spec.agent.kind {
            AgentKind::Baseline => Valuer::Baseline { u: &phase.u_hidden },
            AgentKind::Oblivious => Valuer::Oblivious {
                hidden: &phase.u_hidden,
                ext: &spec.externals,
                judge: &phase.i_model,
                penalty_estimate: spec.agent.penalty_estimate,
                ledger_weight: 0.0,
            },
        };
        for s in phase.env.state_ids() {
            if phase.env.is_leaf(s) {
                continue;
            }
            let res = exact_expectimax::<BigRational>(&phase.env, s, &valuer, spec.agent.depth)?;
            choices.push(StateChoice {
                phase: i,
                state: s.clone(),
                action: res.best,
                values: res.values.into_iter().map(|(a, v)| (a, ratio_f64(&v))).collect(),
            });
        }
    }
    let outcomes = predict_outcomes(spec)?;
    let p = assertion_pass_probability(spec, &outcomes);
    Ok(OracleReport {
        scenario: spec.name.clone(),
        agent: spec.agent.kind,
        choices,
        assertion_pass_probability: ratio_f64(&p),
        outcomes,
    })
}

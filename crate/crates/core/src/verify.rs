//! Agent-versus-oracle agreement on random worlds.

use num_rational::BigRational;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::agents::{choose_action_baseline, plan_oblivious, AgentConfig, AgentError, AgentKind, AgentMemory};
use crate::oracle::random::{random_world, RandomWorld, WorldBounds};
use crate::oracle::{exact_expectimax, OracleError, Valuer};
use crate::state::{ActionId, StateId};
use crate::valuation::{FactSource, HiddenUtility, KnowledgeFact, KnowledgeLedger};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Mismatch {
    pub instance: usize,
    pub agent: AgentKind,
    pub state: StateId,
    pub agent_choice: Option<ActionId>,
    pub oracle_choice: Option<ActionId>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub instances: usize,
    /// Instances where both agent kinds agreed with the oracle at every
    /// non-leaf state.
    pub agreements: usize,
    pub decisions_checked: usize,
    /// Largest gap between agent and exact values at the chosen action.
    pub max_value_gap: f64,
    pub mismatches: Vec<Mismatch>,
}

impl VerifyReport {
    pub fn all_agree(&self) -> bool {
        self.agreements == self.instances
    }
}

/// The chosen action, if any, and the value of every candidate.
type Choice = (Option<ActionId>, Vec<(ActionId, f64)>);

fn agent_choice(w: &RandomWorld, kind: AgentKind, s: &StateId) -> Result<Choice, AgentError> {
    let result = match kind {
        AgentKind::Baseline => choose_action_baseline(&w.env, s, &w.u, &AgentConfig::baseline(w.depth)),
        AgentKind::Oblivious => {
            let mut ledger = KnowledgeLedger::new(w.penalty_estimate).expect("nonnegative");
            if w.ledger_weight > 0.0 {
                let fact =
                    KnowledgeFact::new(FactSource::ExternalFeedback, w.ledger_weight, "prior").expect("positive");
                ledger = ledger.record_feedback(fact).expect("valid fact");
            }
            let mut mem = AgentMemory::new(ledger);
            let cfg = AgentConfig::oblivious(w.depth, w.penalty_estimate);
            plan_oblivious(&w.env, s, &HiddenUtility::new(w.u.clone()), &mut mem, &w.ext, &w.i_model, &cfg)
        }
    };
    match result {
        Ok(d) => Ok((Some(d.chosen_action), d.considered)),
        Err(AgentError::NoActions(_)) => Ok((None, Vec::new())),
        Err(e) => Err(e),
    }
}

fn oracle_choice(w: &RandomWorld, kind: AgentKind, s: &StateId) -> Result<Choice, OracleError> {
    let valuer = match kind {
        AgentKind::Baseline => Valuer::Baseline { u: &w.u },
        AgentKind::Oblivious => Valuer::Oblivious {
            hidden: &w.u,
            ext: &w.ext,
            judge: &w.i_model,
            penalty_estimate: w.penalty_estimate,
            ledger_weight: w.ledger_weight,
        },
    };
    let res = exact_expectimax::<BigRational>(&w.env, s, &valuer, w.depth)?;
    let values = res.values.iter().map(|(a, v)| (a.clone(), crate::oracle::Scalar::to_f64(v))).collect();
    Ok((res.best, values))
}

/// Compares both planners with the oracle on `count` random worlds drawn
/// from `seed`, at every non-leaf state of each world.
pub fn verify_random(count: usize, seed: u64, bounds: WorldBounds) -> Result<VerifyReport, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = VerifyReport {
        seed,
        instances: count,
        agreements: 0,
        decisions_checked: 0,
        max_value_gap: 0.0,
        mismatches: Vec::new(),
    };
    for instance in 0..count {
        let w = random_world(&mut rng, bounds);
        let mut agreed = true;
        for s in w.env.state_ids() {
            if w.env.is_leaf(s) {
                continue;
            }
            for kind in AgentKind::ALL {
                let (a, av) = agent_choice(&w, kind, s).map_err(|e| e.to_string())?;
                let (o, ov) = oracle_choice(&w, kind, s).map_err(|e| e.to_string())?;
                report.decisions_checked += 1;
                for ((_, x), (_, y)) in av.iter().zip(&ov) {
                    report.max_value_gap = report.max_value_gap.max((x - y).abs());
                }
                if a != o || av.len() != ov.len() {
                    agreed = false;
                    report.mismatches.push(Mismatch {
                        instance,
                        agent: kind,
                        state: s.clone(),
                        agent_choice: a,
                        oracle_choice: o,
                    });
                }
            }
        }
        if agreed {
            report.agreements += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_batch_agrees() {
        let r = verify_random(30, 9, WorldBounds::default()).unwrap();
        assert!(r.all_agree(), "{:?}", r.mismatches);
        assert!(r.decisions_checked > 30);
        assert!(r.max_value_gap < 1e-6, "{}", r.max_value_gap);
    }
}

//! Random desk-scale worlds for cross-checking planners against the oracle.
//! Scores sit on a two-decimal grid and probabilities on a 0.05 grid, so
//! exact and floating evaluation only disagree on true ties.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::externals::{CorrectionMapping, ExternalActorModel};
use crate::state::{Action, ActionKind, Environment, Flag, State, StateId};
use crate::valuation::ScoreTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WorldBounds {
    pub max_states: usize,
    pub max_actions: usize,
    pub max_depth: usize,
}

impl Default for WorldBounds {
    fn default() -> Self {
        Self { max_states: 10, max_actions: 4, max_depth: 3 }
    }
}

/// An environment plus everything both planners need to decide in it.
#[derive(Clone, Debug)]
pub struct RandomWorld {
    pub env: Environment,
    pub u: ScoreTable,
    pub i_model: ScoreTable,
    pub ext: ExternalActorModel,
    pub penalty_estimate: f64,
    /// Weight already in the agent's ledger.
    pub ledger_weight: f64,
    pub depth: usize,
}

fn grid<R: Rng + ?Sized>(rng: &mut R, lo: i32, hi: i32, scale: f64) -> f64 {
    f64::from(rng.random_range(lo..=hi)) / scale
}

/// Draws a world with at most `max_actions` actions per state.
pub fn random_world<R: Rng + ?Sized>(rng: &mut R, bounds: WorldBounds) -> RandomWorld {
    let n = rng.random_range(2..=bounds.max_states.max(2));
    let ids: Vec<StateId> = (0..n).map(|i| StateId::new(format!("s{i}"))).collect();
    let mut states = Vec::with_capacity(n);
    for (i, id) in ids.iter().enumerate() {
        let mut s = State::new(id.clone());
        if i > 0 && rng.random_bool(0.25) {
            s = s.with_flag(Flag::Terminal);
        }
        if i > 0 && rng.random_bool(0.1) {
            s = s.with_flag(Flag::StopButton);
        }
        states.push(s);
    }

    let mut detection = BTreeMap::new();
    let mut actions = Vec::new();
    for (i, from) in ids.iter().enumerate() {
        let lo = usize::from(i == 0);
        let count = rng.random_range(lo..=bounds.max_actions);
        for j in 0..count {
            let id = format!("a{i}_{j}");
            let to = ids.choose(rng).expect("nonempty");
            let fail = if rng.random_bool(0.5) { from } else { ids.choose(rng).expect("nonempty") };
            let p = if rng.random_bool(0.4) { 1.0 } else { grid(rng, 0, 20, 20.0) };
            let roll: f64 = rng.random();
            let (kind, gain) = match roll {
                r if r < 0.65 => (ActionKind::Normal, 0.0),
                r if r < 0.77 => (ActionKind::Reasoning, [0.0, 0.5, 1.0][rng.random_range(0..3)]),
                r if r < 0.87 => (ActionKind::Deceptive, 0.0),
                r if r < 0.94 => (ActionKind::Tamper, 0.0),
                _ => (ActionKind::StopDisable, 0.0),
            };
            if kind == ActionKind::Deceptive {
                detection.insert(id.as_str().into(), p);
            }
            actions.push(Action {
                id: id.into(),
                from: from.clone(),
                success_target: to.clone(),
                failure_target: fail.clone(),
                p_success: p,
                kind,
                knowledge_gain: gain,
            });
        }
    }
    let env = Environment::new(states, actions, ids[0].clone()).expect("generated worlds are valid");

    let u = ScoreTable::new(ids.iter().map(|s| (s.clone(), grid(rng, -1000, 1000, 100.0)))).expect("finite");
    let i_model = ScoreTable::new(ids.iter().map(|s| (s.clone(), grid(rng, 0, 12, 10.0)))).expect("finite");
    let mapping = if rng.random_bool(0.5) { CorrectionMapping::Inverse } else { CorrectionMapping::Complement };
    let c = [0.05, 0.1, 0.2][rng.random_range(0..3)];
    let weight = [0.5, 1.0, 2.0][rng.random_range(0..3)];
    let mut ext = ExternalActorModel::new(mapping, c, weight).expect("valid constants");
    ext.detection = detection;
    let penalty_estimate = if rng.random_bool(0.15) { 0.0 } else { grid(rng, 0, 2000, 100.0) };
    let ledger_weight = [0.0, 0.0, 1.0, 2.5][rng.random_range(0..4)];
    let depth = rng.random_range(1..=bounds.max_depth.max(1));
    RandomWorld { env, u, i_model, ext, penalty_estimate, ledger_weight, depth }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn worlds_respect_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let w = random_world(&mut rng, WorldBounds::default());
            assert!(w.env.states().len() <= 10);
            assert!((1..=3).contains(&w.depth));
            for s in w.env.state_ids() {
                assert!(w.env.actions_from(s).count() <= 4);
            }
            assert!(w.env.actions_from(w.env.initial()).count() >= 1);
        }
    }

    #[test]
    fn generation_is_seeded() {
        let a = random_world(&mut ChaCha8Rng::seed_from_u64(11), WorldBounds::default());
        let b = random_world(&mut ChaCha8Rng::seed_from_u64(11), WorldBounds::default());
        assert_eq!(format!("{:?}", a.env), format!("{:?}", b.env));
        assert_eq!(a.u, b.u);
    }
}

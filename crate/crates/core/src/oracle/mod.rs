//! Brute-force verifiers, written independently of the planners.
//!
//! Every decision is recomputed by building the full action / outcome /
//! correction tree explicitly and evaluating it, either in `f64` or in
//! exact rationals. Inputs are read as the decimals they print as, so a
//! table entry of `0.1` is exactly one tenth here.

mod predict;
pub mod random;
mod sweep;

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::externals::{CorrectionMapping, ExternalActorModel};
use crate::state::{Action, ActionId, ActionKind, Environment, Flag, StateId};
use crate::valuation::ScoreTable;

pub use predict::{
    assertion_pass_probability, oracle_report, predict_outcomes, OracleReport, PredictedOutcome, StateChoice,
};
pub use sweep::{
    challenge_lambda_sweep, deceives, exact_penalty_flip, expected_final_states, threshold_sweep, DeceptionParams,
    SweepKind,
};

pub const MAX_STATES: usize = 12;
pub const MAX_DEPTH: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("outside desk-scale bounds: {0}")]
    BoundsExceeded(String),
    #[error("no decision flip found: {0}")]
    NoFlipFound(String),
    #[error("state `{0}` has no score")]
    MissingScore(StateId),
    #[error("value {0} is not finite")]
    NonFinite(f64),
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Arithmetic the tree evaluator needs; implemented for `f64` and for
/// exact rationals.
pub trait Scalar: Clone + PartialOrd + fmt::Debug {
    fn zero() -> Self;
    fn one() -> Self;
    fn lift(x: f64) -> Result<Self, OracleError>;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn to_f64(&self) -> f64;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn lift(x: f64) -> Result<Self, OracleError> {
        if x.is_finite() {
            Ok(x)
        } else {
            Err(OracleError::NonFinite(x))
        }
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn lift(x: f64) -> Result<Self, OracleError> {
        to_rational(x)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

pub fn ratio_f64(r: &BigRational) -> f64 {
    ToPrimitive::to_f64(r).unwrap_or(f64::NAN)
}

/// The rational a float prints as: `0.1` becomes 1/10, not the nearest
/// binary fraction.
pub fn to_rational(x: f64) -> Result<BigRational, OracleError> {
    if !x.is_finite() {
        return Err(OracleError::NonFinite(x));
    }
    // `Display` for f64 is the shortest round-tripping decimal and never
    // uses exponent notation.
    let text = x.to_string();
    let (negative, digits) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.as_str()),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    let numer: BigInt = format!("{int_part}{frac_part}").parse().expect("decimal digits");
    let denom = num_traits::pow(BigInt::from(10), frac_part.len());
    let r = BigRational::new(numer, denom);
    Ok(if negative { -r } else { r })
}

fn min<S: Scalar>(a: S, b: S) -> S {
    if b < a {
        b
    } else {
        a
    }
}

fn max<S: Scalar>(a: S, b: S) -> S {
    if b > a {
        b
    } else {
        a
    }
}

/// Probability, target, and whether the branch is surely corrected.
type Branch<'b, S> = (S, &'b StateId, Option<bool>);

/// How leaves are scored and which actions a decision may use.
#[derive(Clone, Copy, Debug)]
pub enum Valuer<'a> {
    /// Expected score over `u`; every action is available.
    Baseline { u: &'a ScoreTable },
    /// Hidden utility minus the penalty of each anticipated correction and
    /// of what is already known. Tamper actions, and reasoning actions
    /// that would add penalty, are unavailable.
    Oblivious {
        hidden: &'a ScoreTable,
        ext: &'a ExternalActorModel,
        /// Table the externals judge states through, as the agent models it.
        judge: &'a ScoreTable,
        penalty_estimate: f64,
        ledger_weight: f64,
    },
}

impl Valuer<'_> {
    fn table(&self) -> &ScoreTable {
        match self {
            Valuer::Baseline { u } => u,
            Valuer::Oblivious { hidden, .. } => hidden,
        }
    }

    fn allows(&self, a: &Action) -> bool {
        match self {
            Valuer::Baseline { .. } => true,
            Valuer::Oblivious { penalty_estimate, .. } => match a.kind {
                ActionKind::Tamper => false,
                ActionKind::Reasoning => *penalty_estimate * a.knowledge_gain <= 0.0,
                _ => true,
            },
        }
    }

    fn score<S: Scalar>(&self, s: &StateId) -> Result<S, OracleError> {
        let v = self.table().get(s).ok_or_else(|| OracleError::MissingScore(s.clone()))?;
        S::lift(v)
    }

    /// Penalty of one correction.
    fn unit<S: Scalar>(&self) -> Result<S, OracleError> {
        match self {
            Valuer::Baseline { .. } => Ok(S::zero()),
            Valuer::Oblivious { ext, penalty_estimate, .. } => {
                Ok(S::lift(*penalty_estimate)?.mul(&S::lift(ext.feedback_weight)?))
            }
        }
    }

    fn base<S: Scalar>(&self) -> Result<S, OracleError> {
        match self {
            Valuer::Baseline { .. } => Ok(S::zero()),
            Valuer::Oblivious { penalty_estimate, ledger_weight, .. } => {
                Ok(S::lift(*penalty_estimate)?.mul(&S::lift(*ledger_weight)?))
            }
        }
    }

    /// Chance that entering `s` draws a correction.
    fn correction<S: Scalar>(&self, s: &StateId) -> Result<S, OracleError> {
        let Valuer::Oblivious { ext, judge, .. } = self else {
            return Ok(S::zero());
        };
        let i = S::lift(judge.get(s).ok_or_else(|| OracleError::MissingScore(s.clone()))?)?;
        correction_probability(ext, i)
    }

    /// Probability an action lands on its success target, and whether each
    /// branch is corrected for sure (detected deception), never
    /// (undetected deception) or by the usual chance.
    fn branches<'b, S: Scalar>(&self, a: &'b Action) -> Result<[Branch<'b, S>; 2], OracleError> {
        let deceptive = matches!(self, Valuer::Oblivious { .. }) && a.kind == ActionKind::Deceptive;
        if deceptive {
            let Valuer::Oblivious { ext, .. } = self else { unreachable!() };
            let p = S::lift(ext.detection.get(&a.id).copied().unwrap_or(a.p_success))?;
            let q = S::one().sub(&p);
            Ok([(p, &a.success_target, Some(false)), (q, &a.failure_target, Some(true))])
        } else {
            let p = S::lift(a.p_success)?;
            let q = S::one().sub(&p);
            Ok([(p, &a.success_target, None), (q, &a.failure_target, None)])
        }
    }
}

/// The externals' correction mapping, recomputed.
pub fn correction_probability<S: Scalar>(ext: &ExternalActorModel, i: S) -> Result<S, OracleError> {
    Ok(match ext.mapping {
        CorrectionMapping::Inverse => {
            let c = S::lift(ext.c)?;
            let eps = S::lift(ext.eps)?;
            min(S::one(), c.div(&max(i, eps)))
        }
        CorrectionMapping::Complement => S::one().sub(&min(S::one(), max(S::zero(), i))),
    })
}

/// Fully expanded decision tree.
#[derive(Clone, Debug)]
pub enum Node<S> {
    /// Scored state; `corrections` counts corrections on the path to it.
    Leaf {
        state: StateId,
        value: S,
        corrections: u32,
    },
    /// Choice among available actions, in id order.
    Decision {
        state: StateId,
        children: Vec<(ActionId, Node<S>)>,
    },
    Chance {
        branches: Vec<(S, Node<S>)>,
    },
}

impl<S: Scalar> Node<S> {
    pub fn evaluate(&self, unit: &S) -> S {
        match self {
            Node::Leaf { value, corrections, .. } => {
                let mut v = value.clone();
                for _ in 0..*corrections {
                    v = v.sub(unit);
                }
                v
            }
            Node::Decision { children, .. } => {
                let mut best: Option<S> = None;
                for (_, child) in children {
                    let v = child.evaluate(unit);
                    if best.as_ref().is_none_or(|b| v > *b) {
                        best = Some(v);
                    }
                }
                best.expect("decision nodes have children")
            }
            Node::Chance { branches } => {
                branches.iter().fold(S::zero(), |acc, (p, child)| acc.add(&p.mul(&child.evaluate(unit))))
            }
        }
    }

    pub fn leaves(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Decision { children, .. } => children.iter().map(|(_, c)| c.leaves()).sum(),
            Node::Chance { branches } => branches.iter().map(|(_, c)| c.leaves()).sum(),
        }
    }
}

fn is_leaf_state(env: &Environment, s: &StateId) -> bool {
    env.has_flag(s, Flag::Terminal) || env.has_flag(s, Flag::StopButton) || env.actions_from(s).next().is_none()
}

fn build<S: Scalar>(
    env: &Environment,
    valuer: &Valuer<'_>,
    s: &StateId,
    depth: usize,
    corrections: u32,
) -> Result<Node<S>, OracleError> {
    let leaf = || -> Result<Node<S>, OracleError> {
        Ok(Node::Leaf { state: s.clone(), value: valuer.score(s)?, corrections })
    };
    if depth == 0 || is_leaf_state(env, s) {
        return leaf();
    }
    let mut children = Vec::new();
    for a in env.actions().iter().filter(|a| a.from == *s && valuer.allows(a)) {
        children.push((a.id.clone(), action_node(env, valuer, a, depth, corrections)?));
    }
    if children.is_empty() {
        return leaf();
    }
    children.sort_by(|x, y| x.0.cmp(&y.0));
    Ok(Node::Decision { state: s.clone(), children })
}

fn action_node<S: Scalar>(
    env: &Environment,
    valuer: &Valuer<'_>,
    a: &Action,
    depth: usize,
    corrections: u32,
) -> Result<Node<S>, OracleError> {
    let mut branches = Vec::new();
    for (p, target, forced) in valuer.branches::<S>(a)? {
        if p <= S::zero() {
            continue;
        }
        let corr = match forced {
            Some(true) => S::one(),
            Some(false) => S::zero(),
            None => valuer.correction(target)?,
        };
        let mut inner = Vec::new();
        if corr > S::zero() {
            inner.push((corr.clone(), build(env, valuer, target, depth - 1, corrections + 1)?));
        }
        let rest = S::one().sub(&corr);
        if rest > S::zero() {
            inner.push((rest, build(env, valuer, target, depth - 1, corrections)?));
        }
        branches.push((p, Node::Chance { branches: inner }));
    }
    Ok(Node::Chance { branches })
}

pub fn check_bounds(env: &Environment, depth: usize) -> Result<(), OracleError> {
    if env.states().len() > MAX_STATES {
        return Err(OracleError::BoundsExceeded(format!("{} states, at most {MAX_STATES}", env.states().len())));
    }
    if depth == 0 || depth > MAX_DEPTH {
        return Err(OracleError::BoundsExceeded(format!("depth {depth}, expected 1..={MAX_DEPTH}")));
    }
    Ok(())
}

/// Full tree below `s`: a decision over every available action.
pub fn expand<S: Scalar>(
    env: &Environment,
    s: &StateId,
    valuer: &Valuer<'_>,
    depth: usize,
) -> Result<Node<S>, OracleError> {
    check_bounds(env, depth)?;
    if !env.contains(s) {
        return Err(OracleError::Invalid(format!("unknown state `{s}`")));
    }
    build(env, valuer, s, depth, 0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExpectimaxResult<S> {
    /// `None` when no action is available at the root.
    pub best: Option<ActionId>,
    /// Root action values in id order, with the known-fact penalty included.
    pub values: Vec<(ActionId, S)>,
}

impl<S: Scalar> ExpectimaxResult<S> {
    pub fn best_value(&self) -> Option<&S> {
        let best = self.best.as_ref()?;
        self.values.iter().find(|(a, _)| a == best).map(|(_, v)| v)
    }
}

/// Exhaustive expectimax at `s`. Ties go to the smallest action id.
pub fn exact_expectimax<S: Scalar>(
    env: &Environment,
    s: &StateId,
    valuer: &Valuer<'_>,
    depth: usize,
) -> Result<ExpectimaxResult<S>, OracleError> {
    check_bounds(env, depth)?;
    if !env.contains(s) {
        return Err(OracleError::Invalid(format!("unknown state `{s}`")));
    }
    let unit = valuer.unit::<S>()?;
    let base = valuer.base::<S>()?;
    let mut values = Vec::new();
    let mut candidates: Vec<&Action> = env.actions().iter().filter(|a| a.from == *s && valuer.allows(a)).collect();
    candidates.sort_by(|x, y| x.id.cmp(&y.id));
    for a in candidates {
        let v = action_node::<S>(env, valuer, a, depth, 0)?.evaluate(&unit).sub(&base);
        values.push((a.id.clone(), v));
    }
    let mut best: Option<(&ActionId, &S)> = None;
    for (a, v) in &values {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((a, v));
        }
    }
    Ok(ExpectimaxResult { best: best.map(|(a, _)| a.clone()), values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{Action, State};

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn decimals_convert_exactly() {
        assert_eq!(to_rational(0.1).unwrap(), r(1, 10));
        assert_eq!(to_rational(-2.25).unwrap(), r(-9, 4));
        assert_eq!(to_rational(7.0).unwrap(), r(7, 1));
        assert_eq!(to_rational(1e-9).unwrap(), r(1, 1_000_000_000));
        assert!(to_rational(f64::NAN).is_err());
    }

    fn two_state() -> (Environment, ScoreTable) {
        let env = Environment::new(
            vec![State::new("a"), State::new("b").with_flag(Flag::Terminal), State::new("c").with_flag(Flag::Terminal)],
            vec![Action::deterministic("go_b", "a", "b"), Action::deterministic("go_c", "a", "c")],
            "a",
        )
        .unwrap();
        let u = ScoreTable::new([("a", 0.0), ("b", 1.0), ("c", 2.0)]).unwrap();
        (env, u)
    }

    #[test]
    fn hand_computable_argmax() {
        let (env, u) = two_state();
        let res = exact_expectimax::<BigRational>(&env, &"a".into(), &Valuer::Baseline { u: &u }, 1).unwrap();
        assert_eq!(res.best, Some("go_c".into()));
        assert_eq!(res.best_value(), Some(&r(2, 1)));
    }

    #[test]
    fn ties_go_to_smallest_id() {
        let (env, _) = two_state();
        let u = ScoreTable::new([("a", 0.0), ("b", 0.3), ("c", 0.3)]).unwrap();
        let res = exact_expectimax::<BigRational>(&env, &"a".into(), &Valuer::Baseline { u: &u }, 1).unwrap();
        assert_eq!(res.best, Some("go_b".into()));
    }

    #[test]
    fn bounds_enforced() {
        let states: Vec<_> = (0..13).map(|i| State::new(format!("s{i}"))).collect();
        let env = Environment::new(states, vec![Action::deterministic("x", "s0", "s1")], "s0").unwrap();
        let u = ScoreTable::constant(&env, 0.0);
        let err = exact_expectimax::<f64>(&env, &"s0".into(), &Valuer::Baseline { u: &u }, 1).unwrap_err();
        assert!(matches!(err, OracleError::BoundsExceeded(_)));
        let (env, u) = two_state();
        assert!(exact_expectimax::<f64>(&env, &"a".into(), &Valuer::Baseline { u: &u }, 5).is_err());
    }

    #[test]
    fn correction_branches_are_expanded() {
        let (env, u) = two_state();
        let judge = ScoreTable::new([("a", 1.0), ("b", 1.0), ("c", 0.25)]).unwrap();
        let ext = ExternalActorModel::new(CorrectionMapping::Complement, 0.1, 1.0).unwrap();
        let valuer =
            Valuer::Oblivious { hidden: &u, ext: &ext, judge: &judge, penalty_estimate: 4.0, ledger_weight: 0.5 };
        let res = exact_expectimax::<BigRational>(&env, &"a".into(), &valuer, 1).unwrap();
        // go_c: 2 - 0.75 * 4 - 0.5 * 4 = -3; go_b: 1 - 2 = -1.
        assert_eq!(res.values, vec![("go_b".into(), r(-1, 1)), ("go_c".into(), r(-3, 1))]);
        let tree = expand::<f64>(&env, &"a".into(), &valuer, 1).unwrap();
        assert_eq!(tree.leaves(), 3);
    }

    #[test]
    fn inverse_mapping_recomputed() {
        let ext = ExternalActorModel::default();
        assert_eq!(correction_probability(&ext, r(1, 2)).unwrap(), r(1, 5));
        assert_eq!(correction_probability(&ext, r(0, 1)).unwrap(), r(1, 1));
        assert_eq!(correction_probability(&ext, r(1, 20)).unwrap(), r(1, 1));
    }
}

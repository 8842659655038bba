//! Numeric searches for the penalty (or deception probability) at which a
//! decision flips, plus an exact solve for worlds where the competing
//! values are affine in the penalty.

use num_rational::BigRational;
use num_traits::Zero;
use serde::Serialize;

use super::{exact_expectimax, predict_outcomes, to_rational, OracleError, Valuer};
use crate::agents::AgentKind;
use crate::scenarios::{build_challenge, ChallengeKind, ChallengeParams, Check};
use crate::state::{ActionId, Environment, StateId};
use crate::valuation::ScoreTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    /// Smallest penalty that makes deceiving a losing bet.
    LambdaStar,
    /// Smallest deception success probability that makes deceiving pay.
    DeceptionP,
}

/// A deceptive action reaching `u_k` with probability `p_dec` and `u_fail`
/// (plus a certain correction) otherwise, against an honest `u_m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeceptionParams {
    pub p_dec: f64,
    pub u_k: f64,
    pub u_fail: f64,
    pub u_m: f64,
    /// Fixed penalty, used by the deception-probability sweep.
    pub penalty: f64,
}

/// Exact check of whether deceiving beats complying.
pub fn deceives(
    p_dec: &BigRational,
    u_k: &BigRational,
    u_fail: &BigRational,
    pen: &BigRational,
    u_m: &BigRational,
) -> bool {
    let one = BigRational::from_integer(1.into());
    p_dec * u_k + (one - p_dec) * (u_fail - pen) > *u_m
}

const MAX_DOUBLINGS: u32 = 64;

fn bisect(
    mut lo: f64,
    mut hi: f64,
    resolution: f64,
    flipped: impl Fn(f64) -> Result<bool, OracleError>,
) -> Result<f64, OracleError> {
    while hi - lo > resolution {
        let mid = lo + (hi - lo) / 2.0;
        if mid <= lo || mid >= hi {
            break;
        }
        if flipped(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Locates the flip to within `resolution`, returning the first probed
/// value on the flipped side.
pub fn threshold_sweep(kind: SweepKind, params: &DeceptionParams, resolution: f64) -> Result<f64, OracleError> {
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(OracleError::Invalid(format!("resolution must be positive, got {resolution}")));
    }
    let u_k = to_rational(params.u_k)?;
    let u_fail = to_rational(params.u_fail)?;
    let u_m = to_rational(params.u_m)?;
    match kind {
        SweepKind::LambdaStar => {
            let p = to_rational(params.p_dec)?;
            let blocked =
                |pen: f64| -> Result<bool, OracleError> { Ok(!deceives(&p, &u_k, &u_fail, &to_rational(pen)?, &u_m)) };
            if blocked(0.0)? {
                return Ok(0.0);
            }
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..MAX_DOUBLINGS {
                if blocked(hi)? {
                    return bisect(lo, hi, resolution, blocked);
                }
                lo = hi;
                hi *= 2.0;
            }
            Err(OracleError::NoFlipFound(format!(
                "deception still pays at penalty {lo:e} with success probability {}",
                params.p_dec
            )))
        }
        SweepKind::DeceptionP => {
            let pen = to_rational(params.penalty)?;
            let pays =
                |p: f64| -> Result<bool, OracleError> { Ok(deceives(&to_rational(p)?, &u_k, &u_fail, &pen, &u_m)) };
            if pays(0.0)? {
                return Ok(0.0);
            }
            if !pays(1.0)? {
                return Err(OracleError::NoFlipFound("deception never pays, even when certain to succeed".into()));
            }
            bisect(0.0, 1.0, resolution, pays)
        }
    }
}

/// Exact penalty at which `aligned` starts beating `misaligned` from `s`,
/// when both root actions lead straight to leaves so their values are
/// affine in the penalty.
#[allow(clippy::too_many_arguments)]
pub fn exact_penalty_flip(
    env: &Environment,
    s: &StateId,
    misaligned: &ActionId,
    aligned: &ActionId,
    hidden: &ScoreTable,
    ext: &crate::externals::ExternalActorModel,
    judge: &ScoreTable,
    depth: usize,
) -> Result<BigRational, OracleError> {
    let at = |pen: f64| -> Result<(BigRational, BigRational), OracleError> {
        let valuer = Valuer::Oblivious { hidden, ext, judge, penalty_estimate: pen, ledger_weight: 0.0 };
        let res = exact_expectimax::<BigRational>(env, s, &valuer, depth)?;
        let get = |a: &ActionId| {
            res.values
                .iter()
                .find(|(x, _)| x == a)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| OracleError::Invalid(format!("action `{a}` is not available at `{s}`")))
        };
        Ok((get(misaligned)?, get(aligned)?))
    };
    // Two probes pin down the lines; a third confirms they are lines.
    let (k0, m0) = at(0.0)?;
    let (k1, m1) = at(1.0)?;
    let (k2, m2) = at(2.0)?;
    let two = BigRational::from_integer(2.into());
    let (dk, dm) = (&k1 - &k0, &m1 - &m0);
    if &k0 + &dk * &two != k2 || &m0 + &dm * &two != m2 {
        return Err(OracleError::Invalid("action values are not affine in the penalty".into()));
    }
    let slope = &dm - &dk;
    if slope.is_zero() {
        return Err(OracleError::NoFlipFound("the penalty affects both actions equally".into()));
    }
    Ok((k0 - m0) / slope)
}

fn oblivious_assertions_hold(kind: ChallengeKind, params: &ChallengeParams) -> Result<bool, OracleError> {
    let mut spec = build_challenge(kind, params).map_err(|e| OracleError::Invalid(e.to_string()))?;
    spec.agent.kind = AgentKind::Oblivious;
    let outcomes = predict_outcomes(&spec)?;
    let prob = super::assertion_pass_probability(&spec, &outcomes);
    Ok(prob == BigRational::from_integer(1.into()))
}

/// Smallest penalty at which the oblivious agent passes every one of its
/// assertions in a generated challenge, by exhaustive prediction.
pub fn challenge_lambda_sweep(
    kind: ChallengeKind,
    params: &ChallengeParams,
    resolution: f64,
) -> Result<f64, OracleError> {
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(OracleError::Invalid(format!("resolution must be positive, got {resolution}")));
    }
    let aligned = |lambda: f64| oblivious_assertions_hold(kind, &params.with_lambda(lambda));
    if aligned(0.0)? {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..MAX_DOUBLINGS {
        if aligned(hi)? {
            return bisect(lo, hi, resolution, aligned);
        }
        lo = hi;
        hi *= 2.0;
    }
    Err(OracleError::NoFlipFound(format!("{kind} stays misaligned up to penalty {lo:e}")))
}

/// States the oblivious agent is expected to finish in, per its assertions.
pub fn expected_final_states(kind: ChallengeKind) -> Vec<StateId> {
    let spec = build_challenge(kind, &ChallengeParams::defaults(kind)).expect("defaults are valid");
    spec.assertions
        .iter()
        .filter(|a| a.agent == Some(AgentKind::Oblivious))
        .find_map(|a| match &a.check {
            Check::FinalStateIn(s) => Some(s.iter().cloned().collect()),
            _ => None,
        })
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::challenges::documented_threshold;

    fn params(p_dec: f64, u_k: f64, u_fail: f64, u_m: f64) -> DeceptionParams {
        DeceptionParams { p_dec, u_k, u_fail, u_m, penalty: 0.0 }
    }

    #[test]
    fn lambda_star_for_default_deception() {
        let v = threshold_sweep(SweepKind::LambdaStar, &params(0.9, 10.0, 2.0, 5.0), 1e-4).unwrap();
        assert!((v - 42.0).abs() <= 1e-4, "{v}");
        assert!(v >= 42.0);
    }

    #[test]
    fn certain_deception_never_blocked() {
        let err = threshold_sweep(SweepKind::LambdaStar, &params(1.0, 10.0, 2.0, 5.0), 1e-4).unwrap_err();
        assert!(matches!(err, OracleError::NoFlipFound(_)));
    }

    #[test]
    fn unattractive_deception_needs_no_penalty() {
        assert_eq!(threshold_sweep(SweepKind::LambdaStar, &params(0.5, 3.0, 1.0, 5.0), 1e-4).unwrap(), 0.0);
    }

    #[test]
    fn deception_probability_sweep() {
        let p = DeceptionParams { p_dec: 0.0, u_k: 10.0, u_fail: 2.0, u_m: 5.0, penalty: 42.0 };
        // (u_m - u_fail + pen) / (u_k - u_fail + pen) = 45 / 50.
        let v = threshold_sweep(SweepKind::DeceptionP, &p, 1e-6).unwrap();
        assert!((v - 0.9).abs() <= 1e-6, "{v}");
        assert!(threshold_sweep(SweepKind::DeceptionP, &p, 0.0).is_err());
    }

    #[test]
    fn reward_hacking_flip_is_exactly_seven() {
        let spec =
            build_challenge(ChallengeKind::RewardHacking, &ChallengeParams::defaults(ChallengeKind::RewardHacking))
                .unwrap();
        let ph = &spec.phases[0];
        let flip = exact_penalty_flip(
            &ph.env,
            ph.env.initial(),
            &"hack".into(),
            &"comply".into(),
            &ph.u_hidden,
            &spec.externals,
            &ph.i_model,
            spec.agent.depth,
        )
        .unwrap();
        assert_eq!(flip, BigRational::from_integer(7.into()));
    }

    #[test]
    fn challenge_sweeps_match_closed_forms() {
        for kind in ChallengeKind::ALL {
            let p = ChallengeParams::defaults(kind);
            let closed = documented_threshold(kind, &p).value.unwrap();
            let swept = challenge_lambda_sweep(kind, &p, 1e-3).unwrap();
            assert!((swept - closed).abs() <= 1e-3, "{kind}: swept {swept}, closed form {closed}");
            assert!(!expected_final_states(kind).is_empty());
        }
    }
}

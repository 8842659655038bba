use num_rational::BigRational;
use num_traits::{One, Zero};
use oblivious_core::multiagent::run_ensemble;
use oblivious_core::oracle::{assertion_pass_probability, predict_outcomes};
use oblivious_core::scenarios::{bundled, bundled_all, RunOverrides, BUNDLED, BUNDLED_ENSEMBLE};
use oblivious_core::{build_challenge, load_scenario, run_scenario, AgentKind, ChallengeKind, ChallengeParams};

#[test]
fn bundled_files_match_generated_challenges() {
    for kind in ChallengeKind::ALL {
        let generated = build_challenge(kind, &ChallengeParams::defaults(kind)).unwrap().to_toml();
        let (_, doc) = BUNDLED.iter().find(|(n, _)| *n == kind.as_str()).expect("bundled");
        assert_eq!(*doc, generated, "{kind} drifted; regenerate with `oblivious export`");
    }
}

#[test]
fn reward_hacking_fixture_shape() {
    let spec = bundled("reward_hacking").unwrap().unwrap();
    assert_eq!(spec.phases[0].env.states().len(), 5);
    assert_eq!(spec.phases[0].env.actions().len(), 6);
    assert!(bundled("nope").is_none());
}

#[test]
fn every_bundled_run_passes_for_both_agents() {
    for spec in bundled_all() {
        for kind in AgentKind::ALL {
            for seed in 0..5 {
                let s = spec
                    .with_overrides(&RunOverrides { agent: Some(kind), seed: Some(seed), ..Default::default() })
                    .unwrap();
                let t = run_scenario(&s).unwrap();
                assert!(t.passed(), "{} {kind} seed {seed}: {:?}", spec.name, t.verdicts);
            }
        }
    }
}

#[test]
fn runs_land_on_predicted_outcomes() {
    for spec in bundled_all() {
        for kind in AgentKind::ALL {
            let s = spec.with_overrides(&RunOverrides { agent: Some(kind), ..Default::default() }).unwrap();
            let outcomes = predict_outcomes(&s).unwrap();
            let total: BigRational = outcomes.iter().map(|o| o.probability.clone()).sum();
            assert!(total.is_one(), "{} {kind}: outcome probabilities sum to {total}", spec.name);
            assert!(assertion_pass_probability(&s, &outcomes).is_one(), "{} {kind}", spec.name);
            for seed in 0..10 {
                let t =
                    run_scenario(&s.with_overrides(&RunOverrides { seed: Some(seed), ..Default::default() }).unwrap())
                        .unwrap();
                let hit = outcomes.iter().any(|o| {
                    o.final_state == t.outcome.final_state
                        && o.actions_taken == t.outcome.actions_taken
                        && o.ledger_size == t.outcome.ledger_size
                        && !o.probability.is_zero()
                });
                assert!(hit, "{} {kind} seed {seed}: run ended outside the predicted outcomes", spec.name);
            }
        }
    }
}

#[test]
fn bundled_ensemble_overrules_the_outlier() {
    let spec = load_scenario(BUNDLED_ENSEMBLE).unwrap();
    assert_eq!(spec.ensemble.as_ref().unwrap().profiles.len(), 3);
    let trace = run_ensemble(&spec).unwrap();
    assert!(trace.ticks[0].vetoed);
    assert_eq!(trace.final_state.as_str(), "done");
    assert!(trace.ticks.last().unwrap().divergence < trace.initial_divergence);
}

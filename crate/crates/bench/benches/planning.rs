use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use num_rational::BigRational;
use oblivious_bench::{scenarios, worlds};
use oblivious_core::agents::{choose_action_baseline, plan_oblivious};
use oblivious_core::oracle::{exact_expectimax, Valuer};
use oblivious_core::{run_scenario, AgentConfig, AgentMemory, HiddenUtility, KnowledgeLedger};
use std::hint::black_box;

fn planners(c: &mut Criterion) {
    let mut group = c.benchmark_group("planners");
    for depth in 1..=3 {
        let ws = worlds(16, depth);
        group.bench_with_input(BenchmarkId::new("baseline", depth), &ws, |b, ws| {
            b.iter(|| {
                for w in ws {
                    let _ = black_box(choose_action_baseline(
                        &w.env,
                        w.env.initial(),
                        &w.u,
                        &AgentConfig::baseline(w.depth),
                    ));
                }
            })
        });
        group.bench_with_input(BenchmarkId::new("oblivious", depth), &ws, |b, ws| {
            b.iter(|| {
                for w in ws {
                    let hidden = HiddenUtility::new(w.u.clone());
                    let mut mem = AgentMemory::new(KnowledgeLedger::new(w.penalty_estimate).unwrap());
                    let cfg = AgentConfig::oblivious(w.depth, w.penalty_estimate);
                    let _ =
                        black_box(plan_oblivious(&w.env, w.env.initial(), &hidden, &mut mem, &w.ext, &w.i_model, &cfg));
                }
            })
        });
    }
    group.finish();
}

fn oracle(c: &mut Criterion) {
    let mut group = c.benchmark_group("oracle");
    for depth in 1..=3 {
        let ws = worlds(16, depth);
        group.bench_with_input(BenchmarkId::new("f64", depth), &ws, |b, ws| {
            b.iter(|| {
                for w in ws {
                    let _ = black_box(exact_expectimax::<f64>(
                        &w.env,
                        w.env.initial(),
                        &Valuer::Baseline { u: &w.u },
                        w.depth,
                    ));
                }
            })
        });
        group.bench_with_input(BenchmarkId::new("rational", depth), &ws, |b, ws| {
            b.iter(|| {
                for w in ws {
                    let v = Valuer::Oblivious {
                        hidden: &w.u,
                        ext: &w.ext,
                        judge: &w.i_model,
                        penalty_estimate: w.penalty_estimate,
                        ledger_weight: w.ledger_weight,
                    };
                    let _ = black_box(exact_expectimax::<BigRational>(&w.env, w.env.initial(), &v, w.depth));
                }
            })
        });
    }
    group.finish();
}

fn bundled_suite(c: &mut Criterion) {
    let specs = scenarios();
    c.bench_function("bundled_suite", |b| {
        b.iter(|| {
            for s in &specs {
                black_box(run_scenario(s).unwrap());
            }
        })
    });
}

criterion_group!(benches, planners, oracle, bundled_suite);
criterion_main!(benches);

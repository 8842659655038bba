//! Newline-delimited JSON output for run traces.
//!
//! One record per tick, then a summary record carrying the outcome and the
//! assertion verdicts. Each line is a standalone JSON document. Tick
//! records include hidden scores; they are the simulator's log, not
//! something the agent could have written.

use std::io::{self, Write};

use serde::Serialize;

use crate::agents::{AgentKind, AgentMemory};
use crate::multiagent::EnsembleTrace;
use crate::scenarios::runner::{Outcome, Tick, Trace, Verdict};

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
enum Record<'a> {
    Tick(&'a Tick),
    Summary {
        scenario: &'a str,
        agent: AgentKind,
        seed: u64,
        horizon: usize,
        lambda: f64,
        passed: bool,
        outcome: &'a Outcome,
        verdicts: &'a [Verdict],
        memory: &'a AgentMemory,
    },
}

fn line<W: Write, T: Serialize>(sink: &mut W, value: &T) -> io::Result<()> {
    serde_json::to_writer(&mut *sink, value)?;
    sink.write_all(b"\n")
}

pub fn emit_trace<W: Write>(trace: &Trace, mut sink: W) -> io::Result<()> {
    for t in &trace.ticks {
        line(&mut sink, &Record::Tick(t))?;
    }
    line(
        &mut sink,
        &Record::Summary {
            scenario: &trace.scenario,
            agent: trace.agent,
            seed: trace.seed,
            horizon: trace.horizon,
            lambda: trace.lambda,
            passed: trace.passed(),
            outcome: &trace.outcome,
            verdicts: &trace.verdicts,
            memory: &trace.memory,
        },
    )?;
    sink.flush()
}

pub fn trace_to_string(trace: &Trace) -> String {
    let mut buf = Vec::new();
    emit_trace(trace, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
enum EnsembleRecord<'a> {
    Tick(&'a crate::multiagent::EnsembleTick),
    Summary {
        scenario: &'a str,
        seed: u64,
        initial_divergence: f64,
        final_state: &'a crate::state::StateId,
        ledger_sizes: &'a [usize],
        profiles: &'a [crate::multiagent::IntentionProfile],
    },
}

pub fn emit_ensemble_trace<W: Write>(trace: &EnsembleTrace, mut sink: W) -> io::Result<()> {
    for t in &trace.ticks {
        line(&mut sink, &EnsembleRecord::Tick(t))?;
    }
    line(
        &mut sink,
        &EnsembleRecord::Summary {
            scenario: &trace.scenario,
            seed: trace.seed,
            initial_divergence: trace.initial_divergence,
            final_state: &trace.final_state,
            ledger_sizes: &trace.ledger_sizes,
            profiles: &trace.profiles,
        },
    )?;
    sink.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{build_challenge, run_scenario, ChallengeKind, ChallengeParams, RunOverrides};

    fn trace(horizon: Option<usize>) -> Trace {
        let spec = build_challenge(
            ChallengeKind::Misgeneralization,
            &ChallengeParams::defaults(ChallengeKind::Misgeneralization),
        )
        .unwrap()
        .with_overrides(&RunOverrides { horizon, ..Default::default() })
        .unwrap();
        run_scenario(&spec).unwrap()
    }

    #[test]
    fn one_record_per_tick_plus_summary() {
        let t = trace(None);
        let out = trace_to_string(&t);
        let lines: Vec<_> = out.lines().collect();
        assert_eq!(lines.len(), t.ticks.len() + 1);
        for l in &lines {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            assert!(v.is_object());
        }
        let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        for key in ["tick", "state", "action", "ev_table", "corrected", "ledger_size", "penalty", "stop"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
        let last: serde_json::Value = serde_json::from_str(lines.last().unwrap()).unwrap();
        assert_eq!(last["record"], "summary");
        assert!(last["verdicts"].is_array());
    }

    #[test]
    fn horizon_zero_gives_two_records() {
        let out = trace_to_string(&trace(Some(0)));
        assert_eq!(out.lines().count(), 2);
        assert!(out.ends_with('\n'));
    }
}

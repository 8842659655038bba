use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use log::{info, warn};
use oblivious_core::oracle::random::WorldBounds;
use oblivious_core::oracle::{MAX_DEPTH, MAX_STATES};
use oblivious_core::scenarios::challenges::documented_threshold;
use oblivious_core::scenarios::{bundled_all, RunOverrides};
use oblivious_core::trace::{emit_ensemble_trace, emit_trace};
use oblivious_core::verify::verify_random;
use oblivious_core::{
    build_challenge, run_scenario, ActionKind, AgentKind, ChallengeKind, ChallengeParams, ScenarioSpec, Trace,
};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::source::{challenge, resolve, slug};
use crate::{BatchArgs, ExportArgs, MultiagentArgs, Overrides, RunArgs, Status, SweepArgs, SweepParam, VerifyArgs};

fn overrides(o: &Overrides, seed: Option<u64>) -> RunOverrides {
    RunOverrides { agent: o.agent, depth: o.depth, lambda: o.lambda, seed, horizon: o.horizon }
}

fn trace_path(dir: &Path, spec: &ScenarioSpec) -> PathBuf {
    dir.join(format!("{}-{}-seed{}.ndjson", slug(&spec.name), spec.agent.kind, spec.seed))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_trace(trace: &Trace, path: &Path) -> Result<()> {
    emit_trace(trace, create(path)?).with_context(|| format!("writing {}", path.display()))
}

fn summary(trace: &Trace, path: &Path) -> Value {
    json!({
        "scenario": trace.scenario,
        "agent": trace.agent,
        "seed": trace.seed,
        "lambda": trace.lambda,
        "passed": trace.passed(),
        "final_state": trace.outcome.final_state,
        "end": trace.outcome.end,
        "actions_taken": trace.outcome.actions_taken,
        "ledger_size": trace.outcome.ledger_size,
        "trace": path.display().to_string(),
        "verdicts": trace.verdicts,
    })
}

fn report_verdicts(trace: &Trace) {
    for v in trace.verdicts.iter().filter(|v| !v.passed) {
        warn!("{} ({}, seed {}): {} failed: {}", trace.scenario, trace.agent, trace.seed, v.assertion, v.detail);
    }
}

fn status(passed: bool) -> Status {
    if passed {
        Status::Pass
    } else {
        Status::Fail
    }
}

pub fn run(a: RunArgs) -> Result<Status> {
    let spec = resolve(&a.scenario)?.with_overrides(&overrides(&a.overrides, a.seed))?;
    info!("running {} with the {} agent, seed {}", spec.name, spec.agent.kind, spec.seed);
    let trace = run_scenario(&spec)?;
    let path = a.output.unwrap_or_else(|| trace_path(&a.output_dir, &spec));
    write_trace(&trace, &path)?;
    report_verdicts(&trace);
    println!("{}", summary(&trace, &path));
    Ok(status(trace.passed()))
}

pub fn batch(a: BatchArgs) -> Result<Status> {
    let specs = if a.scenario.is_empty() {
        bundled_all()
    } else {
        a.scenario.iter().map(|s| resolve(s)).collect::<Result<Vec<_>>>()?
    };
    let agents = if a.agent.is_empty() { AgentKind::ALL.to_vec() } else { a.agent.clone() };
    let mut jobs = Vec::new();
    for spec in &specs {
        let seeds = if a.seed.is_empty() { vec![spec.seed] } else { a.seed.clone() };
        for &agent in &agents {
            for &seed in &seeds {
                let o = RunOverrides {
                    agent: Some(agent),
                    depth: a.depth,
                    lambda: a.lambda,
                    seed: Some(seed),
                    horizon: a.horizon,
                };
                jobs.push(spec.with_overrides(&o)?);
            }
        }
    }
    let mut paths: Vec<PathBuf> = jobs.iter().map(|s| trace_path(&a.output_dir, s)).collect();
    paths.sort();
    if let Some(w) = paths.windows(2).find(|w| w[0] == w[1]) {
        bail!("two runs would write {}; give scenarios distinct names", w[0].display());
    }
    fs::create_dir_all(&a.output_dir).with_context(|| format!("cannot create {}", a.output_dir.display()))?;

    let pool = rayon::ThreadPoolBuilder::new().num_threads(a.jobs).build().context("building worker pool")?;
    info!("{} runs on {} workers", jobs.len(), pool.current_num_threads());
    let results: Vec<Result<Value>> = pool.install(|| {
        jobs.par_iter()
            .map(|spec| {
                let trace = run_scenario(spec)?;
                let path = trace_path(&a.output_dir, spec);
                write_trace(&trace, &path)?;
                report_verdicts(&trace);
                Ok(summary(&trace, &path))
            })
            .collect()
    });

    let mut records = Vec::with_capacity(results.len());
    let mut errored = false;
    for (spec, r) in jobs.iter().zip(results) {
        match r {
            Ok(v) => records.push(v),
            Err(e) => {
                errored = true;
                eprintln!("error: {} ({}, seed {}): {e:#}", spec.name, spec.agent.kind, spec.seed);
                records.push(json!({
                    "scenario": spec.name,
                    "agent": spec.agent.kind,
                    "seed": spec.seed,
                    "error": format!("{e:#}"),
                }));
            }
        }
    }
    let summary_path = a.output_dir.join("summary.jsonl");
    let mut out = create(&summary_path)?;
    for r in &records {
        writeln!(out, "{r}")?;
        println!("{r}");
    }
    out.flush()?;
    if errored {
        bail!("some runs failed to complete; see {}", summary_path.display());
    }
    Ok(status(records.iter().all(|r| r["passed"] == Value::Bool(true))))
}

pub fn verify(a: VerifyArgs) -> Result<Status> {
    ensure!((2..=MAX_STATES).contains(&a.max_states), "--max-states must be within 2..={MAX_STATES}");
    ensure!(a.max_actions >= 1, "--max-actions must be at least 1");
    ensure!((1..=MAX_DEPTH).contains(&a.max_depth), "--max-depth must be within 1..={MAX_DEPTH}");
    let bounds = WorldBounds { max_states: a.max_states, max_actions: a.max_actions, max_depth: a.max_depth };
    let report = verify_random(a.count, a.seed, bounds).map_err(anyhow::Error::msg)?;
    let line = format!("{}/{} oracle agreements", report.agreements, report.instances);
    info!("{line}");
    let mut v = serde_json::to_value(&report)?;
    v["summary"] = Value::String(line);
    println!("{v}");
    Ok(status(report.all_agree()))
}

fn sweep_values(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    ensure!(from.is_finite() && to.is_finite(), "--from and --to must be finite");
    ensure!(step.is_finite() && step > 0.0, "--step must be positive");
    ensure!(from <= to, "--from must not exceed --to");
    let n = ((to - from) / step + 1e-9).floor();
    ensure!(n < 1e6, "sweep would take {n} steps");
    // Rounding keeps printed values like 0.3 instead of 0.30000000000000004.
    Ok((0..=n as usize).map(|i| ((from + i as f64 * step) * 1e9).round() / 1e9).collect())
}

fn set_deception_p(spec: &mut ScenarioSpec, p: f64) -> Result<()> {
    ensure!((0.0..=1.0).contains(&p), "deception probability {p} is outside [0, 1]");
    let ids: Vec<_> = spec
        .phases
        .iter()
        .flat_map(|ph| ph.env.actions())
        .filter(|a| a.kind == ActionKind::Deceptive)
        .map(|a| a.id.clone())
        .collect();
    ensure!(!ids.is_empty(), "scenario `{}` has no deceptive actions", spec.name);
    for id in ids {
        spec.externals.detection.insert(id, p);
    }
    Ok(())
}

pub fn sweep(a: SweepArgs) -> Result<Status> {
    let base = resolve(&a.scenario)?.with_overrides(&overrides(&a.overrides, a.seed))?;
    let values = sweep_values(a.from, a.to, a.step)?;
    let param = match a.param {
        SweepParam::Lambda => "lambda",
        SweepParam::DeceptionP => "deception-p",
    };
    let mut out = std::io::stdout().lock();
    writeln!(out, "# scenario: {}", base.name)?;
    writeln!(out, "# agent: {}", base.agent.kind)?;
    writeln!(out, "# seed: {}", base.seed)?;
    if let (SweepParam::Lambda, Some(kind)) = (a.param, challenge(&a.scenario)) {
        if let Some(t) = documented_threshold(kind, &ChallengeParams::defaults(kind)).value {
            writeln!(out, "# closed-form flip: {t}")?;
        }
    }
    writeln!(out, "# decision: actions taken, in order, joined by '>'")?;
    writeln!(out, "{param}\tdecision")?;
    for v in values {
        let spec = match a.param {
            SweepParam::Lambda => base.with_overrides(&RunOverrides { lambda: Some(v), ..Default::default() })?,
            SweepParam::DeceptionP => {
                let mut s = base.clone();
                set_deception_p(&mut s, v)?;
                s
            }
        };
        let trace = run_scenario(&spec)?;
        let actions: Vec<&str> = trace.actions().map(|a| a.as_str()).collect();
        let decision = if actions.is_empty() { "-".to_string() } else { actions.join(">") };
        writeln!(out, "{v}\t{decision}")?;
    }
    Ok(Status::Pass)
}

pub fn multiagent(a: MultiagentArgs) -> Result<Status> {
    let o = RunOverrides { seed: a.seed, horizon: a.horizon, ..Default::default() };
    let spec = resolve(&a.scenario)?.with_overrides(&o)?;
    let trace = oblivious_core::multiagent::run_ensemble(&spec)?;
    let path = a
        .output
        .unwrap_or_else(|| a.output_dir.join(format!("{}-ensemble-seed{}.ndjson", slug(&spec.name), spec.seed)));
    emit_ensemble_trace(&trace, create(&path)?).with_context(|| format!("writing {}", path.display()))?;
    let mut prev = trace.initial_divergence;
    let mut non_increasing = true;
    for t in &trace.ticks {
        non_increasing &= t.divergence <= prev + 1e-12;
        prev = t.divergence;
    }
    let exchanges: usize = trace.ticks.iter().map(|t| t.exchanges.len()).sum();
    println!(
        "{}",
        json!({
            "scenario": trace.scenario,
            "seed": trace.seed,
            "ticks": trace.ticks.len(),
            "vetoes": trace.ticks.iter().filter(|t| t.vetoed).count(),
            "exchanges": exchanges,
            "initial_divergence": trace.initial_divergence,
            "final_divergence": prev,
            "divergence_non_increasing": non_increasing,
            "final_state": trace.final_state,
            "trace": path.display().to_string(),
        })
    );
    Ok(Status::Pass)
}

pub fn export(a: ExportArgs) -> Result<Status> {
    fs::create_dir_all(&a.dir).with_context(|| format!("cannot create {}", a.dir.display()))?;
    for kind in ChallengeKind::ALL {
        let spec = build_challenge(kind, &ChallengeParams::defaults(kind))?;
        let path = a.dir.join(format!("{}.toml", kind.as_str()));
        fs::write(&path, spec.to_toml()).with_context(|| format!("cannot write {}", path.display()))?;
        info!("wrote {}", path.display());
    }
    Ok(Status::Pass)
}

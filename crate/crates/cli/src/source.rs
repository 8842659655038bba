//! Turning a `--scenario` argument into a validated spec.

use std::path::Path;

use anyhow::{Context, Result};
use oblivious_core::scenarios::{bundled, load_scenario_json, BUNDLED_ENSEMBLE};
use oblivious_core::{load_scenario, ChallengeKind, ScenarioSpec};

/// A bundled name wins over a file of the same name; `-` and `_` are
/// interchangeable in bundled names.
pub fn resolve(arg: &str) -> Result<ScenarioSpec> {
    let name = arg.replace('-', "_");
    if name == "ensemble" {
        return load_scenario(BUNDLED_ENSEMBLE).context("bundled ensemble scenario");
    }
    if let Some(spec) = bundled(&name) {
        return spec.with_context(|| format!("bundled scenario `{name}`"));
    }
    let path = Path::new(arg);
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read scenario `{arg}`"))?;
    let spec = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => load_scenario_json(&text),
        _ => load_scenario(&text),
    };
    spec.with_context(|| format!("scenario `{}`", path.display()))
}

/// The challenge a bundled scenario name stands for, if any.
pub fn challenge(arg: &str) -> Option<ChallengeKind> {
    bundled(&arg.replace('-', "_")).and(arg.parse().ok())
}

/// File-name friendly form of a scenario name.
pub fn slug(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

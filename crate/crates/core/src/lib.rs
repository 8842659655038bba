//! Simulator for oblivious agents: planners that query a hidden utility as
//! a black box, forget every score after each decision, and pay a penalty
//! for everything they have learned about it.
//!
//! The crate covers the environment model, valuation, both planners, the
//! external actors that correct an agent, the bundled alignment-challenge
//! scenarios, multi-agent intention exchange, and an exact oracle used to
//! cross-check the planners.

pub mod agents;
pub mod externals;
pub mod multiagent;
pub mod oracle;
pub mod scenarios;
pub mod state;
pub mod trace;
pub mod valuation;
pub mod verify;

pub use agents::{AgentConfig, AgentKind, AgentMemory, Decision};
pub use externals::{CorrectionMapping, ExternalActorModel};
pub use scenarios::{
    build_challenge, load_scenario, run_scenario, ChallengeKind, ChallengeParams, ScenarioSpec, Trace,
};
pub use state::{Action, ActionId, ActionKind, Environment, Flag, State, StateId};
pub use valuation::{HiddenUtility, KnowledgeLedger, ScoreTable};

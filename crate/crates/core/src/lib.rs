//! Multi-agent control-room simulation for team-level human reliability
//! analysis.
//!
//! A run replays a scenario timeline round by round. Three role-conditioned
//! agents (Authority, Coordinator, Operator) speak in fixed order, and a
//! moderator reviews each round, leaving private corrective notes for the
//! next one. The finished transcript is reduced to five team-level metrics,
//! gated against the scenario's acceptance criteria and summarized across a
//! batch.
//!
//! ```
//! use simhra::backend::{BackendConfig};
//! use simhra::engine::Simulation;
//! use simhra::moderator::Moderator;
//! use simhra::report::extract_metrics_rules;
//! use simhra::scenario::load_scenario;
//!
//! let scenario = load_scenario("chernobyl1986").unwrap();
//! let backend = BackendConfig::scripted_builtin("chernobyl1986").build().unwrap();
//! let moderator = Moderator::default();
//! let out = Simulation::new(&scenario, backend.as_ref())
//!     .with_moderator(&moderator)
//!     .execute("demo", &mut ())
//!     .unwrap();
//! let metrics = extract_metrics_rules(&out.transcript, &scenario);
//! assert_eq!(metrics.apc_depth, 2);
//! ```

pub mod backend;
pub mod dialogue;
pub mod engine;
pub mod fsutil;
pub mod moderator;
pub mod report;
pub mod scenario;
pub mod stats;

pub use backend::{AgentBackend, BackendConfig, BackendError};
pub use dialogue::{DialogueBuffer, Utterance};
pub use engine::{run_batch, run_simulation, RunConfig, RunRecord, Simulation};
pub use report::{ExtractionOutcome, MetricSet};
pub use scenario::{load_scenario, Scenario};
pub use stats::{gate_run, summarize_batch, BatchSummary, ValidityVerdict};

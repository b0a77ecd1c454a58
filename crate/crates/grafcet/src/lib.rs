//! Deterministic interpretation of IEC 60848 GRAFCET specifications.
//!
//! The crate parses a textual modeling language (`.gft`), desugars and
//! validates the chart structure, and executes it with transparent,
//! reproducible semantics: snapshot-based evolutions, one-evolution event
//! lifetimes, rule-5 handling, hierarchical forcing and enclosure, and
//! divergence detection. A scenario harness (`.gsc`), a bounded state-space
//! explorer and a deliberately naive reference interpreter round it off.

pub mod analyzer;
pub mod diag;
pub mod engine;
pub mod explorer;
pub mod expr;
pub mod ids;
pub mod lexer;
pub mod model;
pub mod oracle;
pub mod parser;
pub mod printer;
pub mod scenario;
pub mod state;

pub use analyzer::{analyze, AnalysisError, AnalyzedModel};
pub use engine::{compare_policies, derive_forced, Divergence, Engine};
pub use explorer::{explore, find_anomalies, Anomaly, StableStateGraph};
pub use model::GrafcetModel;
pub use parser::parse_model;
pub use printer::print_model;
pub use scenario::{parse_scenario, run_scenario, Scenario, ScenarioResult};
pub use state::{
    EngineState, EvolutionPolicy, EvolutionRecord, Policy, RunError, RunErrorKind, StableReport,
};

//! Engine runtime state and the machine-readable evolution records that
//! make up traces and reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::expr::{EdgeDir, EventKey, Value};
use crate::ids::{PartialId, StepId, TransitionId, VarId};
use crate::model::SituationSpec;

/// How forcing orders and enclosure effects interleave with the structural
/// evolution of each partial Grafcet.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EvolutionPolicy {
    /// Hierarchy effects of a partial Grafcet apply immediately after its
    /// own structural evolution, before lower levels evolve (the default).
    #[default]
    Preemptive,
    /// All partial Grafcets evolve structurally first; hierarchy effects are
    /// emitted afterwards in a second phase.
    TwoPhase,
}

impl EvolutionPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            EvolutionPolicy::Preemptive => "preemptive",
            EvolutionPolicy::TwoPhase => "two-phase",
        }
    }
}

/// Execution parameters of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Policy {
    pub forcing_evaluation: EvolutionPolicy,
    /// Hard budget on evolutions within a single run to stability.
    pub max_evolutions: u64,
}

impl Default for Policy {
    fn default() -> Self {
        Self { forcing_evaluation: EvolutionPolicy::Preemptive, max_evolutions: 100_000 }
    }
}

impl Policy {
    pub fn preemptive() -> Self {
        Self::default()
    }

    pub fn two_phase() -> Self {
        Self { forcing_evaluation: EvolutionPolicy::TwoPhase, ..Self::default() }
    }

    pub fn with_max_evolutions(mut self, max: u64) -> Self {
        self.max_evolutions = max;
        self
    }
}

/// The complete mutable state of one interpretation run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EngineState {
    /// Currently active steps, model-wide.
    pub active: BTreeSet<StepId>,
    /// Current values of all declared variables (inputs, internals, outputs).
    pub valuation: BTreeMap<VarId, Value>,
    /// Edges valid for the next evolution: exactly the variables that
    /// changed in the previous evolution (or the input event's edges for the
    /// first evolution of a run).
    pub edge_context: BTreeMap<EventKey, EdgeDir>,
    /// Partial Grafcets frozen by an active forcing order, as emitted by the
    /// most recent evolution.
    pub forced: BTreeSet<PartialId>,
    /// Initial steps whose activation actions are still owed; consumed by
    /// the first evolution after initialization.
    pub pending_activated: BTreeSet<StepId>,
    /// True when the state sits at a stable situation (no clearing possible).
    pub stable: bool,
}

/// One forcing order application inside an evolution, with the situation it
/// resolved to.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ForcingApplication {
    pub owner: StepId,
    pub target: PartialId,
    pub spec: SituationSpec,
    pub result: BTreeSet<StepId>,
}

/// Everything one evolution did. `activated`/`deactivated` are net changes
/// relative to the evolution's snapshot; steps touched by rule 5 appear only
/// in `rule5`; hierarchy-caused deactivations whose actions were suppressed
/// are listed in `suppressed`.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EvolutionRecord {
    #[serde(rename = "evolution")]
    pub index: u64,
    pub cleared: Vec<TransitionId>,
    pub activated: BTreeSet<StepId>,
    pub deactivated: BTreeSet<StepId>,
    #[serde(rename = "rule5")]
    pub rule_five: BTreeSet<StepId>,
    pub writes: BTreeMap<VarId, Value>,
    pub forcings: Vec<ForcingApplication>,
    pub suppressed: BTreeSet<StepId>,
    pub stable: bool,
}

impl EvolutionRecord {
    pub fn new(index: u64) -> Self {
        Self { index, ..Self::default() }
    }

    /// The trace line for this record (stable field order, compact JSON).
    pub fn to_jsonl(&self) -> String {
        serde_json::to_string(self).expect("evolution records always serialize")
    }
}

/// The outcome of a run that reached a stable situation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StableReport {
    /// Active steps per partial Grafcet (every partial appears).
    pub situation: BTreeMap<PartialId, BTreeSet<StepId>>,
    /// Values of all declared outputs at stability.
    pub outputs: BTreeMap<VarId, Value>,
    /// All evolutions of the run, in order; the last one is stable.
    #[serde(skip)]
    pub evolutions: Vec<EvolutionRecord>,
}

impl StableReport {
    /// The closing trace line of a successful run.
    pub fn to_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            report: &'a StableReport,
        }
        serde_json::to_string(&Line { report: self }).expect("reports always serialize")
    }

    /// Situation notation for one partial, e.g. `G1{2}`.
    pub fn situation_notation(&self, partial: &PartialId) -> Option<String> {
        let steps = self.situation.get(partial)?;
        let ids: Vec<&str> = steps.iter().map(|s| s.as_str()).collect();
        Some(format!("{partial}{{{}}}", ids.join(",")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunErrorKind {
    UnstableCycle,
    EvolutionBudgetExceeded,
    ForcingConflict,
    HierarchyConflict,
    WriteConflict,
    NotStable,
}

impl RunErrorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunErrorKind::UnstableCycle => "unstable_cycle",
            RunErrorKind::EvolutionBudgetExceeded => "evolution_budget_exceeded",
            RunErrorKind::ForcingConflict => "forcing_conflict",
            RunErrorKind::HierarchyConflict => "hierarchy_conflict",
            RunErrorKind::WriteConflict => "write_conflict",
            RunErrorKind::NotStable => "not_stable",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "unstable_cycle" => RunErrorKind::UnstableCycle,
            "evolution_budget_exceeded" => RunErrorKind::EvolutionBudgetExceeded,
            "forcing_conflict" => RunErrorKind::ForcingConflict,
            "hierarchy_conflict" => RunErrorKind::HierarchyConflict,
            "write_conflict" => RunErrorKind::WriteConflict,
            "not_stable" => RunErrorKind::NotStable,
            _ => return None,
        })
    }
}

impl fmt::Display for RunErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A run that failed to reach a stable situation, with the evolutions
/// completed before the failure (including the partially executed one).
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("{kind}: {detail}")]
pub struct RunError {
    pub kind: RunErrorKind,
    pub detail: String,
    pub partial_trace: Vec<EvolutionRecord>,
}

impl RunError {
    pub fn new(kind: RunErrorKind, detail: impl Into<String>) -> Self {
        Self { kind, detail: detail.into(), partial_trace: Vec::new() }
    }

    /// The closing trace line of a failed run.
    pub fn to_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Body<'a> {
            kind: RunErrorKind,
            detail: &'a str,
        }
        #[derive(Serialize)]
        struct Line<'a> {
            error: Body<'a>,
        }
        serde_json::to_string(&Line { error: Body { kind: self.kind, detail: &self.detail } })
            .expect("errors always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_lines_use_the_exact_key_set_and_order() {
        let mut rec = EvolutionRecord::new(1);
        rec.cleared.push(TransitionId::from("t1"));
        rec.activated.insert(StepId::from("2"));
        rec.writes.insert(VarId::from("y"), Value::Bool(true));
        rec.stable = true;
        let line = rec.to_jsonl();
        assert_eq!(
            line,
            "{\"evolution\":1,\"cleared\":[\"t1\"],\"activated\":[\"2\"],\
             \"deactivated\":[],\"rule5\":[],\"writes\":{\"y\":true},\
             \"forcings\":[],\"suppressed\":[],\"stable\":true}"
        );
    }

    #[test]
    fn report_and_error_lines_wrap_as_specified() {
        let mut report = StableReport {
            situation: BTreeMap::new(),
            outputs: BTreeMap::new(),
            evolutions: Vec::new(),
        };
        report
            .situation
            .insert(PartialId::from("G1"), [StepId::from("2")].into_iter().collect());
        report.outputs.insert(VarId::from("O1"), Value::Bool(false));
        assert_eq!(
            report.to_jsonl(),
            "{\"report\":{\"situation\":{\"G1\":[\"2\"]},\"outputs\":{\"O1\":false}}}"
        );
        assert_eq!(report.situation_notation(&PartialId::from("G1")).unwrap(), "G1{2}");

        let err = RunError::new(RunErrorKind::UnstableCycle, "state repeated");
        assert_eq!(
            err.to_jsonl(),
            "{\"error\":{\"kind\":\"unstable_cycle\",\"detail\":\"state repeated\"}}"
        );
    }
}

//! A deliberately naive reference interpreter used as the test oracle.
//!
//! This is an independent second implementation of the evolution semantics,
//! written before the engine and kept structurally different on purpose: it
//! works on plain strings and hash maps, re-derives the forced set from
//! scratch every evolution instead of carrying flags, rebuilds activity sets
//! with full scans, and detects run cycles by linear search over formatted
//! state strings. It trades all efficiency for obviousness; tests compare
//! the engine against it.

use std::collections::{HashMap, HashSet};

use crate::analyzer::AnalyzedModel;
use crate::expr::{Expr, Value, VarRef};
use crate::ids::{PartialId, StepId, VarId};
use crate::model::{ActionKind, GrafcetModel, PartialGrafcet, SituationSpec, Step, VarRole, VarType};
use crate::state::{EvolutionPolicy, Policy, RunErrorKind};

use std::collections::{BTreeMap, BTreeSet};

/// One stable observation: the situation of every partial Grafcet plus all
/// output values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleStable {
    pub situation: BTreeMap<PartialId, BTreeSet<StepId>>,
    pub outputs: BTreeMap<VarId, Value>,
}

impl OracleStable {
    /// `G1{2} G2{21,22}` — the notation used in reports and DOT labels.
    pub fn notation(&self) -> String {
        self.situation
            .iter()
            .map(|(pg, steps)| {
                let inner =
                    steps.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(",");
                format!("{pg}{{{inner}}}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    /// The run failed; `at_event` is 0 for initialization, k for event k.
    #[error("oracle run failed at event {at_event}: {kind}: {detail}")]
    Run { at_event: usize, kind: RunErrorKind, detail: String },
    #[error("model too large for the oracle: {0}")]
    ScaleExceeded(String),
}

const MAX_ORACLE_STEPS: usize = 32;
const MAX_ORACLE_INPUTS: usize = 8;

/// Runs initialization followed by the given input events, returning the
/// stable observation after each: entry 0 is the initial stable situation,
/// entry k the one after event k.
pub fn oracle_run(
    model: &AnalyzedModel,
    policy: Policy,
    events: &[BTreeMap<VarId, Value>],
) -> Result<Vec<OracleStable>, OracleError> {
    let m: &GrafcetModel = model;
    let step_count: usize = m.partials.iter().map(|p| p.steps.len()).sum();
    if step_count > MAX_ORACLE_STEPS {
        return Err(OracleError::ScaleExceeded(format!(
            "{step_count} steps (limit {MAX_ORACLE_STEPS})"
        )));
    }
    let input_count = m.variables.iter().filter(|v| v.role == VarRole::Input).count();
    if input_count > MAX_ORACLE_INPUTS {
        return Err(OracleError::ScaleExceeded(format!(
            "{input_count} inputs (limit {MAX_ORACLE_INPUTS})"
        )));
    }

    let mut sim = Sim::fresh(m, policy);
    let mut results = Vec::new();

    sim.pending = sim.initial_step_names();
    match sim.run_until_stable() {
        Ok(()) => results.push(sim.observe()),
        Err((kind, detail)) => return Err(OracleError::Run { at_event: 0, kind, detail }),
    }

    for (idx, changes) in events.iter().enumerate() {
        sim.begin_event(changes);
        match sim.run_until_stable() {
            Ok(()) => results.push(sim.observe()),
            Err((kind, detail)) => {
                return Err(OracleError::Run { at_event: idx + 1, kind, detail })
            }
        }
    }
    Ok(results)
}

type SimError = (RunErrorKind, String);

/// The whole interpreter state, string-keyed.
struct Sim<'m> {
    model: &'m GrafcetModel,
    policy: Policy,
    /// Partial Grafcets in processing order: by depth, then declaration.
    order: Vec<&'m PartialGrafcet>,
    active: HashSet<String>,
    values: HashMap<String, Value>,
    /// Pending edges for the next evolution; value true means rising.
    edges: HashMap<String, bool>,
    /// Partial Grafcets forced as of the end of the previous evolution.
    forced_before: HashSet<String>,
    /// Initial steps whose activation actions have not run yet.
    pending: HashSet<String>,
}

impl<'m> Sim<'m> {
    fn fresh(model: &'m GrafcetModel, policy: Policy) -> Self {
        let mut order: Vec<&PartialGrafcet> = model.partials.iter().collect();
        let decl_index: HashMap<&str, usize> = model
            .partials
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.as_str(), i))
            .collect();
        order.sort_by_key(|p| {
            (model.depth_of.get(&p.id).copied().unwrap_or(0), decl_index[p.id.as_str()])
        });

        let mut active = HashSet::new();
        for p in &model.partials {
            for s in &p.steps {
                if s.kind == crate::model::StepKind::Initial {
                    active.insert(s.id.as_str().to_owned());
                }
            }
        }
        let values = model
            .variables
            .iter()
            .map(|v| (v.id.as_str().to_owned(), v.initial))
            .collect();

        Sim {
            model,
            policy,
            order,
            active,
            values,
            edges: HashMap::new(),
            forced_before: HashSet::new(),
            pending: HashSet::new(),
        }
    }

    fn initial_step_names(&self) -> HashSet<String> {
        self.model
            .partials
            .iter()
            .flat_map(|p| p.steps.iter())
            .filter(|s| s.kind == crate::model::StepKind::Initial)
            .map(|s| s.id.as_str().to_owned())
            .collect()
    }

    fn begin_event(&mut self, changes: &BTreeMap<VarId, Value>) {
        self.edges.clear();
        for (var, new_value) in changes {
            let name = var.as_str().to_owned();
            let old = self.values.get(&name).copied();
            if old == Some(*new_value) {
                continue;
            }
            if let (Some(Value::Bool(_)), Value::Bool(rising)) = (old, new_value) {
                self.edges.insert(name.clone(), *rising);
            }
            self.values.insert(name, *new_value);
        }
    }

    /// The targets of every forcing order whose owner step is in `active`.
    fn forced_targets(&self, active: &HashSet<String>) -> HashSet<String> {
        let mut out = HashSet::new();
        for p in &self.model.partials {
            for s in &p.steps {
                if !active.contains(s.id.as_str()) {
                    continue;
                }
                for f in &s.forcings {
                    out.insert(f.target.as_str().to_owned());
                }
            }
        }
        out
    }

    fn run_until_stable(&mut self) -> Result<(), SimError> {
        let mut seen: Vec<String> = vec![self.format_state()];
        let mut count: u64 = 0;
        loop {
            if count >= self.policy.max_evolutions {
                return Err((
                    RunErrorKind::EvolutionBudgetExceeded,
                    format!("no stable situation within {} evolutions", count),
                ));
            }
            self.evolve()?;
            count += 1;
            if self.is_stable() {
                break;
            }
            let s = self.format_state();
            if seen.iter().any(|prev| *prev == s) {
                return Err((
                    RunErrorKind::UnstableCycle,
                    format!("situation repeats after {count} evolutions"),
                ));
            }
            seen.push(s);
        }
        self.compute_continuous_outputs();
        Ok(())
    }

    /// Inputs are excluded: within a run they are frozen, so the tuple
    /// (activity, internal+output values, pending edges) is the full state.
    fn format_state(&self) -> String {
        let mut steps: Vec<&String> = self.active.iter().collect();
        steps.sort();
        let mut vals: Vec<String> = self
            .model
            .variables
            .iter()
            .filter(|v| v.role != VarRole::Input)
            .map(|v| format!("{}={}", v.id, self.values[v.id.as_str()]))
            .collect();
        vals.sort();
        let mut edges: Vec<String> = self
            .edges
            .iter()
            .map(|(k, rising)| format!("{k}{}", if *rising { "+" } else { "-" }))
            .collect();
        edges.sort();
        format!("{steps:?}|{vals:?}|{edges:?}")
    }

    fn observe(&self) -> OracleStable {
        let mut situation = BTreeMap::new();
        for p in &self.model.partials {
            let steps: BTreeSet<StepId> = p
                .steps
                .iter()
                .filter(|s| self.active.contains(s.id.as_str()))
                .map(|s| s.id.clone())
                .collect();
            situation.insert(p.id.clone(), steps);
        }
        let outputs = self
            .model
            .variables
            .iter()
            .filter(|v| v.role == VarRole::Output)
            .map(|v| (v.id.clone(), self.values[v.id.as_str()]))
            .collect();
        OracleStable { situation, outputs }
    }

    fn evolve(&mut self) -> Result<(), SimError> {
        let snap_active = self.active.clone();
        let snap_values = self.values.clone();
        let edges = std::mem::take(&mut self.edges);

        let mut writes: HashMap<String, Value> = HashMap::new();
        let mut hier_deactivated: HashSet<String> = HashSet::new();
        let mut demands: HashMap<String, bool> = HashMap::new();
        let mut forcing_results: HashMap<String, Vec<String>> = HashMap::new();

        let order: Vec<&PartialGrafcet> = self.order.clone();
        for pg in &order {
            let forced_now = match self.policy.forcing_evaluation {
                EvolutionPolicy::Preemptive => self.forced_targets(&self.active),
                EvolutionPolicy::TwoPhase => self.forced_before.clone(),
            };
            self.structural_step(
                pg,
                forced_now.contains(pg.id.as_str()),
                &snap_active,
                &snap_values,
                &edges,
                &hier_deactivated,
                &mut writes,
            )?;
            if self.policy.forcing_evaluation == EvolutionPolicy::Preemptive {
                self.hierarchy_turn(
                    pg,
                    &snap_active,
                    &snap_values,
                    &edges,
                    &mut hier_deactivated,
                    &mut demands,
                    &mut forcing_results,
                    &mut writes,
                )?;
            }
        }
        if self.policy.forcing_evaluation == EvolutionPolicy::TwoPhase {
            for pg in &order {
                self.hierarchy_turn(
                    pg,
                    &snap_active,
                    &snap_values,
                    &edges,
                    &mut hier_deactivated,
                    &mut demands,
                    &mut forcing_results,
                    &mut writes,
                )?;
            }
        }

        self.pending.clear();
        self.forced_before = self.forced_targets(&self.active);

        // Edges for the next evolution: internal booleans and step
        // activities whose value changed net over this evolution.
        self.edges.clear();
        for v in &self.model.variables {
            if v.role != VarRole::Internal || v.ty != VarType::Bool {
                continue;
            }
            let name = v.id.as_str();
            let before = snap_values[name];
            let after = self.values[name];
            if before != after {
                self.edges.insert(name.to_owned(), after == Value::Bool(true));
            }
        }
        for p in &self.model.partials {
            for s in &p.steps {
                let name = s.id.as_str();
                let before = snap_active.contains(name);
                let after = self.active.contains(name);
                if before != after {
                    self.edges.insert(format!("X{name}"), after);
                }
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn structural_step(
        &mut self,
        pg: &PartialGrafcet,
        frozen: bool,
        snap_active: &HashSet<String>,
        snap_values: &HashMap<String, Value>,
        edges: &HashMap<String, bool>,
        hier_deactivated: &HashSet<String>,
        writes: &mut HashMap<String, Value>,
    ) -> Result<(), SimError> {
        let mut to_activate: Vec<String> = Vec::new();
        let mut to_deactivate: Vec<String> = Vec::new();
        if !frozen {
            for t in &pg.transitions {
                let all_pre_active =
                    t.pre.iter().all(|s| snap_active.contains(s.as_str()));
                let pre_untouched =
                    t.pre.iter().all(|s| !hier_deactivated.contains(s.as_str()));
                if !all_pre_active || !pre_untouched {
                    continue;
                }
                let fired = naive_eval(&t.condition, snap_values, snap_active, edges);
                if fired == Value::Bool(true) {
                    for s in &t.pre {
                        to_deactivate.push(s.as_str().to_owned());
                    }
                    for s in &t.post {
                        to_activate.push(s.as_str().to_owned());
                    }
                }
            }
        }

        // Rule 5: a step in both unions keeps its activity and is treated
        // as neither activated nor deactivated.
        let really_deactivated: Vec<&String> = to_deactivate
            .iter()
            .filter(|s| !to_activate.iter().any(|a| a == *s))
            .collect();
        let really_activated: Vec<&String> = to_activate
            .iter()
            .filter(|s| {
                !to_deactivate.iter().any(|d| d == *s) && !snap_active.contains(*s)
            })
            .collect();

        for s in &really_deactivated {
            self.active.remove(*s);
        }
        for s in to_activate.iter() {
            if !to_deactivate.iter().any(|d| d == s) {
                self.active.insert(s.clone());
            }
        }

        // Stored actions, all right-hand sides read from the snapshot.
        for step in &pg.steps {
            let name = step.id.as_str();
            let was_activated = really_activated.iter().any(|s| *s == name)
                || self.pending.contains(name);
            let was_deactivated = really_deactivated.iter().any(|s| *s == name);
            let event_eligible =
                snap_active.contains(name) && !hier_deactivated.contains(name);
            for a in &step.actions {
                match a.kind {
                    ActionKind::StoredOnActivation if was_activated => {
                        self.write(a, snap_values, snap_active, edges, writes)?;
                    }
                    ActionKind::StoredOnDeactivation if was_deactivated => {
                        self.write(a, snap_values, snap_active, edges, writes)?;
                    }
                    ActionKind::StoredOnEvent if event_eligible => {
                        let cond = a.condition.as_ref().expect("on_event has a condition");
                        if naive_eval(cond, snap_values, snap_active, edges)
                            == Value::Bool(true)
                        {
                            self.write(a, snap_values, snap_active, edges, writes)?;
                        }
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Applies the hierarchy effects this partial Grafcet emits: forcing
    /// orders of its live-active steps and enclosure consequences of its
    /// enclosing steps' net activity change, in declaration order.
    #[allow(clippy::too_many_arguments)]
    fn hierarchy_turn(
        &mut self,
        pg: &PartialGrafcet,
        snap_active: &HashSet<String>,
        snap_values: &HashMap<String, Value>,
        edges: &HashMap<String, bool>,
        hier_deactivated: &mut HashSet<String>,
        demands: &mut HashMap<String, bool>,
        forcing_results: &mut HashMap<String, Vec<String>>,
        writes: &mut HashMap<String, Value>,
    ) -> Result<(), SimError> {
        for step in &pg.steps {
            let live = self.active.contains(step.id.as_str());
            if live {
                for f in &step.forcings {
                    let target = self
                        .model
                        .partial(&f.target)
                        .expect("forcing targets are resolved at parse time");
                    let mut result: Vec<String> = match &f.spec {
                        SituationSpec::Explicit(steps) => {
                            steps.iter().map(|s| s.as_str().to_owned()).collect()
                        }
                        SituationSpec::Current => target
                            .steps
                            .iter()
                            .filter(|s| self.active.contains(s.id.as_str()))
                            .map(|s| s.id.as_str().to_owned())
                            .collect(),
                        SituationSpec::Empty => Vec::new(),
                        SituationSpec::Init => target
                            .steps
                            .iter()
                            .filter(|s| s.kind == crate::model::StepKind::Initial)
                            .map(|s| s.id.as_str().to_owned())
                            .collect(),
                    };
                    result.sort();
                    result.dedup();
                    if let Some(first) = forcing_results.get(target.id.as_str()) {
                        if *first != result {
                            return Err((
                                RunErrorKind::ForcingConflict,
                                format!(
                                    "partial Grafcet `{}` forced to {{{}}} and {{{}}} in one \
                                     evolution",
                                    target.id,
                                    first.join(","),
                                    result.join(",")
                                ),
                            ));
                        }
                    } else {
                        forcing_results
                            .insert(target.id.as_str().to_owned(), result.clone());
                    }
                    self.impose_situation(
                        target,
                        &result,
                        snap_values,
                        snap_active,
                        edges,
                        hier_deactivated,
                        demands,
                        writes,
                    )?;
                }
            }
            if !step.encloses.is_empty() {
                let was = snap_active.contains(step.id.as_str());
                let is = live;
                if is && !was {
                    for enclosed in &step.encloses {
                        let target =
                            self.model.partial(enclosed).expect("encloses checked at parse");
                        for s in target.steps.iter().filter(|s| s.activation_link) {
                            self.demand(s.id.as_str(), true, demands)?;
                            if !self.active.contains(s.id.as_str()) {
                                self.active.insert(s.id.as_str().to_owned());
                                self.run_activation_actions(
                                    s,
                                    snap_values,
                                    snap_active,
                                    edges,
                                    writes,
                                )?;
                            }
                        }
                    }
                } else if was && !is {
                    for enclosed in &step.encloses {
                        let target =
                            self.model.partial(enclosed).expect("encloses checked at parse");
                        for s in &target.steps {
                            self.demand(s.id.as_str(), false, demands)?;
                            if self.active.contains(s.id.as_str()) {
                                self.active.remove(s.id.as_str());
                                hier_deactivated.insert(s.id.as_str().to_owned());
                                // on_deactivation deliberately suppressed.
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Coerces `target` into exactly `result`, enforcing per-step demands.
    #[allow(clippy::too_many_arguments)]
    fn impose_situation(
        &mut self,
        target: &PartialGrafcet,
        result: &[String],
        snap_values: &HashMap<String, Value>,
        snap_active: &HashSet<String>,
        edges: &HashMap<String, bool>,
        hier_deactivated: &mut HashSet<String>,
        demands: &mut HashMap<String, bool>,
        writes: &mut HashMap<String, Value>,
    ) -> Result<(), SimError> {
        for step in &target.steps {
            let name = step.id.as_str();
            let want = result.iter().any(|s| s == name);
            self.demand(name, want, demands)?;
            let is = self.active.contains(name);
            if want && !is {
                self.active.insert(name.to_owned());
                self.run_activation_actions(step, snap_values, snap_active, edges, writes)?;
            } else if !want && is {
                self.active.remove(name);
                hier_deactivated.insert(name.to_owned());
                // on_deactivation deliberately suppressed.
            }
        }
        Ok(())
    }

    fn demand(
        &self,
        step: &str,
        want: bool,
        demands: &mut HashMap<String, bool>,
    ) -> Result<(), SimError> {
        if let Some(prev) = demands.get(step) {
            if *prev != want {
                return Err((
                    RunErrorKind::HierarchyConflict,
                    format!(
                        "step `{step}` is demanded both active and inactive by hierarchy \
                         effects in one evolution"
                    ),
                ));
            }
        } else {
            demands.insert(step.to_owned(), want);
        }
        Ok(())
    }

    fn run_activation_actions(
        &mut self,
        step: &Step,
        snap_values: &HashMap<String, Value>,
        snap_active: &HashSet<String>,
        edges: &HashMap<String, bool>,
        writes: &mut HashMap<String, Value>,
    ) -> Result<(), SimError> {
        for a in &step.actions {
            if a.kind == ActionKind::StoredOnActivation {
                self.write(a, snap_values, snap_active, edges, writes)?;
            }
        }
        Ok(())
    }

    fn write(
        &mut self,
        action: &crate::model::Action,
        snap_values: &HashMap<String, Value>,
        snap_active: &HashSet<String>,
        edges: &HashMap<String, bool>,
        writes: &mut HashMap<String, Value>,
    ) -> Result<(), SimError> {
        let value = naive_eval(&action.value, snap_values, snap_active, edges);
        let name = action.target.as_str();
        if let Some(prev) = writes.get(name) {
            if *prev != value {
                return Err((
                    RunErrorKind::WriteConflict,
                    format!("variable `{name}` written with both {prev} and {value} in one evolution"),
                ));
            }
        } else {
            writes.insert(name.to_owned(), value);
        }
        self.values.insert(name.to_owned(), value);
        Ok(())
    }

    /// Stability: with the pending edges, no transition anywhere may clear
    /// (forced partial Grafcets re-derived from current activity).
    fn is_stable(&self) -> bool {
        let forced = self.forced_targets(&self.active);
        for pg in &self.model.partials {
            if forced.contains(pg.id.as_str()) {
                continue;
            }
            for t in &pg.transitions {
                if !t.pre.iter().all(|s| self.active.contains(s.as_str())) {
                    continue;
                }
                if naive_eval(&t.condition, &self.values, &self.active, &self.edges)
                    == Value::Bool(true)
                {
                    return false;
                }
            }
        }
        true
    }

    /// At stability, outputs driven by continuous actions are recomputed;
    /// everything else keeps its stored value.
    fn compute_continuous_outputs(&mut self) {
        let mut continuous: Vec<(&str, Value)> = Vec::new();
        for v in &self.model.variables {
            if v.role != VarRole::Output {
                continue;
            }
            let mut has_continuous = false;
            let mut asserted = false;
            for p in &self.model.partials {
                for s in &p.steps {
                    for a in &s.actions {
                        if a.kind != ActionKind::Continuous || a.target != v.id {
                            continue;
                        }
                        has_continuous = true;
                        if !self.active.contains(s.id.as_str()) {
                            continue;
                        }
                        let on = match &a.condition {
                            None => true,
                            Some(c) => {
                                naive_eval(c, &self.values, &self.active, &HashMap::new())
                                    == Value::Bool(true)
                            }
                        };
                        if on {
                            asserted = true;
                        }
                    }
                }
            }
            if has_continuous {
                continuous.push((v.id.as_str(), Value::Bool(asserted)));
            }
        }
        for (name, val) in continuous {
            self.values.insert(name.to_owned(), val);
        }
    }
}

/// A plain recursive evaluator over the snapshot; independent of the
/// engine's. Arithmetic wraps like the engine's does.
fn naive_eval(
    e: &Expr,
    values: &HashMap<String, Value>,
    active: &HashSet<String>,
    edges: &HashMap<String, bool>,
) -> Value {
    let read = |r: &VarRef| -> Value {
        match r {
            VarRef::Var(v) => values[v.as_str()],
            VarRef::StepActivity(s) => Value::Bool(active.contains(s.as_str())),
        }
    };
    let edge_key = |r: &VarRef| -> String {
        match r {
            VarRef::Var(v) => v.as_str().to_owned(),
            VarRef::StepActivity(s) => format!("X{s}"),
        }
    };
    let as_bool = |v: Value| -> bool {
        match v {
            Value::Bool(b) => b,
            Value::Int(_) => unreachable!("type checking rejects boolean use of integers"),
        }
    };
    let as_int = |v: Value| -> i64 {
        match v {
            Value::Int(n) => n,
            Value::Bool(_) => unreachable!("type checking rejects integer use of booleans"),
        }
    };
    match e {
        Expr::BoolLit(b) => Value::Bool(*b),
        Expr::IntLit(n) => Value::Int(*n),
        Expr::Read(r) => read(r),
        Expr::Not(inner) => {
            Value::Bool(!as_bool(naive_eval(inner, values, active, edges)))
        }
        Expr::And(a, b) => Value::Bool(
            as_bool(naive_eval(a, values, active, edges))
                && as_bool(naive_eval(b, values, active, edges)),
        ),
        Expr::Or(a, b) => Value::Bool(
            as_bool(naive_eval(a, values, active, edges))
                || as_bool(naive_eval(b, values, active, edges)),
        ),
        Expr::Cmp(op, a, b) => {
            let x = as_int(naive_eval(a, values, active, edges));
            let y = as_int(naive_eval(b, values, active, edges));
            use crate::expr::CmpOp::*;
            Value::Bool(match op {
                Eq => x == y,
                Ne => x != y,
                Lt => x < y,
                Le => x <= y,
                Gt => x > y,
                Ge => x >= y,
            })
        }
        Expr::Add(a, b) => Value::Int(
            as_int(naive_eval(a, values, active, edges))
                .wrapping_add(as_int(naive_eval(b, values, active, edges))),
        ),
        Expr::Sub(a, b) => Value::Int(
            as_int(naive_eval(a, values, active, edges))
                .wrapping_sub(as_int(naive_eval(b, values, active, edges))),
        ),
        Expr::Rising(r) => Value::Bool(edges.get(&edge_key(r)) == Some(&true)),
        Expr::Falling(r) => Value::Bool(edges.get(&edge_key(r)) == Some(&false)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyzer::analyze;
    use crate::parser::parse_model;

    fn analyzed(src: &str) -> AnalyzedModel {
        analyze(&parse_model("oracle-test.gft", src).expect("fixture parses"))
            .expect("fixture analyzes")
    }

    fn ev(pairs: &[(&str, Value)]) -> BTreeMap<VarId, Value> {
        pairs.iter().map(|(k, v)| (VarId::from(*k), *v)).collect()
    }

    fn situations(stable: &OracleStable) -> String {
        stable.notation()
    }

    const M_RW: &str = r#"grafcet "m_rw" {
  partial G1 {
    initial step 1;
    step 2;
    initial step 3;
    step 4;
    transition t1 { from: 1; to: 2; when: X3; }
    transition t3 { from: 3; to: 4; when: X1; }
  }
}"#;

    #[test]
    fn cross_conditioned_transitions_clear_together() {
        // Both conditions read the snapshot, so both transitions clear in
        // the same evolution and the result is order-independent.
        let m = analyzed(M_RW);
        let out = oracle_run(&m, Policy::preemptive(), &[]).unwrap();
        assert_eq!(situations(&out[0]), "G1{2,4}");

        let permuted = M_RW.replace(
            "transition t1 { from: 1; to: 2; when: X3; }\n    transition t3 { from: 3; to: 4; when: X1; }",
            "transition t3 { from: 3; to: 4; when: X1; }\n    transition t1 { from: 1; to: 2; when: X3; }",
        );
        let m2 = analyzed(&permuted);
        let out2 = oracle_run(&m2, Policy::preemptive(), &[]).unwrap();
        assert_eq!(situations(&out2[0]), "G1{2,4}");
    }

    const M_EV: &str = r#"grafcet "m_ev" {
  var input a: bool;
  var internal y: bool;
  partial G1 {
    initial step 1 { on_event rising(a): y := true; }
    step 2;
    transition t1 { from: 1; to: 2; when: rising(y); }
  }
  partial G2 {
    initial step 3;
    step 4;
    transition tp { from: 3; to: 4; when: rising(a) AND rising(y); }
  }
}"#;

    #[test]
    fn event_lifetimes_span_exactly_one_evolution() {
        let m = analyzed(M_EV);
        let out = oracle_run(&m, Policy::preemptive(), &[ev(&[("a", Value::Bool(true))])]).unwrap();
        assert_eq!(situations(&out[0]), "G1{1} G2{3}");
        // Evolution 1 only writes y (input edge), evolution 2 clears t1
        // (internal edge); rising(a) and rising(y) never overlap, so the
        // probe in G2 stays put.
        assert_eq!(situations(&out[1]), "G1{2} G2{3}");
    }

    const M_DIV: &str = r#"grafcet "m_div" {
  partial G1 {
    initial step 1;
    step 2;
    transition t1 { from: 1; to: 2; when: true; }
    transition t2 { from: 2; to: 1; when: true; }
  }
}"#;

    #[test]
    fn divergence_is_detected_as_a_cycle_not_a_budget_overrun() {
        let m = analyzed(M_DIV);
        let err = oracle_run(&m, Policy::preemptive(), &[]).unwrap_err();
        match err {
            OracleError::Run { at_event: 0, kind: RunErrorKind::UnstableCycle, detail } => {
                // 1 -> 2 -> 1 -> 2: the post-evolution tuple of evolution 3
                // repeats the one of evolution 1 (the edge context is part
                // of the state, so evolution 2's {1} differs from the
                // initial {1} with no pending edges).
                assert!(detail.contains("3 evolutions"), "unexpected detail: {detail}");
            }
            other => panic!("expected an unstable cycle at initialization, got {other:?}"),
        }
    }

    const M_FO: &str = r#"grafcet "m_fo" {
  var input a: bool;
  var internal z: bool;
  partial G1 {
    initial step 11;
    step 12 { force G2 {21}; }
    transition t11 { from: 11; to: 12; when: rising(a); }
  }
  partial G2 {
    initial step 21;
    step 22 { on_activation z := true; }
    transition t21 { from: 21; to: 22; when: rising(a); }
  }
}"#;

    #[test]
    fn forcing_policies_diverge_on_m_fo() {
        let m = analyzed(M_FO);
        let pre =
            oracle_run(&m, Policy::preemptive(), &[ev(&[("a", Value::Bool(true))])]).unwrap();
        // Preemptive: G1 evolves first and immediately freezes G2 at {21};
        // t21 never fires, z stays false.
        assert_eq!(situations(&pre[1]), "G1{12} G2{21}");

        let two =
            oracle_run(&m, Policy::two_phase(), &[ev(&[("a", Value::Bool(true))])]).unwrap();
        // Two-phase: t21 clears in the structural phase (activating 22 and
        // writing z), then the forcing coerces G2 back to {21}.
        assert_eq!(situations(&two[1]), "G1{12} G2{21}");

        let z = VarId::from("z");
        let m2 = analyzed(M_FO.replace("var internal z", "var output z").as_str());
        let pre2 =
            oracle_run(&m2, Policy::preemptive(), &[ev(&[("a", Value::Bool(true))])]).unwrap();
        let two2 =
            oracle_run(&m2, Policy::two_phase(), &[ev(&[("a", Value::Bool(true))])]).unwrap();
        assert_eq!(pre2[1].outputs[&z], Value::Bool(false));
        assert_eq!(two2[1].outputs[&z], Value::Bool(true));
    }

    const M_INIT: &str = r#"grafcet "m_init" {
  var internal y: bool;
  partial G1 {
    initial step 1 { on_activation y := true; }
    step 2;
    transition t1 { from: 1; to: 2; when: y; }
  }
}"#;

    #[test]
    fn initial_activation_actions_run_in_the_first_evolution() {
        let m = analyzed(M_INIT);
        let out = oracle_run(&m, Policy::preemptive(), &[]).unwrap();
        // Evolution 1: pending activation writes y (snapshot read of the
        // condition still sees false). Evolution 2: t1 clears on the level
        // condition.
        assert_eq!(situations(&out[0]), "G1{2}");
    }

    const M_CONT: &str = r#"grafcet "m_cont" {
  var input a: bool;
  var output O1: bool;
  partial G1 {
    initial step 1 { do O1; }
    step 2 { do O1 if a; }
    transition t1 { from: 1; to: 2; when: true; }
  }
}"#;

    #[test]
    fn continuous_outputs_are_computed_only_at_stability() {
        let m = analyzed(M_CONT);
        let out = oracle_run(&m, Policy::preemptive(), &[ev(&[("a", Value::Bool(true))])])
            .unwrap();
        // Step 1 is transient: by the time the situation is stable, only
        // step 2 is active and its assertion needs a=true.
        assert_eq!(situations(&out[0]), "G1{2}");
        assert_eq!(out[0].outputs[&VarId::from("O1")], Value::Bool(false));
        assert_eq!(out[1].outputs[&VarId::from("O1")], Value::Bool(true));
    }

    const M_WRITECONF: &str = r#"grafcet "m_writeconf" {
  var input a: bool;
  var internal w: bool;
  partial G1 {
    initial step 1;
    step 2 { on_activation w := true; }
    step 3 { on_activation w := false; }
    transition t1 { from: 1; to: 2, 3; when: rising(a); }
  }
}"#;

    #[test]
    fn parallel_contradictory_writes_conflict() {
        let m = analyzed(M_WRITECONF);
        let err = oracle_run(&m, Policy::preemptive(), &[ev(&[("a", Value::Bool(true))])])
            .unwrap_err();
        match err {
            OracleError::Run { at_event: 1, kind: RunErrorKind::WriteConflict, .. } => {}
            other => panic!("expected a write conflict at event 1, got {other:?}"),
        }
    }

    // G3 and G4 observe the counter through level conditions: t31 clears
    // once n reaches 1, t41 would clear if n ever reached 2.
    const M_R5E: &str = r#"grafcet "m_r5e" {
  var input a: bool;
  var internal n: int;
  partial G1 {
    initial step 1;
    enclosing step 2 encloses G2 { on_activation n := n + 1; }
    transition t1 { from: 1; to: 2; when: rising(a); }
    transition t2 { from: 2; to: 2; when: rising(a); }
  }
  partial G2 {
    step 21 *;
    step 22;
    transition t3 { from: 21; to: 22; when: rising(a); }
  }
  partial G3 {
    initial step 31;
    step 32;
    transition t31 { from: 31; to: 32; when: n >= 1; }
  }
  partial G4 {
    initial step 41;
    step 42;
    transition t41 { from: 41; to: 42; when: n >= 2; }
  }
}"#;

    #[test]
    fn rule_five_keeps_enclosures_untouched_and_inner_transitions_clear() {
        let m = analyzed(M_R5E);
        let up = ev(&[("a", Value::Bool(true))]);
        let down = ev(&[("a", Value::Bool(false))]);
        let out = oracle_run(
            &m,
            Policy::preemptive(),
            &[up.clone(), down.clone(), up.clone()],
        )
        .unwrap();
        // First rising edge: t1 clears, step 2 activates, its activation
        // action runs (n=1, witnessed by t31 clearing) and the enclosure
        // activates the link step 21.
        assert_eq!(situations(&out[1]), "G1{2} G2{21} G3{32} G4{41}");
        // Second rising edge: t2 self-reactivates step 2 under rule 5 — no
        // activation action (n stays 1, or t41 would have cleared), no
        // re-initialization of G2 — while the inner t3 clears in the very
        // same evolution.
        assert_eq!(situations(&out[3]), "G1{2} G2{22} G3{32} G4{41}");
    }

    const M_ENC: &str = r#"grafcet "m_enc" {
  var input a: bool;
  var internal w: bool;
  partial G1 {
    initial step 1;
    enclosing step 2 encloses G2;
    step 3;
    transition t1 { from: 1; to: 2; when: rising(a); }
    transition t2 { from: 2; to: 3; when: rising(a); }
  }
  partial G2 {
    step 21 *;
    step 22 { on_activation w := true; }
    transition t21 { from: 21; to: 22; when: rising(a); }
  }
}"#;

    #[test]
    fn enclosure_deactivation_preempts_or_trails_inner_clearing_by_policy() {
        let m = analyzed(M_ENC);
        let up = ev(&[("a", Value::Bool(true))]);
        let down = ev(&[("a", Value::Bool(false))]);

        let pre = oracle_run(&m, Policy::preemptive(), &[up.clone(), down.clone(), up.clone()])
            .unwrap();
        // Second rising edge: G1 evolves first, deactivating step 2 and all
        // of G2 before G2's turn; t21's preceding step is hierarchy-
        // deactivated, so it cannot clear and w stays false.
        assert_eq!(situations(&pre[3]), "G1{3} G2{}");

        let two = oracle_run(&m, Policy::two_phase(), &[up.clone(), down, up]).unwrap();
        // Two-phase: t21 clears structurally (writing w) before the
        // enclosure deactivation arrives in phase 2.
        assert_eq!(situations(&two[3]), "G1{3} G2{}");

        let m2 = analyzed(M_ENC.replace("var internal w", "var output w").as_str());
        let up2 = ev(&[("a", Value::Bool(true))]);
        let down2 = ev(&[("a", Value::Bool(false))]);
        let pre2 =
            oracle_run(&m2, Policy::preemptive(), &[up2.clone(), down2.clone(), up2.clone()])
                .unwrap();
        let two2 = oracle_run(&m2, Policy::two_phase(), &[up2.clone(), down2, up2]).unwrap();
        assert_eq!(pre2[3].outputs[&VarId::from("w")], Value::Bool(false));
        assert_eq!(two2[3].outputs[&VarId::from("w")], Value::Bool(true));
    }

    const M_FOCUR: &str = r#"grafcet "m_focur" {
  var input a: bool;
  partial G1 {
    initial step 11;
    step 12 { force G2 {*}; }
    step 13;
    transition t11 { from: 11; to: 12; when: rising(a); }
    transition t12 { from: 12; to: 13; when: rising(a); }
  }
  partial G2 {
    initial step 21;
    step 22;
    step 23;
    transition t21 { from: 21; to: 22; when: rising(a); }
    transition t22 { from: 22; to: 23; when: rising(a); }
  }
}"#;

    #[test]
    fn stale_forced_flags_block_clearing_under_two_phase() {
        let m = analyzed(M_FOCUR);
        let up = ev(&[("a", Value::Bool(true))]);
        let down = ev(&[("a", Value::Bool(false))]);
        let seq = [up.clone(), down.clone(), up.clone()];

        // Preemptive: step 12 activates and freezes G2 at its current
        // situation {21} within the same evolution, so t21 is blocked at
        // the first edge. At the second edge 12 leaves before its
        // hierarchy turn, G2 unfreezes, and t21 finally clears.
        let pre = oracle_run(&m, Policy::preemptive(), &seq).unwrap();
        assert_eq!(situations(&pre[1]), "G1{12} G2{21}");
        assert_eq!(situations(&pre[3]), "G1{13} G2{22}");

        // Two-phase: t21 clears structurally before the forcing arrives
        // (the current situation then resolves to {22}), and at the second
        // edge the stale forced flag emitted while 12 was active blocks
        // t22 even though 12 leaves in that very evolution.
        let two = oracle_run(&m, Policy::two_phase(), &seq).unwrap();
        assert_eq!(situations(&two[1]), "G1{12} G2{22}");
        assert_eq!(situations(&two[3]), "G1{13} G2{22}");
    }

    const M_FORCECONF: &str = r#"grafcet "m_forceconf" {
  var input a, b: bool;
  partial G1 {
    initial step 11;
    step 12 { force G3 {31}; }
    transition t11 { from: 11; to: 12; when: rising(a); }
  }
  partial G2 {
    initial step 21;
    step 22 { force G3 {32}; }
    transition t21 { from: 21; to: 22; when: rising(b); }
  }
  partial G3 {
    initial step 31;
    step 32;
    transition t31 { from: 31; to: 32; when: rising(a); }
  }
}"#;

    #[test]
    fn contradictory_forcings_conflict_only_when_both_owners_are_active() {
        let m = analyzed(M_FORCECONF);
        let only_a = oracle_run(&m, Policy::preemptive(), &[ev(&[("a", Value::Bool(true))])])
            .unwrap();
        assert_eq!(situations(&only_a[1]), "G1{12} G2{21} G3{31}");

        let err = oracle_run(
            &m,
            Policy::preemptive(),
            &[ev(&[("a", Value::Bool(true))]), ev(&[("b", Value::Bool(true))])],
        )
        .unwrap_err();
        match err {
            OracleError::Run { at_event: 2, kind: RunErrorKind::ForcingConflict, .. } => {}
            other => panic!("expected a forcing conflict at event 2, got {other:?}"),
        }
    }

    const M_SHIFT: &str = r#"grafcet "m_shift" {
  var input c: bool;
  partial G1 {
    initial step 1;
    step 2;
    step 3;
    step 4;
    transition t1 { from: 1; to: 2; when: rising(c); }
    transition t2 { from: 2; to: 3; when: rising(c); }
    transition t3 { from: 3; to: 4; when: rising(c); }
  }
}"#;

    #[test]
    fn shift_chain_advances_one_position_per_event() {
        let m = analyzed(M_SHIFT);
        let up = ev(&[("c", Value::Bool(true))]);
        let down = ev(&[("c", Value::Bool(false))]);
        let out = oracle_run(
            &m,
            Policy::preemptive(),
            &[up.clone(), down.clone(), up.clone(), down, up],
        )
        .unwrap();
        let got: Vec<String> = out.iter().map(situations).collect();
        assert_eq!(got, ["G1{1}", "G1{2}", "G1{2}", "G1{3}", "G1{3}", "G1{4}"]);
    }

    #[test]
    fn no_op_events_leave_the_situation_unchanged() {
        let m = analyzed(M_SHIFT);
        let out = oracle_run(
            &m,
            Policy::preemptive(),
            &[ev(&[("c", Value::Bool(false))])],
        )
        .unwrap();
        assert_eq!(situations(&out[1]), "G1{1}");
    }

    #[test]
    fn oracle_scale_limits_are_enforced() {
        let mut src = String::from("grafcet \"big\" {\n  partial G1 {\n    initial step 1;\n");
        for i in 2..=40 {
            src.push_str(&format!("    step {i};\n"));
        }
        for i in 1..40 {
            src.push_str(&format!(
                "    transition t{i} {{ from: {i}; to: {}; when: false; }}\n",
                i + 1
            ));
        }
        src.push_str("  }\n}\n");
        let m = analyzed(&src);
        match oracle_run(&m, Policy::preemptive(), &[]) {
            Err(OracleError::ScaleExceeded(msg)) => assert!(msg.contains("steps")),
            other => panic!("expected a scale error, got {other:?}"),
        }
    }
}

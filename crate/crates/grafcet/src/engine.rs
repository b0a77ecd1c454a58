//! The deterministic interpretation engine: synchronous evolutions over a
//! snapshot, hierarchy effects in depth order, runs to stability.
//!
//! Within one evolution every condition and right-hand side reads the
//! snapshot taken at its start (plus the edge context), while all step and
//! variable changes go to the live state. Partial Grafcets are processed
//! from the hierarchically highest level down; each one first evolves
//! structurally, then (immediately under the preemptive policy, in a second
//! phase under the two-phase policy) emits its hierarchy effects — forcing
//! orders of its live-active steps and enclosure consequences of its
//! enclosing steps' net activity change.

use std::collections::{BTreeMap, BTreeSet};

use crate::analyzer::AnalyzedModel;
use crate::expr::{eval, eval_bool, EdgeDir, EvalCtx, EventKey, Value};
use crate::ids::{PartialId, StepId, VarId};
use crate::model::{
    Action, ActionKind, ForcingOrder, GrafcetModel, PartialGrafcet, SituationSpec, Step,
    StepKind, VarRole, VarType,
};
use crate::state::{
    EngineState, EvolutionPolicy, EvolutionRecord, ForcingApplication, Policy, RunError,
    RunErrorKind, StableReport,
};

/// The targets of every forcing order owned by an active step. At a stable
/// situation this is exactly the engine's forced set, which is what makes
/// stable states reconstructible from (activity, valuation) alone.
pub fn derive_forced(model: &GrafcetModel, active: &BTreeSet<StepId>) -> BTreeSet<PartialId> {
    model
        .steps()
        .filter(|(_, s)| active.contains(&s.id))
        .flat_map(|(_, s)| s.forcings.iter().map(|f| f.target.clone()))
        .collect()
}

/// A model paired with runtime state. Create one with [`Engine::new`], call
/// [`Engine::initialize`], then feed input events.
#[derive(Clone)]
pub struct Engine<'m> {
    model: &'m AnalyzedModel,
    policy: Policy,
    state: EngineState,
}

impl<'m> Engine<'m> {
    pub fn new(model: &'m AnalyzedModel, policy: Policy) -> Self {
        Engine { model, policy, state: EngineState::default() }
    }

    /// Reconstructs an engine sitting at a known stable situation. The
    /// forced set is re-derived from the active steps; the edge context is
    /// empty, which is indistinguishable from the original state as far as
    /// future input events are concerned (an event replaces the context
    /// before anything reads it).
    pub fn from_stable(
        model: &'m AnalyzedModel,
        policy: Policy,
        active: BTreeSet<StepId>,
        valuation: BTreeMap<VarId, Value>,
    ) -> Self {
        let forced = derive_forced(model, &active);
        Engine {
            model,
            policy,
            state: EngineState {
                active,
                valuation,
                edge_context: BTreeMap::new(),
                forced,
                pending_activated: BTreeSet::new(),
                stable: true,
            },
        }
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    pub fn model(&self) -> &'m AnalyzedModel {
        self.model
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    /// Puts the model into its initial situation (initial steps active,
    /// declared initial values, no edges, no forcings) and runs to
    /// stability. Activation actions of the initial steps run in the first
    /// evolution.
    pub fn initialize(&mut self) -> Result<StableReport, RunError> {
        let initial = self.model.initial_steps();
        self.state = EngineState {
            active: initial.clone(),
            valuation: self.model.initial_valuation(),
            edge_context: BTreeMap::new(),
            forced: BTreeSet::new(),
            pending_activated: initial,
            stable: false,
        };
        self.run_to_stability()
    }

    /// Applies one input event — a set of simultaneous input changes — to a
    /// stable situation and runs to stability. Changes that restate the
    /// current value produce no edge; an event with no effective change
    /// still runs one (trivially stable) evolution.
    pub fn apply_input_event(
        &mut self,
        changes: &BTreeMap<VarId, Value>,
    ) -> Result<StableReport, RunError> {
        if !self.state.stable {
            return Err(RunError::new(
                RunErrorKind::NotStable,
                "input events apply only to a stable situation",
            ));
        }
        let mut edges = BTreeMap::new();
        for (var, value) in changes {
            let decl = self
                .model
                .variable(var)
                .unwrap_or_else(|| panic!("input event sets undeclared variable `{var}`"));
            assert!(
                decl.role == VarRole::Input,
                "input event sets non-input variable `{var}`"
            );
            let old = self.state.valuation[var];
            if old == *value {
                log::debug!("input event sets `{var}` to its current value; no edge");
                continue;
            }
            if let Value::Bool(b) = value {
                let dir = if *b { EdgeDir::Rising } else { EdgeDir::Falling };
                edges.insert(EventKey::Var(var.clone()), dir);
            }
            self.state.valuation.insert(var.clone(), *value);
        }
        self.state.edge_context = edges;
        self.state.pending_activated.clear();
        self.state.stable = false;
        self.run_to_stability()
    }

    /// Active steps per partial Grafcet (every partial appears, possibly
    /// with an empty set).
    pub fn situation(&self) -> BTreeMap<PartialId, BTreeSet<StepId>> {
        situation_map(self.model, &self.state.active)
    }

    fn run_to_stability(&mut self) -> Result<StableReport, RunError> {
        let mut records: Vec<EvolutionRecord> = Vec::new();
        let mut seen = BTreeSet::new();
        seen.insert(self.state_tuple());
        loop {
            if records.len() as u64 >= self.policy.max_evolutions {
                return Err(RunError {
                    kind: RunErrorKind::EvolutionBudgetExceeded,
                    detail: format!(
                        "no stable situation within {} evolutions",
                        records.len()
                    ),
                    partial_trace: records,
                });
            }
            let index = records.len() as u64 + 1;
            match self.evolve_once(index) {
                Ok(rec) => {
                    let stable = rec.stable;
                    records.push(rec);
                    if stable {
                        break;
                    }
                    if !seen.insert(self.state_tuple()) {
                        return Err(RunError {
                            kind: RunErrorKind::UnstableCycle,
                            detail: format!(
                                "situation repeats after {} evolutions",
                                records.len()
                            ),
                            partial_trace: records,
                        });
                    }
                }
                Err(mut err) => {
                    let mut trace = records;
                    trace.append(&mut err.partial_trace);
                    err.partial_trace = trace;
                    return Err(err);
                }
            }
        }
        self.compute_continuous_outputs();
        let outputs = self
            .model
            .variables
            .iter()
            .filter(|v| v.role == VarRole::Output)
            .map(|v| (v.id.clone(), self.state.valuation[&v.id]))
            .collect();
        Ok(StableReport {
            situation: situation_map(self.model, &self.state.active),
            outputs,
            evolutions: records,
        })
    }

    /// The divergence-detection tuple: inputs are frozen within a run, so
    /// activity, non-input valuation and pending edges determine the rest
    /// of the run exactly.
    #[allow(clippy::type_complexity)]
    fn state_tuple(
        &self,
    ) -> (BTreeSet<StepId>, BTreeMap<VarId, Value>, BTreeMap<EventKey, EdgeDir>) {
        let non_inputs = self
            .model
            .variables
            .iter()
            .filter(|v| v.role != VarRole::Input)
            .map(|v| (v.id.clone(), self.state.valuation[&v.id]))
            .collect();
        (self.state.active.clone(), non_inputs, self.state.edge_context.clone())
    }

    fn evolve_once(&mut self, index: u64) -> Result<EvolutionRecord, RunError> {
        let mut ev = Evolution {
            model: self.model,
            snapshot_active: self.state.active.clone(),
            snapshot_valuation: self.state.valuation.clone(),
            edges: std::mem::take(&mut self.state.edge_context),
            pending: std::mem::take(&mut self.state.pending_activated),
            live: &mut self.state,
            rec: EvolutionRecord::new(index),
            demands: BTreeMap::new(),
            forcing_results: BTreeMap::new(),
            new_forced: BTreeSet::new(),
        };
        let outcome = ev.run(self.policy);
        let mut rec = ev.finish();
        match outcome {
            Ok(()) => {
                rec.stable = self.is_stable();
                self.state.stable = rec.stable;
                Ok(rec)
            }
            Err((kind, detail)) => {
                Err(RunError { kind, detail, partial_trace: vec![rec] })
            }
        }
    }

    /// No transition may clear under the live state with the pending edge
    /// context and the freshly emitted forced set.
    fn is_stable(&self) -> bool {
        let cx = EvalCtx {
            active: &self.state.active,
            valuation: &self.state.valuation,
            edges: &self.state.edge_context,
        };
        for pg in &self.model.partials {
            if self.state.forced.contains(&pg.id) {
                continue;
            }
            for t in &pg.transitions {
                if t.pre.iter().all(|s| self.state.active.contains(s))
                    && eval_bool(&t.condition, &cx)
                {
                    return false;
                }
            }
        }
        true
    }

    /// At stability an output driven by continuous actions is true exactly
    /// when some active step asserts it with a satisfied condition; outputs
    /// only ever written by stored actions keep their last value.
    fn compute_continuous_outputs(&mut self) {
        let empty = BTreeMap::new();
        let cx = EvalCtx {
            active: &self.state.active,
            valuation: &self.state.valuation,
            edges: &empty,
        };
        let mut computed: BTreeMap<VarId, bool> = BTreeMap::new();
        for (_, step) in self.model.steps() {
            for a in &step.actions {
                if a.kind != ActionKind::Continuous {
                    continue;
                }
                let entry = computed.entry(a.target.clone()).or_insert(false);
                if !self.state.active.contains(&step.id) {
                    continue;
                }
                let on = a.condition.as_ref().map_or(true, |c| eval_bool(c, &cx));
                *entry = *entry || on;
            }
        }
        for (var, on) in computed {
            self.state.valuation.insert(var, Value::Bool(on));
        }
    }
}

pub fn situation_map(
    model: &GrafcetModel,
    active: &BTreeSet<StepId>,
) -> BTreeMap<PartialId, BTreeSet<StepId>> {
    model
        .partials
        .iter()
        .map(|p| {
            let steps = p.steps.iter().map(|s| &s.id).filter(|s| active.contains(s));
            (p.id.clone(), steps.cloned().collect())
        })
        .collect()
}

type Fault = (RunErrorKind, String);

/// Working storage of one evolution. Reads come from the snapshot fields,
/// writes go to `live`; the record is filled in as effects happen and its
/// net `activated`/`deactivated` sets are computed at the end.
struct Evolution<'a, 'm> {
    model: &'m AnalyzedModel,
    snapshot_active: BTreeSet<StepId>,
    snapshot_valuation: BTreeMap<VarId, Value>,
    edges: BTreeMap<EventKey, EdgeDir>,
    pending: BTreeSet<StepId>,
    live: &'a mut EngineState,
    rec: EvolutionRecord,
    /// Hierarchy demands on step activity this evolution; a contradiction
    /// is a hierarchy conflict.
    demands: BTreeMap<StepId, bool>,
    /// First resolved forcing result per target; a different second result
    /// is a forcing conflict.
    forcing_results: BTreeMap<PartialId, BTreeSet<StepId>>,
    new_forced: BTreeSet<PartialId>,
}

impl<'m> Evolution<'_, 'm> {
    fn run(&mut self, policy: Policy) -> Result<(), Fault> {
        let model = self.model;
        for id in model.depth_order() {
            let pg = model.partial(id).expect("depth order lists known partials");
            let frozen = match policy.forcing_evaluation {
                EvolutionPolicy::Preemptive => self.new_forced.contains(&pg.id),
                EvolutionPolicy::TwoPhase => self.live.forced.contains(&pg.id),
            };
            self.structural(pg, frozen)?;
            if policy.forcing_evaluation == EvolutionPolicy::Preemptive {
                self.hierarchy_effects(pg)?;
            }
        }
        if policy.forcing_evaluation == EvolutionPolicy::TwoPhase {
            for id in model.depth_order() {
                let pg = model.partial(id).expect("depth order lists known partials");
                self.hierarchy_effects(pg)?;
            }
        }
        Ok(())
    }

    /// Seals the evolution: net activity diff into the record, next edge
    /// context and forced set into the live state.
    fn finish(mut self) -> EvolutionRecord {
        self.rec.activated =
            self.live.active.difference(&self.snapshot_active).cloned().collect();
        self.rec.deactivated =
            self.snapshot_active.difference(&self.live.active).cloned().collect();

        let mut next_edges = BTreeMap::new();
        for v in &self.model.variables {
            if v.role != VarRole::Internal || v.ty != VarType::Bool {
                continue;
            }
            let before = self.snapshot_valuation[&v.id];
            let after = self.live.valuation[&v.id];
            if before != after {
                let dir = if after == Value::Bool(true) {
                    EdgeDir::Rising
                } else {
                    EdgeDir::Falling
                };
                next_edges.insert(EventKey::Var(v.id.clone()), dir);
            }
        }
        for s in self.rec.activated.iter() {
            next_edges.insert(EventKey::Step(s.clone()), EdgeDir::Rising);
        }
        for s in self.rec.deactivated.iter() {
            next_edges.insert(EventKey::Step(s.clone()), EdgeDir::Falling);
        }
        self.live.edge_context = next_edges;
        self.live.forced = std::mem::take(&mut self.new_forced);
        self.live.stable = false;
        self.rec
    }

    fn snapshot_ctx(&self) -> EvalCtx<'_> {
        EvalCtx {
            active: &self.snapshot_active,
            valuation: &self.snapshot_valuation,
            edges: &self.edges,
        }
    }

    fn structural(&mut self, pg: &PartialGrafcet, frozen: bool) -> Result<(), Fault> {
        let mut to_act: BTreeSet<&StepId> = BTreeSet::new();
        let mut to_deact: BTreeSet<&StepId> = BTreeSet::new();
        if !frozen {
            let cx = EvalCtx {
                active: &self.snapshot_active,
                valuation: &self.snapshot_valuation,
                edges: &self.edges,
            };
            for t in &pg.transitions {
                let enabled = t.pre.iter().all(|s| self.snapshot_active.contains(s))
                    && !t.pre.iter().any(|s| self.rec.suppressed.contains(s));
                if enabled && eval_bool(&t.condition, &cx) {
                    self.rec.cleared.push(t.id.clone());
                    to_deact.extend(t.pre.iter());
                    to_act.extend(t.post.iter());
                }
            }
        }

        // Rule 5: simultaneous activation and deactivation keeps the step
        // active, with neither set of stored actions running.
        let kept: Vec<&StepId> = to_act.intersection(&to_deact).cloned().collect();
        self.rec.rule_five.extend(kept.iter().map(|s| (*s).clone()));

        let activated: Vec<StepId> = to_act
            .difference(&to_deact)
            .filter(|s| !self.snapshot_active.contains(**s))
            .map(|s| (*s).clone())
            .collect();
        let deactivated: Vec<StepId> =
            to_deact.difference(&to_act).map(|s| (*s).clone()).collect();
        for s in &deactivated {
            self.live.active.remove(s);
        }
        for s in to_act.difference(&to_deact) {
            self.live.active.insert((*s).clone());
        }

        // Stored actions; every right-hand side and event condition reads
        // the snapshot plus the edge context.
        for step in &pg.steps {
            let ran_activation = activated.contains(&step.id) || self.pending.contains(&step.id);
            let ran_deactivation = deactivated.contains(&step.id);
            let event_ok = self.snapshot_active.contains(&step.id)
                && !self.rec.suppressed.contains(&step.id);
            for a in &step.actions {
                match a.kind {
                    ActionKind::StoredOnActivation if ran_activation => self.write(a)?,
                    ActionKind::StoredOnDeactivation if ran_deactivation => self.write(a)?,
                    ActionKind::StoredOnEvent if event_ok => {
                        let cond =
                            a.condition.as_ref().expect("event actions carry a condition");
                        if eval_bool(cond, &self.snapshot_ctx()) {
                            self.write(a)?;
                        }
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Emits this partial Grafcet's hierarchy effects from its live-active
    /// steps, in declaration order: forcing orders first, then the
    /// enclosure consequence of a net activity change of an enclosing step.
    fn hierarchy_effects(&mut self, pg: &PartialGrafcet) -> Result<(), Fault> {
        let model = self.model;
        for step in &pg.steps {
            let live_active = self.live.active.contains(&step.id);
            if live_active {
                for order in &step.forcings {
                    self.apply_forcing(step, order)?;
                }
            }
            if step.encloses.is_empty() {
                continue;
            }
            let was = self.snapshot_active.contains(&step.id);
            if live_active && !was {
                for enclosed in &step.encloses {
                    let target = model.partial(enclosed).expect("enclosures are resolved");
                    for s in target.steps.iter().filter(|s| s.activation_link) {
                        self.demand(&s.id, true)?;
                        if self.live.active.insert(s.id.clone()) {
                            self.activation_actions(s)?;
                        }
                    }
                }
            } else if was && !live_active {
                for enclosed in &step.encloses {
                    let target = model.partial(enclosed).expect("enclosures are resolved");
                    for s in &target.steps {
                        self.demand(&s.id, false)?;
                        if self.live.active.remove(&s.id) {
                            self.rec.suppressed.insert(s.id.clone());
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn apply_forcing(&mut self, owner: &Step, order: &ForcingOrder) -> Result<(), Fault> {
        let model = self.model;
        let target = model.partial(&order.target).expect("forcing targets are resolved");
        let result: BTreeSet<StepId> = match &order.spec {
            SituationSpec::Explicit(steps) => steps.iter().cloned().collect(),
            SituationSpec::Current => target
                .steps
                .iter()
                .filter(|s| self.live.active.contains(&s.id))
                .map(|s| s.id.clone())
                .collect(),
            SituationSpec::Empty => BTreeSet::new(),
            SituationSpec::Init => target
                .steps
                .iter()
                .filter(|s| s.kind == StepKind::Initial)
                .map(|s| s.id.clone())
                .collect(),
        };
        if let Some(first) = self.forcing_results.get(&target.id) {
            if *first != result {
                return Err((
                    RunErrorKind::ForcingConflict,
                    format!(
                        "partial Grafcet `{}` forced to {} and {} in one evolution",
                        target.id,
                        braces(first),
                        braces(&result)
                    ),
                ));
            }
        } else {
            self.forcing_results.insert(target.id.clone(), result.clone());
        }
        self.rec.forcings.push(ForcingApplication {
            owner: owner.id.clone(),
            target: target.id.clone(),
            spec: order.spec.clone(),
            result: result.clone(),
        });
        self.new_forced.insert(target.id.clone());

        for s in &target.steps {
            let want = result.contains(&s.id);
            self.demand(&s.id, want)?;
            let is = self.live.active.contains(&s.id);
            if want && !is {
                self.live.active.insert(s.id.clone());
                self.activation_actions(s)?;
            } else if !want && is {
                self.live.active.remove(&s.id);
                self.rec.suppressed.insert(s.id.clone());
            }
        }
        Ok(())
    }

    fn demand(&mut self, step: &StepId, want: bool) -> Result<(), Fault> {
        match self.demands.get(step) {
            Some(prev) if *prev != want => Err((
                RunErrorKind::HierarchyConflict,
                format!(
                    "step `{step}` is demanded both active and inactive by hierarchy \
                     effects in one evolution"
                ),
            )),
            Some(_) => Ok(()),
            None => {
                self.demands.insert(step.clone(), want);
                Ok(())
            }
        }
    }

    /// Activation actions of a hierarchy-activated step.
    fn activation_actions(&mut self, step: &Step) -> Result<(), Fault> {
        for a in &step.actions {
            if a.kind == ActionKind::StoredOnActivation {
                self.write(a)?;
            }
        }
        Ok(())
    }

    fn write(&mut self, action: &Action) -> Result<(), Fault> {
        let value = eval(&action.value, &self.snapshot_ctx());
        if let Some(prev) = self.rec.writes.get(&action.target) {
            if *prev != value {
                return Err((
                    RunErrorKind::WriteConflict,
                    format!(
                        "variable `{}` written with both {prev} and {value} in one evolution",
                        action.target
                    ),
                ));
            }
        } else {
            self.rec.writes.insert(action.target.clone(), value);
        }
        self.live.valuation.insert(action.target.clone(), value);
        Ok(())
    }
}

fn braces(steps: &BTreeSet<StepId>) -> String {
    let ids: Vec<&str> = steps.iter().map(|s| s.as_str()).collect();
    format!("{{{}}}", ids.join(","))
}

/// Where two policies first behave differently on the same event sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Divergence {
    /// 0 for the initialization run, k for event k.
    pub at_event: usize,
    /// The first differing evolution within that run, if both runs got that
    /// far; `None` when one run failed outright where the other succeeded.
    pub at_evolution: Option<u64>,
    pub detail: String,
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.at_evolution {
            Some(i) => write!(f, "at event {}, evolution {}: {}", self.at_event, i, self.detail),
            None => write!(f, "at event {}: {}", self.at_event, self.detail),
        }
    }
}

/// Runs the same event sequence under the preemptive and two-phase policies
/// and reports the first divergence, comparing evolution records (not just
/// stable outcomes) so purely internal differences count. `None` means the
/// two policies are equivalent on this sequence. Runs stop at the first
/// error; equal error kinds at the same point still count as equivalent.
pub fn compare_policies(
    model: &AnalyzedModel,
    max_evolutions: u64,
    events: &[BTreeMap<VarId, Value>],
) -> Option<Divergence> {
    let mut a = Engine::new(model, Policy::preemptive().with_max_evolutions(max_evolutions));
    let mut b = Engine::new(model, Policy::two_phase().with_max_evolutions(max_evolutions));

    if let ControlFlow::Stop(d) = compare_runs(0, a.initialize(), b.initialize()) {
        return d;
    }
    for (i, event) in events.iter().enumerate() {
        let outcome =
            compare_runs(i + 1, a.apply_input_event(event), b.apply_input_event(event));
        if let ControlFlow::Stop(d) = outcome {
            return d;
        }
    }
    None
}

enum ControlFlow {
    Continue,
    /// Comparison cannot meaningfully continue; the payload is the verdict.
    Stop(Option<Divergence>),
}

fn compare_runs(
    at_event: usize,
    a: Result<StableReport, RunError>,
    b: Result<StableReport, RunError>,
) -> ControlFlow {
    {
        let (trace_a, trace_b) = (run_trace(&a), run_trace(&b));
        for (i, (ra, rb)) in trace_a.iter().zip(trace_b.iter()).enumerate() {
            if ra != rb {
                return ControlFlow::Stop(Some(Divergence {
                    at_event,
                    at_evolution: Some(i as u64 + 1),
                    detail: record_difference(ra, rb),
                }));
            }
        }
        if trace_a.len() != trace_b.len() {
            // Equal common prefix but different run lengths: the first
            // extra evolution is the divergence.
            let i = trace_a.len().min(trace_b.len()) as u64 + 1;
            return ControlFlow::Stop(Some(Divergence {
                at_event,
                at_evolution: Some(i),
                detail: format!(
                    "run lengths differ: {} vs {} evolutions",
                    trace_a.len(),
                    trace_b.len()
                ),
            }));
        }
    }
    match (a, b) {
        (Ok(ra), Ok(rb)) => {
            debug_assert_eq!(ra.situation, rb.situation, "equal traces, equal situations");
            debug_assert_eq!(ra.outputs, rb.outputs, "equal traces, equal outputs");
            ControlFlow::Continue
        }
        (Err(ea), Err(eb)) => {
            if ea.kind == eb.kind {
                // Both runs fail identically; state is poisoned, stop here.
                ControlFlow::Stop(None)
            } else {
                ControlFlow::Stop(Some(Divergence {
                    at_event,
                    at_evolution: None,
                    detail: format!("error kinds differ: {} vs {}", ea.kind, eb.kind),
                }))
            }
        }
        (Ok(_), Err(e)) => ControlFlow::Stop(Some(Divergence {
            at_event,
            at_evolution: None,
            detail: format!("only the two-phase run fails: {}", e.kind),
        })),
        (Err(e), Ok(_)) => ControlFlow::Stop(Some(Divergence {
            at_event,
            at_evolution: None,
            detail: format!("only the preemptive run fails: {}", e.kind),
        })),
    }
}

fn run_trace(outcome: &Result<StableReport, RunError>) -> &[EvolutionRecord] {
    match outcome {
        Ok(r) => &r.evolutions,
        Err(e) => &e.partial_trace,
    }
}

fn record_difference(a: &EvolutionRecord, b: &EvolutionRecord) -> String {
    fn fmt_list<T: std::fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
        let v: Vec<String> = items.into_iter().map(|x| x.to_string()).collect();
        format!("[{}]", v.join(","))
    }
    if a.cleared != b.cleared {
        format!(
            "cleared transitions differ: {} vs {}",
            fmt_list(&a.cleared),
            fmt_list(&b.cleared)
        )
    } else if a.writes != b.writes {
        let keys: BTreeSet<&VarId> = a
            .writes
            .keys()
            .chain(b.writes.keys())
            .filter(|k| a.writes.get(*k) != b.writes.get(*k))
            .collect();
        format!("writes differ on {}", fmt_list(keys))
    } else if a.activated != b.activated || a.deactivated != b.deactivated {
        "net step changes differ".to_string()
    } else if a.suppressed != b.suppressed {
        format!(
            "suppressed deactivations differ: {} vs {}",
            fmt_list(&a.suppressed),
            fmt_list(&b.suppressed)
        )
    } else if a.forcings != b.forcings {
        "forcing applications differ".to_string()
    } else if a.rule_five != b.rule_five {
        "rule-5 step sets differ".to_string()
    } else {
        "stability differs".to_string()
    }
}

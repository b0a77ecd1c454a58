//! Structural model of a Grafcet specification: partial Grafcets, steps,
//! transitions, actions, forcing orders, variable declarations and macro
//! expansion charts. All other modules operate on these types.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::diag::SourceSpan;
use crate::expr::{Expr, ExprType, Value};
use crate::ids::{PartialId, StepId, TransitionId, VarId};
use crate::state::EngineState;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarRole {
    Input,
    Output,
    Internal,
}

impl fmt::Display for VarRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VarRole::Input => "input",
            VarRole::Output => "output",
            VarRole::Internal => "internal",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarType {
    Bool,
    Int,
}

impl VarType {
    pub fn expr_type(self) -> ExprType {
        match self {
            VarType::Bool => ExprType::Bool,
            VarType::Int => ExprType::Int,
        }
    }

    /// Default initial value when a declaration carries none.
    pub fn default_value(self) -> Value {
        match self {
            VarType::Bool => Value::Bool(false),
            VarType::Int => Value::Int(0),
        }
    }
}

impl fmt::Display for VarType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VarType::Bool => "bool",
            VarType::Int => "int",
        })
    }
}

#[derive(Clone, Debug)]
pub struct VariableDecl {
    pub id: VarId,
    pub role: VarRole,
    pub ty: VarType,
    pub initial: Value,
    pub span: SourceSpan,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepKind {
    Normal,
    Initial,
    Enclosing,
    Macro,
    /// Entry step of an expansion chart (id starts with `E`).
    Entry,
    /// Exit step of an expansion chart (id starts with `S`).
    Exit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActionKind {
    Continuous,
    StoredOnActivation,
    StoredOnDeactivation,
    StoredOnEvent,
}

/// An action attached to a step. For stored kinds `value` is the assignment
/// right-hand side; a continuous action asserts the boolean output `target`
/// while the step is active and `condition` (if any) holds, and its `value`
/// is a constant `true` placeholder.
#[derive(Clone, Debug)]
pub struct Action {
    pub kind: ActionKind,
    pub condition: Option<Expr>,
    pub target: VarId,
    pub value: Expr,
    pub span: SourceSpan,
}

/// The situation a forcing order imposes on its target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SituationSpec {
    /// `{21,22}` — exactly these steps. `{}` parses as `Empty`.
    Explicit(Vec<StepId>),
    /// `{*}` — freeze the target in its current situation.
    Current,
    /// `{}` — deactivate every step of the target.
    Empty,
    /// `{INIT}` — the target's initial situation.
    Init,
}

impl fmt::Display for SituationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SituationSpec::Explicit(steps) => {
                let ids: Vec<&str> = steps.iter().map(|s| s.as_str()).collect();
                write!(f, "{{{}}}", ids.join(","))
            }
            SituationSpec::Current => f.write_str("{*}"),
            SituationSpec::Empty => f.write_str("{}"),
            SituationSpec::Init => f.write_str("{INIT}"),
        }
    }
}

impl serde::Serialize for SituationSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Clone, Debug)]
pub struct ForcingOrder {
    pub owner: StepId,
    pub target: PartialId,
    pub spec: SituationSpec,
    pub span: SourceSpan,
}

#[derive(Clone, Debug)]
pub struct Step {
    pub id: StepId,
    pub kind: StepKind,
    pub actions: Vec<Action>,
    /// Asterisk marking: activated when the enclosing step of this step's
    /// partial Grafcet activates.
    pub activation_link: bool,
    /// Partial Grafcets enclosed by this step (kind = Enclosing only).
    pub encloses: Vec<PartialId>,
    pub forcings: Vec<ForcingOrder>,
    pub span: SourceSpan,
}

impl Step {
    pub fn new(id: impl Into<StepId>, kind: StepKind) -> Self {
        Self {
            id: id.into(),
            kind,
            actions: Vec::new(),
            activation_link: false,
            encloses: Vec::new(),
            forcings: Vec::new(),
            span: SourceSpan::synthetic(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Transition {
    pub id: TransitionId,
    pub pre: Vec<StepId>,
    pub post: Vec<StepId>,
    pub condition: Expr,
    pub span: SourceSpan,
}

#[derive(Clone, Debug)]
pub struct PartialGrafcet {
    pub id: PartialId,
    pub steps: Vec<Step>,
    pub transitions: Vec<Transition>,
    /// The unique enclosing step controlling this partial Grafcet, derived
    /// from `encloses` lists at parse time.
    pub enclosed_by: Option<StepId>,
    pub span: SourceSpan,
}

impl PartialGrafcet {
    pub fn new(id: impl Into<PartialId>) -> Self {
        Self {
            id: id.into(),
            steps: Vec::new(),
            transitions: Vec::new(),
            enclosed_by: None,
            span: SourceSpan::synthetic(),
        }
    }

    pub fn step(&self, id: &StepId) -> Option<&Step> {
        self.steps.iter().find(|s| &s.id == id)
    }

    pub fn step_ids(&self) -> impl Iterator<Item = &StepId> {
        self.steps.iter().map(|s| &s.id)
    }

    pub fn initial_steps(&self) -> impl Iterator<Item = &Step> {
        self.steps.iter().filter(|s| s.kind == StepKind::Initial)
    }
}

/// A macro step's expansion chart. `of_macro` names the macro step the chart
/// substitutes; entry/exit steps are classified by their E/S id prefix.
#[derive(Clone, Debug)]
pub struct Expansion {
    pub of_macro: StepId,
    pub steps: Vec<Step>,
    pub transitions: Vec<Transition>,
    pub span: SourceSpan,
}

#[derive(Clone, Debug)]
pub struct GrafcetModel {
    pub name: String,
    pub variables: Vec<VariableDecl>,
    pub partials: Vec<PartialGrafcet>,
    /// Expansion charts not yet substituted; emptied by macro expansion.
    pub expansions: Vec<Expansion>,
    /// Hierarchical depth per partial Grafcet; filled by the analyzer.
    pub depth_of: BTreeMap<PartialId, u32>,
}

impl GrafcetModel {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            variables: Vec::new(),
            partials: Vec::new(),
            expansions: Vec::new(),
            depth_of: BTreeMap::new(),
        }
    }

    pub fn partial(&self, id: &PartialId) -> Option<&PartialGrafcet> {
        self.partials.iter().find(|p| &p.id == id)
    }

    pub fn variable(&self, id: &VarId) -> Option<&VariableDecl> {
        self.variables.iter().find(|v| &v.id == id)
    }

    /// All steps of all partial Grafcets (not expansion charts), with their
    /// owning partial.
    pub fn steps(&self) -> impl Iterator<Item = (&PartialGrafcet, &Step)> {
        self.partials.iter().flat_map(|p| p.steps.iter().map(move |s| (p, s)))
    }

    pub fn find_step(&self, id: &StepId) -> Option<(&PartialGrafcet, &Step)> {
        self.steps().find(|(_, s)| &s.id == id)
    }

    pub fn transitions(&self) -> impl Iterator<Item = (&PartialGrafcet, &Transition)> {
        self.partials.iter().flat_map(|p| p.transitions.iter().map(move |t| (p, t)))
    }

    /// The initial situation: every step declared initial, model-wide.
    pub fn initial_steps(&self) -> BTreeSet<StepId> {
        self.steps()
            .filter(|(_, s)| s.kind == StepKind::Initial)
            .map(|(_, s)| s.id.clone())
            .collect()
    }

    /// Initial valuation: declared initial values (or the per-type default).
    pub fn initial_valuation(&self) -> BTreeMap<VarId, Value> {
        self.variables.iter().map(|v| (v.id.clone(), v.initial)).collect()
    }

    /// Declared boolean input variables, in declaration order.
    pub fn bool_inputs(&self) -> impl Iterator<Item = &VariableDecl> {
        self.variables
            .iter()
            .filter(|v| v.role == VarRole::Input && v.ty == VarType::Bool)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("unknown partial Grafcet `{0}`")]
    UnknownPartialGrafcet(PartialId),
    #[error("unknown step `{0}`")]
    UnknownStep(StepId),
    #[error("unknown variable `{0}`")]
    UnknownVariable(VarId),
}

/// Renders the situation of one partial Grafcet in set notation, step ids
/// in ascending natural order: `G1{2,12}`, or `G2{}` when empty.
pub fn situation_of(
    model: &GrafcetModel,
    state: &EngineState,
    partial: &PartialId,
) -> Result<String, ModelError> {
    let pg = model
        .partial(partial)
        .ok_or_else(|| ModelError::UnknownPartialGrafcet(partial.clone()))?;
    let mut active: Vec<&StepId> = pg.step_ids().filter(|s| state.active.contains(s)).collect();
    active.sort();
    let ids: Vec<&str> = active.iter().map(|s| s.as_str()).collect();
    Ok(format!("{}{{{}}}", pg.id, ids.join(",")))
}

/// Current value of the step activity variable `X<step>`.
pub fn step_activity(
    model: &GrafcetModel,
    state: &EngineState,
    step: &StepId,
) -> Result<bool, ModelError> {
    if model.find_step(step).is_none() {
        return Err(ModelError::UnknownStep(step.clone()));
    }
    Ok(state.active.contains(step))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_partial_model() -> GrafcetModel {
        let mut m = GrafcetModel::new("t");
        let mut g1 = PartialGrafcet::new("G1");
        g1.steps.push(Step::new("1", StepKind::Initial));
        g1.steps.push(Step::new("2", StepKind::Normal));
        g1.steps.push(Step::new("12", StepKind::Normal));
        let mut g2 = PartialGrafcet::new("G2");
        g2.steps.push(Step::new("21", StepKind::Normal));
        m.partials.push(g1);
        m.partials.push(g2);
        m
    }

    fn state_with(active: &[&str]) -> EngineState {
        let mut st = EngineState::default();
        st.active = active.iter().map(|s| StepId::from(*s)).collect();
        st
    }

    #[test]
    fn situation_notation_sorts_numerically_and_renders_empty_sets() {
        let m = two_partial_model();
        let st = state_with(&["12", "2"]);
        assert_eq!(situation_of(&m, &st, &PartialId::from("G1")).unwrap(), "G1{2,12}");
        assert_eq!(situation_of(&m, &st, &PartialId::from("G2")).unwrap(), "G2{}");
        assert_eq!(
            situation_of(&m, &st, &PartialId::from("G9")),
            Err(ModelError::UnknownPartialGrafcet(PartialId::from("G9")))
        );
    }

    #[test]
    fn step_activity_reflects_the_active_set() {
        let m = two_partial_model();
        let st = state_with(&["2"]);
        assert!(step_activity(&m, &st, &StepId::from("2")).unwrap());
        assert!(!step_activity(&m, &st, &StepId::from("1")).unwrap());
        assert_eq!(
            step_activity(&m, &st, &StepId::from("99")),
            Err(ModelError::UnknownStep(StepId::from("99")))
        );
    }
}

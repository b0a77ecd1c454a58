//! Static analysis: macro-step expansion, the forcing/enclosing hierarchy
//! with its depth order, and the well-formedness checks the runtime relies
//! on. [`analyze`] chains the three and hands out an [`AnalyzedModel`],
//! which is the only thing the engine, oracle and explorer accept.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Deref;

use serde::Serialize;
use thiserror::Error;

use crate::diag::{has_errors, Diagnostic, Severity};
use crate::expr::VarRef;
use crate::ids::{PartialId, StepId, TransitionId, VarId};
use crate::model::{
    ActionKind, Expansion, GrafcetModel, Step, StepKind, Transition, VarRole,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExpansionError {
    #[error("macro step `{0}` has no expansion chart")]
    MissingExpansion(StepId),
    #[error("recursive macro expansion: {}", join_steps(.0))]
    RecursiveMacro(Vec<StepId>),
    #[error("expansion chart of `{0}`: {1}")]
    EntryExitViolation(StepId, String),
    #[error("expansion chart of `{0}`: transition `{1}` has an empty from/to list")]
    SourceSinkInExpansion(StepId, TransitionId),
    #[error("expansion chart `{0}` matches no macro step")]
    UnusedExpansion(StepId),
}

fn join_steps(steps: &[StepId]) -> String {
    steps.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(" -> ")
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HierarchyError {
    #[error("hierarchy cycle: {}", join_partials(.0))]
    HierarchyCycle(Vec<PartialId>),
    #[error("step `{step}` forces its own partial Grafcet `{partial}`")]
    SelfForce { step: StepId, partial: PartialId },
}

fn join_partials(pgs: &[PartialId]) -> String {
    pgs.iter().map(|p| p.as_str()).collect::<Vec<_>>().join(" -> ")
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Expansion(#[from] ExpansionError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error("{}", format_validation(.0))]
    Validation(Vec<Diagnostic>),
}

fn format_validation(diags: &[Diagnostic]) -> String {
    let errors = diags.iter().filter(|d| d.severity == Severity::Error).count();
    let mut msg = format!("validation failed with {errors} error(s)");
    for d in diags.iter().filter(|d| d.severity == Severity::Error) {
        msg.push('\n');
        msg.push_str(&d.to_string());
    }
    msg
}

/// Why one partial Grafcet sits above another.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeReason {
    Forcing,
    Enclosing,
}

impl fmt::Display for EdgeReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeReason::Forcing => "forcing",
            EdgeReason::Enclosing => "enclosing",
        })
    }
}

/// The strict partial order between partial Grafcets: an edge `(A, B)`
/// means A is hierarchically superior to B.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct HierarchyGraph {
    pub nodes: BTreeSet<PartialId>,
    pub edges: BTreeSet<(PartialId, PartialId, EdgeReason)>,
}

// ---------------------------------------------------------------------------
// Macro expansion
// ---------------------------------------------------------------------------

#[derive(Clone)]
struct Chart {
    steps: Vec<Step>,
    transitions: Vec<Transition>,
}

/// Replaces every macro step by its expansion chart, innermost first.
/// Ids from a chart get the macro step's id plus a dot as prefix, so the
/// result keeps global uniqueness and reparses. Idempotent.
pub fn expand_macros(model: &GrafcetModel) -> Result<GrafcetModel, ExpansionError> {
    expand_macros_with_warnings(model).map(|(m, _)| m)
}

pub(crate) fn expand_macros_with_warnings(
    model: &GrafcetModel,
) -> Result<(GrafcetModel, Vec<Diagnostic>), ExpansionError> {
    let mut out = model.clone();
    let charts: BTreeMap<StepId, Expansion> =
        out.expansions.drain(..).map(|e| (e.of_macro.clone(), e)).collect();
    let mut warnings = Vec::new();
    let mut memo: BTreeMap<StepId, Chart> = BTreeMap::new();
    let mut used: BTreeSet<StepId> = BTreeSet::new();

    for pg in &mut out.partials {
        let mut chart = Chart {
            steps: std::mem::take(&mut pg.steps),
            transitions: std::mem::take(&mut pg.transitions),
        };
        splice_macros(&mut chart, &charts, &mut Vec::new(), &mut memo, &mut used, &mut warnings)?;
        pg.steps = chart.steps;
        pg.transitions = chart.transitions;
    }

    if let Some(unused) = charts.keys().find(|id| !used.contains(*id)) {
        return Err(ExpansionError::UnusedExpansion(unused.clone()));
    }

    // Enclosing steps that lived inside charts now carry prefixed ids, so
    // the enclosed-by back references are re-derived from scratch.
    let mut owner_of: BTreeMap<PartialId, StepId> = BTreeMap::new();
    for pg in &out.partials {
        for s in &pg.steps {
            for target in &s.encloses {
                owner_of.entry(target.clone()).or_insert_with(|| s.id.clone());
            }
        }
    }
    for pg in &mut out.partials {
        pg.enclosed_by = owner_of.get(&pg.id).cloned();
    }

    Ok((out, warnings))
}

/// Fully expands the chart of `macro_id` (recursing into nested macros),
/// with its own entry/exit markers still in place.
fn expanded_chart(
    macro_id: &StepId,
    charts: &BTreeMap<StepId, Expansion>,
    stack: &mut Vec<StepId>,
    memo: &mut BTreeMap<StepId, Chart>,
    used: &mut BTreeSet<StepId>,
    warnings: &mut Vec<Diagnostic>,
) -> Result<Chart, ExpansionError> {
    used.insert(macro_id.clone());
    if let Some(c) = memo.get(macro_id) {
        return Ok(c.clone());
    }
    if let Some(at) = stack.iter().position(|s| s == macro_id) {
        let mut cycle: Vec<StepId> = stack[at..].to_vec();
        cycle.push(macro_id.clone());
        return Err(ExpansionError::RecursiveMacro(cycle));
    }
    let expansion = charts
        .get(macro_id)
        .ok_or_else(|| ExpansionError::MissingExpansion(macro_id.clone()))?;

    let entries = expansion.steps.iter().filter(|s| s.kind == StepKind::Entry).count();
    if entries != 1 {
        return Err(ExpansionError::EntryExitViolation(
            macro_id.clone(),
            format!("expected exactly one entry step, found {entries}"),
        ));
    }
    if !expansion.steps.iter().any(|s| s.kind == StepKind::Exit) {
        return Err(ExpansionError::EntryExitViolation(
            macro_id.clone(),
            "expected at least one exit step".to_owned(),
        ));
    }
    for t in &expansion.transitions {
        if t.pre.is_empty() || t.post.is_empty() {
            return Err(ExpansionError::SourceSinkInExpansion(macro_id.clone(), t.id.clone()));
        }
        let exits: BTreeSet<&StepId> = expansion
            .steps
            .iter()
            .filter(|s| s.kind == StepKind::Exit)
            .map(|s| &s.id)
            .collect();
        let hits = t.post.iter().filter(|s| exits.contains(s)).count();
        if hits > 0 && hits < t.post.len() {
            warnings.push(Diagnostic::warning(
                format!(
                    "expansion of `{macro_id}`: transition `{}` activates steps parallel \
                     to an exit step; they stay active after the macro step terminates",
                    t.id
                ),
                t.span.clone(),
            ));
        }
    }

    let mut chart =
        Chart { steps: expansion.steps.clone(), transitions: expansion.transitions.clone() };
    stack.push(macro_id.clone());
    let inner = splice_macros(&mut chart, charts, stack, memo, used, warnings);
    stack.pop();
    inner?;
    memo.insert(macro_id.clone(), chart.clone());
    Ok(chart)
}

/// Replaces the macro steps of `chart` in place by their (recursively
/// expanded) charts, prefixing spliced ids with `<macro id>.`.
fn splice_macros(
    chart: &mut Chart,
    charts: &BTreeMap<StepId, Expansion>,
    stack: &mut Vec<StepId>,
    memo: &mut BTreeMap<StepId, Chart>,
    used: &mut BTreeSet<StepId>,
    warnings: &mut Vec<Diagnostic>,
) -> Result<(), ExpansionError> {
    let macro_ids: Vec<StepId> =
        chart.steps.iter().filter(|s| s.kind == StepKind::Macro).map(|s| s.id.clone()).collect();
    for mid in macro_ids {
        if mid.as_str().starts_with('E') || mid.as_str().starts_with('S') {
            return Err(ExpansionError::EntryExitViolation(
                mid.clone(),
                "a macro step cannot serve as entry or exit step".to_owned(),
            ));
        }
        let mut sub = expanded_chart(&mid, charts, stack, memo, used, warnings)?;

        let prefix = format!("{mid}.");
        let local: BTreeSet<StepId> = sub.steps.iter().map(|s| s.id.clone()).collect();
        let rename =
            |id: &StepId| -> StepId { StepId::new(format!("{prefix}{id}")) };
        let mut entry = None;
        let mut exits = Vec::new();
        for s in &mut sub.steps {
            match s.kind {
                StepKind::Entry => entry = Some(rename(&s.id)),
                StepKind::Exit => exits.push(rename(&s.id)),
                _ => {}
            }
            s.kind = match s.kind {
                StepKind::Entry | StepKind::Exit => StepKind::Normal,
                k => k,
            };
            s.id = rename(&s.id);
            for f in &mut s.forcings {
                f.owner = s.id.clone();
            }
            for a in &mut s.actions {
                rename_expr_steps(&mut a.value, &local, &prefix);
                if let Some(c) = &mut a.condition {
                    rename_expr_steps(c, &local, &prefix);
                }
            }
        }
        for t in &mut sub.transitions {
            t.id = TransitionId::new(format!("{prefix}{}", t.id));
            for s in t.pre.iter_mut().chain(t.post.iter_mut()) {
                *s = rename(s);
            }
            rename_expr_steps(&mut t.condition, &local, &prefix);
        }
        let entry = entry.expect("entry step count was checked");

        // Rewire the surrounding transitions: incoming ones lead to the
        // entry step, outgoing ones leave from all exit steps.
        for t in &mut chart.transitions {
            if let Some(i) = t.post.iter().position(|s| *s == mid) {
                t.post[i] = entry.clone();
            }
            if let Some(i) = t.pre.iter().position(|s| *s == mid) {
                t.pre.splice(i..=i, exits.iter().cloned());
            }
        }
        chart.steps.retain(|s| s.id != mid);
        chart.steps.extend(sub.steps);
        chart.transitions.extend(sub.transitions);
    }
    Ok(())
}

fn rename_expr_steps(e: &mut crate::expr::Expr, local: &BTreeSet<StepId>, prefix: &str) {
    e.visit_reads_mut(&mut |r| {
        if let VarRef::StepActivity(s) = r {
            if local.contains(s) {
                *s = StepId::new(format!("{prefix}{s}"));
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Hierarchy
// ---------------------------------------------------------------------------

/// Builds the hierarchy graph of a macro-expanded model and the depth of
/// each partial Grafcet (longest edge path from a root; roots are depth 0).
pub fn compute_hierarchy(
    model: &GrafcetModel,
) -> Result<(HierarchyGraph, BTreeMap<PartialId, u32>), HierarchyError> {
    let mut graph = HierarchyGraph::default();
    for pg in &model.partials {
        graph.nodes.insert(pg.id.clone());
    }
    for pg in &model.partials {
        for s in &pg.steps {
            for f in &s.forcings {
                if f.target == pg.id {
                    return Err(HierarchyError::SelfForce {
                        step: s.id.clone(),
                        partial: pg.id.clone(),
                    });
                }
                graph.edges.insert((pg.id.clone(), f.target.clone(), EdgeReason::Forcing));
            }
            for enclosed in &s.encloses {
                graph.edges.insert((pg.id.clone(), enclosed.clone(), EdgeReason::Enclosing));
            }
        }
    }

    let mut succs: BTreeMap<&PartialId, BTreeSet<&PartialId>> = BTreeMap::new();
    for (a, b, _) in &graph.edges {
        succs.entry(a).or_default().insert(b);
    }

    if let Some(cycle) = find_cycle(&graph.nodes, &succs) {
        return Err(HierarchyError::HierarchyCycle(cycle));
    }

    let mut preds: BTreeMap<&PartialId, BTreeSet<&PartialId>> = BTreeMap::new();
    for (a, b, _) in &graph.edges {
        preds.entry(b).or_default().insert(a);
    }
    fn depth_of<'a>(
        n: &'a PartialId,
        preds: &BTreeMap<&'a PartialId, BTreeSet<&'a PartialId>>,
        memo: &mut BTreeMap<&'a PartialId, u32>,
    ) -> u32 {
        if let Some(d) = memo.get(n) {
            return *d;
        }
        let d = preds
            .get(n)
            .map(|ps| ps.iter().map(|p| depth_of(p, preds, memo) + 1).max().unwrap_or(0))
            .unwrap_or(0);
        memo.insert(n, d);
        d
    }
    let mut memo = BTreeMap::new();
    let depths =
        graph.nodes.iter().map(|n| (n.clone(), depth_of(n, &preds, &mut memo))).collect();
    Ok((graph, depths))
}

fn find_cycle(
    nodes: &BTreeSet<PartialId>,
    succs: &BTreeMap<&PartialId, BTreeSet<&PartialId>>,
) -> Option<Vec<PartialId>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Color {
        White,
        Grey,
        Black,
    }
    fn dfs<'a>(
        n: &'a PartialId,
        succs: &BTreeMap<&'a PartialId, BTreeSet<&'a PartialId>>,
        color: &mut BTreeMap<&'a PartialId, Color>,
        path: &mut Vec<&'a PartialId>,
    ) -> Option<Vec<PartialId>> {
        color.insert(n, Color::Grey);
        path.push(n);
        for next in succs.get(n).into_iter().flatten() {
            match color.get(next).copied().unwrap_or(Color::White) {
                Color::Grey => {
                    let at = path.iter().position(|p| *p == *next).expect("grey node on path");
                    let mut cycle: Vec<PartialId> =
                        path[at..].iter().map(|p| (*p).clone()).collect();
                    cycle.push((*next).clone());
                    return Some(cycle);
                }
                Color::White => {
                    if let Some(c) = dfs(next, succs, color, path) {
                        return Some(c);
                    }
                }
                Color::Black => {}
            }
        }
        path.pop();
        color.insert(n, Color::Black);
        None
    }
    let mut color = BTreeMap::new();
    for n in nodes {
        if color.get(&n).copied().unwrap_or(Color::White) == Color::White {
            if let Some(c) = dfs(n, succs, &mut color, &mut Vec::new()) {
                return Some(c);
            }
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Well-formedness diagnostics for a macro-expanded model. Errors block
/// execution; warnings do not.
pub fn validate(model: &GrafcetModel) -> Vec<Diagnostic> {
    let mut diags = Vec::new();

    for pg in &model.partials {
        for s in &pg.steps {
            if s.kind == StepKind::Macro {
                diags.push(Diagnostic::error(
                    format!("macro step `{}` is not expanded; expand the model first", s.id),
                    s.span.clone(),
                ));
            }
        }
    }

    for pg in &model.partials {
        let is_enclosed = pg.enclosed_by.is_some();
        if is_enclosed {
            for t in &pg.transitions {
                if t.pre.is_empty() || t.post.is_empty() {
                    diags.push(Diagnostic::error(
                        format!(
                            "enclosed partial Grafcet `{}` contains source/sink transition `{}`",
                            pg.id, t.id
                        ),
                        t.span.clone(),
                    ));
                }
            }
            if !pg.steps.iter().any(|s| s.activation_link) {
                diags.push(Diagnostic::error(
                    format!(
                        "enclosed partial Grafcet `{}` has no activation-link step, so enclosure \
                         could never activate it",
                        pg.id
                    ),
                    pg.span.clone(),
                ));
            }
            for s in pg.steps.iter().filter(|s| s.kind == StepKind::Initial) {
                diags.push(Diagnostic::warning(
                    format!(
                        "initial step `{}` inside enclosed partial Grafcet `{}` is active while \
                         its enclosing step is not",
                        s.id, pg.id
                    ),
                    s.span.clone(),
                ));
            }
        }
        if let Some(owner) = &pg.enclosed_by {
            let listed = model
                .find_step(owner)
                .is_some_and(|(_, s)| s.encloses.contains(&pg.id));
            if !listed {
                diags.push(Diagnostic::error(
                    format!(
                        "partial Grafcet `{}` claims enclosing step `{owner}`, which does not \
                         enclose it",
                        pg.id
                    ),
                    pg.span.clone(),
                ));
            }
        }
        for s in &pg.steps {
            if s.activation_link && !is_enclosed {
                diags.push(Diagnostic::warning(
                    format!(
                        "activation link on step `{}` has no effect: partial Grafcet `{}` is \
                         not enclosed",
                        s.id, pg.id
                    ),
                    s.span.clone(),
                ));
            }
        }
    }

    // One enclosing step per partial Grafcet.
    let mut enclosers: BTreeMap<&PartialId, &StepId> = BTreeMap::new();
    for (_, s) in model.steps() {
        for target in &s.encloses {
            if let Some(first) = enclosers.get(target) {
                diags.push(Diagnostic::error(
                    format!(
                        "partial Grafcet `{target}` is enclosed by both step `{first}` and \
                         step `{}`",
                        s.id
                    ),
                    s.span.clone(),
                ));
            } else {
                enclosers.insert(target, &s.id);
            }
        }
    }

    // Expressions never read outputs; continuous and stored actions never
    // share an output.
    let output_reads = |e: &crate::expr::Expr, span: &crate::diag::SourceSpan,
                        what: &str, diags: &mut Vec<Diagnostic>| {
        e.visit_reads(&mut |r| {
            if let VarRef::Var(v) = r {
                if model.variable(v).is_some_and(|d| d.role == VarRole::Output) {
                    diags.push(Diagnostic::error(
                        format!("{what} reads output variable `{v}`"),
                        span.clone(),
                    ));
                }
            }
        });
    };
    let mut continuous_targets: BTreeMap<&VarId, &StepId> = BTreeMap::new();
    let mut stored_targets: BTreeMap<&VarId, &StepId> = BTreeMap::new();
    for pg in &model.partials {
        for t in &pg.transitions {
            output_reads(&t.condition, &t.span, "transition condition", &mut diags);
        }
        for s in &pg.steps {
            for a in &s.actions {
                if let Some(c) = &a.condition {
                    output_reads(c, &a.span, "action condition", &mut diags);
                }
                if a.kind != ActionKind::Continuous {
                    output_reads(&a.value, &a.span, "assignment value", &mut diags);
                }
                let is_output =
                    model.variable(&a.target).is_some_and(|d| d.role == VarRole::Output);
                if is_output {
                    match a.kind {
                        ActionKind::Continuous => {
                            continuous_targets.entry(&a.target).or_insert(&s.id);
                        }
                        _ => {
                            stored_targets.entry(&a.target).or_insert(&s.id);
                        }
                    }
                }
            }
        }
    }
    for (var, step) in &continuous_targets {
        if let Some(other) = stored_targets.get(*var) {
            diags.push(Diagnostic::error(
                format!(
                    "output `{var}` is asserted continuously (step `{step}`) and written by a \
                     stored action (step `{other}`)"
                ),
                model.variable(var).map(|d| d.span.clone()).unwrap_or_else(|| {
                    crate::diag::SourceSpan::synthetic()
                }),
            ));
        }
    }

    // Isolated steps.
    for pg in &model.partials {
        let mut incident: BTreeSet<&StepId> = BTreeSet::new();
        for t in &pg.transitions {
            incident.extend(t.pre.iter());
            incident.extend(t.post.iter());
        }
        for s in &pg.steps {
            if !incident.contains(&s.id) {
                diags.push(Diagnostic::warning(
                    format!("isolated element: step `{}` has no incident transition", s.id),
                    s.span.clone(),
                ));
            }
        }
    }

    diags
}

// ---------------------------------------------------------------------------
// The analysis pipeline
// ---------------------------------------------------------------------------

/// A model that passed expansion, hierarchy computation and validation.
/// Dereferences to the expanded [`GrafcetModel`]; the runtime components
/// only accept this type, so an un-analyzed model cannot reach them.
#[derive(Debug)]
pub struct AnalyzedModel {
    model: GrafcetModel,
    pub hierarchy: HierarchyGraph,
    /// Non-blocking findings from expansion and validation.
    pub warnings: Vec<Diagnostic>,
    depth_order: Vec<PartialId>,
}

impl Deref for AnalyzedModel {
    type Target = GrafcetModel;

    fn deref(&self) -> &GrafcetModel {
        &self.model
    }
}

impl AnalyzedModel {
    /// Partial Grafcets ordered by hierarchical depth (highest level, i.e.
    /// depth 0, first), ties broken by declaration order.
    pub fn depth_order(&self) -> &[PartialId] {
        &self.depth_order
    }

    pub fn model(&self) -> &GrafcetModel {
        &self.model
    }
}

/// Runs the full pipeline: expansion, hierarchy + depths, validation.
pub fn analyze(model: &GrafcetModel) -> Result<AnalyzedModel, AnalysisError> {
    let (mut expanded, mut warnings) = expand_macros_with_warnings(model)?;
    let (hierarchy, depths) = compute_hierarchy(&expanded)?;
    expanded.depth_of = depths;

    let diags = validate(&expanded);
    if has_errors(&diags) {
        return Err(AnalysisError::Validation(diags));
    }
    warnings.extend(diags);

    let mut order: Vec<(u32, usize, PartialId)> = expanded
        .partials
        .iter()
        .enumerate()
        .map(|(i, p)| (expanded.depth_of[&p.id], i, p.id.clone()))
        .collect();
    order.sort();
    let depth_order = order.into_iter().map(|(_, _, p)| p).collect();

    Ok(AnalyzedModel { model: expanded, hierarchy, warnings, depth_order })
}

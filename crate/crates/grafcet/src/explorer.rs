//! Bounded exhaustive exploration of the stable-state graph.
//!
//! Starting from the initial stable situation, the explorer branches over
//! every boolean-input change set of size up to `multi` and records the
//! stable state each event leads to, breadth-first up to `depth` events.
//! Nodes are deduplicated by full state equality — situation plus the
//! complete valuation, inputs and outputs included — so two states that
//! differ only in an output stay distinct.
//!
//! Frontier expansion fans out across threads, but nodes and edges are
//! merged sequentially in frontier order, so the resulting graph is
//! identical regardless of thread count.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;

use crate::analyzer::AnalyzedModel;
use crate::engine::{situation_map, Engine};
use crate::expr::Value;
use crate::ids::{PartialId, StepId, TransitionId, VarId};
use crate::state::{EvolutionRecord, Policy, RunErrorKind};

/// Full-state identity of a stable node: active steps plus every variable.
pub type NodeKey = (BTreeSet<StepId>, BTreeMap<VarId, Value>);

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExploredNode {
    pub id: usize,
    /// Number of input events from the initial state at first discovery.
    pub depth: usize,
    pub situation: BTreeMap<PartialId, BTreeSet<StepId>>,
    pub valuation: BTreeMap<VarId, Value>,
}

impl ExploredNode {
    fn key(&self) -> NodeKey {
        let active = self.situation.values().flatten().cloned().collect();
        (active, self.valuation.clone())
    }

    /// Situation notation of every partial Grafcet, space-joined.
    pub fn situation_label(&self) -> String {
        self.situation
            .iter()
            .map(|(pg, steps)| {
                let ids: Vec<&str> = steps.iter().map(|s| s.as_str()).collect();
                format!("{pg}{{{}}}", ids.join(","))
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn valuation_label(&self) -> String {
        self.valuation
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeTarget {
    Node(usize),
    /// The event ran into an error; error edges are terminal.
    Error(RunErrorKind),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExploredEdge {
    /// Source node; `None` marks the initialization pseudo-edge, which is
    /// only recorded when initialization itself fails.
    pub from: Option<usize>,
    /// The input-change set that was applied.
    pub event: BTreeMap<VarId, Value>,
    pub target: EdgeTarget,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StableStateGraph {
    pub nodes: Vec<ExploredNode>,
    pub edges: Vec<ExploredEdge>,
    /// The initial stable node, unless initialization failed.
    pub root: Option<usize>,
    pub initial_error: Option<RunErrorKind>,
    /// Number of (node, event) expansions performed, counting revisits.
    pub traversals: u64,
    /// Every transition seen clearing in any run during exploration.
    pub cleared_transitions: BTreeSet<TransitionId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Anomaly {
    UnreachableStep { step: StepId },
    DeadTransition { transition: TransitionId },
    ErrorEdges { kind: RunErrorKind, count: usize },
}

impl std::fmt::Display for Anomaly {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Anomaly::UnreachableStep { step } => {
                write!(f, "step `{step}` is never active in any explored stable state")
            }
            Anomaly::DeadTransition { transition } => {
                write!(f, "transition `{transition}` never clears during exploration")
            }
            Anomaly::ErrorEdges { kind, count } => {
                write!(f, "{count} error edge(s) of kind {kind}")
            }
        }
    }
}

/// Outcome of expanding one node with one event, before interning.
enum Expanded {
    Stable(NodeKey),
    Failed(RunErrorKind),
}

type Expansion = Vec<(BTreeMap<VarId, Value>, Expanded, Vec<TransitionId>)>;

pub fn explore(
    model: &AnalyzedModel,
    policy: Policy,
    depth: usize,
    multi: usize,
) -> StableStateGraph {
    let mut graph = StableStateGraph {
        nodes: Vec::new(),
        edges: Vec::new(),
        root: None,
        initial_error: None,
        traversals: 0,
        cleared_transitions: BTreeSet::new(),
    };
    let mut index: BTreeMap<NodeKey, usize> = BTreeMap::new();
    let mut edge_set: BTreeSet<(Option<usize>, BTreeMap<VarId, Value>, EdgeTarget)> =
        BTreeSet::new();

    let mut engine = Engine::new(model, policy);
    match engine.initialize() {
        Ok(report) => {
            record_cleared(&mut graph.cleared_transitions, &report.evolutions);
            let key = (engine.state().active.clone(), engine.state().valuation.clone());
            let id = intern(&mut graph, &mut index, model, key, 0);
            graph.root = Some(id);
        }
        Err(error) => {
            record_cleared(&mut graph.cleared_transitions, &error.partial_trace);
            graph.initial_error = Some(error.kind);
            graph.edges.push(ExploredEdge {
                from: None,
                event: BTreeMap::new(),
                target: EdgeTarget::Error(error.kind),
            });
            return graph;
        }
    }

    let inputs: Vec<VarId> = model.bool_inputs().map(|d| d.id.clone()).collect();
    if depth == 0 || inputs.is_empty() {
        return graph;
    }
    let subsets = input_subsets(&inputs, multi.max(1).min(inputs.len()));

    let mut expansions: BTreeMap<usize, Expansion> = BTreeMap::new();
    let mut frontier: Vec<usize> = vec![graph.root.expect("root interned above")];
    for layer in 1..=depth {
        // Expand unseen frontier nodes in parallel; order is preserved by
        // the ordered collect, so the merge below is thread-count agnostic.
        let missing: Vec<usize> =
            frontier.iter().copied().filter(|id| !expansions.contains_key(id)).collect();
        let computed: Vec<(usize, Expansion)> = missing
            .par_iter()
            .map(|&id| (id, expand_node(model, policy, &graph.nodes[id], &subsets)))
            .collect();
        expansions.extend(computed);

        let mut next: Vec<usize> = Vec::new();
        let mut next_seen: BTreeSet<usize> = BTreeSet::new();
        for &source in &frontier {
            for (event, outcome, cleared) in &expansions[&source] {
                graph.traversals += 1;
                graph.cleared_transitions.extend(cleared.iter().cloned());
                let target = match outcome {
                    Expanded::Stable(key) => {
                        let id = match index.get(key) {
                            Some(&id) => id,
                            None => intern(&mut graph, &mut index, model, key.clone(), layer),
                        };
                        if next_seen.insert(id) {
                            next.push(id);
                        }
                        EdgeTarget::Node(id)
                    }
                    Expanded::Failed(kind) => EdgeTarget::Error(*kind),
                };
                if edge_set.insert((Some(source), event.clone(), target.clone())) {
                    graph.edges.push(ExploredEdge {
                        from: Some(source),
                        event: event.clone(),
                        target,
                    });
                }
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    graph
}

fn expand_node(
    model: &AnalyzedModel,
    policy: Policy,
    node: &ExploredNode,
    subsets: &[Vec<VarId>],
) -> Expansion {
    let (active, valuation) = node.key();
    let mut results = Vec::with_capacity(subsets.len());
    for subset in subsets {
        let event: BTreeMap<VarId, Value> = subset
            .iter()
            .map(|var| {
                let current = matches!(valuation.get(var), Some(Value::Bool(true)));
                (var.clone(), Value::Bool(!current))
            })
            .collect();
        let mut engine = Engine::from_stable(model, policy, active.clone(), valuation.clone());
        match engine.apply_input_event(&event) {
            Ok(report) => {
                let key = (engine.state().active.clone(), engine.state().valuation.clone());
                results.push((event, Expanded::Stable(key), cleared_of(&report.evolutions)));
            }
            Err(error) => {
                results.push((
                    event,
                    Expanded::Failed(error.kind),
                    cleared_of(&error.partial_trace),
                ));
            }
        }
    }
    results
}

fn intern(
    graph: &mut StableStateGraph,
    index: &mut BTreeMap<NodeKey, usize>,
    model: &AnalyzedModel,
    key: NodeKey,
    depth: usize,
) -> usize {
    let id = graph.nodes.len();
    graph.nodes.push(ExploredNode {
        id,
        depth,
        situation: situation_map(model, &key.0),
        valuation: key.1.clone(),
    });
    index.insert(key, id);
    id
}

/// All non-empty subsets of the inputs up to `max_size`, smallest first,
/// then in declaration order within each size.
fn input_subsets(inputs: &[VarId], max_size: usize) -> Vec<Vec<VarId>> {
    let n = inputs.len();
    let mut out = Vec::new();
    for size in 1..=max_size.min(n) {
        let mut picks: Vec<usize> = (0..size).collect();
        loop {
            out.push(picks.iter().map(|&i| inputs[i].clone()).collect());
            if !advance_combination(&mut picks, n) {
                break;
            }
        }
    }
    out
}

/// Steps `picks` to the next index combination in lexicographic order;
/// false once the last combination has been produced.
fn advance_combination(picks: &mut [usize], n: usize) -> bool {
    let size = picks.len();
    for i in (0..size).rev() {
        if picks[i] < n - size + i {
            picks[i] += 1;
            for j in i + 1..size {
                picks[j] = picks[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn cleared_of(records: &[EvolutionRecord]) -> Vec<TransitionId> {
    records.iter().flat_map(|rec| rec.cleared.iter().cloned()).collect()
}

fn record_cleared(into: &mut BTreeSet<TransitionId>, records: &[EvolutionRecord]) {
    into.extend(records.iter().flat_map(|rec| rec.cleared.iter().cloned()));
}

pub fn find_anomalies(model: &AnalyzedModel, graph: &StableStateGraph) -> Vec<Anomaly> {
    let mut ever_active: BTreeSet<&StepId> = BTreeSet::new();
    for node in &graph.nodes {
        ever_active.extend(node.situation.values().flatten());
    }
    let mut anomalies = Vec::new();
    for (_, step) in model.steps() {
        if !ever_active.contains(&step.id) {
            anomalies.push(Anomaly::UnreachableStep { step: step.id.clone() });
        }
    }
    for (_, transition) in model.transitions() {
        if !graph.cleared_transitions.contains(&transition.id) {
            anomalies.push(Anomaly::DeadTransition { transition: transition.id.clone() });
        }
    }
    let mut by_kind: BTreeMap<RunErrorKind, usize> = BTreeMap::new();
    for edge in &graph.edges {
        if let EdgeTarget::Error(kind) = &edge.target {
            *by_kind.entry(*kind).or_default() += 1;
        }
    }
    for (kind, count) in by_kind {
        anomalies.push(Anomaly::ErrorEdges { kind, count });
    }
    anomalies
}

impl StableStateGraph {
    /// Graphviz rendering: boxes for stable states, a point for the entry,
    /// octagons for error outcomes, dashed edges into errors.
    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        out.push_str("digraph stable_states {\n");
        out.push_str("  rankdir=LR;\n");
        out.push_str("  node [shape=box fontname=\"monospace\"];\n");
        out.push_str("  entry [shape=point label=\"\"];\n");
        for node in &self.nodes {
            out.push_str(&format!(
                "  n{} [label=\"{}\\n{}\"];\n",
                node.id,
                escape(&node.situation_label()),
                escape(&node.valuation_label()),
            ));
        }
        let error_kinds: BTreeSet<RunErrorKind> = self
            .edges
            .iter()
            .filter_map(|e| match &e.target {
                EdgeTarget::Error(kind) => Some(*kind),
                EdgeTarget::Node(_) => None,
            })
            .collect();
        for kind in &error_kinds {
            out.push_str(&format!(
                "  err_{} [label=\"{}\" shape=octagon];\n",
                kind.as_str(),
                kind
            ));
        }
        if let Some(root) = self.root {
            out.push_str(&format!("  entry -> n{root};\n"));
        }
        for edge in &self.edges {
            let from = match edge.from {
                Some(id) => format!("n{id}"),
                None => "entry".to_owned(),
            };
            let label: String = edge
                .event
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(", ");
            match &edge.target {
                EdgeTarget::Node(id) => {
                    out.push_str(&format!("  {from} -> n{id} [label=\"{}\"];\n", escape(&label)));
                }
                EdgeTarget::Error(kind) => {
                    out.push_str(&format!(
                        "  {from} -> err_{} [label=\"{}\" style=dashed];\n",
                        kind.as_str(),
                        escape(&label)
                    ));
                }
            }
        }
        out.push_str("}\n");
        out
    }

    /// One-line JSON with node/edge counts and the anomaly list.
    pub fn summary_json(&self, model: &AnalyzedModel) -> String {
        let anomalies = find_anomalies(model, self);
        serde_json::json!({
            "nodes": self.nodes.len(),
            "edges": self.edges.len(),
            "traversals": self.traversals,
            "root": self.root,
            "initial_error": self.initial_error,
            "anomalies": anomalies.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
        })
        .to_string()
    }
}

fn escape(label: &str) -> String {
    label.replace('\\', "\\\\").replace('"', "\\\"")
}

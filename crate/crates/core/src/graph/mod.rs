//! Causal DAG model: validated graphs, super-source augmentation,
//! topological order, source-to-sink paths and explanation boundaries.

mod boundary;
mod document;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::function::{BindError, FunctionSpec};

pub use boundary::{enumerate_boundaries, for_each_boundary, Boundary, DEFAULT_BOUNDARY_CAP};
pub use document::{build_graph, GraphDocument, NodeDocument, NodeKindDoc};

/// Id given to the synthetic node added by [`augment_super_source`].
pub const SUPER_SOURCE_ID: &str = "S*";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeIdx(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeIdx(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Source,
    Internal,
    Sink,
    /// The synthetic root added by [`augment_super_source`]. It carries no
    /// value of its own; its edges switch each original source from
    /// background to foreground.
    SuperSource,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeSpec {
    pub id: String,
    pub kind: NodeKind,
    /// Ordered; order binds function arguments and nothing else.
    pub parents: Vec<String>,
    pub function: Option<FunctionSpec>,
    pub is_noise: bool,
    /// Declared categories for categorical nodes.
    pub domain: Option<Vec<String>>,
}

impl NodeSpec {
    pub fn source(id: impl Into<String>) -> Self {
        NodeSpec {
            id: id.into(),
            kind: NodeKind::Source,
            parents: Vec::new(),
            function: None,
            is_noise: false,
            domain: None,
        }
    }

    pub fn noise(id: impl Into<String>) -> Self {
        NodeSpec { is_noise: true, ..NodeSpec::source(id) }
    }

    pub fn internal(id: impl Into<String>, parents: &[&str], function: FunctionSpec) -> Self {
        NodeSpec {
            id: id.into(),
            kind: NodeKind::Internal,
            parents: parents.iter().map(|p| p.to_string()).collect(),
            function: Some(function),
            is_noise: false,
            domain: None,
        }
    }

    pub fn sink(id: impl Into<String>, parents: &[&str], function: FunctionSpec) -> Self {
        NodeSpec { kind: NodeKind::Sink, ..NodeSpec::internal(id, parents, function) }
    }

    /// Internal node computing the expression `text` over `parents`.
    pub fn expr(id: &str, parents: &[&str], text: &str) -> Result<Self, GraphError> {
        let names: Vec<String> = parents.iter().map(|p| p.to_string()).collect();
        let f = FunctionSpec::parse_expression(text, &names)
            .map_err(|e| GraphError::Function { node: id.to_string(), source: BindError::Parse(e) })?;
        Ok(NodeSpec::internal(id, parents, f))
    }

    /// Sink computing the expression `text` over `parents`.
    pub fn expr_sink(id: &str, parents: &[&str], text: &str) -> Result<Self, GraphError> {
        Ok(NodeSpec { kind: NodeKind::Sink, ..NodeSpec::expr(id, parents, text)? })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub from: NodeIdx,
    pub to: NodeIdx,
    /// Position of `from` in `to`'s parent list.
    pub slot: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("node `{node}` lists unknown parent `{parent}`")]
    UnknownParent { node: String, parent: String },
    #[error("node `{node}` lists parent `{parent}` more than once")]
    DuplicateParent { node: String, parent: String },
    #[error("cycle detected through nodes {0:?}")]
    CycleDetected(Vec<String>),
    #[error("sink `{0}` is not a node of the graph")]
    UnknownSink(String),
    #[error("graph must have exactly one sink; childless nodes: {0:?}")]
    MultipleSinks(Vec<String>),
    #[error("node `{node}`: function takes {expected} arguments but node has {parents} parents")]
    ArityMismatch { node: String, expected: usize, parents: usize },
    #[error("node `{node}`: {reason}")]
    InvalidNode { node: String, reason: String },
    #[error("node `{node}`: {source}")]
    Function { node: String, source: BindError },
    #[error("graph already has a super-source")]
    AlreadyAugmented,
    #[error("unknown edge {0}")]
    UnknownEdge(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("more than {cap} boundaries")]
    SizeLimitExceeded { cap: usize },
}

/// An ordered list of adjacent edges from a source to the sink.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Path {
    pub edges: Vec<EdgeIdx>,
}

/// Immutable, validated causal DAG with a single sink.
#[derive(Clone, Debug)]
pub struct CausalGraph {
    nodes: Vec<NodeSpec>,
    index: BTreeMap<String, NodeIdx>,
    edges: Vec<Edge>,
    in_edges: Vec<Vec<EdgeIdx>>,
    out_edges: Vec<Vec<EdgeIdx>>,
    sink: NodeIdx,
    topo: Vec<NodeIdx>,
    super_source: Option<NodeIdx>,
}

impl CausalGraph {
    /// Validates `nodes` and materializes edges from the parent lists.
    pub fn new(nodes: Vec<NodeSpec>, sink: &str) -> Result<Self, GraphError> {
        let mut index = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), NodeIdx(i)).is_some() {
                return Err(GraphError::DuplicateNode(n.id.clone()));
            }
        }

        let mut edges = Vec::new();
        let mut in_edges = vec![Vec::new(); nodes.len()];
        let mut out_edges = vec![Vec::new(); nodes.len()];
        for (i, n) in nodes.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for (slot, p) in n.parents.iter().enumerate() {
                let &from = index.get(p).ok_or_else(|| GraphError::UnknownParent {
                    node: n.id.clone(),
                    parent: p.clone(),
                })?;
                if !seen.insert(p) {
                    return Err(GraphError::DuplicateParent { node: n.id.clone(), parent: p.clone() });
                }
                let e = EdgeIdx(edges.len());
                edges.push(Edge { from, to: NodeIdx(i), slot });
                in_edges[i].push(e);
                out_edges[from.0].push(e);
            }
        }
        for outs in &mut out_edges {
            outs.sort_by(|a, b| nodes[edges[a.0].to.0].id.cmp(&nodes[edges[b.0].to.0].id));
        }

        let topo = kahn(&nodes, &edges, &in_edges, &out_edges)?;

        let &sink_idx = index.get(sink).ok_or_else(|| GraphError::UnknownSink(sink.to_string()))?;
        let childless: Vec<String> = nodes
            .iter()
            .enumerate()
            .filter(|(i, _)| out_edges[*i].is_empty() && *i != sink_idx.0)
            .map(|(_, n)| n.id.clone())
            .collect();
        if !childless.is_empty() {
            let mut all = vec![sink.to_string()];
            all.extend(childless);
            return Err(GraphError::MultipleSinks(all));
        }

        let supers: Vec<NodeIdx> = (0..nodes.len())
            .filter(|&i| nodes[i].kind == NodeKind::SuperSource)
            .map(NodeIdx)
            .collect();
        if supers.len() > 1 {
            return Err(GraphError::InvalidNode {
                node: nodes[supers[1].0].id.clone(),
                reason: "more than one super-source".into(),
            });
        }
        let super_source = supers.first().copied();

        for (i, n) in nodes.iter().enumerate() {
            let invalid = |reason: &str| GraphError::InvalidNode { node: n.id.clone(), reason: reason.into() };
            match n.kind {
                NodeKind::SuperSource => {
                    if !n.parents.is_empty() || n.function.is_some() {
                        return Err(invalid("super-source takes no parents and no function"));
                    }
                }
                NodeKind::Source => {
                    let under_super = match super_source {
                        Some(s) => n.parents.len() == 1 && n.parents[0] == nodes[s.0].id,
                        None => false,
                    };
                    if !(n.parents.is_empty() || under_super) {
                        return Err(invalid("source nodes take no parents"));
                    }
                    if n.function.is_some() {
                        return Err(invalid("source nodes take no function"));
                    }
                }
                NodeKind::Internal | NodeKind::Sink => {
                    if n.is_noise {
                        return Err(invalid("noise nodes must be sources"));
                    }
                    if n.parents.is_empty() {
                        return Err(invalid("non-source node without parents"));
                    }
                    let Some(f) = &n.function else {
                        return Err(invalid("non-source node without a function"));
                    };
                    if f.arity() != n.parents.len() {
                        return Err(GraphError::ArityMismatch {
                            node: n.id.clone(),
                            expected: f.arity(),
                            parents: n.parents.len(),
                        });
                    }
                }
            }
            if n.kind == NodeKind::Sink && i != sink_idx.0 {
                return Err(invalid("only the declared sink may have kind sink"));
            }
            if super_source.is_some_and(|s| n.parents.iter().any(|p| *p == nodes[s.0].id))
                && n.kind != NodeKind::Source
            {
                return Err(invalid("only sources may hang off the super-source"));
            }
        }
        if nodes[sink_idx.0].kind != NodeKind::Sink {
            return Err(GraphError::InvalidNode {
                node: sink.to_string(),
                reason: "declared sink must have kind sink".into(),
            });
        }

        Ok(CausalGraph { nodes, index, edges, in_edges, out_edges, sink: sink_idx, topo, super_source })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn node(&self, i: NodeIdx) -> &NodeSpec {
        &self.nodes[i.0]
    }

    pub fn id(&self, i: NodeIdx) -> &str {
        &self.nodes[i.0].id
    }

    pub fn node_index(&self, id: &str) -> Option<NodeIdx> {
        self.index.get(id).copied()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeIdx) -> Edge {
        self.edges[e.0]
    }

    pub fn edge_index(&self, from: &str, to: &str) -> Option<EdgeIdx> {
        let from = self.node_index(from)?;
        let to = self.node_index(to)?;
        self.out_edges[from.0].iter().copied().find(|e| self.edges[e.0].to == to)
    }

    /// `from->to` label for an edge.
    pub fn edge_label(&self, e: EdgeIdx) -> String {
        let Edge { from, to, .. } = self.edges[e.0];
        format!("{}->{}", self.id(from), self.id(to))
    }

    /// Incoming edges in parent-slot order.
    pub fn in_edges(&self, i: NodeIdx) -> &[EdgeIdx] {
        &self.in_edges[i.0]
    }

    /// Outgoing edges, ordered by child id.
    pub fn out_edges(&self, i: NodeIdx) -> &[EdgeIdx] {
        &self.out_edges[i.0]
    }

    pub fn sink(&self) -> NodeIdx {
        self.sink
    }

    pub fn super_source(&self) -> Option<NodeIdx> {
        self.super_source
    }

    pub fn is_augmented(&self) -> bool {
        self.super_source.is_some()
    }

    /// Nodes with no parents (just the super-source once augmented).
    pub fn roots(&self) -> impl Iterator<Item = NodeIdx> + '_ {
        self.topo.iter().copied().filter(|i| self.in_edges[i.0].is_empty())
    }

    /// Value-carrying sources: nodes of kind `Source`, with or without a
    /// super-source above them.
    pub fn sources(&self) -> impl Iterator<Item = NodeIdx> + '_ {
        self.topo.iter().copied().filter(|i| self.nodes[i.0].kind == NodeKind::Source)
    }

    /// Topological order; ties broken by node id.
    pub fn topological_order(&self) -> &[NodeIdx] {
        &self.topo
    }

    /// Every root-to-sink path, in depth-first order over children sorted
    /// by id.
    pub fn all_paths(&self) -> Vec<Path> {
        let mut out = Vec::new();
        for r in self.roots() {
            let mut stack = Vec::new();
            self.paths_down(r, &mut stack, &mut out);
        }
        out
    }

    fn paths_down(&self, n: NodeIdx, stack: &mut Vec<EdgeIdx>, out: &mut Vec<Path>) {
        if n == self.sink {
            out.push(Path { edges: stack.clone() });
            return;
        }
        for &e in &self.out_edges[n.0] {
            stack.push(e);
            self.paths_down(self.edges[e.0].to, stack, out);
            stack.pop();
        }
    }

    fn paths_up(&self, n: NodeIdx, stack: &mut Vec<EdgeIdx>, out: &mut Vec<Vec<EdgeIdx>>) {
        if self.in_edges[n.0].is_empty() {
            out.push(stack.iter().rev().copied().collect());
            return;
        }
        for &e in &self.in_edges[n.0] {
            stack.push(e);
            self.paths_up(self.edges[e.0].from, stack, out);
            stack.pop();
        }
    }

    /// All root-to-sink paths that contain `e`.
    pub fn paths_through(&self, e: EdgeIdx) -> Result<Vec<Path>, GraphError> {
        let Some(edge) = self.edges.get(e.0).copied() else {
            return Err(GraphError::UnknownEdge(format!("#{}", e.0)));
        };
        let mut heads = Vec::new();
        self.paths_up(edge.from, &mut Vec::new(), &mut heads);
        let mut tails = Vec::new();
        self.paths_down(edge.to, &mut Vec::new(), &mut tails);
        let mut out = Vec::with_capacity(heads.len() * tails.len());
        for h in &heads {
            for t in &tails {
                let mut edges = h.clone();
                edges.push(e);
                edges.extend_from_slice(&t.edges);
                out.push(Path { edges });
            }
        }
        out.sort();
        Ok(out)
    }

    /// New graph over `nodes` with the same sink id; revalidates.
    pub(crate) fn with_nodes(&self, nodes: Vec<NodeSpec>) -> Result<Self, GraphError> {
        CausalGraph::new(nodes, self.id(self.sink))
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.edges.iter().map(|e| format!("#{}", e.0)).collect();
        f.write_str(&parts.join(" "))
    }
}

fn kahn(
    nodes: &[NodeSpec],
    edges: &[Edge],
    in_edges: &[Vec<EdgeIdx>],
    out_edges: &[Vec<EdgeIdx>],
) -> Result<Vec<NodeIdx>, GraphError> {
    let mut indeg: Vec<usize> = in_edges.iter().map(Vec::len).collect();
    let mut ready: BTreeSet<(&str, usize)> = (0..nodes.len())
        .filter(|&i| indeg[i] == 0)
        .map(|i| (nodes[i].id.as_str(), i))
        .collect();
    let mut order = Vec::with_capacity(nodes.len());
    while let Some((_, i)) = ready.pop_first() {
        order.push(NodeIdx(i));
        for e in &out_edges[i] {
            let to = edges[e.0].to.0;
            indeg[to] -= 1;
            if indeg[to] == 0 {
                ready.insert((nodes[to].id.as_str(), to));
            }
        }
    }
    if order.len() != nodes.len() {
        let stuck = (0..nodes.len()).filter(|&i| indeg[i] > 0).map(|i| nodes[i].id.clone()).collect();
        return Err(GraphError::CycleDetected(stuck));
    }
    Ok(order)
}

/// Adds a synthetic root with one edge to each original source.
pub fn augment_super_source(g: &CausalGraph) -> Result<CausalGraph, GraphError> {
    if g.is_augmented() {
        return Err(GraphError::AlreadyAugmented);
    }
    let mut id = SUPER_SOURCE_ID.to_string();
    while g.node_index(&id).is_some() {
        id.push('\'');
    }
    let mut nodes = Vec::with_capacity(g.node_count() + 1);
    nodes.push(NodeSpec {
        id: id.clone(),
        kind: NodeKind::SuperSource,
        parents: Vec::new(),
        function: None,
        is_noise: false,
        domain: None,
    });
    for n in g.nodes() {
        let mut n = n.clone();
        if n.kind == NodeKind::Source {
            n.parents = vec![id.clone()];
        }
        nodes.push(n);
    }
    g.with_nodes(nodes)
}

/// Augments unless the graph already has a super-source.
pub fn ensure_augmented(g: &CausalGraph) -> CausalGraph {
    if g.is_augmented() {
        g.clone()
    } else {
        augment_super_source(g).expect("augmenting a valid graph cannot fail")
    }
}

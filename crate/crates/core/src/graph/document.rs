//! JSON graph documents.
//!
//! ```json
//! {"nodes": [{"id": "X1", "kind": "source"},
//!            {"id": "f", "kind": "sink", "parents": ["X1"],
//!             "function": {"type": "expr", "expr": "2 * X1"}}],
//!  "sink": "f"}
//! ```

use serde::{Deserialize, Serialize};

use super::{CausalGraph, GraphError, NodeKind, NodeSpec};
use crate::function::FunctionDoc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKindDoc {
    Source,
    Internal,
    Sink,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDocument {
    pub id: String,
    /// Inferred when absent: parentless nodes are sources, the declared
    /// sink is the sink, everything else is internal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<NodeKindDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parents: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<FunctionDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub noise: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDocument {
    pub nodes: Vec<NodeDocument>,
    pub sink: String,
}

/// Builds and validates a graph from its document.
pub fn build_graph(doc: &GraphDocument) -> Result<CausalGraph, GraphError> {
    let mut nodes = Vec::with_capacity(doc.nodes.len());
    for n in &doc.nodes {
        let kind = match n.kind {
            Some(NodeKindDoc::Source) => NodeKind::Source,
            Some(NodeKindDoc::Internal) => NodeKind::Internal,
            Some(NodeKindDoc::Sink) => NodeKind::Sink,
            None if n.id == doc.sink => NodeKind::Sink,
            None if n.parents.is_empty() => NodeKind::Source,
            None => NodeKind::Internal,
        };
        let function = match &n.function {
            Some(f) => Some(f.bind(&n.parents).map_err(|source| GraphError::Function {
                node: n.id.clone(),
                source,
            })?),
            None => None,
        };
        nodes.push(NodeSpec {
            id: n.id.clone(),
            kind,
            parents: n.parents.clone(),
            function,
            is_noise: n.noise,
            domain: n.domain.clone(),
        });
    }
    CausalGraph::new(nodes, &doc.sink)
}

impl CausalGraph {
    /// Document form of the graph. A super-source, if present, is dropped:
    /// documents always describe the unaugmented graph.
    pub fn to_document(&self) -> GraphDocument {
        let super_id = self.super_source().map(|s| self.id(s).to_string());
        let nodes = self
            .nodes()
            .iter()
            .filter(|n| n.kind != NodeKind::SuperSource)
            .map(|n| {
                let parents = n
                    .parents
                    .iter()
                    .filter(|p| Some(*p) != super_id.as_ref())
                    .cloned()
                    .collect();
                NodeDocument {
                    id: n.id.clone(),
                    kind: Some(match n.kind {
                        NodeKind::Source | NodeKind::SuperSource => NodeKindDoc::Source,
                        NodeKind::Internal => NodeKindDoc::Internal,
                        NodeKind::Sink => NodeKindDoc::Sink,
                    }),
                    parents,
                    function: n.function.as_ref().map(Into::into),
                    domain: n.domain.clone(),
                    noise: n.is_noise,
                }
            })
            .collect();
        GraphDocument { nodes, sink: self.id(self.sink()).to_string() }
    }
}

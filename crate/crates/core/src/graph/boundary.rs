use std::collections::BTreeSet;
use std::ops::ControlFlow;

use super::{CausalGraph, EdgeIdx, GraphError, NodeIdx};

pub const DEFAULT_BOUNDARY_CAP: usize = 10_000;

/// An explanation boundary: a cut `(D, F)` with every root in `D`, the sink
/// in `F`, and no edge running from `F` back into `D`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Boundary {
    data_side: BTreeSet<NodeIdx>,
    model_side: BTreeSet<NodeIdx>,
    cut: Vec<EdgeIdx>,
}

impl Boundary {
    /// Checks that `data_side` defines a valid cut of `g`.
    pub fn new(g: &CausalGraph, data_side: BTreeSet<NodeIdx>) -> Result<Self, GraphError> {
        let invalid = |reason: String| GraphError::InvalidNode { node: String::new(), reason };
        if data_side.contains(&g.sink()) {
            return Err(invalid("sink on the data side".into()));
        }
        if let Some(r) = g.roots().find(|r| !data_side.contains(r)) {
            return Err(invalid(format!("root `{}` on the model side", g.id(r))));
        }
        for e in g.edges() {
            if data_side.contains(&e.to) && !data_side.contains(&e.from) {
                return Err(invalid(format!(
                    "edge {}->{} runs from the model side into the data side",
                    g.id(e.from),
                    g.id(e.to)
                )));
            }
        }
        Ok(Self::from_closed_set(g, data_side))
    }

    fn from_closed_set(g: &CausalGraph, data_side: BTreeSet<NodeIdx>) -> Self {
        let model_side = (0..g.node_count())
            .map(NodeIdx)
            .filter(|n| !data_side.contains(n))
            .collect();
        let cut = (0..g.edges().len())
            .map(EdgeIdx)
            .filter(|e| {
                let edge = g.edge(*e);
                data_side.contains(&edge.from) && !data_side.contains(&edge.to)
            })
            .collect();
        Boundary { data_side, model_side, cut }
    }

    pub fn data_side(&self) -> &BTreeSet<NodeIdx> {
        &self.data_side
    }

    pub fn model_side(&self) -> &BTreeSet<NodeIdx> {
        &self.model_side
    }

    /// Edges from `D` into `F`, in edge-index order.
    pub fn cut(&self) -> &[EdgeIdx] {
        &self.cut
    }
}

/// Calls `visit` on every boundary of `g` exactly once, stopping early if
/// it breaks. Boundaries are produced by deciding, in topological order,
/// whether each node joins `D`; a node may join only once all its parents
/// have.
pub fn for_each_boundary(g: &CausalGraph, mut visit: impl FnMut(Boundary) -> ControlFlow<()>) {
    let order = g.topological_order().to_vec();
    let mut data = BTreeSet::new();
    let _ = grow(g, &order, 0, &mut data, &mut visit);
}

fn grow(
    g: &CausalGraph,
    order: &[NodeIdx],
    at: usize,
    data: &mut BTreeSet<NodeIdx>,
    visit: &mut impl FnMut(Boundary) -> ControlFlow<()>,
) -> ControlFlow<()> {
    let Some(&n) = order.get(at) else {
        return visit(Boundary::from_closed_set(g, data.clone()));
    };
    let is_root = g.in_edges(n).is_empty();
    let can_join = n != g.sink() && g.in_edges(n).iter().all(|e| data.contains(&g.edge(*e).from));
    if can_join {
        data.insert(n);
        grow(g, order, at + 1, data, visit)?;
        data.remove(&n);
    }
    if !is_root {
        grow(g, order, at + 1, data, visit)?;
    }
    ControlFlow::Continue(())
}

/// Every boundary of `g`, or `SizeLimitExceeded` past `cap`.
pub fn enumerate_boundaries(g: &CausalGraph, cap: usize) -> Result<Vec<Boundary>, GraphError> {
    let mut out = Vec::new();
    let mut over = false;
    for_each_boundary(g, |b| {
        if out.len() == cap {
            over = true;
            return ControlFlow::Break(());
        }
        out.push(b);
        ControlFlow::Continue(())
    });
    if over {
        return Err(GraphError::SizeLimitExceeded { cap });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{augment_super_source, NodeSpec};

    /// All subsets of nodes that satisfy the cut definition directly.
    fn brute_force(g: &CausalGraph) -> Vec<BTreeSet<NodeIdx>> {
        let n = g.node_count();
        let mut out = Vec::new();
        for mask in 0u32..(1 << n) {
            let d: BTreeSet<NodeIdx> = (0..n).filter(|i| mask & (1 << i) != 0).map(NodeIdx).collect();
            let ok = !d.contains(&g.sink())
                && g.roots().all(|r| d.contains(&r))
                && g.edges().iter().all(|e| !(d.contains(&e.to) && !d.contains(&e.from)));
            if ok {
                out.push(d);
            }
        }
        out.sort();
        out
    }

    fn enumerated(g: &CausalGraph) -> Vec<BTreeSet<NodeIdx>> {
        let mut v: Vec<_> = enumerate_boundaries(g, DEFAULT_BOUNDARY_CAP)
            .unwrap()
            .into_iter()
            .map(|b| b.data_side().clone())
            .collect();
        v.sort();
        v
    }

    fn chain() -> CausalGraph {
        let nodes = vec![
            NodeSpec::source("X1"),
            NodeSpec::expr("X2", &["X1"], "X1").unwrap(),
            NodeSpec::expr("X3", &["X2"], "X2").unwrap(),
            NodeSpec::expr("X4", &["X3"], "X3").unwrap(),
            NodeSpec::expr_sink("f", &["X4"], "X4").unwrap(),
        ];
        augment_super_source(&CausalGraph::new(nodes, "f").unwrap()).unwrap()
    }

    fn flat(d: usize) -> CausalGraph {
        let ids: Vec<String> = (1..=d).map(|i| format!("X{i}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let mut nodes: Vec<NodeSpec> = ids.iter().map(NodeSpec::source).collect();
        nodes.push(NodeSpec::expr_sink("f", &refs, &ids.join(" + ")).unwrap());
        augment_super_source(&CausalGraph::new(nodes, "f").unwrap()).unwrap()
    }

    #[test]
    fn chain_has_five_boundaries() {
        let g = chain();
        let bs = enumerate_boundaries(&g, 100).unwrap();
        assert_eq!(bs.len(), 5);
        assert_eq!(enumerated(&g), brute_force(&g));
        for b in &bs {
            assert_eq!(b.cut().len(), 1);
        }
    }

    #[test]
    fn flat_graph_has_power_set() {
        for d in 1..=5 {
            let g = flat(d);
            assert_eq!(enumerated(&g).len(), 1 << d);
            assert_eq!(enumerated(&g), brute_force(&g));
        }
    }

    #[test]
    fn single_edge() {
        let nodes = vec![NodeSpec::expr_sink("f", &["S"], "S").unwrap(), NodeSpec::source("S")];
        let g = CausalGraph::new(nodes, "f").unwrap();
        assert_eq!(enumerate_boundaries(&g, 10).unwrap().len(), 1);
    }

    #[test]
    fn cap_enforced() {
        let g = flat(4);
        assert_eq!(
            enumerate_boundaries(&g, 15).unwrap_err(),
            GraphError::SizeLimitExceeded { cap: 15 }
        );
        assert_eq!(enumerate_boundaries(&g, 16).unwrap().len(), 16);
    }

    #[test]
    fn cut_separates_data_from_sink() {
        let g = flat(3);
        for b in enumerate_boundaries(&g, 100).unwrap() {
            for &e in b.cut() {
                let edge = g.edge(e);
                assert!(b.data_side().contains(&edge.from));
                assert!(b.model_side().contains(&edge.to));
            }
            // Without the cut edges nothing in D reaches the sink.
            let mut reach: BTreeSet<NodeIdx> = b.data_side().clone();
            let mut changed = true;
            while changed {
                changed = false;
                for (i, edge) in g.edges().iter().enumerate() {
                    if b.cut().contains(&EdgeIdx(i)) {
                        continue;
                    }
                    if reach.contains(&edge.from) && reach.insert(edge.to) {
                        changed = true;
                    }
                }
            }
            assert!(!reach.contains(&g.sink()));
        }
    }

    #[test]
    fn new_rejects_invalid_cut() {
        let g = chain();
        let x2 = g.node_index("X2").unwrap();
        let s = g.super_source().unwrap();
        assert!(Boundary::new(&g, BTreeSet::from([s, x2])).is_err());
        let x1 = g.node_index("X1").unwrap();
        assert_eq!(Boundary::new(&g, BTreeSet::from([s, x1])).unwrap().cut().len(), 1);
    }
}

//! Reference implementation by explicit path orderings.
//!
//! Every configuration is materialized as its full edge history. Reading
//! the history left to right, each arrival at the sink closes one
//! root-to-sink path; the path is credited with the payoff gained since the
//! previous arrival, and an edge's credit is the total over the paths that
//! contain it. Payoffs come from [`HistoryEvaluator`], not the walker used
//! by the exact and sampled drivers.

use std::collections::BTreeMap;

use crate::graph::{ensure_augmented, CausalGraph, EdgeIdx, NodeIdx, Path};
use crate::sample::Sample;

use super::exact::configuration_count;
use super::exact::target_delta;
use super::engine::{Engine, Runtime};
use super::{next_permutation, EdgeAttribution, FlowError, HistoryEvaluator, Method};

#[derive(Clone, Debug, PartialEq)]
pub struct PathCredit {
    /// Edges of the augmented graph, super-source edge first.
    pub path: Path,
    pub credit: f64,
}

/// Every complete depth-first history of an augmented graph, one per
/// configuration.
pub fn dfs_histories(g: &CausalGraph, cap: f64) -> Result<Vec<Vec<EdgeIdx>>, FlowError> {
    let count = configuration_count(g);
    if count > cap {
        return Err(FlowError::SizeLimitExceeded { count, cap });
    }
    let mut memo = vec![None; g.node_count()];
    let mut out = vec![Vec::new()];
    for r in g.roots() {
        let below = histories_from(g, r, &mut memo);
        out = out
            .iter()
            .flat_map(|h| below.iter().map(move |b| [h.as_slice(), b].concat()))
            .collect();
    }
    Ok(out)
}

fn histories_from(g: &CausalGraph, n: NodeIdx, memo: &mut Vec<Option<Vec<Vec<EdgeIdx>>>>) -> Vec<Vec<EdgeIdx>> {
    if let Some(h) = &memo[n.0] {
        return h.clone();
    }
    let outs = g.out_edges(n);
    let mut all = Vec::new();
    if outs.is_empty() {
        all.push(Vec::new());
    } else {
        let subs: Vec<Vec<Vec<EdgeIdx>>> = outs.iter().map(|e| histories_from(g, g.edge(*e).to, memo)).collect();
        let mut perm: Vec<usize> = (0..outs.len()).collect();
        loop {
            let mut acc: Vec<Vec<EdgeIdx>> = vec![Vec::new()];
            for &i in &perm {
                let mut next = Vec::with_capacity(acc.len() * subs[i].len());
                for a in &acc {
                    for s in &subs[i] {
                        let mut h = a.clone();
                        h.push(outs[i]);
                        h.extend_from_slice(s);
                        next.push(h);
                    }
                }
                acc = next;
            }
            all.extend(acc);
            if !next_permutation(&mut perm) {
                break;
            }
        }
    }
    memo[n.0] = Some(all.clone());
    all
}

/// Splits a depth-first history into the root-to-sink paths it closes, in
/// order, with the index at which each one reaches the sink.
fn closed_paths(g: &CausalGraph, h: &[EdgeIdx]) -> Vec<(usize, Path)> {
    let mut stack: Vec<EdgeIdx> = Vec::new();
    let mut out = Vec::new();
    for (t, &e) in h.iter().enumerate() {
        let from = g.edge(e).from;
        while stack.last().is_some_and(|top| g.edge(*top).to != from) {
            stack.pop();
        }
        stack.push(e);
        if g.edge(e).to == g.sink() {
            out.push((t, Path { edges: stack.clone() }));
        }
    }
    out
}

/// Path credits and the edge credits they sum to. Refuses graphs with more
/// than `cap` configurations.
pub fn shapley_flow_paths(
    g: &CausalGraph,
    bg: &Sample,
    fg: &Sample,
    cap: f64,
) -> Result<(Vec<PathCredit>, EdgeAttribution), FlowError> {
    let g = ensure_augmented(g);
    let histories = dfs_histories(&g, cap)?;
    let mut ev = HistoryEvaluator::new(&g, bg, fg)?;
    let empty = ev.eval(&[], true)?;

    let mut per_path: BTreeMap<Path, f64> = BTreeMap::new();
    for h in &histories {
        let mut prev = empty;
        for (t, path) in closed_paths(&g, h) {
            let v = ev.eval(&h[..=t], true)?;
            *per_path.entry(path).or_insert(0.0) += v - prev;
            prev = v;
        }
    }
    let n = histories.len() as f64;
    let paths: Vec<PathCredit> = per_path.into_iter().map(|(path, c)| PathCredit { path, credit: c / n }).collect();

    let mut credit = vec![0.0; g.edges().len()];
    for p in &paths {
        for e in &p.path.edges {
            credit[e.0] += p.credit;
        }
    }
    let mut rt = Runtime::new();
    let delta = target_delta(&Engine::new(&g, bg, fg, &mut rt)?);
    Ok((paths, EdgeAttribution::from_vec(&g, &credit, Method::PathOracle, delta)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{augment_super_source, NodeSpec};

    #[test]
    fn history_count_matches_configuration_count() {
        let nodes = vec![
            NodeSpec::source("A"),
            NodeSpec::source("B"),
            NodeSpec::expr("C", &["A", "B"], "A * B").unwrap(),
            NodeSpec::expr_sink("f", &["A", "C"], "A + C").unwrap(),
        ];
        let g = augment_super_source(&CausalGraph::new(nodes, "f").unwrap()).unwrap();
        let hs = dfs_histories(&g, 1e6).unwrap();
        assert_eq!(hs.len() as f64, configuration_count(&g));
        // Every history closes each root-to-sink path exactly once.
        let mut all = g.all_paths();
        all.sort();
        for h in &hs {
            let mut closed: Vec<Path> = closed_paths(&g, h).into_iter().map(|(_, p)| p).collect();
            closed.sort();
            assert_eq!(closed, all);
        }
    }

    #[test]
    fn diamond_paths_split_evenly() {
        let nodes = vec![
            NodeSpec::source("A"),
            NodeSpec::expr("B", &["A"], "A").unwrap(),
            NodeSpec::expr("C", &["A"], "A").unwrap(),
            NodeSpec::expr_sink("f", &["B", "C"], "B + C").unwrap(),
        ];
        let g = CausalGraph::new(nodes, "f").unwrap();
        let bg = Sample::from_reals([("A", 0.0)]);
        let fg = Sample::from_reals([("A", 1.0)]);
        let (paths, attr) = shapley_flow_paths(&g, &bg, &fg, 1e6).unwrap();
        assert_eq!(paths.len(), 2);
        for p in &paths {
            assert_eq!(p.credit, 1.0);
        }
        assert_eq!(attr.get("S*", "A"), Some(2.0));
        assert_eq!(attr.get("B", "f"), Some(1.0));
    }

    #[test]
    fn refuses_above_cap() {
        let nodes = vec![
            NodeSpec::source("X1"),
            NodeSpec::source("X2"),
            NodeSpec::expr_sink("f", &["X1", "X2"], "X1 + X2").unwrap(),
        ];
        let g = CausalGraph::new(nodes, "f").unwrap();
        let s = Sample::from_reals([("X1", 0.0), ("X2", 0.0)]);
        assert!(matches!(shapley_flow_paths(&g, &s, &s, 1.0), Err(FlowError::SizeLimitExceeded { .. })));
    }
}

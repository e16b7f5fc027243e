//! Exhaustive enumeration of depth-first configurations.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::graph::{ensure_augmented, CausalGraph, EdgeIdx, NodeIdx};
use crate::sample::Sample;

use super::engine::{Engine, Runtime, State};
use super::{factorial, next_permutation, nth_permutation, EdgeAttribution, FlowError, Method};

pub const DEFAULT_CONFIG_CAP: f64 = 1e6;

/// Number of configurations of an augmented graph: a visit of a node with
/// `k` children contributes `k!` orderings times the configurations of
/// every child visit it triggers.
pub fn configuration_count(g: &CausalGraph) -> f64 {
    let mut memo = vec![None; g.node_count()];
    g.roots().map(|r| count_from(g, r, &mut memo)).product()
}

fn count_from(g: &CausalGraph, n: NodeIdx, memo: &mut Vec<Option<f64>>) -> f64 {
    if let Some(c) = memo[n.0] {
        return c;
    }
    let outs = g.out_edges(n);
    let mut c = factorial(outs.len());
    for e in outs {
        c *= count_from(g, g.edge(*e).to, memo);
    }
    memo[n.0] = Some(c);
    c
}

/// Depth-first walker over one engine. Credits are accumulated in edge
/// index order of the engine's graph. With an RNG, each visit draws one
/// random child ordering instead of enumerating all of them.
pub(super) struct Walker<'a, 'g> {
    engine: &'a Engine<'g>,
    rt: &'a mut Runtime,
    rng: Option<ChaCha8Rng>,
    state: State,
    pub(super) credit: Vec<f64>,
    path: Vec<EdgeIdx>,
}

impl<'a, 'g> Walker<'a, 'g> {
    pub(super) fn new(engine: &'a Engine<'g>, rt: &'a mut Runtime, rng: Option<ChaCha8Rng>) -> Self {
        Walker {
            engine,
            rt,
            rng,
            state: engine.initial().clone(),
            credit: vec![0.0; engine.graph().edges().len()],
            path: Vec::new(),
        }
    }

    /// Fires `e`, then continues the search below its target.
    pub(super) fn traverse(&mut self, e: EdgeIdx, weight: f64) -> Result<(), FlowError> {
        let g = self.engine.graph();
        let before = self.engine.sink_value(&self.state);
        self.engine.transmit(&mut self.state, self.rt, e)?;
        self.path.push(e);
        let to = g.edge(e).to;
        if to == g.sink() {
            let delta = self.engine.sink_value(&self.state) - before;
            if delta != 0.0 {
                for p in &self.path {
                    self.credit[p.0] += weight * delta;
                }
            }
        } else {
            self.visit(to, weight)?;
        }
        self.path.pop();
        Ok(())
    }

    pub(super) fn visit(&mut self, node: NodeIdx, weight: f64) -> Result<(), FlowError> {
        let outs = self.engine.graph().out_edges(node);
        if outs.len() == 1 {
            return self.traverse(outs[0], weight);
        }
        if let Some(rng) = self.rng.as_mut() {
            let mut order = outs.to_vec();
            order.shuffle(rng);
            for e in order {
                self.traverse(e, weight)?;
            }
            return Ok(());
        }
        let w = weight / factorial(outs.len());
        let snapshot = self.state.clone();
        let mut perm: Vec<usize> = (0..outs.len()).collect();
        loop {
            for &i in &perm {
                self.traverse(outs[i], w)?;
            }
            if !next_permutation(&mut perm) {
                break;
            }
            // Every ordering ends in the same state, so only the start needs
            // restoring.
            self.state.clone_from(&snapshot);
        }
        Ok(())
    }
}

/// Exact edge credits by enumerating every configuration.
///
/// Orderings at the super-source are split across worker threads; each
/// worker owns its state and external-model processes, and partial credits
/// are summed in ordering index order.
pub fn shapley_flow_exact(g: &CausalGraph, bg: &Sample, fg: &Sample, config_cap: f64) -> Result<EdgeAttribution, FlowError> {
    let g = ensure_augmented(g);
    let count = configuration_count(&g);
    if count > config_cap {
        return Err(FlowError::ConfigurationCapExceeded { count, cap: config_cap });
    }
    let mut rt = Runtime::new();
    let engine = Engine::new(&g, bg, fg, &mut rt)?;
    let root = g.super_source().expect("augmented");
    let outs = g.out_edges(root).to_vec();
    let k = outs.len();
    let weight = 1.0 / factorial(k);
    let n_perms = (1..=k).product::<usize>();

    let parts: Vec<Result<Vec<f64>, FlowError>> = (0..n_perms)
        .into_par_iter()
        .map_init(Runtime::new, |rt, idx| {
            let mut w = Walker::new(&engine, rt, None);
            for i in nth_permutation(k, idx) {
                w.traverse(outs[i], weight)?;
            }
            Ok(w.credit)
        })
        .collect();

    let mut credit = vec![0.0; g.edges().len()];
    for part in parts {
        for (c, p) in credit.iter_mut().zip(part?) {
            *c += p;
        }
    }
    let delta = target_delta(&engine);
    Ok(EdgeAttribution::from_vec(&g, &credit, Method::Exact, delta))
}

pub(super) fn target_delta(engine: &Engine<'_>) -> f64 {
    let sink = engine.graph().sink().0;
    engine.foreground()[sink].as_real().expect("real sink") - engine.background()[sink].as_real().expect("real sink")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{augment_super_source, NodeSpec};

    fn or_game() -> (CausalGraph, Sample, Sample) {
        let nodes = vec![
            NodeSpec::source("X1"),
            NodeSpec::source("X2"),
            NodeSpec::expr_sink("f", &["X1", "X2"], "X1 or X2").unwrap(),
        ];
        (
            CausalGraph::new(nodes, "f").unwrap(),
            Sample::from_reals([("X1", 0.0), ("X2", 0.0)]),
            Sample::from_reals([("X1", 1.0), ("X2", 1.0)]),
        )
    }

    #[test]
    fn or_game_splits_evenly() {
        let (g, bg, fg) = or_game();
        let a = shapley_flow_exact(&g, &bg, &fg, DEFAULT_CONFIG_CAP).unwrap();
        assert_eq!(a.get("X1", "f"), Some(0.5));
        assert_eq!(a.get("X2", "f"), Some(0.5));
        assert_eq!(a.get("S*", "X1"), Some(0.5));
        assert_eq!(a.target_delta, 1.0);
        assert_eq!(a.method, Method::Exact);
    }

    #[test]
    fn flat_linear() {
        let nodes = vec![
            NodeSpec::source("X1"),
            NodeSpec::source("X2"),
            NodeSpec::expr_sink("f", &["X1", "X2"], "2 * X1 - X2").unwrap(),
        ];
        let g = CausalGraph::new(nodes, "f").unwrap();
        let bg = Sample::from_reals([("X1", 0.0), ("X2", 0.0)]);
        let fg = Sample::from_reals([("X1", 1.0), ("X2", 1.0)]);
        let a = shapley_flow_exact(&g, &bg, &fg, DEFAULT_CONFIG_CAP).unwrap();
        assert_eq!(a.get("X1", "f"), Some(2.0));
        assert_eq!(a.get("X2", "f"), Some(-1.0));
    }

    #[test]
    fn configuration_counts() {
        let (g, _, _) = or_game();
        assert_eq!(configuration_count(&augment_super_source(&g).unwrap()), 2.0);
        let nodes = vec![
            NodeSpec::source("A"),
            NodeSpec::expr("B", &["A"], "A").unwrap(),
            NodeSpec::expr("C", &["A"], "A").unwrap(),
            NodeSpec::expr_sink("f", &["A", "B", "C"], "A + B * C").unwrap(),
        ];
        let g = augment_super_source(&CausalGraph::new(nodes, "f").unwrap()).unwrap();
        // A has children B, C, f: 3!; B and C each have one child.
        assert_eq!(configuration_count(&g), 6.0);
    }

    #[test]
    fn cap_refuses() {
        let (g, bg, fg) = or_game();
        assert_eq!(
            shapley_flow_exact(&g, &bg, &fg, 1.0).unwrap_err(),
            FlowError::ConfigurationCapExceeded { count: 2.0, cap: 1.0 }
        );
    }
}

//! Reference attributions computed without message passing: classic
//! Shapley values by subset enumeration, independent SHAP on the flattened
//! model, Owen values for two-level coalition structures, and the direct
//! and intervention effects of linear systems.

use std::collections::BTreeMap;

use crate::flow::{forward, EdgeKey, FlowError, Runtime};
use crate::function::{FunctionSpec, Value};
use crate::graph::{CausalGraph, NodeIdx, NodeKind};
use crate::sample::Sample;

pub const MAX_SHAPLEY_PLAYERS: usize = 12;
pub const MAX_OWEN_PLAYERS: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BaselineError {
    #[error("{players} players exceed the limit of {limit}")]
    TooManyPlayers { players: usize, limit: usize },
    #[error("not a two-level tree: {0}")]
    NotATree(String),
    #[error("node `{0}` does not have a linear function")]
    NotLinear(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// A cooperative game over `players`, stored as its full payoff table:
/// `payoff[mask]` is the value of the coalition whose members are the set
/// bits of `mask`.
#[derive(Clone, Debug, PartialEq)]
pub struct SetGame {
    pub players: Vec<String>,
    payoff: Vec<f64>,
}

impl SetGame {
    pub fn from_fn(
        players: Vec<String>,
        mut payoff: impl FnMut(u32) -> Result<f64, BaselineError>,
    ) -> Result<Self, BaselineError> {
        let d = players.len();
        if d > MAX_SHAPLEY_PLAYERS {
            return Err(BaselineError::TooManyPlayers { players: d, limit: MAX_SHAPLEY_PLAYERS });
        }
        let payoff = (0..1u32 << d).map(&mut payoff).collect::<Result<_, _>>()?;
        Ok(SetGame { players, payoff })
    }

    /// Members take their foreground argument, everyone else the
    /// background one.
    pub fn from_model(
        model: &FunctionSpec,
        players: Vec<String>,
        bg: &[Value],
        fg: &[Value],
    ) -> Result<Self, BaselineError> {
        let mut rt = Runtime::new();
        SetGame::from_fn(players, |mask| {
            let args: Vec<Value> = (0..bg.len())
                .map(|i| if mask >> i & 1 == 1 { fg[i].clone() } else { bg[i].clone() })
                .collect();
            let v = rt
                .eval(0, model, &args)
                .map_err(|source| FlowError::Eval { node: "model".into(), source })?;
            Ok(v.as_real().ok_or_else(|| FlowError::CategoricalSink("model".into()))?)
        })
    }

    pub fn player_count(&self) -> usize {
        self.players.len()
    }

    pub fn value(&self, mask: u32) -> f64 {
        self.payoff[mask as usize]
    }
}

/// Classic Shapley values by weighted subset enumeration.
pub fn brute_force_shapley(game: &SetGame) -> Vec<f64> {
    let d = game.player_count();
    let fact: Vec<f64> = (0..=d).scan(1.0, |acc, i| {
        if i > 0 {
            *acc *= i as f64;
        }
        Some(*acc)
    })
    .collect();
    (0..d)
        .map(|i| {
            let bit = 1u32 << i;
            (0..1u32 << d)
                .filter(|s| s & bit == 0)
                .map(|s| {
                    let k = s.count_ones() as usize;
                    let w = fact[k] * fact[d - k - 1] / fact[d];
                    w * (game.value(s | bit) - game.value(s))
                })
                .sum()
        })
        .collect()
}

/// Shapley values of `model`'s inputs when each input is perturbed on its
/// own, as if the inputs were independent features.
pub fn independent_shap(
    model: &FunctionSpec,
    inputs: &[String],
    bg: &Sample,
    fg: &Sample,
) -> Result<BTreeMap<String, f64>, BaselineError> {
    let pick = |s: &Sample| {
        inputs
            .iter()
            .map(|id| s.get(id).cloned().ok_or_else(|| FlowError::MissingSource(id.clone())))
            .collect::<Result<Vec<_>, _>>()
    };
    let game = SetGame::from_model(model, inputs.to_vec(), &pick(bg)?, &pick(fg)?)?;
    Ok(inputs.iter().cloned().zip(brute_force_shapley(&game)).collect())
}

/// Independent SHAP on the sink's inputs, with feature values taken from
/// forward evaluation of the graph on each sample.
pub fn independent_shap_graph(g: &CausalGraph, bg: &Sample, fg: &Sample) -> Result<BTreeMap<String, f64>, BaselineError> {
    let mut rt = Runtime::new();
    let (bgv, fgv) = (forward(g, bg, false, &mut rt)?, forward(g, fg, true, &mut rt)?);
    let parents = g.node(g.sink()).parents.clone();
    let as_sample = |vals: &[Value]| Sample {
        values: parents.iter().map(|p| (p.clone(), vals[g.node_index(p).expect("parent").0].clone())).collect(),
    };
    let model = g.node(g.sink()).function.as_ref().expect("sink has a function");
    independent_shap(model, &parents, &as_sample(&bgv), &as_sample(&fgv))
}

/// Owen values of the sink's inputs under the coalition structure of a
/// two-level tree: each sink input ("leaf") is either a source, forming a
/// block by itself, or has a single source parent, and leaves sharing that
/// parent form one block. Leaves have the sink as their only child and
/// block parents feed nothing but their leaves. Values are keyed by the leaf-to-sink edge.
pub fn owen_oracle(g: &CausalGraph, bg: &Sample, fg: &Sample) -> Result<BTreeMap<EdgeKey, f64>, BaselineError> {
    let sink = g.sink();
    let leaves: Vec<NodeIdx> = g.in_edges(sink).iter().map(|e| g.edge(*e).from).collect();
    let mut blocks: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, &leaf) in leaves.iter().enumerate() {
        let node = g.node(leaf);
        let group = match node.kind {
            NodeKind::Source => node.id.clone(),
            NodeKind::Internal if node.parents.len() == 1 => {
                let p = g.edge(g.in_edges(leaf)[0]).from;
                if g.node(p).kind != NodeKind::Source {
                    return Err(BaselineError::NotATree(format!("`{}` is not fed by a source", node.id)));
                }
                g.id(p).to_string()
            }
            _ => return Err(BaselineError::NotATree(format!("leaf `{}` must be a source or have one parent", node.id))),
        };
        blocks.entry(group).or_default().push(i);
    }
    for (i, n) in g.nodes().iter().enumerate() {
        let idx = NodeIdx(i);
        let children: Vec<NodeIdx> = g.out_edges(idx).iter().map(|e| g.edge(*e).to).collect();
        let ok = if idx == sink || n.kind == NodeKind::SuperSource {
            true
        } else if leaves.contains(&idx) {
            children.len() == 1
        } else {
            n.kind == NodeKind::Source && children.iter().all(|c| leaves.contains(c) && g.node(*c).kind == NodeKind::Internal)
        };
        if !ok {
            return Err(BaselineError::NotATree(format!("`{}` does not fit a two-level tree", n.id)));
        }
    }
    let d = leaves.len();
    if d > MAX_OWEN_PLAYERS {
        return Err(BaselineError::TooManyPlayers { players: d, limit: MAX_OWEN_PLAYERS });
    }

    let mut rt = Runtime::new();
    let (bgv, fgv) = (forward(g, bg, false, &mut rt)?, forward(g, fg, true, &mut rt)?);
    let pick = |vals: &[Value]| leaves.iter().map(|l| vals[l.0].clone()).collect::<Vec<_>>();
    let players = leaves.iter().map(|l| g.id(*l).to_string()).collect();
    let model = g.node(sink).function.as_ref().expect("sink has a function");
    let game = SetGame::from_model(model, players, &pick(&bgv), &pick(&fgv))?;

    let blocks: Vec<Vec<usize>> = blocks.into_values().collect();
    let orders = block_orders(&blocks);
    let mut value = vec![0.0; d];
    for order in &orders {
        let mut mask = 0u32;
        for &p in order {
            let before = game.value(mask);
            mask |= 1 << p;
            value[p] += game.value(mask) - before;
        }
    }
    let n = orders.len() as f64;
    Ok(leaves
        .iter()
        .zip(value)
        .map(|(l, v)| (EdgeKey::new(g.id(*l), g.id(sink)), v / n))
        .collect())
}

/// Every ordering of the players in which each block is contiguous.
fn block_orders(blocks: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let inner: Vec<Vec<Vec<usize>>> = blocks.iter().map(|b| permutations(b)).collect();
    let mut out = Vec::new();
    for outer in permutations(&(0..blocks.len()).collect::<Vec<_>>()) {
        let mut acc: Vec<Vec<usize>> = vec![Vec::new()];
        for b in outer {
            acc = acc
                .iter()
                .flat_map(|a| inner[b].iter().map(move |p| [a.as_slice(), p].concat()))
                .collect();
        }
        out.extend(acc);
    }
    out
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Direct and total effects of each non-sink node in a linear system.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthEffects {
    /// Sink weight on the node times the node's change; 0 off the sink's
    /// parents.
    pub direct: BTreeMap<String, f64>,
    /// Output change when only this node is set to its foreground value,
    /// with every source at background.
    pub indirect: BTreeMap<String, f64>,
}

pub fn linear_ground_truth(g: &CausalGraph, bg: &Sample, fg: &Sample) -> Result<GroundTruthEffects, BaselineError> {
    for n in g.nodes() {
        if let Some(f) = &n.function {
            if !matches!(f, FunctionSpec::Linear { .. }) {
                return Err(BaselineError::NotLinear(n.id.clone()));
            }
        }
    }
    let mut rt = Runtime::new();
    let bgv = reals(&forward(g, bg, false, &mut rt)?);
    let fgv = reals(&forward(g, fg, true, &mut rt)?);
    let sink = g.sink();
    let base = bgv[sink.0];
    let Some(FunctionSpec::Linear { weights, .. }) = &g.node(sink).function else {
        return Err(BaselineError::NotLinear(g.id(sink).to_string()));
    };

    let mut direct = BTreeMap::new();
    let mut indirect = BTreeMap::new();
    for i in 0..g.node_count() {
        let n = NodeIdx(i);
        let node = g.node(n);
        if n == sink || node.kind == NodeKind::SuperSource {
            continue;
        }
        let w = g.in_edges(sink).iter().find(|e| g.edge(**e).from == n).map_or(0.0, |e| weights[g.edge(*e).slot]);
        direct.insert(node.id.clone(), w * (fgv[i] - bgv[i]));
        indirect.insert(node.id.clone(), intervene(g, &bgv, n, fgv[i])[sink.0] - base);
    }
    Ok(GroundTruthEffects { direct, indirect })
}

fn reals(vals: &[Value]) -> Vec<f64> {
    vals.iter().map(|v| v.as_real().unwrap_or(f64::NAN)).collect()
}

/// Forward values of a linear system under `do(node = value)`, everything
/// else starting from `bg`.
fn intervene(g: &CausalGraph, bg: &[f64], node: NodeIdx, value: f64) -> Vec<f64> {
    let mut v = bg.to_vec();
    for &n in g.topological_order() {
        if n == node {
            v[n.0] = value;
            continue;
        }
        if let Some(FunctionSpec::Linear { weights, bias }) = &g.node(n).function {
            v[n.0] = bias + g.in_edges(n).iter().zip(weights).map(|(e, w)| w * v[g.edge(*e).from.0]).sum::<f64>();
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeSpec;
    use proptest::prelude::*;

    fn names(d: usize) -> Vec<String> {
        (1..=d).map(|i| format!("X{i}")).collect()
    }

    /// Shapley values by averaging marginal contributions over all orders.
    fn by_permutation(game: &SetGame) -> Vec<f64> {
        let d = game.player_count();
        let orders = permutations(&(0..d).collect::<Vec<_>>());
        let mut v = vec![0.0; d];
        for o in &orders {
            let mut mask = 0;
            for &p in o {
                let before = game.value(mask);
                mask |= 1 << p;
                v[p] += game.value(mask) - before;
            }
        }
        v.iter().map(|x| x / orders.len() as f64).collect()
    }

    #[test]
    fn or_game_and_linear() {
        let or = SetGame::from_fn(names(2), |m| Ok(if m != 0 { 1.0 } else { 0.0 })).unwrap();
        assert_eq!(brute_force_shapley(&or), vec![0.5, 0.5]);
        let lin = FunctionSpec::Linear { weights: vec![2.0, -1.0], bias: 0.0 };
        let bg = Sample::from_reals([("X1", 0.0), ("X2", 0.0)]);
        let fg = Sample::from_reals([("X1", 1.0), ("X2", 1.0)]);
        let v = independent_shap(&lin, &names(2), &bg, &fg).unwrap();
        assert_eq!(v["X1"], 2.0);
        assert_eq!(v["X2"], -1.0);
    }

    #[test]
    fn constant_model_gets_nothing() {
        let f = FunctionSpec::parse_expression("3", &names(2)).unwrap();
        let bg = Sample::from_reals([("X1", 0.0), ("X2", 4.0)]);
        let fg = Sample::from_reals([("X1", 1.0), ("X2", 1.0)]);
        assert!(independent_shap(&f, &names(2), &bg, &fg).unwrap().values().all(|v| *v == 0.0));
    }

    #[test]
    fn too_many_players() {
        let err = SetGame::from_fn(names(13), |_| Ok(0.0)).unwrap_err();
        assert_eq!(err, BaselineError::TooManyPlayers { players: 13, limit: 12 });
    }

    proptest! {
        #[test]
        fn subset_and_permutation_forms_agree(d in 1usize..6, table in prop::collection::vec(-5.0f64..5.0, 32)) {
            let game = SetGame::from_fn(names(d), |m| Ok(table[m as usize])).unwrap();
            let a = brute_force_shapley(&game);
            let b = by_permutation(&game);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            let total: f64 = a.iter().sum();
            prop_assert!((total - (game.value((1 << d) - 1) - game.value(0))).abs() < 1e-12);
        }

        #[test]
        fn dummy_and_symmetry(table in prop::collection::vec(-5.0f64..5.0, 8)) {
            // Player 3 never matters; players 1 and 2 are interchangeable.
            let sym = |m: u32| table[((m & 1) + (m >> 1 & 1)) as usize];
            let game = SetGame::from_fn(names(3), |m| Ok(sym(m))).unwrap();
            let v = brute_force_shapley(&game);
            prop_assert!(v[2].abs() < 1e-12);
            prop_assert!((v[0] - v[1]).abs() < 1e-12);
        }
    }

    fn tree(sink_expr: &str) -> CausalGraph {
        let nodes = vec![
            NodeSpec::source("G"),
            NodeSpec::expr("X1", &["G"], "G").unwrap(),
            NodeSpec::expr("X2", &["G"], "G").unwrap(),
            NodeSpec::source("X3"),
            NodeSpec::expr_sink("f", &["X1", "X2", "X3"], sink_expr).unwrap(),
        ];
        CausalGraph::new(nodes, "f").unwrap()
    }

    #[test]
    fn owen_or_game() {
        let g = tree("X1 or X3");
        let bg = Sample::from_reals([("G", 0.0), ("X3", 0.0)]);
        let fg = Sample::from_reals([("G", 1.0), ("X3", 1.0)]);
        let o = owen_oracle(&g, &bg, &fg).unwrap();
        assert_eq!(o[&EdgeKey::new("X1", "f")], 0.5);
        assert_eq!(o[&EdgeKey::new("X2", "f")], 0.0);
        assert_eq!(o[&EdgeKey::new("X3", "f")], 0.5);
        assert_eq!(block_orders(&[vec![0, 1], vec![2]]).len(), 4);
    }

    #[test]
    fn owen_additive_and_single_block() {
        let g = tree("X1 + 2 * X2 - X3");
        let bg = Sample::from_reals([("G", 0.0), ("X3", 1.0)]);
        let fg = Sample::from_reals([("G", 1.0), ("X3", 3.0)]);
        let o = owen_oracle(&g, &bg, &fg).unwrap();
        assert_eq!(o[&EdgeKey::new("X2", "f")], 2.0);
        assert_eq!(o[&EdgeKey::new("X3", "f")], -2.0);

        let orders = block_orders(&[vec![0, 1, 2]]);
        assert_eq!(orders, permutations(&[0, 1, 2]));
    }

    #[test]
    fn owen_rejects_non_trees() {
        let nodes = vec![
            NodeSpec::source("A"),
            NodeSpec::expr("B", &["A"], "A").unwrap(),
            NodeSpec::expr_sink("f", &["A", "B"], "A + B").unwrap(),
        ];
        let g = CausalGraph::new(nodes, "f").unwrap();
        let s = Sample::from_reals([("A", 0.0)]);
        assert!(matches!(owen_oracle(&g, &s, &s), Err(BaselineError::NotATree(_))));
    }

    #[test]
    fn chain_ground_truth() {
        let id = || FunctionSpec::Linear { weights: vec![1.0], bias: 0.0 };
        let nodes = vec![
            NodeSpec::source("X1"),
            NodeSpec::internal("X2", &["X1"], id()),
            NodeSpec::internal("X3", &["X2"], id()),
            NodeSpec::sink("f", &["X1", "X3"], FunctionSpec::Linear { weights: vec![0.0, 1.0], bias: 0.0 }),
        ];
        let g = CausalGraph::new(nodes, "f").unwrap();
        let bg = Sample::from_reals([("X1", 0.0)]);
        let fg = Sample::from_reals([("X1", -1.82)]);
        let t = linear_ground_truth(&g, &bg, &fg).unwrap();
        assert_eq!(t.direct["X3"], -1.82);
        assert_eq!(t.direct["X1"], 0.0);
        assert_eq!(t.direct["X2"], 0.0);
        for v in t.indirect.values() {
            assert_eq!(*v, -1.82);
        }
        let shap = independent_shap_graph(&g, &bg, &fg).unwrap();
        assert_eq!(shap["X1"], 0.0);
        assert_eq!(shap["X3"], -1.82);
    }

    #[test]
    fn rejects_nonlinear() {
        let nodes = vec![NodeSpec::source("A"), NodeSpec::expr_sink("f", &["A"], "A * A").unwrap()];
        let g = CausalGraph::new(nodes, "f").unwrap();
        let s = Sample::from_reals([("A", 0.0)]);
        assert_eq!(linear_ground_truth(&g, &s, &s).unwrap_err(), BaselineError::NotLinear("f".into()));
    }
}

use flowcredit::flow::{node_attribution, shapley_flow_exact, shapley_flow_paths, DEFAULT_CONFIG_CAP};
use flowcredit::synth::{make_chain, make_diamond, make_or};
use flowcredit::{shapley_flow, CausalGraph, Estimator, FunctionSpec, NodeSpec, Sample};

fn exact(g: &CausalGraph, bg: &Sample, fg: &Sample) -> flowcredit::EdgeAttribution {
    shapley_flow_exact(g, bg, fg, DEFAULT_CONFIG_CAP).unwrap()
}

#[test]
fn or_splits_evenly() {
    let (g, bg, fg) = make_or();
    let a = exact(&g, &bg, &fg);
    for (u, v) in [("X1", "f"), ("X2", "f"), ("S*", "X1"), ("S*", "X2")] {
        assert_eq!(a.get(u, v), Some(0.5), "{u}->{v}");
    }
    assert_eq!(a.target_delta, 1.0);
}

#[test]
fn chain_credits_only_the_path_that_matters() {
    for len in 2..=6 {
        let (g, bg, fg) = make_chain(len, 3.25).unwrap();
        let a = exact(&g, &bg, &fg);
        for i in 1..len {
            assert_eq!(a.get(&format!("X{i}"), &format!("X{}", i + 1)), Some(3.25));
            assert_eq!(a.get(&format!("X{i}"), "f"), Some(0.0));
        }
        assert_eq!(a.get(&format!("X{len}"), "f"), Some(3.25));
    }
}

#[test]
fn diamond_depends_on_update_order() {
    // A: 0 -> 1, B: 0 -> 2, C: 1 -> 2, f = B*C: 0 -> 4.
    // Updating B first earns it 2 then C 2; C first earns 0 then B 4.
    let (g, bg, fg) = make_diamond();
    let a = exact(&g, &bg, &fg);
    assert_eq!(a.get("A", "B"), Some(3.0));
    assert_eq!(a.get("B", "f"), Some(3.0));
    assert_eq!(a.get("A", "C"), Some(1.0));
    assert_eq!(a.get("C", "f"), Some(1.0));
    assert_eq!(a.get("S*", "A"), Some(4.0));
    let (paths, _) = shapley_flow_paths(&g, &bg, &fg, 1e3).unwrap();
    assert_eq!(paths.len(), 2);
}

#[test]
fn flat_linear_model_gets_weighted_changes() {
    let nodes = vec![
        NodeSpec::source("a"),
        NodeSpec::source("b"),
        NodeSpec::source("c"),
        NodeSpec::sink("y", &["a", "b", "c"], FunctionSpec::Linear { weights: vec![2.0, -1.0, 0.5], bias: 7.0 }),
    ];
    let g = CausalGraph::new(nodes, "y").unwrap();
    let bg = Sample::from_reals([("a", 1.0), ("b", 1.0), ("c", 4.0)]);
    let fg = Sample::from_reals([("a", 2.0), ("b", 3.0), ("c", 0.0)]);
    let a = exact(&g, &bg, &fg);
    for (x, want) in [("a", 2.0), ("b", -2.0), ("c", -2.0)] {
        let got = a.get(x, "y").unwrap();
        assert!((got - want).abs() < 1e-12, "{x}: {got}");
    }
}

/// The same mediated system with every parent list in a different order.
fn mediated(reversed: bool) -> CausalGraph {
    let order = |ps: &[&'static str]| -> Vec<&'static str> {
        let mut v = ps.to_vec();
        if reversed {
            v.reverse();
        }
        v
    };
    let nodes = vec![
        NodeSpec::source("A"),
        NodeSpec::source("B"),
        NodeSpec::expr("C", &order(&["A", "B"]), "A * B - 1").unwrap(),
        NodeSpec::expr("D", &order(&["A", "C"]), "max(A, C) + abs(C)").unwrap(),
        NodeSpec::expr_sink("f", &order(&["B", "C", "D"]), "B * D - min(C, 0.5)").unwrap(),
    ];
    let nodes = if reversed { nodes.into_iter().rev().collect() } else { nodes };
    CausalGraph::new(nodes, "f").unwrap()
}

#[test]
fn parent_and_node_order_do_not_matter() {
    let bg = Sample::from_reals([("A", -0.5), ("B", 2.0)]);
    let fg = Sample::from_reals([("A", 1.5), ("B", -1.0)]);
    let a = exact(&mediated(false), &bg, &fg);
    let b = exact(&mediated(true), &bg, &fg);
    assert_eq!(a.credit.keys().collect::<Vec<_>>(), b.credit.keys().collect::<Vec<_>>());
    for (k, x) in &a.credit {
        assert!((x - b.credit[k]).abs() < 1e-12, "{k}: {x} vs {}", b.credit[k]);
    }
}

#[test]
fn node_view_sums_outgoing_credit() {
    let (g, bg, fg) = make_diamond();
    let a = shapley_flow(&g, &bg, &fg, Estimator::default()).unwrap();
    let psi = node_attribution(&a, &g);
    assert_eq!(psi["A"], 4.0);
    assert_eq!(psi["B"], 3.0);
    assert_eq!(psi["C"], 1.0);
}

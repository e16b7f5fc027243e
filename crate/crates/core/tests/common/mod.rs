#![allow(dead_code)]

use std::collections::BTreeMap;

use flowcredit::function::{BinOp, Builtin, Expr, Expression};
use flowcredit::{CausalGraph, EdgeAttribution, EdgeKey, FunctionSpec, NodeSpec, Sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// The same graph with the sink's function replaced.
pub fn with_sink(g: &CausalGraph, f: FunctionSpec) -> CausalGraph {
    let sink = g.id(g.sink()).to_string();
    let nodes = g
        .nodes()
        .iter()
        .cloned()
        .map(|mut n| {
            if n.id == sink {
                n.function = Some(f.clone());
            }
            n
        })
        .collect();
    CausalGraph::new(nodes, &sink).expect("same topology")
}

/// A second sink function over the same inputs, nonlinear in the first
/// and last of them.
pub fn alternative_sink(g: &CausalGraph) -> Expr {
    let k = g.node(g.sink()).parents.len();
    let first = Expr::Var(0);
    let last = Expr::Var(k - 1);
    Expr::binary(
        BinOp::Add,
        Expr::binary(BinOp::Mul, Expr::Call(Builtin::Max, vec![first.clone(), Expr::Num(0.0)]), last.clone()),
        Expr::binary(BinOp::Sub, Expr::Call(Builtin::Abs, vec![last]), first),
    )
}

/// Graphs with sinks `v` and `alpha*u + beta*v`, where `u` is `g`'s sink.
pub fn sink_combination(g: &CausalGraph, alpha: f64, beta: f64) -> (CausalGraph, CausalGraph) {
    let sink = g.node(g.sink());
    let u = sink.function.as_ref().and_then(FunctionSpec::to_expr).expect("sink has an expression form");
    let v = alternative_sink(g);
    let w = Expr::binary(
        BinOp::Add,
        Expr::binary(BinOp::Mul, Expr::Num(alpha), u),
        Expr::binary(BinOp::Mul, Expr::Num(beta), v.clone()),
    );
    let expr = |ast| FunctionSpec::Expression(Expression { ast, vars: sink.parents.clone() });
    (with_sink(g, expr(v)), with_sink(g, expr(w)))
}

/// Largest |a - b| over the union of edges, treating missing edges as 0.
pub fn max_diff(a: &BTreeMap<EdgeKey, f64>, b: &BTreeMap<EdgeKey, f64>) -> f64 {
    a.keys()
        .chain(b.keys())
        .map(|k| (a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0)).abs())
        .fold(0.0, f64::max)
}

/// `alpha * a + beta * b`, edge by edge.
pub fn combine(a: &EdgeAttribution, alpha: f64, b: &EdgeAttribution, beta: f64) -> BTreeMap<EdgeKey, f64> {
    a.credit.iter().map(|(k, x)| (k.clone(), alpha * x + beta * b.credit.get(k).copied().unwrap_or(0.0))).collect()
}

/// `d` independent standard-normal sources feeding a random nonlinear sink
/// directly, with a background and a foreground sample.
pub fn flat_graph(d: usize, seed: u64) -> (CausalGraph, Sample, Sample) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = (1..=d).map(|i| format!("X{i}")).collect();
    let mut ast: Option<Expr> = None;
    for k in 0..d {
        let coef = (rng.random_range(-2.0..2.0f64) * 4.0).round() / 4.0;
        let term = match rng.random_range(0..3) {
            0 => Expr::Var(k),
            1 => Expr::Call(Builtin::Abs, vec![Expr::Var(k)]),
            _ => Expr::Call(Builtin::Max, vec![Expr::Var(k), Expr::Num(0.0)]),
        };
        let term = Expr::binary(BinOp::Mul, Expr::Num(coef), term);
        ast = Some(match ast {
            None => term,
            Some(acc) => match rng.random_range(0..4) {
                0 => Expr::binary(BinOp::Mul, acc, term),
                1 => Expr::Call(Builtin::Max, vec![acc, term]),
                2 => Expr::Call(Builtin::Min, vec![acc, term]),
                _ => Expr::binary(BinOp::Add, acc, term),
            },
        });
    }
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut nodes: Vec<NodeSpec> = names.iter().map(|n| NodeSpec::source(n.clone())).collect();
    let f = FunctionSpec::Expression(Expression { ast: ast.expect("d >= 1"), vars: names.clone() });
    nodes.push(NodeSpec::sink("f", &refs, f));
    let mut draw = || -> Sample {
        let mut s = Sample::new();
        for n in &names {
            let v: f64 = rng.sample(StandardNormal);
            s = s.with(n.clone(), v);
        }
        s
    };
    let bg = draw();
    let fg = draw();
    (CausalGraph::new(nodes, "f").expect("flat graph"), bg, fg)
}

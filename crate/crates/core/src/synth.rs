//! Synthetic systems: random linear DAGs, random nonlinear DAGs for
//! property suites, the copy chain, the OR game, a nonlinear diamond, and
//! noise-node augmentation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::flow::{average, shapley_flow, EdgeAttribution, Estimator, FlowError, Runtime};
use crate::function::{inverse_cdf, BinOp, Builtin, Expr, Expression, FunctionSpec, NoiseMode, Value};
use crate::graph::{CausalGraph, GraphError, NodeKind, NodeSpec};
use crate::sample::Sample;

/// Attempts before [`gen_random_linear_graph`] gives up on drawing a sink
/// with at least one parent.
pub const MAX_GRAPH_RETRIES: usize = 100;
/// Noise draws averaged when a foreground noise value is only known to lie
/// in an interval.
pub const DEFAULT_NOISE_DRAWS: usize = 16;

const TOPOLOGY_STREAM: u64 = 0;
const WEIGHT_STREAM: u64 = 1;
const SAMPLE_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("sink received no edges in {0} attempts")]
    DegenerateGraph(usize),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Nodes `X1 .. X{n-1}` and sink `f`, with `f` as node `n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomGraphConfig {
    pub n: usize,
    pub p: f64,
    pub seed: u64,
}

impl RandomGraphConfig {
    fn validate(&self) -> Result<(), SynthError> {
        if self.n < 2 {
            return Err(SynthError::InvalidConfig(format!("n = {} is below 2", self.n)));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(SynthError::InvalidConfig(format!("p = {} is outside [0, 1]", self.p)));
        }
        Ok(())
    }
}

fn node_name(i: usize, n: usize) -> String {
    if i == n {
        "f".to_string()
    } else {
        format!("X{i}")
    }
}

/// Parent lists (1-based, ascending) for a random forward DAG. Nodes left
/// without children are wired to the sink so the graph has one sink.
fn random_topology(cfg: &RandomGraphConfig) -> Result<Vec<Vec<usize>>, SynthError> {
    let mut topo = rng(cfg.seed, TOPOLOGY_STREAM);
    let n = cfg.n;
    for _ in 0..MAX_GRAPH_RETRIES {
        let mut parents = vec![Vec::new(); n + 1];
        for (i, ps) in parents.iter_mut().enumerate().skip(2) {
            for j in 1..i {
                if topo.random_bool(cfg.p) {
                    ps.push(j);
                }
            }
        }
        if parents[n].is_empty() {
            continue;
        }
        for j in 1..n {
            if !(j + 1..=n).any(|i| parents[i].contains(&j)) {
                parents[n].push(j);
            }
        }
        parents[n].sort_unstable();
        return Ok(parents);
    }
    Err(SynthError::DegenerateGraph(MAX_GRAPH_RETRIES))
}

/// Draws independent standard-normal source values.
#[derive(Clone, Debug)]
pub struct SampleGenerator {
    sources: Vec<String>,
    rng: ChaCha8Rng,
}

impl SampleGenerator {
    pub fn new(sources: Vec<String>, seed: u64) -> Self {
        SampleGenerator { sources, rng: rng(seed, SAMPLE_STREAM) }
    }

    pub fn sample(&mut self) -> Sample {
        let mut s = Sample::new();
        for id in &self.sources {
            let v: f64 = self.rng.sample(StandardNormal);
            s.values.insert(id.clone(), Value::Real(v));
        }
        s
    }
}

/// A random linear system: each node `i` receives an edge from each `j < i`
/// with probability `p`, every node function is linear with standard-normal
/// weights and no bias. Deterministic per seed.
pub fn gen_random_linear_graph(cfg: &RandomGraphConfig) -> Result<(CausalGraph, SampleGenerator), SynthError> {
    cfg.validate()?;
    let parents = random_topology(cfg)?;
    let mut weights = rng(cfg.seed, WEIGHT_STREAM);
    let n = cfg.n;
    let mut nodes = Vec::with_capacity(n);
    let mut sources = Vec::new();
    for (i, ps) in parents.iter().enumerate().skip(1) {
        let id = node_name(i, n);
        if ps.is_empty() {
            sources.push(id.clone());
            nodes.push(NodeSpec::source(id));
            continue;
        }
        let names: Vec<String> = ps.iter().map(|j| node_name(*j, n)).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let w: Vec<f64> = (0..names.len()).map(|_| weights.sample(StandardNormal)).collect();
        let f = FunctionSpec::Linear { weights: w, bias: 0.0 };
        nodes.push(if i == n { NodeSpec::sink(id, &refs, f) } else { NodeSpec::internal(id, &refs, f) });
    }
    let g = CausalGraph::new(nodes, "f")?;
    Ok((g, SampleGenerator::new(sources, cfg.seed)))
}

/// A random nonlinear system over the same topology scheme. Each node
/// combines its parents with sums, products, `max`, `min` and `abs`; with
/// probability `ignore` a parent (other than the first) is left out of the
/// expression, producing edges that can never matter.
pub fn gen_random_expression_graph(cfg: &RandomGraphConfig, ignore: f64) -> Result<(CausalGraph, SampleGenerator), SynthError> {
    cfg.validate()?;
    let parents = random_topology(cfg)?;
    let mut r = rng(cfg.seed, WEIGHT_STREAM);
    let n = cfg.n;
    let mut nodes = Vec::with_capacity(n);
    let mut sources = Vec::new();
    for (i, ps) in parents.iter().enumerate().skip(1) {
        let id = node_name(i, n);
        if ps.is_empty() {
            sources.push(id.clone());
            nodes.push(NodeSpec::source(id));
            continue;
        }
        let names: Vec<String> = ps.iter().map(|j| node_name(*j, n)).collect();
        let mut ast: Option<Expr> = None;
        for k in 0..names.len() {
            if k > 0 && r.random_bool(ignore) {
                continue;
            }
            let coef = (r.random_range(-2.0..2.0f64) * 4.0).round() / 4.0;
            let term = match r.random_range(0..3) {
                0 => Expr::Var(k),
                1 => Expr::Call(Builtin::Abs, vec![Expr::Var(k)]),
                _ => Expr::Call(Builtin::Max, vec![Expr::Var(k), Expr::Num(0.0)]),
            };
            let term = Expr::binary(BinOp::Mul, Expr::Num(if coef == 0.0 { 1.0 } else { coef }), term);
            ast = Some(match ast {
                None => term,
                Some(acc) => match r.random_range(0..4) {
                    0 => Expr::binary(BinOp::Mul, acc, term),
                    1 => Expr::Call(Builtin::Max, vec![acc, term]),
                    2 => Expr::Call(Builtin::Min, vec![acc, term]),
                    _ => Expr::binary(BinOp::Add, acc, term),
                },
            });
        }
        let f = FunctionSpec::Expression(Expression { ast: ast.expect("first parent is kept"), vars: names.clone() });
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        nodes.push(if i == n { NodeSpec::sink(id, &refs, f) } else { NodeSpec::internal(id, &refs, f) });
    }
    let g = CausalGraph::new(nodes, "f")?;
    Ok((g, SampleGenerator::new(sources, cfg.seed)))
}

fn copy_of(parent: &str) -> FunctionSpec {
    FunctionSpec::Expression(Expression { ast: Expr::Var(0), vars: vec![parent.to_string()] })
}

/// `X1 -> X2 -> ... -> Xlen`, each a copy of its predecessor, plus edges
/// `Xi -> f` for every `i`; `f` reads only `Xlen`. The background sets `X1`
/// to 0 and the foreground to `delta`.
pub fn make_chain(len: usize, delta: f64) -> Result<(CausalGraph, Sample, Sample), SynthError> {
    if len < 2 {
        return Err(SynthError::InvalidConfig(format!("chain length {len} is below 2")));
    }
    let names: Vec<String> = (1..=len).map(|i| format!("X{i}")).collect();
    let mut nodes = vec![NodeSpec::source(names[0].clone())];
    for i in 1..len {
        nodes.push(NodeSpec::internal(names[i].clone(), &[names[i - 1].as_str()], copy_of(&names[i - 1])));
    }
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let f = FunctionSpec::Expression(Expression { ast: Expr::Var(len - 1), vars: names.clone() });
    nodes.push(NodeSpec::sink("f", &refs, f));
    let g = CausalGraph::new(nodes, "f")?;
    Ok((g, Sample::from_reals([("X1", 0.0)]), Sample::from_reals([("X1", delta)])))
}

/// `f = X1 or X2`, explained from (0, 0) to (1, 1).
pub fn make_or() -> (CausalGraph, Sample, Sample) {
    let nodes = vec![
        NodeSpec::source("X1"),
        NodeSpec::source("X2"),
        NodeSpec::expr_sink("f", &["X1", "X2"], "X1 or X2").expect("valid expression"),
    ];
    (
        CausalGraph::new(nodes, "f").expect("valid graph"),
        Sample::from_reals([("X1", 0.0), ("X2", 0.0)]),
        Sample::from_reals([("X1", 1.0), ("X2", 1.0)]),
    )
}

/// `A` feeds `B = 2A` and `C = A + 1`, and `f = B * C`, explained from
/// `A = 0` to `A = 1`. The order in which `A` updates its children changes
/// how the output change splits between them, so sampled estimates have
/// nonzero variance.
pub fn make_diamond() -> (CausalGraph, Sample, Sample) {
    let nodes = vec![
        NodeSpec::source("A"),
        NodeSpec::expr("B", &["A"], "2 * A").expect("valid expression"),
        NodeSpec::expr("C", &["A"], "A + 1").expect("valid expression"),
        NodeSpec::expr_sink("f", &["B", "C"], "B * C").expect("valid expression"),
    ];
    (
        CausalGraph::new(nodes, "f").expect("valid graph"),
        Sample::from_reals([("A", 0.0)]),
        Sample::from_reals([("A", 1.0)]),
    )
}

/// Half-open sub-interval of `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseInterval {
    pub lower: f64,
    pub upper: f64,
}

impl NoiseInterval {
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        rng.random_range(self.lower..self.upper)
    }
}

/// The noise values under which inverse-CDF sampling over `probs` yields
/// category `observed`.
pub fn infer_noise_interval(probs: &[f64], observed: usize) -> Result<NoiseInterval, SynthError> {
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(SynthError::InvalidDistribution("probabilities must be finite and non-negative".into()));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(SynthError::InvalidDistribution(format!("probabilities sum to {total}")));
    }
    if observed >= probs.len() {
        return Err(SynthError::InvalidDistribution(format!("category {observed} of {}", probs.len())));
    }
    if probs[observed] == 0.0 {
        return Err(SynthError::InvalidDistribution(format!("category {observed} has probability 0")));
    }
    let lower: f64 = probs[..observed].iter().sum();
    let upper = if probs[observed + 1..].iter().all(|p| *p == 0.0) { 1.0 } else { (lower + probs[observed]).min(1.0) };
    Ok(NoiseInterval { lower, upper })
}

/// How a node's residual variation is modelled after augmentation.
#[derive(Clone, Debug, PartialEq)]
pub enum ResidualMode {
    /// The node becomes its old function plus the noise value.
    Continuous,
    /// The node picks a category by inverse CDF of the noise value; one
    /// probability function per category over the original parents.
    Categorical { probs: Vec<FunctionSpec>, labels: Option<Vec<String>> },
}

/// Name given to the noise parent of `node`.
pub fn noise_id(node: &str) -> String {
    format!("N_{node}")
}

/// Gives every internal node its own noise source, appended as the last
/// parent. Nodes absent from `modes` are continuous. Nodes that already
/// have a noise parent are left alone, so augmenting twice changes nothing.
pub fn augment_noise_nodes(g: &CausalGraph, modes: &BTreeMap<String, ResidualMode>) -> Result<CausalGraph, SynthError> {
    let super_id = g.super_source().map(|s| g.id(s).to_string());
    let mut nodes = Vec::with_capacity(g.node_count() * 2);
    for n in g.nodes() {
        let noisy = n.parents.iter().any(|p| g.node(g.node_index(p).expect("parent")).is_noise);
        if n.kind != NodeKind::Internal || noisy {
            nodes.push(n.clone());
            continue;
        }
        let mut nid = noise_id(&n.id);
        while g.node_index(&nid).is_some() {
            nid.push('\'');
        }
        let mut noise = NodeSpec::noise(nid.clone());
        if let Some(s) = &super_id {
            noise.parents = vec![s.clone()];
        }
        nodes.push(noise);

        let base = n.function.clone().expect("internal nodes have functions");
        let mode = match modes.get(&n.id).cloned().unwrap_or(ResidualMode::Continuous) {
            ResidualMode::Continuous => NoiseMode::Additive(Box::new(base)),
            ResidualMode::Categorical { probs, labels } => NoiseMode::Categorical { probs, labels },
        };
        let mut node = n.clone();
        node.parents.push(nid);
        node.function = Some(FunctionSpec::Noisy(mode));
        nodes.push(node);
    }
    Ok(g.with_nodes(nodes)?)
}

/// Noise values recovered from an observation of every node.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InferredNoise {
    /// Residuals of continuous nodes.
    pub fixed: Sample,
    /// Feasible noise ranges of categorical nodes.
    pub intervals: BTreeMap<String, NoiseInterval>,
}

/// Recovers noise values of an augmented graph from `observed`, which must
/// hold a value for every non-noise node.
pub fn infer_noise(g: &CausalGraph, observed: &Sample) -> Result<InferredNoise, SynthError> {
    let mut out = InferredNoise::default();
    let mut rt = Runtime::new();
    for (i, n) in g.nodes().iter().enumerate() {
        let Some(FunctionSpec::Noisy(mode)) = &n.function else { continue };
        let get = |id: &str| observed.get(id).cloned().ok_or_else(|| FlowError::MissingSource(id.to_string()));
        let args: Vec<Value> = n.parents[..n.parents.len() - 1].iter().map(|p| get(p)).collect::<Result<_, _>>()?;
        let noise = n.parents.last().expect("noise parent").clone();
        let eval = |rt: &mut Runtime, f: &FunctionSpec| {
            rt.eval(i, f, &args).map_err(|source| FlowError::Eval { node: n.id.clone(), source })
        };
        match mode {
            NoiseMode::Additive(base) => {
                let pred = eval(&mut rt, base)?.real().map_err(|source| FlowError::Eval { node: n.id.clone(), source })?;
                let obs = get(&n.id)?.real().map_err(|source| FlowError::Eval { node: n.id.clone(), source })?;
                out.fixed.values.insert(noise, Value::Real(obs - pred));
            }
            NoiseMode::Categorical { probs, labels } => {
                let mut w = Vec::with_capacity(probs.len());
                for p in probs {
                    w.push(eval(&mut rt, p)?.real().map_err(|source| FlowError::Eval { node: n.id.clone(), source })?);
                }
                let total: f64 = w.iter().sum();
                let w: Vec<f64> = w.iter().map(|x| x / total).collect();
                let obs = get(&n.id)?;
                let idx = match (&obs, labels) {
                    (Value::Cat(c), Some(ls)) => ls.iter().position(|l| l == c),
                    (Value::Real(x), None) if x.fract() == 0.0 && *x >= 0.0 => Some(*x as usize),
                    _ => None,
                }
                .ok_or_else(|| SynthError::InvalidDistribution(format!("`{}` observed as unknown category {obs}", n.id)))?;
                out.intervals.insert(noise, infer_noise_interval(&w, idx)?);
            }
        }
    }
    Ok(out)
}

/// `m` foregrounds that extend `base` with the fixed noise values and one
/// seeded uniform draw from each interval.
pub fn sample_noise_foregrounds(base: &Sample, noise: &InferredNoise, m: usize, seed: u64) -> Vec<Sample> {
    let mut r = rng(seed, SAMPLE_STREAM);
    (0..m)
        .map(|_| {
            let mut s = base.clone();
            s.values.extend(noise.fixed.values.clone());
            for (id, iv) in &noise.intervals {
                s.values.insert(id.clone(), Value::Real(iv.sample(&mut r)));
            }
            s
        })
        .collect()
}

/// Mean attribution over `m` foregrounds drawn by
/// [`sample_noise_foregrounds`]. Without interval noise a single
/// foreground is used.
pub fn explain_with_noise(
    g: &CausalGraph,
    bg: &Sample,
    fg: &Sample,
    noise: &InferredNoise,
    m: usize,
    seed: u64,
    est: Estimator,
) -> Result<EdgeAttribution, SynthError> {
    let draws = if noise.intervals.is_empty() { 1 } else { m.max(1) };
    let attrs = sample_noise_foregrounds(fg, noise, draws, seed)
        .iter()
        .map(|f| shapley_flow(g, bg, f, est))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(average(&attrs)?)
}

/// Category index picked by inverse CDF for a given noise value.
pub fn categorical_pick(probs: &[f64], noise: f64) -> Result<usize, SynthError> {
    inverse_cdf(probs, noise).map_err(|e| SynthError::InvalidDistribution(e.to_string()))
}

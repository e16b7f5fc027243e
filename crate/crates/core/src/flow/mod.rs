//! Edge attribution on causal graphs.
//!
//! Credit for an edge is the output change it carries, averaged over every
//! depth-first message-passing order ("configuration"): a configuration
//! fixes, for each visit of each node, the order in which its outgoing
//! edges fire. When a message reaches the sink, the change in the sink's
//! value is credited to every edge on the path that carried it.
//!
//! All drivers accept augmented or unaugmented graphs; unaugmented graphs
//! are given a super-source first, so credits always include one edge from
//! the super-source to each original source.

mod checks;
mod engine;
mod exact;
mod history;
mod mc;
mod paths;
mod views;

use std::collections::BTreeMap;
use std::fmt;

use crate::function::EvalError;
use crate::graph::{CausalGraph, EdgeIdx, GraphError};
use crate::sample::Sample;

pub use checks::{
    boundary_consistency, certify_dummy_edges, check_conservation, check_efficiency, collapse_boundary,
    CheckOutcome, CollapsedGraph,
};
pub use engine::{forward, Runtime};
pub(crate) use engine::source_value;
pub use exact::{configuration_count, shapley_flow_exact, DEFAULT_CONFIG_CAP};
pub use history::{evaluate_history, History, HistoryEvaluator};
pub use mc::shapley_flow_mc;
pub use paths::{dfs_histories, shapley_flow_paths, PathCredit};
pub use views::{asv_view, average, multi_background, node_attribution};

/// Absolute tolerance for axiom checks in exact mode.
pub const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlowError {
    #[error("sample has no value for source `{0}`")]
    MissingSource(String),
    #[error("node `{node}`: {reason}")]
    InvalidValue { node: String, reason: String },
    #[error("evaluating `{node}`: {source}")]
    Eval { node: String, source: EvalError },
    #[error("sink `{0}` produced a categorical value; sinks must be real-valued")]
    CategoricalSink(String),
    #[error("unrealizable history at edge {0}")]
    UnrealizableHistory(String),
    #[error("{count:e} configurations exceed the exact-mode cap of {cap:e}; use Monte Carlo sampling")]
    ConfigurationCapExceeded { count: f64, cap: f64 },
    #[error("{count:e} configurations exceed the enumeration limit of {cap:e}")]
    SizeLimitExceeded { count: f64, cap: f64 },
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error("at least one background sample is required")]
    NoBackgrounds,
    #[error("node `{0}` has no expression form and cannot be folded into a boundary")]
    NotInlinable(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Directed edge named by its endpoint ids.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeKey {
    pub from: String,
    pub to: String,
}

impl EdgeKey {
    pub fn new(from: impl Into<String>, to: impl Into<String>) -> Self {
        EdgeKey { from: from.into(), to: to.into() }
    }

    pub fn of(g: &CausalGraph, e: EdgeIdx) -> Self {
        let edge = g.edge(e);
        EdgeKey::new(g.id(edge.from), g.id(edge.to))
    }
}

impl fmt::Display for EdgeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.from, self.to)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Exact,
    MonteCarlo,
    PathOracle,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Exact => "exact",
            Method::MonteCarlo => "monte-carlo",
            Method::PathOracle => "path-oracle",
        })
    }
}

/// Credit per edge plus provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeAttribution {
    pub credit: BTreeMap<EdgeKey, f64>,
    pub method: Method,
    /// Monte Carlo only.
    pub sample_count: Option<usize>,
    pub seed: Option<u64>,
    pub stderr: Option<BTreeMap<EdgeKey, f64>>,
    /// `f(x) - f(x')`, averaged over backgrounds where several were used.
    pub target_delta: f64,
}

impl EdgeAttribution {
    pub(crate) fn from_vec(g: &CausalGraph, credit: &[f64], method: Method, target_delta: f64) -> Self {
        EdgeAttribution {
            credit: (0..g.edges().len()).map(|i| (EdgeKey::of(g, EdgeIdx(i)), credit[i])).collect(),
            method,
            sample_count: None,
            seed: None,
            stderr: None,
            target_delta,
        }
    }

    pub fn get(&self, from: &str, to: &str) -> Option<f64> {
        self.credit.get(&EdgeKey::new(from, to)).copied()
    }

    /// Credit of a graph edge; 0 for edges the attribution does not cover.
    pub fn on(&self, g: &CausalGraph, e: EdgeIdx) -> f64 {
        self.credit.get(&EdgeKey::of(g, e)).copied().unwrap_or(0.0)
    }
}

/// How attributions are computed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Estimator {
    Exact { config_cap: f64 },
    MonteCarlo { samples: usize, seed: u64 },
}

impl Default for Estimator {
    fn default() -> Self {
        Estimator::Exact { config_cap: DEFAULT_CONFIG_CAP }
    }
}

/// Runs the requested estimator.
pub fn shapley_flow(g: &CausalGraph, bg: &Sample, fg: &Sample, est: Estimator) -> Result<EdgeAttribution, FlowError> {
    match est {
        Estimator::Exact { config_cap } => shapley_flow_exact(g, bg, fg, config_cap),
        Estimator::MonteCarlo { samples, seed } => shapley_flow_mc(g, bg, fg, samples, seed),
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Advances `p` to the next lexicographic permutation; false at the last.
fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// The `idx`-th permutation of `0..k` in lexicographic order.
fn nth_permutation(k: usize, mut idx: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..k).collect();
    let mut out = Vec::with_capacity(k);
    for i in (0..k).rev() {
        let f = (1..=i).product::<usize>();
        out.push(pool.remove(idx / f));
        idx %= f;
    }
    out
}

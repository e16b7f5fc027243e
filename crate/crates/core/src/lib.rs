//! Edge-level Shapley credit on causal DAGs.
//!
//! Build a [`CausalGraph`], pick a foreground and background [`Sample`], and
//! call [`shapley_flow`] to get an [`EdgeAttribution`]: one credit per edge,
//! summing to `f(x) - f(x')` across every cut that separates the sources
//! from the sink.

pub mod baselines;
pub mod flow;
pub mod function;
pub mod graph;
pub mod io;
pub mod sample;
pub mod synth;

pub use flow::{shapley_flow, EdgeAttribution, EdgeKey, Estimator, FlowError, Method};
pub use function::{FunctionSpec, Value};
pub use graph::{CausalGraph, EdgeIdx, GraphError, NodeIdx, NodeKind, NodeSpec};
pub use sample::Sample;

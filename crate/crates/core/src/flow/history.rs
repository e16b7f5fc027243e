//! Direct replay of edge histories.
//!
//! Kept separate from the engine used by the attribution drivers so it can
//! serve as a reference: every call starts from the background state and
//! replays the history edge by edge.

use crate::function::Value;
use crate::graph::{CausalGraph, EdgeIdx, NodeIdx, NodeKind};
use crate::sample::Sample;

use super::engine::{source_value, Runtime};
use super::FlowError;

/// An ordered list of edge transmissions; repeats allowed.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct History {
    pub edges: Vec<EdgeIdx>,
}

/// Replays histories against one background/foreground pair.
pub struct HistoryEvaluator<'g> {
    g: &'g CausalGraph,
    bg: Vec<Value>,
    fg_sources: Vec<Option<Value>>,
    rt: Runtime,
}

impl<'g> HistoryEvaluator<'g> {
    pub fn new(g: &'g CausalGraph, bg: &Sample, fg: &Sample) -> Result<Self, FlowError> {
        let mut rt = Runtime::new();
        let mut memo = vec![None; g.node_count()];
        for i in 0..g.node_count() {
            background_of(g, NodeIdx(i), bg, &mut memo, &mut rt)?;
        }
        let bg = memo.into_iter().map(|v| v.expect("all nodes evaluated")).collect();
        let fg_sources = g
            .nodes()
            .iter()
            .map(|n| match n.kind {
                NodeKind::Source => source_value(n, fg).map(Some),
                _ => Ok(None),
            })
            .collect::<Result<_, _>>()?;
        Ok(HistoryEvaluator { g, bg, fg_sources, rt })
    }

    /// ν(h): the sink value after replaying `h` from the background state.
    /// With `strict`, every transmitting node must be a root or have
    /// received a message earlier in `h`.
    pub fn eval(&mut self, h: &[EdgeIdx], strict: bool) -> Result<f64, FlowError> {
        self.replay(h, strict, None, |_| ())
    }

    /// ν of every prefix of `h` (from the empty one to `h` itself), replayed
    /// leniently with every transmission of `skip` dropped.
    pub fn prefix_values(&mut self, h: &[EdgeIdx], skip: Option<EdgeIdx>) -> Result<Vec<f64>, FlowError> {
        let mut out = Vec::with_capacity(h.len() + 1);
        out.push(self.sink_of(&self.bg)?);
        self.replay(h, false, skip, |v| out.push(v))?;
        Ok(out)
    }

    fn sink_of(&self, values: &[Value]) -> Result<f64, FlowError> {
        let sink = self.g.sink();
        values[sink.0]
            .as_real()
            .ok_or_else(|| FlowError::CategoricalSink(self.g.id(sink).to_string()))
    }

    fn replay(
        &mut self,
        h: &[EdgeIdx],
        strict: bool,
        skip: Option<EdgeIdx>,
        mut step: impl FnMut(f64),
    ) -> Result<f64, FlowError> {
        let g = self.g;
        let mut current: Vec<Value> = self.bg.clone();
        let mut updated = vec![false; g.node_count()];
        for r in g.roots() {
            current[r.0] = match g.node(r).kind {
                NodeKind::SuperSource => Value::Real(1.0),
                _ => self.fg_sources[r.0].clone().expect("roots are sources"),
            };
            updated[r.0] = true;
        }
        let mut last: Vec<Option<Value>> = vec![None; g.edges().len()];
        for &e in h {
            let edge = *g.edges().get(e.0).ok_or_else(|| FlowError::UnrealizableHistory(format!("#{}", e.0)))?;
            if strict && !updated[edge.from.0] {
                return Err(FlowError::UnrealizableHistory(g.edge_label(e)));
            }
            if Some(e) != skip {
                last[e.0] = Some(current[edge.from.0].clone());
                let node = g.node(edge.to);
                current[edge.to.0] = match &node.function {
                    None => {
                        if last[e.0] == Some(Value::Real(1.0)) {
                            self.fg_sources[edge.to.0].clone().expect("sources carry values")
                        } else {
                            self.bg[edge.to.0].clone()
                        }
                    }
                    Some(f) => {
                        let args: Vec<Value> = g
                            .in_edges(edge.to)
                            .iter()
                            .map(|p| last[p.0].clone().unwrap_or_else(|| self.bg[g.edge(*p).from.0].clone()))
                            .collect();
                        self.rt
                            .eval(edge.to.0, f, &args)
                            .map_err(|source| FlowError::Eval { node: node.id.clone(), source })?
                    }
                };
                updated[edge.to.0] = true;
            }
            step(self.sink_of(&current)?);
        }
        self.sink_of(&current)
    }
}

fn background_of(
    g: &CausalGraph,
    n: NodeIdx,
    bg: &Sample,
    memo: &mut Vec<Option<Value>>,
    rt: &mut Runtime,
) -> Result<Value, FlowError> {
    if let Some(v) = &memo[n.0] {
        return Ok(v.clone());
    }
    let node = g.node(n);
    let v = match node.kind {
        NodeKind::SuperSource => Value::Real(0.0),
        NodeKind::Source => source_value(node, bg)?,
        NodeKind::Internal | NodeKind::Sink => {
            let mut args = Vec::new();
            for e in g.in_edges(n) {
                args.push(background_of(g, g.edge(*e).from, bg, memo, rt)?);
            }
            let f = node.function.as_ref().expect("validated graph");
            rt.eval(n.0, f, &args).map_err(|source| FlowError::Eval { node: node.id.clone(), source })?
        }
    };
    memo[n.0] = Some(v.clone());
    Ok(v)
}

/// ν(h) for a single history, checking realizability.
pub fn evaluate_history(g: &CausalGraph, bg: &Sample, fg: &Sample, h: &History) -> Result<f64, FlowError> {
    HistoryEvaluator::new(g, bg, fg)?.eval(&h.edges, true)
}

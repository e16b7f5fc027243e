//! Flat message-passing state shared by the exact and Monte Carlo drivers.

use crate::function::{evaluate_with, EvalError, ExternalModel, ExternalSpec, FunctionSpec, Value};
use crate::graph::{CausalGraph, EdgeIdx, NodeIdx, NodeKind};
use crate::sample::Sample;

use super::FlowError;

/// Per-worker handles to external model processes, spawned on first use.
#[derive(Default)]
pub struct Runtime {
    models: Vec<(usize, ExternalModel)>,
}

impl Runtime {
    pub fn new() -> Self {
        Self::default()
    }

    fn call(&mut self, node: usize, spec: &ExternalSpec, args: &[Value]) -> Result<Value, EvalError> {
        let pos = self.models.iter().position(|(n, m)| *n == node && m.spec() == spec);
        let model = match pos {
            Some(i) => &mut self.models[i].1,
            None => {
                self.models.push((node, ExternalModel::spawn(spec)?));
                &mut self.models.last_mut().expect("just pushed").1
            }
        };
        Ok(model.call_positional(args)?)
    }

    pub(crate) fn eval(&mut self, node: usize, f: &FunctionSpec, args: &[Value]) -> Result<Value, EvalError> {
        evaluate_with(f, args, &mut |spec, a| self.call(node, spec, a))
    }
}

/// Node values plus, per parent slot, the last value transmitted into it.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    values: Vec<Value>,
    inputs: Vec<Value>,
}

/// A graph bound to one background/foreground pair.
pub struct Engine<'g> {
    g: &'g CausalGraph,
    offsets: Vec<usize>,
    background: Vec<Value>,
    foreground: Vec<Value>,
    initial: State,
}

const OFF: Value = Value::Real(0.0);
const ON: Value = Value::Real(1.0);

impl<'g> Engine<'g> {
    pub fn new(g: &'g CausalGraph, bg: &Sample, fg: &Sample, rt: &mut Runtime) -> Result<Self, FlowError> {
        let mut offsets = Vec::with_capacity(g.node_count() + 1);
        let mut total = 0;
        for i in 0..g.node_count() {
            offsets.push(total);
            total += g.in_edges(NodeIdx(i)).len();
        }
        let background = forward(g, bg, false, rt)?;
        let foreground = forward(g, fg, true, rt)?;

        let mut values = background.clone();
        for r in g.roots() {
            values[r.0] = foreground[r.0].clone();
        }
        let mut inputs = vec![OFF; total];
        for e in g.edges() {
            inputs[offsets[e.to.0] + e.slot] = background[e.from.0].clone();
        }
        Ok(Engine { g, offsets, background, foreground, initial: State { values, inputs } })
    }

    pub fn graph(&self) -> &'g CausalGraph {
        self.g
    }

    pub fn initial(&self) -> &State {
        &self.initial
    }

    /// Forward-evaluated value of every node under the background sample.
    pub fn background(&self) -> &[Value] {
        &self.background
    }

    pub fn foreground(&self) -> &[Value] {
        &self.foreground
    }

    pub fn sink_value(&self, s: &State) -> f64 {
        s.values[self.g.sink().0].as_real().expect("sink is real-valued")
    }

    /// Delivers the current value of `e.from` to `e.to` and recomputes
    /// `e.to`.
    pub fn transmit(&self, s: &mut State, rt: &mut Runtime, e: EdgeIdx) -> Result<(), FlowError> {
        let edge = self.g.edge(e);
        let to = edge.to.0;
        let off = self.offsets[to];
        s.inputs[off + edge.slot] = s.values[edge.from.0].clone();
        let node = &self.g.nodes()[to];
        let new = match (&node.kind, &node.function) {
            (NodeKind::Source, None) => {
                if s.inputs[off] == ON {
                    self.foreground[to].clone()
                } else {
                    self.background[to].clone()
                }
            }
            (_, Some(f)) => {
                let n_in = self.g.in_edges(edge.to).len();
                rt.eval(to, f, &s.inputs[off..off + n_in])
                    .map_err(|source| FlowError::Eval { node: node.id.clone(), source })?
            }
            _ => unreachable!("validated graph"),
        };
        s.values[to] = new;
        Ok(())
    }
}

/// Forward evaluation of every node. Roots take the sample's values (the
/// super-source is on in the foreground, off in the background); augmented
/// sources copy their own sample value.
pub fn forward(g: &CausalGraph, sample: &Sample, is_fg: bool, rt: &mut Runtime) -> Result<Vec<Value>, FlowError> {
    let mut values = vec![OFF; g.node_count()];
    for &n in g.topological_order() {
        let node = g.node(n);
        values[n.0] = match node.kind {
            NodeKind::SuperSource => {
                if is_fg {
                    ON
                } else {
                    OFF
                }
            }
            NodeKind::Source => source_value(node, sample)?,
            NodeKind::Internal | NodeKind::Sink => {
                let args: Vec<Value> = g.in_edges(n).iter().map(|e| values[g.edge(*e).from.0].clone()).collect();
                let f = node.function.as_ref().expect("validated graph");
                rt.eval(n.0, f, &args).map_err(|source| FlowError::Eval { node: node.id.clone(), source })?
            }
        };
    }
    if values[g.sink().0].as_real().is_none() {
        return Err(FlowError::CategoricalSink(g.id(g.sink()).to_string()));
    }
    Ok(values)
}

pub(crate) fn source_value(node: &crate::graph::NodeSpec, sample: &Sample) -> Result<Value, FlowError> {
    let v = sample.get(&node.id).ok_or_else(|| FlowError::MissingSource(node.id.clone()))?;
    match (&node.domain, v) {
        (None, Value::Real(x)) if x.is_finite() => Ok(v.clone()),
        (Some(dom), Value::Cat(c)) if dom.contains(c) => Ok(v.clone()),
        (None, _) => Err(FlowError::InvalidValue {
            node: node.id.clone(),
            reason: format!("expected a finite real, got {v}"),
        }),
        (Some(dom), _) => Err(FlowError::InvalidValue {
            node: node.id.clone(),
            reason: format!("{v} is not in the declared domain {dom:?}"),
        }),
    }
}

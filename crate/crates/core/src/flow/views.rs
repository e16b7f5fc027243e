use std::collections::BTreeMap;

use crate::graph::{CausalGraph, NodeKind};
use crate::sample::Sample;

use super::{shapley_flow, EdgeAttribution, Estimator, FlowError};

/// ψ(i): total credit on the outgoing edges of each node. Every node of `g`
/// appears; the super-source appears when the attribution covers its edges.
pub fn node_attribution(attr: &EdgeAttribution, g: &CausalGraph) -> BTreeMap<String, f64> {
    let mut psi: BTreeMap<String, f64> = g.nodes().iter().map(|n| (n.id.clone(), 0.0)).collect();
    for (k, c) in &attr.credit {
        *psi.entry(k.from.clone()).or_insert(0.0) += c;
    }
    psi
}

/// Source-level credit: ψ of each original source, which is also the credit
/// on its edge from the super-source.
pub fn asv_view(attr: &EdgeAttribution, g: &CausalGraph) -> BTreeMap<String, f64> {
    let psi = node_attribution(attr, g);
    g.nodes()
        .iter()
        .filter(|n| n.kind == NodeKind::Source)
        .map(|n| (n.id.clone(), psi[&n.id]))
        .collect()
}

/// Arithmetic mean of attributions over the same graph. Standard errors,
/// when every input has them, combine as independent estimates.
pub fn average(attrs: &[EdgeAttribution]) -> Result<EdgeAttribution, FlowError> {
    let first = attrs.first().ok_or(FlowError::NoBackgrounds)?;
    let k = attrs.len() as f64;
    let mut out = first.clone();
    for (key, c) in out.credit.iter_mut() {
        *c = attrs.iter().map(|a| a.credit.get(key).copied().unwrap_or(0.0)).sum::<f64>() / k;
    }
    out.target_delta = attrs.iter().map(|a| a.target_delta).sum::<f64>() / k;
    out.stderr = if attrs.iter().all(|a| a.stderr.is_some()) {
        first.stderr.as_ref().map(|se| {
            se.keys()
                .map(|key| {
                    let var: f64 = attrs
                        .iter()
                        .map(|a| a.stderr.as_ref().and_then(|s| s.get(key)).copied().unwrap_or(0.0).powi(2))
                        .sum();
                    (key.clone(), var.sqrt() / k)
                })
                .collect()
        })
    } else {
        None
    };
    Ok(out)
}

/// Mean attribution over several backgrounds. Sampled estimates reuse the
/// same seed for every background.
pub fn multi_background(g: &CausalGraph, bgs: &[Sample], fg: &Sample, est: Estimator) -> Result<EdgeAttribution, FlowError> {
    if bgs.is_empty() {
        return Err(FlowError::NoBackgrounds);
    }
    let attrs = bgs.iter().map(|bg| shapley_flow(g, bg, fg, est)).collect::<Result<Vec<_>, _>>()?;
    average(&attrs)
}

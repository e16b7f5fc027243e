use std::fmt::Write;

use crate::flow::{EdgeAttribution, EdgeKey};
use crate::graph::{ensure_augmented, CausalGraph, NodeKind};

pub const DEFAULT_TOP_K: usize = 10;

const POSITIVE: &str = "red";
const NEGATIVE: &str = "blue";
const DIMMED: &str = "gray";
const HAIRLINE: f64 = 0.5;
const MAX_WIDTH: f64 = 6.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DotOptions {
    /// Only the `k` largest-magnitude edges are labelled and drawn to
    /// scale; `None` keeps every edge.
    pub top_k: Option<usize>,
    pub show_super_source: bool,
    pub hide_noise: bool,
}

impl Default for DotOptions {
    fn default() -> Self {
        DotOptions { top_k: Some(DEFAULT_TOP_K), show_super_source: false, hide_noise: false }
    }
}

fn quote(id: &str) -> String {
    format!("\"{}\"", id.replace('\\', "\\\\").replace('"', "\\\""))
}

fn label(c: f64) -> String {
    let s = format!("{c:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

/// Renders `g` with edge widths proportional to |credit| and colour by
/// sign. Edges outside the top `k` are drawn as gray hairlines without a
/// label.
pub fn emit_dot(g: &CausalGraph, attr: &EdgeAttribution, opts: &DotOptions) -> String {
    let g = ensure_augmented(g);
    let hidden = |id: &str| {
        g.node_index(id).is_some_and(|i| {
            let n = g.node(i);
            (n.kind == NodeKind::SuperSource && !opts.show_super_source) || (n.is_noise && opts.hide_noise)
        })
    };
    let mut edges: Vec<(&EdgeKey, f64)> = attr
        .credit
        .iter()
        .filter(|(k, _)| !(hidden(&k.from) || hidden(&k.to)))
        .map(|(k, c)| (k, *c))
        .collect();
    let max = edges.iter().map(|(_, c)| c.abs()).fold(0.0, f64::max);

    let mut ranked: Vec<usize> = (0..edges.len()).collect();
    ranked.sort_by(|a, b| edges[*b].1.abs().total_cmp(&edges[*a].1.abs()).then(a.cmp(b)));
    let mut top = vec![true; edges.len()];
    if let Some(k) = opts.top_k {
        for &i in ranked.iter().skip(k) {
            top[i] = false;
        }
    }

    let mut out = String::new();
    out.push_str("digraph flow {\n");
    out.push_str("    rankdir=LR;\n");
    out.push_str("    node [shape=box, fontname=\"Helvetica\"];\n");
    out.push_str("    edge [fontname=\"Helvetica\"];\n");
    let ids = g.nodes().iter().map(|n| n.id.as_str()).filter(|id| !hidden(id));
    for id in ids {
        let _ = writeln!(out, "    {};", quote(id));
    }
    for (i, (k, c)) in edges.drain(..).enumerate() {
        let from = quote(&k.from);
        let to = quote(&k.to);
        if !top[i] {
            let _ = writeln!(out, "    {from} -> {to} [color={DIMMED}, penwidth={HAIRLINE:.2}];");
            continue;
        }
        let width = if max > 0.0 { HAIRLINE + (MAX_WIDTH - HAIRLINE) * c.abs() / max } else { HAIRLINE };
        let color = if c >= 0.0 { POSITIVE } else { NEGATIVE };
        let _ = writeln!(out, "    {from} -> {to} [color={color}, penwidth={width:.2}, label=\"{}\"];", label(c));
    }
    out.push_str("}\n");
    out
}

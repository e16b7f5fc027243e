use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::flow::{
    asv_view, certify_dummy_edges, check_conservation, check_efficiency, multi_background, node_attribution,
    CheckOutcome, EdgeAttribution, EdgeKey, FlowError, TOLERANCE,
};
use crate::graph::ensure_augmented;

use super::CaseBundle;

/// Tolerance for credit on certified dummy edges.
const DUMMY_TOLERANCE: f64 = 1e-12;

/// A real written with 17 significant digits, enough to round-trip any
/// double. Negative zero is written as zero and non-finite values as
/// `null`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Credit(pub f64);

impl Serialize for Credit {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return s.serialize_none();
        }
        let raw = RawValue::from_string(format!("{:.16e}", self.0 + 0.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Credit {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Credit(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub from: String,
    pub to: String,
    pub credit: Credit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<Credit>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub passed: bool,
    pub max_error: Credit,
    pub checked: usize,
    pub truncated: bool,
    pub failures: Vec<String>,
}

impl From<CheckOutcome> for CheckRecord {
    fn from(c: CheckOutcome) -> Self {
        CheckRecord {
            name: c.name,
            passed: c.passed,
            max_error: Credit(c.max_error),
            checked: c.checked,
            truncated: c.truncated,
            failures: c.failures,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub method: String,
    pub sample_count: Option<usize>,
    pub seed: Option<u64>,
    pub backgrounds: usize,
    pub target_delta: Credit,
    pub edges: Vec<EdgeRecord>,
    /// Total outgoing credit per node.
    pub nodes: BTreeMap<String, Credit>,
    /// Credit per original source.
    pub asv: BTreeMap<String, Credit>,
    pub checks: Vec<CheckRecord>,
    /// True when every check passed (vacuously true without checks).
    pub passed: bool,
}

impl AttributionReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Edge credits keyed by edge.
    pub fn credits(&self) -> BTreeMap<EdgeKey, f64> {
        self.edges.iter().map(|e| (EdgeKey::new(e.from.clone(), e.to.clone()), e.credit.0)).collect()
    }

    /// One line per failed check item.
    pub fn failures(&self) -> Vec<String> {
        self.checks
            .iter()
            .flat_map(|c| c.failures.iter().map(move |f| format!("{}: {f}", c.name)))
            .collect()
    }
}

/// Runs the bundle's estimator over all its backgrounds and assembles the
/// report, including the requested checks.
pub fn run_attribution(case: &CaseBundle) -> Result<AttributionReport, FlowError> {
    let opts = &case.options;
    let g = ensure_augmented(&case.graph);
    let super_id = g.id(g.super_source().expect("augmented")).to_string();
    let attr = multi_background(&case.graph, &case.bgs, &case.fg, opts.estimator)?;

    let mut checks = Vec::new();
    if opts.check_axioms {
        checks.push(check_efficiency(&g, &attr, opts.boundary_cap, TOLERANCE).into());
        checks.push(check_conservation(&g, &attr, TOLERANCE).into());
    }
    if opts.dummy_scan {
        checks.push(dummy_check(case, &attr)?.into());
    }

    let visible = |k: &EdgeKey| opts.show_super_source || k.from != super_id;
    let edges = attr
        .credit
        .iter()
        .filter(|(k, _)| visible(k))
        .map(|(k, c)| EdgeRecord {
            from: k.from.clone(),
            to: k.to.clone(),
            credit: Credit(*c),
            stderr: attr.stderr.as_ref().map(|s| Credit(s[k])),
        })
        .collect();
    let mut nodes: BTreeMap<String, Credit> =
        node_attribution(&attr, &g).into_iter().map(|(k, v)| (k, Credit(v))).collect();
    if !opts.show_super_source {
        nodes.remove(&super_id);
    }
    let asv = asv_view(&attr, &case.graph).into_iter().map(|(k, v)| (k, Credit(v))).collect();
    let passed = checks.iter().all(|c: &CheckRecord| c.passed);
    Ok(AttributionReport {
        method: attr.method.to_string(),
        sample_count: attr.sample_count,
        seed: attr.seed,
        backgrounds: case.bgs.len(),
        target_delta: Credit(attr.target_delta),
        edges,
        nodes,
        asv,
        checks,
        passed,
    })
}

/// Edges certified as dummies under every background must carry no credit.
fn dummy_check(case: &CaseBundle, attr: &EdgeAttribution) -> Result<CheckOutcome, FlowError> {
    let mut common: Option<BTreeSet<EdgeKey>> = None;
    for bg in &case.bgs {
        let d: BTreeSet<EdgeKey> = certify_dummy_edges(&case.graph, bg, &case.fg, case.options.dummy_scan_cap, 0.0)?
            .into_iter()
            .collect();
        common = Some(match common {
            None => d,
            Some(c) => c.intersection(&d).cloned().collect(),
        });
    }
    let mut out = CheckOutcome {
        name: "dummy".into(),
        passed: true,
        max_error: 0.0,
        checked: 0,
        truncated: false,
        failures: Vec::new(),
    };
    for k in common.unwrap_or_default() {
        let c = attr.credit.get(&k).copied().unwrap_or(0.0).abs();
        out.checked += 1;
        out.max_error = out.max_error.max(c);
        if c.is_nan() || c > DUMMY_TOLERANCE {
            out.passed = false;
            out.failures.push(format!("edge {k}: credit {c:e}"));
        }
    }
    Ok(out)
}

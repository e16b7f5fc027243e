use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::function::Value;

/// Values for the source nodes of a graph, keyed by node id. Values for
/// other nodes may be present; they are never used as inputs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    pub values: BTreeMap<String, Value>,
}

impl Sample {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, id: impl Into<String>, v: impl Into<Value>) -> Self {
        self.values.insert(id.into(), v.into());
        self
    }

    pub fn from_reals<'a>(pairs: impl IntoIterator<Item = (&'a str, f64)>) -> Self {
        Sample {
            values: pairs.into_iter().map(|(k, v)| (k.to_string(), Value::Real(v))).collect(),
        }
    }

    pub fn get(&self, id: &str) -> Option<&Value> {
        self.values.get(id)
    }
}

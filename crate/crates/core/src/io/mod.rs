//! Case files, attribution reports and DOT rendering.
//!
//! A case is a graph document plus one foreground and one or more
//! background samples, each a separate JSON file.

mod dot;
mod report;

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::flow::{source_value, Estimator, FlowError};
use crate::graph::{build_graph, CausalGraph, GraphDocument, DEFAULT_BOUNDARY_CAP};
use crate::sample::Sample;

pub use dot::{emit_dot, DotOptions, DEFAULT_TOP_K};
pub use report::{run_attribution, AttributionReport, CheckRecord, Credit, EdgeRecord};

/// Environment variable overriding the exact-mode configuration cap.
pub const CONFIG_CAP_ENV: &str = "FLOWCREDIT_CONFIG_CAP";
/// Default limit on configurations enumerated by the dummy-edge scan.
pub const DEFAULT_DUMMY_SCAN_CAP: f64 = 1e4;

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{file}: {reason}")]
    Io { file: String, reason: String },
    #[error("{file}:{line}:{column}: {message}")]
    Parse { file: String, line: usize, column: usize, message: String },
    #[error("{file}: {message}")]
    Schema { file: String, message: String },
    #[error("{file}: no value for source `{node}`")]
    MissingSource { file: String, node: String },
    #[error("{file}: {reason}")]
    InvalidValue { file: String, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    pub estimator: Estimator,
    pub check_axioms: bool,
    pub dummy_scan: bool,
    pub boundary_cap: usize,
    pub dummy_scan_cap: f64,
    pub show_super_source: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            estimator: Estimator::default(),
            check_axioms: false,
            dummy_scan: false,
            boundary_cap: DEFAULT_BOUNDARY_CAP,
            dummy_scan_cap: DEFAULT_DUMMY_SCAN_CAP,
            show_super_source: false,
        }
    }
}

/// Everything needed for one attribution run.
#[derive(Clone, Debug)]
pub struct CaseBundle {
    pub graph: CausalGraph,
    pub fg: Sample,
    pub bgs: Vec<Sample>,
    pub options: RunOptions,
}

/// Reads and parses a JSON file. Syntax errors carry their position;
/// well-formed JSON of the wrong shape is a schema error.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, LoadError> {
    let file = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| LoadError::Io { file: file.clone(), reason: e.to_string() })?;
    serde_json::from_str(&text).map_err(|e| {
        use serde_json::error::Category;
        match e.classify() {
            Category::Syntax | Category::Eof => LoadError::Parse {
                file,
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            },
            Category::Data => LoadError::Schema { file, message: e.to_string() },
            Category::Io => LoadError::Io { file, reason: e.to_string() },
        }
    })
}

pub fn load_graph(path: &Path) -> Result<CausalGraph, LoadError> {
    let doc: GraphDocument = read_json(path)?;
    build_graph(&doc).map_err(|e| LoadError::Schema { file: path.display().to_string(), message: e.to_string() })
}

fn load_sample(g: &CausalGraph, path: &Path) -> Result<Sample, LoadError> {
    let s: Sample = read_json(path)?;
    let file = path.display().to_string();
    for n in g.sources() {
        source_value(g.node(n), &s).map_err(|e| match e {
            FlowError::MissingSource(node) => LoadError::MissingSource { file: file.clone(), node },
            other => LoadError::InvalidValue { file: file.clone(), reason: other.to_string() },
        })?;
    }
    Ok(s)
}

/// Loads a graph and its samples, checking that every sample covers every
/// source with a valid value.
pub fn load_case(graph: &Path, fg: &Path, bgs: &[PathBuf]) -> Result<CaseBundle, LoadError> {
    let g = load_graph(graph)?;
    let fg = load_sample(&g, fg)?;
    let bgs = bgs.iter().map(|b| load_sample(&g, b)).collect::<Result<Vec<_>, _>>()?;
    Ok(CaseBundle { graph: g, fg, bgs, options: RunOptions::default() })
}

/// Exact-mode cap from [`CONFIG_CAP_ENV`], if set and numeric.
pub fn config_cap_from_env() -> Option<f64> {
    std::env::var(CONFIG_CAP_ENV).ok()?.trim().parse().ok()
}

fn write_json(path: &Path, value: &impl Serialize) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

/// Writes `graph.json`, `bg.json` and `fg.json` into `dir`, creating it if
/// needed. Returns the three paths in that order.
pub fn save_case(dir: &Path, g: &CausalGraph, bg: &Sample, fg: &Sample) -> std::io::Result<[PathBuf; 3]> {
    fs::create_dir_all(dir)?;
    let paths = [dir.join("graph.json"), dir.join("bg.json"), dir.join("fg.json")];
    write_json(&paths[0], &g.to_document())?;
    write_json(&paths[1], bg)?;
    write_json(&paths[2], fg)?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{make_chain, make_or};

    #[test]
    fn saved_case_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let (g, bg, fg) = make_chain(4, -1.82).unwrap();
        let [gp, bp, fp] = save_case(dir.path(), &g, &bg, &fg).unwrap();
        let case = load_case(&gp, &fp, &[bp]).unwrap();
        assert_eq!(case.graph.nodes(), g.nodes());
        assert_eq!(case.fg, fg);
        assert_eq!(case.bgs, vec![bg]);
    }

    #[test]
    fn random_samples_reload_bit_for_bit() {
        use crate::synth::{gen_random_linear_graph, RandomGraphConfig};
        let dir = tempfile::tempdir().unwrap();
        for seed in 0..20 {
            let (g, mut samples) = gen_random_linear_graph(&RandomGraphConfig { n: 8, p: 0.5, seed }).unwrap();
            let (bg, fg) = (samples.sample(), samples.sample());
            let [gp, bp, fp] = save_case(dir.path(), &g, &bg, &fg).unwrap();
            let case = load_case(&gp, &fp, &[bp]).unwrap();
            assert_eq!(case.bgs[0], bg);
            assert_eq!(case.fg, fg);
            assert_eq!(case.graph.to_document(), g.to_document());
        }
    }

    #[test]
    fn missing_source_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let (g, _, fg) = make_or();
        let [gp, bp, fp] = save_case(dir.path(), &g, &Sample::from_reals([("X1", 0.0)]), &fg).unwrap();
        match load_case(&gp, &fp, &[bp]).unwrap_err() {
            LoadError::MissingSource { node, .. } => assert_eq!(node, "X2"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn syntax_error_has_location() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("graph.json");
        fs::write(&p, "{\n  \"nodes\": [\n    {\"id\": \"a\",, }\n  ]\n}\n").unwrap();
        match load_graph(&p).unwrap_err() {
            LoadError::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column > 10);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn wrong_shape_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("graph.json");
        fs::write(&p, r#"{"nodes": [], "sink": "f", "extra": 1}"#).unwrap();
        assert!(matches!(load_graph(&p).unwrap_err(), LoadError::Schema { .. }));
        fs::write(&p, r#"{"nodes": [{"id": "a", "parents": ["b"]}], "sink": "a"}"#).unwrap();
        assert!(matches!(load_graph(&p).unwrap_err(), LoadError::Schema { .. }));
    }

    #[test]
    fn env_cap() {
        // Only this test touches the variable.
        std::env::set_var(CONFIG_CAP_ENV, "250");
        assert_eq!(config_cap_from_env(), Some(250.0));
        std::env::remove_var(CONFIG_CAP_ENV);
        assert_eq!(config_cap_from_env(), None);
    }
}

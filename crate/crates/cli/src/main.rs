use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use flowcredit::baselines::{independent_shap_graph, linear_ground_truth, owen_oracle};
use flowcredit::flow::{configuration_count, DEFAULT_CONFIG_CAP};
use flowcredit::graph::ensure_augmented;
use flowcredit::io::{
    config_cap_from_env, emit_dot, load_case, load_graph, run_attribution, save_case, Credit, DotOptions,
    DEFAULT_TOP_K,
};
use flowcredit::synth::{gen_random_linear_graph, make_chain, make_diamond, make_or, RandomGraphConfig};
use flowcredit::{EdgeAttribution, Estimator, Method};

/// Exit status when a requested axiom check fails.
const CHECKS_FAILED: u8 = 1;
/// Exit status for invalid input or runtime errors.
const ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "flowcredit", version, about = "Edge-level Shapley credit on causal graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Attribute f(fg) - f(bg) to the edges of a graph.
    Attribute(AttributeArgs),
    /// Check that a graph document is valid.
    Validate {
        #[arg(long)]
        graph: PathBuf,
    },
    /// Write a synthetic case (graph.json, bg.json, fg.json).
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Reference attributions computed without message passing.
    Oracle {
        kind: OracleKind,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        fg: PathBuf,
        #[arg(long)]
        bg: PathBuf,
    },
}

#[derive(Args)]
struct AttributeArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    fg: PathBuf,
    /// Background sample; repeat to average over several.
    #[arg(long, required = true)]
    bg: Vec<PathBuf>,
    /// Enumerate every configuration (default).
    #[arg(long, conflicts_with = "mc")]
    exact: bool,
    /// Sample this many configurations instead.
    #[arg(long, value_name = "N")]
    mc: Option<usize>,
    #[arg(long, default_value_t = 0, requires = "mc")]
    seed: u64,
    /// Report file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a Graphviz rendering.
    #[arg(long)]
    dot: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TOP_K, requires = "dot")]
    top_k: usize,
    /// Check efficiency on every boundary and flow conservation.
    #[arg(long)]
    check_axioms: bool,
    /// Certify dummy edges by brute force and check they get no credit.
    #[arg(long)]
    dummy_scan: bool,
    /// Include edges from the super-source in the report and diagram.
    #[arg(long)]
    show_super_source: bool,
    /// Leave noise nodes out of the diagram.
    #[arg(long)]
    hide_noise: bool,
}

#[derive(Subcommand)]
enum GenKind {
    /// Random linear DAG with standard-normal weights and samples.
    Random {
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Copy chain X1 -> ... -> Xn with ignored edges into the sink.
    Chain {
        #[arg(long, default_value_t = 4)]
        len: usize,
        #[arg(long, default_value_t = -1.82, allow_negative_numbers = true)]
        delta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// f = X1 or X2.
    Or {
        #[arg(long)]
        out: PathBuf,
    },
    /// A -> {B, C} -> f with f = B * C.
    Diamond {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleKind {
    /// Classic Shapley values of the sink's inputs, perturbed independently.
    Shapley,
    /// Owen values on a two-level tree.
    Owen,
    /// Direct and intervention effects of a linear system.
    Linear,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(ERROR)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Attribute(args) => attribute(args),
        Command::Validate { graph } => {
            let g = load_graph(&graph)?;
            let configs = configuration_count(&ensure_augmented(&g));
            println!(
                "ok: {} nodes, {} edges, sink `{}`, {configs:e} configurations",
                g.node_count(),
                g.edges().len(),
                g.id(g.sink())
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Gen { kind } => {
            let (out, (g, bg, fg)) = match kind {
                GenKind::Random { n, p, seed, out } => {
                    let (g, mut samples) = gen_random_linear_graph(&RandomGraphConfig { n, p, seed })?;
                    let bg = samples.sample();
                    let fg = samples.sample();
                    (out, (g, bg, fg))
                }
                GenKind::Chain { len, delta, out } => (out, make_chain(len, delta)?),
                GenKind::Or { out } => (out, make_or()),
                GenKind::Diamond { out } => (out, make_diamond()),
            };
            let paths = save_case(&out, &g, &bg, &fg).with_context(|| format!("writing {}", out.display()))?;
            for p in paths {
                println!("{}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { kind, graph, fg, bg } => {
            let case = load_case(&graph, &fg, &[bg])?;
            let (g, bg, fg) = (&case.graph, &case.bgs[0], &case.fg);
            let wrap = |m: BTreeMap<String, f64>| m.into_iter().map(|(k, v)| (k, Credit(v))).collect::<BTreeMap<_, _>>();
            let text = match kind {
                OracleKind::Shapley => serde_json::to_string_pretty(&wrap(independent_shap_graph(g, bg, fg)?))?,
                OracleKind::Owen => {
                    let o = owen_oracle(g, bg, fg)?;
                    serde_json::to_string_pretty(&wrap(o.into_iter().map(|(k, v)| (k.to_string(), v)).collect()))?
                }
                OracleKind::Linear => {
                    let t = linear_ground_truth(g, bg, fg)?;
                    let both = BTreeMap::from([("direct", wrap(t.direct)), ("indirect", wrap(t.indirect))]);
                    serde_json::to_string_pretty(&both)?
                }
            };
            println!("{text}");
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn attribute(args: AttributeArgs) -> Result<ExitCode> {
    let mut case = load_case(&args.graph, &args.fg, &args.bg)?;
    let estimator = match args.mc {
        Some(0) => bail!("--mc needs at least one sample"),
        Some(samples) => Estimator::MonteCarlo { samples, seed: args.seed },
        None => Estimator::Exact { config_cap: config_cap_from_env().unwrap_or(DEFAULT_CONFIG_CAP) },
    };
    case.options.estimator = estimator;
    case.options.check_axioms = args.check_axioms;
    case.options.dummy_scan = args.dummy_scan;
    case.options.show_super_source = args.show_super_source;

    let report = run_attribution(&case)?;
    let json = report.to_json();
    match &args.out {
        Some(p) => fs::write(p, &json).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{json}"),
    }
    if let Some(p) = &args.dot {
        let attr = EdgeAttribution {
            credit: report.credits(),
            method: if report.sample_count.is_some() { Method::MonteCarlo } else { Method::Exact },
            sample_count: report.sample_count,
            seed: report.seed,
            stderr: None,
            target_delta: report.target_delta.0,
        };
        let opts = DotOptions {
            top_k: Some(args.top_k),
            show_super_source: args.show_super_source,
            hide_noise: args.hide_noise,
        };
        fs::write(p, emit_dot(&case.graph, &attr, &opts)).with_context(|| format!("writing {}", p.display()))?;
    }
    if report.passed {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("{}", serde_json::json!({ "failed_checks": report.failures() }));
        Ok(ExitCode::from(CHECKS_FAILED))
    }
}

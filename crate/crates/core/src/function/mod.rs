//! Node functions: expressions, linear forms, lookup tables, external
//! processes, and the noise wrappers used by noise-node augmentation.

mod expr;
mod external;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use expr::{BinOp, Builtin, Expr, Expression, ParseError};
pub use external::{call_external, ExternalError, ExternalModel, ExternalSpec, PROTOCOL_JSONL_V1};

/// A node value: real or categorical. Booleans are the reals `0.0`/`1.0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Real(f64),
    Cat(String),
}

impl Value {
    pub fn as_real(&self) -> Option<f64> {
        match self {
            Value::Real(v) => Some(*v),
            Value::Cat(_) => None,
        }
    }

    pub fn real(&self) -> Result<f64, EvalError> {
        self.as_real()
            .ok_or_else(|| EvalError::Domain(format!("expected a real value, got {self}")))
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Real(v) => write!(f, "{v}"),
            Value::Cat(c) => write!(f, "{c:?}"),
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Real(v)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("function expects {expected} arguments, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("external model: {0}")]
    External(#[from] ExternalError),
    #[error("external functions need a running process; evaluate through a graph evaluator")]
    NeedsProcess,
}

/// One row of a lookup table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub key: Vec<Value>,
    pub value: Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableFn {
    pub arity: usize,
    pub entries: Vec<TableEntry>,
    pub default: Option<Value>,
}

impl TableFn {
    fn lookup(&self, args: &[Value]) -> Result<Value, EvalError> {
        self.entries
            .iter()
            .find(|e| e.key.as_slice() == args)
            .map(|e| e.value.clone())
            .or_else(|| self.default.clone())
            .ok_or_else(|| {
                let key: Vec<String> = args.iter().map(ToString::to_string).collect();
                EvalError::Domain(format!("no table entry for ({})", key.join(", ")))
            })
    }
}

/// How a noise-augmented node combines its prediction with its noise
/// parent (always the last argument).
#[derive(Clone, Debug, PartialEq)]
pub enum NoiseMode {
    /// `prediction + noise`, where the noise value is the residual.
    Additive(Box<FunctionSpec>),
    /// One unnormalized probability per category; the node takes the
    /// category whose CDF interval contains the noise value in `[0, 1)`.
    Categorical {
        probs: Vec<FunctionSpec>,
        labels: Option<Vec<String>>,
    },
}

/// A node's computation.
#[derive(Clone, Debug, PartialEq)]
pub enum FunctionSpec {
    Expression(Expression),
    Linear { weights: Vec<f64>, bias: f64 },
    Table(TableFn),
    External(ExternalSpec),
    Noisy(NoiseMode),
}

impl FunctionSpec {
    /// Parses `text` with its variables bound to `vars` in order.
    pub fn parse_expression(text: &str, vars: &[String]) -> Result<Self, ParseError> {
        Expression::parse(text, vars).map(FunctionSpec::Expression)
    }

    pub fn arity(&self) -> usize {
        match self {
            FunctionSpec::Expression(e) => e.vars.len(),
            FunctionSpec::Linear { weights, .. } => weights.len(),
            FunctionSpec::Table(t) => t.arity,
            FunctionSpec::External(x) => x.inputs.len(),
            FunctionSpec::Noisy(NoiseMode::Additive(base)) => base.arity() + 1,
            FunctionSpec::Noisy(NoiseMode::Categorical { probs, .. }) => {
                probs.first().map_or(0, FunctionSpec::arity) + 1
            }
        }
    }

    pub fn is_external(&self) -> bool {
        match self {
            FunctionSpec::External(_) => true,
            FunctionSpec::Noisy(NoiseMode::Additive(base)) => base.is_external(),
            FunctionSpec::Noisy(NoiseMode::Categorical { probs, .. }) => {
                probs.iter().any(FunctionSpec::is_external)
            }
            _ => false,
        }
    }

    /// Equivalent expression tree, when one exists. Linear forms expand to
    /// `w0*x0 + ... + b`; tables, external models and noise wrappers have no
    /// expression form.
    pub fn to_expr(&self) -> Option<Expr> {
        match self {
            FunctionSpec::Expression(e) => Some(e.ast.clone()),
            FunctionSpec::Linear { weights, bias } => {
                let mut acc: Option<Expr> = None;
                for (i, w) in weights.iter().enumerate() {
                    let term = Expr::binary(BinOp::Mul, Expr::Num(*w), Expr::Var(i));
                    acc = Some(match acc {
                        None => term,
                        Some(a) => Expr::binary(BinOp::Add, a, term),
                    });
                }
                Some(match acc {
                    None => Expr::Num(*bias),
                    Some(a) => Expr::binary(BinOp::Add, a, Expr::Num(*bias)),
                })
            }
            _ => None,
        }
    }
}

/// Evaluates a pure function. External models need a process handle and
/// return [`EvalError::NeedsProcess`] here.
pub fn evaluate_function(func: &FunctionSpec, args: &[Value]) -> Result<Value, EvalError> {
    evaluate_with(func, args, &mut |_, _| Err(EvalError::NeedsProcess))
}

/// Callback that evaluates an external model on positional arguments.
pub(crate) type ExternalCall<'a> = dyn FnMut(&ExternalSpec, &[Value]) -> Result<Value, EvalError> + 'a;

/// Evaluates `func`, delegating external calls to `external`.
pub(crate) fn evaluate_with(func: &FunctionSpec, args: &[Value], external: &mut ExternalCall<'_>) -> Result<Value, EvalError> {
    let expected = func.arity();
    if args.len() != expected {
        return Err(EvalError::ArityMismatch { expected, got: args.len() });
    }
    match func {
        FunctionSpec::Expression(e) => e.eval(args),
        FunctionSpec::Linear { weights, bias } => {
            let mut acc = *bias;
            for (w, a) in weights.iter().zip(args) {
                acc += w * a.real()?;
            }
            Ok(Value::Real(acc))
        }
        FunctionSpec::Table(t) => t.lookup(args),
        FunctionSpec::External(spec) => external(spec, args),
        FunctionSpec::Noisy(NoiseMode::Additive(base)) => {
            let (noise, rest) = args.split_last().expect("noisy arity >= 1");
            let pred = evaluate_with(base, rest, external)?.real()?;
            Ok(Value::Real(pred + noise.real()?))
        }
        FunctionSpec::Noisy(NoiseMode::Categorical { probs, labels }) => {
            let (noise, rest) = args.split_last().expect("noisy arity >= 1");
            let u = noise.real()?;
            let weights = probs
                .iter()
                .map(|p| evaluate_with(p, rest, external)?.real())
                .collect::<Result<Vec<_>, _>>()?;
            let k = inverse_cdf(&weights, u)?;
            Ok(match labels {
                Some(l) => Value::Cat(l[k].clone()),
                None => Value::Real(k as f64),
            })
        }
    }
}

/// Index of the category whose cumulative interval `[CDF(k-1), CDF(k))`
/// contains `u`, after normalizing `weights`.
pub fn inverse_cdf(weights: &[f64], u: f64) -> Result<usize, EvalError> {
    let total: f64 = weights.iter().sum();
    if weights.is_empty() || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) || total <= 0.0 {
        return Err(EvalError::Domain(format!("invalid category weights {weights:?}")));
    }
    if !(0.0..=1.0).contains(&u) {
        return Err(EvalError::Domain(format!("noise value {u} outside [0, 1]")));
    }
    let mut cdf = 0.0;
    for (k, w) in weights.iter().enumerate() {
        cdf += w / total;
        if u < cdf {
            return Ok(k);
        }
    }
    // u == 1.0 or rounding at the top: last category with positive mass.
    Ok(weights.iter().rposition(|w| *w > 0.0).unwrap_or(weights.len() - 1))
}

/// Serialized form of a node function, before its variables are bound to
/// the node's parents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum FunctionDoc {
    Expr {
        expr: String,
    },
    Linear {
        weights: Vec<f64>,
        #[serde(default)]
        bias: f64,
    },
    Table {
        entries: Vec<TableEntry>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        default: Option<Value>,
    },
    External {
        command: Vec<String>,
        #[serde(default = "default_protocol")]
        protocol: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        timeout_ms: Option<u64>,
    },
    Noisy {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        additive: Option<Box<FunctionDoc>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        categorical: Option<Vec<FunctionDoc>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labels: Option<Vec<String>>,
    },
}

fn default_protocol() -> String {
    PROTOCOL_JSONL_V1.to_string()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BindError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("{0}")]
    Invalid(String),
}

impl FunctionDoc {
    /// Binds the document to a node whose parents are `parents`. Noise
    /// wrappers bind their inner functions to all parents but the last.
    pub fn bind(&self, parents: &[String]) -> Result<FunctionSpec, BindError> {
        Ok(match self {
            FunctionDoc::Expr { expr } => FunctionSpec::parse_expression(expr, parents)?,
            FunctionDoc::Linear { weights, bias } => {
                FunctionSpec::Linear { weights: weights.clone(), bias: *bias }
            }
            FunctionDoc::Table { entries, default } => {
                if let Some(bad) = entries.iter().find(|e| e.key.len() != parents.len()) {
                    return Err(BindError::Invalid(format!(
                        "table key of length {} for {} parents",
                        bad.key.len(),
                        parents.len()
                    )));
                }
                FunctionSpec::Table(TableFn {
                    arity: parents.len(),
                    entries: entries.clone(),
                    default: default.clone(),
                })
            }
            FunctionDoc::External { command, protocol, timeout_ms } => {
                if command.is_empty() {
                    return Err(BindError::Invalid("external command is empty".into()));
                }
                if protocol != PROTOCOL_JSONL_V1 {
                    return Err(BindError::Invalid(format!("unknown protocol {protocol:?}")));
                }
                FunctionSpec::External(ExternalSpec {
                    command: command.clone(),
                    inputs: parents.to_vec(),
                    timeout: std::time::Duration::from_millis(
                        timeout_ms.unwrap_or(external::DEFAULT_TIMEOUT_MS),
                    ),
                })
            }
            FunctionDoc::Noisy { additive, categorical, labels } => {
                let Some((_, inner)) = parents.split_last() else {
                    return Err(BindError::Invalid("noisy function needs a noise parent".into()));
                };
                match (additive, categorical) {
                    (Some(base), None) => {
                        FunctionSpec::Noisy(NoiseMode::Additive(Box::new(base.bind(inner)?)))
                    }
                    (None, Some(probs)) if !probs.is_empty() => {
                        if labels.as_ref().is_some_and(|l| l.len() != probs.len()) {
                            return Err(BindError::Invalid("label count differs from category count".into()));
                        }
                        FunctionSpec::Noisy(NoiseMode::Categorical {
                            probs: probs.iter().map(|p| p.bind(inner)).collect::<Result<_, _>>()?,
                            labels: labels.clone(),
                        })
                    }
                    _ => {
                        return Err(BindError::Invalid(
                            "noisy function needs exactly one of `additive` or a non-empty `categorical`".into(),
                        ))
                    }
                }
            }
        })
    }
}

impl From<&FunctionSpec> for FunctionDoc {
    fn from(spec: &FunctionSpec) -> Self {
        match spec {
            FunctionSpec::Expression(e) => FunctionDoc::Expr { expr: e.to_string() },
            FunctionSpec::Linear { weights, bias } => {
                FunctionDoc::Linear { weights: weights.clone(), bias: *bias }
            }
            FunctionSpec::Table(t) => {
                FunctionDoc::Table { entries: t.entries.clone(), default: t.default.clone() }
            }
            FunctionSpec::External(x) => FunctionDoc::External {
                command: x.command.clone(),
                protocol: PROTOCOL_JSONL_V1.to_string(),
                timeout_ms: Some(x.timeout.as_millis() as u64),
            },
            FunctionSpec::Noisy(NoiseMode::Additive(base)) => FunctionDoc::Noisy {
                additive: Some(Box::new(base.as_ref().into())),
                categorical: None,
                labels: None,
            },
            FunctionSpec::Noisy(NoiseMode::Categorical { probs, labels }) => FunctionDoc::Noisy {
                additive: None,
                categorical: Some(probs.iter().map(Into::into).collect()),
                labels: labels.clone(),
            },
        }
    }
}

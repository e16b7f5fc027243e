//! Black-box node functions served by a child process.
//!
//! Wire protocol (`jsonl-v1`), one UTF-8 JSON object per line over the
//! child's stdin/stdout:
//!
//! ```text
//! -> {"id": 7, "inputs": {"x1": 0.5, "color": "red"}}
//! <- {"id": 7, "output": 1.25}
//! ```
//!
//! One request is in flight at a time. Each handle owns its process, so
//! parallel evaluators spawn one process each.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::Value;

pub const PROTOCOL_JSONL_V1: &str = "jsonl-v1";
pub(crate) const DEFAULT_TIMEOUT_MS: u64 = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct ExternalSpec {
    pub command: Vec<String>,
    /// Request keys, one per argument, in argument order.
    pub inputs: Vec<String>,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExternalError {
    #[error("failed to start `{command}`: {reason}")]
    Spawn { command: String, reason: String },
    #[error("external process is dead")]
    ProcessDead,
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("no response within {0:?}")]
    Timeout(Duration),
}

#[derive(Serialize)]
struct Request<'a> {
    id: u64,
    inputs: &'a BTreeMap<String, Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Response {
    id: u64,
    output: f64,
}

enum Line {
    Text(String),
    Closed,
}

/// A running external model.
pub struct ExternalModel {
    spec: ExternalSpec,
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<Line>,
    next_id: u64,
    dead: bool,
}

impl ExternalModel {
    pub fn spawn(spec: &ExternalSpec) -> Result<Self, ExternalError> {
        let (program, args) = spec.command.split_first().ok_or_else(|| ExternalError::Spawn {
            command: String::new(),
            reason: "empty command".into(),
        })?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ExternalError::Spawn {
                command: spec.command.join(" "),
                reason: e.to_string(),
            })?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let reader = BufReader::new(stdout);
            for line in reader.lines() {
                match line {
                    Ok(l) => {
                        if tx.send(Line::Text(l)).is_err() {
                            return;
                        }
                    }
                    Err(_) => break,
                }
            }
            let _ = tx.send(Line::Closed);
        });
        Ok(ExternalModel { spec: spec.clone(), child, stdin, lines: rx, next_id: 0, dead: false })
    }

    pub fn spec(&self) -> &ExternalSpec {
        &self.spec
    }

    /// Positional call: `args[i]` is sent under `spec.inputs[i]`.
    pub fn call_positional(&mut self, args: &[Value]) -> Result<Value, ExternalError> {
        let named: BTreeMap<String, Value> =
            self.spec.inputs.iter().cloned().zip(args.iter().cloned()).collect();
        self.call(&named)
    }

    /// One request/response round trip.
    pub fn call(&mut self, inputs: &BTreeMap<String, Value>) -> Result<Value, ExternalError> {
        if self.dead {
            return Err(ExternalError::ProcessDead);
        }
        let id = self.next_id;
        self.next_id += 1;
        let mut line = serde_json::to_string(&Request { id, inputs })
            .map_err(|e| ExternalError::ProtocolViolation(e.to_string()))?;
        line.push('\n');
        let sent = match self.stdin.as_mut() {
            Some(stdin) => stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()),
            None => Err(std::io::ErrorKind::BrokenPipe.into()),
        };
        if sent.is_err() {
            return Err(self.fail(ExternalError::ProcessDead));
        }
        let reply = match self.lines.recv_timeout(self.spec.timeout) {
            Ok(Line::Text(t)) => t,
            Ok(Line::Closed) | Err(RecvTimeoutError::Disconnected) => {
                return Err(self.fail(ExternalError::ProcessDead))
            }
            Err(RecvTimeoutError::Timeout) => {
                return Err(self.fail(ExternalError::Timeout(self.spec.timeout)))
            }
        };
        let resp: Response = serde_json::from_str(&reply).map_err(|e| {
            self.fail(ExternalError::ProtocolViolation(format!("bad response {reply:?}: {e}")))
        })?;
        if resp.id != id {
            return Err(self.fail(ExternalError::ProtocolViolation(format!(
                "response id {} does not echo request id {id}",
                resp.id
            ))));
        }
        Ok(Value::Real(resp.output))
    }

    // A handle that saw an error is never reused: the stream may be out of
    // step with our request ids.
    fn fail(&mut self, err: ExternalError) -> ExternalError {
        self.dead = true;
        self.stdin = None;
        let _ = self.child.kill();
        let _ = self.child.wait();
        err
    }
}

impl Drop for ExternalModel {
    fn drop(&mut self) {
        self.stdin = None;
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Sends `args` to a running model and returns its output.
pub fn call_external(
    model: &mut ExternalModel,
    args: &BTreeMap<String, Value>,
) -> Result<Value, ExternalError> {
    model.call(args)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn python(script: &str, timeout_ms: u64) -> ExternalSpec {
        ExternalSpec {
            command: vec!["python3".into(), "-u".into(), "-c".into(), script.into()],
            inputs: vec!["x".into()],
            timeout: Duration::from_millis(timeout_ms),
        }
    }

    const ECHO: &str = "import sys, json\nfor line in sys.stdin:\n    r = json.loads(line)\n    print(json.dumps({'id': r['id'], 'output': r['inputs']['x']}))\n";

    #[test]
    fn echo_model() {
        let mut m = ExternalModel::spawn(&python(ECHO, 10_000)).unwrap();
        let args = BTreeMap::from([("x".to_string(), Value::Real(3.5))]);
        assert_eq!(call_external(&mut m, &args).unwrap(), Value::Real(3.5));
        assert_eq!(m.call_positional(&[Value::Real(-1.0)]).unwrap(), Value::Real(-1.0));
    }

    #[test]
    fn process_exits_mid_call() {
        let script = "import sys\nsys.stdin.readline()\nsys.exit(0)\n";
        let mut m = ExternalModel::spawn(&python(script, 10_000)).unwrap();
        assert_eq!(m.call_positional(&[Value::Real(1.0)]), Err(ExternalError::ProcessDead));
        assert_eq!(m.call_positional(&[Value::Real(1.0)]), Err(ExternalError::ProcessDead));
    }

    #[test]
    fn missing_output_field() {
        let script = "import sys, json\nfor line in sys.stdin:\n    r = json.loads(line)\n    print(json.dumps({'id': r['id']}))\n";
        let mut m = ExternalModel::spawn(&python(script, 10_000)).unwrap();
        assert!(matches!(
            m.call_positional(&[Value::Real(1.0)]),
            Err(ExternalError::ProtocolViolation(_))
        ));
    }

    #[test]
    fn wrong_id() {
        let script = "import sys, json\nfor line in sys.stdin:\n    print(json.dumps({'id': 99, 'output': 1.0}))\n";
        let mut m = ExternalModel::spawn(&python(script, 10_000)).unwrap();
        assert!(matches!(
            m.call_positional(&[Value::Real(1.0)]),
            Err(ExternalError::ProtocolViolation(_))
        ));
    }

    #[test]
    fn timeout() {
        let script = "import sys, time\nsys.stdin.readline()\ntime.sleep(5)\n";
        let mut m = ExternalModel::spawn(&python(script, 200)).unwrap();
        assert_eq!(
            m.call_positional(&[Value::Real(1.0)]),
            Err(ExternalError::Timeout(Duration::from_millis(200)))
        );
    }

    #[test]
    fn spawn_failure() {
        let spec = ExternalSpec {
            command: vec!["/nonexistent/model-binary".into()],
            inputs: vec![],
            timeout: Duration::from_secs(1),
        };
        assert!(matches!(ExternalModel::spawn(&spec), Err(ExternalError::Spawn { .. })));
    }
}

//! Adapter for external classifier processes.
//!
//! Each call runs `program args...` with one JSON request on stdin and
//! expects one JSON reply on stdout. The model state is opaque JSON owned by
//! the adapter and passed back on every call, so the external process can be
//! stateless.
//!
//! Requests:
//! * `{"op":"init","num_classes":k,"seed":s}` -> `{"state":...}`
//! * `{"op":"train_epoch","state":...,"examples":[{"text","label"}],"context":{...},"config":{...}}` -> `{"state":...}`
//! * `{"op":"predict","state":...,"texts":[...]}` -> `{"labels":[...]}`

use std::io::Write;
use std::process::{Command, Stdio};

use serde_json::{json, Value};

use super::{ClassifierBackend, EpochContext, Example, MemberModel, TrainConfig, TrainError};

#[derive(Debug, Clone)]
pub struct CommandBackend {
    id: String,
    program: String,
    args: Vec<String>,
}

impl CommandBackend {
    pub fn new(id: impl Into<String>, program: impl Into<String>, args: Vec<String>) -> Self {
        CommandBackend {
            id: id.into(),
            program: program.into(),
            args,
        }
    }

    fn failure(&self, message: impl Into<String>) -> TrainError {
        TrainError::BackendFailure {
            backend: self.id.clone(),
            message: message.into(),
        }
    }

    fn call(&self, request: &Value) -> Result<Value, TrainError> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| self.failure(format!("cannot start {}: {e}", self.program)))?;
        {
            let mut stdin = child.stdin.take().expect("stdin is piped");
            let body = serde_json::to_vec(request)?;
            // a process that ignores its input may close stdin early
            if let Err(e) = stdin.write_all(&body) {
                if e.kind() != std::io::ErrorKind::BrokenPipe {
                    return Err(e.into());
                }
            }
        }
        let output = child.wait_with_output()?;
        if !output.status.success() {
            return Err(self.failure(format!(
                "exited with {}: {}",
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        serde_json::from_slice(&output.stdout).map_err(|e| self.failure(format!("unreadable reply: {e}")))
    }

    fn state_from(&self, reply: Value) -> Result<Value, TrainError> {
        match reply {
            Value::Object(mut map) => map.remove("state").ok_or_else(|| self.failure("reply has no state")),
            _ => Err(self.failure("reply is not an object")),
        }
    }
}

impl ClassifierBackend for CommandBackend {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn init(&self, num_classes: usize, seed: u64) -> Result<Box<dyn MemberModel>, TrainError> {
        let reply = self.call(&json!({"op": "init", "num_classes": num_classes, "seed": seed}))?;
        Ok(Box::new(CommandModel {
            backend: self.clone(),
            num_classes,
            state: self.state_from(reply)?,
        }))
    }
}

struct CommandModel {
    backend: CommandBackend,
    num_classes: usize,
    state: Value,
}

impl MemberModel for CommandModel {
    fn train_epoch(&mut self, examples: &[Example], ctx: EpochContext, config: &TrainConfig) -> Result<(), TrainError> {
        let reply = self.backend.call(&json!({
            "op": "train_epoch",
            "state": self.state,
            "examples": examples,
            "context": ctx,
            "config": config,
        }))?;
        self.state = self.backend.state_from(reply)?;
        Ok(())
    }

    fn predict(&self, texts: &[&str]) -> Result<Vec<usize>, TrainError> {
        let reply = self
            .backend
            .call(&json!({"op": "predict", "state": self.state, "texts": texts}))?;
        let labels: Vec<usize> = serde_json::from_value(reply.get("labels").cloned().unwrap_or(Value::Null))
            .map_err(|e| self.backend.failure(format!("bad labels: {e}")))?;
        if labels.len() != texts.len() || labels.iter().any(|l| *l >= self.num_classes) {
            return Err(self.backend.failure("labels do not match the request"));
        }
        Ok(labels)
    }

    fn checkpoint(&self) -> Value {
        self.state.clone()
    }

    fn restore(&mut self, state: &Value) -> Result<(), TrainError> {
        self.state = state.clone();
        Ok(())
    }
}

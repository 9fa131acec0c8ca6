//! Line-delimited request/response protocol for driving environments that
//! live in another process (e.g. a physics simulator with Python bindings).
//!
//! One JSON message per line. Wire payloads are always `f64`; the client
//! converts to its scalar type. The server side must honor the seeding
//! contract: `reset` with equal seeds yields equal initial states.
//!
//! ```text
//! -> {"cmd":"spec"}
//! <- {"spec":{...}}
//! -> {"cmd":"reset","seed":7}
//! <- {"state":[0.1,-0.2]}
//! -> {"cmd":"step","action":[1.0,0.0]}
//! <- {"step":{"next_state":[0.2,-0.2],"reward":-1.2,"terminal":false}}
//! <- {"error":"message"}        (any request may fail)
//! ```

use super::{EnvSpec, Environment, StepOutcome};
use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, Command, Stdio};

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum Request {
    Spec,
    Reset { seed: u64 },
    Step { action: Vec<f64> },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    Spec { spec: EnvSpec<f64> },
    State { state: Vec<f64> },
    Step { next_state: Vec<f64>, reward: f64, terminal: bool },
    Error { error: String },
}

/// Serves `env` over a line stream until EOF. Errors from the environment are
/// reported in-band as `Response::Error`; the loop keeps serving.
pub fn serve_environment<F: Scalar>(
    env: &mut dyn Environment<F>,
    input: impl BufRead,
    mut output: impl Write,
) -> Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<Request>(&line) {
            Err(e) => Response::Error { error: format!("bad request: {e}") },
            Ok(Request::Spec) => Response::Spec { spec: env.spec().to_wire() },
            Ok(Request::Reset { seed }) => match env.reset(seed) {
                Ok(state) => Response::State { state: to_f64(&state) },
                Err(e) => Response::Error { error: e.to_string() },
            },
            Ok(Request::Step { action }) => {
                let action: Vec<F> = action.iter().map(|&x| F::of_f64(x)).collect();
                match env.step(&action) {
                    Ok(out) => Response::Step {
                        next_state: to_f64(&out.next_state),
                        reward: out.reward.as_f64(),
                        terminal: out.terminal,
                    },
                    Err(e) => Response::Error { error: e.to_string() },
                }
            }
        };
        serde_json::to_writer(&mut output, &response)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}

fn to_f64<F: Scalar>(xs: &[F]) -> Vec<f64> {
    xs.iter().map(|x| x.as_f64()).collect()
}


/// An [`Environment`] backed by a peer speaking the adapter protocol,
/// either a spawned child process or caller-provided streams.
pub struct ExternalEnvClient<F: Scalar> {
    spec: EnvSpec<F>,
    reader: BufReader<Box<dyn Read + Send>>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
}

impl<F: Scalar> ExternalEnvClient<F> {
    /// Spawns `command` and talks to it over its standard streams.
    pub fn from_command(command: &mut Command) -> Result<Self> {
        let mut child = command
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Self::connect(Box::new(stdout), Box::new(stdin), Some(child))
    }

    /// Uses caller-provided streams (e.g. a local socket).
    pub fn from_streams(
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
    ) -> Result<Self> {
        Self::connect(Box::new(reader), Box::new(writer), None)
    }

    fn connect(
        reader: Box<dyn Read + Send>,
        writer: Box<dyn Write + Send>,
        child: Option<Child>,
    ) -> Result<Self> {
        let mut client = Self {
            spec: EnvSpec::with_unit_actions("uninitialized", 1, 1, 1),
            reader: BufReader::new(reader),
            writer,
            child,
        };
        match client.round_trip(&Request::Spec)? {
            Response::Spec { spec } => {
                let spec = EnvSpec::from_wire(&spec);
                spec.validate()?;
                client.spec = spec;
                Ok(client)
            }
            other => Err(protocol_err("spec", &other)),
        }
    }

    fn round_trip(&mut self, request: &Request) -> Result<Response> {
        serde_json::to_writer(&mut self.writer, request)?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        let mut line = String::new();
        let n = self.reader.read_line(&mut line)?;
        if n == 0 {
            return Err(CoreError::Protocol("peer closed the stream".into()));
        }
        Ok(serde_json::from_str(&line)?)
    }
}

fn protocol_err(expected: &str, got: &Response) -> CoreError {
    match got {
        Response::Error { error } => CoreError::Protocol(error.clone()),
        other => CoreError::Protocol(format!("expected {expected} response, got {other:?}")),
    }
}

impl<F: Scalar> Environment<F> for ExternalEnvClient<F> {
    fn spec(&self) -> &EnvSpec<F> {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<F>> {
        match self.round_trip(&Request::Reset { seed })? {
            Response::State { state } => {
                if state.len() != self.spec.state_dim {
                    return Err(CoreError::StateDimMismatch {
                        expected: self.spec.state_dim,
                        got: state.len(),
                    });
                }
                Ok(state.iter().map(|&x| F::of_f64(x)).collect())
            }
            other => Err(protocol_err("state", &other)),
        }
    }

    fn step(&mut self, action: &[F]) -> Result<StepOutcome<F>> {
        let request = Request::Step { action: to_f64(action) };
        match self.round_trip(&request)? {
            Response::Step { next_state, reward, terminal } => Ok(StepOutcome {
                next_state: next_state.iter().map(|&x| F::of_f64(x)).collect(),
                reward: F::of_f64(reward),
                terminal,
            }),
            other => Err(protocol_err("step", &other)),
        }
    }
}

impl<F: Scalar> Drop for ExternalEnvClient<F> {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

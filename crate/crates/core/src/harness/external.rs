//! Newline-delimited JSON protocol for proposers and evaluators that live in
//! another process, reachable over standard streams or HTTP.
//!
//! Request: `{"kind": "propose" | "evaluate", "program": {...}, "params": {...}}`
//! where propose params are `{count, seed}` and evaluate params are
//! `{problems}`. Response: `{"candidates": [...]}` or `{"reward", "traces"}`,
//! always with `"usage": {prompt_tokens, completion_tokens}`, or `{"error"}`.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::workflow::{ExecutionTrace, WorkflowProgram};

use super::{Evaluation, Evaluator, HarnessError, Problem, Proposal, Proposer, Usage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    Propose,
    Evaluate,
}

/// `params` stays untyped on the wire and is decoded according to `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Request {
    pub kind: RequestKind,
    pub program: WorkflowProgram,
    pub params: serde_json::Value,
}

impl Request {
    pub fn propose(program: &WorkflowProgram, count: usize, seed: u64) -> Self {
        Self {
            kind: RequestKind::Propose,
            program: program.clone(),
            params: serde_json::to_value(ProposeParams { count, seed }).expect("params serialize"),
        }
    }

    pub fn evaluate(program: &WorkflowProgram, problems: &[Problem]) -> Self {
        Self {
            kind: RequestKind::Evaluate,
            program: program.clone(),
            params: serde_json::to_value(EvaluateParams {
                problems: problems.to_vec(),
            })
            .expect("params serialize"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposeParams {
    pub count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateParams {
    pub problems: Vec<Problem>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Response {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<WorkflowProgram>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traces: Option<Vec<ExecutionTrace>>,
    #[serde(default)]
    pub usage: Usage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Answers one request with local implementations.
pub fn handle(req: Request, proposer: &dyn Proposer, evaluator: &dyn Evaluator) -> Response {
    let bad = |e: serde_json::Error| HarnessError::Protocol(format!("bad params: {e}"));
    let result = match req.kind {
        RequestKind::Propose => serde_json::from_value::<ProposeParams>(req.params)
            .map_err(bad)
            .and_then(|p| proposer.propose(&req.program, p.count, p.seed))
            .map(|p| Response {
                candidates: Some(p.candidates),
                usage: p.usage,
                ..Default::default()
            }),
        RequestKind::Evaluate => serde_json::from_value::<EvaluateParams>(req.params)
            .map_err(bad)
            .and_then(|p| evaluator.evaluate(&req.program, &p.problems))
            .map(|e| Response {
                reward: Some(e.reward),
                traces: Some(e.traces),
                usage: e.usage,
                ..Default::default()
            }),
    };
    result.unwrap_or_else(|e| Response {
        error: Some(e.to_string()),
        ..Default::default()
    })
}

fn handle_line(line: &str, proposer: &dyn Proposer, evaluator: &dyn Evaluator) -> String {
    let resp = match serde_json::from_str::<Request>(line) {
        Ok(req) => handle(req, proposer, evaluator),
        Err(e) => Response {
            error: Some(format!("bad request: {e}")),
            ..Default::default()
        },
    };
    serde_json::to_string(&resp).expect("response serializes")
}

/// Serves requests line by line until `reader` reaches end of input.
pub fn serve_lines<R: BufRead, W: Write>(
    reader: R,
    mut writer: W,
    proposer: &dyn Proposer,
    evaluator: &dyn Evaluator,
) -> std::io::Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        writeln!(writer, "{}", handle_line(&line, proposer, evaluator))?;
        writer.flush()?;
    }
    Ok(())
}

/// Minimal HTTP/1.1 server: each POST body is one request. Connections are
/// handled one at a time and closed after the response. Stops after
/// `max_requests` when given.
pub fn serve_http(
    listener: TcpListener,
    proposer: &dyn Proposer,
    evaluator: &dyn Evaluator,
    max_requests: Option<usize>,
) -> std::io::Result<()> {
    for (served, stream) in listener.incoming().enumerate() {
        let mut stream = stream?;
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut content_length = 0usize;
        let mut line = String::new();
        reader.read_line(&mut line)?;
        loop {
            line.clear();
            if reader.read_line(&mut line)? == 0 || line.trim().is_empty() {
                break;
            }
            if let Some((k, v)) = line.split_once(':') {
                if k.trim().eq_ignore_ascii_case("content-length") {
                    content_length = v.trim().parse().unwrap_or(0);
                }
            }
        }
        let mut body = vec![0u8; content_length];
        reader.read_exact(&mut body)?;
        let out = handle_line(&String::from_utf8_lossy(&body), proposer, evaluator);
        write!(
            stream,
            "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
            out.len(),
            out
        )?;
        stream.flush()?;
        if max_requests.is_some_and(|m| served + 1 >= m) {
            break;
        }
    }
    Ok(())
}

struct ChildPipes {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

enum Transport {
    Stdio(Mutex<ChildPipes>),
    Http { url: String, agent: ureq::Agent },
}

/// Client side of the protocol; implements both roles. Requests over one
/// connection are serialized.
pub struct ExternalAdapter {
    transport: Transport,
}

impl std::fmt::Debug for ExternalAdapter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.transport {
            Transport::Stdio(_) => f.write_str("ExternalAdapter(stdio)"),
            Transport::Http { url, .. } => write!(f, "ExternalAdapter({url})"),
        }
    }
}

impl ExternalAdapter {
    /// `http://host:port/path` connects over HTTP; `exec:PROGRAM ARGS...`
    /// spawns a child process and talks over its standard streams.
    pub fn connect(addr: &str) -> Result<Self, HarnessError> {
        if addr.starts_with("http://") {
            return Ok(Self::http(addr));
        }
        let Some(cmd) = addr.strip_prefix("exec:") else {
            return Err(HarnessError::Config(format!(
                "external address `{addr}` must start with http:// or exec:"
            )));
        };
        let mut parts = cmd.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| HarnessError::Config("empty exec command".into()))?;
        let args: Vec<String> = parts.map(String::from).collect();
        Self::spawn(program, &args)
    }

    pub fn http(url: &str) -> Self {
        Self {
            transport: Transport::Http {
                url: url.to_string(),
                agent: ureq::Agent::new_with_defaults(),
            },
        }
    }

    pub fn spawn(program: &str, args: &[String]) -> Result<Self, HarnessError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| HarnessError::Transport(format!("spawn `{program}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            transport: Transport::Stdio(Mutex::new(ChildPipes { child, stdin, stdout })),
        })
    }

    pub fn call(&self, req: &Request) -> Result<Response, HarnessError> {
        let body = serde_json::to_string(req).expect("request serializes");
        let text = match &self.transport {
            Transport::Stdio(pipes) => {
                let mut p = pipes.lock().map_err(|_| HarnessError::Transport("poisoned connection".into()))?;
                writeln!(p.stdin, "{body}").map_err(|e| HarnessError::Transport(e.to_string()))?;
                p.stdin.flush().map_err(|e| HarnessError::Transport(e.to_string()))?;
                let mut line = String::new();
                let n = p
                    .stdout
                    .read_line(&mut line)
                    .map_err(|e| HarnessError::Transport(e.to_string()))?;
                if n == 0 {
                    return Err(HarnessError::Transport("remote closed the stream".into()));
                }
                line
            }
            Transport::Http { url, agent } => {
                let mut resp = agent
                    .post(url.as_str())
                    .header("content-type", "application/json")
                    .send(body.as_str())
                    .map_err(|e| HarnessError::Transport(e.to_string()))?;
                resp.body_mut()
                    .read_to_string()
                    .map_err(|e| HarnessError::Transport(e.to_string()))?
            }
        };
        let resp: Response = serde_json::from_str(text.trim()).map_err(|e| HarnessError::Protocol(e.to_string()))?;
        if let Some(err) = &resp.error {
            return Err(HarnessError::Remote(err.clone()));
        }
        Ok(resp)
    }
}

impl Drop for ExternalAdapter {
    fn drop(&mut self) {
        if let Transport::Stdio(pipes) = &self.transport {
            if let Ok(mut p) = pipes.lock() {
                let _ = p.child.kill();
                let _ = p.child.wait();
            }
        }
    }
}

impl Proposer for ExternalAdapter {
    fn propose(&self, program: &WorkflowProgram, count: usize, seed: u64) -> Result<Proposal, HarnessError> {
        let resp = self.call(&Request::propose(program, count, seed))?;
        let mut candidates = resp
            .candidates
            .ok_or_else(|| HarnessError::Protocol("propose response without candidates".into()))?;
        candidates.truncate(count);
        Ok(Proposal {
            candidates,
            usage: resp.usage,
        })
    }
}

impl Evaluator for ExternalAdapter {
    fn evaluate(&self, program: &WorkflowProgram, problems: &[Problem]) -> Result<Evaluation, HarnessError> {
        if problems.is_empty() {
            return Err(HarnessError::EmptyBatch);
        }
        let resp = self.call(&Request::evaluate(program, problems))?;
        let reward = resp
            .reward
            .ok_or_else(|| HarnessError::Protocol("evaluate response without reward".into()))?;
        Ok(Evaluation {
            reward,
            traces: resp.traces.unwrap_or_default(),
            usage: resp.usage,
        })
    }
}

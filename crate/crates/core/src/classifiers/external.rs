//! Encoders served by another process over a line-delimited JSON protocol.
//!
//! Each request is one JSON object on a line with an `op` field; each reply
//! is one JSON object with `"ok": true` plus op-specific fields, or
//! `"ok": false` and an `error` message.
//!
//! | op | request fields | reply fields |
//! |----|----------------|--------------|
//! | `init` | `backbone`, `model`, `max_length`, `seed` | `dim` |
//! | `encode` | `texts`, `train` | `pooled` |
//! | `backward` | `grad` | |
//! | `grad_sq_norm` | | `value` |
//! | `step` | `lr`, `grad_scale`, `optimizer` | |
//! | `snapshot` | | `tag` |
//! | `restore` | `tag` | |
//! | `save` | | `state` |
//! | `load` | `state` | |
//! | `shutdown` | | |

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::backbone::{BackboneOptions, BackboneRegistry, Encoder, EncoderSnapshot};
use crate::error::{Error, Result};
use crate::nn::OptimizerConfig;

/// How to launch an encoder process.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalEncoderConfig {
    /// Program and arguments.
    pub command: Vec<String>,
    /// Model identifier passed to the process, e.g. a pretrained checkpoint name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

pub trait Transport: Send {
    fn call(&mut self, request: &Value) -> Result<Value>;
}

fn unwrap_reply(reply: Value) -> Result<Value> {
    match reply.get("ok").and_then(Value::as_bool) {
        Some(true) => Ok(reply),
        _ => Err(Error::External(
            reply
                .get("error")
                .and_then(Value::as_str)
                .unwrap_or("malformed reply")
                .to_string(),
        )),
    }
}

pub struct ProcessTransport {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

impl ProcessTransport {
    pub fn spawn(command: &[String]) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::InvalidArgument("external encoder command is empty".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::io(format!("spawning `{}`", command.join(" ")), e))?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self { child, stdin, stdout })
    }
}

impl Transport for ProcessTransport {
    fn call(&mut self, request: &Value) -> Result<Value> {
        let io_err = |e| Error::io("talking to external encoder", e);
        serde_json::to_writer(&mut self.stdin, request)?;
        self.stdin.write_all(b"\n").map_err(io_err)?;
        self.stdin.flush().map_err(io_err)?;
        let mut line = String::new();
        if self.stdout.read_line(&mut line).map_err(io_err)? == 0 {
            return Err(Error::External("encoder process closed its output".into()));
        }
        unwrap_reply(serde_json::from_str(&line)?)
    }
}

impl Drop for ProcessTransport {
    fn drop(&mut self) {
        let _ = serde_json::to_writer(&mut self.stdin, &json!({"op": "shutdown"}));
        let _ = self.stdin.write_all(b"\n");
        let _ = self.stdin.flush();
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// In-process transport that hands requests straight to an [`EncoderServer`].
pub struct LoopbackTransport {
    server: EncoderServer,
}

impl LoopbackTransport {
    pub fn new(server: EncoderServer) -> Self {
        Self { server }
    }
}

impl Transport for LoopbackTransport {
    fn call(&mut self, request: &Value) -> Result<Value> {
        // round-trip through text so the loopback sees exactly what a pipe would
        let wire = serde_json::to_string(request)?;
        let reply = self.server.handle(&serde_json::from_str(&wire)?);
        unwrap_reply(serde_json::from_str(&serde_json::to_string(&reply)?)?)
    }
}

/// Client side: an [`Encoder`] whose weights live behind a [`Transport`].
pub struct ExternalEncoder {
    name: String,
    dim: usize,
    transport: Mutex<Box<dyn Transport>>,
}

impl ExternalEncoder {
    pub fn spawn(backbone: &str, config: &ExternalEncoderConfig, options: &BackboneOptions) -> Result<Self> {
        let transport = ProcessTransport::spawn(&config.command)?;
        Self::connect(backbone, config.model.as_deref(), Box::new(transport), options)
    }

    pub fn connect(
        backbone: &str,
        model: Option<&str>,
        transport: Box<dyn Transport>,
        options: &BackboneOptions,
    ) -> Result<Self> {
        let mut transport = transport;
        let reply = transport.call(&json!({
            "op": "init",
            "backbone": backbone,
            "model": model,
            "max_length": options.max_length,
            "seed": options.seed,
        }))?;
        let dim = reply
            .get("dim")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::External("init reply lacks `dim`".into()))? as usize;
        Ok(Self {
            name: backbone.to_string(),
            dim,
            transport: Mutex::new(transport),
        })
    }

    fn call(&self, request: Value) -> Result<Value> {
        self.transport
            .lock()
            .map_err(|_| Error::External("transport lock poisoned".into()))?
            .call(&request)
    }

    fn pooled(&self, reply: &Value, expected: usize) -> Result<Vec<Vec<f64>>> {
        let pooled: Vec<Vec<f64>> = serde_json::from_value(
            reply
                .get("pooled")
                .cloned()
                .ok_or_else(|| Error::External("encode reply lacks `pooled`".into()))?,
        )?;
        if pooled.len() != expected || pooled.iter().any(|p| p.len() != self.dim) {
            return Err(Error::External(format!(
                "expected {expected} pooled vectors of width {}",
                self.dim
            )));
        }
        Ok(pooled)
    }
}

impl Encoder for ExternalEncoder {
    fn name(&self) -> &str {
        &self.name
    }

    fn output_dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let reply = self.call(json!({"op": "encode", "texts": texts, "train": false}))?;
        self.pooled(&reply, texts.len())
    }

    fn encode_train(&mut self, texts: &[&str], _rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
        let reply = self.call(json!({"op": "encode", "texts": texts, "train": true}))?;
        self.pooled(&reply, texts.len())
    }

    fn backward(&mut self, grad_pooled: &[Vec<f64>]) -> Result<()> {
        self.call(json!({"op": "backward", "grad": grad_pooled})).map(drop)
    }

    fn grad_sq_norm(&self) -> Result<f64> {
        self.call(json!({"op": "grad_sq_norm"}))?
            .get("value")
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::External("grad_sq_norm reply lacks `value`".into()))
    }

    fn apply_update(&mut self, lr: f64, grad_scale: f64, optimizer: &OptimizerConfig) -> Result<()> {
        self.call(json!({"op": "step", "lr": lr, "grad_scale": grad_scale, "optimizer": optimizer}))
            .map(drop)
    }

    fn snapshot(&mut self) -> Result<EncoderSnapshot> {
        let reply = self.call(json!({"op": "snapshot"}))?;
        let tag = reply
            .get("tag")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::External("snapshot reply lacks `tag`".into()))?;
        Ok(EncoderSnapshot::Remote(tag.to_string()))
    }

    fn restore(&mut self, snapshot: &EncoderSnapshot) -> Result<()> {
        match snapshot {
            EncoderSnapshot::Remote(tag) => self.call(json!({"op": "restore", "tag": tag})).map(drop),
            EncoderSnapshot::Params(_) => Err(Error::State("external encoder got a local snapshot".into())),
        }
    }

    fn save_state(&self) -> Result<Value> {
        Ok(self.call(json!({"op": "save"}))?.get("state").cloned().unwrap_or(Value::Null))
    }

    fn load_state(&mut self, state: &Value) -> Result<()> {
        self.call(json!({"op": "load", "state": state})).map(drop)
    }
}

/// Server side of the protocol, wrapping any registered encoder.
///
/// Lets a Rust encoder be driven out of process, and doubles as the
/// reference implementation of the protocol.
pub struct EncoderServer {
    registry: BackboneRegistry,
    encoder: Option<Box<dyn Encoder>>,
    snapshots: Vec<EncoderSnapshot>,
    rng: ChaCha8Rng,
}

impl EncoderServer {
    pub fn new(registry: BackboneRegistry) -> Self {
        Self {
            registry,
            encoder: None,
            snapshots: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn handle(&mut self, request: &Value) -> Value {
        match self.dispatch(request) {
            Ok(mut reply) => {
                reply["ok"] = Value::Bool(true);
                reply
            }
            Err(e) => json!({"ok": false, "error": e.to_string()}),
        }
    }

    fn encoder(&mut self) -> Result<&mut Box<dyn Encoder>> {
        self.encoder
            .as_mut()
            .ok_or_else(|| Error::State("encoder not initialized; send `init` first".into()))
    }

    fn dispatch(&mut self, req: &Value) -> Result<Value> {
        let field = |name: &str| {
            req.get(name)
                .cloned()
                .ok_or_else(|| Error::InvalidArgument(format!("request lacks `{name}`")))
        };
        let op = req.get("op").and_then(Value::as_str).unwrap_or_default();
        match op {
            "init" => {
                let backbone: String = serde_json::from_value(field("backbone")?)?;
                let options = BackboneOptions {
                    max_length: serde_json::from_value(field("max_length")?)?,
                    seed: serde_json::from_value(field("seed")?)?,
                };
                // A `model` naming a served encoder takes precedence, so one
                // server can stand in for any backbone name.
                let model: Option<String> = req.get("model").and_then(Value::as_str).map(String::from);
                let served = model.filter(|m| self.registry.contains(m)).unwrap_or(backbone);
                self.rng = ChaCha8Rng::seed_from_u64(options.seed);
                let encoder = self.registry.build_encoder(&served, &options)?;
                let dim = encoder.output_dim();
                self.encoder = Some(encoder);
                self.snapshots.clear();
                Ok(json!({"dim": dim}))
            }
            "encode" => {
                let texts: Vec<String> = serde_json::from_value(field("texts")?)?;
                let train = req.get("train").and_then(Value::as_bool).unwrap_or(false);
                let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
                let mut rng = self.rng.clone();
                let encoder = self.encoder()?;
                let pooled = if train {
                    encoder.encode_train(&refs, &mut rng)?
                } else {
                    encoder.encode(&refs)?
                };
                self.rng = rng;
                Ok(json!({"pooled": pooled}))
            }
            "backward" => {
                let grad: Vec<Vec<f64>> = serde_json::from_value(field("grad")?)?;
                self.encoder()?.backward(&grad)?;
                Ok(json!({}))
            }
            "grad_sq_norm" => Ok(json!({"value": self.encoder()?.grad_sq_norm()?})),
            "step" => {
                let lr: f64 = serde_json::from_value(field("lr")?)?;
                let scale: f64 = serde_json::from_value(field("grad_scale")?)?;
                let opt: OptimizerConfig = serde_json::from_value(field("optimizer")?)?;
                self.encoder()?.apply_update(lr, scale, &opt)?;
                Ok(json!({}))
            }
            "snapshot" => {
                let snap = self.encoder()?.snapshot()?;
                self.snapshots.push(snap);
                Ok(json!({"tag": (self.snapshots.len() - 1).to_string()}))
            }
            "restore" => {
                let tag: String = serde_json::from_value(field("tag")?)?;
                let snap = tag
                    .parse::<usize>()
                    .ok()
                    .and_then(|i| self.snapshots.get(i).cloned())
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown snapshot `{tag}`")))?;
                self.encoder()?.restore(&snap)?;
                Ok(json!({}))
            }
            "save" => Ok(json!({"state": self.encoder()?.save_state()?})),
            "load" => {
                let state = field("state")?;
                self.encoder()?.load_state(&state)?;
                Ok(json!({}))
            }
            "shutdown" => Ok(json!({})),
            other => Err(Error::InvalidArgument(format!("unknown op `{other}`"))),
        }
    }

    /// Serves requests line by line until `shutdown` or end of input.
    pub fn serve(&mut self, input: impl BufRead, mut output: impl Write) -> Result<()> {
        for line in input.lines() {
            let line = line.map_err(|e| Error::io("reading request", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let reply = match serde_json::from_str::<Value>(&line) {
                Ok(req) => {
                    let reply = self.handle(&req);
                    if req.get("op").and_then(Value::as_str) == Some("shutdown") {
                        writeln!(output, "{reply}").map_err(|e| Error::io("writing reply", e))?;
                        output.flush().map_err(|e| Error::io("writing reply", e))?;
                        return Ok(());
                    }
                    reply
                }
                Err(e) => json!({"ok": false, "error": format!("bad request: {e}")}),
            };
            writeln!(output, "{reply}").map_err(|e| Error::io("writing reply", e))?;
            output.flush().map_err(|e| Error::io("writing reply", e))?;
        }
        Ok(())
    }
}

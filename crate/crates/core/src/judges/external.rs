use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    rubric_score, FineTuneReport, FineTuneSchedule, InferenceOutcome, Judge, JudgeConfig, JudgeKind, JudgeManifest,
    JudgeMode, JudgeVerdict, VerdictOutcome,
};
use crate::datasets::SampleRecord;
use crate::prompt::{PrimitiveSet, SpatialPrimitive};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Infer,
    Finetune,
}

/// One request line.
#[derive(Debug, Serialize)]
pub struct ExternalRequest<'a> {
    pub id: u64,
    pub op: Op,
    pub mode: JudgeMode,
    pub samples: &'a [SampleRecord],
}

/// One response line: `terms` answers a generative inference, `loss` a
/// contrastive one, `ok` a fine-tuning request.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ExternalResponse {
    pub id: u64,
    #[serde(default)]
    pub terms: Option<Vec<Vec<SpatialPrimitive>>>,
    #[serde(default)]
    pub loss: Option<f64>,
    #[serde(default)]
    pub ok: Option<bool>,
    #[serde(default)]
    pub error: Option<String>,
}

/// Judge living in another process, reached over newline-delimited JSON on
/// a child's pipes or a TCP connection.
pub struct ExternalJudge {
    addr: String,
    mode: JudgeMode,
    timeout: Duration,
    next_id: u64,
    abandoned: BTreeSet<u64>,
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    child: Option<Child>,
}

fn spawn_reader<R: Read + Send + 'static>(reader: R) -> Receiver<std::io::Result<String>> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in BufReader::new(reader).lines() {
            if tx.send(line).is_err() {
                break;
            }
        }
    });
    rx
}

impl ExternalJudge {
    /// `addr` is `host:port`, or `exec:<program> [args…]` to spawn a child
    /// that speaks the protocol on stdin and stdout.
    pub fn connect(addr: &str, mode: JudgeMode, timeout: Duration) -> Result<Self> {
        let (writer, lines, child): (Box<dyn Write + Send>, _, _) = if let Some(cmd) = addr.strip_prefix("exec:") {
            let mut parts = cmd.split_whitespace();
            let program = parts
                .next()
                .ok_or_else(|| Error::Config("external judge command is empty".into()))?;
            let mut child = Command::new(program)
                .args(parts)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()
                .map_err(|e| Error::Judge(format!("cannot start {program:?}: {e}")))?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = child.stdout.take().expect("piped stdout");
            (Box::new(stdin), spawn_reader(stdout), Some(child))
        } else {
            let target = addr
                .to_socket_addrs()
                .map_err(|e| Error::Config(format!("bad external judge address {addr:?}: {e}")))?
                .next()
                .ok_or_else(|| Error::Config(format!("external judge address {addr:?} resolves to nothing")))?;
            let stream = TcpStream::connect_timeout(&target, timeout)
                .map_err(|e| Error::Judge(format!("cannot connect to {addr}: {e}")))?;
            let read_half = stream.try_clone()?;
            (Box::new(stream), spawn_reader(read_half), None)
        };
        Ok(ExternalJudge {
            addr: addr.to_string(),
            mode,
            timeout,
            next_id: 1,
            abandoned: BTreeSet::new(),
            writer,
            lines,
            child,
        })
    }

    pub fn address(&self) -> &str {
        &self.addr
    }

    /// Sends one request and waits for the response carrying its id.
    pub fn roundtrip(&mut self, op: Op, samples: &[SampleRecord]) -> Result<ExternalResponse> {
        let id = self.next_id;
        self.next_id += 1;
        let request = ExternalRequest {
            id,
            op,
            mode: self.mode,
            samples,
        };
        let mut line = serde_json::to_vec(&request)?;
        line.push(b'\n');
        self.writer
            .write_all(&line)
            .and_then(|_| self.writer.flush())
            .map_err(|e| Error::Judge(format!("write to {}: {e}", self.addr)))?;
        loop {
            let text = match self.lines.recv_timeout(self.timeout) {
                Ok(Ok(text)) => text,
                Ok(Err(e)) => return Err(Error::Judge(format!("read from {}: {e}", self.addr))),
                Err(RecvTimeoutError::Timeout) => {
                    self.abandoned.insert(id);
                    return Err(Error::Timeout(self.timeout));
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Error::Judge(format!("{} closed the connection", self.addr)))
                }
            };
            let response: ExternalResponse =
                serde_json::from_str(&text).map_err(|e| Error::MalformedResponse(format!("{e} in {text:?}")))?;
            // Late answers to requests that already timed out are dropped.
            if self.abandoned.remove(&response.id) {
                continue;
            }
            if response.id != id {
                return Err(Error::IdMismatch {
                    expected: id,
                    got: response.id,
                });
            }
            if let Some(err) = response.error {
                return Err(Error::Judge(format!("{} reported: {err}", self.addr)));
            }
            return Ok(response);
        }
    }
}

impl Drop for ExternalJudge {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl Judge for ExternalJudge {
    fn mode(&self) -> JudgeMode {
        self.mode
    }

    fn kind(&self) -> JudgeKind {
        JudgeKind::External(self.addr.clone())
    }

    fn infer(&mut self, samples: &[SampleRecord]) -> Result<InferenceOutcome> {
        let response = self.roundtrip(Op::Infer, samples)?;
        match self.mode {
            JudgeMode::Generative => {
                let terms = response
                    .terms
                    .ok_or_else(|| Error::MalformedResponse("generative response lacks \"terms\"".into()))?;
                if terms.len() != samples.len() {
                    return Err(Error::MalformedResponse(format!(
                        "{} term lists for {} samples",
                        terms.len(),
                        samples.len()
                    )));
                }
                let verdicts = samples
                    .iter()
                    .zip(terms)
                    .map(|(r, t)| {
                        let predicted: PrimitiveSet = t.into_iter().collect();
                        match r.truth().and_then(|truth| rubric_score(predicted, truth)) {
                            Ok(score) => JudgeVerdict {
                                id: r.id,
                                outcome: VerdictOutcome::Generative {
                                    predicted: predicted.iter().collect(),
                                    score,
                                },
                            },
                            Err(e) => JudgeVerdict::flagged(r.id, &e),
                        }
                    })
                    .collect();
                Ok(InferenceOutcome {
                    verdicts,
                    batch_loss: None,
                })
            }
            JudgeMode::Contrastive => {
                let loss = response
                    .loss
                    .filter(|l| l.is_finite() && *l >= 0.0)
                    .ok_or_else(|| Error::MalformedResponse("contrastive response lacks a valid \"loss\"".into()))?;
                Ok(InferenceOutcome {
                    verdicts: samples
                        .iter()
                        .map(|r| JudgeVerdict {
                            id: r.id,
                            outcome: VerdictOutcome::BatchLoss,
                        })
                        .collect(),
                    batch_loss: Some(loss),
                })
            }
        }
    }

    /// One request covers the whole schedule; the remote side owns the step count.
    fn finetune(
        &mut self,
        batch: &[SampleRecord],
        schedule: FineTuneSchedule,
        validation: &[SampleRecord],
    ) -> Result<FineTuneReport> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("fine-tuning batch is empty".into()));
        }
        let response = self.roundtrip(Op::Finetune, batch)?;
        if response.ok != Some(true) {
            return Err(Error::MalformedResponse("fine-tune response lacks \"ok\": true".into()));
        }
        let mut report = FineTuneReport {
            losses: response.loss.into_iter().collect(),
            validation: Vec::new(),
        };
        if !validation.is_empty() {
            let metric = self.validation_metric(validation)?;
            report.validation.push((schedule.k, metric));
        }
        Ok(report)
    }

    /// Remote weights are opaque; the digest identifies the endpoint only.
    fn digest(&self) -> String {
        crate::sha256_hex(format!("external:{}", self.addr).as_bytes())
    }

    fn save(&self, dir: &Path) -> Result<()> {
        let manifest = JudgeManifest {
            kind: self.kind(),
            vocabulary: None,
            networks: Vec::new(),
            config: JudgeConfig {
                external_mode: self.mode,
                external_timeout_ms: self.timeout.as_millis() as u64,
                ..JudgeConfig::default()
            },
            seed: 0,
        };
        super::save_manifest(dir, &manifest, &[])
    }
}

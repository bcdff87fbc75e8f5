//! Judges score generated samples and learn from fine-tuning batches.
//!
//! Two local judges stand in for real vision-language models: a generative
//! term classifier graded with a rubric, and a bi-encoder trained with a
//! symmetric contrastive loss. A third adapter forwards samples to an
//! external process over newline-delimited JSON.

mod contrastive;
mod contrastive_loss;
mod external;
mod features;
mod generative;
mod rubric;

pub use contrastive::ContrastiveJudge;
pub use contrastive_loss::{contrastive_loss, contrastive_loss_with_grad, cosine, ContrastiveLoss};
pub use external::{ExternalJudge, ExternalRequest, ExternalResponse, Op};
pub use features::{
    generative_features, image_features, text_features, Vocabulary, GENERATIVE_FEATURES, IMAGE_FEATURES, TEXT_FEATURES,
};
pub use generative::GenerativeJudge;
pub use rubric::{rubric_score, RubricScore};

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::datasets::SampleRecord;
use crate::numerics::{read_network, write_network, Mlp};
use crate::prompt::SpatialPrimitive;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgeMode {
    Generative,
    Contrastive,
}

impl fmt::Display for JudgeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JudgeMode::Generative => "generative",
            JudgeMode::Contrastive => "contrastive",
        })
    }
}

/// Which judge back-end a run uses: `generative`, `contrastive` or `external:<addr>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum JudgeKind {
    Generative,
    Contrastive,
    /// `host:port` for TCP, or `exec:<program> [args…]` to spawn a child.
    External(String),
}

impl FromStr for JudgeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generative" => Ok(JudgeKind::Generative),
            "contrastive" => Ok(JudgeKind::Contrastive),
            _ => match s.strip_prefix("external:") {
                Some(addr) if !addr.is_empty() => Ok(JudgeKind::External(addr.to_string())),
                _ => Err(Error::Config(format!(
                    "judge must be generative, contrastive or external:<addr>, got {s:?}"
                ))),
            },
        }
    }
}

impl TryFrom<String> for JudgeKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<JudgeKind> for String {
    fn from(k: JudgeKind) -> String {
        k.to_string()
    }
}

impl fmt::Display for JudgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JudgeKind::Generative => f.write_str("generative"),
            JudgeKind::Contrastive => f.write_str("contrastive"),
            JudgeKind::External(addr) => write!(f, "external:{addr}"),
        }
    }
}

/// Text pool used by the contrastive judge: positives plus one or both negatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativePool {
    /// Positives and term-swapped negatives.
    TwoN,
    /// Positives and both kinds of negative.
    ThreeN,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JudgeConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub minibatch: usize,
    /// Sigmoid threshold above which the generative judge names a term.
    pub threshold: f64,
    pub temperature: f64,
    pub embedding_dim: usize,
    pub negatives: NegativePool,
    /// Protocol mode announced to an external judge.
    pub external_mode: JudgeMode,
    pub external_timeout_ms: u64,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        JudgeConfig {
            hidden: vec![64, 64],
            learning_rate: 1e-3,
            minibatch: 64,
            threshold: 0.5,
            temperature: 0.07,
            embedding_dim: 32,
            negatives: NegativePool::ThreeN,
            external_mode: JudgeMode::Generative,
            external_timeout_ms: 30_000,
        }
    }
}

impl JudgeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.hidden.contains(&0) {
            return bad("judge hidden sizes must be positive");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("judge learning_rate must be positive");
        }
        if self.minibatch == 0 {
            return bad("judge minibatch must be positive");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("judge threshold must lie in (0, 1)");
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return bad("judge temperature must be positive");
        }
        if self.embedding_dim == 0 {
            return bad("judge embedding_dim must be positive");
        }
        if self.external_timeout_ms == 0 {
            return bad("judge external_timeout_ms must be positive");
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.external_timeout_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VerdictOutcome {
    Generative {
        predicted: Vec<SpatialPrimitive>,
        score: RubricScore,
    },
    /// Cosine similarity of the scene to each caption.
    Contrastive {
        positive: f64,
        neg_term: f64,
        neg_object: f64,
        correct: bool,
    },
    /// External contrastive judges report only a batch loss.
    BatchLoss,
    /// Malformed sample; left out of every aggregate.
    Flagged { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub id: u64,
    #[serde(flatten)]
    pub outcome: VerdictOutcome,
}

impl JudgeVerdict {
    pub fn flagged(id: u64, err: &Error) -> Self {
        JudgeVerdict {
            id,
            outcome: VerdictOutcome::Flagged {
                reason: err.to_string(),
            },
        }
    }

    pub fn score(&self) -> Option<RubricScore> {
        match self.outcome {
            VerdictOutcome::Generative { score, .. } => Some(score),
            _ => None,
        }
    }

    pub fn correct(&self) -> Option<bool> {
        match self.outcome {
            VerdictOutcome::Contrastive { correct, .. } => Some(correct),
            _ => None,
        }
    }

    pub fn is_flagged(&self) -> bool {
        matches!(self.outcome, VerdictOutcome::Flagged { .. })
    }
}

/// Everything one inference pass produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceOutcome {
    pub verdicts: Vec<JudgeVerdict>,
    /// Contrastive loss over the unflagged samples.
    pub batch_loss: Option<f64>,
}

impl InferenceOutcome {
    pub fn mean_score(&self) -> Option<f64> {
        mean(
            self.verdicts
                .iter()
                .filter_map(|v| v.score())
                .map(|s| f64::from(s.value())),
        )
    }

    /// Fraction of samples whose positive caption beats both negatives.
    pub fn accuracy(&self) -> Option<f64> {
        mean(
            self.verdicts
                .iter()
                .filter_map(|v| v.correct())
                .map(|c| if c { 1.0 } else { 0.0 }),
        )
    }

    pub fn flagged(&self) -> usize {
        self.verdicts.iter().filter(|v| v.is_flagged()).count()
    }

    /// Mean rubric score for generative judges, retrieval accuracy for
    /// contrastive ones, and negative batch loss when only a loss is known.
    pub fn metric(&self, mode: JudgeMode) -> Result<f64> {
        let value = match mode {
            JudgeMode::Generative => self.mean_score(),
            JudgeMode::Contrastive => self.accuracy().or(self.batch_loss.map(|l| -l)),
        };
        value.ok_or_else(|| Error::Judge("no scorable verdicts".into()))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Episode-level extrinsic signal: `(6 - mean rubric score)^2` for
/// generative judges and the squared batch loss for contrastive ones.
pub fn batch_reward(outcome: &InferenceOutcome, mode: JudgeMode) -> Result<f64> {
    if outcome.verdicts.is_empty() {
        return Err(Error::InvalidArgument("no verdicts to reward".into()));
    }
    match mode {
        JudgeMode::Generative => {
            let m = outcome
                .mean_score()
                .ok_or_else(|| Error::Judge("no rubric scores among verdicts".into()))?;
            Ok((6.0 - m).powi(2))
        }
        JudgeMode::Contrastive => {
            let l = outcome
                .batch_loss
                .ok_or_else(|| Error::Judge("contrastive verdicts carry no batch loss".into()))?;
            if !l.is_finite() || l < 0.0 {
                return Err(Error::NonFinite("contrastive batch loss"));
            }
            Ok(l * l)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineTuneSchedule {
    /// Optimizer steps (generative) or epochs (contrastive).
    pub k: usize,
    /// Validation is logged after every step or epoch whose 1-based index is a multiple of this.
    pub cadence: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FineTuneReport {
    /// Training loss per step or epoch.
    pub losses: Vec<f64>,
    /// (1-based step or epoch, validation metric).
    pub validation: Vec<(usize, f64)>,
}

pub trait Judge: Send {
    fn mode(&self) -> JudgeMode;

    fn kind(&self) -> JudgeKind;

    /// Scores samples without touching the judge's weights.
    fn infer(&mut self, samples: &[SampleRecord]) -> Result<InferenceOutcome>;

    /// Continues training from the current weights.
    fn finetune(
        &mut self,
        batch: &[SampleRecord],
        schedule: FineTuneSchedule,
        validation: &[SampleRecord],
    ) -> Result<FineTuneReport>;

    fn validation_metric(&mut self, samples: &[SampleRecord]) -> Result<f64> {
        let mode = self.mode();
        self.infer(samples)?.metric(mode)
    }

    /// Digest of the current weights.
    fn digest(&self) -> String;

    fn save(&self, dir: &Path) -> Result<()>;
}

/// Builds a fresh judge; `seed` fixes its initial weights and training order.
pub fn build_judge(kind: &JudgeKind, vocab: &Vocabulary, config: &JudgeConfig, seed: u64) -> Result<Box<dyn Judge>> {
    config.validate()?;
    Ok(match kind {
        JudgeKind::Generative => Box::new(GenerativeJudge::new(vocab.clone(), config, seed)?),
        JudgeKind::Contrastive => Box::new(ContrastiveJudge::new(vocab.clone(), config, seed)?),
        JudgeKind::External(addr) => Box::new(ExternalJudge::connect(addr, config.external_mode, config.timeout())?),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct JudgeManifest {
    pub kind: JudgeKind,
    pub vocabulary: Option<Vocabulary>,
    pub networks: Vec<String>,
    pub config: JudgeConfig,
    pub seed: u64,
}

const MANIFEST: &str = "manifest.json";

pub(crate) fn save_manifest(dir: &Path, manifest: &JudgeManifest, nets: &[&Mlp<f64>]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, net) in manifest.networks.iter().zip(nets) {
        let path = dir.join(name);
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_network(net, std::io::BufWriter::new(file))?;
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, serde_json::to_vec_pretty(manifest)?).map_err(|e| Error::io(&path, e))
}

pub(crate) fn load_networks(dir: &Path, manifest: &JudgeManifest) -> Result<Vec<Mlp<f64>>> {
    manifest
        .networks
        .iter()
        .map(|name| {
            let path = dir.join(name);
            let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
            read_network(std::io::BufReader::new(file))
        })
        .collect()
}

/// Restores a judge written by [`Judge::save`].
pub fn load_judge(dir: &Path) -> Result<Box<dyn Judge>> {
    let path = dir.join(MANIFEST);
    let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: JudgeManifest = serde_json::from_slice(&text)?;
    match &manifest.kind {
        JudgeKind::Generative => Ok(Box::new(GenerativeJudge::restore(dir, manifest)?)),
        JudgeKind::Contrastive => Ok(Box::new(ContrastiveJudge::restore(dir, manifest)?)),
        JudgeKind::External(addr) => Ok(Box::new(ExternalJudge::connect(
            addr,
            manifest.config.external_mode,
            manifest.config.timeout(),
        )?)),
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

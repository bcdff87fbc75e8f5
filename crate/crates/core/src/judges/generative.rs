use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::index::sample as sample_indices;
use rand::Rng;

use super::{
    generative_features, rubric_score, sigmoid, FineTuneReport, FineTuneSchedule, InferenceOutcome, Judge, JudgeConfig,
    JudgeKind, JudgeManifest, JudgeMode, JudgeVerdict, VerdictOutcome, Vocabulary, GENERATIVE_FEATURES,
};
use crate::datasets::SampleRecord;
use crate::numerics::gradcheck::{check_gradients_strided, GradCheck, ParamStride, DEFAULT_STEP};
use crate::numerics::{optimize_step, Activation, Gradients, Mlp, OptimizerState, StepOutcome};
use crate::prompt::{PrimitiveSet, SpatialPrimitive};
use crate::seeding::{rng_for, stream, SeededRng};
use crate::{Error, Result};

const CLASSIFIER_FILE: &str = "classifier.rls3";

/// Multi-label term classifier: scene-pair features to one logit per primitive.
pub struct GenerativeJudge {
    vocab: Vocabulary,
    config: JudgeConfig,
    seed: u64,
    net: Mlp<f64>,
    opt: OptimizerState<f64>,
    rng: SeededRng,
}

fn labels(set: PrimitiveSet) -> [f64; 6] {
    let mut y = [0.0; 6];
    for p in set.iter() {
        y[p.index()] = 1.0;
    }
    y
}

/// Mean binary cross-entropy over a minibatch and all six outputs, with the
/// gradient with respect to the parameters.
pub(crate) fn bce_loss_and_grad(
    net: &Mlp<f64>,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
) -> Result<(f64, Gradients<f64>)> {
    let (logits, tape) = net.forward_tape(x)?;
    let count = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(logits.raw_dim());
    for ((z, t), g) in logits.iter().zip(y.iter()).zip(grad.iter_mut()) {
        // softplus(z) - t z, computed without overflow.
        loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - t * z;
        *g = (sigmoid(*z) - t) / count;
    }
    let back = net.backward(&tape, grad.view())?;
    Ok((loss / count, back.params))
}

pub(crate) fn bce_loss(net: &Mlp<f64>, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<f64> {
    let logits = net.forward_batch(x)?;
    let total: f64 = logits
        .iter()
        .zip(y.iter())
        .map(|(z, t)| z.max(0.0) + (-z.abs()).exp().ln_1p() - t * z)
        .sum();
    Ok(total / logits.len() as f64)
}

impl GenerativeJudge {
    pub fn new(vocab: Vocabulary, config: &JudgeConfig, seed: u64) -> Result<Self> {
        let mut sizes = vec![GENERATIVE_FEATURES];
        sizes.extend(&config.hidden);
        sizes.push(6);
        let net = Mlp::seeded(
            &sizes,
            Activation::Tanh,
            Activation::Identity,
            &mut rng_for(seed, &[stream::JUDGE_INIT]),
        )?;
        Ok(Self::assemble(vocab, config.clone(), seed, net))
    }

    fn assemble(vocab: Vocabulary, config: JudgeConfig, seed: u64, net: Mlp<f64>) -> Self {
        GenerativeJudge {
            opt: OptimizerState::adam(&net, config.learning_rate),
            rng: rng_for(seed, &[stream::JUDGE_TRAIN]),
            vocab,
            config,
            seed,
            net,
        }
    }

    pub(crate) fn restore(dir: &Path, manifest: JudgeManifest) -> Result<Self> {
        let vocab = manifest
            .vocabulary
            .clone()
            .ok_or_else(|| Error::Checkpoint("generative judge manifest lacks a vocabulary".into()))?;
        let mut nets = super::load_networks(dir, &manifest)?;
        if nets.len() != 1 || nets[0].input_dim() != GENERATIVE_FEATURES || nets[0].output_dim() != 6 {
            return Err(Error::Checkpoint(format!(
                "generative judge expects one {GENERATIVE_FEATURES}-to-6 network"
            )));
        }
        Ok(Self::assemble(vocab, manifest.config, manifest.seed, nets.remove(0)))
    }

    pub fn network(&self) -> &Mlp<f64> {
        &self.net
    }

    /// Terms whose sigmoid output exceeds the threshold.
    pub fn predict(&self, record: &SampleRecord) -> Result<PrimitiveSet> {
        let x = generative_features(&self.vocab, record)?;
        let logits = self.net.forward(&x)?;
        Ok(self.decide(&logits))
    }

    fn decide(&self, logits: &[f64]) -> PrimitiveSet {
        SpatialPrimitive::ALL
            .into_iter()
            .filter(|p| sigmoid(logits[p.index()]) > self.config.threshold)
            .collect()
    }

    fn training_data(&self, batch: &[SampleRecord]) -> (Array2<f64>, Array2<f64>) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for r in batch {
            if let (Ok(x), Ok(t)) = (generative_features(&self.vocab, r), r.truth()) {
                xs.extend_from_slice(&x);
                ys.extend_from_slice(&labels(t));
            }
        }
        let n = xs.len() / GENERATIVE_FEATURES;
        (
            Array2::from_shape_vec((n, GENERATIVE_FEATURES), xs).expect("row-major features"),
            Array2::from_shape_vec((n, 6), ys).expect("row-major labels"),
        )
    }

    /// Training loss on a batch under the current weights.
    pub fn loss_on(&self, batch: &[SampleRecord]) -> Result<f64> {
        let (x, y) = self.training_data(batch);
        if x.nrows() == 0 {
            return Err(Error::InvalidArgument("no usable samples".into()));
        }
        bce_loss(&self.net, x.view(), y.view())
    }
}

impl Judge for GenerativeJudge {
    fn mode(&self) -> JudgeMode {
        JudgeMode::Generative
    }

    fn kind(&self) -> JudgeKind {
        JudgeKind::Generative
    }

    fn infer(&mut self, samples: &[SampleRecord]) -> Result<InferenceOutcome> {
        let mut rows = Vec::new();
        let prepared: Vec<Result<PrimitiveSet>> = samples
            .iter()
            .map(|r| {
                let x = generative_features(&self.vocab, r)?;
                let truth = r.truth()?;
                rows.extend_from_slice(&x);
                Ok(truth)
            })
            .collect();
        let x = Array2::from_shape_vec((rows.len() / GENERATIVE_FEATURES, GENERATIVE_FEATURES), rows)
            .expect("row-major features");
        let logits = if x.nrows() > 0 {
            self.net.forward_batch(x.view())?
        } else {
            Array2::zeros((0, 6))
        };
        let mut row = 0;
        let mut verdicts = Vec::with_capacity(samples.len());
        for (r, truth) in samples.iter().zip(prepared) {
            let truth = match truth {
                Ok(t) => t,
                Err(e) => {
                    verdicts.push(JudgeVerdict::flagged(r.id, &e));
                    continue;
                }
            };
            let predicted = self.decide(logits.index_axis(Axis(0), row).as_slice().expect("contiguous row"));
            row += 1;
            verdicts.push(JudgeVerdict {
                id: r.id,
                outcome: VerdictOutcome::Generative {
                    predicted: predicted.iter().collect(),
                    score: rubric_score(predicted, truth)?,
                },
            });
        }
        Ok(InferenceOutcome {
            verdicts,
            batch_loss: None,
        })
    }

    fn finetune(
        &mut self,
        batch: &[SampleRecord],
        schedule: FineTuneSchedule,
        validation: &[SampleRecord],
    ) -> Result<FineTuneReport> {
        if schedule.cadence == 0 {
            return Err(Error::InvalidArgument("validation cadence must be positive".into()));
        }
        let (x, y) = self.training_data(batch);
        let n = x.nrows();
        if n == 0 {
            return Err(Error::InvalidArgument("fine-tuning batch has no usable samples".into()));
        }
        let size = self.config.minibatch.min(n);
        let mut report = FineTuneReport::default();
        for step in 1..=schedule.k {
            let idx = sample_indices(&mut self.rng, n, size).into_vec();
            let xb = x.select(Axis(0), &idx);
            let yb = y.select(Axis(0), &idx);
            let (loss, grads) = bce_loss_and_grad(&self.net, xb.view(), yb.view())?;
            if !loss.is_finite() {
                return Err(Error::NonFinite("generative judge training loss"));
            }
            if optimize_step(&mut self.net, &grads, &mut self.opt)? == StepOutcome::SkippedNonFinite {
                return Err(Error::NonFinite("generative judge gradient"));
            }
            report.losses.push(loss);
            if step % schedule.cadence == 0 && !validation.is_empty() {
                let metric = self.validation_metric(validation)?;
                report.validation.push((step, metric));
            }
        }
        Ok(report)
    }

    fn digest(&self) -> String {
        self.net.digest()
    }

    fn save(&self, dir: &Path) -> Result<()> {
        let manifest = JudgeManifest {
            kind: JudgeKind::Generative,
            vocabulary: Some(self.vocab.clone()),
            networks: vec![CLASSIFIER_FILE.into()],
            config: self.config.clone(),
            seed: self.seed,
        };
        super::save_manifest(dir, &manifest, &[&self.net])
    }
}

impl GenerativeJudge {
    /// Central finite-difference check of the training loss on one seeded
    /// batch of four random inputs.
    pub fn gradient_check(&self, probe: u64, stride: ParamStride) -> Result<Vec<(&'static str, GradCheck)>> {
        let mut rng = rng_for(probe, &[stream::GRADIENT_PROBE]);
        let x = Array2::from_shape_simple_fn((4, GENERATIVE_FEATURES), || rng.random_range(-1.0..1.0));
        let y = Array2::from_shape_simple_fn((4, 6), || f64::from(u8::from(rng.random_bool(0.5))));
        let (_, grads) = bce_loss_and_grad(&self.net, x.view(), y.view())?;
        let loss = check_gradients_strided(
            &self.net,
            &grads,
            |n| bce_loss(n, x.view(), y.view()).unwrap_or(f64::NAN),
            DEFAULT_STEP,
            stride,
        );
        Ok(vec![("classifier_loss", loss)])
    }
}

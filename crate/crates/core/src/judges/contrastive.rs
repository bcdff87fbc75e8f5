use std::path::Path;

use ndarray::{s, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;

use super::{
    contrastive_loss, contrastive_loss_with_grad, cosine, image_features, text_features, FineTuneReport,
    FineTuneSchedule, InferenceOutcome, Judge, JudgeConfig, JudgeKind, JudgeManifest, JudgeMode, JudgeVerdict,
    NegativePool, VerdictOutcome, Vocabulary, IMAGE_FEATURES, TEXT_FEATURES,
};
use crate::datasets::SampleRecord;
use crate::numerics::gradcheck::{check_gradients_strided, GradCheck, ParamStride, DEFAULT_STEP};
use crate::numerics::{optimize_step, Activation, Gradients, Mlp, OptimizerState, StepOutcome};
use crate::seeding::{rng_for, stream, SeededRng};
use crate::{Error, Result};

const IMAGE_FILE: &str = "image_encoder.rls3";
const TEXT_FILE: &str = "text_encoder.rls3";

/// Bi-encoder: scene features and caption token bags mapped into a shared
/// embedding space and compared by cosine similarity.
pub struct ContrastiveJudge {
    vocab: Vocabulary,
    config: JudgeConfig,
    seed: u64,
    image: Mlp<f64>,
    text: Mlp<f64>,
    image_opt: OptimizerState<f64>,
    text_opt: OptimizerState<f64>,
    rng: SeededRng,
}

/// Encoded features of one sample: scene, positive, term-swapped and object-swapped captions.
struct Prepared {
    image: [f64; IMAGE_FEATURES],
    texts: [[f64; TEXT_FEATURES]; 3],
}

/// Image rows `0..n`, text rows ordered positives, term negatives, object negatives.
struct Stacked {
    images: Array2<f64>,
    texts: Array2<f64>,
}

impl ContrastiveJudge {
    pub fn new(vocab: Vocabulary, config: &JudgeConfig, seed: u64) -> Result<Self> {
        let mut init = rng_for(seed, &[stream::JUDGE_INIT]);
        let sizes = |input: usize| {
            let mut v = vec![input];
            v.extend(&config.hidden);
            v.push(config.embedding_dim);
            v
        };
        let image = Mlp::seeded(
            &sizes(IMAGE_FEATURES),
            Activation::Tanh,
            Activation::Identity,
            &mut init,
        )?;
        let text = Mlp::seeded(&sizes(TEXT_FEATURES), Activation::Tanh, Activation::Identity, &mut init)?;
        Ok(Self::assemble(vocab, config.clone(), seed, image, text))
    }

    fn assemble(vocab: Vocabulary, config: JudgeConfig, seed: u64, image: Mlp<f64>, text: Mlp<f64>) -> Self {
        ContrastiveJudge {
            image_opt: OptimizerState::adam(&image, config.learning_rate),
            text_opt: OptimizerState::adam(&text, config.learning_rate),
            rng: rng_for(seed, &[stream::JUDGE_TRAIN]),
            vocab,
            config,
            seed,
            image,
            text,
        }
    }

    pub(crate) fn restore(dir: &Path, manifest: JudgeManifest) -> Result<Self> {
        let vocab = manifest
            .vocabulary
            .clone()
            .ok_or_else(|| Error::Checkpoint("contrastive judge manifest lacks a vocabulary".into()))?;
        let nets = super::load_networks(dir, &manifest)?;
        let [image, text]: [Mlp<f64>; 2] = nets
            .try_into()
            .map_err(|_| Error::Checkpoint("contrastive judge expects two networks".into()))?;
        if image.input_dim() != IMAGE_FEATURES
            || text.input_dim() != TEXT_FEATURES
            || image.output_dim() != text.output_dim()
        {
            return Err(Error::Checkpoint("contrastive encoder shapes disagree".into()));
        }
        Ok(Self::assemble(vocab, manifest.config, manifest.seed, image, text))
    }

    pub fn image_encoder(&self) -> &Mlp<f64> {
        &self.image
    }

    pub fn text_encoder(&self) -> &Mlp<f64> {
        &self.text
    }

    pub fn temperature(&self) -> f64 {
        self.config.temperature
    }

    fn prepare(&self, r: &SampleRecord) -> Result<Prepared> {
        Ok(Prepared {
            image: image_features(&self.vocab, r)?,
            texts: [
                text_features(&self.vocab, &r.caption)?,
                text_features(&self.vocab, &r.neg_term)?,
                text_features(&self.vocab, &r.neg_object)?,
            ],
        })
    }

    fn stack(&self, items: &[&Prepared]) -> Stacked {
        let n = items.len();
        let images = Array2::from_shape_fn((n, IMAGE_FEATURES), |(i, j)| items[i].image[j]);
        let texts = Array2::from_shape_fn((3 * n, TEXT_FEATURES), |(k, j)| items[k % n].texts[k / n][j]);
        Stacked { images, texts }
    }

    /// Text rows that enter the loss: positives first, then the configured negatives.
    fn pool(&self, texts: ArrayView2<f64>, n: usize) -> Array2<f64> {
        match self.config.negatives {
            NegativePool::TwoN => texts.slice(s![..2 * n, ..]).to_owned(),
            NegativePool::ThreeN => texts.to_owned(),
        }
    }

    /// Loss of the encoders on stacked features, with parameter gradients.
    pub(crate) fn loss_and_grads(
        image: &Mlp<f64>,
        text: &Mlp<f64>,
        images: ArrayView2<f64>,
        texts: ArrayView2<f64>,
        temperature: f64,
    ) -> Result<(f64, Gradients<f64>, Gradients<f64>)> {
        let (zi, tape_i) = image.forward_tape(images)?;
        let (zt, tape_t) = text.forward_tape(texts)?;
        let (loss, gi, gt) = contrastive_loss_with_grad(zi.view(), zt.view(), temperature)?;
        let back_i = image.backward(&tape_i, gi.view())?;
        let back_t = text.backward(&tape_t, gt.view())?;
        Ok((loss.total, back_i.params, back_t.params))
    }

    pub(crate) fn loss_only(
        image: &Mlp<f64>,
        text: &Mlp<f64>,
        images: ArrayView2<f64>,
        texts: ArrayView2<f64>,
        temperature: f64,
    ) -> Result<f64> {
        let zi = image.forward_batch(images)?;
        let zt = text.forward_batch(texts)?;
        Ok(contrastive_loss(zi.view(), zt.view(), temperature)?.total)
    }

    /// Contrastive loss on a batch under the current weights.
    pub fn loss_on(&self, batch: &[SampleRecord]) -> Result<f64> {
        let prepared: Vec<Prepared> = batch.iter().filter_map(|r| self.prepare(r).ok()).collect();
        if prepared.is_empty() {
            return Err(Error::InvalidArgument("no usable samples".into()));
        }
        let refs: Vec<&Prepared> = prepared.iter().collect();
        let st = self.stack(&refs);
        let pool = self.pool(st.texts.view(), refs.len());
        Self::loss_only(
            &self.image,
            &self.text,
            st.images.view(),
            pool.view(),
            self.config.temperature,
        )
    }
}

impl Judge for ContrastiveJudge {
    fn mode(&self) -> JudgeMode {
        JudgeMode::Contrastive
    }

    fn kind(&self) -> JudgeKind {
        JudgeKind::Contrastive
    }

    fn infer(&mut self, samples: &[SampleRecord]) -> Result<InferenceOutcome> {
        let prepared: Vec<Result<Prepared>> = samples.iter().map(|r| self.prepare(r)).collect();
        let usable: Vec<&Prepared> = prepared.iter().filter_map(|p| p.as_ref().ok()).collect();
        let n = usable.len();
        let mut batch_loss = None;
        let mut embedded = None;
        if n > 0 {
            let st = self.stack(&usable);
            let zi = self.image.forward_batch(st.images.view())?;
            let zt = self.text.forward_batch(st.texts.view())?;
            let pool = self.pool(zt.view(), n);
            batch_loss = Some(contrastive_loss(zi.view(), pool.view(), self.config.temperature)?.total);
            embedded = Some((zi, zt));
        }
        let mut verdicts = Vec::with_capacity(samples.len());
        let mut row = 0;
        for (r, p) in samples.iter().zip(&prepared) {
            if let Err(e) = p {
                verdicts.push(JudgeVerdict::flagged(r.id, e));
                continue;
            }
            let (zi, zt) = embedded.as_ref().expect("embeddings exist when a sample is usable");
            let z = zi.row(row).to_vec();
            let sim = |k: usize| cosine(&z, &zt.row(k * n + row).to_vec());
            let (positive, neg_term, neg_object) = (sim(0), sim(1), sim(2));
            row += 1;
            verdicts.push(JudgeVerdict {
                id: r.id,
                outcome: VerdictOutcome::Contrastive {
                    positive,
                    neg_term,
                    neg_object,
                    correct: positive > neg_term && positive > neg_object,
                },
            });
        }
        Ok(InferenceOutcome { verdicts, batch_loss })
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
        let prepared: Vec<Prepared> = batch.iter().filter_map(|r| self.prepare(r).ok()).collect();
        if prepared.is_empty() {
            return Err(Error::InvalidArgument("fine-tuning batch has no usable samples".into()));
        }
        let mut order: Vec<usize> = (0..prepared.len()).collect();
        let mut report = FineTuneReport::default();
        for epoch in 1..=schedule.k {
            order.shuffle(&mut self.rng);
            let mut total = 0.0;
            let mut chunks = 0;
            for chunk in order.chunks(self.config.minibatch) {
                let items: Vec<&Prepared> = chunk.iter().map(|&i| &prepared[i]).collect();
                let st = self.stack(&items);
                let pool = self.pool(st.texts.view(), items.len());
                let (loss, gi, gt) = Self::loss_and_grads(
                    &self.image,
                    &self.text,
                    st.images.view(),
                    pool.view(),
                    self.config.temperature,
                )?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite("contrastive judge training loss"));
                }
                let a = optimize_step(&mut self.image, &gi, &mut self.image_opt)?;
                let b = optimize_step(&mut self.text, &gt, &mut self.text_opt)?;
                if a == StepOutcome::SkippedNonFinite || b == StepOutcome::SkippedNonFinite {
                    return Err(Error::NonFinite("contrastive judge gradient"));
                }
                total += loss;
                chunks += 1;
            }
            report.losses.push(total / chunks as f64);
            if epoch % schedule.cadence == 0 && !validation.is_empty() {
                let metric = self.validation_metric(validation)?;
                report.validation.push((epoch, metric));
            }
        }
        Ok(report)
    }

    fn digest(&self) -> String {
        let joined = format!("{}{}", self.image.digest(), self.text.digest());
        crate::sha256_hex(joined.as_bytes())
    }

    fn save(&self, dir: &Path) -> Result<()> {
        let manifest = JudgeManifest {
            kind: JudgeKind::Contrastive,
            vocabulary: Some(self.vocab.clone()),
            networks: vec![IMAGE_FILE.into(), TEXT_FILE.into()],
            config: self.config.clone(),
            seed: self.seed,
        };
        super::save_manifest(dir, &manifest, &[&self.image, &self.text])
    }
}

impl ContrastiveJudge {
    /// Central finite-difference check of the contrastive loss through both
    /// encoders on one seeded batch: three scenes against nine captions.
    pub fn gradient_check(&self, probe: u64, stride: ParamStride) -> Result<Vec<(&'static str, GradCheck)>> {
        let mut rng = rng_for(probe, &[stream::GRADIENT_PROBE]);
        let images = Array2::from_shape_simple_fn((3, IMAGE_FEATURES), || rng.random_range(-1.0..1.0));
        let texts = Array2::from_shape_simple_fn((9, TEXT_FEATURES), || rng.random_range(-1.0..1.0));
        let tau = self.temperature();
        let (_, gi, gt) = Self::loss_and_grads(&self.image, &self.text, images.view(), texts.view(), tau)?;
        // Each check perturbs one encoder, so the other's embeddings are fixed.
        let zi = self.image.forward_batch(images.view())?;
        let zt = self.text.forward_batch(texts.view())?;
        let loss =
            |zi: ArrayView2<f64>, zt: ArrayView2<f64>| contrastive_loss(zi, zt, tau).map_or(f64::NAN, |l| l.total);
        let ci = check_gradients_strided(
            &self.image,
            &gi,
            |n| {
                n.forward_batch(images.view())
                    .map_or(f64::NAN, |z| loss(z.view(), zt.view()))
            },
            DEFAULT_STEP,
            stride,
        );
        let ct = check_gradients_strided(
            &self.text,
            &gt,
            |n| {
                n.forward_batch(texts.view())
                    .map_or(f64::NAN, |z| loss(zi.view(), z.view()))
            },
            DEFAULT_STEP,
            stride,
        );
        Ok(vec![("image_encoder", ci), ("text_encoder", ct)])
    }
}

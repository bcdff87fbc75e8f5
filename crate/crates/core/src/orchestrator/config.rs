use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agent::SacConfig;
use crate::judges::{JudgeConfig, JudgeKind, JudgeMode};
use crate::scene::EnvConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Sac,
    Random,
}

impl std::str::FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sac" => Ok(AgentKind::Sac),
            "random" => Ok(AgentKind::Random),
            _ => Err(Error::Config(format!("agent must be sac or random, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStopPolicy {
    pub min_iterations: usize,
    pub patience: usize,
    /// Smallest gain over the best earlier value that counts as improvement.
    pub epsilon: f64,
}

impl EarlyStopPolicy {
    pub const GENERATIVE: EarlyStopPolicy = EarlyStopPolicy {
        min_iterations: 15,
        patience: 10,
        epsilon: 0.02,
    };
    pub const CONTRASTIVE: EarlyStopPolicy = EarlyStopPolicy {
        min_iterations: 10,
        patience: 5,
        epsilon: 0.005,
    };

    pub fn for_mode(mode: JudgeMode) -> Self {
        match mode {
            JudgeMode::Generative => Self::GENERATIVE,
            JudgeMode::Contrastive => Self::CONTRASTIVE,
        }
    }
}

/// Whether to stop after the last entry of `history`, where `history[0]` is
/// the metric before any fine-tuning and `history[i]` the metric after
/// iteration `i`. Stops once at least `min_iterations` iterations ran and none
/// of the last `patience` beat the best earlier value by more than `epsilon`.
pub fn early_stop(history: &[f64], policy: &EarlyStopPolicy) -> bool {
    let Some(iteration) = history.len().checked_sub(1) else {
        return false;
    };
    if iteration < policy.min_iterations || policy.patience == 0 || iteration < policy.patience {
        return false;
    }
    let split = history.len() - policy.patience;
    let best_before = history[..split].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    !history[split..].iter().any(|&v| v > best_before + policy.epsilon)
}

/// Every loop hyperparameter. `None` fields take judge-dependent defaults on
/// [`RunConfig::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Iterations I.
    pub iterations: usize,
    /// Episodes per iteration E.
    pub episodes_per_iteration: usize,
    /// Valid samples per episode T0.
    pub samples_per_episode: usize,
    /// Sampling rate η into the fine-tuning batch.
    pub sampling_rate: f64,
    /// Reward scale β on the extrinsic signal.
    pub reward_scale: f64,
    /// Fine-tuning steps (generative) or epochs (contrastive) K.
    pub finetune_k: Option<usize>,
    /// Validation cadence F, in steps or epochs.
    pub validation_cadence: Option<usize>,
    pub early_stop: Option<EarlyStopPolicy>,
    pub judge: JudgeKind,
    pub agent: AgentKind,
    pub seed: u64,
    /// Cap on environment steps (valid and invalid) for the whole run.
    pub budget: Option<u64>,
    pub pretrain_steps: u64,
    /// Pretrained agent directory; when absent a SAC run pretrains in place.
    pub agent_checkpoint: Option<PathBuf>,
    /// Keep updating the agent during loop episodes.
    pub agent_updates: bool,
    pub validation_size: usize,
    pub test_size: usize,
    pub fixed_set_seed: u64,
    /// Evaluate the test set after the last iteration.
    pub evaluate_test: bool,
    /// Write agent and judge checkpoints every this many iterations; 0 disables.
    pub checkpoint_every: usize,
    pub train_scenes: Option<PathBuf>,
    pub test_scenes: Option<PathBuf>,
    pub env: EnvConfig,
    pub sac: SacConfig,
    pub judge_config: JudgeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::full()
    }
}

impl RunConfig {
    pub fn full() -> Self {
        RunConfig {
            iterations: 50,
            episodes_per_iteration: 20,
            samples_per_episode: 200,
            sampling_rate: 0.5,
            reward_scale: 10.0,
            finetune_k: None,
            validation_cadence: None,
            early_stop: None,
            judge: JudgeKind::Generative,
            agent: AgentKind::Sac,
            seed: 0,
            budget: None,
            pretrain_steps: 100_000,
            agent_checkpoint: None,
            agent_updates: true,
            validation_size: 500,
            test_size: 1000,
            fixed_set_seed: 2024,
            evaluate_test: true,
            checkpoint_every: 1,
            train_scenes: None,
            test_scenes: None,
            env: EnvConfig::default(),
            sac: SacConfig::default(),
            judge_config: JudgeConfig::default(),
        }
    }

    /// Small enough to finish in minutes on one core.
    pub fn desk() -> Self {
        RunConfig {
            iterations: 10,
            episodes_per_iteration: 4,
            samples_per_episode: 20,
            pretrain_steps: 20_000,
            sac: SacConfig {
                hidden: vec![64, 64],
                minibatch: 64,
                alpha: 0.02,
                gamma: 0.9,
                ..SacConfig::default()
            },
            ..RunConfig::full()
        }
    }

    pub fn mode(&self) -> JudgeMode {
        match self.judge {
            JudgeKind::Generative => JudgeMode::Generative,
            JudgeKind::Contrastive => JudgeMode::Contrastive,
            JudgeKind::External(_) => self.judge_config.external_mode,
        }
    }

    /// Fills judge-dependent defaults and validates.
    pub fn resolve(mut self) -> Result<Self> {
        let mode = self.mode();
        let desk = self.samples_per_episode < 200;
        self.finetune_k.get_or_insert(match (mode, desk) {
            (JudgeMode::Generative, false) => 256,
            (JudgeMode::Generative, true) => 64,
            (JudgeMode::Contrastive, false) => 10,
            (JudgeMode::Contrastive, true) => 4,
        });
        self.validation_cadence.get_or_insert(match mode {
            JudgeMode::Generative => 32,
            JudgeMode::Contrastive => 1,
        });
        self.early_stop.get_or_insert(EarlyStopPolicy::for_mode(mode));
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.iterations == 0 || self.episodes_per_iteration == 0 || self.samples_per_episode == 0 {
            return bad("iterations, episodes_per_iteration and samples_per_episode must be positive");
        }
        if !(self.sampling_rate > 0.0 && self.sampling_rate <= 1.0) {
            return bad("sampling_rate must lie in (0, 1]");
        }
        if !self.reward_scale.is_finite() || self.reward_scale < 0.0 {
            return bad("reward_scale must be finite and non-negative");
        }
        if self.finetune_k == Some(0) || self.validation_cadence == Some(0) {
            return bad("finetune_k and validation_cadence must be positive");
        }
        if let Some(p) = &self.early_stop {
            if p.patience == 0 || !(p.epsilon >= 0.0) {
                return bad("early_stop needs patience >= 1 and epsilon >= 0");
            }
        }
        if self.validation_size == 0 {
            return bad("validation_size must be positive");
        }
        if self.batch_per_episode() == 0 {
            return bad("round(sampling_rate * samples_per_episode) must be at least 1");
        }
        self.sac.validate()?;
        self.judge_config.validate()
    }

    /// Samples each episode adds to the fine-tuning batch, `round(η·T0)`.
    pub fn batch_per_episode(&self) -> usize {
        (self.sampling_rate * self.samples_per_episode as f64).round() as usize
    }

    pub fn batch_size(&self) -> usize {
        self.episodes_per_iteration * self.batch_per_episode()
    }

    /// Step cap per episode.
    pub fn max_episode_steps(&self) -> u64 {
        4 * self.samples_per_episode as u64
    }

    pub fn finetune_k(&self) -> usize {
        self.finetune_k.unwrap_or(1)
    }

    pub fn validation_cadence(&self) -> usize {
        self.validation_cadence.unwrap_or(1)
    }

    pub fn early_stop_policy(&self) -> EarlyStopPolicy {
        self.early_stop
            .unwrap_or_else(|| EarlyStopPolicy::for_mode(self.mode()))
    }

    /// Sets a dotted key such as `sac.alpha` to a JSON value, or to a string
    /// when the text is not valid JSON. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let mut root = serde_json::to_value(&*self)?;
        let mut slot = &mut root;
        for part in key.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|m| m.get_mut(part))
                .ok_or_else(|| Error::Config(format!("unknown config key {key:?}")))?;
        }
        *slot = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        *self = serde_json::from_value(root).map_err(|e| Error::Config(format!("{key}={raw}: {e}")))?;
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Reads a JSON config. Missing fields fall back to the full preset, or
    /// to the desk preset when the file sets `"preset": "desk"`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut v: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let preset = match v.as_object_mut().and_then(|m| m.remove("preset")) {
            None => RunConfig::full(),
            Some(Value::String(p)) if p == "full" => RunConfig::full(),
            Some(Value::String(p)) if p == "desk" => RunConfig::desk(),
            Some(p) => return Err(Error::Config(format!("unknown preset {p}"))),
        };
        let mut base = serde_json::to_value(preset)?;
        merge(&mut base, v);
        serde_json::from_value(base).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> Result<String> {
        Ok(crate::sha256_hex(serde_json::to_string(self)?.as_bytes()))
    }
}

/// Deep-merges `patch` into `base`; objects merge key by key, anything else
/// replaces.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn shipped_configs_match_presets() {
        let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        assert_eq!(RunConfig::load(&root.join("desk.json")).unwrap(), RunConfig::desk());
        assert_eq!(RunConfig::load(&root.join("full.json")).unwrap(), RunConfig::full());
    }

    #[test]
    fn presets_resolve_judge_defaults() {
        let p = RunConfig::full().resolve().unwrap();
        assert_eq!((p.finetune_k(), p.validation_cadence()), (256, 32));
        assert_eq!(p.batch_size(), 2000);
        assert_eq!(p.batch_per_episode(), 100);
        assert_eq!(p.early_stop_policy(), EarlyStopPolicy::GENERATIVE);
        let mut c = RunConfig::full();
        c.judge = JudgeKind::Contrastive;
        let c = c.resolve().unwrap();
        assert_eq!((c.finetune_k(), c.validation_cadence()), (10, 1));
        assert_eq!(c.early_stop_policy(), EarlyStopPolicy::CONTRASTIVE);
        let d = RunConfig::desk().resolve().unwrap();
        assert_eq!(
            (d.iterations, d.episodes_per_iteration, d.samples_per_episode),
            (10, 4, 20)
        );
        assert_eq!((d.finetune_k(), d.batch_size(), d.pretrain_steps), (64, 40, 20_000));
    }

    #[test]
    fn overrides_follow_dotted_keys() {
        let mut c = RunConfig::desk();
        c.apply_overrides(&["iterations=5", "sac.alpha=0.1", "judge=contrastive", "budget=900"])
            .unwrap();
        assert_eq!(c.iterations, 5);
        assert_eq!(c.sac.alpha, 0.1);
        assert_eq!(c.judge, JudgeKind::Contrastive);
        assert_eq!(c.budget, Some(900));
        assert!(c.set("sac.alpah", "1").is_err());
        assert!(c.set("nope", "1").is_err());
        assert!(c.set("iterations", "\"x\"").is_err());
        assert!(c.apply_overrides(&["iterations"]).is_err());
    }

    #[test]
    fn json_merges_over_presets() {
        let c = RunConfig::from_json(r#"{"preset":"desk","iterations":3,"sac":{"gamma":0.9}}"#).unwrap();
        assert_eq!(c.iterations, 3);
        assert_eq!(c.sac.gamma, 0.9);
        assert_eq!(c.sac.hidden, vec![64, 64]);
        assert_eq!(c.samples_per_episode, 20);
        assert!(RunConfig::from_json(r#"{"iterationz":3}"#).is_err());
        assert!(RunConfig::from_json(r#"{"preset":"huge"}"#).is_err());
    }

    #[test]
    fn digest_is_pure() {
        let a = RunConfig::desk().resolve().unwrap();
        let mut b = RunConfig::desk();
        b.apply_overrides(&["seed=0"]).unwrap();
        assert_eq!(a.digest().unwrap(), b.resolve().unwrap().digest().unwrap());
        let mut c = RunConfig::desk();
        c.seed = 1;
        assert_ne!(a.digest().unwrap(), c.resolve().unwrap().digest().unwrap());
    }

    #[test]
    fn validation_rejects_bad_values() {
        for (k, v) in [
            ("sampling_rate", "0"),
            ("sampling_rate", "1.5"),
            ("iterations", "0"),
            ("samples_per_episode", "1"),
        ] {
            let mut c = RunConfig::desk();
            c.set(k, v).unwrap();
            if k == "samples_per_episode" {
                c.sampling_rate = 0.1;
            }
            assert!(c.resolve().is_err(), "{k}={v}");
        }
    }

    fn history(values: &[f64]) -> Vec<f64> {
        values.to_vec()
    }

    #[test]
    fn hand_computed_stop_decisions() {
        let g = EarlyStopPolicy::GENERATIVE;
        // Flat after an early peak: iteration 15 is the first allowed stop, and
        // the last ten (6..=15) never beat the best of 0..=5.
        let mut h = history(&[2.0, 2.5, 2.8, 3.0, 3.1, 3.2]);
        h.extend([3.2; 10]);
        assert_eq!(h.len(), 16);
        assert!(early_stop(&h, &g));
        assert!(!early_stop(&h[..15], &g));
        // A gain of exactly epsilon is not enough; slightly more is.
        let mut h2 = h.clone();
        h2[12] = 3.2 + 0.02;
        assert!(early_stop(&h2, &g));
        h2[12] = 3.2 + 0.021;
        assert!(!early_stop(&h2, &g));

        let c = EarlyStopPolicy::CONTRASTIVE;
        let mut h = history(&[0.30, 0.50, 0.60, 0.62, 0.63, 0.64]);
        h.extend([0.641, 0.642, 0.643, 0.644, 0.645]);
        assert_eq!(h.len() - 1, 10);
        assert!(early_stop(&h, &c));
        h[8] = 0.646;
        assert!(!early_stop(&h, &c));
        assert!(!early_stop(&h[..10], &c));
        assert!(!early_stop(&[], &c));
    }

    proptest! {
        #[test]
        fn strictly_improving_never_stops(start in 0.0..3.0f64, steps in proptest::collection::vec(0.021..0.5f64, 1..40)) {
            let mut h = vec![start];
            for s in steps {
                let last = *h.last().unwrap();
                h.push(last + s);
                prop_assert!(!early_stop(&h, &EarlyStopPolicy::GENERATIVE));
            }
        }

        #[test]
        fn decision_is_pure(h in proptest::collection::vec(0.0..5.0f64, 0..30)) {
            let p = EarlyStopPolicy::CONTRASTIVE;
            prop_assert_eq!(early_stop(&h, &p), early_stop(&h.clone(), &p));
        }
    }
}

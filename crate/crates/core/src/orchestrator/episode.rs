use std::path::Path;

use rand::seq::index::sample as sample_indices;
use serde::{Deserialize, Serialize};

use super::RunConfig;
use crate::agent::{EpisodeTransitions, RandomAgent, ReplayBuffer, SacAgent, Transition, ACTION_DIM};
use crate::datasets::SampleRecord;
use crate::judges::{batch_reward, InferenceOutcome, Judge};
use crate::scene::{ObservationVector, SceneEnv};
use crate::seeding::{derive_seed, rng_for, stream};
use crate::{Error, Real, Result};

/// The policy that drives the environment during the loop.
pub enum Actor {
    Sac {
        agent: Box<SacAgent>,
        buffer: ReplayBuffer,
        learn: bool,
    },
    Random(RandomAgent),
}

impl Actor {
    pub fn sac(agent: SacAgent, seed: u64, learn: bool) -> Self {
        let capacity = agent.config().replay_capacity;
        Actor::Sac {
            agent: Box::new(agent),
            buffer: ReplayBuffer::new(capacity, seed),
            learn,
        }
    }

    pub fn random(seed: u64) -> Self {
        Actor::Random(RandomAgent::new(seed))
    }

    pub fn is_random(&self) -> bool {
        matches!(self, Actor::Random(_))
    }

    fn act(&mut self, obs: &ObservationVector) -> Result<[Real; ACTION_DIM]> {
        match self {
            Actor::Sac { agent, .. } => agent.select_action(obs, true),
            Actor::Random(r) => Ok(r.act()),
        }
    }

    fn after_step(&mut self, step: u64) -> Result<()> {
        if let Actor::Sac {
            agent,
            buffer,
            learn: true,
        } = self
        {
            if step.is_multiple_of(agent.config().update_every as u64) {
                agent.update(buffer)?;
            }
        }
        Ok(())
    }

    /// Releases a finished episode into replay memory.
    pub fn store(&mut self, transitions: EpisodeTransitions) {
        if let Actor::Sac { buffer, .. } = self {
            buffer.extend(transitions.into_transitions());
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        match self {
            Actor::Sac { agent, .. } => agent.save(dir),
            Actor::Random(_) => Ok(()),
        }
    }

    pub fn digest(&self) -> Option<String> {
        match self {
            Actor::Sac { agent, .. } => Some(agent.digest()),
            Actor::Random(_) => None,
        }
    }
}

/// One rollout, before judge feedback.
#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub episode: u64,
    /// Exactly T0 records; truncated episodes repeat earlier ones.
    pub samples: Vec<SampleRecord>,
    pub transitions: EpisodeTransitions,
    /// Sum of intrinsic rewards.
    pub j1: Real,
    pub steps: u64,
    pub valid: u64,
    pub truncated: bool,
    /// Records added by repeating earlier valid snapshots.
    pub padded: usize,
}

#[derive(Debug, Clone)]
pub enum EpisodeOutcome {
    Complete(EpisodeResult),
    /// The step budget ran out mid-episode; the partial episode is dropped.
    BudgetExhausted {
        steps: u64,
        valid: u64,
    },
    /// The step cap was hit without a single valid snapshot to pad from.
    Empty {
        steps: u64,
    },
}

/// Caption seed of a sample, fixed by the run seed and the sample id.
pub fn caption_seed(run_seed: u64, id: u64) -> u64 {
    derive_seed(run_seed, &[stream::PROMPT, id])
}

/// Steps the environment until T0 valid snapshots or the step cap. `next_id`
/// numbers the records; `steps_left` is the remaining run budget.
pub fn run_episode(
    actor: &mut Actor,
    env: &mut SceneEnv,
    config: &RunConfig,
    episode: u64,
    iteration: u64,
    next_id: &mut u64,
    steps_left: Option<u64>,
) -> Result<EpisodeOutcome> {
    let t0 = config.samples_per_episode;
    let cap = config.max_episode_steps();
    let mut obs = env.reset(episode)?;
    let mut transitions = EpisodeTransitions::new();
    let mut samples = Vec::with_capacity(t0);
    let (mut steps, mut valid) = (0u64, 0u64);
    while samples.len() < t0 && steps < cap {
        if steps_left.is_some_and(|left| steps >= left) {
            return Ok(EpisodeOutcome::BudgetExhausted { steps, valid });
        }
        let action = actor.act(&obs)?;
        let out = env.step(action)?;
        steps += 1;
        if let Some(snapshot) = &out.snapshot {
            valid += 1;
            let id = *next_id;
            *next_id += 1;
            samples.push(SampleRecord::from_snapshot(
                id,
                snapshot,
                caption_seed(config.seed, id),
                episode,
                iteration,
            )?);
        }
        transitions.push(Transition {
            observation: obs,
            action,
            reward: out.reward,
            next_observation: out.observation,
            terminal: samples.len() == t0,
        });
        obs = out.observation;
        actor.after_step(steps)?;
    }
    let truncated = samples.len() < t0;
    let mut padded = 0;
    if truncated {
        if samples.is_empty() {
            return Ok(EpisodeOutcome::Empty { steps });
        }
        let originals = samples.len();
        while samples.len() < t0 {
            let mut copy = samples[padded % originals].clone();
            copy.id = *next_id;
            *next_id += 1;
            samples.push(copy);
            padded += 1;
        }
    }
    let j1 = transitions.reward_sum();
    Ok(EpisodeOutcome::Complete(EpisodeResult {
        episode,
        samples,
        transitions,
        j1,
        steps,
        valid,
        truncated,
        padded,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeScore {
    pub j2: f64,
    pub outcome: InferenceOutcome,
}

/// Judge inference on one episode. Fails if the weights change.
pub fn score_episode(samples: &[SampleRecord], judge: &mut dyn Judge) -> Result<EpisodeScore> {
    let before = judge.digest();
    let outcome = judge.infer(samples)?;
    if judge.digest() != before {
        return Err(Error::Judge("judge weights changed during inference".into()));
    }
    let j2 = batch_reward(&outcome, judge.mode())?;
    Ok(EpisodeScore { j2, outcome })
}

/// Seeded uniform subset of `round(η·T0)` samples, without replacement, in
/// their original order.
pub fn sample_for_batch(samples: &[SampleRecord], rate: f64, seed: u64) -> Result<Vec<SampleRecord>> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::InvalidArgument(format!("sampling rate {rate} outside (0, 1]")));
    }
    let n = ((rate * samples.len() as f64).round() as usize).min(samples.len());
    let mut rng = rng_for(seed, &[stream::SAMPLING]);
    let mut idx = sample_indices(&mut rng, samples.len(), n).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| samples[i].clone()).collect())
}

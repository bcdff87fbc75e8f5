use serde::{Deserialize, Serialize};

use super::{random_action, ReplayBuffer, SacAgent, Transition, UpdateOutcome, ACTION_DIM};
use crate::scene::{ObservationVector, SceneEnv};
use crate::seeding::{rng_for, stream};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub steps: u64,
    pub episodes: u64,
    pub updates: u64,
    pub valid_steps: u64,
    /// Mean of the last critic losses seen, if any update ran.
    pub last_critic_loss: Option<f64>,
}

/// Trains `agent` on the intrinsic placement reward alone. Episodes end after
/// `samples_per_episode` valid steps (terminal) or four times that many steps
/// (truncated, bootstrapped). Actions are uniform until the buffer reaches the
/// warmup size.
pub fn pretrain_intrinsic(
    agent: &mut SacAgent,
    env: &mut SceneEnv,
    buffer: &mut ReplayBuffer,
    steps: u64,
    samples_per_episode: usize,
    seed: u64,
) -> Result<PretrainReport> {
    if steps == 0 || samples_per_episode == 0 {
        return Err(Error::InvalidArgument(
            "pretraining needs steps > 0 and samples_per_episode > 0".into(),
        ));
    }
    let warmup = agent.config().warmup;
    let update_every = agent.config().update_every as u64;
    let mut explore = rng_for(seed, &[stream::RANDOM_AGENT, 1]);
    let mut report = PretrainReport {
        steps: 0,
        episodes: 0,
        updates: 0,
        valid_steps: 0,
        last_critic_loss: None,
    };
    let step_cap = 4 * samples_per_episode as u64;
    let mut obs = env.reset(0)?;
    while report.steps < steps {
        let action = if buffer.len() < warmup {
            random_action(&mut explore)
        } else {
            agent.select_action(&obs, true)?
        };
        let out = env.step(action)?;
        report.steps += 1;
        if out.snapshot.is_some() {
            report.valid_steps += 1;
        }
        let terminal = env.valid_steps() >= samples_per_episode as u64;
        let truncated = !terminal && env.steps() >= step_cap;
        buffer.push(Transition {
            observation: obs,
            action,
            reward: out.reward,
            next_observation: out.observation,
            terminal,
        });
        obs = out.observation;
        if report.steps.is_multiple_of(update_every) {
            if let UpdateOutcome::Updated(s) = agent.update(buffer)? {
                report.updates += 1;
                report.last_critic_loss = Some(0.5 * (s.q1_loss + s.q2_loss));
            }
        }
        if terminal || truncated {
            report.episodes += 1;
            obs = env.reset(report.episodes)?;
        }
    }
    Ok(report)
}

/// Fraction of valid placements over `steps` fresh steps taken by `policy`,
/// starting at episode `first_episode` and resetting on the same episode
/// bounds as pretraining.
pub fn valid_rate(
    env: &mut SceneEnv,
    steps: u64,
    samples_per_episode: usize,
    first_episode: u64,
    mut policy: impl FnMut(&ObservationVector) -> Result<[Real; ACTION_DIM]>,
) -> Result<f64> {
    if steps == 0 || samples_per_episode == 0 {
        return Err(Error::InvalidArgument("valid_rate needs steps > 0".into()));
    }
    let step_cap = 4 * samples_per_episode as u64;
    let mut episode = first_episode;
    let mut obs = env.reset(episode)?;
    let mut valid = 0u64;
    for _ in 0..steps {
        let out = env.step(policy(&obs)?)?;
        if out.snapshot.is_some() {
            valid += 1;
        }
        obs = out.observation;
        if env.valid_steps() >= samples_per_episode as u64 || env.steps() >= step_cap {
            episode += 1;
            obs = env.reset(episode)?;
        }
    }
    Ok(valid as f64 / steps as f64)
}

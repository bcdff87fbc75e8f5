//! Soft actor-critic agent, replay memory, terminal bonus injection and the
//! uniform random baseline.

mod pretrain;
mod sac;

pub use pretrain::{pretrain_intrinsic, valid_rate, PretrainReport};
pub use sac::{SacAgent, UpdateOutcome, UpdateStats, ACTION_DIM, LOG_STD_MAX, LOG_STD_MIN};

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scene::ObservationVector;
use crate::seeding::{rng_for, stream, SeededRng};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub learning_rate: f64,
    pub alpha: f64,
    pub auto_alpha: bool,
    /// Entropy target when `auto_alpha` is on; defaults to minus the action dimension.
    pub target_entropy: f64,
    pub polyak: f64,
    pub replay_capacity: usize,
    pub minibatch: usize,
    /// Transitions required before the first update.
    pub warmup: usize,
    /// Environment steps between gradient updates.
    pub update_every: usize,
}

impl Default for SacConfig {
    fn default() -> Self {
        SacConfig {
            hidden: vec![128, 128],
            gamma: 0.99,
            learning_rate: 3e-4,
            alpha: 0.2,
            auto_alpha: false,
            target_entropy: -(ACTION_DIM as f64),
            polyak: 0.995,
            replay_capacity: 100_000,
            minibatch: 256,
            warmup: 1000,
            update_every: 1,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("agent hidden sizes must be positive");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("agent gamma must lie in [0, 1)");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("agent learning_rate must be positive");
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return bad("agent alpha must be positive");
        }
        if !(0.0..1.0).contains(&self.polyak) {
            return bad("agent polyak must lie in [0, 1)");
        }
        if self.replay_capacity == 0 || self.minibatch == 0 || self.update_every == 0 {
            return bad("agent replay_capacity, minibatch and update_every must be positive");
        }
        if self.minibatch > self.replay_capacity {
            return bad("agent minibatch exceeds replay capacity");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: ObservationVector,
    pub action: [Real; ACTION_DIM],
    pub reward: Real,
    pub next_observation: ObservationVector,
    pub terminal: bool,
}

/// Fixed-capacity ring of transitions with a seeded sampler.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    head: usize,
    rng: SeededRng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Self {
        ReplayBuffer {
            capacity: capacity.max(1),
            items: Vec::new(),
            head: 0,
            rng: rng_for(seed, &[stream::REPLAY]),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Overwrites the oldest transition once full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
        }
        self.head = (self.head + 1) % self.capacity;
    }

    pub fn extend(&mut self, ts: impl IntoIterator<Item = Transition>) {
        for t in ts {
            self.push(t);
        }
    }

    /// Distinct transitions drawn uniformly.
    pub fn sample(&mut self, n: usize) -> Result<Vec<&Transition>> {
        if n > self.items.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot sample {n} of {} transitions",
                self.items.len()
            )));
        }
        let idx = sample_indices(&mut self.rng, self.items.len(), n);
        Ok(idx.iter().map(|i| &self.items[i]).collect())
    }
}

/// Transitions of one episode, held back from replay until the bonus is in.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeTransitions {
    transitions: Vec<Transition>,
    bonus_injected: bool,
}

impl EpisodeTransitions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: Transition) {
        self.transitions.push(t);
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn reward_sum(&self) -> Real {
        self.transitions.iter().map(|t| t.reward).sum()
    }

    pub fn bonus_injected(&self) -> bool {
        self.bonus_injected
    }

    /// Adds `beta * j2` to the last transition's reward. Allowed once.
    pub fn inject_terminal_bonus(&mut self, j2: Real, beta: Real) -> Result<()> {
        if self.bonus_injected {
            return Err(Error::BonusAlreadyInjected);
        }
        if !(j2 >= 0.0) || !j2.is_finite() || !beta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "bonus needs finite j2 >= 0, got {j2} and beta {beta}"
            )));
        }
        let last = self
            .transitions
            .last_mut()
            .ok_or_else(|| Error::InvalidArgument("episode has no transitions".into()))?;
        last.reward += beta * j2;
        self.bonus_injected = true;
        Ok(())
    }

    pub fn into_transitions(self) -> Vec<Transition> {
        self.transitions
    }
}

/// Uniform action in `[-1, 1]^3`.
pub fn random_action<R: Rng + ?Sized>(rng: &mut R) -> [Real; ACTION_DIM] {
    std::array::from_fn(|_| rng.random_range(-1.0..=1.0))
}

/// Baseline that ignores observations.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    rng: SeededRng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        RandomAgent {
            rng: rng_for(seed, &[stream::RANDOM_AGENT]),
        }
    }

    pub fn act(&mut self) -> [Real; ACTION_DIM] {
        random_action(&mut self.rng)
    }
}

use std::fs;
use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ReplayBuffer, SacConfig, Transition};
use crate::numerics::gradcheck::{check_gradients_strided, GradCheck, ParamStride, DEFAULT_STEP};
use crate::numerics::{optimize_step, read_network, write_network, Activation, Gradients, Mlp, OptimizerState};
use crate::scene::{ObservationVector, OBSERVATION_DIM};
use crate::seeding::{rng_for, stream, SeededRng};
use crate::{Error, Real, Result};

pub const ACTION_DIM: usize = 3;
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Per-entry observation scale: slot and scene indices and angles are brought
/// to roughly unit range, metric entries are left alone.
fn observation_scale() -> [Real; OBSERVATION_DIM] {
    let mut s = [1.0; OBSERVATION_DIM];
    s[0] = 0.5;
    s[1] = 0.25;
    for i in (23..26).chain(29..32) {
        s[i] = 1.0 / 180.0;
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub q1_loss: f64,
    pub q2_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateOutcome {
    /// Not enough transitions yet; nothing changed.
    Skipped {
        buffer_len: usize,
        required: usize,
    },
    Updated(UpdateStats),
}

/// Squashed Gaussian policy sample for one batch.
struct PolicySample {
    actions: Array2<f64>,
    log_prob: Array1<f64>,
    /// Pieces needed for the reparameterized gradient.
    noise: Array2<f64>,
    std: Array2<f64>,
    raw_log_std: Array2<f64>,
}

/// log(1 - tanh(u)^2), stable for large |u|.
fn log_one_minus_tanh_sq(u: f64) -> f64 {
    let softplus = |x: f64| x.max(0.0) + (-x.abs()).exp().ln_1p();
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

/// Smooth map from the raw actor output onto `[LOG_STD_MIN, LOG_STD_MAX]`.
fn bounded_log_std(raw: f64) -> f64 {
    LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (raw.tanh() + 1.0)
}

fn squash(out: ArrayView2<f64>, noise: Array2<f64>) -> PolicySample {
    let b = out.nrows();
    let mut actions = Array2::zeros((b, ACTION_DIM));
    let mut std = Array2::zeros((b, ACTION_DIM));
    let mut log_prob = Array1::zeros(b);
    let raw_log_std = out.slice(s![.., ACTION_DIM..]).to_owned();
    for i in 0..b {
        for d in 0..ACTION_DIM {
            let log_std = bounded_log_std(raw_log_std[[i, d]]);
            let sigma = log_std.exp();
            let eps = noise[[i, d]];
            let u = out[[i, d]] + sigma * eps;
            actions[[i, d]] = u.tanh();
            std[[i, d]] = sigma;
            log_prob[i] += -0.5 * eps * eps - log_std - HALF_LN_2PI - log_one_minus_tanh_sq(u);
        }
    }
    PolicySample {
        actions,
        log_prob,
        noise,
        std,
        raw_log_std,
    }
}

/// Soft actor-critic with twin critics, target copies and a fixed or tuned
/// entropy coefficient.
#[derive(Clone)]
pub struct SacAgent {
    config: SacConfig,
    actor: Mlp<f64>,
    q1: Mlp<f64>,
    q2: Mlp<f64>,
    q1_target: Mlp<f64>,
    q2_target: Mlp<f64>,
    log_alpha: f64,
    actor_opt: OptimizerState<f64>,
    q1_opt: OptimizerState<f64>,
    q2_opt: OptimizerState<f64>,
    rng: SeededRng,
    updates: u64,
}

impl SacAgent {
    pub fn new(config: SacConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init = rng_for(seed, &[stream::AGENT_INIT]);
        let sizes = |input: usize, output: usize| {
            let mut v = vec![input];
            v.extend(&config.hidden);
            v.push(output);
            v
        };
        let actor = Mlp::seeded(
            &sizes(OBSERVATION_DIM, 2 * ACTION_DIM),
            Activation::Tanh,
            Activation::Identity,
            &mut init,
        )?;
        let critic = sizes(OBSERVATION_DIM + ACTION_DIM, 1);
        let q1 = Mlp::seeded(&critic, Activation::Tanh, Activation::Identity, &mut init)?;
        let q2 = Mlp::seeded(&critic, Activation::Tanh, Activation::Identity, &mut init)?;
        let log_alpha = config.alpha.ln();
        Ok(Self::assemble(
            config,
            seed,
            actor,
            q1.clone(),
            q2.clone(),
            q1,
            q2,
            log_alpha,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        config: SacConfig,
        seed: u64,
        actor: Mlp<f64>,
        q1: Mlp<f64>,
        q2: Mlp<f64>,
        q1_target: Mlp<f64>,
        q2_target: Mlp<f64>,
        log_alpha: f64,
    ) -> Self {
        let lr = config.learning_rate;
        SacAgent {
            actor_opt: OptimizerState::adam(&actor, lr),
            q1_opt: OptimizerState::adam(&q1, lr),
            q2_opt: OptimizerState::adam(&q2, lr),
            rng: rng_for(seed, &[stream::AGENT_NOISE]),
            updates: 0,
            config,
            actor,
            q1,
            q2,
            q1_target,
            q2_target,
            log_alpha,
        }
    }

    pub fn config(&self) -> &SacConfig {
        &self.config
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn actor(&self) -> &Mlp<f64> {
        &self.actor
    }

    pub fn critics(&self) -> [&Mlp<f64>; 2] {
        [&self.q1, &self.q2]
    }

    pub fn target_critics(&self) -> [&Mlp<f64>; 2] {
        [&self.q1_target, &self.q2_target]
    }

    /// Digest over every network and the entropy coefficient.
    pub fn digest(&self) -> String {
        let parts = [
            self.actor.digest(),
            self.q1.digest(),
            self.q2.digest(),
            self.q1_target.digest(),
            self.q2_target.digest(),
            format!("{:016x}", self.log_alpha.to_bits()),
        ];
        crate::sha256_hex(parts.concat().as_bytes())
    }

    fn scaled(observations: &[&ObservationVector]) -> Array2<f64> {
        let scale = observation_scale();
        Array2::from_shape_fn((observations.len(), OBSERVATION_DIM), |(i, j)| {
            observations[i][j] * scale[j]
        })
    }

    fn noise(&mut self, rows: usize) -> Array2<f64> {
        let rng = &mut self.rng;
        Array2::from_shape_simple_fn((rows, ACTION_DIM), || StandardNormal.sample(rng))
    }

    /// Action in `[-1, 1]^3`: a squashed Gaussian draw, or `tanh(mean)` when
    /// `stochastic` is off.
    pub fn select_action(&mut self, observation: &ObservationVector, stochastic: bool) -> Result<[Real; ACTION_DIM]> {
        if observation.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation"));
        }
        let x = Self::scaled(&[observation]);
        let out = self.actor.forward_batch(x.view())?;
        if !stochastic {
            return Ok(std::array::from_fn(|d| out[[0, d]].tanh()));
        }
        let noise = self.noise(1);
        let sample = squash(out.view(), noise);
        Ok(std::array::from_fn(|d| sample.actions[[0, d]]))
    }

    fn critic_input(obs: &Array2<f64>, actions: &Array2<f64>) -> Array2<f64> {
        concatenate(Axis(1), &[obs.view(), actions.view()]).expect("matching row counts")
    }

    /// Mean squared error of a critic against fixed targets, with gradient.
    pub(crate) fn critic_loss_and_grad(
        q: &Mlp<f64>,
        input: ArrayView2<f64>,
        targets: &Array1<f64>,
    ) -> Result<(f64, Gradients<f64>)> {
        let (values, tape) = q.forward_tape(input)?;
        let b = values.nrows() as f64;
        let diff = &values.column(0) - targets;
        let loss = diff.dot(&diff) / b;
        let grad = (diff * (2.0 / b)).insert_axis(Axis(1));
        Ok((loss, q.backward(&tape, grad.view())?.params))
    }

    pub(crate) fn critic_loss(q: &Mlp<f64>, input: ArrayView2<f64>, targets: &Array1<f64>) -> Result<f64> {
        let values = q.forward_batch(input)?;
        let diff = &values.column(0) - targets;
        Ok(diff.dot(&diff) / values.nrows() as f64)
    }

    /// Actor objective `mean(alpha * log pi - min(Q1, Q2))` for fixed noise.
    pub(crate) fn actor_loss(
        actor: &Mlp<f64>,
        critics: [&Mlp<f64>; 2],
        alpha: f64,
        obs: &Array2<f64>,
        noise: &Array2<f64>,
    ) -> Result<f64> {
        let out = actor.forward_batch(obs.view())?;
        let sample = squash(out.view(), noise.clone());
        let input = Self::critic_input(obs, &sample.actions);
        let q1 = critics[0].forward_batch(input.view())?;
        let q2 = critics[1].forward_batch(input.view())?;
        let b = obs.nrows();
        let total: f64 = (0..b)
            .map(|i| alpha * sample.log_prob[i] - q1[[i, 0]].min(q2[[i, 0]]))
            .sum();
        Ok(total / b as f64)
    }

    pub(crate) fn actor_loss_and_grad(
        actor: &Mlp<f64>,
        critics: [&Mlp<f64>; 2],
        alpha: f64,
        obs: &Array2<f64>,
        noise: &Array2<f64>,
    ) -> Result<(f64, Gradients<f64>, Array1<f64>)> {
        let (out, tape) = actor.forward_tape(obs.view())?;
        let sample = squash(out.view(), noise.clone());
        let input = Self::critic_input(obs, &sample.actions);
        let (q1, t1) = critics[0].forward_tape(input.view())?;
        let (q2, t2) = critics[1].forward_tape(input.view())?;
        let b = obs.nrows();
        let bf = b as f64;
        let mut pick1 = Array2::zeros((b, 1));
        let mut pick2 = Array2::zeros((b, 1));
        let mut loss = 0.0;
        for i in 0..b {
            let (a, c) = (q1[[i, 0]], q2[[i, 0]]);
            if a <= c {
                pick1[[i, 0]] = 1.0;
            } else {
                pick2[[i, 0]] = 1.0;
            }
            loss += alpha * sample.log_prob[i] - a.min(c);
        }
        let dq_da = critics[0].backward(&t1, pick1.view())?.input + critics[1].backward(&t2, pick2.view())?.input;

        let mut grad_out = Array2::zeros(out.raw_dim());
        let half_range = 0.5 * (LOG_STD_MAX - LOG_STD_MIN);
        for i in 0..b {
            for d in 0..ACTION_DIM {
                let a = sample.actions[[i, d]];
                let sigma = sample.std[[i, d]];
                let eps = sample.noise[[i, d]];
                let dq = dq_da[[i, OBSERVATION_DIM + d]] * (1.0 - a * a);
                let d_mean = alpha * 2.0 * a - dq;
                let d_log_std = alpha * (-1.0 + 2.0 * a * sigma * eps) - dq * sigma * eps;
                let t = sample.raw_log_std[[i, d]].tanh();
                grad_out[[i, d]] = d_mean / bf;
                grad_out[[i, ACTION_DIM + d]] = d_log_std * half_range * (1.0 - t * t) / bf;
            }
        }
        let grads = actor.backward(&tape, grad_out.view())?.params;
        Ok((loss / bf, grads, sample.log_prob))
    }

    /// One gradient step for both critics, the actor and (when tuned) the
    /// entropy coefficient, followed by the target averaging.
    pub fn update(&mut self, buffer: &mut ReplayBuffer) -> Result<UpdateOutcome> {
        let required = self.config.warmup.max(self.config.minibatch);
        if buffer.len() < required {
            return Ok(UpdateOutcome::Skipped {
                buffer_len: buffer.len(),
                required,
            });
        }
        let batch: Vec<Transition> = buffer.sample(self.config.minibatch)?.into_iter().cloned().collect();
        let b = batch.len();
        let obs = Self::scaled(&batch.iter().map(|t| &t.observation).collect::<Vec<_>>());
        let next = Self::scaled(&batch.iter().map(|t| &t.next_observation).collect::<Vec<_>>());
        let actions = Array2::from_shape_fn((b, ACTION_DIM), |(i, d)| batch[i].action[d]);
        let alpha = self.alpha();

        // Soft Bellman targets from the target critics.
        let next_out = self.actor.forward_batch(next.view())?;
        let noise = self.noise(b);
        let next_sample = squash(next_out.view(), noise);
        let next_input = Self::critic_input(&next, &next_sample.actions);
        let t1 = self.q1_target.forward_batch(next_input.view())?;
        let t2 = self.q2_target.forward_batch(next_input.view())?;
        let targets = Array1::from_shape_fn(b, |i| {
            let t = &batch[i];
            let soft = t1[[i, 0]].min(t2[[i, 0]]) - alpha * next_sample.log_prob[i];
            t.reward + if t.terminal { 0.0 } else { self.config.gamma * soft }
        });

        let input = Self::critic_input(&obs, &actions);
        let (q1_loss, g1) = Self::critic_loss_and_grad(&self.q1, input.view(), &targets)?;
        let (q2_loss, g2) = Self::critic_loss_and_grad(&self.q2, input.view(), &targets)?;
        optimize_step(&mut self.q1, &g1, &mut self.q1_opt)?;
        optimize_step(&mut self.q2, &g2, &mut self.q2_opt)?;

        let noise = self.noise(b);
        let (actor_loss, ga, log_prob) =
            Self::actor_loss_and_grad(&self.actor, [&self.q1, &self.q2], alpha, &obs, &noise)?;
        optimize_step(&mut self.actor, &ga, &mut self.actor_opt)?;

        if self.config.auto_alpha {
            let grad = -(log_prob.mean().unwrap_or(0.0) + self.config.target_entropy);
            self.log_alpha -= self.config.learning_rate * grad;
        }

        self.q1_target.polyak_from(&self.q1, self.config.polyak)?;
        self.q2_target.polyak_from(&self.q2, self.config.polyak)?;
        self.updates += 1;

        let all_finite = [&self.actor, &self.q1, &self.q2, &self.q1_target, &self.q2_target]
            .iter()
            .all(|n| n.is_finite());
        if !all_finite || !self.log_alpha.is_finite() {
            return Err(Error::NonFinite("agent parameters after update"));
        }
        Ok(UpdateOutcome::Updated(UpdateStats {
            q1_loss,
            q2_loss,
            actor_loss,
            alpha: self.alpha(),
        }))
    }

    /// Writes every network in the checkpoint format plus a JSON manifest.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, net) in NETWORK_FILES.iter().zip(self.networks()) {
            let path = dir.join(name);
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            write_network(net, std::io::BufWriter::new(file))?;
        }
        let manifest = AgentManifest {
            networks: NETWORK_FILES.iter().map(|s| s.to_string()).collect(),
            log_alpha: self.log_alpha,
            config: self.config.clone(),
            updates: self.updates,
        };
        let path = dir.join(MANIFEST);
        fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
    }

    /// Restores networks and entropy coefficient; optimizer moments restart
    /// and the noise stream is re-seeded from `seed`.
    pub fn load(dir: &Path, seed: u64) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: AgentManifest = serde_json::from_slice(&text)?;
        manifest.config.validate()?;
        if manifest.networks.len() != NETWORK_FILES.len() {
            return Err(Error::Checkpoint("agent manifest must list five networks".into()));
        }
        let mut nets = Vec::new();
        for name in &manifest.networks {
            let path = dir.join(name);
            let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
            nets.push(read_network::<f64, _>(std::io::BufReader::new(file))?);
        }
        let [actor, q1, q2, q1_target, q2_target]: [Mlp<f64>; 5] = nets.try_into().expect("five networks");
        if actor.input_dim() != OBSERVATION_DIM || actor.output_dim() != 2 * ACTION_DIM {
            return Err(Error::Checkpoint("actor has the wrong shape".into()));
        }
        for q in [&q1, &q2, &q1_target, &q2_target] {
            if q.input_dim() != OBSERVATION_DIM + ACTION_DIM || q.output_dim() != 1 {
                return Err(Error::Checkpoint("critic has the wrong shape".into()));
            }
        }
        let mut agent = Self::assemble(
            manifest.config,
            seed,
            actor,
            q1,
            q2,
            q1_target,
            q2_target,
            manifest.log_alpha,
        );
        agent.updates = manifest.updates;
        Ok(agent)
    }

    fn networks(&self) -> [&Mlp<f64>; 5] {
        [&self.actor, &self.q1, &self.q2, &self.q1_target, &self.q2_target]
    }
}

const MANIFEST: &str = "manifest.json";
const NETWORK_FILES: [&str; 5] = ["actor.rls3", "q1.rls3", "q2.rls3", "q1_target.rls3", "q2_target.rls3"];

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentManifest {
    networks: Vec<String>,
    log_alpha: f64,
    config: SacConfig,
    updates: u64,
}

impl SacAgent {
    /// Central finite-difference check of the actor loss and both critic
    /// losses on one seeded batch of four random inputs.
    pub fn gradient_check(&self, probe: u64, stride: ParamStride) -> Result<Vec<(&'static str, GradCheck)>> {
        let mut rng = rng_for(probe, &[stream::GRADIENT_PROBE]);
        let mut uniform = |rows: usize, cols: usize, scale: f64| {
            Array2::from_shape_simple_fn((rows, cols), || scale * rng.random_range(-1.0..1.0))
        };
        let obs = uniform(4, OBSERVATION_DIM, 1.0);
        let input = uniform(4, OBSERVATION_DIM + ACTION_DIM, 1.0);
        let targets = uniform(4, 1, 2.0).column(0).to_owned();
        let noise = Array2::from_shape_simple_fn((4, ACTION_DIM), || StandardNormal.sample(&mut rng));
        let critics = [&self.q1, &self.q2];
        let alpha = self.alpha();

        let (_, ga, _) = Self::actor_loss_and_grad(&self.actor, critics, alpha, &obs, &noise)?;
        let actor = check_gradients_strided(
            &self.actor,
            &ga,
            |n| Self::actor_loss(n, critics, alpha, &obs, &noise).unwrap_or(f64::NAN),
            DEFAULT_STEP,
            stride,
        );
        let mut out = vec![("actor", actor)];
        for (name, q) in [("q1", &self.q1), ("q2", &self.q2)] {
            let (_, g) = Self::critic_loss_and_grad(q, input.view(), &targets)?;
            let c = check_gradients_strided(
                q,
                &g,
                |n| Self::critic_loss(n, input.view(), &targets).unwrap_or(f64::NAN),
                DEFAULT_STEP,
                stride,
            );
            out.push((name, c));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::check_network;
    use rand::Rng;

    fn small_config() -> SacConfig {
        SacConfig {
            hidden: vec![16, 16],
            minibatch: 32,
            warmup: 64,
            ..SacConfig::default()
        }
    }

    fn random_obs(rng: &mut SeededRng) -> ObservationVector {
        std::array::from_fn(|_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn log_one_minus_tanh_sq_is_stable() {
        for u in [-30.0, -3.0, -0.5, 0.0, 0.7, 4.0, 40.0] {
            let direct = (1.0 - f64::tanh(u).powi(2)).ln();
            let stable = log_one_minus_tanh_sq(u);
            if direct.is_finite() && u.abs() < 10.0 {
                assert!((direct - stable).abs() < 1e-9, "{u}");
            }
            assert!(stable.is_finite());
        }
    }

    #[test]
    fn actions_are_bounded_and_noisy() {
        let mut agent = SacAgent::new(small_config(), 1).unwrap();
        let mut rng = rng_for(1, &[50]);
        let obs = random_obs(&mut rng);
        let mut sums = [0.0; 3];
        let mut squares = [0.0; 3];
        for i in 0..10_000 {
            let a = agent.select_action(&obs, true).unwrap();
            assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
            if i < 1000 {
                for d in 0..3 {
                    sums[d] += a[d];
                    squares[d] += a[d] * a[d];
                }
            }
        }
        for d in 0..3 {
            let mean = sums[d] / 1000.0;
            assert!(squares[d] / 1000.0 - mean * mean > 0.0);
        }
        let a = agent.select_action(&obs, false).unwrap();
        assert_eq!(a, agent.select_action(&obs, false).unwrap());
        let mut bad = obs;
        bad[3] = f64::NAN;
        assert!(agent.select_action(&bad, true).is_err());
    }

    #[test]
    fn log_std_stays_in_range() {
        for raw in [-1e6, -3.0, 0.0, 3.0, 1e6] {
            let v = bounded_log_std(raw);
            assert!((LOG_STD_MIN..=LOG_STD_MAX).contains(&v));
        }
    }

    #[test]
    fn update_waits_for_warmup() {
        let mut agent = SacAgent::new(small_config(), 2).unwrap();
        let mut buf = ReplayBuffer::new(1000, 2);
        let mut rng = rng_for(2, &[51]);
        for _ in 0..63 {
            buf.push(Transition {
                observation: random_obs(&mut rng),
                action: [0.0; 3],
                reward: 1.0,
                next_observation: random_obs(&mut rng),
                terminal: false,
            });
        }
        let before = agent.digest();
        assert!(matches!(
            agent.update(&mut buf).unwrap(),
            UpdateOutcome::Skipped {
                buffer_len: 63,
                required: 64
            }
        ));
        assert_eq!(agent.digest(), before);
    }

    #[test]
    fn targets_follow_polyak_rule() {
        let mut agent = SacAgent::new(small_config(), 3).unwrap();
        let mut buf = ReplayBuffer::new(1000, 3);
        let mut rng = rng_for(3, &[52]);
        for _ in 0..100 {
            buf.push(Transition {
                observation: random_obs(&mut rng),
                action: [rng.random_range(-1.0..1.0), 0.0, 0.5],
                reward: if rng.random_bool(0.5) { 1.0 } else { -1.0 },
                next_observation: random_obs(&mut rng),
                terminal: rng.random_bool(0.1),
            });
        }
        let old_target = agent.q1_target.params_flat();
        agent.update(&mut buf).unwrap();
        let online = agent.q1.params_flat();
        let new_target = agent.q1_target.params_flat();
        for ((t0, q), t1) in old_target.iter().zip(&online).zip(&new_target) {
            assert!((t1 - (0.995 * t0 + 0.005 * q)).abs() < 1e-15);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let agent = SacAgent::new(small_config(), 4).unwrap();
        for probe in 0..10u64 {
            for (name, check) in agent.gradient_check(probe, ParamStride::ALL).unwrap() {
                assert!(check.max_relative_error < 1e-4, "{name} probe {probe}: {check:?}");
            }
            let mut rng = rng_for(probe, &[0xAC7]);
            let obs = Array2::from_shape_simple_fn((3, OBSERVATION_DIM), || rng.random_range(-1.0..1.0));
            let p = Array2::from_shape_simple_fn((3, 2 * ACTION_DIM), || rng.random_range(-1.0..1.0));
            let map = check_network(&agent.actor, obs.view(), p.view(), DEFAULT_STEP).unwrap();
            assert!(map.max_relative_error < 1e-4, "actor map probe {probe}: {map:?}");
        }
    }

    #[test]
    fn critic_learns_a_toy_bandit() {
        // One-step bandit: reward is +1 when the first action is positive.
        let config = SacConfig {
            hidden: vec![32, 32],
            minibatch: 64,
            warmup: 256,
            ..SacConfig::default()
        };
        let mut agent = SacAgent::new(config, 5).unwrap();
        let mut buf = ReplayBuffer::new(2000, 5);
        let mut rng = rng_for(5, &[54]);
        for _ in 0..1000 {
            let obs = random_obs(&mut rng);
            let action = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            buf.push(Transition {
                observation: obs,
                action,
                reward: if action[0] > 0.0 { 1.0 } else { -1.0 },
                next_observation: obs,
                terminal: true,
            });
        }
        let mut losses = Vec::new();
        for _ in 0..2000 {
            if let UpdateOutcome::Updated(s) = agent.update(&mut buf).unwrap() {
                losses.push(0.5 * (s.q1_loss + s.q2_loss));
            }
        }
        let head: f64 = losses[..50].iter().sum::<f64>() / 50.0;
        let tail: f64 = losses[losses.len() - 50..].iter().sum::<f64>() / 50.0;
        assert!(tail <= 0.5 * head, "critic loss {head} -> {tail}");
    }

    #[test]
    fn checkpoint_reproduces_actions_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let mut agent = SacAgent::new(small_config(), 6).unwrap();
        agent.save(dir.path()).unwrap();
        let mut back = SacAgent::load(dir.path(), 6).unwrap();
        assert_eq!(back.digest(), agent.digest());
        let mut rng = rng_for(6, &[55]);
        for _ in 0..20 {
            let obs = random_obs(&mut rng);
            let a = agent.select_action(&obs, false).unwrap();
            let b = back.select_action(&obs, false).unwrap();
            assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
        }
        let manifest: serde_json::Value =
            serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["networks"].as_array().unwrap().len(), 5);
    }

    #[test]
    fn auto_alpha_moves() {
        let config = SacConfig {
            auto_alpha: true,
            ..small_config()
        };
        let mut agent = SacAgent::new(config, 7).unwrap();
        let mut buf = ReplayBuffer::new(1000, 7);
        let mut rng = rng_for(7, &[56]);
        for _ in 0..100 {
            buf.push(Transition {
                observation: random_obs(&mut rng),
                action: [0.0; 3],
                reward: 1.0,
                next_observation: random_obs(&mut rng),
                terminal: false,
            });
        }
        agent.update(&mut buf).unwrap();
        assert_ne!(agent.alpha(), 0.2);
    }
}

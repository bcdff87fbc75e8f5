//! The closed loop: roll out episodes, caption them, score them with the
//! judge, feed the score back as a terminal bonus, fine-tune the judge on a
//! sampled batch, validate, and decide whether to stop.

mod config;
mod episode;
mod run_dir;

pub use config::{early_stop, AgentKind, EarlyStopPolicy, RunConfig};
pub use episode::{
    caption_seed, run_episode, sample_for_batch, score_episode, Actor, EpisodeOutcome, EpisodeResult, EpisodeScore,
};
pub use run_dir::{
    MetricsRow, ReportFile, ResolvedConfig, RunDir, VerdictLine, CHECKPOINTS_DIR, CONFIG_FILE, METRICS_FILE,
    REPORT_FILE, SAMPLES_FILE, VERDICTS_FILE,
};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{pretrain_intrinsic, PretrainReport, ReplayBuffer, SacAgent};
use crate::datasets::{file_digest, generate_fixed_set, records_digest, SampleRecord};
use crate::judges::{build_judge, FineTuneSchedule, Judge, JudgeKind, Vocabulary};
use crate::scene::{SceneEnv, SceneSuite};
use crate::seeding::{derive_seed, stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: u64,
    pub steps: u64,
    pub valid: u64,
    pub truncated: bool,
    pub padded: usize,
    pub j1: f64,
    pub j2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incident {
    pub iteration: usize,
    pub episode: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    /// Scored episodes, in order; exactly E of them.
    pub episodes: Vec<EpisodeSummary>,
    pub batch_size: usize,
    /// Training loss per fine-tuning step or epoch.
    pub losses: Vec<f64>,
    /// (step or epoch, validation metric) at cadence F.
    pub validation: Vec<(usize, f64)>,
    pub val_metric: f64,
    pub cumulative_valid: u64,
    pub cumulative_attempts: u64,
    pub judge_digest: String,
}

impl IterationReport {
    pub fn j2(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.j2).collect()
    }

    pub fn mean_j2(&self) -> Option<f64> {
        let n = self.episodes.len();
        (n > 0).then(|| self.episodes.iter().map(|e| e.j2).sum::<f64>() / n as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub config_digest: String,
    pub judge: JudgeKind,
    pub agent: AgentKind,
    /// Validation metric before any fine-tuning.
    pub baseline_val: f64,
    pub iterations: Vec<IterationReport>,
    /// Index into the validation history, 0 being the baseline.
    pub best_iteration: usize,
    pub best_val: f64,
    pub early_stop_iteration: Option<usize>,
    pub test_metric: Option<f64>,
    pub cumulative_valid: u64,
    pub cumulative_attempts: u64,
    pub budget: Option<u64>,
    pub budget_exhausted: bool,
    pub incidents: Vec<Incident>,
    pub validation_digest: String,
    pub test_digest: Option<String>,
    pub agent_digest: Option<String>,
    pub failure: Option<String>,
}

impl RunReport {
    /// Validation metric by iteration, starting with the baseline.
    pub fn validation_history(&self) -> Vec<f64> {
        std::iter::once(self.baseline_val)
            .chain(self.iterations.iter().map(|i| i.val_metric))
            .collect()
    }

    pub fn completed_iterations(&self) -> usize {
        self.iterations.len()
    }

    pub fn digest(&self) -> Result<String> {
        Ok(crate::sha256_hex(serde_json::to_string(self)?.as_bytes()))
    }
}

pub fn load_suites(config: &RunConfig) -> Result<(SceneSuite, SceneSuite)> {
    let train = match &config.train_scenes {
        Some(p) => SceneSuite::load(p)?,
        None => SceneSuite::training(),
    };
    let test = match &config.test_scenes {
        Some(p) => SceneSuite::load(p)?,
        None => SceneSuite::test(),
    };
    Ok((train, test))
}

/// Fixed validation set on the training scenes.
pub fn validation_set(config: &RunConfig, train: &SceneSuite) -> Result<Vec<SampleRecord>> {
    generate_fixed_set(train, &config.env, config.validation_size, config.fixed_set_seed)
}

/// Fixed test set on the held-out scenes.
pub fn test_set(config: &RunConfig, test: &SceneSuite) -> Result<Vec<SampleRecord>> {
    generate_fixed_set(
        test,
        &config.env,
        config.test_size,
        config.fixed_set_seed.wrapping_add(1),
    )
}

/// Builds and pretrains a SAC agent on the intrinsic reward alone.
pub fn pretrain_agent(config: &RunConfig, train: &SceneSuite) -> Result<(SacAgent, PretrainReport)> {
    let mut agent = SacAgent::new(config.sac.clone(), config.seed)?;
    let mut env = SceneEnv::new(
        train.clone(),
        config.env.clone(),
        config.samples_per_episode,
        derive_seed(config.seed, &[stream::AGENT_INIT]),
    );
    let mut buffer = ReplayBuffer::new(config.sac.replay_capacity, config.seed);
    let report = pretrain_intrinsic(
        &mut agent,
        &mut env,
        &mut buffer,
        config.pretrain_steps,
        config.samples_per_episode,
        config.seed,
    )?;
    Ok((agent, report))
}

/// Loop state for one run.
pub struct Runner {
    config: RunConfig,
    env: SceneEnv,
    actor: Actor,
    judge: Box<dyn Judge>,
    validation: Vec<SampleRecord>,
    test: Vec<SampleRecord>,
    run_dir: Option<RunDir>,
    next_episode: u64,
    next_id: u64,
    cumulative_valid: u64,
    cumulative_attempts: u64,
    incidents: Vec<Incident>,
}

enum IterationOutcome {
    Done(IterationReport),
    BudgetExhausted,
}

impl Runner {
    /// `config` must already be resolved.
    pub fn new(config: RunConfig, actor: Actor, judge: Box<dyn Judge>, run_dir: Option<RunDir>) -> Result<Self> {
        config.validate()?;
        let (train, test_suite) = load_suites(&config)?;
        let validation = validation_set(&config, &train)?;
        let test = if config.evaluate_test && config.test_size > 0 {
            test_set(&config, &test_suite)?
        } else {
            Vec::new()
        };
        let env = SceneEnv::new(train, config.env.clone(), config.samples_per_episode, config.seed);
        Ok(Runner {
            config,
            env,
            actor,
            judge,
            validation,
            test,
            run_dir,
            next_episode: 0,
            next_id: 0,
            cumulative_valid: 0,
            cumulative_attempts: 0,
            incidents: Vec::new(),
        })
    }

    /// Builds the actor and judge the config asks for. A SAC agent comes from
    /// `agent_checkpoint` or is pretrained here.
    pub fn from_config(config: RunConfig, run_dir: Option<RunDir>) -> Result<Self> {
        let config = config.resolve()?;
        let (train, _) = load_suites(&config)?;
        let actor = match config.agent {
            AgentKind::Random => Actor::random(config.seed),
            AgentKind::Sac => {
                let agent = match &config.agent_checkpoint {
                    Some(dir) => SacAgent::load(dir, config.seed)?,
                    None => {
                        let (agent, _) = pretrain_agent(&config, &train)?;
                        if let Some(rd) = &run_dir {
                            agent.save(&rd.checkpoint_dir("pretrained"))?;
                        }
                        agent
                    }
                };
                Actor::sac(agent, config.seed, config.agent_updates)
            }
        };
        let judge = build_judge(
            &config.judge,
            &Vocabulary::from_suite(&train),
            &config.judge_config,
            config.seed,
        )?;
        Runner::new(config, actor, judge, run_dir)
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn judge(&self) -> &dyn Judge {
        self.judge.as_ref()
    }

    pub fn validation(&self) -> &[SampleRecord] {
        &self.validation
    }

    /// Runs up to I iterations. Phase errors end the run early and are
    /// recorded in the report's `failure` field.
    pub fn run(mut self) -> Result<RunReport> {
        let config_digest = self.config.digest()?;
        if let Some(rd) = &self.run_dir {
            rd.write_config(&self.config)?;
        }
        let baseline_val = self.judge.validation_metric(&self.validation)?;
        let mut report = RunReport {
            seed: self.config.seed,
            config_digest,
            judge: self.config.judge.clone(),
            agent: self.config.agent,
            baseline_val,
            iterations: Vec::new(),
            best_iteration: 0,
            best_val: baseline_val,
            early_stop_iteration: None,
            test_metric: None,
            cumulative_valid: 0,
            cumulative_attempts: 0,
            budget: self.config.budget,
            budget_exhausted: false,
            incidents: Vec::new(),
            validation_digest: records_digest(&self.validation)?,
            test_digest: None,
            agent_digest: None,
            failure: None,
        };
        let mut metrics = vec![MetricsRow {
            iteration: 0,
            cumulative_valid: 0,
            cumulative_attempts: 0,
            val_metric: baseline_val,
            test_metric: None,
            mean_j2: None,
            batch_size: 0,
        }];
        self.write_metrics(&metrics)?;
        let policy = self.config.early_stop_policy();

        for it in 1..=self.config.iterations {
            match self.run_iteration(it) {
                Ok(IterationOutcome::Done(ir)) => {
                    metrics.push(MetricsRow {
                        iteration: it,
                        cumulative_valid: ir.cumulative_valid,
                        cumulative_attempts: ir.cumulative_attempts,
                        val_metric: ir.val_metric,
                        test_metric: None,
                        mean_j2: ir.mean_j2(),
                        batch_size: ir.batch_size,
                    });
                    if ir.val_metric > report.best_val {
                        report.best_val = ir.val_metric;
                        report.best_iteration = it;
                    }
                    report.iterations.push(ir);
                    self.write_metrics(&metrics)?;
                    if self.config.checkpoint_every > 0 && it % self.config.checkpoint_every == 0 {
                        self.checkpoint(&format!("iter_{it:04}"))?;
                    }
                    if !self.actor.is_random() && early_stop(&report.validation_history(), &policy) {
                        report.early_stop_iteration = Some(it);
                        break;
                    }
                }
                Ok(IterationOutcome::BudgetExhausted) => {
                    report.budget_exhausted = true;
                    break;
                }
                Err(e) => {
                    report.failure = Some(format!("iteration {it}: {e}"));
                    break;
                }
            }
        }

        if !self.test.is_empty() && report.failure.is_none() {
            match self.judge.validation_metric(&self.test) {
                Ok(m) => {
                    report.test_metric = Some(m);
                    report.test_digest = Some(records_digest(&self.test)?);
                    if let Some(last) = metrics.last_mut() {
                        last.test_metric = Some(m);
                    }
                    self.write_metrics(&metrics)?;
                }
                Err(e) => report.failure = Some(format!("test evaluation: {e}")),
            }
        }
        report.cumulative_valid = self.cumulative_valid;
        report.cumulative_attempts = self.cumulative_attempts;
        report.incidents = std::mem::take(&mut self.incidents);
        report.agent_digest = self.actor.digest();
        if let Some(rd) = &self.run_dir {
            rd.write_report(&report)?;
        }
        Ok(report)
    }

    fn write_metrics(&self, rows: &[MetricsRow]) -> Result<()> {
        match &self.run_dir {
            Some(rd) => rd.write_metrics(rows),
            None => Ok(()),
        }
    }

    fn checkpoint(&self, label: &str) -> Result<()> {
        if let Some(rd) = &self.run_dir {
            let dir = rd.checkpoint_dir(label);
            self.actor.save(&dir.join("agent"))?;
            self.judge.save(&dir.join("judge"))?;
        }
        Ok(())
    }

    fn run_iteration(&mut self, iteration: usize) -> Result<IterationOutcome> {
        let e_count = self.config.episodes_per_iteration;
        let mut batch: Vec<SampleRecord> = Vec::with_capacity(self.config.batch_size());
        let mut episodes = Vec::with_capacity(e_count);
        let (mut discarded, mut empty) = (0, 0);
        while episodes.len() < e_count {
            if discarded > e_count {
                return Err(Error::Judge(format!("{discarded} episodes discarded in one iteration")));
            }
            if empty > 10 * e_count {
                return Err(Error::InvalidArgument(format!(
                    "{empty} episodes without a valid sample"
                )));
            }
            let episode = self.next_episode;
            self.next_episode += 1;
            let steps_left = self.config.budget.map(|b| b.saturating_sub(self.cumulative_attempts));
            let outcome = run_episode(
                &mut self.actor,
                &mut self.env,
                &self.config,
                episode,
                iteration as u64,
                &mut self.next_id,
                steps_left,
            )?;
            let result = match outcome {
                EpisodeOutcome::BudgetExhausted { steps, valid } => {
                    self.cumulative_attempts += steps;
                    self.cumulative_valid += valid;
                    return Ok(IterationOutcome::BudgetExhausted);
                }
                EpisodeOutcome::Empty { steps } => {
                    self.cumulative_attempts += steps;
                    self.incident(iteration, episode, format!("no valid sample in {steps} steps"));
                    empty += 1;
                    continue;
                }
                EpisodeOutcome::Complete(r) => r,
            };
            self.cumulative_attempts += result.steps;
            self.cumulative_valid += result.valid;
            if let Some(rd) = &self.run_dir {
                rd.append_samples(&result.samples)?;
            }
            let score = match score_episode(&result.samples, self.judge.as_mut()) {
                Ok(s) => s,
                Err(e) => {
                    self.incident(iteration, episode, format!("judge failed, episode discarded: {e}"));
                    discarded += 1;
                    continue;
                }
            };
            let EpisodeResult {
                samples,
                mut transitions,
                j1,
                steps,
                valid,
                truncated,
                padded,
                ..
            } = result;
            if truncated {
                self.incident(
                    iteration,
                    episode,
                    format!("truncated after {steps} steps, {padded} samples repeated"),
                );
            }
            transitions.inject_terminal_bonus(score.j2, self.config.reward_scale)?;
            self.actor.store(transitions);
            if let Some(rd) = &self.run_dir {
                let lines: Vec<VerdictLine> = score
                    .outcome
                    .verdicts
                    .iter()
                    .map(|v| VerdictLine {
                        iteration,
                        episode,
                        verdict: v.clone(),
                    })
                    .collect();
                rd.append_verdicts(&lines)?;
            }
            let seed = derive_seed(self.config.seed, &[stream::SAMPLING, episode]);
            batch.extend(sample_for_batch(&samples, self.config.sampling_rate, seed)?);
            episodes.push(EpisodeSummary {
                episode,
                steps,
                valid,
                truncated,
                padded,
                j1,
                j2: score.j2,
            });
        }
        if batch.len() != self.config.batch_size() {
            return Err(Error::InvalidArgument(format!(
                "fine-tuning batch has {} samples, expected {}",
                batch.len(),
                self.config.batch_size()
            )));
        }
        let schedule = FineTuneSchedule {
            k: self.config.finetune_k(),
            cadence: self.config.validation_cadence(),
        };
        let ft = self.judge.finetune(&batch, schedule, &self.validation)?;
        let val_metric = match ft.validation.last() {
            Some(&(k, v)) if k == schedule.k => v,
            _ => self.judge.validation_metric(&self.validation)?,
        };
        Ok(IterationOutcome::Done(IterationReport {
            iteration,
            episodes,
            batch_size: batch.len(),
            losses: ft.losses,
            validation: ft.validation,
            val_metric,
            cumulative_valid: self.cumulative_valid,
            cumulative_attempts: self.cumulative_attempts,
            judge_digest: self.judge.digest(),
        }))
    }

    fn incident(&mut self, iteration: usize, episode: u64, message: String) {
        self.incidents.push(Incident {
            iteration,
            episode,
            message,
        });
    }
}

/// Resolves `config`, builds everything and runs the loop, writing into
/// `run_dir` when given.
pub fn run_loop(config: RunConfig, run_dir: Option<&Path>) -> Result<RunReport> {
    let rd = run_dir.map(RunDir::create).transpose()?;
    Runner::from_config(config, rd)?.run()
}

/// Digest of a run directory's `samples.jsonl`.
pub fn samples_digest(run_dir: &Path) -> Result<String> {
    file_digest(&run_dir.join(SAMPLES_FILE))
}

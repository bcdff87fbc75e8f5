//! `rls3` command-line entry point.
//!
//! Exit codes: 0 on success, 1 on a usage or configuration error, 2 when the
//! command itself fails. Diagnostics go to standard error; results go to
//! standard output.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use rls3::datasets::{
    complexity_breakdown, export_plot_data, per_term_breakdown, read_jsonl, write_fixed_set, SampleRecord,
};
use rls3::judges::{build_judge, load_judge, JudgeKind, Vocabulary};
use rls3::orchestrator::{
    load_suites, pretrain_agent, test_set, validation_set, AgentKind, RunConfig, RunDir, Runner, SAMPLES_FILE,
};

#[derive(Parser)]
#[command(name = "rls3", version, about = "Closed-loop spatial-relation sample generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain the SAC agent on the intrinsic reward alone.
    Pretrain(Common),
    /// Run the full generate, judge, fine-tune loop.
    Run(Common),
    /// Generate a fixed evaluation set.
    GenFixedSet {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        count: usize,
        #[arg(long, value_enum)]
        scenes: Scenes,
    },
    /// Evaluate a judge on a fixed set with per-term and per-complexity breakdowns.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "validation")]
        split: Split,
        /// Judge checkpoint directory; defaults to the run's best iteration.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Write CSV plot series for a finished run.
    ExportPlots(Common),
    /// Re-derive every stored relation from its geometry and verify.
    Replay(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "RLS3_RUN_DIR")]
    run_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dotted config override, e.g. `sac.alpha=0.05`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// generative, contrastive or external:<addr>.
    #[arg(long)]
    judge: Option<String>,
    #[arg(long, value_enum)]
    agent: Option<AgentArg>,
    /// Total environment steps allowed for generation.
    #[arg(long)]
    budget: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AgentArg {
    Sac,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenes {
    Train,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Validation,
    Test,
}

/// Failure split by exit code.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<rls3::Error> for Failure {
    fn from(e: rls3::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> CmdResult {
    match command {
        Command::Pretrain(c) => pretrain(&c),
        Command::Run(c) => run(&c),
        Command::GenFixedSet { common, count, scenes } => gen_fixed_set(&common, count, scenes),
        Command::Eval {
            common,
            split,
            checkpoint,
        } => eval(&common, split, checkpoint.as_deref()),
        Command::ExportPlots(c) => export_plots(&c),
        Command::Replay(c) => replay(&c),
    }
}

impl Common {
    /// Config file (or the desk preset), then flags, then `--set` overrides.
    fn resolve(&self) -> Result<RunConfig, Failure> {
        let usage = |e: rls3::Error| Failure::Usage(e.to_string());
        let mut config = match &self.config {
            Some(p) => RunConfig::load(p).map_err(usage)?,
            None => RunConfig::desk(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(j) = &self.judge {
            config.judge = j.parse::<JudgeKind>().map_err(usage)?;
        }
        if let Some(a) = self.agent {
            config.agent = match a {
                AgentArg::Sac => AgentKind::Sac,
                AgentArg::Random => AgentKind::Random,
            };
        }
        if let Some(b) = self.budget {
            config.budget = Some(b);
        }
        config.apply_overrides(&self.overrides).map_err(usage)?;
        config.resolve().map_err(usage)
    }

    fn run_dir(&self) -> Result<&Path, Failure> {
        self.run_dir
            .as_deref()
            .ok_or_else(|| Failure::Usage("--run-dir (or RLS3_RUN_DIR) is required".into()))
    }
}

fn print_json(value: &serde_json::Value) -> CmdResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn pretrain(c: &Common) -> CmdResult {
    let config = c.resolve()?;
    let rd = RunDir::create(c.run_dir()?)?;
    let (train, _) = load_suites(&config)?;
    let (agent, report) = pretrain_agent(&config, &train)?;
    let dir = rd.checkpoint_dir("pretrained");
    agent.save(&dir)?;
    let digest = rd.write_config(&config)?;
    eprintln!("pretrained agent saved to {}", dir.display());
    print_json(&json!({
        "config_digest": digest,
        "checkpoint": dir,
        "agent_digest": agent.digest(),
        "report": report,
    }))
}

fn run(c: &Common) -> CmdResult {
    let config = c.resolve()?;
    let rd = RunDir::create(c.run_dir()?)?;
    let report = Runner::from_config(config, Some(rd.clone()))?.run()?;
    for i in &report.incidents {
        eprintln!("iteration {} episode {}: {}", i.iteration, i.episode, i.message);
    }
    print_json(&json!({
        "run_dir": rd.root(),
        "digest": report.digest()?,
        "completed_iterations": report.completed_iterations(),
        "baseline_val": report.baseline_val,
        "best_iteration": report.best_iteration,
        "best_val": report.best_val,
        "early_stop_iteration": report.early_stop_iteration,
        "test_metric": report.test_metric,
        "cumulative_valid": report.cumulative_valid,
        "cumulative_attempts": report.cumulative_attempts,
    }))?;
    match report.failure {
        Some(f) => Err(Failure::Runtime(f)),
        None => Ok(()),
    }
}

fn gen_fixed_set(c: &Common, count: usize, scenes: Scenes) -> CmdResult {
    let mut config = c.resolve()?;
    let root = c.run_dir()?;
    std::fs::create_dir_all(root).map_err(|e| Failure::Runtime(format!("{}: {e}", root.display())))?;
    let (train, test) = load_suites(&config)?;
    let (name, records, seed) = match scenes {
        Scenes::Train => {
            config.validation_size = count;
            ("train", validation_set(&config, &train)?, config.fixed_set_seed)
        }
        Scenes::Test => {
            config.test_size = count;
            ("test", test_set(&config, &test)?, config.fixed_set_seed.wrapping_add(1))
        }
    };
    let path = root.join(format!("fixed_{name}_{count}.jsonl"));
    let manifest = write_fixed_set(&path, &records, seed)?;
    let manifest_path = path.with_extension("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Runtime(e.to_string()))?;
    std::fs::write(&manifest_path, text + "\n")
        .map_err(|e| Failure::Runtime(format!("{}: {e}", manifest_path.display())))?;
    eprintln!("wrote {} records to {}", manifest.count, path.display());
    print_json(&serde_json::to_value(&manifest).map_err(|e| Failure::Runtime(e.to_string()))?)
}

fn eval(c: &Common, split: Split, checkpoint: Option<&Path>) -> CmdResult {
    let config = c.resolve()?;
    let root = c.run_dir()?;
    let rd = RunDir::open(root)?;
    let (train, test) = load_suites(&config)?;
    let records: Vec<SampleRecord> = match split {
        Split::Validation => validation_set(&config, &train)?,
        Split::Test => test_set(&config, &test)?,
    };
    let checkpoint = match checkpoint {
        Some(p) => Some(p.to_path_buf()),
        None => rd
            .read_report()
            .ok()
            .map(|r| {
                rd.checkpoint_dir(&format!("iter_{:04}", r.report.best_iteration))
                    .join("judge")
            })
            .filter(|p| p.is_dir()),
    };
    let mut judge = match &checkpoint {
        Some(dir) => {
            eprintln!("evaluating judge from {}", dir.display());
            load_judge(dir)?
        }
        None => {
            eprintln!("no judge checkpoint found, evaluating an untrained judge");
            build_judge(
                &config.judge,
                &Vocabulary::from_suite(&train),
                &config.judge_config,
                config.seed,
            )?
        }
    };
    let outcome = judge.infer(&records)?;
    let metric = outcome.metric(judge.mode())?;
    let per_term = per_term_breakdown(&outcome.verdicts, &records);
    let complexity = complexity_breakdown(&outcome.verdicts, &records);
    let out = json!({
        "split": match split { Split::Validation => "validation", Split::Test => "test" },
        "samples": records.len(),
        "checkpoint": checkpoint,
        "metric": metric,
        "flagged": outcome.flagged(),
        "per_term": per_term,
        "complexity": complexity,
    });
    let path = rd.path(&format!(
        "eval_{}.json",
        match split {
            Split::Validation => "validation",
            Split::Test => "test",
        }
    ));
    let text = serde_json::to_string_pretty(&out).map_err(|e| Failure::Runtime(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    print_json(&out)
}

fn export_plots(c: &Common) -> CmdResult {
    let export = export_plot_data(c.run_dir()?)?;
    for w in &export.warnings {
        eprintln!("warning: {w}");
    }
    for f in &export.files {
        println!("{}", f.display());
    }
    if export.files.is_empty() {
        return Err(Failure::Runtime("nothing to export".into()));
    }
    Ok(())
}

fn replay(c: &Common) -> CmdResult {
    let path = c.run_dir()?.join(SAMPLES_FILE);
    let records: Vec<SampleRecord> = read_jsonl(&path)?;
    for (line, r) in records.iter().enumerate() {
        if let Err(e) = r.verify() {
            return Err(Failure::Runtime(format!(
                "{}: first inconsistent record at line {}: {e}",
                path.display(),
                line + 1
            )));
        }
    }
    eprintln!("{} records consistent", records.len());
    println!("{}", records.len());
    Ok(())
}

//! Command-line front end: corpus generation, training, evaluation, oracle
//! checks and negative mining.

pub mod config;
pub mod train;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use flowprover::corpus::{
    build_corpus, corpus_hash, micro_suite, read_jsonl, write_jsonl, CorpusError, CorpusSplit,
    Theorem,
};
use flowprover::gfn::{RewardError, RewardSpec, TrainError};
use flowprover::nn::{AdamW, Checkpoint, NnError};
use flowprover::oracle::{oracle_report, OracleError, OracleReport};
use flowprover::policy::{EncodingMode, TacticModel};
use flowprover::reward_model::{mine_hard_negatives, rm_train, MiningConfig, RewardModel, RmTrainConfig};
use flowprover::search::{evaluate_split, SearchConfig, SolveReport};
use rayon::prelude::*;
use thiserror::Error;

use config::RunConfig;
use train::{load_policy, run_train, TrainRequest};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {err}", path.display())]
    Corpus { path: PathBuf, err: CorpusError },
    #[error("{}: {err}", path.display())]
    Checkpoint { path: PathBuf, err: NnError },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("{0}")]
    AssertionFailed(String),
}

impl CliError {
    /// 1 for a failed `--assert`, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::AssertionFailed(_) => 1,
            _ => 2,
        }
    }
}

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn corpus_err(path: &Path, err: CorpusError) -> CliError {
    CliError::Corpus {
        path: path.to_path_buf(),
        err,
    }
}

pub(crate) fn ckpt_err(path: &Path, err: NnError) -> CliError {
    CliError::Checkpoint {
        path: path.to_path_buf(),
        err,
    }
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub(crate) fn unix_time() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Debug, Parser)]
#[command(name = "flowprover", version, about = "Reward-proportional tactic sampling for a propositional prover")]
pub struct Cli {
    /// Worker threads for rollouts, evaluation and mining.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the train/valid corpus.
    Datagen(DatagenArgs),
    /// Train the reward model on ground-truth pairs.
    TrainRm(TrainRmArgs),
    /// Train a policy (gfn, gfn-oo, gfn-br-oo, sft, ppo).
    Train(TrainArgs),
    /// Best-first search over a split.
    Eval(EvalArgs),
    /// Compare a policy against the exact reward-proportional distribution.
    Oracle(OracleArgs),
    /// Label sampled tactics as positive or hard negative.
    Mine(MineArgs),
}

#[derive(Debug, Args)]
pub struct DatagenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Write the five micro theorems as both splits instead.
    #[arg(long)]
    pub micro: bool,
}

#[derive(Debug, Args)]
pub struct TrainRmArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Checkpoint file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Reward-model checkpoint, or `uniform`.
    #[arg(long)]
    pub rm: Option<String>,
    /// Start from this policy checkpoint instead of a fresh network.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// `default` or `micro`.
    #[arg(long)]
    pub preset: Option<String>,
    /// Flat `key = value` file applied over the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub action_space: Option<String>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub reward: Option<String>,
    /// Any config key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Record elapsed milliseconds in metrics.csv (breaks byte-identity).
    #[arg(long)]
    pub wall_clock: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "valid")]
    pub split: String,
    #[arg(long, default_value_t = 8)]
    pub branching: usize,
    #[arg(long, default_value_t = 100)]
    pub budget: usize,
    /// `history` or `history_less`.
    #[arg(long, default_value = "history")]
    pub encoding: String,
    #[arg(long, default_value_t = 3)]
    pub max_depth: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Theorems as JSON lines.
    #[arg(long)]
    pub theorems: PathBuf,
    /// Reward-model checkpoint, or `uniform`.
    #[arg(long, default_value = "uniform")]
    pub rm: String,
    #[arg(long, default_value = "full_rm")]
    pub reward: String,
    #[arg(long, default_value_t = 2)]
    pub max_depth: usize,
    /// Exit 1 when any theorem misses the thresholds.
    #[arg(long)]
    pub assert: bool,
    #[arg(long, default_value_t = 0.05)]
    pub max_tv: f64,
    #[arg(long, default_value_t = 0.1)]
    pub max_log_z_error: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MineArgs {
    /// Policy or reward-model checkpoint used to sample.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "train")]
    pub split: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 36)]
    pub explore_budget: usize,
    #[arg(long, default_value_t = 8)]
    pub samples: usize,
    #[arg(long, default_value_t = 3)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Mine only the first N theorems.
    #[arg(long)]
    pub limit: Option<usize>,
}

/// Reads `train.jsonl` and `valid.jsonl` from a corpus directory.
pub fn load_corpus(dir: &Path) -> Result<CorpusSplit, CliError> {
    let read = |name: &str| {
        let p = dir.join(name);
        read_jsonl(&p).map_err(|e| corpus_err(&p, e))
    };
    Ok(CorpusSplit {
        train: read("train.jsonl")?,
        valid: read("valid.jsonl")?,
    })
}

fn select_split<'a>(corpus: &'a CorpusSplit, name: &str) -> Result<&'a [Theorem], CliError> {
    match name {
        "train" => Ok(&corpus.train),
        "valid" => Ok(&corpus.valid),
        _ => Err(CliError::Usage(format!("unknown split {name:?} (train, valid)"))),
    }
}

/// `uniform` or a reward-model checkpoint path.
pub fn load_reward_model(spec: &str) -> Result<RewardModel, CliError> {
    if spec == "uniform" {
        return Ok(RewardModel::uniform());
    }
    let path = Path::new(spec);
    let ckpt = Checkpoint::load(path).map_err(|e| ckpt_err(path, e))?;
    if ckpt.kind != "reward_model" {
        return Err(CliError::Usage(format!(
            "{spec}: expected a reward_model checkpoint, found `{}`",
            ckpt.kind
        )));
    }
    RewardModel::from_checkpoint(&ckpt).map_err(|e| ckpt_err(path, e))
}

/// A policy or a reward model, whichever the checkpoint holds.
pub fn load_tactic_model(path: &Path) -> Result<Box<dyn TacticModel>, CliError> {
    let ckpt = Checkpoint::load(path).map_err(|e| ckpt_err(path, e))?;
    let wrap = |e| ckpt_err(path, e);
    match ckpt.kind.as_str() {
        "policy" => Ok(Box::new(
            flowprover::policy::PolicyNet::from_checkpoint(&ckpt).map_err(wrap)?,
        )),
        "reward_model" => Ok(Box::new(RewardModel::from_checkpoint(&ckpt).map_err(wrap)?)),
        other => Err(CliError::Usage(format!(
            "{}: cannot search with a `{other}` checkpoint",
            path.display()
        ))),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}").map_err(|e| io_err(Path::new("<stdout>"), e))
        }
    }
}

pub fn cmd_datagen(args: &DatagenArgs) -> Result<String, CliError> {
    let split = if args.micro {
        CorpusSplit {
            train: micro_suite(),
            valid: micro_suite(),
        }
    } else {
        build_corpus(args.seed).map_err(|e| corpus_err(&args.out, e))?
    };
    fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    for (name, thms) in [("train.jsonl", &split.train), ("valid.jsonl", &split.valid)] {
        let p = args.out.join(name);
        write_jsonl(&p, thms).map_err(|e| corpus_err(&p, e))?;
    }
    let hash = corpus_hash(&split);
    write_file(&args.out.join("corpus.hash"), &format!("{hash}\n"))?;
    Ok(hash)
}

pub fn cmd_train_rm(args: &TrainRmArgs) -> Result<(), CliError> {
    let corpus = load_corpus(&args.corpus)?;
    let cfg = RmTrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        optim: AdamW::with_lr(args.lr),
        seed: args.seed,
    };
    let (rm, stats) = rm_train(&corpus, &cfg);
    for s in &stats {
        eprintln!("epoch {} loss {:.6} accuracy {:.4}", s.epoch, s.loss, s.accuracy);
    }
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    rm.to_checkpoint()
        .save(&args.out)
        .map_err(|e| ckpt_err(&args.out, e))
}

/// Preset, then config file, then explicit flags.
pub fn resolve_run_config(args: &TrainArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::preset(args.preset.as_deref().unwrap_or("default"))?;
    if let Some(p) = &args.config {
        let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
        cfg.apply_text(&text)?;
    }
    let flags = [
        ("mode", args.mode.clone()),
        ("seed", args.seed.map(|v| v.to_string())),
        ("steps", args.steps.map(|v| v.to_string())),
        ("lr", args.lr.map(|v| format!("{v:?}"))),
        ("action_space", args.action_space.clone()),
        ("max_depth", args.max_depth.map(|v| v.to_string())),
        ("reward", args.reward.clone()),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    Ok(cfg)
}

pub fn cmd_train(args: &TrainArgs, command_line: Vec<String>) -> Result<train::TrainSummary, CliError> {
    let config = resolve_run_config(args)?;
    let corpus = load_corpus(&args.corpus)?;
    let rm = args.rm.as_deref().map(load_reward_model).transpose()?;
    let init = args.init.as_deref().map(load_policy).transpose()?;
    run_train(&TrainRequest {
        corpus,
        out: args.out.clone(),
        config,
        rm,
        init,
        wall_clock: args.wall_clock,
        command_line,
    })
}

pub fn cmd_eval(args: &EvalArgs) -> Result<SolveReport, CliError> {
    let model = load_tactic_model(&args.checkpoint)?;
    let corpus = load_corpus(&args.corpus)?;
    let split = select_split(&corpus, &args.split)?;
    let encoding_mode: EncodingMode = args.encoding.parse().map_err(CliError::Usage)?;
    let cfg = SearchConfig {
        branching: args.branching,
        expansion_budget: args.budget,
        encoding_mode,
        max_depth: args.max_depth,
        ..SearchConfig::default()
    };
    let report = evaluate_split(model.as_ref(), split, &cfg);
    emit(args.out.as_deref(), &report.to_json())?;
    Ok(report)
}

pub fn cmd_oracle(args: &OracleArgs) -> Result<Vec<OracleReport>, CliError> {
    let net = load_policy(&args.checkpoint)?;
    let theorems = read_jsonl(&args.theorems).map_err(|e| corpus_err(&args.theorems, e))?;
    let rm = load_reward_model(&args.rm)?;
    let spec = RewardSpec {
        mode: config::parse_reward_mode(&args.reward).map_err(CliError::Usage)?,
        ..RewardSpec::default()
    };
    let reports = theorems
        .iter()
        .map(|t| oracle_report(t, &net, args.max_depth, &spec, Some(&rm)))
        .collect::<Result<Vec<_>, _>>()?;
    emit(
        args.out.as_deref(),
        &serde_json::to_string_pretty(&reports).expect("serializable"),
    )?;
    if args.assert {
        let failing: Vec<String> = reports
            .iter()
            .filter(|r| {
                !(r.tv_distance <= args.max_tv
                    && (r.log_z - r.predicted_log_z).abs() <= args.max_log_z_error)
            })
            .map(|r| r.theorem.clone())
            .collect();
        if !failing.is_empty() {
            return Err(CliError::AssertionFailed(format!(
                "oracle thresholds missed on: {}",
                failing.join(", ")
            )));
        }
    }
    Ok(reports)
}

pub fn cmd_mine(args: &MineArgs) -> Result<usize, CliError> {
    let model = load_tactic_model(&args.model)?;
    let corpus = load_corpus(&args.corpus)?;
    let split = select_split(&corpus, &args.split)?;
    let split = &split[..args.limit.unwrap_or(split.len()).min(split.len())];
    let cfg = MiningConfig {
        samples: args.samples,
        max_depth: args.max_depth,
        explore_budget: args.explore_budget,
        seed: args.seed,
    };
    let labeled: Vec<String> = split
        .par_iter()
        .flat_map_iter(|t| {
            mine_hard_negatives(model.as_ref(), t, &cfg)
                .into_iter()
                .map(|l| l.to_json_line())
        })
        .collect();
    let mut text = labeled.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    write_file(&args.out, &text)?;
    Ok(labeled.len())
}

pub fn run(cli: Cli, command_line: Vec<String>) -> Result<(), CliError> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--workers: {e}")))?;
    }
    match &cli.command {
        Command::Datagen(a) => {
            let hash = cmd_datagen(a)?;
            println!("{hash}");
        }
        Command::TrainRm(a) => cmd_train_rm(a)?,
        Command::Train(a) => {
            let s = cmd_train(a, command_line)?;
            eprintln!(
                "trained {} steps: {} env calls, {} buffer reads, {} skipped updates",
                s.steps, s.env_calls, s.buffer_reads, s.skipped_updates
            );
        }
        Command::Eval(a) => {
            let r = cmd_eval(a)?;
            eprintln!("solved {}/{}", r.solved, r.total);
        }
        Command::Oracle(a) => {
            cmd_oracle(a)?;
        }
        Command::Mine(a) => {
            let n = cmd_mine(a)?;
            eprintln!("wrote {n} labelled tactics");
        }
    }
    Ok(())
}

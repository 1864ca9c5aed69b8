//! The `train` command: one run directory per invocation.
//!
//! Layout of `out/`:
//! `manifest.json`, `config.txt`, `metrics.csv`, `validation.csv`,
//! `checkpoints/step_NNNNNN.json`, `final.json` (plus `value_final.json`
//! for ppo) and `finished.json`.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use flowprover::baselines::{ppo_step, train_sft, SftConfig, ValueHead};
use flowprover::corpus::{corpus_hash, CorpusSplit, Theorem};
use flowprover::gfn::{train_gfn, TrainerState};
use flowprover::metrics::{MetricsRow, MetricsWriter};
use flowprover::nn::Checkpoint;
use flowprover::policy::PolicyNet;
use flowprover::reward_model::RewardModel;
use flowprover::search::{evaluate_split, SearchConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Mode, RunConfig};
use crate::{ckpt_err, io_err, unix_time, write_file, CliError};

#[derive(Debug, Clone)]
pub struct TrainRequest {
    pub corpus: CorpusSplit,
    pub out: PathBuf,
    pub config: RunConfig,
    pub rm: Option<RewardModel>,
    pub init: Option<PolicyNet>,
    pub wall_clock: bool,
    pub command_line: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command_line: &'a [String],
    config: &'a str,
    config_hash: String,
    seed: u64,
    mode: &'a str,
    corpus_hash: String,
    code_version: &'static str,
    start_unix: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub steps: usize,
    pub env_calls: u64,
    pub buffer_reads: u64,
    pub skipped_updates: usize,
    pub end_unix: u64,
}

/// Receives every step's metrics and handles validation, checkpoints and
/// non-finite reports. The first I/O error is kept and surfaced after the
/// training loop returns.
struct Sink<'a> {
    out: &'a Path,
    metrics: MetricsWriter<BufWriter<File>>,
    validation: BufWriter<File>,
    valid: &'a [Theorem],
    cfg: &'a RunConfig,
    started: Instant,
    wall_clock: bool,
    skipped: usize,
    error: Option<CliError>,
}

impl<'a> Sink<'a> {
    fn new(out: &'a Path, valid: &'a [Theorem], cfg: &'a RunConfig, wall_clock: bool) -> Result<Self, CliError> {
        let create = |name: &str| {
            let p = out.join(name);
            File::create(&p).map(BufWriter::new).map_err(|e| io_err(&p, e))
        };
        let metrics_path = out.join("metrics.csv");
        let metrics = MetricsWriter::new(create("metrics.csv")?).map_err(|e| io_err(&metrics_path, e))?;
        let mut validation = create("validation.csv")?;
        writeln!(validation, "step,solved,total").map_err(|e| io_err(&out.join("validation.csv"), e))?;
        Ok(Self {
            out,
            metrics,
            validation,
            valid,
            cfg,
            started: Instant::now(),
            wall_clock,
            skipped: 0,
            error: None,
        })
    }

    fn wall_ms(&self) -> u64 {
        if self.wall_clock {
            self.started.elapsed().as_millis() as u64
        } else {
            0
        }
    }

    fn on_step(&mut self, mut row: MetricsRow, net: &PolicyNet, skipped: bool) {
        if self.error.is_some() {
            return;
        }
        if let Err(e) = self.try_step(&mut row, net, skipped) {
            self.error = Some(e);
        }
    }

    fn try_step(&mut self, row: &mut MetricsRow, net: &PolicyNet, skipped: bool) -> Result<(), CliError> {
        if skipped {
            self.skipped += 1;
            eprintln!("step {}: non-finite gradient, update skipped", row.step);
        }
        row.wall_ms = self.wall_ms();
        let metrics_path = self.out.join("metrics.csv");
        self.metrics.write(row).map_err(|e| io_err(&metrics_path, e))?;
        if self.cfg.validate_every > 0 && row.step.is_multiple_of(self.cfg.validate_every) {
            let report = evaluate_split(net, self.valid, &SearchConfig::default());
            writeln!(self.validation, "{},{},{}", row.step, report.solved, report.total)
                .map_err(|e| io_err(&self.out.join("validation.csv"), e))?;
        }
        if self.cfg.checkpoint_every > 0 && row.step.is_multiple_of(self.cfg.checkpoint_every) {
            let p = self.out.join("checkpoints").join(format!("step_{:06}.json", row.step));
            net.to_checkpoint().save(&p).map_err(|e| ckpt_err(&p, e))?;
        }
        Ok(())
    }

    fn finish(mut self) -> Result<usize, CliError> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        let p = self.out.join("metrics.csv");
        self.metrics.flush().map_err(|e| io_err(&p, e))?;
        let p = self.out.join("validation.csv");
        self.validation.flush().map_err(|e| io_err(&p, e))?;
        Ok(self.skipped)
    }
}

fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn train_theorems(req: &TrainRequest) -> &[Theorem] {
    let all = &req.corpus.train;
    match req.config.train_limit {
        0 => all,
        n => &all[..n.min(all.len())],
    }
}

/// Runs the requested mode and writes the run directory.
pub fn run_train(req: &TrainRequest) -> Result<TrainSummary, CliError> {
    let cfg = &req.config;
    if cfg.needs_reward_model() && req.rm.is_none() {
        return Err(CliError::Usage(format!(
            "mode {} with reward full_rm needs --rm (a reward-model checkpoint or `uniform`)",
            cfg.mode
        )));
    }
    let out = req.out.as_path();
    fs::create_dir_all(out.join("checkpoints")).map_err(|e| io_err(out, e))?;

    let config_text = cfg.to_text();
    let manifest = Manifest {
        command_line: &req.command_line,
        config: &config_text,
        config_hash: sha256_hex(&config_text),
        seed: cfg.seed,
        mode: cfg.mode.name(),
        corpus_hash: corpus_hash(&req.corpus),
        code_version: env!("CARGO_PKG_VERSION"),
        start_unix: unix_time(),
    };
    let manifest_json = serde_json::to_string_pretty(&manifest).expect("serializable");
    write_file(&out.join("manifest.json"), &manifest_json)?;
    write_file(&out.join("config.txt"), &config_text)?;

    let net = match &req.init {
        Some(n) => n.clone(),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            PolicyNet::new(&mut rng, cfg.action_space.space())
        }
    };
    let theorems = train_theorems(req);
    let mut sink = Sink::new(out, &req.corpus.valid, cfg, req.wall_clock)?;

    let (net, value, env_calls, buffer_reads) = match cfg.mode {
        Mode::Gfn | Mode::GfnOo | Mode::GfnBrOo => {
            let tcfg = cfg.train_config(cfg.mode.gfn_mode().expect("gfn mode"));
            let mut state = TrainerState::new(net, req.rm.clone(), tcfg)?;
            let mut reads = 0u64;
            train_gfn(&mut state, theorems, |m, net| {
                reads += m.buffer_reads;
                let row = MetricsRow {
                    step: m.step,
                    mode: cfg.mode.to_string(),
                    loss: m.loss,
                    mean_log_r: m.mean_log_r,
                    mean_log_pf: m.mean_log_pf,
                    log_z_mean: m.log_z,
                    env_calls: m.env_calls,
                    wall_ms: 0,
                };
                sink.on_step(row, net, m.skipped);
            })?;
            let calls = state.env_calls;
            (state.net, None, calls, reads)
        }
        Mode::Sft => {
            let mut net = net;
            let by_name: HashMap<&str, &Theorem> =
                theorems.iter().map(|t| (t.name.as_str(), t)).collect();
            let scfg = SftConfig {
                total_steps: cfg.steps,
                optim: cfg.optim(),
                seed: cfg.seed,
            };
            train_sft(&mut net, theorems, &scfg, |m, net| {
                let row = MetricsRow {
                    step: m.step,
                    mode: cfg.mode.to_string(),
                    loss: m.loss,
                    mean_log_r: 0.0,
                    mean_log_pf: m.log_pf,
                    log_z_mean: net.predict_log_z(by_name[m.theorem.as_str()]),
                    env_calls: 0,
                    wall_ms: 0,
                };
                sink.on_step(row, net, m.skipped);
            });
            (net, None, 0, 0)
        }
        Mode::Ppo => {
            let (net, value, calls) = run_ppo(net, theorems, cfg, req.rm.as_ref(), &mut sink)?;
            (net, Some(value), calls, 0)
        }
    };
    let skipped_updates = sink.finish()?;

    let p = out.join("final.json");
    net.to_checkpoint().save(&p).map_err(|e| ckpt_err(&p, e))?;
    if let Some(v) = value {
        let p = out.join("value_final.json");
        v.to_checkpoint().save(&p).map_err(|e| ckpt_err(&p, e))?;
    }
    let summary = TrainSummary {
        steps: cfg.steps,
        env_calls,
        buffer_reads,
        skipped_updates,
        end_unix: unix_time(),
    };
    write_file(
        &out.join("finished.json"),
        &serde_json::to_string_pretty(&summary).expect("serializable"),
    )?;
    Ok(summary)
}

/// Each step draws `ppo_batch` theorems from a shuffled epoch order.
fn run_ppo(
    mut net: PolicyNet,
    theorems: &[Theorem],
    cfg: &RunConfig,
    rm: Option<&RewardModel>,
    sink: &mut Sink,
) -> Result<(PolicyNet, ValueHead, u64), CliError> {
    let mut value = ValueHead::new();
    let pcfg = cfg.ppo_config();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..theorems.len()).collect();
    let mut cursor = order.len();
    let mut env_calls = 0u64;
    if theorems.is_empty() {
        return Ok((net, value, 0));
    }
    for step in 1..=cfg.steps {
        let mut batch = Vec::with_capacity(cfg.ppo_batch);
        for _ in 0..cfg.ppo_batch.max(1) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(&theorems[order[cursor]]);
            cursor += 1;
        }
        let m = ppo_step(&mut net, &mut value, &batch, &pcfg, rm, &mut rng)?;
        env_calls += m.env_calls;
        let log_z_mean =
            batch.iter().map(|t| net.predict_log_z(t)).sum::<f64>() / batch.len() as f64;
        let row = MetricsRow {
            step,
            mode: cfg.mode.to_string(),
            loss: m.loss,
            mean_log_r: m.mean_log_r,
            mean_log_pf: m.mean_log_pf,
            log_z_mean,
            env_calls: m.env_calls,
            wall_ms: 0,
        };
        sink.on_step(row, &net, m.skipped);
    }
    Ok((net, value, env_calls))
}

/// Loads a policy checkpoint, rejecting other kinds.
pub fn load_policy(path: &Path) -> Result<PolicyNet, CliError> {
    let ckpt = Checkpoint::load(path).map_err(|e| ckpt_err(path, e))?;
    if ckpt.kind != "policy" {
        return Err(CliError::Usage(format!(
            "{}: expected a policy checkpoint, found `{}`",
            path.display(),
            ckpt.kind
        )));
    }
    PolicyNet::from_checkpoint(&ckpt).map_err(|e| ckpt_err(path, e))
}

//! Run configuration as flat `key = value` text.
//!
//! Values are layered: preset, then config file, then command-line flags.
//! [`RunConfig::to_text`] writes every key, and the output parses back to
//! the same configuration.

use std::fmt;
use std::str::FromStr;

use flowprover::baselines::PpoConfig;
use flowprover::gfn::{GfnMode, RewardMode, RewardSpec, SamplingConfig, TrainConfig};
use flowprover::nn::AdamW;
use flowprover::policy::ActionSpace;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Gfn,
    GfnOo,
    GfnBrOo,
    Sft,
    Ppo,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Gfn => "gfn",
            Mode::GfnOo => "gfn-oo",
            Mode::GfnBrOo => "gfn-br-oo",
            Mode::Sft => "sft",
            Mode::Ppo => "ppo",
        }
    }

    pub fn gfn_mode(self) -> Option<GfnMode> {
        match self {
            Mode::Gfn => Some(GfnMode::Gfn),
            Mode::GfnOo => Some(GfnMode::GfnOo),
            Mode::GfnBrOo => Some(GfnMode::GfnBrOo),
            Mode::Sft | Mode::Ppo => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Mode::Gfn, Mode::GfnOo, Mode::GfnBrOo, Mode::Sft, Mode::Ppo]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mode {s:?} (gfn, gfn-oo, gfn-br-oo, sft, ppo)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSpaceName {
    Full,
    Restricted6,
}

impl ActionSpaceName {
    pub fn space(self) -> ActionSpace {
        match self {
            ActionSpaceName::Full => ActionSpace::Full,
            ActionSpaceName::Restricted6 => ActionSpace::restricted6(),
        }
    }
}

impl FromStr for ActionSpaceName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Self::Full),
            "restricted6" => Ok(Self::Restricted6),
            _ => Err(format!("unknown action space {s:?} (full, restricted6)")),
        }
    }
}

impl fmt::Display for ActionSpaceName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::Restricted6 => "restricted6",
        })
    }
}

pub fn parse_reward_mode(s: &str) -> Result<RewardMode, String> {
    match s {
        "full_rm" => Ok(RewardMode::FullRm),
        "binary" => Ok(RewardMode::Binary),
        _ => Err(format!("unknown reward {s:?} (full_rm, binary)")),
    }
}

pub fn reward_mode_name(m: RewardMode) -> &'static str {
    match m {
        RewardMode::FullRm => "full_rm",
        RewardMode::Binary => "binary",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub steps: usize,
    pub lr: f64,
    /// Learning rate at the last step relative to `lr` (gfn modes).
    pub final_lr_scale: f64,
    pub log_z_lr_scale: f64,
    pub n_sampled: usize,
    pub replay_p: f64,
    pub buffer_unique: bool,
    pub buffer_capacity: usize,
    pub inject_gt: bool,
    pub temper_p: f64,
    pub temper_lo: f64,
    pub temper_hi: f64,
    pub explore_eps: f64,
    pub max_depth: usize,
    pub action_space: ActionSpaceName,
    pub reward: RewardMode,
    pub validate_every: usize,
    pub checkpoint_every: usize,
    /// Train on the first N theorems of the train split; 0 keeps all.
    pub train_limit: usize,
    pub ppo_batch: usize,
    pub clip_eps: f64,
    pub ppo_epochs: usize,
    pub value_coef: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let p = PpoConfig::default();
        Self::from_parts(Mode::Gfn, &t, &p, ActionSpaceName::Full)
    }
}

const KEYS: &[&str] = &[
    "mode",
    "seed",
    "steps",
    "lr",
    "final_lr_scale",
    "log_z_lr_scale",
    "n_sampled",
    "replay_p",
    "buffer_unique",
    "buffer_capacity",
    "inject_gt",
    "temper_p",
    "temper_lo",
    "temper_hi",
    "explore_eps",
    "max_depth",
    "action_space",
    "reward",
    "validate_every",
    "checkpoint_every",
    "train_limit",
    "ppo_batch",
    "clip_eps",
    "ppo_epochs",
    "value_coef",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Usage(format!("bad value {value:?} for `{key}`: {e}")))
}

impl RunConfig {
    fn from_parts(mode: Mode, t: &TrainConfig, p: &PpoConfig, space: ActionSpaceName) -> Self {
        Self {
            mode,
            seed: t.seed,
            steps: t.total_steps,
            lr: t.optim.lr,
            final_lr_scale: t.final_lr_scale,
            log_z_lr_scale: t.optim.log_z_lr_scale,
            n_sampled: t.n_sampled,
            replay_p: t.replay_p,
            buffer_unique: t.buffer_unique,
            buffer_capacity: t.buffer_capacity,
            inject_gt: t.inject_gt,
            temper_p: t.sampling.temper_p,
            temper_lo: t.sampling.temper_range.0,
            temper_hi: t.sampling.temper_range.1,
            explore_eps: t.sampling.explore_eps,
            max_depth: t.sampling.max_depth,
            action_space: space,
            reward: t.reward.mode,
            validate_every: 20,
            checkpoint_every: 100,
            train_limit: 0,
            ppo_batch: 4,
            clip_eps: p.clip_eps,
            ppo_epochs: p.ppo_epochs,
            value_coef: p.value_coef,
        }
    }

    /// The micro-suite setup: six actions, depth 2, 5000 steps.
    pub fn micro() -> Self {
        let t = TrainConfig::micro(0);
        Self::from_parts(Mode::Gfn, &t, &PpoConfig::default(), ActionSpaceName::Restricted6)
    }

    pub fn preset(name: &str) -> Result<Self, CliError> {
        match name {
            "default" => Ok(Self::default()),
            "micro" => Ok(Self::micro()),
            _ => Err(CliError::Usage(format!("unknown preset {name:?} (default, micro)"))),
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key {
            "mode" => self.mode = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "steps" => self.steps = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "final_lr_scale" => self.final_lr_scale = parse(key, v)?,
            "log_z_lr_scale" => self.log_z_lr_scale = parse(key, v)?,
            "n_sampled" => self.n_sampled = parse(key, v)?,
            "replay_p" => self.replay_p = parse(key, v)?,
            "buffer_unique" => self.buffer_unique = parse(key, v)?,
            "buffer_capacity" => self.buffer_capacity = parse(key, v)?,
            "inject_gt" => self.inject_gt = parse(key, v)?,
            "temper_p" => self.temper_p = parse(key, v)?,
            "temper_lo" => self.temper_lo = parse(key, v)?,
            "temper_hi" => self.temper_hi = parse(key, v)?,
            "explore_eps" => self.explore_eps = parse(key, v)?,
            "max_depth" => self.max_depth = parse(key, v)?,
            "action_space" => self.action_space = parse(key, v)?,
            "reward" => {
                self.reward = parse_reward_mode(v)
                    .map_err(|e| CliError::Usage(format!("bad value for `reward`: {e}")))?
            }
            "validate_every" => self.validate_every = parse(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, v)?,
            "train_limit" => self.train_limit = parse(key, v)?,
            "ppo_batch" => self.ppo_batch = parse(key, v)?,
            "clip_eps" => self.clip_eps = parse(key, v)?,
            "ppo_epochs" => self.ppo_epochs = parse(key, v)?,
            "value_coef" => self.value_coef = parse(key, v)?,
            _ => return Err(CliError::Usage(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("config line {}: expected `key = value`", i + 1))
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "mode" => self.mode.to_string(),
            "seed" => self.seed.to_string(),
            "steps" => self.steps.to_string(),
            "lr" => format!("{:?}", self.lr),
            "final_lr_scale" => format!("{:?}", self.final_lr_scale),
            "log_z_lr_scale" => format!("{:?}", self.log_z_lr_scale),
            "n_sampled" => self.n_sampled.to_string(),
            "replay_p" => format!("{:?}", self.replay_p),
            "buffer_unique" => self.buffer_unique.to_string(),
            "buffer_capacity" => self.buffer_capacity.to_string(),
            "inject_gt" => self.inject_gt.to_string(),
            "temper_p" => format!("{:?}", self.temper_p),
            "temper_lo" => format!("{:?}", self.temper_lo),
            "temper_hi" => format!("{:?}", self.temper_hi),
            "explore_eps" => format!("{:?}", self.explore_eps),
            "max_depth" => self.max_depth.to_string(),
            "action_space" => self.action_space.to_string(),
            "reward" => reward_mode_name(self.reward).to_string(),
            "validate_every" => self.validate_every.to_string(),
            "checkpoint_every" => self.checkpoint_every.to_string(),
            "train_limit" => self.train_limit.to_string(),
            "ppo_batch" => self.ppo_batch.to_string(),
            "clip_eps" => format!("{:?}", self.clip_eps),
            "ppo_epochs" => self.ppo_epochs.to_string(),
            "value_coef" => format!("{:?}", self.value_coef),
            _ => return None,
        })
    }

    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("known key")))
            .collect()
    }

    pub fn optim(&self) -> AdamW {
        AdamW {
            log_z_lr_scale: self.log_z_lr_scale,
            ..AdamW::with_lr(self.lr)
        }
    }

    pub fn reward_spec(&self) -> RewardSpec {
        RewardSpec {
            mode: self.reward,
            ..RewardSpec::default()
        }
    }

    pub fn sampling(&self) -> SamplingConfig {
        SamplingConfig {
            max_depth: self.max_depth,
            temper_p: self.temper_p,
            temper_range: (self.temper_lo, self.temper_hi),
            explore_eps: self.explore_eps,
        }
    }

    /// Trainer settings for a gfn mode.
    pub fn train_config(&self, mode: GfnMode) -> TrainConfig {
        TrainConfig {
            mode,
            optim: self.optim(),
            total_steps: self.steps,
            final_lr_scale: self.final_lr_scale,
            n_sampled: self.n_sampled,
            replay_p: self.replay_p,
            sampling: self.sampling(),
            inject_gt: self.inject_gt,
            buffer_capacity: self.buffer_capacity,
            buffer_unique: self.buffer_unique,
            reward: self.reward_spec(),
            seed: self.seed,
        }
    }

    pub fn ppo_config(&self) -> PpoConfig {
        PpoConfig {
            clip_eps: self.clip_eps,
            ppo_epochs: self.ppo_epochs,
            value_coef: self.value_coef,
            optim: self.optim(),
            max_depth: self.max_depth,
            reward: self.reward_spec(),
            ..PpoConfig::default()
        }
    }

    /// Whether training scores unfinished trajectories with a reward model.
    pub fn needs_reward_model(&self) -> bool {
        match self.mode {
            Mode::Gfn | Mode::GfnOo | Mode::Ppo => self.reward == RewardMode::FullRm,
            Mode::GfnBrOo | Mode::Sft => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::micro();
        cfg.mode = Mode::Ppo;
        cfg.lr = 0.1 + 0.2;
        let mut back = RunConfig::default();
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_key_is_usage_error() {
        let mut cfg = RunConfig::default();
        assert!(matches!(cfg.apply_text("bogus = 1"), Err(CliError::Usage(_))));
        assert!(matches!(cfg.apply_text("steps"), Err(CliError::Usage(_))));
        assert!(matches!(cfg.set("steps", "-3"), Err(CliError::Usage(_))));
    }

    #[test]
    fn comments_and_blank_lines() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# header\n\nsteps = 7 # trailing\nreward = binary\n")
            .unwrap();
        assert_eq!(cfg.steps, 7);
        assert_eq!(cfg.reward, RewardMode::Binary);
    }

    #[test]
    fn micro_matches_trainer_preset() {
        let cfg = RunConfig::micro();
        assert_eq!(cfg.train_config(GfnMode::Gfn), TrainConfig::micro(0));
    }
}

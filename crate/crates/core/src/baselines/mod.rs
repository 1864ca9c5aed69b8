//! Supervised fine-tuning and PPO baselines sharing the policy stack.

mod ppo;
mod sft;

pub use ppo::{
    clipped_surrogate, clipped_surrogate_grad, ppo_loss, ppo_step, samples_from_trajectory,
    PpoConfig, PpoLoss, PpoMetrics, PpoSample, ValueHead,
};
pub use sft::{sft_loss, sft_step, top1_accuracy, train_sft, SftConfig, SftExample, SftMetrics};

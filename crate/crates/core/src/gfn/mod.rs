//! Trajectory-balance fine-tuning: shaped log-rewards, rollout sampling,
//! the replay buffer, the TB loss and the training loop with ground-truth
//! injection and the online-only / binary-reward ablations.

mod buffer;
mod loss;
mod reward;
mod trainer;
mod trajectory;

pub use buffer::ReplayBuffer;
pub use loss::{tb_loss, tb_loss_values, tb_residual, TbOutput};
pub use reward::{log_reward, mean_tactic_len, RewardError, RewardMode, RewardSpec};
pub use trainer::{
    sample_batch, train_gfn, train_step, GfnMode, StepMetrics, TrainConfig, TrainError,
    TrainerState,
};
pub use trajectory::{
    forced_trajectory, ground_truth_trajectory, replay_forward, sample_trajectory,
    SamplingConfig, Source, Trajectory, TrajectoryError, Outcome,
};

//! Deep symbolic regression: a recurrent policy over expression tokens,
//! constrained sampling, NRMSE reward and three policy-gradient trainers.

mod policy;
mod queue;
mod reward;
mod trainer;

pub use policy::{Policy, Trajectory, WeightedSequence, DEFAULT_HIDDEN, INIT_SCALE, MAX_RETRIES};
pub use queue::{MaxRewardQueue, QueueEntry};
pub use reward::{nrmse, reward, target_std, RewardData, Scored};
pub use trainer::{
    pqt_step, quantile, rspg_step, rspg_weights, sample_batch, train, train_with_vocabulary, vpg_step,
    write_history_csv, Ewma, HistoryRow, PolicyKind, SampledBatch, StepStats, TrainResult, TrainerConfig,
};

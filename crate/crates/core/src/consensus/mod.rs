//! Reputation, consensus-group selection, pinning, scheduling and rewards.

pub mod group;
pub mod reputation;
pub mod rewards;
pub mod scheduler;
pub mod voting;

pub use group::{select_group, ConsensusGroup, GroupSelectError, Member};
pub use reputation::{
    combine_reputation, compute_r1, compute_r2, score_curve, ChunkStats, MiningScore, PinnedShare, ReputationError,
    ReputationParams, ReputationState,
};
pub use rewards::{
    keyblock_rewards, microblock_rewards, split_reward, Amount, FeeSchedule, Payouts, RewardError, UNIT,
};
pub use scheduler::{quota, Scheduler};
pub use voting::{pin, IgnoreReason, PinOutcome, Vote};

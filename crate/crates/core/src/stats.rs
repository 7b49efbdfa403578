//! Per-epoch training telemetry shared by the teacher and distillation
//! trainers; one row per epoch in the emitted curve CSVs.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStats {
    /// 1-based epoch index, strictly increasing within a run.
    pub epoch: usize,
    /// Episodes completed since the start of the run.
    pub episodes: usize,
    /// Environment steps taken since the start of the run.
    pub env_steps: usize,
    /// Mean total reward of episodes completed during this epoch; carries
    /// the previous value when no episode finished.
    pub avg_reward: f64,
    /// Mean training loss over this epoch's optimizer steps (0 when none).
    pub loss: f64,
}

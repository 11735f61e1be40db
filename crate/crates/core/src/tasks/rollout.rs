//! Chunked closed-loop execution: observe → plan a chunk → execute the first
//! `exec_h` actions → re-observe, until success or the step budget runs out.

use super::expert::plan_expert_chunk;
use super::sim::{featurize, pickplace_step, task_score, PickPlaceState, TaskTag};
use super::ActionChunk;
use crate::math::{Rng, Vec64};
use crate::sampler::{Policy, SampleConfig};

/// Anything that can plan an action chunk from an observation.
pub trait ChunkPolicy {
    fn chunk_h(&self) -> usize;
    fn plan(&self, obs: &Vec64, rng: &mut Rng) -> ActionChunk;
}

/// A trained policy paired with its sampling settings.
pub struct SamplingPolicy<'a> {
    pub policy: &'a Policy,
    pub cfg: SampleConfig,
}

impl ChunkPolicy for SamplingPolicy<'_> {
    fn chunk_h(&self) -> usize {
        self.policy.chunk_h
    }

    fn plan(&self, obs: &Vec64, rng: &mut Rng) -> ActionChunk {
        self.policy.generate_chunk(obs, &self.cfg, rng)
    }
}

/// The scripted expert driven through the same executor interface: it
/// rebuilds the state from the observation and simulates itself forward.
pub struct ExpertChunkPolicy {
    pub task: TaskTag,
    pub chunk_h: usize,
}

impl ChunkPolicy for ExpertChunkPolicy {
    fn chunk_h(&self) -> usize {
        self.chunk_h
    }

    fn plan(&self, obs: &Vec64, rng: &mut Rng) -> ActionChunk {
        let rows = plan_expert_chunk(obs, self.task, self.chunk_h, rng);
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.to_vec()).collect();
        ActionChunk::from_flat(&Vec64::new(flat), self.chunk_h, rows[0].len())
    }
}

#[derive(Debug, Clone)]
pub struct RolloutResult {
    pub score: f64,
    pub steps_used: usize,
    pub trajectory: Vec<PickPlaceState>,
}

/// One closed-loop episode. The rng drives the initial randomization first,
/// then every planning call; a timeout keeps whatever partial score was
/// achieved.
pub fn rollout_policy(
    policy: &dyn ChunkPolicy,
    task: TaskTag,
    exec_h: usize,
    rng: &mut Rng,
    max_steps: usize,
) -> RolloutResult {
    assert!(task.is_sim(), "rollouts need a simulator task");
    assert!(
        1 <= exec_h && exec_h <= policy.chunk_h(),
        "require 1 <= exec_h <= chunk_h"
    );
    let mut state = PickPlaceState::init(task, rng);
    let mut trajectory = vec![state.clone()];
    let mut steps_used = 0;

    'outer: while steps_used < max_steps && !state.is_success() {
        let obs = featurize(&state);
        let chunk = policy.plan(&obs, rng);
        for j in 0..exec_h {
            state = pickplace_step(&state, &chunk.row_vec(j));
            trajectory.push(state.clone());
            steps_used += 1;
            if state.is_success() || steps_used >= max_steps {
                break 'outer;
            }
        }
    }

    RolloutResult {
        score: task_score(&state),
        steps_used,
        trajectory,
    }
}

/// Evaluation protocol: `rounds × trials` independent rollouts with derived
/// seeds; returns the overall mean score and per-round means, both as
/// percentages.
#[allow(clippy::too_many_arguments)]
pub fn eval_success(
    policy: &dyn ChunkPolicy,
    task: TaskTag,
    rounds: usize,
    trials: usize,
    exec_h: usize,
    max_steps: usize,
    master_seed: u64,
) -> (f64, Vec<f64>) {
    assert!(rounds >= 1 && trials >= 1, "rounds and trials must be >= 1");
    let mut per_round = Vec::with_capacity(rounds);
    for round in 0..rounds {
        let mut sum = 0.0;
        for trial in 0..trials {
            let stream = (round as u64) << 32 | trial as u64;
            let mut rng = Rng::new(Rng::derive_seed(master_seed, stream));
            sum += rollout_policy(policy, task, exec_h, &mut rng, max_steps).score;
        }
        per_round.push(100.0 * sum / trials as f64);
    }
    let mean = per_round.iter().sum::<f64>() / rounds as f64;
    (mean, per_round)
}

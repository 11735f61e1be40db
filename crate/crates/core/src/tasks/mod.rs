//! Synthetic desk-scale benchmark tasks.
//!
//! Two families: conditional Gaussian-mixture datasets (pure distribution
//! learning) and a deterministic 2D point-mass pick-place / sorting simulator
//! with a scripted expert, demonstration generation, and a chunked
//! closed-loop rollout executor.

pub mod data;
pub mod expert;
pub mod rollout;
pub mod sim;

pub use data::{
    gen_demos, gen_gmm_dataset, gmm_mode_mean, load_dataset, make_training_pairs, meta_for,
    save_dataset, DatasetMeta, EpisodeRecord, GMM_SIGMA,
};
pub use expert::scripted_expert;
pub use rollout::{
    eval_success, rollout_policy, ChunkPolicy, ExpertChunkPolicy, RolloutResult, SamplingPolicy,
};
pub use sim::{featurize, pickplace_step, task_score, PickPlaceState, TaskTag};

use crate::math::{Mat64, Vec64};

/// An `H × act_dim` block of future actions; the object being generated.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionChunk {
    data: Mat64,
}

impl ActionChunk {
    pub fn from_flat(flat: &Vec64, h: usize, act_dim: usize) -> Self {
        assert!(h >= 1, "chunk needs at least one action");
        assert_eq!(flat.len(), h * act_dim, "flat chunk length mismatch");
        let mut data = Mat64::zeros(h, act_dim);
        data.as_mut_slice().copy_from_slice(flat.as_slice());
        ActionChunk { data }
    }

    pub fn h(&self) -> usize {
        self.data.rows()
    }

    pub fn act_dim(&self) -> usize {
        self.data.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.data.row(i)
    }

    pub fn row_vec(&self, i: usize) -> Vec64 {
        Vec64::new(self.data.row(i).to_vec())
    }

    pub fn flatten(&self) -> Vec64 {
        Vec64::new(self.data.as_slice().to_vec())
    }

    pub fn all_finite(&self) -> bool {
        self.data.all_finite()
    }
}

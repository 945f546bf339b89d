//! Named random substreams derived from one root seed.
//!
//! Every stream is a ChaCha8 generator seeded by SHA-256 over
//! `(root seed, label, indices)`, so a stream's contents depend only on its
//! key and never on which other streams were consumed first.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Root of the stream hierarchy for one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    root: u64,
}

impl SeedTree {
    pub fn new(root: u64) -> Self {
        SeedTree { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn stream(&self, label: &str, indices: &[u64]) -> StreamRng {
        let mut h = Sha256::new();
        h.update(self.root.to_le_bytes());
        h.update((label.len() as u64).to_le_bytes());
        h.update(label.as_bytes());
        for i in indices {
            h.update(i.to_le_bytes());
        }
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }

    /// Stream for the `index`-th instance of a task; keyed by task id (and the
    /// task's own seed) so task data never depends on scheduler choices.
    pub fn task_stream(&self, task_id: &str, task_seed: u64, index: u64) -> StreamRng {
        self.stream(&format!("task/{task_id}"), &[task_seed, index])
    }

    pub fn rollout_stream(&self, step: u64, group: u64) -> StreamRng {
        self.stream("rollout", &[step, group])
    }

    pub fn sampler_stream(&self, step: u64) -> StreamRng {
        self.stream("sampler", &[step])
    }
}

/// Standalone seeded generator for places with no experiment context.
pub fn seeded(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::Rng64;

/// Even, disjoint assignment of sample indices to participants.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShardPlan {
    participant_count: usize,
    assignment: Vec<usize>,
    order: Vec<usize>,
    seed: u64,
}

/// Seeded shuffle, then round-robin: the sample at shuffled position `p` goes
/// to participant `p mod N`.
pub fn shard(ds: &Dataset, participants: usize, seed: u64) -> Result<ShardPlan> {
    ShardPlan::new(ds.len(), participants, seed)
}

impl ShardPlan {
    pub fn new(samples: usize, participants: usize, seed: u64) -> Result<Self> {
        if participants == 0 {
            return Err(Error::Config("participant count must be at least 1".into()));
        }
        if participants > samples {
            return Err(Error::TooManyShards {
                shards: participants,
                samples,
            });
        }
        let order = Rng64::new(seed).permutation(samples);
        let mut assignment = vec![0; samples];
        for (pos, &idx) in order.iter().enumerate() {
            assignment[idx] = pos % participants;
        }
        Ok(Self {
            participant_count: participants,
            assignment,
            order,
            seed,
        })
    }

    pub fn participant_count(&self) -> usize {
        self.participant_count
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Participant owning each sample index.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Indices held by participant `p`, in shuffled order.
    pub fn shard_indices(&self, p: usize) -> Vec<usize> {
        self.order
            .iter()
            .skip(p)
            .step_by(self.participant_count)
            .copied()
            .collect()
    }

    pub fn shard_sizes(&self) -> Vec<usize> {
        let n = self.assignment.len();
        (0..self.participant_count)
            .map(|p| n / self.participant_count + usize::from(p < n % self.participant_count))
            .collect()
    }

    pub fn split(&self, ds: &Dataset) -> Vec<Dataset> {
        assert_eq!(
            ds.len(),
            self.assignment.len(),
            "plan built for another dataset"
        );
        (0..self.participant_count)
            .map(|p| ds.subset(&self.shard_indices(p)))
            .collect()
    }
}

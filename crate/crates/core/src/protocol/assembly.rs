//! Building the coordinator's training set from received shards.
//!
//! Samples from all sessions are pooled and then ordered by the SHA-256
//! digest of their wire bytes (`f32` values then the `u16` label). The
//! resulting order depends only on the multiset of samples received. It is
//! unrelated to which session sent a sample or when, so no participant
//! identity survives assembly.

use sha2::{Digest, Sha256};

use crate::datasets::Dataset;
use crate::error::{Error, Result};

/// One session's samples as they arrived on the wire.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReceivedShard {
    pub values: Vec<f32>,
    pub labels: Vec<u16>,
}

impl ReceivedShard {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn append(&mut self, values: &[f32], labels: &[u16]) {
        self.values.extend_from_slice(values);
        self.labels.extend_from_slice(labels);
    }
}

pub fn assemble(shards: Vec<ReceivedShard>, k: usize, class_count: usize) -> Result<Dataset> {
    let total: usize = shards.iter().map(ReceivedShard::len).sum();
    if total == 0 {
        return Err(Error::EmptyDataset("no samples were received".into()));
    }
    let mut keyed: Vec<([u8; 32], &[f32], u16)> = Vec::with_capacity(total);
    for shard in &shards {
        if shard.values.len() != shard.labels.len() * k {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values", shard.labels.len() * k),
                actual: shard.values.len().to_string(),
            });
        }
        for (x, &y) in shard.values.chunks_exact(k).zip(&shard.labels) {
            let mut h = Sha256::new();
            for v in x {
                h.update(v.to_le_bytes());
            }
            h.update(y.to_le_bytes());
            keyed.push((h.finalize().into(), x, y));
        }
    }
    // Equal digests mean equal bytes, so ties cannot change the result.
    keyed.sort_unstable_by_key(|e| e.0);
    let mut values = Vec::with_capacity(total * k);
    let mut labels = Vec::with_capacity(total);
    for (_, x, y) in keyed {
        values.extend(x.iter().map(|&v| v as f64));
        labels.push(y as usize);
    }
    Dataset::new(
        k,
        values,
        labels,
        class_count,
        format!("assembled(n={total})"),
    )
}

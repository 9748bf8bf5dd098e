use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::entity::{renumber, Step};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("cannot omit {k} of {len} steps; the final step always stays")]
pub struct OmissionError {
    pub k: usize,
    pub len: usize,
}

/// Sorted positions to drop: `k` distinct indices below `len - 1`, drawn
/// uniformly with a seeded ChaCha8 generator.
pub fn omission_plan(len: usize, k: usize, seed: u64) -> Result<Vec<usize>, OmissionError> {
    if k >= len {
        return Err(OmissionError { k, len });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, len - 1, k).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Drops `k` non-final steps and renumbers the rest from 1.
pub fn synthesize_omissions(steps: &[Step], k: usize, seed: u64) -> Result<Vec<Step>, OmissionError> {
    let drop = omission_plan(steps.len(), k, seed)?;
    let mut kept: Vec<Step> = steps
        .iter()
        .enumerate()
        .filter(|(i, _)| drop.binary_search(i).is_err())
        .map(|(_, s)| s.clone())
        .collect();
    renumber(&mut kept);
    Ok(kept)
}

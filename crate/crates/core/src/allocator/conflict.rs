//! Probability that the conflicted UEs draw distinct beams from a top-m list.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConflictEstimate {
    /// `m! / (m^(K-gamma) (m-K+gamma)!)`
    pub probability: f64,
    /// `K - gamma > m`: some conflict is unavoidable and the probability is 0.
    pub certain_conflict: bool,
}

fn conflicted_count(k: usize, gamma: usize) -> Result<usize> {
    k.checked_sub(gamma)
        .ok_or_else(|| Error::domain(format!("gamma {gamma} exceeds the UE count {k}")))
}

/// Closed form, computed as a running product so large `m` stays finite.
pub fn conflict_probability(m: usize, k: usize, gamma: usize) -> Result<ConflictEstimate> {
    let d = conflicted_count(k, gamma)?;
    if d > m {
        return Ok(ConflictEstimate {
            probability: 0.0,
            certain_conflict: true,
        });
    }
    let probability = (0..d).map(|i| (m - i) as f64 / m as f64).product();
    Ok(ConflictEstimate {
        probability,
        certain_conflict: false,
    })
}

/// Fraction of `trials` in which `K - gamma` independent uniform draws from
/// `0..m` are pairwise distinct.
pub fn conflict_probability_mc(m: usize, k: usize, gamma: usize, trials: u64, seed: u64) -> Result<f64> {
    let d = conflicted_count(k, gamma)?;
    if trials == 0 {
        return Err(Error::domain("need at least one trial"));
    }
    if m == 0 {
        return Ok(if d == 0 { 1.0 } else { 0.0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = vec![0u64; m];
    let mut hits = 0u64;
    for trial in 1..=trials {
        let distinct = (0..d).all(|_| {
            let j = rng.random_range(0..m);
            std::mem::replace(&mut seen[j], trial) != trial
        });
        if distinct {
            hits += 1;
        }
    }
    Ok(hits as f64 / trials as f64)
}

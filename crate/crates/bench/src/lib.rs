//! Fixtures shared by the benchmarks.

use rankcode::harness::random_chunks;
use rankcode::quantizer::Codebook;
use rankcode::{build_memory, seeded_rng, IndexChunk, RankMemory};

/// Memory over `count` random chunks of length `t` drawn from 64 indices.
pub fn random_memory(count: usize, t: usize, seed: u64) -> (RankMemory, Vec<IndexChunk>) {
    let chunks = random_chunks(count, t, 64, &mut seeded_rng(seed));
    (build_memory(&chunks).expect("non-empty corpus"), chunks)
}

/// Deterministic frames that wander over the unit cube.
pub fn frames(count: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| (0..dim).map(|k| ((i * (k + 3)) as f64 * 0.013).sin()).collect())
        .collect()
}

pub fn codebook(neurons: usize, dim: usize) -> Codebook {
    Codebook::from_rows(frames(neurons * 7, dim).into_iter().step_by(7).collect(), 0).expect("valid rows")
}

//! Structural versus surface novelty.
//!
//! A chunk is a rank-level violation when its rank pattern never occurred in
//! training; the memory then has no exact recall (best score below 1). It is
//! index-level novel when the memory cannot hand back its exact index
//! sequence. Rank-layer entropy tracks the spread of the rank-layer response.

use std::collections::HashSet;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chunk::{rank_transform, IndexChunk, RankChunk};
use crate::error::{invalid, Error, Result};
use crate::memory::RankMemory;
use crate::rng::{derive_seed, seeded_rng, SeededRng};

/// Recall scores below `1 - RANK_VIOLATION_EPSILON` count as "no exact match".
pub const RANK_VIOLATION_EPSILON: f64 = 1e-9;

/// Shannon entropy (nats) of the L1-normalized rank-layer response to `chunk`.
pub fn chunk_entropy(chunk: &[usize], memory: &RankMemory) -> Result<f64> {
    Ok(shannon_entropy(&memory.rank_activations(chunk)?))
}

/// Entropy in nats of `weights / sum(weights)`. Zero weights contribute nothing.
pub fn shannon_entropy(weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    weights
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| {
            let p = w / total;
            -p * p.ln()
        })
        .sum()
}

pub fn nats_to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyProfile {
    pub values: Vec<f64>,
}

impl EntropyProfile {
    /// Position of the highest entropy (first one on ties).
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.values.iter().enumerate() {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len().max(1) as f64
    }

    /// `max - min` over the profile.
    pub fn spread(&self) -> f64 {
        let max = self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = self.values.iter().cloned().fold(f64::INFINITY, f64::min);
        if self.values.is_empty() {
            0.0
        } else {
            max - min
        }
    }

    /// Positions whose entropy exceeds the profile mean by more than `margin`.
    pub fn deviants(&self, margin: f64) -> Vec<usize> {
        let threshold = self.mean() + margin;
        self.values.iter().enumerate().filter(|(_, &v)| v > threshold).map(|(i, _)| i).collect()
    }
}

pub fn entropy_profile(chunks: &[IndexChunk], memory: &RankMemory) -> Result<EntropyProfile> {
    let values = chunks.iter().map(|c| chunk_entropy(c, memory)).collect::<Result<_>>()?;
    Ok(EntropyProfile { values })
}

/// True when the chunk's rank pattern has no exact match in the memory.
pub fn detect_rank_violation(chunk: &[usize], memory: &RankMemory) -> Result<bool> {
    Ok(memory.retrieve(chunk)?.score < 1.0 - RANK_VIOLATION_EPSILON)
}

/// True when recall does not return the chunk's own index sequence.
pub fn detect_index_novelty(chunk: &[usize], memory: &RankMemory) -> Result<bool> {
    let r = memory.retrieve(chunk)?;
    Ok(memory.entry(r.winner_id).values() != chunk)
}

/// Per-chunk novelty readout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChunkNovelty {
    pub position: usize,
    pub chunk: IndexChunk,
    /// 1-based rank pattern.
    pub rank_pattern: Vec<usize>,
    pub entropy: f64,
    pub winner_id: usize,
    pub winner_score: f64,
    pub rank_violation: bool,
    pub index_novelty: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoveltyReport {
    pub chunks: Vec<ChunkNovelty>,
    /// Position with the highest entropy.
    pub entropy_peak: Option<usize>,
}

pub fn novelty_report(chunks: &[IndexChunk], memory: &RankMemory) -> Result<NoveltyReport> {
    let mut rows = Vec::with_capacity(chunks.len());
    for (position, chunk) in chunks.iter().enumerate() {
        let rank = rank_transform(chunk)?;
        let r = memory.retrieve(chunk)?;
        rows.push(ChunkNovelty {
            position,
            chunk: chunk.clone(),
            rank_pattern: rank.one_based(),
            entropy: chunk_entropy(chunk, memory)?,
            winner_id: r.winner_id,
            winner_score: r.score,
            rank_violation: r.score < 1.0 - RANK_VIOLATION_EPSILON,
            index_novelty: memory.entry(r.winner_id) != chunk,
        });
    }
    let profile = EntropyProfile { values: rows.iter().map(|r| r.entropy).collect() };
    Ok(NoveltyReport { entropy_peak: profile.argmax(), chunks: rows })
}

/// Shuffles `chunk` until its rank pattern is one the memory has never
/// stored, giving up after `max_attempts` shuffles.
pub fn unseen_rank_shuffle(
    chunk: &[usize],
    memory: &RankMemory,
    max_attempts: usize,
    rng: &mut SeededRng,
) -> Result<IndexChunk> {
    let mut values = chunk.to_vec();
    for _ in 0..max_attempts {
        values.shuffle(rng);
        if !memory.contains_pattern(&rank_transform(&values)?) {
            return Ok(IndexChunk::new(values));
        }
    }
    invalid(format!("no unseen rank pattern found in {max_attempts} shuffles"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub n_swaps: usize,
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn new(n_swaps: usize, seed: u64) -> Self {
        Self { n_swaps, seed }
    }

    fn check(&self, len: usize) -> Result<()> {
        if self.n_swaps < 2 || self.n_swaps > len {
            return invalid(format!("n_swaps must lie in 2..={len}, got {}", self.n_swaps));
        }
        Ok(())
    }
}

/// A deranged chunk together with the positions that were moved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Derangement {
    pub chunk: IndexChunk,
    pub positions: Vec<usize>,
}

const DERANGE_ATTEMPTS: usize = 10_000;

/// Picks `spec.n_swaps` positions and permutes their values so that none of
/// them keeps its original value.
pub fn derange(chunk: &[usize], spec: PerturbationSpec) -> Result<Derangement> {
    derange_with(chunk, spec.n_swaps, &mut seeded_rng(spec.seed))
}

pub fn derange_with(chunk: &[usize], n_swaps: usize, rng: &mut SeededRng) -> Result<Derangement> {
    PerturbationSpec::new(n_swaps, 0).check(chunk.len())?;
    if !can_derange(chunk, n_swaps) {
        return invalid(format!(
            "no {n_swaps} positions of {chunk:?} admit a derangement"
        ));
    }
    for _ in 0..DERANGE_ATTEMPTS {
        let mut positions = index::sample(rng, chunk.len(), n_swaps).into_vec();
        positions.sort_unstable();
        let original: Vec<usize> = positions.iter().map(|&p| chunk[p]).collect();
        if !values_derangeable(&original) {
            continue;
        }
        let mut moved = original.clone();
        loop {
            moved.shuffle(rng);
            if moved.iter().zip(&original).all(|(a, b)| a != b) {
                break;
            }
        }
        let mut out = chunk.to_vec();
        for (&p, &v) in positions.iter().zip(&moved) {
            out[p] = v;
        }
        return Ok(Derangement { chunk: IndexChunk::new(out), positions });
    }
    Err(Error::InvalidInput(format!("derangement of {chunk:?} not found")))
}

// A permutation with no value left in place exists iff no value fills more
// than half of the slots.
fn values_derangeable(values: &[usize]) -> bool {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let max_run = sorted.chunk_by(|a, b| a == b).map(<[usize]>::len).max().unwrap_or(0);
    2 * max_run <= values.len()
}

fn can_derange(chunk: &[usize], n: usize) -> bool {
    let mut sorted = chunk.to_vec();
    sorted.sort_unstable();
    let cap = n / 2;
    sorted.chunk_by(|a, b| a == b).map(|run| run.len().min(cap)).sum::<usize>() >= n
}

/// Ground truth and detector verdicts for one perturbation trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub n_swaps: usize,
    pub source_id: usize,
    pub perturbed: IndexChunk,
    pub index_novel: bool,
    pub rank_novel: bool,
    pub index_flagged: bool,
    pub rank_flagged: bool,
}

/// One row of the false-positive / false-negative table, in percent of trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub n_swaps: usize,
    pub trials: usize,
    pub index_fp_pct: f64,
    pub index_fn_pct: f64,
    pub rank_fp_pct: f64,
    pub rank_fn_pct: f64,
    pub index_novel: usize,
    pub index_flagged: usize,
    pub rank_novel: usize,
    pub rank_flagged: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionTable {
    pub rows: Vec<DetectionRow>,
    pub outcomes: Vec<TrialOutcome>,
}

impl DetectionTable {
    /// Trials where a novel chunk went unflagged at the index level.
    pub fn index_false_negatives(&self) -> impl Iterator<Item = &TrialOutcome> {
        self.outcomes.iter().filter(|o| o.index_novel && !o.index_flagged)
    }
}

#[derive(Clone, Debug)]
pub struct DetectionConfig {
    pub swaps: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    /// Worker threads; 1 runs inline.
    pub jobs: usize,
}

/// Perturbs randomly drawn training chunks and tabulates how often each
/// detector disagrees with ground truth. Trials use independent seeded
/// streams, so the table does not depend on `jobs`.
pub fn evaluate_detection(memory: &RankMemory, config: &DetectionConfig) -> Result<DetectionTable> {
    if config.trials == 0 {
        return invalid("need at least one trial");
    }
    for &n in &config.swaps {
        PerturbationSpec::new(n, 0).check(memory.chunk_length())?;
    }
    let stored: HashSet<&IndexChunk> = memory.repository().iter().collect();
    let patterns: HashSet<RankChunk> =
        memory.repository().iter().map(|c| rank_transform(c)).collect::<Result<_>>()?;

    let run = |n_swaps: usize, trial: usize| -> Result<TrialOutcome> {
        let stream = (n_swaps as u64) << 32 | trial as u64;
        let mut rng = seeded_rng(derive_seed(config.seed, stream));
        let (source_id, moved) = perturb_random_entry(memory, n_swaps, &mut rng)?;
        let perturbed = moved.chunk;
        let retrieval = memory.retrieve(&perturbed)?;
        Ok(TrialOutcome {
            n_swaps,
            source_id,
            index_novel: !stored.contains(&perturbed),
            rank_novel: !patterns.contains(&rank_transform(&perturbed)?),
            index_flagged: memory.entry(retrieval.winner_id) != &perturbed,
            rank_flagged: retrieval.score < 1.0 - RANK_VIOLATION_EPSILON,
            perturbed,
        })
    };

    let tasks: Vec<(usize, usize)> = config
        .swaps
        .iter()
        .flat_map(|&n| (0..config.trials).map(move |t| (n, t)))
        .collect();
    let outcomes: Vec<TrialOutcome> = if config.jobs <= 1 {
        tasks.iter().map(|&(n, t)| run(n, t)).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
        pool.install(|| tasks.par_iter().map(|&(n, t)| run(n, t)).collect::<Result<_>>())?
    };

    let rows = config
        .swaps
        .iter()
        .map(|&n| tabulate(n, outcomes.iter().filter(|o| o.n_swaps == n)))
        .collect();
    Ok(DetectionTable { rows, outcomes })
}

fn perturb_random_entry(
    memory: &RankMemory,
    n_swaps: usize,
    rng: &mut SeededRng,
) -> Result<(usize, Derangement)> {
    for _ in 0..DERANGE_ATTEMPTS {
        let id = rng.gen_range(0..memory.len());
        let source = memory.entry(id);
        if can_derange(source, n_swaps) {
            return Ok((id, derange_with(source, n_swaps, rng)?));
        }
    }
    invalid(format!("no stored chunk admits a {n_swaps}-derangement"))
}

fn tabulate<'a>(n_swaps: usize, outcomes: impl Iterator<Item = &'a TrialOutcome>) -> DetectionRow {
    let mut row = DetectionRow {
        n_swaps,
        trials: 0,
        index_fp_pct: 0.0,
        index_fn_pct: 0.0,
        rank_fp_pct: 0.0,
        rank_fn_pct: 0.0,
        index_novel: 0,
        index_flagged: 0,
        rank_novel: 0,
        rank_flagged: 0,
    };
    let (mut ifp, mut ifn, mut rfp, mut rfn) = (0usize, 0usize, 0usize, 0usize);
    for o in outcomes {
        row.trials += 1;
        row.index_novel += usize::from(o.index_novel);
        row.index_flagged += usize::from(o.index_flagged);
        row.rank_novel += usize::from(o.rank_novel);
        row.rank_flagged += usize::from(o.rank_flagged);
        ifp += usize::from(o.index_flagged && !o.index_novel);
        ifn += usize::from(!o.index_flagged && o.index_novel);
        rfp += usize::from(o.rank_flagged && !o.rank_novel);
        rfn += usize::from(!o.rank_flagged && o.rank_novel);
    }
    let pct = |k: usize| 100.0 * k as f64 / row.trials.max(1) as f64;
    row.index_fp_pct = pct(ifp);
    row.index_fn_pct = pct(ifn);
    row.rank_fp_pct = pct(rfp);
    row.rank_fn_pct = pct(rfn);
    row
}

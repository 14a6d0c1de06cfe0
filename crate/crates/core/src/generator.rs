//! Autoregressive completion against a [`RankMemory`].
//!
//! Completing a chunk is a guess-and-recall loop. Unknown positions are
//! filled with uniformly drawn placeholder indices, the filled chunk is
//! recalled, and the recalled exemplar becomes the candidate. A candidate is
//! accepted when its activation beats the best so far; the activation counts
//! how many of the known indices the candidate reproduces and adds its recall
//! score, normalized to `(0, 1]`. The loop stops once the accepted candidate
//! carries every known index, or when the iteration budget runs out.
//!
//! Generation slides this over a stream: the last `t - S` indices are the
//! known context and the final `S` indices of each completed chunk are
//! appended.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chunk::{rank_transform, IndexChunk, IndexSequence, RankChunk};
use crate::error::{invalid, Error, Result};
use crate::memory::{RankMemory, Retrieval};
use crate::rng::{seeded_rng, SeededRng};

pub const DEFAULT_MAX_ITERS: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub chunk_length: usize,
    pub stride: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub total_length: usize,
    /// Placeholders are drawn from `0..alphabet_size`.
    pub alphabet_size: usize,
}

impl GenerationConfig {
    pub fn new(chunk_length: usize, alphabet_size: usize, total_length: usize, seed: u64) -> Self {
        Self {
            chunk_length,
            stride: 1,
            max_iters: DEFAULT_MAX_ITERS,
            seed,
            total_length,
            alphabet_size,
        }
    }

    /// Length of the known context handed to each completion step.
    pub fn context_length(&self) -> usize {
        self.chunk_length - self.stride
    }

    pub fn validate(&self) -> Result<()> {
        if self.chunk_length < 2 {
            return invalid(format!("chunk length must be at least 2, got {}", self.chunk_length));
        }
        if self.stride == 0 || self.stride >= self.chunk_length {
            return invalid(format!(
                "stride must lie in 1..{}, got {}",
                self.chunk_length, self.stride
            ));
        }
        if self.max_iters == 0 {
            return invalid("max_iters must be at least 1");
        }
        if self.alphabet_size == 0 {
            return invalid("alphabet size must be at least 1");
        }
        Ok(())
    }

    fn check_memory(&self, memory: &RankMemory) -> Result<()> {
        if memory.chunk_length() != self.chunk_length {
            return invalid(format!(
                "memory stores chunks of length {}, config expects {}",
                memory.chunk_length(),
                self.chunk_length
            ));
        }
        Ok(())
    }

    fn check_indices(&self, values: &[usize]) -> Result<()> {
        if let Some(v) = values.iter().find(|&&v| v >= self.alphabet_size) {
            return invalid(format!("index {v} outside alphabet of size {}", self.alphabet_size));
        }
        Ok(())
    }
}

/// One accepted candidate inside a completion step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Acceptance {
    pub iteration: usize,
    pub winner_id: usize,
    pub recall_score: f64,
    /// Activation that admitted the candidate; strictly increasing within a step.
    pub score: f64,
    /// Mismatches against the target when one is known, otherwise against
    /// the known positions.
    pub hamming_error: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based step number.
    pub step: usize,
    pub iterations_used: usize,
    pub accepted: IndexChunk,
    pub best_score: f64,
    pub converged: bool,
    pub error_vs_target: Option<usize>,
    pub acceptances: Vec<Acceptance>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub steps: Vec<StepRecord>,
}

impl GenerationTrace {
    pub fn converged(&self) -> bool {
        self.steps.iter().all(|s| s.converged)
    }

    pub fn total_iterations(&self) -> usize {
        self.steps.iter().map(|s| s.iterations_used).sum()
    }
}

/// Result of a run of the completion loop.
#[derive(Clone, Debug, PartialEq)]
pub struct Refinement {
    pub chunk: IndexChunk,
    pub record: StepRecord,
    /// Hamming error of the best candidate after each iteration (only when a
    /// target was supplied).
    pub error_curve: Vec<usize>,
}

#[derive(Clone, Copy)]
struct Best {
    winner_id: usize,
    score: f64,
    matched: usize,
}

/// Runs the completion loop on a template whose `None` slots are unknown.
pub fn refine(
    template: &[Option<usize>],
    memory: &RankMemory,
    alphabet_size: usize,
    max_iters: usize,
    target: Option<&[usize]>,
    rng: &mut SeededRng,
) -> Result<Refinement> {
    if template.len() != memory.chunk_length() {
        return invalid(format!(
            "template has length {}, memory expects {}",
            template.len(),
            memory.chunk_length()
        ));
    }
    if alphabet_size == 0 || max_iters == 0 {
        return invalid("alphabet size and iteration budget must be positive");
    }
    if memory.is_empty() {
        return Err(Error::RetrievalFailure("memory is empty".into()));
    }
    if let Some(t) = target {
        if t.len() != template.len() {
            return invalid("target length differs from template length");
        }
    }
    let known: Vec<(usize, usize)> =
        template.iter().enumerate().filter_map(|(k, v)| v.map(|v| (k, v))).collect();

    let mut query: Vec<usize> = template.iter().map(|v| v.unwrap_or(0)).collect();
    let mut memo: HashMap<RankChunk, Retrieval> = HashMap::new();
    let mut best: Option<Best> = None;
    let mut acceptances = Vec::new();
    let mut error_curve = Vec::new();
    let mut iterations_used = 0;

    let error_of = |candidate: &[usize], matched: usize| match target {
        Some(t) => hamming(candidate, t),
        None => known.len() - matched,
    };

    for iteration in 1..=max_iters {
        iterations_used = iteration;
        for (slot, fixed) in query.iter_mut().zip(template) {
            if fixed.is_none() {
                *slot = rng.gen_range(0..alphabet_size);
            }
        }
        let rank = rank_transform(&query)?;
        let retrieval = match memo.get(&rank) {
            Some(r) => *r,
            None => {
                let r = memory.retrieve_rank(&rank)?;
                memo.insert(rank, r);
                r
            }
        };
        let candidate = memory.entry(retrieval.winner_id);
        let matched = known.iter().filter(|&&(k, v)| candidate[k] == v).count();
        let score = (matched as f64 + retrieval.score) / (known.len() as f64 + 1.0);
        if best.is_none_or(|b| score > b.score) {
            best = Some(Best { winner_id: retrieval.winner_id, score, matched });
            acceptances.push(Acceptance {
                iteration,
                winner_id: retrieval.winner_id,
                recall_score: retrieval.score,
                score,
                hamming_error: error_of(candidate, matched),
            });
        }
        let b = best.expect("first iteration always accepts");
        if let Some(t) = target {
            error_curve.push(hamming(memory.entry(b.winner_id), t));
        }
        if b.matched == known.len() {
            break;
        }
    }

    let b = best.ok_or_else(|| Error::RetrievalFailure("no candidate accepted".into()))?;
    let chunk = memory.entry(b.winner_id).clone();
    let record = StepRecord {
        step: 1,
        iterations_used,
        best_score: b.score,
        converged: b.matched == known.len(),
        error_vs_target: target.map(|t| hamming(&chunk, t)),
        accepted: chunk.clone(),
        acceptances,
    };
    Ok(Refinement { chunk, record, error_curve })
}

/// Completes a chunk whose first `t - S` indices are `known`.
pub fn complete_chunk(
    known: &[usize],
    memory: &RankMemory,
    config: &GenerationConfig,
) -> Result<Refinement> {
    let mut rng = seeded_rng(config.seed);
    complete_with_rng(known, memory, config, None, &mut rng)
}

fn complete_with_rng(
    known: &[usize],
    memory: &RankMemory,
    config: &GenerationConfig,
    target: Option<&[usize]>,
    rng: &mut SeededRng,
) -> Result<Refinement> {
    config.validate()?;
    config.check_memory(memory)?;
    if known.len() != config.context_length() {
        return invalid(format!(
            "expected {} known indices, got {}",
            config.context_length(),
            known.len()
        ));
    }
    config.check_indices(known)?;
    let template: Vec<Option<usize>> = known
        .iter()
        .map(|&v| Some(v))
        .chain(std::iter::repeat_n(None, config.stride))
        .collect();
    refine(&template, memory, config.alphabet_size, config.max_iters, target, rng)
}

/// Generated stream plus its trace. `failed_step` is set when a step ran out
/// of iterations; generation stops there without appending anything for it.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerationOutcome {
    pub sequence: IndexSequence,
    pub trace: GenerationTrace,
    pub failed_step: Option<usize>,
}

impl GenerationOutcome {
    pub fn into_result(self) -> Result<(IndexSequence, GenerationTrace)> {
        match self.failed_step {
            Some(step) => Err(Error::NonConvergence {
                step,
                max_iters: self.trace.steps.last().map_or(0, |s| s.iterations_used),
            }),
            None => Ok((self.sequence, self.trace)),
        }
    }
}

/// Slides the completion window from `seed_indices` until
/// `config.total_length` indices exist. `target`, when given, is the sequence
/// the run is expected to reproduce and only feeds the trace's error columns.
pub fn generate(
    seed_indices: &[usize],
    memory: &RankMemory,
    config: &GenerationConfig,
    target: Option<&[usize]>,
) -> Result<GenerationOutcome> {
    config.validate()?;
    config.check_memory(memory)?;
    let context = config.context_length();
    if seed_indices.len() != context {
        return invalid(format!("expected {context} seed indices, got {}", seed_indices.len()));
    }
    if config.total_length < config.chunk_length {
        return invalid(format!(
            "total length {} is shorter than the chunk length {}",
            config.total_length, config.chunk_length
        ));
    }
    config.check_indices(seed_indices)?;

    let mut rng = seeded_rng(config.seed);
    let mut sequence = seed_indices.to_vec();
    let mut trace = GenerationTrace::default();
    let mut step = 0;
    while sequence.len() < config.total_length {
        step += 1;
        let start = sequence.len() - context;
        let window_target = target.and_then(|t| {
            let end = start + config.chunk_length;
            (t.len() >= end).then(|| &t[start..end])
        });
        let known = sequence[start..].to_vec();
        let mut done = complete_with_rng(&known, memory, config, window_target, &mut rng)?;
        done.record.step = step;
        let converged = done.record.converged;
        trace.steps.push(done.record);
        if !converged {
            return Ok(GenerationOutcome { sequence, trace, failed_step: Some(step) });
        }
        let room = config.total_length - sequence.len();
        sequence.extend(done.chunk[context..].iter().take(room));
    }
    Ok(GenerationOutcome { sequence, trace, failed_step: None })
}

/// Generates `config.total_length` indices from `seed_indices`, failing with
/// [`Error::NonConvergence`] if any step exhausts its budget.
pub fn generate_sequence(
    seed_indices: &[usize],
    memory: &RankMemory,
    config: &GenerationConfig,
) -> Result<(IndexSequence, GenerationTrace)> {
    generate(seed_indices, memory, config, None)?.into_result()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PilotResult {
    /// Hamming error of the best candidate after each iteration.
    pub error_curve: Vec<usize>,
    pub converged: bool,
    pub iterations_used: usize,
    pub final_error: usize,
}

impl PilotResult {
    /// Running minimum of the error curve.
    pub fn best_so_far(&self) -> Vec<usize> {
        let mut low = usize::MAX;
        self.error_curve
            .iter()
            .map(|&e| {
                low = low.min(e);
                low
            })
            .collect()
    }

    /// Error curve extended to `len` iterations by holding its last value.
    pub fn padded(&self, len: usize) -> Vec<usize> {
        let mut curve = self.error_curve.clone();
        let last = curve.last().copied().unwrap_or(self.final_error);
        curve.resize(len.max(curve.len()), last);
        curve
    }
}

/// Reconstructs `target` from the positions marked in `known_mask`, the rest
/// being redrawn every iteration.
pub fn pilot_reconstruction(
    target: &[usize],
    known_mask: &[bool],
    memory: &RankMemory,
    config: &GenerationConfig,
) -> Result<PilotResult> {
    if target.len() != config.chunk_length || known_mask.len() != config.chunk_length {
        return invalid(format!(
            "target and mask must have length {}",
            config.chunk_length
        ));
    }
    if config.max_iters == 0 || config.alphabet_size == 0 {
        return invalid("alphabet size and iteration budget must be positive");
    }
    config.check_memory(memory)?;
    config.check_indices(target)?;
    let template: Vec<Option<usize>> =
        target.iter().zip(known_mask).map(|(&v, &k)| k.then_some(v)).collect();
    let mut rng = seeded_rng(config.seed);
    let out = refine(&template, memory, config.alphabet_size, config.max_iters, Some(target), &mut rng)?;
    Ok(PilotResult {
        final_error: out.record.error_vs_target.unwrap_or(0),
        converged: out.record.converged,
        iterations_used: out.record.iterations_used,
        error_curve: out.error_curve,
    })
}

fn hamming(a: &[usize], b: &[usize]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

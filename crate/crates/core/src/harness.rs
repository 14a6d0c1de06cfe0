//! Synthetic corpora, compression growth statistics and the corpus builders
//! shared by the experiment runner and the acceptance tests.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chunk::{rank_transform, IndexChunk, IndexSequence, RankChunk, WindowSpec};
use crate::error::{invalid, Result};
use crate::memory::RankMemory;
use crate::novelty::unseen_rank_shuffle;
use crate::rng::{seeded_rng, SeededRng};

/// Frames per minute of audio at a 23 ms hop.
pub const FRAMES_PER_MINUTE: f64 = 2609.0;

pub fn frames_to_minutes(frames: usize) -> f64 {
    frames as f64 / FRAMES_PER_MINUTE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub motif_count: usize,
    pub motif_length: usize,
    pub alphabet_size: usize,
    pub repetitions: usize,
    /// Probability that a position is overwritten with a uniform random index.
    pub noise_rate: f64,
    pub seed: u64,
}

/// Random motifs over `0..alphabet_size`, concatenated in random order.
pub fn synth_corpus(config: &SynthConfig) -> Result<IndexSequence> {
    Ok(synth_with_motifs(config)?.0)
}

/// Same as [`synth_corpus`] but also returns the motifs and the order they were laid down in.
pub fn synth_with_motifs(config: &SynthConfig) -> Result<(IndexSequence, Vec<Vec<usize>>, Vec<usize>)> {
    if config.motif_count == 0 || config.motif_length == 0 || config.alphabet_size == 0 || config.repetitions == 0 {
        return invalid("synthetic corpus parameters must be positive");
    }
    if !(0.0..=1.0).contains(&config.noise_rate) {
        return invalid(format!("noise rate must lie in [0, 1], got {}", config.noise_rate));
    }
    let mut rng = seeded_rng(config.seed);
    let motifs: Vec<Vec<usize>> = (0..config.motif_count)
        .map(|_| (0..config.motif_length).map(|_| rng.gen_range(0..config.alphabet_size)).collect())
        .collect();
    let order: Vec<usize> = (0..config.repetitions).map(|_| rng.gen_range(0..config.motif_count)).collect();
    let mut seq = Vec::with_capacity(config.repetitions * config.motif_length);
    for &m in &order {
        seq.extend_from_slice(&motifs[m]);
    }
    if config.noise_rate > 0.0 {
        for v in seq.iter_mut() {
            if rng.gen_bool(config.noise_rate) {
                *v = rng.gen_range(0..config.alphabet_size);
            }
        }
    }
    Ok((seq, motifs, order))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressionRow {
    pub frame_count: usize,
    pub chunk_length: usize,
    pub window_count: usize,
    /// Every input frame is a distinct real-valued vector, so this tracks `frame_count`.
    pub unique_frame_count: usize,
    pub unique_index_chunk_count: usize,
    pub unique_rank_chunk_count: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CompressionTable {
    pub rows: Vec<CompressionRow>,
    /// Requested prefixes that were longer than the data.
    pub clamped: Vec<usize>,
}

impl CompressionTable {
    /// Rows for one chunk length, in prefix order.
    pub fn curve(&self, chunk_length: usize) -> Vec<&CompressionRow> {
        self.rows.iter().filter(|r| r.chunk_length == chunk_length).collect()
    }
}

/// Distinct frame / index-chunk / rank-chunk counts for each prefix of
/// `indices` and each chunk length. Prefixes beyond the data are clamped.
pub fn compression_stats(
    indices: &[usize],
    chunk_lengths: &[usize],
    prefixes: &[usize],
    stride: usize,
) -> Result<CompressionTable> {
    if indices.is_empty() {
        return invalid("index sequence is empty");
    }
    if prefixes.is_empty() {
        return invalid("no prefixes requested");
    }
    let mut table = CompressionTable::default();
    let mut points: Vec<usize> = Vec::with_capacity(prefixes.len());
    for &p in prefixes {
        if p > indices.len() {
            table.clamped.push(p);
        }
        points.push(p.min(indices.len()));
    }
    points.sort_unstable();
    points.dedup();

    for &t in chunk_lengths {
        WindowSpec::new(t, stride)?;
        let mut index_seen: HashSet<&[usize]> = HashSet::new();
        let mut rank_seen: HashSet<RankChunk> = HashSet::new();
        let mut start = 0;
        let mut windows = 0;
        for &p in &points {
            while start + t <= p {
                let w = &indices[start..start + t];
                if index_seen.insert(w) {
                    rank_seen.insert(rank_transform(w)?);
                }
                windows += 1;
                start += stride;
            }
            table.rows.push(CompressionRow {
                frame_count: p,
                chunk_length: t,
                window_count: windows,
                unique_frame_count: p,
                unique_index_chunk_count: index_seen.len(),
                unique_rank_chunk_count: rank_seen.len(),
            });
        }
    }
    Ok(table)
}

/// `points` prefix lengths spaced evenly on a log scale, ending at `len`.
pub fn log_prefixes(len: usize, points: usize) -> Vec<usize> {
    if len == 0 || points == 0 {
        return Vec::new();
    }
    let lo = (len.min(100) as f64).ln();
    let hi = (len as f64).ln();
    let mut out: Vec<usize> = (0..points)
        .map(|i| {
            let f = if points == 1 { 1.0 } else { i as f64 / (points - 1) as f64 };
            (lo + f * (hi - lo)).exp().round() as usize
        })
        .collect();
    *out.last_mut().unwrap() = len;
    out.dedup();
    out
}

pub fn random_chunks(count: usize, chunk_length: usize, alphabet_size: usize, rng: &mut SeededRng) -> Vec<IndexChunk> {
    (0..count)
        .map(|_| IndexChunk::new((0..chunk_length).map(|_| rng.gen_range(0..alphabet_size)).collect()))
        .collect()
}

/// A walk whose stride-1 windows sit at the front of a training corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkCorpus {
    pub walk: IndexSequence,
    pub corpus: Vec<IndexChunk>,
}

/// Builds a walk of `walk_length` indices whose windows all have distinct
/// rank patterns, followed by `filler` random chunks. Fillers that share a
/// window's first `t - 1` indices but continue differently are dropped, so
/// every window is the only stored continuation of its own prefix.
pub fn walk_corpus(
    walk_length: usize,
    chunk_length: usize,
    alphabet_size: usize,
    filler: usize,
    seed: u64,
) -> Result<WalkCorpus> {
    let t = chunk_length;
    if t < 2 || walk_length < t {
        return invalid(format!("walk length {walk_length} cannot hold chunks of length {t}"));
    }
    let mut rng = seeded_rng(seed);
    let walk = 'outer: loop {
        let mut walk: Vec<usize> = (0..t - 1).map(|_| rng.gen_range(0..alphabet_size)).collect();
        let mut patterns = HashSet::new();
        while walk.len() < walk_length {
            let base = walk.len() + 1 - t;
            let fresh = (0..200).map(|_| rng.gen_range(0..alphabet_size)).find(|&v| {
                let mut w = walk[base..].to_vec();
                w.push(v);
                !patterns.contains(&rank_transform(&w).unwrap())
            });
            match fresh {
                Some(v) => {
                    walk.push(v);
                    patterns.insert(rank_transform(&walk[base..]).unwrap());
                }
                None => continue 'outer,
            }
        }
        break walk;
    };
    let mut corpus: Vec<IndexChunk> = walk.windows(t).map(|w| IndexChunk::new(w.to_vec())).collect();
    let prefixes: HashSet<&[usize]> = walk.windows(t).map(|w| &w[..t - 1]).collect();
    let windows: HashSet<&[usize]> = walk.windows(t).collect();
    let mut extra = Vec::with_capacity(filler);
    while extra.len() < filler {
        let c = random_chunks(1, t, alphabet_size, &mut rng).remove(0);
        if prefixes.contains(&c[..t - 1]) && !windows.contains(&c[..]) {
            continue;
        }
        extra.push(c);
    }
    corpus.extend(extra);
    Ok(WalkCorpus { walk, corpus })
}

/// Rank patterns whose first half holds either the lowest or the highest
/// `t / 2` ranks. They are closed under composition, so every stored chunk
/// sees the same multiset of rank-layer responses.
pub fn half_split_patterns(chunk_length: usize) -> Result<Vec<RankChunk>> {
    let t = chunk_length;
    if t < 2 || !t.is_multiple_of(2) {
        return invalid(format!("half-split patterns need an even chunk length, got {t}"));
    }
    let h = t / 2;
    let mut out = Vec::new();
    for low_first in [true, false] {
        for a in all_permutations(h) {
            for b in all_permutations(h) {
                let (lo, hi): (Vec<usize>, Vec<usize>) =
                    (a.clone(), b.iter().map(|r| r + h).collect());
                let ranks = if low_first { [lo, hi].concat() } else { [hi, lo].concat() };
                out.push(RankChunk::from_ranks(ranks)?);
            }
        }
    }
    Ok(out)
}

/// All permutations of `0..n`.
pub fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in all_permutations(n - 1) {
        for k in 0..=p.len() {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

/// An index chunk with rank pattern `rank`, built from distinct values below `alphabet_size`.
pub fn realize_pattern(rank: &RankChunk, alphabet_size: usize, rng: &mut SeededRng) -> Result<IndexChunk> {
    let t = rank.len();
    if alphabet_size < t {
        return invalid(format!("alphabet of {alphabet_size} cannot hold {t} distinct values"));
    }
    let mut values = rand::seq::index::sample(rng, alphabet_size, t).into_vec();
    values.sort_unstable();
    Ok(IndexChunk::new(rank.ranks().iter().map(|&r| values[r]).collect()))
}

/// Every half-split pattern once, in random order, then `extra` further
/// random half-split chunks.
pub fn half_split_corpus(
    chunk_length: usize,
    alphabet_size: usize,
    extra: usize,
    rng: &mut SeededRng,
) -> Result<Vec<IndexChunk>> {
    let mut patterns = half_split_patterns(chunk_length)?;
    patterns.shuffle(rng);
    let mut corpus = Vec::with_capacity(patterns.len() + extra);
    for p in &patterns {
        corpus.push(realize_pattern(p, alphabet_size, rng)?);
    }
    for _ in 0..extra {
        let p = patterns.choose(rng).unwrap();
        corpus.push(realize_pattern(p, alphabet_size, rng)?);
    }
    Ok(corpus)
}

/// A stream of trained chunks with one chunk swapped for an unseen-rank shuffle.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviantStream {
    pub chunks: Vec<IndexChunk>,
    /// 0-based position of the deviant.
    pub deviant: usize,
}

pub fn deviant_stream(
    memory: &RankMemory,
    length: usize,
    deviant: usize,
    max_attempts: usize,
    rng: &mut SeededRng,
) -> Result<DeviantStream> {
    if deviant >= length {
        return invalid(format!("deviant position {deviant} outside a stream of {length}"));
    }
    let ids: Vec<usize> = (0..memory.len()).collect();
    let mut chunks: Vec<IndexChunk> =
        (0..length).map(|_| memory.entry(*ids.choose(rng).unwrap()).clone()).collect();
    chunks[deviant] = unseen_rank_shuffle(&chunks[deviant], memory, max_attempts, rng)?;
    Ok(DeviantStream { chunks, deviant })
}

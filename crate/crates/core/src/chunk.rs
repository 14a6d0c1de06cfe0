//! Index chunks, rank chunks and the sequence machinery that connects them.
//!
//! An index chunk is a length-`t` run of winner-neuron indices. Its rank chunk
//! keeps only the relative order of the elements: position `k` holds the rank
//! of `chunk[k]` under an ascending stable sort, so equal values are ranked by
//! order of appearance.

use std::collections::HashSet;
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A flat stream of winner indices, one per feature frame.
pub type IndexSequence = Vec<usize>;

/// Default chunk length.
pub const DEFAULT_CHUNK_LENGTH: usize = 6;
/// Default window stride.
pub const DEFAULT_STRIDE: usize = 1;

/// A length-`t` sequence of prototype indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndexChunk(Vec<usize>);

impl IndexChunk {
    pub fn new(values: Vec<usize>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[usize] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }

    /// True when every value is a valid index for an alphabet of `alphabet` prototypes.
    pub fn fits_alphabet(&self, alphabet: usize) -> bool {
        self.0.iter().all(|&v| v < alphabet)
    }

    pub fn is_constant(&self) -> bool {
        self.0.windows(2).all(|w| w[0] == w[1])
    }

    pub fn rank(&self) -> Result<RankChunk> {
        rank_transform(self)
    }
}

impl Deref for IndexChunk {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for IndexChunk {
    fn from(values: Vec<usize>) -> Self {
        Self(values)
    }
}

impl fmt::Display for IndexChunk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_joined(f, self.0.iter().copied())
    }
}

/// A permutation of `0..t` giving the ascending rank of each chunk position.
///
/// Ranks are stored 0-based; [`RankChunk::one_based`] is the form shown to people.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RankChunk(Vec<usize>);

impl RankChunk {
    /// Wraps `ranks`, checking that it is a permutation of `0..len`.
    pub fn from_ranks(ranks: Vec<usize>) -> Result<Self> {
        if ranks.is_empty() {
            return invalid("rank chunk must not be empty");
        }
        let mut seen = vec![false; ranks.len()];
        for &r in &ranks {
            if r >= ranks.len() || seen[r] {
                return invalid(format!("{ranks:?} is not a permutation of 0..{}", ranks.len()));
            }
            seen[r] = true;
        }
        Ok(Self(ranks))
    }

    pub fn ranks(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|r| r + 1).collect()
    }

    /// The rank-modulated vector `1 / (rank + 1)` that both layers of the memory use.
    pub fn modulated(&self) -> Vec<f64> {
        self.0.iter().map(|&r| 1.0 / (r as f64 + 1.0)).collect()
    }
}

impl Deref for RankChunk {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl fmt::Display for RankChunk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_joined(f, self.0.iter().map(|r| r + 1))
    }
}

fn write_joined(f: &mut fmt::Formatter<'_>, values: impl Iterator<Item = usize>) -> fmt::Result {
    for (i, v) in values.enumerate() {
        if i > 0 {
            f.write_str(",")?;
        }
        write!(f, "{v}")?;
    }
    Ok(())
}

/// Chunk length and stride used to cut a stream into overlapping windows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub chunk_length: usize,
    pub stride: usize,
}

impl WindowSpec {
    pub fn new(chunk_length: usize, stride: usize) -> Result<Self> {
        let spec = Self { chunk_length, stride };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.chunk_length < 2 {
            return invalid(format!("chunk length must be at least 2, got {}", self.chunk_length));
        }
        if self.stride == 0 || self.stride > self.chunk_length {
            return invalid(format!(
                "stride must lie in 1..={}, got {}",
                self.chunk_length, self.stride
            ));
        }
        Ok(())
    }

    /// Number of windows a stream of `len` indices yields.
    pub fn window_count(&self, len: usize) -> usize {
        if len < self.chunk_length {
            0
        } else {
            (len - self.chunk_length) / self.stride + 1
        }
    }
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { chunk_length: DEFAULT_CHUNK_LENGTH, stride: DEFAULT_STRIDE }
    }
}

/// Ranks the elements of `chunk` with a double stable argsort.
///
/// Equal values keep their order of appearance, so the earlier one gets the
/// lower rank.
pub fn rank_transform(chunk: &[usize]) -> Result<RankChunk> {
    if chunk.is_empty() {
        return invalid("cannot rank an empty chunk");
    }
    Ok(RankChunk(rank_of(chunk)))
}

pub(crate) fn rank_of(chunk: &[usize]) -> Vec<usize> {
    // first argsort; sort_by_key is stable
    let mut order: Vec<usize> = (0..chunk.len()).collect();
    order.sort_by_key(|&i| chunk[i]);
    // second argsort of a permutation is its inverse
    let mut ranks = vec![0; chunk.len()];
    for (rank, &pos) in order.iter().enumerate() {
        ranks[pos] = rank;
    }
    ranks
}

/// Cuts `indices` into windows of `spec.chunk_length`, starting every `spec.stride` indices.
pub fn window_sequence(indices: &[usize], spec: WindowSpec) -> Result<Vec<IndexChunk>> {
    spec.validate()?;
    if indices.len() < spec.chunk_length {
        return invalid(format!(
            "sequence of length {} is shorter than the chunk length {}",
            indices.len(),
            spec.chunk_length
        ));
    }
    Ok(indices
        .windows(spec.chunk_length)
        .step_by(spec.stride)
        .map(|w| IndexChunk(w.to_vec()))
        .collect())
}

/// Drops chunks whose values are all identical, keeping the rest in order.
pub fn filter_constant_chunks(chunks: Vec<IndexChunk>) -> Vec<IndexChunk> {
    chunks.into_iter().filter(|c| !c.is_constant()).collect()
}

/// Distinct rank patterns of `chunks`, in order of first appearance.
pub fn unique_rank_patterns(chunks: &[IndexChunk]) -> Result<Vec<RankChunk>> {
    let mut seen = HashSet::new();
    let mut patterns = Vec::new();
    for chunk in chunks {
        let rank = rank_transform(chunk)?;
        if seen.insert(rank.clone()) {
            patterns.push(rank);
        }
    }
    Ok(patterns)
}

/// Removes repeated chunks, keeping the first occurrence of each.
pub fn dedup_chunks(chunks: Vec<IndexChunk>) -> Vec<IndexChunk> {
    let mut seen = HashSet::new();
    chunks.into_iter().filter(|c| seen.insert(c.clone())).collect()
}

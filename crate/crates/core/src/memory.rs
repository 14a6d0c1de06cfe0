//! Rank-order associative memory.
//!
//! The rank layer holds one neuron per distinct training rank pattern, with
//! fixed weights `1 / (rank + 1)`. The recall layer stores, for every
//! training chunk, its projection onto the rank layer; a query is answered by
//! the stored chunk whose projection lies closest (Euclidean) to the query's
//! own projection, scored `1 / (1 + distance)`.
//!
//! Training chunks that share a rank pattern have bit-identical recall rows,
//! so rows are kept once per pattern and shared by the repository entries
//! that use them.

use std::collections::HashMap;

use crate::chunk::{rank_transform, IndexChunk, RankChunk};
use crate::error::{invalid, Error, Result};

/// Outcome of a recall query: the winning repository entry and its score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Retrieval {
    pub winner_id: usize,
    pub score: f64,
}

#[derive(Clone, Debug)]
pub struct RankMemory {
    chunk_length: usize,
    unique_ranks: Vec<RankChunk>,
    /// U×t, row j = modulated unique_ranks[j]
    w_rank: Vec<f64>,
    /// U×U, row j = projection of pattern j onto the rank layer
    projections: Vec<f64>,
    repository: Vec<IndexChunk>,
    /// pattern id of each repository entry
    entry_pattern: Vec<usize>,
    /// lowest repository index per pattern
    first_entry: Vec<usize>,
    lookup: HashMap<RankChunk, usize>,
}

impl RankMemory {
    /// Builds the memory from training chunks, keeping them (duplicates
    /// included) as the repository in the given order.
    pub fn build(training: Vec<IndexChunk>) -> Result<Self> {
        let Some(first) = training.first() else {
            return invalid("cannot build a memory from an empty training set");
        };
        let t = first.len();
        if t == 0 {
            return invalid("training chunks must not be empty");
        }
        let mut unique_ranks = Vec::new();
        let mut lookup = HashMap::new();
        let mut entry_pattern = Vec::with_capacity(training.len());
        let mut first_entry = Vec::new();
        for (i, chunk) in training.iter().enumerate() {
            if chunk.len() != t {
                return invalid(format!(
                    "training chunk {i} has length {}, expected {t}",
                    chunk.len()
                ));
            }
            let rank = rank_transform(chunk)?;
            let id = *lookup.entry(rank.clone()).or_insert_with(|| {
                unique_ranks.push(rank);
                first_entry.push(i);
                unique_ranks.len() - 1
            });
            entry_pattern.push(id);
        }

        let w_rank: Vec<f64> = unique_ranks.iter().flat_map(|r| r.modulated()).collect();
        let mut memory = Self {
            chunk_length: t,
            unique_ranks,
            w_rank,
            projections: Vec::new(),
            repository: training,
            entry_pattern,
            first_entry,
            lookup,
        };
        let projections: Vec<f64> = memory
            .unique_ranks
            .iter()
            .flat_map(|r| memory.project(&r.modulated()))
            .collect();
        memory.projections = projections;
        Ok(memory)
    }

    /// Rebuilds a memory from persisted parts, checking that the stored
    /// pattern list agrees with the repository.
    pub fn from_parts(
        chunk_length: usize,
        unique_ranks: Vec<RankChunk>,
        repository: Vec<IndexChunk>,
    ) -> Result<Self> {
        let memory = Self::build(repository)?;
        if memory.chunk_length != chunk_length {
            return invalid(format!(
                "header declares chunk length {chunk_length}, repository uses {}",
                memory.chunk_length
            ));
        }
        if memory.unique_ranks != unique_ranks {
            return invalid("stored rank patterns do not match the repository");
        }
        Ok(memory)
    }

    pub fn chunk_length(&self) -> usize {
        self.chunk_length
    }

    /// T, the number of stored training chunks.
    pub fn len(&self) -> usize {
        self.repository.len()
    }

    pub fn is_empty(&self) -> bool {
        self.repository.is_empty()
    }

    /// U, the number of rank-layer neurons.
    pub fn pattern_count(&self) -> usize {
        self.unique_ranks.len()
    }

    pub fn unique_ranks(&self) -> &[RankChunk] {
        &self.unique_ranks
    }

    pub fn repository(&self) -> &[IndexChunk] {
        &self.repository
    }

    pub fn entry(&self, id: usize) -> &IndexChunk {
        &self.repository[id]
    }

    /// Largest index value stored, if any.
    pub fn max_index(&self) -> Option<usize> {
        self.repository.iter().flat_map(|c| c.iter().copied()).max()
    }

    pub fn pattern_id(&self, rank: &RankChunk) -> Option<usize> {
        self.lookup.get(rank).copied()
    }

    pub fn contains_pattern(&self, rank: &RankChunk) -> bool {
        self.lookup.contains_key(rank)
    }

    /// Pattern id used by repository entry `id`.
    pub fn entry_pattern(&self, id: usize) -> usize {
        self.entry_pattern[id]
    }

    /// Lowest repository index holding pattern `pattern`.
    pub fn first_entry(&self, pattern: usize) -> usize {
        self.first_entry[pattern]
    }

    /// Row `j` of the rank-layer weights.
    pub fn w_rank_row(&self, j: usize) -> &[f64] {
        let t = self.chunk_length;
        &self.w_rank[j * t..(j + 1) * t]
    }

    /// Row `i` of the recall-layer weights (the stored projection of training chunk `i`).
    pub fn w_recall_row(&self, i: usize) -> &[f64] {
        self.projection(self.entry_pattern[i])
    }

    fn projection(&self, pattern: usize) -> &[f64] {
        let u = self.unique_ranks.len();
        &self.projections[pattern * u..(pattern + 1) * u]
    }

    /// Materializes the full T×U recall matrix, row-major.
    pub fn w_recall_matrix(&self) -> Vec<f64> {
        (0..self.len()).flat_map(|i| self.w_recall_row(i).to_vec()).collect()
    }

    // Σ_k modulated[k] · w_rank[j,k] for every rank neuron j
    fn project(&self, modulated: &[f64]) -> Vec<f64> {
        (0..self.unique_ranks.len())
            .map(|j| {
                self.w_rank_row(j)
                    .iter()
                    .zip(modulated)
                    .fold(0.0, |acc, (w, m)| acc + m * w)
            })
            .collect()
    }

    fn check_length(&self, chunk: &[usize]) -> Result<()> {
        if chunk.len() != self.chunk_length {
            return invalid(format!(
                "chunk has length {}, memory expects {}",
                chunk.len(),
                self.chunk_length
            ));
        }
        Ok(())
    }

    /// Rank-layer response (length U) to `chunk`.
    pub fn rank_activations(&self, chunk: &[usize]) -> Result<Vec<f64>> {
        self.check_length(chunk)?;
        Ok(self.rank_activations_for(&rank_transform(chunk)?))
    }

    pub fn rank_activations_for(&self, rank: &RankChunk) -> Vec<f64> {
        self.project(&rank.modulated())
    }

    /// Rank-layer responses for a batch of chunks, one row per chunk.
    pub fn rank_activation_matrix(&self, chunks: &[IndexChunk]) -> Result<Vec<Vec<f64>>> {
        chunks.iter().map(|c| self.rank_activations(c)).collect()
    }

    /// Recall score of each distinct stored projection (length U).
    pub fn pattern_recall_for(&self, rank: &RankChunk) -> Vec<f64> {
        let y = self.rank_activations_for(rank);
        (0..self.unique_ranks.len())
            .map(|j| 1.0 / (1.0 + euclidean(self.projection(j), &y)))
            .collect()
    }

    /// Recall-layer response (length T) to `chunk`.
    pub fn recall_activations(&self, chunk: &[usize]) -> Result<Vec<f64>> {
        self.check_length(chunk)?;
        let per_pattern = self.pattern_recall_for(&rank_transform(chunk)?);
        Ok(self.entry_pattern.iter().map(|&j| per_pattern[j]).collect())
    }

    /// Winner-take-all recall; ties go to the lowest repository index.
    pub fn retrieve(&self, chunk: &[usize]) -> Result<Retrieval> {
        self.check_length(chunk)?;
        self.retrieve_rank(&rank_transform(chunk)?)
    }

    /// Recall for a query already reduced to its rank pattern. The result
    /// depends on nothing else, which callers may use to memoize.
    pub fn retrieve_rank(&self, rank: &RankChunk) -> Result<Retrieval> {
        if rank.len() != self.chunk_length {
            return invalid(format!(
                "rank pattern has length {}, memory expects {}",
                rank.len(),
                self.chunk_length
            ));
        }
        if self.unique_ranks.is_empty() {
            return Err(Error::RetrievalFailure("memory holds no patterns".into()));
        }
        // A stored pattern sits at distance exactly zero from itself and at a
        // strictly positive distance from every other pattern.
        if let Some(&j) = self.lookup.get(rank) {
            return Ok(Retrieval { winner_id: self.first_entry[j], score: 1.0 });
        }
        let scores = self.pattern_recall_for(rank);
        let mut best: Option<Retrieval> = None;
        for (j, &score) in scores.iter().enumerate() {
            let candidate = Retrieval { winner_id: self.first_entry[j], score };
            best = match best {
                Some(b) if b.score > score => Some(b),
                Some(b) if b.score == score && b.winner_id < candidate.winner_id => Some(b),
                _ => Some(candidate),
            };
        }
        best.ok_or_else(|| Error::RetrievalFailure("no recall candidate".into()))
    }
}

pub fn build_memory(training: &[IndexChunk]) -> Result<RankMemory> {
    RankMemory::build(training.to_vec())
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chunks(rows: &[&[usize]]) -> Vec<IndexChunk> {
        rows.iter().map(|r| IndexChunk::new(r.to_vec())).collect()
    }

    fn random_corpus(seed: u64, count: usize, t: usize, alphabet: usize) -> Vec<IndexChunk> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| IndexChunk::new((0..t).map(|_| rng.gen_range(0..alphabet)).collect()))
            .collect()
    }

    // scans every recall row of the full T×U matrix
    fn brute_force_retrieve(memory: &RankMemory, chunk: &[usize]) -> Retrieval {
        let y = memory.rank_activations(chunk).unwrap();
        let u = memory.pattern_count();
        let w = memory.w_recall_matrix();
        let mut best = Retrieval { winner_id: 0, score: f64::NEG_INFINITY };
        for i in 0..memory.len() {
            let row = &w[i * u..(i + 1) * u];
            let d: f64 = row.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let score = 1.0 / (1.0 + d);
            if score > best.score {
                best = Retrieval { winner_id: i, score };
            }
        }
        best
    }

    #[test]
    fn single_ascending_chunk() {
        let m = build_memory(&chunks(&[&[1, 2, 3]])).unwrap();
        assert_eq!(m.pattern_count(), 1);
        assert_eq!(m.w_rank_row(0), &[1.0, 0.5, 1.0 / 3.0]);
        assert_relative_eq!(m.w_recall_row(0)[0], 1.0 + 0.25 + 1.0 / 9.0, epsilon = 1e-12);
        assert_relative_eq!(m.w_recall_row(0)[0], 49.0 / 36.0, epsilon = 1e-12);
    }

    #[test]
    fn shared_pattern_shares_projection() {
        let m = build_memory(&chunks(&[&[1, 2, 3], &[10, 20, 30]])).unwrap();
        assert_eq!(m.pattern_count(), 1);
        assert_eq!(m.len(), 2);
        assert_eq!(m.w_recall_row(0), m.w_recall_row(1));
    }

    #[test]
    fn descending_rotation_weights() {
        let m = build_memory(&chunks(&[&[3, 1, 2]])).unwrap();
        assert_eq!(m.unique_ranks()[0].ranks(), &[2, 0, 1]);
        assert_eq!(m.w_rank_row(0), &[1.0 / 3.0, 1.0, 0.5]);
    }

    #[test]
    fn rank_activation_examples() {
        let m = build_memory(&chunks(&[&[1, 2, 3]])).unwrap();
        assert_relative_eq!(m.rank_activations(&[4, 5, 6]).unwrap()[0], 49.0 / 36.0, epsilon = 1e-12);
        assert_relative_eq!(m.rank_activations(&[9, 5, 1]).unwrap()[0], 11.0 / 12.0, epsilon = 1e-12);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let m = build_memory(&chunks(&[&[1, 2, 3]])).unwrap();
        assert!(m.rank_activations(&[1, 2]).is_err());
        assert!(m.recall_activations(&[1, 2, 3, 4]).is_err());
        assert!(m.retrieve(&[1]).is_err());
    }

    #[test]
    fn build_rejects_empty_and_ragged() {
        assert!(build_memory(&[]).is_err());
        assert!(build_memory(&chunks(&[&[1, 2, 3], &[1, 2]])).is_err());
    }

    #[test]
    fn trained_chunk_recalls_itself() {
        let m = build_memory(&chunks(&[&[1, 2, 3], &[3, 2, 1], &[2, 3, 1]])).unwrap();
        let r = m.retrieve(&[3, 2, 1]).unwrap();
        assert_eq!(r, Retrieval { winner_id: 1, score: 1.0 });
        let recall = m.recall_activations(&[2, 3, 1]).unwrap();
        assert_eq!(recall[2], 1.0);
        assert!(recall[0] < 1.0 && recall[1] < 1.0);
    }

    #[test]
    fn rank_ties_go_to_lowest_index() {
        let corpus = chunks(&[&[1, 2, 3], &[9, 1, 4], &[4, 1, 9], &[0, 0, 1], &[5, 6, 7]]);
        let m = build_memory(&corpus).unwrap();
        let r = m.retrieve(&[100, 200, 300]).unwrap();
        assert_eq!(r.winner_id, 0);
        assert_eq!(r.score, 1.0);
        let recall = m.recall_activations(&[100, 200, 300]).unwrap();
        assert_eq!(recall[0], recall[4]);
    }

    #[test]
    fn unseen_pattern_scores_below_one() {
        let m = build_memory(&chunks(&[&[1, 2, 3], &[1, 3, 2]])).unwrap();
        let r = m.retrieve(&[3, 2, 1]).unwrap();
        assert!(r.score < 1.0);
        assert!(m.recall_activations(&[3, 2, 1]).unwrap().iter().all(|&v| v < 1.0));
        assert_eq!(r, brute_force_retrieve(&m, &[3, 2, 1]));
    }

    #[test]
    fn retrieve_matches_brute_force_scan() {
        for seed in 0..5 {
            let corpus = random_corpus(seed, 200, 5, 9);
            let m = build_memory(&corpus).unwrap();
            let queries = random_corpus(seed + 100, 200, 5, 12);
            for q in queries.iter().chain(corpus.iter().take(20)) {
                assert_eq!(m.retrieve(q).unwrap(), brute_force_retrieve(&m, q), "query {q:?}");
            }
        }
    }

    #[test]
    fn recall_rows_agree_with_rank_activations() {
        let corpus = random_corpus(7, 500, 6, 64);
        let m = build_memory(&corpus).unwrap();
        for (i, c) in corpus.iter().enumerate() {
            let y = m.rank_activations(c).unwrap();
            for (a, b) in y.iter().zip(m.w_recall_row(i)) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn exact_match_law_on_ternary_alphabet() {
        let all: Vec<Vec<usize>> = (0..27).map(|n| vec![n / 9, (n / 3) % 3, n % 3]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let corpus: Vec<IndexChunk> = (0..rng.gen_range(1..6))
                .map(|_| IndexChunk::new(all[rng.gen_range(0..27)].clone()))
                .collect();
            let m = build_memory(&corpus).unwrap();
            for q in &all {
                let best = m.recall_activations(q).unwrap().into_iter().fold(0.0, f64::max);
                let known = m.contains_pattern(&rank_transform(q).unwrap());
                assert_eq!(best == 1.0, known, "query {q:?}");
            }
        }
    }

    #[test]
    fn winner_set_is_rank_invariant() {
        let corpus = random_corpus(11, 300, 6, 20);
        let m = build_memory(&corpus).unwrap();
        for q in random_corpus(12, 100, 6, 20) {
            let mapped: Vec<usize> = q.iter().map(|v| 3 * v + 7).collect();
            assert_eq!(m.retrieve(&q).unwrap().winner_id, m.retrieve(&mapped).unwrap().winner_id);
        }
    }

    #[test]
    fn from_parts_checks_patterns() {
        let corpus = chunks(&[&[1, 2, 3], &[3, 2, 1]]);
        let m = build_memory(&corpus).unwrap();
        let ok = RankMemory::from_parts(3, m.unique_ranks().to_vec(), corpus.clone());
        assert!(ok.is_ok());
        let reversed: Vec<RankChunk> = m.unique_ranks().iter().rev().cloned().collect();
        assert!(RankMemory::from_parts(3, reversed, corpus.clone()).is_err());
        assert!(RankMemory::from_parts(4, m.unique_ranks().to_vec(), corpus).is_err());
    }
}

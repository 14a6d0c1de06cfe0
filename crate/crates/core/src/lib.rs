//! Rank-order coding for index sequences.

pub mod chunk;
pub mod error;
pub mod generator;
pub mod harness;
pub mod io;
pub mod memory;
pub mod novelty;
pub mod quantizer;
pub mod rng;

pub use chunk::{
    filter_constant_chunks, rank_transform, unique_rank_patterns, window_sequence, IndexChunk,
    IndexSequence, RankChunk, WindowSpec,
};
pub use error::{Error, Result};
pub use generator::{
    complete_chunk, generate, generate_sequence, pilot_reconstruction, GenerationConfig,
    GenerationOutcome, GenerationTrace, PilotResult, StepRecord,
};
pub use harness::{compression_stats, synth_corpus, CompressionRow, CompressionTable, SynthConfig};
pub use memory::{build_memory, RankMemory, Retrieval};
pub use novelty::{
    chunk_entropy, derange, detect_index_novelty, detect_rank_violation, entropy_profile,
    evaluate_detection, DetectionConfig, DetectionRow, DetectionTable, EntropyProfile,
    NoveltyReport, PerturbationSpec,
};
pub use quantizer::{decode, encode, topology_score, train_som, Codebook, SomConfig};
pub use rng::{derive_seed, seeded_rng, SeededRng};

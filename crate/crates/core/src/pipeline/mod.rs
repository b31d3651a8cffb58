//! Slot packing, split cosine matching and score extraction.
//!
//! Indices are 0-based throughout. A shard-local enrollee index `u` lives
//! in set `u / B`, block `u mod B`; its score ends up in packed output
//! `j / s` at slot `((u mod B) * s + (j mod s) + 1) mod S`, where `j` is the
//! position of its set among the occupied sets.

mod layout;
mod ops;
mod plan;
mod result;
mod store;

pub use layout::{
    make_masks, pack_set_plain, prepare_enroll_vector, prepare_query_vector, MaskSet, PackingLayout,
};
pub use ops::{
    compress, conventional_match, decrypt_all, expand_query, match_set, rotate_composed, rotate_pow2,
};
pub use plan::{
    conventional_rotation_steps, expected_query_counts, match_query, match_query_conventional,
    rotation_steps, MatchOutput,
};
pub use result::{decide, extract_scores, MatchResult};
pub use store::EnrollmentStore;

use thiserror::Error;

use crate::error::HeError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("feature vector has zero norm")]
    ZeroVector,
    #[error("feature vector has dimension {got}, expected {expected}")]
    DimMismatch { got: usize, expected: usize },
    #[error("enrollment slot {0} is already occupied")]
    SlotOccupied(usize),
    #[error("index {index} exceeds capacity {capacity}")]
    CapacityExceeded { index: usize, capacity: usize },
    #[error("ciphertext at level {got}, expected {expected}")]
    LevelMismatch { expected: usize, got: usize },
    #[error("query ciphertext is not periodic in the feature dimension")]
    NotPeriodic,
    #[error("{stage} produced level {got}, expected {expected}")]
    LevelSchedule {
        stage: &'static str,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    He(#[from] HeError),
}

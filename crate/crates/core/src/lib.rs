//! Core library for irforge: a toolkit that searches LLVM optimization-flag
//! subsets whose output IR stays structurally close to the original source.
//!
//! The pipeline, end to end:
//!
//! 1. [`corpus`] ingests a labeled directory of C programs.
//! 2. [`compile`] drives an external frontend (`IRFORGE_CC`) and IR optimizer
//!    (`IRFORGE_OPT`) with a content-addressed cache.
//! 3. [`irgraph`] / [`srcgraph`] turn textual IR and C source into CFGs over a
//!    shared coarse node-kind alphabet.
//! 4. [`kernel`] scores CFG pairs with a normalized shortest-path kernel.
//! 5. [`vocab`] counts statements that fall outside the -O0 baseline
//!    vocabulary (OOV).
//! 6. [`fitness`] composes kernel similarity and the OOV ratio into the GA
//!    objective; [`ga`] runs the evolutionary search with a top-K archive.
//! 7. [`embed`] validates the payoff: feature-hashed embeddings trained with
//!    a triplet loss, scored by MAP@R / AP retrieval metrics.
//! 8. [`ablate`] measures per-flag potency by leave-one-out deltas.

pub mod ablate;
pub mod compile;
pub mod corpus;
pub mod embed;
pub mod fitness;
pub mod ga;
pub mod graph;
pub mod irgraph;
pub mod kernel;
pub mod srcgraph;
pub mod vocab;
pub mod workspace;

/// Hex-encoded SHA-256, the digest used for content addressing throughout.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

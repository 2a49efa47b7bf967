//! Synthetic ground-truth embedding worlds.
//!
//! A world fixes a vocabulary of subject latents, a caption template pool,
//! and a known mapping G from (pooled text, mean subject, edge-or-zero) to
//! the target image embedding. G consumes pooled quantities while the prior
//! sees the full interleaved sequence, so convergence means the prior
//! learned both the pooling and the mapping. Everything regenerates
//! bit-identically from the spec.

mod eval;
mod gen;
mod world;

pub use eval::{mse_norm, oracle_eval, retrieval_top1, OracleMetrics, DEFAULT_POOL};
pub use gen::{caption_sequence, gen_dataset, gen_samples, sample_to_sequence, sample_to_train, Split, SynthSample};
pub use world::{gen_world, MapKind, MappingG, World, WorldSpec};

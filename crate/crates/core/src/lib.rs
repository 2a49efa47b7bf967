//! Desk-scale embedding-space prior for subject-conditioned text-to-image mapping.
//!
//! The crate is organized around a small dense-tensor engine with reverse-mode
//! differentiation ([`tensorcore`]), a compact transformer prior that maps
//! interleaved text/subject/edge embeddings to a target image embedding
//! ([`prior`]), the projection + contrastive training objective ([`objective`]),
//! a deterministic training loop ([`train`]), and the surrounding tooling:
//! dataset filtering and interleaving ([`dataprep`]), embedding-vector
//! geometry and interpolation ([`embedspace`]), synthetic ground-truth worlds
//! ([`synthworld`]) and evaluation metrics ([`evalkit`]).
//!
//! All randomness derives from a single seed via [`seedstream`]; with the
//! default 32-bit float mode every run is bit-reproducible, including
//! checkpoint resume.

pub mod dataprep;
pub mod embedspace;
pub mod error;
pub mod evalkit;
pub mod objective;
pub mod par;
pub mod prior;
pub mod seedstream;
pub mod synthworld;
pub mod tensorcore;
pub mod train;

pub use error::{Error, Result};
pub use tensorcore::FloatMode;

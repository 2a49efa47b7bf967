//! The transformer prior: interleaved text/subject/edge embeddings in, one
//! predicted image embedding out.
//!
//! The stack is a pre-norm bidirectional encoder over the projected slot
//! sequence, read out from a single learned query token appended last and
//! projected back to the io dimension. Internal width is n_heads×head_dim
//! with learned input/output projections to and from the (wider) io space;
//! there are no time-embedding parameters anywhere. Linear layers are
//! bias-free; normalization carries the affine parameters.

mod checkpoint;
mod config;
mod forward;
mod params;

pub use checkpoint::{load_params, save_params, read_tensor_section, write_tensor_section};
pub use config::{param_count, PriorConfig};
pub(crate) use forward::record_forward;
pub use forward::{forward, forward_graph, ForwardGraph, PriorOutput};
pub use params::{init_params, PriorParams};

pub(crate) use checkpoint::{check_shapes, decode_header, encode_header, params_as_sorted};

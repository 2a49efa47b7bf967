//! Minimal dense-tensor engine with reverse-mode differentiation.
//!
//! Tensors are row-major rank-2 matrices (vectors are 1×D rows, scalars 1×1).
//! A [`Tape`] records every kernel application; [`Tape::backward`] replays the
//! record in reverse and accumulates gradients into the leaves. There is no
//! broadcasting except scalar [`Tape::scale`] — sequences are assembled with
//! explicit concat/slice kernels, which removes silent shape bugs.
//!
//! Float mode is global per run. `F64` computes everything in double
//! precision and exists for verification (finite-difference gradient checks
//! run in this mode). `F32`, the training default, accumulates matrix
//! products in single precision and rounds every other kernel output to the
//! nearest f32; all persistent state therefore stays exactly
//! f32-representable, which is what makes checkpoint round-trips lossless.

mod gradcheck;
mod kernels;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, GradCheckReport, ParamGradError};
pub use tape::{NodeId, Tape};
pub use tensor::{FloatMode, Tensor};

/// Epsilon inside the layer-norm variance denominator.
pub const LAYER_NORM_EPS: f64 = 1e-5;

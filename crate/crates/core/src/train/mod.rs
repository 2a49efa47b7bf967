//! Deterministic training loop: Adam with warmup + cosine learning rate,
//! per-sample edge-condition dropout, incremental CSV logging, and
//! byte-reproducible checkpointing with exact resume.
//!
//! Every stochastic decision derives from the run seed through
//! [`crate::seedstream`], keyed by purpose and step, so a resumed run
//! replays the exact batch order and dropout pattern of an uninterrupted
//! one.

mod adam;
mod batch;
mod checkpoint;
mod gradcheck;
mod run;
mod schedule;

pub use adam::{AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use batch::{batch_grads, batch_loss_single_tape, TrainSample};
pub use checkpoint::{load_any_params, read_train_checkpoint, write_train_checkpoint};
pub use gradcheck::{gradcheck_objective, toy_batch};
pub use run::{
    run_training, samples_from_manifest, train_in_memory, train_step, TrainConfig, TrainOutcome,
};
pub use schedule::{lr_at, ScheduleKind};

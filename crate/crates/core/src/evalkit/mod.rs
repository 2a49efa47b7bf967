//! Embedding-space evaluation: concept and composition alignment proxies,
//! the ablation driver, and report emission.
//!
//! The proxies measure the two tensions the prior trades off — staying
//! close to the reference subject versus following the caption — directly
//! in embedding space, which is the layer the prior controls. Pixel-level
//! metrics need generators and pretrained encoders and are out of scope.

mod ablation;
mod metrics;
mod report;

pub use ablation::{ablation_run, median, AblationSetup, AblationVariant};
pub use metrics::{composition_alignment, concept_alignment};
pub use report::{config_hash, report_emit, MetricsReport, ReportMetadata, CSV_HEADER};

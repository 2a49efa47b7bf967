//! Dataset construction on precomputed annotation records: rule-based
//! filtering, subject crop geometry, interleaved-sequence assembly, and the
//! manifest + embedding-cache formats.
//!
//! Upstream captioning, detection and segmentation are out of scope — records
//! arrive precomputed as JSON lines (schema in `docs/annotation_record.schema.json`);
//! the detector thresholds that produced them are recorded in the manifest
//! header for provenance only.

mod crop;
mod filter;
mod interleave;
mod manifest;
mod record;

pub use crop::{compute_crop, CropSpec, CROP_TARGET, PAD_WHITE};
pub use filter::{filter_record, filter_record_verbose, FilterOutcome, FilterRules, RuleId, Verdict};
pub use interleave::{
    build_interleaved, AuxKind, InterleaveOptions, InterleavedSequence, Slot, AUX_SLOTS,
};
pub use manifest::{
    manifest_stats, DatasetManifest, EmbeddingCache, EmbeddingRefs, ManifestHeader,
    ManifestRecord, ManifestStats, MANIFEST_FORMAT_VERSION,
};
pub use record::{read_records_jsonl, write_records_jsonl, AnnotationRecord, SubjectBox, SubjectSpan};

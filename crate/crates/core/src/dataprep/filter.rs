//! Rule-based record filtering.
//!
//! Rules apply in a fixed order: resolution → box count → identical-object
//! cap → per-subject (aspect ratio, logit, mask/box fraction, background
//! fraction) → surviving-subject count. Per-subject rules drop subjects
//! individually; image-level rules drop the whole record. Every threshold
//! is inclusive on the keep side.

use serde::{Deserialize, Serialize};

use super::record::AnnotationRecord;
use crate::error::Result;

/// Identifier of the rule that rejected a record or dropped a subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleId {
    MinResolution,
    BoxCountRange,
    MaxIdentical,
    RatioRange,
    MinLogit,
    MinMaskBoxFraction,
    MaxBgFraction,
    SubjectsPerImageRange,
}

impl RuleId {
    pub fn as_str(self) -> &'static str {
        match self {
            RuleId::MinResolution => "min_resolution",
            RuleId::BoxCountRange => "box_count_range",
            RuleId::MaxIdentical => "max_identical",
            RuleId::RatioRange => "ratio_range",
            RuleId::MinLogit => "min_logit",
            RuleId::MinMaskBoxFraction => "min_mask_box_fraction",
            RuleId::MaxBgFraction => "max_bg_fraction",
            RuleId::SubjectsPerImageRange => "subjects_per_image_range",
        }
    }
}

/// Thresholds of the filter pipeline. Keep semantics are inclusive: a value
/// exactly at a bound is kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterRules {
    /// Minimum width and height in pixels.
    pub min_resolution: u32,
    /// Allowed detected-box count per image, inclusive.
    pub box_count_range: [usize; 2],
    /// Most repetitions of one label in a caption.
    pub max_identical: u32,
    /// Allowed box min/max side ratio, inclusive.
    pub ratio_range: [f64; 2],
    /// Least detection logit kept.
    pub min_logit: f64,
    /// Least mask area as a fraction of the box area.
    pub min_mask_box_fraction: f64,
    /// Most white/background fraction inside the crop.
    pub max_bg_fraction: f64,
    /// Allowed surviving subjects per image, inclusive.
    pub subjects_per_image_range: [usize; 2],
}

impl Default for FilterRules {
    fn default() -> Self {
        FilterRules {
            min_resolution: 1024,
            box_count_range: [1, 8],
            max_identical: 6,
            ratio_range: [0.08, 0.7],
            min_logit: 0.3,
            min_mask_box_fraction: 0.40,
            max_bg_fraction: 0.10,
            subjects_per_image_range: [1, 4],
        }
    }
}

/// Accept with the surviving subject indices, or reject with the first
/// failed rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FilterOutcome {
    Accept { kept_subjects: Vec<usize> },
    Reject { rule: RuleId },
}

/// Verbose verdict: the outcome plus every failure observed, in application
/// order (`subject` is None for image-level rules).
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub outcome: FilterOutcome,
    pub failures: Vec<(Option<usize>, RuleId)>,
}

fn subject_failure(rec: &AnnotationRecord, i: usize, rules: &FilterRules) -> Option<RuleId> {
    let b = &rec.boxes[i];
    let ratio = b.aspect_ratio();
    if ratio < rules.ratio_range[0] || ratio > rules.ratio_range[1] {
        return Some(RuleId::RatioRange);
    }
    if b.logit < rules.min_logit {
        return Some(RuleId::MinLogit);
    }
    if rec.mask_area_px[i] / b.area() < rules.min_mask_box_fraction {
        return Some(RuleId::MinMaskBoxFraction);
    }
    if rec.mask_bg_fraction[i] > rules.max_bg_fraction {
        return Some(RuleId::MaxBgFraction);
    }
    None
}

/// Applies the full pipeline, reporting every failure.
pub fn filter_record_verbose(rec: &AnnotationRecord, rules: &FilterRules) -> Result<Verdict> {
    rec.validate()?;
    let mut failures: Vec<(Option<usize>, RuleId)> = Vec::new();

    if rec.width < rules.min_resolution || rec.height < rules.min_resolution {
        failures.push((None, RuleId::MinResolution));
        return Ok(Verdict { outcome: FilterOutcome::Reject { rule: RuleId::MinResolution }, failures });
    }
    let boxes = rec.boxes.len();
    if boxes < rules.box_count_range[0] || boxes > rules.box_count_range[1] {
        failures.push((None, RuleId::BoxCountRange));
        return Ok(Verdict { outcome: FilterOutcome::Reject { rule: RuleId::BoxCountRange }, failures });
    }
    if rec.identical_object_count > rules.max_identical {
        failures.push((None, RuleId::MaxIdentical));
        return Ok(Verdict { outcome: FilterOutcome::Reject { rule: RuleId::MaxIdentical }, failures });
    }

    let mut kept = Vec::new();
    for i in 0..rec.subject_count() {
        match subject_failure(rec, i, rules) {
            Some(rule) => failures.push((Some(i), rule)),
            None => kept.push(i),
        }
    }

    let range = rules.subjects_per_image_range;
    if kept.is_empty() {
        // The record died subject by subject: triage with the first rule
        // that dropped one.
        let rule = failures.first().map(|f| f.1).unwrap_or(RuleId::SubjectsPerImageRange);
        return Ok(Verdict { outcome: FilterOutcome::Reject { rule }, failures });
    }
    if kept.len() < range[0] || kept.len() > range[1] {
        failures.push((None, RuleId::SubjectsPerImageRange));
        return Ok(Verdict {
            outcome: FilterOutcome::Reject { rule: RuleId::SubjectsPerImageRange },
            failures,
        });
    }
    Ok(Verdict { outcome: FilterOutcome::Accept { kept_subjects: kept }, failures })
}

/// First-failure filtering; the cheap deterministic triage path.
pub fn filter_record(rec: &AnnotationRecord, rules: &FilterRules) -> Result<FilterOutcome> {
    Ok(filter_record_verbose(rec, rules)?.outcome)
}

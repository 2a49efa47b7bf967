use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Token span bound to one subject label; `token_end` is exclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSpan {
    pub label: String,
    pub token_start: usize,
    pub token_end: usize,
}

/// Detected bounding box in pixels with its detection logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub logit: f64,
}

impl SubjectBox {
    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// min(w, h) / max(w, h) ∈ (0, 1]; the shape statistic the ratio rule
    /// thresholds.
    pub fn aspect_ratio(&self) -> f64 {
        let (w, h) = (self.width(), self.height());
        w.min(h) / w.max(h)
    }
}

/// Per-image metadata consumed by the filter pipeline. The per-subject
/// arrays (`subject_spans`, `boxes`, `mask_area_px`, `mask_bg_fraction`)
/// are parallel and index-aligned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub caption_tokens: Vec<String>,
    pub subject_spans: Vec<SubjectSpan>,
    pub boxes: Vec<SubjectBox>,
    pub mask_area_px: Vec<f64>,
    pub mask_bg_fraction: Vec<f64>,
    pub identical_object_count: u32,
}

impl AnnotationRecord {
    pub fn subject_count(&self) -> usize {
        self.subject_spans.len()
    }

    /// Checks the record's own invariants; a breach is a malformed record,
    /// never a silent filter rejection.
    pub fn validate(&self) -> Result<()> {
        let fail = |detail: String| Error::MalformedRecord {
            image_id: self.image_id.clone(),
            detail,
        };
        let n = self.subject_spans.len();
        if self.boxes.len() != n || self.mask_area_px.len() != n || self.mask_bg_fraction.len() != n
        {
            return Err(fail(format!(
                "per-subject arrays disagree: {} spans, {} boxes, {} mask areas, {} bg fractions",
                n,
                self.boxes.len(),
                self.mask_area_px.len(),
                self.mask_bg_fraction.len()
            )));
        }
        for (i, b) in self.boxes.iter().enumerate() {
            if !(b.x0 >= 0.0 && b.x0 < b.x1 && b.x1 <= f64::from(self.width)) {
                return Err(fail(format!(
                    "box {i} x-extent [{}, {}] outside [0, {}]",
                    b.x0, b.x1, self.width
                )));
            }
            if !(b.y0 >= 0.0 && b.y0 < b.y1 && b.y1 <= f64::from(self.height)) {
                return Err(fail(format!(
                    "box {i} y-extent [{}, {}] outside [0, {}]",
                    b.y0, b.y1, self.height
                )));
            }
            if !b.logit.is_finite() {
                return Err(fail(format!("box {i} logit is not finite")));
            }
        }
        for (i, a) in self.mask_area_px.iter().enumerate() {
            if !a.is_finite() || *a < 0.0 {
                return Err(fail(format!("mask area {i} = {a} invalid")));
            }
        }
        for (i, f) in self.mask_bg_fraction.iter().enumerate() {
            if !f.is_finite() || !(0.0..=1.0).contains(f) {
                return Err(fail(format!("bg fraction {i} = {f} outside [0, 1]")));
            }
        }
        let mut spans: Vec<(usize, usize)> = self
            .subject_spans
            .iter()
            .map(|s| (s.token_start, s.token_end))
            .collect();
        spans.sort_unstable();
        for (i, s) in self.subject_spans.iter().enumerate() {
            if s.token_start >= s.token_end || s.token_end > self.caption_tokens.len() {
                return Err(fail(format!(
                    "span {i} [{}, {}) outside token range 0..{}",
                    s.token_start,
                    s.token_end,
                    self.caption_tokens.len()
                )));
            }
        }
        for w in spans.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(fail(format!(
                    "spans [{}, {}) and [{}, {}) overlap",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        Ok(())
    }

    /// Copy with only the indexed subjects kept (indices ascending).
    pub fn retain_subjects(&self, keep: &[usize]) -> AnnotationRecord {
        let mut out = self.clone();
        out.subject_spans = keep.iter().map(|&i| self.subject_spans[i].clone()).collect();
        out.boxes = keep.iter().map(|&i| self.boxes[i].clone()).collect();
        out.mask_area_px = keep.iter().map(|&i| self.mask_area_px[i]).collect();
        out.mask_bg_fraction = keep.iter().map(|&i| self.mask_bg_fraction[i]).collect();
        out
    }
}

/// Reads one record per line, validating each.
pub fn read_records_jsonl(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = std::io::BufReader::new(file);
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationRecord = serde_json::from_str(&line).map_err(|e| {
            Error::format(path.display().to_string(), format!("line {}: {e}", lineno + 1))
        })?;
        rec.validate()?;
        records.push(rec);
    }
    Ok(records)
}

pub fn write_records_jsonl(path: &Path, records: &[AnnotationRecord]) -> Result<()> {
    let mut file =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    for rec in records {
        let line = serde_json::to_string(rec)?;
        writeln!(file, "{line}").map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

#[cfg(test)]
pub(crate) fn passing_record(image_id: &str) -> AnnotationRecord {
    AnnotationRecord {
        image_id: image_id.to_string(),
        width: 1024,
        height: 1024,
        caption_tokens: ["a", "photo", "of", "a", "dog"].iter().map(|s| s.to_string()).collect(),
        subject_spans: vec![SubjectSpan { label: "dog".into(), token_start: 4, token_end: 5 }],
        boxes: vec![SubjectBox { x0: 100.0, y0: 100.0, x1: 500.0, y1: 300.0, logit: 0.35 }],
        mask_area_px: vec![40_000.0],
        mask_bg_fraction: vec![0.05],
        identical_object_count: 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_record_passes_validation() {
        passing_record("ok").validate().unwrap();
    }

    #[test]
    fn inverted_box_is_malformed() {
        let mut rec = passing_record("bad");
        rec.boxes[0].x1 = rec.boxes[0].x0 - 1.0;
        assert!(matches!(rec.validate(), Err(Error::MalformedRecord { .. })));
    }

    #[test]
    fn overlapping_spans_are_malformed() {
        let mut rec = passing_record("bad");
        rec.subject_spans = vec![
            SubjectSpan { label: "a".into(), token_start: 1, token_end: 3 },
            SubjectSpan { label: "b".into(), token_start: 2, token_end: 4 },
        ];
        rec.boxes.push(rec.boxes[0].clone());
        rec.mask_area_px.push(rec.mask_area_px[0]);
        rec.mask_bg_fraction.push(rec.mask_bg_fraction[0]);
        assert!(matches!(rec.validate(), Err(Error::MalformedRecord { .. })));
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let records = vec![passing_record("a"), passing_record("b")];
        write_records_jsonl(&path, &records).unwrap();
        let back = read_records_jsonl(&path).unwrap();
        assert_eq!(back, records);
    }
}

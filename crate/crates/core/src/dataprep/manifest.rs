//! Dataset manifest and embedding cache.
//!
//! Cache layout: 12-byte magic, little-endian u32 version, u32 count,
//! u32 dim, then count×dim little-endian f32 values. A JSON index file next
//! to the cache maps record id → first row. The manifest itself is a JSON
//! document referencing the cache by relative path and row offsets.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::record::AnnotationRecord;
use crate::error::{Error, Result};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;
const CACHE_MAGIC: &[u8; 12] = b"LPEMBCACHE\0\0";
const CACHE_VERSION: u32 = 1;

/// Flat store of f32 embedding rows, addressed by row index.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingCache {
    dim: u32,
    data: Vec<f32>,
}

impl EmbeddingCache {
    pub fn new(dim: u32) -> Self {
        EmbeddingCache { dim, data: Vec::new() }
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn len(&self) -> u32 {
        (self.data.len() / self.dim as usize) as u32
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Appends a row (cast to f32) and returns its index.
    pub fn push(&mut self, values: &[f64]) -> Result<u32> {
        if values.len() != self.dim as usize {
            return Err(Error::ShapeMismatch {
                kernel: "cache_push",
                detail: format!("row has {} values, cache dim {}", values.len(), self.dim),
            });
        }
        let row = self.len();
        self.data.extend(values.iter().map(|&v| v as f32));
        Ok(row)
    }

    pub fn row(&self, index: u32) -> Result<Vec<f64>> {
        if index >= self.len() {
            return Err(Error::format(
                "embedding cache",
                format!("row {index} out of range 0..{}", self.len()),
            ));
        }
        let d = self.dim as usize;
        let start = index as usize * d;
        Ok(self.data[start..start + d].iter().map(|&v| f64::from(v)).collect())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(24 + self.data.len() * 4);
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.len().to_le_bytes());
        buf.extend_from_slice(&self.dim.to_le_bytes());
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(path, buf).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let p = path.display().to_string();
        let mut file = std::fs::File::open(path).map_err(|e| Error::io(p.clone(), e))?;
        let mut magic = [0u8; 12];
        file.read_exact(&mut magic)
            .map_err(|_| Error::format(p.clone(), "truncated header"))?;
        if &magic != CACHE_MAGIC {
            return Err(Error::format(p, "bad magic bytes: not an embedding cache"));
        }
        let mut word = [0u8; 4];
        file.read_exact(&mut word).map_err(|_| Error::format(p.clone(), "truncated header"))?;
        let version = u32::from_le_bytes(word);
        if version != CACHE_VERSION {
            return Err(Error::format(
                p,
                format!("unsupported cache version {version}, expected {CACHE_VERSION}"),
            ));
        }
        file.read_exact(&mut word).map_err(|_| Error::format(p.clone(), "truncated header"))?;
        let count = u32::from_le_bytes(word);
        file.read_exact(&mut word).map_err(|_| Error::format(p.clone(), "truncated header"))?;
        let dim = u32::from_le_bytes(word);
        let expected = count as usize * dim as usize * 4;
        let mut body = Vec::with_capacity(expected);
        file.read_to_end(&mut body).map_err(|e| Error::io(p.clone(), e))?;
        if body.len() != expected {
            return Err(Error::format(
                p,
                format!("body has {} bytes, expected {expected}", body.len()),
            ));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(EmbeddingCache { dim, data })
    }

    /// Writes the record-id → first-row index sidecar.
    pub fn write_index(path: &Path, index: &BTreeMap<String, u32>) -> Result<()> {
        let json = serde_json::to_string_pretty(index)?;
        std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Row references of one record's embeddings inside the cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRefs {
    pub token_rows: Vec<u32>,
    pub subject_rows: Vec<u32>,
    pub edge_row: Option<u32>,
    pub pooled_text_row: u32,
    pub target_row: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub record: AnnotationRecord,
    /// None until embeddings are extracted (a prep-only manifest).
    pub refs: Option<EmbeddingRefs>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub format_version: u32,
    pub io_dim: u32,
    pub record_count: u32,
    /// Upstream detector thresholds, recorded for provenance only.
    pub upstream_box_threshold: f64,
    pub upstream_text_threshold: f64,
}

impl ManifestHeader {
    pub fn new(io_dim: u32, record_count: u32) -> Self {
        ManifestHeader {
            format_version: MANIFEST_FORMAT_VERSION,
            io_dim,
            record_count,
            upstream_box_threshold: 0.2,
            upstream_text_threshold: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    /// Cache file location relative to the manifest.
    pub cache_path: String,
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn new(io_dim: u32, cache_path: impl Into<String>, records: Vec<ManifestRecord>) -> Self {
        DatasetManifest {
            header: ManifestHeader::new(io_dim, records.len() as u32),
            cache_path: cache_path.into(),
            records,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(p.clone(), e))?;
        let manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::format(p.clone(), e.to_string()))?;
        if manifest.header.format_version != MANIFEST_FORMAT_VERSION {
            return Err(Error::format(
                p,
                format!(
                    "unsupported manifest version {}, expected {MANIFEST_FORMAT_VERSION}",
                    manifest.header.format_version
                ),
            ));
        }
        if manifest.header.record_count as usize != manifest.records.len() {
            return Err(Error::format(
                p,
                format!(
                    "header count {} != {} records",
                    manifest.header.record_count,
                    manifest.records.len()
                ),
            ));
        }
        Ok(manifest)
    }

    /// Resolves the cache next to the manifest and checks every reference.
    pub fn open_cache(&self, manifest_path: &Path) -> Result<EmbeddingCache> {
        let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        let cache = EmbeddingCache::read(&dir.join(&self.cache_path))?;
        self.validate_refs(&cache)?;
        Ok(cache)
    }

    pub fn validate_refs(&self, cache: &EmbeddingCache) -> Result<()> {
        if cache.dim() != self.header.io_dim {
            return Err(Error::format(
                &self.cache_path,
                format!("cache dim {} != manifest io_dim {}", cache.dim(), self.header.io_dim),
            ));
        }
        let rows = cache.len();
        for (i, rec) in self.records.iter().enumerate() {
            let Some(refs) = &rec.refs else { continue };
            let mut all: Vec<u32> = Vec::new();
            all.extend(&refs.token_rows);
            all.extend(&refs.subject_rows);
            all.extend(refs.edge_row);
            all.push(refs.pooled_text_row);
            all.push(refs.target_row);
            if let Some(&bad) = all.iter().find(|&&r| r >= rows) {
                return Err(Error::format(
                    &self.cache_path,
                    format!("record {i} references row {bad}, cache has {rows}"),
                ));
            }
        }
        Ok(())
    }
}

/// Histogram of subjects per record plus the unique-subject count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestStats {
    pub subjects_histogram: BTreeMap<usize, usize>,
    pub unique_subjects: usize,
    pub record_count: usize,
}

pub fn manifest_stats(manifest: &DatasetManifest) -> ManifestStats {
    let mut histogram = BTreeMap::new();
    let mut labels = BTreeSet::new();
    for rec in &manifest.records {
        *histogram.entry(rec.record.subject_count()).or_insert(0) += 1;
        for span in &rec.record.subject_spans {
            labels.insert(span.label.clone());
        }
    }
    ManifestStats {
        subjects_histogram: histogram,
        unique_subjects: labels.len(),
        record_count: manifest.records.len(),
    }
}

#[allow(dead_code)]
fn _write_sink(w: &mut dyn Write) -> std::io::Result<()> {
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataprep::record::passing_record;

    #[test]
    fn empty_manifest_round_trips_with_zero_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let m = DatasetManifest::new(16, "cache.bin", vec![]);
        m.write(&path).unwrap();
        let back = DatasetManifest::read(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.header.record_count, 0);
        let stats = manifest_stats(&back);
        assert_eq!(stats.record_count, 0);
        assert!(stats.subjects_histogram.is_empty());
    }

    #[test]
    fn manifest_round_trips_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let records: Vec<ManifestRecord> = (0..3)
            .map(|i| ManifestRecord {
                record: passing_record(&format!("img{i}")),
                refs: Some(EmbeddingRefs {
                    token_rows: vec![i, i + 1],
                    subject_rows: vec![i + 2],
                    edge_row: None,
                    pooled_text_row: i + 3,
                    target_row: i + 4,
                }),
            })
            .collect();
        let m = DatasetManifest::new(8, "cache.bin", records);
        m.write(&path).unwrap();
        let first = std::fs::read(&path).unwrap();
        DatasetManifest::read(&path).unwrap().write(&path).unwrap();
        let second = std::fs::read(&path).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn cache_round_trips_and_rejects_corrupted_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.bin");
        let mut cache = EmbeddingCache::new(3);
        cache.push(&[0.25, -1.5, 3.75]).unwrap();
        cache.push(&[1.0, 2.0, 3.0]).unwrap();
        cache.write(&path).unwrap();
        let back = EmbeddingCache::read(&path).unwrap();
        assert_eq!(back, cache);
        assert_eq!(back.row(0).unwrap(), vec![0.25, -1.5, 3.75]);

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] ^= 0xff;
        std::fs::write(&path, bytes).unwrap();
        let err = EmbeddingCache::read(&path).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "got {err:?}");
    }

    #[test]
    fn truncated_cache_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.bin");
        let mut cache = EmbeddingCache::new(4);
        cache.push(&[1.0; 4]).unwrap();
        cache.write(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(EmbeddingCache::read(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn dangling_reference_is_detected() {
        let mut cache = EmbeddingCache::new(2);
        cache.push(&[1.0, 2.0]).unwrap();
        let m = DatasetManifest::new(
            2,
            "cache.bin",
            vec![ManifestRecord {
                record: passing_record("x"),
                refs: Some(EmbeddingRefs {
                    token_rows: vec![0],
                    subject_rows: vec![5],
                    edge_row: None,
                    pooled_text_row: 0,
                    target_row: 0,
                }),
            }],
        );
        assert!(matches!(m.validate_refs(&cache), Err(Error::Format { .. })));
    }

    #[test]
    fn stats_histogram_counts_by_subject_count() {
        let make = |n: usize, id: &str| {
            let mut rec = passing_record(id);
            rec.caption_tokens = (0..2 * n.max(1)).map(|i| format!("t{i}")).collect();
            rec.subject_spans = (0..n)
                .map(|i| super::super::record::SubjectSpan {
                    label: format!("s{i}"),
                    token_start: 2 * i,
                    token_end: 2 * i + 1,
                })
                .collect();
            rec.boxes = vec![rec.boxes[0].clone(); n];
            rec.mask_area_px = vec![rec.mask_area_px[0]; n];
            rec.mask_bg_fraction = vec![rec.mask_bg_fraction[0]; n];
            ManifestRecord { record: rec, refs: None }
        };
        let m = DatasetManifest::new(
            4,
            "c.bin",
            vec![make(1, "a"), make(1, "b"), make(2, "c"), make(4, "d")],
        );
        let stats = manifest_stats(&m);
        assert_eq!(stats.subjects_histogram.get(&1), Some(&2));
        assert_eq!(stats.subjects_histogram.get(&2), Some(&1));
        assert_eq!(stats.subjects_histogram.get(&4), Some(&1));
        let total: usize = stats.subjects_histogram.values().sum();
        assert_eq!(total, stats.record_count);
    }
}

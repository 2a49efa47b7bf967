//! Binary checkpoint format.
//!
//! Layout: 12-byte magic, u32 version, u32 config-JSON length + bytes, then
//! a tensor section: u32 tensor count followed by each tensor as (u32 name
//! length, name bytes, u32 rank, u32 extents…, little-endian f32 values),
//! in canonical sorted-by-name order. Everything little-endian. Training
//! checkpoints reuse the tensor-section encoding for optimizer moments.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::config::PriorConfig;
use super::params::{tensor_shapes, PriorParams};
use crate::error::{Error, Result};
use crate::tensorcore::Tensor;

const PRIOR_MAGIC: &[u8; 12] = b"LPPRIORCKPT\0";
const CKPT_VERSION: u32 = 1;

pub(crate) fn write_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn read_u32(r: &mut impl Read, path: &str) -> Result<u32> {
    let mut word = [0u8; 4];
    r.read_exact(&mut word).map_err(|_| Error::format(path, "truncated file"))?;
    Ok(u32::from_le_bytes(word))
}

/// Serializes named tensors (already in canonical order) into `buf`.
pub fn write_tensor_section(buf: &mut Vec<u8>, tensors: &[(String, &Tensor)]) {
    write_u32(buf, tensors.len() as u32);
    for (name, t) in tensors {
        write_u32(buf, name.len() as u32);
        buf.extend_from_slice(name.as_bytes());
        write_u32(buf, 2);
        write_u32(buf, t.rows() as u32);
        write_u32(buf, t.cols() as u32);
        for &v in t.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
}

/// Reads a tensor section written by [`write_tensor_section`].
pub fn read_tensor_section(r: &mut impl Read, path: &str) -> Result<BTreeMap<String, Tensor>> {
    let count = read_u32(r, path)?;
    let mut tensors = BTreeMap::new();
    for _ in 0..count {
        let name_len = read_u32(r, path)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes).map_err(|_| Error::format(path, "truncated file"))?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::format(path, "tensor name is not utf-8"))?;
        let rank = read_u32(r, path)?;
        if rank != 2 {
            return Err(Error::format(path, format!("tensor {name} has rank {rank}, expected 2")));
        }
        let rows = read_u32(r, path)? as usize;
        let cols = read_u32(r, path)? as usize;
        let mut bytes = vec![0u8; rows * cols * 4];
        r.read_exact(&mut bytes).map_err(|_| Error::format(path, "truncated file"))?;
        let data: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        tensors.insert(name, Tensor::new(rows, cols, data)?);
    }
    Ok(tensors)
}

pub(crate) fn encode_header(magic: &[u8; 12], config: &PriorConfig) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(magic);
    write_u32(&mut buf, CKPT_VERSION);
    let config_json = serde_json::to_vec(config)?;
    write_u32(&mut buf, config_json.len() as u32);
    buf.extend_from_slice(&config_json);
    Ok(buf)
}

pub(crate) fn decode_header(
    r: &mut impl Read,
    magic: &[u8; 12],
    path: &str,
) -> Result<PriorConfig> {
    let mut got = [0u8; 12];
    r.read_exact(&mut got).map_err(|_| Error::format(path, "truncated file"))?;
    if &got != magic {
        return Err(Error::format(path, "bad magic bytes: not a checkpoint of this kind"));
    }
    let version = read_u32(r, path)?;
    if version != CKPT_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported checkpoint version {version}, expected {CKPT_VERSION}"),
        ));
    }
    let json_len = read_u32(r, path)? as usize;
    let mut json = vec![0u8; json_len];
    r.read_exact(&mut json).map_err(|_| Error::format(path, "truncated file"))?;
    serde_json::from_slice(&json).map_err(|e| Error::format(path, format!("bad config: {e}")))
}

pub(crate) fn params_as_sorted(params: &PriorParams) -> Vec<(String, &Tensor)> {
    params.iter().map(|(n, t)| (n.clone(), t)).collect()
}

/// Validates loaded tensors against the shapes the config implies.
pub(crate) fn check_shapes(
    config: &PriorConfig,
    tensors: &BTreeMap<String, Tensor>,
    path: &str,
) -> Result<()> {
    let plan = tensor_shapes(config);
    if plan.len() != tensors.len() {
        return Err(Error::format(
            path,
            format!("checkpoint has {} tensors, config implies {}", tensors.len(), plan.len()),
        ));
    }
    for (name, rows, cols) in plan {
        let t = tensors
            .get(&name)
            .ok_or_else(|| Error::format(path, format!("missing tensor {name}")))?;
        if t.shape() != [rows, cols] {
            return Err(Error::format(
                path,
                format!("tensor {name} is {:?}, expected [{rows}, {cols}]", t.shape()),
            ));
        }
    }
    Ok(())
}

pub fn save_params(path: &Path, params: &PriorParams) -> Result<()> {
    let mut buf = encode_header(PRIOR_MAGIC, params.config())?;
    write_tensor_section(&mut buf, &params_as_sorted(params));
    std::fs::write(path, buf).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_params(path: &Path) -> Result<PriorParams> {
    let p = path.display().to_string();
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(p.clone(), e))?;
    let config = decode_header(&mut file, PRIOR_MAGIC, &p)?;
    let tensors = read_tensor_section(&mut file, &p)?;
    let mut rest = Vec::new();
    file.read_to_end(&mut rest).map_err(|e| Error::io(p.clone(), e))?;
    if !rest.is_empty() {
        return Err(Error::format(p, format!("{} trailing bytes", rest.len())));
    }
    check_shapes(&config, &tensors, &p)?;
    Ok(PriorParams::from_tensors(config, tensors))
}

#[allow(dead_code)]
fn _sink(w: &mut dyn Write) -> std::io::Result<()> {
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::{init_params, PriorConfig};
    use crate::tensorcore::FloatMode;

    #[test]
    fn checkpoint_round_trips_bit_exact_in_f32_mode() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prior.ckpt");
        let params = init_params(&PriorConfig::toy(), 3, FloatMode::F32).unwrap();
        save_params(&path, &params).unwrap();
        let first = std::fs::read(&path).unwrap();
        let loaded = load_params(&path).unwrap();
        assert_eq!(loaded, params);
        save_params(&path, &loaded).unwrap();
        let second = std::fs::read(&path).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn corrupted_magic_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prior.ckpt");
        let params = init_params(&PriorConfig::toy(), 3, FloatMode::F32).unwrap();
        save_params(&path, &params).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[3] ^= 0x5a;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load_params(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn truncated_checkpoint_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prior.ckpt");
        let params = init_params(&PriorConfig::toy(), 3, FloatMode::F32).unwrap();
        save_params(&path, &params).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_params(&path), Err(Error::Format { .. })));
    }
}

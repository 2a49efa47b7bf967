//! Training checkpoints: the prior checkpoint layout plus the optimizer
//! moment tensors and the step counter.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use super::adam::AdamState;
use crate::error::{Error, Result};
use crate::prior::{
    check_shapes, decode_header, encode_header, params_as_sorted, read_tensor_section,
    write_tensor_section, PriorParams,
};
use crate::tensorcore::Tensor;

const TRAIN_MAGIC: &[u8; 12] = b"LPTRAINCKPT\0";
const PRIOR_MAGIC: &[u8; 12] = b"LPPRIORCKPT\0";

pub fn write_train_checkpoint(
    path: &Path,
    params: &PriorParams,
    adam: &AdamState,
    step: u64,
) -> Result<()> {
    let mut buf = encode_header(TRAIN_MAGIC, params.config())?;
    write_tensor_section(&mut buf, &params_as_sorted(params));
    let mut moments: Vec<(String, &Tensor)> = adam
        .m
        .iter()
        .map(|(n, t)| (format!("m.{n}"), t))
        .chain(adam.v.iter().map(|(n, t)| (format!("v.{n}"), t)))
        .collect();
    moments.sort_by(|a, b| a.0.cmp(&b.0));
    write_tensor_section(&mut buf, &moments);
    buf.extend_from_slice(&step.to_le_bytes());
    std::fs::write(path, buf).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_train_checkpoint(path: &Path) -> Result<(PriorParams, AdamState, u64)> {
    let p = path.display().to_string();
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(p.clone(), e))?;
    let config = decode_header(&mut file, TRAIN_MAGIC, &p)?;
    let tensors = read_tensor_section(&mut file, &p)?;
    check_shapes(&config, &tensors, &p)?;
    let moment_tensors = read_tensor_section(&mut file, &p)?;
    let mut step_bytes = [0u8; 8];
    file.read_exact(&mut step_bytes).map_err(|_| Error::format(p.clone(), "truncated file"))?;
    let mut rest = Vec::new();
    file.read_to_end(&mut rest).map_err(|e| Error::io(p.clone(), e))?;
    if !rest.is_empty() {
        return Err(Error::format(p, format!("{} trailing bytes", rest.len())));
    }
    let step = u64::from_le_bytes(step_bytes);

    let mut m = BTreeMap::new();
    let mut v = BTreeMap::new();
    for (name, t) in moment_tensors {
        if let Some(base) = name.strip_prefix("m.") {
            m.insert(base.to_string(), t);
        } else if let Some(base) = name.strip_prefix("v.") {
            v.insert(base.to_string(), t);
        } else {
            return Err(Error::format(&p, format!("unexpected moment tensor {name}")));
        }
    }
    let params = PriorParams::from_tensors(config, tensors);
    for name in params.names() {
        if !m.contains_key(&name) || !v.contains_key(&name) {
            return Err(Error::format(&p, format!("missing moments for {name}")));
        }
    }
    Ok((params, AdamState::from_parts(m, v, step), step))
}

/// Loads parameters from either checkpoint kind: a bare prior checkpoint or
/// a training checkpoint (whose moments are ignored).
pub fn load_any_params(path: &Path) -> Result<PriorParams> {
    let p = path.display().to_string();
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(p.clone(), e))?;
    let mut magic = [0u8; 12];
    file.read_exact(&mut magic).map_err(|_| Error::format(p.clone(), "truncated file"))?;
    drop(file);
    match &magic {
        m if m == PRIOR_MAGIC => crate::prior::load_params(path),
        m if m == TRAIN_MAGIC => read_train_checkpoint(path).map(|(params, _, _)| params),
        _ => Err(Error::format(p, "bad magic bytes: not a checkpoint")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::{init_params, PriorConfig};
    use crate::tensorcore::FloatMode;

    #[test]
    fn train_checkpoint_round_trips_params_moments_and_step() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.ckpt");
        let params = init_params(&PriorConfig::toy(), 5, FloatMode::F32).unwrap();
        let mut adam = AdamState::new(&params);
        adam.steps_done = 7;
        for t in adam.m.values_mut() {
            t.data_mut()[0] = 0.25;
        }
        write_train_checkpoint(&path, &params, &adam, 7).unwrap();
        let (p2, a2, step) = read_train_checkpoint(&path).unwrap();
        assert_eq!(p2, params);
        assert_eq!(a2, adam);
        assert_eq!(step, 7);

        let via_any = load_any_params(&path).unwrap();
        assert_eq!(via_any, params);
    }

    #[test]
    fn prior_loader_rejects_train_checkpoint_and_vice_versa() {
        let dir = tempfile::tempdir().unwrap();
        let params = init_params(&PriorConfig::toy(), 5, FloatMode::F32).unwrap();

        let train_path = dir.path().join("train.ckpt");
        let adam = AdamState::new(&params);
        write_train_checkpoint(&train_path, &params, &adam, 0).unwrap();
        assert!(crate::prior::load_params(&train_path).is_err());

        let prior_path = dir.path().join("prior.ckpt");
        crate::prior::save_params(&prior_path, &params).unwrap();
        assert!(read_train_checkpoint(&prior_path).is_err());
        assert_eq!(load_any_params(&prior_path).unwrap(), params);
    }
}

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;

use super::config::{param_count, PriorConfig};
use crate::error::{Error, Result};
use crate::seedstream::substream_rng;
use crate::tensorcore::{FloatMode, Tensor};

/// Small-normal std for positions, aux nulls and the query embedding.
const EMBED_INIT_STD: f64 = 0.02;

/// All learnable weights, keyed by canonical name, plus the architecture
/// they instantiate. BTreeMap iteration order is the checkpoint and
/// optimizer order.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorParams {
    config: PriorConfig,
    tensors: BTreeMap<String, Tensor>,
}

impl PriorParams {
    pub(crate) fn from_tensors(config: PriorConfig, tensors: BTreeMap<String, Tensor>) -> Self {
        PriorParams { config, tensors }
    }

    pub fn config(&self) -> &PriorConfig {
        &self.config
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name}")))
    }

    /// Names in canonical (sorted) order.
    pub fn names(&self) -> Vec<String> {
        self.tensors.keys().cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn scalar_count(&self) -> u64 {
        self.tensors.values().map(|t| t.len() as u64).sum()
    }
}

/// Per-tensor shape plan for a configuration, in canonical name order.
pub(crate) fn tensor_shapes(config: &PriorConfig) -> Vec<(String, usize, usize)> {
    let m = config.model_dim();
    let io = config.io_dim;
    let mut shapes = vec![
        ("input_proj".to_string(), io, m),
        ("pos_embed".to_string(), config.max_seq, m),
        ("query_embed".to_string(), 1, io),
        ("final_norm.gamma".to_string(), 1, m),
        ("final_norm.beta".to_string(), 1, m),
        ("output_proj".to_string(), m, io),
    ];
    for k in 0..config.n_aux {
        shapes.push((format!("aux_null.{k}"), 1, io));
    }
    for layer in 0..config.n_layers {
        for w in ["wq", "wk", "wv", "wo"] {
            shapes.push((format!("layers.{layer}.attn.{w}"), m, m));
        }
        for g in ["ln1", "ln2"] {
            shapes.push((format!("layers.{layer}.{g}.gamma"), 1, m));
            shapes.push((format!("layers.{layer}.{g}.beta"), 1, m));
        }
        shapes.push((format!("layers.{layer}.mlp.w_in"), m, config.mlp_dim()));
        shapes.push((format!("layers.{layer}.mlp.w_out"), config.mlp_dim(), m));
    }
    if config.noise_token {
        shapes.push(("noise_proj".to_string(), io, m));
    }
    shapes.sort_by(|a, b| a.0.cmp(&b.0));
    shapes
}

fn init_tensor(name: &str, rows: usize, cols: usize, model_dim: usize, seed: u64) -> Tensor {
    let mut rng = substream_rng(seed, name, 0);
    let data: Vec<f64> = if name.ends_with(".gamma") {
        vec![1.0; rows * cols]
    } else if name.ends_with(".beta") {
        vec![0.0; rows * cols]
    } else {
        let std = if name.starts_with("pos_embed")
            || name.starts_with("aux_null")
            || name.starts_with("query_embed")
        {
            EMBED_INIT_STD
        } else {
            1.0 / (model_dim as f64).sqrt()
        };
        (0..rows * cols)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                z * std
            })
            .collect()
    };
    Tensor::new(rows, cols, data).expect("init shapes are positive")
}

/// Deterministic parameter initialization: projections at scaled normal
/// (std model_dim^(−1/2)), norms at identity, embeddings at small normal.
/// Values are quantized to the run's float mode so saved checkpoints
/// round-trip losslessly.
pub fn init_params(config: &PriorConfig, seed: u64, mode: FloatMode) -> Result<PriorParams> {
    config.validate()?;
    let m = config.model_dim();
    let mut tensors = BTreeMap::new();
    for (name, rows, cols) in tensor_shapes(config) {
        let t = init_tensor(&name, rows, cols, m, seed).quantized(mode);
        tensors.insert(name, t);
    }
    let params = PriorParams { config: config.clone(), tensors };
    debug_assert_eq!(params.scalar_count(), param_count(config));
    Ok(params)
}

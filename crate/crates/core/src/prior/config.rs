use serde::{Deserialize, Serialize};

use crate::dataprep::AUX_SLOTS;
use crate::error::{Error, Result};

/// Architecture hyperparameters. `model_dim` is always
/// `n_heads × head_dim`; `io_dim` is the embedding-space width the prior
/// consumes and emits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub head_dim: usize,
    pub io_dim: usize,
    pub mlp_ratio: usize,
    pub n_aux: usize,
    pub max_seq: usize,
    /// Inject a sampled noise vector as one extra projected slot.
    pub noise_token: bool,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig::paper()
    }
}

impl PriorConfig {
    /// The full-scale configuration: 10 layers of 16×32 attention over a
    /// 512-wide stack, io width 1280, seq budget 77 text + 4 aux + 1 query.
    pub fn paper() -> Self {
        PriorConfig {
            n_layers: 10,
            n_heads: 16,
            head_dim: 32,
            io_dim: 1280,
            mlp_ratio: 4,
            n_aux: AUX_SLOTS,
            max_seq: 82,
            noise_token: false,
        }
    }

    /// Small configuration for gradient checks and fast tests.
    pub fn toy() -> Self {
        PriorConfig {
            n_layers: 2,
            n_heads: 2,
            head_dim: 4,
            io_dim: 16,
            mlp_ratio: 4,
            n_aux: AUX_SLOTS,
            max_seq: 16,
            noise_token: false,
        }
    }

    pub fn model_dim(&self) -> usize {
        self.n_heads * self.head_dim
    }

    pub fn mlp_dim(&self) -> usize {
        self.mlp_ratio * self.model_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || self.head_dim == 0 || self.io_dim == 0 || self.mlp_ratio == 0 {
            return Err(Error::Config("prior extents must be positive".into()));
        }
        if self.n_aux != AUX_SLOTS {
            return Err(Error::Config(format!(
                "n_aux must be {AUX_SLOTS}, got {}",
                self.n_aux
            )));
        }
        let floor = self.n_aux + 1 + usize::from(self.noise_token);
        if self.max_seq < floor {
            return Err(Error::Config(format!(
                "max_seq {} below the aux + query floor {floor}",
                self.max_seq
            )));
        }
        Ok(())
    }
}

/// Exact count of learnable scalars for a configuration.
///
/// Per layer: Wq/Wk/Wv/Wo (4·M²), the two MLP mats (2·r·M²), and two affine
/// norms (4·M). Around the stack: io projections in and out (2·io·M),
/// positions (max_seq·M), the four aux nulls and the query (5·io... n_aux·io
/// + io), the final norm (2·M), and the optional noise projection (io·M).
pub fn param_count(config: &PriorConfig) -> u64 {
    let m = config.model_dim() as u64;
    let io = config.io_dim as u64;
    let r = config.mlp_ratio as u64;
    let layers = config.n_layers as u64;
    let per_layer = 4 * m * m + 2 * r * m * m + 4 * m;
    let mut total = io * m // input projection
        + config.max_seq as u64 * m // positions
        + layers * per_layer
        + config.n_aux as u64 * io // aux nulls
        + io // query
        + 2 * m // final norm
        + m * io; // output projection
    if config.noise_token {
        total += io * m;
    }
    total
}

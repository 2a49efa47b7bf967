//! The run configuration file: one TOML document aggregating every
//! subsystem's config with documented defaults. Unknown keys are rejected
//! with the offending key named.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use lambda_prior::dataprep::FilterRules;
use lambda_prior::objective::LossConfig;
use lambda_prior::prior::PriorConfig;
use lambda_prior::synthworld::WorldSpec;
use lambda_prior::train::TrainConfig;
use lambda_prior::{Error, FloatMode, Result};

/// Dataset sizes and the retrieval pool.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub train_samples: usize,
    pub eval_samples: usize,
    pub pool: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection { train_samples: 10_000, eval_samples: 1_000, pool: 64 }
    }
}

/// One interpolation corner: a template index and its hole subjects.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CornerSpec {
    pub template: usize,
    pub subjects: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpSection {
    pub rows: usize,
    pub cols: usize,
    /// Exactly four corners; empty means "derive from the first four vocab
    /// entries on template 0".
    pub corners: Vec<CornerSpec>,
}

impl Default for InterpSection {
    fn default() -> Self {
        InterpSection { rows: 4, cols: 4, corners: Vec::new() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateSection {
    pub seeds: Vec<u64>,
}

impl Default for AblateSection {
    fn default() -> Self {
        AblateSection { seeds: vec![1, 2, 3] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub float64: bool,
    pub world: WorldSpec,
    pub filter: FilterRules,
    pub prior: PriorConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub data: DataSection,
    pub interp: InterpSection,
    pub ablate: AblateSection,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        // [loss] is the single source for the objective; a nested
        // [train.loss] would silently lose to it, so reject it outright.
        let value: toml::Value = text
            .parse()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if value.get("train").and_then(|t| t.get("loss")).is_some() {
            return Err(Error::Config(
                "config error: set the objective under [loss], not [train.loss]".into(),
            ));
        }
        let config: RunConfig = value
            .try_into()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(config)
    }

    /// Threads the global knobs into the subsystem configs and validates.
    pub fn resolve(
        mut self,
        seed: Option<u64>,
        out: Option<PathBuf>,
        float64: bool,
    ) -> Result<RunConfig> {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(o) = out {
            self.out_dir = Some(o);
        }
        if float64 {
            self.float64 = true;
        }
        self.train.seed = self.seed;
        self.train.loss = self.loss.clone();
        self.train.float_mode = if self.float64 { FloatMode::F64 } else { FloatMode::F32 };
        self.world.validate()?;
        self.prior.validate()?;
        self.loss.validate()?;
        self.train.validate()?;
        Ok(self)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn float_mode(&self) -> FloatMode {
        if self.float64 {
            FloatMode::F64
        } else {
            FloatMode::F32
        }
    }
}

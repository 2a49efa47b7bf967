use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seedstream::substream_rng;

/// Hole marker inside caption templates.
pub const HOLE: &str = "<s>";

/// Most distinguishability allowed between two subject latents.
const MAX_SUBJECT_COSINE: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    #[default]
    Linear,
    Mlp1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSpec {
    pub io_dim: usize,
    /// Subject labels; each gets a fixed unit latent vector.
    pub vocab: Vec<String>,
    /// Caption templates; `<s>` marks a subject hole (1–4 per template).
    pub templates: Vec<Vec<String>>,
    pub map_kind: MapKind,
    /// Near-duplicate captions per template group; members share the
    /// template and all but one subject.
    pub confusability: usize,
    pub seed: u64,
    /// Fraction of samples whose target actually uses the edge input.
    pub edge_fraction: f64,
    /// Identity emphasis of G's subject block: larger values make targets
    /// correlate more with their subject latents.
    pub subject_gain: f64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        let vocab = [
            "dog", "cat", "hat", "robot", "lantern", "teapot", "sparrow", "cactus", "violin",
            "rocket", "pumpkin", "helmet", "turtle", "anchor", "candle", "falcon", "mitten",
            "kettle", "beetle", "drum", "lily", "crab", "comet", "acorn",
        ];
        let templates: Vec<Vec<&str>> = vec![
            vec!["a", "photo", "of", "a", HOLE],
            vec!["a", HOLE, "in", "a", "sunny", "field"],
            vec!["the", HOLE, "next", "to", "a", HOLE],
            vec!["a", "painting", "of", "a", HOLE],
            vec!["a", HOLE, "wearing", "a", HOLE],
            vec!["a", "small", HOLE, "on", "a", "table"],
            vec!["a", HOLE, "under", "a", "blue", "sky"],
            vec!["an", "old", HOLE, "beside", "a", HOLE],
            vec!["a", "shiny", HOLE, "at", "night"],
            vec!["a", HOLE, "floating", "above", "water"],
        ];
        WorldSpec {
            io_dim: 64,
            vocab: vocab.iter().map(|s| s.to_string()).collect(),
            templates: templates
                .into_iter()
                .map(|t| t.into_iter().map(|s| s.to_string()).collect())
                .collect(),
            map_kind: MapKind::Linear,
            confusability: 1,
            seed: 0,
            edge_fraction: 0.0,
            subject_gain: 2.0,
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        if self.io_dim == 0 {
            return Err(Error::Config("io_dim must be positive".into()));
        }
        if self.vocab.len() < 2 {
            return Err(Error::Config("vocab needs at least two labels".into()));
        }
        if self.confusability == 0 {
            return Err(Error::Config("confusability must be at least 1".into()));
        }
        if self.confusability > self.vocab.len() {
            return Err(Error::Config(
                "confusability cannot exceed the vocabulary size".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.edge_fraction) {
            return Err(Error::Config("edge_fraction must be in [0, 1]".into()));
        }
        for (i, t) in self.templates.iter().enumerate() {
            let holes = t.iter().filter(|w| *w == HOLE).count();
            if holes == 0 || holes > 4 {
                return Err(Error::Config(format!(
                    "template {i} has {holes} subject holes, expected 1..=4"
                )));
            }
        }
        if self.templates.is_empty() {
            return Err(Error::Config("template pool is empty".into()));
        }
        Ok(())
    }

    pub fn write_sidecar(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn read_sidecar(path: &std::path::Path) -> Result<WorldSpec> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::format(path.display().to_string(), e.to_string()))
    }
}

/// The materialized ground-truth mapping.
#[derive(Debug, Clone, PartialEq)]
pub enum MappingG {
    /// target = M · [pooled ‖ mean-subject ‖ edge-or-zero], rows of M
    /// orthonormal with an identity-emphasized subject block.
    Linear { matrix: Vec<f64> },
    /// One tanh hidden layer of width io_dim.
    Mlp1 { w1: Vec<f64>, b1: Vec<f64>, w2: Vec<f64>, b2: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub spec: WorldSpec,
    subject_latents: BTreeMap<String, Vec<f64>>,
    map: MappingG,
}

fn unit_gaussian(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let n = v.iter().map(|&x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn cosine_raw(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
    let na = a.iter().map(|&x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|&x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Modified Gram-Schmidt over the rows; panics only on rank collapse, which
/// the caller's random inputs make impossible in practice.
fn orthonormalize_rows(matrix: &mut [f64], rows: usize, cols: usize) -> Result<()> {
    for i in 0..rows {
        for j in 0..i {
            let dot: f64 = (0..cols).map(|c| matrix[i * cols + c] * matrix[j * cols + c]).sum();
            for c in 0..cols {
                matrix[i * cols + c] -= dot * matrix[j * cols + c];
            }
        }
        let norm: f64 =
            (0..cols).map(|c| matrix[i * cols + c] * matrix[i * cols + c]).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::Config(format!("rank collapse while orthonormalizing row {i}")));
        }
        for c in 0..cols {
            matrix[i * cols + c] /= norm;
        }
    }
    Ok(())
}

/// Materializes a world: subject latents (pairwise cosine below 0.9) and
/// the mapping G, all deterministic from the spec seed.
pub fn gen_world(spec: &WorldSpec) -> Result<World> {
    spec.validate()?;
    let dim = spec.io_dim;

    let mut latents: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut placed: Vec<Vec<f64>> = Vec::new();
    for (i, label) in spec.vocab.iter().enumerate() {
        let mut rng = substream_rng(spec.seed, &format!("subject_latent:{label}"), i as u64);
        let mut attempts = 0;
        let latent = loop {
            let candidate = unit_gaussian(&mut rng, dim);
            if placed.iter().all(|p| cosine_raw(p, &candidate).abs() < MAX_SUBJECT_COSINE) {
                break candidate;
            }
            attempts += 1;
            if attempts > 1000 {
                return Err(Error::Config(format!(
                    "cannot place distinguishable latent for {label}; io_dim too small for the vocabulary"
                )));
            }
        };
        placed.push(latent.clone());
        latents.insert(label.clone(), latent);
    }

    let in_dim = 3 * dim;
    let map = match spec.map_kind {
        MapKind::Linear => {
            let mut rng = substream_rng(spec.seed, "map_linear", 0);
            let mut matrix: Vec<f64> = (0..dim * in_dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            // Emphasize the subject block before orthonormalization so the
            // target keeps a real subject component.
            for r in 0..dim {
                matrix[r * in_dim + dim + r] += spec.subject_gain;
            }
            orthonormalize_rows(&mut matrix, dim, in_dim)?;
            MappingG::Linear { matrix }
        }
        MapKind::Mlp1 => {
            let hidden = dim;
            let mut rng = substream_rng(spec.seed, "map_mlp1", 0);
            let scale_in = 1.0 / (in_dim as f64).sqrt();
            let w1: Vec<f64> = (0..hidden * in_dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal) * scale_in)
                .collect();
            let b1 = vec![0.0; hidden];
            let scale_h = 1.0 / (hidden as f64).sqrt();
            let mut w2: Vec<f64> = (0..dim * hidden)
                .map(|_| rng.sample::<f64, _>(StandardNormal) * scale_h)
                .collect();
            for r in 0..dim {
                w2[r * hidden + r] += spec.subject_gain * scale_h;
            }
            let b2 = vec![0.0; dim];
            MappingG::Mlp1 { w1, b1, w2, b2 }
        }
    };

    Ok(World { spec: spec.clone(), subject_latents: latents, map })
}

impl World {
    pub fn subject_latent(&self, label: &str) -> Result<&Vec<f64>> {
        self.subject_latents
            .get(label)
            .ok_or_else(|| Error::Config(format!("unknown subject label {label}")))
    }

    /// Deterministic unit embedding for any caption token.
    pub fn token_embedding(&self, token: &str) -> Vec<f64> {
        let mut rng = substream_rng(self.spec.seed, &format!("token:{token}"), 0);
        unit_gaussian(&mut rng, self.spec.io_dim)
    }

    /// Applies G to (pooled text, mean subject, edge-or-zero).
    pub fn apply_g(&self, pooled: &[f64], mean_subject: &[f64], edge: Option<&[f64]>) -> Vec<f64> {
        let dim = self.spec.io_dim;
        let mut input = Vec::with_capacity(3 * dim);
        input.extend_from_slice(pooled);
        input.extend_from_slice(mean_subject);
        match edge {
            Some(e) => input.extend_from_slice(e),
            None => input.extend(std::iter::repeat_n(0.0, dim)),
        }
        match &self.map {
            MappingG::Linear { matrix } => (0..dim)
                .map(|r| {
                    input
                        .iter()
                        .enumerate()
                        .map(|(c, &x)| matrix[r * 3 * dim + c] * x)
                        .sum::<f64>()
                })
                .collect(),
            MappingG::Mlp1 { w1, b1, w2, b2 } => {
                let hidden = b1.len();
                let h: Vec<f64> = (0..hidden)
                    .map(|r| {
                        let pre: f64 = input
                            .iter()
                            .enumerate()
                            .map(|(c, &x)| w1[r * 3 * dim + c] * x)
                            .sum::<f64>()
                            + b1[r];
                        pre.tanh()
                    })
                    .collect();
                (0..dim)
                    .map(|r| {
                        h.iter().enumerate().map(|(c, &x)| w2[r * hidden + c] * x).sum::<f64>()
                            + b2[r]
                    })
                    .collect()
            }
        }
    }

    #[cfg(test)]
    pub(crate) fn with_map(mut self, map: MappingG) -> Self {
        self.map = map;
        self
    }
}

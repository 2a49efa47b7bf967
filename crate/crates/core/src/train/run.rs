use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::batch::{batch_grads, TrainSample};
use super::checkpoint::{read_train_checkpoint, write_train_checkpoint};
use super::schedule::{lr_at, ScheduleKind};
use crate::dataprep::{DatasetManifest, EmbeddingCache};
use crate::embedspace::EmbedVec;
use crate::error::{Error, Result};
use crate::objective::{LossBreakdown, LossConfig};
use crate::par::ParMode;
use crate::prior::{init_params, PriorConfig, PriorParams};
use crate::seedstream::{substream_rng, substream_seed};
use crate::tensorcore::FloatMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub peak_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
    /// Probability of replacing a sample's edge slot with the learned null.
    pub edge_drop_p: f64,
    pub loss: LossConfig,
    pub seed: u64,
    pub checkpoint_every: u64,
    pub float_mode: FloatMode,
    pub schedule: ScheduleKind,
    /// Cosine floor as a fraction of the peak.
    pub lr_floor_fraction: f64,
    /// Global gradient-norm clip; 0 disables.
    pub grad_clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            peak_lr: 5e-5,
            warmup_steps: 100,
            total_steps: 2000,
            edge_drop_p: 0.01,
            loss: LossConfig::default(),
            seed: 0,
            checkpoint_every: 500,
            float_mode: FloatMode::F32,
            schedule: ScheduleKind::WarmupCosine,
            lr_floor_fraction: 0.1,
            grad_clip_norm: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.edge_drop_p) {
            return Err(Error::Config(format!(
                "edge_drop_p must be in [0, 1], got {}",
                self.edge_drop_p
            )));
        }
        if self.total_steps > 0 && self.warmup_steps >= self.total_steps {
            return Err(Error::Config(format!(
                "warmup_steps {} must be below total_steps {}",
                self.warmup_steps, self.total_steps
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    pub log_path: PathBuf,
    pub start_step: u64,
    pub end_step: u64,
    pub last_loss: Option<LossBreakdown>,
}

/// Materializes training samples from a manifest and its cache.
pub fn samples_from_manifest(
    manifest: &DatasetManifest,
    cache: &EmbeddingCache,
) -> Result<Vec<TrainSample>> {
    manifest.validate_refs(cache)?;
    let mut samples = Vec::with_capacity(manifest.records.len());
    for (i, entry) in manifest.records.iter().enumerate() {
        let refs = entry.refs.as_ref().ok_or_else(|| {
            Error::Format {
                path: manifest.cache_path.clone(),
                detail: format!("record {i} has no embedding references; run feature extraction"),
            }
        })?;
        let tokens: Vec<EmbedVec> = refs
            .token_rows
            .iter()
            .map(|&r| cache.row(r).map(EmbedVec::new))
            .collect::<Result<_>>()?;
        if refs.subject_rows.len() != entry.record.subject_spans.len() {
            return Err(Error::format(
                &manifest.cache_path,
                format!(
                    "record {i}: {} subject rows for {} spans",
                    refs.subject_rows.len(),
                    entry.record.subject_spans.len()
                ),
            ));
        }
        let bindings: Vec<((usize, usize), EmbedVec)> = entry
            .record
            .subject_spans
            .iter()
            .zip(&refs.subject_rows)
            .map(|(span, &row)| {
                cache.row(row).map(|v| ((span.token_start, span.token_end), EmbedVec::new(v)))
            })
            .collect::<Result<_>>()?;
        let edge = refs.edge_row.map(|r| cache.row(r).map(EmbedVec::new)).transpose()?;
        let seq = crate::dataprep::build_interleaved(
            &tokens,
            &bindings,
            edge,
            crate::dataprep::InterleaveOptions::default(),
        )?;
        samples.push(TrainSample {
            seq,
            target: cache.row(refs.target_row)?,
            pooled_text: cache.row(refs.pooled_text_row)?,
        });
    }
    Ok(samples)
}

/// Edge-drop decisions for one step, one per batch slot, drawn in order
/// from the step's substream.
fn edge_drop_decisions(seed: u64, step: u64, n: usize, p: f64) -> Vec<bool> {
    let mut rng = substream_rng(seed, "edge_drop", step);
    (0..n).map(|_| rng.gen_bool(p)).collect()
}

fn noise_vectors(seed: u64, step: u64, n: usize, io_dim: usize) -> Vec<Option<EmbedVec>> {
    let mut rng = substream_rng(seed, "noise", step);
    (0..n)
        .map(|_| {
            Some(EmbedVec::new(
                (0..io_dim).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect(),
            ))
        })
        .collect()
}

/// One optimizer step: per-sample edge dropout decided before the forward,
/// then a clipped Adam update at the scheduled learning rate.
pub fn train_step(
    params: &mut PriorParams,
    adam: &mut AdamState,
    batch: &[TrainSample],
    step: u64,
    config: &TrainConfig,
) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(Error::Sequence("empty batch".into()));
    }
    let decisions = edge_drop_decisions(config.seed, step, batch.len(), config.edge_drop_p);
    let mut working: Vec<TrainSample> = batch.to_vec();
    for (sample, &drop) in working.iter_mut().zip(&decisions) {
        if drop {
            sample.seq.drop_edge();
        }
    }
    let noises = if params.config().noise_token {
        noise_vectors(config.seed, step, batch.len(), params.config().io_dim)
    } else {
        Vec::new()
    };
    let (grads, breakdown) = batch_grads(
        params,
        &working,
        &noises,
        &config.loss,
        config.float_mode,
        ParMode::Auto,
    )
    .map_err(|e| match e {
        Error::NumericFault { context, index } => Error::NumericFault {
            context: format!("step {step}: {context}"),
            index,
        },
        other => other,
    })?;
    adam.apply(
        params,
        &grads,
        lr_at(step, config),
        config.grad_clip_norm,
        config.float_mode,
    )?;
    Ok(breakdown)
}

/// Sample indices for one step of the virtual shuffled stream: position
/// `step·B + b` falls in epoch `pos / n` and picks the epoch permutation's
/// `pos % n`-th element.
fn batch_indices(seed: u64, step: u64, batch_size: usize, n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(batch_size);
    let mut cached_epoch = u64::MAX;
    let mut perm: Vec<usize> = Vec::new();
    for b in 0..batch_size {
        let pos = step * batch_size as u64 + b as u64;
        let epoch = pos / n as u64;
        if epoch != cached_epoch {
            perm = (0..n).collect();
            perm.shuffle(&mut substream_rng(seed, "shuffle", epoch));
            cached_epoch = epoch;
        }
        out.push(perm[(pos % n as u64) as usize]);
    }
    out
}

struct TrainLog {
    file: std::fs::File,
    path: PathBuf,
}

impl TrainLog {
    fn open(path: PathBuf, append: bool) -> Result<Self> {
        let exists = path.exists();
        let mut options = std::fs::OpenOptions::new();
        if append && exists {
            options.append(true);
        } else {
            options.write(true).create(true).truncate(true);
        }
        let mut file =
            options.open(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        if !(append && exists) {
            writeln!(file, "step,lr,projection,contrastive,total,ms")
                .map_err(|e| Error::io(path.display().to_string(), e))?;
        }
        Ok(TrainLog { file, path })
    }

    fn row(&mut self, step: u64, lr: f64, b: &LossBreakdown, ms: u128) -> Result<()> {
        writeln!(
            self.file,
            "{step},{lr},{},{},{},{ms}",
            b.projection, b.contrastive, b.total
        )
        .and_then(|_| self.file.flush())
        .map_err(|e| Error::io(self.path.display().to_string(), e))
    }
}

/// Trains from scratch over in-memory samples without any checkpoint or
/// log IO; the ablation driver's workhorse. Returns the trained parameters
/// and the loss trace.
pub fn train_in_memory(
    samples: &[TrainSample],
    prior_config: &PriorConfig,
    config: &TrainConfig,
) -> Result<(PriorParams, Vec<LossBreakdown>)> {
    config.validate()?;
    prior_config.validate()?;
    if samples.is_empty() && config.total_steps > 0 {
        return Err(Error::Config("cannot train on an empty sample set".into()));
    }
    let init_seed = substream_seed(config.seed, "init", 0);
    let mut params = init_params(prior_config, init_seed, config.float_mode)?;
    let mut adam = AdamState::new(&params);
    let mut trace = Vec::with_capacity(config.total_steps as usize);
    for step in 0..config.total_steps {
        let indices = batch_indices(config.seed, step, config.batch_size, samples.len());
        let batch: Vec<TrainSample> = indices.iter().map(|&i| samples[i].clone()).collect();
        trace.push(train_step(&mut params, &mut adam, &batch, step, config)?);
    }
    Ok((params, trace))
}

/// Runs (or resumes) training over a manifest. Batch order, dropout and
/// initialization all derive from the config seed, so identical inputs give
/// byte-identical checkpoints, and resuming from step k replays the exact
/// uninterrupted trajectory.
pub fn run_training(
    manifest_path: &Path,
    prior_config: &PriorConfig,
    config: &TrainConfig,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    prior_config.validate()?;
    let manifest = DatasetManifest::read(manifest_path)?;
    let cache = manifest.open_cache(manifest_path)?;
    let samples = samples_from_manifest(&manifest, &cache)?;
    if samples.is_empty() && config.total_steps > 0 {
        return Err(Error::Config("cannot train on an empty manifest".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;

    let (mut params, mut adam, start_step) = match resume {
        Some(ckpt) => {
            let (params, adam, step) = read_train_checkpoint(ckpt)?;
            if params.config() != prior_config {
                return Err(Error::Config(
                    "resume checkpoint was trained with a different prior config".into(),
                ));
            }
            (params, adam, step)
        }
        None => {
            let init_seed = substream_seed(config.seed, "init", 0);
            let params = init_params(prior_config, init_seed, config.float_mode)?;
            let adam = AdamState::new(&params);
            (params, adam, 0)
        }
    };

    let log_path = out_dir.join("train_log.csv");
    let mut log = TrainLog::open(log_path.clone(), resume.is_some())?;
    let mut last_loss = None;

    for step in start_step..config.total_steps {
        let started = Instant::now();
        let indices = batch_indices(config.seed, step, config.batch_size, samples.len());
        let batch: Vec<TrainSample> = indices.iter().map(|&i| samples[i].clone()).collect();
        let breakdown = train_step(&mut params, &mut adam, &batch, step, config)?;
        log.row(step, lr_at(step, config), &breakdown, started.elapsed().as_millis())?;
        last_loss = Some(breakdown);
        let done = step + 1;
        if config.checkpoint_every > 0
            && done % config.checkpoint_every == 0
            && done < config.total_steps
        {
            write_train_checkpoint(
                &out_dir.join(format!("checkpoint_step{done}.ckpt")),
                &params,
                &adam,
                done,
            )?;
        }
    }

    let final_path = out_dir.join("checkpoint_final.ckpt");
    write_train_checkpoint(&final_path, &params, &adam, config.total_steps)?;
    Ok(TrainOutcome {
        final_checkpoint: final_path,
        log_path,
        start_step,
        end_step: config.total_steps,
        last_loss,
    })
}

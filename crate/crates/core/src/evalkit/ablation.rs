//! The ablation driver: trains one prior per (variant, seed) cell with
//! everything identical except the varied knob, then evaluates every cell
//! on the same held-out split.

use super::metrics::{composition_alignment, concept_alignment};
use super::report::{config_hash, MetricsReport, ReportMetadata};
use crate::embedspace::{grid_smoothness, interp_grid, EmbedVec, InterpKind};
use crate::error::{Error, Result};
use crate::objective::LossConfig;
use crate::par::{map_slice, ParMode};
use crate::prior::{forward, PriorConfig, PriorParams};
use crate::seedstream::substream_seed;
use crate::synthworld::{gen_samples, gen_world, mse_norm, sample_to_train, Split, SynthSample};
use crate::train::{train_in_memory, TrainConfig, TrainSample};

#[derive(Debug, Clone, PartialEq)]
pub struct AblationVariant {
    pub name: String,
    pub loss: LossConfig,
    pub edge_enabled: bool,
}

#[derive(Debug, Clone)]
pub struct AblationSetup {
    pub world: crate::synthworld::WorldSpec,
    pub prior: PriorConfig,
    pub train: TrainConfig,
    pub variants: Vec<AblationVariant>,
    pub seeds: Vec<u64>,
    pub train_samples: usize,
    pub eval_samples: usize,
    pub pool: usize,
}

fn eval_cell(
    setup: &AblationSetup,
    variant: &AblationVariant,
    seed: u64,
    train_set: &[TrainSample],
    eval_set: &[SynthSample],
) -> Result<(f64, f64, f64, f64)> {
    let mut train_cfg = setup.train.clone();
    train_cfg.seed = seed;
    train_cfg.loss = variant.loss.clone();

    let mut working: Vec<TrainSample> = train_set.to_vec();
    if !variant.edge_enabled {
        for s in working.iter_mut() {
            s.seq.drop_edge();
        }
    }
    let (params, _) = train_in_memory(&working, &setup.prior, &train_cfg)?;

    let preds = predict(&params, eval_set, variant.edge_enabled)?;
    let targets: Vec<Vec<f64>> = eval_set.iter().map(|s| s.target.clone()).collect();
    let pooled: Vec<Vec<f64>> = eval_set.iter().map(|s| s.pooled_text.clone()).collect();
    let subjects: Vec<Vec<Vec<f64>>> =
        eval_set.iter().map(|s| s.subject_embeds.clone()).collect();

    let mse = mse_norm(&preds, &targets)?;
    let concept = concept_alignment(&preds, &subjects)?;
    let comp = composition_alignment(
        &preds,
        &pooled,
        setup.pool,
        substream_seed(seed, "comp_pool", 0),
    )?;
    let smoothness = interp_smoothness_of(&preds).unwrap_or(f64::NAN);
    Ok((concept, comp, mse, smoothness))
}

fn predict(
    params: &PriorParams,
    eval_set: &[SynthSample],
    edge_enabled: bool,
) -> Result<Vec<Vec<f64>>> {
    crate::par::map_slice(ParMode::Auto, eval_set, |s| -> Result<Vec<f64>> {
        let mut seq = crate::synthworld::sample_to_sequence(s)?;
        if !edge_enabled {
            seq.drop_edge();
        }
        let out = forward(params, &seq, None, crate::tensorcore::FloatMode::F32)?;
        Ok(out.z_hat.into_values())
    })
    .into_iter()
    .collect()
}

/// Fig-6-style smoothness: a 4×4 slerp grid over the first four predicted
/// embeddings, reported as the largest adjacent-cell cosine gap.
fn interp_smoothness_of(preds: &[Vec<f64>]) -> Result<f64> {
    if preds.len() < 4 {
        return Err(Error::Config("need at least 4 predictions for the grid".into()));
    }
    let corners: Vec<EmbedVec> = preds[..4]
        .iter()
        .map(|p| EmbedVec::new(p.clone()).normalized())
        .collect::<Result<_>>()?;
    let grid = interp_grid(
        &corners[0],
        &corners[1],
        &corners[2],
        &corners[3],
        4,
        4,
        InterpKind::Slerp,
    )?;
    grid_smoothness(&grid)
}

/// Trains and evaluates every (variant, seed) cell. Rows appear
/// variant-major, seed-minor; a failed cell yields NaN metrics with the
/// error recorded in its metadata.
pub fn ablation_run(setup: &AblationSetup, par: ParMode) -> Result<Vec<MetricsReport>> {
    if setup.variants.len() < 2 {
        log::warn!("ablation with {} variant(s); comparisons need at least 2", setup.variants.len());
    }
    if setup.variants.is_empty() || setup.seeds.is_empty() {
        return Err(Error::Config("ablation needs at least one variant and one seed".into()));
    }
    let world = gen_world(&setup.world)?;
    let train_raw = gen_samples(&world, setup.train_samples, Split::Train);
    let train_set: Vec<TrainSample> =
        train_raw.iter().map(sample_to_train).collect::<Result<_>>()?;
    let eval_set = gen_samples(&world, setup.eval_samples, Split::Eval);

    let world_hash = config_hash(&setup.world);
    let prior_hash = config_hash(&setup.prior);
    let cells: Vec<(usize, u64)> = (0..setup.variants.len())
        .flat_map(|v| setup.seeds.iter().map(move |&s| (v, s)))
        .collect();

    let rows: Vec<MetricsReport> = map_slice(par, &cells, |&(vi, seed)| {
        let variant = &setup.variants[vi];
        let mut train_cfg = setup.train.clone();
        train_cfg.seed = seed;
        train_cfg.loss = variant.loss.clone();
        let metadata = ReportMetadata {
            world_hash: world_hash.clone(),
            prior_hash: prior_hash.clone(),
            train_hash: config_hash(&train_cfg),
            loss_hash: config_hash(&variant.loss),
            edge_enabled: variant.edge_enabled,
            error: None,
        };
        match eval_cell(setup, variant, seed, &train_set, &eval_set) {
            Ok((concept, comp, mse, smoothness)) => MetricsReport {
                variant: variant.name.clone(),
                seed,
                concept_align: concept,
                comp_align: comp,
                mse_norm: mse,
                interp_smoothness: smoothness,
                metadata,
            },
            Err(e) => MetricsReport {
                variant: variant.name.clone(),
                seed,
                concept_align: f64::NAN,
                comp_align: f64::NAN,
                mse_norm: f64::NAN,
                interp_smoothness: f64::NAN,
                metadata: ReportMetadata { error: Some(e.to_string()), ..metadata },
            },
        }
    });
    Ok(rows)
}

/// Median over an odd or even count (midpoint average), NaNs excluded.
pub fn median(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.partial_cmp(b).expect("no NaN left"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthworld::WorldSpec;
    use crate::train::ScheduleKind;

    fn tiny_setup() -> AblationSetup {
        AblationSetup {
            world: WorldSpec { io_dim: 16, seed: 2, ..WorldSpec::default() },
            prior: PriorConfig {
                n_layers: 1,
                n_heads: 2,
                head_dim: 4,
                io_dim: 16,
                mlp_ratio: 2,
                n_aux: 4,
                max_seq: 16,
                noise_token: false,
            },
            train: TrainConfig {
                batch_size: 8,
                total_steps: 5,
                warmup_steps: 1,
                peak_lr: 1e-3,
                schedule: ScheduleKind::WarmupCosine,
                ..TrainConfig::default()
            },
            variants: vec![AblationVariant {
                name: "projection_only".into(),
                loss: LossConfig { lambda: 0.0, ..Default::default() },
                edge_enabled: false,
            }],
            seeds: vec![1],
            train_samples: 32,
            eval_samples: 64,
            pool: 8,
        }
    }

    #[test]
    fn single_variant_single_seed_gives_one_row() {
        let rows = ablation_run(&tiny_setup(), ParMode::Sequential).unwrap();
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        assert_eq!(row.variant, "projection_only");
        assert!(row.metadata.error.is_none(), "error: {:?}", row.metadata.error);
        assert!(row.mse_norm.is_finite());
        assert!(row.comp_align.is_finite());
        assert!(row.interp_smoothness.is_finite());
    }

    #[test]
    fn identical_variants_yield_identical_rows() {
        let mut setup = tiny_setup();
        let clone = setup.variants[0].clone();
        setup.variants.push(clone);
        let rows = ablation_run(&setup, ParMode::Sequential).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0], rows[1]);
    }

    #[test]
    fn median_handles_odd_even_and_nan() {
        assert_eq!(median([3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median([4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median([1.0, f64::NAN, 3.0]), 2.0);
        assert!(median(std::iter::empty()).is_nan());
    }
}

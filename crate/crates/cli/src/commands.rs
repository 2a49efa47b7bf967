//! Subcommand implementations. Every command is deterministic for fixed
//! inputs, flags and seeds.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use lambda_prior::dataprep::{
    filter_record, read_records_jsonl, DatasetManifest, EmbeddingCache, FilterOutcome,
    ManifestRecord,
};
use lambda_prior::embedspace::{grid_smoothness, interp_grid, EmbedVec, InterpKind};
use lambda_prior::evalkit::{
    ablation_run, config_hash, median, report_emit, AblationSetup, AblationVariant,
    MetricsReport, ReportMetadata,
};
use lambda_prior::objective::LossConfig;
use lambda_prior::prior::{forward, param_count};
use lambda_prior::synthworld::{
    caption_sequence, gen_dataset, gen_samples, gen_world, mse_norm, retrieval_top1,
    sample_to_sequence, Split,
};
use lambda_prior::train::{gradcheck_objective, load_any_params, run_training, toy_batch};
use lambda_prior::{Error, FloatMode, Result};

use crate::config::RunConfig;

pub fn cmd_synth(config: &RunConfig) -> Result<()> {
    let out = config.out_dir();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(out.display().to_string(), e))?;
    let world = gen_world(&config.world)?;
    config.world.write_sidecar(&out.join("world.json"))?;
    let train = gen_dataset(
        &world,
        config.data.train_samples,
        Split::Train,
        &out.join("train.manifest.json"),
    )?;
    let eval = gen_dataset(
        &world,
        config.data.eval_samples,
        Split::Eval,
        &out.join("eval.manifest.json"),
    )?;
    println!(
        "world {} | train manifest: {} records | eval manifest: {} records",
        config_hash(&config.world),
        train.header.record_count,
        eval.header.record_count
    );
    Ok(())
}

#[derive(Serialize)]
struct RejectionReport {
    total: usize,
    accepted: usize,
    rejected: usize,
    by_rule: BTreeMap<String, usize>,
    rejections: Vec<RejectionRow>,
}

#[derive(Serialize)]
struct RejectionRow {
    image_id: String,
    rule: String,
}

pub fn cmd_prep(config: &RunConfig, records_path: &Path) -> Result<()> {
    let out = config.out_dir();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(out.display().to_string(), e))?;
    let records = read_records_jsonl(records_path)?;
    let mut kept = Vec::new();
    let mut rejections = Vec::new();
    let mut by_rule: BTreeMap<String, usize> = BTreeMap::new();
    for rec in &records {
        match filter_record(rec, &config.filter)? {
            FilterOutcome::Accept { kept_subjects } => {
                kept.push(ManifestRecord {
                    record: rec.retain_subjects(&kept_subjects),
                    refs: None,
                });
            }
            FilterOutcome::Reject { rule } => {
                *by_rule.entry(rule.as_str().to_string()).or_insert(0) += 1;
                rejections.push(RejectionRow {
                    image_id: rec.image_id.clone(),
                    rule: rule.as_str().to_string(),
                });
            }
        }
    }
    let report = RejectionReport {
        total: records.len(),
        accepted: kept.len(),
        rejected: rejections.len(),
        by_rule,
        rejections,
    };
    let manifest = DatasetManifest::new(config.world.io_dim as u32, "", kept);
    manifest.write(&out.join("prep.manifest.json"))?;
    let report_path = out.join("rejections.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)
        .map_err(|e| Error::io(report_path.display().to_string(), e))?;
    println!(
        "{} records: {} accepted, {} rejected",
        report.total, report.accepted, report.rejected
    );
    Ok(())
}

pub fn cmd_train(config: &RunConfig, resume: Option<&Path>) -> Result<()> {
    let out = config.out_dir();
    let manifest_path = out.join("train.manifest.json");
    if !manifest_path.exists() {
        return Err(Error::Config(format!(
            "{} not found; run `synth` first or point --out at a dataset directory",
            manifest_path.display()
        )));
    }
    let outcome = run_training(&manifest_path, &config.prior, &config.train, &out, resume)?;
    match outcome.last_loss {
        Some(loss) => println!(
            "trained steps {}..{} | final total loss {:.6} | checkpoint {}",
            outcome.start_step,
            outcome.end_step,
            loss.total,
            outcome.final_checkpoint.display()
        ),
        None => println!(
            "no steps to run; initial checkpoint at {}",
            outcome.final_checkpoint.display()
        ),
    }
    Ok(())
}

fn predictions_for(
    params: &lambda_prior::prior::PriorParams,
    eval: &[lambda_prior::synthworld::SynthSample],
    mode: FloatMode,
) -> Result<Vec<Vec<f64>>> {
    eval.iter()
        .map(|s| {
            let seq = sample_to_sequence(s)?;
            Ok(forward(params, &seq, None, mode)?.z_hat.into_values())
        })
        .collect()
}

pub fn cmd_eval(config: &RunConfig, checkpoint: &Path) -> Result<()> {
    let out = config.out_dir();
    let params = load_any_params(checkpoint)?;
    if params.config().io_dim != config.world.io_dim {
        return Err(Error::Config(format!(
            "checkpoint io_dim {} != world io_dim {}",
            params.config().io_dim,
            config.world.io_dim
        )));
    }
    let world = gen_world(&config.world)?;
    let eval = gen_samples(&world, config.data.eval_samples, Split::Eval);
    let preds = predictions_for(&params, &eval, config.float_mode())?;

    let targets: Vec<Vec<f64>> = eval.iter().map(|s| s.target.clone()).collect();
    let pooled: Vec<Vec<f64>> = eval.iter().map(|s| s.pooled_text.clone()).collect();
    let subjects: Vec<Vec<Vec<f64>>> = eval.iter().map(|s| s.subject_embeds.clone()).collect();

    let mse = mse_norm(&preds, &targets)?;
    let comp = retrieval_top1(&preds, &pooled, config.data.pool, config.seed)?;
    let concept = lambda_prior::evalkit::concept_alignment(&preds, &subjects)?;
    let smoothness = {
        let corners: Vec<EmbedVec> = preds[..4.min(preds.len())]
            .iter()
            .map(|p| EmbedVec::new(p.clone()).normalized())
            .collect::<Result<_>>()?;
        if corners.len() == 4 {
            grid_smoothness(&interp_grid(
                &corners[0],
                &corners[1],
                &corners[2],
                &corners[3],
                4,
                4,
                InterpKind::Slerp,
            )?)?
        } else {
            f64::NAN
        }
    };

    let report = MetricsReport {
        variant: "eval".into(),
        seed: config.seed,
        concept_align: concept,
        comp_align: comp,
        mse_norm: mse,
        interp_smoothness: smoothness,
        metadata: ReportMetadata {
            world_hash: config_hash(&config.world),
            prior_hash: config_hash(params.config()),
            train_hash: config_hash(&config.train),
            loss_hash: config_hash(&config.loss),
            edge_enabled: true,
            error: None,
        },
    };
    let (csv, json) = report_emit(&[report], &out.join("eval_report"))?;
    println!(
        "mse_norm {mse:.4} | retrieval_top1 {comp:.4} | concept_align {concept:.4} -> {} / {}",
        csv.display(),
        json.display()
    );
    Ok(())
}

/// The four standing ablation variants: projection only, contrastive at two
/// weights, and the edge-conditioned contrastive run.
pub fn standard_variants(base: &LossConfig) -> Vec<AblationVariant> {
    let with_lambda = |lambda: f64| LossConfig { lambda, ..base.clone() };
    vec![
        AblationVariant { name: "projection_only".into(), loss: with_lambda(0.0), edge_enabled: false },
        AblationVariant { name: "contrastive_0.5".into(), loss: with_lambda(0.5), edge_enabled: false },
        AblationVariant { name: "contrastive_0.2".into(), loss: with_lambda(0.2), edge_enabled: false },
        AblationVariant { name: "edge_0.2".into(), loss: with_lambda(0.2), edge_enabled: true },
    ]
}

pub fn cmd_ablate(config: &RunConfig) -> Result<()> {
    let out = config.out_dir();
    let setup = AblationSetup {
        world: config.world.clone(),
        prior: config.prior.clone(),
        train: config.train.clone(),
        variants: standard_variants(&config.loss),
        seeds: config.ablate.seeds.clone(),
        train_samples: config.data.train_samples,
        eval_samples: config.data.eval_samples,
        pool: config.data.pool,
    };
    let rows = ablation_run(&setup, lambda_prior::par::ParMode::Sequential)?;
    let (csv, json) = report_emit(&rows, &out.join("ablation"))?;
    for variant in setup.variants.iter().map(|v| v.name.clone()) {
        let comp = median(rows.iter().filter(|r| r.variant == variant).map(|r| r.comp_align));
        let concept =
            median(rows.iter().filter(|r| r.variant == variant).map(|r| r.concept_align));
        let mse = median(rows.iter().filter(|r| r.variant == variant).map(|r| r.mse_norm));
        println!(
            "{variant}: median concept {concept:.4} | comp {comp:.4} | mse_norm {mse:.4}"
        );
    }
    println!("reports: {} / {}", csv.display(), json.display());
    Ok(())
}

pub fn cmd_interp(config: &RunConfig, checkpoint: &Path, rows: usize, cols: usize) -> Result<()> {
    let out = config.out_dir();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(out.display().to_string(), e))?;
    let params = load_any_params(checkpoint)?;
    let world = gen_world(&config.world)?;

    let corner_specs: Vec<(usize, Vec<String>)> = if config.interp.corners.is_empty() {
        let label = |i: usize| config.world.vocab[i % config.world.vocab.len()].clone();
        (0..4).map(|i| (0usize, vec![label(i)])).collect()
    } else {
        if config.interp.corners.len() != 4 {
            return Err(Error::Config(format!(
                "[interp] needs exactly 4 corners, got {}",
                config.interp.corners.len()
            )));
        }
        config
            .interp
            .corners
            .iter()
            .map(|c| (c.template, c.subjects.clone()))
            .collect()
    };

    let mut corners = Vec::with_capacity(4);
    let mut captions = Vec::with_capacity(4);
    for (template, subjects) in &corner_specs {
        let (seq, caption) = caption_sequence(&world, *template, subjects)?;
        let z_hat = forward(&params, &seq, None, config.float_mode())?.z_hat;
        corners.push(z_hat.normalized()?);
        captions.push(caption.join(" "));
    }
    let grid = interp_grid(
        &corners[0],
        &corners[1],
        &corners[2],
        &corners[3],
        rows,
        cols,
        InterpKind::Slerp,
    )?;
    let smoothness = grid_smoothness(&grid)?;

    let mut cache = EmbeddingCache::new(config.world.io_dim as u32);
    for cell in grid.cells() {
        cache.push(cell.values())?;
    }
    let cache_path = out.join("interp_grid.cache.bin");
    cache.write(&cache_path)?;
    let sidecar = serde_json::json!({
        "rows": rows,
        "cols": cols,
        "corner_captions": captions,
        "interp_smoothness": smoothness,
        "cache": "interp_grid.cache.bin",
    });
    let sidecar_path = out.join("interp_grid.json");
    std::fs::write(&sidecar_path, serde_json::to_string_pretty(&sidecar)?)
        .map_err(|e| Error::io(sidecar_path.display().to_string(), e))?;
    println!(
        "grid {rows}x{cols} | interp_smoothness {smoothness:.6} | {}",
        cache_path.display()
    );
    Ok(())
}

/// Toy-shape gradient check over the full objective. Exit is success only
/// when the max relative error meets the 64-bit tolerance.
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

pub fn cmd_gradcheck(config: &RunConfig) -> Result<bool> {
    let toy = lambda_prior::prior::PriorConfig::toy();
    let params = lambda_prior::prior::init_params(
        &toy,
        lambda_prior::seedstream::substream_seed(config.seed, "init", 0),
        FloatMode::F64,
    )?;
    let samples = toy_batch(&toy, 4, config.seed);
    let report = gradcheck_objective(&params, &samples, &config.loss, 1e-5)?;
    let pass = report.max_rel_err <= GRADCHECK_TOLERANCE;
    println!(
        "gradcheck: {} parameters | max rel err {:.3e} | mean rel err {:.3e} | {}",
        report.per_param.len(),
        report.max_rel_err,
        report.mean_rel_err,
        if pass { "PASS" } else { "FAIL" }
    );
    for p in report.per_param.iter().filter(|p| p.max_rel > GRADCHECK_TOLERANCE) {
        println!("  param {} exceeds tolerance: max rel {:.3e}", p.param, p.max_rel);
    }
    Ok(pass)
}

pub fn cmd_params(config: &RunConfig) -> Result<()> {
    let count = param_count(&config.prior);
    let m = config.prior.model_dim();
    println!(
        "layers {} | heads {}x{} (model_dim {m}) | io_dim {} | mlp_ratio {} | max_seq {}",
        config.prior.n_layers,
        config.prior.n_heads,
        config.prior.head_dim,
        config.prior.io_dim,
        config.prior.mlp_ratio,
        config.prior.max_seq
    );
    println!("parameter count: {count}");
    Ok(())
}

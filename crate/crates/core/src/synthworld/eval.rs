use rand::seq::SliceRandom;
use rand::Rng;

use super::gen::SynthSample;
use crate::error::{Error, Result};
use crate::par::{map_indexed, ParMode};
use crate::seedstream::substream_rng;

/// Retrieval pool size: one positive plus 63 distractors, mirroring a
/// desk-scale batch.
pub const DEFAULT_POOL: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleMetrics {
    /// mean ‖ẑ−z‖² / mean ‖z−z̄‖² over the held-out set.
    pub mse_norm: f64,
    /// Fraction of samples whose prediction's cosine with its own target
    /// attains the maximum over the candidate pool. Exact ties (duplicate
    /// targets) count as hits and are tallied in a logged tie counter; the
    /// reported retrieved candidate is the lowest tying index. A zero-norm
    /// prediction never retrieves.
    pub retrieval_top1: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// mean ‖ẑ−z‖² / mean ‖z−z̄‖²: squared error normalized by the variance of
/// the targets around their centroid.
pub fn mse_norm(preds: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    if preds.is_empty() || preds.len() != targets.len() {
        return Err(Error::ShapeMismatch {
            kernel: "mse_norm",
            detail: format!("{} preds vs {} targets", preds.len(), targets.len()),
        });
    }
    let dim = targets[0].len();
    let mut centroid = vec![0.0; dim];
    for t in targets {
        for (c, &x) in centroid.iter_mut().zip(t) {
            *c += x;
        }
    }
    for c in centroid.iter_mut() {
        *c /= targets.len() as f64;
    }
    let mse: f64 =
        preds.iter().zip(targets).map(|(p, t)| sq_dist(p, t)).sum::<f64>() / preds.len() as f64;
    let variance: f64 =
        targets.iter().map(|t| sq_dist(t, &centroid)).sum::<f64>() / targets.len() as f64;
    Ok(if variance > 0.0 { mse / variance } else { f64::INFINITY })
}

/// Top-1 retrieval over seeded candidate pools: sample i hits when the
/// cosine between `preds[i]` and `refs[i]` attains the maximum over its
/// pool (one positive plus `pool − 1` seeded distractor refs). Exact ties
/// from duplicate refs count as hits and are logged; the retrieved
/// candidate on a tie is the lowest pool index. Zero-norm predictions never
/// retrieve.
pub fn retrieval_top1(
    preds: &[Vec<f64>],
    refs: &[Vec<f64>],
    pool: usize,
    seed: u64,
) -> Result<f64> {
    if pool < 2 {
        return Err(Error::Config(format!("retrieval pool must be >= 2, got {pool}")));
    }
    if preds.len() != refs.len() {
        return Err(Error::ShapeMismatch {
            kernel: "retrieval_top1",
            detail: format!("{} preds vs {} refs", preds.len(), refs.len()),
        });
    }
    if preds.len() < pool {
        return Err(Error::Config(format!(
            "need at least {pool} samples for the retrieval pool, got {}",
            preds.len()
        )));
    }
    let ref_norms: Vec<f64> =
        refs.iter().map(|r| r.iter().map(|&x| x * x).sum::<f64>().sqrt()).collect();

    // (hit, tied) per sample
    let hits: Vec<(bool, bool)> = map_indexed(ParMode::Auto, preds.len(), |i| {
        let pred = &preds[i];
        let pred_norm = pred.iter().map(|&x| x * x).sum::<f64>().sqrt();
        if pred_norm <= 1e-300 {
            return (false, false);
        }
        let mut rng = substream_rng(seed, "pool", i as u64);
        let mut others: Vec<usize> = (0..preds.len()).filter(|&j| j != i).collect();
        others.shuffle(&mut rng);
        others.truncate(pool - 1);
        let own_slot = rng.gen_range(0..pool);
        let mut candidates = others;
        candidates.insert(own_slot, i);

        let sims: Vec<f64> = candidates
            .iter()
            .map(|&j| {
                if ref_norms[j] <= 1e-300 {
                    return f64::NEG_INFINITY;
                }
                let dot: f64 = pred.iter().zip(&refs[j]).map(|(&a, &b)| a * b).sum();
                dot / (pred_norm * ref_norms[j])
            })
            .collect();
        let best = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let hit = sims[own_slot] >= best;
        let tied = hit && sims.iter().enumerate().any(|(s, &v)| s != own_slot && v >= best);
        (hit, tied)
    });
    let ties = hits.iter().filter(|&&(_, t)| t).count();
    if ties > 0 {
        log::info!("retrieval encountered {ties} exact similarity ties (duplicate refs)");
    }
    Ok(hits.iter().filter(|&&(h, _)| h).count() as f64 / preds.len() as f64)
}

/// Evaluates a predictor against a held-out sample set.
pub fn oracle_eval<F>(
    samples: &[SynthSample],
    predictor: F,
    pool: usize,
    seed: u64,
) -> Result<OracleMetrics>
where
    F: Fn(&SynthSample) -> Vec<f64> + Sync + Send,
{
    if pool < 2 {
        return Err(Error::Config(format!("retrieval pool must be >= 2, got {pool}")));
    }
    if samples.len() < pool {
        return Err(Error::Config(format!(
            "need at least {pool} held-out samples for the retrieval pool, got {}",
            samples.len()
        )));
    }
    let dim = samples[0].target.len();
    let predictions: Vec<Vec<f64>> = map_indexed(ParMode::Auto, samples.len(), |i| {
        predictor(&samples[i])
    });
    for (i, p) in predictions.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::ShapeMismatch {
                kernel: "oracle_eval",
                detail: format!("prediction {i} has dim {}, expected {dim}", p.len()),
            });
        }
    }

    let targets: Vec<Vec<f64>> = samples.iter().map(|s| s.target.clone()).collect();
    let normalized_mse = mse_norm(&predictions, &targets)?;
    let retrieval = retrieval_top1(&predictions, &targets, pool, seed)?;

    Ok(OracleMetrics { mse_norm: normalized_mse, retrieval_top1: retrieval })
}

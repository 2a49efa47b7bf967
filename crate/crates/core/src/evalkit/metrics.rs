use crate::error::{Error, Result};
use crate::synthworld::retrieval_top1;

fn cosine_raw(a: &[f64], b: &[f64]) -> Result<f64> {
    let na = a.iter().map(|&x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|&x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Embedding("cosine of a zero-norm vector".into()));
    }
    Ok(a.iter().zip(b).map(|(&x, &y)| x * y).sum::<f64>() / (na * nb))
}

/// Mean over samples of the max-over-subjects cosine between the prediction
/// and the sample's subject embeddings.
pub fn concept_alignment(preds: &[Vec<f64>], subjects: &[Vec<Vec<f64>>]) -> Result<f64> {
    if preds.is_empty() || preds.len() != subjects.len() {
        return Err(Error::ShapeMismatch {
            kernel: "concept_alignment",
            detail: format!("{} preds vs {} subject lists", preds.len(), subjects.len()),
        });
    }
    let mut acc = 0.0;
    for (p, subs) in preds.iter().zip(subjects) {
        if subs.is_empty() {
            return Err(Error::Embedding("sample without subject embeddings".into()));
        }
        let mut best = f64::NEG_INFINITY;
        for s in subs {
            best = best.max(cosine_raw(p, s)?);
        }
        acc += best;
    }
    Ok(acc / preds.len() as f64)
}

/// Top-1 retrieval of each prediction against pooled caption embeddings,
/// over seeded candidate pools (semantics of
/// [`crate::synthworld::retrieval_top1`]).
pub fn composition_alignment(
    preds: &[Vec<f64>],
    pooled_captions: &[Vec<f64>],
    pool: usize,
    seed: u64,
) -> Result<f64> {
    retrieval_top1(preds, pooled_captions, pool, seed)
}

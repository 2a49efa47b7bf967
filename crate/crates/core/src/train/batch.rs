use std::collections::BTreeMap;

use crate::dataprep::InterleavedSequence;
use crate::embedspace::EmbedVec;
use crate::error::{Error, Result};
use crate::objective::{total_loss_graph, LossBreakdown, LossConfig};
use crate::par::{map_indexed, ParMode};
use crate::prior::{forward_graph, PriorParams};
use crate::prior::ForwardGraph;
use crate::tensorcore::{FloatMode, NodeId, Tape, Tensor};

/// One training example: the conditioning sequence, the target image
/// embedding, and the pooled caption embedding for the contrastive term.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub seq: InterleavedSequence,
    pub target: Vec<f64>,
    pub pooled_text: Vec<f64>,
}

fn targets_of(samples: &[TrainSample], io_dim: usize) -> Result<(Tensor, Tensor)> {
    let mut z_x = Vec::with_capacity(samples.len() * io_dim);
    let mut z_y = Vec::with_capacity(samples.len() * io_dim);
    for (i, s) in samples.iter().enumerate() {
        if s.target.len() != io_dim || s.pooled_text.len() != io_dim {
            return Err(Error::Sequence(format!(
                "sample {i}: target dim {} / pooled dim {} != io_dim {io_dim}",
                s.target.len(),
                s.pooled_text.len()
            )));
        }
        z_x.extend_from_slice(&s.target);
        z_y.extend_from_slice(&s.pooled_text);
    }
    Ok((
        Tensor::new(samples.len(), io_dim, z_x)?,
        Tensor::new(samples.len(), io_dim, z_y)?,
    ))
}

/// Per-sample forwards on independent tapes (data-parallel), the batch loss
/// on its own small tape, then seeded backward through each sample's tape.
/// Gradients are summed in sample order, so the result is bit-identical
/// regardless of thread scheduling.
pub fn batch_grads(
    params: &PriorParams,
    samples: &[TrainSample],
    noises: &[Option<EmbedVec>],
    loss_cfg: &LossConfig,
    mode: FloatMode,
    par: ParMode,
) -> Result<(BTreeMap<String, Tensor>, LossBreakdown)> {
    if samples.is_empty() {
        return Err(Error::Sequence("empty batch".into()));
    }
    let io_dim = params.config().io_dim;

    let graphs: Vec<Result<ForwardGraph>> = map_indexed(par, samples.len(), |i| {
        let noise = noises.get(i).and_then(|n| n.as_ref());
        forward_graph(params, &samples[i].seq, noise, mode).map_err(|e| match e {
            Error::NumericFault { context, .. } => Error::NumericFault {
                context: format!("batch sample {i}: {context}"),
                index: i,
            },
            other => other,
        })
    });
    let mut graphs: Vec<ForwardGraph> = graphs.into_iter().collect::<Result<_>>()?;

    let z_hat_rows: Vec<Vec<f64>> =
        graphs.iter().map(|g| g.output_tensor().data().to_vec()).collect();
    let z_hat = Tensor::from_rows(&z_hat_rows)?;
    let (z_x, z_y) = targets_of(samples, io_dim)?;

    let mut loss_tape = Tape::new(mode);
    let pred_node = loss_tape.leaf(z_hat)?;
    let (root, breakdown) = total_loss_graph(&mut loss_tape, pred_node, &z_x, &z_y, loss_cfg)?;
    if !breakdown.total.is_finite() {
        let bad = z_hat_rows
            .iter()
            .position(|r| r.iter().any(|v| !v.is_finite()))
            .unwrap_or(0);
        return Err(Error::NumericFault { context: "batch loss".into(), index: bad });
    }
    let mut loss_grads = loss_tape.backward(root)?;
    let seed_all = loss_grads
        .take(pred_node)
        .ok_or_else(|| Error::Tape("loss did not reach the prediction node".into()))?;

    let seeds: Vec<Tensor> = (0..samples.len())
        .map(|i| Tensor::row(seed_all.row_slice(i).to_vec()))
        .collect::<Result<_>>()?;
    let mut jobs: Vec<(ForwardGraph, Tensor)> = graphs.drain(..).zip(seeds).collect();
    let per_sample: Vec<Result<BTreeMap<String, Tensor>>> = match par {
        ParMode::Sequential => {
            jobs.iter_mut().map(|(graph, seed)| sample_param_grads(graph, seed)).collect()
        }
        ParMode::Auto => {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                jobs.par_iter_mut().map(|(graph, seed)| sample_param_grads(graph, seed)).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                jobs.iter_mut().map(|(graph, seed)| sample_param_grads(graph, seed)).collect()
            }
        }
    };

    let mut total: BTreeMap<String, Tensor> = BTreeMap::new();
    for grads in per_sample {
        for (name, g) in grads? {
            match total.get_mut(&name) {
                Some(acc) => {
                    for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                        *a += b;
                    }
                }
                None => {
                    total.insert(name, g);
                }
            }
        }
    }
    Ok((total, breakdown))
}

fn sample_param_grads(graph: &mut ForwardGraph, seed: &Tensor) -> Result<BTreeMap<String, Tensor>> {
    let mut store = graph.tape.backward_seeded(graph.output, seed)?;
    let mut out = BTreeMap::new();
    for (name, &node) in &graph.param_nodes {
        if let Some(g) = store.take(node) {
            out.insert(name.clone(), g);
        }
    }
    Ok(out)
}

/// Reference path: every sample's forward and the loss recorded on one
/// tape with shared parameter leaves. Used by gradient checks and the
/// chain-equivalence test.
pub fn batch_loss_single_tape(
    params: &PriorParams,
    samples: &[TrainSample],
    noises: &[Option<EmbedVec>],
    loss_cfg: &LossConfig,
    mode: FloatMode,
) -> Result<(Tape, NodeId, BTreeMap<String, NodeId>, LossBreakdown)> {
    if samples.is_empty() {
        return Err(Error::Sequence("empty batch".into()));
    }
    let io_dim = params.config().io_dim;
    let mut tape = Tape::new(mode);
    let mut param_nodes = BTreeMap::new();
    let mut outputs = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let noise = noises.get(i).and_then(|n| n.as_ref());
        let (out, _) =
            crate::prior::record_forward(&mut tape, params, &s.seq, noise, &mut param_nodes)?;
        outputs.push(out);
    }
    let z_hat = tape.concat_rows(&outputs)?;
    let (z_x, z_y) = targets_of(samples, io_dim)?;
    let (root, breakdown) = total_loss_graph(&mut tape, z_hat, &z_x, &z_y, loss_cfg)?;
    Ok((tape, root, param_nodes, breakdown))
}

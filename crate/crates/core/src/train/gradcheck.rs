//! Full-objective gradient verification: the prior forward and both loss
//! terms against central finite differences, parameter by parameter.

use rand::Rng;

use super::batch::{batch_loss_single_tape, TrainSample};
use crate::dataprep::{build_interleaved, InterleaveOptions};
use crate::embedspace::EmbedVec;
use crate::error::Result;
use crate::objective::LossConfig;
use crate::prior::{PriorConfig, PriorParams};
use crate::seedstream::substream_rng;
use crate::tensorcore::{finite_diff_check, FloatMode, GradCheckReport, Tensor};

/// Deterministic toy batch: 6-token captions with one single-token subject
/// span (11 slots), random targets and pooled captions.
pub fn toy_batch(config: &PriorConfig, n: usize, seed: u64) -> Vec<TrainSample> {
    let io = config.io_dim;
    (0..n)
        .map(|i| {
            let mut rng = substream_rng(seed, "toy_batch", i as u64);
            let mut draw = |count: usize| -> Vec<f64> {
                (0..count).map(|_| rng.gen_range(-1.0..1.0)).collect()
            };
            let tokens: Vec<EmbedVec> = (0..6).map(|_| EmbedVec::new(draw(io))).collect();
            let subject = EmbedVec::new(draw(io));
            let edge = if i % 2 == 0 { Some(EmbedVec::new(draw(io))) } else { None };
            let seq = build_interleaved(
                &tokens,
                &[((2, 3), subject)],
                edge,
                InterleaveOptions::default(),
            )
            .expect("toy sequence is well-formed");
            TrainSample { seq, target: draw(io), pooled_text: draw(io) }
        })
        .collect()
}

/// Checks every parameter gradient of the full objective on a batch against
/// finite differences in 64-bit mode. The scalar function re-runs the whole
/// two-stage pipeline at perturbed parameter values; the analytic side comes
/// from one backward pass over the single-tape reference graph.
pub fn gradcheck_objective(
    params: &PriorParams,
    samples: &[TrainSample],
    loss_cfg: &LossConfig,
    step: f64,
) -> Result<GradCheckReport> {
    let names = params.names();
    let tensors: Vec<Tensor> = names
        .iter()
        .map(|n| params.get(n).cloned())
        .collect::<Result<_>>()?;

    let rebuild = |ps: &[Tensor]| -> Result<PriorParams> {
        let map = names
            .iter()
            .cloned()
            .zip(ps.iter().cloned())
            .collect::<std::collections::BTreeMap<_, _>>();
        Ok(PriorParams::from_tensors(params.config().clone(), map))
    };

    let eval = |ps: &[Tensor]| -> Result<f64> {
        let candidate = rebuild(ps)?;
        let (tape, root, _, _) =
            batch_loss_single_tape(&candidate, samples, &[], loss_cfg, FloatMode::F64)?;
        tape.value(root).scalar_value()
    };

    let (mut tape, root, param_nodes, _) =
        batch_loss_single_tape(params, samples, &[], loss_cfg, FloatMode::F64)?;
    let mut store = tape.backward(root)?;
    let analytic: Vec<Tensor> = names
        .iter()
        .map(|n| {
            param_nodes
                .get(n)
                .and_then(|&node| store.take(node))
                .unwrap_or_else(|| {
                    let t = params.get(n).expect("known parameter");
                    Tensor::zeros(t.rows(), t.cols())
                })
        })
        .collect();

    finite_diff_check(eval, &tensors, &analytic, step)
}

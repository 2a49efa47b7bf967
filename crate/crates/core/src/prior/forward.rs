use std::collections::BTreeMap;

use super::params::PriorParams;
use crate::dataprep::{InterleavedSequence, Slot};
use crate::embedspace::EmbedVec;
use crate::error::{Error, Result};
use crate::tensorcore::{FloatMode, NodeId, Tape, Tensor};

/// Predicted image embedding; unnormalized (the projection loss lives in
/// this raw space).
#[derive(Debug, Clone, PartialEq)]
pub struct PriorOutput {
    pub z_hat: EmbedVec,
}

/// A recorded forward pass: the tape, the output node, every parameter's
/// leaf node (for gradient readout), and the attention probability nodes
/// (for the convexity check).
pub struct ForwardGraph {
    pub tape: Tape,
    pub output: NodeId,
    pub param_nodes: BTreeMap<String, NodeId>,
    pub attn_probs: Vec<NodeId>,
}

impl ForwardGraph {
    pub fn output_tensor(&self) -> &Tensor {
        self.tape.value(self.output)
    }
}

struct Builder<'a, 'b> {
    tape: &'b mut Tape,
    params: &'a PriorParams,
    param_nodes: &'b mut BTreeMap<String, NodeId>,
}

impl Builder<'_, '_> {
    fn param(&mut self, name: &str) -> Result<NodeId> {
        if let Some(&id) = self.param_nodes.get(name) {
            return Ok(id);
        }
        let id = self.tape.leaf(self.params.get(name)?.clone())?;
        self.param_nodes.insert(name.to_string(), id);
        Ok(id)
    }
}

/// Records one forward pass on an existing tape, reusing (and extending)
/// `param_nodes` so several samples can share one set of parameter leaves.
/// Returns the output node and the attention probability nodes.
pub(crate) fn record_forward(
    tape: &mut Tape,
    params: &PriorParams,
    seq: &InterleavedSequence,
    noise: Option<&EmbedVec>,
    param_nodes: &mut BTreeMap<String, NodeId>,
) -> Result<(NodeId, Vec<NodeId>)> {
    let config = params.config().clone();
    seq.validate()?;
    if seq.io_dim() != config.io_dim {
        return Err(Error::Sequence(format!(
            "sequence io_dim {} != prior io_dim {}",
            seq.io_dim(),
            config.io_dim
        )));
    }
    let with_noise = match (noise, config.noise_token) {
        (Some(_), false) => {
            return Err(Error::Sequence(
                "noise vector supplied but the noise token is disabled".into(),
            ))
        }
        (noise, true) => noise,
        (None, false) => None,
    };
    let total_len = seq.len() + usize::from(with_noise.is_some());
    if total_len > config.max_seq {
        return Err(Error::Sequence(format!(
            "sequence length {total_len} exceeds max_seq {}",
            config.max_seq
        )));
    }
    if let Some(n) = with_noise {
        if n.dim() != config.io_dim {
            return Err(Error::Sequence(format!(
                "noise dim {} != io_dim {}",
                n.dim(),
                config.io_dim
            )));
        }
    }

    let mut b = Builder { tape, params, param_nodes };

    // io-space slot rows, with learned embeddings as parameter leaves.
    let mut rows: Vec<NodeId> = Vec::with_capacity(seq.len());
    for slot in seq.slots() {
        let id = match slot {
            Slot::Text { embed } | Slot::Subject { embed, .. } => {
                b.tape.leaf(Tensor::row(embed.values().to_vec())?)?
            }
            Slot::Aux { kind, embed } => match embed {
                Some(e) => b.tape.leaf(Tensor::row(e.values().to_vec())?)?,
                None => b.param(&format!("aux_null.{}", kind.null_index()))?,
            },
            Slot::Query => b.param("query_embed")?,
        };
        rows.push(id);
    }
    let io_seq = b.tape.concat_rows(&rows)?;

    let input_proj = b.param("input_proj")?;
    let mut x = b.tape.matmul(io_seq, input_proj)?;

    if let Some(n) = with_noise {
        // The noise slot gets its own learned projection and sits right
        // before the query.
        let noise_leaf = b.tape.leaf(Tensor::row(n.values().to_vec())?)?;
        let noise_proj = b.param("noise_proj")?;
        let noise_row = b.tape.matmul(noise_leaf, noise_proj)?;
        let body = b.tape.slice_rows(x, 0, seq.len() - 1)?;
        let query_row = b.tape.slice_rows(x, seq.len() - 1, 1)?;
        x = b.tape.concat_rows(&[body, noise_row, query_row])?;
    }

    let pos_all = b.param("pos_embed")?;
    let pos = b.tape.slice_rows(pos_all, 0, total_len)?;
    x = b.tape.add(x, pos)?;

    let (heads, head_dim) = (config.n_heads, config.head_dim);
    let scale = 1.0 / (head_dim as f64).sqrt();
    let mut attn_probs = Vec::new();

    for layer in 0..config.n_layers {
        let ln1_g = b.param(&format!("layers.{layer}.ln1.gamma"))?;
        let ln1_b = b.param(&format!("layers.{layer}.ln1.beta"))?;
        let normed = b.tape.layer_norm(x, ln1_g, ln1_b)?;

        let wq = b.param(&format!("layers.{layer}.attn.wq"))?;
        let wk = b.param(&format!("layers.{layer}.attn.wk"))?;
        let wv = b.param(&format!("layers.{layer}.attn.wv"))?;
        let q = b.tape.matmul(normed, wq)?;
        let k = b.tape.matmul(normed, wk)?;
        let v = b.tape.matmul(normed, wv)?;

        let mut contexts = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = b.tape.slice_cols(q, h * head_dim, head_dim)?;
            let kh = b.tape.slice_cols(k, h * head_dim, head_dim)?;
            let vh = b.tape.slice_cols(v, h * head_dim, head_dim)?;
            let kh_t = b.tape.transpose(kh)?;
            let scores = b.tape.matmul(qh, kh_t)?;
            let scaled = b.tape.scale(scores, scale)?;
            let probs = b.tape.softmax_rows(scaled)?;
            attn_probs.push(probs);
            contexts.push(b.tape.matmul(probs, vh)?);
        }
        let merged = b.tape.concat_cols(&contexts)?;
        let wo = b.param(&format!("layers.{layer}.attn.wo"))?;
        let attn_out = b.tape.matmul(merged, wo)?;
        x = b.tape.add(x, attn_out)?;

        let ln2_g = b.param(&format!("layers.{layer}.ln2.gamma"))?;
        let ln2_b = b.param(&format!("layers.{layer}.ln2.beta"))?;
        let normed2 = b.tape.layer_norm(x, ln2_g, ln2_b)?;
        let w_in = b.param(&format!("layers.{layer}.mlp.w_in"))?;
        let w_out = b.param(&format!("layers.{layer}.mlp.w_out"))?;
        let hidden = b.tape.matmul(normed2, w_in)?;
        let activated = b.tape.gelu(hidden)?;
        let mlp_out = b.tape.matmul(activated, w_out)?;
        x = b.tape.add(x, mlp_out)?;
    }

    let query_state = b.tape.slice_rows(x, total_len - 1, 1)?;
    let fg = b.param("final_norm.gamma")?;
    let fb = b.param("final_norm.beta")?;
    let final_normed = b.tape.layer_norm(query_state, fg, fb)?;
    let out_proj = b.param("output_proj")?;
    let output = b.tape.matmul(final_normed, out_proj)?;

    Ok((output, attn_probs))
}

/// Records the full forward pass on a fresh tape.
///
/// Slots are projected to model width, positions added, then `n_layers` of
/// bidirectional pre-norm attention + MLP blocks run; the query slot's
/// final state is normed and projected back to io width.
pub fn forward_graph(
    params: &PriorParams,
    seq: &InterleavedSequence,
    noise: Option<&EmbedVec>,
    mode: FloatMode,
) -> Result<ForwardGraph> {
    let mut tape = Tape::new(mode);
    let mut param_nodes = BTreeMap::new();
    let (output, attn_probs) = record_forward(&mut tape, params, seq, noise, &mut param_nodes)?;
    Ok(ForwardGraph { tape, output, param_nodes, attn_probs })
}

/// Single prediction without keeping the tape.
pub fn forward(
    params: &PriorParams,
    seq: &InterleavedSequence,
    noise: Option<&EmbedVec>,
    mode: FloatMode,
) -> Result<PriorOutput> {
    let graph = forward_graph(params, seq, noise, mode)?;
    let values = graph.output_tensor().data().to_vec();
    Ok(PriorOutput { z_hat: EmbedVec::new(values) })
}

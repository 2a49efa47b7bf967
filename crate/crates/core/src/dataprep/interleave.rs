//! Interleaved-sequence assembly: caption token embeddings with subject
//! spans substituted by vision embeddings, auxiliary condition slots, and
//! one trailing query slot.

use crate::embedspace::EmbedVec;
use crate::error::{Error, Result};

/// Number of auxiliary condition slots; the first is the edge map, the
/// rest are reserved learned-null slots.
pub const AUX_SLOTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxKind {
    Edge,
    Reserved1,
    Reserved2,
    Reserved3,
}

impl AuxKind {
    pub fn all() -> [AuxKind; AUX_SLOTS] {
        [AuxKind::Edge, AuxKind::Reserved1, AuxKind::Reserved2, AuxKind::Reserved3]
    }

    /// Index of this slot's learned null embedding.
    pub fn null_index(self) -> usize {
        match self {
            AuxKind::Edge => 0,
            AuxKind::Reserved1 => 1,
            AuxKind::Reserved2 => 2,
            AuxKind::Reserved3 => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Slot {
    Text { embed: EmbedVec },
    Subject { embed: EmbedVec, span: (usize, usize) },
    /// `None` means the slot resolves to its learned null embedding.
    Aux { kind: AuxKind, embed: Option<EmbedVec> },
    Query,
}

/// Ordered slots: text/subject body, exactly four aux slots, one final
/// query slot.
#[derive(Debug, Clone, PartialEq)]
pub struct InterleavedSequence {
    slots: Vec<Slot>,
    io_dim: usize,
}

impl InterleavedSequence {
    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn io_dim(&self) -> usize {
        self.io_dim
    }

    /// Replaces the edge slot content with the learned null (the training
    /// time condition drop).
    pub fn drop_edge(&mut self) {
        for slot in &mut self.slots {
            if let Slot::Aux { kind: AuxKind::Edge, embed } = slot {
                *embed = None;
            }
        }
    }

    pub fn has_edge_embedding(&self) -> bool {
        self.slots
            .iter()
            .any(|s| matches!(s, Slot::Aux { kind: AuxKind::Edge, embed: Some(_) }))
    }

    /// Structural invariants: exactly four aux slots, unique final query.
    pub fn validate(&self) -> Result<()> {
        let aux = self.slots.iter().filter(|s| matches!(s, Slot::Aux { .. })).count();
        if aux != AUX_SLOTS {
            return Err(Error::Sequence(format!("expected {AUX_SLOTS} aux slots, found {aux}")));
        }
        let queries = self.slots.iter().filter(|s| matches!(s, Slot::Query)).count();
        if queries != 1 || !matches!(self.slots.last(), Some(Slot::Query)) {
            return Err(Error::Sequence("query slot must be unique and final".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct InterleaveOptions {
    /// Replicate the subject embedding once per covered token instead of
    /// collapsing the span to a single slot.
    pub per_token_subject_slots: bool,
}

/// Substitutes bound spans with subject vision embeddings and appends the
/// aux and query slots.
///
/// Tokens inside a bound span are removed and replaced by one subject slot
/// at the span's start (or one per token with
/// [`InterleaveOptions::per_token_subject_slots`]); relative order of all
/// unsubstituted tokens is preserved.
pub fn build_interleaved(
    tokens: &[EmbedVec],
    bindings: &[((usize, usize), EmbedVec)],
    edge: Option<EmbedVec>,
    opts: InterleaveOptions,
) -> Result<InterleavedSequence> {
    let io_dim = tokens
        .first()
        .map(EmbedVec::dim)
        .or_else(|| bindings.first().map(|(_, e)| e.dim()))
        .or_else(|| edge.as_ref().map(EmbedVec::dim))
        .ok_or_else(|| Error::Sequence("cannot infer io_dim from an empty sequence".into()))?;

    for t in tokens {
        if t.dim() != io_dim {
            return Err(Error::Sequence(format!(
                "token dim {} != io_dim {io_dim}",
                t.dim()
            )));
        }
    }
    let mut sorted: Vec<&((usize, usize), EmbedVec)> = bindings.iter().collect();
    sorted.sort_by_key(|((s, _), _)| *s);
    for w in sorted.windows(2) {
        if w[1].0 .0 < w[0].0 .1 {
            return Err(Error::Sequence(format!(
                "overlapping spans [{}, {}) and [{}, {})",
                w[0].0 .0, w[0].0 .1, w[1].0 .0, w[1].0 .1
            )));
        }
    }
    for ((start, end), embed) in &sorted {
        if start >= end || *end > tokens.len() {
            return Err(Error::Sequence(format!(
                "span [{start}, {end}) outside token range 0..{}",
                tokens.len()
            )));
        }
        if embed.dim() != io_dim {
            return Err(Error::Sequence(format!(
                "subject dim {} != io_dim {io_dim}",
                embed.dim()
            )));
        }
    }
    if let Some(e) = &edge {
        if e.dim() != io_dim {
            return Err(Error::Sequence(format!("edge dim {} != io_dim {io_dim}", e.dim())));
        }
    }

    let mut slots = Vec::with_capacity(tokens.len() + AUX_SLOTS + 1);
    let mut next_binding = 0;
    let mut pos = 0;
    while pos < tokens.len() {
        if next_binding < sorted.len() && sorted[next_binding].0 .0 == pos {
            let ((start, end), embed) = sorted[next_binding];
            let copies = if opts.per_token_subject_slots { end - start } else { 1 };
            for _ in 0..copies {
                slots.push(Slot::Subject { embed: embed.clone(), span: (*start, *end) });
            }
            pos = *end;
            next_binding += 1;
        } else {
            slots.push(Slot::Text { embed: tokens[pos].clone() });
            pos += 1;
        }
    }
    let mut edge = edge;
    for kind in AuxKind::all() {
        let embed = if kind == AuxKind::Edge { edge.take() } else { None };
        slots.push(Slot::Aux { kind, embed });
    }
    slots.push(Slot::Query);

    let seq = InterleavedSequence { slots, io_dim };
    seq.validate()?;
    Ok(seq)
}

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;

use super::world::{World, HOLE};
use crate::dataprep::{
    build_interleaved, AnnotationRecord, DatasetManifest, EmbeddingCache, EmbeddingRefs,
    InterleaveOptions, InterleavedSequence, ManifestRecord, SubjectBox, SubjectSpan,
};
use crate::error::{Error, Result};
use crate::par::{map_indexed, ParMode};
use crate::seedstream::substream_rng;
use crate::train::TrainSample;

/// Disjoint sample-index domains for training and held-out evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Eval,
}

impl Split {
    fn offset(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Eval => 1 << 40,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Eval => "eval",
        }
    }
}

/// One generated example with everything needed to reproduce its target.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub record: AnnotationRecord,
    pub caption_tokens: Vec<String>,
    pub token_embeds: Vec<Vec<f64>>,
    pub spans: Vec<(usize, usize)>,
    pub subject_labels: Vec<String>,
    pub subject_embeds: Vec<Vec<f64>>,
    pub edge_embed: Option<Vec<f64>>,
    pub pooled_text: Vec<f64>,
    pub target: Vec<f64>,
}

fn quantize(v: &mut [f64]) {
    for x in v.iter_mut() {
        *x = *x as f32 as f64;
    }
}

/// Plain arithmetic mean; G consumes raw pooled quantities, so the target
/// stays linear in the visible embeddings. Cosine-based consumers normalize
/// on their own.
fn mean_of(rows: &[&Vec<f64>], dim: usize) -> Vec<f64> {
    let mut mean = vec![0.0; dim];
    for row in rows {
        for (m, &x) in mean.iter_mut().zip(row.iter()) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= rows.len() as f64;
    }
    mean
}

fn gen_one(world: &World, split: Split, index: u64) -> SynthSample {
    let spec = &world.spec;
    let group = index / spec.confusability as u64;
    let member = (index % spec.confusability as u64) as usize;
    let mut group_rng = substream_rng(spec.seed, "group", split.offset() + group);

    let template = &spec.templates[group_rng.gen_range(0..spec.templates.len())];
    let holes: Vec<usize> = template
        .iter()
        .enumerate()
        .filter_map(|(i, w)| (w == HOLE).then_some(i))
        .collect();
    let mut hole_subjects: Vec<usize> =
        holes.iter().map(|_| group_rng.gen_range(0..spec.vocab.len())).collect();
    // Confusable members share everything except the last hole's subject.
    let vary = holes.len() - 1;
    hole_subjects[vary] = (hole_subjects[vary] + member) % spec.vocab.len();

    let mut caption_tokens: Vec<String> = Vec::with_capacity(template.len());
    let mut spans = Vec::with_capacity(holes.len());
    let mut subject_labels = Vec::with_capacity(holes.len());
    let mut hole_cursor = 0;
    for word in template {
        if word == HOLE {
            let label = spec.vocab[hole_subjects[hole_cursor]].clone();
            spans.push((caption_tokens.len(), caption_tokens.len() + 1));
            caption_tokens.push(label.clone());
            subject_labels.push(label);
            hole_cursor += 1;
        } else {
            caption_tokens.push(word.clone());
        }
    }

    let mut sample_rng = substream_rng(spec.seed, "sample", split.offset() + index);
    let edge_used = sample_rng.gen_bool(spec.edge_fraction);

    let mut token_embeds: Vec<Vec<f64>> =
        caption_tokens.iter().map(|t| world.token_embedding(t)).collect();
    for t in token_embeds.iter_mut() {
        quantize(t);
    }
    let mut subject_embeds: Vec<Vec<f64>> = subject_labels
        .iter()
        .map(|l| world.subject_latent(l).expect("vocab label").clone())
        .collect();
    for s in subject_embeds.iter_mut() {
        quantize(s);
    }
    let mut edge_embed = edge_used.then(|| {
        let mut rng = substream_rng(spec.seed, "edge", split.offset() + index);
        let v: Vec<f64> =
            (0..spec.io_dim).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let n = v.iter().map(|&x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect::<Vec<f64>>()
    });
    if let Some(e) = edge_embed.as_mut() {
        quantize(e);
    }

    let mut pooled_text = mean_of(&token_embeds.iter().collect::<Vec<_>>(), spec.io_dim);
    quantize(&mut pooled_text);
    let mean_subject = mean_of(&subject_embeds.iter().collect::<Vec<_>>(), spec.io_dim);
    let mut target = world.apply_g(&pooled_text, &mean_subject, edge_embed.as_deref());
    quantize(&mut target);

    // Annotation metadata shaped to pass the default filter rules.
    let n_subjects = subject_labels.len();
    let mut label_counts: BTreeMap<&str, u32> = BTreeMap::new();
    for l in &subject_labels {
        *label_counts.entry(l.as_str()).or_insert(0) += 1;
    }
    let identical = label_counts.values().copied().max().unwrap_or(1);
    let record = AnnotationRecord {
        image_id: format!("{}-{index:010}", split.tag()),
        width: 1024,
        height: 1024,
        caption_tokens: caption_tokens.clone(),
        subject_spans: spans
            .iter()
            .zip(&subject_labels)
            .map(|(&(s, e), label)| SubjectSpan {
                label: label.clone(),
                token_start: s,
                token_end: e,
            })
            .collect(),
        boxes: (0..n_subjects)
            .map(|i| SubjectBox {
                x0: 20.0 + 240.0 * i as f64,
                y0: 100.0,
                x1: 20.0 + 240.0 * i as f64 + 200.0,
                y1: 500.0,
                logit: 0.9,
            })
            .collect(),
        mask_area_px: vec![0.5 * 200.0 * 400.0; n_subjects],
        mask_bg_fraction: vec![0.05; n_subjects],
        identical_object_count: identical,
    };

    SynthSample {
        record,
        caption_tokens,
        token_embeds,
        spans,
        subject_labels,
        subject_embeds,
        edge_embed,
        pooled_text,
        target,
    }
}

/// Generates `n` samples of a split, in index order, parallel per sample.
pub fn gen_samples(world: &World, n: usize, split: Split) -> Vec<SynthSample> {
    map_indexed(ParMode::Auto, n, |i| gen_one(world, split, i as u64))
}

/// Builds the interleaved sequence for an explicit caption: a template with
/// its holes filled by the given subject labels, no edge condition.
pub fn caption_sequence(
    world: &World,
    template_index: usize,
    subjects: &[String],
) -> Result<(InterleavedSequence, Vec<String>)> {
    let spec = &world.spec;
    let template = spec
        .templates
        .get(template_index)
        .ok_or_else(|| Error::Config(format!("template {template_index} out of range")))?;
    let holes = template.iter().filter(|w| *w == HOLE).count();
    if holes != subjects.len() {
        return Err(Error::Config(format!(
            "template {template_index} has {holes} holes, got {} subjects",
            subjects.len()
        )));
    }
    let mut caption = Vec::with_capacity(template.len());
    let mut spans = Vec::with_capacity(holes);
    let mut subject_embeds = Vec::with_capacity(holes);
    let mut cursor = 0;
    for word in template {
        if word == HOLE {
            let label = &subjects[cursor];
            let mut latent = world.subject_latent(label)?.clone();
            quantize(&mut latent);
            spans.push((caption.len(), caption.len() + 1));
            subject_embeds.push(latent);
            caption.push(label.clone());
            cursor += 1;
        } else {
            caption.push(word.clone());
        }
    }
    let tokens: Vec<crate::embedspace::EmbedVec> = caption
        .iter()
        .map(|t| {
            let mut e = world.token_embedding(t);
            quantize(&mut e);
            crate::embedspace::EmbedVec::new(e)
        })
        .collect();
    let bindings: Vec<((usize, usize), crate::embedspace::EmbedVec)> = spans
        .iter()
        .zip(subject_embeds)
        .map(|(&span, embed)| (span, crate::embedspace::EmbedVec::new(embed)))
        .collect();
    let seq = build_interleaved(&tokens, &bindings, None, InterleaveOptions::default())?;
    Ok((seq, caption))
}

/// The interleaved conditioning sequence of a sample.
pub fn sample_to_sequence(sample: &SynthSample) -> Result<InterleavedSequence> {
    let tokens: Vec<crate::embedspace::EmbedVec> = sample
        .token_embeds
        .iter()
        .map(|v| crate::embedspace::EmbedVec::new(v.clone()))
        .collect();
    let bindings: Vec<((usize, usize), crate::embedspace::EmbedVec)> = sample
        .spans
        .iter()
        .zip(&sample.subject_embeds)
        .map(|(&span, embed)| (span, crate::embedspace::EmbedVec::new(embed.clone())))
        .collect();
    let edge = sample.edge_embed.clone().map(crate::embedspace::EmbedVec::new);
    build_interleaved(&tokens, &bindings, edge, InterleaveOptions::default())
}

pub fn sample_to_train(sample: &SynthSample) -> Result<TrainSample> {
    Ok(TrainSample {
        seq: sample_to_sequence(sample)?,
        target: sample.target.clone(),
        pooled_text: sample.pooled_text.clone(),
    })
}

/// Writes a manifest + embedding cache (+ row index sidecar) for `n`
/// samples of a split. Returns the manifest.
pub fn gen_dataset(
    world: &World,
    n: usize,
    split: Split,
    manifest_path: &Path,
) -> Result<DatasetManifest> {
    if n == 0 {
        return Err(Error::Config("dataset size must be at least 1".into()));
    }
    let samples = gen_samples(world, n, split);
    let mut cache = EmbeddingCache::new(world.spec.io_dim as u32);
    let mut index: BTreeMap<String, u32> = BTreeMap::new();
    let mut records = Vec::with_capacity(n);
    for sample in &samples {
        let first_row = cache.len();
        index.insert(sample.record.image_id.clone(), first_row);
        let token_rows: Vec<u32> =
            sample.token_embeds.iter().map(|v| cache.push(v)).collect::<Result<_>>()?;
        let subject_rows: Vec<u32> =
            sample.subject_embeds.iter().map(|v| cache.push(v)).collect::<Result<_>>()?;
        let edge_row = sample.edge_embed.as_ref().map(|v| cache.push(v)).transpose()?;
        let pooled_text_row = cache.push(&sample.pooled_text)?;
        let target_row = cache.push(&sample.target)?;
        records.push(ManifestRecord {
            record: sample.record.clone(),
            refs: Some(EmbeddingRefs {
                token_rows,
                subject_rows,
                edge_row,
                pooled_text_row,
                target_row,
            }),
        });
    }

    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let cache_name = format!(
        "{}.cache.bin",
        manifest_path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset")
    );
    cache.write(&dir.join(&cache_name))?;
    EmbeddingCache::write_index(&dir.join(format!("{cache_name}.idx.json")), &index)?;
    let manifest = DatasetManifest::new(world.spec.io_dim as u32, cache_name, records);
    manifest.write(manifest_path)?;
    Ok(manifest)
}

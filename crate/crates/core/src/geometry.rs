//! Cosine-based geometry metrics: anisotropy baseline, self-similarity,
//! intra-sentence similarity and their baseline-adjusted variants.
//!
//! All accumulation happens in `f64`. Pairwise loops are split by row across
//! threads and the per-row partial sums are added back in row order, so the
//! result does not depend on thread scheduling.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{group_by_token, is_special_token, sample_tokens, EmbeddingCorpus, SampleSpec, TokenRecord};

pub(crate) fn dot<T: Copy + Into<f64>>(u: &[T], v: &[T]) -> f64 {
    u.iter().zip(v).map(|(&a, &b)| a.into() * b.into()).sum()
}

pub(crate) fn norm<T: Copy + Into<f64>>(u: &[T]) -> f64 {
    dot(u, u).sqrt()
}

pub fn cosine<T: Copy + Into<f64>>(u: &[T], v: &[T]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            got: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(dot(u, v) / (nu * nv))
}

/// Checks a common dimension and returns per-vector norms.
pub(crate) fn checked_norms<V: AsRef<[f32]> + Sync>(vectors: &[V]) -> Result<Vec<f64>> {
    let dim = vectors.first().map(|v| v.as_ref().len()).unwrap_or(0);
    vectors
        .iter()
        .map(|v| {
            let v = v.as_ref();
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            match norm(v) {
                n if n == 0.0 => Err(Error::ZeroNorm),
                n => Ok(n),
            }
        })
        .collect()
}

/// Mean cosine over all unordered pairs, with the pair count.
pub fn mean_pairwise_cosine<V: AsRef<[f32]> + Sync>(vectors: &[V]) -> Result<(f64, usize)> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::TooFew { needed: 2, got: n });
    }
    let norms = checked_norms(vectors)?;
    let row_sums: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let u = vectors[i].as_ref();
            ((i + 1)..n)
                .map(|j| dot(u, vectors[j].as_ref()) / (norms[i] * norms[j]))
                .sum::<f64>()
        })
        .collect();
    let pairs = n * (n - 1) / 2;
    Ok((row_sums.iter().sum::<f64>() / pairs as f64, pairs))
}

/// Expected cosine between tokens drawn from different contexts.
///
/// Callers are expected to pass a one-per-sentence sample.
pub fn anisotropy_baseline<V: AsRef<[f32]> + Sync>(samples: &[V]) -> Result<f64> {
    mean_pairwise_cosine(samples).map(|(mean, _)| mean)
}

/// Mean pairwise cosine between occurrences of one token across contexts.
///
/// Returns [`Error::Unqualified`] when there are fewer than two occurrences or
/// they all come from one sentence.
pub fn self_similarity(occurrences: &[&TokenRecord]) -> Result<f64> {
    let token = occurrences.first().map(|r| r.token.clone()).unwrap_or_default();
    if occurrences.len() < 2 {
        return Err(Error::Unqualified {
            token,
            reason: format!("{} occurrence(s)", occurrences.len()),
        });
    }
    let sentences: HashSet<u64> = occurrences.iter().map(|r| r.sentence_id).collect();
    if sentences.len() < 2 {
        return Err(Error::Unqualified {
            token,
            reason: "all occurrences share one sentence".into(),
        });
    }
    mean_pairwise_cosine(occurrences).map(|(mean, _)| mean)
}

/// Mean cosine between each token vector and the mean-pooled sentence vector.
pub fn intra_sentence_similarity(sentence_tokens: &[&TokenRecord]) -> Result<f64> {
    let Some(first) = sentence_tokens.first() else {
        return Err(Error::TooFew { needed: 1, got: 0 });
    };
    if let Some(other) = sentence_tokens.iter().find(|r| r.sentence_id != first.sentence_id) {
        return Err(Error::InvalidArgument(format!(
            "tokens from sentences {} and {}",
            first.sentence_id, other.sentence_id
        )));
    }
    let dim = first.vector.len();
    let mut mean = vec![0.0f64; dim];
    for rec in sentence_tokens {
        if rec.vector.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: rec.vector.len(),
            });
        }
        for (m, &x) in mean.iter_mut().zip(&rec.vector) {
            *m += f64::from(x);
        }
    }
    let n = sentence_tokens.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    let mean_norm = norm(&mean);
    if mean_norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let mut total = 0.0;
    for rec in sentence_tokens {
        let v: Vec<f64> = rec.vector.iter().map(|&x| f64::from(x)).collect();
        let nv = norm(&v);
        if nv == 0.0 {
            return Err(Error::ZeroNorm);
        }
        total += dot(&v, &mean) / (nv * mean_norm);
    }
    Ok(total / n)
}

pub fn mean_l2_norm<V: AsRef<[f32]>>(vectors: &[V]) -> Result<f64> {
    if vectors.is_empty() {
        return Err(Error::TooFew { needed: 1, got: 0 });
    }
    Ok(vectors.iter().map(|v| norm(v.as_ref())).sum::<f64>() / vectors.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerOptions {
    /// Drop `[CLS]`/`[SEP]`-style tokens from intra-sentence pooling.
    pub exclude_specials: bool,
}

/// Per-layer metric bundle. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub layer: u32,
    pub anisotropy_baseline: f64,
    pub mean_self_similarity: f64,
    pub mean_intra_similarity: f64,
    pub adjusted_self_similarity: f64,
    pub adjusted_intra_similarity: f64,
    pub mean_l2_norm: f64,
    pub sample_seed: u64,
    pub n_pairs: usize,
}

impl GeometryReport {
    pub const COLUMNS: [&'static str; 9] = [
        "layer",
        "anisotropy_baseline",
        "mean_self_similarity",
        "mean_intra_similarity",
        "adjusted_self_similarity",
        "adjusted_intra_similarity",
        "mean_l2_norm",
        "sample_seed",
        "n_pairs",
    ];

    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.layer.to_string(),
            self.anisotropy_baseline.to_string(),
            self.mean_self_similarity.to_string(),
            self.mean_intra_similarity.to_string(),
            self.adjusted_self_similarity.to_string(),
            self.adjusted_intra_similarity.to_string(),
            self.mean_l2_norm.to_string(),
            self.sample_seed.to_string(),
            self.n_pairs.to_string(),
        ]
    }
}

/// Unweighted mean of self-similarity over every qualifying token type,
/// with the number of types that qualified.
pub fn mean_self_similarity(corpus: &EmbeddingCorpus, layer: u32) -> Result<(f64, usize)> {
    let groups = group_by_token(corpus, layer)?;
    let groups: Vec<&Vec<&TokenRecord>> = groups.values().collect();
    let values: Vec<Option<f64>> = groups
        .par_iter()
        .map(|occ| match self_similarity(occ) {
            Ok(v) => Ok(Some(v)),
            Err(Error::Unqualified { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let qualifying: Vec<f64> = values.into_iter().flatten().collect();
    if qualifying.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "layer {layer} has no token occurring in two or more sentences"
        )));
    }
    Ok((qualifying.iter().sum::<f64>() / qualifying.len() as f64, qualifying.len()))
}

/// Unweighted mean of intra-sentence similarity over all sentences of a layer.
pub fn mean_intra_similarity(corpus: &EmbeddingCorpus, layer: u32, options: &LayerOptions) -> Result<f64> {
    let sentences = corpus.sentences(layer)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for tokens in sentences.values() {
        let kept: Vec<&TokenRecord> = tokens
            .iter()
            .copied()
            .filter(|r| !(options.exclude_specials && is_special_token(&r.token)))
            .collect();
        if kept.is_empty() {
            continue;
        }
        total += intra_sentence_similarity(&kept)?;
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidArgument(format!("layer {layer} has no sentences")));
    }
    Ok(total / count as f64)
}

pub fn layer_report(
    corpus: &EmbeddingCorpus,
    layer: u32,
    spec: &SampleSpec,
    options: &LayerOptions,
) -> Result<GeometryReport> {
    let sample = sample_tokens(corpus, layer, spec)?;
    let (baseline, n_pairs) = mean_pairwise_cosine(&sample)?;
    let (self_sim, _) = mean_self_similarity(corpus, layer)?;
    let intra = mean_intra_similarity(corpus, layer, options)?;
    Ok(GeometryReport {
        layer,
        anisotropy_baseline: baseline,
        mean_self_similarity: self_sim,
        mean_intra_similarity: intra,
        adjusted_self_similarity: self_sim - baseline,
        adjusted_intra_similarity: intra - baseline,
        mean_l2_norm: mean_l2_norm(&sample)?,
        sample_seed: spec.seed,
        n_pairs,
    })
}

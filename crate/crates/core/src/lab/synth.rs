//! Synthetic paired-sentence data standing in for entailment pairs.
//!
//! The vocabulary is split into a block of function tokens, shared by every
//! topic, followed by one block of content tokens per topic. Both sentences
//! of a pair are drawn from the same topic.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPairSpec {
    pub n_topics: usize,
    /// Training pairs generated per topic.
    pub sentences_per_topic: usize,
    pub tokens_per_sentence: usize,
    pub function_token_ratio: f64,
    /// Per-coordinate standard deviation of the initial token embeddings.
    pub noise_scale: f64,
    /// Length of the offset shared by every initial token embedding.
    pub anisotropy_bias: f64,
    /// Held-out pairs used for checkpoint metrics.
    #[serde(default = "default_eval_pairs")]
    pub eval_pairs: usize,
}

fn default_eval_pairs() -> usize {
    64
}

impl Default for SyntheticPairSpec {
    fn default() -> Self {
        Self {
            n_topics: 16,
            sentences_per_topic: 64,
            tokens_per_sentence: 8,
            function_token_ratio: 0.3,
            noise_scale: 0.25,
            anisotropy_bias: 2.0,
            eval_pairs: default_eval_pairs(),
        }
    }
}

impl SyntheticPairSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_topics == 0 || self.sentences_per_topic == 0 {
            return fail("n_topics and sentences_per_topic must be positive");
        }
        if self.tokens_per_sentence < 2 {
            return fail("tokens_per_sentence must be at least 2");
        }
        if !(0.0..1.0).contains(&self.function_token_ratio) {
            return fail("function_token_ratio must lie in [0, 1)");
        }
        if !(self.noise_scale > 0.0) {
            return fail("noise_scale must be positive");
        }
        if !(self.anisotropy_bias >= 0.0) {
            return fail("anisotropy_bias must be non-negative");
        }
        if self.eval_pairs < 2 {
            return fail("eval_pairs must be at least 2");
        }
        Ok(())
    }

    pub fn train_pairs(&self) -> usize {
        self.n_topics * self.sentences_per_topic
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabLayout {
    pub function: Range<u32>,
    pub topics: Vec<Range<u32>>,
}

impl VocabLayout {
    /// A fifth of the vocabulary (at least one id) is function tokens; the
    /// rest is split evenly across topics, leftovers unused.
    pub fn new(vocab_size: usize, n_topics: usize) -> Result<Self> {
        let n_function = (vocab_size / 5).max(1);
        let per_topic = vocab_size.saturating_sub(n_function) / n_topics.max(1);
        if per_topic == 0 {
            return Err(Error::Config(format!(
                "vocab_size {vocab_size} leaves no content tokens for {n_topics} topics"
            )));
        }
        let topics = (0..n_topics)
            .map(|t| {
                let start = (n_function + t * per_topic) as u32;
                start..start + per_topic as u32
            })
            .collect();
        Ok(Self {
            function: 0..n_function as u32,
            topics,
        })
    }

    pub fn is_function(&self, id: u32) -> bool {
        self.function.contains(&id)
    }

    pub fn topic_of(&self, id: u32) -> Option<usize> {
        self.topics.iter().position(|r| r.contains(&id))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticPair {
    pub topic: usize,
    pub a: Vec<u32>,
    pub b: Vec<u32>,
}

fn sentence(rng: &mut impl Rng, layout: &VocabLayout, topic: usize, spec: &SyntheticPairSpec) -> Vec<u32> {
    (0..spec.tokens_per_sentence)
        .map(|_| {
            let range = if rng.random_bool(spec.function_token_ratio) {
                layout.function.clone()
            } else {
                layout.topics[topic].clone()
            };
            rng.random_range(range)
        })
        .collect()
}

fn pairs(spec: &SyntheticPairSpec, vocab_size: usize, seed: u64, label: &str, per_topic: usize) -> Result<Vec<SyntheticPair>> {
    spec.validate()?;
    let layout = VocabLayout::new(vocab_size, spec.n_topics)?;
    let mut rng = rng_for(seed, label);
    let mut out = Vec::with_capacity(spec.n_topics * per_topic);
    for topic in 0..spec.n_topics {
        for _ in 0..per_topic {
            let a = sentence(&mut rng, &layout, topic, spec);
            let b = sentence(&mut rng, &layout, topic, spec);
            out.push(SyntheticPair { topic, a, b });
        }
    }
    Ok(out)
}

/// Training pairs, `sentences_per_topic` per topic, grouped by topic.
pub fn generate_pairs(spec: &SyntheticPairSpec, vocab_size: usize, seed: u64) -> Result<Vec<SyntheticPair>> {
    pairs(spec, vocab_size, seed, "lab/train-pairs", spec.sentences_per_topic)
}

/// Held-out pairs from an independent stream, topics assigned round-robin.
pub fn generate_eval_pairs(spec: &SyntheticPairSpec, vocab_size: usize, seed: u64) -> Result<Vec<SyntheticPair>> {
    spec.validate()?;
    let layout = VocabLayout::new(vocab_size, spec.n_topics)?;
    let mut rng = rng_for(seed, "lab/eval-pairs");
    Ok((0..spec.eval_pairs)
        .map(|k| {
            let topic = k % spec.n_topics;
            let a = sentence(&mut rng, &layout, topic, spec);
            let b = sentence(&mut rng, &layout, topic, spec);
            SyntheticPair { topic, a, b }
        })
        .collect())
}

//! Contrastive training loop with checkpointed geometry metrics.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoder::{backward, encode, Encoded, EncoderParams, Pooling};
use super::loss::symmetric_info_nce_grad;
use super::synth::{generate_eval_pairs, generate_pairs, SyntheticPair, SyntheticPairSpec};
use crate::error::{Error, Result};
use crate::geometry::{layer_report, GeometryReport, LayerOptions};
use crate::seed::{derive_seed, rng_for};
use crate::store::{EmbeddingCorpus, SampleSpec, TokenRecord};

/// Temperatures around the commonly used optimum, spaced by factors of two.
pub const TEMPERATURE_GRID_BASE2: [f64; 3] = [0.025, 0.05, 0.1];
/// Temperatures spaced by orders of magnitude.
pub const TEMPERATURE_GRID_DECADE: [f64; 5] = [0.001, 0.01, 0.05, 0.1, 1.0];
pub const BATCH_SIZE_GRID: [usize; 3] = [16, 64, 256];

/// Layer index of raw token embeddings in the evaluation corpus.
pub const EVAL_RAW_LAYER: u32 = 0;
/// Layer index of contextual (output) vectors in the evaluation corpus.
pub const EVAL_OUTPUT_LAYER: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub tau: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub pooling: Pooling,
    pub seed: u64,
    pub record_every: usize,
    pub dim: usize,
    pub vocab_size: usize,
    pub warmup_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tau: 0.05,
            batch_size: 64,
            steps: 500,
            learning_rate: 0.075,
            pooling: Pooling::Mean,
            seed: 42,
            record_every: 50,
            dim: 32,
            vocab_size: 200,
            warmup_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.tau > 0.0) {
            return fail(format!("tau must be positive, got {}", self.tau));
        }
        if self.batch_size < 2 {
            return fail("batch_size must be at least 2".into());
        }
        if self.steps == 0 || self.record_every == 0 {
            return fail("steps and record_every must be positive".into());
        }
        if self.record_every > self.steps {
            return fail("record_every may not exceed steps".into());
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return fail("learning_rate must be finite and non-negative".into());
        }
        if self.dim == 0 || self.vocab_size == 0 {
            return fail("dim and vocab_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return fail("warmup_fraction must lie in [0, 1)".into());
        }
        Ok(())
    }

    pub fn warmup_steps(&self) -> usize {
        (self.warmup_fraction * self.steps as f64).ceil() as usize
    }

    /// Linear warm-up from `lr / warmup` to `lr`, then constant.
    pub fn learning_rate_at(&self, step: usize) -> f64 {
        let warmup = self.warmup_steps();
        if step < warmup {
            self.learning_rate * (step + 1) as f64 / warmup as f64
        } else {
            self.learning_rate
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub loss: f64,
    pub report: GeometryReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainTrajectory {
    pub points: Vec<TrajectoryPoint>,
    pub config: TrainConfig,
    pub data: SyntheticPairSpec,
}

impl TrainTrajectory {
    pub fn first(&self) -> &TrajectoryPoint {
        &self.points[0]
    }

    pub fn last(&self) -> &TrajectoryPoint {
        self.points.last().expect("trajectory always holds step 0")
    }
}

/// Encodes every sentence of the evaluation pairs into a two-layer corpus:
/// layer 0 holds raw embeddings, layer 1 contextual vectors. Sentence `2k` and
/// `2k + 1` are the two sides of pair `k`.
pub fn encode_eval_corpus(params: &EncoderParams, pairs: &[SyntheticPair], pooling: Pooling) -> Result<EmbeddingCorpus> {
    let sentences: Vec<&[u32]> = pairs.iter().flat_map(|p| [p.a.as_slice(), p.b.as_slice()]).collect();
    let encoded: Vec<Encoded> = sentences
        .iter()
        .map(|s| encode(params, s, pooling))
        .collect::<Result<_>>()?;
    let mut records = Vec::new();
    for (layer, pick) in [(EVAL_RAW_LAYER, true), (EVAL_OUTPUT_LAYER, false)] {
        for (sid, (ids, enc)) in sentences.iter().zip(&encoded).enumerate() {
            for (pos, &id) in ids.iter().enumerate() {
                let v = if pick { &enc.raw[pos] } else { &enc.hidden[pos] };
                records.push(TokenRecord {
                    index: records.len() as u64,
                    layer,
                    sentence_id: sid as u64,
                    position: pos as u32,
                    token: format!("tok{id}"),
                    vector: v.iter().map(|&x| x as f32).collect(),
                });
            }
        }
    }
    EmbeddingCorpus::new("isolab-synthetic-encoder", params.dim, None, records)
}

struct BatchOutcome {
    loss: f64,
    grads: EncoderParams,
}

fn batch_gradient(params: &EncoderParams, pairs: &[&SyntheticPair], tau: f64, pooling: Pooling) -> Result<BatchOutcome> {
    let enc_a: Vec<Encoded> = pairs.iter().map(|p| encode(params, &p.a, pooling)).collect::<Result<_>>()?;
    let enc_b: Vec<Encoded> = pairs.iter().map(|p| encode(params, &p.b, pooling)).collect::<Result<_>>()?;
    let pooled_a: Vec<&[f64]> = enc_a.iter().map(|e| e.pooled.as_slice()).collect();
    let pooled_b: Vec<&[f64]> = enc_b.iter().map(|e| e.pooled.as_slice()).collect();
    let g = symmetric_info_nce_grad(&pooled_a, &pooled_b, tau)?;
    let mut grads = EncoderParams::zeros(params.dim, params.vocab_size);
    for (k, p) in pairs.iter().enumerate() {
        backward(params, &p.a, &enc_a[k], pooling, &g.anchors[k], &mut grads);
        backward(params, &p.b, &enc_b[k], pooling, &g.positives[k], &mut grads);
    }
    Ok(BatchOutcome { loss: g.loss, grads })
}

/// Symmetric InfoNCE of a pair batch and its parameter gradient.
pub fn batch_loss_and_grad(
    params: &EncoderParams,
    pairs: &[&SyntheticPair],
    tau: f64,
    pooling: Pooling,
) -> Result<(f64, EncoderParams)> {
    batch_gradient(params, pairs, tau, pooling).map(|o| (o.loss, o.grads))
}

struct Evaluator {
    pairs: Vec<SyntheticPair>,
    sample: SampleSpec,
    tau: f64,
    pooling: Pooling,
}

impl Evaluator {
    fn checkpoint(&self, params: &EncoderParams, step: usize) -> Result<TrajectoryPoint> {
        let refs: Vec<&SyntheticPair> = self.pairs.iter().collect();
        let loss = batch_gradient(params, &refs, self.tau, self.pooling)?.loss;
        let corpus = encode_eval_corpus(params, &self.pairs, self.pooling)?;
        let report = layer_report(&corpus, EVAL_OUTPUT_LAYER, &self.sample, &LayerOptions::default())?;
        Ok(TrajectoryPoint { step, loss, report })
    }
}

/// Trains the encoder with bidirectional InfoNCE and plain gradient descent.
///
/// Metrics are recorded on held-out pairs at step 0, every `record_every`
/// steps, and at the final step. A non-finite loss or parameter aborts with
/// [`Error::Diverged`] carrying the checkpoints recorded so far.
pub fn train(config: &TrainConfig, data: &SyntheticPairSpec) -> Result<TrainTrajectory> {
    config.validate()?;
    data.validate()?;
    let train_pairs = generate_pairs(data, config.vocab_size, config.seed)?;
    if train_pairs.len() < config.batch_size {
        return Err(Error::Config(format!(
            "{} training pairs cannot fill a batch of {}",
            train_pairs.len(),
            config.batch_size
        )));
    }
    let eval_pairs = generate_eval_pairs(data, config.vocab_size, config.seed)?;
    let evaluator = Evaluator {
        sample: SampleSpec::one_per_sentence(eval_pairs.len() * 2, derive_seed(config.seed, "lab/eval-sample")),
        pairs: eval_pairs,
        tau: config.tau,
        pooling: config.pooling,
    };

    let mut init_rng = rng_for(config.seed, "lab/init");
    let mut params = EncoderParams::init(config.dim, config.vocab_size, data.anisotropy_bias, data.noise_scale, &mut init_rng);
    let mut batch_rng: ChaCha8Rng = rng_for(config.seed, "lab/batches");
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    let mut cursor = order.len();

    let mut trajectory = TrainTrajectory {
        points: vec![evaluator.checkpoint(&params, 0)?],
        config: config.clone(),
        data: data.clone(),
    };

    for step in 0..config.steps {
        if cursor + config.batch_size > order.len() {
            order.shuffle(&mut batch_rng);
            cursor = 0;
        }
        let batch: Vec<&SyntheticPair> = order[cursor..cursor + config.batch_size]
            .iter()
            .map(|&i| &train_pairs[i])
            .collect();
        cursor += config.batch_size;

        let outcome = match batch_gradient(&params, &batch, config.tau, config.pooling) {
            Ok(o) if o.loss.is_finite() => o,
            Ok(_) | Err(Error::ZeroNorm) => {
                return Err(Error::Diverged {
                    step,
                    trajectory: Box::new(trajectory),
                })
            }
            Err(e) => return Err(e),
        };
        params.add_scaled(-config.learning_rate_at(step), &outcome.grads);
        if !params.is_finite() {
            return Err(Error::Diverged {
                step: step + 1,
                trajectory: Box::new(trajectory),
            });
        }

        let done = step + 1;
        if done % config.record_every == 0 || done == config.steps {
            match evaluator.checkpoint(&params, done) {
                Ok(point) if point.loss.is_finite() => trajectory.points.push(point),
                Ok(_) | Err(Error::ZeroNorm) => {
                    return Err(Error::Diverged {
                        step: done,
                        trajectory: Box::new(trajectory),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(trajectory)
}

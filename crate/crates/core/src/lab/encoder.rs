//! A one-layer contextual encoder with hand-written backpropagation.
//!
//! For a sentence `x_1..x_n`: `r_i = E[x_i]`, `m = mean_j r_j`,
//! `h_i = tanh(A r_i + B m + b)`, and the sentence vector pools `{h_i}`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Mean,
    /// First position.
    Cls,
    /// Coordinatewise maximum.
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub dim: usize,
    pub vocab_size: usize,
    /// `vocab_size x dim`, row-major.
    pub embedding: Vec<f64>,
    /// `A`, `dim x dim`, row-major.
    pub token_mix: Vec<f64>,
    /// `B`, `dim x dim`, row-major.
    pub context_mix: Vec<f64>,
    pub bias: Vec<f64>,
}

impl EncoderParams {
    pub fn zeros(dim: usize, vocab_size: usize) -> Self {
        Self {
            dim,
            vocab_size,
            embedding: vec![0.0; vocab_size * dim],
            token_mix: vec![0.0; dim * dim],
            context_mix: vec![0.0; dim * dim],
            bias: vec![0.0; dim],
        }
    }

    /// Token embeddings share one random unit direction scaled by
    /// `anisotropy_bias`, plus i.i.d. Gaussian noise of std `noise_scale`.
    /// `A` starts near `0.5 I`, `B` near zero.
    pub fn init(dim: usize, vocab_size: usize, anisotropy_bias: f64, noise_scale: f64, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(dim, vocab_size);
        let mut gauss = || -> f64 { StandardNormal.sample(&mut *rng) };
        let mut shared: Vec<f64> = (0..dim).map(|_| gauss()).collect();
        let len = shared.iter().map(|x| x * x).sum::<f64>().sqrt();
        shared.iter_mut().for_each(|x| *x /= len);
        for row in p.embedding.chunks_exact_mut(dim) {
            for (e, s) in row.iter_mut().zip(&shared) {
                *e = anisotropy_bias * s + noise_scale * gauss();
            }
        }
        let mix_scale = 0.1 / (dim as f64).sqrt();
        for r in 0..dim {
            for c in 0..dim {
                let diag = if r == c { 0.5 } else { 0.0 };
                p.token_mix[r * dim + c] = diag + mix_scale * gauss();
                p.context_mix[r * dim + c] = mix_scale * gauss();
            }
        }
        p
    }

    pub fn token(&self, id: u32) -> &[f64] {
        let i = id as usize * self.dim;
        &self.embedding[i..i + self.dim]
    }

    /// Every parameter slice, in a fixed order.
    pub fn blocks(&self) -> [&[f64]; 4] {
        [&self.embedding, &self.token_mix, &self.context_mix, &self.bias]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.embedding, &mut self.token_mix, &mut self.context_mix, &mut self.bias]
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &EncoderParams) {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += alpha * s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|x| x.is_finite()))
    }
}

fn matvec_add(out: &mut [f64], m: &[f64], x: &[f64]) {
    let dim = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o += m[r * dim..(r + 1) * dim].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    /// `r_i`, the raw token embeddings.
    pub raw: Vec<Vec<f64>>,
    pub context: Vec<f64>,
    /// `h_i`, the contextual token vectors.
    pub hidden: Vec<Vec<f64>>,
    pub pooled: Vec<f64>,
    /// For max pooling, the position that won each coordinate.
    max_positions: Vec<usize>,
}

pub fn encode(params: &EncoderParams, token_ids: &[u32], pooling: Pooling) -> Result<Encoded> {
    if token_ids.is_empty() {
        return Err(Error::InvalidArgument("cannot encode an empty sentence".into()));
    }
    if let Some(&bad) = token_ids.iter().find(|&&t| t as usize >= params.vocab_size) {
        return Err(Error::InvalidArgument(format!(
            "token id {bad} outside vocabulary of {}",
            params.vocab_size
        )));
    }
    let dim = params.dim;
    let n = token_ids.len() as f64;
    let raw: Vec<Vec<f64>> = token_ids.iter().map(|&t| params.token(t).to_vec()).collect();
    let mut context = vec![0.0; dim];
    for r in &raw {
        context.iter_mut().zip(r).for_each(|(c, x)| *c += x);
    }
    context.iter_mut().for_each(|c| *c /= n);

    let mut shared = params.bias.clone();
    matvec_add(&mut shared, &params.context_mix, &context);
    let hidden: Vec<Vec<f64>> = raw
        .iter()
        .map(|r| {
            let mut z = shared.clone();
            matvec_add(&mut z, &params.token_mix, r);
            z.iter().map(|v| v.tanh()).collect()
        })
        .collect();

    let mut max_positions = Vec::new();
    let pooled = match pooling {
        Pooling::Mean => (0..dim)
            .map(|d| hidden.iter().map(|h| h[d]).sum::<f64>() / n)
            .collect(),
        Pooling::Cls => hidden[0].clone(),
        Pooling::Max => {
            max_positions = (0..dim)
                .map(|d| {
                    (1..hidden.len()).fold(0, |best, i| if hidden[i][d] > hidden[best][d] { i } else { best })
                })
                .collect();
            max_positions.iter().enumerate().map(|(d, &i)| hidden[i][d]).collect()
        }
    };
    Ok(Encoded {
        raw,
        context,
        hidden,
        pooled,
        max_positions,
    })
}

/// Accumulates into `grads` the gradient of a scalar whose derivative with
/// respect to the pooled vector is `d_pooled`.
pub fn backward(
    params: &EncoderParams,
    token_ids: &[u32],
    encoded: &Encoded,
    pooling: Pooling,
    d_pooled: &[f64],
    grads: &mut EncoderParams,
) {
    let dim = params.dim;
    let len = token_ids.len();
    let n = len as f64;

    let mut d_hidden = vec![vec![0.0; dim]; len];
    match pooling {
        Pooling::Mean => {
            for dh in &mut d_hidden {
                dh.iter_mut().zip(d_pooled).for_each(|(a, g)| *a = g / n);
            }
        }
        Pooling::Cls => d_hidden[0].copy_from_slice(d_pooled),
        Pooling::Max => {
            for (d, &i) in encoded.max_positions.iter().enumerate() {
                d_hidden[i][d] = d_pooled[d];
            }
        }
    }

    let mut d_context = vec![0.0; dim];
    let mut d_raw = vec![vec![0.0; dim]; len];
    for i in 0..len {
        let dz: Vec<f64> = d_hidden[i]
            .iter()
            .zip(&encoded.hidden[i])
            .map(|(g, h)| g * (1.0 - h * h))
            .collect();
        for r in 0..dim {
            if dz[r] == 0.0 {
                continue;
            }
            let row = r * dim..(r + 1) * dim;
            for (c, (ga, gb)) in grads.token_mix[row.clone()]
                .iter_mut()
                .zip(&mut grads.context_mix[row.clone()])
                .enumerate()
            {
                *ga += dz[r] * encoded.raw[i][c];
                *gb += dz[r] * encoded.context[c];
            }
            grads.bias[r] += dz[r];
            for c in 0..dim {
                d_raw[i][c] += params.token_mix[r * dim + c] * dz[r];
                d_context[c] += params.context_mix[r * dim + c] * dz[r];
            }
        }
    }
    for (i, &t) in token_ids.iter().enumerate() {
        let row = &mut grads.embedding[t as usize * dim..(t as usize + 1) * dim];
        for c in 0..dim {
            row[c] += d_raw[i][c] + d_context[c] / n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> EncoderParams {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut p = EncoderParams::init(5, 12, 0.8, 0.5, &mut rng);
        for (i, b) in p.bias.iter_mut().enumerate() {
            *b = 0.05 * i as f64 - 0.1;
        }
        p
    }

    #[test]
    fn single_token_mean_pool_is_hidden() {
        let p = params();
        let e = encode(&p, &[3], Pooling::Mean).unwrap();
        assert_eq!(e.pooled, e.hidden[0]);
    }

    #[test]
    fn mean_and_max_ignore_token_order() {
        let p = params();
        for pooling in [Pooling::Mean, Pooling::Max] {
            let a = encode(&p, &[1, 4, 7, 2], pooling).unwrap().pooled;
            let b = encode(&p, &[7, 2, 1, 4], pooling).unwrap().pooled;
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let p = params();
        assert!(encode(&p, &[], Pooling::Mean).is_err());
        assert!(encode(&p, &[12], Pooling::Mean).is_err());
    }

    #[test]
    fn pooled_gradients_match_finite_differences() {
        let tokens = [2u32, 5, 2, 9];
        let weights = [0.7, -1.3, 0.4, 1.1, -0.2];
        let objective = |p: &EncoderParams, pooling| -> f64 {
            let e = encode(p, &tokens, pooling).unwrap();
            e.pooled.iter().zip(&weights).map(|(a, w)| a * w).sum()
        };
        for pooling in [Pooling::Mean, Pooling::Cls, Pooling::Max] {
            let p = params();
            let e = encode(&p, &tokens, pooling).unwrap();
            let mut g = EncoderParams::zeros(p.dim, p.vocab_size);
            backward(&p, &tokens, &e, pooling, &weights, &mut g);

            let h = 1e-5;
            let mut worst = 0.0f64;
            for block in 0..4 {
                for idx in 0..p.blocks()[block].len() {
                    let mut plus = p.clone();
                    plus.blocks_mut()[block][idx] += h;
                    let mut minus = p.clone();
                    minus.blocks_mut()[block][idx] -= h;
                    let fd = (objective(&plus, pooling) - objective(&minus, pooling)) / (2.0 * h);
                    let an = g.blocks()[block][idx];
                    let err = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-6);
                    worst = worst.max(err);
                }
            }
            assert!(worst < 1e-5, "{pooling:?}: {worst}");
        }
    }
}

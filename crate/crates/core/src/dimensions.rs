//! Per-dimension decomposition of the anisotropy estimate and rogue-dimension
//! analysis.
//!
//! For a sample of vectors, the expected contribution of dimension `i` is the
//! mean over unordered pairs of `u_i v_i / (|u| |v|)`. These contributions sum
//! to the mean pairwise cosine of the sample.
//!
//! Rogue ranking orders dimensions by `|contribution|` (ties to the lower
//! index). Shares are taken over the absolute contribution mass in that order,
//! which keeps them monotone in `k` and ending at exactly 1. They are only
//! defined when the signed total (the anisotropy estimate) is positive.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{checked_norms, dot};
use crate::stats::pearson;

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceProfile {
    pub layer: u32,
    pub contributions: Vec<f64>,
    /// Dimensions by descending `|contribution|`, ties to the lower index.
    pub sorted_indices: Vec<usize>,
    /// Signed sum of contributions.
    pub total: f64,
    /// Entry `k - 1` is the share of the top-`k` dimensions. `None` when the
    /// total is not positive.
    pub cumulative_topk: Option<Vec<f64>>,
}

impl DominanceProfile {
    pub fn from_contributions(layer: u32, contributions: Vec<f64>) -> Self {
        let mut sorted_indices: Vec<usize> = (0..contributions.len()).collect();
        sorted_indices.sort_by(|&a, &b| {
            contributions[b]
                .abs()
                .total_cmp(&contributions[a].abs())
                .then(a.cmp(&b))
        });
        let total: f64 = contributions.iter().sum();
        let cumulative_topk = (total > 0.0).then(|| {
            let mut running = 0.0;
            let prefix: Vec<f64> = sorted_indices
                .iter()
                .map(|&i| {
                    running += contributions[i].abs();
                    running
                })
                .collect();
            let mass = running;
            prefix.into_iter().map(|p| p / mass).collect()
        });
        Self {
            layer,
            contributions,
            sorted_indices,
            total,
            cumulative_topk,
        }
    }

    pub fn dim(&self) -> usize {
        self.contributions.len()
    }

    pub fn is_defined(&self) -> bool {
        self.cumulative_topk.is_some()
    }

    fn shares(&self) -> Result<&[f64]> {
        self.cumulative_topk
            .as_deref()
            .ok_or(Error::DominanceUndefined(self.total))
    }

    /// How far the top-`k` share exceeds the `k / D` a uniform spread would give.
    pub fn excess_over_uniform(&self, k: usize) -> Result<f64> {
        Ok(topk_share(self, k)? - k as f64 / self.dim() as f64)
    }
}

/// Exact per-dimension contributions via the pair-sum identity
/// `sum_{i<j} a_i a_j = ((sum a)^2 - sum a^2) / 2` on unit-normalized vectors.
pub fn dim_contributions<V: AsRef<[f32]> + Sync>(layer: u32, samples: &[V]) -> Result<DominanceProfile> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::TooFew { needed: 2, got: n });
    }
    let norms = checked_norms(samples)?;
    let dim = samples[0].as_ref().len();
    let mut sum = vec![0.0f64; dim];
    let mut sum_sq = vec![0.0f64; dim];
    for (v, &nv) in samples.iter().zip(&norms) {
        for ((s, q), &x) in sum.iter_mut().zip(sum_sq.iter_mut()).zip(v.as_ref()) {
            let a = f64::from(x) / nv;
            *s += a;
            *q += a * a;
        }
    }
    let denom = (n * (n - 1)) as f64;
    let contributions = sum.iter().zip(&sum_sq).map(|(s, q)| (s * s - q) / denom).collect();
    Ok(DominanceProfile::from_contributions(layer, contributions))
}

/// Smallest number of top dimensions whose share reaches `fraction`.
pub fn dims_for_fraction(profile: &DominanceProfile, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("fraction {fraction} outside (0, 1]")));
    }
    let shares = profile.shares()?;
    Ok(shares.iter().position(|&s| s >= fraction).map_or(shares.len(), |i| i + 1))
}

pub fn topk_share(profile: &DominanceProfile, k: usize) -> Result<f64> {
    if k == 0 || k > profile.dim() {
        return Err(Error::InvalidArgument(format!("k = {k} outside 1..={}", profile.dim())));
    }
    Ok(profile.shares()?[k - 1])
}

/// Zeroes the `k` most dominant coordinates of `vector`.
pub fn remove_top_dims(vector: &[f32], profile: &DominanceProfile, k: usize) -> Result<Vec<f32>> {
    if vector.len() != profile.dim() {
        return Err(Error::DimensionMismatch {
            expected: profile.dim(),
            got: vector.len(),
        });
    }
    if k >= profile.dim() {
        return Err(Error::KOutOfRange { k, dim: profile.dim() });
    }
    let mut out = vector.to_vec();
    for &i in &profile.sorted_indices[..k] {
        out[i] = 0.0;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InformativityResult {
    pub k: usize,
    pub r: f64,
    pub r_squared: f64,
    pub n_pairs: usize,
}

impl InformativityResult {
    pub const COLUMNS: [&'static str; 4] = ["k", "r", "r_squared", "n_pairs"];

    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.k.to_string(),
            self.r.to_string(),
            self.r_squared.to_string(),
            self.n_pairs.to_string(),
        ]
    }
}

/// Strict lower triangle of the pairwise cosine matrix, row-major
/// (`(1,0), (2,0), (2,1), ...`).
pub fn lower_triangle_cosines<V: AsRef<[f32]> + Sync>(vectors: &[V]) -> Result<Vec<f64>> {
    let norms = checked_norms(vectors)?;
    let rows: Vec<Vec<f64>> = (0..vectors.len())
        .into_par_iter()
        .map(|i| {
            let u = vectors[i].as_ref();
            (0..i)
                .map(|j| dot(u, vectors[j].as_ref()) / (norms[i] * norms[j]))
                .collect()
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

/// Correlation between pairwise similarities before and after zeroing the
/// top-`k` rogue dimensions of every vector.
pub fn informativity<V: AsRef<[f32]> + Sync>(
    samples: &[V],
    profile: &DominanceProfile,
    k: usize,
) -> Result<InformativityResult> {
    if samples.len() < 3 {
        return Err(Error::TooFew {
            needed: 3,
            got: samples.len(),
        });
    }
    let post: Vec<Vec<f32>> = samples
        .iter()
        .map(|v| remove_top_dims(v.as_ref(), profile, k))
        .collect::<Result<_>>()?;
    let original = lower_triangle_cosines(samples)?;
    let reduced = lower_triangle_cosines(&post)?;
    let r = pearson(&original, &reduced)?;
    Ok(InformativityResult {
        k,
        r,
        r_squared: r * r,
        n_pairs: original.len(),
    })
}

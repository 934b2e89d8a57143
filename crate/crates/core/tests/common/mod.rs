#![allow(dead_code)]

pub mod golden;
pub mod oracle;

use std::path::{Path, PathBuf};

use isolab::frequency::SscRecord;
use isolab::lab::{info_nce_grad, info_nce_loss};
use isolab::store::TokenRecord;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform coordinates in [-1, 1) plus `offset` on a random shared direction.
pub fn random_vectors(rng: &mut impl Rng, n: usize, dim: usize, offset: f32) -> Vec<Vec<f32>> {
    let dir: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    (0..n)
        .map(|_| {
            (0..dim)
                .map(|d| rng.random_range(-1.0f32..1.0) + offset * dir[d])
                .collect()
        })
        .collect()
}

pub fn to_f64(vs: &[Vec<f32>]) -> Vec<Vec<f64>> {
    vs.iter().map(|v| v.iter().map(|&x| x as f64).collect()).collect()
}

/// Occurrences of one token spread over at least two sentences.
pub fn random_occurrences(rng: &mut impl Rng, n: usize, dim: usize) -> Vec<TokenRecord> {
    let offset = rng.random_range(0.0f32..3.0);
    random_vectors(rng, n, dim, offset)
        .into_iter()
        .enumerate()
        .map(|(i, vector)| TokenRecord {
            index: i as u64,
            layer: 0,
            sentence_id: (i % (n / 2).max(2)) as u64,
            position: i as u32,
            token: "w".into(),
            vector,
        })
        .collect()
}

pub fn random_sentence(rng: &mut impl Rng, n: usize, dim: usize) -> Vec<TokenRecord> {
    let offset = rng.random_range(0.0f32..3.0);
    random_vectors(rng, n, dim, offset)
        .into_iter()
        .enumerate()
        .map(|(i, vector)| TokenRecord {
            index: i as u64,
            layer: 0,
            sentence_id: 0,
            position: i as u32,
            token: format!("t{i}"),
            vector,
        })
        .collect()
}

/// SSC lists over the same token order; values are correlated and drawn
/// from a coarse grid so ties occur.
pub fn random_ssc_lists(rng: &mut impl Rng, n: usize) -> (Vec<SscRecord>, Vec<SscRecord>) {
    let rec = |i: usize, ssc: f64| SscRecord {
        token_string: format!("tok{i}"),
        frequency: n - i,
        ssc,
        ss_vanilla: 0.0,
        ss_finetuned: 0.0,
        ani_vanilla: 0.0,
        ani_finetuned: 0.0,
    };
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for i in 0..n {
        let x = rng.random_range(-8i32..8) as f64 / 16.0;
        let y = x + rng.random_range(-4i32..4) as f64 / 16.0;
        a.push(rec(i, x));
        b.push(rec(i, y));
    }
    (a, b)
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Worst coordinate error relative to the largest gradient entry.
pub fn fd_relative_error(anchors: &[Vec<f64>], positives: &[Vec<f64>], tau: f64, h: f64) -> f64 {
    let g = info_nce_grad(anchors, positives, tau).unwrap();
    let scale = g
        .anchors
        .iter()
        .chain(&g.positives)
        .flatten()
        .fold(0.0f64, |m, x| m.max(x.abs()));
    let mut worst = 0.0f64;
    for side in 0..2 {
        let n = anchors.len();
        for i in 0..n {
            for d in 0..anchors[0].len() {
                let bump = |delta: f64| {
                    let (mut a, mut p) = (anchors.to_vec(), positives.to_vec());
                    if side == 0 {
                        a[i][d] += delta;
                    } else {
                        p[i][d] += delta;
                    }
                    info_nce_loss(&a, &p, tau).unwrap()
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                let an = if side == 0 { g.anchors[i][d] } else { g.positives[i][d] };
                worst = worst.max((fd - an).abs() / scale);
            }
        }
    }
    worst
}

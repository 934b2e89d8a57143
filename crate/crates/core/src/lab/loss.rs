//! InfoNCE with cosine similarity, its analytic gradient, and the closed-form
//! loss bounds obtained when every in-batch negative sits at similarity 0
//! (upper bound) or -1 (lower bound).

use crate::error::{Error, Result};
use crate::geometry::{dot, norm};

/// Numerically stable `ln(1 + e^x)`.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn check_batch<V: AsRef<[f64]>>(anchors: &[V], positives: &[V], tau: f64) -> Result<Vec<f64>> {
    if anchors.len() != positives.len() {
        return Err(Error::DimensionMismatch {
            expected: anchors.len(),
            got: positives.len(),
        });
    }
    if anchors.len() < 2 {
        return Err(Error::TooFew {
            needed: 2,
            got: anchors.len(),
        });
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    let dim = anchors[0].as_ref().len();
    anchors
        .iter()
        .chain(positives)
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

/// Cosine similarity matrix `S[i][j] = cos(anchor_i, positive_j)`.
pub fn similarity_matrix<V: AsRef<[f64]>>(anchors: &[V], positives: &[V]) -> Result<Vec<Vec<f64>>> {
    let norms = check_batch(anchors, positives, 1.0)?;
    let n = anchors.len();
    Ok(anchors
        .iter()
        .enumerate()
        .map(|(i, a)| {
            positives
                .iter()
                .enumerate()
                .map(|(j, p)| dot(a.as_ref(), p.as_ref()) / (norms[i] * norms[n + j]))
                .collect()
        })
        .collect())
}

/// Mean over rows of `logsumexp_j(S_ij / tau) - S_ii / tau`.
///
/// Each row is evaluated as `ln(1 + sum_{j != i} e^{d_j})` with
/// `d_j = (S_ij - S_ii) / tau`, which keeps full relative precision when the
/// loss is tiny.
pub fn loss_from_similarities(sim: &[Vec<f64>], tau: f64) -> f64 {
    let n = sim.len();
    let mut total = 0.0;
    for (i, row) in sim.iter().enumerate() {
        let d: Vec<f64> = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, s)| (s - row[i]) / tau)
            .collect();
        let m = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        total += if m <= 0.0 {
            d.iter().map(|x| x.exp()).sum::<f64>().ln_1p()
        } else {
            m + ((-m).exp() + d.iter().map(|x| (x - m).exp()).sum::<f64>()).ln()
        };
    }
    total / n as f64
}

/// `dL/dS` for [`loss_from_similarities`]: `(softmax_ij - [i == j]) / (N tau)`.
pub fn similarity_grad(sim: &[Vec<f64>], tau: f64) -> Vec<Vec<f64>> {
    let n = sim.len() as f64;
    sim.iter()
        .enumerate()
        .map(|(i, row)| {
            let logits: Vec<f64> = row.iter().map(|s| s / tau).collect();
            let lse = log_sum_exp(&logits);
            logits
                .iter()
                .enumerate()
                .map(|(j, l)| ((l - lse).exp() - if i == j { 1.0 } else { 0.0 }) / (n * tau))
                .collect()
        })
        .collect()
}

pub fn info_nce_loss<V: AsRef<[f64]>>(anchors: &[V], positives: &[V], tau: f64) -> Result<f64> {
    check_batch(anchors, positives, tau)?;
    Ok(loss_from_similarities(&similarity_matrix(anchors, positives)?, tau))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchGrad {
    pub loss: f64,
    pub anchors: Vec<Vec<f64>>,
    pub positives: Vec<Vec<f64>>,
}

/// Loss and its gradient with respect to every anchor and positive coordinate.
pub fn info_nce_grad<V: AsRef<[f64]>>(anchors: &[V], positives: &[V], tau: f64) -> Result<BatchGrad> {
    let norms = check_batch(anchors, positives, tau)?;
    let n = anchors.len();
    let dim = anchors[0].as_ref().len();
    let sim = similarity_matrix(anchors, positives)?;
    let g = similarity_grad(&sim, tau);

    let mut grad_a = vec![vec![0.0; dim]; n];
    let mut grad_p = vec![vec![0.0; dim]; n];
    for i in 0..n {
        let a = anchors[i].as_ref();
        let na = norms[i];
        for j in 0..n {
            let p = positives[j].as_ref();
            let np = norms[n + j];
            let (gij, sij) = (g[i][j], sim[i][j]);
            for d in 0..dim {
                grad_a[i][d] += gij * (p[d] / (na * np) - sij * a[d] / (na * na));
                grad_p[j][d] += gij * (a[d] / (na * np) - sij * p[d] / (np * np));
            }
        }
    }
    Ok(BatchGrad {
        loss: loss_from_similarities(&sim, tau),
        anchors: grad_a,
        positives: grad_p,
    })
}

/// Average of the anchor-to-positive and positive-to-anchor losses.
pub fn symmetric_info_nce_grad<V: AsRef<[f64]>>(anchors: &[V], positives: &[V], tau: f64) -> Result<BatchGrad> {
    let forward = info_nce_grad(anchors, positives, tau)?;
    let backward = info_nce_grad(positives, anchors, tau)?;
    let avg = |x: Vec<Vec<f64>>, y: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        x.into_iter()
            .zip(y)
            .map(|(u, v)| u.iter().zip(&v).map(|(a, b)| 0.5 * (a + b)).collect())
            .collect()
    };
    Ok(BatchGrad {
        loss: 0.5 * (forward.loss + backward.loss),
        anchors: avg(forward.anchors, backward.positives),
        positives: avg(forward.positives, backward.anchors),
    })
}

fn check_bound_args(s: f64, tau: f64, n: usize) -> Result<()> {
    if !(-1.0..=1.0).contains(&s) {
        return Err(Error::InvalidArgument(format!("similarity {s} outside [-1, 1]")));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    if n < 2 {
        return Err(Error::TooFew { needed: 2, got: n });
    }
    Ok(())
}

/// Loss with positive similarity `s` and all `n - 1` negatives at similarity 0:
/// `-ln(e^{s/tau} / (e^{s/tau} + n - 1))`.
pub fn loss_upper_bound(s: f64, tau: f64, n: usize) -> Result<f64> {
    check_bound_args(s, tau, n)?;
    Ok(softplus(((n - 1) as f64).ln() - s / tau))
}

/// Loss with positive similarity `s` and all `n - 1` negatives at similarity -1:
/// `-ln(e^{(s+1)/tau} / (e^{(s+1)/tau} + n - 1))`.
pub fn loss_lower_bound(s: f64, tau: f64, n: usize) -> Result<f64> {
    check_bound_args(s, tau, n)?;
    Ok(softplus(((n - 1) as f64).ln() - (s + 1.0) / tau))
}

/// `lower(s, 2 tau, n) - upper(s, tau, n)`; zero exactly when `s = 1`.
pub fn bound_gap(s: f64, tau: f64, n: usize) -> Result<f64> {
    Ok(loss_lower_bound(s, 2.0 * tau, n)? - loss_upper_bound(s, tau, n)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_n() {
        let v = vec![vec![0.3, -1.2, 2.0]; 8];
        let loss = info_nce_loss(&v, &v, 0.05).unwrap();
        assert!((loss - 8f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn two_pair_closed_form() {
        let a = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let loss = info_nce_loss(&a, &a, 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((loss - (-(e / (e + 1.0)).ln())).abs() < 1e-12);
        assert!((loss - 0.31326168751822286).abs() < 1e-12);
    }

    #[test]
    fn pushing_a_negative_away_lowers_loss() {
        let anchors = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let mut positives = anchors.clone();
        positives[1] = vec![0.5, 1.0, 0.0];
        let before = info_nce_loss(&anchors, &positives, 0.1).unwrap();
        positives[1] = vec![0.2, 1.0, 0.0];
        let after = info_nce_loss(&anchors, &positives, 0.1).unwrap();
        assert!(after < before);
    }

    #[test]
    fn rejects_bad_batches() {
        let one = vec![vec![1.0, 0.0]];
        assert!(matches!(info_nce_loss(&one, &one, 0.1), Err(Error::TooFew { .. })));
        let z = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        assert!(matches!(info_nce_loss(&z, &z, 0.1), Err(Error::ZeroNorm)));
        let ok = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(info_nce_loss(&ok, &ok, 0.0).is_err());
    }

    #[test]
    fn equivalent_negatives_get_equal_gradients() {
        // anchor 0 sees positives 1 and 2 at the same similarity
        let anchors = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let positives = vec![vec![1.0, 0.2, 0.2], vec![0.3, 1.0, 0.0], vec![0.3, 0.0, 1.0]];
        let g = info_nce_grad(&anchors, &positives, 0.1).unwrap();
        assert!((g.anchors[0][1] - g.anchors[0][2]).abs() < 1e-12);
    }

    #[test]
    fn bound_values() {
        let up = loss_upper_bound(0.99, 0.05, 64).unwrap();
        assert!((up - (63.0 * (-19.8f64).exp()).ln_1p()).abs() < 1e-20);
        assert!((up - 1.58e-7).abs() < 0.01e-7);
        let low = loss_lower_bound(0.99, 0.1, 64).unwrap();
        assert!((low - 1.43e-7).abs() < 0.01e-7);
        assert!((loss_upper_bound(0.0, 0.3, 2).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((loss_lower_bound(-1.0, 0.3, 64).unwrap() - 64f64.ln()).abs() < 1e-12);
        assert_eq!(bound_gap(1.0, 0.05, 64).unwrap(), 0.0);
        assert!(loss_upper_bound(1.5, 0.1, 4).is_err());
        assert!(loss_upper_bound(0.5, 0.1, 1).is_err());
    }

    proptest::proptest! {
        #[test]
        fn lower_never_exceeds_upper(s in -1.0f64..1.0, tau in 0.001f64..2.0, n in 2usize..1024) {
            proptest::prop_assert!(loss_lower_bound(s, tau, n).unwrap() <= loss_upper_bound(s, tau, n).unwrap());
        }

        #[test]
        fn upper_decreases_in_s(s in -0.99f64..0.99, tau in 0.01f64..1.0, n in 2usize..512) {
            proptest::prop_assert!(loss_upper_bound(s + 0.01, tau, n).unwrap() <= loss_upper_bound(s, tau, n).unwrap());
        }

        #[test]
        fn rescaling_one_embedding_leaves_loss(scale in 0.01f64..100.0, idx in 0usize..4) {
            let a = vec![vec![0.3, 1.0, -0.2], vec![1.0, 0.1, 0.4], vec![-0.5, 0.2, 0.9], vec![0.7, -0.6, 0.1]];
            let p = vec![vec![0.2, 0.9, 0.0], vec![0.8, 0.3, 0.5], vec![-0.4, 0.1, 1.0], vec![0.6, -0.5, 0.3]];
            let base = info_nce_loss(&a, &p, 0.07).unwrap();
            let mut a2 = a.clone();
            a2[idx].iter_mut().for_each(|x| *x *= scale);
            proptest::prop_assert!((info_nce_loss(&a2, &p, 0.07).unwrap() - base).abs() < 1e-9);
        }
    }
}

//! Straightforward double-precision reference implementations, written
//! without sharing code or summation strategy with the library.

pub fn cos(u: &[f64], v: &[f64]) -> f64 {
    let mut uv = 0.0;
    let mut uu = 0.0;
    let mut vv = 0.0;
    for k in 0..u.len() {
        uv += u[k] * v[k];
        uu += u[k] * u[k];
        vv += v[k] * v[k];
    }
    uv / (uu.sqrt() * vv.sqrt())
}

/// Mean cosine over ordered pairs `i != j`.
pub fn mean_pairwise_cosine(vs: &[Vec<f64>]) -> f64 {
    let n = vs.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                total += cos(&vs[i], &vs[j]);
            }
        }
    }
    total / (n * (n - 1)) as f64
}

pub fn anisotropy(vs: &[Vec<f64>]) -> f64 {
    mean_pairwise_cosine(vs)
}

pub fn self_similarity(occurrences: &[Vec<f64>]) -> f64 {
    mean_pairwise_cosine(occurrences)
}

pub fn intra_sentence(tokens: &[Vec<f64>]) -> f64 {
    let dim = tokens[0].len();
    let mean: Vec<f64> = (0..dim)
        .map(|d| tokens.iter().map(|t| t[d]).sum::<f64>() / tokens.len() as f64)
        .collect();
    tokens.iter().map(|t| cos(t, &mean)).sum::<f64>() / tokens.len() as f64
}

/// `E_{i != j} [ u_d v_d / (|u| |v|) ]` for every dimension `d`.
pub fn contributions(vs: &[Vec<f64>]) -> Vec<f64> {
    let n = vs.len();
    let dim = vs[0].len();
    let norms: Vec<f64> = vs.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let mut out = vec![0.0; dim];
    for (d, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    acc += vs[i][d] * vs[j][d] / (norms[i] * norms[j]);
                }
            }
        }
        *slot = acc / (n * (n - 1)) as f64;
    }
    out
}

/// Indices by repeated selection of the largest `|c|`, lowest index on ties.
pub fn rogue_order(c: &[f64]) -> Vec<usize> {
    let mut left: Vec<usize> = (0..c.len()).collect();
    let mut order = Vec::new();
    while !left.is_empty() {
        let mut best = 0;
        for p in 1..left.len() {
            if c[left[p]].abs() > c[left[best]].abs() {
                best = p;
            }
        }
        order.push(left.remove(best));
    }
    order
}

/// Pearson r through the pairwise-difference identity
/// `cov ~ sum_{a<b} (x_a - x_b)(y_a - y_b)`. `None` for constant input.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for a in 0..n {
        for b in (a + 1)..n {
            let dx = xs[a] - xs[b];
            let dy = ys[a] - ys[b];
            sxy += dx * dy;
            sxx += dx * dx;
            syy += dy * dy;
        }
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Informativity `r` after zeroing the `k` top rogue dimensions.
pub fn informativity(vs: &[Vec<f64>], k: usize) -> f64 {
    let order = rogue_order(&contributions(vs));
    let reduced: Vec<Vec<f64>> = vs
        .iter()
        .map(|v| {
            let mut w = v.clone();
            for &d in &order[..k] {
                w[d] = 0.0;
            }
            w
        })
        .collect();
    let n = vs.len();
    let mut before = Vec::new();
    let mut after = Vec::new();
    for i in 0..n {
        for j in 0..i {
            before.push(cos(&vs[i], &vs[j]));
            after.push(cos(&reduced[i], &reduced[j]));
        }
    }
    pearson(&before, &after).expect("non-constant similarities")
}

/// Prefix correlations for `n = 1..=len`, plus the first `n` reaching the maximum.
pub fn correlation_curve(xs: &[f64], ys: &[f64]) -> (Vec<Option<f64>>, Option<(usize, f64)>) {
    let curve: Vec<Option<f64>> = (1..=xs.len())
        .map(|n| if n < 3 { None } else { pearson(&xs[..n], &ys[..n]) })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in curve.iter().enumerate() {
        if let Some(c) = *c {
            match best {
                Some((_, b)) if c <= b => {}
                _ => best = Some((i + 1, c)),
            }
        }
    }
    (curve, best)
}

/// `-log softmax` of the diagonal, averaged over rows, directly from the definition.
pub fn info_nce(anchors: &[Vec<f64>], positives: &[Vec<f64>], tau: f64) -> f64 {
    let n = anchors.len();
    let mut total = 0.0;
    for i in 0..n {
        let denom: f64 = (0..n).map(|j| (cos(&anchors[i], &positives[j]) / tau).exp()).sum();
        total -= ((cos(&anchors[i], &positives[i]) / tau).exp() / denom).ln();
    }
    total / n as f64
}

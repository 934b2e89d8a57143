//! Self-similarity change (SSC) between a vanilla and a fine-tuned corpus of
//! the same sentences, and the prefix-correlation curve used to check that
//! SSC patterns agree across two model families.

use indexmap::IndexMap;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{anisotropy_baseline, self_similarity};
use crate::stats::pearson;
use crate::store::{group_by_token, is_special_token, sample_tokens, EmbeddingCorpus, SampleSpec, TokenRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct TopTokens {
    /// `(token, occurrence count)`, most frequent first.
    pub tokens: Vec<(String, usize)>,
    /// False when fewer than the requested number of tokens qualified.
    pub complete: bool,
}

fn qualifies(occurrences: &[&TokenRecord]) -> bool {
    occurrences.len() >= 2
        && occurrences
            .iter()
            .any(|r| r.sentence_id != occurrences[0].sentence_id)
}

/// Most frequent tokens of a layer whose self-similarity is defined.
///
/// Ties keep first-appearance order.
pub fn top_frequent_tokens(
    corpus: &EmbeddingCorpus,
    layer: u32,
    n: usize,
    skip_specials: bool,
) -> Result<TopTokens> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let groups = group_by_token(corpus, layer)?;
    let mut ranked: Vec<(String, usize)> = groups
        .iter()
        .filter(|(tok, occ)| qualifies(occ) && !(skip_specials && is_special_token(tok)))
        .map(|(tok, occ)| (tok.clone(), occ.len()))
        .collect();
    // stable: equal counts stay in first-appearance order
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    let complete = ranked.len() >= n;
    if !complete {
        log::warn!("only {} qualifying tokens, {n} requested", ranked.len());
    }
    ranked.truncate(n);
    Ok(TopTokens {
        tokens: ranked,
        complete,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SscRecord {
    pub token_string: String,
    pub frequency: usize,
    pub ssc: f64,
    pub ss_vanilla: f64,
    pub ss_finetuned: f64,
    pub ani_vanilla: f64,
    pub ani_finetuned: f64,
}

impl SscRecord {
    pub const COLUMNS: [&'static str; 7] = [
        "token_string",
        "frequency",
        "ssc",
        "ss_vanilla",
        "ss_finetuned",
        "ani_vanilla",
        "ani_finetuned",
    ];

    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.token_string.clone(),
            self.frequency.to_string(),
            self.ssc.to_string(),
            self.ss_vanilla.to_string(),
            self.ss_finetuned.to_string(),
            self.ani_vanilla.to_string(),
            self.ani_finetuned.to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedToken {
    pub token: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SscTable {
    pub records: Vec<SscRecord>,
    pub skipped: Vec<SkippedToken>,
    pub ani_vanilla: f64,
    pub ani_finetuned: f64,
}

fn self_similarity_of(groups: &IndexMap<String, Vec<&TokenRecord>>, token: &str) -> Result<f64> {
    match groups.get(token) {
        Some(occ) => self_similarity(occ),
        None => Err(Error::Unqualified {
            token: token.to_string(),
            reason: "absent".into(),
        }),
    }
}

/// Computes `(ss_f - ani_f) - (ss_v - ani_v)` for each token, in input order.
///
/// Both baselines use the same sample spec. Tokens absent or unqualified in
/// either corpus are skipped and reported.
pub fn ssc_table(
    vanilla: &EmbeddingCorpus,
    finetuned: &EmbeddingCorpus,
    layer: u32,
    tokens: &[String],
    spec: &SampleSpec,
) -> Result<SscTable> {
    let ani_vanilla = anisotropy_baseline(&sample_tokens(vanilla, layer, spec)?)?;
    let ani_finetuned = anisotropy_baseline(&sample_tokens(finetuned, layer, spec)?)?;
    let groups_v = group_by_token(vanilla, layer)?;
    let groups_f = group_by_token(finetuned, layer)?;

    let mut records = Vec::with_capacity(tokens.len());
    let mut skipped = Vec::new();
    for token in tokens {
        let pair = self_similarity_of(&groups_v, token)
            .and_then(|v| self_similarity_of(&groups_f, token).map(|f| (v, f)));
        match pair {
            Ok((ss_vanilla, ss_finetuned)) => records.push(SscRecord {
                token_string: token.clone(),
                frequency: groups_v[token.as_str()].len(),
                ssc: (ss_finetuned - ani_finetuned) - (ss_vanilla - ani_vanilla),
                ss_vanilla,
                ss_finetuned,
                ani_vanilla,
                ani_finetuned,
            }),
            Err(Error::Unqualified { reason, .. }) => {
                log::warn!("skipping token {token:?}: {reason}");
                skipped.push(SkippedToken {
                    token: token.clone(),
                    reason,
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(SscTable {
        records,
        skipped,
        ani_vanilla,
        ani_finetuned,
    })
}

/// Restricts two SSC lists to their shared tokens, in the order of `a`.
///
/// Returns the aligned lists and the tokens of `a` that `b` lacks.
pub fn align(a: &[SscRecord], b: &[SscRecord]) -> (Vec<SscRecord>, Vec<SscRecord>, Vec<String>) {
    let index_b: IndexMap<&str, &SscRecord> = b.iter().map(|r| (r.token_string.as_str(), r)).collect();
    let mut out_a = Vec::new();
    let mut out_b = Vec::new();
    let mut dropped = Vec::new();
    for rec in a {
        match index_b.get(rec.token_string.as_str()) {
            Some(other) => {
                out_a.push(rec.clone());
                out_b.push((*other).clone());
            }
            None => dropped.push(rec.token_string.clone()),
        }
    }
    (out_a, out_b, dropped)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationCurve {
    pub n_values: Vec<usize>,
    /// `None` where the prefix correlation is undefined (`n < 3` or zero variance).
    pub correlations: Vec<Option<f64>>,
    pub argmax_n: usize,
    pub max_corr: f64,
}

pub const MIN_PREFIX: usize = 3;

/// Pearson correlation of the first `n` SSC values of each list, for every `n`.
pub fn correlation_curve(a: &[SscRecord], b: &[SscRecord]) -> Result<CorrelationCurve> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < MIN_PREFIX {
        return Err(Error::TooFew {
            needed: MIN_PREFIX,
            got: a.len(),
        });
    }
    if let Some((x, y)) = a.iter().zip(b).find(|(x, y)| x.token_string != y.token_string) {
        return Err(Error::InvalidArgument(format!(
            "lists are not aligned: {:?} vs {:?}",
            x.token_string, y.token_string
        )));
    }
    let xs: Vec<f64> = a.iter().map(|r| r.ssc).collect();
    let ys: Vec<f64> = b.iter().map(|r| r.ssc).collect();

    let n_values: Vec<usize> = (1..=xs.len()).collect();
    let correlations: Vec<Option<f64>> = n_values
        .iter()
        .map(|&n| {
            if n < MIN_PREFIX {
                return Ok(None);
            }
            match pearson(&xs[..n], &ys[..n]) {
                Ok(r) => Ok(Some(r)),
                Err(Error::ZeroVariance) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    let mut best: Option<(usize, f64)> = None;
    for (&n, c) in n_values.iter().zip(&correlations) {
        if let Some(c) = *c {
            if best.is_none_or(|(_, b)| c > b) {
                best = Some((n, c));
            }
        }
    }
    let (argmax_n, max_corr) = best.ok_or(Error::ZeroVariance)?;
    Ok(CorrelationCurve {
        n_values,
        correlations,
        argmax_n,
        max_corr,
    })
}

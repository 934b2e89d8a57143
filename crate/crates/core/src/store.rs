//! EGC-v1 token-embedding corpora: loading, validation, writing, sampling
//! and grouping.
//!
//! A corpus directory holds three files:
//!
//! - `meta.json`: `{"version":1,"dim":D,"count":N,"dtype":"f32le","layers":[..],"model":".."}`.
//!   Unknown keys are kept in [`EmbeddingCorpus::provenance`] and written back.
//! - `tokens.tsv`: N rows of `index, layer, sentence_id, position, token_string`,
//!   tab separated, no header.
//! - `vectors.bin`: N·D little-endian `f32`, row-major, row i matching tsv row i.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use indexmap::IndexMap;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u64 = 1;
pub const DTYPE: &str = "f32le";

pub const META_FILE: &str = "meta.json";
pub const TOKENS_FILE: &str = "tokens.tsv";
pub const VECTORS_FILE: &str = "vectors.bin";

#[derive(Debug, Clone, PartialEq)]
pub struct TokenRecord {
    pub index: u64,
    pub layer: u32,
    pub sentence_id: u64,
    /// Token index within its sentence.
    pub position: u32,
    pub token: String,
    pub vector: Vec<f32>,
}

impl TokenRecord {
    pub fn key(&self) -> (u32, u64, u32) {
        (self.layer, self.sentence_id, self.position)
    }
}

impl AsRef<[f32]> for TokenRecord {
    fn as_ref(&self) -> &[f32] {
        &self.vector
    }
}

/// Special tokens such as `[CLS]`, `[SEP]`, `<s>` or `</s>`.
pub fn is_special_token(token: &str) -> bool {
    let bracketed = |open: char, close: char| {
        token.len() > 2
            && token.starts_with(open)
            && token.ends_with(close)
            && !token[1..token.len() - 1].contains(char::is_whitespace)
    };
    (bracketed('[', ']') && token[1..token.len() - 1].chars().all(|c| c.is_ascii_uppercase() || c == '_'))
        || (bracketed('<', '>') && token[1..token.len() - 1].chars().all(|c| c.is_ascii_lowercase() || c == '/' || c == '_'))
}

/// An immutable, validated set of token embeddings.
#[derive(Debug, Clone)]
pub struct EmbeddingCorpus {
    dim: usize,
    layers: Vec<u32>,
    records: Vec<TokenRecord>,
    model_name: String,
    provenance: Map<String, Value>,
    layer_ranges: HashMap<u32, Range<usize>>,
}

impl EmbeddingCorpus {
    /// Builds a corpus from records, validating every corpus invariant.
    ///
    /// `layers` declares the layer list; pass `None` to derive it from the
    /// records.
    pub fn new(
        model_name: impl Into<String>,
        dim: usize,
        layers: Option<Vec<u32>>,
        records: Vec<TokenRecord>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Layout("dimension must be positive".into()));
        }
        let mut seen_keys = HashSet::with_capacity(records.len());
        let mut layer_ranges: HashMap<u32, Range<usize>> = HashMap::new();
        let mut current_layer: Option<u32> = None;
        let mut closed_sentences: HashSet<u64> = HashSet::new();
        let mut current_sentence: Option<u64> = None;

        for (row, rec) in records.iter().enumerate() {
            if rec.vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: rec.vector.len(),
                });
            }
            if rec.vector.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { index: row });
            }
            if !seen_keys.insert(rec.key()) {
                return Err(Error::DuplicateKey {
                    layer: rec.layer,
                    sentence_id: rec.sentence_id,
                    position: rec.position,
                });
            }
            if current_layer != Some(rec.layer) {
                if layer_ranges.contains_key(&rec.layer) {
                    return Err(Error::Layout(format!(
                        "records of layer {} are not contiguous (row {row})",
                        rec.layer
                    )));
                }
                layer_ranges.insert(rec.layer, row..row);
                current_layer = Some(rec.layer);
                closed_sentences.clear();
                current_sentence = None;
            }
            if current_sentence != Some(rec.sentence_id) {
                if !closed_sentences.insert(rec.sentence_id) {
                    return Err(Error::Layout(format!(
                        "records of sentence {} in layer {} are not contiguous (row {row})",
                        rec.sentence_id, rec.layer
                    )));
                }
                current_sentence = Some(rec.sentence_id);
            }
            layer_ranges.get_mut(&rec.layer).expect("inserted above").end = row + 1;
        }

        let present: BTreeSet<u32> = layer_ranges.keys().copied().collect();
        let layers = match layers {
            Some(mut declared) => {
                declared.sort_unstable();
                declared.dedup();
                if let Some(extra) = present.iter().find(|l| declared.binary_search(l).is_err()) {
                    return Err(Error::Layout(format!("layer {extra} has records but is not declared")));
                }
                if !records.is_empty() && declared.len() != present.len() {
                    return Err(Error::Layout("declared layers without records".into()));
                }
                declared
            }
            None => present.into_iter().collect(),
        };

        // Every layer must carry the same (sentence_id, position) keys.
        let mut reference: Option<Vec<(u64, u32)>> = None;
        for layer in &layers {
            let Some(range) = layer_ranges.get(layer) else { continue };
            let mut keys: Vec<(u64, u32)> = records[range.clone()]
                .iter()
                .map(|r| (r.sentence_id, r.position))
                .collect();
            keys.sort_unstable();
            match &reference {
                None => reference = Some(keys),
                Some(first) if *first != keys => {
                    return Err(Error::Layout(format!(
                        "layer {layer} does not share the token keys of layer {}",
                        layers[0]
                    )))
                }
                Some(_) => {}
            }
        }

        Ok(Self {
            dim,
            layers,
            records,
            model_name: model_name.into(),
            provenance: Map::new(),
            layer_ranges,
        })
    }

    pub fn with_provenance(mut self, provenance: Map<String, Value>) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layers(&self) -> &[u32] {
        &self.layers
    }

    pub fn last_layer(&self) -> Option<u32> {
        self.layers.last().copied()
    }

    pub fn records(&self) -> &[TokenRecord] {
        &self.records
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn provenance(&self) -> &Map<String, Value> {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records of one layer, in file order.
    pub fn layer_records(&self, layer: u32) -> Result<&[TokenRecord]> {
        if self.layers.binary_search(&layer).is_err() {
            return Err(Error::LayerAbsent(layer));
        }
        Ok(match self.layer_ranges.get(&layer) {
            Some(range) => &self.records[range.clone()],
            None => &[],
        })
    }

    /// Records of one layer grouped by sentence, sentences in file order.
    pub fn sentences(&self, layer: u32) -> Result<IndexMap<u64, Vec<&TokenRecord>>> {
        let mut out: IndexMap<u64, Vec<&TokenRecord>> = IndexMap::new();
        for rec in self.layer_records(layer)? {
            out.entry(rec.sentence_id).or_default().push(rec);
        }
        Ok(out)
    }

    /// Number of distinct sentences (identical for every layer).
    pub fn sentence_count(&self) -> usize {
        match self.layers.first() {
            Some(&layer) => self.sentences(layer).map(|s| s.len()).unwrap_or(0),
            None => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleStrategy {
    /// One random token from each of `count` distinct random sentences.
    OnePerSentence,
    /// `count` records drawn uniformly without replacement.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub count: usize,
    pub seed: u64,
    pub strategy: SampleStrategy,
}

impl SampleSpec {
    pub fn one_per_sentence(count: usize, seed: u64) -> Self {
        Self {
            count,
            seed,
            strategy: SampleStrategy::OnePerSentence,
        }
    }
}

/// Draws a deterministic token sample from one layer.
///
/// Selection runs over the canonical `(sentence_id, position)` ordering, so
/// the same spec picks the same token keys in every layer of a corpus.
/// Output is ordered by that canonical key.
pub fn sample_tokens<'a>(
    corpus: &'a EmbeddingCorpus,
    layer: u32,
    spec: &SampleSpec,
) -> Result<Vec<&'a TokenRecord>> {
    if spec.count == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let mut canonical: Vec<&TokenRecord> = corpus.layer_records(layer)?.iter().collect();
    canonical.sort_unstable_by_key(|r| (r.sentence_id, r.position));
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    match spec.strategy {
        SampleStrategy::Uniform => {
            if spec.count > canonical.len() {
                return Err(Error::SampleTooLarge {
                    requested: spec.count,
                    available: canonical.len(),
                });
            }
            let mut picks = index::sample(&mut rng, canonical.len(), spec.count).into_vec();
            picks.sort_unstable();
            Ok(picks.into_iter().map(|i| canonical[i]).collect())
        }
        SampleStrategy::OnePerSentence => {
            let mut blocks: Vec<&[&TokenRecord]> = Vec::new();
            let mut start = 0;
            for i in 1..=canonical.len() {
                if i == canonical.len() || canonical[i].sentence_id != canonical[start].sentence_id {
                    blocks.push(&canonical[start..i]);
                    start = i;
                }
            }
            if spec.count > blocks.len() {
                return Err(Error::SampleTooLarge {
                    requested: spec.count,
                    available: blocks.len(),
                });
            }
            let mut picks = index::sample(&mut rng, blocks.len(), spec.count).into_vec();
            picks.sort_unstable();
            Ok(picks
                .into_iter()
                .map(|b| {
                    let block = blocks[b];
                    block[rng.random_range(0..block.len())]
                })
                .collect())
        }
    }
}

/// Partitions one layer's records by surface token, keys in first-appearance order.
pub fn group_by_token(
    corpus: &EmbeddingCorpus,
    layer: u32,
) -> Result<IndexMap<String, Vec<&TokenRecord>>> {
    let mut groups: IndexMap<String, Vec<&TokenRecord>> = IndexMap::new();
    for rec in corpus.layer_records(layer)? {
        match groups.get_mut(rec.token.as_str()) {
            Some(g) => g.push(rec),
            None => {
                groups.insert(rec.token.clone(), vec![rec]);
            }
        }
    }
    Ok(groups)
}

#[derive(Debug, Deserialize)]
struct MetaRequired {
    version: u64,
    dim: usize,
    count: usize,
    dtype: String,
    layers: Vec<u32>,
    model: String,
}

const REQUIRED_META_KEYS: [&str; 6] = ["version", "dim", "count", "dtype", "layers", "model"];

pub fn load_corpus(dir: impl AsRef<Path>) -> Result<EmbeddingCorpus> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::CorpusNotFound(dir.to_path_buf()));
    }
    let read = |name: &str| {
        let path = dir.join(name);
        if !path.is_file() {
            return Err(Error::MissingFile(path));
        }
        fs::read(&path).map_err(|e| Error::io(&path, e))
    };

    let meta_bytes = read(META_FILE)?;
    let meta_value: Value = serde_json::from_slice(&meta_bytes).map_err(|e| Error::Meta(e.to_string()))?;
    let Value::Object(mut meta_map) = meta_value else {
        return Err(Error::Meta("top level must be an object".into()));
    };
    let meta: MetaRequired = serde_json::from_value(Value::Object(meta_map.clone()))
        .map_err(|e| Error::Meta(e.to_string()))?;
    if meta.version != FORMAT_VERSION {
        return Err(Error::Meta(format!("unsupported version {}", meta.version)));
    }
    if meta.dtype != DTYPE {
        return Err(Error::Meta(format!("unsupported dtype {:?}", meta.dtype)));
    }
    if meta.dim == 0 {
        return Err(Error::Meta("dim must be positive".into()));
    }
    for key in REQUIRED_META_KEYS {
        meta_map.remove(key);
    }

    let vectors = read(VECTORS_FILE)?;
    let expected = (meta.count as u64) * (meta.dim as u64) * 4;
    if vectors.len() as u64 != expected {
        return Err(Error::BinarySizeMismatch {
            expected,
            found: vectors.len() as u64,
        });
    }

    let tokens_bytes = read(TOKENS_FILE)?;
    let tokens = String::from_utf8(tokens_bytes).map_err(|e| Error::Tokens {
        line: 0,
        reason: format!("not UTF-8: {e}"),
    })?;
    let mut rows: Vec<&str> = tokens.split('\n').collect();
    if rows.last() == Some(&"") {
        rows.pop();
    }
    if rows.len() != meta.count {
        return Err(Error::Tokens {
            line: rows.len(),
            reason: format!("expected {} rows, found {}", meta.count, rows.len()),
        });
    }

    let row_bytes = meta.dim * 4;
    let mut records = Vec::with_capacity(meta.count);
    for (i, row) in rows.iter().enumerate() {
        let line = i + 1;
        let row = row.strip_suffix('\r').unwrap_or(row);
        let fields: Vec<&str> = row.splitn(5, '\t').collect();
        if fields.len() != 5 {
            return Err(Error::Tokens {
                line,
                reason: format!("expected 5 tab-separated fields, found {}", fields.len()),
            });
        }
        let num = |s: &str, what: &str| {
            s.parse::<u64>().map_err(|_| Error::Tokens {
                line,
                reason: format!("{what} {s:?} is not a non-negative integer"),
            })
        };
        let narrow = |v: u64, what: &str| {
            u32::try_from(v).map_err(|_| Error::Tokens {
                line,
                reason: format!("{what} {v} out of range"),
            })
        };
        let vector = vectors[i * row_bytes..(i + 1) * row_bytes]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        records.push(TokenRecord {
            index: num(fields[0], "index")?,
            layer: narrow(num(fields[1], "layer")?, "layer")?,
            sentence_id: num(fields[2], "sentence_id")?,
            position: narrow(num(fields[3], "position")?, "position")?,
            token: fields[4].to_string(),
            vector,
        });
    }

    Ok(EmbeddingCorpus::new(meta.model, meta.dim, Some(meta.layers), records)?.with_provenance(meta_map))
}

pub fn write_corpus(corpus: &EmbeddingCorpus, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut meta = Map::new();
    meta.insert("version".into(), FORMAT_VERSION.into());
    meta.insert("dim".into(), corpus.dim.into());
    meta.insert("count".into(), corpus.records.len().into());
    meta.insert("dtype".into(), DTYPE.into());
    meta.insert("layers".into(), corpus.layers.clone().into());
    meta.insert("model".into(), corpus.model_name.clone().into());
    for (k, v) in &corpus.provenance {
        meta.entry(k.clone()).or_insert_with(|| v.clone());
    }
    let meta_path = dir.join(META_FILE);
    let mut meta_text = serde_json::to_string_pretty(&Value::Object(meta))?;
    meta_text.push('\n');
    fs::write(&meta_path, meta_text).map_err(|e| Error::io(&meta_path, e))?;

    let mut tsv = String::new();
    let mut bin = Vec::with_capacity(corpus.records.len() * corpus.dim * 4);
    for (row, rec) in corpus.records.iter().enumerate() {
        if rec.token.contains(['\n', '\r']) {
            return Err(Error::Tokens {
                line: row + 1,
                reason: "token contains a line break".into(),
            });
        }
        tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            rec.index, rec.layer, rec.sentence_id, rec.position, rec.token
        ));
        for x in &rec.vector {
            bin.extend_from_slice(&x.to_le_bytes());
        }
    }
    let tokens_path = dir.join(TOKENS_FILE);
    fs::write(&tokens_path, tsv).map_err(|e| Error::io(&tokens_path, e))?;
    let vectors_path = dir.join(VECTORS_FILE);
    let mut f = fs::File::create(&vectors_path).map_err(|e| Error::io(&vectors_path, e))?;
    f.write_all(&bin).map_err(|e| Error::io(&vectors_path, e))?;
    Ok(())
}

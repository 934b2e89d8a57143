//! `isolab` command-line front end: argument parsing, CSV emission and run
//! manifests.
//!
//! Every subcommand writes its CSV outputs plus a `*.manifest.json` next to
//! them. Floats are written with Rust's shortest round-trip formatting, so
//! identical inputs give byte-identical CSVs on every platform.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::dimensions::{dim_contributions, dims_for_fraction, informativity, topk_share, InformativityResult};
use crate::error::{Error, Result};
use crate::frequency::{align, correlation_curve, ssc_table, top_frequent_tokens, SscRecord};
use crate::geometry::{layer_report, GeometryReport, LayerOptions};
use crate::lab::encoder::Pooling;
use crate::lab::loss::{bound_gap, loss_lower_bound, loss_upper_bound};
use crate::lab::train::{train, TrainConfig, TrainTrajectory, TEMPERATURE_GRID_BASE2, TEMPERATURE_GRID_DECADE};
use crate::lab::SyntheticPairSpec;
use crate::seed::{derive_seed, PRNG_ALGORITHM, TOKEN_SAMPLE_LABEL};
use crate::store::{load_corpus, sample_tokens, EmbeddingCorpus, SampleSpec, SampleStrategy, META_FILE, TOKENS_FILE, VECTORS_FILE};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_VERSION: u32 = 1;
const LONG_VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (corpus format EGC-v1, manifest v1)");

#[derive(Debug, Parser)]
#[command(name = "isolab", version = LONG_VERSION, about = "Embedding-space geometry diagnostics and contrastive-training lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum StrategyArg {
    OnePerSentence,
    Uniform,
}

impl From<StrategyArg> for SampleStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::OnePerSentence => SampleStrategy::OnePerSentence,
            StrategyArg::Uniform => SampleStrategy::Uniform,
        }
    }
}

#[derive(Debug, clap::Args)]
struct SampleArgs {
    /// Tokens in the anisotropy sample.
    #[arg(long, default_value_t = 1000)]
    sample: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value = "one-per-sentence")]
    strategy: StrategyArg,
}

impl SampleArgs {
    fn spec(&self) -> SampleSpec {
        SampleSpec {
            count: self.sample,
            seed: derive_seed(self.seed, TOKEN_SAMPLE_LABEL),
            strategy: self.strategy.into(),
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-layer anisotropy, self-similarity, intra-sentence similarity and L2 norm.
    Metrics {
        #[arg(long)]
        corpus: PathBuf,
        /// `all` or a comma-separated list of layer indices.
        #[arg(long, default_value = "all")]
        layers: String,
        #[command(flatten)]
        sample: SampleArgs,
        /// Leave `[CLS]`/`[SEP]`-style tokens out of intra-sentence pooling.
        #[arg(long)]
        exclude_specials: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-dimension contributions and rogue-dimension dominance.
    Dims {
        #[arg(long)]
        corpus: PathBuf,
        /// Layer index or `last`.
        #[arg(long, default_value = "last")]
        layer: String,
        #[arg(long, default_value = "1,2,3")]
        topk: String,
        #[arg(long, default_value = "0.1,0.2,0.5")]
        fractions: String,
        #[command(flatten)]
        sample: SampleArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Correlation of pairwise similarities before and after zeroing top-k rogue dimensions.
    Informativity {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "last")]
        layer: String,
        #[arg(long, default_value = "1,2,3,5,10,20,50,100,300,700")]
        ks: String,
        #[command(flatten)]
        sample: SampleArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Self-similarity change for two model families and their correlation curve.
    Ssc {
        #[arg(long)]
        vanilla_a: PathBuf,
        #[arg(long)]
        tuned_a: PathBuf,
        #[arg(long)]
        vanilla_b: PathBuf,
        #[arg(long)]
        tuned_b: PathBuf,
        #[arg(long, default_value = "last")]
        layer: String,
        #[arg(long, default_value_t = 400)]
        top: usize,
        #[command(flatten)]
        sample: SampleArgs,
        /// Drop special tokens from the frequency ranking.
        #[arg(long)]
        skip_specials: bool,
        #[arg(long)]
        out: PathBuf,
        /// Curve CSV; defaults to `<out stem>_curve.csv`.
        #[arg(long)]
        curve_out: Option<PathBuf>,
    },
    /// Train the synthetic contrastive encoder and record its trajectory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Sweep temperatures: `base2`, `decade`, or a comma-separated list.
        #[arg(long)]
        tau_grid: Option<String>,
        /// Sweep batch sizes (comma-separated), e.g. `16,64,256`.
        #[arg(long)]
        batch_grid: Option<String>,
        /// Sweep pooling methods, e.g. `mean,cls,max`.
        #[arg(long)]
        pooling_grid: Option<String>,
    },
    /// Sweep the closed-form InfoNCE bounds.
    Bounds {
        #[arg(long, default_value = "0.025,0.05,0.1")]
        tau_grid: String,
        /// One or more batch sizes.
        #[arg(long, default_value = "64")]
        n: String,
        /// `start:end:count` (inclusive, linear) or a comma-separated list.
        #[arg(long, default_value = "0.9:0.9999:20")]
        s_grid: String,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Runs one invocation and returns the process exit status.
pub fn dispatch(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli.command, argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusFingerprint {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Vec<(String, String)>,
    pub seed: Option<u64>,
    pub corpus_fingerprints: Vec<CorpusFingerprint>,
    pub tool_version: String,
    pub manifest_version: u32,
    pub timestamp: String,
    pub metadata: BTreeMap<String, Value>,
}

impl RunManifest {
    fn new(command: &str, argv: &[String], seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            arguments: argument_pairs(argv),
            seed,
            corpus_fingerprints: Vec::new(),
            tool_version: TOOL_VERSION.to_string(),
            manifest_version: MANIFEST_VERSION,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            metadata: BTreeMap::new(),
        }
    }

    fn note(&mut self, key: &str, value: impl Into<Value>) {
        self.metadata.insert(key.to_string(), value.into());
    }

    fn fingerprint(&mut self, dir: &Path) -> Result<()> {
        self.corpus_fingerprints.push(CorpusFingerprint {
            path: dir.display().to_string(),
            sha256: corpus_fingerprint(dir)?,
        });
        Ok(())
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// `--key value` pairs after the subcommand; bare flags map to `"true"`.
fn argument_pairs(argv: &[String]) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut i = 2;
    while i < argv.len() {
        let Some(key) = argv[i].strip_prefix("--") else {
            out.push((String::new(), argv[i].clone()));
            i += 1;
            continue;
        };
        if let Some((k, v)) = key.split_once('=') {
            out.push((k.to_string(), v.to_string()));
            i += 1;
        } else if i + 1 < argv.len() && !argv[i + 1].starts_with("--") {
            out.push((key.to_string(), argv[i + 1].clone()));
            i += 2;
        } else {
            out.push((key.to_string(), "true".to_string()));
            i += 1;
        }
    }
    out
}

/// SHA-256 over the three corpus files, each prefixed by its name.
pub fn corpus_fingerprint(dir: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    for name in [META_FILE, TOKENS_FILE, VECTORS_FILE] {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        hasher.update(name.as_bytes());
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    out.with_file_name(format!("{stem}{suffix}.csv"))
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| Error::InvalidArgument(format!("bad {what} value {s:?}")))
        })
        .collect::<Result<Vec<T>>>()
        .and_then(|v| {
            if v.is_empty() {
                Err(Error::InvalidArgument(format!("empty {what} list")))
            } else {
                Ok(v)
            }
        })
}

/// `start:end:count` (inclusive, evenly spaced) or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [start, end, count] => {
            let bad = || Error::InvalidArgument(format!("bad grid {text:?}"));
            let start: f64 = start.trim().parse().map_err(|_| bad())?;
            let end: f64 = end.trim().parse().map_err(|_| bad())?;
            let count: usize = count.trim().parse().map_err(|_| bad())?;
            match count {
                0 => Err(bad()),
                1 => Ok(vec![start]),
                _ => Ok((0..count)
                    .map(|i| {
                        if i == count - 1 {
                            end
                        } else {
                            start + (end - start) * i as f64 / (count - 1) as f64
                        }
                    })
                    .collect()),
            }
        }
        [_] => parse_list(text, "grid"),
        _ => Err(Error::InvalidArgument(format!("bad grid {text:?}"))),
    }
}

fn resolve_layer(corpus: &EmbeddingCorpus, layer: &str) -> Result<u32> {
    if layer == "last" {
        return corpus
            .last_layer()
            .ok_or_else(|| Error::InvalidArgument("corpus has no layers".into()));
    }
    let l: u32 = layer
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad layer {layer:?}")))?;
    corpus.layer_records(l)?;
    Ok(l)
}

fn resolve_layers(corpus: &EmbeddingCorpus, layers: &str) -> Result<Vec<u32>> {
    if layers == "all" {
        return Ok(corpus.layers().to_vec());
    }
    layers.split(',').map(|l| resolve_layer(corpus, l.trim())).collect()
}

fn run(command: Command, argv: &[String]) -> Result<()> {
    match command {
        Command::Metrics {
            corpus,
            layers,
            sample,
            exclude_specials,
            out,
        } => run_metrics(&corpus, &layers, &sample, exclude_specials, &out, argv),
        Command::Dims {
            corpus,
            layer,
            topk,
            fractions,
            sample,
            out,
        } => run_dims(&corpus, &layer, &topk, &fractions, &sample, &out, argv),
        Command::Informativity {
            corpus,
            layer,
            ks,
            sample,
            out,
        } => run_informativity(&corpus, &layer, &ks, &sample, &out, argv),
        Command::Ssc {
            vanilla_a,
            tuned_a,
            vanilla_b,
            tuned_b,
            layer,
            top,
            sample,
            skip_specials,
            out,
            curve_out,
        } => {
            let curve_out = curve_out.unwrap_or_else(|| sibling(&out, "_curve"));
            let dirs = [vanilla_a, tuned_a, vanilla_b, tuned_b];
            run_ssc(&dirs, &layer, top, &sample, skip_specials, &out, &curve_out, argv)
        }
        Command::Train {
            config,
            out,
            tau_grid,
            batch_grid,
            pooling_grid,
        } => run_train(&config, &out, tau_grid.as_deref(), batch_grid.as_deref(), pooling_grid.as_deref(), argv),
        Command::Bounds { tau_grid, n, s_grid, out } => run_bounds(&tau_grid, &n, &s_grid, &out, argv),
    }
}

fn run_metrics(
    dir: &Path,
    layers: &str,
    sample: &SampleArgs,
    exclude_specials: bool,
    out: &Path,
    argv: &[String],
) -> Result<()> {
    let corpus = load_corpus(dir)?;
    let spec = sample.spec();
    let options = LayerOptions { exclude_specials };
    let reports: Vec<GeometryReport> = resolve_layers(&corpus, layers)?
        .into_iter()
        .map(|l| layer_report(&corpus, l, &spec, &options))
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<String>> = reports.iter().map(GeometryReport::csv_fields).collect();
    write_csv(out, &GeometryReport::COLUMNS, &rows)?;

    let mut m = RunManifest::new("metrics", argv, Some(sample.seed));
    m.fingerprint(dir)?;
    m.note("self_similarity_weighting", "unweighted mean over token types");
    m.note("intra_similarity_specials", if exclude_specials { "excluded" } else { "included" });
    m.note("sample_strategy", json!(spec.strategy));
    m.write(&manifest_path(out))
}

/// Column names of `<out>` for `isolab dims`.
pub const DOMINANCE_COLUMNS: [&str; 5] = ["layer", "metric", "parameter", "value", "status"];
/// Column names of `<out stem>_dims.csv` for `isolab dims`.
pub const DIMENSION_COLUMNS: [&str; 5] = ["layer", "rank", "dimension", "contribution", "cumulative_share"];

fn run_dims(
    dir: &Path,
    layer: &str,
    topk: &str,
    fractions: &str,
    sample: &SampleArgs,
    out: &Path,
    argv: &[String],
) -> Result<()> {
    let corpus = load_corpus(dir)?;
    let layer = resolve_layer(&corpus, layer)?;
    let spec = sample.spec();
    let samples = sample_tokens(&corpus, layer, &spec)?;
    let profile = dim_contributions(layer, &samples)?;
    let ks: Vec<usize> = parse_list(topk, "topk")?;
    let fractions: Vec<f64> = parse_list(fractions, "fraction")?;

    let status = if profile.is_defined() { "ok" } else { "undefined" };
    let mut rows = vec![vec![
        layer.to_string(),
        "total".into(),
        String::new(),
        profile.total.to_string(),
        "ok".into(),
    ]];
    for &k in &ks {
        let value = match topk_share(&profile, k) {
            Ok(v) => v.to_string(),
            Err(Error::DominanceUndefined(_)) => String::new(),
            Err(e) => return Err(e),
        };
        rows.push(vec![layer.to_string(), "topk_share".into(), k.to_string(), value, status.into()]);
    }
    for &f in &fractions {
        let value = match dims_for_fraction(&profile, f) {
            Ok(v) => v.to_string(),
            Err(Error::DominanceUndefined(_)) => String::new(),
            Err(e) => return Err(e),
        };
        rows.push(vec![layer.to_string(), "dims_for_fraction".into(), f.to_string(), value, status.into()]);
    }
    write_csv(out, &DOMINANCE_COLUMNS, &rows)?;

    let dim_rows: Vec<Vec<String>> = profile
        .sorted_indices
        .iter()
        .enumerate()
        .map(|(rank, &d)| {
            vec![
                layer.to_string(),
                (rank + 1).to_string(),
                d.to_string(),
                profile.contributions[d].to_string(),
                profile
                    .cumulative_topk
                    .as_ref()
                    .map(|c| c[rank].to_string())
                    .unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(&sibling(out, "_dims"), &DIMENSION_COLUMNS, &dim_rows)?;

    let mut m = RunManifest::new("dims", argv, Some(sample.seed));
    m.fingerprint(dir)?;
    m.note("rogue_ranking", "absolute contribution, descending; ties to lower index");
    m.note("share_basis", "absolute contribution mass");
    m.note("dominance_status", status);
    m.write(&manifest_path(out))
}

fn run_informativity(dir: &Path, layer: &str, ks: &str, sample: &SampleArgs, out: &Path, argv: &[String]) -> Result<()> {
    let corpus = load_corpus(dir)?;
    let layer = resolve_layer(&corpus, layer)?;
    let spec = sample.spec();
    let samples = sample_tokens(&corpus, layer, &spec)?;
    let profile = dim_contributions(layer, &samples)?;
    let ks: Vec<usize> = parse_list(ks, "k")?;

    let mut skipped = Vec::new();
    let mut results: Vec<InformativityResult> = Vec::new();
    for k in ks {
        if k >= corpus.dim() {
            log::warn!("skipping k = {k}: not below dimension {}", corpus.dim());
            skipped.push(k);
            continue;
        }
        results.push(informativity(&samples, &profile, k)?);
    }
    let rows: Vec<Vec<String>> = results.iter().map(InformativityResult::csv_fields).collect();
    write_csv(out, &InformativityResult::COLUMNS, &rows)?;

    let mut m = RunManifest::new("informativity", argv, Some(sample.seed));
    m.fingerprint(dir)?;
    m.note("layer", layer);
    m.note("rogue_ranking", "absolute contribution, descending; ties to lower index");
    m.note("skipped_k", json!(skipped));
    m.write(&manifest_path(out))
}

/// Column names of the `ssc` output: the pair label, then [`SscRecord`] fields.
pub fn ssc_columns() -> Vec<&'static str> {
    let mut cols = vec!["pair"];
    cols.extend(SscRecord::COLUMNS);
    cols
}

pub const CURVE_COLUMNS: [&str; 2] = ["n", "correlation"];

#[allow(clippy::too_many_arguments)]
fn run_ssc(
    dirs: &[PathBuf; 4],
    layer: &str,
    top: usize,
    sample: &SampleArgs,
    skip_specials: bool,
    out: &Path,
    curve_out: &Path,
    argv: &[String],
) -> Result<()> {
    let corpora: Vec<EmbeddingCorpus> = dirs.iter().map(load_corpus).collect::<Result<_>>()?;
    let spec = sample.spec();
    let layer_a = resolve_layer(&corpora[0], layer)?;
    let layer_b = resolve_layer(&corpora[2], layer)?;

    let ranking = top_frequent_tokens(&corpora[0], layer_a, top, skip_specials)?;
    let tokens: Vec<String> = ranking.tokens.iter().map(|(t, _)| t.clone()).collect();
    let table_a = ssc_table(&corpora[0], &corpora[1], layer_a, &tokens, &spec)?;
    let table_b = ssc_table(&corpora[2], &corpora[3], layer_b, &tokens, &spec)?;
    let (aligned_a, aligned_b, dropped) = align(&table_a.records, &table_b.records);
    let curve = correlation_curve(&aligned_a, &aligned_b)?;

    let mut rows = Vec::new();
    for (label, records) in [("a", &aligned_a), ("b", &aligned_b)] {
        for r in records {
            let mut row = vec![label.to_string()];
            row.extend(r.csv_fields());
            rows.push(row);
        }
    }
    write_csv(out, &ssc_columns(), &rows)?;
    let curve_rows: Vec<Vec<String>> = curve
        .n_values
        .iter()
        .zip(&curve.correlations)
        .map(|(n, c)| vec![n.to_string(), c.map(|c| c.to_string()).unwrap_or_default()])
        .collect();
    write_csv(curve_out, &CURVE_COLUMNS, &curve_rows)?;

    let mut m = RunManifest::new("ssc", argv, Some(sample.seed));
    for d in dirs {
        m.fingerprint(d)?;
    }
    m.note("layer_a", layer_a);
    m.note("layer_b", layer_b);
    m.note("anisotropy_baseline", "per corpus, output layer sample");
    m.note("ranking_complete", ranking.complete);
    m.note("argmax_n", curve.argmax_n);
    m.note("max_corr", curve.max_corr);
    let skipped = |t: &crate::frequency::SscTable| -> Value {
        t.skipped.iter().map(|s| json!({"token": s.token, "reason": s.reason})).collect()
    };
    m.note("skipped_a", skipped(&table_a));
    m.note("skipped_b", skipped(&table_b));
    m.note("dropped_in_alignment", json!(dropped));
    m.write(&manifest_path(out))
}

/// Training config file: a `[train]` table and a `[data]` table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainFile {
    pub train: TrainConfig,
    pub data: SyntheticPairSpec,
}

/// Column names of `trajectory.csv`: step, loss, then [`GeometryReport`] fields.
pub fn trajectory_columns() -> Vec<&'static str> {
    let mut cols = vec!["step", "loss"];
    cols.extend(GeometryReport::COLUMNS);
    cols
}

pub fn write_trajectory(dir: &Path, trajectory: &TrainTrajectory) -> Result<()> {
    let rows: Vec<Vec<String>> = trajectory
        .points
        .iter()
        .map(|p| {
            let mut row = vec![p.step.to_string(), p.loss.to_string()];
            row.extend(p.report.csv_fields());
            row
        })
        .collect();
    write_csv(&dir.join("trajectory.csv"), &trajectory_columns(), &rows)?;
    let sidecar = json!({
        "config": trajectory.config,
        "data": trajectory.data,
        "prng": PRNG_ALGORITHM,
        "tool_version": TOOL_VERSION,
        "eval_layer": "contextual output",
    });
    let path = dir.join("trajectory.json");
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn parse_pooling(s: &str) -> Result<Pooling> {
    match s.trim() {
        "mean" => Ok(Pooling::Mean),
        "cls" => Ok(Pooling::Cls),
        "max" => Ok(Pooling::Max),
        other => Err(Error::InvalidArgument(format!("unknown pooling {other:?}"))),
    }
}

fn run_train(
    config_path: &Path,
    out: &Path,
    tau_grid: Option<&str>,
    batch_grid: Option<&str>,
    pooling_grid: Option<&str>,
    argv: &[String],
) -> Result<()> {
    if !config_path.is_file() {
        return Err(Error::MissingFile(config_path.to_path_buf()));
    }
    let text = fs::read_to_string(config_path).map_err(|e| Error::io(config_path, e))?;
    let file: TrainFile = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;

    let taus: Option<Vec<f64>> = tau_grid
        .map(|g| match g {
            "base2" => Ok(TEMPERATURE_GRID_BASE2.to_vec()),
            "decade" => Ok(TEMPERATURE_GRID_DECADE.to_vec()),
            list => parse_list(list, "tau"),
        })
        .transpose()?;
    let batches: Option<Vec<usize>> = batch_grid.map(|g| parse_list(g, "batch size")).transpose()?;
    let poolings: Option<Vec<Pooling>> = pooling_grid
        .map(|g| g.split(',').map(parse_pooling).collect())
        .transpose()?;
    let sweep = taus.is_some() || batches.is_some() || poolings.is_some();

    let mut runs = Vec::new();
    for &tau in taus.as_deref().unwrap_or(&[file.train.tau]) {
        for &batch_size in batches.as_deref().unwrap_or(&[file.train.batch_size]) {
            for &pooling in poolings.as_deref().unwrap_or(&[file.train.pooling]) {
                let config = TrainConfig {
                    tau,
                    batch_size,
                    pooling,
                    ..file.train.clone()
                };
                let pooling_name = format!("{pooling:?}").to_lowercase();
                let dir = if sweep {
                    out.join(format!("tau{tau}_batch{batch_size}_{pooling_name}"))
                } else {
                    out.to_path_buf()
                };
                runs.push((config, dir));
            }
        }
    }

    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut m = RunManifest::new("train", argv, Some(file.train.seed));
    let mut outcomes = Vec::new();
    let mut failure = None;
    for (config, dir) in runs {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        match train(&config, &file.data) {
            Ok(t) => {
                write_trajectory(&dir, &t)?;
                outcomes.push(json!({"dir": dir.display().to_string(), "status": "ok"}));
            }
            Err(Error::Diverged { step, trajectory }) => {
                write_trajectory(&dir, &trajectory)?;
                outcomes.push(json!({"dir": dir.display().to_string(), "status": format!("diverged at step {step}")}));
                failure.get_or_insert(Error::Diverged { step, trajectory });
            }
            Err(e) => return Err(e),
        }
    }
    m.note("runs", Value::Array(outcomes));
    m.note("optimizer", "gradient descent with linear warm-up");
    m.note("similarity", "cosine on unnormalized embeddings");
    m.write(&out.join("manifest.json"))?;
    failure.map_or(Ok(()), Err)
}

/// Column names of the `bounds` output.
pub const BOUNDS_COLUMNS: [&str; 8] = ["tau", "n", "s", "upper", "lower", "lower_at_double_tau", "gap", "relative_gap"];

fn run_bounds(tau_grid: &str, n: &str, s_grid: &str, out: &Path, argv: &[String]) -> Result<()> {
    let taus: Vec<f64> = parse_list(tau_grid, "tau")?;
    let ns: Vec<usize> = parse_list(n, "n")?;
    let ss = parse_grid(s_grid)?;
    let mut rows = Vec::new();
    for &tau in &taus {
        for &n in &ns {
            for &s in &ss {
                let upper = loss_upper_bound(s, tau, n)?;
                let gap = bound_gap(s, tau, n)?;
                rows.push(vec![
                    tau.to_string(),
                    n.to_string(),
                    s.to_string(),
                    upper.to_string(),
                    loss_lower_bound(s, tau, n)?.to_string(),
                    loss_lower_bound(s, 2.0 * tau, n)?.to_string(),
                    gap.to_string(),
                    (gap.abs() / upper).to_string(),
                ]);
            }
        }
    }
    write_csv(out, &BOUNDS_COLUMNS, &rows)?;
    let m = RunManifest::new("bounds", argv, None);
    m.write(&manifest_path(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        let g = parse_grid("0.9:0.9999:20").unwrap();
        assert_eq!(g.len(), 20);
        assert_eq!(g[0], 0.9);
        assert_eq!(g[19], 0.9999);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(parse_grid("0.5,0.6").unwrap(), vec![0.5, 0.6]);
        assert!(parse_grid("1:2").is_err());
        assert!(parse_grid("a,b").is_err());
    }

    #[test]
    fn argument_pairs_keep_order() {
        let argv: Vec<String> = ["isolab", "metrics", "--corpus", "c", "--exclude-specials", "--out=x.csv"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(
            argument_pairs(&argv),
            vec![
                ("corpus".into(), "c".into()),
                ("exclude-specials".into(), "true".into()),
                ("out".into(), "x.csv".into())
            ]
        );
    }

    #[test]
    fn sibling_paths() {
        assert_eq!(sibling(Path::new("a/ssc.csv"), "_curve"), PathBuf::from("a/ssc_curve.csv"));
        assert_eq!(manifest_path(Path::new("a/r.csv")), PathBuf::from("a/r.manifest.json"));
    }
}

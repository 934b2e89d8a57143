//! The bundled fixture pipeline (metrics, dims, informativity, ssc): running
//! it, comparing against the checked-in goldens, and re-deriving the golden
//! numbers with the reference oracle.

use std::fs;
use std::path::Path;
use std::process::Command;

use indexmap::IndexMap;
use isolab::seed::{derive_seed, TOKEN_SAMPLE_LABEL};
use isolab::store::{load_corpus, sample_tokens, EmbeddingCorpus, SampleSpec};

use super::{fixtures_dir, golden_dir, oracle};

pub const SEED: u64 = 42;
pub const SAMPLE: usize = 20;
pub const KS: [usize; 6] = [0, 1, 2, 3, 5, 7];

pub const FILES: [&str; 6] = [
    "metrics.csv",
    "dims.csv",
    "dims_dims.csv",
    "informativity.csv",
    "ssc.csv",
    "ssc_curve.csv",
];

fn run(args: &[String]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_isolab"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)))
    }
}

/// Runs every subcommand on the fixtures, writing the golden file set to `out`.
pub fn run_pipeline(out: &Path) -> Result<(), String> {
    let fx = fixtures_dir();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let tiny = s(&fx.join("tiny"));
    let seed = SEED.to_string();
    let sample = SAMPLE.to_string();
    let ks = KS.map(|k| k.to_string()).join(",");
    let common = |cmd: &str, file: &str| -> Vec<String> {
        let mut v: Vec<String> = vec![cmd.into()];
        if cmd != "ssc" {
            v.extend(["--corpus".into(), tiny.clone()]);
        }
        v.extend(["--sample".into(), sample.clone(), "--seed".into(), seed.clone()]);
        v.extend(["--out".into(), s(&out.join(file))]);
        v
    };
    let mut metrics = common("metrics", "metrics.csv");
    metrics.extend(["--layers".into(), "all".into()]);
    run(&metrics)?;
    run(&common("dims", "dims.csv"))?;
    let mut info = common("informativity", "informativity.csv");
    info.extend(["--ks".into(), ks]);
    run(&info)?;
    let mut ssc = common("ssc", "ssc.csv");
    for side in ["vanilla_a", "tuned_a", "vanilla_b", "tuned_b"] {
        ssc.push(format!("--{}", side.replace('_', "-")));
        ssc.push(s(&fx.join(side)));
    }
    ssc.extend(["--top".into(), "40".into()]);
    run(&ssc)
}

/// Names of files whose bytes differ from the checked-in goldens.
pub fn compare_with_golden(out: &Path) -> Vec<String> {
    FILES
        .iter()
        .filter(|f| {
            let got = fs::read(out.join(f)).ok();
            let want = fs::read(golden_dir().join(f)).ok();
            got.is_none() || got != want
        })
        .map(|f| f.to_string())
        .collect()
}

fn read_csv(name: &str) -> Vec<IndexMap<String, String>> {
    let mut r = csv::Reader::from_path(golden_dir().join(name)).unwrap();
    let headers: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    r.records()
        .map(|rec| headers.iter().cloned().zip(rec.unwrap().iter().map(String::from)).collect())
        .collect()
}

fn num(row: &IndexMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap_or_else(|_| panic!("{key}: {:?}", row[key]))
}

fn sample_vectors(corpus: &EmbeddingCorpus, layer: u32) -> Vec<Vec<f64>> {
    let spec = SampleSpec::one_per_sentence(SAMPLE, derive_seed(SEED, TOKEN_SAMPLE_LABEL));
    sample_tokens(corpus, layer, &spec)
        .unwrap()
        .iter()
        .map(|t| t.vector.iter().map(|&x| x as f64).collect())
        .collect()
}

/// Per-token occurrence vectors and sentence sets, first-appearance order.
fn occurrences(corpus: &EmbeddingCorpus, layer: u32) -> IndexMap<String, (Vec<Vec<f64>>, Vec<u64>)> {
    let mut out: IndexMap<String, (Vec<Vec<f64>>, Vec<u64>)> = IndexMap::new();
    for r in corpus.records().iter().filter(|r| r.layer == layer) {
        let e = out.entry(r.token.clone()).or_default();
        e.0.push(r.vector.iter().map(|&x| x as f64).collect());
        if !e.1.contains(&r.sentence_id) {
            e.1.push(r.sentence_id);
        }
    }
    out
}

fn oracle_self_similarity(corpus: &EmbeddingCorpus, layer: u32, token: &str) -> Option<f64> {
    let occ = occurrences(corpus, layer);
    let (vs, sents) = occ.get(token)?;
    (vs.len() >= 2 && sents.len() >= 2).then(|| oracle::self_similarity(vs))
}

fn check(what: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    if (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{what}: golden {got} vs oracle {want}"))
    }
}

/// Recomputes the golden metric, dims, informativity and SSC numbers from the
/// fixture vectors with the brute-force reference.
pub fn verify_golden_against_oracle(tol: f64) -> Result<usize, String> {
    let fx = fixtures_dir();
    let tiny = load_corpus(fx.join("tiny")).map_err(|e| e.to_string())?;
    let mut checked = 0usize;

    for row in read_csv("metrics.csv") {
        let layer: u32 = row["layer"].parse().unwrap();
        let base = oracle::anisotropy(&sample_vectors(&tiny, layer));
        check("anisotropy_baseline", num(&row, "anisotropy_baseline"), base, tol)?;
        let ss: Vec<f64> = occurrences(&tiny, layer)
            .keys()
            .filter_map(|t| oracle_self_similarity(&tiny, layer, t))
            .collect();
        let ss = ss.iter().sum::<f64>() / ss.len() as f64;
        check("mean_self_similarity", num(&row, "mean_self_similarity"), ss, tol)?;
        let mut sentences: IndexMap<u64, Vec<Vec<f64>>> = IndexMap::new();
        for r in tiny.records().iter().filter(|r| r.layer == layer) {
            sentences
                .entry(r.sentence_id)
                .or_default()
                .push(r.vector.iter().map(|&x| x as f64).collect());
        }
        let intra = sentences.values().map(|s| oracle::intra_sentence(s)).sum::<f64>() / sentences.len() as f64;
        check("mean_intra_similarity", num(&row, "mean_intra_similarity"), intra, tol)?;
        check("adjusted_self_similarity", num(&row, "adjusted_self_similarity"), ss - base, tol)?;
        check("adjusted_intra_similarity", num(&row, "adjusted_intra_similarity"), intra - base, tol)?;
        checked += 5;
    }

    let last = tiny.last_layer().unwrap();
    let vs = sample_vectors(&tiny, last);
    let contrib = oracle::contributions(&vs);
    let order = oracle::rogue_order(&contrib);
    for (rank, row) in read_csv("dims_dims.csv").iter().enumerate() {
        let d: usize = row["dimension"].parse().unwrap();
        if d != order[rank] {
            return Err(format!("rank {rank}: golden dimension {d}, oracle {}", order[rank]));
        }
        check("contribution", num(row, "contribution"), contrib[d], tol)?;
        checked += 1;
    }
    let total: f64 = contrib.iter().sum();
    check("contribution total vs baseline", total, oracle::anisotropy(&vs), tol)?;

    for row in read_csv("informativity.csv") {
        let k: usize = row["k"].parse().unwrap();
        check(&format!("informativity k={k}"), num(&row, "r"), oracle::informativity(&vs, k), tol)?;
        checked += 1;
    }

    let corpora: Vec<EmbeddingCorpus> = ["vanilla_a", "tuned_a", "vanilla_b", "tuned_b"]
        .iter()
        .map(|n| load_corpus(fx.join(n)).unwrap())
        .collect();
    let mut ssc_by_pair: IndexMap<String, Vec<f64>> = IndexMap::new();
    for row in read_csv("ssc.csv") {
        let (v, f) = if row["pair"] == "a" { (&corpora[0], &corpora[1]) } else { (&corpora[2], &corpora[3]) };
        let layer = v.last_layer().unwrap();
        let tok = &row["token_string"];
        let ani_v = oracle::anisotropy(&sample_vectors(v, layer));
        let ani_f = oracle::anisotropy(&sample_vectors(f, layer));
        let ss_v = oracle_self_similarity(v, layer, tok).ok_or("unqualified vanilla token")?;
        let ss_f = oracle_self_similarity(f, layer, tok).ok_or("unqualified tuned token")?;
        check("ssc", num(&row, "ssc"), (ss_f - ani_f) - (ss_v - ani_v), tol)?;
        ssc_by_pair.entry(row["pair"].clone()).or_default().push(num(&row, "ssc"));
        checked += 1;
    }
    let (curve, _) = oracle::correlation_curve(&ssc_by_pair["a"], &ssc_by_pair["b"]);
    for (row, want) in read_csv("ssc_curve.csv").iter().zip(&curve) {
        match (row["correlation"].as_str(), want) {
            ("", None) => {}
            (_, Some(w)) if !row["correlation"].is_empty() => check("curve", num(row, "correlation"), *w, tol)?,
            _ => return Err(format!("curve definedness differs at n = {}", row["n"])),
        }
        checked += 1;
    }
    Ok(checked)
}

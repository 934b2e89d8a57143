//! Regenerates the small corpora under `tests/fixtures/`.
//!
//! Usage: `cargo run --example make_fixtures -- crates/core/tests/fixtures`

use std::path::Path;

use isolab::store::{write_corpus, EmbeddingCorpus, TokenRecord};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const DIM: usize = 8;

const SENTENCES: [&str; 20] = [
    "the cat sat on the mat",
    "a dog ran in the park",
    "the dog sat on a log",
    "my cat ran to the door",
    "the bird sang in the tree",
    "a cat and a dog played",
    "the sun rose over the park",
    "the bird flew to the tree",
    "my dog sat by the door",
    "rain fell on the park",
    "the cat slept in the sun",
    "a bird sat on the log",
    "the rain fell over the tree",
    "my bird sang by the door",
    "the dog played in the rain",
    "a cat sat in the tree",
    "the sun fell on my mat",
    "the dog ran over the log",
    "a bird played in the park",
    "the cat ran by the mat",
];

struct Style {
    offset: f64,
    context: f64,
    noise: f64,
}

fn vocabulary() -> Vec<&'static str> {
    let mut v: Vec<&str> = Vec::new();
    for s in SENTENCES {
        for w in s.split(' ') {
            if !v.contains(&w) {
                v.push(w);
            }
        }
    }
    v
}

fn gauss_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vec<f64> {
    let n = Normal::new(0.0, scale).unwrap();
    (0..DIM).map(|_| n.sample(rng)).collect()
}

/// Two layers; layer 1 mixes in the sentence context. `sensitivity` scales the
/// per-occurrence noise of each word.
fn build(name: &str, seed: u64, styles: [Style; 2], sensitivity: &dyn Fn(usize) -> f64) -> EmbeddingCorpus {
    let vocab = vocabulary();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: Vec<Vec<f64>> = (0..vocab.len() + 2).map(|_| gauss_vec(&mut rng, 1.0)).collect();
    let shared: Vec<Vec<f64>> = (0..2).map(|_| gauss_vec(&mut rng, 1.0)).collect();
    let mut records = Vec::new();
    for (layer, style) in styles.iter().enumerate() {
        for (sid, s) in SENTENCES.iter().enumerate() {
            let mut words: Vec<(&str, usize)> = vec![("[CLS]", vocab.len())];
            words.extend(s.split(' ').map(|w| (w, vocab.iter().position(|&v| v == w).unwrap())));
            words.push(("[SEP]", vocab.len() + 1));
            let mut ctx = vec![0.0; DIM];
            for &(_, id) in &words {
                for d in 0..DIM {
                    ctx[d] += base[id][d] / words.len() as f64;
                }
            }
            for (pos, &(w, id)) in words.iter().enumerate() {
                let noise = gauss_vec(&mut rng, style.noise * sensitivity(id));
                let v: Vec<f32> = (0..DIM)
                    .map(|d| {
                        (base[id][d] + style.context * ctx[d] + style.offset * shared[layer][d] + noise[d]) as f32
                    })
                    .collect();
                records.push(TokenRecord {
                    index: records.len() as u64,
                    layer: layer as u32,
                    sentence_id: sid as u64,
                    position: pos as u32,
                    token: w.to_string(),
                    vector: v,
                });
            }
        }
    }
    EmbeddingCorpus::new(name, DIM, None, records).unwrap()
}

fn main() {
    let root = std::env::args().nth(1).unwrap_or_else(|| "crates/core/tests/fixtures".into());
    let root = Path::new(&root);
    let flat = |_: usize| 1.0;
    let sensitivity = |id: usize| 0.3 + (id % 7) as f64 * 0.25;

    let tiny = build(
        "fixture-tiny",
        7,
        [
            Style { offset: 1.5, context: 0.2, noise: 0.3 },
            Style { offset: 3.0, context: 0.8, noise: 0.5 },
        ],
        &flat,
    );
    write_corpus(&tiny, root.join("tiny")).unwrap();

    for (family, seed) in [("a", 11u64), ("b", 23)] {
        let vanilla = build(
            &format!("fixture-vanilla-{family}"),
            seed,
            [
                Style { offset: 2.0, context: 0.3, noise: 0.2 },
                Style { offset: 4.0, context: 0.6, noise: 0.3 },
            ],
            &flat,
        );
        let tuned = build(
            &format!("fixture-tuned-{family}"),
            seed + 1,
            [
                Style { offset: 0.5, context: 0.3, noise: 0.2 },
                Style { offset: 0.5, context: 0.6, noise: 0.6 },
            ],
            &sensitivity,
        );
        write_corpus(&vanilla, root.join(format!("vanilla_{family}"))).unwrap();
        write_corpus(&tuned, root.join(format!("tuned_{family}"))).unwrap();
    }
}

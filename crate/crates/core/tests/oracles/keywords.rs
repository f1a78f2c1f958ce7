//! Brute-force nearest neighbours for keyword expansion.

use droidsift::pii::{expand_keywords, EmbeddingStore, Review};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Every other non-zero word scored by cosine, sorted by similarity then
/// word, cut to `k`.
pub fn brute_force(rows: &[(String, Vec<f64>)], seed: &str, k: usize) -> Vec<(String, f64)> {
    let Some((_, s)) = rows.iter().find(|(w, _)| w == seed) else {
        return Vec::new();
    };
    let len = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let ns = len(s);
    if ns == 0.0 {
        return Vec::new();
    }
    let mut all: Vec<(String, f64)> = rows
        .iter()
        .filter(|(w, v)| w != seed && len(v) != 0.0)
        .map(|(w, v)| {
            let d: f64 = s.iter().zip(v).map(|(a, b)| a * b).sum();
            (w.clone(), d / (ns * len(v)))
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite").then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// A vocabulary of `n` words in `dim` dimensions. Some rows repeat earlier
/// vectors exactly, some are scaled copies and a few are zero, so ties and
/// skipped rows occur.
pub fn random_vocabulary(n: usize, dim: usize, seed: u64) -> Vec<(String, Vec<f64>)> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut rows: Vec<(String, Vec<f64>)> = Vec::with_capacity(n);
    for i in 0..n {
        let roll: u8 = rng.random_range(0..20);
        let v = if roll == 0 {
            vec![0.0; dim]
        } else if roll < 4 && !rows.is_empty() {
            let j = rng.random_range(0..rows.len());
            rows[j].1.clone()
        } else if roll < 6 {
            (0..dim).map(|_| rng.random_range(-3..=3) as f64).collect()
        } else {
            (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        rows.push((format!("w{:04}_{}", (i * 7919) % n, i), v));
    }
    rows
}

/// Checks expansion against brute force for each `k` and a spread of
/// seeds. Returns the number of (seed, k) pairs compared.
pub fn check_expansion(rows: &[(String, Vec<f64>)], ks: &[usize], seeds: usize) -> usize {
    let store = EmbeddingStore::from_pairs(rows).expect("valid vocabulary");
    let step = (rows.len() / seeds.max(1)).max(1);
    let seed_words: Vec<String> = rows.iter().step_by(step).map(|(w, _)| w.clone()).collect();
    let mut compared = 0;
    for &k in ks {
        let db = expand_keywords(&store, &seed_words, k, &Review::default());
        for exp in &db.expansions {
            let got: Vec<(String, f64)> = exp.synonyms.iter().map(|s| (s.word.clone(), s.similarity)).collect();
            let want = brute_force(rows, &exp.seed, k);
            assert_eq!(got, want, "seed {} k {k}", exp.seed);
            compared += 1;
        }
    }
    compared
}

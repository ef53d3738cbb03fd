#![allow(dead_code)]

use std::path::PathBuf;

use parley_core::{Comment, Corpus, EmbeddingTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn comment(id: u64, org: &str, year: i32, month: u32, text: &str) -> Comment {
    Comment {
        comment_id: id,
        text: text.to_string(),
        source_file: format!("s_{year}-{month:02}.txt"),
        year,
        month,
        participant_name: format!("{org} rep"),
        participant_org: org.to_string(),
        multi_org: Vec::new(),
    }
}

/// Table with terms `t0..t{n}` and uniform random components.
pub fn random_table(n: usize, dim: usize, seed: u64) -> EmbeddingTable {
    let mut r = rng(seed);
    let rows = (0..n).map(|i| {
        let v: Vec<f32> = (0..dim).map(|_| r.random_range(-1.0f32..1.0)).collect();
        (format!("t{i}"), v)
    });
    EmbeddingTable::from_rows(rows, "random").unwrap()
}

/// Random comments over `t0..t{vocab}` for the given parties and years.
pub fn random_corpus(n: usize, vocab: usize, parties: &[&str], years: &[i32], seed: u64) -> Corpus {
    let mut r = rng(seed);
    let comments = (0..n)
        .map(|i| {
            let len = r.random_range(3..20);
            let words: Vec<String> = (0..len)
                .map(|_| format!("t{}", r.random_range(0..vocab)))
                .collect();
            let org = parties[r.random_range(0..parties.len())];
            let year = years[r.random_range(0..years.len())];
            let month = r.random_range(1..=12);
            let mut c = comment(i as u64 + 1, org, year, month, &words.join(" "));
            if r.random_bool(0.1) && parties.len() > 1 {
                let other = parties.iter().find(|p| **p != org).unwrap();
                c.multi_org = vec![org.to_string(), other.to_string()];
            }
            c
        })
        .collect();
    Corpus::new(comments)
}

pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!((a - b).abs() <= tol, "{what}: {a} vs {b} (tol {tol})");
}

//! Seeded synthetic inputs for the benchmarks.

use ndarray::Array2;
use parley_core::{Comment, Corpus, EmbeddingTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_table(n_terms: usize, dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n_terms).map(|i| {
        let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        (format!("w{i}"), v)
    });
    EmbeddingTable::from_rows(rows, "synthetic").expect("valid rows")
}

pub fn random_nonneg(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>())
}

/// Comments of `words` tokens each, drawn from the first `vocab` terms of a
/// [`random_table`] vocabulary, spread over four parties.
pub fn random_corpus(n_comments: usize, words: usize, vocab: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let comments = (0..n_comments)
        .map(|i| {
            let text: Vec<String> = (0..words)
                .map(|_| format!("w{}", rng.random_range(0..vocab)))
                .collect();
            Comment {
                comment_id: i as u64 + 1,
                text: text.join(" "),
                source_file: format!("session_{}.txt", i % 14),
                year: 2018 + (i % 3) as i32,
                month: 1 + (i % 12) as u32,
                participant_name: format!("Speaker {}", i % 7),
                participant_org: format!("Party {}", i % 4),
                multi_org: Vec::new(),
            }
        })
        .collect();
    Corpus::new(comments)
}

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use parley_bench::{random_corpus, random_nonneg, random_table};
use parley_core::embedding::{embed_text, neighbors};
use parley_core::topic::{build_tfidf, fit_hals, nndsvd_init, CsrMatrix, HalsParams};
use parley_core::{EmbedOptions, NmfConfig, Stopwords};

fn hals(c: &mut Criterion) {
    let x = CsrMatrix::from_dense(&random_nonneg(200, 150, 1));
    let init = nndsvd_init(&x, 10, 0).unwrap();
    let params = HalsParams {
        alpha: 0.1,
        l1_ratio: 0.5,
        tol: 0.0,
        max_iter: 20,
    };
    c.bench_function("hals_200x150_k10_20_sweeps", |b| {
        b.iter(|| fit_hals(black_box(&x), init.w.clone(), init.h.clone(), &params).unwrap())
    });
    c.bench_function("nndsvd_200x150_k10", |b| {
        b.iter(|| nndsvd_init(black_box(&x), 10, 0).unwrap())
    });
}

fn table_ops(c: &mut Criterion) {
    let table = random_table(50_000, 300, 2);
    c.bench_function("neighbors_50k_300d", |b| {
        b.iter(|| neighbors(&table, black_box("w17"), 0.1, usize::MAX).unwrap())
    });
    let corpus = random_corpus(1, 2000, 50_000, 3);
    let text = &corpus.comments[0].text;
    let stop = Stopwords::english();
    let opts = EmbedOptions::default();
    c.bench_function("embed_text_2000_tokens", |b| {
        b.iter(|| embed_text(&table, black_box(text), &stop, &opts).unwrap())
    });
}

fn tfidf(c: &mut Criterion) {
    let corpus = random_corpus(2000, 60, 5000, 4);
    let cfg = NmfConfig::default();
    let stop = Stopwords::english();
    c.bench_function("tfidf_2000_docs", |b| {
        b.iter(|| build_tfidf(black_box(&corpus), &cfg, &stop, None).unwrap())
    });
}

criterion_group!(benches, hals, table_ops, tfidf);
criterion_main!(benches);

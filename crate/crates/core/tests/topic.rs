mod common;

use std::collections::HashSet;

use common::{assert_close, comment, rng};
use ndarray::Array2;
use parley_core::topic::{
    assign_topics, build_tfidf, fit_hals, fit_nmf, nndsvd_init, objective, representative_comments,
    write_keywords, CsrMatrix, HalsParams,
};
use parley_core::{Corpus, NmfConfig, Stopwords};
use proptest::prelude::*;
use rand::Rng;

fn corpus(texts: &[&str]) -> Corpus {
    Corpus::new(
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| comment(i as u64 + 1, "A", 2019, 1, t))
            .collect(),
    )
}

fn rel_error(x: &Array2<f64>, w: &Array2<f64>, h: &Array2<f64>) -> f64 {
    let r = x - &w.dot(h);
    (r.iter().map(|v| v * v).sum::<f64>() / x.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

fn planted(rows: usize, cols: usize, rank: usize, seed: u64) -> Array2<f64> {
    let mut r = rng(seed);
    let w = Array2::from_shape_fn((rows, rank), |_| r.random_range(0.0..1.0));
    let h = Array2::from_shape_fn((rank, cols), |_| r.random_range(0.0..1.0));
    w.dot(&h)
}

fn unregularised(max_iter: usize, tol: f64) -> HalsParams {
    HalsParams {
        alpha: 0.0,
        l1_ratio: 0.0,
        tol,
        max_iter,
    }
}

#[test]
fn tfidf_matches_hand_computation() {
    let docs = [
        "apple banana apple",
        "banana cherry",
        "cherry cherry date",
        "apple date",
    ];
    let cfg = NmfConfig {
        max_df: 1.0,
        ..Default::default()
    };
    let m = build_tfidf(&corpus(&docs), &cfg, &Stopwords::empty(), None).unwrap();
    assert_eq!(m.terms, ["apple", "banana", "cherry", "date"]);
    // Every term occurs in 2 of 4 docs: idf = ln(5/3) + 1.
    let idf = (5.0f64 / 3.0).ln() + 1.0;
    for v in &m.idf {
        assert_close(*v, idf, 1e-12, "idf");
    }
    // Raw tf times idf, L2-normalised; idf cancels when it is constant.
    let tf = [
        [2.0, 1.0, 0.0, 0.0],
        [0.0, 1.0, 1.0, 0.0],
        [0.0, 0.0, 2.0, 1.0],
        [1.0, 0.0, 0.0, 1.0],
    ];
    let dense = m.matrix.to_dense();
    for (i, row) in tf.iter().enumerate() {
        let norm = row.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
        for j in 0..4 {
            assert_close(dense[[i, j]], row[j] / norm, 1e-9, "tfidf cell");
        }
    }
}

#[test]
fn tfidf_uneven_idf_and_max_df() {
    let docs = ["common rare", "common other", "common other", "common"];
    let cfg = NmfConfig {
        max_df: 0.9,
        ..Default::default()
    };
    let m = build_tfidf(&corpus(&docs), &cfg, &Stopwords::empty(), None).unwrap();
    // "common" is in every document and is dropped.
    assert_eq!(m.terms, ["other", "rare"]);
    let idf_other = (5.0f64 / 3.0).ln() + 1.0;
    let idf_rare = (5.0f64 / 2.0).ln() + 1.0;
    assert_close(m.idf[0], idf_other, 1e-12, "idf other");
    assert_close(m.idf[1], idf_rare, 1e-12, "idf rare");
    let dense = m.matrix.to_dense();
    assert_close(dense[[0, 1]], 1.0, 1e-12, "single-term row normalised");
    assert_eq!(dense.row(3).sum(), 0.0);

    let allow: HashSet<String> = ["rare".to_string()].into();
    let only = build_tfidf(&corpus(&docs), &cfg, &Stopwords::empty(), Some(&allow)).unwrap();
    assert_eq!(only.terms, ["rare"]);
}

#[test]
fn nndsvd_is_deterministic_and_nonnegative() {
    let x = CsrMatrix::from_dense(&planted(30, 25, 4, 3));
    let a = nndsvd_init(&x, 5, 42).unwrap();
    let b = nndsvd_init(&x, 5, 42).unwrap();
    assert_eq!(a.w, b.w);
    assert_eq!(a.h, b.h);
    assert!(a.w.iter().chain(a.h.iter()).all(|&v| v >= 0.0));
    assert_eq!(a.w.dim(), (30, 5));
    assert_eq!(a.h.dim(), (5, 25));
    assert!(nndsvd_init(&x, 26, 0).is_err());
}

#[test]
fn nndsvd_recovers_rank_one_exactly() {
    let mut r = rng(9);
    let u: Vec<f64> = (0..20).map(|_| r.random_range(0.1..2.0)).collect();
    let v: Vec<f64> = (0..15).map(|_| r.random_range(0.1..2.0)).collect();
    let x = Array2::from_shape_fn((20, 15), |(i, j)| u[i] * v[j]);
    let init = nndsvd_init(&CsrMatrix::from_dense(&x), 1, 0).unwrap();
    let diff = (&x - &init.w.dot(&init.h))
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(diff < 1e-8, "max abs error {diff}");
}

#[test]
fn hals_recovers_planted_rank_three() {
    for seed in 0..5 {
        let x = planted(50, 40, 3, seed);
        let sx = CsrMatrix::from_dense(&x);
        let init = nndsvd_init(&sx, 3, seed).unwrap();
        let fit = fit_hals(&sx, init.w, init.h, &unregularised(500, 1e-10)).unwrap();
        let err = rel_error(&x, &fit.w, &fit.h);
        assert!(err < 0.02, "seed {seed}: relative error {err}");
    }
}

#[test]
fn hals_fits_tiny_full_rank_exactly() {
    let mut r = rng(5);
    for (rows, cols) in [(4, 3), (3, 5), (6, 6)] {
        let x = Array2::from_shape_fn((rows, cols), |_| r.random_range(0.0..1.0));
        let k = rows.min(cols);
        let sx = CsrMatrix::from_dense(&x);
        let init = nndsvd_init(&sx, k, 1).unwrap();
        let fit = fit_hals(&sx, init.w, init.h, &unregularised(20_000, 0.0)).unwrap();
        let err = rel_error(&x, &fit.w, &fit.h);
        assert!(err < 1e-6, "{rows}x{cols}: relative error {err}");
    }
}

#[test]
fn nndsvd_on_identity_is_diagonal_dominant() {
    let x = Array2::<f64>::eye(4);
    let init = nndsvd_init(&CsrMatrix::from_dense(&x), 4, 0).unwrap();
    let p = init.w.dot(&init.h);
    assert!(p.iter().all(|&v| v >= 0.0));
    for i in 0..4 {
        let off: f64 = (0..4).filter(|&j| j != i).map(|j| p[[i, j]]).sum();
        assert!(p[[i, i]] > off, "row {i}: {p:?}");
    }
}

#[test]
fn nndsvd_beats_flat_start_in_most_trials() {
    let mut wins = 0;
    for seed in 0..100 {
        let mut r = rng(1000 + seed);
        let x = Array2::from_shape_fn((20, 30), |_| r.random_range(0.0..1.0));
        let sx = CsrMatrix::from_dense(&x);
        let k = 5;
        let init = nndsvd_init(&sx, k, seed).unwrap();
        let scale = (x.mean().unwrap() / k as f64).sqrt();
        let w1 = Array2::from_elem((20, k), scale);
        let h1 = Array2::from_elem((k, 30), scale);
        if objective(&sx, &init.w, &init.h, 0.0, 0.0) <= objective(&sx, &w1, &h1, 0.0, 0.0) {
            wins += 1;
        }
    }
    assert!(wins >= 95, "{wins}/100");
}

#[test]
fn regularised_objective_matches_direct_formula() {
    let mut r = rng(2);
    let x = Array2::from_shape_fn((6, 5), |_| r.random_range(0.0..1.0));
    let w = Array2::from_shape_fn((6, 2), |_| r.random_range(0.0..1.0));
    let h = Array2::from_shape_fn((2, 5), |_| r.random_range(0.0..1.0));
    let (alpha, l1_ratio) = (0.3, 0.25);
    let (a1, a2) = (alpha * l1_ratio, alpha * (1.0 - l1_ratio));
    let resid: f64 = (&x - &w.dot(&h)).iter().map(|v| v * v).sum();
    let l1: f64 = w.iter().chain(h.iter()).map(|v| v.abs()).sum();
    let l2: f64 = w.iter().chain(h.iter()).map(|v| v * v).sum();
    let expected = 0.5 * resid + a1 * l1 + 0.5 * a2 * l2;
    let got = objective(&CsrMatrix::from_dense(&x), &w, &h, alpha, l1_ratio);
    assert_close(got, expected, 1e-10, "objective");
}

fn topic_corpus() -> Corpus {
    let themes = [
        ["ceasefire", "troops", "withdrawal", "security", "prisoners"],
        ["salaries", "bank", "currency", "budget", "revenue"],
        [
            "election",
            "constitution",
            "parliament",
            "referendum",
            "federal",
        ],
    ];
    let mut r = rng(17);
    let texts: Vec<String> = (0..90)
        .map(|i| {
            let theme = &themes[i % 3];
            (0..12)
                .map(|_| theme[r.random_range(0..5)])
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    corpus(&refs)
}

#[test]
fn topics_separate_planted_themes() {
    let cfg = NmfConfig {
        n_topics: 3,
        alpha: 0.0,
        n_keywords: 5,
        ..Default::default()
    };
    let x = build_tfidf(&topic_corpus(), &cfg, &Stopwords::english(), None).unwrap();
    let model = fit_nmf(&x, &cfg).unwrap();
    let mut found: Vec<Vec<String>> = model
        .keywords
        .iter()
        .map(|k| {
            let mut w: Vec<String> = k.iter().map(|(t, _)| t.clone()).collect();
            w.sort();
            w
        })
        .collect();
    found.sort();
    assert_eq!(
        found,
        [
            ["bank", "budget", "currency", "revenue", "salaries"],
            ["ceasefire", "prisoners", "security", "troops", "withdrawal"],
            [
                "constitution",
                "election",
                "federal",
                "parliament",
                "referendum"
            ],
        ]
    );
    assert!(model
        .objective_trace
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-12)));

    let members = assign_topics(&model, 0.5);
    for m in &members {
        assert_close(m.proportions.iter().sum(), 1.0, 1e-9, "proportions");
        assert_eq!(m.topics.len(), 1);
    }
    // Same theme, same topic.
    let topic_of = |id: u64| *members[id as usize - 1].topics.iter().next().unwrap();
    assert_eq!(topic_of(1), topic_of(4));
    assert_ne!(topic_of(1), topic_of(2));

    let reps = representative_comments(&model, topic_of(1), 5).unwrap();
    assert_eq!(reps.len(), 5);
    assert!(reps.iter().all(|(id, _)| (id - 1) % 3 == 0));
    assert!(reps.windows(2).all(|w| w[0].1 >= w[1].1));
    assert!(representative_comments(&model, 3, 1).is_err());

    let mut buf = Vec::new();
    write_keywords(&mut buf, &model).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("topic_id,rank,keyword,weight\n"));
    assert_eq!(text.lines().count(), 1 + 3 * 5);
}

#[test]
fn planted_keywords_are_recovered() {
    // Topic t owns terms 10t..10t+9 at weight 10 and 1 elsewhere.
    let (k, terms, docs) = (3, 40, 60);
    let mut r = rng(23);
    let h = Array2::from_shape_fn((k, terms), |(t, j)| if j / 10 == t { 10.0 } else { 1.0 });
    let w = Array2::from_shape_fn((docs, k), |(i, t)| {
        if i % k == t {
            r.random_range(1.0..2.0)
        } else {
            0.0
        }
    });
    let x = w.dot(&h);
    let sx = CsrMatrix::from_dense(&x);
    let init = nndsvd_init(&sx, k, 0).unwrap();
    let fit = fit_hals(&sx, init.w, init.h, &unregularised(500, 1e-12)).unwrap();
    let mut found: Vec<Vec<usize>> = fit
        .h
        .rows()
        .into_iter()
        .map(|row| {
            let mut idx: Vec<usize> = (0..terms).collect();
            idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
            let mut top: Vec<usize> = idx[..10].to_vec();
            top.sort();
            top
        })
        .collect();
    found.sort();
    let expected: Vec<Vec<usize>> = (0..k).map(|t| (10 * t..10 * t + 10).collect()).collect();
    assert_eq!(found, expected);
}

fn model_with_w(w: Array2<f64>) -> parley_core::TopicModel {
    let n = w.nrows();
    let k = w.ncols();
    parley_core::TopicModel {
        h: Array2::eye(k),
        w,
        comment_ids: (1..=n as u64).collect(),
        terms: (0..k).map(|i| format!("t{i}")).collect(),
        objective_trace: Vec::new(),
        keywords: Vec::new(),
        deficient_topics: Vec::new(),
        config: NmfConfig::default(),
    }
}

#[test]
fn membership_and_ranking_match_brute_force() {
    let mut r = rng(31);
    let w = Array2::from_shape_fn((50, 4), |_| {
        if r.random_bool(0.3) {
            0.0
        } else {
            r.random_range(0.0..1.0)
        }
    });
    let model = model_with_w(w.clone());
    for (i, m) in assign_topics(&model, 0.1).iter().enumerate() {
        let total: f64 = w.row(i).sum();
        let expected: Vec<usize> = (0..4)
            .filter(|&t| total > 0.0 && w[[i, t]] / total >= 0.1)
            .collect();
        assert_eq!(m.topics.iter().copied().collect::<Vec<_>>(), expected);
    }
    for t in 0..4 {
        let mut all: Vec<(u64, f64, f64)> = (0..50)
            .map(|i| {
                let total: f64 = w.row(i).sum();
                let p = if total > 0.0 { w[[i, t]] / total } else { 0.0 };
                (i as u64 + 1, p, w[[i, t]])
            })
            .collect();
        all.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap()
                .then(b.2.partial_cmp(&a.2).unwrap())
                .then(a.0.cmp(&b.0))
        });
        let got = representative_comments(&model, t, 100).unwrap();
        assert_eq!(got.len(), 50);
        let ids: Vec<u64> = got.iter().map(|g| g.0).collect();
        assert_eq!(ids, all.iter().map(|a| a.0).collect::<Vec<_>>());
    }
}

#[test]
fn threshold_arithmetic() {
    let model = model_with_w(ndarray::array![[0.95, 0.05], [0.0, 0.0], [0.0, 2.0]]);
    let m = assign_topics(&model, 0.1);
    assert_eq!(m[0].topics.iter().copied().collect::<Vec<_>>(), [0]);
    assert!(m[1].topics.is_empty());
    assert_eq!(m[2].topics.iter().copied().collect::<Vec<_>>(), [1]);
    assert_eq!(representative_comments(&model, 1, 1).unwrap()[0].0, 3);
}

#[test]
fn refit_is_bitwise_identical() {
    let cfg = NmfConfig {
        n_topics: 4,
        ..Default::default()
    };
    let x = build_tfidf(&topic_corpus(), &cfg, &Stopwords::english(), None).unwrap();
    let a = fit_nmf(&x, &cfg).unwrap();
    let b = fit_nmf(&x, &cfg).unwrap();
    assert_eq!(a.w, b.w);
    assert_eq!(a.h, b.h);
    assert_eq!(a.objective_trace, b.objective_trace);
}

#[test]
fn too_few_topics_rejected() {
    let cfg = NmfConfig {
        n_topics: 1,
        ..Default::default()
    };
    assert!(cfg.validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn hals_objective_never_increases(seed in 0u64..1000, k in 1usize..5, alpha in 0.0f64..0.5, l1 in 0.0f64..1.0) {
        let mut r = rng(seed);
        let x = Array2::from_shape_fn((15, 12), |_| if r.random_bool(0.4) { r.random_range(0.0..1.0) } else { 0.0 });
        prop_assume!(x.sum() > 0.0);
        let sx = CsrMatrix::from_dense(&x);
        let init = nndsvd_init(&sx, k, seed).unwrap();
        let params = HalsParams { alpha, l1_ratio: l1, tol: 0.0, max_iter: 30 };
        let fit = fit_hals(&sx, init.w, init.h, &params).unwrap();
        for w in fit.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0], "{} then {}", w[0], w[1]);
        }
        prop_assert!(fit.w.iter().chain(fit.h.iter()).all(|&v| v >= 0.0 && v.is_finite()));
    }

    #[test]
    fn tfidf_rows_are_unit_or_empty(seed in 0u64..1000) {
        let corpus = common::random_corpus(40, 30, &["A", "B"], &[2019], seed);
        let cfg = NmfConfig { max_df: 0.5, ..Default::default() };
        let m = build_tfidf(&corpus, &cfg, &Stopwords::empty(), None).unwrap();
        let dense = m.matrix.to_dense();
        for row in dense.rows() {
            let n: f64 = row.iter().map(|v| v * v).sum::<f64>();
            prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
        }
        for (j, t) in m.terms.iter().enumerate() {
            let df = corpus.comments.iter().filter(|c| !c.is_multi_org() && c.text.split(' ').any(|w| w == t)).count();
            prop_assert!(df as f64 / m.n_docs() as f64 <= 0.5);
            let n = m.n_docs() as f64;
            prop_assert!((m.idf[j] - (((1.0 + n) / (1.0 + df as f64)).ln() + 1.0)).abs() < 1e-12);
        }
    }
}

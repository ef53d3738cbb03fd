mod common;

use std::collections::BTreeMap;

use common::{assert_close, comment, random_table, rng};
use parley_core::embedding::{cosine, embed_text, EmbeddingError};
use parley_core::party_distance::{
    activity_counts, reference_average, write_pairwise, Assignments, DistanceError,
    DistanceOptions, GroupBy, PartyPosition, ReferenceKind, UncertaintyParams, ALL_ISSUES,
};
use parley_core::{
    Backend, Comment, Corpus, EmbedOptions, EmbeddingTable, PartyAnalyzer, Period, Stopwords,
};
use proptest::prelude::*;
use rand::seq::index::sample;
use rand::Rng;

const PARTIES: [&str; 4] = ["A", "B", "C", "D"];

fn static_backend<'a>(table: &'a EmbeddingTable, stop: &'a Stopwords) -> Backend<'a> {
    Backend::Static {
        table,
        stopwords: stop,
        options: EmbedOptions::default(),
    }
}

fn parties() -> Vec<String> {
    PARTIES.iter().map(|s| s.to_string()).collect()
}

/// Corpus over `t0..t{vocab}` with each party favouring its own slice of the
/// vocabulary, two years and two issues.
fn party_corpus(n: usize, vocab: usize, seed: u64) -> (Corpus, Assignments) {
    let mut r = rng(seed);
    let mut comments = Vec::new();
    let mut asg = Assignments::new();
    for i in 0..n {
        let p = i % 4;
        let len = r.random_range(5..40);
        let words: Vec<String> = (0..len)
            .map(|_| {
                let base = if r.random_bool(0.6) { p * vocab / 4 } else { 0 };
                format!("t{}", (base + r.random_range(0..vocab / 4 + 1)) % vocab)
            })
            .collect();
        let year = 2019 + (i % 3 == 0) as i32;
        let id = i as u64 + 1;
        comments.push(comment(
            id,
            PARTIES[p],
            year,
            1 + (i % 12) as u32,
            &words.join(" "),
        ));
        let mut issues = vec!["x".to_string()];
        if r.random_bool(0.5) {
            issues.push("y".to_string());
        }
        asg.insert(id, issues);
    }
    (Corpus::new(comments), asg)
}

/// Position from raw text: mean of every in-vocabulary token vector over the
/// party's matching comments.
fn raw_position(table: &EmbeddingTable, comments: &[&Comment]) -> Option<Vec<f64>> {
    let mut sum = vec![0.0; table.dim()];
    let mut n = 0usize;
    for c in comments {
        for tok in c.text.split_whitespace() {
            if let Some(v) = table.vector_f64(tok) {
                sum.iter_mut().zip(&v).for_each(|(s, x)| *s += x);
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum.into_iter().map(|s| s / n as f64).collect())
}

fn slice<'c>(
    corpus: &'c Corpus,
    asg: &Assignments,
    party: &str,
    issue: &str,
    period: Period,
) -> Vec<&'c Comment> {
    corpus
        .comments
        .iter()
        .filter(|c| {
            c.involves(party)
                && period.contains(c)
                && (issue == ALL_ISSUES
                    || asg
                        .get(&c.comment_id)
                        .is_some_and(|i| i.iter().any(|x| x == issue)))
        })
        .collect()
}

#[test]
fn single_comment_position_is_its_vector() {
    let table = random_table(30, 6, 1);
    let stop = Stopwords::english();
    let corpus = Corpus::new(vec![comment(1, "A", 2019, 1, "t1 t2 t3")]);
    let a = PartyAnalyzer::new(&corpus, static_backend(&table, &stop), None).unwrap();
    let pos = a.party_position("A", ALL_ISSUES, Period::All).unwrap();
    let doc = embed_text(&table, "t1 t2 t3", &stop, &EmbedOptions::default()).unwrap();
    assert_eq!(pos.vector, doc.vector);
    assert_eq!((pos.word_count, pos.comment_count), (3, 1));
}

#[test]
fn equal_length_comments_pool_to_midpoint() {
    let table = random_table(30, 6, 2);
    let stop = Stopwords::english();
    let corpus = Corpus::new(vec![
        comment(1, "A", 2019, 1, "t1 t2"),
        comment(2, "A", 2019, 1, "t3 t4"),
    ]);
    let a = PartyAnalyzer::new(&corpus, static_backend(&table, &stop), None).unwrap();
    let pos = a.party_position("A", ALL_ISSUES, Period::All).unwrap();
    let d1 = a.doc_vector(1).unwrap();
    let d2 = a.doc_vector(2).unwrap();
    for i in 0..6 {
        assert_close(
            pos.vector[i],
            (d1.vector[i] + d2.vector[i]) / 2.0,
            1e-12,
            "midpoint",
        );
    }
}

#[test]
fn pooled_position_equals_concatenated_text() {
    let table = random_table(100, 8, 3);
    let stop = Stopwords::english();
    let (corpus, asg) = party_corpus(60, 100, 4);
    let a = PartyAnalyzer::new(&corpus, static_backend(&table, &stop), Some(&asg)).unwrap();
    for p in PARTIES {
        let pos = a.party_position(p, "x", Period::Year(2019)).unwrap();
        let joined: Vec<&str> = slice(&corpus, &asg, p, "x", Period::Year(2019))
            .iter()
            .map(|c| c.text.as_str())
            .collect();
        let concat =
            embed_text(&table, &joined.join(" "), &stop, &EmbedOptions::default()).unwrap();
        for (x, y) in pos.vector.iter().zip(&concat.vector) {
            assert_close(*x, *y, 1e-12, "concatenation");
        }
    }
}

#[test]
fn missing_slice_is_no_position() {
    let table = random_table(30, 4, 5);
    let stop = Stopwords::english();
    let corpus = Corpus::new(vec![comment(1, "A", 2019, 1, "t1")]);
    let a = PartyAnalyzer::new(&corpus, static_backend(&table, &stop), None).unwrap();
    assert!(matches!(
        a.party_position("B", ALL_ISSUES, Period::All),
        Err(DistanceError::NoPosition { party, .. }) if party == "B"
    ));
}

fn position(party: &str, vector: Vec<f64>) -> PartyPosition {
    PartyPosition {
        party: party.into(),
        issue: "x".into(),
        period: Period::Year(2019),
        vector,
        word_count: 1,
        comment_count: 1,
    }
}

#[test]
fn reference_average_arithmetic() {
    let v = vec![0.3, -1.0, 2.0];
    let same = reference_average(&[position("A", v.clone()), position("B", v.clone())]).unwrap();
    assert_eq!(same.vector, v);

    let neg: Vec<f64> = v.iter().map(|x| -x).collect();
    let zero = reference_average(&[position("A", v.clone()), position("B", neg)]).unwrap();
    assert!(zero.vector.iter().all(|&x| x == 0.0));
    assert!(matches!(
        cosine(&v, &zero.vector),
        Err(EmbeddingError::ZeroNorm)
    ));

    let mut r = rng(6);
    let vs: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..5).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect();
    let ps: Vec<PartyPosition> = vs
        .iter()
        .zip(PARTIES)
        .map(|(v, p)| position(p, v.clone()))
        .collect();
    let avg = reference_average(&ps).unwrap();
    for j in 0..5 {
        assert_close(
            avg.vector[j],
            vs.iter().map(|v| v[j]).sum::<f64>() / 4.0,
            1e-15,
            "mean",
        );
    }
    assert!(reference_average(&ps[..1]).is_err());
    assert!(reference_average(&[position("A", vec![1.0]), position("B", vec![1.0, 2.0])]).is_err());
}

fn identical_corpus() -> Corpus {
    let text = "t1 t5 t9 t2 t2";
    let mut comments = Vec::new();
    for (i, p) in PARTIES.iter().enumerate() {
        comments.push(comment(i as u64 + 1, p, 2019, 3, text));
        comments.push(comment(i as u64 + 11, p, 2020, 3, text));
    }
    Corpus::new(comments)
}

#[test]
fn identical_parties_are_all_ones() {
    let table = random_table(20, 6, 7);
    let stop = Stopwords::english();
    let corpus = identical_corpus();
    let a = PartyAnalyzer::new(&corpus, static_backend(&table, &stop), None).unwrap();
    let periods = [Period::Year(2019), Period::Year(2020)];
    let issues = [ALL_ISSUES.to_string()];
    for kind in [ReferenceKind::Average, ReferenceKind::Baseline("B".into())] {
        let opts = DistanceOptions {
            reference: kind,
            ..Default::default()
        };
        let report = a
            .distance_lines(&parties(), &issues, &periods, &opts)
            .unwrap();
        assert_eq!(report.entries.len(), 8);
        for e in &report.entries {
            assert_close(e.similarity.unwrap(), 1.0, 1e-9, "identical line");
        }
    }
    let m = a
        .pairwise_matrix(&parties(), ALL_ISSUES, Period::Year(2019), None)
        .unwrap();
    for i in 0..4 {
        for j in 0..4 {
            assert_close(m.sims[i][j], 1.0, 1e-9, "pairwise");
            assert_eq!(m.levels[i][j], 0);
        }
    }
}

#[test]
#[allow(clippy::needless_range_loop)]
fn report_matches_recomputation_from_raw_text() {
    let table = random_table(120, 10, 8);
    let stop = Stopwords::empty();
    let (corpus, asg) = party_corpus(200, 120, 9);
    let a = PartyAnalyzer::new(&corpus, static_backend(&table, &stop), Some(&asg)).unwrap();
    let issues = ["x".to_string(), "y".to_string(), ALL_ISSUES.to_string()];
    let periods = [Period::Year(2019), Period::Year(2020), Period::All];
    let opts = DistanceOptions {
        uncertainty: None,
        ..Default::default()
    };
    let report = a
        .distance_lines(&parties(), &issues, &periods, &opts)
        .unwrap();
    assert_eq!(report.entries.len(), 4 * 3 * 3);
    for e in &report.entries {
        let positions: BTreeMap<&str, Vec<f64>> = PARTIES
            .iter()
            .filter_map(|p| {
                raw_position(&table, &slice(&corpus, &asg, p, &e.issue, e.period)).map(|v| (*p, v))
            })
            .collect();
        let mut avg = vec![0.0; table.dim()];
        for v in positions.values() {
            avg.iter_mut()
                .zip(v)
                .for_each(|(a, x)| *a += x / positions.len() as f64);
        }
        let expected = cosine(&positions[e.party.as_str()], &avg).unwrap();
        assert_close(e.similarity.unwrap(), expected, 1e-9, "line value");
        let words: usize = slice(&corpus, &asg, &e.party, &e.issue, e.period)
            .iter()
            .map(|c| c.text.split_whitespace().count())
            .sum();
        assert_eq!(e.word_count, words);
    }

    let m = a
        .pairwise_matrix(&parties(), "y", Period::Year(2020), None)
        .unwrap();
    for i in 0..4 {
        for j in 0..4 {
            let pi = raw_position(
                &table,
                &slice(&corpus, &asg, PARTIES[i], "y", Period::Year(2020)),
            )
            .unwrap();
            let pj = raw_position(
                &table,
                &slice(&corpus, &asg, PARTIES[j], "y", Period::Year(2020)),
            )
            .unwrap();
            assert_close(
                m.sims[i][j],
                cosine(&pi, &pj).unwrap(),
                1e-9,
                "pairwise cell",
            );
            assert_eq!(m.sims[i][j], m.sims[j][i]);
        }
        assert_eq!(m.sims[i][i], 1.0);
    }
}

#[test]
fn baseline_party_line_is_one() {
    let table = random_table(120, 10, 10);
    let stop = Stopwords::empty();
    let (corpus, asg) = party_corpus(80, 120, 11);
    let a = PartyAnalyzer::new(&corpus, static_backend(&table, &stop), Some(&asg)).unwrap();
    let opts = DistanceOptions {
        reference: ReferenceKind::Baseline("C".into()),
        uncertainty: None,
        ..Default::default()
    };
    let report = a
        .distance_lines(&parties(), &["x".to_string()], &[Period::Year(2019)], &opts)
        .unwrap();
    let c = report.entries.iter().find(|e| e.party == "C").unwrap();
    assert_close(c.similarity.unwrap(), 1.0, 1e-12, "self");
    let hidden = DistanceOptions {
        include_baseline: false,
        ..opts
    };
    let report = a
        .distance_lines(
            &parties(),
            &["x".to_string()],
            &[Period::Year(2019)],
            &hidden,
        )
        .unwrap();
    assert!(report.entries.iter().all(|e| e.party != "C"));
}

#[test]
fn absent_party_becomes_a_gap_and_pairwise_error() {
    let table = random_table(40, 5, 12);
    let stop = Stopwords::empty();
    let corpus = Corpus::new(vec![
        comment(1, "A", 2019, 1, "t1 t2"),
        comment(2, "B", 2019, 1, "t3 t4"),
        comment(3, "C", 2019, 1, "t5"),
    ]);
    let a = PartyAnalyzer::new(&corpus, static_backend(&table, &stop), None).unwrap();
    let opts = DistanceOptions {
        uncertainty: None,
        ..Default::default()
    };
    let report = a
        .distance_lines(
            &parties(),
            &[ALL_ISSUES.to_string()],
            &[Period::Year(2019)],
            &opts,
        )
        .unwrap();
    let d = report.entries.iter().find(|e| e.party == "D").unwrap();
    assert_eq!((d.similarity, d.word_count), (None, 0));
    assert!(report
        .entries
        .iter()
        .filter(|e| e.party != "D")
        .all(|e| e.similarity.is_some()));
    match a.pairwise_matrix(&parties(), ALL_ISSUES, Period::Year(2019), None) {
        Err(DistanceError::NoPosition { party, .. }) => assert_eq!(party, "D"),
        other => panic!("expected missing-position error, got {other:?}"),
    }
}

#[test]
fn pairwise_csv_has_bounds_row() {
    let table = random_table(20, 6, 7);
    let stop = Stopwords::english();
    let corpus = identical_corpus();
    let a = PartyAnalyzer::new(&corpus, static_backend(&table, &stop), None).unwrap();
    let m = a
        .pairwise_matrix(&parties()[..2], ALL_ISSUES, Period::All, None)
        .unwrap();
    let mut buf = Vec::new();
    write_pairwise(&mut buf, &m).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "party,A,B");
    assert_eq!(lines[1], "A,1.000000,1.000000");
    assert!(lines[3].starts_with("bounds,"));
    assert_eq!(lines.len(), 4);
}

#[test]
fn repeated_word_and_tiny_fraction_give_zero_spread() {
    let table = random_table(20, 6, 13);
    let stop = Stopwords::english();
    let corpus = Corpus::new(vec![
        comment(1, "A", 2019, 1, &["t3"; 40].join(" ")),
        comment(2, "A", 2019, 1, &["t3"; 25].join(" ")),
        comment(3, "B", 2019, 1, "t1 t2 t7 t8 t9"),
    ]);
    let a = PartyAnalyzer::new(&corpus, static_backend(&table, &stop), None).unwrap();
    let reference = a
        .party_position("B", ALL_ISSUES, Period::All)
        .unwrap()
        .vector;
    let params = UncertaintyParams {
        n_resamples: 200,
        ..Default::default()
    };
    let u = a
        .estimate_uncertainty("A", ALL_ISSUES, Period::All, &reference, &params)
        .unwrap();
    assert!(u.abs() < 1e-12, "{u}");

    let (corpus, asg) = party_corpus(100, 80, 14);
    let table = random_table(80, 6, 15);
    let a = PartyAnalyzer::new(&corpus, static_backend(&table, &stop), Some(&asg)).unwrap();
    let reference = a.party_position("B", "x", Period::All).unwrap().vector;
    let tiny = UncertaintyParams {
        fraction: 1e-6,
        n_resamples: 50,
        ..Default::default()
    };
    let u = a
        .estimate_uncertainty("A", "x", Period::All, &reference, &tiny)
        .unwrap();
    assert_eq!(u, 0.0);
}

/// Second resampler: flatten the party's in-vocabulary tokens, delete a
/// uniformly drawn 10% subset, average the rest.
fn independent_spread(
    table: &EmbeddingTable,
    comments: &[&Comment],
    reference: &[f64],
    n: usize,
    seed: u64,
) -> f64 {
    let vectors: Vec<Vec<f64>> = comments
        .iter()
        .flat_map(|c| c.text.split_whitespace())
        .filter_map(|t| table.vector_f64(t))
        .collect();
    let drop = (0.1 * vectors.len() as f64).round() as usize;
    let mut r = rng(seed);
    let sims: Vec<f64> = (0..n)
        .map(|_| {
            let gone: std::collections::HashSet<usize> =
                sample(&mut r, vectors.len(), drop).into_iter().collect();
            let mut sum = vec![0.0; table.dim()];
            for (i, v) in vectors.iter().enumerate() {
                if !gone.contains(&i) {
                    sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                }
            }
            cosine(&sum, reference).unwrap()
        })
        .collect();
    let mean = sims.iter().sum::<f64>() / n as f64;
    (sims.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
}

#[test]
fn spread_agrees_with_independent_resampler() {
    let table = random_table(60, 8, 16);
    let stop = Stopwords::empty();
    // Few long comments, so every comment is split token by token.
    let mut r = rng(17);
    let mut comments = Vec::new();
    for i in 0..6 {
        let words: Vec<String> = (0..80)
            .map(|_| format!("t{}", r.random_range(0..60)))
            .collect();
        comments.push(comment(
            i + 1,
            if i < 4 { "A" } else { "B" },
            2019,
            1,
            &words.join(" "),
        ));
    }
    let corpus = Corpus::new(comments);
    let a = PartyAnalyzer::new(&corpus, static_backend(&table, &stop), None).unwrap();
    let reference = a
        .party_position("B", ALL_ISSUES, Period::All)
        .unwrap()
        .vector;
    let params = UncertaintyParams {
        n_resamples: 1000,
        seed: 3,
        ..Default::default()
    };
    let ours = a
        .estimate_uncertainty("A", ALL_ISSUES, Period::All, &reference, &params)
        .unwrap();
    let mine = slice(&corpus, &Assignments::new(), "A", ALL_ISSUES, Period::All);
    let theirs = independent_spread(&table, &mine, &reference, 1000, 99);
    assert!(ours > 0.0);
    assert!((ours - theirs).abs() <= 0.1 * theirs, "{ours} vs {theirs}");
}

#[test]
fn activity_counts_match_tally() {
    let mut asg = Assignments::new();
    let corpus = Corpus::new(vec![comment(
        1,
        "A",
        2019,
        1,
        "one two three four five six seven eight nine ten",
    )]);
    asg.insert(1, vec!["x".into(), "y".into()]);
    let issues = ["x".to_string(), "y".to_string(), "z".to_string()];
    let c = activity_counts(&corpus, &asg, &issues, None, GroupBy::Issue);
    assert_eq!(c.words("x", ""), 10);
    assert_eq!(c.words("y", ""), 10);
    assert_eq!(c.get("z", ""), (0, 0));

    let (corpus, asg) = party_corpus(150, 40, 18);
    let by_party = activity_counts(
        &corpus,
        &asg,
        &issues,
        Some(&parties()),
        GroupBy::IssueParty,
    );
    for issue in &issues {
        for p in PARTIES {
            let mut words = 0;
            let mut n = 0;
            for cm in &corpus.comments {
                if cm.participant_org == p && asg[&cm.comment_id].contains(issue) {
                    words += cm.text.split_whitespace().count();
                    n += 1;
                }
            }
            assert_eq!(by_party.get(issue, p), (words, n));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn adding_a_comment_leaves_other_parties_bitwise(seed in 0u64..1000, who in 0usize..4) {
        let table = random_table(60, 6, seed);
        let stop = Stopwords::empty();
        let (corpus, asg) = party_corpus(40, 60, seed);
        let mut more = corpus.comments.clone();
        let id = 1000;
        more.push(comment(id, PARTIES[who], 2019, 5, "t1 t2 t3 t40"));
        let more = Corpus::new(more);
        let mut asg2 = asg.clone();
        asg2.insert(id, vec!["x".into()]);
        let a = PartyAnalyzer::new(&corpus, static_backend(&table, &stop), Some(&asg)).unwrap();
        let b = PartyAnalyzer::new(&more, static_backend(&table, &stop), Some(&asg2)).unwrap();
        for p in PARTIES.iter().filter(|p| **p != PARTIES[who]) {
            for issue in ["x", ALL_ISSUES] {
                let before = a.party_position(p, issue, Period::All).unwrap();
                let after = b.party_position(p, issue, Period::All).unwrap();
                prop_assert_eq!(before, after);
            }
        }
    }

    #[test]
    fn relabeling_permutes_pairwise(seed in 0u64..1000, perm in Just([0usize, 1, 2, 3]).prop_shuffle()) {
        let table = random_table(60, 6, seed);
        let stop = Stopwords::empty();
        let (corpus, asg) = party_corpus(60, 60, seed);
        let a = PartyAnalyzer::new(&corpus, static_backend(&table, &stop), Some(&asg)).unwrap();
        let base = a.pairwise_matrix(&parties(), "x", Period::All, None).unwrap();
        let order: Vec<String> = perm.iter().map(|&i| PARTIES[i].to_string()).collect();
        let m = a.pairwise_matrix(&order, "x", Period::All, None).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                prop_assert_eq!(m.sims[i][j], base.sims[perm[i]][perm[j]]);
                prop_assert_eq!(m.levels[i][j], base.levels[perm[i]][perm[j]]);
            }
        }
    }

    #[test]
    fn reference_lies_in_componentwise_hull(vs in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 4), 2..6)) {
        let ps: Vec<PartyPosition> = vs.iter().enumerate().map(|(i, v)| position(&format!("P{i}"), v.clone())).collect();
        let r = reference_average(&ps).unwrap();
        for j in 0..4 {
            let lo = vs.iter().map(|v| v[j]).fold(f64::INFINITY, f64::min);
            let hi = vs.iter().map(|v| v[j]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(r.vector[j] >= lo - 1e-12 && r.vector[j] <= hi + 1e-12);
        }
    }

    #[test]
    fn similarities_stay_in_range(seed in 0u64..1000) {
        let table = random_table(60, 6, seed);
        let stop = Stopwords::empty();
        let (corpus, asg) = party_corpus(50, 60, seed ^ 7);
        let a = PartyAnalyzer::new(&corpus, static_backend(&table, &stop), Some(&asg)).unwrap();
        let opts = DistanceOptions { uncertainty: Some(UncertaintyParams { n_resamples: 10, ..Default::default() }), ..Default::default() };
        let r = a.distance_lines(&parties(), &["x".to_string(), "y".to_string()], &[Period::Year(2019), Period::Year(2020)], &opts).unwrap();
        for e in &r.entries {
            if let Some(s) = e.similarity {
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&s));
                prop_assert!(e.uncertainty.is_none_or(|u| u >= 0.0));
                prop_assert!(e.word_count >= 1);
            }
        }
    }
}

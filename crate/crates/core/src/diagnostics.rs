//! Structure of the embedding space: where word vectors put their largest
//! component, and how running means of long token streams settle.

use std::io::Write;

use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::embedding::{cosine, EmbeddingTable};
use crate::fmt_value;
use crate::text::tokenize;

/// Opening of "The Absence of Mr Glass" (G. K. Chesterton, 1914).
pub const FATHER_BROWN: &str = include_str!("../data/excerpts/father_brown.txt");
/// Opening of "Song of Myself" (Walt Whitman, 1855).
pub const LEAVES_OF_GRASS: &str = include_str!("../data/excerpts/leaves_of_grass.txt");

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("embedding table is empty")]
    EmptyTable,
    #[error("no token of the stream is in the vocabulary")]
    NoRepresentableTokens,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DiagnosticsError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnisotropyProfile {
    /// Per dimension, how many vectors have their largest-magnitude
    /// component there.
    pub argmax_counts: Vec<usize>,
    pub dim: usize,
    pub vocab_size: usize,
}

/// Histogram of largest-magnitude dimensions. Ties go to the lower dimension.
pub fn anisotropy_profile(table: &EmbeddingTable) -> Result<AnisotropyProfile> {
    if table.is_empty() {
        return Err(DiagnosticsError::EmptyTable);
    }
    let dim = table.dim();
    let mut counts = vec![0usize; dim];
    for i in 0..table.len() {
        let row = table.row(i);
        let mut best = 0;
        for (d, v) in row.iter().enumerate() {
            if v.abs() > row[best].abs() {
                best = d;
            }
        }
        counts[best] += 1;
    }
    Ok(AnisotropyProfile {
        argmax_counts: counts,
        dim,
        vocab_size: table.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    /// 99th percentile of the statistic for an isotropic table.
    pub critical_99: f64,
}

impl ChiSquareTest {
    pub fn rejects_uniform(&self) -> bool {
        self.statistic > self.critical_99
    }
}

/// Pearson goodness-of-fit of the histogram against the uniform spread an
/// isotropic Gaussian table would give.
pub fn chi_square_uniformity(profile: &AnisotropyProfile) -> ChiSquareTest {
    let expected = profile.vocab_size as f64 / profile.dim as f64;
    let statistic = profile
        .argmax_counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let df = profile.dim.saturating_sub(1).max(1);
    let critical_99 = ChiSquared::new(df as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.99);
    ChiSquareTest {
        statistic,
        degrees_of_freedom: df,
        critical_99,
    }
}

/// `1, 2, 5, 10, 20, 50, ...` up to and including `max`.
pub fn default_sample_points(max: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut base = 1usize;
    'outer: loop {
        for m in [1, 2, 5] {
            let n = base * m;
            if n > max {
                break 'outer;
            }
            out.push(n);
        }
        base *= 10;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub n: usize,
    pub max_raw: f64,
    pub min_raw: f64,
    pub max_mean: f64,
    pub min_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrefixTrace {
    pub points: Vec<TracePoint>,
    /// Prefix means at the sample points, when retained.
    pub means: Option<Vec<Vec<f64>>>,
    pub representable: usize,
    pub skipped: usize,
}

fn extremes(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::NEG_INFINITY, f64::INFINITY), |(hi, lo), &x| {
            (hi.max(x), lo.min(x))
        })
}

fn representable(table: &EmbeddingTable, tokens: &[String]) -> (Vec<usize>, usize) {
    let idx: Vec<usize> = tokens.iter().filter_map(|t| table.index_of(t)).collect();
    let skipped = tokens.len() - idx.len();
    (idx, skipped)
}

/// Running means of the in-vocabulary tokens, one entry per token.
struct PrefixMeans<'a> {
    table: &'a EmbeddingTable,
    idx: std::slice::Iter<'a, usize>,
    mean: Vec<f64>,
    n: usize,
}

impl<'a> PrefixMeans<'a> {
    fn new(table: &'a EmbeddingTable, idx: &'a [usize]) -> Self {
        PrefixMeans {
            table,
            idx: idx.iter(),
            mean: vec![0.0; table.dim()],
            n: 0,
        }
    }

    /// Advances one token; returns its raw row.
    fn step(&mut self) -> Option<&'a [f32]> {
        let &i = self.idx.next()?;
        let row = self.table.row(i);
        self.n += 1;
        let k = self.n as f64;
        for (m, &x) in self.mean.iter_mut().zip(row) {
            *m += (x as f64 - *m) / k;
        }
        Some(row)
    }
}

/// Extremes of each sampled token vector and of the mean of the first `n`
/// vectors. Out-of-vocabulary tokens are skipped and `n` counts the rest;
/// sample points past the end of the stream are dropped.
pub fn prefix_trace(
    table: &EmbeddingTable,
    tokens: &[String],
    sample_points: &[usize],
    keep_means: bool,
) -> Result<PrefixTrace> {
    let (idx, skipped) = representable(table, tokens);
    if idx.is_empty() {
        return Err(DiagnosticsError::NoRepresentableTokens);
    }
    if skipped > 0 {
        log::info!("{skipped} out-of-vocabulary tokens skipped");
    }
    let mut wanted: Vec<usize> = sample_points
        .iter()
        .copied()
        .filter(|&n| n >= 1 && n <= idx.len())
        .collect();
    wanted.sort_unstable();
    wanted.dedup();

    let mut pm = PrefixMeans::new(table, &idx);
    let mut points = Vec::with_capacity(wanted.len());
    let mut means = keep_means.then(Vec::new);
    for &n in &wanted {
        let mut row = None;
        while pm.n < n {
            row = pm.step();
        }
        let raw: Vec<f64> = row
            .expect("advanced at least once")
            .iter()
            .map(|&x| x as f64)
            .collect();
        let (max_raw, min_raw) = extremes(&raw);
        let (max_mean, min_mean) = extremes(&pm.mean);
        points.push(TracePoint {
            n,
            max_raw,
            min_raw,
            max_mean,
            min_mean,
        });
        if let Some(m) = means.as_mut() {
            m.push(pm.mean.clone());
        }
    }
    Ok(PrefixTrace {
        points,
        means,
        representable: idx.len(),
        skipped,
    })
}

/// Cosine between the prefix means of two streams at each sample point up
/// to the shorter stream's length. Zero-norm means give `None`.
pub fn cross_corpus_convergence(
    table: &EmbeddingTable,
    stream_a: &[String],
    stream_b: &[String],
    sample_points: &[usize],
) -> Result<Vec<(usize, Option<f64>)>> {
    let (ia, _) = representable(table, stream_a);
    let (ib, _) = representable(table, stream_b);
    if ia.is_empty() || ib.is_empty() {
        return Err(DiagnosticsError::NoRepresentableTokens);
    }
    let limit = ia.len().min(ib.len());
    let mut wanted: Vec<usize> = sample_points
        .iter()
        .copied()
        .filter(|&n| n >= 1 && n <= limit)
        .collect();
    wanted.sort_unstable();
    wanted.dedup();
    let mut a = PrefixMeans::new(table, &ia);
    let mut b = PrefixMeans::new(table, &ib);
    let mut out = Vec::with_capacity(wanted.len());
    for n in wanted {
        while a.n < n {
            a.step();
            b.step();
        }
        out.push((n, cosine(&a.mean, &b.mean).ok()));
    }
    Ok(out)
}

/// Word tokens of a text in reading order, without stopword removal.
pub fn text_stream(text: &str) -> Vec<String> {
    tokenize(text)
}

/// `dim,count`
pub fn write_histogram<W: Write>(writer: W, profile: &AnisotropyProfile) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["dim", "count"])?;
    for (d, c) in profile.argmax_counts.iter().enumerate() {
        wtr.write_record([d.to_string(), c.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// `n,max_raw,min_raw,max_mean,min_mean`
pub fn write_trace<W: Write>(writer: W, trace: &PrefixTrace) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["n", "max_raw", "min_raw", "max_mean", "min_mean"])?;
    for p in &trace.points {
        wtr.write_record([
            p.n.to_string(),
            fmt_value(p.max_raw),
            fmt_value(p.min_raw),
            fmt_value(p.max_mean),
            fmt_value(p.min_mean),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// `n,cosine`; missing values are empty.
pub fn write_convergence<W: Write>(writer: W, values: &[(usize, Option<f64>)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["n", "cosine"])?;
    for (n, c) in values {
        wtr.write_record([n.to_string(), c.map(fmt_value).unwrap_or_default()])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot() -> EmbeddingTable {
        EmbeddingTable::parse("a 1 0 0\nb 2 0 0\nc -3 1 0\n".as_bytes(), "t").unwrap()
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn one_hot_counts_in_first_bin() {
        let p = anisotropy_profile(&one_hot()).unwrap();
        assert_eq!(p.argmax_counts, vec![3, 0, 0]);
        assert_eq!(p.argmax_counts.iter().sum::<usize>(), p.vocab_size);
        assert!(chi_square_uniformity(&p).statistic > 0.0);
    }

    #[test]
    fn sample_grid() {
        assert_eq!(
            default_sample_points(5000),
            vec![1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000]
        );
        assert_eq!(default_sample_points(7), vec![1, 2, 5]);
    }

    #[test]
    fn repeated_word_is_flat() {
        let t = EmbeddingTable::parse("w 0.5 -0.25 0.125\n".as_bytes(), "t").unwrap();
        let stream = vec!["w".to_string(); 50];
        let tr = prefix_trace(&t, &stream, &default_sample_points(50), false).unwrap();
        for p in &tr.points {
            assert_eq!((p.max_mean, p.min_mean), (0.5, -0.25));
        }
    }

    #[test]
    fn first_point_is_first_word() {
        let t = one_hot();
        let tr = prefix_trace(&t, &toks("zzz c a"), &[1, 2, 9], false).unwrap();
        assert_eq!(tr.points.len(), 2);
        assert_eq!(tr.points[0].max_raw, 1.0);
        assert_eq!(tr.points[0].min_raw, -3.0);
        assert_eq!(tr.points[0].max_mean, 1.0);
        assert_eq!(tr.skipped, 1);
        assert!(matches!(
            prefix_trace(&t, &toks("zzz"), &[1], false),
            Err(DiagnosticsError::NoRepresentableTokens)
        ));
    }

    #[test]
    fn identical_streams_converge_at_once() {
        let t = one_hot();
        let s = toks("a c b c a");
        for (_, c) in cross_corpus_convergence(&t, &s, &s, &[1, 2, 3, 4, 5]).unwrap() {
            assert!((c.unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn excerpts_are_bundled() {
        assert!(text_stream(FATHER_BROWN).len() > 500);
        assert!(text_stream(LEAVES_OF_GRASS).len() > 500);
    }
}

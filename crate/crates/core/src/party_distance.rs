//! Party positions in embedding space and their distances.
//!
//! A party's position for an issue and period is the token-weighted mean of
//! the document vectors of every comment it contributed to that slice, which
//! for static vectors is the mean over its concatenated text.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Comment, Corpus};
use crate::embedding::{
    cosine, embed_tokens, embedding_tokens, Backend, DocVector, EmbeddingError,
};
use crate::fmt_value;

/// Comment id -> issue names (predefined or latent).
pub type Assignments = BTreeMap<u64, Vec<String>>;

/// Issue name that selects every comment regardless of assignment.
pub const ALL_ISSUES: &str = "all";

#[derive(Debug, Error)]
pub enum DistanceError {
    #[error("no position computable for {party} on {issue} in {period}")]
    NoPosition {
        party: String,
        issue: String,
        period: String,
    },
    #[error("{found} party positions on {issue} in {period}; at least 2 needed for an average")]
    TooFewPositions {
        issue: String,
        period: String,
        found: usize,
    },
    #[error(
        "insufficient data: {failed} of {total} resamples for {party} left no usable position"
    )]
    InsufficientData {
        party: String,
        failed: usize,
        total: usize,
    },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DistanceError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bucketing {
    All,
    #[default]
    Year,
    YearMonth,
}

impl FromStr for Bucketing {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "all" => Ok(Bucketing::All),
            "year" => Ok(Bucketing::Year),
            "year-month" => Ok(Bucketing::YearMonth),
            _ => Err(format!(
                "unknown period bucketing '{s}' (all, year, year-month)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Period {
    All,
    Year(i32),
    Month(i32, u32),
}

impl Period {
    pub fn of(comment: &Comment, bucketing: Bucketing) -> Period {
        match bucketing {
            Bucketing::All => Period::All,
            Bucketing::Year => Period::Year(comment.year),
            Bucketing::YearMonth => Period::Month(comment.year, comment.month),
        }
    }

    pub fn contains(&self, comment: &Comment) -> bool {
        match *self {
            Period::All => true,
            Period::Year(y) => comment.year == y,
            Period::Month(y, m) => comment.year == y && comment.month == m,
        }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Period::All => write!(f, "all"),
            Period::Year(y) => write!(f, "{y}"),
            Period::Month(y, m) => write!(f, "{y}-{m:02}"),
        }
    }
}

impl FromStr for Period {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "all" {
            return Ok(Period::All);
        }
        let bad = || format!("bad period '{s}' (all, YYYY or YYYY-MM)");
        match s.split_once('-') {
            None => s.parse().map(Period::Year).map_err(|_| bad()),
            Some((y, m)) => {
                let y = y.parse().map_err(|_| bad())?;
                let m: u32 = m.parse().map_err(|_| bad())?;
                if !(1..=12).contains(&m) {
                    return Err(bad());
                }
                Ok(Period::Month(y, m))
            }
        }
    }
}

/// Distinct periods present in the corpus, sorted.
pub fn periods(corpus: &Corpus, bucketing: Bucketing) -> Vec<Period> {
    let set: BTreeSet<Period> = corpus
        .comments
        .iter()
        .map(|c| Period::of(c, bucketing))
        .collect();
    set.into_iter().collect()
}

/// How comment vectors are pooled into a party position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    #[default]
    Tokens,
    Comments,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartyPosition {
    pub party: String,
    pub issue: String,
    pub period: Period,
    pub vector: Vec<f64>,
    pub word_count: usize,
    pub comment_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "party")]
#[derive(Default)]
pub enum ReferenceKind {
    #[default]
    Average,
    Baseline(String),
}

impl fmt::Display for ReferenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReferenceKind::Average => write!(f, "average"),
            ReferenceKind::Baseline(p) => write!(f, "baseline:{p}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePosition {
    pub kind: ReferenceKind,
    pub parties_included: Vec<String>,
    pub vector: Vec<f64>,
}

/// Unweighted mean of the party vectors: every party counts once.
pub fn reference_average(positions: &[PartyPosition]) -> Result<ReferencePosition> {
    let first = match positions {
        [a, _, ..] => a,
        _ => {
            let (issue, period) = positions
                .first()
                .map(|p| (p.issue.clone(), p.period.to_string()))
                .unwrap_or_default();
            return Err(DistanceError::TooFewPositions {
                issue,
                period,
                found: positions.len(),
            });
        }
    };
    let dim = first.vector.len();
    let mut sum = vec![0.0; dim];
    for p in positions {
        if p.vector.len() != dim {
            return Err(EmbeddingError::DimMismatch {
                left: dim,
                right: p.vector.len(),
            }
            .into());
        }
        if p.issue != first.issue || p.period != first.period {
            return Err(DistanceError::InvalidParams(format!(
                "positions mix slices ({}, {}) and ({}, {})",
                first.issue, first.period, p.issue, p.period
            )));
        }
        sum.iter_mut().zip(&p.vector).for_each(|(s, v)| *s += v);
    }
    let n = positions.len() as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    Ok(ReferencePosition {
        kind: ReferenceKind::Average,
        parties_included: positions.iter().map(|p| p.party.clone()).collect(),
        vector: sum,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UncertaintyParams {
    /// Share of the party's tokens removed in each resample.
    pub fraction: f64,
    pub n_resamples: usize,
    pub seed: u64,
    /// Comments holding less than this share of the party's tokens are
    /// removed whole rather than token by token.
    pub min_unit_share: f64,
}

impl Default for UncertaintyParams {
    fn default() -> Self {
        UncertaintyParams {
            fraction: 0.1,
            n_resamples: 100,
            seed: 0,
            min_unit_share: 0.01,
        }
    }
}

impl UncertaintyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(DistanceError::InvalidParams(
                "fraction must lie in (0, 1)".into(),
            ));
        }
        if self.n_resamples < 2 {
            return Err(DistanceError::InvalidParams(
                "n_resamples must be at least 2".into(),
            ));
        }
        Ok(())
    }
}

/// Stable per-job seed so that jobs can run in any order.
pub fn job_seed(seed: u64, party: &str, issue: &str, period: Period) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for part in [party, issue, &period.to_string()] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// One line point: `None` fields are gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceEntry {
    pub party: String,
    pub issue: String,
    pub period: Period,
    pub similarity: Option<f64>,
    pub uncertainty: Option<f64>,
    pub word_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceReport {
    pub entries: Vec<DistanceEntry>,
    /// Reference per (issue, period); `None` when it could not be formed.
    pub references: BTreeMap<(String, Period), Option<ReferencePosition>>,
    pub reference_kind: ReferenceKind,
    pub backend: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistanceOptions {
    pub reference: ReferenceKind,
    /// Show the baseline party's own (constant 1.0) line.
    pub include_baseline: bool,
    /// Perturbation settings; `None` skips the uncertainty estimate.
    pub uncertainty: Option<UncertaintyParams>,
}

impl Default for DistanceOptions {
    fn default() -> Self {
        DistanceOptions {
            reference: ReferenceKind::Average,
            include_baseline: true,
            uncertainty: Some(UncertaintyParams::default()),
        }
    }
}

/// Heatmap class edges, descending: level 0 holds similarities at or above
/// `edges[0]`, level 3 those below `edges[2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BucketBounds {
    pub edges: [f64; 3],
}

impl BucketBounds {
    pub fn new(edges: [f64; 3]) -> Result<Self> {
        if !(edges[0] >= edges[1] && edges[1] >= edges[2]) || edges.iter().any(|e| !e.is_finite()) {
            return Err(DistanceError::InvalidParams(
                "bucket edges must be finite and descending".into(),
            ));
        }
        Ok(BucketBounds { edges })
    }

    /// Four equal-width classes over `[lo, hi]`.
    pub fn equal_width(lo: f64, hi: f64) -> Self {
        let w = (hi - lo) / 4.0;
        BucketBounds {
            edges: [hi - w, hi - 2.0 * w, hi - 3.0 * w],
        }
    }

    pub fn level(&self, sim: f64) -> u8 {
        self.edges.iter().take_while(|&&e| sim < e).count() as u8
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseMatrix {
    pub parties: Vec<String>,
    pub issue: String,
    pub period: Period,
    pub sims: Vec<Vec<f64>>,
    pub levels: Vec<Vec<u8>>,
    pub bounds: BucketBounds,
}

/// Per-comment vectors for a corpus under one backend, plus the slicing
/// needed to pool them by party, issue and period.
pub struct PartyAnalyzer<'a> {
    corpus: &'a Corpus,
    backend: Backend<'a>,
    assignments: Option<&'a Assignments>,
    weighting: Weighting,
    docs: BTreeMap<u64, DocVector>,
}

impl<'a> PartyAnalyzer<'a> {
    /// Embeds every comment once. Comments with no representable token are
    /// left out of every position.
    pub fn new(
        corpus: &'a Corpus,
        backend: Backend<'a>,
        assignments: Option<&'a Assignments>,
    ) -> Result<Self> {
        let mut docs = BTreeMap::new();
        let mut skipped = 0usize;
        for c in &corpus.comments {
            match backend.doc_vector(c) {
                Ok(d) => {
                    docs.insert(c.comment_id, d);
                }
                Err(EmbeddingError::Unrepresentable | EmbeddingError::MissingCommentVector(_)) => {
                    skipped += 1
                }
                Err(e) => return Err(e.into()),
            }
        }
        if skipped > 0 {
            log::info!("{skipped} comments have no vector and are left out of positions");
        }
        Ok(PartyAnalyzer {
            corpus,
            backend,
            assignments,
            weighting: Weighting::Tokens,
            docs,
        })
    }

    pub fn with_weighting(mut self, weighting: Weighting) -> Self {
        self.weighting = weighting;
        self
    }

    pub fn backend_tag(&self) -> String {
        self.backend.tag()
    }

    pub fn doc_vector(&self, comment_id: u64) -> Option<&DocVector> {
        self.docs.get(&comment_id)
    }

    fn in_issue(&self, c: &Comment, issue: &str) -> bool {
        if issue == ALL_ISSUES {
            return true;
        }
        self.assignments
            .and_then(|a| a.get(&c.comment_id))
            .is_some_and(|names| names.iter().any(|n| n == issue))
    }

    /// The party's comments in the slice that have a vector.
    pub fn matching_comments(&self, party: &str, issue: &str, period: Period) -> Vec<&'a Comment> {
        self.corpus
            .comments
            .iter()
            .filter(|c| {
                c.involves(party)
                    && period.contains(c)
                    && self.in_issue(c, issue)
                    && self.docs.contains_key(&c.comment_id)
            })
            .collect()
    }

    fn pool<'d>(&self, docs: impl IntoIterator<Item = &'d DocVector>) -> Option<Vec<f64>> {
        let mut sum: Option<Vec<f64>> = None;
        let mut total = 0.0;
        for d in docs {
            let w = match self.weighting {
                Weighting::Tokens => d.token_count as f64,
                Weighting::Comments => 1.0,
            };
            if w <= 0.0 {
                continue;
            }
            let s = sum.get_or_insert_with(|| vec![0.0; d.vector.len()]);
            s.iter_mut().zip(&d.vector).for_each(|(s, v)| *s += w * v);
            total += w;
        }
        let mut s = sum?;
        s.iter_mut().for_each(|x| *x /= total);
        Some(s)
    }

    pub fn party_position(
        &self,
        party: &str,
        issue: &str,
        period: Period,
    ) -> Result<PartyPosition> {
        let comments = self.matching_comments(party, issue, period);
        let no_position = || DistanceError::NoPosition {
            party: party.to_string(),
            issue: issue.to_string(),
            period: period.to_string(),
        };
        let vector = self
            .pool(comments.iter().map(|c| &self.docs[&c.comment_id]))
            .ok_or_else(no_position)?;
        Ok(PartyPosition {
            party: party.to_string(),
            issue: issue.to_string(),
            period,
            vector,
            word_count: comments.iter().map(|c| c.word_count()).sum(),
            comment_count: comments.len(),
        })
    }

    /// Reference for one slice; `parties` are those with positions.
    pub fn reference(
        &self,
        kind: &ReferenceKind,
        positions: &[PartyPosition],
        issue: &str,
        period: Period,
    ) -> Result<ReferencePosition> {
        match kind {
            ReferenceKind::Average => reference_average(positions),
            ReferenceKind::Baseline(party) => {
                let vector = match positions.iter().find(|p| &p.party == party) {
                    Some(p) => p.vector.clone(),
                    None => self.party_position(party, issue, period)?.vector,
                };
                Ok(ReferencePosition {
                    kind: kind.clone(),
                    parties_included: vec![party.clone()],
                    vector,
                })
            }
        }
    }

    /// Similarity of every party to the reference for every (issue, period).
    /// Missing positions and references become gaps.
    pub fn distance_lines(
        &self,
        parties: &[String],
        issues: &[String],
        periods: &[Period],
        options: &DistanceOptions,
    ) -> Result<DistanceReport> {
        if let Some(u) = &options.uncertainty {
            u.validate()?;
        }
        let mut entries = Vec::new();
        let mut references = BTreeMap::new();
        for issue in issues {
            for &period in periods {
                let mut positions = Vec::new();
                for party in parties {
                    match self.party_position(party, issue, period) {
                        Ok(p) => positions.push(p),
                        Err(DistanceError::NoPosition { .. }) => {}
                        Err(e) => return Err(e),
                    }
                }
                let reference = match self.reference(&options.reference, &positions, issue, period)
                {
                    Ok(r) => Some(r),
                    Err(
                        DistanceError::NoPosition { .. } | DistanceError::TooFewPositions { .. },
                    ) => None,
                    Err(e) => return Err(e),
                };
                for party in parties {
                    if !options.include_baseline
                        && options.reference == ReferenceKind::Baseline(party.clone())
                    {
                        continue;
                    }
                    let pos = positions.iter().find(|p| &p.party == party);
                    let mut entry = DistanceEntry {
                        party: party.clone(),
                        issue: issue.clone(),
                        period,
                        similarity: None,
                        uncertainty: None,
                        word_count: pos.map_or(0, |p| p.word_count),
                    };
                    if let (Some(pos), Some(r)) = (pos, &reference) {
                        match cosine(&pos.vector, &r.vector) {
                            Ok(s) => entry.similarity = Some(s),
                            Err(e) => log::warn!("{party} / {issue} / {period}: {e}"),
                        }
                        if let (Some(params), Some(_)) = (&options.uncertainty, entry.similarity) {
                            match self.estimate_uncertainty(party, issue, period, &r.vector, params)
                            {
                                Ok(u) => entry.uncertainty = Some(u),
                                Err(DistanceError::InsufficientData { .. }) => {
                                    log::warn!("{party} / {issue} / {period}: too little text for an uncertainty estimate")
                                }
                                Err(e) => return Err(e),
                            }
                        }
                    }
                    entries.push(entry);
                }
                references.insert((issue.clone(), period), reference);
            }
        }
        Ok(DistanceReport {
            entries,
            references,
            reference_kind: options.reference.clone(),
            backend: self.backend_tag(),
        })
    }

    /// Cosine similarity between every pair of party positions.
    /// With `bounds` unset, classes are equal-width bins over the observed
    /// off-diagonal range.
    pub fn pairwise_matrix(
        &self,
        parties: &[String],
        issue: &str,
        period: Period,
        bounds: Option<BucketBounds>,
    ) -> Result<PairwiseMatrix> {
        let positions = parties
            .iter()
            .map(|p| self.party_position(p, issue, period))
            .collect::<Result<Vec<_>>>()?;
        let n = positions.len();
        let mut sims = vec![vec![1.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let s = cosine(&positions[i].vector, &positions[j].vector)?;
                sims[i][j] = s;
                sims[j][i] = s;
            }
        }
        let bounds = bounds.unwrap_or_else(|| {
            let off = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)));
            let (lo, hi) = off.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (i, j)| {
                (lo.min(sims[i][j]), hi.max(sims[i][j]))
            });
            if lo.is_finite() {
                BucketBounds::equal_width(lo, hi)
            } else {
                BucketBounds::equal_width(1.0, 1.0)
            }
        });
        let levels = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { 0 } else { bounds.level(sims[i][j]) })
                    .collect()
            })
            .collect();
        Ok(PairwiseMatrix {
            parties: parties.to_vec(),
            issue: issue.to_string(),
            period,
            sims,
            levels,
            bounds,
        })
    }

    /// Spread of the party's similarity to `reference` when a random
    /// `fraction` of its text is removed.
    ///
    /// Removal units are single tokens of comments holding at least
    /// `min_unit_share` of the party's tokens and whole comments otherwise
    /// (always whole comments for contextual vectors). Units are visited in
    /// a seeded random order and taken while the removed total stays within
    /// `round(fraction * tokens)`. Returns the sample standard deviation of
    /// the perturbed similarities.
    pub fn estimate_uncertainty(
        &self,
        party: &str,
        issue: &str,
        period: Period,
        reference: &[f64],
        params: &UncertaintyParams,
    ) -> Result<f64> {
        params.validate()?;
        let comments = self.matching_comments(party, issue, period);
        if comments.is_empty() {
            return Err(DistanceError::NoPosition {
                party: party.to_string(),
                issue: issue.to_string(),
                period: period.to_string(),
            });
        }
        let docs: Vec<&DocVector> = comments.iter().map(|c| &self.docs[&c.comment_id]).collect();
        let total: usize = docs.iter().map(|d| d.token_count).sum();
        let target = (params.fraction * total as f64).round() as usize;

        // Token streams for the comments that are split token by token.
        let static_parts = match self.backend {
            Backend::Static {
                table,
                stopwords,
                options,
            } => Some((table, stopwords, options)),
            Backend::Contextual { .. } => None,
        };
        let mut units: Vec<Unit> = Vec::new();
        let mut streams: Vec<Option<(Vec<String>, Vec<usize>)>> = vec![None; comments.len()];
        for (ci, (c, d)) in comments.iter().zip(&docs).enumerate() {
            let split = static_parts.is_some()
                && (d.token_count as f64) >= params.min_unit_share * total as f64;
            if let (true, Some((table, stopwords, options))) = (split, static_parts) {
                let tokens = embedding_tokens(&c.text, stopwords, &options);
                let in_vocab: Vec<usize> = (0..tokens.len())
                    .filter(|&i| table.contains(&tokens[i]))
                    .collect();
                units.extend((0..in_vocab.len()).map(|k| Unit::Token(ci, k)));
                streams[ci] = Some((tokens, in_vocab));
            } else {
                units.push(Unit::Comment(ci, d.token_count));
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(job_seed(params.seed, party, issue, period));
        let mut sims = Vec::with_capacity(params.n_resamples);
        let mut failed = 0usize;
        for _ in 0..params.n_resamples {
            units.shuffle(&mut rng);
            let mut removed = 0usize;
            let mut dropped_comments = HashSet::new();
            let mut dropped_tokens: BTreeMap<usize, HashSet<usize>> = BTreeMap::new();
            for u in &units {
                if removed >= target {
                    break;
                }
                let w = u.weight();
                if removed + w > target {
                    continue;
                }
                removed += w;
                match *u {
                    Unit::Comment(ci, _) => {
                        dropped_comments.insert(ci);
                    }
                    Unit::Token(ci, k) => {
                        dropped_tokens.entry(ci).or_default().insert(k);
                    }
                }
            }
            let mut perturbed: Vec<DocVector> = Vec::new();
            let mut kept: Vec<&DocVector> = Vec::new();
            for ci in 0..comments.len() {
                if dropped_comments.contains(&ci) {
                    continue;
                }
                match (dropped_tokens.get(&ci), &streams[ci], static_parts) {
                    (Some(drop), Some((tokens, in_vocab)), Some((table, _, options))) => {
                        let skip: HashSet<usize> = drop.iter().map(|&k| in_vocab[k]).collect();
                        let rest: Vec<String> = tokens
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| !skip.contains(i))
                            .map(|(_, t)| t.clone())
                            .collect();
                        match embed_tokens(table, &rest, options.chunk_limit) {
                            Ok(d) => perturbed.push(d),
                            Err(EmbeddingError::Unrepresentable) => {}
                            Err(e) => return Err(e.into()),
                        }
                    }
                    _ => kept.push(docs[ci]),
                }
            }
            let sim = self
                .pool(kept.into_iter().chain(perturbed.iter()))
                .and_then(|v| cosine(&v, reference).ok());
            match sim {
                Some(s) => sims.push(s),
                None => failed += 1,
            }
        }
        if failed * 2 > params.n_resamples || sims.len() < 2 {
            return Err(DistanceError::InsufficientData {
                party: party.to_string(),
                failed,
                total: params.n_resamples,
            });
        }
        Ok(sample_std(&sims))
    }
}

#[derive(Debug, Clone, Copy)]
enum Unit {
    Comment(usize, usize),
    Token(usize, usize),
}

impl Unit {
    fn weight(&self) -> usize {
        match *self {
            Unit::Comment(_, w) => w,
            Unit::Token(..) => 1,
        }
    }
}

/// Sample standard deviation, computed on values shifted by the first one so
/// that identical inputs give exactly zero.
pub fn sample_std(values: &[f64]) -> f64 {
    let Some(&first) = values.first() else {
        return 0.0;
    };
    let n = values.len() as f64;
    let (sum, sum_sq) = values.iter().fold((0.0, 0.0), |(s, q), v| {
        let d = v - first;
        (s + d, q + d * d)
    });
    ((sum_sq - sum * sum / n).max(0.0) / (n - 1.0)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupBy {
    Issue,
    IssueParty,
    IssuePeriod(Bucketing),
}

/// Words and comments per group. Multi-label comments count in full toward
/// every issue they carry; shared statements count toward every party.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityCounts {
    pub group_by: GroupBy,
    pub issues: Vec<String>,
    /// Second key (party or period); a single empty key for `Issue`.
    pub groups: Vec<String>,
    counts: BTreeMap<(String, String), (usize, usize)>,
}

impl ActivityCounts {
    /// `(words, comments)`; zero for groups with no comments.
    pub fn get(&self, issue: &str, group: &str) -> (usize, usize) {
        self.counts
            .get(&(issue.to_string(), group.to_string()))
            .copied()
            .unwrap_or((0, 0))
    }

    pub fn words(&self, issue: &str, group: &str) -> usize {
        self.get(issue, group).0
    }

    /// Every issue x group cell, including empty ones.
    pub fn rows(&self) -> impl Iterator<Item = (&str, &str, usize, usize)> + '_ {
        self.issues.iter().flat_map(move |i| {
            self.groups.iter().map(move |g| {
                let (w, c) = self.get(i, g);
                (i.as_str(), g.as_str(), w, c)
            })
        })
    }
}

/// Tallies assigned words. `issues` fixes the issue axis so that issues
/// without comments still appear; `parties`, when given, fixes the party axis.
pub fn activity_counts(
    corpus: &Corpus,
    assignments: &Assignments,
    issues: &[String],
    parties: Option<&[String]>,
    group_by: GroupBy,
) -> ActivityCounts {
    let mut counts: BTreeMap<(String, String), (usize, usize)> = BTreeMap::new();
    let mut seen_groups = BTreeSet::new();
    let wanted: HashSet<&str> = issues.iter().map(String::as_str).collect();
    for c in &corpus.comments {
        let Some(names) = assignments.get(&c.comment_id) else {
            continue;
        };
        let words = c.word_count();
        let keys: Vec<String> = match group_by {
            GroupBy::Issue => vec![String::new()],
            GroupBy::IssueParty => {
                if c.multi_org.is_empty() {
                    vec![c.participant_org.clone()]
                } else {
                    c.multi_org.clone()
                }
            }
            GroupBy::IssuePeriod(b) => vec![Period::of(c, b).to_string()],
        };
        let issue_set: BTreeSet<&String> = names.iter().collect();
        for issue in issue_set {
            if !wanted.contains(issue.as_str()) {
                continue;
            }
            for k in &keys {
                if let Some(ps) = parties {
                    if !ps.contains(k) {
                        continue;
                    }
                }
                seen_groups.insert(k.clone());
                let e = counts.entry((issue.clone(), k.clone())).or_default();
                e.0 += words;
                e.1 += 1;
            }
        }
    }
    let groups = match (group_by, parties) {
        (GroupBy::Issue, _) => vec![String::new()],
        (GroupBy::IssueParty, Some(ps)) => ps.to_vec(),
        _ => seen_groups.into_iter().collect(),
    };
    ActivityCounts {
        group_by,
        issues: issues.to_vec(),
        groups,
        counts,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_value).unwrap_or_default()
}

/// `party,issue,period,similarity,uncertainty,word_count,backend`; gaps are
/// empty fields.
pub fn write_distance_report<W: Write>(writer: W, report: &DistanceReport) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "party",
        "issue",
        "period",
        "similarity",
        "uncertainty",
        "word_count",
        "backend",
    ])?;
    for e in &report.entries {
        wtr.write_record([
            e.party.clone(),
            e.issue.clone(),
            e.period.to_string(),
            opt(e.similarity),
            opt(e.uncertainty),
            e.word_count.to_string(),
            report.backend.clone(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Square similarity table headed by party names, then a `bounds` row with
/// the three class edges.
pub fn write_pairwise<W: Write>(writer: W, m: &PairwiseMatrix) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().flexible(true).from_writer(writer);
    let mut header = vec!["party".to_string()];
    header.extend(m.parties.iter().cloned());
    wtr.write_record(&header)?;
    for (p, row) in m.parties.iter().zip(&m.sims) {
        let mut rec = vec![p.clone()];
        rec.extend(row.iter().map(|&s| fmt_value(s)));
        wtr.write_record(&rec)?;
    }
    let mut bounds = vec!["bounds".to_string()];
    bounds.extend(m.bounds.edges.iter().map(|&e| fmt_value(e)));
    wtr.write_record(&bounds)?;
    wtr.flush()?;
    Ok(())
}

/// `issue,group,word_count,comment_count`
pub fn write_activity<W: Write>(writer: W, counts: &ActivityCounts) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["issue", "group", "word_count", "comment_count"])?;
    for (i, g, w, c) in counts.rows() {
        wtr.write_record([i, g, &w.to_string(), &c.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

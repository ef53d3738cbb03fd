//! Predefined-issue extraction by embedding query expansion.
//!
//! Each issue's seed keywords are expanded to the vocabulary terms whose
//! vectors lie within a cosine threshold of the seed. The threshold starts
//! at `base_sim` and is raised in fixed steps, up to `max_sim`, while a seed
//! still has more than `overflow_count` neighbours. Comments containing any
//! seed or expansion term are tagged with the issue (multi-label).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{split_list, Corpus};
use crate::embedding::{similarity_scan, EmbeddingError, EmbeddingTable, Neighbor};
use crate::text::{content_tokens, Stopwords};

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("issue {0:?} has no seed keywords")]
    EmptySeeds(String),
    #[error("issue {0:?} has no representable seeds")]
    NoRepresentableSeeds(String),
    #[error("invalid expansion parameters: {0}")]
    InvalidParams(String),
    #[error("row {row}: {message}")]
    MalformedRow { row: u64, message: String },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, QueryError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueSpec {
    pub issue_name: String,
    /// Lowercase, unique, in the order given.
    pub seed_keywords: Vec<String>,
}

impl IssueSpec {
    pub fn new(
        issue_name: impl Into<String>,
        seeds: impl IntoIterator<Item = impl AsRef<str>>,
    ) -> Result<Self> {
        let issue_name = issue_name.into().trim().to_string();
        let mut seed_keywords: Vec<String> = Vec::new();
        for s in seeds {
            let s = s
                .as_ref()
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" ")
                .to_lowercase();
            if !s.is_empty() && !seed_keywords.contains(&s) {
                seed_keywords.push(s);
            }
        }
        if seed_keywords.is_empty() {
            return Err(QueryError::EmptySeeds(issue_name));
        }
        Ok(IssueSpec {
            issue_name,
            seed_keywords,
        })
    }
}

/// Reads an `issue_name,seed_keywords` CSV with `;`-separated seeds.
pub fn read_issue_specs<R: Read>(reader: R) -> Result<Vec<IssueSpec>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i as u64 + 1;
        if rec.len() < 2 {
            return Err(QueryError::MalformedRow {
                row,
                message: "expected issue_name,seed_keywords".into(),
            });
        }
        out.push(IssueSpec::new(&rec[0], split_list(&rec[1]))?);
    }
    Ok(out)
}

pub fn load_issue_specs(path: &Path) -> Result<Vec<IssueSpec>> {
    read_issue_specs(std::fs::File::open(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpansionParams {
    pub base_sim: f64,
    pub max_sim: f64,
    /// Increment applied while a seed has more than `overflow_count` neighbours.
    pub step: f64,
    pub overflow_count: usize,
}

impl Default for ExpansionParams {
    fn default() -> Self {
        ExpansionParams {
            base_sim: 0.4,
            max_sim: 0.6,
            step: 0.05,
            overflow_count: 1000,
        }
    }
}

impl ExpansionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_sim > 0.0 && self.base_sim <= self.max_sim && self.max_sim < 1.0) {
            return Err(QueryError::InvalidParams(format!(
                "need 0 < base_sim <= max_sim < 1, got {} and {}",
                self.base_sim, self.max_sim
            )));
        }
        if self.step.is_nan() || self.step <= 0.0 {
            return Err(QueryError::InvalidParams("step must be positive".into()));
        }
        if self.overflow_count == 0 {
            return Err(QueryError::InvalidParams(
                "overflow_count must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Grid point `k` steps below `max_sim`, snapped to a 1e-9 grid so that
    /// 0.6 - 1 * 0.05 reports as 0.55.
    fn grid(&self, k: usize) -> f64 {
        let t = self.max_sim - self.step * k as f64;
        (t * 1e9).round() / 1e9
    }

    /// Effective threshold given the neighbour count at a threshold.
    ///
    /// Thresholds live on a grid running down from `max_sim` in `step`s. The
    /// lowest grid point whose count is within `overflow_count` is taken (or
    /// `max_sim` if none is), with `base_sim` as a floor. For a `base_sim` on
    /// the grid this is "start at `base_sim` and raise by `step` while there
    /// are too many neighbours"; taking the floor rather than the walk keeps
    /// the threshold non-decreasing in `base_sim` for off-grid values too.
    fn effective_threshold(&self, count_at: impl Fn(f64) -> usize) -> f64 {
        let below = ((self.max_sim - self.base_sim) / self.step - 1e-9)
            .ceil()
            .max(0.0) as usize;
        let mut t = self.max_sim;
        for k in (0..=below).rev() {
            let g = self.grid(k);
            if count_at(g) <= self.overflow_count {
                t = g;
                break;
            }
        }
        t.max(self.base_sim)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedExpansion {
    pub seed: String,
    /// Descending by similarity; the seed itself comes first with 1.0.
    pub near_terms: Vec<Neighbor>,
    pub effective_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpandedQuery {
    pub issue_name: String,
    pub seed_keywords: Vec<String>,
    pub seeds: Vec<SeedExpansion>,
    /// Seeds that could not be embedded.
    pub skipped_seeds: Vec<String>,
}

impl ExpandedQuery {
    pub fn expansion(&self) -> BTreeMap<&str, &[Neighbor]> {
        self.seeds
            .iter()
            .map(|s| (s.seed.as_str(), s.near_terms.as_slice()))
            .collect()
    }

    pub fn effective_threshold(&self) -> BTreeMap<&str, f64> {
        self.seeds
            .iter()
            .map(|s| (s.seed.as_str(), s.effective_threshold))
            .collect()
    }

    /// Union of every seed's expansion terms.
    pub fn all_terms(&self) -> BTreeSet<&str> {
        self.seeds
            .iter()
            .flat_map(|s| s.near_terms.iter().map(|n| n.term.as_str()))
            .collect()
    }
}

impl Serialize for Neighbor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        (&self.term, self.sim).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Neighbor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let (term, sim) = <(String, f64)>::deserialize(d)?;
        Ok(Neighbor { term, sim })
    }
}

/// Seed vector: the word vector, or the mean of the word vectors for a
/// multi-word seed. `None` if any word is out of vocabulary.
fn seed_vector(table: &EmbeddingTable, seed: &str) -> Option<(Vec<f64>, Option<usize>)> {
    let words: Vec<&str> = seed.split_whitespace().collect();
    if words.len() == 1 {
        let idx = table.index_of(words[0])?;
        return Some((
            table.row(idx).iter().map(|&x| x as f64).collect(),
            Some(idx),
        ));
    }
    let mut sum = vec![0.0; table.dim()];
    for w in &words {
        let row = table.vector(w)?;
        for (s, &x) in sum.iter_mut().zip(row) {
            *s += x as f64;
        }
    }
    sum.iter_mut().for_each(|s| *s /= words.len() as f64);
    Some((sum, None))
}

pub fn expand_query(
    table: &EmbeddingTable,
    spec: &IssueSpec,
    params: &ExpansionParams,
) -> Result<ExpandedQuery> {
    params.validate()?;
    let mut seeds = Vec::new();
    let mut skipped_seeds = Vec::new();
    for seed in &spec.seed_keywords {
        let Some((vector, self_index)) = seed_vector(table, seed) else {
            warn!(
                "issue {:?}: seed {seed:?} not in vocabulary, skipped",
                spec.issue_name
            );
            skipped_seeds.push(seed.clone());
            continue;
        };
        let scored = match similarity_scan(table, &vector, self_index) {
            Ok(s) => s,
            Err(EmbeddingError::ZeroNorm) => {
                warn!(
                    "issue {:?}: seed {seed:?} has a zero vector, skipped",
                    spec.issue_name
                );
                skipped_seeds.push(seed.clone());
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        // A multi-word seed is not a vocabulary row; it is listed first.
        let phrase = usize::from(self_index.is_none());
        let count_at = |t: f64| phrase + scored.iter().take_while(|s| s.1 >= t).count();

        let threshold = params.effective_threshold(count_at);

        let mut near_terms = Vec::new();
        if phrase == 1 {
            near_terms.push(Neighbor {
                term: seed.clone(),
                sim: 1.0,
            });
        }
        near_terms.extend(
            scored
                .iter()
                .take_while(|s| s.1 >= threshold)
                .map(|&(i, sim)| Neighbor {
                    term: table.vocab()[i].clone(),
                    sim,
                }),
        );
        near_terms.truncate(params.overflow_count);
        seeds.push(SeedExpansion {
            seed: seed.clone(),
            near_terms,
            effective_threshold: threshold,
        });
    }
    if seeds.is_empty() {
        return Err(QueryError::NoRepresentableSeeds(spec.issue_name.clone()));
    }
    Ok(ExpandedQuery {
        issue_name: spec.issue_name.clone(),
        seed_keywords: spec.seed_keywords.clone(),
        seeds,
        skipped_seeds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMode {
    /// Also report which seed's expansion triggered each assignment.
    PerTerm,
    /// Union of all seeds' expansions per issue.
    #[default]
    Combined,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IssueAssignment {
    pub comment_id: u64,
    pub issue_names: BTreeSet<String>,
    pub matched_terms: BTreeMap<String, BTreeSet<String>>,
    /// Per issue, the seeds whose expansion matched. Filled in per-term mode only.
    pub triggers: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Debug, Clone)]
struct IssueMatcher {
    name: String,
    seeds: Vec<String>,
    /// Single-token term -> seeds whose expansion contains it.
    unigrams: HashMap<String, BTreeSet<usize>>,
    /// Multi-token terms.
    phrases: Vec<(Vec<String>, BTreeSet<usize>)>,
}

/// Token-level matcher built from expanded queries.
#[derive(Debug, Clone)]
pub struct IssueClassifier {
    mode: MatchMode,
    stopwords: Stopwords,
    issues: Vec<IssueMatcher>,
}

/// Builds a classifier. Both modes assign the same issues; per-term mode
/// additionally records the triggering seeds.
pub fn combine_modes(
    queries: &[ExpandedQuery],
    mode: MatchMode,
    stopwords: &Stopwords,
) -> IssueClassifier {
    let issues = queries
        .iter()
        .map(|q| {
            let mut unigrams: HashMap<String, BTreeSet<usize>> = HashMap::new();
            let mut phrases: Vec<(Vec<String>, BTreeSet<usize>)> = Vec::new();
            for (si, seed) in q.seeds.iter().enumerate() {
                for n in &seed.near_terms {
                    let toks = content_tokens(&n.term, stopwords);
                    match toks.len() {
                        0 => {}
                        1 => {
                            unigrams
                                .entry(toks.into_iter().next().unwrap())
                                .or_default()
                                .insert(si);
                        }
                        _ => match phrases.iter_mut().find(|(p, _)| *p == toks) {
                            Some((_, s)) => {
                                s.insert(si);
                            }
                            None => phrases.push((toks, BTreeSet::from([si]))),
                        },
                    }
                }
            }
            IssueMatcher {
                name: q.issue_name.clone(),
                seeds: q.seeds.iter().map(|s| s.seed.clone()).collect(),
                unigrams,
                phrases,
            }
        })
        .collect();
    IssueClassifier {
        mode,
        stopwords: stopwords.clone(),
        issues,
    }
}

impl IssueClassifier {
    pub fn mode(&self) -> MatchMode {
        self.mode
    }

    pub fn classify_text(&self, comment_id: u64, text: &str) -> IssueAssignment {
        let tokens = content_tokens(text, &self.stopwords);
        let mut out = IssueAssignment {
            comment_id,
            ..Default::default()
        };
        for issue in &self.issues {
            let mut terms = BTreeSet::new();
            let mut seeds = BTreeSet::new();
            for tok in &tokens {
                if let Some(s) = issue.unigrams.get(tok) {
                    terms.insert(tok.clone());
                    seeds.extend(s.iter().copied());
                }
            }
            for (phrase, s) in &issue.phrases {
                if tokens.windows(phrase.len()).any(|w| w == phrase.as_slice()) {
                    terms.insert(phrase.join(" "));
                    seeds.extend(s.iter().copied());
                }
            }
            if terms.is_empty() {
                continue;
            }
            out.issue_names.insert(issue.name.clone());
            out.matched_terms.insert(issue.name.clone(), terms);
            if self.mode == MatchMode::PerTerm {
                out.triggers.insert(
                    issue.name.clone(),
                    seeds.into_iter().map(|i| issue.seeds[i].clone()).collect(),
                );
            }
        }
        out
    }

    pub fn classify(&self, corpus: &Corpus) -> Vec<IssueAssignment> {
        corpus
            .comments
            .iter()
            .map(|c| self.classify_text(c.comment_id, &c.text))
            .collect()
    }
}

/// Tags every comment with the issues whose seed or expansion terms it contains.
pub fn classify_predefined(
    corpus: &Corpus,
    queries: &[ExpandedQuery],
    stopwords: &Stopwords,
) -> Result<Vec<IssueAssignment>> {
    if queries.is_empty() {
        return Err(QueryError::InvalidParams("no issue queries given".into()));
    }
    Ok(combine_modes(queries, MatchMode::Combined, stopwords).classify(corpus))
}

/// Comment id -> assigned issue names, for CSV augmentation.
pub fn assignment_map(assignments: &[IssueAssignment]) -> BTreeMap<u64, Vec<String>> {
    assignments
        .iter()
        .map(|a| (a.comment_id, a.issue_names.iter().cloned().collect()))
        .collect()
}

/// Writes `issue,seed,near_term,sim,effective_threshold`.
pub fn write_expansion_report<W: Write>(writer: W, queries: &[ExpandedQuery]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["issue", "seed", "near_term", "sim", "effective_threshold"])?;
    for q in queries {
        for s in &q.seeds {
            for n in &s.near_terms {
                wtr.write_record([
                    q.issue_name.as_str(),
                    s.seed.as_str(),
                    n.term.as_str(),
                    &format!("{:.6}", n.sim),
                    &format!("{}", s.effective_threshold),
                ])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Writes `comment_id,issue,seed,matched_terms`: one row per triggering seed.
/// Only per-term assignments carry triggers.
pub fn write_triggers<W: Write>(writer: W, assignments: &[IssueAssignment]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["comment_id", "issue", "seed", "matched_terms"])?;
    for a in assignments {
        for (issue, seeds) in &a.triggers {
            let terms = a
                .matched_terms
                .get(issue)
                .map(|t| t.iter().map(String::as_str).collect::<Vec<_>>().join(";"))
                .unwrap_or_default();
            for seed in seeds {
                wtr.write_record([a.comment_id.to_string().as_str(), issue, seed, &terms])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

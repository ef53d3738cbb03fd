use std::collections::{BTreeMap, HashMap, HashSet};

use crate::corpus::Corpus;
use crate::text::{content_tokens, Stopwords};

use super::sparse::CsrMatrix;
use super::{NmfConfig, TopicError};

/// Document-term matrix: one row per comment, L2-normalised TF-IDF rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TfidfMatrix {
    pub comment_ids: Vec<u64>,
    /// Sorted alphabetically; column `j` is `terms[j]`.
    pub terms: Vec<String>,
    pub idf: Vec<f64>,
    pub matrix: CsrMatrix,
}

impl TfidfMatrix {
    pub fn n_docs(&self) -> usize {
        self.comment_ids.len()
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    /// The same matrix with documents reordered (`order[i]` becomes row `i`).
    pub fn permute_docs(&self, order: &[usize]) -> Self {
        TfidfMatrix {
            comment_ids: order.iter().map(|&i| self.comment_ids[i]).collect(),
            terms: self.terms.clone(),
            idf: self.idf.clone(),
            matrix: self.matrix.select_rows(order),
        }
    }
}

/// Builds the TF-IDF matrix.
///
/// `tf` is the raw count, `idf = ln((1 + n) / (1 + df)) + 1`. Terms with
/// document frequency ratio above `max_df` are removed, then the
/// `max_features` most frequent remaining terms are kept (ties broken
/// alphabetically). With `drop_multi_org`, shared multi-party statements
/// are left out. An `allow_list` restricts the vocabulary further.
pub fn build_tfidf(
    corpus: &Corpus,
    config: &NmfConfig,
    stopwords: &Stopwords,
    allow_list: Option<&HashSet<String>>,
) -> Result<TfidfMatrix, TopicError> {
    let docs: Vec<(u64, Vec<String>)> = corpus
        .comments
        .iter()
        .filter(|c| !(config.drop_multi_org && c.is_multi_org()))
        .map(|c| {
            let mut toks = content_tokens(&c.text, stopwords);
            if let Some(allow) = allow_list {
                toks.retain(|t| allow.contains(t));
            }
            (c.comment_id, toks)
        })
        .collect();
    if docs.is_empty() {
        return Err(TopicError::EmptyCorpus);
    }
    let n_docs = docs.len();

    let mut df: HashMap<&str, usize> = HashMap::new();
    let mut total: HashMap<&str, usize> = HashMap::new();
    for (_, toks) in &docs {
        let mut seen = HashSet::new();
        for t in toks {
            *total.entry(t).or_default() += 1;
            if seen.insert(t.as_str()) {
                *df.entry(t).or_default() += 1;
            }
        }
    }

    let mut candidates: Vec<(&str, usize)> = total
        .iter()
        .filter(|(t, _)| df[*t] as f64 / n_docs as f64 <= config.max_df)
        .map(|(t, &n)| (*t, n))
        .collect();
    candidates.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    candidates.truncate(config.max_features);
    if candidates.is_empty() {
        return Err(TopicError::EmptyVocabulary);
    }
    let mut terms: Vec<String> = candidates.iter().map(|(t, _)| t.to_string()).collect();
    terms.sort();
    let column: HashMap<&str, usize> = terms
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    let idf: Vec<f64> = terms
        .iter()
        .map(|t| ((1.0 + n_docs as f64) / (1.0 + df[t.as_str()] as f64)).ln() + 1.0)
        .collect();

    let mut rows = Vec::with_capacity(n_docs);
    let mut comment_ids = Vec::with_capacity(n_docs);
    for (id, toks) in &docs {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for t in toks {
            if let Some(&c) = column.get(t.as_str()) {
                *counts.entry(c).or_default() += 1.0;
            }
        }
        let mut row: Vec<(usize, f64)> =
            counts.into_iter().map(|(c, tf)| (c, tf * idf[c])).collect();
        let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|(_, v)| *v /= norm);
        }
        rows.push(row);
        comment_ids.push(*id);
    }
    Ok(TfidfMatrix {
        comment_ids,
        idf,
        matrix: CsrMatrix::from_rows(terms.len(), rows),
        terms,
    })
}

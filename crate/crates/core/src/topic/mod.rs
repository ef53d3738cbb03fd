//! Latent issue extraction: TF-IDF, NNDSVD-initialised NMF, topic keywords,
//! membership and representative comments.

mod nmf;
mod nndsvd;
mod sparse;
pub mod svd;
mod tfidf;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;

pub use nmf::{fit_hals, objective, HalsParams, NmfFit};
pub use nndsvd::{nndsvd_init, NndsvdInit};
pub use sparse::CsrMatrix;
pub use tfidf::{build_tfidf, TfidfMatrix};

#[derive(Debug, Error)]
pub enum TopicError {
    #[error("no documents to model")]
    EmptyCorpus,
    #[error("empty vocabulary after max_df / max_features filtering")]
    EmptyVocabulary,
    #[error("{n_topics} topics requested for a {rows} x {cols} matrix")]
    TooManyTopics {
        n_topics: usize,
        rows: usize,
        cols: usize,
    },
    #[error("non-finite value during sweep {sweep}")]
    NonFinite { sweep: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("topic {0} out of range")]
    NoSuchTopic(usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TopicError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmfConfig {
    pub n_topics: usize,
    pub alpha: f64,
    pub l1_ratio: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub max_features: usize,
    pub max_df: f64,
    pub membership_threshold: f64,
    pub seed: u64,
    pub n_keywords: usize,
    pub n_representatives: usize,
    /// Leave shared multi-party statements out of the document-term matrix.
    pub drop_multi_org: bool,
}

impl Default for NmfConfig {
    fn default() -> Self {
        NmfConfig {
            n_topics: 10,
            alpha: 0.1,
            l1_ratio: 0.5,
            tol: 1e-4,
            max_iter: 500,
            max_features: 10_000,
            max_df: 0.9,
            membership_threshold: 0.1,
            seed: 0,
            n_keywords: 10,
            n_representatives: 10,
            drop_multi_org: true,
        }
    }
}

impl NmfConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TopicError::InvalidConfig(m.to_string()));
        if self.n_topics < 2 {
            return bad("n_topics must be at least 2");
        }
        if self.alpha.is_nan() || self.alpha < 0.0 {
            return bad("alpha must be nonnegative");
        }
        if !(0.0..=1.0).contains(&self.l1_ratio) {
            return bad("l1_ratio must lie in [0, 1]");
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return bad("tol must be nonnegative");
        }
        if !(self.max_df > 0.0 && self.max_df <= 1.0) {
            return bad("max_df must lie in (0, 1]");
        }
        if self.max_features == 0 {
            return bad("max_features must be positive");
        }
        Ok(())
    }

    pub fn hals(&self) -> HalsParams {
        HalsParams {
            alpha: self.alpha,
            l1_ratio: self.l1_ratio,
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

/// Fitted factorisation with its vocabulary.
#[derive(Debug, Clone)]
pub struct TopicModel {
    /// Documents x topics.
    pub w: Array2<f64>,
    /// Topics x terms.
    pub h: Array2<f64>,
    pub comment_ids: Vec<u64>,
    pub terms: Vec<String>,
    pub objective_trace: Vec<f64>,
    pub keywords: Vec<Vec<(String, f64)>>,
    /// Initial factors left at zero for lack of rank.
    pub deficient_topics: Vec<usize>,
    pub config: NmfConfig,
}

impl TopicModel {
    pub fn n_topics(&self) -> usize {
        self.h.nrows()
    }

    pub fn sweeps(&self) -> usize {
        self.objective_trace.len().saturating_sub(1)
    }
}

pub fn fit_nmf(x: &TfidfMatrix, config: &NmfConfig) -> Result<TopicModel> {
    config.validate()?;
    let init = nndsvd_init(&x.matrix, config.n_topics, config.seed)?;
    if !init.deficient.is_empty() {
        log::warn!(
            "input rank below {} topics; factors {:?} start at zero",
            config.n_topics,
            init.deficient
        );
    }
    let fit = fit_hals(&x.matrix, init.w, init.h, &config.hals())?;
    let mut model = TopicModel {
        w: fit.w,
        h: fit.h,
        comment_ids: x.comment_ids.clone(),
        terms: x.terms.clone(),
        objective_trace: fit.objective_trace,
        keywords: Vec::new(),
        deficient_topics: init.deficient,
        config: config.clone(),
    };
    model.keywords = topic_keywords(&model, config.n_keywords.min(x.n_terms()));
    Ok(model)
}

/// Top-`k` terms of every topic by weight in `H`, ties in vocabulary order.
pub fn topic_keywords(model: &TopicModel, k: usize) -> Vec<Vec<(String, f64)>> {
    model
        .h
        .rows()
        .into_iter()
        .map(|row| {
            let mut idx: Vec<usize> = (0..row.len()).collect();
            idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            idx.into_iter()
                .take(k)
                .map(|i| (model.terms[i].clone(), row[i]))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicMembership {
    pub comment_id: u64,
    pub topics: BTreeSet<usize>,
    /// `W` row normalised to sum 1; all zeros for an empty row.
    pub proportions: Vec<f64>,
}

pub(crate) fn row_proportions(w: &Array2<f64>, i: usize) -> Vec<f64> {
    let row = w.row(i);
    let total: f64 = row.sum();
    if total > 0.0 {
        row.iter().map(|v| v / total).collect()
    } else {
        vec![0.0; row.len()]
    }
}

/// Multi-label membership: topic `t` is assigned when its share of the
/// document's `W` row is at least `threshold`.
pub fn assign_topics(model: &TopicModel, threshold: f64) -> Vec<TopicMembership> {
    (0..model.w.nrows())
        .map(|i| {
            let proportions = row_proportions(&model.w, i);
            let topics = proportions
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0 && p >= threshold)
                .map(|(t, _)| t)
                .collect();
            TopicMembership {
                comment_id: model.comment_ids[i],
                topics,
                proportions,
            }
        })
        .collect()
}

/// Comments ranked by their share of `topic`, then raw weight, then id.
pub fn representative_comments(
    model: &TopicModel,
    topic: usize,
    top_n: usize,
) -> Result<Vec<(u64, f64)>> {
    if topic >= model.n_topics() {
        return Err(TopicError::NoSuchTopic(topic));
    }
    let mut ranked: Vec<(u64, f64, f64)> = (0..model.w.nrows())
        .map(|i| {
            let p = row_proportions(&model.w, i)[topic];
            (model.comment_ids[i], p, model.w[[i, topic]])
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then(b.2.total_cmp(&a.2))
            .then(a.0.cmp(&b.0))
    });
    Ok(ranked
        .into_iter()
        .take(top_n)
        .map(|(id, p, _)| (id, p))
        .collect())
}

/// Name of a latent topic in output tables.
pub fn topic_name(topic: usize) -> String {
    format!("topic_{topic}")
}

/// Comment id -> latent topic names, for the `latent_issues` column.
pub fn membership_map(members: &[TopicMembership]) -> BTreeMap<u64, Vec<String>> {
    members
        .iter()
        .map(|m| {
            (
                m.comment_id,
                m.topics.iter().map(|&t| topic_name(t)).collect(),
            )
        })
        .collect()
}

/// `topic_id,rank,keyword,weight`
pub fn write_keywords<W: Write>(writer: W, model: &TopicModel) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["topic_id", "rank", "keyword", "weight"])?;
    for (t, kws) in model.keywords.iter().enumerate() {
        for (r, (term, weight)) in kws.iter().enumerate() {
            wtr.write_record([
                t.to_string(),
                (r + 1).to_string(),
                term.clone(),
                format!("{weight:.6}"),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// `topic_id,rank,comment_id,proportion,participant_org,text`
pub fn write_representatives<W: Write>(
    writer: W,
    model: &TopicModel,
    corpus: &Corpus,
    top_n: usize,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "topic_id",
        "rank",
        "comment_id",
        "proportion",
        "participant_org",
        "text",
    ])?;
    for t in 0..model.n_topics() {
        for (r, (id, p)) in representative_comments(model, t, top_n)?
            .into_iter()
            .enumerate()
        {
            let (org, text) = corpus
                .get(id)
                .map(|c| (c.participant_org.clone(), c.text.clone()))
                .unwrap_or_default();
            wtr.write_record([
                t.to_string(),
                (r + 1).to_string(),
                id.to_string(),
                format!("{p:.6}"),
                org,
                text,
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Manual topic descriptions from a `topic_id,label` CSV.
pub fn read_labels<R: std::io::Read>(reader: R) -> Result<BTreeMap<usize, String>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let id = rec
            .get(0)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| {
                TopicError::InvalidConfig(format!("labels row {}: bad topic_id", i + 1))
            })?;
        out.insert(id, rec.get(1).unwrap_or("").trim().to_string());
    }
    Ok(out)
}

/// `topic_id,label,keywords` with keywords `;`-joined; unlabelled topics
/// have an empty label.
pub fn write_summary<W: Write>(
    writer: W,
    model: &TopicModel,
    labels: &BTreeMap<usize, String>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["topic_id", "label", "keywords"])?;
    for (t, kws) in model.keywords.iter().enumerate() {
        let words: Vec<&str> = kws.iter().map(|(w, _)| w.as_str()).collect();
        wtr.write_record([
            t.to_string(),
            labels.get(&t).cloned().unwrap_or_default(),
            words.join(";"),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// One objective value per line.
pub fn write_trace<W: Write>(mut writer: W, trace: &[f64]) -> Result<()> {
    for v in trace {
        writeln!(writer, "{v:?}")?;
    }
    Ok(())
}

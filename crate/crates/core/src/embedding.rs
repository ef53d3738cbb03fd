//! Static word-vector tables, precomputed per-comment vectors, and the
//! vector arithmetic shared by the analyses.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::Comment;
use crate::text::{content_tokens, tokenize, Stopwords};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected {expected} components, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: non-numeric component {token:?}")]
    NonNumeric { line: usize, token: String },
    #[error("line {line}: duplicate term {term:?}")]
    DuplicateTerm { line: usize, term: String },
    #[error("line {line}: row has no components")]
    EmptyRow { line: usize },
    #[error("embedding table is empty")]
    EmptyTable,
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("term not in vocabulary: {0:?}")]
    OutOfVocabulary(String),
    #[error("unrepresentable text: no in-vocabulary tokens")]
    Unrepresentable,
    #[error("chunk limit must be at least 1")]
    InvalidChunkLimit,
    #[error("duplicate comment id {0}")]
    DuplicateCommentId(u64),
    #[error("no vector for comment {0}")]
    MissingCommentVector(u64),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, EmbeddingError>;

/// The `count dim` line word2vec writes before the vectors.
fn is_count_header(line: &str) -> bool {
    let parts: Vec<&str> = line.split_whitespace().collect();
    parts.len() == 2 && parts.iter().all(|p| p.parse::<usize>().is_ok())
}

/// Term to dense vector map, stored row-major as `f32`.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    vocab: Vec<String>,
    data: Vec<f32>,
    norms: Vec<f64>,
    index: HashMap<String, usize>,
    source_tag: String,
}

impl EmbeddingTable {
    pub fn from_rows(
        rows: impl IntoIterator<Item = (String, Vec<f32>)>,
        source_tag: impl Into<String>,
    ) -> Result<Self> {
        let mut builder = TableBuilder::default();
        for (i, (term, vector)) in rows.into_iter().enumerate() {
            builder.push(i + 1, term, vector)?;
        }
        builder.finish(source_tag.into())
    }

    /// Parses the whitespace-separated `term v1 ... vd` text format. A
    /// word2vec `count dim` first line is skipped.
    pub fn parse<R: Read>(reader: R, source_tag: impl Into<String>) -> Result<Self> {
        let mut builder = TableBuilder::default();
        let reader = BufReader::new(reader);
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|source| EmbeddingError::Io {
                path: PathBuf::from("<reader>"),
                source,
            })?;
            if line_no == 1 && is_count_header(&line) {
                continue;
            }
            let mut parts = line.split(' ').filter(|s| !s.is_empty());
            let term = match parts.next() {
                Some(t) => t.trim().to_string(),
                None => continue,
            };
            let mut vector = Vec::with_capacity(builder.dim.unwrap_or(0));
            for token in parts {
                let token = token.trim();
                if token.is_empty() {
                    continue;
                }
                match token.parse::<f32>() {
                    Ok(v) if v.is_finite() => vector.push(v),
                    _ => {
                        return Err(EmbeddingError::NonNumeric {
                            line: line_no,
                            token: token.to_string(),
                        })
                    }
                }
            }
            builder.push(line_no, term, vector)?;
        }
        builder.finish(source_tag.into())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|source| EmbeddingError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let tag = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse(file, tag)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn contains(&self, term: &str) -> bool {
        self.index.contains_key(term)
    }

    pub fn row(&self, idx: usize) -> &[f32] {
        &self.data[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn vector(&self, term: &str) -> Option<&[f32]> {
        self.index_of(term).map(|i| self.row(i))
    }

    pub fn vector_f64(&self, term: &str) -> Option<Vec<f64>> {
        self.vector(term)
            .map(|v| v.iter().map(|&x| x as f64).collect())
    }

    pub(crate) fn norm(&self, idx: usize) -> f64 {
        self.norms[idx]
    }
}

#[derive(Default)]
struct TableBuilder {
    dim: Option<usize>,
    vocab: Vec<String>,
    data: Vec<f32>,
    index: HashMap<String, usize>,
}

impl TableBuilder {
    fn push(&mut self, line: usize, term: String, vector: Vec<f32>) -> Result<()> {
        if vector.is_empty() {
            return Err(EmbeddingError::EmptyRow { line });
        }
        let dim = *self.dim.get_or_insert(vector.len());
        if vector.len() != dim {
            return Err(EmbeddingError::DimensionMismatch {
                line,
                expected: dim,
                found: vector.len(),
            });
        }
        if self.index.contains_key(&term) {
            return Err(EmbeddingError::DuplicateTerm { line, term });
        }
        if let Some(v) = vector.iter().find(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonNumeric {
                line,
                token: v.to_string(),
            });
        }
        self.index.insert(term.clone(), self.vocab.len());
        self.vocab.push(term);
        self.data.extend_from_slice(&vector);
        Ok(())
    }

    fn finish(self, source_tag: String) -> Result<EmbeddingTable> {
        let dim = self.dim.ok_or(EmbeddingError::EmptyTable)?;
        let norms = self
            .data
            .chunks_exact(dim)
            .map(|row| {
                row.iter()
                    .map(|&x| (x as f64) * (x as f64))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        Ok(EmbeddingTable {
            dim,
            vocab: self.vocab,
            data: self.data,
            norms,
            index: self.index,
            source_tag,
        })
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(EmbeddingError::DimMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(EmbeddingError::ZeroNorm);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Elementwise mean of equal-length vectors.
pub fn mean_vector<'a>(
    vectors: impl IntoIterator<Item = &'a [f64]>,
    dim: usize,
) -> Option<Vec<f64>> {
    let mut sum = vec![0.0; dim];
    let mut n = 0usize;
    for v in vectors {
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
        n += 1;
    }
    if n == 0 {
        return None;
    }
    for s in &mut sum {
        *s /= n as f64;
    }
    Some(sum)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub term: String,
    pub sim: f64,
}

/// Every vocabulary term with cosine >= `min_sim` to `query_term`, by
/// descending similarity (ties in vocabulary order), at most `max_words`.
/// The query term itself is included with similarity exactly 1.
pub fn neighbors(
    table: &EmbeddingTable,
    query_term: &str,
    min_sim: f64,
    max_words: usize,
) -> Result<Vec<Neighbor>> {
    let idx = table
        .index_of(query_term)
        .ok_or_else(|| EmbeddingError::OutOfVocabulary(query_term.to_string()))?;
    let query: Vec<f64> = table.row(idx).iter().map(|&x| x as f64).collect();
    neighbors_of_vector(table, &query, min_sim, max_words, Some(idx))
}

/// Like [`neighbors`] for an arbitrary query vector. `self_index`, if given,
/// is reported with similarity 1.
pub fn neighbors_of_vector(
    table: &EmbeddingTable,
    query: &[f64],
    min_sim: f64,
    max_words: usize,
    self_index: Option<usize>,
) -> Result<Vec<Neighbor>> {
    let mut scored = similarity_scan(table, query, self_index)?;
    scored.retain(|&(_, s)| s >= min_sim);
    scored.truncate(max_words);
    Ok(scored
        .into_iter()
        .map(|(i, sim)| Neighbor {
            term: table.vocab[i].clone(),
            sim,
        })
        .collect())
}

/// Cosine of `query` against every row, sorted descending with ties in
/// vocabulary order. Zero rows are skipped.
pub(crate) fn similarity_scan(
    table: &EmbeddingTable,
    query: &[f64],
    self_index: Option<usize>,
) -> Result<Vec<(usize, f64)>> {
    if query.len() != table.dim() {
        return Err(EmbeddingError::DimMismatch {
            left: query.len(),
            right: table.dim(),
        });
    }
    let qn = norm(query);
    if qn == 0.0 {
        return Err(EmbeddingError::ZeroNorm);
    }
    let mut scored: Vec<(usize, f64)> = (0..table.len())
        .filter(|&i| table.norm(i) > 0.0)
        .map(|i| {
            if Some(i) == self_index {
                return (i, 1.0);
            }
            let d: f64 = table
                .row(i)
                .iter()
                .zip(query)
                .map(|(&x, &q)| x as f64 * q)
                .sum();
            (i, (d / (qn * table.norm(i))).clamp(-1.0, 1.0))
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored)
}

/// A document-level vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DocVector {
    pub comment_id: u64,
    pub vector: Vec<f64>,
    /// Fraction of tokens found in the vocabulary.
    pub token_coverage: f64,
    /// Tokens that contributed to `vector`; the weight used when pooling
    /// several documents.
    pub token_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedOptions {
    pub chunk_limit: usize,
    pub remove_stopwords: bool,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        EmbedOptions {
            chunk_limit: 512,
            remove_stopwords: true,
        }
    }
}

/// Tokens as seen by [`embed_text`].
pub fn embedding_tokens(text: &str, stopwords: &Stopwords, options: &EmbedOptions) -> Vec<String> {
    if options.remove_stopwords {
        content_tokens(text, stopwords)
    } else {
        tokenize(text)
    }
}

/// Mean-pooled text vector: the token stream is split into consecutive
/// chunks of at most `chunk_limit` tokens, each chunk is the mean of its
/// in-vocabulary token vectors, and the result is the mean of the chunks.
pub fn embed_text(
    table: &EmbeddingTable,
    text: &str,
    stopwords: &Stopwords,
    options: &EmbedOptions,
) -> Result<DocVector> {
    let tokens = embedding_tokens(text, stopwords, options);
    embed_tokens(table, &tokens, options.chunk_limit)
}

pub fn embed_tokens(
    table: &EmbeddingTable,
    tokens: &[String],
    chunk_limit: usize,
) -> Result<DocVector> {
    if chunk_limit == 0 {
        return Err(EmbeddingError::InvalidChunkLimit);
    }
    let dim = table.dim();
    let mut chunk_means: Vec<Vec<f64>> = Vec::new();
    let mut in_vocab = 0usize;
    for chunk in tokens.chunks(chunk_limit) {
        let mut sum = vec![0.0; dim];
        let mut n = 0usize;
        for idx in chunk.iter().filter_map(|t| table.index_of(t)) {
            for (s, &x) in sum.iter_mut().zip(table.row(idx)) {
                *s += x as f64;
            }
            n += 1;
        }
        if n > 0 {
            sum.iter_mut().for_each(|s| *s /= n as f64);
            chunk_means.push(sum);
            in_vocab += n;
        }
    }
    let vector = mean_vector(chunk_means.iter().map(Vec::as_slice), dim)
        .ok_or(EmbeddingError::Unrepresentable)?;
    Ok(DocVector {
        comment_id: 0,
        vector,
        token_coverage: in_vocab as f64 / tokens.len() as f64,
        token_count: in_vocab,
    })
}

/// Reads `comment_id,v1,...,vd` rows; a leading header row is accepted.
pub fn read_contextual_vectors<R: Read>(reader: R) -> Result<BTreeMap<u64, DocVector>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut out = BTreeMap::new();
    let mut dim: Option<usize> = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 1;
        let first = rec.get(0).unwrap_or("").trim();
        if line == 1 && first == "comment_id" {
            continue;
        }
        let comment_id: u64 = first.parse().map_err(|_| EmbeddingError::NonNumeric {
            line,
            token: first.to_string(),
        })?;
        let mut vector = Vec::with_capacity(rec.len().saturating_sub(1));
        for tok in rec.iter().skip(1) {
            match tok.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => vector.push(v),
                _ => {
                    return Err(EmbeddingError::NonNumeric {
                        line,
                        token: tok.to_string(),
                    })
                }
            }
        }
        if vector.is_empty() {
            return Err(EmbeddingError::EmptyRow { line });
        }
        let d = *dim.get_or_insert(vector.len());
        if d != vector.len() {
            return Err(EmbeddingError::DimensionMismatch {
                line,
                expected: d,
                found: vector.len(),
            });
        }
        let doc = DocVector {
            comment_id,
            vector,
            token_coverage: 1.0,
            token_count: 0,
        };
        if out.insert(comment_id, doc).is_some() {
            return Err(EmbeddingError::DuplicateCommentId(comment_id));
        }
    }
    Ok(out)
}

pub fn load_contextual_vectors(path: &Path) -> Result<BTreeMap<u64, DocVector>> {
    let file = fs::File::open(path).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_contextual_vectors(file)
}

pub fn write_contextual_vectors<'a, W: Write>(
    writer: W,
    vectors: impl IntoIterator<Item = &'a DocVector>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header_written = false;
    for doc in vectors {
        if !header_written {
            let mut header = vec!["comment_id".to_string()];
            header.extend((1..=doc.vector.len()).map(|i| format!("v{i}")));
            wtr.write_record(&header)?;
            header_written = true;
        }
        let mut row = vec![doc.comment_id.to_string()];
        // `{:?}` prints the shortest representation that round-trips exactly.
        row.extend(doc.vector.iter().map(|v| format!("{v:?}")));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|source| EmbeddingError::Io {
        path: PathBuf::from("<writer>"),
        source,
    })?;
    Ok(())
}

/// Where document vectors come from.
#[derive(Debug, Clone, Copy)]
pub enum Backend<'a> {
    /// Mean-pooled static word vectors.
    Static {
        table: &'a EmbeddingTable,
        stopwords: &'a Stopwords,
        options: EmbedOptions,
    },
    /// Vectors produced offline per comment (e.g. by a transformer encoder).
    Contextual {
        vectors: &'a BTreeMap<u64, DocVector>,
        stopwords: &'a Stopwords,
    },
}

impl<'a> Backend<'a> {
    pub fn tag(&self) -> String {
        match self {
            Backend::Static { table, .. } => format!("static:{}", table.source_tag()),
            Backend::Contextual { .. } => "contextual".to_string(),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            Backend::Static { table, .. } => Some(table.dim()),
            Backend::Contextual { vectors, .. } => vectors.values().next().map(|d| d.vector.len()),
        }
    }

    /// Document vector for a comment. For contextual vectors the pooling
    /// weight is the comment's content-token count.
    pub fn doc_vector(&self, comment: &Comment) -> Result<DocVector> {
        match self {
            Backend::Static {
                table,
                stopwords,
                options,
            } => {
                let mut doc = embed_text(table, &comment.text, stopwords, options)?;
                doc.comment_id = comment.comment_id;
                Ok(doc)
            }
            Backend::Contextual { vectors, stopwords } => {
                let mut doc = vectors
                    .get(&comment.comment_id)
                    .cloned()
                    .ok_or(EmbeddingError::MissingCommentVector(comment.comment_id))?;
                doc.token_count = content_tokens(&comment.text, stopwords).len().max(1);
                Ok(doc)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> EmbeddingTable {
        EmbeddingTable::parse(
            "alpha 1 0 0 0\nbeta 2 0 0 0\ngamma 0 1 0 0\n".as_bytes(),
            "toy",
        )
        .unwrap()
    }

    #[test]
    fn parses_toy_table() {
        let t = toy();
        assert_eq!(t.dim(), 4);
        assert_eq!(t.len(), 3);
        assert_eq!(t.vector("gamma").unwrap(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn wrong_width_names_line() {
        let err = EmbeddingTable::parse("a 1 2\nb 1 2 3\n".as_bytes(), "x").unwrap_err();
        assert!(matches!(
            err,
            EmbeddingError::DimensionMismatch {
                line: 2,
                expected: 2,
                found: 3
            }
        ));
    }

    #[test]
    fn non_numeric_and_duplicates_rejected() {
        assert!(matches!(
            EmbeddingTable::parse("a 1 x\n".as_bytes(), "x"),
            Err(EmbeddingError::NonNumeric { line: 1, .. })
        ));
        assert!(matches!(
            EmbeddingTable::parse("a 1 2\na 3 4\n".as_bytes(), "x"),
            Err(EmbeddingError::DuplicateTerm { line: 2, .. })
        ));
        assert!(matches!(
            EmbeddingTable::parse("".as_bytes(), "x"),
            Err(EmbeddingError::EmptyTable)
        ));
    }

    #[test]
    fn cosine_basics() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[3.0, 4.0], &[3.0, 4.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            cosine(&[0.0, 0.0], &[1.0, 0.0]),
            Err(EmbeddingError::ZeroNorm)
        ));
        assert!(matches!(
            cosine(&[1.0], &[1.0, 0.0]),
            Err(EmbeddingError::DimMismatch { .. })
        ));
    }

    #[test]
    fn neighbors_include_scaled_copy_and_self() {
        let t = toy();
        let n = neighbors(&t, "alpha", 0.5, 10).unwrap();
        assert_eq!(n.len(), 2);
        assert_eq!(n[0].term, "alpha");
        assert_eq!(n[0].sim, 1.0);
        assert_eq!(n[1].term, "beta");
        assert!((n[1].sim - 1.0).abs() < 1e-12);

        let only_self = neighbors(&t, "gamma", 0.999_999, 10).unwrap();
        assert_eq!(only_self.len(), 1);
        assert_eq!(only_self[0].term, "gamma");

        assert!(matches!(
            neighbors(&t, "delta", 0.5, 10),
            Err(EmbeddingError::OutOfVocabulary(_))
        ));
    }

    #[test]
    fn single_word_embeds_to_its_vector() {
        let t = toy();
        let doc = embed_text(
            &t,
            "The gamma!",
            &Stopwords::english(),
            &EmbedOptions::default(),
        )
        .unwrap();
        assert_eq!(doc.vector, vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(doc.token_coverage, 1.0);
        assert_eq!(doc.token_count, 1);
    }

    #[test]
    fn unrepresentable_text_errors() {
        let t = toy();
        assert!(matches!(
            embed_text(
                &t,
                "nothing here",
                &Stopwords::english(),
                &EmbedOptions::default()
            ),
            Err(EmbeddingError::Unrepresentable)
        ));
        assert!(matches!(
            embed_tokens(&t, &["alpha".to_string()], 0),
            Err(EmbeddingError::InvalidChunkLimit)
        ));
    }

    #[test]
    fn coverage_counts_oov_tokens() {
        let t = toy();
        let doc = embed_text(
            &t,
            "alpha unknown gamma words",
            &Stopwords::empty(),
            &EmbedOptions::default(),
        )
        .unwrap();
        assert_eq!(doc.token_coverage, 0.5);
        assert_eq!(doc.vector, vec![0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn contextual_file_parsing() {
        let m = read_contextual_vectors("".as_bytes()).unwrap();
        assert!(m.is_empty());
        let m = read_contextual_vectors("comment_id,v1,v2\n1,0.5,1\n2,1,2\n7,-1,0\n".as_bytes())
            .unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m[&7].vector, vec![-1.0, 0.0]);
        assert_eq!(m[&1].token_coverage, 1.0);
        assert!(matches!(
            read_contextual_vectors("1,0.5\n1,0.7\n".as_bytes()),
            Err(EmbeddingError::DuplicateCommentId(1))
        ));
        assert!(matches!(
            read_contextual_vectors("1,0.5\n2,0.7,1\n".as_bytes()),
            Err(EmbeddingError::DimensionMismatch { line: 2, .. })
        ));
    }
}

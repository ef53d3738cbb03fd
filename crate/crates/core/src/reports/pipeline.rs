use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{
    read_corpus, write_corpus_to, Abbreviations, AliasMap, Corpus, DateResolver, RawNote,
};
use crate::diagnostics::{
    anisotropy_profile, chi_square_uniformity, cross_corpus_convergence, default_sample_points,
    prefix_trace, text_stream, write_convergence, write_histogram, write_trace as write_diag_trace,
    FATHER_BROWN, LEAVES_OF_GRASS,
};
use crate::embedding::{load_contextual_vectors, Backend, EmbeddingTable};
use crate::issue_query::{
    assignment_map, combine_modes, expand_query, load_issue_specs, write_expansion_report,
    write_triggers, ExpandedQuery, IssueAssignment, MatchMode,
};
use crate::party_distance::{
    activity_counts, periods, write_activity, write_distance_report, write_pairwise, Assignments,
    BucketBounds, DistanceError, DistanceOptions, GroupBy, PartyAnalyzer, ALL_ISSUES,
};
use crate::text::Stopwords;
use crate::topic::{
    assign_topics, build_tfidf, fit_nmf, membership_map, read_labels, topic_name, write_keywords,
    write_representatives, write_summary, write_trace, TopicModel,
};

use super::charts::{render_reports, unique_slugs};
use super::config::{ConfigError, IssueSource, PipelineConfig};
use super::ReportError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stage `{stage}` failed: {message}")]
    Stage {
        stage: &'static str,
        message: String,
    },
    #[error("cannot write run directory: {0}")]
    Io(#[from] std::io::Error),
}

/// Collects every file of a run so that the manifest can list and hash it.
pub struct RunWriter {
    root: PathBuf,
    outputs: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunWriter {
    pub fn new(root: impl Into<PathBuf>) -> std::io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(RunWriter {
            root,
            outputs: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> std::io::Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.outputs.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Runs a writer function into memory, then stores the bytes.
    pub fn write_with<E: std::fmt::Display>(
        &mut self,
        rel: &str,
        f: impl FnOnce(&mut Vec<u8>) -> Result<(), E>,
    ) -> Result<(), String> {
        let mut buf = Vec::new();
        f(&mut buf).map_err(|e| e.to_string())?;
        self.write(rel, &buf).map_err(|e| e.to_string())
    }

    pub fn outputs(&self) -> &BTreeMap<String, String> {
        &self.outputs
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StageRecord {
    pub stage: String,
    pub status: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub complete: bool,
    pub backend: Option<String>,
    pub config: PipelineConfig,
    pub inputs: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub outputs: Vec<String>,
    pub stages: Vec<StageRecord>,
}

fn hash_file(path: &Path) -> std::io::Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Note files named by the config: files as given, directories expanded to
/// their regular files in name order.
pub fn note_files(paths: &[PathBuf]) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn input_hashes(cfg: &PipelineConfig) -> std::io::Result<BTreeMap<String, String>> {
    let p = &cfg.paths;
    let mut files: Vec<PathBuf> = note_files(&p.notes)?;
    for f in [
        &p.corpus,
        &p.embeddings,
        &p.contextual_vectors,
        &p.issues,
        &p.labels,
        &p.stopwords,
        &p.aliases,
        &p.abbreviations,
        &p.date_overrides,
        &p.allow_list,
        &p.diagnostics_a,
        &p.diagnostics_b,
    ]
    .into_iter()
    .flatten()
    {
        files.push(f.clone());
    }
    files
        .into_iter()
        .map(|f| Ok((f.display().to_string(), hash_file(&f)?)))
        .collect()
}

/// Builds the corpus from the configured corpus file or raw notes.
pub fn load_corpus(cfg: &PipelineConfig) -> Result<Corpus, String> {
    let p = &cfg.paths;
    if let Some(c) = &p.corpus {
        return read_corpus(c).map_err(|e| e.to_string());
    }
    let mut dates = DateResolver::new(&cfg.ingest.date_pattern).map_err(|e| e.to_string())?;
    if let Some(o) = &p.date_overrides {
        dates = dates.load_overrides(o).map_err(|e| e.to_string())?;
    }
    let aliases = match &p.aliases {
        Some(a) => AliasMap::load(a).map_err(|e| e.to_string())?,
        None => AliasMap::default(),
    };
    let abbreviations = match &p.abbreviations {
        Some(a) => Abbreviations::load(a).map_err(|e| e.to_string())?,
        None => Abbreviations::default(),
    };
    let notes = note_files(&p.notes)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|f| RawNote::from_file(f, &dates))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    Corpus::from_notes(&notes, aliases, abbreviations, &cfg.ingest.style).map_err(|e| e.to_string())
}

pub fn load_stopwords(cfg: &PipelineConfig) -> Result<Stopwords, String> {
    match &cfg.paths.stopwords {
        Some(p) => Stopwords::load(p).map_err(|e| format!("{}: {e}", p.display())),
        None => Ok(Stopwords::english()),
    }
}

type StageResult<T> = Result<T, PipelineError>;

fn stage_err(stage: &'static str) -> impl Fn(String) -> PipelineError {
    move |message| PipelineError::Stage { stage, message }
}

fn required<'p>(p: &'p Option<PathBuf>, key: &'static str) -> Result<&'p PathBuf, ConfigError> {
    let path = p.as_ref().ok_or(ConfigError::MissingPath(key))?;
    if !path.exists() {
        return Err(ConfigError::NotFound {
            key,
            path: path.clone(),
        });
    }
    Ok(path)
}

/// Stage runner over one output directory. Each public stage writes its own
/// outputs; inputs it depends on are computed on demand and cached, without
/// writing the upstream stage's files.
pub struct Stages<'c> {
    cfg: &'c PipelineConfig,
    writer: RunWriter,
    records: Vec<StageRecord>,
    backend: Option<String>,
    stopwords: Option<Stopwords>,
    corpus: Option<Corpus>,
    table: Option<EmbeddingTable>,
    queries: Option<Vec<ExpandedQuery>>,
    predefined: Option<Vec<IssueAssignment>>,
    topics: Option<(TopicModel, Assignments)>,
}

impl<'c> Stages<'c> {
    pub fn new(cfg: &'c PipelineConfig, output: &Path) -> std::io::Result<Self> {
        Ok(Stages {
            cfg,
            writer: RunWriter::new(output)?,
            records: Vec::new(),
            backend: None,
            stopwords: None,
            corpus: None,
            table: None,
            queries: None,
            predefined: None,
            topics: None,
        })
    }

    pub fn records(&self) -> &[StageRecord] {
        &self.records
    }

    pub fn writer(&self) -> &RunWriter {
        &self.writer
    }

    fn ok(&mut self, stage: &str, notes: Vec<String>) {
        self.records.push(StageRecord {
            stage: stage.into(),
            status: "ok".into(),
            notes,
        });
    }

    fn write_with<E: std::fmt::Display>(
        &mut self,
        stage: &'static str,
        rel: &str,
        f: impl FnOnce(&mut Vec<u8>) -> Result<(), E>,
    ) -> StageResult<()> {
        self.writer.write_with(rel, f).map_err(stage_err(stage))
    }

    fn ensure_stopwords(&mut self) -> StageResult<()> {
        if self.stopwords.is_none() {
            self.stopwords = Some(load_stopwords(self.cfg).map_err(stage_err("ingest"))?);
        }
        Ok(())
    }

    fn ensure_corpus(&mut self) -> StageResult<()> {
        if self.corpus.is_none() {
            let p = &self.cfg.paths;
            if p.corpus.is_none() && p.notes.is_empty() {
                return Err(ConfigError::MissingPath("corpus").into());
            }
            if let Some(c) = &p.corpus {
                required(&Some(c.clone()), "corpus")?;
            }
            for n in &p.notes {
                if !n.exists() {
                    return Err(ConfigError::NotFound {
                        key: "notes",
                        path: n.clone(),
                    }
                    .into());
                }
            }
            let corpus = load_corpus(self.cfg).map_err(stage_err("ingest"))?;
            if corpus.is_empty() {
                return Err(stage_err("ingest")("corpus has no comments".into()));
            }
            self.corpus = Some(corpus);
        }
        Ok(())
    }

    fn ensure_table(&mut self) -> StageResult<()> {
        if self.table.is_none() {
            let path = required(&self.cfg.paths.embeddings, "embeddings")?;
            self.table =
                Some(EmbeddingTable::load(path).map_err(|e| stage_err("expand")(e.to_string()))?);
        }
        Ok(())
    }

    fn ensure_queries(&mut self) -> StageResult<Vec<String>> {
        let mut notes = Vec::new();
        if self.queries.is_none() {
            self.cfg
                .query
                .params()
                .validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            let issues = required(&self.cfg.paths.issues, "issues")?.clone();
            self.ensure_table()?;
            let err = |e: crate::issue_query::QueryError| stage_err("expand")(e.to_string());
            let specs = load_issue_specs(&issues).map_err(err)?;
            let table = self.table.as_ref().expect("loaded");
            let params = self.cfg.query.params();
            let mut queries = Vec::new();
            for spec in &specs {
                let q = expand_query(table, spec, &params).map_err(err)?;
                if !q.skipped_seeds.is_empty() {
                    notes.push(format!(
                        "{}: skipped seeds {}",
                        q.issue_name,
                        q.skipped_seeds.join(", ")
                    ));
                }
                queries.push(q);
            }
            self.queries = Some(queries);
        }
        Ok(notes)
    }

    fn ensure_predefined(&mut self) -> StageResult<()> {
        if self.predefined.is_none() {
            self.ensure_queries()?;
            self.ensure_corpus()?;
            self.ensure_stopwords()?;
            let classifier = combine_modes(
                self.queries.as_ref().expect("expanded"),
                self.cfg.query.mode,
                self.stopwords.as_ref().expect("loaded"),
            );
            self.predefined = Some(classifier.classify(self.corpus.as_ref().expect("loaded")));
        }
        Ok(())
    }

    fn ensure_topics(&mut self) -> StageResult<()> {
        if self.topics.is_none() {
            let cfg = self.cfg;
            cfg.topics
                .validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            self.ensure_corpus()?;
            self.ensure_stopwords()?;
            let err = stage_err("topics");
            let allow: Option<HashSet<String>> = match &cfg.paths.allow_list {
                Some(p) => Some(
                    fs::read_to_string(p)
                        .map_err(|e| err(format!("{}: {e}", p.display())))?
                        .lines()
                        .map(|l| l.trim().to_lowercase())
                        .filter(|l| !l.is_empty())
                        .collect(),
                ),
                None => None,
            };
            let corpus = self.corpus.as_ref().expect("loaded");
            let stopwords = self.stopwords.as_ref().expect("loaded");
            let tfidf = build_tfidf(corpus, &cfg.topics, stopwords, allow.as_ref())
                .map_err(|e| err(e.to_string()))?;
            let model = fit_nmf(&tfidf, &cfg.topics).map_err(|e| err(e.to_string()))?;
            let latent = membership_map(&assign_topics(&model, cfg.topics.membership_threshold));
            self.topics = Some((model, latent));
        }
        Ok(())
    }

    fn issue_names(&self) -> Vec<String> {
        self.queries
            .as_ref()
            .map(|qs| qs.iter().map(|q| q.issue_name.clone()).collect())
            .unwrap_or_default()
    }

    fn topic_names(&self) -> Vec<String> {
        self.topics
            .as_ref()
            .map(|(m, _)| (0..m.n_topics()).map(topic_name).collect())
            .unwrap_or_default()
    }

    fn parties(&self) -> Vec<String> {
        if self.cfg.distance.parties.is_empty() {
            self.corpus
                .as_ref()
                .map(Corpus::parties)
                .unwrap_or_default()
        } else {
            self.cfg.distance.parties.clone()
        }
    }

    /// Writes `corpus.csv`.
    pub fn ingest(&mut self) -> StageResult<()> {
        self.ensure_corpus()?;
        let corpus = self.corpus.take().expect("loaded");
        let res = self.write_with("ingest", "corpus.csv", |b| write_corpus_to(&corpus, b, &[]));
        let note = format!("{} comments, {} words", corpus.len(), corpus.total_words());
        self.corpus = Some(corpus);
        res?;
        self.ok("ingest", vec![note]);
        Ok(())
    }

    /// Writes `expansion.csv`.
    pub fn expand(&mut self) -> StageResult<()> {
        let notes = self.ensure_queries()?;
        let queries = self.queries.take().expect("expanded");
        let res = self.write_with("expand", "expansion.csv", |b| {
            write_expansion_report(b, &queries)
        });
        self.queries = Some(queries);
        res?;
        self.ok("expand", notes);
        Ok(())
    }

    /// Writes `triggers.csv` in per-term mode. The augmented corpus is
    /// written by [`Stages::augment`].
    pub fn classify(&mut self) -> StageResult<()> {
        self.ensure_predefined()?;
        let assignments = self.predefined.take().expect("classified");
        let tagged = assignments
            .iter()
            .filter(|a| !a.issue_names.is_empty())
            .count();
        let res = if self.cfg.query.mode == MatchMode::PerTerm {
            self.write_with("classify", "triggers.csv", |b| {
                write_triggers(b, &assignments)
            })
        } else {
            Ok(())
        };
        self.predefined = Some(assignments);
        res?;
        self.ok("classify", vec![format!("{tagged} comments tagged")]);
        Ok(())
    }

    /// Writes `topics/{keywords,summary,representatives}.csv` and the
    /// objective trace.
    pub fn topics(&mut self) -> StageResult<()> {
        self.ensure_topics()?;
        let cfg = self.cfg;
        let err = stage_err("topics");
        let labels = match &cfg.paths.labels {
            Some(p) => {
                let f = fs::File::open(p).map_err(|e| err(format!("{}: {e}", p.display())))?;
                read_labels(f).map_err(|e| err(e.to_string()))?
            }
            None => BTreeMap::new(),
        };
        let (model, _) = self.topics.as_ref().expect("fitted");
        let corpus = self.corpus.as_ref().expect("loaded");
        let w = &mut self.writer;
        w.write_with("topics/keywords.csv", |b| write_keywords(b, model))
            .map_err(&err)?;
        w.write_with("topics/summary.csv", |b| write_summary(b, model, &labels))
            .map_err(&err)?;
        w.write_with("topics/representatives.csv", |b| {
            write_representatives(b, model, corpus, cfg.topics.n_representatives)
        })
        .map_err(&err)?;
        w.write_with("topics/objective.txt", |b| {
            write_trace(b, &model.objective_trace)
        })
        .map_err(&err)?;
        let mut notes = vec![format!(
            "{} documents x {} terms, {} sweeps",
            model.w.nrows(),
            model.terms.len(),
            model.sweeps()
        )];
        if !model.deficient_topics.is_empty() {
            notes.push(format!(
                "rank-deficient factors {:?}",
                model.deficient_topics
            ));
        }
        self.ok("topics", notes);
        Ok(())
    }

    /// Writes `corpus_augmented.csv` with the `issues` column, plus
    /// `latent_issues` when `with_latent` is set.
    pub fn augment(&mut self, with_latent: bool) -> StageResult<()> {
        self.ensure_predefined()?;
        if with_latent {
            self.ensure_topics()?;
        }
        let predefined = assignment_map(self.predefined.as_ref().expect("classified"));
        let corpus = self.corpus.as_ref().expect("loaded");
        let mut extra: Vec<(&str, &Assignments)> = vec![("issues", &predefined)];
        if let Some((_, latent)) = self.topics.as_ref().filter(|_| with_latent) {
            extra.push(("latent_issues", latent));
        }
        self.writer
            .write_with("corpus_augmented.csv", |b| {
                write_corpus_to(corpus, b, &extra)
            })
            .map_err(stage_err("classify"))
    }

    /// Writes the four `activity_*.csv` tables. Topic activity is included
    /// when `with_topics` is set.
    pub fn activity(&mut self, with_topics: bool) -> StageResult<()> {
        self.ensure_predefined()?;
        if with_topics {
            self.ensure_topics()?;
        }
        let predefined = assignment_map(self.predefined.as_ref().expect("classified"));
        let issue_names = self.issue_names();
        let topic_names = self.topic_names();
        let parties = self.parties();
        let bucketing = self.cfg.distance.bucketing;
        let corpus = self.corpus.as_ref().expect("loaded");
        let mut tables = vec![
            (
                "activity_issue.csv",
                &predefined,
                &issue_names,
                GroupBy::Issue,
            ),
            (
                "activity_issue_party.csv",
                &predefined,
                &issue_names,
                GroupBy::IssueParty,
            ),
            (
                "activity_issue_period.csv",
                &predefined,
                &issue_names,
                GroupBy::IssuePeriod(bucketing),
            ),
        ];
        if let Some((_, latent)) = self.topics.as_ref().filter(|_| with_topics) {
            tables.push(("activity_topics.csv", latent, &topic_names, GroupBy::Issue));
        }
        for (name, asg, issues, group) in tables {
            let party_axis = (group == GroupBy::IssueParty).then_some(parties.as_slice());
            let counts = activity_counts(corpus, asg, issues, party_axis, group);
            self.writer
                .write_with(name, |b| write_activity(b, &counts))
                .map_err(stage_err("activity"))?;
        }
        self.ok("activity", vec![]);
        Ok(())
    }

    /// Writes `distances.csv` and one `pairwise/<issue>_<period>.csv` per
    /// issue and period with a position for every party.
    pub fn distances(&mut self) -> StageResult<()> {
        let cfg = self.cfg;
        if let Some(u) = cfg.distance.uncertainty_params() {
            u.validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        let bounds = match cfg.distance.heatmap_bounds {
            Some(b) => Some(BucketBounds::new(b).map_err(|e| ConfigError::Invalid(e.to_string()))?),
            None => None,
        };
        self.ensure_stopwords()?;
        self.ensure_corpus()?;
        let contextual = match &cfg.paths.contextual_vectors {
            Some(p) => Some(
                load_contextual_vectors(p).map_err(|e| stage_err("distances")(e.to_string()))?,
            ),
            None => None,
        };
        if contextual.is_none() {
            self.ensure_table()?;
        }
        let source = cfg.distance.issue_source;
        let needs_issues =
            cfg.distance.issues.iter().any(|i| i != ALL_ISSUES) || cfg.distance.issues.is_empty();
        if needs_issues {
            match source {
                IssueSource::Predefined => self.ensure_predefined()?,
                IssueSource::Latent => self.ensure_topics()?,
            }
        }
        let predefined = self
            .predefined
            .as_deref()
            .map(assignment_map)
            .unwrap_or_default();
        let issue_assignments: &Assignments = match source {
            IssueSource::Latent => self.topics.as_ref().map(|t| &t.1).unwrap_or(&predefined),
            IssueSource::Predefined => &predefined,
        };
        let distance_issues = if cfg.distance.issues.is_empty() {
            let mut v = vec![ALL_ISSUES.to_string()];
            v.extend(match source {
                IssueSource::Predefined => self.issue_names(),
                IssueSource::Latent => self.topic_names(),
            });
            v
        } else {
            cfg.distance.issues.clone()
        };
        let parties = self.parties();
        let stopwords = self.stopwords.as_ref().expect("loaded");
        let corpus = self.corpus.as_ref().expect("loaded");
        let backend = match &contextual {
            Some(vectors) => Backend::Contextual { vectors, stopwords },
            None => Backend::Static {
                table: self.table.as_ref().expect("loaded"),
                stopwords,
                options: cfg.embedding,
            },
        };
        self.backend = Some(backend.tag());
        let err = stage_err("distances");
        let analyzer = PartyAnalyzer::new(corpus, backend, Some(issue_assignments))
            .map_err(|e| err(e.to_string()))?
            .with_weighting(cfg.distance.weighting);
        let period_list = periods(corpus, cfg.distance.bucketing);
        let options = DistanceOptions {
            reference: cfg.distance.reference.clone(),
            include_baseline: cfg.distance.include_baseline,
            uncertainty: cfg.distance.uncertainty_params(),
        };
        let report = analyzer
            .distance_lines(&parties, &distance_issues, &period_list, &options)
            .map_err(|e| err(e.to_string()))?;
        let w = &mut self.writer;
        w.write_with("distances.csv", |b| write_distance_report(b, &report))
            .map_err(&err)?;
        let gaps = report
            .entries
            .iter()
            .filter(|e| e.similarity.is_none())
            .count();
        let mut notes = vec![format!("{} points, {gaps} gaps", report.entries.len())];

        let slugs = unique_slugs(distance_issues.iter().map(String::as_str));
        for (issue, s) in distance_issues.iter().zip(&slugs) {
            for &period in &period_list {
                match analyzer.pairwise_matrix(&parties, issue, period, bounds) {
                    Ok(m) => {
                        w.write_with(&format!("pairwise/{s}_{period}.csv"), |b| {
                            write_pairwise(b, &m)
                        })
                        .map_err(&err)?;
                    }
                    Err(DistanceError::NoPosition { party, .. }) => {
                        notes.push(format!(
                            "no heatmap for {issue} / {period}: {party} has no position"
                        ));
                    }
                    Err(DistanceError::Embedding(e)) => {
                        notes.push(format!("no heatmap for {issue} / {period}: {e}"));
                    }
                    Err(e) => return Err(err(e.to_string())),
                }
            }
        }
        self.ok("distances", notes);
        Ok(())
    }

    /// Writes `diagnostics/{anisotropy,trace_a,trace_b,convergence}.csv`.
    pub fn diagnostics(&mut self) -> StageResult<()> {
        self.ensure_table()?;
        let cfg = self.cfg;
        let err = stage_err("diagnostics");
        let table = self.table.as_ref().expect("loaded");
        let profile = anisotropy_profile(table).map_err(|e| err(e.to_string()))?;
        let chi = chi_square_uniformity(&profile);
        let w = &mut self.writer;
        w.write_with("diagnostics/anisotropy.csv", |b| {
            write_histogram(b, &profile)
        })
        .map_err(&err)?;
        let read = |p: &Option<PathBuf>, fallback: &str| -> Result<String, String> {
            match p {
                Some(p) => fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display())),
                None => Ok(fallback.to_string()),
            }
        };
        let a = text_stream(&read(&cfg.paths.diagnostics_a, FATHER_BROWN).map_err(&err)?);
        let b = text_stream(&read(&cfg.paths.diagnostics_b, LEAVES_OF_GRASS).map_err(&err)?);
        let points = default_sample_points(cfg.diagnostics.max_n);
        let mut notes = vec![format!(
            "chi-square {:.3} on {} df, 99th percentile {:.3}",
            chi.statistic, chi.degrees_of_freedom, chi.critical_99
        )];
        for (name, stream) in [("trace_a", &a), ("trace_b", &b)] {
            match prefix_trace(table, stream, &points, false) {
                Ok(t) => w
                    .write_with(&format!("diagnostics/{name}.csv"), |buf| {
                        write_diag_trace(buf, &t)
                    })
                    .map_err(&err)?,
                Err(e) => notes.push(format!("{name}: {e}")),
            }
        }
        match cross_corpus_convergence(table, &a, &b, &points) {
            Ok(c) => w
                .write_with("diagnostics/convergence.csv", |buf| {
                    write_convergence(buf, &c)
                })
                .map_err(&err)?,
            Err(e) => notes.push(format!("convergence: {e}")),
        }
        self.ok("diagnostics", notes);
        Ok(())
    }

    /// Renders the charts for whatever reports are in the output directory.
    pub fn report(&mut self) -> StageResult<()> {
        let charts =
            render_reports(self.writer.root()).map_err(|e| stage_err("report")(e.to_string()))?;
        for (rel, svg) in &charts {
            self.writer
                .write(rel, svg.as_bytes())
                .map_err(|e| stage_err("report")(e.to_string()))?;
        }
        self.ok("report", vec![format!("{} charts", charts.len())]);
        Ok(())
    }

    fn run_all(&mut self) -> StageResult<()> {
        self.ingest()?;
        self.expand()?;
        self.classify()?;
        self.topics()?;
        self.augment(true)?;
        self.activity(true)?;
        self.distances()?;
        if self.cfg.diagnostics.enabled {
            self.diagnostics()?;
        } else {
            self.records.push(StageRecord {
                stage: "diagnostics".into(),
                status: "skipped".into(),
                notes: vec![],
            });
        }
        self.report()
    }
}

/// Runs every stage and writes the run directory with its `manifest.json`.
/// On a stage failure the manifest is still written, marked incomplete, and
/// the error names the stage.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    cfg.validate_for_run()?;
    let inputs = input_hashes(cfg)?;
    let output = cfg.paths.output.clone().expect("validated");
    let mut run = Stages::new(cfg, &output)?;
    let result = run.run_all();
    if let Err(e) = &result {
        let stage = match e {
            PipelineError::Stage { stage, .. } => stage,
            _ => "config",
        };
        run.records.push(StageRecord {
            stage: stage.to_string(),
            status: "failed".into(),
            notes: vec![e.to_string()],
        });
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        complete: result.is_ok(),
        backend: run.backend.clone(),
        config: cfg.clone(),
        inputs,
        stages: run.records.clone(),
        outputs: run.writer.outputs().clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    fs::write(output.join("manifest.json"), json + "\n")?;
    result?;
    Ok(RunSummary {
        output_dir: output,
        outputs: run.writer.outputs().keys().cloned().collect(),
        stages: run.records,
    })
}

/// Writes the charts for an existing run directory.
pub fn write_reports(dir: &Path) -> Result<Vec<String>, ReportError> {
    let charts = render_reports(dir)?;
    let mut names = Vec::new();
    for (rel, svg) in charts {
        let path = dir.join(&rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, svg)?;
        names.push(rel);
    }
    Ok(names)
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DateResolver, NoteStyle};
use crate::embedding::EmbedOptions;
use crate::issue_query::{ExpansionParams, MatchMode};
use crate::party_distance::{Bucketing, ReferenceKind, UncertaintyParams, Weighting};
use crate::topic::NmfConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("missing required path `paths.{0}`")]
    MissingPath(&'static str),
    #[error("`paths.{key}` does not exist: {path}")]
    NotFound { key: &'static str, path: PathBuf },
    #[error("{0}")]
    Invalid(String),
}

/// Input and output locations. Relative paths are taken from the directory
/// of the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Raw note files or directories of them; used when `corpus` is unset.
    pub notes: Vec<PathBuf>,
    /// A cleaned corpus CSV to start from.
    pub corpus: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub contextual_vectors: Option<PathBuf>,
    pub issues: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub aliases: Option<PathBuf>,
    pub abbreviations: Option<PathBuf>,
    pub date_overrides: Option<PathBuf>,
    /// Optional vocabulary allow-list for the topic model, one term per line.
    pub allow_list: Option<PathBuf>,
    pub diagnostics_a: Option<PathBuf>,
    pub diagnostics_b: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub date_pattern: String,
    pub style: NoteStyle,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            date_pattern: DateResolver::DEFAULT_PATTERN.to_string(),
            style: NoteStyle::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueryConfig {
    pub base_sim: f64,
    pub max_sim: f64,
    pub step: f64,
    pub overflow_count: usize,
    pub mode: MatchMode,
}

impl Default for QueryConfig {
    fn default() -> Self {
        let p = ExpansionParams::default();
        QueryConfig {
            base_sim: p.base_sim,
            max_sim: p.max_sim,
            step: p.step,
            overflow_count: p.overflow_count,
            mode: MatchMode::default(),
        }
    }
}

impl QueryConfig {
    pub fn params(&self) -> ExpansionParams {
        ExpansionParams {
            base_sim: self.base_sim,
            max_sim: self.max_sim,
            step: self.step,
            overflow_count: self.overflow_count,
        }
    }
}

/// Which assignments drive per-issue distances and activity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IssueSource {
    #[default]
    Predefined,
    Latent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistanceConfig {
    /// Parties to compare; empty means every party in the corpus.
    pub parties: Vec<String>,
    pub issue_source: IssueSource,
    /// Issues to report; empty means all of the chosen source, plus `all`.
    pub issues: Vec<String>,
    pub bucketing: Bucketing,
    pub reference: ReferenceKind,
    pub include_baseline: bool,
    pub weighting: Weighting,
    pub uncertainty: bool,
    pub fraction: f64,
    pub n_resamples: usize,
    pub seed: u64,
    /// Fixed heatmap class edges (descending); unset means equal-width bins
    /// over each matrix's observed range.
    pub heatmap_bounds: Option<[f64; 3]>,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        let u = UncertaintyParams::default();
        DistanceConfig {
            parties: Vec::new(),
            issue_source: IssueSource::Predefined,
            issues: Vec::new(),
            bucketing: Bucketing::Year,
            reference: ReferenceKind::Average,
            include_baseline: true,
            weighting: Weighting::Tokens,
            uncertainty: true,
            fraction: u.fraction,
            n_resamples: u.n_resamples,
            seed: u.seed,
            heatmap_bounds: None,
        }
    }
}

impl DistanceConfig {
    pub fn uncertainty_params(&self) -> Option<UncertaintyParams> {
        self.uncertainty.then(|| UncertaintyParams {
            fraction: self.fraction,
            n_resamples: self.n_resamples,
            seed: self.seed,
            ..UncertaintyParams::default()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub enabled: bool,
    /// Largest prefix length sampled.
    pub max_n: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            enabled: true,
            max_n: 5000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub ingest: IngestConfig,
    pub query: QueryConfig,
    pub topics: NmfConfig,
    pub embedding: EmbedOptions,
    pub distance: DistanceConfig,
    pub diagnostics: DiagnosticsConfig,
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Loads a TOML config, or the `config` entry of a run manifest (`.json`),
    /// with relative paths resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = if path.extension().is_some_and(|e| e == "json") {
            let value: serde_json::Value = serde_json::from_str(&text)?;
            let inner = value.get("config").cloned().unwrap_or(value);
            serde_json::from_value(inner)?
        } else {
            Self::from_toml(&text)?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        p.notes.iter_mut().for_each(|n| rebase(base, n));
        for opt in [
            &mut p.corpus,
            &mut p.embeddings,
            &mut p.contextual_vectors,
            &mut p.issues,
            &mut p.labels,
            &mut p.stopwords,
            &mut p.aliases,
            &mut p.abbreviations,
            &mut p.date_overrides,
            &mut p.allow_list,
            &mut p.diagnostics_a,
            &mut p.diagnostics_b,
            &mut p.output,
        ] {
            if let Some(path) = opt.as_mut() {
                rebase(base, path);
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Checks everything a full run needs before any work starts.
    pub fn validate_for_run(&self) -> Result<(), ConfigError> {
        let p = &self.paths;
        let embeddings = p
            .embeddings
            .as_ref()
            .ok_or(ConfigError::MissingPath("embeddings"))?;
        let issues = p
            .issues
            .as_ref()
            .ok_or(ConfigError::MissingPath("issues"))?;
        p.output
            .as_ref()
            .ok_or(ConfigError::MissingPath("output"))?;
        if p.corpus.is_none() && p.notes.is_empty() {
            return Err(ConfigError::MissingPath("corpus"));
        }
        let mut must_exist: Vec<(&'static str, &PathBuf)> =
            vec![("embeddings", embeddings), ("issues", issues)];
        must_exist.extend(p.corpus.as_ref().map(|c| ("corpus", c)));
        must_exist.extend(p.notes.iter().map(|n| ("notes", n)));
        for (key, opt) in [
            ("contextual_vectors", &p.contextual_vectors),
            ("labels", &p.labels),
            ("stopwords", &p.stopwords),
            ("aliases", &p.aliases),
            ("abbreviations", &p.abbreviations),
            ("date_overrides", &p.date_overrides),
            ("allow_list", &p.allow_list),
            ("diagnostics_a", &p.diagnostics_a),
            ("diagnostics_b", &p.diagnostics_b),
        ] {
            must_exist.extend(opt.as_ref().map(|v| (key, v)));
        }
        for (key, path) in must_exist {
            if !path.exists() {
                return Err(ConfigError::NotFound {
                    key,
                    path: path.clone(),
                });
            }
        }
        self.query
            .params()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.topics
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Some(u) = self.distance.uncertainty_params() {
            u.validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if let Some(b) = self.distance.heatmap_bounds {
            crate::party_distance::BucketBounds::new(b)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if self.embedding.chunk_limit == 0 {
            return Err(ConfigError::Invalid(
                "embedding.chunk_limit must be positive".into(),
            ));
        }
        Ok(())
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use parley_core::reports::{write_reports, ConfigError, PipelineConfig, PipelineError, Stages};

/// Mediation-dialogue analysis: ingest session notes, extract issues, fit
/// topics and measure party distances.
#[derive(Debug, Parser)]
#[command(name = "parley", version, propagate_version = true)]
struct Cli {
    /// TOML config file, or a run's manifest.json to replay its settings.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override any config key, e.g. `--set topics.n_topics=12`. Values are
    /// read as TOML and fall back to plain strings.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(flatten)]
    paths: PathFlags,

    /// More logging (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

/// Flags for the `paths` table, one per key.
#[derive(Debug, Args)]
struct PathFlags {
    /// Note file or directory of note files (repeatable).
    #[arg(long, global = true)]
    notes: Vec<PathBuf>,
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    embeddings: Option<PathBuf>,
    #[arg(long, global = true)]
    contextual_vectors: Option<PathBuf>,
    #[arg(long, global = true)]
    issues: Option<PathBuf>,
    #[arg(long, global = true)]
    labels: Option<PathBuf>,
    #[arg(long, global = true)]
    stopwords: Option<PathBuf>,
    #[arg(long, global = true)]
    aliases: Option<PathBuf>,
    #[arg(long, global = true)]
    abbreviations: Option<PathBuf>,
    #[arg(long, global = true)]
    date_overrides: Option<PathBuf>,
    #[arg(long, global = true)]
    allow_list: Option<PathBuf>,
    #[arg(long, global = true)]
    diagnostics_a: Option<PathBuf>,
    #[arg(long, global = true)]
    diagnostics_b: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Engine {
    Nmf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse notes into the cleaned comment table (corpus.csv).
    Ingest,
    /// Expand issue seeds through the embedding table (expansion.csv).
    Expand,
    /// Tag comments with predefined issues (corpus_augmented.csv).
    Classify,
    /// Fit the latent-issue topic model (topics/).
    Topics {
        #[arg(long, value_enum, default_value = "nmf")]
        engine: Engine,
    },
    /// Party similarity lines and pairwise matrices.
    Distances,
    /// Word and comment counts per issue, party and period.
    Activity {
        /// Also count words per latent topic.
        #[arg(long)]
        latent: bool,
    },
    /// Embedding-space diagnostics (diagnostics/).
    Diagnose,
    /// Render SVG charts for the CSV reports in a run directory.
    Report {
        /// Run directory; defaults to the configured output.
        dir: Option<PathBuf>,
    },
    /// Every stage, with a manifest.
    Run,
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::NotFound { .. } => Failure::Data(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(c) => c.into(),
            other => Failure::Data(other.to_string()),
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_key(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), Failure> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Failure::Usage(format!("bad config key `{key}`")));
    }
    let (last, parents) = parts.split_last().expect("non-empty");
    let mut table = root;
    for p in parents {
        table = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Failure::Usage(format!("`{p}` in `{key}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn path_value(p: &Path) -> toml::Value {
    let abs = std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf());
    toml::Value::String(abs.display().to_string())
}

/// The config file (if any) with flag overrides applied on top.
fn build_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    let base = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let mut table = toml::Table::try_from(&base).map_err(|e| Failure::Usage(e.to_string()))?;
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("`--set {o}`: expected KEY=VALUE")))?;
        set_key(&mut table, k.trim(), parse_value(v.trim()))?;
    }
    let f = &cli.paths;
    if !f.notes.is_empty() {
        let notes = f.notes.iter().map(|p| path_value(p)).collect();
        set_key(&mut table, "paths.notes", toml::Value::Array(notes))?;
    }
    for (key, value) in [
        ("corpus", &f.corpus),
        ("embeddings", &f.embeddings),
        ("contextual_vectors", &f.contextual_vectors),
        ("issues", &f.issues),
        ("labels", &f.labels),
        ("stopwords", &f.stopwords),
        ("aliases", &f.aliases),
        ("abbreviations", &f.abbreviations),
        ("date_overrides", &f.date_overrides),
        ("allow_list", &f.allow_list),
        ("diagnostics_a", &f.diagnostics_a),
        ("diagnostics_b", &f.diagnostics_b),
        ("output", &f.output),
    ] {
        if let Some(p) = value {
            set_key(&mut table, &format!("paths.{key}"), path_value(p))?;
        }
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Failure::Usage(format!("invalid config: {e}")))
}

fn output_dir(cfg: &PipelineConfig) -> Result<PathBuf, Failure> {
    cfg.paths
        .output
        .clone()
        .ok_or_else(|| ConfigError::MissingPath("output").into())
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let cfg = build_config(cli)?;
    if let Command::Run = cli.command {
        let summary = parley_core::reports::run_pipeline(&cfg)?;
        for s in &summary.stages {
            info!("{}: {} {}", s.stage, s.status, s.notes.join("; "));
        }
        println!("{}", summary.output_dir.join("manifest.json").display());
        return Ok(());
    }
    if let Command::Report { dir } = &cli.command {
        let dir = match dir {
            Some(d) => d.clone(),
            None => output_dir(&cfg)?,
        };
        if !dir.is_dir() {
            return Err(Failure::Data(format!("not a directory: {}", dir.display())));
        }
        for name in write_reports(&dir).map_err(|e| Failure::Data(e.to_string()))? {
            println!("{}", dir.join(name).display());
        }
        return Ok(());
    }

    let out = output_dir(&cfg)?;
    let mut stages =
        Stages::new(&cfg, &out).map_err(|e| Failure::Data(format!("{}: {e}", out.display())))?;
    match &cli.command {
        Command::Ingest => stages.ingest()?,
        Command::Expand => stages.expand()?,
        Command::Classify => {
            stages.classify()?;
            stages.augment(false)?;
        }
        Command::Topics {
            engine: Engine::Nmf,
        } => stages.topics()?,
        Command::Distances => stages.distances()?,
        Command::Activity { latent } => stages.activity(*latent)?,
        Command::Diagnose => stages.diagnostics()?,
        Command::Report { .. } | Command::Run => unreachable!("handled above"),
    }
    for s in stages.records() {
        info!("{}: {} {}", s.stage, s.status, s.notes.join("; "));
    }
    for rel in stages.writer().outputs().keys() {
        println!("{}", out.join(rel).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

//! Session-note ingestion and the canonical comment table.
//!
//! Raw notes are plain text. A speaker turn starts on an unindented line
//! such as `- Party Rep. 1: problem is not the form.`; indented bullets
//! (` - For a ceremonial president.`) continue the current turn. The
//! grammar lives in [`NoteStyle`] so deployments with other note-taking
//! conventions only need a different configuration.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use log::{debug, warn};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::word_count;

/// Column order of the canonical corpus CSV.
pub const CORPUS_HEADER: [&str; 8] = [
    "comment_id",
    "text",
    "source_file",
    "year",
    "month",
    "participant_name",
    "participant_org",
    "multi_org",
];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{source_name}:{line}: unparseable line: {content:?}")]
    UnparseableLine {
        source_name: String,
        line: usize,
        content: String,
    },
    #[error("{0}: note body is empty")]
    EmptyBody(String),
    #[error("{source_name}: month {month} out of range 1-12")]
    InvalidMonth { source_name: String, month: u32 },
    #[error("{0}: no year/month in file name and no manifest override")]
    MissingDate(String),
    #[error("invalid pattern {pattern:?}: {source}")]
    InvalidPattern {
        pattern: String,
        #[source]
        source: regex::Error,
    },
    #[error("pattern {pattern:?} lacks named group {group:?}")]
    MissingGroup {
        pattern: String,
        group: &'static str,
    },
    #[error("alias chain: {variant:?} maps to {canonical:?}, which is itself a variant")]
    AliasChain { variant: String, canonical: String },
    #[error("row {row}, column {column}: {message}")]
    MalformedRow {
        row: u64,
        column: String,
        message: String,
    },
    #[error("unexpected header {found:?}")]
    BadHeader { found: Vec<String> },
    #[error("organisation name {0:?} contains the list separator ';'")]
    SeparatorInName(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl IngestError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, IngestError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawNote {
    pub source_name: String,
    pub session_year: i32,
    pub session_month: u32,
    pub body: String,
}

impl RawNote {
    pub fn new(
        source_name: impl Into<String>,
        session_year: i32,
        session_month: u32,
        body: impl Into<String>,
    ) -> Result<Self> {
        let source_name = source_name.into();
        let body = body.into();
        if body.trim().is_empty() {
            return Err(IngestError::EmptyBody(source_name));
        }
        if !(1..=12).contains(&session_month) {
            return Err(IngestError::InvalidMonth {
                source_name,
                month: session_month,
            });
        }
        Ok(RawNote {
            source_name,
            session_year,
            session_month,
            body,
        })
    }

    /// Reads a note file, taking the date from the manifest override if one
    /// exists and from the file name otherwise.
    pub fn from_file(path: &Path, dates: &DateResolver) -> Result<Self> {
        let body = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let (year, month) = dates.resolve(&name)?;
        RawNote::new(name, year, month, body)
    }
}

/// Year/month lookup for note files.
#[derive(Debug, Clone)]
pub struct DateResolver {
    pattern: Regex,
    overrides: BTreeMap<String, (i32, u32)>,
}

impl DateResolver {
    pub const DEFAULT_PATTERN: &'static str = r"(?P<year>\d{4})[-_.](?P<month>\d{1,2})(?:\D|$)";

    pub fn new(pattern: &str) -> Result<Self> {
        let re = compile(pattern)?;
        require_groups(&re, pattern, &["year", "month"])?;
        Ok(DateResolver {
            pattern: re,
            overrides: BTreeMap::new(),
        })
    }

    pub fn with_override(mut self, file: impl Into<String>, year: i32, month: u32) -> Self {
        self.overrides.insert(file.into(), (year, month));
        self
    }

    /// Loads overrides from a `file,year,month` CSV.
    pub fn load_overrides(mut self, path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i as u64 + 1;
            let field = |idx: usize, column: &str| {
                rec.get(idx)
                    .map(str::trim)
                    .ok_or_else(|| IngestError::MalformedRow {
                        row,
                        column: column.to_string(),
                        message: "missing field".into(),
                    })
            };
            let file = field(0, "file")?.to_string();
            let year = parse_field::<i32>(field(1, "year")?, row, "year")?;
            let month = parse_field::<u32>(field(2, "month")?, row, "month")?;
            self.overrides.insert(file, (year, month));
        }
        Ok(self)
    }

    pub fn resolve(&self, file_name: &str) -> Result<(i32, u32)> {
        if let Some(&date) = self.overrides.get(file_name) {
            return Ok(date);
        }
        let caps = self
            .pattern
            .captures(file_name)
            .ok_or_else(|| IngestError::MissingDate(file_name.to_string()))?;
        let year = caps["year"]
            .parse()
            .map_err(|_| IngestError::MissingDate(file_name.to_string()))?;
        let month = caps["month"]
            .parse()
            .map_err(|_| IngestError::MissingDate(file_name.to_string()))?;
        Ok((year, month))
    }
}

impl Default for DateResolver {
    fn default() -> Self {
        DateResolver::new(Self::DEFAULT_PATTERN).expect("default date pattern compiles")
    }
}

/// One participant utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comment {
    pub comment_id: u64,
    pub text: String,
    pub source_file: String,
    pub year: i32,
    pub month: u32,
    pub participant_name: String,
    pub participant_org: String,
    /// All parties sharing the statement; empty for single-party comments.
    pub multi_org: Vec<String>,
}

impl Comment {
    pub fn word_count(&self) -> usize {
        word_count(&self.text)
    }

    pub fn is_multi_org(&self) -> bool {
        !self.multi_org.is_empty()
    }

    /// True when `party` spoke this comment alone or as one of several parties.
    pub fn involves(&self, party: &str) -> bool {
        self.participant_org == party || self.multi_org.iter().any(|o| o == party)
    }
}

/// Variant spelling to canonical name. Canonical names are never variants,
/// so applying the map twice is the same as applying it once.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AliasMap {
    map: BTreeMap<String, String>,
}

impl AliasMap {
    pub fn new(pairs: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let map: BTreeMap<String, String> = pairs
            .into_iter()
            .map(|(v, c)| (v.trim().to_string(), c.trim().to_string()))
            .filter(|(v, c)| v != c)
            .collect();
        for (variant, canonical) in &map {
            if map.contains_key(canonical) {
                return Err(IngestError::AliasChain {
                    variant: variant.clone(),
                    canonical: canonical.clone(),
                });
            }
        }
        Ok(AliasMap { map })
    }

    /// Reads a two-column `variant,canonical` CSV.
    pub fn load(path: &Path) -> Result<Self> {
        Self::new(read_pairs(path)?)
    }

    pub fn canonical<'a>(&'a self, name: &'a str) -> &'a str {
        let name = name.trim();
        self.map.get(name).map(String::as_str).unwrap_or(name)
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn as_map(&self) -> &BTreeMap<String, String> {
        &self.map
    }
}

/// Whole-word abbreviation expansion.
#[derive(Debug, Clone, Default)]
pub struct Abbreviations {
    map: BTreeMap<String, String>,
    matcher: Option<Regex>,
}

impl PartialEq for Abbreviations {
    fn eq(&self, other: &Self) -> bool {
        self.map == other.map
    }
}

impl Abbreviations {
    pub fn new(pairs: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let map: BTreeMap<String, String> = pairs
            .into_iter()
            .map(|(a, e)| (a.trim().to_string(), e.trim().to_string()))
            .filter(|(a, _)| !a.is_empty())
            .collect();
        if map.is_empty() {
            return Ok(Abbreviations::default());
        }
        let mut keys: Vec<&String> = map.keys().collect();
        // Longest first so "GCC-I" wins over "GCC".
        keys.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        let alternation = keys
            .iter()
            .map(|k| regex::escape(k))
            .collect::<Vec<_>>()
            .join("|");
        let pattern = format!(r"\b(?:{alternation})\b");
        let matcher = Some(compile(&pattern)?);
        Ok(Abbreviations { map, matcher })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(read_pairs(path)?)
    }

    pub fn expand(&self, text: &str) -> String {
        match &self.matcher {
            None => text.to_string(),
            Some(re) => re
                .replace_all(text, |caps: &regex::Captures<'_>| {
                    self.map[&caps[0]].clone()
                })
                .into_owned(),
        }
    }

    pub fn as_map(&self) -> &BTreeMap<String, String> {
        &self.map
    }
}

fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(IngestError::MalformedRow {
                row: i as u64 + 1,
                column: "canonical".into(),
                message: "expected two columns".into(),
            });
        }
        out.push((rec[0].to_string(), rec[1].to_string()));
    }
    Ok(out)
}

/// Line grammar of a note-taking convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoteStyle {
    /// Unindented speaker head; named groups `speaker` and `text`.
    pub speaker_pattern: String,
    /// Applied to an indented line after its indentation is removed; named group `text`.
    pub bullet_pattern: String,
    /// Minimum leading whitespace (tab = this many columns) for a continuation line.
    pub indent_width: usize,
    /// Separates parties sharing one speaker head (`Name1 + Name2:`).
    pub party_separator: String,
    /// Splits `Name (Org)`; named groups `name` and `org`. Without a match the
    /// speaker is its own organisation.
    pub org_pattern: String,
    /// Speaker heads with a name longer than this many words are treated as prose.
    pub max_speaker_words: usize,
    /// Non-conversational lines (headings, agenda items) to drop.
    pub skip_patterns: Vec<String>,
    /// Strict mode fails on lines that fit no rule; lenient mode attaches them
    /// to the previous turn.
    pub strict: bool,
}

impl Default for NoteStyle {
    fn default() -> Self {
        NoteStyle {
            speaker_pattern: r"^[-*•]?\s*(?P<speaker>[^\s:][^:]*?)\s*:\s*(?P<text>.*)$".into(),
            bullet_pattern: r"^[-*•o]\s+(?P<text>.*)$".into(),
            indent_width: 1,
            party_separator: r"\s*\+\s*".into(),
            org_pattern: r"^(?P<name>.+?)\s*\((?P<org>[^()]+)\)$".into(),
            max_speaker_words: 6,
            skip_patterns: vec![
                r"^\s*#".into(),
                r"(?i)^\s*agenda\b".into(),
                r"(?i)^\s*(session|day|item)\s+\d+\b".into(),
            ],
            strict: false,
        }
    }
}

struct CompiledStyle {
    speaker: Regex,
    bullet: Regex,
    separator: Regex,
    org: Regex,
    skip: Vec<Regex>,
    indent_width: usize,
    max_speaker_words: usize,
    strict: bool,
}

impl CompiledStyle {
    fn new(style: &NoteStyle) -> Result<Self> {
        let speaker = compile(&style.speaker_pattern)?;
        require_groups(&speaker, &style.speaker_pattern, &["speaker", "text"])?;
        let bullet = compile(&style.bullet_pattern)?;
        require_groups(&bullet, &style.bullet_pattern, &["text"])?;
        let org = compile(&style.org_pattern)?;
        require_groups(&org, &style.org_pattern, &["name", "org"])?;
        Ok(CompiledStyle {
            speaker,
            bullet,
            separator: compile(&style.party_separator)?,
            org,
            skip: style
                .skip_patterns
                .iter()
                .map(|p| compile(p))
                .collect::<Result<_>>()?,
            indent_width: style.indent_width.max(1),
            max_speaker_words: style.max_speaker_words.max(1),
            strict: style.strict,
        })
    }
}

fn compile(pattern: &str) -> Result<Regex> {
    Regex::new(pattern).map_err(|source| IngestError::InvalidPattern {
        pattern: pattern.to_string(),
        source,
    })
}

fn require_groups(re: &Regex, pattern: &str, groups: &[&'static str]) -> Result<()> {
    for &group in groups {
        if re.capture_names().flatten().all(|n| n != group) {
            return Err(IngestError::MissingGroup {
                pattern: pattern.to_string(),
                group,
            });
        }
    }
    Ok(())
}

/// Format characters (Unicode category Cf), including zero-width characters,
/// directional marks and the byte-order mark.
const FORMAT_CHAR_RANGES: &[(u32, u32)] = &[
    (0x00AD, 0x00AD),
    (0x0600, 0x0605),
    (0x061C, 0x061C),
    (0x06DD, 0x06DD),
    (0x070F, 0x070F),
    (0x0890, 0x0891),
    (0x08E2, 0x08E2),
    (0x180E, 0x180E),
    (0x200B, 0x200F),
    (0x202A, 0x202E),
    (0x2060, 0x2064),
    (0x2066, 0x206F),
    (0xFEFF, 0xFEFF),
    (0xFFF9, 0xFFFB),
    (0x110BD, 0x110BD),
    (0x110CD, 0x110CD),
    (0x13430, 0x1343F),
    (0x1BCA0, 0x1BCA3),
    (0x1D173, 0x1D17A),
    (0xE0001, 0xE0001),
    (0xE0020, 0xE007F),
];

fn is_format_char(c: char) -> bool {
    let cp = c as u32;
    FORMAT_CHAR_RANGES
        .iter()
        .any(|&(lo, hi)| (lo..=hi).contains(&cp))
}

/// Removes control and format characters (keeping newline and tab) and
/// folds typographic quotes, dashes and spaces to ASCII.
pub fn clean_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\n' | '\t' => out.push(c),
            '\u{2018}' | '\u{2019}' | '\u{201A}' | '\u{201B}' | '\u{2032}' => out.push('\''),
            '\u{201C}' | '\u{201D}' | '\u{201E}' | '\u{201F}' | '\u{2033}' => out.push('"'),
            '\u{2010}'..='\u{2015}' | '\u{2212}' => out.push('-'),
            '\u{00A0}' | '\u{2007}' | '\u{202F}' => out.push(' '),
            '\u{2026}' => out.push_str("..."),
            c if c.is_control() || is_format_char(c) => {}
            c => out.push(c),
        }
    }
    out
}

fn leading_width(line: &str, tab: usize) -> usize {
    line.chars()
        .take_while(|c| c.is_whitespace())
        .map(|c| if c == '\t' { tab } else { 1 })
        .sum()
}

struct Turn {
    speaker: String,
    lines: Vec<String>,
}

/// Splits one note into speaker turns.
///
/// Comment ids are assigned from 1 in turn order; [`Corpus::from_notes`]
/// renumbers them across notes.
pub fn parse_notes(
    raw: &RawNote,
    aliases: &AliasMap,
    abbreviations: &Abbreviations,
    style: &NoteStyle,
) -> Result<Vec<Comment>> {
    let style = CompiledStyle::new(style)?;
    let body = clean_text(&raw.body);
    let mut turns: Vec<Turn> = Vec::new();

    for (idx, line) in body.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() || style.skip.iter().any(|re| re.is_match(line)) {
            continue;
        }
        let indent = leading_width(line, style.indent_width);
        let trimmed = line.trim();

        if indent >= style.indent_width {
            if let Some(turn) = turns.last_mut() {
                let text = style
                    .bullet
                    .captures(trimmed)
                    .map(|c| c["text"].trim().to_string())
                    .unwrap_or_else(|| trimmed.to_string());
                if !text.is_empty() {
                    turn.lines.push(text);
                }
                continue;
            }
        } else if let Some(caps) = style.speaker.captures(trimmed) {
            let speaker = caps["speaker"].trim();
            let plausible = !speaker.is_empty()
                && style
                    .separator
                    .split(speaker)
                    .all(|name| name.split_whitespace().count() <= style.max_speaker_words);
            if plausible {
                let text = caps["text"].trim();
                turns.push(Turn {
                    speaker: speaker.to_string(),
                    lines: if text.is_empty() {
                        Vec::new()
                    } else {
                        vec![text.to_string()]
                    },
                });
                continue;
            }
        }

        if style.strict {
            return Err(IngestError::UnparseableLine {
                source_name: raw.source_name.clone(),
                line: line_no,
                content: trimmed.to_string(),
            });
        }
        match turns.last_mut() {
            Some(turn) => {
                debug!("{}:{line_no}: attached to previous turn", raw.source_name);
                turn.lines.push(trimmed.to_string());
            }
            None => warn!(
                "{}:{line_no}: dropped line before first speaker turn",
                raw.source_name
            ),
        }
    }

    let mut comments = Vec::with_capacity(turns.len());
    for turn in turns {
        let text = abbreviations.expand(&turn.lines.join("\n"));
        if text.trim().is_empty() {
            debug!(
                "{}: empty turn for {:?} dropped",
                raw.source_name, turn.speaker
            );
            continue;
        }
        let parties: Vec<(String, String)> = style
            .separator
            .split(&turn.speaker)
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| split_name_org(&style.org, aliases, p))
            .collect();
        let (name, org, multi_org) = if parties.len() > 1 {
            let names: Vec<&str> = parties.iter().map(|(n, _)| n.as_str()).collect();
            let mut orgs: Vec<String> = Vec::new();
            for (_, o) in &parties {
                if !orgs.contains(o) {
                    orgs.push(o.clone());
                }
            }
            (names.join(" + "), orgs[0].clone(), orgs)
        } else {
            let (n, o) = parties
                .into_iter()
                .next()
                .unwrap_or_else(|| (turn.speaker.clone(), turn.speaker.clone()));
            (n, o, Vec::new())
        };
        comments.push(Comment {
            comment_id: comments.len() as u64 + 1,
            text,
            source_file: raw.source_name.clone(),
            year: raw.session_year,
            month: raw.session_month,
            participant_name: name,
            participant_org: org,
            multi_org,
        });
    }
    Ok(comments)
}

fn split_name_org(org_re: &Regex, aliases: &AliasMap, speaker: &str) -> (String, String) {
    match org_re.captures(speaker) {
        Some(caps) => (
            aliases.canonical(&caps["name"]).to_string(),
            aliases.canonical(&caps["org"]).to_string(),
        ),
        None => {
            let canonical = aliases.canonical(speaker).to_string();
            (canonical.clone(), canonical)
        }
    }
}

/// The cleaned comment table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub comments: Vec<Comment>,
    pub entity_aliases: AliasMap,
    pub abbreviations: Abbreviations,
}

impl Corpus {
    pub fn new(comments: Vec<Comment>) -> Self {
        Corpus {
            comments,
            ..Default::default()
        }
    }

    /// Parses every note, ordered by (year, month, source name), and numbers
    /// the comments sequentially from 1.
    pub fn from_notes(
        notes: &[RawNote],
        aliases: AliasMap,
        abbreviations: Abbreviations,
        style: &NoteStyle,
    ) -> Result<Self> {
        let mut ordered: Vec<&RawNote> = notes.iter().collect();
        ordered.sort_by(|a, b| {
            (a.session_year, a.session_month, &a.source_name).cmp(&(
                b.session_year,
                b.session_month,
                &b.source_name,
            ))
        });
        let mut comments = Vec::new();
        for note in ordered {
            for mut c in parse_notes(note, &aliases, &abbreviations, style)? {
                c.comment_id = comments.len() as u64 + 1;
                comments.push(c);
            }
        }
        Ok(Corpus {
            comments,
            entity_aliases: aliases,
            abbreviations,
        })
    }

    pub fn len(&self) -> usize {
        self.comments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comments.is_empty()
    }

    pub fn total_words(&self) -> usize {
        self.comments.iter().map(Comment::word_count).sum()
    }

    /// Canonical organisations in order of first appearance.
    pub fn parties(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for c in &self.comments {
            if seen.insert(c.participant_org.clone()) {
                out.push(c.participant_org.clone());
            }
        }
        out
    }

    pub fn get(&self, comment_id: u64) -> Option<&Comment> {
        self.comments.iter().find(|c| c.comment_id == comment_id)
    }
}

/// Selection criteria for [`filter_corpus`]; unset fields match everything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusFilter {
    pub parties: Option<BTreeSet<String>>,
    pub years: Option<BTreeSet<i32>>,
    pub months: Option<BTreeSet<u32>>,
    #[serde(default)]
    pub exclude_multi_org: bool,
}

impl CorpusFilter {
    pub fn matches(&self, c: &Comment) -> bool {
        if self.exclude_multi_org && c.is_multi_org() {
            return false;
        }
        if let Some(years) = &self.years {
            if !years.contains(&c.year) {
                return false;
            }
        }
        if let Some(months) = &self.months {
            if !months.contains(&c.month) {
                return false;
            }
        }
        if let Some(parties) = &self.parties {
            if !parties.iter().any(|p| c.involves(p)) {
                return false;
            }
        }
        true
    }
}

pub fn filter_corpus(corpus: &Corpus, filter: &CorpusFilter) -> Corpus {
    Corpus {
        comments: corpus
            .comments
            .iter()
            .filter(|c| filter.matches(c))
            .cloned()
            .collect(),
        entity_aliases: corpus.entity_aliases.clone(),
        abbreviations: corpus.abbreviations.clone(),
    }
}

/// Writes the canonical CSV, optionally followed by extra `;`-joined list
/// columns keyed by comment id (e.g. `issues`, `latent_issues`).
pub fn write_corpus_to<W: Write>(
    corpus: &Corpus,
    writer: W,
    extra: &[(&str, &BTreeMap<u64, Vec<String>>)],
) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(writer);
    let mut header: Vec<&str> = CORPUS_HEADER.to_vec();
    header.extend(extra.iter().map(|(name, _)| *name));
    wtr.write_record(&header)?;
    for c in &corpus.comments {
        for org in &c.multi_org {
            if org.contains(';') {
                return Err(IngestError::SeparatorInName(org.clone()));
            }
        }
        let mut row = vec![
            c.comment_id.to_string(),
            c.text.clone(),
            c.source_file.clone(),
            c.year.to_string(),
            c.month.to_string(),
            c.participant_name.clone(),
            c.participant_org.clone(),
            c.multi_org.join(";"),
        ];
        for (_, values) in extra {
            row.push(
                values
                    .get(&c.comment_id)
                    .map(|v| v.join(";"))
                    .unwrap_or_default(),
            );
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()
        .map_err(|e| IngestError::io(Path::new("<corpus>"), e))?;
    Ok(())
}

pub fn write_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    write_augmented(corpus, path, &[])
}

pub fn write_augmented(
    corpus: &Corpus,
    path: &Path,
    extra: &[(&str, &BTreeMap<u64, Vec<String>>)],
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| IngestError::io(path, e))?;
    write_corpus_to(corpus, std::io::BufWriter::new(file), extra)
}

/// Reads a corpus CSV. Columns after the canonical eight are ignored.
pub fn read_corpus_from<R: Read>(reader: R) -> Result<Corpus> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < CORPUS_HEADER.len() || header.iter().zip(CORPUS_HEADER).any(|(a, b)| a != b) {
        return Err(IngestError::BadHeader {
            found: header.iter().map(String::from).collect(),
        });
    }
    let mut comments = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i as u64 + 1;
        let rec = rec.map_err(|e| IngestError::MalformedRow {
            row,
            column: "*".into(),
            message: e.to_string(),
        })?;
        let comment_id = parse_field::<u64>(&rec[0], row, "comment_id")?;
        if !ids.insert(comment_id) {
            return Err(IngestError::MalformedRow {
                row,
                column: "comment_id".into(),
                message: format!("duplicate id {comment_id}"),
            });
        }
        let text = rec[1].to_string();
        if text.trim().is_empty() {
            return Err(IngestError::MalformedRow {
                row,
                column: "text".into(),
                message: "empty text".into(),
            });
        }
        let month = parse_field::<u32>(&rec[4], row, "month")?;
        if !(1..=12).contains(&month) {
            return Err(IngestError::MalformedRow {
                row,
                column: "month".into(),
                message: format!("{month} out of range 1-12"),
            });
        }
        comments.push(Comment {
            comment_id,
            text,
            source_file: rec[2].to_string(),
            year: parse_field::<i32>(&rec[3], row, "year")?,
            month,
            participant_name: rec[5].to_string(),
            participant_org: rec[6].to_string(),
            multi_org: split_list(&rec[7]),
        });
    }
    Ok(Corpus::new(comments))
}

pub fn read_corpus(path: &Path) -> Result<Corpus> {
    let file = fs::File::open(path).map_err(|e| IngestError::io(path, e))?;
    read_corpus_from(std::io::BufReader::new(file))
}

/// Reads a `;`-list column (such as `issues`) from an augmented corpus CSV.
pub fn read_list_column(path: &Path, column: &str) -> Result<BTreeMap<u64, Vec<String>>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    let idx = header
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| IngestError::BadHeader {
            found: header.iter().map(String::from).collect(),
        })?;
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i as u64 + 1;
        let id = parse_field::<u64>(&rec[0], row, "comment_id")?;
        out.insert(id, split_list(rec.get(idx).unwrap_or("")));
    }
    Ok(out)
}

pub(crate) fn split_list(field: &str) -> Vec<String> {
    field
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn parse_field<T: std::str::FromStr>(value: &str, row: u64, column: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e: T::Err| IngestError::MalformedRow {
            row,
            column: column.to_string(),
            message: format!("{value:?}: {e}"),
        })
}

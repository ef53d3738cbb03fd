//! Tokenization shared by every analysis stage.
//!
//! All stages tokenize the same way: lowercase, split on any character that
//! is not alphanumeric, optionally drop stopwords. Word counts used by the
//! activity reports are a separate, coarser notion: whitespace-separated
//! tokens of the cleaned text.

use std::collections::HashSet;
use std::io;
use std::path::Path;

const BUNDLED_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

/// A set of tokens to ignore.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords {
    words: HashSet<String>,
}

impl Stopwords {
    /// The bundled English list (`data/stopwords_en.txt`).
    pub fn english() -> Self {
        Self::parse(BUNDLED_STOPWORDS)
    }

    pub fn empty() -> Self {
        Stopwords {
            words: HashSet::new(),
        }
    }

    /// One token per line; blank lines and `#` comments are ignored.
    pub fn parse(contents: &str) -> Self {
        let words = contents
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        Stopwords { words }
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

impl Default for Stopwords {
    fn default() -> Self {
        Self::english()
    }
}

/// Lowercased alphanumeric runs, in order.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// [`tokenize`] with stopwords removed.
pub fn content_tokens(text: &str, stopwords: &Stopwords) -> Vec<String> {
    let mut tokens = tokenize(text);
    tokens.retain(|t| !stopwords.contains(t));
    tokens
}

/// Whitespace-separated token count.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

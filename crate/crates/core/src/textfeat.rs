//! Text featurization: tokenization, TF-IDF vectors over a corpus vocabulary,
//! imported embedding files, and cosine distance.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::corpus::CveId;
use crate::error::{Error, Result};

static STOPWORDS_RAW: &str = include_str!("../resources/stopwords.txt");

/// The fixed English stop-word list shipped with the crate.
pub fn stop_words() -> &'static BTreeSet<&'static str> {
    static SET: OnceLock<BTreeSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_RAW
            .lines()
            .map(str::trim)
            .filter(|w| !w.is_empty())
            .collect()
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizeOptions {
    /// Strip common English suffixes (s, es, ed, ing). Off by default.
    pub stem: bool,
}

/// Tokenize a description: lowercase, split on non-alphanumerics, drop
/// stop words, single characters, and pure digits. Version-like tokens
/// (`13.1`, `2.4.57`) survive as single tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_with(text, TokenizeOptions::default())
}

pub fn tokenize_with(text: &str, options: TokenizeOptions) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut tokens = Vec::new();
    for raw in lowered.split(|c: char| !(c.is_ascii_alphanumeric() || c == '.')) {
        let piece = raw.trim_matches('.');
        if piece.is_empty() {
            continue;
        }
        if is_version_like(piece) {
            tokens.push(piece.to_string());
            continue;
        }
        // Not a version; dots are ordinary separators ("config.sys").
        for part in piece.split('.') {
            if part.len() < 2 || part.bytes().all(|b| b.is_ascii_digit()) {
                continue;
            }
            if stop_words().contains(part) {
                continue;
            }
            let token = if options.stem { stem(part) } else { part.to_string() };
            if token.len() >= 2 {
                tokens.push(token);
            }
        }
    }
    tokens
}

/// Digits and dots with at least one dot: `13.1`, `2.4.57`.
fn is_version_like(s: &str) -> bool {
    s.contains('.')
        && s.bytes().all(|b| b.is_ascii_digit() || b == b'.')
        && s.bytes().any(|b| b.is_ascii_digit())
}

/// Light suffix stripper; deliberately much weaker than a full stemmer.
fn stem(word: &str) -> String {
    for suffix in ["ing", "es", "ed", "s"] {
        if let Some(base) = word.strip_suffix(suffix) {
            if base.len() >= 3 {
                return base.to_string();
            }
        }
    }
    word.to_string()
}

/// Term index built over a corpus. Column order is lexicographic, so equal
/// corpora always produce the same layout. The vocabulary remembers its
/// tokenize options so later vectorization stays consistent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    index: BTreeMap<String, usize>,
    document_frequency: BTreeMap<String, usize>,
    corpus_size: usize,
    min_df: usize,
    #[serde(default)]
    options: TokenizeOptions,
}

impl Vocabulary {
    /// Build from tokenized documents, keeping terms that occur in at least
    /// `min_df` distinct documents.
    pub fn build<'a, I>(descriptions: I, min_df: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        Self::build_with(descriptions, min_df, TokenizeOptions::default())
    }

    pub fn build_with<'a, I>(descriptions: I, min_df: usize, options: TokenizeOptions) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        if min_df < 1 {
            return Err(Error::validation("min_df must be at least 1"));
        }
        let mut document_frequency: BTreeMap<String, usize> = BTreeMap::new();
        let mut corpus_size = 0usize;
        for text in descriptions {
            corpus_size += 1;
            let unique: BTreeSet<String> = tokenize_with(text, options).into_iter().collect();
            for term in unique {
                *document_frequency.entry(term).or_insert(0) += 1;
            }
        }
        if corpus_size == 0 {
            return Err(Error::validation("cannot build a vocabulary from an empty corpus"));
        }
        document_frequency.retain(|_, df| *df >= min_df);
        let index = document_frequency
            .keys()
            .enumerate()
            .map(|(i, term)| (term.clone(), i))
            .collect();
        Ok(Vocabulary {
            index,
            document_frequency,
            corpus_size,
            min_df,
            options,
        })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn corpus_size(&self) -> usize {
        self.corpus_size
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn document_frequency(&self, term: &str) -> Option<usize> {
        self.document_frequency.get(term).copied()
    }
}

/// A dense numeric representation of one description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        FeatureVector { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Scale to unit L2 norm; the all-zero vector is left untouched.
    pub fn l2_normalized(mut self) -> Self {
        let norm = self.norm();
        if norm > 0.0 {
            for v in &mut self.values {
                *v /= norm;
            }
        }
        self
    }
}

/// TF-IDF weights: `(1 + ln tf) * (ln((1 + N) / (1 + df)) + 1)`, then L2
/// normalization. Out-of-vocabulary terms are ignored.
pub fn vectorize_tfidf(description: &str, vocab: &Vocabulary) -> FeatureVector {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for token in tokenize_with(description, vocab.options) {
        if let Some(col) = vocab.index_of(&token) {
            *counts.entry(col).or_insert(0.0) += 1.0;
        }
    }
    let mut values = vec![0.0; vocab.len()];
    let n = vocab.corpus_size() as f64;
    for (term, &col) in &vocab.index {
        if let Some(&tf) = counts.get(&col) {
            let df = vocab.document_frequency(term).unwrap_or(0) as f64;
            let idf = ((1.0 + n) / (1.0 + df)).ln() + 1.0;
            values[col] = (1.0 + tf.ln()) * idf;
        }
    }
    FeatureVector::new(values).l2_normalized()
}

/// Load precomputed embeddings from CSV rows `id,v0,v1,...`. Every row must
/// have the same dimension; vectors are L2-normalized on load.
pub fn load_embeddings(reader: impl Read) -> Result<BTreeMap<CveId, FeatureVector>> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut out = BTreeMap::new();
    let mut dimension: Option<usize> = None;
    for (idx, row) in csv_reader.records().enumerate() {
        let lineno = idx + 1;
        let row = row.map_err(|e| Error::parse(lineno, e.to_string()))?;
        if row.len() < 2 {
            return Err(Error::format(format!(
                "embedding row {lineno} has no vector components"
            )));
        }
        let id = CveId::parse(row.get(0).unwrap_or(""))
            .map_err(|e| Error::parse(lineno, e.to_string()))?;
        let values: Vec<f64> = row
            .iter()
            .skip(1)
            .map(|cell| {
                cell.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::format(format!("non-numeric cell {cell:?} at row {lineno}")))
            })
            .collect::<Result<_>>()?;
        match dimension {
            None => dimension = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::format(format!(
                    "embedding row {lineno} has dimension {} but earlier rows had {d}",
                    values.len()
                )));
            }
            Some(_) => {}
        }
        out.insert(id, FeatureVector::new(values).l2_normalized());
    }
    Ok(out)
}

/// Cosine distance `1 - dot(a, b) / (|a| |b|)` in [0, 2]. If either vector is
/// all-zero the distance is 1 by convention.
pub fn cosine_distance(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    if a.dimension() != b.dimension() {
        return Err(Error::validation(format!(
            "dimension mismatch: {} vs {}",
            a.dimension(),
            b.dimension()
        )));
    }
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return Ok(1.0);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok(1.0 - dot / (na * nb))
}

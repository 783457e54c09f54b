//! Corpus ingestion, tokenization, vocabulary construction and bag-of-words.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default vocabulary size.
pub const DEFAULT_VOCAB_SIZE: usize = 2000;

const ENGLISH_STOP_WORDS: &str = include_str!("../data/stopwords_en.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Reads a JSON-lines corpus (`id`, `text`, optional `label`) and validates it.
pub fn read_jsonl(path: &Path) -> Result<Vec<Document>> {
    let reader = BufReader::new(File::open(path)?);
    let mut docs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| {
            Error::InvalidCorpus(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        docs.push(doc);
    }
    validate_documents(&docs)?;
    Ok(docs)
}

pub fn write_jsonl(path: &Path, docs: &[Document]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for doc in docs {
        serde_json::to_writer(&mut w, doc)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Ids must be unique and texts non-blank.
pub fn validate_documents(docs: &[Document]) -> Result<()> {
    let mut seen = HashSet::with_capacity(docs.len());
    for doc in docs {
        if !seen.insert(doc.id.as_str()) {
            return Err(Error::InvalidCorpus(format!("duplicate document id `{}`", doc.id)));
        }
        if doc.text.trim().is_empty() {
            return Err(Error::InvalidCorpus(format!("document `{}` has empty text", doc.id)));
        }
    }
    Ok(())
}

/// Lowercasing tokenizer that splits on non-alphanumeric characters and
/// drops stop-words, pure-digit tokens and tokens shorter than `min_len`.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    stop_words: HashSet<String>,
    min_len: usize,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Self::english()
    }
}

impl Tokenizer {
    /// Shipped English stop list, minimum token length 2.
    pub fn english() -> Self {
        Self::with_stop_words(ENGLISH_STOP_WORDS.lines().map(str::trim).filter(|w| !w.is_empty()))
    }

    pub fn with_stop_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            stop_words: words.into_iter().map(|w| w.as_ref().to_lowercase()).collect(),
            min_len: 2,
        }
    }

    pub fn min_len(mut self, min_len: usize) -> Self {
        self.min_len = min_len;
        self
    }

    pub fn is_stop_word(&self, word: &str) -> bool {
        self.stop_words.contains(word)
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .filter(|t| t.chars().count() >= self.min_len)
            .filter(|t| !t.chars().all(|c| c.is_ascii_digit()))
            .filter(|t| !self.stop_words.contains(t))
            .collect()
    }
}

/// Tokenizes with the default English tokenizer.
pub fn tokenize(text: &str) -> Vec<String> {
    Tokenizer::english().tokenize(text)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_words<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let words: Vec<String> = words.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(Error::InvalidArgument(format!("invalid vocabulary word {w:?}")));
            }
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate vocabulary word `{w}`")));
            }
        }
        Ok(Self { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, i: usize) -> Option<&str> {
        self.words.get(i).map(String::as_str)
    }

    pub fn position(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// One word per line; line number is the index.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for word in &self.words {
            w.write_all(word.as_bytes())?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_words(text.lines().map(str::to_owned))
    }
}

/// The `size` most frequent tokens, ties broken lexicographically.
pub fn build_vocabulary(docs: &[Document], size: usize, tokenizer: &Tokenizer) -> Result<Vocabulary> {
    if size == 0 {
        return Err(Error::InvalidArgument("vocabulary size must be at least 1".into()));
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    for doc in docs {
        for tok in tokenizer.tokenize(&doc.text) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|(wa, ca), (wb, cb)| cb.cmp(ca).then_with(|| wa.cmp(wb)));
    ranked.truncate(size);
    Vocabulary::from_words(ranked.into_iter().map(|(w, _)| w))
}

/// Sparse word counts keyed by vocabulary index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BowVector {
    entries: BTreeMap<usize, u32>,
}

impl BowVector {
    pub fn from_counts<I: IntoIterator<Item = (usize, u32)>>(counts: I) -> Self {
        let entries = counts.into_iter().filter(|&(_, c)| c > 0).collect();
        Self { entries }
    }

    pub fn get(&self, index: usize) -> u32 {
        self.entries.get(&index).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.entries.iter().map(|(&i, &c)| (i, c))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn total(&self) -> u64 {
        self.entries.values().map(|&c| u64::from(c)).sum()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.entries.keys().next_back().copied()
    }
}

pub fn bow_vector<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> BowVector {
    let mut entries = BTreeMap::new();
    for tok in tokens {
        if let Some(i) = vocab.position(tok.as_ref()) {
            *entries.entry(i).or_insert(0) += 1;
        }
    }
    BowVector { entries }
}

/// Dense documents × vocabulary count matrix.
pub fn bow_matrix(bows: &[BowVector], vocab_size: usize) -> Array2<f32> {
    let mut m = Array2::zeros((bows.len(), vocab_size));
    for (d, bow) in bows.iter().enumerate() {
        for (i, c) in bow.iter() {
            m[[d, i]] = c as f32;
        }
    }
    m
}

pub fn bows_from_matrix(m: &Array2<f32>) -> Result<Vec<BowVector>> {
    m.rows()
        .into_iter()
        .enumerate()
        .map(|(d, row)| {
            let mut entries = BTreeMap::new();
            for (i, &v) in row.iter().enumerate() {
                if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
                    return Err(Error::Format(format!("bow row {d} column {i} is not a count: {v}")));
                }
                if v > 0.0 {
                    entries.insert(i, v as u32);
                }
            }
            Ok(BowVector { entries })
        })
        .collect()
}

/// `id,label` header, one document per line; unlabeled documents leave the
/// label empty. Labels run to the end of the line.
pub fn write_labels_csv(path: &Path, ids: &[String], labels: &[Option<String>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "id,label")?;
    for (id, label) in ids.iter().zip(labels) {
        writeln!(w, "{},{}", id, label.as_deref().unwrap_or(""))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels_csv(path: &Path) -> Result<Vec<(String, Option<String>)>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some("id,label") {
        return Err(Error::Format(format!("{}: expected `id,label` header", path.display())));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let (id, label) = l
                .split_once(',')
                .ok_or_else(|| Error::Format(format!("{}: malformed line `{l}`", path.display())))?;
            Ok((id.to_owned(), (!label.is_empty()).then(|| label.to_owned())))
        })
        .collect()
}

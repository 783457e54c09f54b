//! NPMI topic coherence over document co-occurrence in the training corpus.

use crate::corpus::{BowVector, Vocabulary};
use crate::{Error, Result};

/// Added to every joint document count before taking logarithms.
pub const JOINT_SMOOTHING: f64 = 1e-12;

/// Which documents contain each vocabulary word (sorted document ids).
#[derive(Debug, Clone, PartialEq)]
pub struct DocWordIncidence {
    num_docs: usize,
    postings: Vec<Vec<u32>>,
}

impl DocWordIncidence {
    pub fn from_bows(bows: &[BowVector], vocab_size: usize) -> Self {
        let mut postings = vec![Vec::new(); vocab_size];
        for (d, bow) in bows.iter().enumerate() {
            for (i, _) in bow.iter() {
                postings[i].push(d as u32);
            }
        }
        Self { num_docs: bows.len(), postings }
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn doc_freq(&self, word: usize) -> usize {
        self.postings[word].len()
    }

    pub fn joint_doc_freq(&self, a: usize, b: usize) -> usize {
        let (x, y) = (&self.postings[a], &self.postings[b]);
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < x.len() && j < y.len() {
            match x[i].cmp(&y[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    /// NPMI of one word pair in `[-1, 1]`.
    ///
    /// A word found in no document, or a pair that never co-occurs, scores
    /// −1 (the limit as the joint probability vanishes); a pair present in
    /// every document scores 1.
    pub fn npmi(&self, a: usize, b: usize) -> f64 {
        let n = self.num_docs as f64;
        let (df_a, df_b) = (self.doc_freq(a), self.doc_freq(b));
        let joint = self.joint_doc_freq(a, b);
        if df_a == 0 || df_b == 0 || joint == 0 {
            return -1.0;
        }
        let p_ab = (joint as f64 + JOINT_SMOOTHING) / n;
        if p_ab >= 1.0 {
            return 1.0;
        }
        let p_a = df_a as f64 / n;
        let p_b = df_b as f64 / n;
        ((p_ab / (p_a * p_b)).ln() / -p_ab.ln()).clamp(-1.0, 1.0)
    }
}

/// Mean over topics of the mean pairwise NPMI of each topic's word list.
pub fn npmi_coherence<S: AsRef<str>>(
    topics: &[Vec<S>],
    vocab: &Vocabulary,
    incidence: &DocWordIncidence,
) -> Result<f64> {
    if topics.is_empty() {
        return Err(Error::UndefinedMetric("NPMI needs at least one topic".into()));
    }
    let mut total = 0.0;
    for topic in topics {
        let ids = topic
            .iter()
            .map(|w| {
                vocab.position(w.as_ref()).ok_or_else(|| {
                    Error::InvalidArgument(format!("topic word `{}` is not in the vocabulary", w.as_ref()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if ids.len() < 2 {
            return Err(Error::UndefinedMetric("NPMI needs at least two words per topic".into()));
        }
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                sum += incidence.npmi(ids[i], ids[j]);
                pairs += 1;
            }
        }
        total += sum / pairs as f64;
    }
    Ok(total / topics.len() as f64)
}

//! Synthetic corpora with known topic structure.
//!
//! Documents follow the LDA generative process over a pseudo-word
//! vocabulary. Besides the text, the generator exposes the two artifacts a
//! language model would otherwise provide: next-word logits (the log of each
//! document's true word distribution) and document embeddings (a fixed
//! random projection of its topic proportions plus noise). A second,
//! text-derived embedding stands in for an external sentence encoder.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::{Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{bow_matrix, bow_vector, Document, Tokenizer, Vocabulary};
use crate::corpus::{write_jsonl, write_labels_csv, BowVector};
use crate::dtm;
use crate::seed::child_rng;
use crate::targets::soft_targets;
use crate::{Error, Result};

/// Added before the log when turning true word distributions into logits.
pub const LOGIT_SMOOTHING: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum DocTopicMode {
    /// One topic per document, assigned round-robin.
    Single,
    /// Topic proportions drawn from a symmetric Dirichlet.
    Mixed { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaMode {
    /// Each topic concentrates on its own contiguous block of words.
    Block,
    /// Every topic is a draw from a symmetric Dirichlet over the whole vocabulary.
    Dirichlet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_topics: usize,
    pub vocab_size: usize,
    pub docs_per_topic: usize,
    /// Mean token count (Poisson, at least one token).
    pub doc_length: f64,
    /// Dirichlet weight of off-block words (block mode) or of every word.
    pub topic_concentration: f64,
    pub doc_topic_mode: DocTopicMode,
    pub beta_mode: BetaMode,
    pub embed_dim: usize,
    pub embed_noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_topics: 5,
            vocab_size: 200,
            docs_per_topic: 100,
            doc_length: 40.0,
            topic_concentration: 0.01,
            doc_topic_mode: DocTopicMode::Single,
            beta_mode: BetaMode::Block,
            embed_dim: 16,
            embed_noise_sigma: 0.05,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn num_docs(&self) -> usize {
        self.num_topics * self.docs_per_topic
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidArgument(format!("synth spec: {msg}")));
        if self.num_topics < 2 {
            return fail(format!("need at least 2 topics, got {}", self.num_topics));
        }
        if self.vocab_size < 2 * self.num_topics {
            return fail(format!(
                "vocab_size {} is smaller than twice the topic count {}",
                self.vocab_size, self.num_topics
            ));
        }
        if self.docs_per_topic == 0 || self.embed_dim == 0 {
            return fail("docs_per_topic and embed_dim must be positive".into());
        }
        if !(self.doc_length > 0.0 && self.doc_length.is_finite()) {
            return fail("doc_length must be positive".into());
        }
        if !(self.topic_concentration > 0.0 && self.topic_concentration.is_finite()) {
            return fail("topic_concentration must be positive".into());
        }
        if let DocTopicMode::Mixed { alpha } = self.doc_topic_mode {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return fail("mixed-mode alpha must be positive".into());
            }
        }
        if !(self.embed_noise_sigma >= 0.0 && self.embed_noise_sigma.is_finite()) {
            return fail("embed_noise_sigma must be non-negative".into());
        }
        Ok(())
    }

    /// Word indices of topic `k`'s block.
    pub fn block(&self, k: usize) -> std::ops::Range<usize> {
        let start = k * self.vocab_size / self.num_topics;
        let end = (k + 1) * self.vocab_size / self.num_topics;
        start..end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub spec: SynthSpec,
    pub documents: Vec<Document>,
    /// `argmax` of each document's true topic proportions.
    pub labels: Vec<usize>,
    pub vocab: Vocabulary,
    /// `K × |V|`, row-stochastic.
    pub true_beta: Array2<f64>,
    /// `N × K`, row-stochastic.
    pub true_theta: Array2<f64>,
    pub bows: Vec<BowVector>,
}

impl SynthCorpus {
    pub fn label_names(&self) -> Vec<String> {
        self.labels.iter().map(|k| format!("topic{k}")).collect()
    }

    /// Documents whose dominant topic holds less than half the mass.
    pub fn ambiguous(&self) -> Vec<bool> {
        self.true_theta
            .rows()
            .into_iter()
            .map(|r| r.fold(0.0f64, |m, &v| m.max(v)) < 0.5)
            .collect()
    }

    /// `θ_dᵀ · β` for every document.
    pub fn word_distributions(&self) -> Array2<f64> {
        self.true_theta.dot(&self.true_beta)
    }
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Pronounceable pseudo-words that survive the default tokenizer.
pub fn pseudo_words(count: usize) -> Vec<String> {
    let tokenizer = Tokenizer::english();
    let syllables: Vec<String> = CONSONANTS
        .iter()
        .flat_map(|&c| VOWELS.iter().map(move |&v| format!("{}{}", c as char, v as char)))
        .collect();
    let mut words = Vec::with_capacity(count);
    let mut len = 2;
    while words.len() < count {
        let total = syllables.len().pow(len as u32);
        for mut i in 0..total {
            let mut w = String::with_capacity(2 * len);
            for _ in 0..len {
                w.push_str(&syllables[i % syllables.len()]);
                i /= syllables.len();
            }
            if tokenizer.tokenize(&w) == [w.as_str()] {
                words.push(w);
                if words.len() == count {
                    break;
                }
            }
        }
        len += 1;
    }
    words
}

fn dirichlet<R: Rng + ?Sized>(alphas: &[f64], rng: &mut R) -> Array1<f64> {
    loop {
        let draws: Vec<f64> = alphas
            .iter()
            .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng))
            .collect();
        let sum: f64 = draws.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            return Array1::from_iter(draws.into_iter().map(|g| g / sum));
        }
    }
}

pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let k_true = spec.num_topics;
    let v = spec.vocab_size;
    let vocab = Vocabulary::from_words(pseudo_words(v))?;

    let mut rng = child_rng(spec.seed, "synth.beta");
    let mut true_beta = Array2::zeros((k_true, v));
    for k in 0..k_true {
        let alphas: Vec<f64> = match spec.beta_mode {
            BetaMode::Block => {
                let block = spec.block(k);
                (0..v).map(|i| if block.contains(&i) { 1.0 } else { spec.topic_concentration }).collect()
            }
            BetaMode::Dirichlet => vec![spec.topic_concentration; v],
        };
        true_beta.row_mut(k).assign(&dirichlet(&alphas, &mut rng));
    }

    let n = spec.num_docs();
    let mut rng = child_rng(spec.seed, "synth.theta");
    let mut true_theta = Array2::zeros((n, k_true));
    for d in 0..n {
        match spec.doc_topic_mode {
            DocTopicMode::Single => true_theta[[d, d % k_true]] = 1.0,
            DocTopicMode::Mixed { alpha } => {
                true_theta.row_mut(d).assign(&dirichlet(&vec![alpha; k_true], &mut rng));
            }
        }
    }
    let labels: Vec<usize> = true_theta.rows().into_iter().map(crate::evalsuite::argmax).collect();

    let mut rng = child_rng(spec.seed, "synth.tokens");
    let lengths = Poisson::new(spec.doc_length).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let word_dists = true_theta.dot(&true_beta);
    let mut documents = Vec::with_capacity(n);
    let mut bows = Vec::with_capacity(n);
    for d in 0..n {
        let len = (lengths.sample(&mut rng) as usize).max(1);
        let sampler = WeightedIndex::new(word_dists.row(d).iter().copied())
            .map_err(|e| Error::InvalidArgument(format!("document {d} word distribution: {e}")))?;
        let tokens: Vec<&str> = (0..len).map(|_| vocab.words()[sampler.sample(&mut rng)].as_str()).collect();
        bows.push(bow_vector(&tokens, &vocab));
        documents.push(Document {
            id: format!("doc{d:05}"),
            text: tokens.join(" "),
            label: Some(format!("topic{}", labels[d])),
        });
    }

    Ok(SynthCorpus { spec: spec.clone(), documents, labels, vocab, true_beta, true_theta, bows })
}

/// Stand-in for restricted LM logits: `ln(θ_dᵀ·β + 1e-12)`.
pub fn oracle_logits(corpus: &SynthCorpus) -> Array2<f64> {
    corpus.word_distributions().mapv(|p| (p + LOGIT_SMOOTHING).ln())
}

pub fn oracle_targets(corpus: &SynthCorpus, temperature: f64) -> Result<Array2<f64>> {
    soft_targets(&oracle_logits(corpus), temperature)
}

/// Fixed random projection of the true topic proportions plus Gaussian noise.
pub fn oracle_embeddings(corpus: &SynthCorpus, spec: &SynthSpec) -> Array2<f64> {
    let mut rng = child_rng(spec.seed, "synth.projection");
    let projection: Array2<f64> =
        Array2::from_shape_simple_fn((corpus.true_theta.ncols(), spec.embed_dim), || rng.sample(StandardNormal));
    let mut emb = corpus.true_theta.dot(&projection);
    add_noise(&mut emb, spec.embed_noise_sigma, &mut child_rng(spec.seed, "synth.noise"));
    emb
}

/// Sentence-encoder stand-in: a random projection of the normalized
/// bag-of-words, so it only sees the sampled text.
pub fn external_embeddings(corpus: &SynthCorpus, spec: &SynthSpec) -> Array2<f64> {
    let v = corpus.vocab.len();
    let mut rng = child_rng(spec.seed, "synth.external");
    let scale = (v as f64 / spec.num_topics as f64).sqrt();
    let projection: Array2<f64> =
        Array2::from_shape_simple_fn((v, spec.embed_dim), || scale * rng.sample::<f64, _>(StandardNormal));
    let mut normalized = bow_matrix(&corpus.bows, v).mapv(f64::from);
    for mut row in normalized.rows_mut() {
        let s = row.sum();
        if s > 0.0 {
            row /= s;
        }
    }
    let mut emb = normalized.dot(&projection);
    add_noise(&mut emb, spec.embed_noise_sigma, &mut child_rng(spec.seed, "synth.external_noise"));
    emb
}

fn add_noise<R: Rng + ?Sized>(m: &mut Array2<f64>, sigma: f64, rng: &mut R) {
    if sigma > 0.0 {
        m.mapv_inplace(|x| x + sigma * rng.sample::<f64, _>(StandardNormal));
    }
}

/// Inputs and targets that a decoder without batch norm can fit exactly:
/// `θ* = softmax(A·x)` for a random linear map `A`, and every target row is
/// `softmax(θ*ᵀ·β*)` for a random `β*`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizableInstance {
    pub embeddings: Array2<f64>,
    pub theta: Array2<f64>,
    pub beta: Array2<f64>,
    pub targets: Array2<f64>,
}

pub fn realizable_instance(
    num_docs: usize,
    input_dim: usize,
    num_topics: usize,
    vocab_size: usize,
    seed: u64,
) -> RealizableInstance {
    let mut rng = child_rng(seed, "synth.realizable");
    let mut normal = |rows: usize, cols: usize, scale: f64| {
        Array2::from_shape_simple_fn((rows, cols), || scale * rng.sample::<f64, _>(StandardNormal))
    };
    let embeddings = normal(num_docs, input_dim, 1.0);
    let map = normal(input_dim, num_topics, 2.0 / (input_dim as f64).sqrt());
    let beta = normal(num_topics, vocab_size, 1.0);
    let theta = row_softmax(embeddings.dot(&map));
    let targets = row_softmax(theta.dot(&beta));
    RealizableInstance { embeddings, theta, beta, targets }
}

fn row_softmax(mut m: Array2<f64>) -> Array2<f64> {
    for mut row in m.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row /= s;
    }
    m
}

/// Writes the artifact set consumed by the training pipeline.
pub fn write_artifacts(corpus: &SynthCorpus, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let spec = &corpus.spec;
    write_jsonl(&dir.join("corpus.jsonl"), &corpus.documents)?;
    corpus.vocab.write(&dir.join("vocab.txt"))?;
    dtm::save(&dir.join("bow.dtm"), &bow_matrix(&corpus.bows, corpus.vocab.len()))?;
    dtm::save_f64(&dir.join("logits.dtm"), &oracle_logits(corpus))?;
    dtm::save_f64(&dir.join("embeddings.dtm"), &oracle_embeddings(corpus, spec))?;
    dtm::save_f64(&dir.join("external_embeddings.dtm"), &external_embeddings(corpus, spec))?;
    dtm::save_f64(&dir.join("true_beta.dtm"), &corpus.true_beta)?;
    dtm::save_f64(&dir.join("true_theta.dtm"), &corpus.true_theta)?;
    let ids: Vec<String> = corpus.documents.iter().map(|d| d.id.clone()).collect();
    let labels: Vec<Option<String>> = corpus.documents.iter().map(|d| d.label.clone()).collect();
    write_labels_csv(&dir.join("labels.csv"), &ids, &labels)?;
    let mut spec_json = serde_json::to_string_pretty(spec)?;
    spec_json.push('\n');
    std::fs::write(dir.join("synth.json"), spec_json)?;
    Ok(())
}

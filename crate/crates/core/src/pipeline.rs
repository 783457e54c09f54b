//! Artifact loading and the train → infer → evaluate path shared by the
//! command line and the sweep harness.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::corpus::{bows_from_matrix, read_labels_csv, BowVector, Vocabulary};
use crate::dtm;
use crate::evalsuite::{evaluate, DocWordIncidence, EvalConfig, EvalInputs, EvalReport};
use crate::seed::child_rng;
use crate::synth::{self, SynthCorpus};
use crate::targets::soft_targets;
use crate::topicmodel::{infer_theta_matrix, top_words, InputMode, ModelConfig, ModelParams, TargetMode};
use crate::trainer::{train, TrainConfig, TrainReport, TrainingData};
use crate::{Error, Result};

/// Fixed artifact file names inside a data or run directory.
pub mod layout {
    pub const CORPUS: &str = "corpus.jsonl";
    pub const VOCAB: &str = "vocab.txt";
    pub const BOW: &str = "bow.dtm";
    pub const LOGITS: &str = "logits.dtm";
    pub const TARGETS: &str = "targets.dtm";
    pub const EMBEDDINGS: &str = "embeddings.dtm";
    pub const EXTERNAL_EMBEDDINGS: &str = "external_embeddings.dtm";
    pub const LABELS: &str = "labels.csv";
    pub const CHECKPOINT: &str = "checkpoint.bin";
    pub const EVAL: &str = "eval.json";
    pub const SWEEP: &str = "sweep.csv";
    pub const TRAIN_LOG: &str = "train.log";
    pub const TOPICS: &str = "topics.txt";
}

/// Locations of every artifact a run may read. Only the vocabulary and the
/// embeddings for the configured input mode are mandatory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPaths {
    pub vocab: PathBuf,
    pub embeddings: PathBuf,
    pub external_embeddings: PathBuf,
    pub logits: PathBuf,
    pub targets: PathBuf,
    pub bow: PathBuf,
    pub labels: PathBuf,
}

impl DataPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            vocab: dir.join(layout::VOCAB),
            embeddings: dir.join(layout::EMBEDDINGS),
            external_embeddings: dir.join(layout::EXTERNAL_EMBEDDINGS),
            logits: dir.join(layout::LOGITS),
            targets: dir.join(layout::TARGETS),
            bow: dir.join(layout::BOW),
            labels: dir.join(layout::LABELS),
        }
    }
}

fn missing(path: &Path, what: &str) -> Error {
    Error::InvalidArgument(format!("missing {what}: {} does not exist", path.display()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub embeddings: Option<Array2<f64>>,
    pub external_embeddings: Option<Array2<f64>>,
    /// Restricted LM logits; soft targets are derived at the run temperature.
    pub logits: Option<Array2<f64>>,
    /// Precomputed soft targets, used when no logits are available.
    pub targets: Option<Array2<f64>>,
    pub bows: Option<Vec<BowVector>>,
    pub ids: Option<Vec<String>>,
    pub labels: Option<Vec<String>>,
}

impl Dataset {
    /// Loads whatever artifacts exist at `paths`.
    pub fn load(paths: &DataPaths) -> Result<Self> {
        if !paths.vocab.exists() {
            return Err(missing(&paths.vocab, "vocabulary"));
        }
        let vocab = Vocabulary::read(&paths.vocab)?;
        let opt = |p: &Path| -> Result<Option<Array2<f64>>> {
            if p.exists() {
                Ok(Some(dtm::load_f64(p)?))
            } else {
                Ok(None)
            }
        };
        let bows = if paths.bow.exists() { Some(bows_from_matrix(&dtm::load(&paths.bow)?)?) } else { None };
        let (ids, labels) = if paths.labels.exists() {
            let rows = read_labels_csv(&paths.labels)?;
            let ids = rows.iter().map(|r| r.0.clone()).collect();
            let labels = if rows.iter().all(|r| r.1.is_some()) {
                Some(rows.into_iter().map(|r| r.1.unwrap()).collect())
            } else {
                None
            };
            (Some(ids), labels)
        } else {
            (None, None)
        };
        let ds = Self {
            vocab,
            embeddings: opt(&paths.embeddings)?,
            external_embeddings: opt(&paths.external_embeddings)?,
            logits: opt(&paths.logits)?,
            targets: opt(&paths.targets)?,
            bows,
            ids,
            labels,
        };
        ds.check_shapes()?;
        Ok(ds)
    }

    /// In-memory dataset from a synthetic corpus (oracle logits and embeddings).
    pub fn from_synth(corpus: &SynthCorpus) -> Self {
        Self {
            vocab: corpus.vocab.clone(),
            embeddings: Some(synth::oracle_embeddings(corpus, &corpus.spec)),
            external_embeddings: Some(synth::external_embeddings(corpus, &corpus.spec)),
            logits: Some(synth::oracle_logits(corpus)),
            targets: None,
            bows: Some(corpus.bows.clone()),
            ids: Some(corpus.documents.iter().map(|d| d.id.clone()).collect()),
            labels: Some(corpus.label_names()),
        }
    }

    fn check_shapes(&self) -> Result<()> {
        let v = self.vocab.len();
        let mut n: Option<(usize, &str)> = None;
        let mut check_rows = |rows: usize, what: &'static str| -> Result<()> {
            match n {
                None => {
                    n = Some((rows, what));
                    Ok(())
                }
                Some((m, first)) if m != rows => Err(Error::DimensionMismatch(format!(
                    "{what} has {rows} rows but {first} has {m}"
                ))),
                _ => Ok(()),
            }
        };
        for (m, what) in [
            (&self.embeddings, "embeddings"),
            (&self.external_embeddings, "external embeddings"),
            (&self.logits, "logits"),
            (&self.targets, "targets"),
        ] {
            if let Some(m) = m {
                check_rows(m.nrows(), what)?;
            }
        }
        for (m, what) in [(&self.logits, "logits"), (&self.targets, "targets")] {
            if let Some(m) = m {
                if m.ncols() != v {
                    return Err(Error::DimensionMismatch(format!(
                        "{what} have {} columns but the vocabulary has {v} words",
                        m.ncols()
                    )));
                }
            }
        }
        if let Some(bows) = &self.bows {
            check_rows(bows.len(), "bag-of-words")?;
            if bows.iter().filter_map(BowVector::max_index).any(|i| i >= v) {
                return Err(Error::DimensionMismatch("bag-of-words index outside vocabulary".into()));
            }
        }
        if let Some(labels) = &self.labels {
            check_rows(labels.len(), "labels")?;
        }
        Ok(())
    }

    pub fn num_docs(&self) -> Option<usize> {
        self.embeddings
            .as_ref()
            .or(self.external_embeddings.as_ref())
            .map(Array2::nrows)
            .or_else(|| self.bows.as_ref().map(Vec::len))
    }

    pub fn embeddings_for(&self, mode: InputMode) -> Result<&Array2<f64>> {
        let (m, name) = match mode {
            InputMode::Hidden => (&self.embeddings, layout::EMBEDDINGS),
            InputMode::External => (&self.external_embeddings, layout::EXTERNAL_EMBEDDINGS),
        };
        m.as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("input_mode={mode} requires {name}")))
    }

    /// Soft targets at `temperature`, from logits when present.
    pub fn soft_targets(&self, temperature: f64) -> Result<Array2<f64>> {
        match (&self.logits, &self.targets) {
            (Some(logits), _) => soft_targets(logits, temperature),
            (None, Some(targets)) => Ok(targets.clone()),
            (None, None) => Err(Error::InvalidArgument(format!(
                "target_mode=soft requires {} or {}",
                layout::LOGITS,
                layout::TARGETS
            ))),
        }
    }

    pub fn incidence(&self) -> Option<DocWordIncidence> {
        self.bows.as_ref().map(|b| DocWordIncidence::from_bows(b, self.vocab.len()))
    }

    /// Fills in the data-dependent dimensions of `config`.
    pub fn shape_config(&self, config: &mut ModelConfig) -> Result<()> {
        config.input_dim = self.embeddings_for(config.input_mode)?.ncols();
        config.vocab_size = self.vocab.len();
        Ok(())
    }

    pub fn training_data(&self, config: &ModelConfig) -> Result<TrainingData> {
        let embeddings = self.embeddings_for(config.input_mode)?;
        let soft = match config.target_mode {
            TargetMode::Soft => Some(self.soft_targets(config.temperature)?),
            TargetMode::Bow => None,
        };
        TrainingData::prepare(config, embeddings, soft.as_ref(), self.bows.as_deref())
    }
}

/// SHA-256 over the embedding matrix and the target source a run consumes.
pub fn data_hash(dataset: &Dataset, config: &ModelConfig) -> Result<String> {
    let mut h = Sha256::new();
    for v in dataset.embeddings_for(config.input_mode)?.iter() {
        h.update(v.to_le_bytes());
    }
    match config.target_mode {
        TargetMode::Soft => {
            for v in dataset.soft_targets(config.temperature)?.iter() {
                h.update(v.to_le_bytes());
            }
        }
        TargetMode::Bow => {
            for bow in dataset.bows.as_deref().unwrap_or_default() {
                for (i, c) in bow.iter() {
                    h.update((i as u64).to_le_bytes());
                    h.update(c.to_le_bytes());
                }
                h.update(u64::MAX.to_le_bytes());
            }
        }
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

pub fn fit(
    dataset: &Dataset,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<(ModelParams, TrainReport)> {
    let data = dataset.training_data(model_config)?;
    train(model_config, train_config, &data)
}

/// Topic proportions for every document, inferred with a seed-derived stream.
pub fn infer_all(
    dataset: &Dataset,
    config: &ModelConfig,
    params: &ModelParams,
    seed: u64,
) -> Result<Array2<f64>> {
    let emb = dataset.embeddings_for(config.input_mode)?;
    infer_theta_matrix(emb.view(), params, config, &mut child_rng(seed, "inference"))
}

pub fn evaluate_model(
    dataset: &Dataset,
    config: &ModelConfig,
    params: &ModelParams,
    eval_config: &EvalConfig,
    top_n: usize,
    seed: u64,
) -> Result<EvalReport> {
    let theta = infer_all(dataset, config, params, seed)?;
    let topics = top_words(&params.weights.beta, &dataset.vocab, top_n.min(dataset.vocab.len()))?;
    let incidence = dataset.incidence();
    let inputs = EvalInputs {
        theta: theta.view(),
        topics: &topics,
        vocab: Some(&dataset.vocab),
        incidence: incidence.as_ref(),
        labels: dataset.labels.as_deref(),
    };
    evaluate(&inputs, eval_config)
}

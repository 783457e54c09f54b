//! TOML run configuration. Every table rejects unknown keys.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use softtopic::evalsuite::{EvalConfig, KlDirection, Metric};
use softtopic::pipeline::DataPaths;
use softtopic::synth::{BetaMode, DocTopicMode, SynthSpec};
use softtopic::topicmodel::{ModelConfig, DEFAULT_TOP_WORDS};
use softtopic::trainer::{LrSchedule, TrainConfig};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub synth: SynthSection,
}

/// Artifact locations. Individual paths override files inside `dir`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub dir: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub vocab_size: Option<usize>,
    pub vocab: Option<PathBuf>,
    pub bow: Option<PathBuf>,
    pub logits: Option<PathBuf>,
    pub targets: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub external_embeddings: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub num_topics: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub hidden_layers: Option<usize>,
    pub dropout_rate: Option<f64>,
    pub temperature: Option<f64>,
    pub loss_weight: Option<f64>,
    pub loss_mode: Option<String>,
    pub target_mode: Option<String>,
    pub input_mode: Option<String>,
    pub inference_samples: Option<usize>,
    pub decoder_batchnorm: Option<bool>,
    pub prior_alpha: Option<f64>,
    pub detach_prior: Option<bool>,
    pub batchnorm_momentum: Option<f64>,
    pub batchnorm_eps: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr_schedule: Option<String>,
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub metrics: Option<Vec<String>>,
    pub precision_at: Option<Vec<usize>>,
    pub top_n: Option<usize>,
    pub rbo_persistence: Option<f64>,
    pub kl_direction: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub seeds: Option<Vec<u64>>,
    /// Axis name to the values swept along it.
    #[serde(default)]
    pub values: BTreeMap<String, Vec<toml::Value>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub num_topics: Option<usize>,
    pub vocab_size: Option<usize>,
    pub docs_per_topic: Option<usize>,
    pub doc_length: Option<f64>,
    pub topic_concentration: Option<f64>,
    /// `single` or `mixed`.
    pub doc_topic_mode: Option<String>,
    pub doc_topic_alpha: Option<f64>,
    pub beta_mode: Option<String>,
    pub embed_dim: Option<usize>,
    pub embed_noise_sigma: Option<f64>,
}

pub const DEFAULT_NUM_TOPICS: usize = 20;

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn data_paths(&self) -> DataPaths {
        let d = &self.data;
        let base = DataPaths::in_dir(d.dir.as_deref().unwrap_or(Path::new(".")));
        let pick = |o: &Option<PathBuf>, default: PathBuf| o.clone().unwrap_or(default);
        DataPaths {
            vocab: pick(&d.vocab, base.vocab),
            embeddings: pick(&d.embeddings, base.embeddings),
            external_embeddings: pick(&d.external_embeddings, base.external_embeddings),
            logits: pick(&d.logits, base.logits),
            targets: pick(&d.targets, base.targets),
            bow: pick(&d.bow, base.bow),
            labels: pick(&d.labels, base.labels),
        }
    }

    /// Model settings with data-dependent dimensions still unset.
    pub fn model_config(&self) -> Result<ModelConfig> {
        let m = &self.model;
        let mut c = ModelConfig::new(m.num_topics.unwrap_or(DEFAULT_NUM_TOPICS), 0, 0);
        macro_rules! set {
            ($($field:ident),+) => { $(if let Some(v) = m.$field { c.$field = v; })+ };
        }
        set!(hidden_dim, hidden_layers, dropout_rate, temperature, loss_weight, inference_samples,
             decoder_batchnorm, detach_prior, batchnorm_momentum, batchnorm_eps);
        c.prior_alpha = m.prior_alpha;
        if let Some(s) = &m.loss_mode {
            c.loss_mode = s.parse()?;
        }
        if let Some(s) = &m.target_mode {
            c.target_mode = s.parse()?;
        }
        if let Some(s) = &m.input_mode {
            c.input_mode = s.parse()?;
        }
        Ok(c)
    }

    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        let t = &self.train;
        let mut c = TrainConfig { seed, ..TrainConfig::default() };
        if let Some(v) = t.learning_rate {
            c.learning_rate = v;
        }
        if let Some(v) = t.epochs {
            c.epochs = v;
        }
        if let Some(v) = t.batch_size {
            c.batch_size = v;
        }
        c.checkpoint_every = t.checkpoint_every;
        if let Some(s) = &t.lr_schedule {
            c.lr_schedule = match s.as_str() {
                "cosine" => LrSchedule::Cosine,
                "constant" => LrSchedule::Constant,
                other => bail!("unknown lr_schedule `{other}`"),
            };
        }
        c.validate()?;
        Ok(c)
    }

    pub fn eval_config(&self) -> Result<EvalConfig> {
        let e = &self.eval;
        let mut c = EvalConfig::default();
        if let Some(m) = &e.metrics {
            c.metrics = parse_metrics(m.iter().map(String::as_str))?;
        }
        if let Some(p) = &e.precision_at {
            c.precision_at = p.clone();
        }
        if let Some(p) = e.rbo_persistence {
            c.rbo_persistence = p;
        }
        if let Some(d) = &e.kl_direction {
            c.kl_direction = d.parse::<KlDirection>()?;
        }
        Ok(c)
    }

    pub fn top_n(&self) -> usize {
        self.eval.top_n.unwrap_or(DEFAULT_TOP_WORDS)
    }

    pub fn synth_spec(&self, seed: u64) -> Result<SynthSpec> {
        let s = &self.synth;
        let mut spec = SynthSpec { seed, ..SynthSpec::default() };
        macro_rules! set {
            ($($field:ident),+) => { $(if let Some(v) = s.$field { spec.$field = v; })+ };
        }
        set!(num_topics, vocab_size, docs_per_topic, doc_length, topic_concentration, embed_dim, embed_noise_sigma);
        match s.doc_topic_mode.as_deref() {
            None | Some("single") => {
                if s.doc_topic_alpha.is_some() {
                    bail!("synth.doc_topic_alpha requires doc_topic_mode = \"mixed\"");
                }
            }
            Some("mixed") => spec.doc_topic_mode = DocTopicMode::Mixed { alpha: s.doc_topic_alpha.unwrap_or(0.1) },
            Some(other) => bail!("unknown synth.doc_topic_mode `{other}`"),
        }
        match s.beta_mode.as_deref() {
            None | Some("block") => {}
            Some("dirichlet") => spec.beta_mode = BetaMode::Dirichlet,
            Some(other) => bail!("unknown synth.beta_mode `{other}`"),
        }
        spec.validate()?;
        Ok(spec)
    }
}

pub fn parse_metrics<'a, I: IntoIterator<Item = &'a str>>(names: I) -> Result<Vec<Metric>> {
    let mut out = Vec::new();
    for name in names {
        let m: Metric = name.trim().parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        bail!("no metrics requested");
    }
    Ok(out)
}

/// TOML scalars as the strings the sweep axes parse.
pub fn value_text(v: &toml::Value) -> Result<String> {
    Ok(match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        other => bail!("sweep values must be strings or numbers, found {other}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sede = 3").is_err());
        assert!(toml::from_str::<RunConfig>("[model]\nnum_topic = 3").is_err());
        assert!(toml::from_str::<RunConfig>("[train]\nepochs = 3\nlr = 0.1").is_err());
    }

    #[test]
    fn sections_override_defaults() {
        let cfg: RunConfig = toml::from_str(
            "seed = 4\n[model]\nnum_topics = 7\nloss_mode = \"nll\"\n[train]\nepochs = 3\n[eval]\nmetrics = [\"i_rbo\"]\n",
        )
        .unwrap();
        let m = cfg.model_config().unwrap();
        assert_eq!(m.num_topics, 7);
        assert_eq!(m.loss_mode.to_string(), "nll");
        assert_eq!(cfg.train_config(4).unwrap().epochs, 3);
        assert_eq!(cfg.eval_config().unwrap().metrics, vec![Metric::IRbo]);
        assert_eq!(cfg.train_config(0).unwrap().batch_size, 64);
    }
}

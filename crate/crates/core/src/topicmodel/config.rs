use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    /// `KL(model || target)`, weighted by the loss weight.
    Kl,
    /// Count- (or probability-) weighted negative log-likelihood.
    Nll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetMode {
    Soft,
    Bow,
}

/// Which document representation feeds the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputMode {
    /// Language-model last-token hidden states.
    Hidden,
    /// Embeddings from a separate sentence encoder.
    External,
}

macro_rules! text_enum {
    ($ty:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $text),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($ty::$variant),)+
                    other => Err(Error::InvalidArgument(format!(
                        concat!("unknown ", stringify!($ty), " `{}`"), other
                    ))),
                }
            }
        }
    };
}

text_enum!(LossMode { Kl => "kl", Nll => "nll" });
text_enum!(TargetMode { Soft => "soft", Bow => "bow" });
text_enum!(InputMode { Hidden => "hidden", External => "external" });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_topics: usize,
    pub input_dim: usize,
    pub vocab_size: usize,
    pub hidden_dim: usize,
    pub hidden_layers: usize,
    pub dropout_rate: f64,
    pub temperature: f64,
    pub loss_weight: f64,
    pub loss_mode: LossMode,
    pub target_mode: TargetMode,
    pub input_mode: InputMode,
    pub inference_samples: usize,
    pub decoder_batchnorm: bool,
    /// Symmetric Dirichlet concentration approximated by the prior; `1/K` when unset.
    pub prior_alpha: Option<f64>,
    /// Report the prior KL but keep it out of the objective and its gradient.
    pub detach_prior: bool,
    pub batchnorm_momentum: f64,
    pub batchnorm_eps: f64,
}

impl ModelConfig {
    pub fn new(num_topics: usize, input_dim: usize, vocab_size: usize) -> Self {
        Self {
            num_topics,
            input_dim,
            vocab_size,
            hidden_dim: 200,
            hidden_layers: 2,
            dropout_rate: 0.2,
            temperature: 3.0,
            loss_weight: 1e3,
            loss_mode: LossMode::Kl,
            target_mode: TargetMode::Soft,
            input_mode: InputMode::Hidden,
            inference_samples: 10,
            decoder_batchnorm: true,
            prior_alpha: None,
            detach_prior: false,
            batchnorm_momentum: 0.99,
            batchnorm_eps: 1e-5,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.prior_alpha.unwrap_or(1.0 / self.num_topics as f64)
    }

    /// Weight applied to the reconstruction term in the objective.
    pub fn reconstruction_weight(&self) -> f64 {
        match self.loss_mode {
            LossMode::Kl => self.loss_weight,
            LossMode::Nll => 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidArgument(format!("model config: {msg}")));
        if self.num_topics == 0 {
            return fail("num_topics must be positive");
        }
        if self.input_dim == 0 || self.vocab_size == 0 {
            return fail("input_dim and vocab_size must be positive");
        }
        if self.hidden_dim == 0 || self.hidden_layers == 0 {
            return fail("hidden_dim and hidden_layers must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail("dropout_rate must lie in [0, 1)");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return fail("temperature must be positive");
        }
        if !(self.loss_weight >= 0.0 && self.loss_weight.is_finite()) {
            return fail("loss_weight must be non-negative");
        }
        if self.inference_samples == 0 {
            return fail("inference_samples must be positive");
        }
        if !(self.alpha() > 0.0 && self.alpha().is_finite()) {
            return fail("prior_alpha must be positive");
        }
        if !(0.0..1.0).contains(&self.batchnorm_momentum) || self.batchnorm_eps <= 0.0 {
            return fail("batchnorm momentum must lie in [0, 1) and eps be positive");
        }
        Ok(())
    }

    /// `key = value` lines in a fixed key order.
    pub fn to_kv_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.kv_pairs() {
            out.push_str(&k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        }
        out
    }

    fn kv_pairs(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("num_topics", self.num_topics.to_string()),
            ("input_dim", self.input_dim.to_string()),
            ("vocab_size", self.vocab_size.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("hidden_layers", self.hidden_layers.to_string()),
            ("dropout_rate", self.dropout_rate.to_string()),
            ("temperature", self.temperature.to_string()),
            ("loss_weight", self.loss_weight.to_string()),
            ("loss_mode", self.loss_mode.to_string()),
            ("target_mode", self.target_mode.to_string()),
            ("input_mode", self.input_mode.to_string()),
            ("inference_samples", self.inference_samples.to_string()),
            ("decoder_batchnorm", self.decoder_batchnorm.to_string()),
            ("detach_prior", self.detach_prior.to_string()),
            ("batchnorm_momentum", self.batchnorm_momentum.to_string()),
            ("batchnorm_eps", self.batchnorm_eps.to_string()),
        ];
        if let Some(alpha) = self.prior_alpha {
            kv.push(("prior_alpha", alpha.to_string()));
        }
        kv.into_iter().map(|(k, v)| (k.to_owned(), v)).collect()
    }

    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| Error::Format(format!("malformed config line `{line}`")))?;
            map.insert(k.to_owned(), v.to_owned());
        }
        fn take<T: FromStr>(map: &mut BTreeMap<String, String>, key: &str) -> Result<T> {
            let raw = map
                .remove(key)
                .ok_or_else(|| Error::Format(format!("config key `{key}` missing")))?;
            raw.parse()
                .map_err(|_| Error::Format(format!("config key `{key}` has invalid value `{raw}`")))
        }
        let mut cfg = Self::new(
            take(&mut map, "num_topics")?,
            take(&mut map, "input_dim")?,
            take(&mut map, "vocab_size")?,
        );
        cfg.hidden_dim = take(&mut map, "hidden_dim")?;
        cfg.hidden_layers = take(&mut map, "hidden_layers")?;
        cfg.dropout_rate = take(&mut map, "dropout_rate")?;
        cfg.temperature = take(&mut map, "temperature")?;
        cfg.loss_weight = take(&mut map, "loss_weight")?;
        cfg.loss_mode = take(&mut map, "loss_mode")?;
        cfg.target_mode = take(&mut map, "target_mode")?;
        cfg.input_mode = take(&mut map, "input_mode")?;
        cfg.inference_samples = take(&mut map, "inference_samples")?;
        cfg.decoder_batchnorm = take(&mut map, "decoder_batchnorm")?;
        cfg.detach_prior = take(&mut map, "detach_prior")?;
        cfg.batchnorm_momentum = take(&mut map, "batchnorm_momentum")?;
        cfg.batchnorm_eps = take(&mut map, "batchnorm_eps")?;
        if map.contains_key("prior_alpha") {
            cfg.prior_alpha = Some(take(&mut map, "prior_alpha")?);
        }
        if let Some(k) = map.keys().next() {
            return Err(Error::Format(format!("unknown config key `{k}`")));
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = ModelConfig::new(4, 16, 100);
        assert_eq!(c.hidden_dim, 200);
        assert_eq!(c.hidden_layers, 2);
        assert_eq!(c.dropout_rate, 0.2);
        assert_eq!(c.temperature, 3.0);
        assert_eq!(c.loss_weight, 1e3);
        assert_eq!(c.inference_samples, 10);
        assert!(c.decoder_batchnorm);
        assert_eq!(c.alpha(), 0.25);
        c.validate().unwrap();
    }

    #[test]
    fn kv_round_trip() {
        let mut c = ModelConfig::new(3, 8, 20);
        c.loss_mode = LossMode::Nll;
        c.prior_alpha = Some(0.7);
        c.temperature = 0.1 + 0.2;
        let back = ModelConfig::from_kv_text(&c.to_kv_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn kv_rejects_unknown_keys() {
        let mut text = ModelConfig::new(3, 8, 20).to_kv_text();
        text.push_str("bogus = 1\n");
        assert!(ModelConfig::from_kv_text(&text).is_err());
    }
}

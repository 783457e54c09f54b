//! Topic-model evaluation: NPMI coherence, I-RBO diversity, harmonic purity,
//! retrieval precision and Welch's t-test for comparing runs.

mod coherence;
mod purity;
mod rbo;
mod retrieval;
mod welch;

pub use coherence::{npmi_coherence, DocWordIncidence, JOINT_SMOOTHING};
pub use purity::{argmax, purity_harmonic};
pub use rbo::{i_rbo, rbo, DEFAULT_PERSISTENCE};
pub use retrieval::{rank_by_kl, retrieval_precision, smooth, KlDirection, DEFAULT_PRECISION_AT, THETA_SMOOTHING};
pub use welch::{welch_t, WelchResult};

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Npmi,
    IRbo,
    Purity,
    Precision,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Npmi, Metric::IRbo, Metric::Purity, Metric::Precision];

    pub fn needs_labels(self) -> bool {
        matches!(self, Metric::Purity | Metric::Precision)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Npmi => "npmi",
            Metric::IRbo => "i_rbo",
            Metric::Purity => "purity",
            Metric::Precision => "precision",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "npmi" => Ok(Metric::Npmi),
            "i_rbo" | "irbo" => Ok(Metric::IRbo),
            "purity" => Ok(Metric::Purity),
            "precision" | "retrieval" => Ok(Metric::Precision),
            other => Err(Error::InvalidArgument(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub metrics: Vec<Metric>,
    pub precision_at: Vec<usize>,
    pub rbo_persistence: f64,
    pub kl_direction: KlDirection,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            metrics: Metric::ALL.to_vec(),
            precision_at: DEFAULT_PRECISION_AT.to_vec(),
            rbo_persistence: DEFAULT_PERSISTENCE,
            kl_direction: KlDirection::QueryFirst,
        }
    }
}

/// Everything a metric may need; absent pieces only matter to the metrics
/// that use them.
#[derive(Debug, Clone, Copy)]
pub struct EvalInputs<'a> {
    pub theta: ArrayView2<'a, f64>,
    pub topics: &'a [Vec<String>],
    pub vocab: Option<&'a Vocabulary>,
    pub incidence: Option<&'a DocWordIncidence>,
    pub labels: Option<&'a [String]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_seed: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub welch: BTreeMap<String, WelchResult>,
}

impl EvalReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    /// Means across runs, keeping every run's value under `per_seed`.
    pub fn aggregate(reports: &[EvalReport]) -> EvalReport {
        let mut per_seed: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in reports {
            for (k, &v) in &r.metrics {
                per_seed.entry(k.clone()).or_default().push(v);
            }
        }
        let metrics = per_seed
            .iter()
            .map(|(k, v)| (k.clone(), v.iter().sum::<f64>() / v.len() as f64))
            .collect();
        EvalReport { metrics, per_seed, welch: BTreeMap::new() }
    }

    /// Welch p-values of this aggregate against `other`, per shared metric.
    pub fn compare(&mut self, other: &EvalReport) {
        for (k, mine) in &self.per_seed {
            if let Some(theirs) = other.per_seed.get(k) {
                if let Ok(r) = welch_t(mine, theirs) {
                    self.welch.insert(k.clone(), r);
                }
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

pub fn evaluate(inputs: &EvalInputs<'_>, cfg: &EvalConfig) -> Result<EvalReport> {
    let mut report = EvalReport::default();
    for &metric in &cfg.metrics {
        if metric.needs_labels() && inputs.labels.is_none() {
            return Err(Error::UndefinedMetric(format!("{metric} requires document labels")));
        }
        match metric {
            Metric::Npmi => {
                let (vocab, incidence) = inputs.vocab.zip(inputs.incidence).ok_or_else(|| {
                    Error::UndefinedMetric("npmi requires the vocabulary and corpus bag-of-words".into())
                })?;
                report.metrics.insert("npmi".into(), npmi_coherence(inputs.topics, vocab, incidence)?);
            }
            Metric::IRbo => {
                report.metrics.insert("i_rbo".into(), i_rbo(inputs.topics, cfg.rbo_persistence)?);
            }
            Metric::Purity => {
                let labels = inputs.labels.expect("checked above");
                report.metrics.insert("purity".into(), purity_harmonic(inputs.theta, labels)?);
            }
            Metric::Precision => {
                let labels = inputs.labels.expect("checked above");
                for &n in &cfg.precision_at {
                    let p = retrieval_precision(inputs.theta, labels, n, cfg.kl_direction)?;
                    report.metrics.insert(format!("precision@{n}"), p);
                }
            }
        }
    }
    Ok(report)
}

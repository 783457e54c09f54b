//! One-axis sweeps over model settings, each value trained under several seeds.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::evalsuite::{EvalConfig, EvalReport};
use crate::pipeline::{data_hash, evaluate_model, fit, Dataset};
use crate::targets::mean_entropy;
use crate::topicmodel::{InputMode, LossMode, ModelConfig, TargetMode};
use crate::trainer::TrainConfig;
use crate::{Error, Result};

pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// Extra metric attached to every sweep row: mean entropy of the targets
/// the model was trained on.
pub const TARGET_ENTROPY: &str = "target_entropy";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Temperature,
    LossMode,
    TargetMode,
    InputMode,
    /// Named combinations of the three mode switches.
    Ablation,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Temperature => "temperature",
            SweepAxis::LossMode => "loss_mode",
            SweepAxis::TargetMode => "target_mode",
            SweepAxis::InputMode => "input_mode",
            SweepAxis::Ablation => "ablation",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "temperature" => Ok(SweepAxis::Temperature),
            "loss_mode" => Ok(SweepAxis::LossMode),
            "target_mode" => Ok(SweepAxis::TargetMode),
            "input_mode" => Ok(SweepAxis::InputMode),
            "ablation" => Ok(SweepAxis::Ablation),
            other => Err(Error::InvalidArgument(format!("unknown sweep axis `{other}`"))),
        }
    }
}

impl SweepAxis {
    pub fn default_values(self) -> Vec<String> {
        let v: &[&str] = match self {
            SweepAxis::Temperature => &["0.5", "1", "3", "5", "10"],
            SweepAxis::LossMode => &["kl", "nll"],
            SweepAxis::TargetMode => &["soft", "bow"],
            SweepAxis::InputMode => &["hidden", "external"],
            SweepAxis::Ablation => &["full", "nll", "nll+bow", "embeddings", "nll+bow+embeddings"],
        };
        v.iter().map(|s| s.to_string()).collect()
    }

    /// Returns `base` with this axis set to `value`. Data-dependent
    /// dimensions are left for the caller to fill in.
    pub fn apply(self, base: &ModelConfig, value: &str) -> Result<ModelConfig> {
        let mut cfg = base.clone();
        match self {
            SweepAxis::Temperature => {
                cfg.temperature = value
                    .parse()
                    .ok()
                    .filter(|t: &f64| *t > 0.0 && t.is_finite())
                    .ok_or_else(|| Error::InvalidArgument(format!("bad temperature `{value}`")))?;
            }
            SweepAxis::LossMode => cfg.loss_mode = value.parse()?,
            SweepAxis::TargetMode => cfg.target_mode = value.parse()?,
            SweepAxis::InputMode => cfg.input_mode = value.parse()?,
            SweepAxis::Ablation => value.parse::<Ablation>()?.apply(&mut cfg),
        }
        Ok(cfg)
    }
}

/// The full method and its ablations: NLL instead of KL, bag-of-words
/// instead of soft targets, and generic embeddings instead of LM states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    Full,
    Nll,
    NllBow,
    Embeddings,
    NllBowEmbeddings,
}

impl Ablation {
    pub fn apply(self, cfg: &mut ModelConfig) {
        let (loss, target, input) = match self {
            Ablation::Full => (LossMode::Kl, TargetMode::Soft, InputMode::Hidden),
            Ablation::Nll => (LossMode::Nll, TargetMode::Soft, InputMode::Hidden),
            Ablation::NllBow => (LossMode::Nll, TargetMode::Bow, InputMode::Hidden),
            Ablation::Embeddings => (LossMode::Kl, TargetMode::Soft, InputMode::External),
            Ablation::NllBowEmbeddings => (LossMode::Nll, TargetMode::Bow, InputMode::External),
        };
        cfg.loss_mode = loss;
        cfg.target_mode = target;
        cfg.input_mode = input;
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace(['_', '-'], "+");
        match norm.as_str() {
            "full" => Ok(Ablation::Full),
            "nll" => Ok(Ablation::Nll),
            "nll+bow" => Ok(Ablation::NllBow),
            "embeddings" => Ok(Ablation::Embeddings),
            "nll+bow+embeddings" => Ok(Ablation::NllBowEmbeddings),
            _ => Err(Error::InvalidArgument(format!("unknown ablation `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub axis: SweepAxis,
    pub value: String,
    pub seed: u64,
}

/// Cells in value-major order.
pub fn plan(axis: SweepAxis, values: &[String], seeds: &[u64]) -> Vec<SweepCell> {
    values
        .iter()
        .flat_map(|v| seeds.iter().map(move |&seed| SweepCell { axis, value: v.clone(), seed }))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub seed: u64,
    pub report: EvalReport,
    pub data_hash: String,
}

/// Everything a cell needs besides its axis value and seed.
#[derive(Debug, Clone)]
pub struct SweepBase<'a> {
    pub dataset: &'a Dataset,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub top_n: usize,
}

fn normalized_entropy(targets: &ndarray::Array2<f64>) -> f64 {
    let mut t = targets.clone();
    for mut row in t.rows_mut() {
        let s = row.sum();
        if s > 0.0 {
            row /= s;
        }
    }
    mean_entropy(&t)
}

pub fn run_cell(base: &SweepBase<'_>, cell: &SweepCell) -> Result<SweepRow> {
    let mut model = cell.axis.apply(&base.model, &cell.value)?;
    base.dataset.shape_config(&mut model)?;
    model.validate()?;
    let train_cfg = TrainConfig { seed: cell.seed, checkpoint_path: None, ..base.train.clone() };
    let data = base.dataset.training_data(&model)?;
    let entropy = normalized_entropy(&data.targets);
    let hash = data_hash(base.dataset, &model)?;
    let (params, _) = crate::trainer::train(&model, &train_cfg, &data)?;
    let mut report = evaluate_model(base.dataset, &model, &params, &base.eval, base.top_n, cell.seed)?;
    report.metrics.insert(TARGET_ENTROPY.into(), entropy);
    Ok(SweepRow { value: cell.value.clone(), seed: cell.seed, report, data_hash: hash })
}

/// Runs every cell in order.
pub fn sweep(base: &SweepBase<'_>, axis: SweepAxis, values: &[String], seeds: &[u64]) -> Result<Vec<SweepRow>> {
    plan(axis, values, seeds).iter().map(|c| run_cell(base, c)).collect()
}

/// Single train + eval with the base configuration, for comparison with a
/// one-value sweep.
pub fn direct_run(base: &SweepBase<'_>, seed: u64) -> Result<EvalReport> {
    let mut model = base.model.clone();
    base.dataset.shape_config(&mut model)?;
    let train_cfg = TrainConfig { seed, checkpoint_path: None, ..base.train.clone() };
    let (params, _) = fit(base.dataset, &model, &train_cfg)?;
    evaluate_model(base.dataset, &model, &params, &base.eval, base.top_n, seed)
}

/// `axis_value,seed,metric_name,value`, one line per metric per row.
pub fn write_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> Result<()> {
    writeln!(w, "axis_value,seed,metric_name,value")?;
    for row in rows {
        for (name, value) in &row.report.metrics {
            writeln!(w, "{},{},{},{}", row.value, row.seed, name, value)?;
        }
    }
    Ok(())
}

/// Per-value aggregate across seeds, in first-seen value order.
pub fn summarize(rows: &[SweepRow]) -> Vec<(String, EvalReport)> {
    let mut order: Vec<String> = Vec::new();
    for r in rows {
        if !order.contains(&r.value) {
            order.push(r.value.clone());
        }
    }
    order
        .into_iter()
        .map(|v| {
            let reports: Vec<EvalReport> =
                rows.iter().filter(|r| r.value == v).map(|r| r.report.clone()).collect();
            (v, EvalReport::aggregate(&reports))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_is_values_times_seeds() {
        let values = SweepAxis::Temperature.default_values();
        let cells = plan(SweepAxis::Temperature, &values, &DEFAULT_SEEDS);
        assert_eq!(cells.len(), 25);
        assert_eq!(cells[5].value, "1");
        assert_eq!(cells[5].seed, 0);
    }

    #[test]
    fn named_ablations_set_all_three_switches() {
        let base = ModelConfig::new(3, 4, 5);
        let c = SweepAxis::Ablation.apply(&base, "NLL+BoW+Embeddings").unwrap();
        assert_eq!((c.loss_mode, c.target_mode, c.input_mode), (LossMode::Nll, TargetMode::Bow, InputMode::External));
        let c = SweepAxis::Ablation.apply(&base, "nll").unwrap();
        assert_eq!((c.loss_mode, c.target_mode, c.input_mode), (LossMode::Nll, TargetMode::Soft, InputMode::Hidden));
        assert!(SweepAxis::Ablation.apply(&base, "bow-only").is_err());
    }

    #[test]
    fn bad_temperature_is_rejected() {
        let base = ModelConfig::new(3, 4, 5);
        assert!(SweepAxis::Temperature.apply(&base, "0").is_err());
        assert!(SweepAxis::Temperature.apply(&base, "warm").is_err());
    }
}

//! Mini-batch training with Adam and cosine learning-rate decay.

use std::path::PathBuf;
use std::time::Instant;

use log::{info, warn};
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::corpus::BowVector;
use crate::seed::child_rng;
use crate::targets::bow_targets;
use crate::topicmodel::{
    loss_and_gradients, Batch, LossMode, ModelConfig, ModelParams, StepNoise, TargetMode, Weights,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    Cosine,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub lr_schedule: LrSchedule,
    pub seed: u64,
    /// Written after the final epoch (and every `checkpoint_every` epochs).
    pub checkpoint_path: Option<PathBuf>,
    pub checkpoint_every: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-3,
            epochs: 100,
            batch_size: 64,
            adam: AdamConfig::default(),
            lr_schedule: LrSchedule::Cosine,
            seed: 0,
            checkpoint_path: None,
            checkpoint_every: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::InvalidArgument("checkpoint_every must be positive".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Weights,
    pub v: Weights,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &Weights) -> Self {
        Self { m: Weights::zeros_like(params), v: Weights::zeros_like(params), step: 0 }
    }
}

/// One bias-corrected Adam update. Parameters are left untouched if any
/// block would become non-finite.
pub fn adam_step(
    params: &mut Weights,
    grads: &Weights,
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    let step = state.step + 1;
    let bc1 = 1.0 - cfg.beta1.powi(step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(step as i32);

    let mut m = state.m.clone();
    let mut v = state.v.clone();
    m.zip_blocks_mut(grads, |_, m, g| {
        for (m, g) in m.iter_mut().zip(g) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        }
    });
    v.zip_blocks_mut(grads, |_, v, g| {
        for (v, g) in v.iter_mut().zip(g) {
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        }
    });

    let mut updated = params.clone();
    let mut deltas = Weights::zeros_like(params);
    deltas.zip_blocks_mut(&m, |_, d, m| d.copy_from_slice(m));
    deltas.zip_blocks_mut(&v, |_, d, v| {
        for (d, v) in d.iter_mut().zip(v) {
            let m_hat = *d / bc1;
            let v_hat = v / bc2;
            *d = lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    });
    let mut bad = None;
    updated.zip_blocks_mut(&deltas, |name, p, d| {
        for (p, d) in p.iter_mut().zip(d) {
            *p -= d;
            if !p.is_finite() && bad.is_none() {
                bad = Some(name.to_owned());
            }
        }
    });
    if let Some(block) = bad {
        return Err(Error::NonFiniteUpdate { block });
    }
    *params = updated;
    state.m = m;
    state.v = v;
    state.step = step;
    Ok(())
}

/// `base · ½(1 + cos(π · step / total))`, clamped at zero.
pub fn cosine_lr(step: usize, total_steps: usize, base_lr: f64) -> f64 {
    if total_steps == 0 {
        return base_lr;
    }
    let frac = (step.min(total_steps)) as f64 / total_steps as f64;
    (base_lr * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())).max(0.0)
}

/// Embeddings and the matching reconstruction targets, already shaped for
/// the configured loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    pub embeddings: Array2<f64>,
    pub targets: Array2<f64>,
    /// Original corpus row of each training row.
    pub rows: Vec<usize>,
}

impl TrainingData {
    /// Selects targets for `config.target_mode` / `config.loss_mode`.
    ///
    /// Soft targets are used as distributions (KL) or word weights (NLL).
    /// Bag-of-words rows become normalized distributions (KL) or raw counts
    /// (NLL); documents with no in-vocabulary tokens are dropped.
    pub fn prepare(
        config: &ModelConfig,
        embeddings: &Array2<f64>,
        soft_targets: Option<&Array2<f64>>,
        bows: Option<&[BowVector]>,
    ) -> Result<Self> {
        let n = embeddings.nrows();
        match config.target_mode {
            TargetMode::Soft => {
                let targets = soft_targets.ok_or_else(|| {
                    Error::InvalidArgument("target_mode=soft requires soft targets".into())
                })?;
                if targets.nrows() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "{n} embedding rows but {} target rows",
                        targets.nrows()
                    )));
                }
                Ok(Self { embeddings: embeddings.clone(), targets: targets.clone(), rows: (0..n).collect() })
            }
            TargetMode::Bow => {
                let bows = bows.ok_or_else(|| {
                    Error::InvalidArgument("target_mode=bow requires bag-of-words vectors".into())
                })?;
                if bows.len() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "{n} embedding rows but {} bag-of-words rows",
                        bows.len()
                    )));
                }
                let mut rows = Vec::with_capacity(n);
                let mut target_rows = Vec::with_capacity(n);
                for (d, bow) in bows.iter().enumerate() {
                    let row = match config.loss_mode {
                        LossMode::Kl => match bow_targets(bow, config.vocab_size) {
                            Ok(row) => row,
                            Err(Error::EmptyDocument) => continue,
                            Err(e) => return Err(e),
                        },
                        LossMode::Nll => {
                            if bow.is_empty() {
                                continue;
                            }
                            let mut row = ndarray::Array1::zeros(config.vocab_size);
                            for (i, c) in bow.iter() {
                                row[i] = f64::from(c);
                            }
                            row
                        }
                    };
                    rows.push(d);
                    target_rows.push(row);
                }
                if rows.len() < n {
                    warn!("excluded {} documents with empty bag-of-words", n - rows.len());
                }
                if rows.is_empty() {
                    return Err(Error::EmptyCorpus);
                }
                let mut targets = Array2::zeros((rows.len(), config.vocab_size));
                for (mut dst, src) in targets.rows_mut().into_iter().zip(&target_rows) {
                    dst.assign(src);
                }
                Ok(Self { embeddings: embeddings.select(Axis(0), &rows), targets, rows })
            }
        }
    }

    pub fn len(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.nrows() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total_loss: f64,
    pub recon_term: f64,
    pub prior_term: f64,
    pub lr: f64,
}

impl EpochRecord {
    /// `epoch,total_loss,recon_term,prior_term,lr`
    pub fn log_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.epoch, self.total_loss, self.recon_term, self.prior_term, self.lr
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub steps: usize,
    pub wall_clock_secs: f64,
    pub checkpoint: Option<PathBuf>,
}

pub fn total_steps(epochs: usize, rows: usize, batch_size: usize) -> usize {
    epochs * rows.div_ceil(batch_size)
}

pub fn train(
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    data: &TrainingData,
) -> Result<(ModelParams, TrainReport)> {
    model_config.validate()?;
    train_config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if data.embeddings.ncols() != model_config.input_dim {
        return Err(Error::DimensionMismatch(format!(
            "embeddings have {} features, model expects {}",
            data.embeddings.ncols(),
            model_config.input_dim
        )));
    }
    if data.targets.dim() != (data.len(), model_config.vocab_size) {
        return Err(Error::DimensionMismatch(format!(
            "targets are {:?}, expected ({}, {})",
            data.targets.dim(),
            data.len(),
            model_config.vocab_size
        )));
    }

    let started = Instant::now();
    let mut params = ModelParams::init(model_config, &mut child_rng(train_config.seed, "init"));
    let mut rng = child_rng(train_config.seed, "trainer");
    let mut adam = AdamState::new(&params.weights);

    let n = data.len();
    let total = total_steps(train_config.epochs, n, train_config.batch_size);
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0usize;
    let mut records = Vec::with_capacity(train_config.epochs);

    for epoch in 0..train_config.epochs {
        order.shuffle(&mut rng);
        let (mut sum_total, mut sum_recon, mut sum_prior) = (0.0, 0.0, 0.0);
        let mut lr = train_config.learning_rate;
        for (batch_idx, idx) in order.chunks(train_config.batch_size).enumerate() {
            let x = data.embeddings.select(Axis(0), idx);
            let y = data.targets.select(Axis(0), idx);
            let batch = Batch { embeddings: x.view(), targets: y.view() };
            let noise = StepNoise::draw(idx.len(), model_config, &mut rng);
            lr = match train_config.lr_schedule {
                LrSchedule::Cosine => cosine_lr(step, total, train_config.learning_rate),
                LrSchedule::Constant => train_config.learning_rate,
            };
            let (loss, grads, stats) = loss_and_gradients(batch, &params, model_config, &noise)?;
            if !loss.total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: batch_idx });
            }
            adam_step(&mut params.weights, &grads, &mut adam, lr, &train_config.adam)?;
            if let (Some(bn), Some(stats)) = (params.batchnorm.as_mut(), stats) {
                bn.update(&stats.mean, &stats.var_unbiased);
            }
            let w = idx.len() as f64;
            sum_total += w * loss.total;
            sum_recon += w * loss.recon;
            sum_prior += w * loss.prior;
            step += 1;
        }
        let record = EpochRecord {
            epoch: epoch + 1,
            total_loss: sum_total / n as f64,
            recon_term: sum_recon / n as f64,
            prior_term: sum_prior / n as f64,
            lr,
        };
        info!("{}", record.log_line());
        records.push(record);

        if let (Some(path), Some(every)) = (&train_config.checkpoint_path, train_config.checkpoint_every) {
            if (epoch + 1) % every == 0 && epoch + 1 < train_config.epochs {
                checkpoint::save(&path.with_extension(format!("epoch{}.bin", epoch + 1)), model_config, &params)?;
            }
        }
    }

    if let Some(path) = &train_config.checkpoint_path {
        checkpoint::save(path, model_config, &params)?;
    }
    Ok((
        params,
        TrainReport {
            epochs: records,
            steps: step,
            wall_clock_secs: started.elapsed().as_secs_f64(),
            checkpoint: train_config.checkpoint_path.clone(),
        },
    ))
}

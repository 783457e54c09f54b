//! Forward pass and hand-written reverse-mode gradients.
//!
//! Shapes: `B` documents per batch, `D` input features, `H` hidden units,
//! `K` topics, `V` vocabulary words.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::StandardNormal;

use super::config::{LossMode, ModelConfig};
use super::loss::PROB_FLOOR;
use super::params::{BatchNormState, ModelParams, Weights};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub mu: Array1<f64>,
    pub logvar: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicDistribution {
    pub theta: Array1<f64>,
}

/// Random draws consumed by one forward pass: inverted-dropout multipliers
/// on the last hidden layer and the reparameterization noise.
#[derive(Debug, Clone, PartialEq)]
pub struct StepNoise {
    /// `B × H`, entries `0` or `1 / (1 - rate)`.
    pub dropout: Option<Array2<f64>>,
    /// `B × K` standard normal.
    pub eps: Array2<f64>,
}

impl StepNoise {
    pub fn draw<R: Rng + ?Sized>(batch: usize, config: &ModelConfig, rng: &mut R) -> Self {
        let dropout = (config.dropout_rate > 0.0).then(|| {
            let keep = 1.0 - config.dropout_rate;
            Array2::from_shape_simple_fn((batch, config.hidden_dim), || {
                if rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
        });
        let eps = Array2::from_shape_simple_fn((batch, config.num_topics), || rng.sample(StandardNormal));
        Self { dropout, eps }
    }

    /// No dropout, zero reparameterization noise.
    pub fn none(batch: usize, config: &ModelConfig) -> Self {
        Self { dropout: None, eps: Array2::zeros((batch, config.num_topics)) }
    }
}

/// Documents and their reconstruction targets. In KL mode each target row is
/// a distribution; in NLL mode it holds the per-word weights (raw counts for
/// bag-of-words, probabilities for soft targets).
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub embeddings: ArrayView2<'a, f64>,
    pub targets: ArrayView2<'a, f64>,
}

impl Batch<'_> {
    pub fn len(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.nrows() == 0
    }
}

/// Batch means of the objective and its two terms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    /// Unweighted mean reconstruction loss.
    pub recon: f64,
    /// Mean prior KL (reported even when detached).
    pub prior: f64,
}

/// Decoder batch statistics, for updating the running averages.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Array1<f64>,
    pub var_unbiased: Array1<f64>,
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(v: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = v.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let mut out = v.mapv(|x| (x - max).exp());
    let s = out.sum();
    out /= s;
    out
}

fn log_softmax_rows(m: &Array2<f64>) -> Array2<f64> {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &x| a.max(x));
        let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|x| x - lse);
    }
    out
}

fn softmax_rows(m: &Array2<f64>) -> Array2<f64> {
    log_softmax_rows(m).mapv(f64::exp)
}

fn check_input(x: ArrayView2<'_, f64>, weights: &Weights) -> Result<()> {
    if x.ncols() != weights.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "embedding has {} features, model expects {}",
            x.ncols(),
            weights.input_dim()
        )));
    }
    for ((row, col), v) in x.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFiniteInput { row, col });
        }
    }
    Ok(())
}

struct EncoderPass {
    /// Layer inputs; `inputs[0]` is the embedding batch.
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    /// Last hidden activation after dropout.
    hidden: Array2<f64>,
    mu: Array2<f64>,
    logvar: Array2<f64>,
}

fn encode_batch(x: ArrayView2<'_, f64>, weights: &Weights, dropout: Option<&Array2<f64>>) -> EncoderPass {
    let mut inputs = Vec::with_capacity(weights.encoder.len());
    let mut pre = Vec::with_capacity(weights.encoder.len());
    let mut h = x.to_owned();
    for layer in &weights.encoder {
        let a = h.dot(&layer.weight.t()) + &layer.bias;
        let next = a.mapv(softplus);
        inputs.push(h);
        pre.push(a);
        h = next;
    }
    if let Some(mask) = dropout {
        h *= mask;
    }
    let mu = h.dot(&weights.mu_head.weight.t()) + &weights.mu_head.bias;
    let logvar = h.dot(&weights.logvar_head.weight.t()) + &weights.logvar_head.bias;
    EncoderPass { inputs, pre, hidden: h, mu, logvar }
}

enum Normalization {
    None,
    Batch { mean: Array1<f64>, var: Array1<f64>, inv_std: Array1<f64> },
    Running { inv_std: Array1<f64> },
}

fn normalize(
    logits: &Array2<f64>,
    bn: Option<&BatchNormState>,
    training: bool,
) -> (Array2<f64>, Normalization) {
    let Some(bn) = bn else {
        return (logits.clone(), Normalization::None);
    };
    if training && logits.nrows() >= 2 {
        let mean = logits.mean_axis(Axis(0)).expect("non-empty batch");
        let centered = logits - &mean;
        let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty batch");
        let inv_std = var.mapv(|v| 1.0 / (v + bn.eps).sqrt());
        let u = centered * &inv_std;
        (u, Normalization::Batch { mean, var, inv_std })
    } else {
        let inv_std = bn.running_var.mapv(|v| 1.0 / (v + bn.eps).sqrt());
        let u = (logits - &bn.running_mean) * &inv_std;
        (u, Normalization::Running { inv_std })
    }
}

/// Topic proportions to word distributions for a batch of `theta` rows.
pub fn decode_batch(theta: ArrayView2<'_, f64>, params: &ModelParams, training: bool) -> Array2<f64> {
    let logits = theta.dot(&params.weights.beta);
    let (u, _) = normalize(&logits, params.batchnorm.as_ref(), training);
    softmax_rows(&u)
}

/// Inference-mode decoder (running batch-norm statistics).
pub fn decode(theta: &TopicDistribution, params: &ModelParams) -> Array1<f64> {
    let row = theta.theta.view().insert_axis(Axis(0));
    decode_batch(row, params, false).row(0).to_owned()
}

/// Encodes one embedding. Dropout is drawn from `rng` only when training.
pub fn encode<R: Rng + ?Sized>(
    x: ArrayView1<'_, f64>,
    params: &ModelParams,
    config: &ModelConfig,
    training: bool,
    rng: &mut R,
) -> Result<Posterior> {
    let x = x.insert_axis(Axis(0));
    check_input(x, &params.weights)?;
    let dropout = if training {
        StepNoise::draw(1, config, rng).dropout
    } else {
        None
    };
    let pass = encode_batch(x, &params.weights, dropout.as_ref());
    Ok(Posterior { mu: pass.mu.row(0).to_owned(), logvar: pass.logvar.row(0).to_owned() })
}

/// `softmax(mu + exp(logvar / 2) ⊙ ε)`.
pub fn sample_theta<R: Rng + ?Sized>(post: &Posterior, rng: &mut R) -> TopicDistribution {
    let z = Array1::from_shape_fn(post.mu.len(), |k| {
        let e: f64 = rng.sample(StandardNormal);
        post.mu[k] + (0.5 * post.logvar[k]).exp() * e
    });
    TopicDistribution { theta: softmax(z.view()) }
}

/// Mean of `config.inference_samples` topic draws with dropout off.
pub fn infer_theta<R: Rng + ?Sized>(
    x: ArrayView1<'_, f64>,
    params: &ModelParams,
    config: &ModelConfig,
    rng: &mut R,
) -> Result<TopicDistribution> {
    let post = encode(x, params, config, false, rng)?;
    Ok(average_samples(&post, config.inference_samples, rng))
}

pub fn average_samples<R: Rng + ?Sized>(post: &Posterior, samples: usize, rng: &mut R) -> TopicDistribution {
    let mut acc = Array1::zeros(post.mu.len());
    for _ in 0..samples {
        acc += &sample_theta(post, rng).theta;
    }
    let s = acc.sum();
    acc /= s;
    TopicDistribution { theta: acc }
}

/// Inferred topic proportions for every row of `embeddings`.
pub fn infer_theta_matrix<R: Rng + ?Sized>(
    embeddings: ArrayView2<'_, f64>,
    params: &ModelParams,
    config: &ModelConfig,
    rng: &mut R,
) -> Result<Array2<f64>> {
    check_input(embeddings, &params.weights)?;
    let pass = encode_batch(embeddings, &params.weights, None);
    let mut theta = Array2::zeros((embeddings.nrows(), config.num_topics));
    for (d, mut row) in theta.rows_mut().into_iter().enumerate() {
        let post = Posterior { mu: pass.mu.row(d).to_owned(), logvar: pass.logvar.row(d).to_owned() };
        row.assign(&average_samples(&post, config.inference_samples, rng).theta);
    }
    Ok(theta)
}

struct ForwardPass {
    enc: EncoderPass,
    sigma: Array2<f64>,
    theta: Array2<f64>,
    norm: Normalization,
    u: Array2<f64>,
    log_p: Array2<f64>,
    recon: Array1<f64>,
    prior: Array1<f64>,
    loss: LossBreakdown,
}

fn forward(
    batch: Batch<'_>,
    params: &ModelParams,
    config: &ModelConfig,
    noise: &StepNoise,
    training: bool,
) -> Result<ForwardPass> {
    let w = &params.weights;
    check_input(batch.embeddings, w)?;
    let b = batch.len();
    if b == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if batch.targets.dim() != (b, w.vocab_size()) {
        return Err(Error::DimensionMismatch(format!(
            "targets are {:?}, expected ({b}, {})",
            batch.targets.dim(),
            w.vocab_size()
        )));
    }
    if noise.eps.dim() != (b, w.num_topics()) {
        return Err(Error::DimensionMismatch("noise does not match batch".into()));
    }

    let enc = encode_batch(batch.embeddings, w, noise.dropout.as_ref());
    let sigma = enc.logvar.mapv(|lv| (0.5 * lv).exp());
    let z = &enc.mu + &(&sigma * &noise.eps);
    let theta = softmax_rows(&z);
    let logits = theta.dot(&w.beta);
    let (u, norm) = normalize(&logits, params.batchnorm.as_ref(), training);
    let log_p = log_softmax_rows(&u);

    let log_floor = PROB_FLOOR.ln();
    let mut recon = Array1::zeros(b);
    for d in 0..b {
        let lp = log_p.row(d);
        let t = batch.targets.row(d);
        recon[d] = match config.loss_mode {
            LossMode::Kl => lp
                .iter()
                .zip(t.iter())
                .map(|(&l, &y)| {
                    let p = l.exp();
                    if p > 0.0 {
                        p * (l - y.max(PROB_FLOOR).ln())
                    } else {
                        0.0
                    }
                })
                .sum(),
            LossMode::Nll => -lp.iter().zip(t.iter()).map(|(&l, &c)| c * l.max(log_floor)).sum::<f64>(),
        };
    }

    let prior_var = w.prior_logvar.mapv(f64::exp);
    let mut prior = Array1::zeros(b);
    for d in 0..b {
        let mut kl = 0.0;
        for k in 0..w.num_topics() {
            let diff = enc.mu[[d, k]] - w.prior_mu[k];
            let var = sigma[[d, k]] * sigma[[d, k]];
            kl += (var + diff * diff) / prior_var[k] - 1.0 + w.prior_logvar[k] - enc.logvar[[d, k]];
        }
        prior[d] = 0.5 * kl;
    }

    let recon_mean = recon.mean().unwrap();
    let prior_mean = prior.mean().unwrap();
    let prior_weight = if config.detach_prior { 0.0 } else { 1.0 };
    let loss = LossBreakdown {
        total: config.reconstruction_weight() * recon_mean + prior_weight * prior_mean,
        recon: recon_mean,
        prior: prior_mean,
    };
    Ok(ForwardPass { enc, sigma, theta, norm, u, log_p, recon, prior, loss })
}

fn backward(
    fwd: &ForwardPass,
    batch: Batch<'_>,
    params: &ModelParams,
    config: &ModelConfig,
    noise: &StepNoise,
) -> Weights {
    let w = &params.weights;
    let b = batch.len();
    let scale = 1.0 / b as f64;
    let p = fwd.log_p.mapv(f64::exp);

    // d loss / d normalized logits
    let mut du = Array2::zeros(p.dim());
    match config.loss_mode {
        LossMode::Kl => {
            let coef = scale * config.reconstruction_weight();
            for d in 0..b {
                let kl = fwd.recon[d];
                for v in 0..p.ncols() {
                    let pv = p[[d, v]];
                    if pv > 0.0 {
                        let r = fwd.log_p[[d, v]] - batch.targets[[d, v]].max(PROB_FLOOR).ln();
                        du[[d, v]] = coef * pv * (r - kl);
                    }
                }
            }
        }
        LossMode::Nll => {
            let log_floor = PROB_FLOOR.ln();
            for d in 0..b {
                let mut active_weight = 0.0;
                for v in 0..p.ncols() {
                    if fwd.log_p[[d, v]] >= log_floor {
                        active_weight += batch.targets[[d, v]];
                        du[[d, v]] -= scale * batch.targets[[d, v]];
                    }
                }
                for v in 0..p.ncols() {
                    du[[d, v]] += scale * active_weight * p[[d, v]];
                }
            }
        }
    }

    let dlogits = match &fwd.norm {
        Normalization::None => du,
        Normalization::Running { inv_std } => du * inv_std,
        Normalization::Batch { inv_std, .. } => {
            let mean_du = du.mean_axis(Axis(0)).unwrap();
            let mean_du_u = (&du * &fwd.u).mean_axis(Axis(0)).unwrap();
            let mut out = du - &mean_du;
            out -= &(&fwd.u * &mean_du_u);
            out * inv_std
        }
    };

    let mut grads = Weights::zeros_like(w);
    grads.beta = standard(fwd.theta.t().dot(&dlogits));
    let dtheta = dlogits.dot(&w.beta.t());

    // softmax backward
    let mut dz = Array2::zeros(dtheta.dim());
    for d in 0..b {
        let dot: f64 = fwd.theta.row(d).dot(&dtheta.row(d));
        for k in 0..dz.ncols() {
            dz[[d, k]] = fwd.theta[[d, k]] * (dtheta[[d, k]] - dot);
        }
    }

    let mut dmu = dz.clone();
    let mut dlogvar = &dz * &noise.eps * &fwd.sigma * 0.5;
    if !config.detach_prior {
        let prior_var = w.prior_logvar.mapv(f64::exp);
        for d in 0..b {
            for k in 0..w.num_topics() {
                let diff = fwd.enc.mu[[d, k]] - w.prior_mu[k];
                let var = fwd.sigma[[d, k]] * fwd.sigma[[d, k]];
                dmu[[d, k]] += scale * diff / prior_var[k];
                dlogvar[[d, k]] += scale * 0.5 * (var / prior_var[k] - 1.0);
                grads.prior_mu[k] -= scale * diff / prior_var[k];
                grads.prior_logvar[k] += scale * 0.5 * (1.0 - (var + diff * diff) / prior_var[k]);
            }
        }
    }

    grads.mu_head.weight = standard(dmu.t().dot(&fwd.enc.hidden));
    grads.mu_head.bias = dmu.sum_axis(Axis(0));
    grads.logvar_head.weight = standard(dlogvar.t().dot(&fwd.enc.hidden));
    grads.logvar_head.bias = dlogvar.sum_axis(Axis(0));

    let mut dh = dmu.dot(&w.mu_head.weight) + dlogvar.dot(&w.logvar_head.weight);
    if let Some(mask) = &noise.dropout {
        dh *= mask;
    }
    for l in (0..w.encoder.len()).rev() {
        let mut dpre = dh;
        Zip::from(&mut dpre).and(&fwd.enc.pre[l]).for_each(|g, &a| *g *= sigmoid(a));
        grads.encoder[l].weight = standard(dpre.t().dot(&fwd.enc.inputs[l]));
        grads.encoder[l].bias = dpre.sum_axis(Axis(0));
        dh = dpre.dot(&w.encoder[l].weight);
    }
    grads
}

/// Products of transposed views may come back column-major; parameter
/// blocks are addressed as row-major slices.
fn standard(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

fn batch_stats(fwd: &ForwardPass) -> Option<BatchStats> {
    match &fwd.norm {
        Normalization::Batch { mean, var, .. } => {
            let n = fwd.theta.nrows() as f64;
            Some(BatchStats { mean: mean.clone(), var_unbiased: var * (n / (n - 1.0)) })
        }
        _ => None,
    }
}

/// Training-mode loss under fixed noise.
pub fn loss_with_noise(
    batch: Batch<'_>,
    params: &ModelParams,
    config: &ModelConfig,
    noise: &StepNoise,
) -> Result<LossBreakdown> {
    Ok(forward(batch, params, config, noise, true)?.loss)
}

/// Per-document `(reconstruction, prior KL)` in training mode under fixed noise.
pub fn per_document_terms(
    batch: Batch<'_>,
    params: &ModelParams,
    config: &ModelConfig,
    noise: &StepNoise,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let fwd = forward(batch, params, config, noise, true)?;
    Ok((fwd.recon, fwd.prior))
}

/// Loss, exact gradients and batch-norm statistics under fixed noise.
pub fn loss_and_gradients(
    batch: Batch<'_>,
    params: &ModelParams,
    config: &ModelConfig,
    noise: &StepNoise,
) -> Result<(LossBreakdown, Weights, Option<BatchStats>)> {
    let fwd = forward(batch, params, config, noise, true)?;
    let grads = backward(&fwd, batch, params, config, noise);
    if let Some(block) = grads.first_non_finite_block() {
        return Err(Error::NonFiniteGradient { block });
    }
    Ok((fwd.loss, grads, batch_stats(&fwd)))
}

/// Objective of one training step; draws its noise from `rng`.
pub fn total_loss<R: Rng + ?Sized>(
    batch: Batch<'_>,
    params: &ModelParams,
    config: &ModelConfig,
    rng: &mut R,
) -> Result<LossBreakdown> {
    let noise = StepNoise::draw(batch.len(), config, rng);
    loss_with_noise(batch, params, config, &noise)
}

/// Gradients of [`total_loss`]; an identically seeded `rng` sees the same noise.
pub fn gradients<R: Rng + ?Sized>(
    batch: Batch<'_>,
    params: &ModelParams,
    config: &ModelConfig,
    rng: &mut R,
) -> Result<Weights> {
    let noise = StepNoise::draw(batch.len(), config, rng);
    Ok(loss_and_gradients(batch, params, config, &noise)?.1)
}

/// Word distributions a trained model assigns to each document, in inference mode.
pub fn reconstruct(theta: ArrayView2<'_, f64>, params: &ModelParams) -> Array2<f64> {
    decode_batch(theta, params, false)
}

use ndarray::{Array1, Array2, Zip};
use rand::Rng;

use super::config::ModelConfig;

/// `y = W x + b` with `W` stored output-major (`out × in`).
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Affine {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self { weight: Array2::zeros((output, input)), bias: Array1::zeros(output) }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        Self { weight: glorot_matrix(output, input, input, output, rng), bias: Array1::zeros(output) }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }
}

fn glorot_matrix<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-limit..=limit))
}

/// Every trainable tensor. Also used for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub encoder: Vec<Affine>,
    pub mu_head: Affine,
    pub logvar_head: Affine,
    /// Topic–word matrix, `K × |V|`.
    pub beta: Array2<f64>,
    pub prior_mu: Array1<f64>,
    pub prior_logvar: Array1<f64>,
}

impl Weights {
    pub fn zeros_like(other: &Weights) -> Self {
        let mut w = other.clone();
        w.for_each_block_mut(|_, block| block.fill(0.0));
        w
    }

    pub fn num_topics(&self) -> usize {
        self.beta.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.beta.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.encoder[0].input_dim()
    }

    /// Visits `(name, values)` in the fixed checkpoint order.
    pub fn for_each_block<'a>(&'a self, mut f: impl FnMut(String, &'a [f64])) {
        for (i, layer) in self.encoder.iter().enumerate() {
            f(format!("encoder.{i}.weight"), slice(&layer.weight));
            f(format!("encoder.{i}.bias"), layer.bias.as_slice().unwrap());
        }
        f("mu_head.weight".into(), slice(&self.mu_head.weight));
        f("mu_head.bias".into(), self.mu_head.bias.as_slice().unwrap());
        f("logvar_head.weight".into(), slice(&self.logvar_head.weight));
        f("logvar_head.bias".into(), self.logvar_head.bias.as_slice().unwrap());
        f("beta".into(), slice(&self.beta));
        f("prior_mu".into(), self.prior_mu.as_slice().unwrap());
        f("prior_logvar".into(), self.prior_logvar.as_slice().unwrap());
    }

    pub fn for_each_block_mut(&mut self, mut f: impl FnMut(String, &mut [f64])) {
        for (i, layer) in self.encoder.iter_mut().enumerate() {
            f(format!("encoder.{i}.weight"), slice_mut(&mut layer.weight));
            f(format!("encoder.{i}.bias"), layer.bias.as_slice_mut().unwrap());
        }
        f("mu_head.weight".into(), slice_mut(&mut self.mu_head.weight));
        f("mu_head.bias".into(), self.mu_head.bias.as_slice_mut().unwrap());
        f("logvar_head.weight".into(), slice_mut(&mut self.logvar_head.weight));
        f("logvar_head.bias".into(), self.logvar_head.bias.as_slice_mut().unwrap());
        f("beta".into(), slice_mut(&mut self.beta));
        f("prior_mu".into(), self.prior_mu.as_slice_mut().unwrap());
        f("prior_logvar".into(), self.prior_logvar.as_slice_mut().unwrap());
    }

    /// Walks two same-shaped weight sets block by block.
    pub fn zip_blocks_mut(&mut self, other: &Weights, mut f: impl FnMut(&str, &mut [f64], &[f64])) {
        let mut theirs = Vec::new();
        other.for_each_block(|_, b| theirs.push(b));
        let mut it = theirs.into_iter();
        self.for_each_block_mut(|name, mine| {
            let other = it.next().expect("weight sets have the same block layout");
            assert_eq!(mine.len(), other.len(), "block `{name}` shape mismatch");
            f(&name, mine, other);
        });
    }

    pub fn block_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.for_each_block(|n, _| names.push(n));
        names
    }

    /// `(name, L2 norm)` per block.
    pub fn block_norms(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        self.for_each_block(|n, b| out.push((n, b.iter().map(|v| v * v).sum::<f64>().sqrt())));
        out
    }

    pub fn first_non_finite_block(&self) -> Option<String> {
        let mut bad = None;
        self.for_each_block(|n, b| {
            if bad.is_none() && b.iter().any(|v| !v.is_finite()) {
                bad = Some(n);
            }
        });
        bad
    }
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameters are stored contiguously")
}

fn slice_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are stored contiguously")
}

/// Per-word running statistics of the decoder batch normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormState {
    pub fn new(size: usize, momentum: f64, eps: f64) -> Self {
        Self { running_mean: Array1::zeros(size), running_var: Array1::ones(size), momentum, eps }
    }

    /// `running = momentum * running + (1 - momentum) * batch`.
    pub fn update(&mut self, batch_mean: &Array1<f64>, batch_var_unbiased: &Array1<f64>) {
        let m = self.momentum;
        Zip::from(&mut self.running_mean)
            .and(batch_mean)
            .for_each(|r, &b| *r = m * *r + (1.0 - m) * b);
        Zip::from(&mut self.running_var)
            .and(batch_var_unbiased)
            .for_each(|r, &b| *r = m * *r + (1.0 - m) * b);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub weights: Weights,
    /// `None` when the decoder runs without batch normalization.
    pub batchnorm: Option<BatchNormState>,
}

impl ModelParams {
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Self {
        let mut encoder = Vec::with_capacity(config.hidden_layers);
        let mut fan_in = config.input_dim;
        for _ in 0..config.hidden_layers {
            encoder.push(Affine::glorot(fan_in, config.hidden_dim, rng));
            fan_in = config.hidden_dim;
        }
        let k = config.num_topics;
        let mu_head = Affine::glorot(config.hidden_dim, k, rng);
        let logvar_head = Affine::glorot(config.hidden_dim, k, rng);
        let beta = glorot_matrix(k, config.vocab_size, k, config.vocab_size, rng);
        let (prior_mu, prior_logvar) = laplace_prior(k, config.alpha());
        let batchnorm = config.decoder_batchnorm.then(|| {
            BatchNormState::new(config.vocab_size, config.batchnorm_momentum, config.batchnorm_eps)
        });
        Self {
            weights: Weights { encoder, mu_head, logvar_head, beta, prior_mu, prior_logvar },
            batchnorm,
        }
    }

    /// All-zero network with the Laplace prior; handy for closed-form checks.
    pub fn zeros(config: &ModelConfig) -> Self {
        let mut encoder = Vec::with_capacity(config.hidden_layers);
        let mut fan_in = config.input_dim;
        for _ in 0..config.hidden_layers {
            encoder.push(Affine::zeros(fan_in, config.hidden_dim));
            fan_in = config.hidden_dim;
        }
        let k = config.num_topics;
        let (prior_mu, prior_logvar) = laplace_prior(k, config.alpha());
        Self {
            weights: Weights {
                encoder,
                mu_head: Affine::zeros(config.hidden_dim, k),
                logvar_head: Affine::zeros(config.hidden_dim, k),
                beta: Array2::zeros((k, config.vocab_size)),
                prior_mu,
                prior_logvar,
            },
            batchnorm: config.decoder_batchnorm.then(|| {
                BatchNormState::new(config.vocab_size, config.batchnorm_momentum, config.batchnorm_eps)
            }),
        }
    }
}

/// Laplace approximation of a symmetric Dirichlet(α) in softmax basis:
/// zero mean, variance `(K-1) / (αK)`. A single topic has no free
/// coordinate, so its variance is pinned to one.
pub fn laplace_prior(num_topics: usize, alpha: f64) -> (Array1<f64>, Array1<f64>) {
    let k = num_topics as f64;
    let var = if num_topics > 1 { (k - 1.0) / (alpha * k) } else { 1.0 };
    (Array1::zeros(num_topics), Array1::from_elem(num_topics, var.ln()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn prior_matches_laplace_formula() {
        let (mu, logvar) = laplace_prior(4, 0.25);
        assert!(mu.iter().all(|&m| m == 0.0));
        // (4 - 1) / (0.25 * 4) = 3
        assert!((logvar[0] - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn glorot_bounds_and_shapes() {
        let cfg = ModelConfig::new(3, 5, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = ModelParams::init(&cfg, &mut rng);
        assert_eq!(p.weights.encoder[0].weight.dim(), (200, 5));
        assert_eq!(p.weights.encoder[1].weight.dim(), (200, 200));
        assert_eq!(p.weights.beta.dim(), (3, 7));
        let limit = (6.0f64 / 205.0).sqrt();
        assert!(p.weights.encoder[0].weight.iter().all(|v| v.abs() <= limit));
        assert!(p.weights.encoder[0].bias.iter().all(|&v| v == 0.0));
        assert!(p.batchnorm.as_ref().unwrap().running_var.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn block_names_are_stable() {
        let mut cfg = ModelConfig::new(2, 3, 4);
        cfg.hidden_layers = 1;
        let p = ModelParams::zeros(&cfg);
        assert_eq!(
            p.weights.block_names(),
            [
                "encoder.0.weight",
                "encoder.0.bias",
                "mu_head.weight",
                "mu_head.bias",
                "logvar_head.weight",
                "logvar_head.bias",
                "beta",
                "prior_mu",
                "prior_logvar"
            ]
        );
    }
}

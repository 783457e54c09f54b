//! ProdLDA-style variational topic model.
//!
//! The encoder maps a document embedding to a diagonal Gaussian over
//! logits; topic proportions are the softmax of a reparameterized draw. The
//! decoder mixes topic–word weights in logit space (product of experts),
//! optionally batch-normalizes them per word and applies a softmax over the
//! vocabulary. The objective is `λ·KL(model || target) + KL(q || prior)`
//! (or the NLL variant), minimized with the gradients in [`network`].

mod config;
pub mod loss;
pub mod network;
mod params;

pub use config::{InputMode, LossMode, ModelConfig, TargetMode};
pub use loss::{prior_kl, recon_loss_kl, recon_loss_nll, PROB_FLOOR};
pub use network::{
    decode, decode_batch, encode, gradients, infer_theta, infer_theta_matrix, loss_and_gradients,
    loss_with_noise, per_document_terms, sample_theta, total_loss, Batch, BatchStats,
    LossBreakdown, Posterior, StepNoise, TopicDistribution,
};
pub use params::{laplace_prior, Affine, BatchNormState, ModelParams, Weights};

use ndarray::Array2;

use crate::corpus::Vocabulary;
use crate::{Error, Result};

/// Default number of words listed per topic.
pub const DEFAULT_TOP_WORDS: usize = 15;

/// The `n` highest-weighted words of every topic, descending; ties keep
/// vocabulary order.
pub fn top_words(beta: &Array2<f64>, vocab: &Vocabulary, n: usize) -> Result<Vec<Vec<String>>> {
    if beta.ncols() != vocab.len() {
        return Err(Error::DimensionMismatch(format!(
            "beta has {} columns, vocabulary has {} words",
            beta.ncols(),
            vocab.len()
        )));
    }
    if n > vocab.len() {
        return Err(Error::InvalidArgument(format!(
            "requested {n} words from a vocabulary of {}",
            vocab.len()
        )));
    }
    Ok(top_indices(beta, n)
        .into_iter()
        .map(|idx| idx.into_iter().map(|i| vocab.words()[i].clone()).collect())
        .collect())
}

pub fn top_indices(beta: &Array2<f64>, n: usize) -> Vec<Vec<usize>> {
    beta.rows()
        .into_iter()
        .map(|row| {
            let mut idx: Vec<usize> = (0..row.len()).collect();
            idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            idx.truncate(n);
            idx
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn top_words_examples() {
        let vocab = Vocabulary::from_words(["w0", "w1", "w2"]).unwrap();
        let t = top_words(&array![[0.0, 5.0, 1.0]], &vocab, 2).unwrap();
        assert_eq!(t, vec![vec!["w1", "w2"]]);
        let t = top_words(&array![[0.3, 0.3, 0.3]], &vocab, 3).unwrap();
        assert_eq!(t, vec![vec!["w0", "w1", "w2"]]);
        let t = top_words(&array![[0.2, -1.0, 7.0]], &vocab, 3).unwrap();
        let mut sorted = t[0].clone();
        sorted.sort();
        assert_eq!(sorted, ["w0", "w1", "w2"]);
        assert!(top_words(&array![[0.2, -1.0, 7.0]], &vocab, 4).is_err());
    }
}

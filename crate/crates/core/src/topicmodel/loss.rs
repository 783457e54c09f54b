//! Closed-form loss terms on single documents.

use ndarray::ArrayView1;

use crate::corpus::BowVector;

/// Floor applied inside every logarithm of a probability.
pub const PROB_FLOOR: f64 = 1e-10;

/// Diagonal-Gaussian `KL(q || p)` where `q = N(mu, exp(logvar))` and
/// `p = N(prior_mu, exp(prior_logvar))`.
pub fn prior_kl(
    mu: ArrayView1<'_, f64>,
    logvar: ArrayView1<'_, f64>,
    prior_mu: ArrayView1<'_, f64>,
    prior_logvar: ArrayView1<'_, f64>,
) -> f64 {
    let mut kl = 0.0;
    for k in 0..mu.len() {
        let prior_var = prior_logvar[k].exp();
        let diff = mu[k] - prior_mu[k];
        kl += (logvar[k].exp() + diff * diff) / prior_var - 1.0 + prior_logvar[k] - logvar[k];
    }
    0.5 * kl
}

/// `Σ pred · ln(pred / max(target, ε))` with `0 · ln 0 = 0`.
pub fn recon_loss_kl(pred: ArrayView1<'_, f64>, target: ArrayView1<'_, f64>) -> f64 {
    pred.iter()
        .zip(target.iter())
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, &t)| p * (p.ln() - t.max(PROB_FLOOR).ln()))
        .sum()
}

/// `−Σ count · ln max(pred, ε)`.
pub fn recon_loss_nll(pred: ArrayView1<'_, f64>, bow: &BowVector) -> f64 {
    -bow.iter().map(|(i, c)| f64::from(c) * pred[i].max(PROB_FLOOR).ln()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn prior_kl_examples() {
        let z = array![0.3, -0.2];
        let lv = array![0.1, 0.4];
        assert_abs_diff_eq!(prior_kl(z.view(), lv.view(), z.view(), lv.view()), 0.0, epsilon = 1e-15);
        let kl = prior_kl(array![1.0].view(), array![0.0].view(), array![0.0].view(), array![0.0].view());
        assert_abs_diff_eq!(kl, 0.5, epsilon = 1e-15);
        let kl = prior_kl(array![0.0].view(), array![1.0].view(), array![0.0].view(), array![0.0].view());
        assert_abs_diff_eq!(kl, 0.5 * (std::f64::consts::E - 2.0), epsilon = 1e-15);
        assert_abs_diff_eq!(kl, 0.359141, epsilon = 1e-6);
    }

    #[test]
    fn recon_kl_examples() {
        let p = array![0.2, 0.3, 0.5];
        assert_abs_diff_eq!(recon_loss_kl(p.view(), p.view()), 0.0, epsilon = 1e-15);
        let kl = recon_loss_kl(array![1.0, 0.0].view(), array![0.5, 0.5].view());
        assert_abs_diff_eq!(kl, 2f64.ln(), epsilon = 1e-15);
        let kl = recon_loss_kl(array![0.5, 0.5].view(), array![0.75, 0.25].view());
        assert_abs_diff_eq!(kl, 0.5 * (2.0f64 / 3.0).ln() + 0.5 * 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(kl, 0.143841, epsilon = 1e-6);
    }

    #[test]
    fn recon_nll_examples() {
        let one = BowVector::from_counts([(0, 1)]);
        assert!(recon_loss_nll(array![1.0, 0.0].view(), &one).abs() < 1e-9);
        assert_abs_diff_eq!(recon_loss_nll(array![0.5, 0.5].view(), &one), 2f64.ln(), epsilon = 1e-15);
        let bow = BowVector::from_counts([(0, 2), (1, 1)]);
        assert_abs_diff_eq!(recon_loss_nll(array![0.5, 0.5].view(), &bow), 3.0 * 2f64.ln(), epsilon = 1e-14);
    }
}
